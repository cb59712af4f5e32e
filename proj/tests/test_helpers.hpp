#pragma once

#include <random>
#include <vector>

#include <Eigen/Dense>

#include "latred/lattice.hpp"

namespace latred::testing {

/// Single bar along x, node 0 clamped, node 1 loaded axially: one free dof.
inline LatticeModel single_bar(double young = 1.0, double section = 1.0,
                               MaterialLaw law = {std::sqrt(2.0), 0.5}) {
  FrameSpec spec;
  spec.layout = FrameSpec::Layout::Line;
  spec.nx = 1;
  spec.young = young;
  spec.section = section;
  spec.material = law;
  spec.loaded_box.min = Eigen::Vector3d(0.5, -0.5, -0.5);
  spec.loaded_box.max = Eigen::Vector3d(1.5, 0.5, 0.5);
  spec.load_dir = Eigen::Vector3d(1, 0, 0);
  return LatticeModel::build_frame(spec);
}

/// Braced grid tower clamped at z = 0 and loaded on top in -z.
inline LatticeModel small_tower(int nx, int ny, int nz, MaterialLaw law = {std::sqrt(2.0), 0.5}) {
  FrameSpec spec;
  spec.nx = nx;
  spec.ny = ny;
  spec.nz = nz;
  spec.material = law;
  spec.loaded_box.min = Eigen::Vector3d(0, 0, nz);
  spec.loaded_box.max = Eigen::Vector3d(nx, ny, nz);
  return LatticeModel::build_frame(spec);
}

/// Displacement from a linear field u(x) = G x, giving every bar the strain
/// n^T G n bounded away from zero for generic G.
inline Eigen::VectorXd linear_field_displacement(const LatticeModel& model,
                                                 const Eigen::Matrix3d& g) {
  Eigen::VectorXd u(model.num_free_dofs());
  for (int i = 0; i < model.num_free_dofs(); ++i) {
    const int full = model.full_dof(i);
    const Eigen::Vector3d value = g * model.nodes()[full / 3].position;
    u[i] = value[full % 3];
  }
  return u;
}

inline Eigen::VectorXd random_vector(int n, std::mt19937& rng, double scale = 1.0) {
  std::uniform_real_distribution<double> dist(-scale, scale);
  Eigen::VectorXd v(n);
  for (int i = 0; i < n; ++i) v[i] = dist(rng);
  return v;
}

inline Eigen::MatrixXd random_spd(int n, std::mt19937& rng, double shift = 0.5) {
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  Eigen::MatrixXd a(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) a(i, j) = dist(rng);
  return a * a.transpose() + shift * Eigen::MatrixXd::Identity(n, n);
}

}  // namespace latred::testing
