#pragma once

#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "latred/errors.hpp"

namespace latred {

struct Node {
  int id = 0;
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
};

/// Two-node axial bar. Stores the section and Young modulus; length and
/// direction come from the node coordinates.
struct Bar {
  int id = 0;
  int k = 0;  // node ids, k < l
  int l = 0;
  double section = 1.0;
  double young = 1.0;
};

/// Damage evolution law d = min(1, max over history of alpha * Y^beta).
/// alpha == 0 disables damage (purely elastic bars).
struct MaterialLaw {
  double alpha_dmg = 1.0;
  double beta_dmg = 0.5;
};

/// Axis-aligned box used to select loaded nodes (inclusive bounds).
struct Box {
  Eigen::Vector3d min = Eigen::Vector3d::Zero();
  Eigen::Vector3d max = Eigen::Vector3d::Zero();
  bool contains(const Eigen::Vector3d& p) const {
    return (p.array() >= min.array() - 1e-9).all() && (p.array() <= max.array() + 1e-9).all();
  }
};

/// Parameters of the lattice generator. `Grid` builds a full 3D frame with
/// unit cells (nodes at integer coordinates, clamped plane at z = 0);
/// `Line` builds a 1D chain of bars along x with node 0 clamped.
struct FrameSpec {
  enum class Layout { Grid, Line };
  Layout layout = Layout::Grid;
  int nx = 1, ny = 1, nz = 1;  // cells per axis
  bool bracing = true;         // add both diagonals on every cell face
  double young = 1.0;
  double section = 1.0;
  MaterialLaw material{std::sqrt(2.0), 0.5};
  Box loaded_box;
  Eigen::Vector3d load_dir = Eigen::Vector3d(0, 0, -1);  // unit nodal load direction
};

/// Per-bar damage variables. `history` holds the running maximum of
/// alpha * Y^beta over converged increments (not clipped); `d` is its
/// clipped value min(1, history) at the last evaluation.
struct DamageState {
  Eigen::VectorXd d;
  Eigen::VectorXd history;
  static DamageState zero(int n_bars) {
    DamageState s;
    s.d = Eigen::VectorXd::Zero(n_bars);
    s.history = Eigen::VectorXd::Zero(n_bars);
    return s;
  }
};

enum class TangentMode { Secant, Consistent };

/// Immutable lattice: geometry, material, Dirichlet constraints and the
/// normalized external load pattern. Free scalar unknowns are the nodal
/// displacement components not fixed by a Dirichlet condition; the model
/// owns the full-dof <-> free-dof index maps.
class LatticeModel {
 public:
  static LatticeModel build_frame(const FrameSpec& spec);

  /// Assembles a model from explicit parts (ids must be dense and bars valid).
  static LatticeModel build_custom(std::vector<Node> nodes, std::vector<Bar> bars,
                                   MaterialLaw material,
                                   std::vector<std::pair<int, double>> dirichlet,
                                   std::vector<int> loaded_nodes,
                                   const Eigen::Vector3d& load_dir);

  const std::vector<Node>& nodes() const { return nodes_; }
  const std::vector<Bar>& bars() const { return bars_; }
  const MaterialLaw& material() const { return material_; }
  const std::vector<std::pair<int, double>>& dirichlet() const { return dirichlet_; }
  const std::vector<int>& loaded_nodes() const { return loaded_nodes_; }
  const Eigen::Vector3d& load_direction() const { return load_dir_; }

  int num_nodes() const { return static_cast<int>(nodes_.size()); }
  int num_bars() const { return static_cast<int>(bars_.size()); }
  int num_free_dofs() const { return n_u_; }

  /// -1 when the full dof (3*node + component) is constrained.
  int free_index(int full_dof) const { return free_of_full_[full_dof]; }
  int full_dof(int free_index) const { return full_of_free_[free_index]; }

  /// Unit-norm external load pattern on free dofs.
  const Eigen::VectorXd& unit_load() const { return unit_load_; }

  double bar_length(const Bar& b) const {
    return (nodes_[b.l].position - nodes_[b.k].position).norm();
  }
  Eigen::Vector3d bar_direction(const Bar& b) const {
    return (nodes_[b.l].position - nodes_[b.k].position).normalized();
  }
  Eigen::Vector3d bar_center(const Bar& b) const {
    return 0.5 * (nodes_[b.k].position + nodes_[b.l].position);
  }

  /// Full nodal vector (3 per node) from free unknowns, Dirichlet values filled in.
  Eigen::VectorXd expand(const Eigen::VectorXd& u_free) const;

  /// Mean displacement of the loaded nodes along the load direction.
  double load_deflection(const Eigen::VectorXd& u_free) const;

 private:
  void finalize();  // builds dof maps, unit load, connectivity check

  std::vector<Node> nodes_;
  std::vector<Bar> bars_;
  MaterialLaw material_;
  std::vector<std::pair<int, double>> dirichlet_;  // (full dof, prescribed value)
  std::vector<int> loaded_nodes_;
  Eigen::Vector3d load_dir_ = Eigen::Vector3d(0, 0, -1);
  int n_u_ = 0;
  std::vector<int> free_of_full_;
  std::vector<int> full_of_free_;
  Eigen::VectorXd unit_load_;
};

/// Number of worker threads used by the assembly routines (default 1).
/// Results are bit-identical for any thread count.
void set_assembly_threads(int threads);
int assembly_threads();

/// Axial strain of a bar: ((u_l - u_k) . n_kl) / |P_k P_l|.
/// `u_full` has one 3-vector per node.
double bar_strain(const LatticeModel& model, const Bar& bar, const Eigen::VectorXd& u_full);

/// Energy release rate Y = 1/2 E S eps^2, independent of the damage state.
double thermodynamic_force(const Bar& bar, double strain);

/// Trial damage at the current displacement: d = min(1, max(history, alpha*Y^beta)).
/// The committed history is left untouched.
DamageState update_damage(const DamageState& committed, const LatticeModel& model,
                          const Eigen::VectorXd& u_full);

/// Folds the current displacement into the history maxima (call at increment
/// convergence only).
void commit_damage(DamageState& state, const LatticeModel& model, const Eigen::VectorXd& u_full);

/// Internal force vector on free dofs, with the sign convention
/// R = F_Int + F_Ext = 0 at equilibrium (F_Int is minus the gradient of the
/// strain energy). Damage is frozen at `state`.
Eigen::VectorXd internal_forces(const LatticeModel& model, const Eigen::VectorXd& u_free,
                                const DamageState& state);

/// External forces load_factor * unit_load on free dofs.
Eigen::VectorXd external_forces(const LatticeModel& model, double load_factor);

/// Symmetric tangent stiffness on free dofs (positive semi-definite in
/// secant mode). Consistent mode subtracts the damage-rate term
/// E*S*eps * d(d)/d(eps) on bars currently on their loading branch.
Eigen::SparseMatrix<double> tangent_stiffness(const LatticeModel& model,
                                              const Eigen::VectorXd& u_free,
                                              const DamageState& state, TangentMode mode);

/// Total strain energy sum_b 1/2 E (1-d) S eps^2 L at frozen damage.
double strain_energy(const LatticeModel& model, const Eigen::VectorXd& u_free,
                     const DamageState& state);

}  // namespace latred
