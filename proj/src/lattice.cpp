#include "latred/lattice.hpp"

#include <atomic>
#include <cmath>
#include <numeric>
#include <thread>

#include "latred/log.hpp"

namespace latred {

namespace {

constexpr int kChunk = 256;  // fixed chunk size keeps reductions deterministic across thread counts

std::atomic<int> g_threads{1};

/// Runs fn(chunk_index) for every chunk of `count` items on the configured
/// number of threads. Chunk boundaries do not depend on the thread count.
template <typename Fn>
void for_each_chunk(int count, Fn&& fn) {
  const int n_chunks = (count + kChunk - 1) / kChunk;
  const int threads = std::min(assembly_threads(), n_chunks);
  if (threads <= 1) {
    for (int c = 0; c < n_chunks; ++c) fn(c);
    return;
  }
  std::atomic<int> next{0};
  auto worker = [&] {
    for (int c = next.fetch_add(1); c < n_chunks; c = next.fetch_add(1)) fn(c);
  };
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
}

struct DisjointSet {
  std::vector<int> parent;
  explicit DisjointSet(int n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  int find(int a) {
    while (parent[a] != a) a = parent[a] = parent[parent[a]];
    return a;
  }
  void unite(int a, int b) { parent[find(a)] = find(b); }
};

double damage_driving(const MaterialLaw& law, double y) {
  if (law.alpha_dmg == 0.0) return 0.0;
  return law.alpha_dmg * std::pow(y, law.beta_dmg);
}

}  // namespace

void set_assembly_threads(int threads) { g_threads.store(std::max(1, threads)); }
int assembly_threads() { return g_threads.load(); }

// ---------------------------------------------------------------------------
// Frame generator
// ---------------------------------------------------------------------------

LatticeModel LatticeModel::build_frame(const FrameSpec& spec) {
  LatticeModel m;
  m.material_ = spec.material;
  m.load_dir_ = spec.load_dir.normalized();

  if (spec.material.alpha_dmg < 0 || spec.material.beta_dmg <= 0)
    throw ModelError("material: alpha must be >= 0 and beta > 0");
  if (spec.young <= 0 || spec.section <= 0)
    throw ModelError("material: Young modulus and section must be positive");

  auto add_bar = [&](int a, int b) {
    Bar bar;
    bar.id = static_cast<int>(m.bars_.size());
    bar.k = std::min(a, b);
    bar.l = std::max(a, b);
    bar.section = spec.section;
    bar.young = spec.young;
    m.bars_.push_back(bar);
  };

  if (spec.layout == FrameSpec::Layout::Line) {
    if (spec.nx < 1) throw ModelError("line layout needs nx >= 1");
    for (int i = 0; i <= spec.nx; ++i)
      m.nodes_.push_back({i, Eigen::Vector3d(static_cast<double>(i), 0, 0)});
    for (int i = 0; i < spec.nx; ++i) add_bar(i, i + 1);
    // Node 0 clamped; lateral components fixed everywhere so only axial
    // unknowns remain.
    for (int c = 0; c < 3; ++c) m.dirichlet_.emplace_back(c, 0.0);
    for (int i = 1; i <= spec.nx; ++i) {
      m.dirichlet_.emplace_back(3 * i + 1, 0.0);
      m.dirichlet_.emplace_back(3 * i + 2, 0.0);
    }
  } else {
    if (spec.nx < 1 || spec.ny < 1 || spec.nz < 1)
      throw ModelError("grid layout needs nx, ny, nz >= 1");
    const int sx = spec.nx + 1, sy = spec.ny + 1, sz = spec.nz + 1;
    auto node_id = [&](int ix, int iy, int iz) { return ix + sx * (iy + sy * iz); };
    for (int iz = 0; iz < sz; ++iz)
      for (int iy = 0; iy < sy; ++iy)
        for (int ix = 0; ix < sx; ++ix)
          m.nodes_.push_back({node_id(ix, iy, iz),
                              Eigen::Vector3d(static_cast<double>(ix), static_cast<double>(iy),
                                              static_cast<double>(iz))});
    // Unit axis-aligned bars.
    for (int iz = 0; iz < sz; ++iz)
      for (int iy = 0; iy < sy; ++iy)
        for (int ix = 0; ix < sx; ++ix) {
          if (ix + 1 < sx) add_bar(node_id(ix, iy, iz), node_id(ix + 1, iy, iz));
          if (iy + 1 < sy) add_bar(node_id(ix, iy, iz), node_id(ix, iy + 1, iz));
          if (iz + 1 < sz) add_bar(node_id(ix, iy, iz), node_id(ix, iy, iz + 1));
        }
    if (spec.bracing) {
      // Both diagonals on every cell face.
      for (int iz = 0; iz < sz; ++iz)
        for (int iy = 0; iy < spec.ny; ++iy)
          for (int ix = 0; ix < spec.nx; ++ix) {
            add_bar(node_id(ix, iy, iz), node_id(ix + 1, iy + 1, iz));
            add_bar(node_id(ix + 1, iy, iz), node_id(ix, iy + 1, iz));
          }
      for (int iy = 0; iy < sy; ++iy)
        for (int iz = 0; iz < spec.nz; ++iz)
          for (int ix = 0; ix < spec.nx; ++ix) {
            add_bar(node_id(ix, iy, iz), node_id(ix + 1, iy, iz + 1));
            add_bar(node_id(ix + 1, iy, iz), node_id(ix, iy, iz + 1));
          }
      for (int ix = 0; ix < sx; ++ix)
        for (int iz = 0; iz < spec.nz; ++iz)
          for (int iy = 0; iy < spec.ny; ++iy) {
            add_bar(node_id(ix, iy, iz), node_id(ix, iy + 1, iz + 1));
            add_bar(node_id(ix, iy + 1, iz), node_id(ix, iy, iz + 1));
          }
    }
    // Clamped plane z = 0 plus in-plane fixings killing the three remaining
    // rigid modes (x/y translation, rotation about z).
    for (int iy = 0; iy < sy; ++iy)
      for (int ix = 0; ix < sx; ++ix)
        m.dirichlet_.emplace_back(3 * node_id(ix, iy, 0) + 2, 0.0);
    m.dirichlet_.emplace_back(3 * node_id(0, 0, 0) + 0, 0.0);
    m.dirichlet_.emplace_back(3 * node_id(0, 0, 0) + 1, 0.0);
    m.dirichlet_.emplace_back(3 * node_id(spec.nx, 0, 0) + 1, 0.0);
  }

  for (const auto& n : m.nodes_)
    if (spec.loaded_box.contains(n.position)) m.loaded_nodes_.push_back(n.id);

  m.finalize();
  return m;
}

LatticeModel LatticeModel::build_custom(std::vector<Node> nodes, std::vector<Bar> bars,
                                        MaterialLaw material,
                                        std::vector<std::pair<int, double>> dirichlet,
                                        std::vector<int> loaded_nodes,
                                        const Eigen::Vector3d& load_dir) {
  LatticeModel m;
  m.nodes_ = std::move(nodes);
  m.bars_ = std::move(bars);
  m.material_ = material;
  m.dirichlet_ = std::move(dirichlet);
  m.loaded_nodes_ = std::move(loaded_nodes);
  m.load_dir_ = load_dir.normalized();
  m.finalize();
  return m;
}

void LatticeModel::finalize() {
  const int n_full = 3 * num_nodes();
  std::vector<char> fixed(n_full, 0);
  for (const auto& [dof, value] : dirichlet_) {
    if (dof < 0 || dof >= n_full) throw ModelError("dirichlet dof out of range");
    fixed[dof] = 1;
    (void)value;
  }
  free_of_full_.assign(n_full, -1);
  full_of_free_.clear();
  for (int dof = 0; dof < n_full; ++dof) {
    if (!fixed[dof]) {
      free_of_full_[dof] = static_cast<int>(full_of_free_.size());
      full_of_free_.push_back(dof);
    }
  }
  n_u_ = static_cast<int>(full_of_free_.size());

  // Connectivity: every node must be reachable through bars.
  if (!nodes_.empty()) {
    DisjointSet ds(num_nodes());
    for (const auto& b : bars_) ds.unite(b.k, b.l);
    const int root = ds.find(0);
    for (int i = 1; i < num_nodes(); ++i)
      if (ds.find(i) != root) throw ModelError("lattice is disconnected");
  }
  for (const auto& b : bars_) {
    if (b.k == b.l || bar_length(b) <= 0) throw ModelError("degenerate bar");
  }

  // External load pattern: one nodal force along load_dir per loaded node,
  // normalized so the load factor equals the force vector norm.
  unit_load_ = Eigen::VectorXd::Zero(n_u_);
  for (int node : loaded_nodes_) {
    for (int c = 0; c < 3; ++c) {
      if (load_dir_[c] == 0.0) continue;
      const int fi = free_of_full_[3 * node + c];
      if (fi >= 0) unit_load_[fi] += load_dir_[c];
    }
  }
  const double norm = unit_load_.norm();
  if (loaded_nodes_.empty() || norm == 0.0)
    throw ModelError("load set is empty (no free dof inside the loaded box)");
  unit_load_ /= norm;
}

Eigen::VectorXd LatticeModel::expand(const Eigen::VectorXd& u_free) const {
  Eigen::VectorXd full = Eigen::VectorXd::Zero(3 * num_nodes());
  for (const auto& [dof, value] : dirichlet_) full[dof] = value;
  for (int i = 0; i < n_u_; ++i) full[full_of_free_[i]] = u_free[i];
  return full;
}

double LatticeModel::load_deflection(const Eigen::VectorXd& u_free) const {
  const Eigen::VectorXd full = expand(u_free);
  double sum = 0.0;
  for (int node : loaded_nodes_) sum += full.segment<3>(3 * node).dot(load_dir_);
  return sum / static_cast<double>(loaded_nodes_.size());
}

// ---------------------------------------------------------------------------
// Constitutive law and assembly
// ---------------------------------------------------------------------------

double bar_strain(const LatticeModel& model, const Bar& bar, const Eigen::VectorXd& u_full) {
  const Eigen::Vector3d du = u_full.segment<3>(3 * bar.l) - u_full.segment<3>(3 * bar.k);
  return du.dot(model.bar_direction(bar)) / model.bar_length(bar);
}

double thermodynamic_force(const Bar& bar, double strain) {
  return 0.5 * bar.young * bar.section * strain * strain;
}

DamageState update_damage(const DamageState& committed, const LatticeModel& model,
                          const Eigen::VectorXd& u_full) {
  DamageState out;
  out.history = committed.history;
  out.d.resize(model.num_bars());
  const MaterialLaw& law = model.material();
  for (const auto& bar : model.bars()) {
    const double y = thermodynamic_force(bar, bar_strain(model, bar, u_full));
    const double driving = std::max(committed.history[bar.id], damage_driving(law, y));
    out.d[bar.id] = std::min(1.0, driving);
  }
  return out;
}

void commit_damage(DamageState& state, const LatticeModel& model, const Eigen::VectorXd& u_full) {
  const MaterialLaw& law = model.material();
  for (const auto& bar : model.bars()) {
    const double y = thermodynamic_force(bar, bar_strain(model, bar, u_full));
    state.history[bar.id] = std::max(state.history[bar.id], damage_driving(law, y));
    state.d[bar.id] = std::min(1.0, state.history[bar.id]);
  }
}

Eigen::VectorXd internal_forces(const LatticeModel& model, const Eigen::VectorXd& u_free,
                                const DamageState& state) {
  const Eigen::VectorXd full = model.expand(u_free);
  const int n_u = model.num_free_dofs();
  const int n_b = model.num_bars();
  const int n_chunks = (n_b + kChunk - 1) / kChunk;
  std::vector<Eigen::VectorXd> partial(n_chunks);

  for_each_chunk(n_b, [&](int c) {
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(n_u);
    const int begin = c * kChunk, end = std::min(n_b, begin + kChunk);
    for (int ib = begin; ib < end; ++ib) {
      const Bar& bar = model.bars()[ib];
      const double eps = bar_strain(model, bar, full);
      const double axial = bar.young * (1.0 - state.d[bar.id]) * bar.section * eps;
      const Eigen::Vector3d f = axial * model.bar_direction(bar);
      // F_Int = -grad(W): +N n at node k, -N n at node l.
      for (int comp = 0; comp < 3; ++comp) {
        const int fk = model.free_index(3 * bar.k + comp);
        const int fl = model.free_index(3 * bar.l + comp);
        if (fk >= 0) acc[fk] += f[comp];
        if (fl >= 0) acc[fl] -= f[comp];
      }
    }
    partial[c] = std::move(acc);
  });

  Eigen::VectorXd out = Eigen::VectorXd::Zero(n_u);
  for (const auto& p : partial) out += p;
  return out;
}

Eigen::VectorXd external_forces(const LatticeModel& model, double load_factor) {
  return load_factor * model.unit_load();
}

namespace {

/// dN/deps of a bar at the current state. The consistent branch applies only
/// while the damage driving force is at its historical maximum and d < 1.
double bar_stiffness_rate(const MaterialLaw& law, const Bar& bar, double eps, double d,
                          double history, TangentMode mode) {
  const double es = bar.young * bar.section;
  double rate = es * (1.0 - d);
  if (mode == TangentMode::Consistent && d < 1.0 && law.alpha_dmg > 0.0) {
    const double y = 0.5 * es * eps * eps;
    const double driving = damage_driving(law, y);
    const bool loading = driving >= history * (1.0 - 1e-12);
    if (loading && y > 1e-300) {
      rate -= law.alpha_dmg * law.beta_dmg * std::pow(y, law.beta_dmg - 1.0) * es * es * eps * eps;
    }
  }
  return rate;
}

}  // namespace

Eigen::SparseMatrix<double> tangent_stiffness(const LatticeModel& model,
                                              const Eigen::VectorXd& u_free,
                                              const DamageState& state, TangentMode mode) {
  const Eigen::VectorXd full = model.expand(u_free);
  const int n_u = model.num_free_dofs();
  const int n_b = model.num_bars();
  const int n_chunks = (n_b + kChunk - 1) / kChunk;
  using Triplet = Eigen::Triplet<double>;
  std::vector<std::vector<Triplet>> chunk_triplets(n_chunks);

  for_each_chunk(n_b, [&](int c) {
    auto& trip = chunk_triplets[c];
    const int begin = c * kChunk, end = std::min(n_b, begin + kChunk);
    trip.reserve(static_cast<size_t>(end - begin) * 36);
    for (int ib = begin; ib < end; ++ib) {
      const Bar& bar = model.bars()[ib];
      const double eps = bar_strain(model, bar, full);
      const double rate = bar_stiffness_rate(model.material(), bar, eps, state.d[bar.id],
                                             state.history[bar.id], mode);
      const double coef = rate / model.bar_length(bar);
      const Eigen::Vector3d n = model.bar_direction(bar);
      const int nodes[2] = {bar.k, bar.l};
      for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b) {
          const double sign = (a == b) ? 1.0 : -1.0;
          for (int ca = 0; ca < 3; ++ca) {
            const int row = model.free_index(3 * nodes[a] + ca);
            if (row < 0) continue;
            for (int cb = 0; cb < 3; ++cb) {
              const int col = model.free_index(3 * nodes[b] + cb);
              if (col < 0) continue;
              trip.emplace_back(row, col, sign * coef * n[ca] * n[cb]);
            }
          }
        }
    }
  });

  std::vector<Triplet> all;
  size_t total = 0;
  for (const auto& t : chunk_triplets) total += t.size();
  all.reserve(total);
  for (const auto& t : chunk_triplets) all.insert(all.end(), t.begin(), t.end());

  Eigen::SparseMatrix<double> k(n_u, n_u);
  k.setFromTriplets(all.begin(), all.end());
  return k;
}

double strain_energy(const LatticeModel& model, const Eigen::VectorXd& u_free,
                     const DamageState& state) {
  const Eigen::VectorXd full = model.expand(u_free);
  double w = 0.0;
  for (const auto& bar : model.bars()) {
    const double eps = bar_strain(model, bar, full);
    w += 0.5 * bar.young * (1.0 - state.d[bar.id]) * bar.section * eps * eps *
         model.bar_length(bar);
  }
  return w;
}

}  // namespace latred
