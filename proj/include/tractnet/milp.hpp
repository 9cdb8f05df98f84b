#pragma once

// LP-based branch-and-bound over the big-M encoding, plus an enumeration
// oracle used as independent ground truth in tests.
//
// Nodes are explored best-bound first (ties by creation order). Every node LP
// is solved from scratch on a copy of the root model with bound overrides;
// the node count is the number of LPs solved, root included.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <memory>
#include <queue>
#include <stdexcept>
#include <string>
#include <vector>

#include "tractnet/ibp.hpp"
#include "tractnet/lp.hpp"
#include "tractnet/relaxation.hpp"

namespace tractnet {

struct MilpLimits {
  double time_limit_s = 60.0;
  std::size_t node_limit = 1000000;
  double integrality_tol = 1e-6;
  double gap_tol = 1e-6;  // absolute
};

struct MilpSpec {
  Network net;
  Box box;                     // ignored in binary-input mode
  bool binary_inputs = false;
  Objective objective;
  Sense sense = Sense::Minimize;
  MilpLimits limits;
  bool fix_stable = true;
  bool record_trace = false;
};

enum class MilpStatus { Optimal, TimeLimit, NodeLimit };

inline const char* status_name(MilpStatus s) {
  switch (s) {
    case MilpStatus::Optimal: return "optimal";
    case MilpStatus::TimeLimit: return "time-limit";
    case MilpStatus::NodeLimit: return "node-limit";
  }
  return "?";
}

/// Bound and incumbent (in the problem's own sense) when a node is selected.
struct MilpProgress {
  std::size_t nodes = 0;
  double best_bound = 0.0;
  double incumbent = 0.0;
};

struct MilpResult {
  MilpStatus status = MilpStatus::Optimal;
  double objective = 0.0;           // incumbent value
  std::vector<double> argopt;       // incumbent input
  double best_bound = 0.0;
  std::size_t nodes = 0;
  double root_lp_value = 0.0;
  double root_lp_gap = 0.0;         // incumbent - root (min), root - incumbent (max)
  double wall_time_s = 0.0;
  std::size_t binaries = 0;         // relaxed activation variables (+ inputs in binary mode)
  std::size_t lp_iterations = 0;
  std::vector<MilpProgress> trace;  // filled when MilpSpec::record_trace is set
};

namespace detail {

struct BoundChange {
  std::size_t var;
  double lb, ub;
};

struct BranchNode {
  double key;  // objective bound in minimization form
  std::uint64_t id;
  std::vector<BoundChange> changes;
  LpSolution sol;
};

struct NodeOrder {
  bool operator()(const BranchNode* a, const BranchNode* b) const {
    if (a->key != b->key) return a->key > b->key;
    return a->id > b->id;
  }
};

// A branching candidate: binary variable plus what fixing it implies.
struct BranchVar {
  std::size_t var;
  std::size_t xhat = kNoVar;  // x̂ of the neuron, forced to 0 on the a = 0 side
};

}  // namespace detail

inline std::vector<double> incumbent_input(const MilpSpec& spec, const std::vector<double>& lp_x) {
  std::vector<double> x = lp_x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (spec.binary_inputs) x[i] = x[i] >= 0.5 ? 1.0 : 0.0;
    else x[i] = std::clamp(x[i], spec.box.lower[i], spec.box.upper[i]);
  }
  return x;
}

/// Primal heuristic: the network evaluated at the LP's (projected) input is a
/// feasible MILP solution.
inline double incumbent_from_lp(const MilpSpec& spec, const RelaxationModel& m, const LpSolution& sol,
                                std::vector<double>* x_out = nullptr) {
  const std::vector<double> x = incumbent_input(spec, input_values(m, sol));
  if (x_out) *x_out = x;
  return spec.objective.evaluate(spec.net, x);
}

inline MilpResult solve_milp(const MilpSpec& spec, const BoundsProfile& profile) {
  using clock = std::chrono::steady_clock;
  const auto t0 = clock::now();
  auto elapsed = [&] { return std::chrono::duration<double>(clock::now() - t0).count(); };
  if (!(spec.limits.time_limit_s > 0.0) || spec.limits.node_limit == 0)
    throw std::invalid_argument("solve_milp: limits must be positive");

  RelaxationOptions ro;
  ro.fix_stable = spec.fix_stable;
  ro.binary_inputs = spec.binary_inputs;
  const RelaxationModel model = build_box_input_lp(spec.net, profile, spec.box, spec.objective, spec.sense, ro);
  const double sgn = spec.sense == Sense::Minimize ? 1.0 : -1.0;

  // Branching candidates in a fixed order: inputs (binary mode), then neurons
  // by (layer, neuron).
  std::vector<detail::BranchVar> cands;
  if (spec.binary_inputs)
    for (std::size_t v : model.input_var) cands.push_back({v, kNoVar});
  for (const auto& id : model.relaxed)
    cands.push_back({model.a_var[id.layer][id.neuron], model.xhat_var[id.layer][id.neuron]});

  MilpResult res;
  res.binaries = cands.size();
  std::uint64_t next_id = 0;

  auto solve_node = [&](const std::vector<detail::BoundChange>& changes) {
    LinearProgram lp = model.lp;
    for (const auto& c : changes) {
      lp.lower[c.var] = std::max(lp.lower[c.var], c.lb);
      lp.upper[c.var] = std::min(lp.upper[c.var], c.ub);
    }
    ++res.nodes;
    LpSolution s = solve_lp(lp);
    res.lp_iterations += s.iterations;
    return s;
  };

  LpSolution root = solve_node({});
  if (!root.optimal())
    throw std::runtime_error(std::string("solve_milp: root LP is ") + status_name(root.status));
  res.root_lp_value = root.value;

  double inc_key = sgn * incumbent_from_lp(spec, model, root, &res.argopt);

  auto pick_branch = [&](const LpSolution& s) -> std::ptrdiff_t {
    std::ptrdiff_t best = -1;
    double best_dist = 0.0;
    for (std::size_t c = 0; c < cands.size(); ++c) {
      const double v = s.primal[cands[c].var];
      const double frac = std::min(v - std::floor(v), std::ceil(v) - v);
      if (frac <= spec.limits.integrality_tol) continue;
      const double dist = std::fabs(v - 0.5);
      if (best < 0 || dist < best_dist) {
        best = static_cast<std::ptrdiff_t>(c);
        best_dist = dist;
      }
    }
    return best;
  };

  std::vector<std::unique_ptr<detail::BranchNode>> store;
  std::priority_queue<detail::BranchNode*, std::vector<detail::BranchNode*>, detail::NodeOrder> open;
  auto enqueue = [&](std::vector<detail::BoundChange> changes, LpSolution s) {
    auto n = std::make_unique<detail::BranchNode>();
    n->key = sgn * s.value;
    n->id = next_id++;
    n->changes = std::move(changes);
    n->sol = std::move(s);
    open.push(n.get());
    store.push_back(std::move(n));
  };
  enqueue({}, std::move(root));

  res.status = MilpStatus::Optimal;
  double bound_key = sgn * res.root_lp_value;
  while (!open.empty()) {
    detail::BranchNode* node = open.top();
    bound_key = node->key;
    if (spec.record_trace) res.trace.push_back({res.nodes, sgn * std::min(bound_key, inc_key), sgn * inc_key});
    if (node->key >= inc_key - spec.limits.gap_tol) break;  // everything left is dominated
    if (elapsed() > spec.limits.time_limit_s) { res.status = MilpStatus::TimeLimit; break; }
    if (res.nodes + 2 > spec.limits.node_limit) { res.status = MilpStatus::NodeLimit; break; }
    open.pop();

    const std::ptrdiff_t c = pick_branch(node->sol);
    if (c < 0) continue;  // integral: the LP value is attained, incumbent already covers it
    const auto& bv = cands[static_cast<std::size_t>(c)];
    for (int side = 0; side < 2; ++side) {
      std::vector<detail::BoundChange> ch = node->changes;
      if (side == 0) {
        ch.push_back({bv.var, 0.0, 0.0});
        if (bv.xhat != kNoVar) ch.push_back({bv.xhat, 0.0, 0.0});
      } else {
        ch.push_back({bv.var, 1.0, 1.0});
      }
      LpSolution s = solve_node(ch);
      if (s.status == LpStatus::Infeasible) continue;
      if (!s.optimal())
        throw std::runtime_error(std::string("solve_milp: node LP is ") + status_name(s.status));
      std::vector<double> x;
      const double v = sgn * incumbent_from_lp(spec, model, s, &x);
      if (v < inc_key) {
        inc_key = v;
        res.argopt = x;
      }
      if (sgn * s.value < inc_key - spec.limits.gap_tol) enqueue(std::move(ch), std::move(s));
    }
  }
  if (open.empty()) bound_key = inc_key;
  bound_key = std::min(bound_key, inc_key);

  res.objective = sgn * inc_key;
  if (spec.record_trace) res.trace.push_back({res.nodes, sgn * bound_key, res.objective});
  res.best_bound = sgn * bound_key;
  res.root_lp_gap = sgn * (res.objective - res.root_lp_value);
  res.wall_time_s = elapsed();
  return res;
}

struct OracleResult {
  double value = 0.0;
  std::vector<double> argopt;
  std::size_t patterns = 0;  // leaf LPs (box) or inputs (binary) evaluated
};

/// Exact optimum by brute force. Box inputs: every on/off pattern of the
/// unstable neurons turns the network into a linear map on a polyhedron,
/// optimized as its own LP (patterns whose prefix is already infeasible are
/// skipped). Binary inputs: every 0/1 input vector.
inline OracleResult enumerate_oracle(const Network& net, const Box& box, bool binary_inputs, const Objective& obj,
                                     Sense sense, std::size_t max_unstable = 16) {
  net.validate();
  obj.check_inputs(net);
  const double sgn = sense == Sense::Minimize ? 1.0 : -1.0;
  OracleResult best;
  double best_key = kInf;
  if (binary_inputs) {
    const std::size_t n = net.input_dim();
    if (n > 16) throw std::invalid_argument("enumerate_oracle: more than 16 binary inputs");
    std::vector<double> x(n);
    for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << n); ++mask) {
      for (std::size_t i = 0; i < n; ++i) x[i] = (mask >> i) & 1u ? 1.0 : 0.0;
      const double v = sgn * obj.evaluate(net, x);
      ++best.patterns;
      if (v < best_key) {
        best_key = v;
        best.argopt = x;
      }
    }
    best.value = sgn * best_key;
    return best;
  }

  check_box_for(net, box);
  const BoundsProfile prof = propagate_ibp(net, box);
  if (prof.unstable.size() > max_unstable)
    throw std::invalid_argument("enumerate_oracle: " + std::to_string(prof.unstable.size()) +
                                " unstable neurons exceeds the cap of " + std::to_string(max_unstable));
  const auto w_out = obj.weights_for(net);

  // Variables: x, then for each layer z and post-activation h.
  // Pattern constraints: active -> h = z, z >= 0; inactive -> h = 0, z <= 0.
  LinearProgram base;
  base.sense = Sense::Minimize;
  std::vector<std::size_t> prev;
  for (std::size_t i = 0; i < net.input_dim(); ++i)
    prev.push_back(base.add_var(box.lower[i], box.upper[i], sgn * (obj.input_costs.empty() ? 0.0 : obj.input_costs[i])));
  std::vector<std::vector<std::size_t>> zs(net.layers.size()), hs(net.layers.size());
  for (std::size_t k = 0; k < net.layers.size(); ++k) {
    const Matrix& w = net.layers[k].weight;
    const bool out = k + 1 == net.layers.size();
    for (std::size_t j = 0; j < w.rows; ++j) {
      const std::size_t z = base.add_var(-kInf, kInf, out ? sgn * w_out[j] : 0.0);
      SparseRow r;
      r.add(z, 1.0);
      for (std::size_t i = 0; i < w.cols; ++i) r.add(prev[i], -w(j, i));
      base.add_eq(std::move(r), net.layers[k].bias.data[j]);
      zs[k].push_back(z);
      // relu(z) lies in [0, U] in every pattern; the bound keeps prefix LPs
      // (later neurons unconstrained) bounded.
      if (!out) hs[k].push_back(base.add_var(0.0, std::max(prof.upper[k][j], 0.0)));
    }
    prev = hs[k];
  }
  // Stable neurons have a fixed phase for every input in the box.
  for (std::size_t k = 0; k + 1 < net.layers.size(); ++k)
    for (std::size_t j = 0; j < zs[k].size(); ++j) {
      if (prof.is_unstable(k, j)) continue;
      SparseRow r;
      r.add(hs[k][j], 1.0);
      if (prof.lower[k][j] >= 0.0) r.add(zs[k][j], -1.0);
      base.add_eq(std::move(r), 0.0);
    }

  auto apply = [&](LinearProgram& lp, const NeuronId& id, bool on) {
    const std::size_t z = zs[id.layer][id.neuron], h = hs[id.layer][id.neuron];
    SparseRow e;
    e.add(h, 1.0);
    if (on) e.add(z, -1.0);
    lp.add_eq(std::move(e), 0.0);
    SparseRow s;
    s.add(z, on ? -1.0 : 1.0);
    lp.add_le(std::move(s), 0.0);
  };

  const auto& U = prof.unstable;
  // Depth-first over the unstable neurons in (layer, neuron) order. A prefix
  // leaves later neurons unconstrained, so its LP is a relaxation of every
  // completion and an infeasible prefix rules out the whole subtree.
  struct Frame {
    LinearProgram lp;
    std::size_t depth;
  };
  std::vector<Frame> stack;
  stack.push_back({base, 0});
  while (!stack.empty()) {
    Frame f = std::move(stack.back());
    stack.pop_back();
    const LpSolution s = solve_lp(f.lp);
    if (s.status == LpStatus::Infeasible) continue;
    if (!s.optimal()) throw std::runtime_error(std::string("enumerate_oracle: LP is ") + status_name(s.status));
    if (f.depth == U.size()) {
      ++best.patterns;
      if (s.value < best_key) {
        best_key = s.value;
        best.argopt.assign(s.primal.begin(), s.primal.begin() + static_cast<std::ptrdiff_t>(net.input_dim()));
      }
      continue;
    }
    for (int on = 1; on >= 0; --on) {
      Frame child{f.lp, f.depth + 1};
      apply(child.lp, U[f.depth], on == 1);
      stack.push_back(std::move(child));
    }
  }
  if (!std::isfinite(best_key)) throw std::logic_error("enumerate_oracle: no feasible pattern");
  best.value = sgn * best_key;
  return best;
}

}  // namespace tractnet
