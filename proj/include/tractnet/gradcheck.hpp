#pragma once

// Numerical checks for the regularizer gradients and the LP dual sensitivities.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "tractnet/autodiff.hpp"
#include "tractnet/ibp.hpp"
#include "tractnet/lp.hpp"
#include "tractnet/network.hpp"
#include "tractnet/regularizers.hpp"
#include "tractnet/relaxation.hpp"
#include "tractnet/rng.hpp"

namespace tractnet {

enum class RegKind { L1, L2, BW, SN, SN2 };

inline constexpr RegKind kAllRegKinds[] = {RegKind::L1, RegKind::L2, RegKind::BW, RegKind::SN, RegKind::SN2};

inline const char* reg_name(RegKind k) {
  switch (k) {
    case RegKind::L1: return "reg_l1";
    case RegKind::L2: return "reg_l2";
    case RegKind::BW: return "reg_bw";
    case RegKind::SN: return "reg_sn";
    case RegKind::SN2: return "reg_sn2";
  }
  return "?";
}

inline Var build_regularizer(RegKind k, const NetworkVars& nv, const Box& box) {
  switch (k) {
    case RegKind::L1: return reg_l1(nv);
    case RegKind::L2: return reg_l2(nv);
    case RegKind::BW: return reg_bw(propagate_ibp(nv, box));
    case RegKind::SN: return reg_sn(propagate_ibp(nv, box));
    case RegKind::SN2: return reg_sn2(propagate_ibp(nv, box));
  }
  throw std::logic_error("build_regularizer: unknown kind");
}

inline double regularizer_value(RegKind k, const Network& net, const Box& box) {
  Tape t;
  const NetworkVars nv = register_parameters(t, net);
  return t.scalar_value(build_regularizer(k, nv, box));
}

/// Number of parameters in W0, b0, W1, b1, ... order.
inline std::size_t parameter_count(const Network& net) {
  std::size_t n = 0;
  for (const auto& l : net.layers) n += l.weight.data.size() + l.bias.data.size();
  return n;
}

inline double& parameter_ref(Network& net, std::size_t idx) {
  for (auto& l : net.layers) {
    if (idx < l.weight.data.size()) return l.weight.data[idx];
    idx -= l.weight.data.size();
    if (idx < l.bias.data.size()) return l.bias.data[idx];
    idx -= l.bias.data.size();
  }
  throw std::out_of_range("parameter_ref: index past the last parameter");
}

/// Flattened analytic gradient. `tamper` flips the sign of the reg_sn
/// gradient; it exists so the checker itself can be tested.
inline std::vector<double> regularizer_gradient(RegKind k, const Network& net, const Box& box, bool tamper = false) {
  Tape t;
  const NetworkVars nv = register_parameters(t, net);
  const Var r = build_regularizer(k, nv, box);
  const auto flat = nv.flat();
  std::vector<double> g;
  for (const Matrix& m : t.gradient(r, flat)) g.insert(g.end(), m.data.begin(), m.data.end());
  if (tamper && k == RegKind::SN)
    for (double& v : g) v = -v;
  return g;
}

/// Signs of every quantity at which the regularizer has a kink. Two parameter
/// vectors with equal signatures lie on the same smooth piece.
inline std::vector<std::int8_t> kink_signature(RegKind k, const Network& net, const Box& box) {
  auto sgn = [](double v) -> std::int8_t { return v > 0.0 ? 1 : (v < 0.0 ? -1 : 0); };
  std::vector<std::int8_t> s;
  if (k == RegKind::L2) return s;
  if (k == RegKind::L1) {
    for (const auto& l : net.layers) {
      for (double v : l.weight.data) s.push_back(sgn(v));
      for (double v : l.bias.data) s.push_back(sgn(v));
    }
    return s;
  }
  for (const auto& l : net.layers)
    for (double v : l.weight.data) s.push_back(sgn(v));
  const BoundsProfile p = propagate_ibp(net, box);
  for (std::size_t j = 0; j + 1 < p.layers(); ++j)
    for (std::size_t i = 0; i < p.lower[j].size(); ++i) {
      s.push_back(sgn(p.lower[j][i]));
      s.push_back(sgn(p.upper[j][i]));
      if (k == RegKind::SN) s.push_back(sgn(-p.lower[j][i] - p.upper[j][i]));
    }
  return s;
}

inline double relative_error(double a, double b) {
  return std::fabs(a - b) / std::max(1.0, std::max(std::fabs(a), std::fabs(b)));
}

struct FdFailure {
  std::string regularizer;
  std::size_t parameter = 0;
  double fd = 0.0;
  double analytic = 0.0;
};

struct FdReport {
  std::size_t checked = 0;
  std::size_t skipped_kinks = 0;
  double max_error = 0.0;
  std::vector<FdFailure> failures;
};

/// Central differences on every parameter. A parameter is skipped when a kink
/// lies inside its stencil [theta - eps, theta + eps], where a one-piece
/// difference quotient does not exist.
inline void fd_check(RegKind k, const Network& net, const Box& box, FdReport& rep, double eps = 1e-5, double tol = 1e-4,
                     bool tamper = false) {
  const auto g = regularizer_gradient(k, net, box, tamper);
  const auto sig = kink_signature(k, net, box);
  Network work = net;
  for (std::size_t p = 0; p < g.size(); ++p) {
    double& v = parameter_ref(work, p);
    const double v0 = v;
    v = v0 + eps;
    const double fp = regularizer_value(k, work, box);
    const bool same_p = kink_signature(k, work, box) == sig;
    v = v0 - eps;
    const double fm = regularizer_value(k, work, box);
    const bool same_m = kink_signature(k, work, box) == sig;
    v = v0;
    if (!same_p || !same_m) {
      ++rep.skipped_kinks;
      continue;
    }
    const double fd = (fp - fm) / (2.0 * eps);
    const double err = relative_error(fd, g[p]);
    ++rep.checked;
    rep.max_error = std::max(rep.max_error, err);
    if (!(err <= tol)) rep.failures.push_back({reg_name(k), p, fd, g[p]});
  }
}

/// Random network with a random input box, sized like the acceptance suites.
inline std::pair<Network, Box> random_instance(Rng& rng, std::size_t max_in = 3, std::size_t max_depth = 3,
                                               std::size_t max_width = 8) {
  const std::size_t n0 = 1 + rng.below(max_in);
  std::vector<std::size_t> dims = {n0};
  const std::size_t depth = 1 + rng.below(max_depth);
  for (std::size_t d = 0; d < depth; ++d) dims.push_back(1 + rng.below(max_width));
  dims.push_back(1);
  Network net = make_network(dims, rng);
  Box box;
  for (std::size_t i = 0; i < n0; ++i) {
    const double c = rng.uniform(-1, 1), r = rng.uniform(0.1, 1.5);
    box.lower.push_back(c - r);
    box.upper.push_back(c + r);
  }
  return {net, box};
}

struct DualProbe {
  std::size_t layer = 0, neuron = 0;
  double fd = 0.0;
  double dual = 0.0;
};

struct DualCheckReport {
  std::size_t cases = 0;
  std::size_t probes = 0;
  std::size_t skipped_degenerate = 0;  // fingerprint changed under +/- eps
  double max_error = 0.0;
  std::vector<DualProbe> failures;

  double nondegenerate_fraction() const {
    return probes ? static_cast<double>(probes - skipped_degenerate) / static_cast<double>(probes) : 0.0;
  }
};

/// Bias-perturbation check of the layer duals on fixed-input relaxations.
/// Each case perturbs `probes_per_case` random biases by +/- eps; probes whose
/// active-set fingerprint changes are counted as degenerate and skipped. While
/// fewer than `min_nondegenerate` of the probes are usable, more cases are
/// drawn (up to `max_cases`).
inline DualCheckReport dual_envelope_check(Rng& rng, std::size_t n_cases, std::size_t probes_per_case = 5,
                                           double eps = 1e-5, double tol = 1e-3, double min_nondegenerate = 0.8,
                                           std::size_t max_cases = 0) {
  if (max_cases == 0) max_cases = 20 * n_cases;
  DualCheckReport rep;
  while (rep.cases < n_cases || (rep.nondegenerate_fraction() < min_nondegenerate && rep.cases < max_cases)) {
    auto [net, box] = random_instance(rng);
    const BoundsProfile prof = propagate_ibp(net, box);
    std::vector<double> x;
    for (std::size_t i = 0; i < box.dim(); ++i) x.push_back(rng.uniform(box.lower[i], box.upper[i]));
    const RelaxationModel m = build_fixed_input_lp(net, prof, x, {}, Sense::Minimize);
    const LpSolution s = solve_lp(m.lp);
    if (!s.optimal()) throw std::logic_error("dual_envelope_check: fixed-input relaxation not optimal");
    const auto nu = layer_duals(m, s);
    ++rep.cases;
    for (std::size_t p = 0; p < probes_per_case; ++p) {
      const std::size_t k = rng.below(net.layers.size());
      const std::size_t j = rng.below(net.layers[k].bias.rows);
      auto solve_with = [&](double db) {
        Network n2 = net;
        n2.layers[k].bias.data[j] += db;
        // bounds stay those of the unperturbed net: they are constants of the LP
        return solve_lp(build_fixed_input_lp(n2, prof, x, {}, Sense::Minimize).lp);
      };
      const LpSolution sp = solve_with(eps), sm = solve_with(-eps);
      ++rep.probes;
      if (!sp.optimal() || !sm.optimal() || sp.fingerprint != s.fingerprint || sm.fingerprint != s.fingerprint) {
        ++rep.skipped_degenerate;
        continue;
      }
      const double fd = (sp.value - sm.value) / (2.0 * eps);
      const double err = std::fabs(fd - nu[k][j]);
      rep.max_error = std::max(rep.max_error, err);
      if (!(err <= tol)) rep.failures.push_back({k, j, fd, nu[k][j]});
    }
  }
  return rep;
}

}  // namespace tractnet
