#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "tractnet/autodiff.hpp"
#include "tractnet/ibp.hpp"
#include "tractnet/lp.hpp"
#include "tractnet/network.hpp"
#include "tractnet/relaxation.hpp"
#include "tractnet/rng.hpp"

namespace tractnet {

enum class GapDirection { Min, Max, Both };
enum class Projection { Sphere, Nonnegative };

inline const char* direction_name(GapDirection d) {
  switch (d) {
    case GapDirection::Min: return "min";
    case GapDirection::Max: return "max";
    case GapDirection::Both: return "both";
  }
  return "?";
}

struct RegularizerConfig {
  double l1 = 0.0;
  double l2 = 0.0;
  double bw = 0.0;
  double sn = 0.0;
  double sn2 = 0.0;
  double lp = 0.0;
  // Combined mode: the bound-width term additionally gets alpha * lp.
  double alpha = 0.0;
  GapDirection direction = GapDirection::Min;
  std::size_t lp_samples = 1;
  Projection projection = Projection::Sphere;

  double bw_weight() const { return bw + alpha * lp; }
  bool needs_bounds() const { return bw_weight() != 0.0 || sn != 0.0 || sn2 != 0.0 || lp != 0.0; }

  void validate(std::size_t batch_size) const {
    const std::pair<const char*, double> ws[] = {{"l1", l1}, {"l2", l2}, {"bw", bw}, {"sn", sn},
                                                 {"sn2", sn2}, {"lp", lp}, {"alpha", alpha}};
    for (const auto& [name, w] : ws)
      if (!std::isfinite(w) || w < 0.0)
        throw std::invalid_argument(std::string("regularizer weight '") + name + "' must be finite and >= 0");
    if (lp_samples == 0) throw std::invalid_argument("lp_samples must be >= 1");
    if (lp != 0.0 && lp_samples > batch_size)
      throw std::invalid_argument("lp_samples (" + std::to_string(lp_samples) + ") exceeds batch size (" +
                                  std::to_string(batch_size) + ")");
  }
};

namespace detail {

inline Var zero_scalar(Tape& t) { return t.leaf(Matrix::scalar(0.0)); }

inline std::size_t hidden_count(const TapeBounds& tb) {
  std::size_t n = 0;
  for (std::size_t k = 0; k + 1 < tb.layers(); ++k) n += tb.lower[k].rows;
  return n;
}

// Sum over hidden layers of sum(term(L_k, U_k)), scaled by 1/#hidden neurons.
template <class F>
Var hidden_mean(const TapeBounds& tb, F term) {
  Tape& t = *tb.lower.front().tape;
  const std::size_t n = hidden_count(tb);
  if (n == 0) return zero_scalar(t);
  Var acc = sum(term(tb.lower[0], tb.upper[0]));
  for (std::size_t k = 1; k + 1 < tb.layers(); ++k) acc = add(acc, sum(term(tb.lower[k], tb.upper[k])));
  return scale(acc, 1.0 / static_cast<double>(n));
}

}  // namespace detail

/// Sum over all layers of |W| + |b| (not normalized).
inline Var reg_l1(const NetworkVars& nv) {
  Var acc = add(sum(abs(nv.weight[0])), sum(abs(nv.bias[0])));
  for (std::size_t k = 1; k < nv.weight.size(); ++k) acc = add(acc, add(sum(abs(nv.weight[k])), sum(abs(nv.bias[k]))));
  return acc;
}

/// Sum over all layers of W^2 + b^2 (not normalized).
inline Var reg_l2(const NetworkVars& nv) {
  auto sq = [](const Var& v) { return sum(mul(v, v)); };
  Var acc = add(sq(nv.weight[0]), sq(nv.bias[0]));
  for (std::size_t k = 1; k < nv.weight.size(); ++k) acc = add(acc, add(sq(nv.weight[k]), sq(nv.bias[k])));
  return acc;
}

/// Mean pre-activation width U - L over hidden neurons.
inline Var reg_bw(const TapeBounds& tb) {
  return detail::hidden_mean(tb, [](const Var& l, const Var& u) { return sub(u, l); });
}

/// Mean of min([-L]+, [U]+) over hidden neurons; zero for stable neurons.
inline Var reg_sn(const TapeBounds& tb) {
  return detail::hidden_mean(tb, [](const Var& l, const Var& u) { return minimum(pos(scale(l, -1.0)), pos(u)); });
}

/// Mean of -tanh(1 + U L) over hidden neurons.
inline Var reg_sn2(const TapeBounds& tb) {
  return detail::hidden_mean(tb, [](const Var& l, const Var& u) { return scale(tanh(shift(mul(u, l), 1.0)), -1.0); });
}

/// Random unit vector for projecting K outputs onto one LP objective.
inline std::vector<double> sample_projection(std::size_t k, Projection mode, Rng& rng) {
  if (k == 1) return {1.0};
  std::vector<double> w(k);
  double norm = 0.0;
  while (norm == 0.0) {
    norm = 0.0;
    for (double& v : w) {
      v = rng.normal();
      if (mode == Projection::Nonnegative) v = std::fabs(v);
      norm += v * v;
    }
  }
  norm = std::sqrt(norm);
  for (double& v : w) v /= norm;
  return w;
}

struct LpGapSample {
  std::vector<double> x;
  std::vector<double> omega;
  double f = 0.0;  // omega' f(x)
  double v_min = 0.0, v_max = 0.0;
  double gap = 0.0;  // delta for the configured direction (summed for both)
  std::vector<std::vector<double>> nu_min, nu_max;
  std::vector<std::vector<double>> xhat_min, xhat_max;
  std::size_t iterations = 0;
};

struct LpGapReport {
  std::vector<LpGapSample> samples;
  double mean_gap = 0.0;  // (g_0 + g_1 + ...) * (1/n), the tape's own summation order
};

/// LP relaxation gap of the fixed-input relaxation at each sample, as a
/// straight-through tape expression: forward value is the solver's gap, the
/// backward pass sees d(omega'f)/dtheta -/+ the dual-assembled proxy gradient
///   dV/db_j = nu_j,  dV/dW_jk = nu_j * x̂*_k   (big-M constants held fixed).
/// `samples` holds one input per column.
inline Var reg_lp(const NetworkVars& nv, const Network& net, const BoundsProfile& profile, const Matrix& samples,
                  const RegularizerConfig& cfg, Rng& omega_rng, LpGapReport* report = nullptr) {
  Tape& t = *nv.weight.front().tape;
  if (samples.cols == 0) throw std::invalid_argument("reg_lp: no samples");
  if (samples.rows != net.input_dim()) throw ShapeError("reg_lp: samples have " + std::to_string(samples.rows) + " rows");
  LpGapReport local;
  LpGapReport& rep = report ? *report : local;
  rep.samples.clear();

  // omega' (W x̂* + b) summed over layers, with nu and x̂* constants.
  auto proxy = [&](const std::vector<std::vector<double>>& nu, const std::vector<std::vector<double>>& xs) {
    Var p = matmul(t.leaf(Matrix::row(nu[0])), affine(nv.weight[0], t.leaf(Matrix::column(xs[0])), nv.bias[0]));
    for (std::size_t k = 1; k < nu.size(); ++k)
      p = add(p, matmul(t.leaf(Matrix::row(nu[k])), affine(nv.weight[k], t.leaf(Matrix::column(xs[k])), nv.bias[k])));
    return p;
  };
  auto straight_through = [&](const Var& p, double v) { return add(sub(p, detach(p)), t.leaf(Matrix::scalar(v))); };
  auto solve = [&](const std::vector<double>& x, const Objective& obj, Sense sense, LpGapSample& s) {
    const RelaxationModel m = build_fixed_input_lp(net, profile, x, obj, sense);
    const LpSolution sol = solve_lp(m.lp);
    if (!sol.optimal())
      throw std::logic_error(std::string("reg_lp: fixed-input relaxation is ") + status_name(sol.status) +
                             " (internal error: bounds should make it feasible and bounded)");
    s.iterations += sol.iterations;
    return std::make_tuple(sol.value, layer_duals(m, sol), layer_input_values(m, sol));
  };

  Var acc;
  double acc_value = 0.0;
  for (std::size_t i = 0; i < samples.cols; ++i) {
    LpGapSample s;
    for (std::size_t r = 0; r < samples.rows; ++r) s.x.push_back(samples(r, i));
    s.omega = sample_projection(net.output_dim(), cfg.projection, omega_rng);
    Objective obj;
    obj.output_weights = s.omega;
    s.f = obj.evaluate(net, s.x);
    Var fx = matmul(t.leaf(Matrix::row(s.omega)), forward(nv, t.leaf(Matrix::column(s.x))));

    Var term;
    double term_value = 0.0;
    if (cfg.direction != GapDirection::Max) {
      auto [v, nu, xs] = solve(s.x, obj, Sense::Minimize, s);
      s.v_min = v;
      term = sub(fx, straight_through(proxy(nu, xs), v));
      term_value = s.f - v;
      s.nu_min = std::move(nu);
      s.xhat_min = std::move(xs);
    }
    if (cfg.direction != GapDirection::Min) {
      auto [v, nu, xs] = solve(s.x, obj, Sense::Maximize, s);
      s.v_max = v;
      Var d = sub(straight_through(proxy(nu, xs), v), fx);
      const double dv = v - s.f;
      if (cfg.direction == GapDirection::Both) {
        term = add(term, d);
        term_value = term_value + dv;
      } else {
        term = d;
        term_value = dv;
      }
      s.nu_max = std::move(nu);
      s.xhat_max = std::move(xs);
    }
    s.gap = term_value;
    if (i == 0) {
      acc = term;
      acc_value = term_value;
    } else {
      acc = add(acc, term);
      acc_value = acc_value + term_value;
    }
    rep.samples.push_back(std::move(s));
  }
  const double inv = 1.0 / static_cast<double>(samples.cols);
  rep.mean_gap = acc_value * inv;
  return scale(acc, inv);
}

enum class DataLoss { Mse, Pinball };

struct LossTerm {
  std::string name;
  Var value;   // unweighted regularizer (or the data loss)
  double weight;
};

struct LossBreakdown {
  Var total;
  std::vector<LossTerm> terms;  // data loss first
  LpGapReport lp;
};

/// Data loss + sum of weighted regularizers. Terms with zero weight are not
/// built at all, so enabling a regularizer at weight 0 leaves every value and
/// gradient bit-identical to the unregularized loss.
/// inputs: n_0 x B, targets: K x B (MSE) or 1 x B (pinball). The LP term uses
/// the first cfg.lp_samples columns of inputs.
inline LossBreakdown total_loss(const NetworkVars& nv, const Network& net, const Matrix& inputs, const Matrix& targets,
                                const Box& box, const RegularizerConfig& cfg, Rng& omega_rng, DataLoss mode = DataLoss::Mse,
                                const std::vector<double>& taus = {}) {
  cfg.validate(inputs.cols);
  Tape& t = *nv.weight.front().tape;
  LossBreakdown out;
  Var preds = forward(nv, t.leaf(inputs));
  Var data = mode == DataLoss::Mse ? mse_loss(preds, t.leaf(targets)) : pinball_loss(preds, targets, taus);
  out.terms.push_back({mode == DataLoss::Mse ? "mse" : "pinball", data, 1.0});
  out.total = data;
  auto add_term = [&](const char* name, double w, const Var& v) {
    out.terms.push_back({name, v, w});
    out.total = add(out.total, scale(v, w));
  };
  if (cfg.l1 != 0.0) add_term("l1", cfg.l1, reg_l1(nv));
  if (cfg.l2 != 0.0) add_term("l2", cfg.l2, reg_l2(nv));
  if (cfg.needs_bounds()) {
    const TapeBounds tb = propagate_ibp(nv, box);
    if (cfg.bw_weight() != 0.0) add_term("bw", cfg.bw_weight(), reg_bw(tb));
    if (cfg.sn != 0.0) add_term("sn", cfg.sn, reg_sn(tb));
    if (cfg.sn2 != 0.0) add_term("sn2", cfg.sn2, reg_sn2(tb));
    if (cfg.lp != 0.0) {
      const BoundsProfile prof = to_profile(t, tb);
      Matrix sub_batch(inputs.rows, cfg.lp_samples);
      for (std::size_t r = 0; r < inputs.rows; ++r)
        for (std::size_t c = 0; c < cfg.lp_samples; ++c) sub_batch(r, c) = inputs(r, c);
      add_term("lp", cfg.lp, reg_lp(nv, net, prof, sub_batch, cfg, omega_rng, &out.lp));
    }
  }
  return out;
}

}  // namespace tractnet
