#pragma once

// Big-M encoding of a ReLU network and its LP relaxation.
//
// Per hidden neuron j of layer k (pre-activation bounds L < 0 < U):
//   z_j - W_j x̂_prev = b_j        equality row, dual nu_j = dV/db_j
//   z_j - x̂_j        <= 0
//   x̂_j - z_j - L a_j <= -L       x̂ <= z - L(1 - a)
//   x̂_j - U a_j      <= 0
//   x̂_j >= 0 (bound), a_j in [0, 1]
// Stable neurons carry no a variable: a stable-active x̂ is the z variable
// itself, a stable-inactive x̂ is a separate variable with bounds [0, 0].

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "tractnet/ibp.hpp"
#include "tractnet/lp.hpp"
#include "tractnet/network.hpp"

namespace tractnet {

inline constexpr std::size_t kNoVar = static_cast<std::size_t>(-1);

/// omega' f(x) + c' x. Empty output_weights selects the single output.
struct Objective {
  std::vector<double> output_weights;
  std::vector<double> input_costs;

  static Objective output(std::size_t k, std::size_t n_outputs) {
    Objective o;
    o.output_weights.assign(n_outputs, 0.0);
    o.output_weights.at(k) = 1.0;
    return o;
  }

  std::vector<double> weights_for(const Network& net) const {
    if (output_weights.empty()) {
      if (net.output_dim() != 1)
        throw std::invalid_argument("objective: network has " + std::to_string(net.output_dim()) +
                                    " outputs, give explicit output weights");
      return {1.0};
    }
    if (output_weights.size() != net.output_dim())
      throw ShapeError("objective: " + std::to_string(output_weights.size()) + " output weights for " +
                       std::to_string(net.output_dim()) + " outputs");
    for (double w : output_weights)
      if (!std::isfinite(w)) throw std::invalid_argument("objective: non-finite output weight");
    return output_weights;
  }

  void check_inputs(const Network& net) const {
    if (!input_costs.empty() && input_costs.size() != net.input_dim())
      throw ShapeError("objective: " + std::to_string(input_costs.size()) + " input costs for " +
                       std::to_string(net.input_dim()) + " inputs");
  }

  /// Objective of the network itself at x (same summation order as the LP
  /// objective: outputs first, then input costs).
  double evaluate(const Network& net, const std::vector<double>& x) const {
    const auto w = weights_for(net);
    const auto f = predict(net, x);
    double s = 0.0;
    for (std::size_t i = 0; i < f.size(); ++i) s += w[i] * f[i];
    for (std::size_t i = 0; i < input_costs.size(); ++i) s += input_costs[i] * x[i];
    return s;
  }
};

struct RelaxationOptions {
  bool fix_stable = true;      // false: every hidden neuron gets an a variable
  bool binary_inputs = false;  // inputs are 0/1 decision variables (box ignored)
};

struct BigMRows {
  std::size_t lower = kNoVar;   // z - x̂ <= 0
  std::size_t active = kNoVar;  // x̂ - z - L a <= -L
  std::size_t upper = kNoVar;   // x̂ - U a <= 0
};

struct RelaxationModel {
  LinearProgram lp;
  std::vector<std::size_t> input_var;
  // Indexed [k][j], k = 0..L where k = L is the output layer.
  std::vector<std::vector<std::size_t>> z_var;
  std::vector<std::vector<std::size_t>> eq_row;
  // Hidden layers only.
  std::vector<std::vector<std::size_t>> xhat_var;
  std::vector<std::vector<std::size_t>> a_var;  // kNoVar when fixed
  std::vector<std::vector<BigMRows>> bigm;
  std::vector<NeuronId> relaxed;                // neurons that own an a variable
  std::vector<double> output_weights;
  bool binary_inputs = false;

  std::size_t num_binaries() const { return relaxed.size(); }

  /// Variables feeding layer k: the inputs for k = 0, else x̂ of layer k-1.
  const std::vector<std::size_t>& layer_inputs(std::size_t k) const { return k == 0 ? input_var : xhat_var[k - 1]; }
};

namespace detail {

inline RelaxationModel build_relaxation(const Network& net, const BoundsProfile& profile,
                                        const std::vector<double>& in_lo, const std::vector<double>& in_hi,
                                        const Objective& obj, Sense sense, const RelaxationOptions& opts) {
  net.validate();
  obj.check_inputs(net);
  const std::size_t n_layers = net.layers.size();
  if (profile.layers() != n_layers) throw ShapeError("relaxation: bounds profile does not match the network depth");
  for (std::size_t k = 0; k < n_layers; ++k)
    if (profile.lower[k].size() != net.layers[k].weight.rows || profile.upper[k].size() != net.layers[k].weight.rows)
      throw ShapeError("relaxation: bounds profile layer " + std::to_string(k) + " has the wrong width");

  RelaxationModel m;
  m.binary_inputs = opts.binary_inputs;
  m.output_weights = obj.weights_for(net);
  LinearProgram& lp = m.lp;
  lp.sense = sense;

  for (std::size_t i = 0; i < net.input_dim(); ++i) {
    const double cost = obj.input_costs.empty() ? 0.0 : obj.input_costs[i];
    m.input_var.push_back(lp.add_var(in_lo[i], in_hi[i], cost));
  }

  m.z_var.resize(n_layers);
  m.eq_row.resize(n_layers);
  m.xhat_var.resize(n_layers - 1);
  m.a_var.resize(n_layers - 1);
  m.bigm.resize(n_layers - 1);

  for (std::size_t k = 0; k < n_layers; ++k) {
    const Matrix& w = net.layers[k].weight;
    const Matrix& b = net.layers[k].bias;
    const std::vector<std::size_t>& prev = m.layer_inputs(k);
    const bool output = k + 1 == n_layers;
    for (std::size_t j = 0; j < w.rows; ++j) {
      const double cost = output ? m.output_weights[j] : 0.0;
      const std::size_t z = lp.add_var(-kInf, kInf, cost);
      m.z_var[k].push_back(z);
      SparseRow row;
      row.add(z, 1.0);
      for (std::size_t i = 0; i < w.cols; ++i) row.add(prev[i], -w(j, i));
      m.eq_row[k].push_back(lp.add_eq(std::move(row), b.data[j]));
      if (output) continue;

      const double L = profile.lower[k][j];
      const double U = profile.upper[k][j];
      if (!(L <= U)) throw std::invalid_argument("relaxation: L > U at layer " + std::to_string(k) + " neuron " + std::to_string(j));
      const bool relax = !opts.fix_stable || (L < 0.0 && U > 0.0);
      if (!relax && L >= 0.0) {
        m.xhat_var[k].push_back(z);
        m.a_var[k].push_back(kNoVar);
        m.bigm[k].push_back({});
        continue;
      }
      if (!relax) {
        m.xhat_var[k].push_back(lp.add_var(0.0, 0.0));
        m.a_var[k].push_back(kNoVar);
        m.bigm[k].push_back({});
        continue;
      }
      const std::size_t xh = lp.add_var(0.0, kInf);
      const std::size_t a = lp.add_var(0.0, 1.0);
      BigMRows rows;
      SparseRow r1, r2, r3;
      r1.add(z, 1.0);
      r1.add(xh, -1.0);
      rows.lower = lp.add_le(std::move(r1), 0.0);
      r2.add(xh, 1.0);
      r2.add(z, -1.0);
      r2.add(a, -L);
      rows.active = lp.add_le(std::move(r2), -L);
      r3.add(xh, 1.0);
      r3.add(a, -U);
      rows.upper = lp.add_le(std::move(r3), 0.0);
      m.xhat_var[k].push_back(xh);
      m.a_var[k].push_back(a);
      m.bigm[k].push_back(rows);
      m.relaxed.push_back({k, j});
    }
  }
  return m;
}

}  // namespace detail

/// Relaxation with the input pinned to x (input variables have lb = ub = x).
inline RelaxationModel build_fixed_input_lp(const Network& net, const BoundsProfile& profile, const std::vector<double>& x,
                                            const Objective& obj, Sense sense, const RelaxationOptions& opts = {}) {
  if (x.size() != net.input_dim())
    throw ShapeError("build_fixed_input_lp: input has " + std::to_string(x.size()) + " entries, network expects " +
                     std::to_string(net.input_dim()));
  RelaxationOptions o = opts;
  o.binary_inputs = false;
  return detail::build_relaxation(net, profile, x, x, obj, sense, o);
}

/// Relaxation over the input box (or over [0,1] inputs in binary mode).
inline RelaxationModel build_box_input_lp(const Network& net, const BoundsProfile& profile, const Box& box,
                                          const Objective& obj, Sense sense, const RelaxationOptions& opts = {}) {
  if (opts.binary_inputs) {
    const Box unit = Box::uniform(net.input_dim(), 0.0, 1.0);
    return detail::build_relaxation(net, profile, unit.lower, unit.upper, obj, sense, opts);
  }
  check_box_for(net, box);
  return detail::build_relaxation(net, profile, box.lower, box.upper, obj, sense, opts);
}

/// Duals of the pre-activation rows per layer (k = 0..L), signed so that
/// nu[k][j] = dV / d b_j for the model's own sense.
inline std::vector<std::vector<double>> layer_duals(const RelaxationModel& m, const LpSolution& sol) {
  if (!sol.optimal()) throw std::logic_error(std::string("layer_duals: LP status is ") + status_name(sol.status));
  std::vector<std::vector<double>> nu(m.eq_row.size());
  for (std::size_t k = 0; k < m.eq_row.size(); ++k)
    for (std::size_t r : m.eq_row[k]) nu[k].push_back(sol.eq_duals.at(r));
  return nu;
}

/// LP primal values of the inputs of each layer: x̂*_{k-1} for layer k.
inline std::vector<std::vector<double>> layer_input_values(const RelaxationModel& m, const LpSolution& sol) {
  std::vector<std::vector<double>> xs(m.eq_row.size());
  for (std::size_t k = 0; k < m.eq_row.size(); ++k)
    for (std::size_t v : m.layer_inputs(k)) xs[k].push_back(sol.primal.at(v));
  return xs;
}

inline std::vector<double> input_values(const RelaxationModel& m, const LpSolution& sol) {
  std::vector<double> x;
  for (std::size_t v : m.input_var) x.push_back(sol.primal.at(v));
  return x;
}

}  // namespace tractnet
