#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "tractnet/autodiff.hpp"
#include "tractnet/network.hpp"
#include "tractnet/rng.hpp"

namespace tractnet {

/// Axis-aligned input domain [lower, upper].
struct Box {
  std::vector<double> lower;
  std::vector<double> upper;

  std::size_t dim() const { return lower.size(); }

  void validate() const {
    if (lower.size() != upper.size()) throw std::invalid_argument("box: lower/upper length mismatch");
    for (std::size_t i = 0; i < lower.size(); ++i)
      if (!(lower[i] <= upper[i]))
        throw std::invalid_argument("box: lower > upper in dimension " + std::to_string(i));
  }

  static Box uniform(std::size_t n, double lo, double hi) { return Box{std::vector<double>(n, lo), std::vector<double>(n, hi)}; }
};

struct NeuronId {
  std::size_t layer = 0;   // index into Network::layers (hidden layers only)
  std::size_t neuron = 0;
  bool operator==(const NeuronId&) const = default;
  auto operator<=>(const NeuronId&) const = default;
};

/// Numeric bounds for every layer k = 0..L (the last entry is the output layer).
struct BoundsProfile {
  std::vector<std::vector<double>> lower;       // L^{(k)}
  std::vector<std::vector<double>> upper;       // U^{(k)}
  std::vector<std::vector<double>> post_lower;  // max(L, 0) for hidden layers, L for the output
  std::vector<std::vector<double>> post_upper;
  std::vector<NeuronId> unstable;               // hidden neurons with L < 0 < U

  std::size_t layers() const { return lower.size(); }
  double width(std::size_t k, std::size_t j) const { return upper[k][j] - lower[k][j]; }

  bool is_unstable(std::size_t k, std::size_t j) const { return lower[k][j] < 0.0 && upper[k][j] > 0.0; }
  bool is_stable_active(std::size_t k, std::size_t j) const { return lower[k][j] >= 0.0; }
  bool is_stable_inactive(std::size_t k, std::size_t j) const { return upper[k][j] <= 0.0 && lower[k][j] < 0.0; }

  /// Mean pre-activation width over hidden neurons.
  double mean_hidden_width() const {
    double s = 0.0;
    std::size_t n = 0;
    for (std::size_t k = 0; k + 1 < lower.size(); ++k)
      for (std::size_t j = 0; j < lower[k].size(); ++j, ++n) s += upper[k][j] - lower[k][j];
    return n ? s / static_cast<double>(n) : 0.0;
  }
};

/// The same bounds as tape records, differentiable with respect to the
/// parameters they were built from.
struct TapeBounds {
  std::vector<Var> lower;
  std::vector<Var> upper;
  std::vector<Var> post_lower;
  std::vector<Var> post_upper;

  std::size_t layers() const { return lower.size(); }
};

/// Hidden neurons with strictly straddling bounds. A bound equal to zero
/// counts as stable.
inline std::vector<NeuronId> unstable_set(const std::vector<std::vector<double>>& lower,
                                          const std::vector<std::vector<double>>& upper) {
  std::vector<NeuronId> u;
  for (std::size_t k = 0; k + 1 < lower.size(); ++k)
    for (std::size_t j = 0; j < lower[k].size(); ++j)
      if (lower[k][j] < 0.0 && upper[k][j] > 0.0) u.push_back({k, j});
  return u;
}

inline std::size_t unstable_count(const BoundsProfile& p) { return unstable_set(p.lower, p.upper).size(); }

inline void check_box_for(const Network& net, const Box& box) {
  box.validate();
  if (box.dim() != net.input_dim())
    throw ShapeError("ibp: box has " + std::to_string(box.dim()) + " dims, network expects " + std::to_string(net.input_dim()));
}

/// Interval bound propagation recorded on a tape:
///   L = [W]+ l_prev + [W]- u_prev + b,   U = [W]+ u_prev + [W]- l_prev + b,
/// followed by ReLU clamping of the post-activation bounds on hidden layers.
inline TapeBounds propagate_ibp(const NetworkVars& nv, const Box& box) {
  if (nv.weight.empty()) throw ShapeError("ibp: empty network");
  Tape& t = *nv.weight.front().tape;
  if (box.dim() != nv.weight.front().cols)
    throw ShapeError("ibp: box has " + std::to_string(box.dim()) + " dims, network expects " +
                     std::to_string(nv.weight.front().cols));
  box.validate();
  TapeBounds tb;
  Var lo = t.leaf(Matrix::column(box.lower));
  Var hi = t.leaf(Matrix::column(box.upper));
  const std::size_t n_layers = nv.weight.size();
  for (std::size_t k = 0; k < n_layers; ++k) {
    Var wp = pos(nv.weight[k]);
    Var wn = neg(nv.weight[k]);
    Var l = add(affine(wp, lo, nv.bias[k]), matmul(wn, hi));
    Var u = add(affine(wp, hi, nv.bias[k]), matmul(wn, lo));
    tb.lower.push_back(l);
    tb.upper.push_back(u);
    if (k + 1 < n_layers) {
      lo = relu(l);
      hi = relu(u);
    } else {
      lo = l;
      hi = u;
    }
    tb.post_lower.push_back(lo);
    tb.post_upper.push_back(hi);
  }
  return tb;
}

inline BoundsProfile to_profile(const Tape& t, const TapeBounds& tb) {
  BoundsProfile p;
  for (std::size_t k = 0; k < tb.layers(); ++k) {
    p.lower.push_back(t.value(tb.lower[k]).data);
    p.upper.push_back(t.value(tb.upper[k]).data);
    p.post_lower.push_back(t.value(tb.post_lower[k]).data);
    p.post_upper.push_back(t.value(tb.post_upper[k]).data);
  }
  p.unstable = unstable_set(p.lower, p.upper);
  return p;
}

/// Numeric bounds (a throwaway tape keeps one code path for both uses).
inline BoundsProfile propagate_ibp(const Network& net, const Box& box) {
  net.validate();
  check_box_for(net, box);
  Tape t;
  NetworkVars nv = register_parameters(t, net);
  return to_profile(t, propagate_ibp(nv, box));
}

struct SoundnessReport {
  std::size_t samples = 0;
  std::size_t violations = 0;
  double max_violation = 0.0;  // largest amount by which a pre-activation left [L, U]
  NeuronId worst{};
};

/// Samples random inputs in the box and checks every pre-activation (output
/// layer included) against the profile with slack `tol`. Violations are
/// reported, never thrown.
inline SoundnessReport soundness_check(const Network& net, const Box& box, const BoundsProfile& profile,
                                       std::size_t n_samples, std::uint64_t seed, double tol = 1e-9) {
  Rng rng(seed);
  SoundnessReport rep;
  std::vector<double> x(box.dim());
  for (std::size_t s = 0; s < n_samples; ++s) {
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = rng.uniform(box.lower[i], box.upper[i]);
    const ForwardTrace tr = forward(net, x);
    ++rep.samples;
    for (std::size_t k = 0; k < tr.preact.size(); ++k)
      for (std::size_t j = 0; j < tr.preact[k].size(); ++j) {
        const double z = tr.preact[k][j];
        const double v = std::max(profile.lower[k][j] - z, z - profile.upper[k][j]);
        if (v > tol) ++rep.violations;
        if (v > rep.max_violation) {
          rep.max_violation = v;
          rep.worst = {k, j};
        }
      }
  }
  return rep;
}

}  // namespace tractnet
