#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <functional>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "tractnet/ibp.hpp"
#include "tractnet/matrix.hpp"
#include "tractnet/network.hpp"
#include "tractnet/rng.hpp"

namespace tractnet {

inline double himmelblau(const std::vector<double>& x) {
  if (x.size() != 2) throw ShapeError("himmelblau: expects 2 inputs");
  const double a = x[0] * x[0] + x[1] - 11.0, b = x[0] + x[1] * x[1] - 7.0;
  return a * a + b * b;
}

/// The usual peaks surface (minimum -6.551 near (0.228, -1.626)).
inline double peaks(const std::vector<double>& x) {
  if (x.size() != 2) throw ShapeError("peaks: expects 2 inputs");
  const double u = x[0], v = x[1];
  return 3.0 * (1 - u) * (1 - u) * std::exp(-u * u - (v + 1) * (v + 1)) -
         10.0 * (u / 5.0 - u * u * u - std::pow(v, 5)) * std::exp(-u * u - v * v) -
         std::exp(-(u + 1) * (u + 1) - v * v) / 3.0;
}

inline double ackley(const std::vector<double>& x) {
  if (x.empty()) throw ShapeError("ackley: needs at least one input");
  double sq = 0.0, cs = 0.0;
  for (double v : x) {
    sq += v * v;
    cs += std::cos(2.0 * std::numbers::pi * v);
  }
  const double d = static_cast<double>(x.size());
  return -20.0 * std::exp(-0.2 * std::sqrt(sq / d)) - std::exp(cs / d) + std::numbers::e + 20.0;
}

struct Benchmark {
  std::string name;
  Box box;
  std::function<double(const std::vector<double>&)> fn;

  std::size_t dim() const { return box.dim(); }
};

/// himmelblau, peaks, or ackley-<d>.
inline Benchmark benchmark_by_name(const std::string& name) {
  if (name == "himmelblau") return {name, Box::uniform(2, -5, 5), himmelblau};
  if (name == "peaks") return {name, Box::uniform(2, -2, 2), peaks};
  if (name.rfind("ackley-", 0) == 0) {
    const std::string ds = name.substr(7);
    std::size_t d = 0;
    if (ds.empty() || ds.find_first_not_of("0123456789") != std::string::npos || (d = std::stoul(ds)) == 0)
      throw std::invalid_argument("benchmark '" + name + "': ackley dimension must be a positive integer");
    return {name, Box::uniform(d, -3.5, 3.5), ackley};
  }
  throw std::invalid_argument("unknown benchmark '" + name + "' (himmelblau, peaks, ackley-<d>)");
}

/// Latin hypercube sample: n x dim, one point per stratum in each dimension.
inline Matrix lhs_sample(std::size_t n, const Box& box, std::uint64_t seed) {
  if (n == 0) throw std::invalid_argument("lhs_sample: n must be >= 1");
  box.validate();
  Rng rng(seed);
  Matrix out(n, box.dim());
  std::vector<std::size_t> perm(n);
  for (std::size_t d = 0; d < box.dim(); ++d) {
    for (std::size_t i = 0; i < n; ++i) perm[i] = i;
    rng.shuffle(perm);
    const double w = box.upper[d] - box.lower[d];
    for (std::size_t i = 0; i < n; ++i)
      out(i, d) = box.lower[d] + w * ((static_cast<double>(perm[i]) + rng.uniform()) / static_cast<double>(n));
  }
  return out;
}

/// Samples in rows: x is N x n_0, y is N x K.
struct Dataset {
  Matrix x;
  Matrix y;

  std::size_t size() const { return x.rows; }
  std::size_t input_dim() const { return x.cols; }
  std::size_t output_dim() const { return y.cols; }

  std::vector<double> input(std::size_t i) const {
    return std::vector<double>(x.data.begin() + i * x.cols, x.data.begin() + (i + 1) * x.cols);
  }

  /// Columns idx[from..to) as an n_0 x B batch and a K x B target block.
  void batch(const std::vector<std::size_t>& idx, std::size_t from, std::size_t to, Matrix& bx, Matrix& by) const {
    bx = Matrix(x.cols, to - from);
    by = Matrix(y.cols, to - from);
    for (std::size_t c = from; c < to; ++c) {
      for (std::size_t r = 0; r < x.cols; ++r) bx(r, c - from) = x(idx[c], r);
      for (std::size_t r = 0; r < y.cols; ++r) by(r, c - from) = y(idx[c], r);
    }
  }
};

inline Dataset make_benchmark_dataset(const Benchmark& b, std::size_t n, std::uint64_t seed) {
  Dataset ds;
  ds.x = lhs_sample(n, b.box, seed);
  ds.y = Matrix(n, 1);
  for (std::size_t i = 0; i < n; ++i) ds.y(i, 0) = b.fn(ds.input(i));
  return ds;
}

/// Per-column z-score parameters. A constant column is flagged and passed
/// through unchanged (mean 0, scale 1).
struct ColumnStats {
  std::vector<double> mean;
  std::vector<double> scale;
  std::vector<bool> constant;

  static ColumnStats identity(std::size_t n) { return {std::vector<double>(n, 0.0), std::vector<double>(n, 1.0), std::vector<bool>(n, false)}; }

  static ColumnStats fit(const Matrix& m) {
    ColumnStats s;
    const double n = static_cast<double>(m.rows);
    for (std::size_t c = 0; c < m.cols; ++c) {
      double mu = 0.0;
      for (std::size_t r = 0; r < m.rows; ++r) mu += m(r, c);
      mu /= n;
      double var = 0.0;
      for (std::size_t r = 0; r < m.rows; ++r) var += (m(r, c) - mu) * (m(r, c) - mu);
      const double sd = std::sqrt(var / n);
      const bool flat = !(sd > 0.0);
      s.mean.push_back(flat ? 0.0 : mu);
      s.scale.push_back(flat ? 1.0 : sd);
      s.constant.push_back(flat);
    }
    return s;
  }

  void apply(Matrix& m) const {
    for (std::size_t r = 0; r < m.rows; ++r)
      for (std::size_t c = 0; c < m.cols; ++c) m(r, c) = (m(r, c) - mean[c]) / scale[c];
  }
  void invert(Matrix& m) const {
    for (std::size_t r = 0; r < m.rows; ++r)
      for (std::size_t c = 0; c < m.cols; ++c) m(r, c) = m(r, c) * scale[c] + mean[c];
  }
};

struct NormStats {
  ColumnStats x;
  ColumnStats y;
};

struct Split {
  Dataset train;
  Dataset test;
  NormStats stats;
};

/// Shuffled train/test split; normalization fitted on the training rows only.
inline Split split_normalize(const Dataset& ds, double test_fraction, std::uint64_t seed, bool normalize_x = true,
                             bool normalize_y = true) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw std::invalid_argument("split_normalize: test_fraction must be in (0,1)");
  if (ds.size() < 2) throw std::invalid_argument("split_normalize: need at least 2 samples");
  std::vector<std::size_t> idx(ds.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  Rng rng(seed);
  rng.shuffle(idx);
  std::size_t n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(ds.size())));
  n_test = std::clamp<std::size_t>(n_test, 1, ds.size() - 1);
  auto take = [&](std::size_t from, std::size_t to) {
    Dataset d;
    d.x = Matrix(to - from, ds.x.cols);
    d.y = Matrix(to - from, ds.y.cols);
    for (std::size_t i = from; i < to; ++i) {
      for (std::size_t c = 0; c < ds.x.cols; ++c) d.x(i - from, c) = ds.x(idx[i], c);
      for (std::size_t c = 0; c < ds.y.cols; ++c) d.y(i - from, c) = ds.y(idx[i], c);
    }
    return d;
  };
  Split s;
  s.test = take(0, n_test);
  s.train = take(n_test, ds.size());
  s.stats.x = normalize_x ? ColumnStats::fit(s.train.x) : ColumnStats::identity(ds.x.cols);
  s.stats.y = normalize_y ? ColumnStats::fit(s.train.y) : ColumnStats::identity(ds.y.cols);
  s.stats.x.apply(s.train.x);
  s.stats.x.apply(s.test.x);
  s.stats.y.apply(s.train.y);
  s.stats.y.apply(s.test.y);
  return s;
}

/// Image of an original-units box in normalized input space.
inline Box normalize_box(const Box& box, const ColumnStats& xs) {
  Box b = box;
  for (std::size_t i = 0; i < b.dim(); ++i) {
    b.lower[i] = (box.lower[i] - xs.mean[i]) / xs.scale[i];
    b.upper[i] = (box.upper[i] - xs.mean[i]) / xs.scale[i];
  }
  return b;
}

/// Network in original units: y = s_y * net((x - m_x) / s_x) + m_y.
inline Network fold_normalization(const Network& net, const NormStats& st) {
  Network out = net;
  Layer& first = out.layers.front();
  for (std::size_t j = 0; j < first.weight.rows; ++j)
    for (std::size_t i = 0; i < first.weight.cols; ++i) {
      const double w = net.layers.front().weight(j, i);
      first.weight(j, i) = w / st.x.scale[i];
      first.bias.data[j] -= w * st.x.mean[i] / st.x.scale[i];
    }
  Layer& last = out.layers.back();
  for (std::size_t j = 0; j < last.weight.rows; ++j) {
    for (std::size_t i = 0; i < last.weight.cols; ++i) last.weight(j, i) *= st.y.scale[j];
    last.bias.data[j] = last.bias.data[j] * st.y.scale[j] + st.y.mean[j];
  }
  return out;
}

/// Inverse standard normal CDF: Acklam's rational approximation followed by
/// one Halley step against erfc, good to ~1e-15.
inline double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("normal_quantile: p must be in (0,1)");
  static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
                             1.383577518672690e+02,  -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                             6.680131188771972e+01,  -1.328068155288572e+01};
  static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                             -2.549732539343734e+00, 4.374664141464968e+00,  2.938163982698783e+00};
  static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                             3.754408661907416e+00};
  const double lo = 0.02425, hi = 1 - lo;
  double x;
  if (p < lo) {
    const double q = std::sqrt(-2 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
  } else if (p <= hi) {
    const double q = p - 0.5, r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1);
  } else {
    const double q = std::sqrt(-2 * std::log1p(-p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
  }
  const double e = 0.5 * std::erfc(-x / std::numbers::sqrt2) - p;
  const double u = e * std::sqrt(2 * std::numbers::pi) * std::exp(x * x / 2);
  return x - u / (1 + x * u / 2);
}

/// tau_k = (k - 0.5) / K for k = 1..K.
inline std::vector<double> quantile_levels(std::size_t k) {
  if (k == 0) throw std::invalid_argument("quantile_levels: K must be >= 1");
  std::vector<double> t;
  for (std::size_t i = 1; i <= k; ++i) t.push_back((static_cast<double>(i) - 0.5) / static_cast<double>(k));
  return t;
}

/// Output weights for (1 - beta) * mean + beta * CVaR_alpha over quantile
/// heads, with CVaR taken as the mean of the heads whose tau >= alpha.
inline std::vector<double> mean_cvar_weights(const std::vector<double>& taus, double alpha, double beta) {
  validate_taus(taus);
  if (!(beta >= 0.0 && beta <= 1.0)) throw std::invalid_argument("mean_cvar_weights: beta must be in [0,1]");
  std::size_t tail = 0;
  for (double t : taus) tail += t >= alpha;
  if (tail == 0) throw std::invalid_argument("mean_cvar_weights: no quantile level at or above alpha");
  std::vector<double> w;
  for (double t : taus)
    w.push_back((1.0 - beta) / static_cast<double>(taus.size()) + (t >= alpha ? beta / static_cast<double>(tail) : 0.0));
  return w;
}

/// Mean and noise scale of the synthetic quantile target at a 0/1 input.
inline double synth_mean(const std::vector<double>& x) {
  const double n = static_cast<double>(x.size());
  double lin = 0.0, cnt = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    lin += (i % 2 ? -1.0 : 1.0) * (1.0 + static_cast<double>(i)) / n * x[i];
    cnt += x[i];
  }
  return lin + std::sin(std::numbers::pi * cnt / n);
}

inline double synth_sigma(const std::vector<double>& x) {
  double cnt = 0.0;
  for (double v : x) cnt += v;
  return 0.1 + 0.4 * cnt / static_cast<double>(x.size());
}

struct QuantileData {
  Dataset data;                   // y is N x 1
  std::vector<double> taus;
  Matrix true_quantiles;          // N x K
};

/// Bernoulli(1/2) binary inputs, y = mu(x) + sigma(x) * eps with eps ~ N(0,1)
/// (eps = 0 when noise is off). True quantiles mu + sigma * Phi^-1(tau).
inline QuantileData synth_quantile_data(std::size_t n, std::size_t n_inputs, std::size_t k, std::uint64_t seed,
                                        bool noise = true) {
  if (n == 0 || n_inputs == 0) throw std::invalid_argument("synth_quantile_data: n and n_inputs must be >= 1");
  QuantileData q;
  q.taus = quantile_levels(k);
  Rng rng(seed);
  q.data.x = Matrix(n, n_inputs);
  q.data.y = Matrix(n, 1);
  q.true_quantiles = Matrix(n, k);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n_inputs; ++j) q.data.x(i, j) = static_cast<double>(rng.below(2));
    const auto x = q.data.input(i);
    const double mu = synth_mean(x), sd = noise ? synth_sigma(x) : 0.0;
    const double eps = noise ? rng.normal() : 0.0;
    q.data.y(i, 0) = mu + sd * eps;
    for (std::size_t t = 0; t < k; ++t) q.true_quantiles(i, t) = mu + sd * normal_quantile(q.taus[t]);
  }
  return q;
}

inline void write_dataset_csv(const Dataset& ds, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path);
  for (std::size_t c = 0; c < ds.x.cols; ++c) f << (c ? "," : "") << "x_" << c;
  for (std::size_t c = 0; c < ds.y.cols; ++c) f << ",y_" << c;
  f << "\n";
  for (std::size_t r = 0; r < ds.size(); ++r) {
    for (std::size_t c = 0; c < ds.x.cols; ++c) f << (c ? "," : "") << format_double(ds.x(r, c));
    for (std::size_t c = 0; c < ds.y.cols; ++c) f << "," << format_double(ds.y(r, c));
    f << "\n";
  }
  if (!f) throw std::runtime_error("write failed: " + path);
}

}  // namespace tractnet
