#pragma once

#include <cctype>
#include <cerrno>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "tractnet/autodiff.hpp"
#include "tractnet/matrix.hpp"
#include "tractnet/rng.hpp"

namespace tractnet {

struct Layer {
  Matrix weight;  // n_out x n_in
  Matrix bias;    // n_out x 1
};

/// Feedforward network: ReLU on every hidden layer, linear output layer.
struct Network {
  std::vector<Layer> layers;

  std::size_t input_dim() const { return layers.empty() ? 0 : layers.front().weight.cols; }
  std::size_t output_dim() const { return layers.empty() ? 0 : layers.back().weight.rows; }
  std::size_t hidden_layers() const { return layers.empty() ? 0 : layers.size() - 1; }
  std::size_t hidden_neurons() const {
    std::size_t n = 0;
    for (std::size_t k = 0; k + 1 < layers.size(); ++k) n += layers[k].weight.rows;
    return n;
  }
  std::vector<std::size_t> dims() const {
    std::vector<std::size_t> d;
    if (layers.empty()) return d;
    d.push_back(input_dim());
    for (const auto& l : layers) d.push_back(l.weight.rows);
    return d;
  }

  /// Throws ShapeError naming the first layer that does not chain.
  void validate() const {
    if (layers.empty()) throw ShapeError("network: no layers");
    for (std::size_t k = 0; k < layers.size(); ++k) {
      const auto& l = layers[k];
      if (l.bias.rows != l.weight.rows || l.bias.cols != 1)
        throw ShapeError("network: layer " + std::to_string(k) + " bias " + shape_str(l.bias) + " vs weight " +
                         shape_str(l.weight));
      if (k > 0 && l.weight.cols != layers[k - 1].weight.rows)
        throw ShapeError("network: layer " + std::to_string(k) + " expects " + std::to_string(l.weight.cols) +
                         " inputs but layer " + std::to_string(k - 1) + " has " +
                         std::to_string(layers[k - 1].weight.rows) + " outputs");
    }
  }

  bool operator==(const Network& o) const {
    if (layers.size() != o.layers.size()) return false;
    for (std::size_t k = 0; k < layers.size(); ++k)
      if (!(layers[k].weight == o.layers[k].weight) || !(layers[k].bias == o.layers[k].bias)) return false;
    return true;
  }
};

inline std::string arch_string(const std::vector<std::size_t>& dims) {
  std::string s;
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (i) s += '-';
    s += std::to_string(dims[i]);
  }
  return s;
}

/// Fan-in uniform initialization in [-1/sqrt(n_in), 1/sqrt(n_in)] for weights
/// and biases alike.
inline Network make_network(const std::vector<std::size_t>& dims, Rng& rng) {
  if (dims.size() < 2) throw ShapeError("make_network: need at least input and output dims");
  Network net;
  for (std::size_t k = 1; k < dims.size(); ++k) {
    const double bound = std::sqrt(1.0 / static_cast<double>(dims[k - 1]));
    Layer l{Matrix(dims[k], dims[k - 1]), Matrix(dims[k], 1)};
    for (double& w : l.weight.data) w = rng.uniform(-bound, bound);
    for (double& b : l.bias.data) b = rng.uniform(-bound, bound);
    net.layers.push_back(std::move(l));
  }
  return net;
}

/// Pre- and post-activations of one forward pass.
/// preact[k] is z of layer k+1 (k = 0..L, the last is the output);
/// postact[0] is the input and postact[k] = relu(preact[k-1]) for k = 1..L.
struct ForwardTrace {
  std::vector<std::vector<double>> preact;
  std::vector<std::vector<double>> postact;

  const std::vector<double>& output() const { return preact.back(); }
};

inline ForwardTrace forward(const Network& net, const std::vector<double>& x) {
  if (x.size() != net.input_dim())
    throw ShapeError("forward: input has " + std::to_string(x.size()) + " entries, network expects " +
                     std::to_string(net.input_dim()));
  ForwardTrace tr;
  Matrix h = Matrix::column(x);
  tr.postact.push_back(x);
  for (std::size_t k = 0; k < net.layers.size(); ++k) {
    Matrix z = matmul_kernel(net.layers[k].weight, h, &net.layers[k].bias);
    tr.preact.push_back(z.data);
    if (k + 1 < net.layers.size()) {
      for (double& v : z.data) v = v > 0.0 ? v : 0.0;
      tr.postact.push_back(z.data);
      h = std::move(z);
    }
  }
  return tr;
}

inline std::vector<double> predict(const Network& net, const std::vector<double>& x) { return forward(net, x).output(); }

/// Network parameters registered as tape leaves.
struct NetworkVars {
  std::vector<Var> weight;
  std::vector<Var> bias;

  /// W0, b0, W1, b1, ... in layer order.
  std::vector<Var> flat() const {
    std::vector<Var> v;
    for (std::size_t k = 0; k < weight.size(); ++k) {
      v.push_back(weight[k]);
      v.push_back(bias[k]);
    }
    return v;
  }
};

inline NetworkVars register_parameters(Tape& tape, const Network& net) {
  NetworkVars nv;
  for (const auto& l : net.layers) {
    nv.weight.push_back(tape.leaf(l.weight));
    nv.bias.push_back(tape.leaf(l.bias));
  }
  return nv;
}

/// Batched forward pass on the tape; x is n_0 x B (one column per sample).
inline Var forward(const NetworkVars& nv, const Var& x) {
  Var h = x;
  for (std::size_t k = 0; k < nv.weight.size(); ++k) {
    h = affine(nv.weight[k], h, nv.bias[k]);
    if (k + 1 < nv.weight.size()) h = relu(h);
  }
  return h;
}

/// (1/N) sum (f(x_i) - y_i)^2 with predictions and targets both K x N.
inline Var mse_loss(const Var& preds, const Var& targets) {
  if (preds.cols == 0) throw std::invalid_argument("mse_loss: empty batch");
  Var d = sub(preds, targets);
  return mean(mul(d, d));
}

inline Var mse_loss(const NetworkVars& nv, const Matrix& inputs, const Matrix& targets) {
  Tape& t = *nv.weight.front().tape;
  if (inputs.cols == 0) throw std::invalid_argument("mse_loss: empty batch");
  return mse_loss(forward(nv, t.leaf(inputs)), t.leaf(targets));
}

inline void validate_taus(const std::vector<double>& taus) {
  for (std::size_t k = 0; k < taus.size(); ++k) {
    if (!(taus[k] > 0.0 && taus[k] < 1.0)) throw std::invalid_argument("pinball_loss: tau outside (0,1)");
    if (k && !(taus[k] > taus[k - 1])) throw std::invalid_argument("pinball_loss: taus not strictly increasing");
  }
}

/// Quantile (pinball) loss averaged over N samples and K levels.
/// preds is K x N (one column per sample), targets is 1 x N.
inline Var pinball_loss(const Var& preds, const Matrix& targets, const std::vector<double>& taus) {
  validate_taus(taus);
  if (preds.rows != taus.size()) throw ShapeError("pinball_loss: preds have " + std::to_string(preds.rows) +
                                                  " rows but " + std::to_string(taus.size()) + " taus");
  if (targets.rows != 1 || targets.cols != preds.cols)
    throw ShapeError("pinball_loss: targets " + shape_str(targets) + " vs preds " + shape_str(preds.rows, preds.cols));
  if (preds.cols == 0) throw std::invalid_argument("pinball_loss: empty batch");
  Tape& t = *preds.tape;
  Matrix tgt(preds.rows, preds.cols), tau(preds.rows, preds.cols), tau_m1(preds.rows, preds.cols);
  for (std::size_t k = 0; k < preds.rows; ++k)
    for (std::size_t i = 0; i < preds.cols; ++i) {
      tgt(k, i) = targets.data[i];
      tau(k, i) = taus[k];
      tau_m1(k, i) = taus[k] - 1.0;
    }
  Var e = sub(t.leaf(std::move(tgt)), preds);
  return mean(maximum(mul(t.leaf(std::move(tau)), e), mul(t.leaf(std::move(tau_m1)), e)));
}

struct AdamState {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t step = 0;
  std::vector<Matrix> m;  // one per parameter, W0, b0, W1, b1, ...
  std::vector<Matrix> v;
};

/// Bias-corrected Adam update. grads follow NetworkVars::flat() order.
inline void adam_step(Network& net, const std::vector<Matrix>& grads, AdamState& st) {
  if (grads.size() != 2 * net.layers.size())
    throw ShapeError("adam_step: expected " + std::to_string(2 * net.layers.size()) + " gradients, got " +
                     std::to_string(grads.size()));
  std::vector<Matrix*> params;
  for (auto& l : net.layers) {
    params.push_back(&l.weight);
    params.push_back(&l.bias);
  }
  for (std::size_t p = 0; p < params.size(); ++p)
    if (!grads[p].same_shape(*params[p])) throw_shape("adam_step", grads[p], *params[p]);
  if (st.m.empty()) {
    for (auto* p : params) {
      st.m.emplace_back(p->rows, p->cols, 0.0);
      st.v.emplace_back(p->rows, p->cols, 0.0);
    }
  }
  ++st.step;
  const double c1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.step));
  const double c2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.step));
  for (std::size_t p = 0; p < params.size(); ++p) {
    auto& w = params[p]->data;
    auto& m = st.m[p].data;
    auto& v = st.v[p].data;
    const auto& g = grads[p].data;
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = st.beta1 * m[i] + (1.0 - st.beta1) * g[i];
      v[i] = st.beta2 * v[i] + (1.0 - st.beta2) * g[i] * g[i];
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      w[i] -= st.lr * mhat / (std::sqrt(vhat) + st.eps);
    }
  }
}

// ---------------------------------------------------------------------------
// Model files
//
//   tractnet-model 1
//   dims 2 25 25 1
//   meta <key> <value...>        (any number, value runs to end of line)
//   layer <k> <rows> <cols>
//   <rows lines of cols numbers>
//   <one line of rows bias numbers>
//   ...
//   end
//
// Numbers are written with 17 significant digits, which round-trips doubles.
// ---------------------------------------------------------------------------

/// Malformed model file; offset is the byte position of the offending token.
class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t offset, const std::string& what)
      : std::runtime_error("parse error at byte " + std::to_string(offset) + ": " + what), offset_(offset) {}
  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

/// Well-formed file whose contents are inconsistent (e.g. a layer's shape
/// disagrees with the dims header).
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ModelFile {
  Network net;
  std::map<std::string, std::string> meta;
};

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string serialize(const Network& net, const std::map<std::string, std::string>& meta = {}) {
  net.validate();
  std::string s = "tractnet-model 1\ndims";
  for (auto d : net.dims()) s += " " + std::to_string(d);
  s += "\n";
  for (const auto& [k, v] : meta) s += "meta " + k + " " + v + "\n";
  for (std::size_t k = 0; k < net.layers.size(); ++k) {
    const auto& l = net.layers[k];
    s += "layer " + std::to_string(k) + " " + std::to_string(l.weight.rows) + " " + std::to_string(l.weight.cols) + "\n";
    for (std::size_t i = 0; i < l.weight.rows; ++i) {
      for (std::size_t j = 0; j < l.weight.cols; ++j) s += (j ? " " : "") + format_double(l.weight(i, j));
      s += "\n";
    }
    for (std::size_t i = 0; i < l.bias.rows; ++i) s += (i ? " " : "") + format_double(l.bias.data[i]);
    s += "\n";
  }
  s += "end\n";
  return s;
}

namespace detail {

class ModelLexer {
 public:
  explicit ModelLexer(const std::string& text) : s_(text) {}

  std::size_t pos() const { return pos_; }
  bool at_end() {
    skip_ws();
    return pos_ >= s_.size();
  }

  std::string word(const char* what) {
    skip_ws();
    if (pos_ >= s_.size()) throw ParseError(pos_, std::string("unexpected end of file, expected ") + what);
    const std::size_t b = pos_;
    while (pos_ < s_.size() && !std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
    return s_.substr(b, pos_ - b);
  }

  void expect(const std::string& kw) {
    const std::size_t at = peek_pos();
    const std::string w = word(kw.c_str());
    if (w != kw) throw ParseError(at, "expected '" + kw + "', found '" + w + "'");
  }

  std::size_t integer(const char* what) {
    const std::size_t at = peek_pos();
    const std::string w = word(what);
    if (w.empty() || w.find_first_not_of("0123456789") != std::string::npos)
      throw ParseError(at, std::string("expected ") + what + ", found '" + w + "'");
    return static_cast<std::size_t>(std::stoull(w));
  }

  double number(const char* what) {
    const std::size_t at = peek_pos();
    const std::string w = word(what);
    char* end = nullptr;
    errno = 0;
    const double v = std::strtod(w.c_str(), &end);
    if (end != w.c_str() + w.size() || w.empty())
      throw ParseError(at, std::string("expected ") + what + ", found '" + w + "'");
    return v;
  }

  std::string rest_of_line() {
    while (pos_ < s_.size() && (s_[pos_] == ' ' || s_[pos_] == '\t')) ++pos_;
    const std::size_t b = pos_;
    while (pos_ < s_.size() && s_[pos_] != '\n') ++pos_;
    return s_.substr(b, pos_ - b);
  }

  std::size_t peek_pos() {
    skip_ws();
    return pos_;
  }

 private:
  void skip_ws() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }
  const std::string& s_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline ModelFile deserialize(const std::string& text) {
  detail::ModelLexer lx(text);
  lx.expect("tractnet-model");
  const std::size_t vpos = lx.peek_pos();
  if (lx.integer("format version") != 1) throw ParseError(vpos, "unsupported format version");
  lx.expect("dims");
  std::vector<std::size_t> dims;
  ModelFile mf;
  std::string kw;
  std::size_t kwpos = 0;
  while (true) {
    kwpos = lx.peek_pos();
    kw = lx.word("dimension or keyword");
    if (kw.find_first_not_of("0123456789") == std::string::npos) {
      dims.push_back(static_cast<std::size_t>(std::stoull(kw)));
      continue;
    }
    break;
  }
  if (dims.size() < 2) throw ParseError(kwpos, "dims header needs at least two entries");
  for (std::size_t i = 0; i < dims.size(); ++i)
    if (dims[i] == 0) throw ValidationError("dims header: dimension " + std::to_string(i) + " is zero");
  while (kw == "meta") {
    const std::string key = lx.word("meta key");
    mf.meta[key] = lx.rest_of_line();
    kwpos = lx.peek_pos();
    kw = lx.word("keyword");
  }
  for (std::size_t k = 0; k + 1 < dims.size(); ++k) {
    if (kw != "layer") throw ParseError(kwpos, "expected 'layer', found '" + kw + "'");
    const std::size_t idx_pos = lx.peek_pos();
    const std::size_t idx = lx.integer("layer index");
    if (idx != k) throw ParseError(idx_pos, "layer index " + std::to_string(idx) + " out of order, expected " + std::to_string(k));
    const std::size_t rows = lx.integer("row count");
    const std::size_t cols = lx.integer("column count");
    if (rows != dims[k + 1] || cols != dims[k])
      throw ValidationError("layer " + std::to_string(k) + ": shape " + shape_str(rows, cols) +
                            " disagrees with dims header (expected " + shape_str(dims[k + 1], dims[k]) + ")");
    Layer l{Matrix(rows, cols), Matrix(rows, 1)};
    for (double& w : l.weight.data) w = lx.number("weight");
    for (double& b : l.bias.data) b = lx.number("bias");
    mf.net.layers.push_back(std::move(l));
    kwpos = lx.peek_pos();
    kw = lx.word("'layer' or 'end'");
  }
  if (kw != "end") throw ParseError(kwpos, "expected 'end', found '" + kw + "'");
  return mf;
}

inline void save_model(const std::string& path, const Network& net, const std::map<std::string, std::string>& meta = {}) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path + " for writing");
  os << serialize(net, meta);
  if (!os) throw std::runtime_error("write failed: " + path);
}

inline ModelFile load_model(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path);
  std::ostringstream ss;
  ss << is.rdbuf();
  return deserialize(ss.str());
}

}  // namespace tractnet
