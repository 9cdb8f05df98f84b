#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "tractnet/autodiff.hpp"
#include "tractnet/benchmarks.hpp"
#include "tractnet/ibp.hpp"
#include "tractnet/network.hpp"
#include "tractnet/regularizers.hpp"
#include "tractnet/rng.hpp"

namespace tractnet {

struct TrainConfig {
  std::vector<std::size_t> dims;
  std::size_t epochs = 50;
  std::size_t batch_size = 128;
  std::uint64_t seed = 0;
  RegularizerConfig reg;
  DataLoss loss = DataLoss::Mse;
  std::vector<double> taus;  // pinball mode: one per output
  Box box;                   // input domain for the bounds, in the units the network sees
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;

  void validate(const Dataset& train) const {
    if (dims.size() < 2) throw std::invalid_argument("train: architecture needs at least input and output sizes");
    for (std::size_t d : dims)
      if (d == 0) throw std::invalid_argument("train: layer sizes must be positive");
    if (epochs == 0) throw std::invalid_argument("train: epochs must be >= 1");
    if (batch_size == 0) throw std::invalid_argument("train: batch_size must be >= 1");
    if (!(lr > 0.0) || !(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0) || !(adam_eps > 0.0))
      throw std::invalid_argument("train: invalid optimizer hyperparameters");
    if (train.size() == 0) throw std::invalid_argument("train: empty training set");
    if (dims.front() != train.input_dim())
      throw std::invalid_argument("train: architecture input " + std::to_string(dims.front()) + " vs data input " +
                                  std::to_string(train.input_dim()));
    if (loss == DataLoss::Mse && dims.back() != train.output_dim())
      throw std::invalid_argument("train: architecture output " + std::to_string(dims.back()) + " vs data output " +
                                  std::to_string(train.output_dim()));
    if (loss == DataLoss::Pinball) {
      validate_taus(taus);
      if (taus.size() != dims.back()) throw std::invalid_argument("train: pinball mode needs one tau per output");
      if (train.output_dim() != 1) throw std::invalid_argument("train: pinball mode needs scalar targets");
    }
    if (box.dim() != dims.front()) throw std::invalid_argument("train: box dimension does not match the input size");
    box.validate();
    reg.validate(std::min(batch_size, train.size()));
  }
};

struct TrainReport {
  std::vector<double> epoch_loss;   // mean total loss over the steps of each epoch
  std::vector<double> epoch_width;  // mean hidden bound width after each epoch
  double train_loss = 0.0;
  double test_loss = 0.0;
  std::size_t unstable = 0;
  double mean_width = 0.0;
  double wall_time_s = 0.0;
  std::uint64_t seed = 0;
  std::size_t steps = 0;
};

/// Mean data loss of the network on a dataset (MSE or pinball).
inline double evaluate(const Network& net, const Dataset& ds, DataLoss mode, const std::vector<double>& taus = {}) {
  if (ds.size() == 0) throw std::invalid_argument("evaluate: empty dataset");
  if (ds.input_dim() != net.input_dim()) throw ShapeError("evaluate: dataset input width does not match the network");
  if (mode == DataLoss::Mse && ds.output_dim() != net.output_dim())
    throw ShapeError("evaluate: dataset has " + std::to_string(ds.output_dim()) + " targets, network " +
                     std::to_string(net.output_dim()) + " outputs");
  if (mode == DataLoss::Pinball) {
    validate_taus(taus);
    if (ds.output_dim() != 1 || taus.size() != net.output_dim())
      throw ShapeError("evaluate: pinball mode needs scalar targets and one tau per output");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto f = predict(net, ds.input(i));
    for (std::size_t k = 0; k < f.size(); ++k) {
      if (mode == DataLoss::Mse) {
        const double d = f[k] - ds.y(i, k);
        total += d * d;
      } else {
        const double e = ds.y(i, 0) - f[k];
        total += std::max(taus[k] * e, (taus[k] - 1.0) * e);
      }
    }
  }
  return total / static_cast<double>(ds.size() * net.output_dim());
}

/// Pinball loss of given predictions (N x K, one row per sample).
inline double pinball_of(const Matrix& preds, const Matrix& targets, const std::vector<double>& taus) {
  double total = 0.0;
  for (std::size_t i = 0; i < preds.rows; ++i)
    for (std::size_t k = 0; k < preds.cols; ++k) {
      const double e = targets(i, 0) - preds(i, k);
      total += std::max(taus[k] * e, (taus[k] - 1.0) * e);
    }
  return total / static_cast<double>(preds.rows * preds.cols);
}

class NonFiniteLoss : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Mini-batch Adam on data loss + regularizers. Three independent streams come
/// from the seed: initialization, batch shuffling, and LP projections.
inline std::pair<Network, TrainReport> train(const TrainConfig& cfg, const Dataset& train_set,
                                             const Dataset* test_set = nullptr) {
  cfg.validate(train_set);
  const auto t0 = std::chrono::steady_clock::now();
  Rng init(cfg.seed);
  Network net = make_network(cfg.dims, init);
  Rng shuffle = init.split();
  Rng omega = init.split();
  AdamState adam;
  adam.lr = cfg.lr;
  adam.beta1 = cfg.beta1;
  adam.beta2 = cfg.beta2;
  adam.eps = cfg.adam_eps;

  TrainReport rep;
  rep.seed = cfg.seed;
  std::vector<std::size_t> idx(train_set.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  Matrix bx, by;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    shuffle.shuffle(idx);
    double loss_sum = 0.0;
    std::size_t steps = 0;
    for (std::size_t from = 0; from < idx.size(); from += cfg.batch_size) {
      const std::size_t to = std::min(idx.size(), from + cfg.batch_size);
      train_set.batch(idx, from, to, bx, by);
      Tape tape;
      const NetworkVars nv = register_parameters(tape, net);
      RegularizerConfig reg = cfg.reg;
      reg.lp_samples = std::min(reg.lp_samples, to - from);  // short final batch
      const LossBreakdown loss = total_loss(nv, net, bx, by, cfg.box, reg, omega, cfg.loss, cfg.taus);
      const double value = tape.scalar_value(loss.total);
      if (!std::isfinite(value)) {
        std::string culprit = "total";
        for (const auto& term : loss.terms)
          if (!std::isfinite(tape.scalar_value(term.value))) {
            culprit = term.name;
            break;
          }
        throw NonFiniteLoss("non-finite loss at epoch " + std::to_string(epoch) + " step " + std::to_string(steps) +
                            " (global step " + std::to_string(rep.steps) + "), term '" + culprit + "'");
      }
      adam_step(net, tape.gradient(loss.total, nv.flat()), adam);
      loss_sum += value;
      ++steps;
      ++rep.steps;
    }
    rep.epoch_loss.push_back(loss_sum / static_cast<double>(steps));
    rep.epoch_width.push_back(propagate_ibp(net, cfg.box).mean_hidden_width());
  }
  const BoundsProfile prof = propagate_ibp(net, cfg.box);
  rep.unstable = unstable_count(prof);
  rep.mean_width = prof.mean_hidden_width();
  rep.train_loss = evaluate(net, train_set, cfg.loss, cfg.taus);
  if (test_set) rep.test_loss = evaluate(net, *test_set, cfg.loss, cfg.taus);
  rep.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {std::move(net), std::move(rep)};
}

}  // namespace tractnet
