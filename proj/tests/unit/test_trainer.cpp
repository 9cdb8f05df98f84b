#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "tractnet/trainer.hpp"

using namespace tractnet;

namespace {

Dataset linear_data(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  Dataset ds;
  ds.x = Matrix(n, 2);
  ds.y = Matrix(n, 1);
  for (std::size_t i = 0; i < n; ++i) {
    ds.x(i, 0) = rng.uniform(-1, 1);
    ds.x(i, 1) = rng.uniform(-1, 1);
    ds.y(i, 0) = 0.7 * ds.x(i, 0) - 0.3 * ds.x(i, 1) + 0.1;
  }
  return ds;
}

TrainConfig small_config() {
  TrainConfig c;
  c.dims = {2, 8, 1};
  c.epochs = 30;
  c.batch_size = 16;
  c.seed = 4;
  c.lr = 1e-2;
  c.box = Box::uniform(2, -1, 1);
  return c;
}

}  // namespace

TEST(Train, FitsLinearFunction) {
  const Dataset ds = linear_data(400, 1);
  const auto [net, rep] = train(small_config(), ds);
  EXPECT_LT(rep.train_loss, 1e-3);
  EXPECT_EQ(rep.epoch_loss.size(), 30u);
  EXPECT_LT(rep.epoch_loss.back(), rep.epoch_loss.front());
  EXPECT_EQ(rep.steps, 30u * 25u);
}

TEST(Train, Deterministic) {
  const Dataset ds = linear_data(200, 2);
  TrainConfig c = small_config();
  c.epochs = 5;
  c.reg.lp = 1e-3;
  c.reg.lp_samples = 2;
  const auto a = train(c, ds);
  const auto b = train(c, ds);
  EXPECT_EQ(a.second.epoch_loss, b.second.epoch_loss);
  for (std::size_t k = 0; k < a.first.layers.size(); ++k) EXPECT_EQ(a.first.layers[k].weight.data, b.first.layers[k].weight.data);
  c.seed = 5;
  EXPECT_NE(train(c, ds).second.epoch_loss, a.second.epoch_loss);
}

TEST(Train, ZeroWeightMatchesBaselineBitExactly) {
  const Dataset ds = linear_data(200, 3);
  TrainConfig c = small_config();
  c.dims = {2, 6, 6, 1};
  c.epochs = 4;
  const auto base = train(c, ds);
  for (int which = 0; which < 6; ++which) {
    TrainConfig z = c;
    z.reg.lp_samples = 3;
    double* w[] = {&z.reg.l1, &z.reg.l2, &z.reg.bw, &z.reg.sn, &z.reg.sn2, &z.reg.lp};
    *w[which] = 0.0;
    z.reg.alpha = 2.0;
    const auto r = train(z, ds);
    EXPECT_EQ(r.second.epoch_loss, base.second.epoch_loss) << which;
    for (std::size_t k = 0; k < r.first.layers.size(); ++k)
      EXPECT_EQ(r.first.layers[k].weight.data, base.first.layers[k].weight.data) << which;
  }
}

TEST(Train, BoundWidthShrinksWidths) {
  const Dataset ds = linear_data(400, 4);
  TrainConfig c = small_config();
  c.dims = {2, 16, 16, 1};
  const auto base = train(c, ds);
  c.reg.bw = 10.0;
  const auto reg = train(c, ds);
  EXPECT_LT(reg.second.mean_width, base.second.mean_width);
  EXPECT_LT(reg.second.epoch_width.back(), reg.second.epoch_width.front());
}

TEST(Train, PinballMode) {
  // constant target 1: the tau-quantile is 1 for every tau
  Dataset ds;
  ds.x = Matrix(100, 1);
  ds.y = Matrix(100, 1);
  for (std::size_t i = 0; i < 100; ++i) {
    ds.x(i, 0) = static_cast<double>(i % 2);
    ds.y(i, 0) = 1.0;
  }
  TrainConfig c;
  c.dims = {1, 4, 3};
  c.epochs = 400;
  c.batch_size = 50;
  c.lr = 1e-2;
  c.loss = DataLoss::Pinball;
  c.taus = {0.1, 0.5, 0.9};
  c.box = Box::uniform(1, 0, 1);
  const auto [net, rep] = train(c, ds);
  EXPECT_LT(rep.train_loss, 1e-2);
  for (double x : {0.0, 1.0})
    for (double v : predict(net, {x})) EXPECT_NEAR(v, 1.0, 0.05);
}

TEST(Evaluate, HandExamples) {
  Network net;
  net.layers.push_back({Matrix::from_rows({{2}}), Matrix::column({1})});
  Dataset ds;
  ds.x = Matrix::from_rows({{0}, {1}});
  ds.y = Matrix::from_rows({{1}, {4}});
  EXPECT_DOUBLE_EQ(evaluate(net, ds, DataLoss::Mse), 0.5);  // errors 0 and 1
  // residuals y - f: 0 and 1; tau 0.25 -> 0.25 per unit under-prediction
  EXPECT_DOUBLE_EQ(evaluate(net, ds, DataLoss::Pinball, {0.25}), 0.125);
  EXPECT_DOUBLE_EQ(pinball_of(Matrix::from_rows({{2, 0}}), Matrix::from_rows({{1}}), {0.5, 0.9}), (0.5 + 0.9) / 2);
  EXPECT_THROW(evaluate(net, ds, DataLoss::Pinball, {}), std::invalid_argument);
}

TEST(Train, NonFiniteLossAborts) {
  Dataset ds = linear_data(64, 5);
  ds.y(10, 0) = std::numeric_limits<double>::infinity();
  TrainConfig c = small_config();
  try {
    train(c, ds);
    FAIL() << "expected NonFiniteLoss";
  } catch (const NonFiniteLoss& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("epoch 0"), std::string::npos) << msg;
    EXPECT_NE(msg.find("'mse'"), std::string::npos) << msg;
  }
}

TEST(Train, ConfigValidation) {
  const Dataset ds = linear_data(20, 6);
  TrainConfig c = small_config();
  c.dims = {3, 4, 1};
  EXPECT_THROW(train(c, ds), std::invalid_argument);
  c = small_config();
  c.epochs = 0;
  EXPECT_THROW(train(c, ds), std::invalid_argument);
  c = small_config();
  c.reg.bw = -1;
  EXPECT_THROW(train(c, ds), std::invalid_argument);
  c = small_config();
  c.box = Box::uniform(1, 0, 1);
  EXPECT_THROW(train(c, ds), std::invalid_argument);
}

TEST(Evaluate, TrueQuantilesBeatTheMeanPredictor) {
  const QuantileData q = synth_quantile_data(5000, 6, 5, 8);
  Matrix truth(5000, 5), mean(5000, 5);
  for (std::size_t i = 0; i < 5000; ++i) {
    const auto x = q.data.input(i);
    for (std::size_t k = 0; k < 5; ++k) {
      truth(i, k) = q.true_quantiles(i, k);
      mean(i, k) = synth_mean(x);
    }
  }
  EXPECT_LT(pinball_of(truth, q.data.y, q.taus), pinball_of(mean, q.data.y, q.taus));
}
