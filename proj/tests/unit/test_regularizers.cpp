#include <gtest/gtest.h>

#include <cmath>

#include "tractnet/gradcheck.hpp"
#include "tractnet/regularizers.hpp"

using namespace tractnet;

namespace {

// 1 -> 1 -> 1 net whose hidden pre-activation over [-1, 1] is [b - |w|, b + |w|].
Network single_hidden(double w, double b) {
  Network n;
  n.layers.push_back({Matrix::from_rows({{w}}), Matrix::column({b})});
  n.layers.push_back({Matrix::from_rows({{1}}), Matrix::column({0})});
  return n;
}

const Box kUnit{{-1}, {1}};

double reg_value(Var (*f)(const TapeBounds&), const Network& net, const Box& box) {
  Tape t;
  const auto nv = register_parameters(t, net);
  return t.scalar_value(f(propagate_ibp(nv, box)));
}

Network example_221() {
  Network n;
  n.layers.push_back({Matrix::from_rows({{1, -1}, {0.5, 2}}), Matrix::column({0.5, -1})});
  n.layers.push_back({Matrix::from_rows({{1, -1}}), Matrix::column({0.25})});
  return n;
}

}  // namespace

TEST(Regularizers, ShrinkageExamples) {
  Network net;
  net.layers.push_back({Matrix::from_rows({{1, -2}}), Matrix::column({3})});
  Tape t;
  const auto nv = register_parameters(t, net);
  const Var l1 = reg_l1(nv), l2 = reg_l2(nv);
  EXPECT_EQ(t.scalar_value(l1), 6.0);
  EXPECT_EQ(t.scalar_value(l2), 14.0);
  const auto g1 = t.gradient(l1, nv.flat());
  EXPECT_EQ(g1[0].data[1], -1.0);
  const auto g2 = t.gradient(l2, nv.flat());
  EXPECT_EQ(g2[0].data[1], -4.0);
  EXPECT_EQ(g2[1].data[0], 6.0);

  Network zero;
  zero.layers.push_back({Matrix(3, 2), Matrix(3, 1)});
  zero.layers.push_back({Matrix(1, 3), Matrix(1, 1)});
  Tape z;
  const auto zv = register_parameters(z, zero);
  EXPECT_EQ(z.scalar_value(reg_l1(zv)), 0.0);
  EXPECT_EQ(z.scalar_value(reg_l2(zv)), 0.0);
}

TEST(Regularizers, BoundWidthExamples) {
  // every hidden neuron has width 2
  Network net;
  net.layers.push_back({Matrix::from_rows({{1}, {-1}, {1}}), Matrix::column({0.3, -2, 5})});
  net.layers.push_back({Matrix::from_rows({{1, 1, 1}}), Matrix::column({0})});
  EXPECT_EQ(reg_value(reg_bw, net, kUnit), 2.0);

  Network zero;
  zero.layers.push_back({Matrix(2, 1), Matrix::column({1, -1})});
  zero.layers.push_back({Matrix(1, 2), Matrix(1, 1)});
  EXPECT_EQ(reg_value(reg_bw, zero, kUnit), 0.0);
  EXPECT_EQ(reg_value(reg_sn, zero, kUnit), 0.0);

  // width recursion: Delta_1 = |W1| (u0 - l0), only hidden layers averaged
  const Network e = example_221();
  const Box box{{-1, 0}, {1, 2}};
  const double d0 = 1 * 2 + 1 * 2, d1 = 0.5 * 2 + 2 * 2;
  EXPECT_NEAR(reg_value(reg_bw, e, box), (d0 + d1) / 2, 1e-12);
  const auto p = propagate_ibp(e, box);
  EXPECT_NEAR(reg_value(reg_bw, e, box), (p.upper[0][0] - p.lower[0][0] + p.upper[0][1] - p.lower[0][1]) / 2, 1e-12);
}

TEST(Regularizers, StabilityExamples) {
  EXPECT_EQ(reg_value(reg_sn, single_hidden(2, -1), kUnit), 1.0);      // L = -3, U = 1
  EXPECT_EQ(reg_value(reg_sn, single_hidden(0.75, 1.25), kUnit), 0.0);  // L = 0.5, U = 2
  EXPECT_EQ(reg_value(reg_sn, single_hidden(0.95, -1.05), kUnit), 0.0); // L = -2, U = -0.1

  EXPECT_NEAR(reg_value(reg_sn2, single_hidden(0.5, 1.5), kUnit), -std::tanh(3.0), 1e-15);  // L = 1, U = 2
  EXPECT_NEAR(reg_value(reg_sn2, single_hidden(2, 0), kUnit), std::tanh(3.0), 1e-15);       // L = -2, U = 2
  EXPECT_NEAR(reg_value(reg_sn2, single_hidden(0, 0), kUnit), -std::tanh(1.0), 1e-15);      // L = U = 0
  EXPECT_NEAR(std::tanh(3.0), 0.9951, 1e-4);
  EXPECT_NEAR(std::tanh(1.0), 0.7616, 1e-4);
}

TEST(Regularizers, AffineNetHasZeroBoundTerms) {
  Network net;
  net.layers.push_back({Matrix::from_rows({{1, 2}}), Matrix::column({0})});
  EXPECT_EQ(reg_value(reg_bw, net, Box::uniform(2, -1, 1)), 0.0);
  EXPECT_EQ(reg_value(reg_sn2, net, Box::uniform(2, -1, 1)), 0.0);
}

TEST(Regularizers, StabilityIsAtMostHalfWidthPerUnstableNeuron) {
  Rng rng(4);
  for (int t = 0; t < 200; ++t) {
    auto [net, box] = random_instance(rng);
    const auto p = propagate_ibp(net, box);
    for (const auto& id : p.unstable) {
      const double l = p.lower[id.layer][id.neuron], u = p.upper[id.layer][id.neuron];
      EXPECT_LE(std::min(-l, u), (u - l) / 2 + 1e-15);
    }
  }
}

TEST(Regularizers, FiniteDifferenceGradients) {
  Rng rng(11);
  for (RegKind k : kAllRegKinds) {
    FdReport rep;
    for (int t = 0; t < 15; ++t) {
      auto [net, box] = random_instance(rng);
      fd_check(k, net, box, rep);
    }
    EXPECT_TRUE(rep.failures.empty()) << reg_name(k) << " param " << rep.failures.front().parameter << " fd "
                                      << rep.failures.front().fd << " analytic " << rep.failures.front().analytic;
    EXPECT_GT(rep.checked, 10 * rep.skipped_kinks) << reg_name(k);
  }
}

TEST(Regularizers, TamperedGradientIsCaught) {
  Rng rng(12);
  FdReport rep;
  for (int t = 0; t < 10; ++t) {
    auto [net, box] = random_instance(rng);
    fd_check(RegKind::SN, net, box, rep, 1e-5, 1e-4, true);
  }
  ASSERT_FALSE(rep.failures.empty());
  EXPECT_EQ(rep.failures.front().regularizer, "reg_sn");
  FdReport clean;
  auto [net, box] = random_instance(rng);
  fd_check(RegKind::BW, net, box, clean, 1e-5, 1e-4, true);  // only reg_sn is tampered
  EXPECT_TRUE(clean.failures.empty());
}

TEST(Regularizers, DualEnvelopeCheck) {
  Rng rng(13);
  const auto rep = dual_envelope_check(rng, 60);
  EXPECT_TRUE(rep.failures.empty());
  EXPECT_GE(rep.cases, 60u);
  EXPECT_GE(rep.nondegenerate_fraction(), 0.8) << rep.skipped_degenerate << " of " << rep.probes;
}

TEST(RegLp, AffineAndStableNetsHaveZeroGap) {
  Rng omega(1);
  RegularizerConfig cfg;
  cfg.lp = 1;
  cfg.direction = GapDirection::Both;
  Network affine;
  affine.layers.push_back({Matrix::from_rows({{1, -2}}), Matrix::column({0.5})});
  {
    Tape t;
    const auto nv = register_parameters(t, affine);
    LpGapReport rep;
    const Var r = reg_lp(nv, affine, propagate_ibp(affine, Box::uniform(2, -1, 1)),
                         Matrix::from_rows({{0.3, -0.2}, {0.1, 0.9}}), cfg, omega, &rep);
    EXPECT_EQ(t.scalar_value(r), 0.0);
  }
  // tiny box: hidden layer fully stable
  Rng rng(2);
  Network net = make_network({2, 6, 1}, rng);
  const Box box = Box::uniform(2, 0.3, 0.3001);
  const auto prof = propagate_ibp(net, box);
  ASSERT_TRUE(prof.unstable.empty());
  Tape t;
  const auto nv = register_parameters(t, net);
  EXPECT_NEAR(t.scalar_value(reg_lp(nv, net, prof, Matrix::column({0.3, 0.30005}), cfg, omega)), 0.0, 1e-12);
}

TEST(RegLp, OneNeuronGapAgainstHandOracle) {
  // z = x in [-1, 1], f = relu(z). At x = 0.5 the relaxed neuron satisfies
  // x̂ >= z, x̂ <= U a, x̂ <= z - L (1 - a). min over a of max(z, 0) is 0.5;
  // max of min(a, z + 1 - a) peaks at a = (z + 1)/2, giving 0.75.
  const Network net = single_hidden(1, 0);
  double oracle_max = -kInf;
  for (int i = 0; i <= 1000; ++i) {
    const double a = i / 1000.0;
    oracle_max = std::max(oracle_max, std::min(a, 0.5 + 1 - a));
  }
  const auto prof = propagate_ibp(net, kUnit);
  for (GapDirection d : {GapDirection::Min, GapDirection::Max, GapDirection::Both}) {
    RegularizerConfig cfg;
    cfg.lp = 1;
    cfg.direction = d;
    Rng omega(1);
    Tape t;
    const auto nv = register_parameters(t, net);
    LpGapReport rep;
    const double v = t.scalar_value(reg_lp(nv, net, prof, Matrix::column({0.5}), cfg, omega, &rep));
    const double expect = d == GapDirection::Min ? 0.0 : oracle_max - 0.5;
    EXPECT_NEAR(v, expect, 1e-12) << direction_name(d);
    EXPECT_EQ(v, rep.mean_gap);
  }
}

TEST(RegLp, StraightThroughForwardAndBackward) {
  Rng rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    Network net = make_network({2, 5, 4, 1}, rng);
    const Box box = Box::uniform(2, -1, 1);
    Matrix xs(2, 3);
    for (double& v : xs.data) v = rng.uniform(-1, 1);
    RegularizerConfig cfg;
    cfg.lp = 1;
    cfg.lp_samples = 3;
    cfg.direction = trial % 2 ? GapDirection::Both : GapDirection::Min;
    Tape t;
    const auto nv = register_parameters(t, net);
    const auto prof = propagate_ibp(net, box);
    Rng omega(3);
    LpGapReport rep;
    const Var r = reg_lp(nv, net, prof, xs, cfg, omega, &rep);
    ASSERT_EQ(rep.samples.size(), 3u);

    // forward: mean of (f - V) with the tape's own summation order
    double s = 0.0;
    for (std::size_t i = 0; i < 3; ++i) {
      const auto& g = rep.samples[i];
      double gi = g.f - g.v_min;
      if (cfg.direction == GapDirection::Both) gi = gi + (g.v_max - g.f);
      s = i == 0 ? gi : s + gi;
      EXPECT_GE(g.f - g.v_min, -1e-9);
    }
    EXPECT_EQ(t.scalar_value(r), s * (1.0 / 3.0));
    EXPECT_EQ(t.scalar_value(r), rep.mean_gap);

    // backward: (1/n) sum_i [df/dθ - dV/dθ] with dV/db = nu, dV/dW = nu x̂*'
    std::vector<Matrix> expect;
    for (const auto& l : net.layers) {
      expect.push_back(Matrix(l.weight.rows, l.weight.cols));
      expect.push_back(Matrix(l.bias.rows, 1));
    }
    for (const auto& g : rep.samples) {
      Tape ft;
      const auto fv = register_parameters(ft, net);
      const auto gf = ft.gradient(forward(fv, ft.leaf(Matrix::column(g.x))), fv.flat());
      const int n_dirs = cfg.direction == GapDirection::Both ? 2 : 1;
      for (std::size_t p = 0; p < gf.size(); ++p) axpy(expect[p], n_dirs == 2 ? 0.0 : 1.0 / 3.0, gf[p]);
      auto sub_dual = [&](const std::vector<std::vector<double>>& nu, const std::vector<std::vector<double>>& xh,
                          double sign) {
        for (std::size_t k = 0; k < nu.size(); ++k)
          for (std::size_t j = 0; j < nu[k].size(); ++j) {
            expect[2 * k + 1].data[j] += sign * nu[k][j] / 3.0;
            for (std::size_t c = 0; c < xh[k].size(); ++c)
              expect[2 * k](j, c) += sign * nu[k][j] * xh[k][c] / 3.0;
          }
      };
      sub_dual(g.nu_min, g.xhat_min, -1.0);
      if (n_dirs == 2) sub_dual(g.nu_max, g.xhat_max, 1.0);
    }
    const auto got = t.gradient(r, nv.flat());
    for (std::size_t p = 0; p < got.size(); ++p)
      for (std::size_t i = 0; i < got[p].data.size(); ++i)
        EXPECT_NEAR(got[p].data[i], expect[p].data[i], 1e-12) << "trial " << trial << " param " << p << "/" << i;
  }
}

TEST(RegLp, MultiOutputProjection) {
  Rng rng(5);
  for (Projection mode : {Projection::Sphere, Projection::Nonnegative}) {
    Rng omega(9);
    for (int i = 0; i < 50; ++i) {
      const auto w = sample_projection(4, mode, omega);
      double n = 0;
      for (double v : w) {
        n += v * v;
        if (mode == Projection::Nonnegative) {
          EXPECT_GE(v, 0.0);
        }
      }
      EXPECT_NEAR(n, 1.0, 1e-12);
    }
  }
  Network net = make_network({2, 6, 3}, rng);
  RegularizerConfig cfg;
  cfg.lp = 1;
  cfg.lp_samples = 2;
  auto run = [&](std::uint64_t seed) {
    Rng omega(seed);
    Tape t;
    const auto nv = register_parameters(t, net);
    LpGapReport rep;
    const double v = t.scalar_value(reg_lp(nv, net, propagate_ibp(net, Box::uniform(2, -1, 1)),
                                           Matrix::from_rows({{0.2, -0.5}, {0.4, 0.1}}), cfg, omega, &rep));
    EXPECT_NE(rep.samples[0].omega, rep.samples[1].omega);  // fresh direction per sample
    EXPECT_GE(v, -1e-9);
    return v;
  };
  EXPECT_EQ(run(4), run(4));
}

TEST(TotalLoss, ZeroWeightsEqualDataLoss) {
  Rng rng(6);
  Network net = make_network({2, 5, 1}, rng);
  Matrix x(2, 4), y(1, 4);
  for (double& v : x.data) v = rng.uniform(-1, 1);
  for (double& v : y.data) v = rng.uniform(-1, 1);
  const Box box = Box::uniform(2, -1, 1);
  Tape a;
  const auto na = register_parameters(a, net);
  const double bare = a.scalar_value(mse_loss(na, x, y));
  Tape b;
  const auto nb = register_parameters(b, net);
  Rng omega(1);
  const auto lb = total_loss(nb, net, x, y, box, RegularizerConfig{}, omega);
  EXPECT_EQ(b.scalar_value(lb.total), bare);
  EXPECT_EQ(lb.terms.size(), 1u);
}

TEST(TotalLoss, CombinedGradientIsSumOfComponents) {
  Rng rng(7);
  Network net = make_network({2, 4, 4, 1}, rng);
  Matrix x(2, 3), y(1, 3);
  for (double& v : x.data) v = rng.uniform(-1, 1);
  for (double& v : y.data) v = rng.uniform(-1, 1);
  const Box box = Box::uniform(2, -1, 1);
  RegularizerConfig cfg;
  cfg.lp = 1e-3;
  cfg.alpha = 1.0;
  Tape t;
  const auto nv = register_parameters(t, net);
  Rng omega(2);
  const auto loss = total_loss(nv, net, x, y, box, cfg, omega);
  ASSERT_EQ(loss.terms.size(), 3u);
  EXPECT_EQ(loss.terms[1].name, "bw");
  EXPECT_EQ(loss.terms[1].weight, 1e-3);
  const auto g = t.gradient(loss.total, nv.flat());
  std::vector<Matrix> parts;
  for (const auto& term : loss.terms) {
    const auto gt = t.gradient(term.value, nv.flat());
    for (std::size_t p = 0; p < gt.size(); ++p) {
      if (parts.size() <= p) parts.push_back(Matrix(gt[p].rows, gt[p].cols));
      axpy(parts[p], term.weight, gt[p]);
    }
  }
  for (std::size_t p = 0; p < g.size(); ++p)
    for (std::size_t i = 0; i < g[p].data.size(); ++i) EXPECT_NEAR(g[p].data[i], parts[p].data[i], 1e-14);
}

TEST(TotalLoss, ConfigValidation) {
  RegularizerConfig cfg;
  cfg.bw = -1;
  EXPECT_THROW(cfg.validate(4), std::invalid_argument);
  cfg.bw = std::nan("");
  EXPECT_THROW(cfg.validate(4), std::invalid_argument);
  cfg.bw = 0;
  cfg.lp = 1;
  cfg.lp_samples = 5;
  EXPECT_THROW(cfg.validate(4), std::invalid_argument);
  cfg.lp_samples = 0;
  EXPECT_THROW(cfg.validate(4), std::invalid_argument);
}
