// Train a small peaks surrogate with and without bound-width regularization,
// then minimize each network as a MILP.

#include <cstdio>

#include "tractnet/tractnet.hpp"

using namespace tractnet;

int main() {
  const Benchmark peaks_fn = benchmark_by_name("peaks");
  const Split data = split_normalize(make_benchmark_dataset(peaks_fn, 10000, 1), 0.25, 1);
  const Box box = normalize_box(peaks_fn.box, data.stats.x);

  for (double bw : {0.0, 1e-2}) {
    TrainConfig cfg;
    cfg.dims = {2, 16, 16, 1};
    cfg.epochs = 60;
    cfg.seed = 7;
    cfg.box = box;
    cfg.reg.bw = bw;
    auto [net, rep] = train(cfg, data.train, &data.test);

    MilpSpec spec;
    spec.net = net;
    spec.box = box;
    spec.limits.time_limit_s = 30;
    const MilpResult r = solve_milp(spec, propagate_ibp(net, box));

    // back to original units
    const Network orig = fold_normalization(net, data.stats);
    std::vector<double> x = r.argopt;
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = x[i] * data.stats.x.scale[i] + data.stats.x.mean[i];
    std::printf("bw=%g  test mse %.4f  unstable %zu  root gap %.4f  nodes %zu  %s\n", bw, rep.test_loss, rep.unstable,
                r.root_lp_gap, r.nodes, status_name(r.status));
    std::printf("        argmin (%.3f, %.3f)  surrogate %.3f  true peaks %.3f\n", x[0], x[1], predict(orig, x)[0],
                peaks_fn.fn(x));
  }
}
