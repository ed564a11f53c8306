#include "tsrcan/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>

namespace tsr {
namespace {

using Inputs = std::vector<Tensor64>;
using OpFn = std::function<Tensor64(const Inputs&)>;

Tensor64 uniform(Shape s, std::mt19937_64& rng, double lo = -1, double hi = 1) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor64 t(std::move(s));
  for (auto& v : t.values()) v = u(rng);
  return t;
}

// Distinct magnitudes in [0.1, 1] with random signs: no value near zero and no
// two values within 1e-4 of each other (for tensors up to a few thousand elements).
Tensor64 separated(Shape s, std::mt19937_64& rng, double scale = 1.0) {
  const std::size_t n = tsr::numel(s);
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double mag = 0.1 + 0.9 * static_cast<double>(i) / static_cast<double>(n);
    v[i] = scale * (i % 2 ? -mag : mag);
  }
  std::shuffle(v.begin(), v.end(), rng);
  return Tensor64(std::move(s), std::move(v));
}

double check_op(Inputs inputs, const OpFn& op, std::mt19937_64& rng, std::size_t* coords) {
  for (auto& t : inputs) {
    t.set_requires_grad(true);
    t.zero_grad();
  }
  const Tensor64 out = op(inputs);
  const Tensor64 r = uniform(out.shape(), rng);
  backward(sum(mul(out, r)));

  auto objective = [&](const Inputs& in) {
    NoGradGuard ng;
    const Tensor64 y = op(in);
    double s = 0;
    for (std::size_t i = 0; i < y.numel(); ++i) s += y[i] * r[i];
    return s;
  };
  constexpr double h = 1e-6;
  double worst = 0;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    for (std::size_t i = 0; i < inputs[k].numel(); ++i) {
      Inputs probe;
      for (const auto& t : inputs) probe.push_back(t.clone());
      const double keep = probe[k][i];
      probe[k][i] = keep + h;
      const double up = objective(probe);
      probe[k][i] = keep - h;
      const double down = objective(probe);
      const double numeric = (up - down) / (2 * h);
      worst = std::max(worst, relative_error(inputs[k].grad()[i], numeric, 1e-6));
      ++*coords;
    }
  }
  return worst;
}

}  // namespace

std::vector<OpGradCheck> check_op_gradients(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<OpGradCheck> out;
  auto run = [&](const std::string& name, Inputs in, const OpFn& op) {
    OpGradCheck c{name, 0, 0};
    c.max_rel_err = check_op(std::move(in), op, rng, &c.coordinates);
    out.push_back(c);
  };

  run("conv2d", {uniform({2, 3, 5, 6}, rng), uniform({4, 3, 3, 3}, rng), uniform({4}, rng)},
      [](const Inputs& in) { return conv2d(in[0], in[1], in[2], 1, 1); });
  run("conv2d_stride2", {uniform({1, 3, 9, 8}, rng), uniform({2, 3, 7, 7}, rng), uniform({2}, rng)},
      [](const Inputs& in) { return conv2d(in[0], in[1], in[2], 2, 3); });
  run("conv_transpose2d", {uniform({1, 2, 3, 3}, rng), uniform({2, 3, 8, 8}, rng), uniform({3}, rng)},
      [](const Inputs& in) { return conv_transpose2d(in[0], in[1], in[2], 4, 2); });
  run("maxpool2d", {separated({1, 2, 6, 6}, rng)},
      [](const Inputs& in) { return maxpool2d(in[0], 3, 2, 1); });
  {
    Tensor64 mean(Shape{3}), var(Shape{3}, 1.0);
    run("batchnorm2d", {uniform({2, 3, 3, 4}, rng), uniform({3}, rng, 0.5, 1.5), uniform({3}, rng)},
        [mean, var](const Inputs& in) mutable {
          return batchnorm2d(in[0], in[1], in[2], mean, var, NormMode::Train);
        });
  }
  run("relu", {separated({2, 3, 4, 4}, rng)}, [](const Inputs& in) { return relu(in[0]); });
  run("sigmoid", {uniform({2, 3, 4}, rng, -3, 3)}, [](const Inputs& in) { return sigmoid(in[0]); });
  run("add", {uniform({2, 3, 4}, rng), uniform({2, 3, 4}, rng)},
      [](const Inputs& in) { return add(in[0], in[1]); });
  run("mul", {uniform({2, 3, 4}, rng), uniform({2, 3, 4}, rng)},
      [](const Inputs& in) { return mul(in[0], in[1]); });
  run("scale_channels", {uniform({2, 3, 4, 5}, rng), uniform({2, 3, 1, 1}, rng)},
      [](const Inputs& in) { return scale_channels(in[0], in[1]); });
  run("global_avg_pool", {uniform({2, 3, 4, 5}, rng)},
      [](const Inputs& in) { return global_avg_pool(in[0]); });
  run("concat_channels", {uniform({2, 3, 2, 2}, rng), uniform({2, 1, 2, 2}, rng)},
      [](const Inputs& in) { return concat_channels(in[0], in[1]); });
  run("slice_channels", {uniform({2, 5, 2, 3}, rng)},
      [](const Inputs& in) { return slice_channels(in[0], 1, 4); });
  run("depth_to_space", {uniform({1, 8, 2, 3}, rng)},
      [](const Inputs& in) { return depth_to_space(in[0], 2); });
  run("sum", {uniform({3, 4}, rng)}, [](const Inputs& in) { return sum(in[0]); });
  // Differences of magnitude 0.2..4 in steps that avoid |d| = 1.
  run("smooth_l1", {separated({2, 3, 4}, rng, 3.7), Tensor64(Shape{2, 3, 4}, 0.0)},
      [](const Inputs& in) { return smooth_l1(in[0], in[1]); });
  return out;
}

ModelGradCheck check_model_gradients(const ModelConfig& cfg, std::uint64_t seed, std::size_t height,
                                     std::size_t width, std::size_t coordinates, double step) {
  std::mt19937_64 rng(seed);
  ParamStore store = build_model(cfg, seed);
  const ParamStore64 frozen = store.cast<double>();

  const auto [ih, iw] = input_size_for(cfg, height, width);
  std::uniform_real_distribution<double> u(0, 1);
  Tensor x(Shape{1, static_cast<std::size_t>(cfg.in_channels), ih, iw});
  for (auto& v : x.values()) v = static_cast<float>(u(rng));
  Tensor target(Shape{1, static_cast<std::size_t>(cfg.out_channels), height, width});
  for (auto& v : target.values()) v = static_cast<float>(u(rng));
  const Tensor64 x64 = x.cast<double>(), target64 = target.cast<double>();

  store.zero_grad();
  backward(model_loss(tsrcan_forward(x, store, cfg, NormMode::Train), target, cfg));

  std::vector<std::size_t> trainable;
  double grad_scale = 0;
  for (std::size_t i = 0; i < store.entries().size(); ++i) {
    const auto& e = store.entries()[i];
    if (!e.trainable) continue;
    trainable.push_back(i);
    for (float g : e.tensor.grad()) grad_scale = std::max(grad_scale, std::abs(static_cast<double>(g)));
  }
  const double floor = std::max(1e-3 * grad_scale, 1e-12);

  auto loss64 = [&](const std::string& name, std::size_t idx, double value) {
    NoGradGuard ng;
    ParamStore64 probe = frozen.clone();
    probe.get(name)[idx] = value;
    return model_loss(tsrcan_forward(x64, probe, cfg, NormMode::Train), target64, cfg).item();
  };

  ModelGradCheck report;
  std::uniform_int_distribution<std::size_t> pick_param(0, trainable.size() - 1);
  for (std::size_t n = 0; n < coordinates; ++n) {
    const auto& e = store.entries()[trainable[pick_param(rng)]];
    std::uniform_int_distribution<std::size_t> pick_elem(0, e.tensor.numel() - 1);
    const std::size_t idx = pick_elem(rng);
    const double base = frozen.get(e.name)[idx];
    const double numeric = (loss64(e.name, idx, base + step) - loss64(e.name, idx, base - step)) / (2 * step);
    CoordinateCheck c{e.name, idx, e.tensor.grad()[idx], numeric, 0};
    c.rel_err = relative_error(c.analytic, c.numeric, floor);
    report.max_rel_err = std::max(report.max_rel_err, c.rel_err);
    report.coords.push_back(c);
  }
  return report;
}

}  // namespace tsr
