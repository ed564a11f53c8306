#include "tsrcan/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

namespace tsr {

void TrainConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError("train config: " + m); };
  if (batch_size < 1) fail("batch_size must be >= 1");
  if (!(lr0 > 0)) fail("lr0 must be positive");
  if (halve_every < 1) fail("halve_every must be >= 1");
  if (!(beta1 > 0 && beta1 < 1) || !(beta2 > 0 && beta2 < 1)) fail("beta1 and beta2 must lie in (0,1)");
  if (!(eps > 0)) fail("eps must be positive");
  if (epochs < 1) fail("epochs must be >= 1");
  if (validate_every < 1) fail("validate_every must be >= 1");
  if (crop < 4 || crop % 4) fail("crop must be a positive multiple of 4");
}

KeyValues TrainConfig::to_key_values() const {
  auto num = [](double v) {
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
  };
  return {{"batch_size", std::to_string(batch_size)},
          {"lr0", num(lr0)},
          {"halve_every", std::to_string(halve_every)},
          {"beta1", num(beta1)},
          {"beta2", num(beta2)},
          {"eps", num(eps)},
          {"epochs", std::to_string(epochs)},
          {"seed", std::to_string(seed)},
          {"validate_every", std::to_string(validate_every)},
          {"crop", std::to_string(crop)},
          {"augment", augment ? "true" : "false"},
          {"fusion_passthrough_init", fusion_passthrough_init ? "true" : "false"}};
}

TrainConfig TrainConfig::from_keys(KeyReader& r, const TrainConfig& d) {
  TrainConfig c;
  c.batch_size = r.get_int("batch_size", d.batch_size);
  c.lr0 = r.get_double("lr0", d.lr0);
  c.halve_every = r.get_int("halve_every", d.halve_every);
  c.beta1 = r.get_double("beta1", d.beta1);
  c.beta2 = r.get_double("beta2", d.beta2);
  c.eps = r.get_double("eps", d.eps);
  c.epochs = r.get_int("epochs", d.epochs);
  c.seed = r.get_u64("seed", d.seed);
  c.validate_every = r.get_int("validate_every", d.validate_every);
  c.crop = r.get_int("crop", d.crop);
  c.augment = r.get_bool("augment", d.augment);
  c.fusion_passthrough_init = r.get_bool("fusion_passthrough_init", d.fusion_passthrough_init);
  c.validate();
  return c;
}

double lr_at(int epoch, const TrainConfig& cfg) {
  if (epoch < 0) throw UsageError("lr_at: negative epoch");
  return cfg.lr0 * std::pow(0.5, epoch / cfg.halve_every);
}

void adam_step(ParamStore& params, AdamState& state, double lr, const TrainConfig& cfg) {
  std::vector<Tensor> trainable;
  for (const auto& e : params.entries()) {
    if (!e.trainable) continue;
    if (!e.tensor.has_grad()) throw UsageError("adam_step: parameter '" + e.name + "' has no gradient");
    trainable.push_back(e.tensor);
  }
  if (state.m.empty()) {
    for (const auto& p : trainable) {
      state.m.emplace_back(p.numel(), 0.0);
      state.v.emplace_back(p.numel(), 0.0);
    }
  }
  if (state.m.size() != trainable.size()) throw UsageError("adam_step: state does not match the parameter store");

  ++state.t;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
  for (std::size_t k = 0; k < trainable.size(); ++k) {
    Tensor p = trainable[k];
    auto& m = state.m[k];
    auto& v = state.v[k];
    const auto g = p.grad();
    for (std::size_t i = 0; i < p.numel(); ++i) {
      const double gi = g[i];
      m[i] = cfg.beta1 * m[i] + (1 - cfg.beta1) * gi;
      v[i] = cfg.beta2 * v[i] + (1 - cfg.beta2) * gi * gi;
      const double mh = m[i] / c1, vh = v[i] / c2;
      p[i] = static_cast<float>(static_cast<double>(p[i]) - lr * mh / (std::sqrt(vh) + cfg.eps));
    }
    p.zero_grad();
  }
}

Tensor model_input(const Tensor& zp, const ModelConfig& cfg) {
  if (cfg.mode == InputMode::ZeroPadded) return zp;
  Tensor c = compact_from_zero_padded(zp);
  return c;
}

Tensor model_input(const RawMosaic& raw, const ModelConfig& cfg) {
  return model_input(demux_zero_padded(raw, MosaicLayout::standard()), cfg);
}

namespace {

Tensor batch_of(const std::vector<Tensor>& items) {
  Shape s = items.front().shape();
  std::vector<float> v;
  v.reserve(items.size() * items.front().numel());
  for (const auto& t : items) {
    if (t.shape() != s) throw DimensionError("batch: samples of different size " + shape_str(s) + " and " + shape_str(t.shape()));
    v.insert(v.end(), t.values().begin(), t.values().end());
  }
  s.insert(s.begin(), items.size());
  return Tensor(std::move(s), std::move(v));
}

Tensor unbatch(const Tensor& t) {
  Shape s(t.shape().begin() + 1, t.shape().end());
  return Tensor(std::move(s), t.values());
}

}  // namespace

Tensor predict(const ParamStore& params, const ModelConfig& cfg, const RawMosaic& raw) {
  NoGradGuard ng;
  ParamStore view = params;  // shares storage; eval mode leaves buffers untouched
  const Tensor x = batch_of({model_input(raw, cfg)});
  Tensor y = unbatch(tsrcan_forward(x, view, cfg, NormMode::Eval).sr);
  for (auto& v : y.values()) v = std::clamp(v, 0.0f, 1.0f);
  return y;
}

MetricReport evaluate(const ParamStore& params, const ModelConfig& cfg,
                      const std::vector<DatasetSample>& samples) {
  std::vector<ImageMetrics> per;
  for (const auto& s : samples) {
    per.push_back(evaluate_image(s.id, predict(params, cfg, s.raw), s.hr_rgb, s.mask ? &*s.mask : nullptr));
  }
  return aggregate(per);
}

double mean_psnr(const ParamStore& params, const ModelConfig& cfg,
                 const std::vector<DatasetSample>& samples) {
  if (samples.empty()) throw UsageError("mean_psnr: no samples");
  double s = 0;
  for (const auto& d : samples) s += psnr(predict(params, cfg, d.raw), d.hr_rgb, d.mask ? &*d.mask : nullptr);
  return s / static_cast<double>(samples.size());
}

void write_history_csv(const std::filesystem::path& path, const std::vector<EpochRecord>& history) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << std::setprecision(10) << "epoch,lr,loss,val_psnr\n";
  for (const auto& r : history) {
    f << r.epoch << ',' << r.lr << ',' << r.loss << ',';
    if (r.val_psnr) f << *r.val_psnr;
    f << '\n';
  }
}

FitResult fit(const ModelConfig& model_cfg, const TrainConfig& cfg,
              const std::vector<DatasetSample>& train, const std::vector<DatasetSample>& val,
              const FitOptions& opt) {
  model_cfg.validate();
  cfg.validate();
  if (train.empty()) throw UsageError("fit: empty training split");
  if (val.empty()) throw UsageError("fit: empty validation split");

  FitResult result;
  ParamStore params = build_model(model_cfg, cfg.seed);
  if (cfg.fusion_passthrough_init && model_cfg.arch == Architecture::Tsrcan) {
    set_fusion_passthrough(params, model_cfg);
  }
  AdamState adam;
  std::mt19937_64 rng(splitmix64(cfg.seed ^ 0x7a11ULL));

  std::vector<Tensor> inputs, targets;
  for (const auto& s : train) {
    inputs.push_back(demux_zero_padded(s.raw, MosaicLayout::standard()));
    targets.push_back(s.hr_rgb);
  }
  if (opt.out_dir) std::filesystem::create_directories(*opt.out_dir);

  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = lr_at(epoch, cfg);
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0;
    int batches = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      std::vector<Tensor> xb, tb;
      for (std::size_t i = start; i < end; ++i) {
        const std::size_t k = order[i];
        if (cfg.augment) {
          const AugmentedPair a = augment(inputs[k], targets[k], rng, static_cast<std::size_t>(cfg.crop));
          xb.push_back(model_input(a.input, model_cfg));
          tb.push_back(a.target);
        } else {
          xb.push_back(model_input(inputs[k], model_cfg));
          tb.push_back(targets[k]);
        }
      }
      const ModelOutput<float> out = tsrcan_forward(batch_of(xb), params, model_cfg, NormMode::Train);
      const Tensor loss = model_loss(out, batch_of(tb), model_cfg);
      const double l = loss.item();
      if (!std::isfinite(l)) {
        std::string ids;
        for (std::size_t i = start; i < end; ++i) ids += (ids.empty() ? "" : ",") + train[order[i]].id;
        throw TrainingError("fit: non-finite loss " + std::to_string(l) + " at epoch " +
                            std::to_string(epoch) + ", step " + std::to_string(result.steps) +
                            " (batch " + ids + ", lr " + std::to_string(lr) + ")");
      }
      backward(loss);
      adam_step(params, adam, lr, cfg);
      loss_sum += l;
      ++batches;
      ++result.steps;
    }

    EpochRecord rec{epoch, lr, loss_sum / batches, std::nullopt};
    if ((epoch + 1) % cfg.validate_every == 0 || epoch + 1 == cfg.epochs) {
      rec.val_psnr = mean_psnr(params, model_cfg, val);
      if (result.best_epoch < 0 || *rec.val_psnr > result.best_val_psnr) {
        result.best_epoch = epoch;
        result.best_val_psnr = *rec.val_psnr;
        result.best_params = params.clone();
        if (opt.out_dir) {
          save_checkpoint(*opt.out_dir / "best", model_cfg, result.best_params, cfg.seed,
                          {{"epoch", std::to_string(epoch)}, {"val_psnr", std::to_string(*rec.val_psnr)}});
        }
      }
    }
    result.history.push_back(rec);
    if (opt.on_epoch) opt.on_epoch(rec);
    if (opt.out_dir) write_history_csv(*opt.out_dir / "history.csv", result.history);
  }
  result.final_params = params;
  if (opt.out_dir) {
    save_checkpoint(*opt.out_dir / "final", model_cfg, params, cfg.seed,
                    {{"epoch", std::to_string(cfg.epochs - 1)}});
  }
  return result;
}

std::vector<DatasetSample> load_split(const DatasetIndex& data, const std::vector<std::string>& ids) {
  std::vector<DatasetSample> out;
  for (const auto& id : ids) out.push_back(data.load(id));
  return out;
}

FitResult fit(const ModelConfig& model_cfg, const TrainConfig& cfg, const DatasetIndex& data,
              const FitOptions& opt) {
  return fit(model_cfg, cfg, load_split(data, data.train), load_split(data, data.val), opt);
}

}  // namespace tsr
