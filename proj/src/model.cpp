#include "tsrcan/model.hpp"

#include <cmath>
#include <fstream>
#include <random>

#include "tsrcan/tensor_io.hpp"

namespace tsr {

ModelConfig ModelConfig::tiny() {
  ModelConfig c;
  c.groups = 2;
  c.blocks = 1;
  c.channels = 8;
  c.reduction = 4;
  c.texture_channels = 16;
  return c;
}

void ModelConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError("model config: " + m); };
  if (groups < 1) fail("groups must be >= 1");
  if (blocks < 1) fail("blocks must be >= 1");
  if (channels < 1) fail("channels must be >= 1");
  if (reduction < 1 || channels % reduction != 0) {
    fail("channels (" + std::to_string(channels) + ") must be a multiple of reduction (" +
         std::to_string(reduction) + ")");
  }
  if (texture_channels < 1) fail("texture_channels must be >= 1");
  if (in_channels < 1 || out_channels < 1) fail("channel counts must be >= 1");
  if (mode == InputMode::Compact && compact_upscale < 1) fail("compact_upscale must be >= 1");
}

std::string to_string(InputMode m) { return m == InputMode::Compact ? "compact" : "zero_padded"; }
std::string to_string(Architecture a) { return a == Architecture::Rcan ? "rcan" : "tsrcan"; }

KeyValues ModelConfig::to_key_values() const {
  return {{"arch", to_string(arch)},
          {"groups", std::to_string(groups)},
          {"blocks", std::to_string(blocks)},
          {"channels", std::to_string(channels)},
          {"reduction", std::to_string(reduction)},
          {"texture_channels", std::to_string(texture_channels)},
          {"in_channels", std::to_string(in_channels)},
          {"out_channels", std::to_string(out_channels)},
          {"mode", to_string(mode)},
          {"compact_upscale", std::to_string(compact_upscale)}};
}

ModelConfig ModelConfig::from_keys(KeyReader& r) { return from_keys(r, ModelConfig{}); }

ModelConfig ModelConfig::from_keys(KeyReader& r, const ModelConfig& d) {
  ModelConfig c;
  const std::string arch = r.get_string("arch", to_string(d.arch));
  if (arch == "tsrcan") c.arch = Architecture::Tsrcan;
  else if (arch == "rcan") c.arch = Architecture::Rcan;
  else throw ConfigError("model config: arch must be tsrcan or rcan, got '" + arch + "'");
  c.groups = r.get_int("groups", d.groups);
  c.blocks = r.get_int("blocks", d.blocks);
  c.channels = r.get_int("channels", d.channels);
  c.reduction = r.get_int("reduction", d.reduction);
  c.texture_channels = r.get_int("texture_channels", d.texture_channels);
  c.in_channels = r.get_int("in_channels", d.in_channels);
  c.out_channels = r.get_int("out_channels", d.out_channels);
  const std::string mode = r.get_string("mode", to_string(d.mode));
  if (mode == "zero_padded") c.mode = InputMode::ZeroPadded;
  else if (mode == "compact") c.mode = InputMode::Compact;
  else throw ConfigError("model config: mode must be zero_padded or compact, got '" + mode + "'");
  c.compact_upscale = r.get_int("compact_upscale", d.compact_upscale);
  c.validate();
  return c;
}

// ---- ParamStore -------------------------------------------------------------

template <typename T>
void BasicParamStore<T>::insert(const std::string& name, BasicTensor<T> t, bool trainable) {
  if (!index_.emplace(name, entries_.size()).second) {
    throw UsageError("param store: duplicate name '" + name + "'");
  }
  t.set_requires_grad(trainable);
  entries_.push_back({name, std::move(t), trainable});
}

template <typename T>
void BasicParamStore<T>::add_parameter(const std::string& name, BasicTensor<T> t) {
  insert(name, std::move(t), true);
}

template <typename T>
void BasicParamStore<T>::add_buffer(const std::string& name, BasicTensor<T> t) {
  insert(name, std::move(t), false);
}

template <typename T>
const BasicTensor<T>& BasicParamStore<T>::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw UsageError("param store: no tensor named '" + name + "'");
  return entries_[it->second].tensor;
}

template <typename T>
BasicTensor<T>& BasicParamStore<T>::get(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw UsageError("param store: no tensor named '" + name + "'");
  return entries_[it->second].tensor;
}

template <typename T>
std::size_t BasicParamStore<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.trainable ? e.tensor.numel() : 0;
  return n;
}

template <typename T>
void BasicParamStore<T>::zero_grad() {
  for (auto& e : entries_) e.tensor.zero_grad();
}

template class BasicParamStore<float>;
template class BasicParamStore<double>;

// ---- build ------------------------------------------------------------------

namespace {

class Builder {
 public:
  Builder(ParamStore& store, std::uint64_t seed) : store_(store), rng_(seed) {}

  void conv(const std::string& name, std::size_t cin, std::size_t cout, std::size_t k) {
    he(name + ".w", {cout, cin, k, k}, static_cast<double>(cin * k * k));
    store_.add_parameter(name + ".b", Tensor::zeros({cout}));
  }

  // Each output of a stride-s transposed conv sums cin * (k/s)^2 taps.
  void deconv(const std::string& name, std::size_t cin, std::size_t cout, std::size_t k,
              std::size_t stride) {
    he(name + ".w", {cin, cout, k, k}, static_cast<double>(cin * k * k) / (stride * stride));
    store_.add_parameter(name + ".b", Tensor::zeros({cout}));
  }

  void batchnorm(const std::string& name, std::size_t c) {
    store_.add_parameter(name + ".gamma", Tensor::full({c}, 1.0f));
    store_.add_parameter(name + ".beta", Tensor::zeros({c}));
    store_.add_buffer(name + ".running_mean", Tensor::zeros({c}));
    store_.add_buffer(name + ".running_var", Tensor::full({c}, 1.0f));
  }

 private:
  void he(const std::string& name, Shape shape, double fan_in) {
    std::normal_distribution<double> nd(0.0, std::sqrt(2.0 / fan_in));
    Tensor w(std::move(shape));
    for (auto& v : w.values()) v = static_cast<float>(nd(rng_));
    store_.add_parameter(name, std::move(w));
  }

  ParamStore& store_;
  std::mt19937_64 rng_;
};

std::string rcab_prefix(int g, int b) {
  return "body.g" + std::to_string(g) + ".rcab" + std::to_string(b);
}

}  // namespace

ParamStore build_model(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  ParamStore store;
  Builder b(store, seed);
  const auto c = static_cast<std::size_t>(cfg.channels);
  const std::size_t mid = c / static_cast<std::size_t>(cfg.reduction);

  b.conv("head.0", cfg.in_channels, c, 3);
  b.conv("head.1", c, c, 3);
  for (int g = 0; g < cfg.groups; ++g) {
    for (int k = 0; k < cfg.blocks; ++k) {
      const std::string p = rcab_prefix(g, k);
      b.conv(p + ".conv1", c, c, 3);
      b.conv(p + ".conv2", c, c, 3);
      b.conv(p + ".ca.down", c, mid, 1);
      b.conv(p + ".ca.up", mid, c, 1);
    }
    b.conv("body.g" + std::to_string(g) + ".conv", c, c, 3);
  }
  if (cfg.mode == InputMode::Compact) {
    const auto f = static_cast<std::size_t>(cfg.compact_upscale);
    b.conv("up.conv", c, c * f * f, 3);
  }
  b.conv("tail", c, cfg.out_channels, 3);

  if (cfg.arch == Architecture::Tsrcan) {
    const std::size_t tw = kTextureWidth;
    b.conv("tn.stem", cfg.out_channels, tw, 7);
    b.batchnorm("tn.bn0", tw);
    b.conv("tn.block.conv1", tw, tw, 3);
    b.batchnorm("tn.block.bn1", tw);
    b.conv("tn.block.conv2", tw, tw, 3);
    b.batchnorm("tn.block.bn2", tw);
    b.deconv("tn.deconv", tw, cfg.texture_channels, 8, 4);
    b.conv("fusion", cfg.texture_channels + cfg.out_channels, cfg.out_channels, 3);
  }
  return store;
}

template <typename T>
void set_fusion_passthrough(BasicParamStore<T>& store, const ModelConfig& cfg) {
  BasicTensor<T>& w = store.get("fusion.w");
  std::fill(w.values().begin(), w.values().end(), T(0));
  const auto k = static_cast<std::size_t>(cfg.texture_channels);
  for (std::size_t o = 0; o < static_cast<std::size_t>(cfg.out_channels); ++o) {
    w.at({o, k + o, 1, 1}) = T(1);
  }
  BasicTensor<T>& b = store.get("fusion.b");
  std::fill(b.values().begin(), b.values().end(), T(0));
}

// ---- forward ----------------------------------------------------------------

namespace {

template <typename T>
BasicTensor<T> conv(const BasicTensor<T>& x, const BasicParamStore<T>& s, const std::string& name,
                    int stride = 1, int pad = -1) {
  const BasicTensor<T>& w = s.get(name + ".w");
  if (pad < 0) pad = static_cast<int>(w.dim(2) / 2);
  return conv2d(x, w, s.get(name + ".b"), stride, pad);
}

template <typename T>
BasicTensor<T> bn(const BasicTensor<T>& x, BasicParamStore<T>& s, const std::string& name,
                  NormMode mode) {
  BasicTensor<T> mean = s.get(name + ".running_mean");
  BasicTensor<T> var = s.get(name + ".running_var");
  return batchnorm2d(x, s.get(name + ".gamma"), s.get(name + ".beta"), mean, var, mode);
}

void require_input(const Shape& x, const ModelConfig& cfg) {
  if (x.size() != 4 || x[1] != static_cast<std::size_t>(cfg.in_channels)) {
    throw DimensionError("model: expected input [N," + std::to_string(cfg.in_channels) +
                         ",H,W], got " + shape_str(x));
  }
}

std::size_t conv_out(std::size_t n, std::size_t k, std::size_t s, std::size_t p) {
  if (n + 2 * p < k) throw DimensionError("model: spatial size too small for a " + std::to_string(k) + "x" + std::to_string(k) + " window");
  return (n + 2 * p - k) / s + 1;
}

std::size_t texture_side(std::size_t n) {
  const std::size_t stem = conv_out(n, 7, 2, 3);
  const std::size_t pooled = conv_out(stem, 3, 2, 1);
  return (pooled - 1) * 4 - 2 * 2 + 8;
}

}  // namespace

template <typename T>
BasicTensor<T> rcab_forward(const BasicTensor<T>& x, const BasicParamStore<T>& s,
                            const std::string& p) {
  const std::size_t c = s.get(p + ".conv1.w").dim(1);
  if (x.ndim() != 4 || x.dim(1) != c) {
    throw DimensionError("rcab " + p + ": expected " + std::to_string(c) + " channels, got " +
                         shape_str(x.shape()));
  }
  const BasicTensor<T> u = conv(relu(conv(x, s, p + ".conv1")), s, p + ".conv2");
  const BasicTensor<T> a = sigmoid(conv(relu(conv(global_avg_pool(u), s, p + ".ca.down")), s, p + ".ca.up"));
  return add(x, scale_channels(u, a));
}

template <typename T>
BasicTensor<T> rcan_forward(const BasicTensor<T>& x, const BasicParamStore<T>& s,
                            const ModelConfig& cfg) {
  require_input(x.shape(), cfg);
  const BasicTensor<T> head = conv(conv(x, s, "head.0"), s, "head.1");
  BasicTensor<T> body = head;
  for (int g = 0; g < cfg.groups; ++g) {
    BasicTensor<T> y = body;
    for (int b = 0; b < cfg.blocks; ++b) y = rcab_forward(y, s, rcab_prefix(g, b));
    body = add(body, conv(y, s, "body.g" + std::to_string(g) + ".conv"));
  }
  BasicTensor<T> feat = add(head, body);
  if (cfg.mode == InputMode::Compact) {
    feat = depth_to_space(conv(feat, s, "up.conv"), cfg.compact_upscale);
  }
  return conv(feat, s, "tail");
}

template <typename T>
BasicTensor<T> texture_forward(const BasicTensor<T>& x, BasicParamStore<T>& s, NormMode mode) {
  BasicTensor<T> h = relu(bn(conv(x, s, "tn.stem", 2, 3), s, "tn.bn0", mode));
  h = maxpool2d(h, 3, 2, 1);
  BasicTensor<T> t = relu(bn(conv(h, s, "tn.block.conv1"), s, "tn.block.bn1", mode));
  t = bn(conv(t, s, "tn.block.conv2"), s, "tn.block.bn2", mode);
  h = relu(add(h, t));
  return conv_transpose2d(h, s.get("tn.deconv.w"), s.get("tn.deconv.b"), 4, 2);
}

template <typename T>
ModelOutput<T> tsrcan_forward(const BasicTensor<T>& x, BasicParamStore<T>& s,
                              const ModelConfig& cfg, NormMode mode) {
  ModelOutput<T> out;
  out.sr_prime = rcan_forward(x, s, cfg);
  if (cfg.arch == Architecture::Rcan) {
    out.sr = out.sr_prime;
    return out;
  }
  const std::size_t h = out.sr_prime.dim(2), w = out.sr_prime.dim(3);
  if (texture_side(h) != h || texture_side(w) != w) {
    throw DimensionError("tsrcan: texture branch needs output height and width divisible by 4, got " +
                         std::to_string(h) + "x" + std::to_string(w));
  }
  out.texture = texture_forward(out.sr_prime, s, mode);
  out.sr = conv(concat_channels(out.texture, out.sr_prime), s, "fusion");
  return out;
}

template <typename T>
BasicTensor<T> tsrcan_loss(const BasicTensor<T>& sr_prime, const BasicTensor<T>& sr,
                           const BasicTensor<T>& target) {
  if (sr_prime.shape() != target.shape() || sr.shape() != target.shape()) {
    throw DimensionError("loss: shapes " + shape_str(sr_prime.shape()) + ", " +
                         shape_str(sr.shape()) + " and " + shape_str(target.shape()) + " differ");
  }
  return add(smooth_l1(sr_prime, target), smooth_l1(sr, target));
}

template <typename T>
BasicTensor<T> model_loss(const ModelOutput<T>& out, const BasicTensor<T>& target,
                          const ModelConfig& cfg) {
  if (cfg.arch == Architecture::Rcan) {
    if (out.sr_prime.shape() != target.shape()) {
      throw DimensionError("loss: shapes " + shape_str(out.sr_prime.shape()) + " and " +
                           shape_str(target.shape()) + " differ");
    }
    return smooth_l1(out.sr_prime, target);
  }
  return tsrcan_loss(out.sr_prime, out.sr, target);
}

std::pair<std::size_t, std::size_t> input_size_for(const ModelConfig& cfg, std::size_t h,
                                                   std::size_t w) {
  if (cfg.mode == InputMode::ZeroPadded) return {h, w};
  const auto f = static_cast<std::size_t>(cfg.compact_upscale);
  if (h % f || w % f) {
    throw DimensionError("compact mode: target " + std::to_string(h) + "x" + std::to_string(w) +
                         " is not a multiple of " + std::to_string(f));
  }
  return {h / f, w / f};
}

ShapePlan infer_shapes(const ModelConfig& cfg, const Shape& x) {
  cfg.validate();
  require_input(x, cfg);
  std::size_t h = x[2], w = x[3];
  // Every 3x3 conv in head/body/tail keeps the size; only the compact upsampler changes it.
  h = conv_out(h, 3, 1, 1);
  w = conv_out(w, 3, 1, 1);
  if (cfg.mode == InputMode::Compact) {
    h *= static_cast<std::size_t>(cfg.compact_upscale);
    w *= static_cast<std::size_t>(cfg.compact_upscale);
  }
  const std::size_t oc = static_cast<std::size_t>(cfg.out_channels);
  ShapePlan plan;
  plan.sr_prime = {x[0], oc, h, w};
  plan.sr = plan.sr_prime;
  if (cfg.arch == Architecture::Tsrcan) {
    const std::size_t th = texture_side(h), tw = texture_side(w);
    if (th != h || tw != w) {
      throw DimensionError("tsrcan: texture branch maps " + std::to_string(h) + "x" +
                           std::to_string(w) + " to " + std::to_string(th) + "x" + std::to_string(tw));
    }
    plan.texture = {x[0], static_cast<std::size_t>(cfg.texture_channels), th, tw};
  }
  return plan;
}

// ---- checkpoints ------------------------------------------------------------

void save_checkpoint(const std::filesystem::path& dir, const ModelConfig& cfg,
                     const ParamStore& params, std::uint64_t seed, const KeyValues& extra) {
  std::filesystem::create_directories(dir);
  KeyValues manifest = cfg.to_key_values();
  manifest["seed"] = std::to_string(seed);
  for (const auto& [k, v] : extra) manifest["meta." + k] = v;
  for (const auto& e : params.entries()) {
    manifest["tensor." + e.name] = shape_str(e.tensor.shape());
    write_tensor(dir / (e.name + ".msrt"), e.tensor);
  }
  write_key_values(dir / "manifest.txt", manifest);
}

Checkpoint load_checkpoint(const std::filesystem::path& dir) {
  const KeyValues manifest = read_key_values(dir / "manifest.txt");
  KeyReader r(manifest, (dir / "manifest.txt").string());
  Checkpoint ck;
  ck.config = ModelConfig::from_keys(r);
  ck.seed = r.get_u64("seed", 0);
  for (const auto& [k, v] : manifest) {
    if (k.rfind("meta.", 0) == 0) {
      ck.extra[k.substr(5)] = v;
      r.ignore(k);
    }
  }
  const ParamStore skeleton = build_model(ck.config, ck.seed);
  for (const auto& e : skeleton.entries()) {
    const std::string expected = shape_str(e.tensor.shape());
    const std::string listed = r.get_string("tensor." + e.name, "");
    if (listed != expected) {
      throw FormatError("checkpoint " + dir.string() + ": tensor '" + e.name + "' listed as '" +
                        listed + "', config expects " + expected);
    }
    Tensor t = read_tensor(dir / (e.name + ".msrt"));
    if (t.shape() != e.tensor.shape()) {
      throw FormatError("checkpoint " + dir.string() + ": file for '" + e.name + "' has shape " +
                        shape_str(t.shape()) + ", expected " + expected);
    }
    if (e.trainable) ck.params.add_parameter(e.name, std::move(t));
    else ck.params.add_buffer(e.name, std::move(t));
  }
  r.finish();
  return ck;
}

#define TSR_MODEL_INSTANTIATE(T)                                                                \
  template void set_fusion_passthrough<T>(BasicParamStore<T>&, const ModelConfig&);             \
  template BasicTensor<T> rcab_forward<T>(const BasicTensor<T>&, const BasicParamStore<T>&,     \
                                          const std::string&);                                  \
  template BasicTensor<T> rcan_forward<T>(const BasicTensor<T>&, const BasicParamStore<T>&,     \
                                          const ModelConfig&);                                  \
  template BasicTensor<T> texture_forward<T>(const BasicTensor<T>&, BasicParamStore<T>&,        \
                                             NormMode);                                         \
  template ModelOutput<T> tsrcan_forward<T>(const BasicTensor<T>&, BasicParamStore<T>&,         \
                                            const ModelConfig&, NormMode);                      \
  template BasicTensor<T> tsrcan_loss<T>(const BasicTensor<T>&, const BasicTensor<T>&,          \
                                         const BasicTensor<T>&);                                \
  template BasicTensor<T> model_loss<T>(const ModelOutput<T>&, const BasicTensor<T>&,           \
                                        const ModelConfig&);

TSR_MODEL_INSTANTIATE(float)
TSR_MODEL_INSTANTIATE(double)

}  // namespace tsr
