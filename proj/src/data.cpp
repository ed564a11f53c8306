#include "tsrcan/data.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <iomanip>
#include <limits>
#include <numeric>
#include <sstream>

#include "tsrcan/tensor_io.hpp"

namespace tsr {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

void SceneSpec::validate() const {
  if (height == 0 || width == 0 || height % 4 || width % 4) {
    throw DimensionError("scene: size " + std::to_string(height) + "x" + std::to_string(width) +
                         " must be a positive multiple of 4");
  }
  if (num_patches < 0) throw ConfigError("scene: num_patches must be >= 0");
  if (!(band_fwhm_nm > 0)) throw ConfigError("scene: band_fwhm_nm must be positive");
  if (!(texture >= 0 && texture < 1)) throw ConfigError("scene: texture must lie in [0, 1)");
  if (!(raw_gain_jitter >= 0)) throw ConfigError("scene: raw_gain_jitter must be >= 0");
}

KeyValues SceneSpec::to_key_values() const {
  std::ostringstream fwhm, tex, gain;
  fwhm << band_fwhm_nm;
  tex << texture;
  gain << raw_gain_jitter;
  return {{"seed", std::to_string(seed)},       {"height", std::to_string(height)},
          {"width", std::to_string(width)},     {"num_patches", std::to_string(num_patches)},
          {"band_fwhm_nm", fwhm.str()},         {"texture", tex.str()},
          {"flat", flat ? "true" : "false"},    {"raw_gain_jitter", gain.str()}};
}

namespace {

struct Patch {
  std::vector<double> spectrum;  // on the CMF grid, peak 1
  // Envelope: either a Gaussian blob or a soft-edged half plane.
  bool blob = true;
  double amp = 0, cy = 0, cx = 0, sy = 1, sx = 1;
  double nx = 0, ny = 0, offset = 0, softness = 1;
  // Texture: sum of three plane waves normalised to [-1, 1].
  double strength = 0;
  std::array<double, 3> fy{}, fx{}, phase{}, weight{};

  double envelope(double y, double x) const {
    if (blob) {
      const double dy = (y - cy) / sy, dx = (x - cx) / sx;
      return amp * std::exp(-0.5 * (dy * dy + dx * dx));
    }
    const double d = (nx * x + ny * y - offset) / softness;
    return amp / (1.0 + std::exp(-d));
  }

  double texture(double y, double x) const {
    double t = 0;
    for (std::size_t j = 0; j < 3; ++j) {
      t += weight[j] * std::sin(2 * std::numbers::pi * (fy[j] * y + fx[j] * x) + phase[j]);
    }
    return 1.0 + strength * t;
  }
};

Patch random_patch(std::mt19937_64& rng, const SceneSpec& spec, const std::vector<double>& grid) {
  std::uniform_real_distribution<double> u(0, 1);
  auto uni = [&](double lo, double hi) { return lo + (hi - lo) * u(rng); };
  Patch p;
  const int gaussians = std::uniform_int_distribution<int>(2, 4)(rng);
  std::vector<std::array<double, 3>> comps(static_cast<std::size_t>(gaussians));
  for (auto& c : comps) c = {uni(400, 700), uni(15, 60), uni(0.2, 1.0)};
  p.spectrum.resize(grid.size());
  double peak = 0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    double s = 0;
    for (const auto& c : comps) s += c[2] * std::exp(-0.5 * std::pow((grid[i] - c[0]) / c[1], 2));
    p.spectrum[i] = s;
    peak = std::max(peak, s);
  }
  for (auto& s : p.spectrum) s /= peak;

  const double h = static_cast<double>(spec.height), w = static_cast<double>(spec.width);
  p.amp = uni(0.08, 0.35);
  p.blob = u(rng) < 0.5;
  p.cy = uni(0, h);
  p.cx = uni(0, w);
  p.sy = uni(0.15, 0.6) * h;
  p.sx = uni(0.15, 0.6) * w;
  const double angle = uni(0, 2 * std::numbers::pi);
  p.nx = std::cos(angle);
  p.ny = std::sin(angle);
  p.offset = p.nx * uni(0.2, 0.8) * w + p.ny * uni(0.2, 0.8) * h;
  p.softness = uni(1.5, 4.0);

  p.strength = spec.texture * uni(0.5, 1.0);
  double total = 0;
  for (std::size_t j = 0; j < 3; ++j) {
    const double period = uni(8.0, 24.0), dir = uni(0, 2 * std::numbers::pi);
    p.fy[j] = std::sin(dir) / period;
    p.fx[j] = std::cos(dir) / period;
    p.phase[j] = uni(0, 2 * std::numbers::pi);
    p.weight[j] = uni(0.3, 1.0);
    total += p.weight[j];
  }
  for (auto& wj : p.weight) wj /= total;

  if (spec.flat) {
    p.blob = true;
    p.sy = p.sx = std::numeric_limits<double>::infinity();
    p.strength = 0;
  }
  return p;
}

}  // namespace

DatasetSample generate_scene(const SceneSpec& spec, const MosaicLayout& layout, const CmfTable& cmf) {
  spec.validate();
  std::mt19937_64 rng(splitmix64(spec.seed));
  const auto& grid = cmf.wavelengths_nm;
  const std::vector<double> tw = trapezoid_weights(grid);
  const double y_integral = cmf.luminance_integral();

  // Unit-area Gaussian band responses on the grid.
  const double sigma = spec.band_fwhm_nm / (2 * std::sqrt(2 * std::log(2.0)));
  std::vector<std::vector<double>> response(layout.bands(), std::vector<double>(grid.size()));
  for (std::size_t b = 0; b < layout.bands(); ++b) {
    double area = 0;
    for (std::size_t i = 0; i < grid.size(); ++i) {
      response[b][i] = std::exp(-0.5 * std::pow((grid[i] - layout.wavelength(b)) / sigma, 2));
      area += response[b][i] * tw[i];
    }
    for (auto& r : response[b]) r /= area;
  }

  // Radiance is linear in the patch spectra, so both images reduce to per-patch
  // tristimulus and band values weighted by the spatial envelopes.
  std::vector<Patch> patches;
  std::vector<Vec3> xyz;
  std::vector<std::vector<double>> band;
  for (int k = 0; k < spec.num_patches; ++k) {
    patches.push_back(random_patch(rng, spec, grid));
    const auto& s = patches.back().spectrum;
    Vec3 t{0, 0, 0};
    std::vector<double> bv(layout.bands(), 0.0);
    for (std::size_t i = 0; i < grid.size(); ++i) {
      t[0] += s[i] * cmf.xbar[i] * tw[i] / y_integral;
      t[1] += s[i] * cmf.ybar[i] * tw[i] / y_integral;
      t[2] += s[i] * cmf.zbar[i] * tw[i] / y_integral;
      for (std::size_t b = 0; b < layout.bands(); ++b) bv[b] += s[i] * response[b][i] * tw[i];
    }
    xyz.push_back(t);
    band.push_back(std::move(bv));
  }
  const double gain =
      spec.raw_gain_jitter > 0
          ? std::exp(std::uniform_real_distribution<double>(-spec.raw_gain_jitter, spec.raw_gain_jitter)(rng))
          : 1.0;

  const std::size_t h = spec.height, w = spec.width, hw = h * w;
  DatasetSample out{"", RawMosaic(h, w), Tensor(Shape{3, h, w}), std::nullopt};
  std::vector<double> weight(patches.size());
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const double fy = static_cast<double>(y), fx = static_cast<double>(x);
      Vec3 t{0, 0, 0};
      double raw = 0;
      const std::size_t b = layout.band_at(y, x);
      for (std::size_t k = 0; k < patches.size(); ++k) {
        const double wk = patches[k].envelope(fy, fx) * patches[k].texture(fy, fx);
        for (int c = 0; c < 3; ++c) t[c] += wk * xyz[k][c];
        raw += wk * band[k][b];
      }
      const Vec3 rgb = xyz_to_display_rgb(t, cmf.rgb_matrix);
      for (std::size_t c = 0; c < 3; ++c) out.hr_rgb[c * hw + y * w + x] = static_cast<float>(rgb[c]);
      out.raw(y, x) = static_cast<float>(std::clamp(gain * raw, 0.0, 1.0));
    }
  }
  return out;
}

Split make_split(std::size_t n, std::uint64_t seed) {
  if (n < 3) throw UsageError("make_split: need at least 3 samples, got " + std::to_string(n));
  const auto share = [n](double parts) {
    return std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(static_cast<double>(n) * parts / 296.0)));
  };
  const std::size_t n_val = share(25), n_test = share(21);
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  Split s;
  const std::size_t n_train = n - n_val - n_test;
  s.train.assign(idx.begin(), idx.begin() + n_train);
  s.val.assign(idx.begin() + n_train, idx.begin() + n_train + n_val);
  s.test.assign(idx.begin() + n_train + n_val, idx.end());
  for (auto* v : {&s.train, &s.val, &s.test}) std::sort(v->begin(), v->end());
  return s;
}

AugmentParams sample_augment(std::mt19937_64& rng, std::size_t height, std::size_t width,
                             std::size_t crop) {
  if (crop == 0 || crop % 4) throw DimensionError("augment: crop " + std::to_string(crop) + " is not a positive multiple of 4");
  if (height < crop || width < crop) {
    throw DimensionError("augment: image " + std::to_string(height) + "x" + std::to_string(width) +
                         " is smaller than the " + std::to_string(crop) + " crop");
  }
  AugmentParams p;
  p.top = 4 * std::uniform_int_distribution<std::size_t>(0, (height - crop) / 4)(rng);
  p.left = 4 * std::uniform_int_distribution<std::size_t>(0, (width - crop) / 4)(rng);
  p.quarter_turns = std::uniform_int_distribution<int>(0, 3)(rng);
  p.flip = std::bernoulli_distribution(0.5)(rng);
  return p;
}

Tensor apply_augment(const Tensor& t, const AugmentParams& p, std::size_t crop) {
  if (t.ndim() != 3) throw DimensionError("augment: expected [C,H,W], got " + shape_str(t.shape()));
  const std::size_t c = t.dim(0), h = t.dim(1), w = t.dim(2);
  if (p.top + crop > h || p.left + crop > w) throw DimensionError("augment: crop window leaves the image");
  if (p.top % 4 || p.left % 4) throw DimensionError("augment: crop origin must lie on the 4-pixel grid");
  const std::size_t n = crop;
  Tensor out(Shape{c, n, n});
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t y = 0; y < n; ++y) {
      for (std::size_t x = 0; x < n; ++x) {
        // Undo the flip, then the rotation, to find the source pixel in the crop.
        std::size_t sy = y, sx = p.flip ? n - 1 - x : x;
        for (int k = 0; k < p.quarter_turns; ++k) {
          const std::size_t ry = sx, rx = n - 1 - sy;  // inverse of one CCW quarter turn
          sy = ry;
          sx = rx;
        }
        out[(ch * n + y) * n + x] = t[(ch * h + p.top + sy) * w + p.left + sx];
      }
    }
  }
  return out;
}

AugmentedPair augment(const Tensor& ms, const Tensor& target, std::mt19937_64& rng, std::size_t crop) {
  if (ms.ndim() != 3 || target.ndim() != 3 || ms.dim(1) != target.dim(1) || ms.dim(2) != target.dim(2)) {
    throw DimensionError("augment: input " + shape_str(ms.shape()) + " and target " +
                         shape_str(target.shape()) + " must share H and W");
  }
  const AugmentParams p = sample_augment(rng, ms.dim(1), ms.dim(2), crop);
  return {apply_augment(ms, p, crop), apply_augment(target, p, crop)};
}

// ---- dataset directory --------------------------------------------------------

void write_sample(const std::filesystem::path& dir, const DatasetSample& s, const KeyValues& meta) {
  std::filesystem::create_directories(dir);
  write_tensor(dir / "raw.msrt", s.raw.plane());
  write_tensor(dir / "hr_rgb.msrt", s.hr_rgb);
  if (s.mask) write_tensor(dir / "mask.msrt", s.mask->to_tensor());
  KeyValues m = meta;
  m["id"] = s.id;
  write_key_values(dir / "meta.txt", m);
}

DatasetSample read_sample(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw FormatError("no sample directory " + dir.string());
  const KeyValues meta = read_key_values(dir / "meta.txt");
  auto it = meta.find("id");
  DatasetSample s{it == meta.end() ? dir.filename().string() : it->second,
                  RawMosaic(read_tensor(dir / "raw.msrt")), read_tensor(dir / "hr_rgb.msrt"),
                  std::nullopt};
  if (s.hr_rgb.ndim() != 3 || s.hr_rgb.dim(0) != 3 || s.hr_rgb.dim(1) != s.raw.height() ||
      s.hr_rgb.dim(2) != s.raw.width()) {
    throw FormatError(dir.string() + ": hr_rgb " + shape_str(s.hr_rgb.shape()) +
                      " does not match raw " + std::to_string(s.raw.height()) + "x" +
                      std::to_string(s.raw.width()));
  }
  if (std::filesystem::exists(dir / "mask.msrt")) {
    s.mask = Mask::from_tensor(read_tensor(dir / "mask.msrt"));
    if (s.mask->height() != s.raw.height() || s.mask->width() != s.raw.width()) {
      throw FormatError(dir.string() + ": mask size does not match the sample");
    }
  }
  return s;
}

namespace {

std::vector<std::string> split_ids(const std::string& text) {
  std::vector<std::string> ids;
  std::stringstream ss(text);
  std::string id;
  while (std::getline(ss, id, ',')) {
    if (!id.empty()) ids.push_back(id);
  }
  return ids;
}

std::string join_ids(const std::vector<std::string>& ids) {
  std::string s;
  for (const auto& id : ids) s += (s.empty() ? "" : ",") + id;
  return s;
}

}  // namespace

DatasetIndex DatasetIndex::open(const std::filesystem::path& root) {
  DatasetIndex d;
  d.root = root;
  KeyReader r(read_key_values(root / "splits.txt"), (root / "splits.txt").string());
  d.train = split_ids(r.require_string("train"));
  d.val = split_ids(r.require_string("val"));
  d.test = split_ids(r.require_string("test"));
  r.finish();
  if (std::filesystem::exists(root / "dataset.txt")) d.info = read_key_values(root / "dataset.txt");
  return d;
}

DatasetIndex generate_dataset(const std::filesystem::path& root, const GenerateOptions& opt) {
  std::filesystem::create_directories(root);
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < opt.count; ++i) {
    SceneSpec spec;
    spec.seed = splitmix64(opt.seed + i);
    spec.height = opt.height;
    spec.width = opt.width;
    spec.num_patches = opt.num_patches;
    DatasetSample s = generate_scene(spec);
    std::ostringstream id;
    id << "scene_" << std::setw(4) << std::setfill('0') << i;
    s.id = id.str();
    write_sample(root / s.id, s, spec.to_key_values());
    ids.push_back(s.id);
  }
  const Split split = make_split(opt.count, splitmix64(opt.seed ^ 0x5eedULL));
  DatasetIndex d;
  d.root = root;
  for (std::size_t i : split.train) d.train.push_back(ids[i]);
  for (std::size_t i : split.val) d.val.push_back(ids[i]);
  for (std::size_t i : split.test) d.test.push_back(ids[i]);
  write_key_values(root / "splits.txt", {{"train", join_ids(d.train)}, {"val", join_ids(d.val)}, {"test", join_ids(d.test)}});
  d.info = {{"count", std::to_string(opt.count)},
            {"height", std::to_string(opt.height)},
            {"width", std::to_string(opt.width)},
            {"seed", std::to_string(opt.seed)},
            {"num_patches", std::to_string(opt.num_patches)}};
  write_key_values(root / "dataset.txt", d.info);
  return d;
}

}  // namespace tsr
