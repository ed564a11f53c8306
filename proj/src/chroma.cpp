#include "tsrcan/chroma.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace tsr {
namespace {

// CIE 1931 2-degree colour matching functions (nm, xbar, ybar, zbar).
constexpr double kCie1931[][4] = {
    {400, 0.014310, 0.000396, 0.067850},
    {405, 0.023190, 0.000640, 0.110200},
    {410, 0.043510, 0.001210, 0.207400},
    {415, 0.077630, 0.002180, 0.371300},
    {420, 0.134380, 0.004000, 0.645600},
    {425, 0.214770, 0.007300, 1.039050},
    {430, 0.283900, 0.011600, 1.385600},
    {435, 0.328500, 0.016840, 1.622960},
    {440, 0.348280, 0.023000, 1.747060},
    {445, 0.348060, 0.029800, 1.782600},
    {450, 0.336200, 0.038000, 1.772110},
    {455, 0.318700, 0.048000, 1.744100},
    {460, 0.290800, 0.060000, 1.669200},
    {465, 0.251100, 0.073900, 1.528100},
    {470, 0.195360, 0.090980, 1.287640},
    {475, 0.142100, 0.112600, 1.041900},
    {480, 0.095640, 0.139020, 0.812950},
    {485, 0.057950, 0.169300, 0.616200},
    {490, 0.032010, 0.208020, 0.465180},
    {495, 0.014700, 0.258600, 0.353300},
    {500, 0.004900, 0.323000, 0.272000},
    {505, 0.002400, 0.407300, 0.212300},
    {510, 0.009300, 0.503000, 0.158200},
    {515, 0.029100, 0.608200, 0.111700},
    {520, 0.063270, 0.710000, 0.078250},
    {525, 0.109600, 0.793200, 0.057250},
    {530, 0.165500, 0.862000, 0.042160},
    {535, 0.225750, 0.914850, 0.029840},
    {540, 0.290400, 0.954000, 0.020300},
    {545, 0.359700, 0.980300, 0.013400},
    {550, 0.433450, 0.994950, 0.008750},
    {555, 0.512050, 1.000000, 0.005750},
    {560, 0.594500, 0.995000, 0.003900},
    {565, 0.678400, 0.978600, 0.002750},
    {570, 0.762100, 0.952000, 0.002100},
    {575, 0.842500, 0.915400, 0.001800},
    {580, 0.916300, 0.870000, 0.001650},
    {585, 0.978600, 0.816300, 0.001400},
    {590, 1.026300, 0.757000, 0.001100},
    {595, 1.056700, 0.694900, 0.001000},
    {600, 1.062200, 0.631000, 0.000800},
    {605, 1.045600, 0.566800, 0.000600},
    {610, 1.002600, 0.503000, 0.000340},
    {615, 0.938400, 0.441200, 0.000240},
    {620, 0.854450, 0.381000, 0.000190},
    {625, 0.751400, 0.321000, 0.000100},
    {630, 0.642400, 0.265000, 0.000050},
    {635, 0.541900, 0.217000, 0.000030},
    {640, 0.447900, 0.175000, 0.000020},
    {645, 0.360800, 0.138200, 0.000010},
    {650, 0.283500, 0.107000, 0.000000},
    {655, 0.218700, 0.081600, 0.000000},
    {660, 0.164900, 0.061000, 0.000000},
    {665, 0.121200, 0.044580, 0.000000},
    {670, 0.087400, 0.032000, 0.000000},
    {675, 0.063600, 0.023200, 0.000000},
    {680, 0.046770, 0.017000, 0.000000},
    {685, 0.032900, 0.011920, 0.000000},
    {690, 0.022700, 0.008210, 0.000000},
    {695, 0.015840, 0.005723, 0.000000},
    {700, 0.011359, 0.004102, 0.000000}};

void check_chw(const Tensor& t, std::size_t channels, const char* op) {
  if (t.ndim() != 3 || (channels && t.dim(0) != channels)) {
    throw DimensionError(std::string(op) + ": expected [" +
                         (channels ? std::to_string(channels) : std::string("C")) +
                         ",H,W], got " + shape_str(t.shape()));
  }
}

double catmull_rom(double x) {
  constexpr double a = -0.5;
  x = std::abs(x);
  if (x <= 1.0) return ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0;
  if (x < 2.0) return ((a * x - 5.0 * a) * x + 8.0 * a) * x - 4.0 * a;
  return 0.0;
}

struct Taps {
  std::array<std::size_t, 4> idx;
  std::array<double, 4> w;
};

std::vector<Taps> resample_taps(std::size_t in, std::size_t out, int factor) {
  std::vector<Taps> taps(out);
  const auto last = static_cast<std::ptrdiff_t>(in) - 1;
  for (std::size_t o = 0; o < out; ++o) {
    const double src = (static_cast<double>(o) + 0.5) / factor - 0.5;
    const double base = std::floor(src);
    const double t = src - base;
    for (int k = 0; k < 4; ++k) {
      const auto i = static_cast<std::ptrdiff_t>(base) + k - 1;
      taps[o].idx[k] = static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(i, 0, last));
      taps[o].w[k] = catmull_rom(t - (k - 1));
    }
  }
  return taps;
}

}  // namespace

CmfTable CmfTable::cie1931() {
  CmfTable t;
  for (const auto& row : kCie1931) {
    t.wavelengths_nm.push_back(row[0]);
    t.xbar.push_back(row[1]);
    t.ybar.push_back(row[2]);
    t.zbar.push_back(row[3]);
  }
  return t;
}

CmfTable CmfTable::load(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open CMF table " + path.string());
  CmfTable t;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    std::istringstream is(line);
    double nm, x, y, z;
    if (!(is >> nm)) continue;
    if (!(is >> x >> y >> z)) {
      throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": expected 4 columns");
    }
    t.wavelengths_nm.push_back(nm);
    t.xbar.push_back(x);
    t.ybar.push_back(y);
    t.zbar.push_back(z);
  }
  t.validate();
  return t;
}

void CmfTable::validate() const {
  const std::size_t n = wavelengths_nm.size();
  if (n < 2 || xbar.size() != n || ybar.size() != n || zbar.size() != n) {
    throw ConfigError("CMF table: need at least two rows of four columns");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (i > 0 && !(wavelengths_nm[i] > wavelengths_nm[i - 1])) {
      throw ConfigError("CMF table: wavelength grid must be strictly increasing");
    }
    if (ybar[i] < 0) throw ConfigError("CMF table: negative ybar");
  }
}

Vec3 CmfTable::at(double nm) const {
  if (nm < wavelengths_nm.front() || nm > wavelengths_nm.back()) {
    throw ConfigError("CMF table: " + std::to_string(nm) + " nm is outside [" +
                      std::to_string(wavelengths_nm.front()) + ", " +
                      std::to_string(wavelengths_nm.back()) + "]");
  }
  auto hi = std::lower_bound(wavelengths_nm.begin(), wavelengths_nm.end(), nm);
  std::size_t j = static_cast<std::size_t>(hi - wavelengths_nm.begin());
  if (j == 0) return {xbar[0], ybar[0], zbar[0]};
  const std::size_t i = j - 1;
  const double t = (nm - wavelengths_nm[i]) / (wavelengths_nm[j] - wavelengths_nm[i]);
  auto lerp = [t, i, j](const std::vector<double>& v) { return v[i] + t * (v[j] - v[i]); };
  return {lerp(xbar), lerp(ybar), lerp(zbar)};
}

double CmfTable::luminance_integral() const {
  double s = 0;
  for (std::size_t i = 1; i < wavelengths_nm.size(); ++i) {
    s += 0.5 * (ybar[i] + ybar[i - 1]) * (wavelengths_nm[i] - wavelengths_nm[i - 1]);
  }
  return s;
}

double encode_display(double linear) {
  return std::pow(std::clamp(linear, 0.0, 1.0), 1.0 / kDisplayGamma);
}

Vec3 xyz_to_display_rgb(const Vec3& xyz, const Mat3& m) {
  Vec3 rgb{};
  for (int r = 0; r < 3; ++r) {
    rgb[r] = encode_display(m[r][0] * xyz[0] + m[r][1] * xyz[1] + m[r][2] * xyz[2]);
  }
  return rgb;
}

Tensor bicubic_upsample(const Tensor& x, int factor) {
  check_chw(x, 0, "bicubic_upsample");
  if (factor < 1) throw DimensionError("bicubic_upsample: factor must be >= 1");
  if (factor == 1) return x.clone();
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  const std::size_t oh = h * factor, ow = w * factor;
  const auto rows = resample_taps(h, oh, factor);
  const auto cols = resample_taps(w, ow, factor);

  Tensor out(Shape{c, oh, ow});
  std::vector<double> horiz(h * ow);
  for (std::size_t ch = 0; ch < c; ++ch) {
    const float* src = x.data().data() + ch * h * w;
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        const auto& t = cols[ox];
        double s = 0;
        for (int k = 0; k < 4; ++k) s += t.w[k] * src[y * w + t.idx[k]];
        horiz[y * ow + ox] = s;
      }
    }
    float* dst = out.data().data() + ch * oh * ow;
    for (std::size_t oy = 0; oy < oh; ++oy) {
      const auto& t = rows[oy];
      for (std::size_t ox = 0; ox < ow; ++ox) {
        double s = 0;
        for (int k = 0; k < 4; ++k) s += t.w[k] * horiz[t.idx[k] * ow + ox];
        dst[oy * ow + ox] = static_cast<float>(s);
      }
    }
  }
  return out;
}

std::vector<double> trapezoid_weights(const std::vector<double>& nm) {
  const std::size_t n = nm.size();
  std::vector<double> w(n, 0.0);
  for (std::size_t i = 1; i < n; ++i) {
    const double half = 0.5 * (nm[i] - nm[i - 1]);
    w[i - 1] += half;
    w[i] += half;
  }
  return w;
}

Tensor cmf_map_linear(const Tensor& ms, const MosaicLayout& layout, const CmfTable& cmf) {
  check_chw(ms, layout.bands(), "cmf_map");
  const std::vector<double> nm(layout.wavelengths().begin(), layout.wavelengths().end());
  const auto dl = trapezoid_weights(nm);
  const double norm = cmf.luminance_integral();

  // Per band, the linear-RGB contribution of unit intensity.
  std::vector<Vec3> band_rgb(layout.bands());
  for (std::size_t b = 0; b < layout.bands(); ++b) {
    const Vec3 xyz = cmf.at(nm[b]);
    for (int r = 0; r < 3; ++r) {
      const auto& m = cmf.rgb_matrix[r];
      band_rgb[b][r] = (m[0] * xyz[0] + m[1] * xyz[1] + m[2] * xyz[2]) * dl[b] / norm;
    }
  }

  const std::size_t hw = ms.dim(1) * ms.dim(2);
  Tensor out(Shape{3, ms.dim(1), ms.dim(2)});
  for (std::size_t p = 0; p < hw; ++p) {
    Vec3 acc{};
    for (std::size_t b = 0; b < layout.bands(); ++b) {
      const double v = ms[b * hw + p];
      for (int r = 0; r < 3; ++r) acc[r] += v * band_rgb[b][r];
    }
    for (int r = 0; r < 3; ++r) out[r * hw + p] = static_cast<float>(acc[r]);
  }
  return out;
}

Tensor cmf_map(const Tensor& ms, const MosaicLayout& layout, const CmfTable& cmf) {
  Tensor out = cmf_map_linear(ms, layout, cmf);
  for (auto& v : out.data()) v = static_cast<float>(encode_display(v));
  return out;
}

Tensor baseline_pipeline(const RawMosaic& raw, const MosaicLayout& layout, const CmfTable& cmf) {
  const auto compact = demux_compact(raw, layout);
  const auto up = bicubic_upsample(compact, static_cast<int>(layout.block()));
  return cmf_map(up, layout, cmf);
}

Tensor white_balance(const Tensor& img, std::array<bool, 3>* degenerate) {
  check_chw(img, 3, "white_balance");
  const std::size_t hw = img.dim(1) * img.dim(2);
  Tensor out(img.shape());
  for (std::size_t c = 0; c < 3; ++c) {
    const auto first = img.data().begin() + static_cast<std::ptrdiff_t>(c * hw);
    const auto [lo_it, hi_it] = std::minmax_element(first, first + static_cast<std::ptrdiff_t>(hw));
    const double lo = *lo_it, hi = *hi_it;
    const bool flat = !(hi > lo);
    if (degenerate) (*degenerate)[c] = flat;
    if (flat) continue;
    for (std::size_t p = 0; p < hw; ++p) {
      out[c * hw + p] = static_cast<float>((img[c * hw + p] - lo) / (hi - lo) * 255.0);
    }
  }
  return out;
}

void write_ppm(const std::filesystem::path& path, const Tensor& rgb) {
  check_chw(rgb, 3, "write_ppm");
  const std::size_t h = rgb.dim(1), w = rgb.dim(2), hw = h * w;
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw FormatError("cannot open " + path.string() + " for writing");
  f << "P6\n" << w << ' ' << h << "\n255\n";
  std::vector<unsigned char> buf(3 * hw);
  for (std::size_t p = 0; p < hw; ++p) {
    for (std::size_t c = 0; c < 3; ++c) {
      const double v = std::clamp(static_cast<double>(rgb[c * hw + p]), 0.0, 1.0);
      buf[3 * p + c] = static_cast<unsigned char>(std::lround(v * 255.0));
    }
  }
  f.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!f) throw FormatError("write failed: " + path.string());
}

}  // namespace tsr
