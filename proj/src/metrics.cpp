#include "tsrcan/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <tuple>

namespace tsr {
namespace {

void check_rgb_pair(const Tensor& a, const Tensor& b, const Mask* mask, const char* op) {
  if (a.ndim() != 3 || a.dim(0) != 3 || a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": expected two [3,H,W] images of equal shape, got " +
                         shape_str(a.shape()) + " and " + shape_str(b.shape()));
  }
  if (mask && (mask->height() != a.dim(1) || mask->width() != a.dim(2))) {
    throw DimensionError(std::string(op) + ": mask does not match image size");
  }
}

std::vector<double> luma255(const Tensor& img) {
  const std::size_t hw = img.dim(1) * img.dim(2);
  std::vector<double> y(hw);
  for (std::size_t p = 0; p < hw; ++p) {
    y[p] = 255.0 * (0.299 * img[p] + 0.587 * img[hw + p] + 0.114 * img[2 * hw + p]);
  }
  return y;
}

std::vector<double> gaussian_kernel() {
  std::vector<double> k(kSsimWindow);
  const double c = (kSsimWindow - 1) / 2.0;
  double s = 0;
  for (std::size_t i = 0; i < kSsimWindow; ++i) {
    k[i] = std::exp(-(i - c) * (i - c) / (2 * kSsimSigma * kSsimSigma));
    s += k[i];
  }
  for (auto& v : k) v /= s;
  return k;
}

// Separable Gaussian filter over valid window positions.
std::vector<double> filter_valid(const std::vector<double>& img, std::size_t h, std::size_t w,
                                 const std::vector<double>& k) {
  const std::size_t n = k.size(), oh = h - n + 1, ow = w - n + 1;
  std::vector<double> tmp(h * ow), out(oh * ow);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < ow; ++x) {
      double s = 0;
      for (std::size_t j = 0; j < n; ++j) s += k[j] * img[y * w + x + j];
      tmp[y * ow + x] = s;
    }
  for (std::size_t y = 0; y < oh; ++y)
    for (std::size_t x = 0; x < ow; ++x) {
      double s = 0;
      for (std::size_t i = 0; i < n; ++i) s += k[i] * tmp[(y + i) * ow + x];
      out[y * ow + x] = s;
    }
  return out;
}

double mean_of(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double pop_std(const std::vector<double>& v, double mean) {
  double s = 0;
  for (double x : v) s += (x - mean) * (x - mean);
  return std::sqrt(s / static_cast<double>(v.size()));
}

}  // namespace

Mask Mask::from_tensor(const Tensor& t) {
  if (t.ndim() != 2) throw DimensionError("mask: expected [H,W], got " + shape_str(t.shape()));
  Mask m(t.dim(0), t.dim(1), false);
  for (std::size_t i = 0; i < t.numel(); ++i) m.keep_[i] = t[i] != 0.0f;
  return m;
}

Tensor Mask::to_tensor() const {
  Tensor t(Shape{height_, width_});
  for (std::size_t i = 0; i < keep_.size(); ++i) t[i] = keep_[i] ? 1.0f : 0.0f;
  return t;
}

std::size_t Mask::kept() const {
  return static_cast<std::size_t>(std::count(keep_.begin(), keep_.end(), std::uint8_t{1}));
}

double psnr(const Tensor& a, const Tensor& b, const Mask* mask) {
  check_rgb_pair(a, b, mask, "psnr");
  const std::size_t h = a.dim(1), w = a.dim(2), hw = h * w;
  double se = 0;
  std::size_t count = 0;
  for (std::size_t p = 0; p < hw; ++p) {
    if (mask && !mask->keep(p / w, p % w)) continue;
    for (std::size_t c = 0; c < 3; ++c) {
      const double d = 255.0 * (static_cast<double>(a[c * hw + p]) - static_cast<double>(b[c * hw + p]));
      se += d * d;
    }
    count += 3;
  }
  if (count == 0) throw UsageError("psnr: mask keeps no pixels");
  const double mse = se / static_cast<double>(count);
  if (mse == 0.0) return kPsnrIdenticalDb;
  return 20.0 * std::log10(255.0 / std::sqrt(mse));
}

double ssim(const Tensor& a, const Tensor& b, const Mask* mask) {
  check_rgb_pair(a, b, mask, "ssim");
  const std::size_t h = a.dim(1), w = a.dim(2);
  if (h < kSsimWindow || w < kSsimWindow) {
    throw DimensionError("ssim: image " + std::to_string(h) + "x" + std::to_string(w) +
                         " is smaller than the 11x11 window");
  }
  const auto ya = luma255(a), yb = luma255(b);
  std::vector<double> aa(ya.size()), bb(ya.size()), ab(ya.size());
  for (std::size_t i = 0; i < ya.size(); ++i) {
    aa[i] = ya[i] * ya[i];
    bb[i] = yb[i] * yb[i];
    ab[i] = ya[i] * yb[i];
  }
  const auto k = gaussian_kernel();
  const auto mu_a = filter_valid(ya, h, w, k), mu_b = filter_valid(yb, h, w, k);
  const auto e_aa = filter_valid(aa, h, w, k), e_bb = filter_valid(bb, h, w, k);
  const auto e_ab = filter_valid(ab, h, w, k);

  constexpr double c1 = (0.01 * 255) * (0.01 * 255);
  constexpr double c2 = (0.03 * 255) * (0.03 * 255);
  const std::size_t half = kSsimWindow / 2, ow = w - kSsimWindow + 1;
  double s = 0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < mu_a.size(); ++i) {
    if (mask && !mask->keep(i / ow + half, i % ow + half)) continue;
    const double va = e_aa[i] - mu_a[i] * mu_a[i];
    const double vb = e_bb[i] - mu_b[i] * mu_b[i];
    const double cov = e_ab[i] - mu_a[i] * mu_b[i];
    s += ((2 * mu_a[i] * mu_b[i] + c1) * (2 * cov + c2)) /
         ((mu_a[i] * mu_a[i] + mu_b[i] * mu_b[i] + c1) * (va + vb + c2));
    ++count;
  }
  if (count == 0) throw UsageError("ssim: mask keeps no window centre");
  return s / static_cast<double>(count);
}

SidRgb sid_per_channel(const Tensor& a, const Tensor& b, const Mask* mask) {
  check_rgb_pair(a, b, mask, "sid");
  const std::size_t w = a.dim(2), hw = a.dim(1) * w;
  static constexpr const char* kNames[3] = {"red", "green", "blue"};
  std::array<double, 3> out{};
  for (std::size_t c = 0; c < 3; ++c) {
    std::vector<double> p, q;
    double raw_a = 0, raw_b = 0;
    for (std::size_t i = 0; i < hw; ++i) {
      if (mask && !mask->keep(i / w, i % w)) continue;
      const double va = a[c * hw + i], vb = b[c * hw + i];
      if (va < 0 || vb < 0) throw UsageError("sid: negative intensity in the " + std::string(kNames[c]) + " channel");
      raw_a += va;
      raw_b += vb;
      p.push_back(std::max(va, kSidFloor));
      q.push_back(std::max(vb, kSidFloor));
    }
    if (p.empty()) throw UsageError("sid: mask keeps no pixels");
    if (raw_a == 0 || raw_b == 0) {
      throw UsageError("sid: the " + std::string(kNames[c]) + " channel is identically zero");
    }
    double sp = 0, sq = 0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      sp += p[i];
      sq += q[i];
    }
    double d = 0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double pi = p[i] / sp, qi = q[i] / sq;
      d += (pi - qi) * std::log(pi / qi);
    }
    out[c] = d;
  }
  return {out[2], out[1], out[0]};
}

ImageMetrics evaluate_image(const std::string& id, const Tensor& prediction, const Tensor& target,
                            const Mask* mask) {
  return {id, psnr(prediction, target, mask), ssim(prediction, target, mask),
          sid_per_channel(prediction, target, mask)};
}

MetricReport aggregate(const std::vector<ImageMetrics>& images) {
  if (images.empty()) throw UsageError("aggregate: no images");
  MetricReport r;
  r.per_image = images;
  auto column = [&](auto get) {
    std::vector<double> v;
    for (const auto& m : images) v.push_back(get(m));
    const double mu = mean_of(v);
    return std::pair{mu, pop_std(v, mu)};
  };
  std::tie(r.mean.psnr_db, r.std.psnr_db) = column([](const auto& m) { return m.psnr_db; });
  std::tie(r.mean.ssim, r.std.ssim) = column([](const auto& m) { return m.ssim; });
  std::tie(r.mean.sid_blue, r.std.sid_blue) = column([](const auto& m) { return m.sid.blue; });
  std::tie(r.mean.sid_green, r.std.sid_green) = column([](const auto& m) { return m.sid.green; });
  std::tie(r.mean.sid_red, r.std.sid_red) = column([](const auto& m) { return m.sid.red; });
  return r;
}

void write_report_csv(std::ostream& os, const MetricReport& report) {
  const auto flags = os.flags();
  const auto prec = os.precision();
  os << std::setprecision(17);
  os << "id,psnr_db,ssim,sid_blue,sid_green,sid_red\n";
  for (const auto& m : report.per_image) {
    os << m.id << ',' << m.psnr_db << ',' << m.ssim << ',' << m.sid.blue << ',' << m.sid.green << ','
       << m.sid.red << '\n';
  }
  auto row = [&os](const char* label, const MetricSummary& s) {
    os << label << ',' << s.psnr_db << ',' << s.ssim << ',' << s.sid_blue << ',' << s.sid_green << ','
       << s.sid_red << '\n';
  };
  row("mean", report.mean);
  row("std", report.std);
  os.flags(flags);
  os.precision(prec);
}

void write_report_table(std::ostream& os, const std::string& method, const MetricReport& report) {
  const auto flags = os.flags();
  const auto prec = os.precision();
  os << std::left << std::setw(18) << "Method" << std::setw(18) << "PSNR (dB)" << std::setw(16)
     << "SSIM" << std::setw(22) << "SID Blue" << std::setw(22) << "SID Green" << "SID Red\n";
  auto cell = [&os](double mean, double sd, int width, bool sci) {
    std::ostringstream c;
    if (sci) c << std::scientific << std::setprecision(2);
    else c << std::fixed << std::setprecision(3);
    c << mean << " (" << sd << ")";
    os << std::setw(width) << c.str();
  };
  os << std::setw(18) << method;
  cell(report.mean.psnr_db, report.std.psnr_db, 18, false);
  cell(report.mean.ssim, report.std.ssim, 16, false);
  cell(report.mean.sid_blue, report.std.sid_blue, 22, true);
  cell(report.mean.sid_green, report.std.sid_green, 22, true);
  cell(report.mean.sid_red, report.std.sid_red, 0, true);
  os << "\n# " << report.per_image.size()
     << " images; PSNR over joint RGB (255 scale), SSIM on luma, population std\n";
  os.flags(flags);
  os.precision(prec);
}

Mask occlusion_mask(const Tensor& flow_fw, const Tensor& flow_bw, double threshold_px) {
  if (flow_fw.ndim() != 3 || flow_fw.dim(0) != 2 || flow_fw.shape() != flow_bw.shape()) {
    throw DimensionError("occlusion_mask: expected two [2,H,W] flows of equal shape, got " +
                         shape_str(flow_fw.shape()) + " and " + shape_str(flow_bw.shape()));
  }
  const std::size_t h = flow_fw.dim(1), w = flow_fw.dim(2), hw = h * w;
  Mask mask(h, w, false);
  auto sample = [&](std::size_t ch, double x, double y) {
    const auto x0 = static_cast<std::size_t>(std::floor(x));
    const auto y0 = static_cast<std::size_t>(std::floor(y));
    const std::size_t x1 = std::min(x0 + 1, w - 1), y1 = std::min(y0 + 1, h - 1);
    const double tx = x - static_cast<double>(x0), ty = y - static_cast<double>(y0);
    const float* f = flow_bw.data().data() + ch * hw;
    return (1 - ty) * ((1 - tx) * f[y0 * w + x0] + tx * f[y0 * w + x1]) +
           ty * ((1 - tx) * f[y1 * w + x0] + tx * f[y1 * w + x1]);
  };
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const double u = flow_fw[y * w + x], v = flow_fw[hw + y * w + x];
      const double qx = static_cast<double>(x) + u, qy = static_cast<double>(y) + v;
      if (!(qx >= 0 && qy >= 0 && qx <= static_cast<double>(w - 1) && qy <= static_cast<double>(h - 1))) {
        continue;
      }
      const double ex = u + sample(0, qx, qy), ey = v + sample(1, qx, qy);
      mask.set(y, x, std::hypot(ex, ey) <= threshold_px);
    }
  }
  return mask;
}

}  // namespace tsr
