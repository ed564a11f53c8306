#pragma once

// Table-style evaluation: PSNR (joint RGB, 255 scale), SSIM (luma, 11x11
// Gaussian, sigma 1.5), per-channel spectral information divergence, and
// mean / population standard deviation over a test set.

#include <array>
#include <cstdint>
#include <iosfwd>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "tsrcan/tensor.hpp"

namespace tsr {

inline constexpr double kPsnrIdenticalDb = 100.0;
inline constexpr double kSidFloor = 1e-12;
inline constexpr std::size_t kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;

// Pixels with keep == true take part in a metric.
class Mask {
 public:
  Mask(std::size_t height, std::size_t width, bool keep = true)
      : height_(height), width_(width), keep_(height * width, keep ? 1 : 0) {}

  // From a [H,W] tensor: nonzero means keep.
  static Mask from_tensor(const Tensor& t);
  Tensor to_tensor() const;

  std::size_t height() const { return height_; }
  std::size_t width() const { return width_; }
  bool keep(std::size_t y, std::size_t x) const { return keep_[y * width_ + x] != 0; }
  void set(std::size_t y, std::size_t x, bool keep) { keep_[y * width_ + x] = keep ? 1 : 0; }
  std::size_t kept() const;

 private:
  std::size_t height_, width_;
  std::vector<std::uint8_t> keep_;
};

double psnr(const Tensor& a, const Tensor& b, const Mask* mask = nullptr);
double ssim(const Tensor& a, const Tensor& b, const Mask* mask = nullptr);

struct SidRgb {
  double blue = 0, green = 0, red = 0;
};
SidRgb sid_per_channel(const Tensor& a, const Tensor& b, const Mask* mask = nullptr);

struct ImageMetrics {
  std::string id;
  double psnr_db = 0;
  double ssim = 0;
  SidRgb sid;
};

ImageMetrics evaluate_image(const std::string& id, const Tensor& prediction, const Tensor& target,
                            const Mask* mask = nullptr);

struct MetricSummary {
  double psnr_db = 0, ssim = 0, sid_blue = 0, sid_green = 0, sid_red = 0;
};

struct MetricReport {
  std::vector<ImageMetrics> per_image;
  MetricSummary mean;
  MetricSummary std;
};

MetricReport aggregate(const std::vector<ImageMetrics>& images);

void write_report_csv(std::ostream& os, const MetricReport& report);
// Aligned table with one "mean (std)" row under a method label.
void write_report_table(std::ostream& os, const std::string& method, const MetricReport& report);

// Forward/backward flow consistency. Flows are [2,H,W] (dx, dy) in pixels. A
// pixel is dropped when its forward target leaves the image or when
// |fw(p) + bw(p + fw(p))| exceeds the threshold, bw sampled bilinearly.
Mask occlusion_mask(const Tensor& flow_fw, const Tensor& flow_bw, double threshold_px = 3.0);

}  // namespace tsr
