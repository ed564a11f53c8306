#pragma once

// Spectrum-to-colour mapping and the conventional bicubic + CMF baseline.

#include <array>
#include <filesystem>
#include <vector>

#include "tsrcan/mosaic.hpp"
#include "tsrcan/tensor.hpp"

namespace tsr {

using Mat3 = std::array<std::array<double, 3>, 3>;
using Vec3 = std::array<double, 3>;

// XYZ -> linear sRGB (D65).
inline constexpr Mat3 kXyzToLinearSrgb = {{{3.2404542, -1.5371385, -0.4985314},
                                           {-0.9692660, 1.8760108, 0.0415560},
                                           {0.0556434, -0.2040259, 1.0572252}}};
inline constexpr double kDisplayGamma = 2.2;

struct CmfTable {
  std::vector<double> wavelengths_nm;
  std::vector<double> xbar, ybar, zbar;
  Mat3 rgb_matrix = kXyzToLinearSrgb;

  // CIE 1931 2-degree observer, 400-700 nm at 5 nm.
  static CmfTable cie1931();
  // Text table, one "nm xbar ybar zbar" row per line; '#' starts a comment.
  static CmfTable load(const std::filesystem::path& path);

  // Throws ConfigError on a non-increasing grid, ragged columns or negative ybar.
  void validate() const;

  // Linear interpolation on the grid; ConfigError outside it.
  Vec3 at(double nm) const;

  // Trapezoidal integral of ybar over the grid; a flat unit spectrum maps to Y = 1
  // once tristimulus values are divided by it.
  double luminance_integral() const;
};

// Linear RGB -> display RGB: clamp to [0, 1] then 1/2.2 power.
double encode_display(double linear);

// Display RGB pixel from (normalised) XYZ.
Vec3 xyz_to_display_rgb(const Vec3& xyz, const Mat3& m);

// Catmull-Rom (a = -0.5) upsampling of [C,h,w] by an integer factor; pixel
// centres are aligned and out-of-range taps clamp to the edge.
Tensor bicubic_upsample(const Tensor& x, int factor);

// Trapezoidal weights for samples at the given (increasing) wavelengths.
std::vector<double> trapezoid_weights(const std::vector<double>& nm);

// [16,H,W] band intensities -> linear RGB [3,H,W] before clamping and gamma.
Tensor cmf_map_linear(const Tensor& ms, const MosaicLayout& layout, const CmfTable& cmf);

// [16,H,W] band intensities -> display RGB [3,H,W] in [0, 1].
Tensor cmf_map(const Tensor& ms, const MosaicLayout& layout, const CmfTable& cmf);

// demux_compact -> bicubic x4 -> cmf_map, at full mosaic resolution.
Tensor baseline_pipeline(const RawMosaic& raw, const MosaicLayout& layout, const CmfTable& cmf);

// Maps each channel of [3,H,W] affinely onto [0, 255]. A channel with max == min
// becomes zeros and is flagged in `degenerate`.
Tensor white_balance(const Tensor& img, std::array<bool, 3>* degenerate = nullptr);

// Binary PPM (P6, maxval 255) of a [3,H,W] image in [0, 1].
void write_ppm(const std::filesystem::path& path, const Tensor& rgb);

}  // namespace tsr
