#pragma once

// 4x4 snapshot-mosaic geometry and the two network input formations:
// zero-padded (16 x H x W, each sub-pixel in its own channel at its true
// location) and compact (16 x H/4 x W/4, one vector per mosaic block).

#include <array>
#include <filesystem>
#include <utility>
#include <vector>

#include "tsrcan/tensor.hpp"

namespace tsr {

struct BlockPos {
  std::size_t row = 0;
  std::size_t col = 0;
  bool operator==(const BlockPos&) const = default;
};

class MosaicLayout {
 public:
  static constexpr std::size_t kBlock = 4;
  static constexpr std::size_t kBands = kBlock * kBlock;

  // Throws ConfigError unless positions form a bijection onto the block and
  // wavelengths strictly increase.
  MosaicLayout(std::array<double, kBands> wavelengths_nm, std::array<BlockPos, kBands> positions);

  // The 16-band VIS camera; band i sits at (i / 4, i % 4).
  static MosaicLayout standard();

  std::size_t block() const { return kBlock; }
  std::size_t bands() const { return kBands; }
  double wavelength(std::size_t band) const { return wavelengths_.at(band); }
  const std::array<double, kBands>& wavelengths() const { return wavelengths_; }
  BlockPos position_of_band(std::size_t band) const { return positions_.at(band); }
  std::size_t band_at(std::size_t row, std::size_t col) const {
    return band_at_[(row % kBlock) * kBlock + col % kBlock];
  }

 private:
  std::array<double, kBands> wavelengths_;
  std::array<BlockPos, kBands> positions_;
  std::array<std::size_t, kBands> band_at_{};
};

// Single-plane sensor image with values in [0, 1]; both sides multiples of 4.
class RawMosaic {
 public:
  RawMosaic(std::size_t height, std::size_t width);
  explicit RawMosaic(Tensor plane);  // plane must be [H, W]

  std::size_t height() const { return plane_.dim(0); }
  std::size_t width() const { return plane_.dim(1); }
  float operator()(std::size_t y, std::size_t x) const { return plane_[y * width() + x]; }
  float& operator()(std::size_t y, std::size_t x) { return plane_[y * width() + x]; }
  const Tensor& plane() const { return plane_; }

 private:
  Tensor plane_;
};

Tensor demux_zero_padded(const RawMosaic& raw, const MosaicLayout& layout);

// Reads each pixel from the channel the layout assigns to its block position.
RawMosaic remux(const Tensor& t, const MosaicLayout& layout);

Tensor demux_compact(const RawMosaic& raw, const MosaicLayout& layout);

// Collapses a zero-padded tensor [16,H,W] (any band-to-position arrangement
// with one sample per band per block) into compact form by summing each block.
Tensor compact_from_zero_padded(const Tensor& t);

// Largest number of nonzero channels found at any single pixel of [C,H,W].
std::size_t max_nonzero_channels_per_pixel(const Tensor& t);

// 16-bit binary PGM (P5, maxval 65535) <-> [0,1] raw mosaics.
void write_pgm16(const std::filesystem::path& path, const RawMosaic& raw);
RawMosaic read_pgm16(const std::filesystem::path& path);

}  // namespace tsr
