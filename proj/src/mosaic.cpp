#include "tsrcan/mosaic.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace tsr {

MosaicLayout::MosaicLayout(std::array<double, kBands> wavelengths_nm,
                           std::array<BlockPos, kBands> positions)
    : wavelengths_(wavelengths_nm), positions_(positions) {
  std::array<bool, kBands> taken{};
  for (std::size_t b = 0; b < kBands; ++b) {
    const auto [r, c] = positions_[b];
    if (r >= kBlock || c >= kBlock) throw ConfigError("mosaic layout: position outside the 4x4 block");
    const std::size_t cell = r * kBlock + c;
    if (taken[cell]) throw ConfigError("mosaic layout: two bands share one block position");
    taken[cell] = true;
    band_at_[cell] = b;
    if (b > 0 && !(wavelengths_[b] > wavelengths_[b - 1])) {
      throw ConfigError("mosaic layout: wavelengths must be strictly increasing");
    }
  }
}

MosaicLayout MosaicLayout::standard() {
  std::array<double, kBands> nm = {477.2, 478.2, 489.5, 500.3, 510.9, 523.2, 537.9, 548.9,
                                   553.0, 562.5, 577.3, 590.5, 599.9, 612.9, 615.9, 617.5};
  std::array<BlockPos, kBands> pos{};
  for (std::size_t b = 0; b < kBands; ++b) pos[b] = {b / kBlock, b % kBlock};
  return MosaicLayout(nm, pos);
}

namespace {
void check_mosaic_dims(std::size_t h, std::size_t w) {
  if (h == 0 || w == 0 || h % MosaicLayout::kBlock != 0 || w % MosaicLayout::kBlock != 0) {
    throw DimensionError("raw mosaic: " + std::to_string(h) + "x" + std::to_string(w) +
                         " is not a positive multiple of 4 in both directions");
  }
}
}  // namespace

RawMosaic::RawMosaic(std::size_t height, std::size_t width) : plane_(Shape{height, width}) {
  check_mosaic_dims(height, width);
}

RawMosaic::RawMosaic(Tensor plane) : plane_(std::move(plane)) {
  if (plane_.ndim() != 2) throw DimensionError("raw mosaic: expected [H,W], got " + shape_str(plane_.shape()));
  check_mosaic_dims(plane_.dim(0), plane_.dim(1));
}

Tensor demux_zero_padded(const RawMosaic& raw, const MosaicLayout& layout) {
  const std::size_t h = raw.height(), w = raw.width();
  Tensor out(Shape{layout.bands(), h, w});
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      out[(layout.band_at(y, x) * h + y) * w + x] = raw(y, x);
    }
  }
  return out;
}

RawMosaic remux(const Tensor& t, const MosaicLayout& layout) {
  if (t.ndim() != 3 || t.dim(0) != layout.bands()) {
    throw DimensionError("remux: expected [16,H,W], got " + shape_str(t.shape()));
  }
  const std::size_t h = t.dim(1), w = t.dim(2);
  RawMosaic raw(h, w);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) raw(y, x) = t[(layout.band_at(y, x) * h + y) * w + x];
  }
  return raw;
}

Tensor demux_compact(const RawMosaic& raw, const MosaicLayout& layout) {
  const std::size_t bh = raw.height() / layout.block(), bw = raw.width() / layout.block();
  Tensor out(Shape{layout.bands(), bh, bw});
  for (std::size_t c = 0; c < layout.bands(); ++c) {
    const auto [r, s] = layout.position_of_band(c);
    for (std::size_t i = 0; i < bh; ++i) {
      for (std::size_t j = 0; j < bw; ++j) {
        out[(c * bh + i) * bw + j] = raw(i * layout.block() + r, j * layout.block() + s);
      }
    }
  }
  return out;
}

Tensor compact_from_zero_padded(const Tensor& t) {
  constexpr std::size_t k = MosaicLayout::kBlock;
  if (t.ndim() != 3 || t.dim(1) % k != 0 || t.dim(2) % k != 0) {
    throw DimensionError("compact_from_zero_padded: expected [C,4h,4w], got " + shape_str(t.shape()));
  }
  const std::size_t c = t.dim(0), h = t.dim(1), w = t.dim(2);
  Tensor out(Shape{c, h / k, w / k});
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        out[(ch * (h / k) + y / k) * (w / k) + x / k] += t[(ch * h + y) * w + x];
      }
    }
  }
  return out;
}

std::size_t max_nonzero_channels_per_pixel(const Tensor& t) {
  if (t.ndim() != 3) throw DimensionError("expected [C,H,W], got " + shape_str(t.shape()));
  const std::size_t c = t.dim(0), hw = t.dim(1) * t.dim(2);
  std::size_t worst = 0;
  for (std::size_t p = 0; p < hw; ++p) {
    std::size_t count = 0;
    for (std::size_t ch = 0; ch < c; ++ch) count += t[ch * hw + p] != 0.0f;
    worst = std::max(worst, count);
  }
  return worst;
}

void write_pgm16(const std::filesystem::path& path, const RawMosaic& raw) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw FormatError("cannot open " + path.string() + " for writing");
  f << "P5\n" << raw.width() << ' ' << raw.height() << "\n65535\n";
  for (std::size_t y = 0; y < raw.height(); ++y) {
    for (std::size_t x = 0; x < raw.width(); ++x) {
      const float v = std::clamp(raw(y, x), 0.0f, 1.0f);
      const auto q = static_cast<std::uint16_t>(std::lround(v * 65535.0f));
      const char bytes[2] = {static_cast<char>(q >> 8), static_cast<char>(q & 0xFF)};
      f.write(bytes, 2);
    }
  }
  if (!f) throw FormatError("write failed: " + path.string());
}

RawMosaic read_pgm16(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot open " + path.string());
  std::string magic;
  std::size_t w = 0, h = 0, maxval = 0;
  auto next_token = [&f]() {
    std::string tok;
    while (f >> tok) {
      if (tok[0] != '#') return tok;
      std::string rest;
      std::getline(f, rest);
    }
    throw FormatError("pgm: truncated header");
  };
  magic = next_token();
  if (magic != "P5") throw FormatError(path.string() + ": not a binary PGM");
  w = std::stoul(next_token());
  h = std::stoul(next_token());
  maxval = std::stoul(next_token());
  if (maxval == 0 || maxval > 65535) throw FormatError(path.string() + ": bad maxval");
  f.get();
  RawMosaic raw(h, w);
  const bool wide = maxval > 255;
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      unsigned char b[2] = {0, 0};
      f.read(reinterpret_cast<char*>(b), wide ? 2 : 1);
      if (!f) throw FormatError(path.string() + ": truncated pixel data");
      const unsigned v = wide ? (b[0] << 8 | b[1]) : b[0];
      raw(y, x) = static_cast<float>(v) / static_cast<float>(maxval);
    }
  }
  return raw;
}

}  // namespace tsr
