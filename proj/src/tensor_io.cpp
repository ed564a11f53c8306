#include "tsrcan/tensor_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace tsr {
namespace {

constexpr char kMagic[4] = {'M', 'S', 'R', 'T'};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | static_cast<std::uint32_t>(p[1]) << 8 |
         static_cast<std::uint32_t>(p[2]) << 16 | static_cast<std::uint32_t>(p[3]) << 24;
}

}  // namespace

std::vector<std::uint8_t> encode_tensor(const Tensor& t) {
  if (t.ndim() > 255) throw DimensionError("encode_tensor: rank exceeds 255");
  std::vector<std::uint8_t> out(kMagic, kMagic + 4);
  out.push_back(kTensorFileVersion);
  out.push_back(static_cast<std::uint8_t>(t.ndim()));
  for (std::size_t d : t.shape()) {
    if (d > 0xFFFFFFFFu) throw DimensionError("encode_tensor: dimension exceeds u32");
    put_u32(out, static_cast<std::uint32_t>(d));
  }
  out.reserve(out.size() + 4 * t.numel());
  for (float v : t.data()) put_u32(out, std::bit_cast<std::uint32_t>(v));
  return out;
}

Tensor decode_tensor(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 6 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw FormatError("tensor file: bad magic");
  }
  if (bytes[4] != kTensorFileVersion) {
    throw FormatError("tensor file: unsupported version " + std::to_string(bytes[4]));
  }
  const std::size_t ndim = bytes[5];
  std::size_t pos = 6;
  if (bytes.size() < pos + 4 * ndim) throw FormatError("tensor file: truncated header");
  Shape shape(ndim);
  for (std::size_t i = 0; i < ndim; ++i, pos += 4) shape[i] = get_u32(bytes.data() + pos);
  const std::size_t n = numel(shape);
  if (bytes.size() != pos + 4 * n) {
    throw FormatError("tensor file: payload holds " + std::to_string((bytes.size() - pos) / 4) +
                      " values, shape " + shape_str(shape) + " needs " + std::to_string(n));
  }
  std::vector<float> values(n);
  for (std::size_t i = 0; i < n; ++i, pos += 4) {
    values[i] = std::bit_cast<float>(get_u32(bytes.data() + pos));
  }
  return Tensor(std::move(shape), std::move(values));
}

void write_tensor(const std::filesystem::path& path, const Tensor& t) {
  const auto bytes = encode_tensor(t);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw FormatError("cannot open " + path.string() + " for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw FormatError("write failed: " + path.string());
}

Tensor read_tensor(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  try {
    return decode_tensor(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

}  // namespace tsr
