#pragma once

// Portable tensor files: "MSRT", u8 version (1), u8 ndim, ndim x u32 LE dims,
// then the f32 LE payload in row-major order.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "tsrcan/tensor.hpp"

namespace tsr {

inline constexpr std::uint8_t kTensorFileVersion = 1;

std::vector<std::uint8_t> encode_tensor(const Tensor& t);
Tensor decode_tensor(const std::vector<std::uint8_t>& bytes);

void write_tensor(const std::filesystem::path& path, const Tensor& t);
Tensor read_tensor(const std::filesystem::path& path);

}  // namespace tsr
