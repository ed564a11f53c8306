#pragma once

// Synthetic paired scenes (mosaic raw + RGB ground truth), dataset splits,
// phase-preserving augmentation and the on-disk dataset layout.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "tsrcan/chroma.hpp"
#include "tsrcan/config.hpp"
#include "tsrcan/metrics.hpp"
#include "tsrcan/mosaic.hpp"

namespace tsr {

std::uint64_t splitmix64(std::uint64_t x);

struct SceneSpec {
  std::uint64_t seed = 0;
  std::size_t height = 32;
  std::size_t width = 64;
  int num_patches = 6;
  double band_fwhm_nm = 15.0;
  // Per-patch multiplicative texture strength (0 disables texture).
  double texture = 0.35;
  // Envelopes and texture become spatially constant.
  bool flat = false;
  // Max |log gain| of a random exposure factor on the raw image; 0 = off.
  double raw_gain_jitter = 0.0;

  void validate() const;
  KeyValues to_key_values() const;
};

struct DatasetSample {
  std::string id;
  RawMosaic raw;
  Tensor hr_rgb;  // [3,H,W], display-encoded, in [0,1]
  std::optional<Mask> mask;
};

DatasetSample generate_scene(const SceneSpec& spec,
                             const MosaicLayout& layout = MosaicLayout::standard(),
                             const CmfTable& cmf = CmfTable::cie1931());

struct Split {
  std::vector<std::size_t> train, val, test;
};

// val = round(n*25/296), test = round(n*21/296), each at least 1; train takes
// the rest. Indices are shuffled by the seed before being dealt out.
Split make_split(std::size_t n, std::uint64_t seed);

struct AugmentParams {
  std::size_t top = 0, left = 0;  // multiples of 4
  int quarter_turns = 0;          // counter-clockwise, 0..3
  bool flip = false;              // horizontal, applied after rotation
};

AugmentParams sample_augment(std::mt19937_64& rng, std::size_t height, std::size_t width,
                             std::size_t crop);

// Crops [C,H,W] tensors to crop x crop and applies the rotation and flip. Every
// channel moves with its pixels, so channel c still carries band c; a crop
// origin on the 4-grid keeps each 4x4 block intact.
Tensor apply_augment(const Tensor& t, const AugmentParams& p, std::size_t crop);

struct AugmentedPair {
  Tensor input;   // [16,crop,crop]
  Tensor target;  // [3,crop,crop]
};

AugmentedPair augment(const Tensor& ms, const Tensor& target, std::mt19937_64& rng,
                      std::size_t crop = 120);

// ---- dataset directory --------------------------------------------------------
//
// <root>/dataset.txt    generation parameters
// <root>/splits.txt     train/val/test = comma-separated ids
// <root>/<id>/raw.msrt  [H,W]; hr_rgb.msrt [3,H,W]; mask.msrt [H,W] (optional); meta.txt

void write_sample(const std::filesystem::path& dir, const DatasetSample& s, const KeyValues& meta);
DatasetSample read_sample(const std::filesystem::path& dir);

struct DatasetIndex {
  std::filesystem::path root;
  std::vector<std::string> train, val, test;
  KeyValues info;

  static DatasetIndex open(const std::filesystem::path& root);
  DatasetSample load(const std::string& id) const { return read_sample(root / id); }
};

struct GenerateOptions {
  std::size_t count = 30;
  std::size_t height = 32;
  std::size_t width = 64;
  std::uint64_t seed = 0;
  int num_patches = 6;
};

// Writes count scenes plus the split manifest; returns the index.
DatasetIndex generate_dataset(const std::filesystem::path& root, const GenerateOptions& opt);

}  // namespace tsr
