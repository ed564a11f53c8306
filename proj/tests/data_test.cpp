#include <gtest/gtest.h>

#include <filesystem>
#include <set>

#include "test_util.hpp"
#include "tsrcan/data.hpp"

using namespace tsr;

namespace {

SceneSpec small_spec(std::uint64_t seed) {
  SceneSpec s;
  s.seed = seed;
  s.height = 16;
  s.width = 24;
  return s;
}

}  // namespace

TEST(Scene, SameSeedBitIdentical) {
  const DatasetSample a = generate_scene(small_spec(3)), b = generate_scene(small_spec(3));
  EXPECT_EQ(a.raw.plane().values(), b.raw.plane().values());
  EXPECT_EQ(a.hr_rgb.values(), b.hr_rgb.values());
  const DatasetSample c = generate_scene(small_spec(4));
  EXPECT_NE(a.hr_rgb.values(), c.hr_rgb.values());
}

TEST(Scene, ZeroPatchesIsBlack) {
  SceneSpec s = small_spec(5);
  s.num_patches = 0;
  const DatasetSample d = generate_scene(s);
  for (float v : d.raw.plane().values()) EXPECT_EQ(v, 0.0f);
  for (float v : d.hr_rgb.values()) EXPECT_EQ(v, 0.0f);
}

TEST(Scene, RangesAndShapes) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const DatasetSample d = generate_scene(small_spec(seed));
    EXPECT_EQ(d.hr_rgb.shape(), (Shape{3, 16, 24}));
    EXPECT_EQ(d.raw.height(), 16u);
    for (float v : d.hr_rgb.values()) EXPECT_TRUE(v >= 0.0f && v <= 1.0f);
    for (float v : d.raw.plane().values()) EXPECT_TRUE(v >= 0.0f && v <= 1.0f);
  }
}

TEST(Scene, InvalidSpecRejected) {
  SceneSpec s = small_spec(1);
  s.height = 18;
  EXPECT_THROW(generate_scene(s), DimensionError);
  s = small_spec(1);
  s.texture = 1.0;
  EXPECT_THROW(generate_scene(s), ConfigError);
}

TEST(Scene, FlatSceneBaselineIsPureChromaticError) {
  // A constant scene has constant band planes, so bicubic upsampling is exact
  // and the baseline reduces to the CMF mapping of the 16 band values.
  SceneSpec s = small_spec(6);
  s.flat = true;
  const DatasetSample d = generate_scene(s);
  const MosaicLayout layout = MosaicLayout::standard();
  const CmfTable cmf = CmfTable::cie1931();
  Tensor bands(Shape{16, 1, 1});
  for (std::size_t b = 0; b < 16; ++b) {
    const BlockPos p = layout.position_of_band(b);
    bands[b] = d.raw(p.row, p.col);
  }
  const Tensor expect = cmf_map(bands, layout, cmf);
  const Tensor base = baseline_pipeline(d.raw, layout, cmf);
  const std::size_t hw = 16 * 24;
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t i = 0; i < hw; ++i) EXPECT_NEAR(base[c * hw + i], expect[c], 1e-5);
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t i = 1; i < hw; ++i) EXPECT_EQ(d.hr_rgb[c * hw + i], d.hr_rgb[c * hw]);
}

TEST(Scene, RawGainJitterScalesRawOnly) {
  SceneSpec s = small_spec(7);
  const DatasetSample plain = generate_scene(s);
  s.raw_gain_jitter = 0.3;
  const DatasetSample gained = generate_scene(s);
  EXPECT_EQ(plain.hr_rgb.values(), gained.hr_rgb.values());
  EXPECT_NE(plain.raw.plane().values(), gained.raw.plane().values());
}

TEST(Split, PaperAndDeskSizes) {
  const Split p = make_split(296, 1);
  EXPECT_EQ(p.train.size(), 250u);
  EXPECT_EQ(p.val.size(), 25u);
  EXPECT_EQ(p.test.size(), 21u);
  const Split d = make_split(30, 1);  // frozen rounding rule
  EXPECT_EQ(d.train.size(), 25u);
  EXPECT_EQ(d.val.size(), 3u);
  EXPECT_EQ(d.test.size(), 2u);
}

TEST(Split, PartitionForAllSizes) {
  for (std::size_t n = 3; n <= 120; ++n) {
    const Split s = make_split(n, n);
    std::set<std::size_t> all;
    for (const auto* v : {&s.train, &s.val, &s.test}) {
      EXPECT_FALSE(v->empty()) << n;
      all.insert(v->begin(), v->end());
    }
    EXPECT_EQ(all.size(), n);
    EXPECT_EQ(s.train.size() + s.val.size() + s.test.size(), n);
    EXPECT_EQ(*all.rbegin(), n - 1);
  }
  EXPECT_THROW(make_split(2, 0), UsageError);
}

TEST(Split, DeterministicInSeed) {
  EXPECT_EQ(make_split(40, 9).test, make_split(40, 9).test);
  EXPECT_NE(make_split(40, 9).train, make_split(40, 10).train);
}

TEST(Augment, IdentityParamsGivePlainCrop) {
  std::mt19937_64 rng(1);
  const Tensor t = testutil::random_tensor(Shape{2, 12, 16}, rng);
  const Tensor c = apply_augment(t, {4, 8, 0, false}, 8);
  for (std::size_t ch = 0; ch < 2; ++ch)
    for (std::size_t y = 0; y < 8; ++y)
      for (std::size_t x = 0; x < 8; ++x) EXPECT_EQ(c.at({ch, y, x}), t.at({ch, y + 4, x + 8}));
}

TEST(Augment, RotationAndFlipGeometry) {
  Tensor t(Shape{1, 4, 4});
  for (std::size_t i = 0; i < 16; ++i) t[i] = static_cast<float>(i);
  const Tensor r = apply_augment(t, {0, 0, 1, false}, 4);
  EXPECT_EQ(r.at({0, 0, 0}), t.at({0, 0, 3}));  // top-right corner moves to top-left
  EXPECT_EQ(r.at({0, 3, 0}), t.at({0, 0, 0}));
  const Tensor f = apply_augment(t, {0, 0, 0, true}, 4);
  EXPECT_EQ(f.at({0, 1, 0}), t.at({0, 1, 3}));
  const Tensor twice = apply_augment(apply_augment(t, {0, 0, 2, false}, 4), {0, 0, 2, false}, 4);
  EXPECT_EQ(twice.values(), t.values());
  const Tensor four = apply_augment(apply_augment(t, {0, 0, 1, false}, 4), {0, 0, 3, false}, 4);
  EXPECT_EQ(four.values(), t.values());
}

TEST(Augment, SamplingStaysOnGridAndCoversTransforms) {
  std::mt19937_64 rng(2);
  std::set<int> turns;
  int flips = 0;
  for (int i = 0; i < 400; ++i) {
    const AugmentParams p = sample_augment(rng, 40, 64, 16);
    EXPECT_EQ(p.top % 4, 0u);
    EXPECT_EQ(p.left % 4, 0u);
    EXPECT_LE(p.top + 16, 40u);
    EXPECT_LE(p.left + 16, 64u);
    turns.insert(p.quarter_turns);
    flips += p.flip;
  }
  EXPECT_EQ(turns.size(), 4u);
  EXPECT_GT(flips, 150);
  EXPECT_LT(flips, 250);
  EXPECT_THROW(sample_augment(rng, 8, 64, 16), DimensionError);
  EXPECT_THROW(sample_augment(rng, 40, 64, 10), DimensionError);
}

TEST(Augment, PreservesMosaicPhase) {
  const MosaicLayout layout = MosaicLayout::standard();
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    RawMosaic raw(32, 48);
    for (std::size_t y = 0; y < 32; ++y)
      for (std::size_t x = 0; x < 48; ++x) raw(y, x) = 0.1f + std::uniform_real_distribution<float>(0, 1)(rng);
    const Tensor ms = demux_zero_padded(raw, layout);
    const Tensor target(Shape{3, 32, 48}, 0.5f);
    const AugmentedPair a = augment(ms, target, rng, 24);
    ASSERT_EQ(a.input.shape(), (Shape{16, 24, 24}));
    EXPECT_LE(max_nonzero_channels_per_pixel(a.input), 1u);
    // Every 4x4 block still holds exactly one sample of every band.
    for (std::size_t by = 0; by < 6; ++by)
      for (std::size_t bx = 0; bx < 6; ++bx)
        for (std::size_t b = 0; b < 16; ++b) {
          int n = 0;
          for (std::size_t y = 0; y < 4; ++y)
            for (std::size_t x = 0; x < 4; ++x) n += a.input.at({b, by * 4 + y, bx * 4 + x}) != 0.0f;
          EXPECT_EQ(n, 1);
        }
  }
}

TEST(Augment, PairStaysCorresponding) {
  // Target derived pixelwise from the input keeps that relation after augmenting.
  std::mt19937_64 rng(4);
  const Tensor ms = testutil::random_tensor(Shape{16, 20, 20}, rng);
  Tensor target(Shape{3, 20, 20});
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t p = 0; p < 400; ++p) target[c * 400 + p] = 2.0f * ms[c * 400 + p];
  for (int trial = 0; trial < 10; ++trial) {
    const AugmentedPair a = augment(ms, target, rng, 12);
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t p = 0; p < 144; ++p) EXPECT_EQ(a.target[c * 144 + p], 2.0f * a.input[c * 144 + p]);
  }
}

TEST(Dataset, GenerateWriteReadRoundTrip) {
  const auto root = std::filesystem::temp_directory_path() / "tsrcan_dataset_test";
  std::filesystem::remove_all(root);
  GenerateOptions opt;
  opt.count = 6;
  opt.height = 16;
  opt.width = 16;
  opt.seed = 11;
  const DatasetIndex made = generate_dataset(root, opt);
  const DatasetIndex idx = DatasetIndex::open(root);
  EXPECT_EQ(idx.train, made.train);
  EXPECT_EQ(idx.val.size() + idx.test.size() + idx.train.size(), 6u);
  const DatasetSample s = idx.load(idx.test.front());
  EXPECT_EQ(s.id, idx.test.front());
  EXPECT_EQ(s.hr_rgb.shape(), (Shape{3, 16, 16}));
  EXPECT_FALSE(s.mask.has_value());

  DatasetSample with_mask = s;
  with_mask.mask = Mask(16, 16);
  with_mask.mask->set(3, 4, false);
  write_sample(root / "extra", with_mask, {});
  const DatasetSample back = read_sample(root / "extra");
  ASSERT_TRUE(back.mask.has_value());
  EXPECT_FALSE(back.mask->keep(3, 4));
  EXPECT_EQ(back.raw.plane().values(), s.raw.plane().values());
  std::filesystem::remove_all(root);
  EXPECT_THROW(DatasetIndex::open(root), std::exception);
}
