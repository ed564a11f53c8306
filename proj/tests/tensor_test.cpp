#include <gtest/gtest.h>

#include <filesystem>
#include <random>

#include "test_util.hpp"
#include "tsrcan/ops.hpp"
#include "tsrcan/tensor.hpp"
#include "tsrcan/tensor_io.hpp"

using tsr::Shape;
using tsr::Tensor;

TEST(Tensor, ShapeMustMatchValueCount) {
  EXPECT_THROW(Tensor(Shape{2, 3}, std::vector<float>(5)), tsr::DimensionError);
  Tensor t(Shape{2, 3}, 1.5f);
  EXPECT_EQ(t.numel(), 6u);
  EXPECT_FLOAT_EQ(t.at({1, 2}), 1.5f);
  EXPECT_THROW(t.at({2, 0}), tsr::DimensionError);
}

TEST(Tensor, HandlesShareStorageDetachCopies) {
  Tensor a(Shape{3}, 1.0f);
  Tensor b = a;
  b[0] = 7.0f;
  EXPECT_EQ(a[0], 7.0f);
  Tensor c = a.detach();
  c[1] = 3.0f;
  EXPECT_EQ(a[1], 1.0f);
}

TEST(Autograd, SumOfProductGivesInput) {
  Tensor x(Shape{4}, std::vector<float>{1, -2, 3, 0.5f});
  Tensor w(Shape{4}, std::vector<float>{0.1f, 0.2f, 0.3f, 0.4f});
  w.set_requires_grad(true);
  tsr::backward(tsr::sum(tsr::mul(w, x)));
  ASSERT_TRUE(w.has_grad());
  for (std::size_t i = 0; i < 4; ++i) EXPECT_FLOAT_EQ(w.grad()[i], x[i]);
  EXPECT_FALSE(x.has_grad());
}

TEST(Autograd, DisconnectedParameterStaysZero) {
  Tensor x(Shape{3}, 2.0f);
  Tensor w(Shape{3}, 1.0f);
  Tensor unused(Shape{3}, 5.0f);
  w.set_requires_grad(true);
  unused.set_requires_grad(true);
  unused.zero_grad();
  tsr::backward(tsr::sum(tsr::mul(w, x)));
  for (float g : unused.grad()) EXPECT_EQ(g, 0.0f);
}

TEST(Autograd, RepeatedBackwardAccumulates) {
  Tensor x(Shape{2}, std::vector<float>{3, 4});
  x.set_requires_grad(true);
  auto loss = tsr::sum(tsr::mul(x, x));
  tsr::backward(loss);
  tsr::backward(loss);
  EXPECT_FLOAT_EQ(x.grad()[0], 12.0f);
  EXPECT_FLOAT_EQ(x.grad()[1], 16.0f);
}

TEST(Autograd, NonScalarLossRejected) {
  Tensor x(Shape{2}, 1.0f);
  x.set_requires_grad(true);
  EXPECT_THROW(tsr::backward(tsr::relu(x)), tsr::UsageError);
}

TEST(Autograd, NoGradGuardSkipsRecording) {
  Tensor x(Shape{2}, 1.0f);
  x.set_requires_grad(true);
  {
    tsr::NoGradGuard guard;
    auto y = tsr::relu(x);
    EXPECT_FALSE(y.requires_grad());
    EXPECT_TRUE(y.is_leaf());
  }
  EXPECT_TRUE(tsr::relu(x).requires_grad());
}

TEST(Autograd, SharedSubexpressionGetsBothPaths) {
  // y = relu(x); loss = sum(y*y + y) -> d/dx = 2x + 1 for x > 0
  Tensor x(Shape{3}, std::vector<float>{0.5f, 2.0f, -1.0f});
  x.set_requires_grad(true);
  auto y = tsr::relu(x);
  tsr::backward(tsr::sum(tsr::add(tsr::mul(y, y), y)));
  EXPECT_FLOAT_EQ(x.grad()[0], 2.0f);
  EXPECT_FLOAT_EQ(x.grad()[1], 5.0f);
  EXPECT_FLOAT_EQ(x.grad()[2], 0.0f);
}

TEST(Tape, RecordedInTopologicalOrder) {
  std::mt19937_64 rng(3);
  auto x = testutil::random_tensor(Shape{1, 2, 5, 5}, rng);
  auto w = testutil::random_tensor(Shape{2, 2, 3, 3}, rng);
  auto b = testutil::random_tensor(Shape{2}, rng);
  w.set_requires_grad(true);
  auto h = tsr::relu(tsr::conv2d(x, w, b, 1, 1));
  auto loss = tsr::sum(tsr::add(h, tsr::sigmoid(h)));
  auto tape = tsr::Tape<float>::collect(loss);
  ASSERT_EQ(tape.ops.size(), 5u);
  std::vector<const tsr::Node<float>*> seen;
  for (const auto& op : tape.ops) {
    for (const auto& in : op->inputs) {
      if (in->node) {
        EXPECT_NE(std::find(seen.begin(), seen.end(), in->node.get()), seen.end())
            << op->op << " recorded before its input";
      }
    }
    seen.push_back(op.get());
  }
  EXPECT_EQ(tape.ops.back()->op, "sum");
}

TEST(Autograd, DeterministicAcrossRuns) {
  std::mt19937_64 rng(11);
  auto x = testutil::random_tensor(Shape{2, 3, 6, 6}, rng);
  auto w = testutil::random_tensor(Shape{4, 3, 3, 3}, rng);
  auto b = testutil::random_tensor(Shape{4}, rng);
  w.set_requires_grad(true);
  b.set_requires_grad(true);
  auto loss = tsr::sum(tsr::sigmoid(tsr::conv2d(x, w, b, 1, 1)));
  w.zero_grad();
  tsr::backward(loss);
  const std::vector<float> first(w.grad().begin(), w.grad().end());
  w.zero_grad();
  tsr::backward(loss);
  const std::vector<float> second(w.grad().begin(), w.grad().end());
  EXPECT_EQ(first, second);
}

TEST(TensorFile, HeaderLayoutIsExact) {
  Tensor t(Shape{2, 1}, std::vector<float>{1.0f, -2.0f});
  const auto bytes = tsr::encode_tensor(t);
  const std::vector<std::uint8_t> expected = {'M', 'S', 'R', 'T', 1, 2, 2, 0, 0, 0, 1, 0, 0, 0,
                                              0x00, 0x00, 0x80, 0x3F, 0x00, 0x00, 0x00, 0xC0};
  EXPECT_EQ(bytes, expected);
}

TEST(TensorFile, RoundTripIsBitExact) {
  std::mt19937_64 rng(5);
  auto t = testutil::random_tensor(Shape{3, 4, 5}, rng, -1e3, 1e3);
  const auto path = std::filesystem::temp_directory_path() / "tsrcan_roundtrip.msrt";
  tsr::write_tensor(path, t);
  const auto back = tsr::read_tensor(path);
  EXPECT_EQ(back.shape(), t.shape());
  EXPECT_EQ(back.values(), t.values());
  std::filesystem::remove(path);
}

TEST(TensorFile, RejectsCorruptInput) {
  auto bytes = tsr::encode_tensor(Tensor(Shape{2, 2}, 1.0f));
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_THROW(tsr::decode_tensor(bad_magic), tsr::FormatError);
  auto bad_version = bytes;
  bad_version[4] = 2;
  EXPECT_THROW(tsr::decode_tensor(bad_version), tsr::FormatError);
  bytes.pop_back();
  EXPECT_THROW(tsr::decode_tensor(bytes), tsr::FormatError);
}
