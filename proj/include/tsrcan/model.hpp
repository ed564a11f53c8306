#pragma once

// RCAN head/body/tail, the texture network (ResNet-18 stem + one basic block +
// a x4 transposed conv) and the 3x3 fusion conv over [texture, sr'].

#include <cstdint>
#include <filesystem>
#include <string>
#include <unordered_map>
#include <vector>

#include "tsrcan/config.hpp"
#include "tsrcan/ops.hpp"
#include "tsrcan/tensor.hpp"

namespace tsr {

enum class InputMode { ZeroPadded, Compact };
enum class Architecture { Tsrcan, Rcan };

inline constexpr int kTextureWidth = 64;

struct ModelConfig {
  Architecture arch = Architecture::Tsrcan;
  int groups = 5;
  int blocks = 3;
  int channels = 64;
  int reduction = 16;
  int texture_channels = 256;
  int in_channels = 16;
  int out_channels = 3;
  InputMode mode = InputMode::ZeroPadded;
  int compact_upscale = 4;

  static ModelConfig paper() { return {}; }
  static ModelConfig tiny();

  void validate() const;
  KeyValues to_key_values() const;
  // Reads the model keys; other keys are left for the caller.
  static ModelConfig from_keys(KeyReader& r, const ModelConfig& defaults);
  static ModelConfig from_keys(KeyReader& r);

  bool operator==(const ModelConfig&) const = default;
};

std::string to_string(InputMode m);
std::string to_string(Architecture a);

// Named tensors in insertion order. Parameters require grad; buffers (batch
// norm running statistics) do not and are never optimised.
template <typename T>
class BasicParamStore {
 public:
  struct Entry {
    std::string name;
    BasicTensor<T> tensor;
    bool trainable;
  };

  void add_parameter(const std::string& name, BasicTensor<T> t);
  void add_buffer(const std::string& name, BasicTensor<T> t);

  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  const BasicTensor<T>& get(const std::string& name) const;
  BasicTensor<T>& get(const std::string& name);

  const std::vector<Entry>& entries() const { return entries_; }
  std::size_t parameter_count() const;
  void zero_grad();

  // Deep copy with values converted to U; history is not carried over.
  template <typename U>
  BasicParamStore<U> cast() const {
    BasicParamStore<U> out;
    for (const auto& e : entries_) {
      if (e.trainable) out.add_parameter(e.name, e.tensor.template cast<U>());
      else out.add_buffer(e.name, e.tensor.template cast<U>());
    }
    return out;
  }
  BasicParamStore clone() const { return cast<T>(); }

 private:
  void insert(const std::string& name, BasicTensor<T> t, bool trainable);

  std::vector<Entry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

using ParamStore = BasicParamStore<float>;
using ParamStore64 = BasicParamStore<double>;

// He fan-in normal weights, zero biases, unit batch-norm scale.
ParamStore build_model(const ModelConfig& cfg, std::uint64_t seed);

// Makes the fusion conv copy the three sr' channels and ignore the texture.
template <typename T>
void set_fusion_passthrough(BasicParamStore<T>& store, const ModelConfig& cfg);

template <typename T>
struct ModelOutput {
  BasicTensor<T> sr_prime;
  BasicTensor<T> sr;       // equals sr_prime for Architecture::Rcan
  BasicTensor<T> texture;  // empty for Architecture::Rcan
};

template <typename T>
BasicTensor<T> rcab_forward(const BasicTensor<T>& x, const BasicParamStore<T>& store,
                            const std::string& prefix);

template <typename T>
BasicTensor<T> rcan_forward(const BasicTensor<T>& x, const BasicParamStore<T>& store,
                            const ModelConfig& cfg);

// Train mode updates the batch-norm running statistics held in the store.
template <typename T>
BasicTensor<T> texture_forward(const BasicTensor<T>& sr_prime, BasicParamStore<T>& store,
                               NormMode mode);

template <typename T>
ModelOutput<T> tsrcan_forward(const BasicTensor<T>& x, BasicParamStore<T>& store,
                              const ModelConfig& cfg, NormMode mode);

// smooth_l1(sr', target) + smooth_l1(sr, target).
template <typename T>
BasicTensor<T> tsrcan_loss(const BasicTensor<T>& sr_prime, const BasicTensor<T>& sr,
                           const BasicTensor<T>& target);

// The training objective of either architecture.
template <typename T>
BasicTensor<T> model_loss(const ModelOutput<T>& out, const BasicTensor<T>& target,
                          const ModelConfig& cfg);

// Network input spatial size for a target of size h x w.
std::pair<std::size_t, std::size_t> input_size_for(const ModelConfig& cfg, std::size_t h,
                                                   std::size_t w);

struct ShapePlan {
  Shape sr_prime, sr, texture;
};
// Propagates shapes through the layer list without computing anything.
ShapePlan infer_shapes(const ModelConfig& cfg, const Shape& input);

struct Checkpoint {
  ModelConfig config;
  ParamStore params;
  std::uint64_t seed = 0;
  KeyValues extra;
};

// Directory holding manifest.txt plus one <name>.msrt per tensor.
void save_checkpoint(const std::filesystem::path& dir, const ModelConfig& cfg,
                     const ParamStore& params, std::uint64_t seed, const KeyValues& extra = {});
Checkpoint load_checkpoint(const std::filesystem::path& dir);

}  // namespace tsr
