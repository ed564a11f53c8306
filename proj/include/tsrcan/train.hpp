#pragma once

// Adam with bias correction, step-halving learning rate, and the epoch loop
// with validation-PSNR model selection.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <vector>

#include "tsrcan/data.hpp"
#include "tsrcan/metrics.hpp"
#include "tsrcan/model.hpp"

namespace tsr {

struct TrainConfig {
  int batch_size = 10;
  double lr0 = 1e-4;
  int halve_every = 2500;  // epochs
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  int epochs = 100;
  std::uint64_t seed = 0;
  int validate_every = 1;
  int crop = 120;
  bool augment = true;
  // Fusion conv starts as a copy of sr' instead of random (TSRCAN only).
  bool fusion_passthrough_init = false;

  void validate() const;
  KeyValues to_key_values() const;
  static TrainConfig from_keys(KeyReader& r, const TrainConfig& defaults);
};

double lr_at(int epoch, const TrainConfig& cfg);

struct AdamState {
  std::vector<std::vector<double>> m, v;  // one per trainable parameter, store order
  std::int64_t t = 0;
};

// One update of every trainable parameter, then gradients are zeroed. Throws
// UsageError naming the first parameter without a gradient (nothing is updated).
void adam_step(ParamStore& params, AdamState& state, double lr, const TrainConfig& cfg);

// Network input for a sample: zero-padded [16,H,W] or compact [16,H/4,W/4].
Tensor model_input(const RawMosaic& raw, const ModelConfig& cfg);
Tensor model_input(const Tensor& zero_padded, const ModelConfig& cfg);

// Eval-mode prediction clamped to [0,1]; [3,H,W].
Tensor predict(const ParamStore& params, const ModelConfig& cfg, const RawMosaic& raw);

// PSNR/SSIM/SID of the model over samples (masks applied when present).
MetricReport evaluate(const ParamStore& params, const ModelConfig& cfg,
                      const std::vector<DatasetSample>& samples);
double mean_psnr(const ParamStore& params, const ModelConfig& cfg,
                 const std::vector<DatasetSample>& samples);

struct EpochRecord {
  int epoch = 0;
  double lr = 0;
  double loss = 0;  // mean batch loss over the epoch
  std::optional<double> val_psnr;
};

struct FitResult {
  std::vector<EpochRecord> history;
  ParamStore final_params;
  ParamStore best_params;
  int best_epoch = -1;
  double best_val_psnr = 0;
  std::size_t steps = 0;
};

struct FitOptions {
  // When set: history.csv, best/ and final/ checkpoints are written here.
  std::optional<std::filesystem::path> out_dir;
  std::function<void(const EpochRecord&)> on_epoch;
};

FitResult fit(const ModelConfig& model_cfg, const TrainConfig& cfg,
              const std::vector<DatasetSample>& train, const std::vector<DatasetSample>& val,
              const FitOptions& opt = {});

std::vector<DatasetSample> load_split(const DatasetIndex& data, const std::vector<std::string>& ids);

// fit() over a dataset directory's train and val splits.
FitResult fit(const ModelConfig& model_cfg, const TrainConfig& cfg, const DatasetIndex& data,
              const FitOptions& opt = {});

void write_history_csv(const std::filesystem::path& path, const std::vector<EpochRecord>& history);

}  // namespace tsr
