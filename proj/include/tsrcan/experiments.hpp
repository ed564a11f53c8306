#pragma once

// Run configuration files and the experiment drivers shared by the command
// line tool and the acceptance harness.

#include <filesystem>
#include <ostream>
#include <vector>

#include "tsrcan/train.hpp"

namespace tsr {

// Model and optimiser settings read from one key=value file.
struct RunConfig {
  ModelConfig model;
  TrainConfig train;

  KeyValues to_key_values() const;
  // Unknown keys are a ConfigError.
  static RunConfig from_key_values(const KeyValues& kv, const std::string& source);
};

// Keys in `overrides` replace those of the file.
RunConfig load_run_config(const std::filesystem::path& path, const KeyValues& overrides = {});

// configs/<name>.cfg from the source tree.
std::filesystem::path preset_path(const std::string& name);

// Bicubic + CMF reference over the samples. With white_balanced each channel
// is stretched onto [0, 1] before scoring.
MetricReport evaluate_baseline(const std::vector<DatasetSample>& samples, bool white_balanced = false);

struct AblationRow {
  int groups = 0;
  std::size_t parameters = 0;
  int best_epoch = 0;
  double val_psnr_db = 0;
  double test_psnr_db = 0;
  double test_ssim = 0;
};

// One RCAN per group count in [min_groups, max_groups], each trained from the
// same seed on the same data; the best-validation weights are scored on test.
std::vector<AblationRow> ablate_size(const RunConfig& base, int min_groups, int max_groups,
                                     const std::vector<DatasetSample>& train,
                                     const std::vector<DatasetSample>& val,
                                     const std::vector<DatasetSample>& test);

void write_ablation_csv(std::ostream& os, const std::vector<AblationRow>& rows);

}  // namespace tsr
