#include "tsrcan/experiments.hpp"

#include <iomanip>

namespace tsr {

KeyValues RunConfig::to_key_values() const {
  KeyValues kv = model.to_key_values();
  for (const auto& [k, v] : train.to_key_values()) kv[k] = v;
  return kv;
}

RunConfig RunConfig::from_key_values(const KeyValues& kv, const std::string& source) {
  KeyReader r(kv, source);
  RunConfig c;
  c.model = ModelConfig::from_keys(r);
  c.train = TrainConfig::from_keys(r, TrainConfig{});
  r.finish();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path, const KeyValues& overrides) {
  KeyValues kv = read_key_values(path);
  for (const auto& [k, v] : overrides) kv[k] = v;
  return RunConfig::from_key_values(kv, path.string());
}

std::filesystem::path preset_path(const std::string& name) {
  const std::filesystem::path p = std::filesystem::path(TSRCAN_CONFIG_DIR) / (name + ".cfg");
  if (!std::filesystem::exists(p)) throw ConfigError("unknown preset '" + name + "' (no " + p.string() + ")");
  return p;
}

MetricReport evaluate_baseline(const std::vector<DatasetSample>& samples, bool white_balanced) {
  const MosaicLayout layout = MosaicLayout::standard();
  const CmfTable cmf = CmfTable::cie1931();
  std::vector<ImageMetrics> per;
  for (const auto& s : samples) {
    Tensor rgb = baseline_pipeline(s.raw, layout, cmf);
    if (white_balanced) {
      rgb = white_balance(rgb);
      for (float& v : rgb.values()) v /= 255.0f;
    }
    per.push_back(evaluate_image(s.id, rgb, s.hr_rgb, s.mask ? &*s.mask : nullptr));
  }
  return aggregate(per);
}

std::vector<AblationRow> ablate_size(const RunConfig& base, int min_groups, int max_groups,
                                     const std::vector<DatasetSample>& train,
                                     const std::vector<DatasetSample>& val,
                                     const std::vector<DatasetSample>& test) {
  if (min_groups < 1 || max_groups < min_groups) {
    throw UsageError("ablate_size: bad group range " + std::to_string(min_groups) + ".." +
                     std::to_string(max_groups));
  }
  std::vector<AblationRow> rows;
  for (int g = min_groups; g <= max_groups; ++g) {
    ModelConfig mc = base.model;
    mc.arch = Architecture::Rcan;
    mc.groups = g;
    const FitResult r = fit(mc, base.train, train, val);
    const MetricReport rep = evaluate(r.best_params, mc, test);
    rows.push_back({g, r.best_params.parameter_count(), r.best_epoch, r.best_val_psnr,
                    rep.mean.psnr_db, rep.mean.ssim});
  }
  return rows;
}

void write_ablation_csv(std::ostream& os, const std::vector<AblationRow>& rows) {
  os << "groups,parameters,best_epoch,val_psnr_db,test_psnr_db,test_ssim\n";
  os << std::setprecision(17);
  for (const auto& r : rows) {
    os << r.groups << ',' << r.parameters << ',' << r.best_epoch << ',' << r.val_psnr_db << ','
       << r.test_psnr_db << ',' << r.test_ssim << '\n';
  }
}

}  // namespace tsr
