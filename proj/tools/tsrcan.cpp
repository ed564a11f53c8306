// Command-line front end: dataset generation, training, evaluation, the
// bicubic baseline, the residual-group ablation, gradient checks and
// occlusion masks. Every command writes its artifacts under --out.

#include <CLI11.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>

#include "tsrcan/experiments.hpp"
#include "tsrcan/gradcheck.hpp"
#include "tsrcan/tensor_io.hpp"

namespace fs = std::filesystem;
using namespace tsr;

namespace {

// An existing non-empty directory is only reused with --force, which clears it.
void prepare_out(const fs::path& out, bool force) {
  if (fs::exists(out) && !fs::is_directory(out)) throw UsageError(out.string() + " is not a directory");
  if (fs::exists(out) && !fs::is_empty(out)) {
    if (!force) throw UsageError("output directory " + out.string() + " is not empty (use --force)");
    fs::remove_all(out);
  }
  fs::create_directories(out);
}

// Prints the resolved settings and records them next to the artifacts.
void announce(const std::string& command, const fs::path& out, const KeyValues& kv) {
  std::cout << "# " << command << '\n';
  write_key_values(std::cout, kv);
  std::cout.flush();
  write_key_values(out / (command + ".cfg"), kv);
}

KeyValues parse_overrides(const std::vector<std::string>& sets) {
  KeyValues kv;
  for (const auto& s : sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("--set expects key=value, got '" + s + "'");
    kv[s.substr(0, eq)] = s.substr(eq + 1);
  }
  return kv;
}

RunConfig resolve_run_config(const std::string& preset, const std::string& config,
                             const std::vector<std::string>& sets) {
  const fs::path path = config.empty() ? preset_path(preset) : fs::path(config);
  return load_run_config(path, parse_overrides(sets));
}

std::vector<std::string> split_ids(const DatasetIndex& data, const std::string& split) {
  if (split == "train") return data.train;
  if (split == "val") return data.val;
  if (split == "test") return data.test;
  throw UsageError("unknown split '" + split + "'");
}

bool finite_report(const MetricReport& r) {
  const auto ok = [](const MetricSummary& s) {
    return std::isfinite(s.psnr_db) && std::isfinite(s.ssim) && std::isfinite(s.sid_blue) &&
           std::isfinite(s.sid_green) && std::isfinite(s.sid_red);
  };
  return ok(r.mean) && ok(r.std);
}

void write_report(const fs::path& out, const std::string& stem, const std::string& method,
                  const MetricReport& r) {
  std::ofstream csv(out / (stem + ".csv"));
  write_report_csv(csv, r);
  std::ofstream table(out / (stem + ".txt"));
  write_report_table(table, method, r);
  write_report_table(std::cout, method, r);
}

// The dataset must be compatible with a network of this configuration.
void check_compatible(const ModelConfig& cfg, const DatasetSample& s) {
  if (cfg.in_channels != 16 || cfg.out_channels != 3) {
    throw ConfigError("model expects " + std::to_string(cfg.in_channels) + " -> " +
                      std::to_string(cfg.out_channels) + " channels; data is 16-band mosaic -> RGB");
  }
  if (s.raw.height() % 4 || s.raw.width() % 4) {
    throw ConfigError("sample " + s.id + " is " + std::to_string(s.raw.height()) + "x" +
                      std::to_string(s.raw.width()) + ", not a whole number of 4x4 blocks");
  }
  if (s.hr_rgb.dim(1) != s.raw.height() || s.hr_rgb.dim(2) != s.raw.width()) {
    throw ConfigError("sample " + s.id + ": raw and ground truth sizes differ");
  }
}

// <dir>/<id>/mask.msrt, or flow_fw.msrt + flow_bw.msrt turned into a mask.
std::optional<Mask> load_mask(const fs::path& dir, const std::string& id, double threshold) {
  const fs::path d = dir / id;
  if (fs::exists(d / "mask.msrt")) return Mask::from_tensor(read_tensor(d / "mask.msrt"));
  if (fs::exists(d / "flow_fw.msrt") && fs::exists(d / "flow_bw.msrt")) {
    return occlusion_mask(read_tensor(d / "flow_fw.msrt"), read_tensor(d / "flow_bw.msrt"), threshold);
  }
  throw UsageError("no mask.msrt or flow_fw.msrt/flow_bw.msrt for " + id + " under " + dir.string());
}

std::pair<int, int> parse_range(const std::string& s) {
  const auto dots = s.find("..");
  try {
    if (dots == std::string::npos) {
      const int v = std::stoi(s);
      return {v, v};
    }
    return {std::stoi(s.substr(0, dots)), std::stoi(s.substr(dots + 2))};
  } catch (const std::exception&) {
    throw UsageError("expected a group range like 3..7, got '" + s + "'");
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Mosaic-to-RGB super-resolution toolkit"};
  app.require_subcommand(1);

  fs::path out;
  bool force = false;
  auto add_out = [&](CLI::App* c) {
    c->add_option("--out", out, "Output directory")->required();
    c->add_flag("--force", force, "Clear a non-empty output directory");
  };

  // gen-data
  GenerateOptions gen;
  auto* c_gen = app.add_subcommand("gen-data", "Generate a synthetic paired dataset");
  add_out(c_gen);
  c_gen->add_option("--count", gen.count, "Number of scenes")->capture_default_str();
  c_gen->add_option("--height", gen.height, "Scene height (multiple of 4)")->capture_default_str();
  c_gen->add_option("--width", gen.width, "Scene width (multiple of 4)")->capture_default_str();
  c_gen->add_option("--seed", gen.seed, "Dataset seed")->capture_default_str();
  c_gen->add_option("--patches", gen.num_patches, "Material patches per scene")->capture_default_str();

  // train / ablate-size share the run configuration flags
  std::string preset = "tiny", config_file, data_dir;
  std::vector<std::string> sets;
  auto add_run_cfg = [&](CLI::App* c) {
    c->add_option("--preset", preset, "Preset name under configs/")->capture_default_str();
    c->add_option("--config", config_file, "key=value config file (overrides --preset)");
    c->add_option("--set", sets, "Override one key, key=value (repeatable)");
    c->add_option("--data", data_dir, "Dataset directory")->required();
  };
  auto* c_train = app.add_subcommand("train", "Train a model; scores the best weights on the test split");
  add_out(c_train);
  add_run_cfg(c_train);

  std::string groups = "3..7";
  auto* c_abl = app.add_subcommand("ablate-size", "Train one RCAN per residual-group count");
  add_out(c_abl);
  add_run_cfg(c_abl);
  c_abl->add_option("--groups", groups, "Group range, e.g. 3..7")->capture_default_str();

  // eval
  std::string checkpoint, split = "test", mode, mask_dir;
  double threshold = 3.0;
  auto* c_eval = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset split");
  add_out(c_eval);
  c_eval->add_option("--checkpoint", checkpoint, "Checkpoint directory")->required();
  c_eval->add_option("--data", data_dir, "Dataset directory")->required();
  c_eval->add_option("--split", split, "train, val or test")->capture_default_str();
  c_eval->add_option("--mode", mode, "Expected input mode (zero_padded or compact)")
      ->check(CLI::IsMember({"zero_padded", "compact"}));
  c_eval->add_option("--mask-dir", mask_dir, "Per-sample masks or flow pairs");
  c_eval->add_option("--threshold", threshold, "Flow consistency threshold in pixels")->capture_default_str();

  // baseline
  auto* c_base = app.add_subcommand("baseline", "Score bicubic + CMF mapping on a dataset split");
  add_out(c_base);
  c_base->add_option("--data", data_dir, "Dataset directory")->required();
  c_base->add_option("--split", split, "train, val or test")->capture_default_str();

  // gradcheck
  std::uint64_t gc_seed = 0;
  std::size_t coords = 20, gc_size = 16;
  auto* c_gc = app.add_subcommand("gradcheck", "Compare analytic and finite-difference gradients");
  add_out(c_gc);
  c_gc->add_option("--preset", preset, "Model preset")->capture_default_str();
  c_gc->add_option("--config", config_file, "key=value config file (overrides --preset)");
  c_gc->add_option("--set", sets, "Override one key, key=value (repeatable)");
  c_gc->add_option("--seed", gc_seed, "Seed")->capture_default_str();
  c_gc->add_option("--coords", coords, "Model coordinates to check")->capture_default_str();
  c_gc->add_option("--size", gc_size, "Input side in pixels (multiple of 4)")->capture_default_str();

  // mask
  std::string flow_fw, flow_bw;
  auto* c_mask = app.add_subcommand("mask", "Occlusion mask from a forward/backward flow pair");
  add_out(c_mask);
  c_mask->add_option("--flow-fw", flow_fw, "Forward flow [2,H,W] .msrt (dx, dy)")->required();
  c_mask->add_option("--flow-bw", flow_bw, "Backward flow [2,H,W] .msrt")->required();
  c_mask->add_option("--threshold", threshold, "Consistency threshold in pixels")->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*c_gen) {
      if (gen.height == 0 || gen.width == 0 || gen.height % 4 || gen.width % 4) {
        throw UsageError("--height and --width must be positive multiples of 4");
      }
      if (gen.count < 3) throw UsageError("--count must be at least 3 (one scene per split)");
      prepare_out(out, force);
      KeyValues kv{{"count", std::to_string(gen.count)}, {"height", std::to_string(gen.height)},
                   {"width", std::to_string(gen.width)}, {"seed", std::to_string(gen.seed)},
                   {"patches", std::to_string(gen.num_patches)}};
      announce("gen-data", out, kv);
      const DatasetIndex idx = generate_dataset(out, gen);
      std::cout << "split train=" << idx.train.size() << " val=" << idx.val.size()
                << " test=" << idx.test.size() << '\n';
      return 0;
    }

    if (*c_train) {
      const RunConfig rc = resolve_run_config(preset, config_file, sets);
      const DatasetIndex data = DatasetIndex::open(data_dir);
      const auto train = load_split(data, data.train), val = load_split(data, data.val);
      const auto test = load_split(data, data.test);
      check_compatible(rc.model, train.front());
      prepare_out(out, force);
      KeyValues kv = rc.to_key_values();
      kv["data"] = data_dir;
      announce("train", out, kv);
      FitOptions opt;
      opt.out_dir = out;
      opt.on_epoch = [](const EpochRecord& r) {
        if (!r.val_psnr) return;
        std::cout << "epoch " << r.epoch << " lr " << r.lr << " loss " << r.loss << " val_psnr "
                  << *r.val_psnr << '\n';
      };
      const FitResult r = fit(rc.model, rc.train, train, val, opt);
      std::cout << "best epoch " << r.best_epoch << " val_psnr " << r.best_val_psnr << '\n';
      const MetricReport rep = evaluate(r.best_params, rc.model, test);
      write_report(out, "test_report", to_string(rc.model.arch), rep);
      bool finite = std::isfinite(r.best_val_psnr) && finite_report(rep);
      for (const auto& e : r.history) finite = finite && std::isfinite(e.loss);
      return finite ? 0 : 1;
    }

    if (*c_eval) {
      const Checkpoint ck = load_checkpoint(checkpoint);
      if (!mode.empty() && mode != to_string(ck.config.mode)) {
        throw ConfigError("checkpoint was trained in " + to_string(ck.config.mode) + " mode, not " + mode);
      }
      const DatasetIndex data = DatasetIndex::open(data_dir);
      auto samples = load_split(data, split_ids(data, split));
      if (samples.empty()) throw UsageError("split '" + split + "' is empty");
      for (auto& s : samples) {
        check_compatible(ck.config, s);
        if (!mask_dir.empty()) s.mask = load_mask(mask_dir, s.id, threshold);
      }
      prepare_out(out, force);
      KeyValues kv = ck.config.to_key_values();
      kv["checkpoint"] = checkpoint;
      kv["data"] = data_dir;
      kv["split"] = split;
      kv["seed"] = std::to_string(ck.seed);
      if (!mask_dir.empty()) {
        kv["mask_dir"] = mask_dir;
        kv["threshold"] = std::to_string(threshold);
      }
      announce("eval", out, kv);
      const MetricReport rep = evaluate(ck.params, ck.config, samples);
      write_report(out, "report", to_string(ck.config.arch), rep);
      return finite_report(rep) ? 0 : 1;
    }

    if (*c_base) {
      const DatasetIndex data = DatasetIndex::open(data_dir);
      const auto samples = load_split(data, split_ids(data, split));
      if (samples.empty()) throw UsageError("split '" + split + "' is empty");
      prepare_out(out, force);
      announce("baseline", out, {{"data", data_dir}, {"split", split}});
      const MetricReport raw = evaluate_baseline(samples, false);
      const MetricReport wb = evaluate_baseline(samples, true);
      write_report(out, "baseline", "bicubic+cmf", raw);
      write_report(out, "baseline_wb", "bicubic+cmf+wb", wb);
      return finite_report(raw) && finite_report(wb) ? 0 : 1;
    }

    if (*c_abl) {
      const auto [gmin, gmax] = parse_range(groups);
      const RunConfig rc = resolve_run_config(preset, config_file, sets);
      const DatasetIndex data = DatasetIndex::open(data_dir);
      const auto train = load_split(data, data.train), val = load_split(data, data.val);
      const auto test = load_split(data, data.test);
      check_compatible(rc.model, train.front());
      prepare_out(out, force);
      KeyValues kv = rc.to_key_values();
      kv["data"] = data_dir;
      kv["groups"] = groups;
      kv["arch"] = "rcan";
      announce("ablate-size", out, kv);
      const auto rows = ablate_size(rc, gmin, gmax, train, val, test);
      std::ofstream csv(out / "ablation.csv");
      write_ablation_csv(csv, rows);
      write_ablation_csv(std::cout, rows);
      bool finite = true;
      for (const auto& r : rows) finite = finite && std::isfinite(r.test_psnr_db) && std::isfinite(r.test_ssim);
      return finite ? 0 : 1;
    }

    if (*c_gc) {
      const RunConfig rc = resolve_run_config(preset, config_file, sets);
      prepare_out(out, force);
      KeyValues kv = rc.model.to_key_values();
      kv["seed"] = std::to_string(gc_seed);
      kv["coords"] = std::to_string(coords);
      kv["size"] = std::to_string(gc_size);
      announce("gradcheck", out, kv);
      std::ofstream csv(out / "gradcheck.csv");
      csv << std::setprecision(10) << "check,coordinates,max_rel_err\n";
      double worst_op = 0;
      for (const auto& c : check_op_gradients(gc_seed)) {
        csv << c.op << ',' << c.coordinates << ',' << c.max_rel_err << '\n';
        std::cout << c.op << ": " << c.coordinates << " coords, max rel err " << c.max_rel_err << '\n';
        worst_op = std::max(worst_op, c.max_rel_err);
      }
      const ModelGradCheck m = check_model_gradients(rc.model, gc_seed, gc_size, gc_size, coords);
      csv << "model," << m.coords.size() << ',' << m.max_rel_err << '\n';
      std::cout << "model: " << m.coords.size() << " coords, max rel err " << m.max_rel_err << '\n';
      const bool ok = worst_op < 1e-4 && m.max_rel_err < 1e-2;
      std::cout << (ok ? "gradients ok" : "gradient mismatch") << '\n';
      return ok ? 0 : 1;
    }

    if (*c_mask) {
      const Tensor fw = read_tensor(flow_fw), bw = read_tensor(flow_bw);
      const Mask m = occlusion_mask(fw, bw, threshold);
      prepare_out(out, force);
      announce("mask", out,
               {{"flow_fw", flow_fw}, {"flow_bw", flow_bw}, {"threshold", std::to_string(threshold)}});
      write_tensor(out / "mask.msrt", m.to_tensor());
      const std::size_t total = m.height() * m.width();
      std::cout << "kept " << m.kept() << " of " << total << " pixels ("
                << 100.0 * static_cast<double>(total - m.kept()) / static_cast<double>(total)
                << "% masked)\n";
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
