#include "coderain/config.hpp"
#include "coderain/container.hpp"
#include "coderain/dataset.hpp"
#include "coderain/metrics.hpp"
#include "coderain/png_io.hpp"
#include "coderain/runtime.hpp"
#include "coderain/synth.hpp"
#include "coderain/train.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

namespace fs = std::filesystem;
using namespace coderain;

namespace {

double elapsed_ms(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
}

std::vector<std::string> gather_images(const std::vector<std::string>& inputs) {
  std::vector<std::string> files;
  for (const auto& input : inputs) {
    if (fs::is_directory(input)) {
      std::vector<std::string> in_dir;
      for (const auto& e : fs::directory_iterator(input))
        if (e.is_regular_file() && e.path().extension() == ".png")
          in_dir.push_back(e.path().string());
      std::sort(in_dir.begin(), in_dir.end());
      files.insert(files.end(), in_dir.begin(), in_dir.end());
    } else {
      files.push_back(input);
    }
  }
  if (files.empty()) throw ConfigError("no input images given");
  return files;
}

AnyModel load_configured_model(const std::string& model_path, int T_override,
                               const std::optional<Toggles>& toggles, bool allow_extend = false) {
  if (model_path.empty()) throw ConfigError("--model is required");
  AnyModel model = load_model(model_path);
  if (toggles) apply_toggles(model, *toggles);
  if (T_override > 0) set_iterations(model, T_override, allow_extend);
  return model;
}

struct PerImage {
  DerainResult result;
  double ms = 0.0;
};

// Fan the image list out over worker threads; results land at their input
// index so output order never depends on completion order.
std::vector<PerImage> process_images(const std::vector<std::string>& files, const AnyModel& model,
                                     int jobs) {
  std::vector<PerImage> out(files.size());
  std::vector<std::string> errors(files.size());
  jobs = std::max(1, jobs);
  std::vector<std::thread> workers;
  std::atomic<std::size_t> next{0};
  auto work = [&]() {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= files.size()) break;
      try {
        Tensor y = read_png(files[i]);
        const auto t0 = std::chrono::steady_clock::now();
        out[i].result = run_model(y, model);
        out[i].ms = elapsed_ms(t0);
      } catch (const std::exception& e) {
        errors[i] = e.what();
      }
    }
  };
  if (jobs == 1) {
    work();
  } else {
    for (int j = 0; j < jobs; ++j) workers.emplace_back(work);
    for (auto& w : workers) w.join();
  }
  for (std::size_t i = 0; i < files.size(); ++i)
    if (!errors[i].empty()) throw IoError(files[i] + ": " + errors[i]);
  return out;
}

int cmd_derain(const std::string& model_path, const std::vector<std::string>& inputs,
               const std::string& out_dir, int T, int jobs, bool emit_rain_layer,
               const std::optional<Toggles>& toggles) {
  AnyModel model = load_configured_model(model_path, T, toggles);
  const auto files = gather_images(inputs);
  fs::create_directories(out_dir);
  auto processed = process_images(files, model, jobs);
  for (std::size_t i = 0; i < files.size(); ++i) {
    const auto stem = fs::path(files[i]).stem().string();
    write_png((fs::path(out_dir) / (stem + "_derained.png")).string(), processed[i].result.x);
    std::string layer_note;
    if (emit_rain_layer) {
      const Tensor& r = processed[i].result.r;
      double lo = r.data[0], hi = r.data[0];
      for (double v : r.data) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
      Tensor scaled(r.channels, r.height, r.width);
      const double span = hi > lo ? hi - lo : 1.0;
      for (std::size_t k = 0; k < r.size(); ++k) scaled.data[k] = (r.data[k] - lo) / span;
      write_png((fs::path(out_dir) / (stem + "_rainlayer.png")).string(), scaled);
      char buf[64];
      std::snprintf(buf, sizeof buf, " rain_min=%.6g rain_max=%.6g", lo, hi);
      layer_note = buf;
    }
    std::printf("%s rde=%.4f time_ms=%.2f%s\n", files[i].c_str(), processed[i].result.rde,
                processed[i].ms, layer_note.c_str());
  }
  return 0;
}

int cmd_rde(const std::string& model_path, const std::vector<std::string>& inputs, int T,
            int jobs, const std::optional<Toggles>& toggles) {
  AnyModel model = load_configured_model(model_path, T, toggles);
  const auto files = gather_images(inputs);
  auto processed = process_images(files, model, jobs);
  for (std::size_t i = 0; i < files.size(); ++i)
    std::printf("%s rde=%.4f\n", files[i].c_str(), processed[i].result.rde);
  return 0;
}

int cmd_train(const RunConfig& run) {
  if (!run.train) throw ConfigError("train command needs a config file with a train section");
  const TrainSection& section = *run.train;
  if (section.corpus.empty()) throw ConfigError("train.corpus is required");
  if (!fs::exists(section.corpus)) throw ConfigError("corpus path does not exist: " + section.corpus);
  const std::string out_dir = run.output.value_or("trained");
  fs::create_directories(out_dir);

  auto train_pairs = load_pairs(section.corpus);
  std::vector<ImagePair> val_pairs;
  if (!section.val.empty()) val_pairs = load_pairs(section.val);

  std::ofstream log_file(fs::path(out_dir) / "train_log.jsonl", std::ios::trunc);
  LogSink log = [&](const TrainLogEntry& e) {
    log_file << "{\"step\":" << e.step << ",\"stage\":\"" << e.stage << "\",\"lr\":" << e.lr
             << ",\"loss\":" << e.loss << "}\n";
  };

  TwoStageConfig cfg;
  cfg.stage1 = section.stage1;
  cfg.stage2 = section.stage2;
  const std::uint64_t seed = run.seed.value_or(section.stage1.seed);

  if (section.arch == "code") {
    ModelParams init(section.p, section.c, section.ksize, section.T, section.rho,
                     section.toggles);
    init_model(init, seed);
    auto result = train_two_stage(init, train_pairs, val_pairs, cfg, log);
    save_model(result.stage1_model, (fs::path(out_dir) / "stage1.mdl").string());
    save_model(result.stage2_model, (fs::path(out_dir) / "stage2.mdl").string());
    std::printf("stage1 val_loss=%.6f\nstage2 val_loss=%.6f\n", result.stage1_val_loss,
                result.stage2_val_loss);
  } else {
    MsModelParams init(section.p, section.c, section.scale_sizes, section.T, section.rho,
                       section.toggles);
    init_model(init, seed);
    auto result = train_two_stage(init, train_pairs, val_pairs, cfg, log);
    save_model(result.stage1_model, (fs::path(out_dir) / "stage1.mdl").string());
    save_model(result.stage2_model, (fs::path(out_dir) / "stage2.mdl").string());
    std::printf("stage1 val_loss=%.6f\nstage2 val_loss=%.6f\n", result.stage1_val_loss,
                result.stage2_val_loss);
  }
  std::printf("checkpoints written to %s\n", out_dir.c_str());
  return 0;
}

int cmd_synth(const std::string& out_dir, int pairs, int size, std::uint64_t seed,
              const std::string& level, double density, double intensity, double angle,
              const std::vector<int>& lengths, int width) {
  SynthConfig cfg;
  cfg.out_dir = out_dir;
  cfg.pairs = pairs;
  cfg.size = size;
  cfg.seed = seed;
  if (!level.empty()) {
    if (level == "light")
      cfg.level = RainLevel::light;
    else if (level == "medium")
      cfg.level = RainLevel::medium;
    else if (level == "heavy")
      cfg.level = RainLevel::heavy;
    else if (level != "mixed")
      throw ConfigError("unknown level '" + level + "'");
  }
  if (density >= 0.0) {
    RainSpec spec;
    spec.density = density;
    if (intensity > 0.0) spec.intensity = intensity;
    spec.angle_deg = angle;
    if (!lengths.empty()) spec.lengths = lengths;
    spec.width = width;
    spec.validate();
    cfg.spec_override = spec;
  }
  auto entries = write_corpus(cfg);
  std::printf("wrote %zu pairs to %s\n", entries.size(), out_dir.c_str());
  return 0;
}

struct EvalRow {
  std::string id;
  double psnr_rainy, ssim_rainy, psnr_derained, ssim_derained;
};

int cmd_eval(const std::string& model_path, const std::string& pairs_dir,
             const std::string& csv_path, int T, const std::optional<Toggles>& toggles) {
  AnyModel model = load_configured_model(model_path, T, toggles);
  auto entries = read_manifest(pairs_dir);
  if (entries.empty()) throw ConfigError("empty pair list in " + pairs_dir);

  std::vector<EvalRow> rows;
  double sum_pr = 0, sum_sr = 0, sum_pd = 0, sum_sd = 0;
  for (const auto& entry : entries) {
    Tensor rainy = read_png((fs::path(pairs_dir) / (entry.id + "_rain.png")).string());
    Tensor clean = read_png((fs::path(pairs_dir) / (entry.id + "_clean.png")).string());
    DerainResult res = run_model(rainy, model);
    EvalRow row{entry.id, psnr(rainy, clean), ssim(rainy, clean), psnr(res.x, clean),
                ssim(res.x, clean)};
    sum_pr += row.psnr_rainy;
    sum_sr += row.ssim_rainy;
    sum_pd += row.psnr_derained;
    sum_sd += row.ssim_derained;
    rows.push_back(row);
  }
  const double n = static_cast<double>(rows.size());

  std::ostringstream csv;
  csv << "id,psnr_rainy,ssim_rainy,psnr_derained,ssim_derained\n";
  for (const auto& r : rows) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "%s,%.4f,%.6f,%.4f,%.6f\n", r.id.c_str(), r.psnr_rainy,
                  r.ssim_rainy, r.psnr_derained, r.ssim_derained);
    csv << buf;
  }
  char buf[160];
  std::snprintf(buf, sizeof buf, "mean,%.4f,%.6f,%.4f,%.6f\n", sum_pr / n, sum_sr / n, sum_pd / n,
                sum_sd / n);
  csv << buf;
  std::fputs(csv.str().c_str(), stdout);
  if (!csv_path.empty()) {
    std::ofstream out(csv_path, std::ios::trunc);
    out << csv.str();
  }
  return 0;
}

int cmd_bench(const std::string& model_path, const std::string& pairs_dir,
              std::vector<int> t_values, int repeats, const std::string& csv_path) {
  if (t_values.empty()) throw ConfigError("bench needs at least one T value");
  auto entries = read_manifest(pairs_dir);
  if (entries.empty()) throw ConfigError("empty pair list in " + pairs_dir);
  std::vector<ImagePair> pairs = load_pairs(pairs_dir);

  std::ostringstream csv;
  csv << "T,median_ms_per_image,mean_psnr\n";
  for (int t : t_values) {
    AnyModel model = load_configured_model(model_path, t, std::nullopt, /*allow_extend=*/true);
    std::vector<double> per_pass_ms;
    double mean_psnr = 0.0;
    for (int rep = 0; rep < repeats; ++rep) {
      double psnr_acc = 0.0;
      const auto t0 = std::chrono::steady_clock::now();
      for (const auto& pair : pairs) {
        DerainResult res = run_model(pair.rainy, model);
        if (rep == 0) psnr_acc += psnr(res.x, pair.clean);
      }
      per_pass_ms.push_back(elapsed_ms(t0) / static_cast<double>(pairs.size()));
      if (rep == 0) mean_psnr = psnr_acc / static_cast<double>(pairs.size());
    }
    std::sort(per_pass_ms.begin(), per_pass_ms.end());
    const double median = per_pass_ms[per_pass_ms.size() / 2];
    char buf[96];
    std::snprintf(buf, sizeof buf, "%d,%.3f,%.4f\n", t, median, mean_psnr);
    csv << buf;
  }
  std::fputs(csv.str().c_str(), stdout);
  if (!csv_path.empty()) {
    std::ofstream out(csv_path, std::ios::trunc);
    out << csv.str();
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"convolutional sparse coding deraining toolkit"};
  app.require_subcommand(1);

  std::string model_path, out_path, config_path, level, pairs_dir, csv_path;
  std::vector<std::string> inputs;
  int T = 0, jobs = 1, pairs = 100, size = 64, width = 1, repeats = 5;
  std::uint64_t seed = 0;
  bool emit_rain_layer = false;
  double density = -1.0, intensity = -1.0, angle = 90.0;
  std::vector<int> lengths, t_values;

  auto* derain_cmd = app.add_subcommand("derain", "remove rain from images");
  derain_cmd->add_option("inputs", inputs, "PNG files or directories");
  derain_cmd->add_option("--model", model_path, "model container");
  derain_cmd->add_option("--config", config_path, "run configuration");
  derain_cmd->add_option("--out", out_path, "output directory");
  derain_cmd->add_option("--T", T, "iteration override (at most the trained count)");
  derain_cmd->add_option("--jobs", jobs, "worker threads");
  derain_cmd->add_option("--seed", seed, "seed (accepted for interface uniformity)");
  derain_cmd->add_flag("--emit-rain-layer", emit_rain_layer, "also write the rescaled rain layer");

  auto* rde_cmd = app.add_subcommand("rde", "report rain density estimates");
  rde_cmd->add_option("inputs", inputs, "PNG files or directories");
  rde_cmd->add_option("--model", model_path, "model container");
  rde_cmd->add_option("--config", config_path, "run configuration");
  rde_cmd->add_option("--T", T, "iteration override");
  rde_cmd->add_option("--jobs", jobs, "worker threads");

  auto* train_cmd = app.add_subcommand("train", "two-stage training from a config");
  train_cmd->add_option("--config", config_path, "run configuration")->required();
  train_cmd->add_option("--out", out_path, "output directory override");
  train_cmd->add_option("--seed", seed, "seed override");

  auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic corpus");
  synth_cmd->add_option("--out", out_path, "corpus directory")->required();
  synth_cmd->add_option("--pairs", pairs, "number of pairs");
  synth_cmd->add_option("--size", size, "image size");
  synth_cmd->add_option("--seed", seed, "generator seed");
  synth_cmd->add_option("--level", level, "light|medium|heavy|mixed");
  synth_cmd->add_option("--density", density, "custom spike probability");
  synth_cmd->add_option("--intensity", intensity, "custom streak intensity");
  synth_cmd->add_option("--angle", angle, "custom streak angle in degrees");
  synth_cmd->add_option("--lengths", lengths, "custom streak lengths");
  synth_cmd->add_option("--width", width, "custom streak width");

  auto* eval_cmd = app.add_subcommand("eval", "PSNR/SSIM table over a paired corpus");
  eval_cmd->add_option("--model", model_path, "model container");
  eval_cmd->add_option("--config", config_path, "run configuration");
  eval_cmd->add_option("--pairs", pairs_dir, "corpus directory")->required();
  eval_cmd->add_option("--out", csv_path, "CSV output path");
  eval_cmd->add_option("--T", T, "iteration override");

  auto* bench_cmd = app.add_subcommand("bench", "runtime/PSNR sweep over iteration counts");
  bench_cmd->add_option("--model", model_path, "model container");
  bench_cmd->add_option("--config", config_path, "run configuration");
  bench_cmd->add_option("--pairs", pairs_dir, "corpus directory")->required();
  bench_cmd->add_option("--T", t_values, "iteration counts to sweep")->required();
  bench_cmd->add_option("--repeats", repeats, "timing repeats per T");
  bench_cmd->add_option("--out", csv_path, "CSV output path");

  try {
    app.parse(argc, argv);

    RunConfig run;
    if (!config_path.empty()) run = load_run_config(config_path);
    if (model_path.empty() && run.model) model_path = *run.model;
    if (T == 0 && run.T) T = *run.T;
    if (inputs.empty() && run.input) inputs.push_back(*run.input);
    if (out_path.empty() && run.output) out_path = *run.output;
    if (jobs == 1 && run.jobs) jobs = *run.jobs;

    if (derain_cmd->parsed())
      return cmd_derain(model_path, inputs, out_path.empty() ? "." : out_path, T, jobs,
                        emit_rain_layer, run.toggles);
    if (rde_cmd->parsed()) return cmd_rde(model_path, inputs, T, jobs, run.toggles);
    if (train_cmd->parsed()) {
      if (!out_path.empty()) run.output = out_path;
      if (train_cmd->count("--seed") > 0) run.seed = seed;
      return cmd_train(run);
    }
    if (synth_cmd->parsed())
      return cmd_synth(out_path, pairs, size, seed, level, density, intensity, angle, lengths,
                       width);
    if (eval_cmd->parsed()) return cmd_eval(model_path, pairs_dir, csv_path, T, run.toggles);
    if (bench_cmd->parsed()) return cmd_bench(model_path, pairs_dir, t_values, repeats, csv_path);
    return 2;
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const ContainerError& e) {
    std::fprintf(stderr, "error (%s): %s\n", container_error_name(e.code), e.what());
    return 2;
  } catch (const ParamError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const ShapeError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
