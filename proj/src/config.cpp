#include "coderain/config.hpp"

#include <json.hpp>

#include <fstream>
#include <set>

namespace coderain {

using nlohmann::json;

namespace {

void reject_unknown(const json& j, const std::set<std::string>& allowed, const char* where) {
  for (const auto& item : j.items())
    if (!allowed.count(item.key()))
      throw ConfigError(std::string("unknown key '") + item.key() + "' in " + where);
}

Toggles parse_toggles(const json& j) {
  reject_unknown(j, {"grl", "lrl", "pa", "rw"}, "toggles");
  Toggles t;
  if (j.contains("grl")) t.grl = j["grl"].get<bool>();
  if (j.contains("lrl")) t.lrl = j["lrl"].get<bool>();
  if (j.contains("pa")) t.pa = j["pa"].get<bool>();
  if (j.contains("rw")) t.rw = j["rw"].get<bool>();
  return t;
}

void parse_stage(const json& j, TrainConfig& cfg, const char* where) {
  reject_unknown(j, {"steps", "lr", "milestones", "batch", "patch", "seed"}, where);
  if (j.contains("steps")) cfg.steps = j["steps"].get<int>();
  if (j.contains("lr")) cfg.lr = j["lr"].get<double>();
  if (j.contains("milestones")) cfg.lr_milestones = j["milestones"].get<std::vector<int>>();
  if (j.contains("batch")) cfg.batch_size = j["batch"].get<int>();
  if (j.contains("patch")) cfg.patch_size = j["patch"].get<int>();
  if (j.contains("seed")) cfg.seed = j["seed"].get<std::uint64_t>();
}

TrainSection parse_train(const json& j) {
  reject_unknown(j, {"arch", "hyper", "toggles", "corpus", "val", "stage1", "stage2"}, "train");
  TrainSection section;
  if (j.contains("arch")) {
    section.arch = j["arch"].get<std::string>();
    if (section.arch != "code" && section.arch != "mcode")
      throw ConfigError("train.arch must be 'code' or 'mcode'");
  }
  if (j.contains("hyper")) {
    const json& h = j["hyper"];
    reject_unknown(h, {"p", "c", "s", "s1", "s2", "s3", "T", "rho"}, "train.hyper");
    if (h.contains("p")) section.p = h["p"].get<int>();
    if (h.contains("c")) section.c = h["c"].get<int>();
    if (h.contains("s")) section.ksize = h["s"].get<int>();
    if (h.contains("s1")) section.scale_sizes[0] = h["s1"].get<int>();
    if (h.contains("s2")) section.scale_sizes[1] = h["s2"].get<int>();
    if (h.contains("s3")) section.scale_sizes[2] = h["s3"].get<int>();
    if (h.contains("T")) section.T = h["T"].get<int>();
    if (h.contains("rho")) section.rho = h["rho"].get<int>();
  }
  if (j.contains("toggles")) section.toggles = parse_toggles(j["toggles"]);
  if (j.contains("corpus")) section.corpus = j["corpus"].get<std::string>();
  if (j.contains("val")) section.val = j["val"].get<std::string>();
  if (j.contains("stage1")) parse_stage(j["stage1"], section.stage1, "train.stage1");
  if (j.contains("stage2")) parse_stage(j["stage2"], section.stage2, "train.stage2");
  return section;
}

}  // namespace

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config parse error: ") + e.what());
  }
  reject_unknown(j, {"model", "T", "toggles", "input", "output", "seed", "jobs", "train"},
                 "config");
  RunConfig cfg;
  try {
    if (j.contains("model")) cfg.model = j["model"].get<std::string>();
    if (j.contains("T")) cfg.T = j["T"].get<int>();
    if (j.contains("toggles")) cfg.toggles = parse_toggles(j["toggles"]);
    if (j.contains("input")) cfg.input = j["input"].get<std::string>();
    if (j.contains("output")) cfg.output = j["output"].get<std::string>();
    if (j.contains("seed")) cfg.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("jobs")) cfg.jobs = j["jobs"].get<int>();
    if (j.contains("train")) cfg.train = parse_train(j["train"]);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config field error: ") + e.what());
  }
  return cfg;
}

}  // namespace coderain
