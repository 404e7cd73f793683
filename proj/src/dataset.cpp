#include "coderain/dataset.hpp"

#include "coderain/png_io.hpp"

#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

namespace coderain {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::uint64_t mix_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b) {
  std::uint64_t h = base ^ (a * 0x9e3779b97f4a7c15ULL) ^ (b * 0xc2b2ae3d27d4eb4fULL);
  h ^= h >> 33;
  h *= 0xff51afd7ed558ccdULL;
  h ^= h >> 33;
  return h;
}

json spec_json(const RainSpec& s) {
  return json{{"density", s.density}, {"intensity", s.intensity}, {"angle", s.angle_deg},
              {"lengths", s.lengths}, {"width", s.width}};
}

RainSpec spec_from_json(const json& j, std::uint64_t seed) {
  RainSpec s;
  s.density = j.at("density").get<double>();
  s.intensity = j.at("intensity").get<double>();
  s.angle_deg = j.at("angle").get<double>();
  s.lengths = j.at("lengths").get<std::vector<int>>();
  s.width = j.at("width").get<int>();
  s.seed = seed;
  return s;
}

}  // namespace

std::vector<CorpusEntry> write_corpus(const SynthConfig& cfg) {
  if (cfg.pairs < 1) throw ParamError("write_corpus: pair count must be >= 1");
  if (cfg.size < 1) throw ParamError("write_corpus: image size must be >= 1");
  fs::create_directories(cfg.out_dir);
  std::ofstream manifest(fs::path(cfg.out_dir) / "manifest.jsonl", std::ios::trunc);
  if (!manifest) throw IoError("cannot write manifest in " + cfg.out_dir);

  std::vector<CorpusEntry> entries;
  for (int i = 0; i < cfg.pairs; ++i) {
    CorpusEntry entry;
    char id[32];
    std::snprintf(id, sizeof id, "pair_%05d", i);
    entry.id = id;
    entry.seed = mix_seed(cfg.seed, static_cast<std::uint64_t>(i), 1);

    if (cfg.spec_override) {
      entry.spec = *cfg.spec_override;
      entry.level = "custom";
    } else {
      const RainLevel level = cfg.level ? *cfg.level : static_cast<RainLevel>(i % 3);
      entry.spec = rain_preset(level);
      entry.level = rain_level_name(level);
      // per-image streak orientation
      std::mt19937_64 rng(mix_seed(cfg.seed, static_cast<std::uint64_t>(i), 2));
      entry.spec.angle_deg =
          70.0 + 40.0 * std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    }
    entry.spec.seed = entry.seed;

    Tensor clean = generate_clean(cfg.size, cfg.size,
                                  mix_seed(cfg.seed, static_cast<std::uint64_t>(i), 0));
    Tensor rain = generate_rain(cfg.size, cfg.size, entry.spec);
    Tensor rainy = compose(clean, rain);
    write_png((fs::path(cfg.out_dir) / (entry.id + "_clean.png")).string(), clean);
    write_png((fs::path(cfg.out_dir) / (entry.id + "_rain.png")).string(), rainy);

    json row{{"id", entry.id},
             {"level", entry.level},
             {"seed", entry.seed},
             {"spec", spec_json(entry.spec)}};
    manifest << row.dump() << "\n";
    entries.push_back(std::move(entry));
  }
  return entries;
}

std::vector<CorpusEntry> read_manifest(const std::string& dir) {
  std::ifstream in(fs::path(dir) / "manifest.jsonl");
  if (!in) throw IoError("cannot read manifest in " + dir);
  std::vector<CorpusEntry> entries;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json row = json::parse(line);
    CorpusEntry e;
    e.id = row.at("id").get<std::string>();
    e.level = row.at("level").get<std::string>();
    e.seed = row.at("seed").get<std::uint64_t>();
    e.spec = spec_from_json(row.at("spec"), e.seed);
    entries.push_back(std::move(e));
  }
  return entries;
}

std::vector<ImagePair> load_pairs(const std::string& dir) {
  std::vector<ImagePair> pairs;
  for (const auto& entry : read_manifest(dir)) {
    ImagePair pair;
    pair.rainy = read_png((fs::path(dir) / (entry.id + "_rain.png")).string());
    pair.clean = read_png((fs::path(dir) / (entry.id + "_clean.png")).string());
    pairs.push_back(std::move(pair));
  }
  return pairs;
}

}  // namespace coderain
