#pragma once

#include "coderain/synth.hpp"
#include "coderain/train.hpp"

#include <optional>
#include <string>
#include <vector>

namespace coderain {

struct SynthConfig {
  std::string out_dir;
  int pairs = 100;
  int size = 64;
  std::uint64_t seed = 0;
  std::optional<RainLevel> level;       // fixed level; default round-robin
  std::optional<RainSpec> spec_override;  // full custom spec (level tag "custom")
};

struct CorpusEntry {
  std::string id;
  std::string level;
  std::uint64_t seed = 0;
  RainSpec spec;
};

/// Emits {id}_rain.png / {id}_clean.png pairs plus manifest.jsonl
/// (one record per pair: id, density level, seed, spec). Deterministic
/// given the seed.
std::vector<CorpusEntry> write_corpus(const SynthConfig& cfg);

std::vector<CorpusEntry> read_manifest(const std::string& dir);

/// Loads every manifest pair into memory.
std::vector<ImagePair> load_pairs(const std::string& dir);

}  // namespace coderain
