#pragma once

#include "coderain/model.hpp"
#include "coderain/train.hpp"

#include <optional>
#include <string>

namespace coderain {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainSection {
  std::string arch = "code";
  // single-scale hyper
  int p = 16, c = 32, ksize = 3, T = 8, rho = 8;
  std::array<int, 3> scale_sizes{3, 5, 7};
  Toggles toggles;
  std::string corpus;
  std::string val;
  TrainConfig stage1, stage2;

  TrainSection() {
    stage2.lr = 8e-5;
    stage2.seed = 1;
  }
};

/// Flat run configuration; unknown keys are rejected at every level.
/// Overrides may only tighten: T must stay at or below the trained value
/// and architecture fields are immutable outside the train section.
struct RunConfig {
  std::optional<std::string> model;
  std::optional<int> T;
  std::optional<Toggles> toggles;
  std::optional<std::string> input;
  std::optional<std::string> output;
  std::optional<std::uint64_t> seed;
  std::optional<int> jobs;
  std::optional<TrainSection> train;
};

RunConfig load_run_config(const std::string& path);

}  // namespace coderain
