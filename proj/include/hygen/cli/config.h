#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "hygen/predictor/predictor.h"
#include "hygen/profiler/profiler.h"
#include "hygen/runner/runner.h"
#include "hygen/types.h"
#include "json.hpp"

namespace hygen::cli {

using nlohmann::json;

// Fully resolved experiment. `resolved` is the input merged over defaults;
// its hash identifies the run in every artifact.
struct ExperimentConfig {
  json resolved;
  std::string hash;

  sim::HardwareModel hardware;
  sim::EngineConfig engine;
  sched::SchedulerConfig scheduler;
  bool scheduler_budget_set = false;

  RequestStream online;
  RequestStream offline;
  double horizon_ms = 0.0;
  double window_s = 10.0;

  predictor::ProfileGrid grid;
  predictor::FitOptions fit;
  double holdout_fraction = 0.2;

  std::vector<profiler::SloSpec> slos;
  profiler::BudgetSearchConfig search;

  std::uint64_t workload_seed = 0;
  std::uint64_t predictor_seed = 0;
  std::vector<std::uint64_t> profiling_seeds;
  std::vector<std::uint64_t> evaluation_seeds;

  std::filesystem::path output_dir;

  RequestStream hybrid() const;
  runner::RunConfig run_config() const;
  profiler::Setup setup(const std::vector<std::uint64_t>& seeds) const;
};

json default_config();
json load_json(const std::filesystem::path& path);

// Relative trace paths are taken from `base_dir`. Throws ValidationError.
ExperimentConfig resolve(const json& input, const std::filesystem::path& base_dir = ".");

// "a/b/c" addressed scalar; throws ValidationError if the path does not
// name an existing scalar.
void set_scalar(json& doc, const std::string& path, const std::string& value);
// "--seed-override workload=5" form; list seeds take comma-separated values.
void apply_seed_override(json& doc, const std::string& kv);

// FNV-1a over the compact dump, as 16 hex digits.
std::string config_hash(const json& resolved);

struct TrainReport {
  predictor::PredictorModel model;
  std::vector<predictor::Sample> samples;
  double train_mape = 0.0;
  double holdout_mape = 0.0;
  bool degenerate = false;
};

TrainReport train_predictor(const ExperimentConfig& cfg);

}  // namespace hygen::cli
