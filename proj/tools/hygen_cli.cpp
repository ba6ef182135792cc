// Experiment driver: predictor training, budget profiling, simulation runs,
// parameter sweeps and a trie dump for debugging offline ordering.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>

#include "CLI11.hpp"
#include "hygen/cli/config.h"
#include "hygen/errors.h"
#include "hygen/metrics/metrics.h"
#include "hygen/profiler/profiler.h"
#include "hygen/psm/psm.h"
#include "hygen/runner/runner.h"
#include "hygen/sim/events.h"

namespace fs = std::filesystem;
using namespace hygen;
using cli::json;

namespace {

enum Exit { kOk = 0, kValidation = 1, kInfeasible = 2, kBreach = 3 };

struct Options {
  std::string config;
  std::string model;
  std::string out;
  std::vector<std::string> seed_overrides;
  double budget = -1.0;
  std::string profile_report;
  bool online_only = false;
  std::string axis;
  std::vector<std::string> values;
};

cli::ExperimentConfig load(const Options& o, json* doc_out = nullptr) {
  json doc = cli::load_json(o.config);
  for (const auto& kv : o.seed_overrides) cli::apply_seed_override(doc, kv);
  if (doc_out) *doc_out = doc;
  return cli::resolve(doc, fs::path(o.config).parent_path());
}

fs::path out_dir(const Options& o, const cli::ExperimentConfig& c) {
  fs::path p = o.out.empty() ? c.output_dir : fs::path(o.out);
  fs::create_directories(p);
  return p;
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p);
  if (!out) throw ValidationError("cannot write " + p.string());
  out << text;
}

void write_resolved(const fs::path& dir, const cli::ExperimentConfig& c) {
  json j = {{"config_hash", c.hash}, {"config", c.resolved}};
  write_text(dir / "resolved_config.json", j.dump(2) + "\n");
}

predictor::PredictorModel model_for(const Options& o, const cli::ExperimentConfig& c) {
  if (!o.model.empty()) return predictor::PredictorModel::load(o.model);
  std::cerr << "no --model given; training one from the config\n";
  return cli::train_predictor(c).model;
}

int cmd_train(const Options& o) {
  const auto c = load(o);
  const auto dir = out_dir(o, c);
  const auto r = cli::train_predictor(c);
  r.model.save(dir / "model.json");
  predictor::write_samples_csv(dir / "samples.csv", r.samples);
  write_resolved(dir, c);
  std::printf("samples %zu  train MAPE %.4f%%  holdout MAPE %.4f%%%s\n", r.samples.size(),
              100.0 * r.train_mape, 100.0 * r.holdout_mape,
              r.degenerate ? "  (grid is degenerate)" : "");
  return kOk;
}

profiler::ProfileReport run_profile(const cli::ExperimentConfig& c,
                                    const predictor::PredictorModel& model) {
  return profiler::profile(c.setup(c.profiling_seeds), model, c.slos, c.search);
}

int cmd_profile(const Options& o) {
  const auto c = load(o);
  const auto dir = out_dir(o, c);
  const auto model = model_for(o, c);
  const auto report = run_profile(c, model);
  json j = json::parse(report.to_json());
  j["config_hash"] = c.hash;
  write_text(dir / "profile.json", j.dump(2) + "\n");
  write_resolved(dir, c);
  std::printf("L* = %.4f ms after %zu probes\n", report.search.budget_ms,
              report.search.trace.size());
  for (const auto& w : report.search.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
  return kOk;
}

double budget_for(const Options& o, const cli::ExperimentConfig& c,
                  const predictor::PredictorModel& model) {
  if (o.budget > 0.0) return o.budget;
  if (!o.profile_report.empty()) {
    return cli::load_json(o.profile_report).at("budget_ms").get<double>();
  }
  if (c.scheduler_budget_set) return c.scheduler.latency_budget_ms;
  std::cerr << "no budget given; profiling one\n";
  return run_profile(c, model).search.budget_ms;
}

std::string seed_header() { return "seed,budget_ms," + metrics::summary_header(); }

int cmd_simulate(const Options& o) {
  const auto c = load(o);
  const auto dir = out_dir(o, c);
  const auto model = model_for(o, c);
  const double budget = budget_for(o, c, model);
  auto run = c.run_config();
  run.scheduler.latency_budget_ms = budget;
  const auto stream = o.online_only ? c.online : c.hybrid();

  std::ofstream summary(dir / "summary.csv");
  summary << seed_header() << "\n";
  for (auto seed : c.evaluation_seeds) {
    auto r = run;
    r.hardware.seed = derive_seed(seed, 1);
    r.scheduler.psm.seed = derive_seed(seed, 2);
    sim::EventLog log;
    metrics::MetricsCollector collector(c.window_s);
    runner::TeeSink tee{&log, &collector};
    runner::simulate(stream, model, r, tee);
    const auto m = collector.finish(c.horizon_ms);
    const std::string tag = "seed" + std::to_string(seed);
    log.write_jsonl(dir / ("events_" + tag + ".jsonl"));
    std::ofstream win(dir / ("windows_" + tag + ".csv"));
    metrics::write_windows_csv(win, m);
    summary << seed << ',' << budget << ',' << metrics::summary_row(m, c.hash) << "\n";
    std::printf("seed %llu: mean TTFT %.2f  P99 TTFT %.2f  mean TBT %.2f  P99 TBT %.2f  "
                "online TPS %.1f  offline TPS %.1f\n",
                static_cast<unsigned long long>(seed), m.mean_ttft, m.p99_ttft, m.mean_tbt,
                m.p99_tbt, m.online_tps, m.offline_tps);
  }
  write_resolved(dir, c);
  return kOk;
}

int cmd_sweep(const Options& o) {
  json base;
  load(o, &base);
  const auto first = cli::resolve(base, fs::path(o.config).parent_path());
  const auto dir = out_dir(o, first);
  std::ofstream out(dir / "sweep.csv");
  out << "axis,value," << seed_header() << "\n";
  std::unique_ptr<predictor::PredictorModel> fixed;
  if (!o.model.empty()) {
    fixed = std::make_unique<predictor::PredictorModel>(predictor::PredictorModel::load(o.model));
  }
  for (const auto& v : o.values) {
    json doc = base;
    cli::set_scalar(doc, o.axis, v);
    const auto c = cli::resolve(doc, fs::path(o.config).parent_path());
    const auto model = fixed ? *fixed : cli::train_predictor(c).model;
    const double budget =
        c.scheduler_budget_set ? c.scheduler.latency_budget_ms : run_profile(c, model).search.budget_ms;
    auto run = c.run_config();
    run.scheduler.latency_budget_ms = budget;
    for (auto seed : c.evaluation_seeds) {
      const auto m = profiler::run_once(c.hybrid(), model, run, seed, c.window_s);
      out << o.axis << ',' << v << ',' << seed << ',' << budget << ','
          << metrics::summary_row(m, c.hash) << "\n";
    }
    std::printf("%s=%s: L=%.4f\n", o.axis.c_str(), v.c_str(), budget);
  }
  return kOk;
}

int cmd_dump_trie(const Options& o) {
  const auto c = load(o);
  psm::PsmQueue q(c.scheduler.psm);
  for (const auto& r : c.offline.requests) q.insert(r);
  std::cout << q.tree().dump();
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"HyGen hybrid serving scheduler experiments"};
  app.require_subcommand(1);
  Options o;
  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "experiment config (JSON)")->required();
    sub->add_option("--out", o.out, "output directory");
    sub->add_option("--seed-override", o.seed_overrides, "seed key=value");
  };
  auto* train = app.add_subcommand("train-predictor", "profile hardware and fit the predictor");
  common(train);
  auto* prof = app.add_subcommand("profile", "search the latency budget L");
  common(prof);
  prof->add_option("--model", o.model, "predictor model JSON");
  auto* sim = app.add_subcommand("simulate", "run the hybrid workload");
  common(sim);
  sim->add_option("--model", o.model, "predictor model JSON");
  sim->add_option("--budget", o.budget, "latency budget L in ms");
  sim->add_option("--profile-report", o.profile_report, "take L from a profile report");
  sim->add_flag("--online-only", o.online_only, "drop offline requests");
  auto* sweep = app.add_subcommand("sweep", "profile and simulate across values of one field");
  common(sweep);
  sweep->add_option("--model", o.model, "predictor model JSON");
  sweep->add_option("--axis", o.axis, "slash-separated config path")->required();
  sweep->add_option("--values", o.values, "values")->required()->delimiter(',');
  auto* dump = app.add_subcommand("dump-trie", "print the offline prefix tree");
  common(dump);

  CLI11_PARSE(app, argc, argv);
  try {
    if (*train) return cmd_train(o);
    if (*prof) return cmd_profile(o);
    if (*sim) return cmd_simulate(o);
    if (*sweep) return cmd_sweep(o);
    if (*dump) return cmd_dump_trie(o);
  } catch (const InfeasibleRangeError& e) {
    std::cerr << "infeasible: " << e.what() << "\n";
    return kInfeasible;
  } catch (const ContractViolation& e) {
    std::cerr << "invariant breach: " << e.what() << "\n";
    return kBreach;
  } catch (const InvariantBreach& e) {
    std::cerr << "invariant breach: " << e.what() << "\n";
    return kBreach;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kValidation;
  }
  return kOk;
}
