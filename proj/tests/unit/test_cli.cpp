#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "hygen/cli/config.h"
#include "hygen/errors.h"

using namespace hygen;
using namespace hygen::cli;
namespace fs = std::filesystem;

namespace {

json minimal() {
  return json::parse(R"({
    "hardware": {"c0": 5, "c1": 0.02, "c2": 0.1, "c3": 0, "c4": 0.5, "c5": 0.05},
    "workload": {
      "online": {"synth": {"rate": 1, "duration_s": 20,
                           "prompt": {"kind": "fixed", "a": 64},
                           "output": {"kind": "fixed", "a": 8}}},
      "offline": {"backlog": {"count": 30, "prompt": {"kind": "fixed", "a": 100},
                              "output": {"kind": "fixed", "a": 10}}}
    },
    "scheduler": {"latency_budget_ms": 12},
    "predictor": {"grid": {"prefill_tokens": {"from": 0, "to": 1024, "step": 256},
                           "prefill_requests": [1, 2], "decode_requests": [0, 4, 8, 16]}},
    "profiler": {"trials": 1},
    "seeds": {"evaluation": [21]}
  })");
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(HYGEN_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("hygen_cli_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

void write(const fs::path& p, const json& j) { std::ofstream(p) << j.dump(2); }

}  // namespace

TEST_CASE("resolve fills defaults and builds streams") {
  const auto c = resolve(minimal());
  CHECK(c.scheduler_budget_set);
  CHECK(c.scheduler.latency_budget_ms == 12.0);
  CHECK(c.scheduler.offline_policy == sched::OfflinePolicy::kPsm);
  CHECK(c.engine.kv_blocks_total == 8192);
  CHECK(c.offline.requests.size() == 30);
  CHECK(c.offline.requests.front().id == static_cast<RequestId>(c.online.requests.size()));
  CHECK(c.horizon_ms == c.online.duration_ms);
  CHECK(c.evaluation_seeds == std::vector<std::uint64_t>{21});
  CHECK(c.profiling_seeds.size() == 3);
  CHECK(c.grid.prefill_tokens.size() == 5);
  CHECK(c.hybrid().requests.size() == c.online.requests.size() + 30);
  CHECK(c.resolved.at("engine").at("chunk_size") == 512);
}

TEST_CASE("missing or bad sections are rejected") {
  auto j = minimal();
  j.erase("hardware");
  CHECK_THROWS_AS(resolve(j), ValidationError);
  j = minimal();
  j["workload"].erase("online");
  CHECK_THROWS_AS(resolve(j), ValidationError);
  j = minimal();
  j["scheduler"]["offline_policy"] = "lifo";
  CHECK_THROWS_AS(resolve(j), ValidationError);
  j = minimal();
  j["hardware"]["c1"] = -1;
  CHECK_THROWS_AS(resolve(j), ValidationError);
  j = minimal();
  j["workload"]["offline"] = {{"nothing", 1}};
  CHECK_THROWS_AS(resolve(j), ValidationError);
}

TEST_CASE("set_scalar edits existing scalars only") {
  auto j = minimal();
  set_scalar(j, "scheduler/latency_budget_ms", "7.5");
  CHECK(j["scheduler"]["latency_budget_ms"] == 7.5);
  set_scalar(j, "hardware/c1", "0.5");
  CHECK(resolve(j).hardware.c1 == 0.5);
  CHECK_THROWS_AS(set_scalar(j, "hardware/nope", "1"), ValidationError);
  CHECK_THROWS_AS(set_scalar(j, "hardware", "1"), ValidationError);
  CHECK_THROWS_AS(set_scalar(j, "hardware/c1", "[1]"), ValidationError);
}

TEST_CASE("hash follows the resolved config") {
  const auto a = resolve(minimal());
  const auto b = resolve(minimal());
  CHECK(a.hash == b.hash);
  CHECK(a.hash.size() == 16);
  auto j = minimal();
  j["scheduler"]["latency_budget_ms"] = 13;
  CHECK(resolve(j).hash != a.hash);
  // Spelling out a default does not change the hash.
  j = minimal();
  j["engine"] = {{"chunk_size", 512}};
  CHECK(resolve(j).hash == a.hash);
}

TEST_CASE("seed overrides") {
  auto j = minimal();
  apply_seed_override(j, "evaluation=4,5,6");
  apply_seed_override(j, "workload=9");
  const auto c = resolve(j);
  CHECK(c.evaluation_seeds == std::vector<std::uint64_t>{4, 5, 6});
  CHECK(c.workload_seed == 9);
  CHECK(c.online.requests != resolve(minimal()).online.requests);
  CHECK_THROWS_AS(apply_seed_override(j, "colour=1"), ValidationError);
  CHECK_THROWS_AS(apply_seed_override(j, "workload"), ValidationError);
  CHECK_THROWS_AS(apply_seed_override(j, "workload=x"), ValidationError);
}

TEST_CASE("training from a config") {
  const auto r = train_predictor(resolve(minimal()));
  // 4 nonzero token values x 2 request counts x 4 decodes, plus 4 cells with no prefill.
  CHECK(r.samples.size() == 4 * 2 * 4 + 4);
  CHECK(r.train_mape < 1e-9);
  CHECK_FALSE(r.degenerate);
}

TEST_CASE("cli subcommands and exit codes") {
  const auto dir = scratch("run");
  write(dir / "cfg.json", minimal());
  const auto cfg = (dir / "cfg.json").string();
  const auto out = (dir / "out").string();

  CHECK(run_cli("train-predictor --config " + cfg + " --out " + out) == 0);
  CHECK(fs::exists(fs::path(out) / "model.json"));
  CHECK(fs::exists(fs::path(out) / "samples.csv"));
  const auto model = (fs::path(out) / "model.json").string();

  CHECK(run_cli("simulate --config " + cfg + " --out " + out + " --model " + model) == 0);
  CHECK(fs::exists(fs::path(out) / "summary.csv"));
  CHECK(fs::exists(fs::path(out) / "events_seed21.jsonl"));
  CHECK(fs::exists(fs::path(out) / "windows_seed21.csv"));
  std::ifstream summary(fs::path(out) / "summary.csv");
  std::string header;
  std::getline(summary, header);
  CHECK(header.rfind("seed,budget_ms,mean_ttft_ms", 0) == 0);

  CHECK(run_cli("sweep --config " + cfg + " --out " + out + " --model " + model +
                " --axis scheduler/latency_budget_ms --values 10,20") == 0);
  CHECK(fs::exists(fs::path(out) / "sweep.csv"));
  CHECK(run_cli("dump-trie --config " + cfg) == 0);

  // Validation failure.
  auto bad = minimal();
  bad.erase("hardware");
  write(dir / "bad.json", bad);
  CHECK(run_cli("simulate --config " + (dir / "bad.json").string()) == 1);

  // The lowest budget cannot hold a 0% tolerance on a noisy machine.
  auto tight = minimal();
  tight["hardware"]["noise_pct"] = 0.05;
  tight["scheduler"]["latency_budget_ms"] = nullptr;
  tight["slos"] = json::array({{{"metric", "p99_tbt"}, {"tolerance", 0.0}}});
  tight["profiler"]["lo_ms"] = 40.0;
  write(dir / "tight.json", tight);
  CHECK(run_cli("profile --config " + (dir / "tight.json").string() + " --out " + out +
                " --model " + model) == 2);
  fs::remove_all(dir);
}
