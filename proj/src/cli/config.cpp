#include "hygen/cli/config.h"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "hygen/errors.h"
#include "hygen/workload/workload.h"

namespace hygen::cli {

json default_config() {
  return json::parse(R"({
    "engine": {"kv_blocks_total": 8192, "block_size": 16, "chunk_size": 512,
               "offline_reserve_blocks": 0, "readmission_penalty_ms": 0.0,
               "prefix_cache_max_entries": -1},
    "scheduler": {"offline_policy": "psm", "utility_ratio": 1.0,
                  "preemption_mode": "preserve", "lookahead": false,
                  "latency_budget_ms": null},
    "workload": {"offline": null, "horizon_s": null},
    "predictor": {"enable_sd2": true, "holdout_fraction": 0.2,
                  "grid": {"prefill_tokens": {"from": 0, "to": 4096, "step": 128},
                           "prefill_requests": [1, 2, 3, 4],
                           "decode_requests": {"from": 0, "to": 64, "step": 1},
                           "repeats": 1}},
    "slos": [{"metric": "mean_tbt", "tolerance": 0.1}],
    "profiler": {"lo_ms": 0.001, "hi_ms": 100.0, "eps_ms": 0.5, "trials": 3,
                 "safety": 1.0},
    "seeds": {"workload": 1, "predictor": 2, "profiling": [11, 12, 13],
              "evaluation": [21, 22, 23]},
    "metrics": {"window_s": 10.0},
    "output_dir": "out"
  })");
}

json load_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open config " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ValidationError("config " + path.string() + ": " + e.what());
  }
}

namespace {

template <typename T>
T get(const json& j, const char* key, const std::string& where) {
  if (!j.contains(key)) throw ValidationError(where + ": missing '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ValidationError(where + "." + key + ": " + e.what());
  }
}

template <typename T>
T get_or(const json& j, const char* key, T fallback, const std::string& where) {
  if (!j.contains(key) || j.at(key).is_null()) return fallback;
  return get<T>(j, key, where);
}

std::vector<std::int64_t> int_list(const json& j, const std::string& where) {
  std::vector<std::int64_t> out;
  if (j.is_array()) {
    for (const auto& v : j) out.push_back(v.get<std::int64_t>());
  } else if (j.is_object()) {
    const auto from = get<std::int64_t>(j, "from", where);
    const auto to = get<std::int64_t>(j, "to", where);
    const auto step = get<std::int64_t>(j, "step", where);
    if (step < 1) throw ValidationError(where + ": step must be >= 1");
    for (auto v = from; v <= to; v += step) out.push_back(v);
  } else {
    throw ValidationError(where + ": expected a list or {from, to, step}");
  }
  return out;
}

std::vector<std::uint64_t> seed_list(const json& j, const std::string& where) {
  if (!j.is_array() || j.empty()) throw ValidationError(where + ": expected a nonempty list");
  std::vector<std::uint64_t> out;
  for (const auto& v : j) out.push_back(v.get<std::uint64_t>());
  return out;
}

workload::LengthDist length_dist(const json& j, const std::string& where) {
  workload::LengthDist d;
  const auto kind = get<std::string>(j, "kind", where);
  if (kind == "fixed") {
    d.kind = workload::LengthDist::Kind::kFixed;
  } else if (kind == "uniform") {
    d.kind = workload::LengthDist::Kind::kUniform;
  } else if (kind == "lognormal") {
    d.kind = workload::LengthDist::Kind::kLogNormal;
  } else {
    throw ValidationError(where + ".kind: unknown '" + kind + "'");
  }
  d.a = get<double>(j, "a", where);
  d.b = get_or<double>(j, "b", 0.0, where);
  d.min = get_or<Tokens>(j, "min", 1, where);
  d.max = get_or<Tokens>(j, "max", Tokens{1} << 20, where);
  d.validate(where.c_str());
  return d;
}

workload::LengthSpec length_spec(const json& j, const std::string& where) {
  return {length_dist(get<json>(j, "prompt", where), where + ".prompt"),
          length_dist(get<json>(j, "output", where), where + ".output")};
}

workload::BurstSpec burst_spec(const json& j, const std::string& where) {
  workload::BurstSpec b;
  if (j.is_null()) return b;
  const auto shape = get_or<std::string>(j, "shape", "sinusoidal", where);
  if (shape == "sinusoidal") {
    b.shape = workload::BurstSpec::Shape::kSinusoidal;
  } else if (shape == "piecewise") {
    b.shape = workload::BurstSpec::Shape::kPiecewise;
  } else {
    throw ValidationError(where + ".shape: unknown '" + shape + "'");
  }
  b.factor = get_or<double>(j, "factor", 1.0, where);
  b.period_s = get_or<double>(j, "period_s", 120.0, where);
  return b;
}

std::filesystem::path trace_path(const json& j, const std::filesystem::path& base,
                                 const std::string& where) {
  std::filesystem::path p = get<std::string>(j, "trace", where);
  if (p.is_relative()) p = base / p;
  if (!std::filesystem::exists(p)) throw ValidationError(where + ": no such trace " + p.string());
  return p;
}

RequestStream online_stream(const json& j, const std::filesystem::path& base, std::uint64_t seed) {
  const std::string where = "workload.online";
  if (j.contains("trace")) {
    auto s = workload::load_trace(trace_path(j, base, where), RequestClass::kOnline);
    for (const auto& r : s.requests) {
      if (!r.online()) throw ValidationError(where + ": trace has offline records");
    }
    if (j.contains("sample_qps")) {
      const double duration_s = get<double>(j, "duration_s", where);
      s = workload::sample_to_qps(s, get<double>(j, "sample_qps", where), duration_s,
                                  derive_seed(seed, 11));
    }
    return s;
  }
  const json& g = get<json>(j, "synth", where);
  return workload::synth_arrivals(get<double>(g, "rate", where + ".synth"),
                                  get<double>(g, "duration_s", where + ".synth"),
                                  burst_spec(g.value("burst", json()), where + ".synth.burst"),
                                  length_spec(g, where + ".synth"), derive_seed(seed, 12));
}

RequestStream offline_stream(const json& j, const std::filesystem::path& base, std::uint64_t seed,
                             RequestId first_id) {
  const std::string where = "workload.offline";
  RequestStream s;
  if (j.is_null()) return s;
  if (j.contains("trace")) {
    s = workload::load_trace(trace_path(j, base, where), RequestClass::kOffline, first_id);
    for (const auto& r : s.requests) {
      if (r.online()) throw ValidationError(where + ": trace has online records");
    }
  } else if (j.contains("prefix")) {
    const json& p = j.at("prefix");
    const std::string w = where + ".prefix";
    s = workload::synth_prefix_workload(get<int>(p, "n_groups", w), get<int>(p, "per_group", w),
                                        get<Tokens>(p, "shared_tokens", w),
                                        get<Tokens>(p, "unique_tokens", w), derive_seed(seed, 13),
                                        first_id, get_or<Tokens>(p, "output_tokens", 1, w));
  } else if (j.contains("backlog")) {
    // A pool available from time zero.
    const json& b = j.at("backlog");
    const std::string w = where + ".backlog";
    const auto count = get<std::int64_t>(b, "count", w);
    if (count < 0) throw ValidationError(w + ".count must be >= 0");
    const auto lengths = length_spec(b, w);
    Rng rng(derive_seed(seed, 14));
    for (std::int64_t i = 0; i < count; ++i) {
      Request r;
      r.id = first_id + i;
      r.cls = RequestClass::kOffline;
      r.arrival_ms = 0.0;
      r.prompt_tokens = lengths.prompt.sample(rng);
      r.output_tokens = lengths.output.sample(rng);
      r.prompt_path = {{workload::kFreshSegmentBase + r.id, r.prompt_tokens}};
      r.priority = default_priority(RequestClass::kOffline);
      s.requests.push_back(std::move(r));
    }
    s.validate();
  } else {
    throw ValidationError(where + ": expected one of trace, prefix, backlog");
  }
  return s;
}

}  // namespace

ExperimentConfig resolve(const json& input, const std::filesystem::path& base_dir) {
  if (!input.is_object()) throw ValidationError("config must be a JSON object");
  if (!input.contains("hardware")) throw ValidationError("config: missing 'hardware' section");
  if (!input.contains("workload") || !input.at("workload").contains("online")) {
    throw ValidationError("config: missing 'workload.online' section");
  }
  json doc = default_config();
  doc.merge_patch(input);

  ExperimentConfig c;
  c.resolved = doc;
  c.hash = config_hash(doc);

  const json& hw = doc.at("hardware");
  const std::string w = "hardware";
  c.hardware.c0 = get_or<double>(hw, "c0", 0.0, w);
  c.hardware.c1 = get_or<double>(hw, "c1", 0.0, w);
  c.hardware.c2 = get_or<double>(hw, "c2", 0.0, w);
  c.hardware.c3 = get_or<double>(hw, "c3", 0.0, w);
  c.hardware.c3b = get_or<double>(hw, "c3b", 0.0, w);
  c.hardware.c4 = get_or<double>(hw, "c4", 0.0, w);
  c.hardware.c5 = get_or<double>(hw, "c5", 0.0, w);
  c.hardware.c_cross = get_or<double>(hw, "c_cross", 0.0, w);
  c.hardware.noise_pct = get_or<double>(hw, "noise_pct", 0.0, w);
  c.hardware.parallel_scale = get_or<double>(hw, "parallel_scale", 1.0, w);
  c.hardware.validate();

  const json& en = doc.at("engine");
  c.engine.kv_blocks_total = get<Blocks>(en, "kv_blocks_total", "engine");
  c.engine.block_size = get<Tokens>(en, "block_size", "engine");
  c.engine.readmission_penalty_ms = get<double>(en, "readmission_penalty_ms", "engine");
  const auto max_entries = get<std::int64_t>(en, "prefix_cache_max_entries", "engine");
  c.engine.prefix_cache_max_entries =
      max_entries < 0 ? sim::PrefixCache::kUnlimited : static_cast<std::size_t>(max_entries);

  const json& sc = doc.at("scheduler");
  c.scheduler.chunk_size = get<Tokens>(en, "chunk_size", "engine");
  c.scheduler.offline_reserve_blocks = get<Blocks>(en, "offline_reserve_blocks", "engine");
  c.scheduler.offline_policy =
      sched::parse_offline_policy(get<std::string>(sc, "offline_policy", "scheduler"));
  c.scheduler.psm.utility_ratio = get<double>(sc, "utility_ratio", "scheduler");
  c.scheduler.lookahead = get<bool>(sc, "lookahead", "scheduler");
  const auto mode = get<std::string>(sc, "preemption_mode", "scheduler");
  if (mode == "preserve") {
    c.engine.preemption_mode = sim::PreemptionMode::kPreserve;
  } else if (mode == "discard") {
    c.engine.preemption_mode = sim::PreemptionMode::kDiscard;
  } else {
    throw ValidationError("scheduler.preemption_mode: unknown '" + mode + "'");
  }
  c.scheduler_budget_set = sc.contains("latency_budget_ms") && !sc.at("latency_budget_ms").is_null();
  c.scheduler.latency_budget_ms =
      c.scheduler_budget_set ? get<double>(sc, "latency_budget_ms", "scheduler") : 1.0;
  c.engine.validate();
  c.scheduler.validate();

  const json& seeds = doc.at("seeds");
  c.workload_seed = get<std::uint64_t>(seeds, "workload", "seeds");
  c.predictor_seed = get<std::uint64_t>(seeds, "predictor", "seeds");
  c.profiling_seeds = seed_list(seeds.at("profiling"), "seeds.profiling");
  c.evaluation_seeds = seed_list(seeds.at("evaluation"), "seeds.evaluation");

  const json& wl = doc.at("workload");
  c.online = online_stream(wl.at("online"), base_dir, c.workload_seed);
  c.offline = offline_stream(wl.value("offline", json()), base_dir, c.workload_seed,
                             static_cast<RequestId>(c.online.requests.size()));
  const double horizon_s = get_or<double>(wl, "horizon_s", -1.0, "workload");
  c.horizon_ms = horizon_s >= 0.0 ? horizon_s * 1000.0 : c.online.duration_ms;
  c.window_s = get<double>(doc.at("metrics"), "window_s", "metrics");
  if (!(c.window_s > 0.0)) throw ValidationError("metrics.window_s must be > 0");

  const json& pr = doc.at("predictor");
  c.fit.enable_sd2 = get<bool>(pr, "enable_sd2", "predictor");
  c.holdout_fraction = get<double>(pr, "holdout_fraction", "predictor");
  const json& grid = pr.at("grid");
  c.grid.prefill_tokens = int_list(grid.at("prefill_tokens"), "predictor.grid.prefill_tokens");
  c.grid.prefill_requests = int_list(grid.at("prefill_requests"), "predictor.grid.prefill_requests");
  c.grid.decode_requests = int_list(grid.at("decode_requests"), "predictor.grid.decode_requests");
  c.grid.repeats = get<int>(grid, "repeats", "predictor.grid");
  c.grid.validate();

  if (!doc.at("slos").is_array()) throw ValidationError("slos must be a list");
  for (const auto& s : doc.at("slos")) {
    profiler::SloSpec slo;
    slo.metric = metrics::parse_slo_metric(get<std::string>(s, "metric", "slos"));
    slo.tolerance = get<double>(s, "tolerance", "slos");
    slo.validate();
    c.slos.push_back(slo);
  }

  const json& pf = doc.at("profiler");
  c.search.lo_ms = get<double>(pf, "lo_ms", "profiler");
  c.search.hi_ms = get<double>(pf, "hi_ms", "profiler");
  c.search.eps_ms = get<double>(pf, "eps_ms", "profiler");
  c.search.trials = get<int>(pf, "trials", "profiler");
  c.search.safety = get<double>(pf, "safety", "profiler");
  c.search.validate();

  c.output_dir = get<std::string>(doc, "output_dir", "config");
  return c;
}

RequestStream ExperimentConfig::hybrid() const {
  if (offline.requests.empty()) return online;
  auto s = merge_streams(online, offline);
  s.duration_ms = online.duration_ms;
  return s;
}

runner::RunConfig ExperimentConfig::run_config() const {
  runner::RunConfig r;
  r.engine = engine;
  r.hardware = hardware;
  r.scheduler = scheduler;
  r.horizon_ms = horizon_ms;
  return r;
}

profiler::Setup ExperimentConfig::setup(const std::vector<std::uint64_t>& seeds) const {
  profiler::Setup s;
  s.online = online;
  s.hybrid = hybrid();
  s.run = run_config();
  s.seeds = seeds;
  s.window_s = window_s;
  return s;
}

void set_scalar(json& doc, const std::string& path, const std::string& value) {
  json::json_pointer ptr("/" + path);
  if (!doc.contains(ptr)) throw ValidationError("no config field '" + path + "'");
  const json& old = doc.at(ptr);
  if (old.is_structured()) throw ValidationError("config field '" + path + "' is not a scalar");
  json v;
  try {
    v = json::parse(value);
  } catch (const json::parse_error&) {
    v = value;
  }
  if (v.is_structured()) throw ValidationError("value for '" + path + "' is not a scalar");
  doc[ptr] = v;
}

void apply_seed_override(json& doc, const std::string& kv) {
  const auto eq = kv.find('=');
  if (eq == std::string::npos) throw ValidationError("seed override must be key=value");
  const std::string key = kv.substr(0, eq);
  const std::string value = kv.substr(eq + 1);
  if (key != "workload" && key != "predictor" && key != "profiling" && key != "evaluation") {
    throw ValidationError("unknown seed '" + key + "'");
  }
  try {
    if (key == "profiling" || key == "evaluation") {
      json list = json::array();
      std::stringstream ss(value);
      std::string item;
      while (std::getline(ss, item, ',')) list.push_back(std::stoull(item));
      doc["seeds"][key] = list;
    } else {
      doc["seeds"][key] = std::stoull(value);
    }
  } catch (const std::logic_error&) {
    throw ValidationError("bad seed value in '" + kv + "'");
  }
}

std::string config_hash(const json& resolved) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : resolved.dump()) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

TrainReport train_predictor(const ExperimentConfig& cfg) {
  TrainReport r;
  const auto prof = predictor::profile_hardware(cfg.hardware, cfg.grid, cfg.predictor_seed);
  r.samples = prof.samples;
  r.degenerate = prof.degenerate;
  if (cfg.holdout_fraction > 0.0) {
    auto [train, hold] = predictor::split_samples(r.samples, cfg.holdout_fraction,
                                                  derive_seed(cfg.predictor_seed, 1));
    r.model = predictor::fit(train, cfg.fit);
    r.holdout_mape = predictor::mape(r.model, hold);
  } else {
    r.model = predictor::fit(r.samples, cfg.fit);
    r.holdout_mape = r.model.fit_stats.train_mape;
  }
  r.train_mape = r.model.fit_stats.train_mape;
  r.model.fit_stats.holdout_mape = r.holdout_mape;
  return r;
}

}  // namespace hygen::cli
