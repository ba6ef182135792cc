#include <algorithm>
#include <fstream>
#include <sstream>

#include "json.hpp"

#include "hygen/errors.h"
#include "hygen/predictor/predictor.h"

namespace hygen::predictor {

using nlohmann::json;

PredictorModel PredictorModel::from_hardware(const sim::HardwareModel& hw) {
  PredictorModel m;
  const double s = hw.parallel_scale;
  m.intercept = hw.c0;
  m.weights = {hw.c1 / s, hw.c2 / s, hw.c3 / s, hw.c3b / s, hw.c4 / s, hw.c5 / s};
  return m;
}

std::string PredictorModel::to_json() const {
  json w = {{"intercept", intercept}};
  json names = json::array();
  for (std::size_t i = 0; i < kNumFeatures; ++i) {
    const std::string name(kFeatureNames[i]);
    w[name] = weights[i];
    if (enabled[i]) names.push_back(name);
  }
  json doc = {{"weights", w},
              {"enabled_features", names},
              {"fit_stats",
               {{"samples", fit_stats.samples},
                {"train_mape", fit_stats.train_mape},
                {"holdout_mape", fit_stats.holdout_mape}}}};
  return doc.dump(2);
}

PredictorModel PredictorModel::from_json(const std::string& text) {
  PredictorModel m;
  try {
    const json doc = json::parse(text);
    const json& w = doc.at("weights");
    m.intercept = w.at("intercept").get<double>();
    m.enabled.fill(false);
    for (const auto& name : doc.at("enabled_features")) {
      const auto n = name.get<std::string>();
      auto it = std::find(kFeatureNames.begin(), kFeatureNames.end(), n);
      if (it == kFeatureNames.end()) throw ParseError("unknown feature '" + n + "'");
      m.enabled[static_cast<std::size_t>(it - kFeatureNames.begin())] = true;
    }
    for (std::size_t i = 0; i < kNumFeatures; ++i) {
      m.weights[i] = w.value(std::string(kFeatureNames[i]), 0.0);
    }
    if (auto it = doc.find("fit_stats"); it != doc.end()) {
      m.fit_stats.samples = it->value("samples", std::size_t{0});
      m.fit_stats.train_mape = it->value("train_mape", 0.0);
      m.fit_stats.holdout_mape = it->value("holdout_mape", -1.0);
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("model json: ") + e.what());
  }
  return m;
}

void PredictorModel::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write model " + path.string());
  out << to_json() << '\n';
}

PredictorModel PredictorModel::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open model " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return from_json(buf.str());
}

double predict(const PredictorModel& model, const BatchFeatures& f) {
  const auto x = f.as_array();
  double y = model.intercept;
  for (std::size_t i = 0; i < kNumFeatures; ++i) {
    if (model.enabled[i]) y += model.weights[i] * x[i];
  }
  return std::max(0.0, y);
}

BatchFeatures featurize(const sim::BatchPlan& plan) {
  Tokens prefill = 0;
  std::int64_t n_prefill = 0;
  std::int64_t n_decode = 0;
  for (const auto& e : plan.entries) {
    if (e.decode()) {
      ++n_decode;
    } else {
      prefill += e.prefill_tokens;
      ++n_prefill;
    }
  }
  return BatchFeatures::from_counts(prefill, n_prefill, n_decode);
}

double predict_decode_marginal(const PredictorModel& model, const BatchFeatures& acc) {
  return std::max(0.0, predict(model, acc.with_decode()) - predict(model, acc));
}

double predict_prefill_marginal(const PredictorModel& model,
                                const BatchFeatures& acc, Tokens l) {
  return std::max(0.0, predict(model, acc.with_prefill(l)) - predict(model, acc));
}

Tokens memory_token_cap(const PrefillCandidate& r, Blocks blocks, Tokens block_size) {
  const Tokens cap = (r.blocks_held + std::max<Blocks>(blocks, 0)) * block_size -
                     r.context_tokens;
  return std::max<Tokens>(cap, 0);
}

MaxTokens get_max_tokens(const PredictorModel& model, double latency_budget,
                         Tokens chunk, Blocks blocks, const PrefillCandidate& r,
                         const BatchFeatures& acc, Tokens block_size) {
  const Tokens upper = std::min({chunk, r.remaining_prefill,
                                 memory_token_cap(r, blocks, block_size)});
  if (upper <= 0) return {};
  const double base = predict(model, acc);
  auto cost = [&](Tokens l) {
    return std::max(0.0, predict(model, acc.with_prefill(l)) - base);
  };
  const double at_upper = cost(upper);
  if (at_upper <= latency_budget) return {upper, at_upper};
  if (cost(1) > latency_budget) return {};
  Tokens ok = 1;
  Tokens bad = upper;
  while (bad - ok > 1) {
    const Tokens mid = ok + (bad - ok) / 2;
    if (cost(mid) <= latency_budget) {
      ok = mid;
    } else {
      bad = mid;
    }
  }
  return {ok, cost(ok)};
}

}  // namespace hygen::predictor
