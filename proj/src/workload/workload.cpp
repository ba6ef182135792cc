#include "hygen/workload/workload.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "json.hpp"

#include "hygen/errors.h"

namespace hygen::workload {

using nlohmann::json;

namespace {

template <typename T>
T require_int(const json& rec, const char* key, std::size_t line) {
  auto it = rec.find(key);
  if (it == rec.end() || !it->is_number_integer()) {
    throw ParseError("line " + std::to_string(line) + ": missing or non-integer '" +
                     key + "'");
  }
  return it->get<T>();
}

Request parse_record(const std::string& text, std::size_t line,
                     RequestClass default_class, RequestId id) {
  json rec;
  try {
    rec = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError("line " + std::to_string(line) + ": " + e.what());
  }
  if (!rec.is_object()) {
    throw ParseError("line " + std::to_string(line) + ": record is not an object");
  }

  Request r;
  r.id = id;
  r.cls = default_class;
  if (auto it = rec.find("class"); it != rec.end()) {
    if (!it->is_string()) {
      throw ParseError("line " + std::to_string(line) + ": 'class' must be a string");
    }
    try {
      r.cls = parse_request_class(it->get<std::string>());
    } catch (const ValidationError& e) {
      throw ParseError("line " + std::to_string(line) + ": " + e.what());
    }
  }
  auto arrival = rec.find("arrival_ms");
  if (arrival == rec.end() || !arrival->is_number()) {
    throw ParseError("line " + std::to_string(line) + ": missing 'arrival_ms'");
  }
  r.arrival_ms = arrival->get<double>();
  r.prompt_tokens = require_int<Tokens>(rec, "prompt_tokens", line);
  r.output_tokens = require_int<Tokens>(rec, "output_tokens", line);
  r.priority = default_priority(r.cls);
  if (auto it = rec.find("priority"); it != rec.end()) {
    if (!it->is_number_integer()) {
      throw ParseError("line " + std::to_string(line) + ": 'priority' must be an integer");
    }
    r.priority = it->get<int>();
  }

  if (auto it = rec.find("prompt_path"); it != rec.end() && !it->is_null()) {
    if (!it->is_array()) {
      throw ParseError("line " + std::to_string(line) + ": 'prompt_path' must be an array");
    }
    for (const auto& pair : *it) {
      if (!pair.is_array() || pair.size() != 2 || !pair[0].is_number_integer() ||
          !pair[1].is_number_integer()) {
        throw ParseError("line " + std::to_string(line) +
                         ": prompt_path entries must be [segment_id, tokens]");
      }
      r.prompt_path.push_back({pair[0].get<SegmentId>(), pair[1].get<Tokens>()});
    }
  } else if (r.prompt_tokens >= 1) {
    r.prompt_path.push_back({kFreshSegmentBase + id, r.prompt_tokens});
  }

  try {
    r.validate();
  } catch (const ValidationError& e) {
    throw ValidationError("line " + std::to_string(line) + ": " + e.what());
  }
  return r;
}

}  // namespace

RequestStream parse_trace(std::istream& in, RequestClass default_class,
                          RequestId first_id) {
  RequestStream stream;
  std::string text;
  std::size_t line = 0;
  RequestId next_id = first_id;
  while (std::getline(in, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    stream.requests.push_back(parse_record(text, line, default_class, next_id++));
  }
  sort_by_arrival(stream.requests);
  for (const auto& r : stream.requests) {
    stream.duration_ms = std::max(stream.duration_ms, r.arrival_ms);
  }
  stream.validate();
  return stream;
}

RequestStream load_trace(const std::filesystem::path& path,
                         RequestClass default_class, RequestId first_id) {
  std::ifstream in(path);
  if (!in) {
    throw ValidationError("cannot open trace file " + path.string());
  }
  return parse_trace(in, default_class, first_id);
}

void write_trace(std::ostream& out, const RequestStream& stream) {
  for (const auto& r : stream.requests) {
    json path = json::array();
    for (const auto& seg : r.prompt_path) path.push_back({seg.id, seg.tokens});
    json rec = {{"arrival_ms", r.arrival_ms},
                {"class", std::string(to_string(r.cls))},
                {"prompt_tokens", r.prompt_tokens},
                {"output_tokens", r.output_tokens},
                {"prompt_path", std::move(path)},
                {"priority", r.priority}};
    out << rec.dump() << '\n';
  }
}

void write_trace(const std::filesystem::path& path, const RequestStream& stream) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write trace file " + path.string());
  write_trace(out, stream);
}

RequestStream sample_to_qps(const RequestStream& stream, double target_qps,
                            double duration_s, std::uint64_t seed) {
  if (target_qps <= 0.0 || duration_s <= 0.0) {
    throw ValidationError("sample_to_qps: target_qps and duration_s must be > 0");
  }
  const double window_ms = duration_s * 1000.0;
  std::vector<std::size_t> window;
  for (std::size_t i = 0; i < stream.requests.size(); ++i) {
    const double t = stream.requests[i].arrival_ms;
    if (t >= 0.0 && t < window_ms) window.push_back(i);
  }
  const auto wanted = static_cast<std::size_t>(std::llround(duration_s * target_qps));
  if (window.size() < wanted) {
    throw CapacityError("sample_to_qps: need " + std::to_string(wanted) +
                            " requests in window but only " +
                            std::to_string(window.size()) + " available",
                        static_cast<long long>(window.size()));
  }

  // Partial Fisher-Yates: the first `wanted` slots become the sample.
  Rng rng(seed);
  for (std::size_t i = 0; i < wanted; ++i) {
    const auto j = i + rng.below(window.size() - i);
    std::swap(window[i], window[j]);
  }
  window.resize(wanted);
  std::sort(window.begin(), window.end());

  RequestStream out;
  out.duration_ms = window_ms;
  out.requests.reserve(wanted);
  for (auto idx : window) out.requests.push_back(stream.requests[idx]);
  return out;
}

void LengthDist::validate(const char* what) const {
  const std::string name(what);
  if (min < 1 || max < min) {
    throw ValidationError(name + ": require 1 <= min <= max");
  }
  switch (kind) {
    case Kind::kFixed:
      if (a < 1) throw ValidationError(name + ": fixed length must be >= 1");
      break;
    case Kind::kUniform:
      if (a < 1 || b < a) throw ValidationError(name + ": uniform needs 1 <= a <= b");
      break;
    case Kind::kLogNormal:
      if (a <= 0 || b < 0) {
        throw ValidationError(name + ": lognormal needs median > 0 and sigma >= 0");
      }
      break;
  }
}

Tokens LengthDist::sample(Rng& rng) const {
  double v = a;
  switch (kind) {
    case Kind::kFixed:
      break;
    case Kind::kUniform: {
      const auto lo = static_cast<std::uint64_t>(a);
      const auto hi = static_cast<std::uint64_t>(b);
      v = static_cast<double>(lo + rng.below(hi - lo + 1));
      break;
    }
    case Kind::kLogNormal:
      v = a * std::exp(b * rng.normal());
      break;
  }
  const auto t = static_cast<Tokens>(std::llround(v));
  return std::clamp(t, min, max);
}

double BurstSpec::envelope(double t_s) const {
  if (factor <= 1.0) return 1.0;
  const double phase = std::fmod(t_s, period_s) / period_s;
  switch (shape) {
    case Shape::kSinusoidal: {
      const double amp = (factor - 1.0) / (factor + 1.0);
      return 1.0 + amp * std::sin(2.0 * M_PI * phase);
    }
    case Shape::kPiecewise:
      return phase < 0.5 ? 2.0 * factor / (1.0 + factor) : 2.0 / (1.0 + factor);
  }
  return 1.0;
}

double BurstSpec::peak() const {
  if (factor <= 1.0) return 1.0;
  return shape == Shape::kSinusoidal ? 1.0 + (factor - 1.0) / (factor + 1.0)
                                     : 2.0 * factor / (1.0 + factor);
}

RequestStream synth_arrivals(double rate, double duration_s,
                             const BurstSpec& burst, const LengthSpec& lengths,
                             std::uint64_t seed, RequestClass cls,
                             RequestId first_id) {
  if (rate <= 0.0) throw ValidationError("synth_arrivals: rate must be > 0");
  if (duration_s <= 0.0) throw ValidationError("synth_arrivals: duration must be > 0");
  if (burst.factor < 1.0) throw ValidationError("synth_arrivals: burst factor must be >= 1");
  if (burst.period_s <= 0.0) throw ValidationError("synth_arrivals: burst period must be > 0");
  lengths.prompt.validate("prompt length");
  lengths.output.validate("output length");

  Rng arrivals(derive_seed(seed, 0));
  Rng sizes(derive_seed(seed, 1));
  const double peak_rate = rate * burst.peak();

  RequestStream out;
  out.duration_ms = duration_s * 1000.0;
  double t = 0.0;
  RequestId id = first_id;
  while (true) {
    t += arrivals.exponential(peak_rate);
    if (t >= duration_s) break;
    // Thinning: accept with probability envelope / peak.
    if (arrivals.uniform() * burst.peak() >= burst.envelope(t)) continue;
    Request r;
    r.id = id++;
    r.cls = cls;
    r.arrival_ms = t * 1000.0;
    r.prompt_tokens = lengths.prompt.sample(sizes);
    r.output_tokens = lengths.output.sample(sizes);
    r.prompt_path = {{kFreshSegmentBase + r.id, r.prompt_tokens}};
    r.priority = default_priority(cls);
    out.requests.push_back(std::move(r));
  }
  return out;
}

RequestStream synth_prefix_workload(int n_groups, int per_group,
                                    Tokens shared_tokens, Tokens unique_tokens,
                                    std::uint64_t seed, RequestId first_id,
                                    Tokens output_tokens) {
  if (n_groups < 1 || per_group < 1 || shared_tokens < 1 || unique_tokens < 1 ||
      output_tokens < 1) {
    throw ValidationError("synth_prefix_workload: all counts must be >= 1");
  }
  // Keep ids of separate workloads apart without coordination.
  const SegmentId base =
      static_cast<SegmentId>(derive_seed(seed, 7) & ((SegmentId{1} << 40) - 1)) << 16;

  RequestStream out;
  RequestId id = first_id;
  SegmentId next_unique = base + n_groups;
  for (int i = 0; i < per_group; ++i) {
    for (int g = 0; g < n_groups; ++g) {
      Request r;
      r.id = id++;
      r.cls = RequestClass::kOffline;
      r.arrival_ms = 0.0;
      r.prompt_path = {{base + g, shared_tokens}, {next_unique++, unique_tokens}};
      r.prompt_tokens = shared_tokens + unique_tokens;
      r.output_tokens = output_tokens;
      r.priority = kDefaultOfflinePriority;
      out.requests.push_back(std::move(r));
    }
  }
  return out;
}

}  // namespace hygen::workload
