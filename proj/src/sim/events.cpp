#include "hygen/sim/events.h"

#include <fstream>
#include <string>

#include "json.hpp"

#include "hygen/errors.h"

namespace hygen::sim {

using nlohmann::json;

std::string_view to_string(EventKind kind) {
  switch (kind) {
    case EventKind::kArrive:
      return "arrive";
    case EventKind::kFirstToken:
      return "first_token";
    case EventKind::kToken:
      return "token";
    case EventKind::kComplete:
      return "complete";
    case EventKind::kPreempt:
      return "preempt";
  }
  return "?";
}

EventKind parse_event_kind(std::string_view text) {
  for (auto k : {EventKind::kArrive, EventKind::kFirstToken, EventKind::kToken,
                 EventKind::kComplete, EventKind::kPreempt}) {
    if (to_string(k) == text) return k;
  }
  throw ParseError("unknown event kind '" + std::string(text) + "'");
}

void EventLog::on_event(const Event& e) {
  events_.push_back(e);
  order_.push_back(true);
}

void EventLog::on_step(const StepRecord& s) {
  steps_.push_back(s);
  order_.push_back(false);
}

void EventLog::replay(EventSink& sink) const {
  std::size_t ei = 0;
  std::size_t si = 0;
  for (bool is_event : order_) {
    if (is_event) {
      sink.on_event(events_[ei++]);
    } else {
      sink.on_step(steps_[si++]);
    }
  }
}

void EventLog::write_jsonl(std::ostream& out) const {
  std::size_t ei = 0;
  std::size_t si = 0;
  for (bool is_event : order_) {
    json rec;
    if (is_event) {
      const Event& e = events_[ei++];
      rec = {{"t_ms", e.t_ms},
             {"event", std::string(to_string(e.kind))},
             {"request", e.request},
             {"class", std::string(to_string(e.cls))}};
    } else {
      const StepRecord& s = steps_[si++];
      rec = {{"t_ms", s.t_ms},
             {"step", s.step},
             {"S_p", s.features.S_p},
             {"S_d", s.features.S_d},
             {"N_p", s.features.N_p},
             {"N_d", s.features.N_d},
             {"latency_ms", s.latency_ms},
             {"predicted_ms", s.predicted_ms}};
    }
    out << rec.dump() << '\n';
  }
}

void EventLog::write_jsonl(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write event log " + path.string());
  write_jsonl(out);
}

EventLog EventLog::read_jsonl(std::istream& in) {
  EventLog log;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (text.empty()) continue;
    json rec;
    try {
      rec = json::parse(text);
      if (rec.contains("event")) {
        Event e;
        e.t_ms = rec.at("t_ms").get<double>();
        e.kind = parse_event_kind(rec.at("event").get<std::string>());
        e.request = rec.at("request").get<RequestId>();
        e.cls = parse_request_class(rec.at("class").get<std::string>());
        log.on_event(e);
      } else {
        StepRecord s;
        s.t_ms = rec.at("t_ms").get<double>();
        s.step = rec.at("step").get<std::int64_t>();
        s.features = BatchFeatures::from_counts(rec.at("S_p").get<std::int64_t>(),
                                                rec.at("N_p").get<std::int64_t>(),
                                                rec.at("N_d").get<std::int64_t>());
        s.features.S_d = rec.at("S_d").get<std::int64_t>();
        s.features.S_d2 = s.features.S_d * s.features.S_d;
        s.latency_ms = rec.at("latency_ms").get<double>();
        s.predicted_ms = rec.at("predicted_ms").get<double>();
        log.on_step(s);
      }
    } catch (const json::exception& e) {
      throw ParseError("event log line " + std::to_string(line) + ": " + e.what());
    } catch (const ValidationError& e) {
      throw ParseError("event log line " + std::to_string(line) + ": " + e.what());
    }
  }
  return log;
}

EventLog EventLog::read_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open event log " + path.string());
  return read_jsonl(in);
}

}  // namespace hygen::sim
