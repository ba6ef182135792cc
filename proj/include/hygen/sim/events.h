#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string_view>
#include <vector>

#include "hygen/batch_features.h"
#include "hygen/types.h"

namespace hygen::sim {

enum class EventKind : std::uint8_t { kArrive, kFirstToken, kToken, kComplete, kPreempt };

std::string_view to_string(EventKind kind);
EventKind parse_event_kind(std::string_view text);

// kFirstToken and kToken are both token emissions; kFirstToken marks the
// first one of a request.
struct Event {
  double t_ms = 0.0;
  EventKind kind = EventKind::kArrive;
  RequestId request = 0;
  RequestClass cls = RequestClass::kOnline;

  bool operator==(const Event&) const = default;
};

// One engine iteration. t_ms is the iteration start.
struct StepRecord {
  double t_ms = 0.0;
  std::int64_t step = 0;
  BatchFeatures features;
  double latency_ms = 0.0;
  double predicted_ms = 0.0;

  bool operator==(const StepRecord&) const = default;
};

class EventSink {
 public:
  virtual ~EventSink() = default;
  virtual void on_event(const Event& e) = 0;
  virtual void on_step(const StepRecord&) {}
};

// In-memory log; the JSONL form is one object per line, events and step
// records interleaved in emission order.
class EventLog : public EventSink {
 public:
  void on_event(const Event& e) override;
  void on_step(const StepRecord& s) override;

  const std::vector<Event>& events() const { return events_; }
  const std::vector<StepRecord>& steps() const { return steps_; }

  // Feeds the log to another sink in the original order.
  void replay(EventSink& sink) const;

  void write_jsonl(std::ostream& out) const;
  void write_jsonl(const std::filesystem::path& path) const;
  static EventLog read_jsonl(std::istream& in);
  static EventLog read_jsonl(const std::filesystem::path& path);

 private:
  std::vector<Event> events_;
  std::vector<StepRecord> steps_;
  // Interleaving order: true = event, false = step record.
  std::vector<bool> order_;
};

}  // namespace hygen::sim
