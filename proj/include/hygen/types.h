#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace hygen {

using RequestId = std::int64_t;
using SegmentId = std::int64_t;
using Tokens = std::int64_t;
using Blocks = std::int64_t;

enum class RequestClass : std::uint8_t { kOnline, kOffline };

std::string_view to_string(RequestClass cls);
RequestClass parse_request_class(std::string_view text);

// One piece of a prompt. Requests that share a leading run of segment ids
// share that much prompt prefix.
struct Segment {
  SegmentId id = 0;
  Tokens tokens = 0;

  bool operator==(const Segment&) const = default;
};

struct Request {
  RequestId id = 0;
  RequestClass cls = RequestClass::kOnline;
  double arrival_ms = 0.0;
  std::vector<Segment> prompt_path;
  Tokens prompt_tokens = 0;
  // Ground truth decode length. Only the engine may look at this.
  Tokens output_tokens = 0;
  // Lower is more important.
  int priority = 0;

  bool online() const { return cls == RequestClass::kOnline; }

  // Throws ValidationError when a field invariant does not hold.
  void validate() const;

  bool operator==(const Request&) const = default;
};

inline constexpr int kDefaultOnlinePriority = 0;
inline constexpr int kDefaultOfflinePriority = 100;

inline int default_priority(RequestClass cls) {
  return cls == RequestClass::kOnline ? kDefaultOnlinePriority
                                      : kDefaultOfflinePriority;
}

struct RequestStream {
  std::vector<Request> requests;  // sorted by (arrival_ms, id)
  double duration_ms = 0.0;

  // Checks ordering, id uniqueness and every request.
  void validate() const;
};

// Stable sort by arrival time; ties keep their relative order.
void sort_by_arrival(std::vector<Request>& requests);

// Concatenates streams and restores arrival order. Ids must already be
// disjoint.
RequestStream merge_streams(const RequestStream& a, const RequestStream& b);

}  // namespace hygen
