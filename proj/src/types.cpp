#include "hygen/types.h"

#include <algorithm>
#include <unordered_set>

#include "hygen/errors.h"

namespace hygen {

std::string_view to_string(RequestClass cls) {
  return cls == RequestClass::kOnline ? "online" : "offline";
}

RequestClass parse_request_class(std::string_view text) {
  if (text == "online") return RequestClass::kOnline;
  if (text == "offline") return RequestClass::kOffline;
  throw ValidationError("unknown request class '" + std::string(text) + "'");
}

void Request::validate() const {
  const std::string who = "request " + std::to_string(id);
  if (prompt_tokens < 1) {
    throw ValidationError(who + ": prompt_tokens must be >= 1");
  }
  if (output_tokens < 1) {
    throw ValidationError(who + ": output_tokens must be >= 1");
  }
  if (arrival_ms < 0.0) {
    throw ValidationError(who + ": arrival_ms must be >= 0");
  }
  Tokens sum = 0;
  for (const auto& seg : prompt_path) {
    if (seg.tokens < 1) {
      throw ValidationError(who + ": segment " + std::to_string(seg.id) +
                            " has non-positive token count");
    }
    sum += seg.tokens;
  }
  if (sum != prompt_tokens) {
    throw ValidationError(who + ": prompt_path sums to " + std::to_string(sum) +
                          " tokens but prompt_tokens is " +
                          std::to_string(prompt_tokens));
  }
}

void RequestStream::validate() const {
  std::unordered_set<RequestId> seen;
  seen.reserve(requests.size());
  for (std::size_t i = 0; i < requests.size(); ++i) {
    requests[i].validate();
    if (!seen.insert(requests[i].id).second) {
      throw ValidationError("duplicate request id " +
                            std::to_string(requests[i].id));
    }
    if (i > 0 && requests[i].arrival_ms < requests[i - 1].arrival_ms) {
      throw ValidationError("stream not sorted by arrival at index " +
                            std::to_string(i));
    }
  }
}

void sort_by_arrival(std::vector<Request>& requests) {
  std::stable_sort(requests.begin(), requests.end(),
                   [](const Request& a, const Request& b) {
                     return a.arrival_ms < b.arrival_ms;
                   });
}

RequestStream merge_streams(const RequestStream& a, const RequestStream& b) {
  RequestStream out;
  out.requests.reserve(a.requests.size() + b.requests.size());
  out.requests.insert(out.requests.end(), a.requests.begin(), a.requests.end());
  out.requests.insert(out.requests.end(), b.requests.begin(), b.requests.end());
  std::stable_sort(out.requests.begin(), out.requests.end(),
                   [](const Request& x, const Request& y) {
                     if (x.arrival_ms != y.arrival_ms) {
                       return x.arrival_ms < y.arrival_ms;
                     }
                     return x.id < y.id;
                   });
  out.duration_ms = std::max(a.duration_ms, b.duration_ms);
  out.validate();
  return out;
}

}  // namespace hygen
