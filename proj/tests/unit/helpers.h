#pragma once

#include <utility>
#include <vector>

#include "hygen/types.h"

namespace hygen::test {

// Path given as (segment id, tokens) pairs; empty means one private segment.
inline Request req(RequestId id, RequestClass cls, double arrival_ms, Tokens prompt,
                   Tokens output, const std::vector<std::pair<SegmentId, Tokens>>& path = {}) {
  Request r;
  r.id = id;
  r.cls = cls;
  r.arrival_ms = arrival_ms;
  r.prompt_tokens = prompt;
  r.output_tokens = output;
  r.priority = default_priority(cls);
  if (path.empty()) {
    r.prompt_path = {{1'000'000 + id, prompt}};
  } else {
    for (const auto& [seg, tok] : path) r.prompt_path.push_back({seg, tok});
  }
  return r;
}

inline Request online(RequestId id, double arrival_ms, Tokens prompt, Tokens output) {
  return req(id, RequestClass::kOnline, arrival_ms, prompt, output);
}

inline Request offline(RequestId id, Tokens prompt, Tokens output, double arrival_ms = 0.0) {
  return req(id, RequestClass::kOffline, arrival_ms, prompt, output);
}

}  // namespace hygen::test
