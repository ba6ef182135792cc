#pragma once

#include <array>
#include <cstdint>
#include <string_view>

#include "hygen/types.h"

namespace hygen {

// Composition of one engine iteration, as seen by the latency model.
// Squares are stored, not derived, so that sums of feature vectors stay
// plain vector sums. Use add_prefill/add_decode to keep them consistent.
struct BatchFeatures {
  std::int64_t S_p = 0;   // prefill tokens
  std::int64_t S_d = 0;   // decode tokens (one per decode request)
  std::int64_t S_p2 = 0;  // S_p squared
  std::int64_t S_d2 = 0;  // S_d squared
  std::int64_t N_p = 0;   // prefill requests
  std::int64_t N_d = 0;   // decode requests

  static BatchFeatures from_counts(std::int64_t prefill_tokens,
                                   std::int64_t prefill_requests,
                                   std::int64_t decode_requests) {
    BatchFeatures f;
    f.S_p = prefill_tokens;
    f.S_p2 = prefill_tokens * prefill_tokens;
    f.N_p = prefill_requests;
    f.S_d = decode_requests;
    f.S_d2 = decode_requests * decode_requests;
    f.N_d = decode_requests;
    return f;
  }

  BatchFeatures with_prefill(Tokens l, bool new_request = true) const {
    BatchFeatures f = *this;
    f.S_p += l;
    f.S_p2 = f.S_p * f.S_p;
    if (new_request) f.N_p += 1;
    return f;
  }

  BatchFeatures with_decode() const {
    BatchFeatures f = *this;
    f.S_d += 1;
    f.S_d2 = f.S_d * f.S_d;
    f.N_d += 1;
    return f;
  }

  void add_prefill(Tokens l) { *this = with_prefill(l); }
  void add_decode() { *this = with_decode(); }

  bool empty() const { return N_p == 0 && N_d == 0; }

  std::array<double, 6> as_array() const {
    return {static_cast<double>(S_p),  static_cast<double>(S_d),
            static_cast<double>(S_p2), static_cast<double>(S_d2),
            static_cast<double>(N_p),  static_cast<double>(N_d)};
  }

  BatchFeatures operator+(const BatchFeatures& o) const {
    return {S_p + o.S_p, S_d + o.S_d, S_p2 + o.S_p2,
            S_d2 + o.S_d2, N_p + o.N_p, N_d + o.N_d};
  }

  bool operator==(const BatchFeatures&) const = default;
};

// Column order used by as_array(), model weights, and the samples CSV.
enum class Feature : std::uint8_t { kSp = 0, kSd, kSp2, kSd2, kNp, kNd };
inline constexpr std::size_t kNumFeatures = 6;
inline constexpr std::array<std::string_view, kNumFeatures> kFeatureNames = {
    "S_p", "S_d", "S_p2", "S_d2", "N_p", "N_d"};

inline Blocks get_num_blocks(Tokens l, Tokens block_size) {
  return l <= 0 ? 0 : (l + block_size - 1) / block_size;
}

}  // namespace hygen
