#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>

#include "hygen/rng.h"
#include "hygen/types.h"

namespace hygen::workload {

// Segment ids at or above this value are minted by the loader for records
// that carry no prompt_path; user-supplied ids must stay below it.
inline constexpr SegmentId kFreshSegmentBase = SegmentId{1} << 60;

// Reads a JSONL trace. Records without "class" get `default_class`; ids are
// assigned in file order starting at `first_id`, before sorting by arrival.
RequestStream load_trace(const std::filesystem::path& path,
                         RequestClass default_class, RequestId first_id = 0);
RequestStream parse_trace(std::istream& in, RequestClass default_class,
                          RequestId first_id = 0);

void write_trace(const std::filesystem::path& path, const RequestStream& stream);
void write_trace(std::ostream& out, const RequestStream& stream);

// Uniformly samples round(duration_s * target_qps) requests, without
// replacement, from the arrivals in [0, duration_s). Timestamps are kept.
RequestStream sample_to_qps(const RequestStream& stream, double target_qps,
                            double duration_s, std::uint64_t seed);

struct LengthDist {
  enum class Kind { kFixed, kUniform, kLogNormal };
  Kind kind = Kind::kFixed;
  // kFixed: a is the value. kUniform: integers in [a, b].
  // kLogNormal: a is the median, b the sigma of log-length.
  double a = 1;
  double b = 0;
  Tokens min = 1;
  Tokens max = 1 << 20;

  void validate(const char* what) const;
  Tokens sample(Rng& rng) const;
};

struct LengthSpec {
  LengthDist prompt;
  LengthDist output;
};

struct BurstSpec {
  enum class Shape { kSinusoidal, kPiecewise };
  Shape shape = Shape::kSinusoidal;
  // Ratio between peak and trough of the rate envelope; 1 is homogeneous.
  double factor = 1.0;
  double period_s = 120.0;

  // Envelope multiplier at time t; averages to 1 over a period.
  double envelope(double t_s) const;
  double peak() const;
};

// Poisson arrivals modulated by the burst envelope (thinning). Lengths are
// drawn from `lengths`. Each request gets one fresh prompt segment.
RequestStream synth_arrivals(double rate, double duration_s,
                             const BurstSpec& burst, const LengthSpec& lengths,
                             std::uint64_t seed,
                             RequestClass cls = RequestClass::kOnline,
                             RequestId first_id = 0);

// n_groups * per_group offline requests at arrival 0. Group g's requests
// share one prefix segment of `shared_tokens` and each has its own suffix
// of `unique_tokens`. Ids follow a round-robin interleave over groups.
RequestStream synth_prefix_workload(int n_groups, int per_group,
                                    Tokens shared_tokens, Tokens unique_tokens,
                                    std::uint64_t seed,
                                    RequestId first_id = 0,
                                    Tokens output_tokens = 1);

}  // namespace hygen::workload
