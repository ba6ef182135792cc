#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include <Eigen/Dense>

#include "hygen/errors.h"
#include "hygen/predictor/predictor.h"
#include "hygen/rng.h"

namespace hygen::predictor {

namespace {

constexpr std::size_t idx(Feature f) { return static_cast<std::size_t>(f); }

// Features whose weights must stay nonnegative for the solver's binary
// search to be valid.
constexpr std::array<Feature, 3> kClamped = {Feature::kSp, Feature::kSp2, Feature::kSd};

bool decode_columns_aliased(std::span<const Sample> samples) {
  return std::all_of(samples.begin(), samples.end(), [](const Sample& s) {
    return s.features.S_d == s.features.N_d;
  });
}

// Solves min ||X w - y|| over `columns` (plus intercept). Columns are scaled
// to unit max-abs before factorization.
std::vector<double> solve_ls(std::span<const Sample> samples,
                             const std::vector<std::size_t>& columns,
                             double* intercept) {
  const auto n = static_cast<Eigen::Index>(samples.size());
  const auto k = static_cast<Eigen::Index>(columns.size());
  Eigen::MatrixXd X(n, k + 1);
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto x = samples[static_cast<std::size_t>(i)].features.as_array();
    X(i, 0) = 1.0;
    for (Eigen::Index j = 0; j < k; ++j) X(i, j + 1) = x[columns[static_cast<std::size_t>(j)]];
    y(i) = samples[static_cast<std::size_t>(i)].latency_ms;
  }
  Eigen::VectorXd scale = X.cwiseAbs().colwise().maxCoeff().transpose();
  for (Eigen::Index j = 0; j < scale.size(); ++j) {
    if (scale(j) == 0.0) scale(j) = 1.0;
  }
  X = X * scale.cwiseInverse().asDiagonal();

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
  qr.setThreshold(1e-10);
  if (qr.rank() < k + 1) {
    std::set<std::string> names;
    const auto& perm = qr.colsPermutation().indices();
    for (Eigen::Index j = qr.rank(); j < k + 1; ++j) {
      const auto col = perm(j);
      names.insert(col == 0 ? std::string("intercept")
                            : std::string(kFeatureNames[columns[static_cast<std::size_t>(col - 1)]]));
    }
    std::string list;
    for (const auto& nm : names) list += (list.empty() ? "" : ", ") + nm;
    throw FitError("rank-deficient design; collinear features: " + list);
  }
  const Eigen::VectorXd w = qr.solve(y).cwiseQuotient(scale);
  *intercept = w(0);
  std::vector<double> out(columns.size());
  for (std::size_t j = 0; j < columns.size(); ++j) out[j] = w(static_cast<Eigen::Index>(j + 1));
  return out;
}

}  // namespace

double mape(const PredictorModel& model, std::span<const Sample> samples) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& s : samples) {
    if (s.latency_ms <= 0.0) continue;
    sum += std::abs(predict(model, s.features) - s.latency_ms) / s.latency_ms;
    ++n;
  }
  return n == 0 ? 0.0 : sum / static_cast<double>(n);
}

PredictorModel fit(std::span<const Sample> samples, const FitOptions& options) {
  PredictorModel model;
  model.enabled.fill(true);
  model.enabled[idx(Feature::kSd2)] = options.enable_sd2;

  // One token per decode request makes S_d and N_d the same column; the
  // per-decode cost is carried entirely by S_d and N_d stays at zero.
  const bool aliased = decode_columns_aliased(samples);

  std::vector<std::size_t> free_cols;
  for (std::size_t i = 0; i < kNumFeatures; ++i) {
    if (!model.enabled[i]) continue;
    if (aliased && i == idx(Feature::kNd)) continue;
    free_cols.push_back(i);
  }
  if (samples.size() < free_cols.size() + 1) {
    throw FitError("need at least " + std::to_string(free_cols.size() + 1) +
                   " samples, got " + std::to_string(samples.size()));
  }

  std::vector<double> w;
  double intercept = 0.0;
  while (true) {
    w = solve_ls(samples, free_cols, &intercept);
    bool clamped_any = false;
    std::vector<std::size_t> keep;
    for (std::size_t j = 0; j < free_cols.size(); ++j) {
      const bool clampable = std::find_if(kClamped.begin(), kClamped.end(), [&](Feature f) {
                               return idx(f) == free_cols[j];
                             }) != kClamped.end();
      if (clampable && w[j] < 0.0) {
        clamped_any = true;
      } else {
        keep.push_back(free_cols[j]);
      }
    }
    if (!clamped_any) break;
    // Clamped columns are fixed at zero, which is the same as dropping them.
    free_cols = std::move(keep);
  }

  model.weights.fill(0.0);
  model.intercept = intercept;
  for (std::size_t j = 0; j < free_cols.size(); ++j) model.weights[free_cols[j]] = w[j];
  model.fit_stats.samples = samples.size();
  model.fit_stats.train_mape = mape(model, samples);
  return model;
}

std::pair<std::vector<Sample>, std::vector<Sample>> split_samples(
    std::span<const Sample> samples, double holdout_fraction, std::uint64_t seed) {
  if (holdout_fraction < 0.0 || holdout_fraction >= 1.0) {
    throw ValidationError("holdout_fraction must be in [0, 1)");
  }
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  for (std::size_t i = order.size(); i > 1; --i) {
    std::swap(order[i - 1], order[rng.below(i)]);
  }
  const auto n_hold = static_cast<std::size_t>(
      std::llround(holdout_fraction * static_cast<double>(samples.size())));
  std::vector<Sample> train;
  std::vector<Sample> hold;
  train.reserve(samples.size() - n_hold);
  hold.reserve(n_hold);
  for (std::size_t i = 0; i < order.size(); ++i) {
    (i < order.size() - n_hold ? train : hold).push_back(samples[order[i]]);
  }
  return {std::move(train), std::move(hold)};
}

void ProfileGrid::validate() const {
  if (prefill_tokens.empty() || decode_requests.empty()) {
    throw ValidationError("profile grid needs prefill_tokens and decode_requests values");
  }
  if (repeats < 1) throw ValidationError("profile grid repeats must be >= 1");
  for (auto v : prefill_tokens) {
    if (v < 0) throw ValidationError("grid prefill_tokens must be >= 0");
  }
  for (auto v : decode_requests) {
    if (v < 0) throw ValidationError("grid decode_requests must be >= 0");
  }
  for (auto v : prefill_requests) {
    if (v < 1) throw ValidationError("grid prefill_requests must be >= 1");
  }
}

std::vector<BatchFeatures> ProfileGrid::cells() const {
  validate();
  const std::vector<std::int64_t> np_values =
      prefill_requests.empty() ? std::vector<std::int64_t>{1} : prefill_requests;
  std::vector<BatchFeatures> out;
  for (Tokens sp : prefill_tokens) {
    for (std::int64_t np : np_values) {
      if (sp == 0 && np != np_values.front()) continue;
      if (sp > 0 && np > sp) continue;
      for (std::int64_t nd : decode_requests) {
        out.push_back(BatchFeatures::from_counts(sp, sp == 0 ? 0 : np, nd));
      }
    }
  }
  return out;
}

ProfileGrid ProfileGrid::standard() {
  ProfileGrid g;
  for (Tokens sp = 0; sp <= 4096; sp += 128) g.prefill_tokens.push_back(sp);
  g.prefill_requests = {1, 2, 3, 4};
  for (std::int64_t nd = 0; nd <= 64; ++nd) g.decode_requests.push_back(nd);
  return g;
}

ProfileResult profile_hardware(const sim::HardwareModel& hw, const ProfileGrid& grid,
                               std::uint64_t seed) {
  hw.validate();
  const auto cells = grid.cells();
  if (cells.empty()) throw ValidationError("profile grid has no cells");
  auto distinct = [](const auto& values) {
    return std::set<std::int64_t>(values.begin(), values.end()).size();
  };

  ProfileResult result;
  result.degenerate = distinct(grid.prefill_tokens) < 2 || distinct(grid.decode_requests) < 2;
  result.samples.reserve(cells.size() * static_cast<std::size_t>(grid.repeats));
  Rng rng(seed);
  for (int rep = 0; rep < grid.repeats; ++rep) {
    for (const auto& f : cells) {
      result.samples.push_back({f, sim::true_batch_latency(hw, f, rng)});
    }
  }
  return result;
}

void write_samples_csv(std::ostream& out, std::span<const Sample> samples) {
  out << "S_p,S_d,S_p2,S_d2,N_p,N_d,latency_ms\n";
  out.precision(17);
  for (const auto& s : samples) {
    const auto& f = s.features;
    out << f.S_p << ',' << f.S_d << ',' << f.S_p2 << ',' << f.S_d2 << ',' << f.N_p << ','
        << f.N_d << ',' << s.latency_ms << '\n';
  }
}

void write_samples_csv(const std::filesystem::path& path, std::span<const Sample> samples) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write samples " + path.string());
  write_samples_csv(out, samples);
}

std::vector<Sample> read_samples_csv(std::istream& in) {
  std::vector<Sample> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (lineno == 1 || line.empty()) continue;
    std::stringstream ss(line);
    std::array<double, 7> v{};
    char comma = ',';
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (i > 0) ss >> comma;
      if (!(ss >> v[i]) || comma != ',') {
        throw ParseError("samples csv line " + std::to_string(lineno) + ": bad field");
      }
    }
    Sample s;
    s.features = {static_cast<std::int64_t>(v[0]), static_cast<std::int64_t>(v[1]),
                  static_cast<std::int64_t>(v[2]), static_cast<std::int64_t>(v[3]),
                  static_cast<std::int64_t>(v[4]), static_cast<std::int64_t>(v[5])};
    s.latency_ms = v[6];
    out.push_back(s);
  }
  return out;
}

}  // namespace hygen::predictor
