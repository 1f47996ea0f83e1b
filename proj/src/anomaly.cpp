#include "bearingmon/anomaly.hpp"

#include <charconv>
#include <cmath>
#include <ostream>

#include "bearingmon/binary_io.hpp"
#include "bearingmon/errors.hpp"

namespace bearingmon {

void DeviationStats::accumulate(double deviation) {
  if (!(deviation >= 0.0) || !std::isfinite(deviation))
    throw ConfigError("deviation must be finite and non-negative");
  ++n_;
  const double delta = deviation - mean_;
  mean_ += delta / static_cast<double>(n_);
  m2_ += delta * (deviation - mean_);
}

double DeviationStats::stddev() const {
  return n_ == 0 ? 0.0 : std::sqrt(std::max(0.0, m2_ / static_cast<double>(n_)));
}

DeviationStats DeviationStats::from_moments(std::size_t n, double mean, double m2) {
  if (!(mean >= 0.0) || !(m2 >= 0.0)) throw ConfigError("invalid deviation moments");
  DeviationStats s;
  s.n_ = n;
  s.mean_ = mean;
  s.m2_ = m2;
  return s;
}

Threshold threshold(double mean, double stddev, double K) {
  if (!(K > 0.0) || !std::isfinite(K)) throw ConfigError("K must be positive");
  return {K, K * (mean + stddev)};
}

Threshold threshold(const DeviationStats& stats, double K) {
  if (stats.count() < 2) throw ConfigError("threshold needs at least two training deviations");
  return threshold(stats.mean(), stats.stddev(), K);
}

std::string_view to_string(HealthState state) {
  return state == HealthState::faulty ? "faulty" : "healthy";
}

SampleState classify_sample(double deviation, double T) {
  return deviation > T ? SampleState::anomalous : SampleState::healthy;
}

std::string_view to_string(SamplePhase phase) {
  switch (phase) {
    case SamplePhase::init_batch: return "init";
    case SamplePhase::training: return "training";
    case SamplePhase::inference: return "inference";
  }
  return "unknown";
}

BearingVerdict bearing_verdict(const DeviationTrace& trace, const Threshold& threshold,
                               std::size_t convergence_length) {
  if (convergence_length >= trace.size())
    throw DataError("bearing_verdict: no inference samples after convergence");
  BearingVerdict v;
  v.threshold = threshold;
  v.convergence_length = convergence_length;
  v.max_index = convergence_length;
  v.max_deviation = trace.deviation[convergence_length];
  for (std::size_t i = convergence_length; i < trace.size(); ++i) {
    const double d = trace.deviation[i];
    if (d > v.max_deviation) {
      v.max_deviation = d;
      v.max_index = i;
    }
    if (!v.first_flagged && classify_sample(d, threshold.T) == SampleState::anomalous)
      v.first_flagged = i;
  }
  v.state = v.max_deviation > threshold.T ? HealthState::faulty : HealthState::healthy;
  return v;
}

HealthState verdict_at(const BearingStats& stats, double K) {
  return stats.max_deviation > threshold(stats.mean, stats.stddev, K).T ? HealthState::faulty
                                                                         : HealthState::healthy;
}

std::vector<double> make_k_grid(double lo, double hi, double step) {
  if (!(step > 0.0) || !(lo > 0.0) || !(hi >= lo))
    throw ConfigError("K grid needs 0 < lo <= hi and step > 0");
  std::vector<double> grid;
  for (std::size_t i = 0;; ++i) {
    const double k = lo + static_cast<double>(i) * step;
    if (k > hi + 0.5 * step) break;
    grid.push_back(k);
  }
  return grid;
}

std::vector<double> parse_k_grid(std::string_view spec) {
  double parts[3];
  std::size_t pos = 0;
  for (int i = 0; i < 3; ++i) {
    const auto colon = i < 2 ? spec.find(':', pos) : spec.size();
    if (colon == std::string_view::npos) throw ConfigError("K grid must look like a:b:step");
    const auto field = spec.substr(pos, colon - pos);
    auto [p, ec] = std::from_chars(field.data(), field.data() + field.size(), parts[i]);
    if (ec != std::errc{} || p != field.data() + field.size())
      throw ConfigError("K grid must look like a:b:step");
    pos = colon + 1;
  }
  return make_k_grid(parts[0], parts[1], parts[2]);
}

std::vector<double> default_k_grid() { return make_k_grid(0.5, 100.0, 0.5); }

std::vector<AccuracyPoint> accuracy_vs_k(std::span<const BearingStats> bearings,
                                         std::span<const double> grid) {
  std::vector<AccuracyPoint> curve;
  curve.reserve(grid.size());
  for (double K : grid) {
    AccuracyPoint p{K, 0, bearings.size()};
    for (const auto& b : bearings) {
      const bool flagged = verdict_at(b, K) == HealthState::faulty;
      if (flagged == b.faulty) ++p.correct;
    }
    curve.push_back(p);
  }
  return curve;
}

Calibration calibrate_k(std::span<const BearingStats> bearings, std::span<const double> grid) {
  if (grid.empty()) throw ConfigError("calibrate_k: empty K grid");
  if (bearings.empty()) throw ConfigError("calibrate_k: no calibration bearings");
  for (std::size_t i = 1; i < grid.size(); ++i)
    if (!(grid[i] > grid[i - 1])) throw ConfigError("calibrate_k: grid must be ascending");

  const auto curve = accuracy_vs_k(bearings, grid);
  std::size_t best_correct = 0;
  for (const auto& p : curve) best_correct = std::max(best_correct, p.correct);

  std::size_t best_start = 0;
  std::size_t best_len = 0;
  for (std::size_t i = 0; i < curve.size();) {
    if (curve[i].correct != best_correct) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < curve.size() && curve[j].correct == best_correct) ++j;
    if (j - i > best_len) {
      best_start = i;
      best_len = j - i;
    }
    i = j;
  }
  Calibration c;
  c.plateau_lo = grid[best_start];
  c.plateau_hi = grid[best_start + best_len - 1];
  c.K = 0.5 * (c.plateau_lo + c.plateau_hi);
  c.accuracy = curve[best_start].accuracy();
  return c;
}

void write_deviation_csv(std::ostream& out, const DeviationTrace& trace) {
  out << "sample_index,deviation,phase\n";
  for (std::size_t i = 0; i < trace.size(); ++i)
    out << i << ',' << format_double(trace.deviation[i]) << ',' << to_string(trace.phase[i]) << '\n';
}

void write_accuracy_csv(std::ostream& out, std::span<const AccuracyPoint> curve) {
  out << "K,accuracy_percent,correct,total\n";
  for (const auto& p : curve)
    out << format_double(p.K) << ',' << format_double(100.0 * p.accuracy()) << ',' << p.correct
        << ',' << p.total << '\n';
}

}  // namespace bearingmon
