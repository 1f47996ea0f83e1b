#pragma once

// Adaptive thresholding T = K (mu_t + sigma_t), verdicts, and selection of K
// by accuracy over a calibration set.

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace bearingmon {

// Streaming mean and population standard deviation (Welford).
class DeviationStats {
 public:
  void accumulate(double deviation);

  std::size_t count() const { return n_; }
  double mean() const { return mean_; }
  double stddev() const;
  // Sum of squared deviations from the running mean.
  double m2() const { return m2_; }

  static DeviationStats from_moments(std::size_t n, double mean, double m2);

 private:
  std::size_t n_ = 0;
  double mean_ = 0.0;
  double m2_ = 0.0;
};

struct Threshold {
  double K = 0.0;
  double T = 0.0;
};

Threshold threshold(const DeviationStats& stats, double K);
Threshold threshold(double mean, double stddev, double K);

enum class SampleState { healthy, anomalous };
enum class HealthState { healthy, faulty };

std::string_view to_string(HealthState state);

// anomalous iff deviation > T (strict).
SampleState classify_sample(double deviation, double T);

enum class SamplePhase { init_batch, training, inference };

std::string_view to_string(SamplePhase phase);

struct DeviationTrace {
  std::vector<double> deviation;
  std::vector<SamplePhase> phase;

  std::size_t size() const { return deviation.size(); }
  void push(double d, SamplePhase p) {
    deviation.push_back(d);
    phase.push_back(p);
  }
};

struct BearingVerdict {
  double max_deviation = 0.0;
  std::size_t max_index = 0;
  Threshold threshold;
  HealthState state = HealthState::healthy;
  std::size_t convergence_length = 0;
  std::optional<std::size_t> first_flagged;  // first inference sample above T
};

// Verdict over the inference samples of `trace` (those at positions
// >= convergence_length). Pre-convergence samples never count.
BearingVerdict bearing_verdict(const DeviationTrace& trace, const Threshold& threshold,
                               std::size_t convergence_length);

// Summary of one bearing's online run, enough to re-derive its verdict at
// any K.
struct BearingStats {
  std::string label;
  double mean = 0.0;
  double stddev = 0.0;
  double max_deviation = 0.0;
  bool faulty = false;  // ground truth
};

HealthState verdict_at(const BearingStats& stats, double K);

struct AccuracyPoint {
  double K = 0.0;
  std::size_t correct = 0;
  std::size_t total = 0;
  double accuracy() const { return total ? static_cast<double>(correct) / static_cast<double>(total) : 0.0; }
};

// lo + i * step for i = 0.. while <= hi (with a half-step tolerance).
std::vector<double> make_k_grid(double lo, double hi, double step);
// Parses "a:b:step".
std::vector<double> parse_k_grid(std::string_view spec);
// 0.5 : 100 : 0.5
std::vector<double> default_k_grid();

std::vector<AccuracyPoint> accuracy_vs_k(std::span<const BearingStats> bearings,
                                         std::span<const double> grid);

struct Calibration {
  double K = 0.0;
  double plateau_lo = 0.0;  // first and last grid points of the chosen plateau
  double plateau_hi = 0.0;
  double accuracy = 0.0;
};

// K* = midpoint of the widest contiguous run of grid points reaching the
// maximum accuracy; ties go to the lowest such run.
Calibration calibrate_k(std::span<const BearingStats> bearings, std::span<const double> grid);

void write_deviation_csv(std::ostream& out, const DeviationTrace& trace);
void write_accuracy_csv(std::ostream& out, std::span<const AccuracyPoint> curve);

}  // namespace bearingmon
