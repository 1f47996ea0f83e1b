#pragma once

// Preprocessing and the handcrafted time-domain baseline features.

#include <iosfwd>
#include <vector>

#include <Eigen/Core>

#include "bearingmon/dataset_io.hpp"

namespace bearingmon {

using VectorCRef = Eigen::Ref<const Eigen::VectorXd>;

inline constexpr Eigen::Index kAveragingWindow = 5;

// output[i] = mean(raw[5i .. 5i+4]). Throws ShapeError unless the length is
// a positive multiple of the window.
Eigen::VectorXd average_downsample(VectorCRef raw, Eigen::Index window = kAveragingWindow);

double rms(VectorCRef x);
// Non-excess kurtosis m4 / m2^2 with divisor-n central moments (normal -> 3).
double kurtosis(VectorCRef x);
double skewness(VectorCRef x);
double crest_factor(VectorCRef x);
double peak_to_peak(VectorCRef x);

struct HandcraftedVector {
  double rms = 0.0;
  double kurtosis = 0.0;
  double skewness = 0.0;
  double crest_factor = 0.0;
  double peak_to_peak = 0.0;

  static constexpr Eigen::Index kSize = 5;
  // [rms, kurtosis, skewness, crest_factor, peak_to_peak]
  Eigen::VectorXd to_vector() const;
};

// Computed on the raw (not averaged) series.
HandcraftedVector handcrafted_vector(VectorCRef raw);

// CSV with header timestamp,rms,kurtosis,skewness,crest_factor,peak_to_peak.
void write_features_csv(std::ostream& out, const std::vector<Timestamp>& timestamps,
                        const std::vector<HandcraftedVector>& features);

}  // namespace bearingmon
