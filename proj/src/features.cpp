#include "bearingmon/features.hpp"

#include <cmath>
#include <ostream>

#include "bearingmon/binary_io.hpp"
#include "bearingmon/errors.hpp"

namespace bearingmon {

namespace {

void require_nonempty(VectorCRef x, const char* what) {
  if (x.size() == 0) throw ShapeError(std::string(what) + ": empty input");
}

struct CentralMoments {
  double m2 = 0.0;
  double m3 = 0.0;
  double m4 = 0.0;
};

CentralMoments central_moments(VectorCRef x, const char* what) {
  require_nonempty(x, what);
  const double mean = x.mean();
  CentralMoments m;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double d = x(i) - mean;
    const double d2 = d * d;
    m.m2 += d2;
    m.m3 += d2 * d;
    m.m4 += d2 * d2;
  }
  const auto n = static_cast<double>(x.size());
  m.m2 /= n;
  m.m3 /= n;
  m.m4 /= n;
  // Relative cutoff: a constant signal leaves only rounding residue in m2.
  const double scale = x.cwiseAbs().maxCoeff();
  if (!(m.m2 > 1e-26 * scale * scale))
    throw ZeroVarianceError(std::string(what) + ": zero variance");
  return m;
}

}  // namespace

Eigen::VectorXd average_downsample(VectorCRef raw, Eigen::Index window) {
  if (window <= 0 || raw.size() == 0 || raw.size() % window != 0)
    throw ShapeError("average_downsample: length " + std::to_string(raw.size()) +
                     " is not a positive multiple of " + std::to_string(window));
  const Eigen::Index n = raw.size() / window;
  Eigen::VectorXd out(n);
  for (Eigen::Index i = 0; i < n; ++i) out(i) = raw.segment(i * window, window).mean();
  return out;
}

double rms(VectorCRef x) {
  require_nonempty(x, "rms");
  return std::sqrt(x.squaredNorm() / static_cast<double>(x.size()));
}

double kurtosis(VectorCRef x) {
  const auto m = central_moments(x, "kurtosis");
  return m.m4 / (m.m2 * m.m2);
}

double skewness(VectorCRef x) {
  const auto m = central_moments(x, "skewness");
  return m.m3 / std::pow(m.m2, 1.5);
}

double crest_factor(VectorCRef x) {
  const double r = rms(x);
  if (r == 0.0) throw ZeroVarianceError("crest_factor: all-zero input");
  return x.cwiseAbs().maxCoeff() / r;
}

double peak_to_peak(VectorCRef x) {
  require_nonempty(x, "peak_to_peak");
  return x.maxCoeff() - x.minCoeff();
}

Eigen::VectorXd HandcraftedVector::to_vector() const {
  Eigen::VectorXd v(kSize);
  v << rms, kurtosis, skewness, crest_factor, peak_to_peak;
  return v;
}

HandcraftedVector handcrafted_vector(VectorCRef raw) {
  HandcraftedVector f;
  f.rms = bearingmon::rms(raw);
  f.kurtosis = bearingmon::kurtosis(raw);
  f.skewness = bearingmon::skewness(raw);
  f.crest_factor = bearingmon::crest_factor(raw);
  f.peak_to_peak = bearingmon::peak_to_peak(raw);
  return f;
}

void write_features_csv(std::ostream& out, const std::vector<Timestamp>& timestamps,
                        const std::vector<HandcraftedVector>& features) {
  if (timestamps.size() != features.size())
    throw ShapeError("write_features_csv: timestamp/feature count mismatch");
  out << "timestamp,rms,kurtosis,skewness,crest_factor,peak_to_peak\n";
  for (std::size_t i = 0; i < features.size(); ++i) {
    const auto& f = features[i];
    out << format_snapshot_timestamp(timestamps[i]) << ',' << format_double(f.rms) << ','
        << format_double(f.kurtosis) << ',' << format_double(f.skewness) << ','
        << format_double(f.crest_factor) << ',' << format_double(f.peak_to_peak) << '\n';
  }
}

}  // namespace bearingmon
