#include "bearingmon/features.hpp"

#include <cmath>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "bearingmon/errors.hpp"
#include "bearingmon/synth.hpp"

namespace bearingmon {
namespace {

struct LongMoments {
  long double mean = 0, m2 = 0, m3 = 0, m4 = 0, sumsq = 0, maxabs = 0, lo = 0, hi = 0;
};

LongMoments long_moments(const Eigen::VectorXd& x) {
  LongMoments m;
  const auto n = static_cast<long double>(x.size());
  for (double v : x) m.mean += v;
  m.mean /= n;
  m.lo = m.hi = x(0);
  for (double v : x) {
    const long double d = v - m.mean;
    m.m2 += d * d / n;
    m.m3 += d * d * d / n;
    m.m4 += d * d * d * d / n;
    m.sumsq += static_cast<long double>(v) * v;
    m.maxabs = std::max(m.maxabs, std::fabs(static_cast<long double>(v)));
    m.lo = std::min<long double>(m.lo, v);
    m.hi = std::max<long double>(m.hi, v);
  }
  return m;
}

void expect_rel(double actual, long double expected, double tol) {
  EXPECT_LE(std::fabs(actual - static_cast<double>(expected)),
            tol * std::max(1e-300, std::fabs(static_cast<double>(expected))))
      << actual << " vs " << static_cast<double>(expected);
}

Eigen::VectorXd vec(std::initializer_list<double> v) {
  Eigen::VectorXd x(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double e : v) x(i++) = e;
  return x;
}

TEST(Averaging, SmallExample) {
  const Eigen::VectorXd out = average_downsample(vec({1, 2, 3, 4, 5, 10, 10, 10, 10, 10}));
  ASSERT_EQ(out.size(), 2);
  EXPECT_DOUBLE_EQ(out(0), 3.0);
  EXPECT_DOUBLE_EQ(out(1), 10.0);
}

TEST(Averaging, FullSnapshotLength) {
  EXPECT_EQ(average_downsample(Eigen::VectorXd::Ones(20480)).size(), 4096);
  EXPECT_EQ(average_downsample(Eigen::VectorXd::Ones(2045)).size(), 409);
}

TEST(Averaging, RejectsBadLength) {
  EXPECT_THROW(average_downsample(Eigen::VectorXd::Ones(12)), ShapeError);
  EXPECT_THROW(average_downsample(Eigen::VectorXd(0)), ShapeError);
}

TEST(Averaging, PreservesMean) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> normal(0.5, 2.0);
  for (int trial = 0; trial < 50; ++trial) {
    Eigen::VectorXd x(5 * (1 + trial * 7));
    for (auto& v : x) v = normal(rng);
    EXPECT_NEAR(average_downsample(x).mean(), x.mean(), 1e-12);
  }
}

TEST(Statistics, HandExamples) {
  const Eigen::VectorXd x = vec({1, -1, 1, -1});
  EXPECT_DOUBLE_EQ(rms(x), 1.0);
  EXPECT_DOUBLE_EQ(kurtosis(x), 1.0);
  EXPECT_DOUBLE_EQ(skewness(x), 0.0);
  EXPECT_DOUBLE_EQ(crest_factor(x), 1.0);
  EXPECT_DOUBLE_EQ(peak_to_peak(x), 2.0);

  const Eigen::VectorXd spike = vec({0, 0, 0, 4});
  EXPECT_DOUBLE_EQ(rms(spike), 2.0);
  EXPECT_DOUBLE_EQ(crest_factor(spike), 2.0);
  // mean 1, deviations -1,-1,-1,3: m2 = 3, m3 = 6, m4 = 21
  EXPECT_DOUBLE_EQ(kurtosis(spike), 21.0 / 9.0);
  EXPECT_DOUBLE_EQ(skewness(spike), 6.0 / std::pow(3.0, 1.5));
}

TEST(Statistics, ConstantInputHasNoShape) {
  const Eigen::VectorXd c = Eigen::VectorXd::Constant(100, 0.3);
  EXPECT_THROW(kurtosis(c), ZeroVarianceError);
  EXPECT_THROW(skewness(c), ZeroVarianceError);
  EXPECT_THROW(crest_factor(Eigen::VectorXd::Zero(10)), ZeroVarianceError);
  EXPECT_DOUBLE_EQ(crest_factor(c), 1.0);
  EXPECT_THROW(rms(Eigen::VectorXd(0)), ShapeError);
}

TEST(Statistics, AgreeWithExtendedPrecisionOracle) {
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<int> len(2, 3000);
  std::uniform_real_distribution<double> scale_exp(-3.0, 3.0);
  std::normal_distribution<double> normal;
  std::exponential_distribution<double> expo(1.0);
  for (int trial = 0; trial < 1000; ++trial) {
    Eigen::VectorXd x(len(rng));
    const double scale = std::pow(10.0, scale_exp(rng));
    const double shift = trial % 3 == 0 ? scale * normal(rng) : 0.0;
    for (auto& v : x) v = shift + scale * (trial % 2 ? normal(rng) : expo(rng));
    const LongMoments m = long_moments(x);
    const auto n = static_cast<long double>(x.size());
    const long double r = std::sqrt(m.sumsq / n);
    expect_rel(rms(x), r, 1e-10);
    expect_rel(kurtosis(x), m.m4 / (m.m2 * m.m2), 1e-10);
    if (std::fabs(m.m3) > 1e-6 * std::pow(m.m2, 1.5L))
      expect_rel(skewness(x), m.m3 / std::pow(m.m2, 1.5L), 1e-9);
    expect_rel(crest_factor(x), m.maxabs / r, 1e-10);
    expect_rel(peak_to_peak(x), m.hi - m.lo, 1e-12);
  }
}

TEST(Statistics, ScaleAndShiftProperties) {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> normal;
  for (int trial = 0; trial < 100; ++trial) {
    Eigen::VectorXd x(257);
    for (auto& v : x) v = normal(rng);
    const double a = 0.1 + trial * 0.37;
    const double c = trial * 0.5 - 20.0;
    const Eigen::VectorXd scaled = a * x;
    const Eigen::VectorXd shifted = (x.array() + c).matrix();
    EXPECT_NEAR(kurtosis(scaled), kurtosis(x), 1e-9 * kurtosis(x));
    EXPECT_NEAR(kurtosis(shifted), kurtosis(x), 1e-9 * kurtosis(x));
    EXPECT_NEAR(skewness(scaled), skewness(x), 1e-9);
    EXPECT_NEAR(skewness(shifted), skewness(x), 1e-9);
    EXPECT_NEAR(rms(scaled), a * rms(x), 1e-9 * a * rms(x));
    EXPECT_NEAR(crest_factor(scaled), crest_factor(x), 1e-9 * crest_factor(x));
    EXPECT_NEAR(peak_to_peak(shifted), peak_to_peak(x), 1e-9 * peak_to_peak(x));
    EXPECT_NEAR(skewness(-x), -skewness(x), 1e-12);
  }
}

TEST(Handcrafted, VectorOrderAndValues) {
  const Eigen::VectorXd x = vec({0, 0, 0, 4});
  const HandcraftedVector f = handcrafted_vector(x);
  const Eigen::VectorXd v = f.to_vector();
  ASSERT_EQ(v.size(), HandcraftedVector::kSize);
  EXPECT_EQ(v(0), rms(x));
  EXPECT_EQ(v(1), kurtosis(x));
  EXPECT_EQ(v(2), skewness(x));
  EXPECT_EQ(v(3), crest_factor(x));
  EXPECT_EQ(v(4), peak_to_peak(x));
}

TEST(Handcrafted, ImpulsiveFaultRaisesKurtosisAndCrest) {
  SyntheticConfig c;
  c.n_snapshots = 2;
  c.fault_onset = 1;
  c.impulse_growth = 0.0;
  c.rng_seed = 5;
  const auto healthy = handcrafted_vector(synth_snapshot(c, 0));
  const auto faulty = handcrafted_vector(synth_snapshot(c, 1));
  EXPECT_GT(faulty.kurtosis, healthy.kurtosis + 0.5);
  EXPECT_GT(faulty.crest_factor, healthy.crest_factor);
  EXPECT_GT(faulty.rms, healthy.rms);
}

TEST(Handcrafted, CsvLayout) {
  std::ostringstream out;
  const auto ts = *parse_snapshot_timestamp("2004.02.12.10.32.39");
  write_features_csv(out, {ts}, {handcrafted_vector(vec({1, -1, 1, -1}))});
  EXPECT_EQ(out.str(),
            "timestamp,rms,kurtosis,skewness,crest_factor,peak_to_peak\n"
            "2004.02.12.10.32.39,1,1,0,1,2\n");
  EXPECT_THROW(write_features_csv(out, {}, {HandcraftedVector{}}), ShapeError);
}

}  // namespace
}  // namespace bearingmon
