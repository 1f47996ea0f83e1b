#include "bearingmon/oselm.hpp"

#include <cmath>
#include <random>

#include <Eigen/QR>
#include <gtest/gtest.h>

#include "bearingmon/errors.hpp"
#include "test_util.hpp"

namespace bearingmon {
namespace {

// Ridge solution from a QR factorization of [H; I/sqrt(C)], never forming H^T H.
Eigen::VectorXd ridge_oracle(const Eigen::MatrixXd& H, const Eigen::VectorXd& y, double C) {
  const Eigen::Index L = H.cols();
  Eigen::MatrixXd A(H.rows() + L, L);
  A << H, Eigen::MatrixXd::Identity(L, L) / std::sqrt(C);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(H.rows() + L);
  rhs.head(H.rows()) = y;
  return A.colPivHouseholderQr().solve(rhs);
}

Eigen::MatrixXd hidden_rows(const OselmModel& m, const Eigen::MatrixXd& X) {
  Eigen::MatrixXd H(X.rows(), m.hidden_dim());
  for (Eigen::Index i = 0; i < X.rows(); ++i) H.row(i) = m.hidden(X.row(i).transpose());
  return H;
}

Eigen::MatrixXd random_samples(std::mt19937_64& rng, Eigen::Index n, Eigen::Index d) {
  std::normal_distribution<double> normal;
  Eigen::MatrixXd X(n, d);
  for (auto& v : X.reshaped()) v = normal(rng);
  return X;
}

TEST(OselmInit, WeightRangesAndDeterminism) {
  const OselmModel m = OselmModel::init_random(5, 2000, 100.0, 42);
  EXPECT_LE(m.input_weights().maxCoeff(), 1.0);
  EXPECT_GE(m.input_weights().minCoeff(), -1.0);
  EXPECT_LT(m.input_weights().minCoeff(), -0.99);
  EXPECT_GE(m.input_bias().minCoeff(), 0.0);
  EXPECT_LE(m.input_bias().maxCoeff(), 1.0);
  EXPECT_NEAR(m.input_bias().mean(), 0.5, 0.05);
  EXPECT_TRUE(m.input_weights() == OselmModel::init_random(5, 2000, 100.0, 42).input_weights());
  EXPECT_FALSE(m.input_weights() == OselmModel::init_random(5, 2000, 100.0, 43).input_weights());
  EXPECT_EQ(m.phase(), Phase::collecting_init_batch);
}

TEST(OselmInit, RejectsBadConfig) {
  EXPECT_THROW(OselmModel::init_random(5, 10, 0.0, 1), ConfigError);
  EXPECT_THROW(OselmModel::init_random(5, 10, -1.0, 1), ConfigError);
  OselmConfig c;
  c.window = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  EXPECT_THROW(ConvergenceMonitor(0.0, 10), ConfigError);
}

TEST(OselmHidden, SigmoidValues) {
  const OselmModel m = OselmModel::from_weights(Eigen::MatrixXd::Ones(2, 3), Eigen::VectorXd::Zero(2), 1.0);
  const Eigen::VectorXd h0 = m.hidden(Eigen::Vector3d::Zero());
  EXPECT_EQ(h0, Eigen::Vector2d(0.5, 0.5));
  EXPECT_DOUBLE_EQ(m.hidden(Eigen::Vector3d(1, 0, 0))(0), 1.0 / (1.0 + std::exp(-1.0)));
  EXPECT_EQ(m.hidden(Eigen::Vector3d(400, 400, 400))(0), 1.0);
  EXPECT_NEAR(m.hidden(Eigen::Vector3d(25, 0, 0))(0), 1.0, 1e-9);
  EXPECT_EQ(m.hidden(Eigen::Vector3d(-400, -400, -400))(1), 0.0);
  EXPECT_THROW(m.hidden(Eigen::Vector2d::Zero()), ShapeError);
  EXPECT_THROW(m.hidden(Eigen::Vector3d(0, std::nan(""), 0)), NonFiniteError);
}

TEST(OselmBatch, MatchesQrOracle) {
  std::mt19937_64 rng(5);
  for (double C : {0.01, 1.0, 100.0, 1e4}) {
    OselmModel m = OselmModel::init_random(5, 10, C, 3);
    const Eigen::MatrixXd X = random_samples(rng, 10, 5);
    m.init_batch(X);
    const Eigen::VectorXd oracle = ridge_oracle(hidden_rows(m, X), Eigen::VectorXd::Ones(10), C);
    EXPECT_LE((m.beta() - oracle).norm(), 1e-9 * oracle.norm()) << "C=" << C;
    EXPECT_EQ(m.phase(), Phase::online_training);
    EXPECT_EQ(m.rows_seen(), 10u);
    const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(10, 10);
    EXPECT_LE((m.information() * m.information_inverse() - I).norm(), 1e-8);
  }
}

TEST(OselmBatch, IdenticalSamplesFitTargetForLargeC) {
  const Eigen::RowVectorXd x = (Eigen::RowVectorXd(5) << 0.3, -0.2, 0.9, 0.0, 1.4).finished();
  for (double C : {1.0, 100.0, 1e4, 1e6}) {
    OselmModel m = OselmModel::init_random(5, 10, C, 12);
    m.init_batch(x.replicate(10, 1));
    const double h2 = m.hidden(x.transpose()).squaredNorm();
    // Rank-one ridge: y = 10 C |h|^2 / (1 + 10 C |h|^2)
    EXPECT_NEAR(m.predict(x.transpose()).deviation, 1.0 / (10.0 * C * h2 + 1.0), 1e-9) << C;
  }
}

TEST(OselmBatch, ZeroBetaPredictsZero) {
  OselmModel m = OselmModel::init_random(3, 4, 1.0, 2);
  m.init_batch(Eigen::MatrixXd::Ones(5, 3), Eigen::VectorXd::Zero(5));
  const Prediction p = m.predict(Eigen::Vector3d(0.1, 0.2, 0.3));
  EXPECT_EQ(p.y, 0.0);
  EXPECT_EQ(p.deviation, 1.0);
}

TEST(OselmBatch, BetaNormGrowsWithC) {
  std::mt19937_64 rng(6);
  const Eigen::MatrixXd X = random_samples(rng, 10, 5);
  double previous = 0.0;
  for (double C : {1e-3, 1e-2, 1e-1, 1.0, 10.0, 100.0, 1e3}) {
    OselmModel m = OselmModel::init_random(5, 10, C, 3);
    m.init_batch(X);
    EXPECT_GT(m.beta().norm(), previous) << C;
    previous = m.beta().norm();
  }
}

void check_rls_against_batch(InverseUpdate update) {
  std::mt19937_64 rng(update == InverseUpdate::direct ? 8 : 7);
  std::uniform_int_distribution<int> in_dim(2, 8);
  std::uniform_int_distribution<int> hid(4, 16);
  std::uniform_int_distribution<int> len(10, 200);
  std::normal_distribution<double> target(1.0, 0.2);
  const double Cs[] = {1.0, 100.0, 1e4};
  double worst = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const double C = Cs[trial % 3];
    const int d = in_dim(rng);
    OselmModel m = OselmModel::init_random(d, hid(rng), C, static_cast<std::uint64_t>(trial), update);
    const int n0 = 10;
    const int n = n0 + len(rng);
    const Eigen::MatrixXd X = random_samples(rng, n, d);
    Eigen::VectorXd y(n);
    for (auto& v : y) v = trial % 2 ? 1.0 : target(rng);
    m.init_batch(X.topRows(n0), y.head(n0));
    for (int i = n0; i < n; ++i) m.sequential_update(X.row(i).transpose(), y(i));
    const Eigen::VectorXd oracle = ridge_oracle(hidden_rows(m, X), y, C);
    const double rel = (m.beta() - oracle).norm() / oracle.norm();
    worst = std::max(worst, rel);
    EXPECT_LE(rel, 1e-8) << "trial " << trial << " C=" << C;
    EXPECT_EQ(m.rows_seen(), static_cast<std::size_t>(n));
    EXPECT_LT((m.information() - m.information().transpose()).cwiseAbs().rowwise().sum().maxCoeff(), 1e-10);
  }
  ::testing::Test::RecordProperty("worst_relative_error", std::to_string(worst));
}

TEST(OselmSequential, ShermanMorrisonMatchesBatchRefit) {
  check_rls_against_batch(InverseUpdate::sherman_morrison);
}

TEST(OselmSequential, DirectSolveMatchesBatchRefit) { check_rls_against_batch(InverseUpdate::direct); }

TEST(OselmSequential, UpdatesLeaveInputWeightsFrozen) {
  std::mt19937_64 rng(9);
  OselmModel m = OselmModel::init_random(5, 10, 100.0, 4);
  const Eigen::MatrixXd W = m.input_weights();
  const Eigen::VectorXd b = m.input_bias();
  const Eigen::MatrixXd X = random_samples(rng, 40, 5);
  m.init_batch(X.topRows(10));
  for (int i = 10; i < 40; ++i) m.sequential_update(X.row(i).transpose());
  EXPECT_TRUE(m.input_weights() == W);
  EXPECT_TRUE(m.input_bias() == b);
  EXPECT_LE((m.information_inverse() - m.information_inverse().transpose()).norm(), 1e-12);
}

TEST(OselmSequential, ScalarHiddenLayerByHand) {
  // One hidden node with zero weights: h = 0.5 for every input.
  OselmModel m = OselmModel::from_weights(Eigen::MatrixXd::Zero(1, 1), Eigen::VectorXd::Zero(1), 1.0);
  m.init_batch(Eigen::MatrixXd::Zero(2, 1));
  // M0 = 1 + 2 * 0.25 = 1.5, beta0 = (2 * 0.5) / 1.5
  EXPECT_DOUBLE_EQ(m.beta()(0), 2.0 / 3.0);
  const double delta = m.sequential_update(Eigen::VectorXd::Zero(1));
  // M1 = 1.75, beta1 = beta0 + 0.5 / 1.75 * (1 - 0.5 * beta0)
  const double beta1 = 2.0 / 3.0 + 0.5 / 1.75 * (1.0 - 1.0 / 3.0);
  EXPECT_NEAR(m.beta()(0), beta1, 1e-15);
  EXPECT_NEAR(delta, 100.0 * (beta1 - 2.0 / 3.0) / (2.0 / 3.0), 1e-12);
  EXPECT_NEAR(m.predict(Eigen::VectorXd::Zero(1)).deviation, std::abs(1.0 - 0.5 * beta1), 1e-15);
}

TEST(OselmSequential, ZeroInnovationGivesZeroDelta) {
  OselmModel m = OselmModel::from_weights(Eigen::MatrixXd::Zero(1, 1), Eigen::VectorXd::Zero(1), 1.0);
  m.init_batch(Eigen::MatrixXd::Zero(2, 1));
  const double fitted = 0.5 * m.beta()(0);
  EXPECT_EQ(m.sequential_update(Eigen::VectorXd::Zero(1), fitted), 0.0);
}

TEST(OselmSequential, ZeroPreviousBetaGivesInfiniteDelta) {
  OselmModel m = OselmModel::from_weights(Eigen::MatrixXd::Zero(1, 1), Eigen::VectorXd::Zero(1), 1.0);
  m.init_batch(Eigen::MatrixXd::Zero(2, 1), Eigen::VectorXd::Zero(2));
  EXPECT_TRUE(std::isinf(m.sequential_update(Eigen::VectorXd::Zero(1))));
}

TEST(OselmPhase, OutOfOrderCallsThrow) {
  OselmModel m = OselmModel::init_random(2, 3, 1.0, 1);
  EXPECT_THROW(m.sequential_update(Eigen::Vector2d::Zero()), PhaseError);
  EXPECT_THROW(m.predict(Eigen::Vector2d::Zero()), PhaseError);
  EXPECT_THROW(m.enter_inference(), PhaseError);
  m.init_batch(Eigen::MatrixXd::Ones(4, 2));
  EXPECT_THROW(m.init_batch(Eigen::MatrixXd::Ones(4, 2)), PhaseError);
  m.enter_inference();
  EXPECT_THROW(m.sequential_update(Eigen::Vector2d::Zero()), PhaseError);
  EXPECT_NO_THROW(m.predict(Eigen::Vector2d::Zero()));
  EXPECT_THROW(OselmModel::init_random(2, 3, 1.0, 1).init_batch(Eigen::MatrixXd::Ones(4, 3)), ShapeError);
}

TEST(ConvergenceMonitor, FiresAfterWindowConsecutiveUpdates) {
  ConvergenceMonitor mon(0.1, 10);
  for (std::size_t i = 0; i < 9; ++i) EXPECT_FALSE(mon.record(0.05, 10 + i));
  EXPECT_EQ(mon.consecutive(), 9);
  EXPECT_TRUE(mon.record(0.05, 19));
  EXPECT_EQ(*mon.converged_at(), 19u);
  EXPECT_FALSE(mon.record(0.05, 20));
  EXPECT_EQ(*mon.converged_at(), 19u);
}

TEST(ConvergenceMonitor, ResetsOnLargeUpdate) {
  ConvergenceMonitor mon(0.1, 10);
  std::size_t idx = 0;
  for (int i = 0; i < 9; ++i) mon.record(0.01, idx++);
  EXPECT_FALSE(mon.record(0.5, idx++));
  EXPECT_EQ(mon.consecutive(), 0);
  for (int i = 0; i < 9; ++i) EXPECT_FALSE(mon.record(0.01, idx++));
  EXPECT_TRUE(mon.record(0.01, idx));
  EXPECT_EQ(*mon.converged_at(), 19u);
}

TEST(ConvergenceMonitor, ThresholdIsStrict) {
  ConvergenceMonitor mon(0.1, 2);
  EXPECT_FALSE(mon.record(0.1, 0));
  EXPECT_FALSE(mon.record(0.1, 1));
  EXPECT_EQ(mon.consecutive(), 0);
  EXPECT_FALSE(mon.record(std::numeric_limits<double>::infinity(), 2));
  EXPECT_FALSE(mon.converged());
}

TEST(ConvergenceMonitor, ObserveMovesModelToInference) {
  OselmModel m = OselmModel::init_random(2, 3, 1.0, 1);
  m.init_batch(Eigen::MatrixXd::Ones(4, 2));
  ConvergenceMonitor mon(0.1, 2);
  EXPECT_FALSE(observe(m, mon, 0.01, 4));
  EXPECT_EQ(m.phase(), Phase::online_training);
  EXPECT_TRUE(observe(m, mon, 0.01, 5));
  EXPECT_EQ(m.phase(), Phase::inference);
  EXPECT_THROW(observe(m, mon, 0.01, 6), PhaseError);
}

TEST(OselmSerialization, RoundTripPreservesState) {
  std::mt19937_64 rng(10);
  OselmModel m = OselmModel::init_random(5, 10, 100.0, 4);
  const Eigen::MatrixXd X = random_samples(rng, 30, 5);
  m.init_batch(X.topRows(10));
  ConvergenceMonitor mon(0.1, 10);
  for (int i = 10; i < 20; ++i) observe(m, mon, m.sequential_update(X.row(i).transpose()), i);

  auto [back, back_mon] = deserialize_oselm(serialize_oselm(m, mon));
  EXPECT_EQ(back.phase(), m.phase());
  EXPECT_TRUE(back.beta() == m.beta());
  EXPECT_TRUE(back.information_inverse() == m.information_inverse());
  EXPECT_EQ(back_mon.consecutive(), mon.consecutive());
  for (int i = 20; i < 30; ++i) {
    const Eigen::VectorXd x = X.row(i).transpose();
    EXPECT_EQ(back.sequential_update(x), m.sequential_update(x));
  }
  EXPECT_TRUE(back.beta() == m.beta());

  testing::TempDir dir("oselm");
  save_oselm(m, mon, dir / "m.bin");
  EXPECT_TRUE(load_oselm(dir / "m.bin").first.beta() == m.beta());
}

TEST(OselmSerialization, RejectsCorruption) {
  OselmModel m = OselmModel::init_random(2, 3, 1.0, 1);
  const std::string bytes = serialize_oselm(m, ConvergenceMonitor());
  EXPECT_NO_THROW(deserialize_oselm(bytes));
  std::string bad = bytes;
  bad[bytes.size() / 2] = static_cast<char>(bad[bytes.size() / 2] ^ 1);
  EXPECT_THROW(deserialize_oselm(bad), ModelFormatError);
  EXPECT_THROW(deserialize_oselm(bytes.substr(0, 20)), ModelFormatError);
  EXPECT_THROW(deserialize_oselm("BMENCODR" + bytes.substr(8)), ModelFormatError);
}

}  // namespace
}  // namespace bearingmon
