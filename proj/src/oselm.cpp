#include "bearingmon/oselm.hpp"

#include <cmath>
#include <limits>

#include <Eigen/Cholesky>

#include "bearingmon/binary_io.hpp"
#include "bearingmon/errors.hpp"
#include "bearingmon/rng.hpp"

namespace bearingmon {

namespace {

constexpr char kOselmMagic[] = "BMOSELM1";
constexpr std::uint32_t kOselmVersion = 1;
constexpr std::uint64_t kNoIndex = std::numeric_limits<std::uint64_t>::max();

Eigen::MatrixXd identity_over_c(Eigen::Index n, double C) {
  return Eigen::MatrixXd::Identity(n, n) / C;
}

}  // namespace

std::string_view to_string(Phase phase) {
  switch (phase) {
    case Phase::collecting_init_batch: return "collecting";
    case Phase::online_training: return "training";
    case Phase::inference: return "inference";
  }
  return "unknown";
}

void OselmConfig::validate() const {
  if (input_dim <= 0 || hidden <= 0) throw ConfigError("OSELM dimensions must be positive");
  if (!(C > 0.0) || !std::isfinite(C)) throw ConfigError("OSELM regularization C must be positive");
  if (init_batch == 0) throw ConfigError("OSELM initial batch must be non-empty");
  if (!(tc_percent > 0.0)) throw ConfigError("Tc must be positive");
  if (window < 1) throw ConfigError("convergence window must be >= 1");
}

OselmModel OselmModel::init_random(Eigen::Index input_dim, Eigen::Index hidden, double C,
                                   std::uint64_t seed, InverseUpdate update) {
  if (input_dim <= 0 || hidden <= 0) throw ConfigError("OSELM dimensions must be positive");
  Engine rng(seed);
  std::uniform_real_distribution<double> weight(-1.0, 1.0);
  std::uniform_real_distribution<double> bias(0.0, 1.0);
  Eigen::MatrixXd W(hidden, input_dim);
  for (Eigen::Index r = 0; r < hidden; ++r)
    for (Eigen::Index c = 0; c < input_dim; ++c) W(r, c) = weight(rng);
  Eigen::VectorXd b(hidden);
  for (Eigen::Index r = 0; r < hidden; ++r) b(r) = bias(rng);
  return from_weights(std::move(W), std::move(b), C, update);
}

OselmModel OselmModel::init_random(const OselmConfig& config) {
  config.validate();
  return init_random(config.input_dim, config.hidden, config.C, config.seed, config.update);
}

OselmModel OselmModel::from_weights(Eigen::MatrixXd input_weights, Eigen::VectorXd input_bias,
                                    double C, InverseUpdate update) {
  if (!(C > 0.0) || !std::isfinite(C)) throw ConfigError("OSELM regularization C must be positive");
  if (input_weights.rows() == 0 || input_weights.cols() == 0 ||
      input_bias.size() != input_weights.rows())
    throw ShapeError("OSELM input weight/bias shapes are inconsistent");
  OselmModel m;
  m.input_weights_ = std::move(input_weights);
  m.input_bias_ = std::move(input_bias);
  m.C_ = C;
  m.update_ = update;
  return m;
}

Eigen::VectorXd OselmModel::hidden(VectorCRef x) const {
  if (x.size() != input_dim())
    throw ShapeError("OSELM input has " + std::to_string(x.size()) + " values, expected " +
                     std::to_string(input_dim()));
  if (!x.allFinite()) throw NonFiniteError("OSELM input is not finite");
  const Eigen::ArrayXd z = (input_weights_ * x + input_bias_).array();
  return (1.0 / (1.0 + (-z).exp())).matrix();
}

void OselmModel::init_batch(const Eigen::MatrixXd& samples, const Eigen::VectorXd& targets) {
  if (phase_ != Phase::collecting_init_batch)
    throw PhaseError("init_batch: model already initialized");
  if (samples.rows() == 0 || samples.cols() != input_dim() || targets.size() != samples.rows())
    throw ShapeError("init_batch: sample/target shape mismatch");
  Eigen::MatrixXd H(samples.rows(), hidden_dim());
  for (Eigen::Index i = 0; i < samples.rows(); ++i) H.row(i) = hidden(samples.row(i).transpose());
  information_ = identity_over_c(hidden_dim(), C_);
  information_.selfadjointView<Eigen::Lower>().rankUpdate(H.transpose());
  information_ = information_.selfadjointView<Eigen::Lower>();
  const Eigen::LLT<Eigen::MatrixXd> llt(information_);
  if (llt.info() != Eigen::Success) throw NonFiniteError("init_batch: M0 is not positive definite");
  beta_ = llt.solve(H.transpose() * targets);
  inverse_ = llt.solve(Eigen::MatrixXd::Identity(hidden_dim(), hidden_dim()));
  inverse_ = 0.5 * (inverse_ + inverse_.transpose()).eval();
  rows_seen_ = static_cast<std::size_t>(samples.rows());
  phase_ = Phase::online_training;
}

void OselmModel::init_batch(const Eigen::MatrixXd& samples) {
  init_batch(samples, Eigen::VectorXd::Ones(samples.rows()));
}

double OselmModel::sequential_update(VectorCRef x, double target) {
  if (phase_ != Phase::online_training)
    throw PhaseError(std::string("sequential_update: model is in phase ") +
                     std::string(to_string(phase_)));
  const Eigen::VectorXd h = hidden(x);
  const double innovation = target - h.dot(beta_);
  information_.noalias() += h * h.transpose();

  Eigen::VectorXd step;
  if (update_ == InverseUpdate::sherman_morrison) {
    const Eigen::VectorXd ph = inverse_ * h;
    const double denom = 1.0 + h.dot(ph);
    // M_n^-1 h = P_{n-1} h / (1 + h^T P_{n-1} h)
    const Eigen::VectorXd gain = ph / denom;
    inverse_.noalias() -= gain * ph.transpose();
    inverse_ = 0.5 * (inverse_ + inverse_.transpose()).eval();
    step = gain * innovation;
  } else {
    const Eigen::LLT<Eigen::MatrixXd> llt(information_);
    if (llt.info() != Eigen::Success)
      throw NonFiniteError("sequential_update: M is not positive definite");
    step = llt.solve(h) * innovation;
  }
  if (!step.allFinite()) throw NonFiniteError("sequential_update: non-finite beta step");

  const double previous_norm = beta_.norm();
  beta_ += step;
  ++rows_seen_;
  if (previous_norm == 0.0) return std::numeric_limits<double>::infinity();
  return 100.0 * step.norm() / previous_norm;
}

Prediction OselmModel::predict(VectorCRef x) const {
  if (phase_ == Phase::collecting_init_batch) throw PhaseError("predict: beta not initialized");
  const double y = hidden(x).dot(beta_);
  return {y, std::abs(1.0 - y)};
}

void OselmModel::enter_inference() {
  if (phase_ != Phase::online_training)
    throw PhaseError("enter_inference: only a training model can move to inference");
  phase_ = Phase::inference;
}

void OselmModel::write(BinaryWriter& out) const {
  out.u32(static_cast<std::uint32_t>(phase_));
  out.u32(static_cast<std::uint32_t>(update_));
  out.f64(C_);
  out.u64(rows_seen_);
  out.matrix(input_weights_);
  out.vector(input_bias_);
  out.vector(beta_);
  out.matrix(information_);
  out.matrix(inverse_);
}

OselmModel OselmModel::read(BinaryReader& in) {
  const auto phase = in.u32();
  const auto update = in.u32();
  if (phase > static_cast<std::uint32_t>(Phase::inference) ||
      update > static_cast<std::uint32_t>(InverseUpdate::direct))
    throw ModelFormatError("bad OSELM phase or update tag");
  const double C = in.f64();
  const std::uint64_t rows = in.u64();
  Eigen::MatrixXd W = in.matrix();
  Eigen::VectorXd b = in.vector();
  OselmModel m;
  try {
    m = from_weights(std::move(W), std::move(b), C, static_cast<InverseUpdate>(update));
  } catch (const Error& e) {
    throw ModelFormatError(std::string("OSELM record: ") + e.what());
  }
  m.phase_ = static_cast<Phase>(phase);
  m.rows_seen_ = rows;
  m.beta_ = in.vector();
  m.information_ = in.matrix();
  m.inverse_ = in.matrix();
  if (m.phase_ != Phase::collecting_init_batch) {
    const auto L = m.hidden_dim();
    if (m.beta_.size() != L || m.information_.rows() != L || m.information_.cols() != L ||
        m.inverse_.rows() != L || m.inverse_.cols() != L)
      throw ModelFormatError("OSELM state shapes do not match the hidden layer");
  }
  return m;
}

ConvergenceMonitor::ConvergenceMonitor(double tc_percent, int window)
    : tc_percent_(tc_percent), window_(window) {
  if (!(tc_percent > 0.0)) throw ConfigError("Tc must be positive");
  if (window < 1) throw ConfigError("convergence window must be >= 1");
}

bool ConvergenceMonitor::record(double delta_percent, std::size_t sample_index) {
  if (converged_at_) return false;
  consecutive_ = delta_percent < tc_percent_ ? consecutive_ + 1 : 0;
  if (consecutive_ >= window_) {
    converged_at_ = sample_index;
    return true;
  }
  return false;
}

void ConvergenceMonitor::write(BinaryWriter& out) const {
  out.f64(tc_percent_);
  out.u32(static_cast<std::uint32_t>(window_));
  out.u32(static_cast<std::uint32_t>(consecutive_));
  out.u64(converged_at_ ? static_cast<std::uint64_t>(*converged_at_) : kNoIndex);
}

ConvergenceMonitor ConvergenceMonitor::read(BinaryReader& in) {
  const double tc = in.f64();
  const auto window = static_cast<int>(in.u32());
  ConvergenceMonitor m(tc, window);
  m.consecutive_ = static_cast<int>(in.u32());
  if (const auto at = in.u64(); at != kNoIndex) m.converged_at_ = static_cast<std::size_t>(at);
  return m;
}

bool observe(OselmModel& model, ConvergenceMonitor& monitor, double delta_percent,
             std::size_t sample_index) {
  if (model.phase() != Phase::online_training)
    throw PhaseError("observe: model is not in online training");
  if (!monitor.record(delta_percent, sample_index)) return false;
  model.enter_inference();
  return true;
}

std::string serialize_oselm(const OselmModel& model, const ConvergenceMonitor& monitor) {
  BinaryWriter w;
  w.magic(kOselmMagic);
  w.u32(kOselmVersion);
  model.write(w);
  monitor.write(w);
  return w.finish();
}

std::pair<OselmModel, ConvergenceMonitor> deserialize_oselm(std::string bytes) {
  BinaryReader r(std::move(bytes));
  r.expect_magic(kOselmMagic);
  if (const auto version = r.u32(); version != kOselmVersion)
    throw ModelFormatError("unsupported OSELM version " + std::to_string(version));
  OselmModel model = OselmModel::read(r);
  ConvergenceMonitor monitor = ConvergenceMonitor::read(r);
  r.expect_end();
  return {std::move(model), monitor};
}

void save_oselm(const OselmModel& model, const ConvergenceMonitor& monitor,
                const std::filesystem::path& path) {
  write_bytes(path, serialize_oselm(model, monitor));
}

std::pair<OselmModel, ConvergenceMonitor> load_oselm(const std::filesystem::path& path) {
  return deserialize_oselm(read_bytes(path));
}

}  // namespace bearingmon
