#pragma once

// One-class online-sequential extreme learning machine with a single output
// node trained towards Y = 1 on healthy samples.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

#include <Eigen/Core>

namespace bearingmon {

class BinaryReader;
class BinaryWriter;

using VectorCRef = Eigen::Ref<const Eigen::VectorXd>;

enum class Phase { collecting_init_batch, online_training, inference };

std::string_view to_string(Phase phase);

// How M_n^-1 is applied in the sequential update.
enum class InverseUpdate {
  sherman_morrison,  // rank-1 update of the stored inverse, O(Lh^2)
  direct,            // Cholesky solve against M_n, O(Lh^3)
};

struct OselmConfig {
  Eigen::Index input_dim = 5;
  Eigen::Index hidden = 10;
  double C = 100.0;
  std::uint64_t seed = 1;
  std::size_t init_batch = 10;
  double tc_percent = 0.1;  // %delta-beta termination value
  int window = 10;          // consecutive sub-threshold updates needed
  InverseUpdate update = InverseUpdate::sherman_morrison;

  void validate() const;
};

struct Prediction {
  double y = 0.0;
  double deviation = 0.0;  // |1 - y|
};

class OselmModel {
 public:
  // Input weights uniform in [-1, 1], biases uniform in [0, 1].
  static OselmModel init_random(Eigen::Index input_dim, Eigen::Index hidden, double C,
                                std::uint64_t seed,
                                InverseUpdate update = InverseUpdate::sherman_morrison);
  static OselmModel init_random(const OselmConfig& config);
  // Explicit weights, for tests and deserialization.
  static OselmModel from_weights(Eigen::MatrixXd input_weights, Eigen::VectorXd input_bias, double C,
                                 InverseUpdate update = InverseUpdate::sherman_morrison);

  // Logistic sigmoid of the random projection; one row of H.
  Eigen::VectorXd hidden(VectorCRef x) const;

  // Batch ridge fit on the initial block (rows = samples):
  //   M0 = I/C + H0^T H0,  beta0 = M0^-1 H0^T Y0.
  // Moves the phase to online_training.
  void init_batch(const Eigen::MatrixXd& samples, const Eigen::VectorXd& targets);
  void init_batch(const Eigen::MatrixXd& samples);  // all targets 1

  // Recursive least-squares step
  //   M_n = M_{n-1} + h h^T,  beta_n = beta_{n-1} + M_n^-1 h (y - h^T beta_{n-1})
  // Returns 100 * |beta_n - beta_{n-1}| / |beta_{n-1}| (infinity for a zero
  // previous beta).
  double sequential_update(VectorCRef x, double target = 1.0);

  Prediction predict(VectorCRef x) const;

  void enter_inference();

  Phase phase() const { return phase_; }
  double C() const { return C_; }
  InverseUpdate update_method() const { return update_; }
  Eigen::Index input_dim() const { return input_weights_.cols(); }
  Eigen::Index hidden_dim() const { return input_weights_.rows(); }
  std::size_t rows_seen() const { return rows_seen_; }
  const Eigen::MatrixXd& input_weights() const { return input_weights_; }
  const Eigen::VectorXd& input_bias() const { return input_bias_; }
  const Eigen::VectorXd& beta() const { return beta_; }
  // The regularized Gram accumulator I/C + H^T H.
  const Eigen::MatrixXd& information() const { return information_; }
  // Maintained inverse of information(); only meaningful for Sherman-Morrison.
  const Eigen::MatrixXd& information_inverse() const { return inverse_; }

  void write(BinaryWriter& out) const;
  static OselmModel read(BinaryReader& in);

 private:
  OselmModel() = default;

  Eigen::MatrixXd input_weights_;
  Eigen::VectorXd input_bias_;
  Eigen::VectorXd beta_;
  Eigen::MatrixXd information_;
  Eigen::MatrixXd inverse_;
  double C_ = 100.0;
  InverseUpdate update_ = InverseUpdate::sherman_morrison;
  Phase phase_ = Phase::collecting_init_batch;
  std::size_t rows_seen_ = 0;
};

// Counts consecutive updates whose %delta-beta is below Tc; converged once
// the count reaches the window.
class ConvergenceMonitor {
 public:
  explicit ConvergenceMonitor(double tc_percent = 0.1, int window = 10);

  // Returns true on the observation that completes the window.
  bool record(double delta_percent, std::size_t sample_index);

  double tc_percent() const { return tc_percent_; }
  int window() const { return window_; }
  int consecutive() const { return consecutive_; }
  std::optional<std::size_t> converged_at() const { return converged_at_; }
  bool converged() const { return converged_at_.has_value(); }

  void write(BinaryWriter& out) const;
  static ConvergenceMonitor read(BinaryReader& in);

 private:
  double tc_percent_;
  int window_;
  int consecutive_ = 0;
  std::optional<std::size_t> converged_at_;
};

// Feeds one %delta-beta into the monitor and moves the model to inference
// when the monitor fires. Returns whether it fired.
bool observe(OselmModel& model, ConvergenceMonitor& monitor, double delta_percent,
             std::size_t sample_index);

// Standalone model file: "BMOSELM1" | u32 version | model | monitor | checksum.
std::string serialize_oselm(const OselmModel& model, const ConvergenceMonitor& monitor);
std::pair<OselmModel, ConvergenceMonitor> deserialize_oselm(std::string bytes);
void save_oselm(const OselmModel& model, const ConvergenceMonitor& monitor,
                const std::filesystem::path& path);
std::pair<OselmModel, ConvergenceMonitor> load_oselm(const std::filesystem::path& path);

}  // namespace bearingmon
