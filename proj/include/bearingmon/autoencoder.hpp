#pragma once

// Single-hidden-layer autoencoder (d -> L -> m, ReLU code layer) trained
// offline with Adam. Only the encoder half is deployed.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace bearingmon {

using VectorCRef = Eigen::Ref<const Eigen::VectorXd>;

enum class DecoderActivation { relu, linear };

struct AeParams {
  Eigen::MatrixXd W;   // L x d
  Eigen::VectorXd b;   // L
  Eigen::MatrixXd W0;  // m x L
  Eigen::VectorXd b0;  // m

  Eigen::Index input_dim() const { return W.cols(); }
  Eigen::Index code_dim() const { return W.rows(); }
  Eigen::Index output_dim() const { return W0.rows(); }

  static AeParams zeros_like(const AeParams& shape);
  bool all_finite() const;
  void check_shapes() const;
};

// Glorot-uniform weights, zero biases.
AeParams init_params(Eigen::Index d, Eigen::Index L, Eigen::Index m, std::uint64_t seed);

Eigen::VectorXd encode(const AeParams& params, VectorCRef x);
Eigen::VectorXd decode(const AeParams& params, VectorCRef h,
                       DecoderActivation activation = DecoderActivation::relu);

// Mean squared error (1/d) * sum (xhat_i - x_i)^2.
double reconstruction_loss(VectorCRef x, VectorCRef xhat);

// Mean reconstruction loss over the columns of `batch`.
double batch_loss(const AeParams& params, const Eigen::MatrixXd& batch,
                  DecoderActivation activation = DecoderActivation::relu);

// Exact gradients of batch_loss; the ReLU subgradient at 0 is 0.
AeParams backprop_grads(const AeParams& params, const Eigen::MatrixXd& batch,
                        DecoderActivation activation = DecoderActivation::relu);

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  AeParams first_moment;
  AeParams second_moment;
  std::int64_t step = 0;
  AdamConfig config;

  static AdamState fresh(const AeParams& shape, const AdamConfig& config = {});
};

// One bias-corrected Adam update. Throws NonFiniteError on a non-finite
// gradient, leaving params and state untouched.
void adam_step(AeParams& params, const AeParams& grads, AdamState& state);

struct TrainConfig {
  int epochs = 1;
  Eigen::Index batch_size = 32;
  Eigen::Index code_dim = 5;
  std::uint64_t init_seed = 1;
  std::uint64_t shuffle_seed = 2;
  DecoderActivation decoder = DecoderActivation::relu;
  AdamConfig adam;

  void validate() const;
};

// Training vectors gathered from several column-major blocks without
// copying. The blocks must outlive the set.
class TrainingSet {
 public:
  void add(const Eigen::MatrixXf& block);

  std::size_t size() const { return total_; }
  Eigen::Index dim() const { return dim_; }
  Eigen::VectorXd sample(std::size_t index) const;

 private:
  std::vector<const Eigen::MatrixXf*> blocks_;
  std::vector<std::size_t> offsets_;
  std::size_t total_ = 0;
  Eigen::Index dim_ = 0;
};

struct TrainResult {
  AeParams params;
  std::vector<double> batch_losses;  // loss of each mini-batch before its update
};

using BatchCallback = std::function<void(std::size_t batch_index, double loss)>;

// `epochs` shuffled passes over the set; every vector lands in exactly one
// mini-batch per pass (the last batch may be short).
TrainResult train_autoencoder(const TrainingSet& data, const TrainConfig& config,
                              const BatchCallback& on_batch = {});

struct EncoderProvenance {
  std::uint64_t init_seed = 0;
  std::uint64_t shuffle_seed = 0;
  std::uint64_t train_set_hash = 0;
};

// The deployed feature extractor: h = ReLU(W x + b). There is deliberately
// no decode(); the decoder weights are dropped at export.
class EncoderModel {
 public:
  EncoderModel(Eigen::MatrixXd W, Eigen::VectorXd b, EncoderProvenance provenance = {});
  static EncoderModel from_params(const AeParams& params, EncoderProvenance provenance = {});

  Eigen::VectorXd encode(VectorCRef x) const;

  Eigen::Index input_dim() const { return W_.cols(); }
  Eigen::Index code_dim() const { return W_.rows(); }
  const Eigen::MatrixXd& weights() const { return W_; }
  const Eigen::VectorXd& bias() const { return b_; }
  const EncoderProvenance& provenance() const { return provenance_; }

 private:
  Eigen::MatrixXd W_;
  Eigen::VectorXd b_;
  EncoderProvenance provenance_;
};

// Encoder file, version 1 (all integers little-endian):
//   "BMENCODR" | u32 version | u64 init_seed | u64 shuffle_seed |
//   u64 train_set_hash | u64 L | u64 d | f64 W[L*d] row-major |
//   u64 L | f64 b[L] | u64 FNV-1a checksum of everything before it
std::string serialize_encoder(const EncoderModel& model);
EncoderModel deserialize_encoder(std::string bytes);
void save_encoder(const EncoderModel& model, const std::filesystem::path& path);
EncoderModel load_encoder(const std::filesystem::path& path);

}  // namespace bearingmon
