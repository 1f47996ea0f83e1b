#include "bearingmon/autoencoder.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "bearingmon/binary_io.hpp"
#include "bearingmon/errors.hpp"
#include "bearingmon/rng.hpp"

namespace bearingmon {

namespace {

constexpr char kEncoderMagic[] = "BMENCODR";
constexpr std::uint32_t kEncoderVersion = 1;

Eigen::MatrixXd glorot(Eigen::Index rows, Eigen::Index cols, Engine& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  std::uniform_real_distribution<double> dist(-limit, limit);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = dist(rng);
  return m;
}

Eigen::MatrixXd output_activation(const Eigen::MatrixXd& pre, DecoderActivation activation) {
  return activation == DecoderActivation::relu ? Eigen::MatrixXd(pre.cwiseMax(0.0)) : pre;
}

template <typename Fn>
void for_each_group(AeParams& a, const AeParams& b, AeParams& c, AeParams& d, Fn fn) {
  fn(a.W, b.W, c.W, d.W);
  fn(a.b, b.b, c.b, d.b);
  fn(a.W0, b.W0, c.W0, d.W0);
  fn(a.b0, b.b0, c.b0, d.b0);
}

}  // namespace

AeParams AeParams::zeros_like(const AeParams& shape) {
  return {Eigen::MatrixXd::Zero(shape.W.rows(), shape.W.cols()),
          Eigen::VectorXd::Zero(shape.b.size()),
          Eigen::MatrixXd::Zero(shape.W0.rows(), shape.W0.cols()),
          Eigen::VectorXd::Zero(shape.b0.size())};
}

bool AeParams::all_finite() const {
  return W.allFinite() && b.allFinite() && W0.allFinite() && b0.allFinite();
}

void AeParams::check_shapes() const {
  if (b.size() != W.rows() || W0.cols() != W.rows() || b0.size() != W0.rows() || W.size() == 0 ||
      W0.size() == 0)
    throw ShapeError("autoencoder parameter shapes are inconsistent");
}

AeParams init_params(Eigen::Index d, Eigen::Index L, Eigen::Index m, std::uint64_t seed) {
  if (d <= 0 || L <= 0 || m <= 0) throw ConfigError("autoencoder dimensions must be positive");
  Engine rng(seed);
  AeParams p;
  p.W = glorot(L, d, rng);
  p.b = Eigen::VectorXd::Zero(L);
  p.W0 = glorot(m, L, rng);
  p.b0 = Eigen::VectorXd::Zero(m);
  return p;
}

Eigen::VectorXd encode(const AeParams& params, VectorCRef x) {
  params.check_shapes();
  if (x.size() != params.input_dim())
    throw ShapeError("encode: input has " + std::to_string(x.size()) + " values, expected " +
                     std::to_string(params.input_dim()));
  return (params.W * x + params.b).cwiseMax(0.0);
}

Eigen::VectorXd decode(const AeParams& params, VectorCRef h, DecoderActivation activation) {
  params.check_shapes();
  if (h.size() != params.code_dim()) throw ShapeError("decode: code length mismatch");
  return output_activation(params.W0 * h + params.b0, activation);
}

double reconstruction_loss(VectorCRef x, VectorCRef xhat) {
  if (x.size() != xhat.size() || x.size() == 0)
    throw ShapeError("reconstruction_loss: length mismatch");
  return (xhat - x).squaredNorm() / static_cast<double>(x.size());
}

double batch_loss(const AeParams& params, const Eigen::MatrixXd& batch, DecoderActivation activation) {
  params.check_shapes();
  if (batch.cols() == 0 || batch.rows() != params.input_dim())
    throw ShapeError("batch_loss: batch shape mismatch");
  if (params.output_dim() != params.input_dim())
    throw ShapeError("batch_loss: reconstruction needs m == d");
  const Eigen::MatrixXd h = ((params.W * batch).colwise() + params.b).cwiseMax(0.0);
  const Eigen::MatrixXd xhat = output_activation((params.W0 * h).colwise() + params.b0, activation);
  return (xhat - batch).squaredNorm() / static_cast<double>(batch.size());
}

AeParams backprop_grads(const AeParams& params, const Eigen::MatrixXd& batch,
                        DecoderActivation activation) {
  params.check_shapes();
  if (batch.cols() == 0) throw ShapeError("backprop_grads: empty batch");
  if (batch.rows() != params.input_dim() || params.output_dim() != params.input_dim())
    throw ShapeError("backprop_grads: batch shape mismatch");

  const Eigen::MatrixXd pre1 = (params.W * batch).colwise() + params.b;
  const Eigen::MatrixXd h = pre1.cwiseMax(0.0);
  const Eigen::MatrixXd pre2 = (params.W0 * h).colwise() + params.b0;
  const Eigen::MatrixXd xhat = output_activation(pre2, activation);
  if (!xhat.allFinite()) throw NonFiniteError("backprop_grads: non-finite activation");

  // d(loss)/d(xhat) for loss = sum of squares / (m * B)
  Eigen::MatrixXd delta2 = (2.0 / static_cast<double>(batch.size())) * (xhat - batch);
  if (activation == DecoderActivation::relu)
    delta2 = delta2.cwiseProduct((pre2.array() > 0.0).cast<double>().matrix());
  Eigen::MatrixXd delta1 = params.W0.transpose() * delta2;
  delta1 = delta1.cwiseProduct((pre1.array() > 0.0).cast<double>().matrix());

  AeParams g;
  g.W0 = delta2 * h.transpose();
  g.b0 = delta2.rowwise().sum();
  g.W = delta1 * batch.transpose();
  g.b = delta1.rowwise().sum();
  return g;
}

AdamState AdamState::fresh(const AeParams& shape, const AdamConfig& config) {
  return {AeParams::zeros_like(shape), AeParams::zeros_like(shape), 0, config};
}

void adam_step(AeParams& params, const AeParams& grads, AdamState& state) {
  params.check_shapes();
  if (grads.W.rows() != params.W.rows() || grads.W.cols() != params.W.cols() ||
      grads.b.size() != params.b.size() || grads.W0.rows() != params.W0.rows() ||
      grads.W0.cols() != params.W0.cols() || grads.b0.size() != params.b0.size() ||
      state.first_moment.W.size() != params.W.size() || state.first_moment.b0.size() != params.b0.size())
    throw ShapeError("adam_step: gradient/state shape mismatch");
  if (!grads.all_finite()) throw NonFiniteError("adam_step: non-finite gradient");

  const AdamConfig& c = state.config;
  const auto t = static_cast<double>(state.step + 1);
  const double correction1 = 1.0 - std::pow(c.beta1, t);
  const double correction2 = 1.0 - std::pow(c.beta2, t);
  for_each_group(params, grads, state.first_moment, state.second_moment,
                 [&](auto& p, const auto& g, auto& m, auto& v) {
                   m = c.beta1 * m + (1.0 - c.beta1) * g;
                   v = c.beta2 * v + (1.0 - c.beta2) * g.cwiseAbs2();
                   p.array() -= c.learning_rate * (m.array() / correction1) /
                                ((v.array() / correction2).sqrt() + c.epsilon);
                 });
  ++state.step;
}

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (code_dim < 1) throw ConfigError("code_dim must be >= 1");
}

void TrainingSet::add(const Eigen::MatrixXf& block) {
  if (block.cols() == 0) return;
  if (dim_ != 0 && block.rows() != dim_) throw ShapeError("TrainingSet: dimension mismatch");
  dim_ = block.rows();
  blocks_.push_back(&block);
  offsets_.push_back(total_);
  total_ += static_cast<std::size_t>(block.cols());
}

Eigen::VectorXd TrainingSet::sample(std::size_t index) const {
  if (index >= total_) throw ShapeError("TrainingSet: index out of range");
  const auto it = std::upper_bound(offsets_.begin(), offsets_.end(), index);
  const auto block = static_cast<std::size_t>(it - offsets_.begin()) - 1;
  return blocks_[block]->col(static_cast<Eigen::Index>(index - offsets_[block])).cast<double>();
}

TrainResult train_autoencoder(const TrainingSet& data, const TrainConfig& config,
                              const BatchCallback& on_batch) {
  config.validate();
  if (data.size() == 0) throw DataError("train_autoencoder: empty training stream");
  const Eigen::Index d = data.dim();
  TrainResult result{init_params(d, config.code_dim, d, config.init_seed), {}};
  AdamState adam = AdamState::fresh(result.params, config.adam);
  Engine shuffle_rng(config.shuffle_seed);
  std::vector<std::size_t> order(data.size());
  const auto batch_size = static_cast<std::size_t>(config.batch_size);

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    for (std::size_t start = 0; start < order.size(); start += batch_size) {
      const std::size_t n = std::min(batch_size, order.size() - start);
      Eigen::MatrixXd batch(d, static_cast<Eigen::Index>(n));
      for (std::size_t i = 0; i < n; ++i)
        batch.col(static_cast<Eigen::Index>(i)) = data.sample(order[start + i]);
      const double loss = batch_loss(result.params, batch, config.decoder);
      const AeParams grads = backprop_grads(result.params, batch, config.decoder);
      adam_step(result.params, grads, adam);
      if (!result.params.all_finite()) throw NonFiniteError("train_autoencoder: parameters diverged");
      if (on_batch) on_batch(result.batch_losses.size(), loss);
      result.batch_losses.push_back(loss);
    }
  }
  return result;
}

EncoderModel::EncoderModel(Eigen::MatrixXd W, Eigen::VectorXd b, EncoderProvenance provenance)
    : W_(std::move(W)), b_(std::move(b)), provenance_(provenance) {
  if (W_.rows() == 0 || W_.cols() == 0 || b_.size() != W_.rows())
    throw ShapeError("encoder weight/bias shapes are inconsistent");
}

EncoderModel EncoderModel::from_params(const AeParams& params, EncoderProvenance provenance) {
  params.check_shapes();
  return EncoderModel(params.W, params.b, provenance);
}

Eigen::VectorXd EncoderModel::encode(VectorCRef x) const {
  if (x.size() != input_dim())
    throw ShapeError("encode: input has " + std::to_string(x.size()) + " values, expected " +
                     std::to_string(input_dim()));
  return (W_ * x + b_).cwiseMax(0.0);
}

std::string serialize_encoder(const EncoderModel& model) {
  BinaryWriter w;
  w.magic(kEncoderMagic);
  w.u32(kEncoderVersion);
  w.u64(model.provenance().init_seed);
  w.u64(model.provenance().shuffle_seed);
  w.u64(model.provenance().train_set_hash);
  w.matrix(model.weights());
  w.vector(model.bias());
  return w.finish();
}

EncoderModel deserialize_encoder(std::string bytes) {
  BinaryReader r(std::move(bytes));
  r.expect_magic(kEncoderMagic);
  if (const auto version = r.u32(); version != kEncoderVersion)
    throw ModelFormatError("unsupported encoder version " + std::to_string(version));
  EncoderProvenance prov;
  prov.init_seed = r.u64();
  prov.shuffle_seed = r.u64();
  prov.train_set_hash = r.u64();
  Eigen::MatrixXd W = r.matrix();
  Eigen::VectorXd b = r.vector();
  r.expect_end();
  if (b.size() != W.rows()) throw ModelFormatError("encoder bias/weight shape mismatch");
  return EncoderModel(std::move(W), std::move(b), prov);
}

void save_encoder(const EncoderModel& model, const std::filesystem::path& path) {
  write_bytes(path, serialize_encoder(model));
}

EncoderModel load_encoder(const std::filesystem::path& path) {
  return deserialize_encoder(read_bytes(path));
}

}  // namespace bearingmon
