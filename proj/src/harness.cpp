#include "bearingmon/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ostream>
#include <sstream>

#include "bearingmon/binary_io.hpp"
#include "bearingmon/errors.hpp"
#include "bearingmon/features.hpp"
#include "bearingmon/rng.hpp"
#include "parallel.hpp"

namespace bearingmon {

namespace {

constexpr std::uint64_t kAeInitTag = 0x41454930;
constexpr std::uint64_t kAeShuffleTag = 0x41455330;
constexpr std::uint64_t kOselmTag = 0x4f534c4d;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::uint64_t bearing_tag(const BearingSelector& b) {
  return static_cast<std::uint64_t>(b.dataset_id) * 16 + static_cast<std::uint64_t>(b.bearing_id);
}

// Fills BearingData column by column; columns may be written concurrently.
class BearingDataBuilder {
 public:
  BearingDataBuilder(const BearingSelector& bearing, GroundTruth truth,
                     std::vector<Timestamp> timestamps, Eigen::Index raw_length) {
    if (raw_length % kAveragingWindow != 0)
      throw ShapeError("snapshot length " + std::to_string(raw_length) +
                       " is not a multiple of the averaging window");
    const auto n = static_cast<Eigen::Index>(timestamps.size());
    data_.bearing = bearing;
    data_.truth = truth;
    data_.timestamps = std::move(timestamps);
    data_.averaged.resize(raw_length / kAveragingWindow, n);
    data_.handcrafted.resize(HandcraftedVector::kSize, n);
    raw_length_ = raw_length;
  }

  void set(std::size_t index, VectorCRef raw) {
    if (raw.size() != raw_length_) throw ShapeError("snapshot length changed within a bearing");
    const auto col = static_cast<Eigen::Index>(index);
    data_.averaged.col(col) = average_downsample(raw).cast<float>();
    try {
      data_.handcrafted.col(col) = handcrafted_vector(raw).to_vector();
    } catch (const ZeroVarianceError&) {
      throw ZeroVarianceError("bearing " + data_.bearing.label() + ", snapshot " +
                              format_snapshot_timestamp(data_.timestamps[index]) +
                              ": zero variance (dead sensor?)");
    }
  }

  BearingData finish() {
    std::uint64_t h = fnv1a(data_.bearing.label());
    h = fnv1a(std::string_view(reinterpret_cast<const char*>(data_.averaged.data()),
                               sizeof(float) * static_cast<std::size_t>(data_.averaged.size())),
              h);
    h = fnv1a(std::string_view(reinterpret_cast<const char*>(data_.handcrafted.data()),
                               sizeof(double) * static_cast<std::size_t>(data_.handcrafted.size())),
              h);
    data_.content_hash = h;
    return std::move(data_);
  }

 private:
  BearingData data_;
  Eigen::Index raw_length_ = 0;
};

std::uint64_t train_set_hash(std::span<const BearingSelector> train, const BearingLibrary& library) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& b : train) h = mix64(h ^ library.bearing(b).content_hash);
  return h;
}

}  // namespace

std::string_view to_string(FeatureMode mode) {
  return mode == FeatureMode::automatic ? "auto" : "handcrafted";
}

FeatureMode parse_feature_mode(std::string_view text) {
  if (text == "auto") return FeatureMode::automatic;
  if (text == "handcrafted") return FeatureMode::handcrafted;
  throw ConfigError("feature mode must be auto or handcrafted");
}

BearingData make_bearing_data(const BearingSelector& bearing, GroundTruth truth,
                              std::vector<Timestamp> timestamps,
                              const std::vector<Eigen::VectorXd>& raw) {
  if (raw.size() != timestamps.size()) throw ShapeError("timestamp/snapshot count mismatch");
  if (raw.empty()) throw DataError("bearing " + bearing.label() + " has no snapshots");
  BearingDataBuilder builder(bearing, truth, std::move(timestamps), raw.front().size());
  for (std::size_t i = 0; i < raw.size(); ++i) builder.set(i, raw[i]);
  return builder.finish();
}

BearingLibrary::BearingLibrary(DatasetManifest manifest, std::vector<BearingData> bearings)
    : manifest_(std::move(manifest)), bearings_(std::move(bearings)) {
  manifest_.validate();
  for (const auto& e : manifest_.entries) bearing(e.bearing);
}

const BearingData& BearingLibrary::bearing(const BearingSelector& id) const {
  for (const auto& b : bearings_)
    if (b.bearing == id) return b;
  throw DataError("no data loaded for bearing " + id.label());
}

BearingLibrary load_ims_library(const DatasetManifest& manifest_in, unsigned threads,
                                std::ostream* log) {
  DatasetManifest manifest = manifest_in;
  manifest.validate();
  std::vector<BearingData> bearings;
  for (int d = 1; d <= 3; ++d) {
    const auto root = manifest.roots.find(d);
    if (root == manifest.roots.end())
      throw DataError("manifest has no root for dataset " + std::to_string(d));
    const auto refs = scan_dataset(root->second, d);
    if (log) *log << "dataset " << d << ": " << refs.size() << " snapshot files\n";
    const int channels = channel_count(d);

    ParseOptions options{manifest.snapshot_rows};
    const RawSnapshot first = read_snapshot(refs.front(), channels, options);
    options.expected_rows = first.channels.rows();

    std::vector<Timestamp> stamps;
    for (const auto& r : refs) stamps.push_back(r.timestamp);
    std::vector<BearingDataBuilder> builders;
    std::vector<BearingSelector> selectors;
    for (auto& e : manifest.entries) {
      if (e.bearing.dataset_id != d) continue;
      e.sample_count = refs.size();
      selectors.push_back(e.bearing);
      builders.emplace_back(e.bearing, e.truth, stamps, first.channels.rows());
    }
    detail::parallel_for(refs.size(), threads, [&](std::size_t i) {
      const RawSnapshot snap = i == 0 ? first : read_snapshot(refs[i], channels, options);
      for (std::size_t k = 0; k < selectors.size(); ++k)
        builders[k].set(i, extract_bearing_series(snap, selectors[k]));
    });
    for (auto& b : builders) bearings.push_back(b.finish());
  }
  return BearingLibrary(std::move(manifest), std::move(bearings));
}

BearingLibrary make_synthetic_library(const SyntheticFleet& fleet, unsigned threads) {
  using namespace std::chrono;
  std::vector<BearingData> bearings(fleet.manifest.entries.size());
  detail::parallel_for(bearings.size(), threads, [&](std::size_t k) {
    const auto& entry = fleet.manifest.entries[k];
    const SyntheticConfig& sc = fleet.bearings[k];
    std::vector<Timestamp> stamps;
    const sys_seconds start = sys_days{year{2003 + entry.bearing.dataset_id} / 1 / 1};
    for (std::size_t i = 0; i < sc.n_snapshots; ++i)
      stamps.push_back(start + minutes{10 * static_cast<long>(i)});
    BearingDataBuilder builder(entry.bearing, entry.truth, std::move(stamps),
                               static_cast<Eigen::Index>(sc.snapshot_length));
    for (std::size_t i = 0; i < sc.n_snapshots; ++i) builder.set(i, synth_snapshot(sc, i));
    bearings[k] = builder.finish();
  });
  return BearingLibrary(fleet.manifest, std::move(bearings));
}

void PipelineConfig::validate() const {
  autoencoder.validate();
  oselm.validate();
  if (k_grid.empty()) throw ConfigError("K grid is empty");
  for (std::size_t i = 1; i < k_grid.size(); ++i)
    if (!(k_grid[i] > k_grid[i - 1])) throw ConfigError("K grid must be ascending");
  if (fixed_k && !(*fixed_k > 0.0)) throw ConfigError("fixed K must be positive");
  const Eigen::Index expected_input =
      mode == FeatureMode::automatic ? autoencoder.code_dim : HandcraftedVector::kSize;
  if (oselm.input_dim != expected_input)
    throw ConfigError("OSELM input dimension must match the feature dimension (" +
                      std::to_string(expected_input) + ")");
}

std::uint64_t oselm_seed(const PipelineConfig& config, const BearingSelector& bearing) {
  return derive_seed(config.master_seed, {kOselmTag, bearing_tag(bearing)});
}

TrainConfig fold_train_config(const PipelineConfig& config, const BearingSelector& test) {
  TrainConfig tc = config.autoencoder;
  tc.init_seed = derive_seed(config.master_seed, {kAeInitTag, bearing_tag(test)});
  tc.shuffle_seed = derive_seed(config.master_seed, {kAeShuffleTag, bearing_tag(test)});
  return tc;
}

Eigen::MatrixXd bearing_features(const BearingData& data, FeatureMode mode,
                                 const EncoderModel* encoder) {
  if (mode == FeatureMode::handcrafted) return data.handcrafted;
  if (!encoder) throw ConfigError("auto feature mode needs a trained encoder");
  if (encoder->input_dim() != data.averaged.rows())
    throw ShapeError("encoder expects " + std::to_string(encoder->input_dim()) +
                     "-dim input, bearing " + data.bearing.label() + " has " +
                     std::to_string(data.averaged.rows()));
  const Eigen::MatrixXd x = data.averaged.cast<double>();
  return ((encoder->weights() * x).colwise() + encoder->bias()).cwiseMax(0.0);
}

OnlineRun run_online(const Eigen::MatrixXd& features, const OselmConfig& config,
                     std::string_view label) {
  config.validate();
  const auto n = static_cast<std::size_t>(features.cols());
  if (n <= config.init_batch)
    throw DataError(std::string(label) + ": stream of " + std::to_string(n) +
                    " samples is too short for the initial batch");
  OnlineRun run{{}, {}, 0, {}, OselmModel::init_random(config),
                ConvergenceMonitor(config.tc_percent, config.window), 0.0, 0};

  const auto init = static_cast<Eigen::Index>(config.init_batch);
  run.model.init_batch(features.leftCols(init).transpose());
  for (Eigen::Index i = 0; i < init; ++i) {
    const double dev = run.model.predict(features.col(i)).deviation;
    run.trace.push(dev, SamplePhase::init_batch);
    run.stats.accumulate(dev);
  }

  std::size_t i = config.init_batch;
  for (; i < n && run.model.phase() == Phase::online_training; ++i) {
    const auto x = features.col(static_cast<Eigen::Index>(i));
    const double dev = run.model.predict(x).deviation;
    run.trace.push(dev, SamplePhase::training);
    run.stats.accumulate(dev);
    const double delta = run.model.sequential_update(x);
    run.delta_beta.push_back(delta);
    if (observe(run.model, run.monitor, delta, i)) run.convergence_length = i + 1;
  }
  if (run.model.phase() != Phase::inference) {
    std::ostringstream msg;
    msg << label << ": OSELM did not converge within " << n << " samples (Tc = "
        << config.tc_percent << "%, window " << config.window << "); last delta-beta %:";
    const std::size_t tail = std::min<std::size_t>(run.delta_beta.size(), 20);
    for (std::size_t k = run.delta_beta.size() - tail; k < run.delta_beta.size(); ++k)
      msg << ' ' << format_double(run.delta_beta[k]);
    throw ConvergenceError(msg.str());
  }

  const auto start = Clock::now();
  for (; i < n; ++i) {
    run.trace.push(run.model.predict(features.col(static_cast<Eigen::Index>(i))).deviation,
                   SamplePhase::inference);
    ++run.inference_samples;
  }
  run.inference_seconds = seconds_since(start);
  return run;
}

BearingStats summarize(const OnlineRun& run, const BearingData& data) {
  if (run.convergence_length >= run.trace.size())
    throw DataError(data.bearing.label() + ": converged on the last sample, nothing to infer");
  BearingStats s;
  s.label = data.bearing.label();
  s.mean = run.stats.mean();
  s.stddev = run.stats.stddev();
  s.faulty = is_faulty(data.truth);
  s.max_deviation = 0.0;
  for (std::size_t i = run.convergence_length; i < run.trace.size(); ++i)
    s.max_deviation = std::max(s.max_deviation, run.trace.deviation[i]);
  return s;
}

BearingStats FoldReport::stats() const {
  return {test.label(), mean, stddev, verdict.max_deviation, is_faulty(truth)};
}

EncoderModel train_fold_encoder(const LooFold& fold, const BearingLibrary& library,
                                const PipelineConfig& config) {
  TrainingSet training;
  for (const auto& b : fold.train) {
    if (b == fold.test) throw ConfigError("fold trains on its own test bearing");
    training.add(library.bearing(b).averaged);
  }
  const TrainConfig tc = fold_train_config(config, fold.test);
  const TrainResult trained = train_autoencoder(training, tc);
  return EncoderModel::from_params(
      trained.params, {tc.init_seed, tc.shuffle_seed, train_set_hash(fold.train, library)});
}

Calibration calibrate_fold_k(const LooFold& fold, const BearingLibrary& library,
                             const PipelineConfig& config, const EncoderModel* encoder,
                             FoldReport* report, PipelineObserver* observer) {
  std::vector<BearingStats> set;
  std::vector<std::size_t> convergence;
  for (const auto& b : fold.train) {
    if (b == fold.test) throw ConfigError("fold trains on its own test bearing");
    if (observer) observer->on_calibration_run(fold, b);
    const BearingData& data = library.bearing(b);
    OselmConfig oc = config.oselm;
    oc.seed = oselm_seed(config, b);
    const OnlineRun run = run_online(bearing_features(data, config.mode, encoder), oc, b.label());
    set.push_back(summarize(run, data));
    convergence.push_back(run.convergence_length);
  }
  const Calibration c = calibrate_k(set, config.k_grid);
  if (report) {
    report->calibration_set = std::move(set);
    report->calibration_convergence = std::move(convergence);
  }
  return c;
}

FoldReport run_fold(const LooFold& fold, const BearingLibrary& library, const PipelineConfig& config,
                    PipelineObserver* observer) {
  config.validate();
  FoldReport report;
  report.test = fold.test;
  report.truth = library.manifest().entry(fold.test).truth;
  report.mode = config.mode;

  std::optional<EncoderModel> encoder;
  if (config.mode == FeatureMode::automatic) {
    const auto start = Clock::now();
    if (observer) observer->on_encoder_training(fold, fold.train);
    encoder = train_fold_encoder(fold, library, config);
    report.encoder = encoder->provenance();
    report.encoder_bytes = serialize_encoder(*encoder);
    report.timings.autoencoder_seconds = seconds_since(start);
  }
  const EncoderModel* enc = encoder ? &*encoder : nullptr;

  if (config.fixed_k) {
    report.fixed_k = true;
    report.calibration = {*config.fixed_k, *config.fixed_k, *config.fixed_k, 0.0};
  } else {
    const auto start = Clock::now();
    report.calibration = calibrate_fold_k(fold, library, config, enc, &report, observer);
    report.timings.calibration_seconds = seconds_since(start);
  }

  const auto start = Clock::now();
  if (observer) observer->on_test_run(fold, fold.test);
  const BearingData& data = library.bearing(fold.test);
  OselmConfig oc = config.oselm;
  oc.seed = oselm_seed(config, fold.test);
  const OnlineRun run = run_online(bearing_features(data, config.mode, enc), oc, fold.test.label());
  report.stream_length = data.size();
  report.convergence_length = run.convergence_length;
  report.mean = run.stats.mean();
  report.stddev = run.stats.stddev();
  report.verdict = bearing_verdict(run.trace, threshold(run.stats, report.calibration.K),
                                   run.convergence_length);
  report.trace = run.trace;
  report.correct = (report.verdict.state == HealthState::faulty) == is_faulty(report.truth);
  report.oselm_bytes = serialize_oselm(run.model, run.monitor);
  report.timings.test_seconds = seconds_since(start);
  if (run.inference_samples)
    report.timings.inference_us_per_sample =
        1e6 * run.inference_seconds / static_cast<double>(run.inference_samples);
  return report;
}

RunReport run_all(const BearingLibrary& library, const PipelineConfig& config,
                  std::span<const BearingSelector> only, PipelineObserver* observer) {
  config.validate();
  std::vector<LooFold> folds;
  for (auto& fold : make_loo_folds(library.manifest()))
    if (only.empty() || std::find(only.begin(), only.end(), fold.test) != only.end())
      folds.push_back(std::move(fold));
  if (folds.empty()) throw ConfigError("no folds selected");

  RunReport report;
  report.mode = config.mode;
  report.master_seed = config.master_seed;
  report.folds.resize(folds.size());
  detail::parallel_for(folds.size(), config.threads, [&](std::size_t i) {
    try {
      report.folds[i] = run_fold(folds[i], library, config, observer);
    } catch (const ConvergenceError& e) {
      throw ConvergenceError("fold " + folds[i].test.label() + ": " + e.what());
    } catch (const DataError& e) {
      throw DataError("fold " + folds[i].test.label() + ": " + e.what());
    } catch (const Error& e) {
      throw Error("fold " + folds[i].test.label() + ": " + e.what());
    }
  });

  std::vector<BearingStats> tested;
  for (const auto& f : report.folds) {
    report.correct += f.correct ? 1 : 0;
    tested.push_back(f.stats());
  }
  report.curve = accuracy_vs_k(tested, config.k_grid);
  return report;
}

}  // namespace bearingmon
