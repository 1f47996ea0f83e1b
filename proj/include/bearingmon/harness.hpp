#pragma once

// End-to-end leave-one-out evaluation: autoencoder training per fold, online
// OSELM training and inference per bearing, K calibration on the training
// bearings, and the run-level accuracy curve.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "bearingmon/anomaly.hpp"
#include "bearingmon/autoencoder.hpp"
#include "bearingmon/dataset_io.hpp"
#include "bearingmon/oselm.hpp"
#include "bearingmon/synth.hpp"

namespace bearingmon {

enum class FeatureMode { automatic, handcrafted };

std::string_view to_string(FeatureMode mode);  // "auto" / "handcrafted"
FeatureMode parse_feature_mode(std::string_view text);

// Everything the pipeline needs from one bearing, computed once per snapshot.
struct BearingData {
  BearingSelector bearing;
  GroundTruth truth = GroundTruth::healthy;
  std::vector<Timestamp> timestamps;
  Eigen::MatrixXf averaged;     // (raw length / 5) x snapshots
  Eigen::MatrixXd handcrafted;  // 5 x snapshots
  std::uint64_t content_hash = 0;

  std::size_t size() const { return timestamps.size(); }
};

// Builds the per-snapshot averaged vectors and handcrafted features from the
// raw X-axis series of one bearing.
BearingData make_bearing_data(const BearingSelector& bearing, GroundTruth truth,
                              std::vector<Timestamp> timestamps,
                              const std::vector<Eigen::VectorXd>& raw);

class BearingLibrary {
 public:
  BearingLibrary(DatasetManifest manifest, std::vector<BearingData> bearings);

  const DatasetManifest& manifest() const { return manifest_; }
  const BearingData& bearing(const BearingSelector& id) const;

 private:
  DatasetManifest manifest_;
  std::vector<BearingData> bearings_;
};

// Parses every snapshot listed by the manifest roots (files of one test are
// parsed once and split across its bearings). Sample counts in the returned
// manifest are the counts actually found.
BearingLibrary load_ims_library(const DatasetManifest& manifest, unsigned threads = 1,
                                std::ostream* log = nullptr);
BearingLibrary make_synthetic_library(const SyntheticFleet& fleet, unsigned threads = 1);

struct PipelineConfig {
  FeatureMode mode = FeatureMode::automatic;
  TrainConfig autoencoder;  // seeds are derived per fold from master_seed
  OselmConfig oselm;        // seed is derived per bearing from master_seed
  std::vector<double> k_grid = default_k_grid();
  std::optional<double> fixed_k;
  std::uint64_t master_seed = 1;
  unsigned threads = 1;

  void validate() const;
};

std::uint64_t oselm_seed(const PipelineConfig& config, const BearingSelector& bearing);
TrainConfig fold_train_config(const PipelineConfig& config, const BearingSelector& test);

// Classifier input for every snapshot of a bearing: encoder codes of the
// averaged vectors (auto) or the handcrafted features. Columns = samples.
Eigen::MatrixXd bearing_features(const BearingData& data, FeatureMode mode,
                                 const EncoderModel* encoder);

struct OnlineRun {
  DeviationTrace trace;
  DeviationStats stats;  // init batch through the convergence sample
  std::size_t convergence_length = 0;
  std::vector<double> delta_beta;  // one per sequential update
  OselmModel model;
  ConvergenceMonitor monitor;
  double inference_seconds = 0.0;
  std::size_t inference_samples = 0;
};

// Init batch on the first samples, sequential updates until the monitor
// fires, prediction for the rest. Training deviations are a-priori
// (measured before the sample's own update). Throws ConvergenceError, with
// the tail of the delta-beta trace, if the stream ends first.
OnlineRun run_online(const Eigen::MatrixXd& features, const OselmConfig& config,
                     std::string_view label);

BearingStats summarize(const OnlineRun& run, const BearingData& data);

// Hooks for tests; calls may come from several fold threads at once.
class PipelineObserver {
 public:
  virtual ~PipelineObserver() = default;
  virtual void on_encoder_training(const LooFold& /*fold*/,
                                   std::span<const BearingSelector> /*bearings*/) {}
  virtual void on_calibration_run(const LooFold& /*fold*/, const BearingSelector& /*bearing*/) {}
  virtual void on_test_run(const LooFold& /*fold*/, const BearingSelector& /*bearing*/) {}
};

struct StageTimings {
  double autoencoder_seconds = 0.0;
  double calibration_seconds = 0.0;
  double test_seconds = 0.0;
  double inference_us_per_sample = 0.0;
};

struct FoldReport {
  BearingSelector test;
  GroundTruth truth = GroundTruth::healthy;
  FeatureMode mode = FeatureMode::automatic;
  std::optional<EncoderProvenance> encoder;
  std::string encoder_bytes;  // serialized encoder, empty in handcrafted mode
  std::string oselm_bytes;    // final OSELM state of the test bearing
  std::size_t stream_length = 0;
  std::size_t convergence_length = 0;
  double mean = 0.0;
  double stddev = 0.0;
  bool fixed_k = false;
  Calibration calibration;  // calibration.K is the K applied to the test bearing
  std::vector<BearingStats> calibration_set;
  std::vector<std::size_t> calibration_convergence;
  BearingVerdict verdict;
  DeviationTrace trace;
  bool correct = false;
  StageTimings timings;

  BearingStats stats() const;
};

// One epoch (by default) on the averaged snapshots of the fold's training
// bearings, seeded from the master seed and the test bearing.
EncoderModel train_fold_encoder(const LooFold& fold, const BearingLibrary& library,
                                const PipelineConfig& config);

// Calibrates K on the fold's training bearings (encoded with `encoder` in
// auto mode). Fills the calibration fields of `report`.
Calibration calibrate_fold_k(const LooFold& fold, const BearingLibrary& library,
                             const PipelineConfig& config, const EncoderModel* encoder,
                             FoldReport* report = nullptr, PipelineObserver* observer = nullptr);

FoldReport run_fold(const LooFold& fold, const BearingLibrary& library, const PipelineConfig& config,
                    PipelineObserver* observer = nullptr);

struct RunReport {
  FeatureMode mode = FeatureMode::automatic;
  std::uint64_t master_seed = 0;
  std::vector<FoldReport> folds;
  std::size_t correct = 0;
  std::vector<AccuracyPoint> curve;  // test-bearing accuracy over the K grid

  double accuracy() const { return folds.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(folds.size()); }
};

// Runs the requested folds (all 12 when `only` is empty) on up to
// config.threads threads. A failing fold rethrows with its bearing label.
RunReport run_all(const BearingLibrary& library, const PipelineConfig& config,
                  std::span<const BearingSelector> only = {}, PipelineObserver* observer = nullptr);

struct ReportFormats {
  bool csv = true;
  bool structured = true;
};

// Writes verdicts.csv, accuracy_vs_k.csv, deviations_<bearing>.csv,
// fold_<bearing>.json, run.json, models/ and timings.json into `dir`.
// Everything except timings.json is a deterministic function of the report.
void emit_report(const RunReport& report, const std::filesystem::path& dir,
                 const ReportFormats& formats = {});

std::string fold_report_json(const FoldReport& fold);

}  // namespace bearingmon
