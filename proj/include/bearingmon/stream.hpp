#pragma once

// Online monitoring of one raw snapshot stream: feature extraction, OSELM
// training until convergence, then per-snapshot verdicts against
// T = K (mu_t + sigma_t).

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "bearingmon/anomaly.hpp"
#include "bearingmon/autoencoder.hpp"
#include "bearingmon/harness.hpp"
#include "bearingmon/oselm.hpp"

namespace bearingmon {

struct StreamConfig {
  FeatureMode mode = FeatureMode::automatic;
  std::optional<EncoderModel> encoder;  // required in auto mode
  OselmConfig oselm;
  double K = 10.0;
  Eigen::Index snapshot_length = kSnapshotRows;

  void validate() const;
};

struct StreamRecord {
  std::size_t index = 0;
  SamplePhase phase = SamplePhase::init_batch;
  double deviation = 0.0;
  std::optional<double> T;  // set once the model has converged
  bool flag = false;        // inference sample above T
};

// One JSON object per line:
// {"index":12,"phase":"inference","deviation":0.01,"T":0.2,"flag":false}
std::string format_record(const StreamRecord& record);

class StreamSession {
 public:
  explicit StreamSession(StreamConfig config);

  // Records for every snapshot whose deviation became known. The first
  // init_batch - 1 snapshots produce nothing until the batch completes.
  std::vector<StreamRecord> push(VectorCRef raw);

  // Parses one line of whitespace-separated numbers. A malformed line
  // (bad token, wrong length, non-finite value, zero variance) is counted
  // and skipped without touching the model; the reason is kept in
  // last_error().
  std::vector<StreamRecord> push_line(std::string_view line);

  std::size_t accepted() const { return accepted_; }
  std::size_t malformed() const { return malformed_; }
  const std::string& last_error() const { return last_error_; }
  Phase phase() const;
  std::optional<Threshold> current_threshold() const { return threshold_; }
  const StreamConfig& config() const { return config_; }

  // Checkpoint: "BMSESSN1" | u32 version | u64 encoder fingerprint | session
  // counters | pending init samples | model + monitor | training stats |
  // checksum. Restoring requires the same encoder.
  std::string checkpoint() const;
  static StreamSession restore(std::string bytes, StreamConfig config);
  void save_checkpoint(const std::filesystem::path& path) const;
  static StreamSession load_checkpoint(const std::filesystem::path& path, StreamConfig config);

 private:
  Eigen::VectorXd features(VectorCRef raw) const;

  StreamConfig config_;
  OselmModel model_;
  ConvergenceMonitor monitor_;
  DeviationStats stats_;
  std::vector<Eigen::VectorXd> pending_;
  std::optional<Threshold> threshold_;
  std::size_t accepted_ = 0;
  std::size_t malformed_ = 0;
  std::string last_error_;
};

// Reads lines from `in` until EOF, writing records to `out` and warnings to
// `log`. Returns the number of malformed lines.
std::size_t run_stream(std::istream& in, std::ostream& out, std::ostream& log, StreamSession& session);

struct ServeOptions {
  std::string host = "127.0.0.1";
  std::uint16_t port = 0;
  // Stop after this many connections (0 = serve forever).
  std::size_t max_connections = 0;
  // Per-connection checkpoints <prefix>.<n> written on disconnect.
  std::optional<std::filesystem::path> checkpoint_prefix;
};

// Line protocol over TCP: each connection gets a fresh session; records go
// back on the same connection. `on_listen` receives the bound port.
void serve_tcp(const StreamConfig& config, const ServeOptions& options, std::ostream& log,
               const std::function<void(std::uint16_t)>& on_listen = {});

}  // namespace bearingmon
