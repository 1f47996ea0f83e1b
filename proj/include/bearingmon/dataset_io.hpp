#pragma once

// NASA IMS bearing data: snapshot files, bearing/channel mapping, the
// 12-bearing manifest and leave-one-out folds.

#include <chrono>
#include <compare>
#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

namespace bearingmon {

inline constexpr Eigen::Index kSnapshotRows = 20480;

using Timestamp = std::chrono::sys_seconds;

enum class GroundTruth { healthy, inner_race, roller_element, outer_race };

std::string_view to_string(GroundTruth truth);
GroundTruth parse_ground_truth(std::string_view text);
inline bool is_faulty(GroundTruth truth) { return truth != GroundTruth::healthy; }

// Number of accelerometer columns in a snapshot file of the given test.
int channel_count(int dataset_id);

struct BearingSelector {
  int dataset_id = 1;
  int bearing_id = 1;

  // Columns carrying this bearing: {2k-2, 2k-1} (X, Y) for dataset 1,
  // {k-1} for datasets 2 and 3.
  std::vector<int> channel_columns() const;
  // The X-axis column, the one the pipeline consumes.
  int primary_column() const;
  // "D1B3"
  std::string label() const;

  void validate() const;
  // Accepts "1.3" or "D1B3".
  static BearingSelector parse(std::string_view text);

  auto operator<=>(const BearingSelector&) const = default;
};

struct RawSnapshot {
  Timestamp timestamp{};
  Eigen::MatrixXd channels;  // rows = time steps, cols = channels
};

struct SnapshotRef {
  std::filesystem::path path;
  Timestamp timestamp{};
};

// Filenames follow YYYY.MM.DD.HH.MM.SS.
std::optional<Timestamp> parse_snapshot_timestamp(std::string_view filename);
std::string format_snapshot_timestamp(Timestamp ts);

// Lists the snapshot files under `root` in timestamp order. Throws DataError
// for a missing directory, an empty one, or any file whose name does not
// match the timestamp pattern (the message lists the offenders).
std::vector<SnapshotRef> scan_dataset(const std::filesystem::path& root, int dataset_id);

struct ParseOptions {
  // nullopt accepts any row count (fixtures and reduced-length test data).
  std::optional<Eigen::Index> expected_rows = kSnapshotRows;
};

Eigen::MatrixXd parse_snapshot_text(std::string_view text, int expected_channels,
                                    const ParseOptions& options = {});
RawSnapshot parse_snapshot(std::string_view file_bytes, std::string_view filename,
                           int expected_channels, const ParseOptions& options = {});
RawSnapshot read_snapshot(const SnapshotRef& ref, int expected_channels,
                          const ParseOptions& options = {});

// Tab-separated rows using the shortest round-trip decimal form, so that
// parse_snapshot_text(format_snapshot_text(m)) == m exactly.
std::string format_snapshot_text(const Eigen::MatrixXd& channels);
void write_snapshot(const std::filesystem::path& dir, const RawSnapshot& snapshot);

Eigen::VectorXd extract_bearing_series(const RawSnapshot& snapshot, const BearingSelector& bearing);

struct ManifestEntry {
  BearingSelector bearing;
  std::size_t sample_count = 0;
  GroundTruth truth = GroundTruth::healthy;
};

struct DatasetManifest {
  std::vector<ManifestEntry> entries;
  std::map<int, std::filesystem::path> roots;
  std::optional<Eigen::Index> snapshot_rows = kSnapshotRows;

  // Exactly 12 distinct bearings covering datasets 1-3, ground truth as in
  // the reference table.
  void validate() const;
  const ManifestEntry& entry(const BearingSelector& bearing) const;
};

// The reference 12-bearing table with its documented sample counts.
DatasetManifest reference_manifest();

// Key-value manifest:
//   dataset.<id>.root = <dir>        (relative paths resolve against the file)
//   snapshot.rows = 20480 | any
//   bearing.<id>.<k> = healthy | inner-race | roller-element | outer-race
// Bearing lines are optional; when present they must agree with the
// reference table.
DatasetManifest parse_manifest(std::string_view text, const std::filesystem::path& base_dir);
DatasetManifest load_manifest(const std::filesystem::path& file);
std::string format_manifest(const DatasetManifest& manifest);

// Uses <root>/manifest.txt when present, otherwise the public archive layout
// <root>/1st_test, <root>/2nd_test, <root>/3rd_test.
DatasetManifest manifest_for_root(const std::filesystem::path& root);

struct LooFold {
  BearingSelector test;
  std::vector<BearingSelector> train;
};

std::vector<LooFold> make_loo_folds(const DatasetManifest& manifest);

}  // namespace bearingmon
