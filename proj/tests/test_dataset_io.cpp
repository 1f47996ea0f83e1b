#include "bearingmon/dataset_io.hpp"

#include <algorithm>
#include <random>
#include <set>
#include <string>

#include <gtest/gtest.h>

#include "bearingmon/binary_io.hpp"
#include "bearingmon/errors.hpp"
#include "test_util.hpp"

namespace bearingmon {
namespace {

using testing::TempDir;
using testing::write_text;

std::string numeric_rows(int rows, int cols, double start = 0.0) {
  std::string text;
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      if (c) text += '\t';
      text += format_double(start + r * 0.001 - c * 0.5);
    }
    text += '\n';
  }
  return text;
}

template <typename Fn>
std::string error_message(Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.what();
  }
  return {};
}

TEST(SnapshotParse, ToyFixtureWithRelaxedRowCheck) {
  const ParseOptions relaxed{std::nullopt};
  const Eigen::MatrixXd m = parse_snapshot_text(numeric_rows(10, 4), 4, relaxed);
  EXPECT_EQ(m.rows(), 10);
  EXPECT_EQ(m.cols(), 4);
  EXPECT_DOUBLE_EQ(m(3, 2), 0.003 - 1.0);
}

TEST(SnapshotParse, FullSizeDualAxisFile) {
  const RawSnapshot s =
      parse_snapshot(numeric_rows(20480, 8), "2003.10.22.12.06.24", channel_count(1));
  EXPECT_EQ(s.channels.rows(), 20480);
  EXPECT_EQ(s.channels.cols(), 8);
  EXPECT_EQ(format_snapshot_timestamp(s.timestamp), "2003.10.22.12.06.24");
}

TEST(SnapshotParse, ShortFileIsRejected) {
  const std::string msg = error_message([] { parse_snapshot_text(numeric_rows(20479, 4), 4); });
  EXPECT_NE(msg.find("short file"), std::string::npos) << msg;
}

TEST(SnapshotParse, LongFileIsRejected) {
  const ParseOptions opts{12};
  const std::string msg = error_message([&] { parse_snapshot_text(numeric_rows(13, 4), 4, opts); });
  EXPECT_NE(msg.find("long file"), std::string::npos) << msg;
}

TEST(SnapshotParse, WrongColumnCount) {
  const ParseOptions relaxed{std::nullopt};
  std::string text = numeric_rows(5, 4) + "1\t2\t3\n";
  const std::string msg = error_message([&] { parse_snapshot_text(text, 4, relaxed); });
  EXPECT_NE(msg.find("wrong column count on line 6"), std::string::npos) << msg;
}

TEST(SnapshotParse, NonNumericToken) {
  const ParseOptions relaxed{std::nullopt};
  for (const std::string bad : {"1\t2\tx\t4\n", "1\t2\t3abc\t4\n", "1\t2\tnan\t4\n"}) {
    EXPECT_THROW(parse_snapshot_text(numeric_rows(3, 4) + bad, 4, relaxed), DataError) << bad;
  }
}

TEST(SnapshotParse, BlankLinesAndCrlfAreTolerated) {
  const ParseOptions relaxed{std::nullopt};
  const Eigen::MatrixXd m = parse_snapshot_text("1 2\r\n\n3\t4\r\n", 2, relaxed);
  ASSERT_EQ(m.rows(), 2);
  EXPECT_EQ(m(1, 1), 4.0);
}

TEST(SnapshotParse, BadFilenameIsRejected) {
  EXPECT_THROW(parse_snapshot(numeric_rows(10, 4), "snapshot.txt", 4, {std::nullopt}), DataError);
}

TEST(SnapshotParse, FormatParseRoundTripIsExact) {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> normal(0.0, 0.3);
  for (int trial = 0; trial < 20; ++trial) {
    Eigen::MatrixXd m(50, 4);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = normal(rng) * std::pow(10.0, trial % 7 - 3);
    const Eigen::MatrixXd back = parse_snapshot_text(format_snapshot_text(m), 4, {std::nullopt});
    EXPECT_TRUE(back == m);
  }
}

TEST(Timestamp, ParsesAndFormats) {
  const auto ts = parse_snapshot_timestamp("2004.02.12.10.32.39");
  ASSERT_TRUE(ts);
  EXPECT_EQ(format_snapshot_timestamp(*ts), "2004.02.12.10.32.39");
  EXPECT_LT(*ts, *parse_snapshot_timestamp("2004.02.12.10.42.39"));
}

TEST(Timestamp, RejectsMalformedNames) {
  for (const char* name : {"2004.02.12.10.32", "2004.13.12.10.32.39", "2004.02.30.10.32.39",
                           "2004.02.12.24.32.39", "2004-02-12-10-32-39", "2004.02.12.10.32.3x",
                           "manifest.txt"})
    EXPECT_FALSE(parse_snapshot_timestamp(name)) << name;
}

TEST(ScanDataset, SortsByTimestamp) {
  TempDir dir("scan");
  for (const char* name : {"2004.02.12.10.52.39", "2004.02.12.10.32.39", "2004.02.12.10.42.39"})
    write_text(dir / name, "0\n");
  const auto refs = scan_dataset(dir.path(), 2);
  ASSERT_EQ(refs.size(), 3u);
  EXPECT_EQ(refs[0].path.filename(), "2004.02.12.10.32.39");
  EXPECT_EQ(refs[2].path.filename(), "2004.02.12.10.52.39");
}

TEST(ScanDataset, EmptyDirectory) {
  TempDir dir("scan_empty");
  const std::string msg = error_message([&] { scan_dataset(dir.path(), 1); });
  EXPECT_NE(msg.find("zero files"), std::string::npos) << msg;
}

TEST(ScanDataset, MissingDirectory) {
  TempDir dir("scan_missing");
  EXPECT_THROW(scan_dataset(dir / "nope", 1), DataError);
}

TEST(ScanDataset, ListsRejectedFilenames) {
  TempDir dir("scan_reject");
  write_text(dir / "2004.02.12.10.32.39", "0\n");
  write_text(dir / "notes.txt", "");
  write_text(dir / "2004.02.12.10.32", "");
  const std::string msg = error_message([&] { scan_dataset(dir.path(), 1); });
  EXPECT_NE(msg.find("notes.txt"), std::string::npos) << msg;
  EXPECT_NE(msg.find("2004.02.12.10.32"), std::string::npos) << msg;
}

TEST(BearingSelector, ChannelMapping) {
  EXPECT_EQ((BearingSelector{2, 3}).primary_column(), 2);
  EXPECT_EQ((BearingSelector{1, 1}).primary_column(), 0);
  EXPECT_EQ((BearingSelector{1, 4}).primary_column(), 6);
  EXPECT_EQ((BearingSelector{1, 2}).channel_columns(), (std::vector<int>{2, 3}));
  EXPECT_EQ((BearingSelector{3, 4}).channel_columns(), (std::vector<int>{3}));
}

TEST(BearingSelector, ParseAndLabel) {
  EXPECT_EQ(BearingSelector::parse("2.1"), (BearingSelector{2, 1}));
  EXPECT_EQ(BearingSelector::parse("D3B4").label(), "D3B4");
  EXPECT_THROW(BearingSelector::parse("4.1"), ConfigError);
  EXPECT_THROW(BearingSelector::parse("D1B5"), ConfigError);
  EXPECT_THROW(BearingSelector::parse("bearing"), ConfigError);
}

TEST(ExtractSeries, TakesXColumn) {
  RawSnapshot s;
  s.channels = Eigen::MatrixXd::Zero(6, 8);
  for (int c = 0; c < 8; ++c) s.channels.col(c).setConstant(c);
  EXPECT_TRUE((extract_bearing_series(s, {1, 4}).array() == 6.0).all());
  EXPECT_THROW(extract_bearing_series(s, {2, 1}), ShapeError);
}

TEST(Manifest, ReferenceTable) {
  const DatasetManifest m = reference_manifest();
  ASSERT_EQ(m.entries.size(), 12u);
  EXPECT_NO_THROW(m.validate());
  EXPECT_EQ(m.entry({1, 1}).sample_count, 2156u);
  EXPECT_EQ(m.entry({2, 4}).sample_count, 984u);
  EXPECT_EQ(m.entry({3, 2}).sample_count, 6324u);
  std::set<std::string> faulty;
  for (const auto& e : m.entries)
    if (is_faulty(e.truth)) faulty.insert(e.bearing.label());
  EXPECT_EQ(faulty, (std::set<std::string>{"D1B3", "D1B4", "D2B1", "D3B3"}));
  EXPECT_EQ(m.entry({1, 3}).truth, GroundTruth::inner_race);
  EXPECT_EQ(m.entry({1, 4}).truth, GroundTruth::roller_element);
  EXPECT_EQ(m.entry({3, 3}).truth, GroundTruth::outer_race);
}

TEST(Manifest, TextRoundTrip) {
  DatasetManifest m = reference_manifest();
  m.roots = {{1, "/data/a"}, {2, "/data/b"}, {3, "/data/c"}};
  m.snapshot_rows.reset();
  const DatasetManifest back = parse_manifest(format_manifest(m), "/unused");
  EXPECT_EQ(back.roots, m.roots);
  EXPECT_FALSE(back.snapshot_rows);
}

TEST(Manifest, RelativeRootsResolveAgainstFile) {
  const DatasetManifest m = parse_manifest("dataset.2.root = two\nsnapshot.rows = 2045\n", "/base");
  EXPECT_EQ(m.roots.at(2), std::filesystem::path("/base/two"));
  EXPECT_EQ(*m.snapshot_rows, 2045);
}

TEST(Manifest, RejectsBadInput) {
  EXPECT_THROW(parse_manifest("bearing.1.1 = outer-race\n", "/"), ConfigError);
  EXPECT_THROW(parse_manifest("dataset.2.channels = 8\n", "/"), ConfigError);
  EXPECT_THROW(parse_manifest("nonsense\n", "/"), ConfigError);
  EXPECT_THROW(parse_manifest("colour = blue\n", "/"), ConfigError);
  DatasetManifest dup = reference_manifest();
  dup.entries[5] = dup.entries[4];
  EXPECT_THROW(dup.validate(), ConfigError);
}

TEST(Manifest, DefaultArchiveLayout) {
  TempDir dir("layout");
  const DatasetManifest m = manifest_for_root(dir.path());
  EXPECT_EQ(m.roots.at(1), dir / "1st_test");
  EXPECT_EQ(m.roots.at(3), dir / "3rd_test");
}

TEST(LooFolds, TwelveDisjointFolds) {
  const auto folds = make_loo_folds(reference_manifest());
  ASSERT_EQ(folds.size(), 12u);
  std::set<BearingSelector> tests;
  for (const auto& f : folds) {
    EXPECT_EQ(f.train.size(), 11u);
    EXPECT_EQ(std::count(f.train.begin(), f.train.end(), f.test), 0);
    std::set<BearingSelector> all(f.train.begin(), f.train.end());
    all.insert(f.test);
    EXPECT_EQ(all.size(), 12u);
    tests.insert(f.test);
  }
  EXPECT_EQ(tests.size(), 12u);
  const auto& d1b1 = folds.front();
  EXPECT_EQ(d1b1.test, (BearingSelector{1, 1}));
  EXPECT_NE(std::find(d1b1.train.begin(), d1b1.train.end(), BearingSelector{3, 4}), d1b1.train.end());
}

TEST(LooFolds, RejectsWrongManifestSize) {
  DatasetManifest m = reference_manifest();
  m.entries.pop_back();
  EXPECT_THROW(make_loo_folds(m), ConfigError);
}

}  // namespace
}  // namespace bearingmon
