#include "bearingmon/dataset_io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iterator>
#include <set>
#include <sstream>

#include "bearingmon/binary_io.hpp"
#include "bearingmon/errors.hpp"

namespace bearingmon {

namespace fs = std::filesystem;
using namespace std::chrono;

namespace {

constexpr int kDatasets = 3;
constexpr int kBearingsPerDataset = 4;

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

bool parse_int(std::string_view s, int& out) {
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc{} && p == s.data() + s.size();
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

GroundTruth reference_truth(const BearingSelector& b) {
  if (b.dataset_id == 1 && b.bearing_id == 3) return GroundTruth::inner_race;
  if (b.dataset_id == 1 && b.bearing_id == 4) return GroundTruth::roller_element;
  if (b.dataset_id == 2 && b.bearing_id == 1) return GroundTruth::outer_race;
  if (b.dataset_id == 3 && b.bearing_id == 3) return GroundTruth::outer_race;
  return GroundTruth::healthy;
}

std::size_t reference_count(int dataset_id) {
  switch (dataset_id) {
    case 1: return 2156;
    case 2: return 984;
    default: return 6324;
  }
}

}  // namespace

std::string_view to_string(GroundTruth truth) {
  switch (truth) {
    case GroundTruth::healthy: return "healthy";
    case GroundTruth::inner_race: return "inner-race";
    case GroundTruth::roller_element: return "roller-element";
    case GroundTruth::outer_race: return "outer-race";
  }
  return "unknown";
}

GroundTruth parse_ground_truth(std::string_view text) {
  text = trim(text);
  for (GroundTruth t : {GroundTruth::healthy, GroundTruth::inner_race,
                        GroundTruth::roller_element, GroundTruth::outer_race})
    if (text == to_string(t)) return t;
  throw ConfigError("unknown ground truth '" + std::string(text) + "'");
}

int channel_count(int dataset_id) {
  if (dataset_id == 1) return 8;
  if (dataset_id == 2 || dataset_id == 3) return 4;
  throw ConfigError("dataset id must be 1, 2 or 3");
}

void BearingSelector::validate() const {
  if (dataset_id < 1 || dataset_id > kDatasets || bearing_id < 1 || bearing_id > kBearingsPerDataset)
    throw ConfigError("invalid bearing " + std::to_string(dataset_id) + "." +
                      std::to_string(bearing_id));
}

std::vector<int> BearingSelector::channel_columns() const {
  validate();
  if (dataset_id == 1) return {2 * bearing_id - 2, 2 * bearing_id - 1};
  return {bearing_id - 1};
}

int BearingSelector::primary_column() const { return channel_columns().front(); }

std::string BearingSelector::label() const {
  return "D" + std::to_string(dataset_id) + "B" + std::to_string(bearing_id);
}

BearingSelector BearingSelector::parse(std::string_view text) {
  text = trim(text);
  BearingSelector b;
  bool ok = false;
  if (text.size() == 4 && (text[0] == 'D' || text[0] == 'd') && (text[2] == 'B' || text[2] == 'b')) {
    ok = parse_int(text.substr(1, 1), b.dataset_id) && parse_int(text.substr(3, 1), b.bearing_id);
  } else if (const auto dot = text.find('.'); dot != std::string_view::npos) {
    ok = parse_int(text.substr(0, dot), b.dataset_id) && parse_int(text.substr(dot + 1), b.bearing_id);
  }
  if (!ok) throw ConfigError("cannot parse bearing '" + std::string(text) + "'");
  b.validate();
  return b;
}

std::optional<Timestamp> parse_snapshot_timestamp(std::string_view filename) {
  // YYYY.MM.DD.HH.MM.SS
  if (filename.size() != 19) return std::nullopt;
  int parts[6];
  const int widths[6] = {4, 2, 2, 2, 2, 2};
  std::size_t pos = 0;
  for (int i = 0; i < 6; ++i) {
    const auto field = filename.substr(pos, widths[i]);
    if (!std::all_of(field.begin(), field.end(), [](char c) { return c >= '0' && c <= '9'; }))
      return std::nullopt;
    parse_int(field, parts[i]);
    pos += widths[i];
    if (i < 5) {
      if (filename[pos] != '.') return std::nullopt;
      ++pos;
    }
  }
  const year_month_day ymd{year{parts[0]}, month{static_cast<unsigned>(parts[1])},
                           day{static_cast<unsigned>(parts[2])}};
  if (!ymd.ok() || parts[3] > 23 || parts[4] > 59 || parts[5] > 59) return std::nullopt;
  return sys_days{ymd} + hours{parts[3]} + minutes{parts[4]} + seconds{parts[5]};
}

std::string format_snapshot_timestamp(Timestamp ts) {
  const auto day_point = floor<days>(ts);
  const year_month_day ymd{day_point};
  const hh_mm_ss hms{ts - day_point};
  char buf[64];
  std::snprintf(buf, sizeof buf, "%04d.%02u.%02u.%02ld.%02ld.%02ld", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                static_cast<long>(hms.hours().count()), static_cast<long>(hms.minutes().count()),
                static_cast<long>(hms.seconds().count()));
  return buf;
}

std::vector<SnapshotRef> scan_dataset(const fs::path& root, int dataset_id) {
  const std::string where = "dataset " + std::to_string(dataset_id) + " (" + root.string() + ")";
  if (!fs::is_directory(root)) throw DataError("missing directory for " + where);
  std::vector<SnapshotRef> refs;
  std::vector<std::string> rejected;
  for (const auto& item : fs::directory_iterator(root)) {
    if (!item.is_regular_file()) continue;
    const std::string name = item.path().filename().string();
    if (name == "manifest.txt") continue;
    if (auto ts = parse_snapshot_timestamp(name)) {
      refs.push_back({item.path(), *ts});
    } else {
      rejected.push_back(name);
    }
  }
  if (!rejected.empty()) {
    std::sort(rejected.begin(), rejected.end());
    std::string msg = "files not matching YYYY.MM.DD.HH.MM.SS in " + where + ":";
    for (const auto& r : rejected) msg += " " + r;
    throw DataError(msg);
  }
  if (refs.empty()) throw DataError("zero files found in " + where);
  std::sort(refs.begin(), refs.end(), [](const SnapshotRef& a, const SnapshotRef& b) {
    return a.timestamp != b.timestamp ? a.timestamp < b.timestamp : a.path < b.path;
  });
  return refs;
}

Eigen::MatrixXd parse_snapshot_text(std::string_view text, int expected_channels,
                                    const ParseOptions& options) {
  if (expected_channels <= 0) throw ConfigError("expected_channels must be positive");
  std::vector<double> values;
  if (options.expected_rows)
    values.reserve(static_cast<std::size_t>(*options.expected_rows * expected_channels));
  std::size_t rows = 0;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto eol = text.find('\n', pos);
    if (eol == std::string_view::npos) eol = text.size();
    const std::string_view line = text.substr(pos, eol - pos);
    pos = eol + 1;
    ++line_no;
    if (trim(line).empty()) continue;
    int cols = 0;
    const char* p = line.data();
    const char* end = line.data() + line.size();
    while (true) {
      while (p < end && (*p == ' ' || *p == '\t' || *p == '\r')) ++p;
      if (p == end) break;
      double v = 0.0;
      auto [next, ec] = std::from_chars(p, end, v);
      if (ec != std::errc{} || (next < end && *next != ' ' && *next != '\t' && *next != '\r')) {
        throw DataError("non-numeric token on line " + std::to_string(line_no));
      }
      if (!std::isfinite(v)) throw DataError("non-finite value on line " + std::to_string(line_no));
      values.push_back(v);
      ++cols;
      p = next;
    }
    if (cols != expected_channels)
      throw DataError("wrong column count on line " + std::to_string(line_no) + ": got " +
                      std::to_string(cols) + ", expected " + std::to_string(expected_channels));
    ++rows;
  }
  if (options.expected_rows && static_cast<Eigen::Index>(rows) != *options.expected_rows) {
    if (static_cast<Eigen::Index>(rows) < *options.expected_rows)
      throw DataError("short file: " + std::to_string(rows) + " rows, expected " +
                      std::to_string(*options.expected_rows));
    throw DataError("long file: " + std::to_string(rows) + " rows, expected " +
                    std::to_string(*options.expected_rows));
  }
  if (rows == 0) throw DataError("short file: no rows");
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows), expected_channels);
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = values[r * expected_channels + c];
  return m;
}

RawSnapshot parse_snapshot(std::string_view file_bytes, std::string_view filename,
                           int expected_channels, const ParseOptions& options) {
  auto ts = parse_snapshot_timestamp(filename);
  if (!ts) throw DataError("filename does not match YYYY.MM.DD.HH.MM.SS: " + std::string(filename));
  return {*ts, parse_snapshot_text(file_bytes, expected_channels, options)};
}

RawSnapshot read_snapshot(const SnapshotRef& ref, int expected_channels, const ParseOptions& options) {
  try {
    return parse_snapshot(read_file(ref.path), ref.path.filename().string(), expected_channels,
                          options);
  } catch (const DataError& e) {
    throw DataError(ref.path.string() + ": " + e.what());
  }
}

std::string format_snapshot_text(const Eigen::MatrixXd& channels) {
  std::string out;
  out.reserve(static_cast<std::size_t>(channels.size()) * 12);
  for (Eigen::Index r = 0; r < channels.rows(); ++r) {
    for (Eigen::Index c = 0; c < channels.cols(); ++c) {
      if (c) out.push_back('\t');
      out += format_double(channels(r, c));
    }
    out.push_back('\n');
  }
  return out;
}

void write_snapshot(const fs::path& dir, const RawSnapshot& snapshot) {
  const fs::path path = dir / format_snapshot_timestamp(snapshot.timestamp);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << format_snapshot_text(snapshot.channels);
}

Eigen::VectorXd extract_bearing_series(const RawSnapshot& snapshot, const BearingSelector& bearing) {
  bearing.validate();
  if (snapshot.channels.cols() != channel_count(bearing.dataset_id))
    throw ShapeError("bearing " + bearing.label() + " needs a " +
                     std::to_string(channel_count(bearing.dataset_id)) +
                     "-channel snapshot, got " + std::to_string(snapshot.channels.cols()));
  return snapshot.channels.col(bearing.primary_column());
}

void DatasetManifest::validate() const {
  if (entries.size() != kDatasets * kBearingsPerDataset)
    throw ConfigError("manifest must list exactly 12 bearings, got " +
                      std::to_string(entries.size()));
  std::set<BearingSelector> seen;
  for (const auto& e : entries) {
    e.bearing.validate();
    if (!seen.insert(e.bearing).second)
      throw ConfigError("duplicate manifest entry " + e.bearing.label());
    if (e.truth != reference_truth(e.bearing))
      throw ConfigError("ground truth for " + e.bearing.label() + " disagrees with reference table");
  }
}

const ManifestEntry& DatasetManifest::entry(const BearingSelector& bearing) const {
  for (const auto& e : entries)
    if (e.bearing == bearing) return e;
  throw ConfigError("bearing " + bearing.label() + " not in manifest");
}

DatasetManifest reference_manifest() {
  DatasetManifest m;
  for (int d = 1; d <= kDatasets; ++d)
    for (int k = 1; k <= kBearingsPerDataset; ++k) {
      BearingSelector b{d, k};
      m.entries.push_back({b, reference_count(d), reference_truth(b)});
    }
  return m;
}

DatasetManifest parse_manifest(std::string_view text, const fs::path& base_dir) {
  DatasetManifest m = reference_manifest();
  std::istringstream in{std::string(text)};
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string_view line = raw;
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos)
      throw ConfigError("manifest line " + std::to_string(line_no) + ": expected key = value");
    const std::string_view key = trim(line.substr(0, eq));
    const std::string_view value = trim(line.substr(eq + 1));
    int id = 0;
    if (key.starts_with("dataset.") && key.ends_with(".root")) {
      if (!parse_int(key.substr(8, key.size() - 8 - 5), id)) throw ConfigError("bad key " + std::string(key));
      channel_count(id);
      fs::path root{std::string(value)};
      m.roots[id] = root.is_absolute() ? root : base_dir / root;
    } else if (key.starts_with("dataset.") && key.ends_with(".channels")) {
      if (!parse_int(key.substr(8, key.size() - 8 - 9), id)) throw ConfigError("bad key " + std::string(key));
      int ch = 0;
      if (!parse_int(value, ch) || ch != channel_count(id))
        throw ConfigError("dataset " + std::to_string(id) + " has " +
                          std::to_string(channel_count(id)) + " channels");
    } else if (key == "snapshot.rows") {
      int rows = 0;
      if (value == "any") {
        m.snapshot_rows.reset();
      } else if (parse_int(value, rows) && rows > 0) {
        m.snapshot_rows = rows;
      } else {
        throw ConfigError("bad snapshot.rows value");
      }
    } else if (key.starts_with("bearing.")) {
      const BearingSelector b = BearingSelector::parse(key.substr(8));
      const GroundTruth t = parse_ground_truth(value);
      if (t != reference_truth(b))
        throw ConfigError("ground truth for " + b.label() + " disagrees with reference table");
    } else {
      throw ConfigError("unknown manifest key " + std::string(key));
    }
  }
  m.validate();
  return m;
}

DatasetManifest load_manifest(const fs::path& file) {
  return parse_manifest(read_file(file), file.parent_path());
}

std::string format_manifest(const DatasetManifest& manifest) {
  std::ostringstream out;
  for (const auto& [id, root] : manifest.roots) {
    out << "dataset." << id << ".root = " << root.string() << "\n";
    out << "dataset." << id << ".channels = " << channel_count(id) << "\n";
  }
  out << "snapshot.rows = "
      << (manifest.snapshot_rows ? std::to_string(*manifest.snapshot_rows) : std::string("any"))
      << "\n";
  for (const auto& e : manifest.entries)
    out << "bearing." << e.bearing.dataset_id << "." << e.bearing.bearing_id << " = "
        << to_string(e.truth) << "\n";
  return out.str();
}

DatasetManifest manifest_for_root(const fs::path& root) {
  if (fs::exists(root / "manifest.txt")) return load_manifest(root / "manifest.txt");
  DatasetManifest m = reference_manifest();
  m.roots = {{1, root / "1st_test"}, {2, root / "2nd_test"}, {3, root / "3rd_test"}};
  return m;
}

std::vector<LooFold> make_loo_folds(const DatasetManifest& manifest) {
  manifest.validate();
  std::vector<LooFold> folds;
  for (const auto& test : manifest.entries) {
    LooFold fold{test.bearing, {}};
    for (const auto& other : manifest.entries)
      if (other.bearing != test.bearing) fold.train.push_back(other.bearing);
    folds.push_back(std::move(fold));
  }
  return folds;
}

}  // namespace bearingmon
