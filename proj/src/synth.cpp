#include "bearingmon/synth.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <numbers>

#include "bearingmon/errors.hpp"
#include "bearingmon/rng.hpp"

namespace bearingmon {

namespace {

constexpr std::uint64_t kSnapshotTag = 0x534e4150;  // "SNAP"
constexpr std::uint64_t kBearingTag = 0x42524e47;   // "BRNG"
constexpr std::uint64_t kAuxTag = 0x41555821;       // independent Y-axis noise

}  // namespace

void SyntheticConfig::validate() const {
  if (n_snapshots == 0) throw ConfigError("n_snapshots must be positive");
  if (fault_onset && *fault_onset > n_snapshots) throw ConfigError("fault_onset beyond n_snapshots");
  if (!(noise_sigma > 0.0)) throw ConfigError("noise_sigma must be positive");
  if (impulse_amplitude < 0.0 || impulse_growth < 0.0)
    throw ConfigError("impulse amplitude and growth must be non-negative");
  if (snapshot_length == 0) throw ConfigError("snapshot_length must be positive");
  if (impulse_period == 0 || !(impulse_decay > 0.0) || !(impulse_carrier > 0.0))
    throw ConfigError("impulse shape parameters must be positive");
}

double impulse_amplitude_at(const SyntheticConfig& config, std::size_t index) {
  if (!config.fault_onset || index < *config.fault_onset) return 0.0;
  return config.impulse_amplitude +
         config.impulse_growth * static_cast<double>(index - *config.fault_onset);
}

Eigen::VectorXd synth_snapshot(const SyntheticConfig& config, std::size_t index) {
  config.validate();
  Engine rng(derive_seed(config.rng_seed, {kSnapshotTag, index}));
  std::normal_distribution<double> noise(0.0, config.noise_sigma);
  const auto n = static_cast<Eigen::Index>(config.snapshot_length);
  Eigen::VectorXd x(n);
  for (Eigen::Index i = 0; i < n; ++i) x(i) = noise(rng);

  const double amplitude = impulse_amplitude_at(config, index);
  if (amplitude > 0.0) {
    std::uniform_int_distribution<std::size_t> phase_dist(0, config.impulse_period - 1);
    const auto tail = static_cast<Eigen::Index>(std::ceil(8.0 * config.impulse_decay));
    const double omega = 2.0 * std::numbers::pi / config.impulse_carrier;
    for (auto start = static_cast<Eigen::Index>(phase_dist(rng)); start < n;
         start += static_cast<Eigen::Index>(config.impulse_period)) {
      for (Eigen::Index j = 0; j < tail && start + j < n; ++j) {
        const double t = static_cast<double>(j);
        x(start + j) += amplitude * std::exp(-t / config.impulse_decay) * std::cos(omega * t);
      }
    }
  }
  return x;
}

std::vector<Eigen::VectorXd> synth_bearing(const SyntheticConfig& config) {
  config.validate();
  std::vector<Eigen::VectorXd> out;
  out.reserve(config.n_snapshots);
  for (std::size_t i = 0; i < config.n_snapshots; ++i) out.push_back(synth_snapshot(config, i));
  return out;
}

const SyntheticConfig& SyntheticFleet::config(const BearingSelector& bearing) const {
  for (std::size_t i = 0; i < manifest.entries.size(); ++i)
    if (manifest.entries[i].bearing == bearing) return bearings[i];
  throw ConfigError("bearing " + bearing.label() + " not in synthetic fleet");
}

SyntheticFleet make_synthetic_fleet(const SyntheticFleetConfig& config) {
  if (config.onset_min < 0.0 || config.onset_max > 1.0 || config.onset_min > config.onset_max)
    throw ConfigError("fault onset fractions must satisfy 0 <= min <= max <= 1");
  SyntheticFleet fleet;
  fleet.manifest = reference_manifest();
  fleet.manifest.snapshot_rows = static_cast<Eigen::Index>(config.snapshot_length);
  std::size_t faulty_seen = 0;
  std::size_t faulty_total = 0;
  for (const auto& e : fleet.manifest.entries) faulty_total += is_faulty(e.truth) ? 1 : 0;
  for (std::size_t i = 0; i < fleet.manifest.entries.size(); ++i) {
    auto& entry = fleet.manifest.entries[i];
    entry.sample_count = config.n_snapshots;
    SyntheticConfig sc;
    sc.n_snapshots = config.n_snapshots;
    sc.snapshot_length = config.snapshot_length;
    sc.noise_sigma = config.noise_sigma;
    sc.impulse_amplitude = config.impulse_amplitude;
    sc.impulse_growth = config.impulse_growth;
    sc.rng_seed = derive_seed(config.seed, {kBearingTag, i});
    if (is_faulty(entry.truth)) {
      const double frac =
          faulty_total > 1
              ? config.onset_min + (config.onset_max - config.onset_min) *
                                       static_cast<double>(faulty_seen) /
                                       static_cast<double>(faulty_total - 1)
              : config.onset_min;
      sc.fault_onset = static_cast<std::size_t>(std::floor(frac * static_cast<double>(config.n_snapshots)));
      ++faulty_seen;
    }
    sc.validate();
    fleet.bearings.push_back(sc);
  }
  return fleet;
}

void write_synthetic_ims(const SyntheticFleet& fleet, const std::filesystem::path& root) {
  namespace fs = std::filesystem;
  using namespace std::chrono;
  DatasetManifest manifest = fleet.manifest;
  const char* dirs[] = {"", "1st_test", "2nd_test", "3rd_test"};
  for (int d = 1; d <= 3; ++d) {
    const fs::path dir = root / dirs[d];
    fs::create_directories(dir);
    manifest.roots[d] = dirs[d];
    const int channels = channel_count(d);
    std::size_t n = 0;
    for (const auto& e : fleet.manifest.entries)
      if (e.bearing.dataset_id == d) n = std::max(n, e.sample_count);
    const sys_seconds start = sys_days{year{2003 + d} / 1 / 1} + hours{0};
    for (std::size_t i = 0; i < n; ++i) {
      RawSnapshot snap;
      snap.timestamp = start + minutes{10 * static_cast<long>(i)};
      const auto rows = static_cast<Eigen::Index>(fleet.bearings.front().snapshot_length);
      snap.channels = Eigen::MatrixXd::Zero(rows, channels);
      for (int k = 1; k <= 4; ++k) {
        const BearingSelector b{d, k};
        const SyntheticConfig& sc = fleet.config(b);
        const auto cols = b.channel_columns();
        snap.channels.col(cols[0]) = synth_snapshot(sc, i);
        if (cols.size() > 1) {
          SyntheticConfig aux = sc;
          aux.rng_seed = derive_seed(sc.rng_seed, {kAuxTag});
          snap.channels.col(cols[1]) = synth_snapshot(aux, i);
        }
      }
      write_snapshot(dir, snap);
    }
  }
  std::ofstream out(root / "manifest.txt");
  out << format_manifest(manifest);
}

}  // namespace bearingmon
