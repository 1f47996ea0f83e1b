#pragma once

// Synthetic vibration streams: Gaussian background noise, with a periodic
// train of decaying impacts superimposed from the fault onset onwards.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include <Eigen/Core>

#include "bearingmon/dataset_io.hpp"

namespace bearingmon {

struct SyntheticConfig {
  std::size_t n_snapshots = 100;
  std::optional<std::size_t> fault_onset;
  double noise_sigma = 1.0;
  // Impact amplitude at the onset snapshot; grows by impulse_growth per
  // snapshot afterwards.
  double impulse_amplitude = 3.0;
  double impulse_growth = 0.1;
  std::uint64_t rng_seed = 0;
  std::size_t snapshot_length = static_cast<std::size_t>(kSnapshotRows);
  std::size_t impulse_period = 128;  // samples between impacts
  double impulse_decay = 6.0;        // e-folding length of one impact, samples
  double impulse_carrier = 24.0;     // ringing period, samples

  void validate() const;
};

// Impact amplitude of snapshot `index` (0 before onset).
double impulse_amplitude_at(const SyntheticConfig& config, std::size_t index);

// Snapshot `index` alone. Each snapshot draws from its own seed, so this
// equals synth_bearing(config)[index].
Eigen::VectorXd synth_snapshot(const SyntheticConfig& config, std::size_t index);

std::vector<Eigen::VectorXd> synth_bearing(const SyntheticConfig& config);

struct SyntheticFleetConfig {
  std::size_t n_snapshots = 4000;
  std::size_t snapshot_length = static_cast<std::size_t>(kSnapshotRows);
  double noise_sigma = 1.0;
  double impulse_amplitude = 3.0;
  double impulse_growth = 0.1;
  // Fault onsets of the four faulty bearings are spread evenly across
  // [onset_min, onset_max] as fractions of the stream length.
  double onset_min = 0.5;
  double onset_max = 0.7;
  std::uint64_t seed = 1;
};

// Twelve synthetic bearings laid out like the reference table: the four
// bearings that are faulty there get a fault onset, the rest stay healthy.
struct SyntheticFleet {
  DatasetManifest manifest;
  std::vector<SyntheticConfig> bearings;  // same order as manifest.entries

  const SyntheticConfig& config(const BearingSelector& bearing) const;
};

SyntheticFleet make_synthetic_fleet(const SyntheticFleetConfig& config);

// Writes the fleet as IMS-style snapshot directories plus manifest.txt
// under `root`. Bearings of one test share snapshot files.
void write_synthetic_ims(const SyntheticFleet& fleet, const std::filesystem::path& root);

}  // namespace bearingmon
