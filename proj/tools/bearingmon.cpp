// bearingmon: command-line front end for the leave-one-out evaluation, the
// synthetic generator and the streaming monitor.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "bearingmon/binary_io.hpp"
#include "bearingmon/errors.hpp"
#include "bearingmon/features.hpp"
#include "bearingmon/harness.hpp"
#include "bearingmon/stream.hpp"
#include "bearingmon/synth.hpp"

namespace fs = std::filesystem;
using namespace bearingmon;

namespace {

struct DataOptions {
  std::string data;
  std::string manifest;
  bool synthetic = false;
  SyntheticFleetConfig fleet;
};

struct PipelineOptions {
  std::string mode = "auto";
  std::uint64_t seed = 1;
  std::optional<double> k;
  std::string k_grid;
  double c = 100.0;
  std::string update = "sm";
  unsigned threads = 1;
  int epochs = 1;
};

InverseUpdate parse_update(const std::string& text) {
  if (text == "sm" || text == "sherman-morrison") return InverseUpdate::sherman_morrison;
  if (text == "direct") return InverseUpdate::direct;
  throw ConfigError("unknown update method '" + text + "' (sm or direct)");
}

void add_data_options(CLI::App* cmd, DataOptions& o) {
  cmd->add_option("--data", o.data, "NASA IMS root holding 1st_test, 2nd_test, 3rd_test")
      ->envname("BEARINGMON_DATA");
  cmd->add_option("--manifest", o.manifest, "Manifest file (overrides --data layout)");
  cmd->add_flag("--synthetic", o.synthetic, "Use the built-in 12-bearing synthetic fleet");
  cmd->add_option("--snapshots", o.fleet.n_snapshots, "Synthetic snapshots per bearing")
      ->capture_default_str();
  cmd->add_option("--snapshot-length", o.fleet.snapshot_length, "Synthetic snapshot length")
      ->capture_default_str();
  cmd->add_option("--synth-seed", o.fleet.seed, "Synthetic fleet seed")->capture_default_str();
  cmd->add_option("--synth-amplitude", o.fleet.impulse_amplitude, "Synthetic impact amplitude at onset")
      ->capture_default_str();
  cmd->add_option("--synth-growth", o.fleet.impulse_growth, "Synthetic amplitude growth per snapshot")
      ->capture_default_str();
}

void add_pipeline_options(CLI::App* cmd, PipelineOptions& o) {
  cmd->add_option("--mode", o.mode, "auto or handcrafted")
      ->check(CLI::IsMember({"auto", "handcrafted"}))
      ->capture_default_str();
  cmd->add_option("--seed", o.seed, "Master seed")->capture_default_str();
  cmd->add_option("--k", o.k, "Fixed K instead of per-fold calibration");
  cmd->add_option("--k-grid", o.k_grid, "Calibration grid a:b:step (default 0.5:100:0.5)");
  cmd->add_option("--c", o.c, "OSELM regularization C")->capture_default_str();
  cmd->add_option("--update", o.update, "Sequential inverse update: sm or direct")
      ->capture_default_str();
  cmd->add_option("--threads", o.threads, "Folds run in parallel")->capture_default_str();
  cmd->add_option("--epochs", o.epochs, "Autoencoder epochs")->capture_default_str();
}

PipelineConfig make_config(const PipelineOptions& o) {
  PipelineConfig cfg;
  cfg.mode = parse_feature_mode(o.mode);
  cfg.master_seed = o.seed;
  cfg.fixed_k = o.k;
  if (!o.k_grid.empty()) cfg.k_grid = parse_k_grid(o.k_grid);
  cfg.oselm.C = o.c;
  cfg.oselm.update = parse_update(o.update);
  cfg.oselm.input_dim = cfg.mode == FeatureMode::automatic ? cfg.autoencoder.code_dim
                                                           : HandcraftedVector::kSize;
  cfg.autoencoder.epochs = o.epochs;
  cfg.threads = std::max(1u, o.threads);
  cfg.validate();
  return cfg;
}

BearingLibrary load_library(const DataOptions& o, unsigned threads) {
  if (o.synthetic) {
    return make_synthetic_library(make_synthetic_fleet(o.fleet), threads);
  }
  DatasetManifest manifest;
  if (!o.manifest.empty()) {
    manifest = load_manifest(o.manifest);
  } else if (!o.data.empty()) {
    manifest = manifest_for_root(o.data);
  } else {
    throw ConfigError("no data source: pass --data, --manifest or --synthetic (or set BEARINGMON_DATA)");
  }
  return load_ims_library(manifest, threads, &std::cerr);
}

void print_summary(const RunReport& report) {
  for (const auto& f : report.folds) {
    std::cerr << f.test.label() << "  " << to_string(f.verdict.state) << " (truth "
              << to_string(f.truth) << ")  K=" << format_double(f.calibration.K)
              << "  max=" << format_double(f.verdict.max_deviation)
              << "  T=" << format_double(f.verdict.threshold.T)
              << "  conv=" << f.convergence_length << "/" << f.stream_length
              << (f.correct ? "" : "  WRONG") << "\n";
  }
  std::cerr << "accuracy " << report.correct << "/" << report.folds.size() << "\n";
}

int cmd_run(const DataOptions& data, const PipelineOptions& pipe, const std::string& out,
            const std::vector<std::string>& tests) {
  const PipelineConfig cfg = make_config(pipe);
  std::vector<BearingSelector> only;
  for (const auto& t : tests) only.push_back(BearingSelector::parse(t));
  const BearingLibrary lib = load_library(data, cfg.threads);
  const RunReport report = run_all(lib, cfg, only);
  emit_report(report, out);
  print_summary(report);
  return 0;
}

int cmd_sweep(const DataOptions& data, const PipelineOptions& pipe, const std::string& out,
              std::vector<double> c_values) {
  if (c_values.empty()) c_values.push_back(pipe.c);
  const BearingLibrary lib = load_library(data, std::max(1u, pipe.threads));
  fs::create_directories(out);
  std::ofstream summary(fs::path(out) / "sweep.csv");
  summary << "C,correct,total,best_accuracy_percent,best_k_lo,best_k_hi\n";
  for (const double c : c_values) {
    PipelineOptions po = pipe;
    po.c = c;
    const PipelineConfig cfg = make_config(po);
    const RunReport report = run_all(lib, cfg);
    const fs::path dir = c_values.size() == 1 ? fs::path(out) : fs::path(out) / ("C_" + format_double(c));
    emit_report(report, dir);
    double best = -1.0, lo = 0.0, hi = 0.0;
    for (const auto& p : report.curve) {
      if (p.accuracy() > best) {
        best = p.accuracy();
        lo = hi = p.K;
      } else if (p.accuracy() == best) {
        hi = p.K;
      }
    }
    summary << format_double(c) << ',' << report.correct << ',' << report.folds.size() << ','
            << format_double(100.0 * best) << ',' << format_double(lo) << ',' << format_double(hi)
            << '\n';
    std::cerr << "C=" << format_double(c) << "  calibrated " << report.correct << "/"
              << report.folds.size() << "  best sweep accuracy " << format_double(100.0 * best)
              << "% on K in [" << format_double(lo) << ", " << format_double(hi) << "]\n";
  }
  return 0;
}

int cmd_synth(std::size_t snapshots, std::optional<std::size_t> onset, const std::string& out,
              std::uint64_t seed, std::size_t length, double noise, double amplitude,
              double growth, bool fleet) {
  if (fleet) {
    SyntheticFleetConfig fc;
    fc.n_snapshots = snapshots;
    fc.snapshot_length = length;
    fc.noise_sigma = noise;
    fc.impulse_amplitude = amplitude;
    fc.impulse_growth = growth;
    fc.seed = seed;
    write_synthetic_ims(make_synthetic_fleet(fc), out);
    std::cerr << "wrote 12-bearing fleet to " << out << "\n";
    return 0;
  }
  SyntheticConfig sc;
  sc.n_snapshots = snapshots;
  sc.fault_onset = onset;
  sc.rng_seed = seed;
  sc.snapshot_length = length;
  sc.noise_sigma = noise;
  sc.impulse_amplitude = amplitude;
  sc.impulse_growth = growth;
  sc.validate();
  fs::create_directories(out);
  std::ofstream lines(fs::path(out) / "stream.txt");
  if (!lines) throw DataError("cannot write " + (fs::path(out) / "stream.txt").string());
  for (std::size_t i = 0; i < snapshots; ++i) {
    const Eigen::VectorXd x = synth_snapshot(sc, i);
    std::string line;
    for (Eigen::Index j = 0; j < x.size(); ++j) {
      if (j) line += ' ';
      line += format_double(x[j]);
    }
    lines << line << '\n';
  }
  std::ofstream meta(fs::path(out) / "stream_info.txt");
  meta << "snapshots " << snapshots << "\nsnapshot_length " << length << "\nfault_onset "
       << (onset ? std::to_string(*onset) : std::string("none")) << "\nseed " << seed << "\n";
  std::cerr << "wrote " << snapshots << " snapshots to " << (fs::path(out) / "stream.txt") << "\n";
  return 0;
}

int cmd_train_encoder(const DataOptions& data, const PipelineOptions& pipe,
                      const std::string& exclude, const std::string& out) {
  PipelineOptions po = pipe;
  po.mode = "auto";
  const PipelineConfig cfg = make_config(po);
  const BearingLibrary lib = load_library(data, cfg.threads);
  const BearingSelector test = BearingSelector::parse(exclude);
  for (const auto& fold : make_loo_folds(lib.manifest())) {
    if (fold.test != test) continue;
    const EncoderModel enc = train_fold_encoder(fold, lib, cfg);
    save_encoder(enc, out);
    std::cerr << "encoder " << enc.code_dim() << "x" << enc.input_dim() << " trained without "
              << test.label() << " -> " << out << "\n";
    return 0;
  }
  throw ConfigError("bearing " + test.label() + " is not in the manifest");
}

struct StreamOptions {
  std::string mode = "auto";
  std::string encoder;
  bool use_stdin = false;
  std::string listen;
  double k = 10.0;
  double c = 100.0;
  std::string update = "sm";
  std::uint64_t seed = 1;
  std::size_t snapshot_length = static_cast<std::size_t>(kSnapshotRows);
  std::string checkpoint;
  std::string resume;
  std::size_t max_connections = 0;
};

int cmd_stream(const StreamOptions& o) {
  StreamConfig cfg;
  cfg.mode = parse_feature_mode(o.mode);
  if (!o.encoder.empty()) cfg.encoder = load_encoder(o.encoder);
  cfg.oselm.C = o.c;
  cfg.oselm.seed = o.seed;
  cfg.oselm.update = parse_update(o.update);
  cfg.oselm.input_dim =
      cfg.mode == FeatureMode::automatic && cfg.encoder ? cfg.encoder->code_dim() : HandcraftedVector::kSize;
  cfg.K = o.k;
  cfg.snapshot_length = static_cast<Eigen::Index>(o.snapshot_length);
  cfg.validate();

  if (!o.listen.empty()) {
    ServeOptions so;
    const auto colon = o.listen.rfind(':');
    if (colon == std::string::npos) throw ConfigError("--listen expects host:port");
    so.host = o.listen.substr(0, colon);
    so.port = static_cast<std::uint16_t>(std::stoul(o.listen.substr(colon + 1)));
    so.max_connections = o.max_connections;
    if (!o.checkpoint.empty()) so.checkpoint_prefix = fs::path(o.checkpoint);
    serve_tcp(cfg, so, std::cerr, [](std::uint16_t port) {
      std::cerr << "listening on port " << port << std::endl;
    });
    return 0;
  }

  StreamSession session =
      o.resume.empty() ? StreamSession(cfg) : StreamSession::load_checkpoint(o.resume, cfg);
  const std::size_t bad = run_stream(std::cin, std::cout, std::cerr, session);
  std::cout.flush();
  if (!o.checkpoint.empty()) session.save_checkpoint(o.checkpoint);
  std::cerr << "accepted " << session.accepted() << ", malformed " << bad << ", phase "
            << to_string(session.phase()) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bearing condition monitoring with an autoencoder and a one-class OSELM"};
  app.require_subcommand(1);

  DataOptions data;
  PipelineOptions pipe;
  std::string out = "out";

  auto* run_all_cmd = app.add_subcommand("run-all", "Run all 12 leave-one-out folds");
  add_data_options(run_all_cmd, data);
  add_pipeline_options(run_all_cmd, pipe);
  run_all_cmd->add_option("--out", out, "Output directory")->capture_default_str();

  std::vector<std::string> tests;
  auto* run_fold_cmd = app.add_subcommand("run-fold", "Run selected folds");
  add_data_options(run_fold_cmd, data);
  add_pipeline_options(run_fold_cmd, pipe);
  run_fold_cmd->add_option("--out", out, "Output directory")->capture_default_str();
  run_fold_cmd->add_option("--test", tests, "Test bearing, e.g. 2.1 or D2B1 (repeatable)")
      ->required();

  std::vector<double> c_values;
  auto* sweep_cmd = app.add_subcommand("sweep-k", "Test-bearing accuracy over the K grid, optionally per C");
  add_data_options(sweep_cmd, data);
  add_pipeline_options(sweep_cmd, pipe);
  sweep_cmd->add_option("--out", out, "Output directory")->capture_default_str();
  sweep_cmd->add_option("--c-values", c_values, "C values to sweep")->delimiter(',');

  std::size_t synth_snapshots = 400;
  std::optional<std::size_t> onset;
  std::uint64_t synth_seed = 1;
  std::size_t synth_length = static_cast<std::size_t>(kSnapshotRows);
  double noise = 1.0, amplitude = 3.0, growth = 0.1;
  bool fleet = false;
  auto* synth_cmd = app.add_subcommand("synth", "Write synthetic vibration data");
  synth_cmd->add_option("--snapshots", synth_snapshots)->capture_default_str();
  synth_cmd->add_option("--fault-onset", onset, "First faulty snapshot (omit for healthy)");
  synth_cmd->add_option("--out", out, "Output directory")->required();
  synth_cmd->add_option("--seed", synth_seed)->capture_default_str();
  synth_cmd->add_option("--snapshot-length", synth_length)->capture_default_str();
  synth_cmd->add_option("--noise", noise, "Noise sigma")->capture_default_str();
  synth_cmd->add_option("--amplitude", amplitude, "Impact amplitude at onset")->capture_default_str();
  synth_cmd->add_option("--growth", growth, "Amplitude growth per snapshot")->capture_default_str();
  synth_cmd->add_flag("--ims", fleet, "Write a 12-bearing fleet in IMS layout instead of stream.txt");

  std::string exclude;
  std::string encoder_out;
  auto* train_cmd = app.add_subcommand("train-encoder", "Train one fold's encoder and save it");
  add_data_options(train_cmd, data);
  add_pipeline_options(train_cmd, pipe);
  train_cmd->add_option("--exclude", exclude, "Held-out test bearing")->required();
  train_cmd->add_option("--out", encoder_out, "Encoder file")->required();

  StreamOptions so;
  auto* stream_cmd = app.add_subcommand("stream", "Monitor a line-delimited snapshot stream");
  stream_cmd->add_option("--mode", so.mode)
      ->check(CLI::IsMember({"auto", "handcrafted"}))
      ->capture_default_str();
  stream_cmd->add_option("--encoder", so.encoder, "Encoder file (auto mode)");
  auto* stdin_flag = stream_cmd->add_flag("--stdin", so.use_stdin, "Read snapshots from standard input");
  auto* listen_opt = stream_cmd->add_option("--listen", so.listen, "Serve TCP on host:port");
  stdin_flag->excludes(listen_opt);
  stream_cmd->add_option("--k", so.k, "Threshold multiplier K")->capture_default_str();
  stream_cmd->add_option("--c", so.c)->capture_default_str();
  stream_cmd->add_option("--update", so.update)->capture_default_str();
  stream_cmd->add_option("--seed", so.seed, "OSELM seed")->capture_default_str();
  stream_cmd->add_option("--snapshot-length", so.snapshot_length)->capture_default_str();
  stream_cmd->add_option("--checkpoint", so.checkpoint, "Write session state here at end of input");
  stream_cmd->add_option("--resume", so.resume, "Resume from a checkpoint");
  stream_cmd->add_option("--max-connections", so.max_connections, "Stop serving after N connections");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run_all_cmd) return cmd_run(data, pipe, out, {});
    if (*run_fold_cmd) return cmd_run(data, pipe, out, tests);
    if (*sweep_cmd) return cmd_sweep(data, pipe, out, c_values);
    if (*synth_cmd)
      return cmd_synth(synth_snapshots, onset, out, synth_seed, synth_length, noise, amplitude,
                       growth, fleet);
    if (*train_cmd) return cmd_train_encoder(data, pipe, exclude, encoder_out);
    if (*stream_cmd) {
      if (!so.use_stdin && so.listen.empty()) throw ConfigError("stream needs --stdin or --listen");
      return cmd_stream(so);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
