#include <fstream>

#include <json.hpp>

#include "bearingmon/binary_io.hpp"
#include "bearingmon/errors.hpp"
#include "bearingmon/harness.hpp"

namespace bearingmon {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::ofstream open_output(const fs::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  return out;
}

json stats_json(const BearingStats& s) {
  return {{"bearing", s.label},
          {"mu_t", s.mean},
          {"sigma_t", s.stddev},
          {"max_deviation", s.max_deviation},
          {"faulty", s.faulty}};
}

}  // namespace

std::string fold_report_json(const FoldReport& f) {
  json j;
  j["test_bearing"] = f.test.label();
  j["ground_truth"] = std::string(to_string(f.truth));
  j["feature_mode"] = std::string(to_string(f.mode));
  if (f.encoder) {
    j["encoder"] = {{"init_seed", f.encoder->init_seed},
                    {"shuffle_seed", f.encoder->shuffle_seed},
                    {"train_set_hash", f.encoder->train_set_hash}};
  } else {
    j["encoder"] = nullptr;
  }
  j["stream_length"] = f.stream_length;
  j["convergence_length"] = f.convergence_length;
  j["mu_t"] = f.mean;
  j["sigma_t"] = f.stddev;
  j["K"] = f.calibration.K;
  j["K_fixed"] = f.fixed_k;
  j["K_plateau"] = {f.calibration.plateau_lo, f.calibration.plateau_hi};
  j["calibration_accuracy"] = f.calibration.accuracy;
  json calib = json::array();
  for (std::size_t i = 0; i < f.calibration_set.size(); ++i) {
    json c = stats_json(f.calibration_set[i]);
    c["convergence_length"] = f.calibration_convergence.at(i);
    calib.push_back(std::move(c));
  }
  j["calibration_set"] = std::move(calib);
  j["verdict"] = {{"state", std::string(to_string(f.verdict.state))},
                  {"max_deviation", f.verdict.max_deviation},
                  {"max_index", f.verdict.max_index},
                  {"T", f.verdict.threshold.T},
                  {"first_flagged", f.verdict.first_flagged ? json(*f.verdict.first_flagged) : json(nullptr)},
                  {"correct", f.correct}};
  return j.dump(2) + "\n";
}

void emit_report(const RunReport& report, const fs::path& dir, const ReportFormats& formats) {
  std::error_code ec;
  fs::create_directories(dir / "models", ec);
  if (ec) throw Error("cannot create output directory " + dir.string() + ": " + ec.message());

  if (formats.csv) {
    auto verdicts = open_output(dir / "verdicts.csv");
    verdicts << "bearing,max_deviation,T,K,state,ground_truth,mu_t,sigma_t,convergence_length,"
                "stream_length,correct\n";
    for (const auto& f : report.folds)
      verdicts << f.test.label() << ',' << format_double(f.verdict.max_deviation) << ','
               << format_double(f.verdict.threshold.T) << ',' << format_double(f.calibration.K)
               << ',' << to_string(f.verdict.state) << ',' << to_string(f.truth) << ','
               << format_double(f.mean) << ',' << format_double(f.stddev) << ','
               << f.convergence_length << ',' << f.stream_length << ','
               << (f.correct ? "true" : "false") << '\n';

    auto curve = open_output(dir / "accuracy_vs_k.csv");
    write_accuracy_csv(curve, report.curve);

    for (const auto& f : report.folds) {
      auto dev = open_output(dir / ("deviations_" + f.test.label() + ".csv"));
      write_deviation_csv(dev, f.trace);
    }
  }

  if (formats.structured) {
    json run;
    run["feature_mode"] = std::string(to_string(report.mode));
    run["master_seed"] = report.master_seed;
    run["folds"] = report.folds.size();
    run["correct"] = report.correct;
    run["accuracy"] = report.accuracy();
    double mean_convergence = 0.0;
    for (const auto& f : report.folds) mean_convergence += static_cast<double>(f.convergence_length);
    if (!report.folds.empty()) mean_convergence /= static_cast<double>(report.folds.size());
    run["mean_convergence_length"] = mean_convergence;
    auto out = open_output(dir / "run.json");
    out << run.dump(2) << "\n";
    for (const auto& f : report.folds) {
      auto fold = open_output(dir / ("fold_" + f.test.label() + ".json"));
      fold << fold_report_json(f);
    }
  }

  for (const auto& f : report.folds) {
    if (!f.encoder_bytes.empty())
      write_bytes(dir / "models" / ("encoder_" + f.test.label() + ".bin"), f.encoder_bytes);
    write_bytes(dir / "models" / ("oselm_" + f.test.label() + ".bin"), f.oselm_bytes);
  }

  json timings = json::object();
  for (const auto& f : report.folds)
    timings[f.test.label()] = {{"autoencoder_seconds", f.timings.autoencoder_seconds},
                               {"calibration_seconds", f.timings.calibration_seconds},
                               {"test_seconds", f.timings.test_seconds},
                               {"inference_us_per_sample", f.timings.inference_us_per_sample}};
  auto out = open_output(dir / "timings.json");
  out << timings.dump(2) << "\n";
}

}  // namespace bearingmon
