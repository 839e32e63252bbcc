#pragma once

#include "tsml/dtw.hpp"
#include "tsml/learner.hpp"
#include "tsml/series.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace tsml {

enum class Method { kEuclidean, kDtw, kLmnn, kMlat };

/// How baseline training sets are drawn. MLAT always trains on slide windows.
enum class TrainMode {
  kRandom,     // n samples per label drawn at random
  kAugmented,  // every slide window, capped per label
};

std::string_view to_string(Method m);
std::string_view to_string(TrainMode m);
Method parse_method(std::string_view s);
TrainMode parse_train_mode(std::string_view s);

struct ExperimentConfig {
  std::filesystem::path data;
  std::size_t window = 10;
  std::size_t k = 1;
  Method method = Method::kMlat;
  /// Observations kept per label; 0 keeps every segment whole.
  std::size_t segment_length = 510;
  TrainMode train_mode = TrainMode::kRandom;
  std::size_t samples_per_label = 100;
  /// Per-label cap on slide-window training sets (MLAT and augmented baselines).
  std::size_t augmented_cap = 150;
  double test_fraction = 0.2;
  std::size_t runs = 5;
  std::uint64_t seed = 0;
  bool normalize = false;
  bool leakage_gap = true;
  DtwOptions dtw;
  LearnConfig learn;
  std::filesystem::path output;

  void validate() const;
};

struct PhaseTimes {
  double sampling = 0.0;
  double fit = 0.0;
  double classify = 0.0;
};

struct RunResult {
  std::size_t run = 0;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  double accuracy = 0.0;
  std::size_t n_train = 0;
  std::size_t n_test = 0;
  /// confusion[true][predicted]
  std::vector<std::vector<std::size_t>> confusion;
  std::size_t outer_iterations = 0;
  double primal_residual = 0.0;
  PhaseTimes times;  // wall clock, kept out of the structured report
};

struct RunReport {
  ExperimentConfig config;
  std::vector<std::string> label_names;
  std::vector<RunResult> runs;
  double mean = 0.0;
  double stddev = 0.0;
  bool partial = false;
  std::string version;
  std::string commit;

  std::size_t successful() const;
  std::vector<std::vector<std::size_t>> total_confusion() const;
};

/// Mean and sample standard deviation over successful runs.
void summarize(RunReport& report);

/// Runs the protocol on an in-memory stream (`cfg.data` is only echoed).
RunReport run_experiment(const LabeledStream& stream, const ExperimentConfig& cfg);
/// Loads `cfg.data` and runs the protocol.
RunReport run_experiment(const ExperimentConfig& cfg);

/// Number of worker threads: hardware concurrency capped by BENCH_THREADS.
std::size_t bench_threads();

/// Writes `<stem>.json` (structured, deterministic) and `<stem>.txt`
/// (table with per-run accuracies, confusion matrix and timings).
/// Throws if the report has no successful run.
void emit_report(const RunReport& report, const std::filesystem::path& stem);

std::string report_json(const RunReport& report);
RunReport parse_report(std::string_view json);
RunReport load_report(const std::filesystem::path& path);

std::string config_json(const ExperimentConfig& cfg);
/// Overrides the fields present in a JSON object (same keys as the echo).
void apply_config_json(ExperimentConfig& cfg, std::string_view json);

/// "97.5±0.6": percent with one decimal.
std::string format_accuracy(double mean, double stddev);

struct Improvement {
  Method method;
  std::vector<double> per_run;  // augmented minus random, percentage points
  double mean = 0.0;
};

/// Paired per-run difference of two reports built from the same seeds.
Improvement paired_improvement(const RunReport& random, const RunReport& augmented);

}  // namespace tsml
