// Benchmark and standalone learner/classifier CLI.
#include "tsml/augmentation.hpp"
#include "tsml/experiment.hpp"
#include "tsml/knn.hpp"
#include "tsml/learner.hpp"
#include "tsml/metric.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace tsml;

namespace {

void add_learn_options(CLI::App& app, LearnConfig& lc) {
  app.add_option("--c", lc.c, "weight of the impostor hinge term")->capture_default_str();
  app.add_option("--k-targets", lc.k_targets, "target neighbors per sample")->capture_default_str();
  app.add_option("--rho", lc.rho, "ADMM penalty")->capture_default_str();
  app.add_option("--alpha", lc.alpha, "gradient step on the factor")->capture_default_str();
  app.add_option("--max-outer", lc.max_outer, "outer ADMM iterations")->capture_default_str();
  app.add_option("--inner-max", lc.inner_max, "gradient steps per M-update")->capture_default_str();
  app.add_option("--inner-tol", lc.inner_tol, "relative decrease that ends an M-update")->capture_default_str();
  app.add_option("--eps-primal", lc.eps_primal)->capture_default_str();
  app.add_option("--eps-dual", lc.eps_dual)->capture_default_str();
  app.add_option("--active-set-threshold", lc.active_set_threshold)->capture_default_str();
  app.add_flag("--finalize", lc.finalize, "project the result and clip negative eigenvalues");
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::vector<Sample> all_windows(const LabeledStream& stream, std::size_t w) {
  const auto segs = segments(stream);
  return slide(stream, segs, w);
}

int run_bench(ExperimentConfig base, const std::string& methods, const std::string& train_modes,
              const std::string& config_path) {
  if (!config_path.empty()) apply_config_json(base, read_file(config_path));
  if (base.data.empty()) throw std::invalid_argument("--data is required");
  if (base.output.empty()) base.output = "results";

  std::vector<Method> method_list;
  for (const auto& m : split_list(methods)) method_list.push_back(parse_method(m));
  if (method_list.empty()) method_list.push_back(base.method);
  std::vector<TrainMode> modes;
  if (train_modes == "both") {
    modes = {TrainMode::kRandom, TrainMode::kAugmented};
  } else if (!train_modes.empty()) {
    modes = {parse_train_mode(train_modes)};
  } else {
    modes = {base.train_mode};
  }

  const LabeledStream stream = load_csv(base.data);
  std::ostringstream summary;
  summary << "Accuracy (%) of kNN with standard deviation (k=" << base.k << ", w=" << base.window
          << ", runs=" << base.runs << ")\n\n";
  summary << std::left << std::setw(8) << "method" << std::setw(11) << "train" << "accuracy\n";
  std::ostringstream gains;
  bool partial = false;

  for (Method m : method_list) {
    std::vector<RunReport> reports;
    for (TrainMode mode : modes) {
      // The time-invariant learner always trains on slide windows.
      if (m == Method::kMlat && !reports.empty()) break;
      ExperimentConfig cfg = base;
      cfg.method = m;
      cfg.train_mode = m == Method::kMlat ? TrainMode::kAugmented : mode;
      auto report = run_experiment(stream, cfg);
      std::string stem = std::string(to_string(m));
      if (m != Method::kMlat && modes.size() > 1) stem += "_" + std::string(to_string(cfg.train_mode));
      emit_report(report, base.output / stem);
      for (const auto& r : report.runs) {
        if (!r.ok) std::cerr << "bench: " << stem << " run " << r.run << " failed: " << r.error << '\n';
      }
      partial = partial || report.partial;
      summary << std::setw(8) << to_string(m) << std::setw(11) << to_string(cfg.train_mode)
              << format_accuracy(report.mean, report.stddev) << (report.partial ? "  (partial)" : "") << '\n';
      reports.push_back(std::move(report));
    }
    if (reports.size() == 2) {
      const auto imp = paired_improvement(reports[0], reports[1]);
      char buf[32];
      std::snprintf(buf, sizeof buf, "%+.1f", imp.mean);
      gains << std::setw(8) << to_string(m) << buf << '\n';
    }
  }
  if (!gains.str().empty()) {
    summary << "\nAccuracy improvement (percentage points) on augmented samples, paired by run\n" << gains.str();
  }
  std::ofstream out(base.output / "summary.txt");
  if (!out) throw std::runtime_error("cannot write " + (base.output / "summary.txt").string());
  out << summary.str();
  std::cout << summary.str();
  if (partial) std::cerr << "bench: some runs failed; reports are marked partial\n";
  return 0;
}

int run_fit(const fs::path& data, std::size_t window, const std::string& method, std::size_t cap,
            std::uint64_t seed, bool normalize, LearnConfig lc, const fs::path& out, const fs::path& log) {
  const Method m = parse_method(method);
  if (m != Method::kMlat && m != Method::kLmnn) throw std::invalid_argument("fit supports mlat or lmnn");
  lc.mode = m == Method::kMlat ? LearnMode::kTimeInvariant : LearnMode::kUnconstrained;
  lc.seed = seed;
  const LabeledStream raw = load_csv(data);
  const LabeledStream stream = normalize ? zscore(raw) : raw;
  const auto train = cap_per_label(all_windows(stream, window), cap, seed);
  const auto result = fit(train, lc);
  save_metric(result.metric, out);
  if (!log.empty()) {
    std::ofstream lg(log);
    if (!lg) throw std::runtime_error("cannot write " + log.string());
    write_training_log(lg, result.state);
  }
  const double primal = result.state.history.empty() ? 0.0 : result.state.history.back().primal;
  std::cout << "fit " << method << ": " << train.size() << " samples, " << result.state.k
            << " outer iterations, primal residual " << primal << (result.state.converged ? " (converged)" : "")
            << "\n";
  return 0;
}

int run_classify(const fs::path& metric_path, const fs::path& train_path, const fs::path& query_path,
                 std::size_t window, std::size_t k, bool normalize, const fs::path& out) {
  const MetricMatrix metric = load_metric(metric_path);
  if (metric.width() != window) {
    throw std::invalid_argument("metric was learned for window " + std::to_string(metric.width()) + ", got " +
                                std::to_string(window));
  }
  const LabeledStream train_raw = load_csv(train_path);
  const LabeledStream query_raw = load_csv(query_path);
  const LabeledStream train_stream = normalize ? zscore(train_raw) : train_raw;
  const LabeledStream query_stream = normalize ? zscore(query_raw) : query_raw;
  const auto train = all_windows(train_stream, window);
  const auto query = all_windows(query_stream, window);
  DistanceFn dist = [&metric](const Sample& a, const Sample& b) { return mahalanobis(a, b, metric); };

  std::ofstream csv(out);
  if (!csv) throw std::runtime_error("cannot write " + out.string());
  csv << "start,label,predicted\n";
  std::size_t correct = 0;
  for (const auto& q : query) {
    const Label p = knn_classify(q, train, k, dist);
    const auto& truth = query_stream.label_name(q.label);
    const auto& guess = train_stream.label_name(p);
    if (truth == guess) ++correct;
    csv << q.origin.start << ',' << truth << ',' << guess << '\n';
  }
  const double pct = query.empty() ? 0.0 : 100.0 * double(correct) / double(query.size());
  std::cout << "classified " << query.size() << " windows, accuracy " << std::fixed << std::setprecision(1) << pct
            << "%\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"kNN benchmark for learned time-series window metrics"};
  app.require_subcommand(0, 1);

  ExperimentConfig cfg;
  std::string methods = "mlat";
  std::string train_modes;
  std::string config_path;
  std::string data;
  std::string out_dir = "results";
  app.add_option("--data", data, "labeled stream CSV (t,features...,label)");
  app.add_option("--method", methods, "ed, dtw, lmnn, mlat or a comma list")->capture_default_str();
  app.add_option("--window", cfg.window, "window width w")->capture_default_str();
  app.add_option("--k", cfg.k, "neighbors")->capture_default_str();
  app.add_option("--seg-len", cfg.segment_length, "observations kept per label, 0 keeps all")->capture_default_str();
  app.add_option("--runs", cfg.runs)->capture_default_str();
  app.add_option("--seed", cfg.seed, "base seed; run r uses seed + r")->capture_default_str();
  app.add_option("--out", out_dir, "output directory")->capture_default_str();
  app.add_option("--config", config_path, "JSON file whose fields override the flags");
  app.add_option("--train-mode", train_modes, "random, augmented or both (baselines only)");
  app.add_option("--per-label", cfg.samples_per_label, "random training samples per label")->capture_default_str();
  app.add_option("--aug-cap", cfg.augmented_cap, "per-label cap on slide-window training sets")
      ->capture_default_str();
  app.add_option("--test-fraction", cfg.test_fraction)->capture_default_str();
  app.add_option("--dtw-band", cfg.dtw.band, "Sakoe-Chiba band for dtw");
  app.add_flag("--dtw-normalize", cfg.dtw.normalize, "divide dtw cost by the summed lengths");
  bool no_gap = false;
  app.add_flag("--no-gap", no_gap, "allow training windows that overlap test windows");
  app.add_flag("--normalize", cfg.normalize, "z-score each feature before windowing");
  add_learn_options(app, cfg.learn);

  auto* fit_cmd = app.add_subcommand("fit", "learn a metric from a labeled stream");
  std::string fit_data;
  std::string fit_method = "mlat";
  std::size_t fit_window = 10;
  std::size_t fit_cap = 150;
  std::uint64_t fit_seed = 0;
  bool fit_normalize = false;
  std::string fit_out = "metric.txt";
  std::string fit_log;
  LearnConfig fit_lc;
  fit_cmd->add_option("--data", fit_data)->required();
  fit_cmd->add_option("--method", fit_method, "mlat or lmnn")->capture_default_str();
  fit_cmd->add_option("--window", fit_window)->capture_default_str();
  fit_cmd->add_option("--aug-cap", fit_cap, "per-label cap on slide windows")->capture_default_str();
  fit_cmd->add_option("--seed", fit_seed)->capture_default_str();
  fit_cmd->add_flag("--normalize", fit_normalize);
  fit_cmd->add_option("--out", fit_out, "metric file")->capture_default_str();
  fit_cmd->add_option("--log", fit_log, "training log CSV");
  add_learn_options(*fit_cmd, fit_lc);

  auto* cls_cmd = app.add_subcommand("classify", "kNN-classify query windows under a saved metric");
  std::string cls_metric;
  std::string cls_train;
  std::string cls_query;
  std::size_t cls_window = 10;
  std::size_t cls_k = 1;
  bool cls_normalize = false;
  std::string cls_out = "predictions.csv";
  cls_cmd->add_option("--metric", cls_metric)->required();
  cls_cmd->add_option("--train", cls_train)->required();
  cls_cmd->add_option("--query", cls_query)->required();
  cls_cmd->add_option("--window", cls_window)->capture_default_str();
  cls_cmd->add_option("--k", cls_k)->capture_default_str();
  cls_cmd->add_flag("--normalize", cls_normalize);
  cls_cmd->add_option("--out", cls_out)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (fit_cmd->parsed()) {
      return run_fit(fit_data, fit_window, fit_method, fit_cap, fit_seed, fit_normalize, fit_lc, fit_out, fit_log);
    }
    if (cls_cmd->parsed()) {
      return run_classify(cls_metric, cls_train, cls_query, cls_window, cls_k, cls_normalize, cls_out);
    }
    cfg.data = data;
    cfg.output = out_dir;
    cfg.leakage_gap = !no_gap;
    return run_bench(cfg, methods, train_modes, config_path);
  } catch (const std::exception& e) {
    std::cerr << "bench: error: " << e.what() << '\n';
    return 1;
  }
}
