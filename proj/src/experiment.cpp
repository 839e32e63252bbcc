#include "tsml/experiment.hpp"

#include "tsml/augmentation.hpp"
#include "tsml/knn.hpp"
#include "tsml/metric.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <limits>
#include <random>
#include <sstream>
#include <stdexcept>
#include <thread>

#ifndef TSML_VERSION
#define TSML_VERSION "0.0.0"
#endif
#ifndef TSML_GIT_COMMIT
#define TSML_GIT_COMMIT "unknown"
#endif

namespace tsml {

namespace {

using json = nlohmann::ordered_json;
using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string_view to_string(LearnMode m) {
  return m == LearnMode::kTimeInvariant ? "time_invariant" : "unconstrained";
}

LearnMode parse_learn_mode(std::string_view s) {
  if (s == "time_invariant") return LearnMode::kTimeInvariant;
  if (s == "unconstrained") return LearnMode::kUnconstrained;
  throw std::invalid_argument("unknown learn mode '" + std::string(s) + "'");
}

json learn_to_json(const LearnConfig& c) {
  return {{"mode", to_string(c.mode)},
          {"c", c.c},
          {"k_targets", c.k_targets},
          {"rho", c.rho},
          {"alpha", c.alpha},
          {"max_outer", c.max_outer},
          {"inner_max", c.inner_max},
          {"inner_tol", c.inner_tol},
          {"eps_primal", c.eps_primal},
          {"eps_dual", c.eps_dual},
          {"max_halvings", c.max_halvings},
          {"active_set_threshold", c.active_set_threshold},
          {"finalize", c.finalize},
          {"seed", c.seed}};
}

template <class T>
void read_if(const json& j, const char* key, T& field) {
  if (j.contains(key)) field = j.at(key).get<T>();
}

void learn_from_json(const json& j, LearnConfig& c) {
  if (j.contains("mode")) c.mode = parse_learn_mode(j.at("mode").get<std::string>());
  read_if(j, "c", c.c);
  read_if(j, "k_targets", c.k_targets);
  read_if(j, "rho", c.rho);
  read_if(j, "alpha", c.alpha);
  read_if(j, "max_outer", c.max_outer);
  read_if(j, "inner_max", c.inner_max);
  read_if(j, "inner_tol", c.inner_tol);
  read_if(j, "eps_primal", c.eps_primal);
  read_if(j, "eps_dual", c.eps_dual);
  read_if(j, "max_halvings", c.max_halvings);
  read_if(j, "active_set_threshold", c.active_set_threshold);
  read_if(j, "finalize", c.finalize);
  read_if(j, "seed", c.seed);
}

json config_to_json(const ExperimentConfig& c) {
  const bool unbounded = c.dtw.band == std::numeric_limits<std::size_t>::max();
  return {{"data", c.data.string()},
          {"window", c.window},
          {"k", c.k},
          {"method", to_string(c.method)},
          {"segment_length", c.segment_length},
          {"train_mode", to_string(c.train_mode)},
          {"samples_per_label", c.samples_per_label},
          {"augmented_cap", c.augmented_cap},
          {"test_fraction", c.test_fraction},
          {"runs", c.runs},
          {"seed", c.seed},
          {"normalize", c.normalize},
          {"leakage_gap", c.leakage_gap},
          {"dtw", {{"variant", "dependent"},
                   {"band", unbounded ? json(nullptr) : json(c.dtw.band)},
                   {"normalize", c.dtw.normalize}}},
          {"learn", learn_to_json(c.learn)}};
}

void config_from_json(const json& j, ExperimentConfig& c) {
  if (!j.is_object()) throw std::invalid_argument("config must be a JSON object");
  if (j.contains("data")) c.data = j.at("data").get<std::string>();
  read_if(j, "window", c.window);
  read_if(j, "k", c.k);
  if (j.contains("method")) c.method = parse_method(j.at("method").get<std::string>());
  read_if(j, "segment_length", c.segment_length);
  if (j.contains("train_mode")) c.train_mode = parse_train_mode(j.at("train_mode").get<std::string>());
  read_if(j, "samples_per_label", c.samples_per_label);
  read_if(j, "augmented_cap", c.augmented_cap);
  read_if(j, "test_fraction", c.test_fraction);
  read_if(j, "runs", c.runs);
  read_if(j, "seed", c.seed);
  read_if(j, "normalize", c.normalize);
  read_if(j, "leakage_gap", c.leakage_gap);
  if (j.contains("dtw")) {
    const auto& d = j.at("dtw");
    if (d.contains("band")) {
      c.dtw.band = d.at("band").is_null() ? std::numeric_limits<std::size_t>::max()
                                          : d.at("band").get<std::size_t>();
    }
    read_if(d, "normalize", c.dtw.normalize);
  }
  if (j.contains("learn")) learn_from_json(j.at("learn"), c.learn);
  if (j.contains("output")) c.output = j.at("output").get<std::string>();
}

std::vector<Sample> transformed(std::span<const Sample> samples, const Eigen::MatrixXd& factor) {
  std::vector<Sample> out;
  out.reserve(samples.size());
  for (const auto& s : samples) {
    Sample t;
    t.window = factor * s.flat();
    t.label = s.label;
    t.origin = s.origin;
    out.push_back(std::move(t));
  }
  return out;
}

RunResult run_once(const LabeledStream& stream, const std::vector<Segment>& segs, const ExperimentConfig& cfg,
                   std::size_t run) {
  RunResult r;
  r.run = run;
  r.seed = cfg.seed + run;
  const std::size_t labels = stream.label_names().size();
  try {
    auto t0 = Clock::now();
    std::mt19937_64 rng(r.seed);
    const auto kept = cfg.segment_length == 0 ? segs
                                              : truncate_segments(segs, cfg.segment_length, rng, stream.label_names());
    const auto windows = slide(stream, kept, cfg.window);
    const auto split = holdout_split(windows, cfg.test_fraction, r.seed, cfg.leakage_gap ? cfg.window : 0);

    const bool learned = cfg.method == Method::kLmnn || cfg.method == Method::kMlat;
    const bool augmented = cfg.method == Method::kMlat || cfg.train_mode == TrainMode::kAugmented;
    const auto train = augmented ? cap_per_label(split.train, cfg.augmented_cap, r.seed)
                                 : draw_per_label(split.train, cfg.samples_per_label, r.seed, stream.label_names());
    const auto& test = split.test;
    r.n_train = train.size();
    r.n_test = test.size();
    r.times.sampling = seconds_since(t0);

    std::vector<Sample> train_view;
    std::vector<Sample> test_view;
    if (learned) {
      t0 = Clock::now();
      LearnConfig lc = cfg.learn;
      lc.mode = cfg.method == Method::kMlat ? LearnMode::kTimeInvariant : LearnMode::kUnconstrained;
      const auto result = fit(train, lc);
      r.outer_iterations = result.state.k;
      r.primal_residual = result.state.history.empty() ? 0.0 : result.state.history.back().primal;
      // ||F(a-b)||^2 == ||Fa - Fb||^2, so classify in the transformed space.
      train_view = transformed(train, result.metric.factor());
      test_view = transformed(test, result.metric.factor());
      r.times.fit = seconds_since(t0);
    }

    t0 = Clock::now();
    DistanceFn dist;
    if (cfg.method == Method::kDtw) {
      dist = [opts = cfg.dtw](const Sample& a, const Sample& b) { return mdtw(a, b, opts); };
    } else {
      dist = [](const Sample& a, const Sample& b) { return euclidean(a, b); };
    }
    const auto& train_set = learned ? train_view : train;
    const auto& test_set = learned ? test_view : test;
    r.confusion.assign(labels, std::vector<std::size_t>(labels, 0));
    std::size_t correct = 0;
    for (const auto& q : test_set) {
      const Label predicted = knn_classify(q, train_set, cfg.k, dist);
      ++r.confusion[q.label][predicted];
      if (predicted == q.label) ++correct;
    }
    r.accuracy = test_set.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(test_set.size());
    r.times.classify = seconds_since(t0);
    r.ok = true;
  } catch (const std::exception& e) {
    r.ok = false;
    r.error = e.what();
    r.confusion.assign(labels, std::vector<std::size_t>(labels, 0));
  }
  return r;
}

json run_to_json(const RunResult& r) {
  json j = {{"run", r.run}, {"seed", r.seed}, {"ok", r.ok}};
  if (!r.ok) {
    j["error"] = r.error;
    return j;
  }
  j["accuracy"] = r.accuracy;
  j["n_train"] = r.n_train;
  j["n_test"] = r.n_test;
  j["outer_iterations"] = r.outer_iterations;
  j["primal_residual"] = r.primal_residual;
  j["confusion"] = r.confusion;
  return j;
}

RunResult run_from_json(const json& j) {
  RunResult r;
  r.run = j.at("run").get<std::size_t>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.ok = j.at("ok").get<bool>();
  if (!r.ok) {
    r.error = j.value("error", "");
    return r;
  }
  r.accuracy = j.at("accuracy").get<double>();
  r.n_train = j.at("n_train").get<std::size_t>();
  r.n_test = j.at("n_test").get<std::size_t>();
  r.outer_iterations = j.at("outer_iterations").get<std::size_t>();
  r.primal_residual = j.at("primal_residual").get<double>();
  r.confusion = j.at("confusion").get<std::vector<std::vector<std::size_t>>>();
  return r;
}

}  // namespace

std::string_view to_string(Method m) {
  switch (m) {
    case Method::kEuclidean: return "ed";
    case Method::kDtw: return "dtw";
    case Method::kLmnn: return "lmnn";
    case Method::kMlat: return "mlat";
  }
  return "?";
}

std::string_view to_string(TrainMode m) { return m == TrainMode::kRandom ? "random" : "augmented"; }

Method parse_method(std::string_view s) {
  if (s == "ed") return Method::kEuclidean;
  if (s == "dtw") return Method::kDtw;
  if (s == "lmnn") return Method::kLmnn;
  if (s == "mlat") return Method::kMlat;
  throw std::invalid_argument("unknown method '" + std::string(s) + "' (expected ed, dtw, lmnn or mlat)");
}

TrainMode parse_train_mode(std::string_view s) {
  if (s == "random") return TrainMode::kRandom;
  if (s == "augmented") return TrainMode::kAugmented;
  throw std::invalid_argument("unknown train mode '" + std::string(s) + "' (expected random or augmented)");
}

void ExperimentConfig::validate() const {
  if (runs < 1) throw std::invalid_argument("runs must be >= 1");
  if (window < 1) throw std::invalid_argument("window must be >= 1");
  if (k < 1) throw std::invalid_argument("k must be >= 1");
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw std::invalid_argument("test fraction must lie in (0, 1)");
  if (segment_length != 0 && segment_length < window) {
    throw std::invalid_argument("segment length shorter than the window");
  }
  if (method == Method::kLmnn || method == Method::kMlat) {
    LearnConfig lc = learn;
    lc.mode = method == Method::kMlat ? LearnMode::kTimeInvariant : LearnMode::kUnconstrained;
    lc.validate();
  }
}

std::size_t RunReport::successful() const {
  return static_cast<std::size_t>(std::count_if(runs.begin(), runs.end(), [](const RunResult& r) { return r.ok; }));
}

std::vector<std::vector<std::size_t>> RunReport::total_confusion() const {
  const std::size_t n = label_names.size();
  std::vector<std::vector<std::size_t>> total(n, std::vector<std::size_t>(n, 0));
  for (const auto& r : runs) {
    if (!r.ok) continue;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) total[i][j] += r.confusion[i][j];
    }
  }
  return total;
}

void summarize(RunReport& report) {
  std::vector<double> acc;
  for (const auto& r : report.runs) {
    if (r.ok) acc.push_back(r.accuracy);
  }
  report.partial = acc.size() != report.runs.size();
  report.mean = 0.0;
  report.stddev = 0.0;
  if (acc.empty()) return;
  double sum = 0.0;
  for (double a : acc) sum += a;
  report.mean = sum / static_cast<double>(acc.size());
  if (acc.size() > 1) {
    double ss = 0.0;
    for (double a : acc) ss += (a - report.mean) * (a - report.mean);
    report.stddev = std::sqrt(ss / static_cast<double>(acc.size() - 1));
  }
}

std::size_t bench_threads() {
  std::size_t n = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("BENCH_THREADS")) {
    char* end = nullptr;
    const unsigned long cap = std::strtoul(env, &end, 10);
    if (end != env && cap > 0) n = std::min<std::size_t>(n, cap);
  }
  return n;
}

RunReport run_experiment(const LabeledStream& input, const ExperimentConfig& cfg) {
  cfg.validate();
  const LabeledStream stream = cfg.normalize ? zscore(input) : input;
  const auto segs = segments(stream);

  RunReport report;
  report.config = cfg;
  report.label_names = stream.label_names();
  report.version = TSML_VERSION;
  report.commit = TSML_GIT_COMMIT;
  report.runs.resize(cfg.runs);

  const std::size_t workers = std::min(bench_threads(), cfg.runs);
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t r = next++; r < cfg.runs; r = next++) report.runs[r] = run_once(stream, segs, cfg, r);
  };
  if (workers <= 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < workers; ++t) pool.emplace_back(work);
  }
  summarize(report);
  return report;
}

RunReport run_experiment(const ExperimentConfig& cfg) {
  return run_experiment(load_csv(cfg.data), cfg);
}

std::string format_accuracy(double mean, double stddev) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.1f±%.1f", 100.0 * mean, 100.0 * stddev);
  return buf;
}

std::string config_json(const ExperimentConfig& cfg) { return config_to_json(cfg).dump(2); }

void apply_config_json(ExperimentConfig& cfg, std::string_view text) {
  config_from_json(json::parse(text), cfg);
}

std::string report_json(const RunReport& report) {
  json runs = json::array();
  for (const auto& r : report.runs) runs.push_back(run_to_json(r));
  const json j = {{"tool", "tsml-bench"},
                  {"version", report.version},
                  {"commit", report.commit},
                  {"method", to_string(report.config.method)},
                  {"train_mode", report.config.method == Method::kMlat ? "augmented" : to_string(report.config.train_mode)},
                  {"config", config_to_json(report.config)},
                  {"labels", report.label_names},
                  {"runs", runs},
                  {"successful_runs", report.successful()},
                  {"partial", report.partial},
                  {"mean_accuracy", report.mean},
                  {"stddev_accuracy", report.stddev},
                  {"confusion_total", report.total_confusion()}};
  return j.dump(2) + "\n";
}

RunReport parse_report(std::string_view text) {
  const json j = json::parse(text);
  RunReport r;
  config_from_json(j.at("config"), r.config);
  r.label_names = j.at("labels").get<std::vector<std::string>>();
  for (const auto& run : j.at("runs")) r.runs.push_back(run_from_json(run));
  r.mean = j.at("mean_accuracy").get<double>();
  r.stddev = j.at("stddev_accuracy").get<double>();
  r.partial = j.at("partial").get<bool>();
  r.version = j.at("version").get<std::string>();
  r.commit = j.at("commit").get<std::string>();
  return r;
}

RunReport load_report(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_report(buf.str());
}

void emit_report(const RunReport& report, const std::filesystem::path& stem) {
  if (report.successful() == 0) {
    std::string cause = report.runs.empty() ? "no runs" : report.runs.front().error;
    throw std::runtime_error("report has no successful run: " + cause);
  }
  if (stem.has_parent_path()) std::filesystem::create_directories(stem.parent_path());

  auto json_path = stem;
  json_path += ".json";
  {
    std::ofstream out(json_path);
    if (!out) throw std::runtime_error("cannot write " + json_path.string());
    out << report_json(report);
    if (!out) throw std::runtime_error("write failed for " + json_path.string());
  }

  auto txt_path = stem;
  txt_path += ".txt";
  std::ofstream out(txt_path);
  if (!out) throw std::runtime_error("cannot write " + txt_path.string());
  const auto& cfg = report.config;
  out << "Accuracy (%) of kNN with standard deviation (k=" << cfg.k << ", w=" << cfg.window << ")\n\n";
  out << std::left << std::setw(8) << "method" << std::setw(11) << "train" << "accuracy\n";
  out << std::setw(8) << to_string(cfg.method) << std::setw(11)
      << (cfg.method == Method::kMlat ? "augmented" : to_string(cfg.train_mode))
      << format_accuracy(report.mean, report.stddev) << (report.partial ? "  (partial)" : "") << "\n\n";

  out << "run  seed  accuracy  n_train  n_test  sampling_s  fit_s  classify_s\n";
  out << std::fixed;
  for (const auto& r : report.runs) {
    out << std::setw(5) << r.run << std::setw(6) << r.seed;
    if (!r.ok) {
      out << "failed: " << r.error << '\n';
      continue;
    }
    out << std::setprecision(1) << std::setw(10) << 100.0 * r.accuracy << std::setw(9) << r.n_train << std::setw(8)
        << r.n_test << std::setprecision(3) << std::setw(12) << r.times.sampling << std::setw(7) << r.times.fit
        << std::setw(12) << r.times.classify << '\n';
  }

  out << "\nconfusion (rows: true, columns: predicted), summed over runs\n";
  const auto total = report.total_confusion();
  for (std::size_t i = 0; i < total.size(); ++i) {
    out << std::setw(12) << report.label_names[i];
    for (std::size_t v : total[i]) out << ' ' << std::right << std::setw(6) << v << std::left;
    out << '\n';
  }
  out << "\nversion " << report.version << " (" << report.commit << ")\n";
  if (!out) throw std::runtime_error("write failed for " + txt_path.string());
}

Improvement paired_improvement(const RunReport& random, const RunReport& augmented) {
  if (random.runs.size() != augmented.runs.size()) throw std::invalid_argument("reports differ in run count");
  Improvement imp{random.config.method, {}, 0.0};
  for (std::size_t r = 0; r < random.runs.size(); ++r) {
    const auto& a = random.runs[r];
    const auto& b = augmented.runs[r];
    if (a.seed != b.seed) throw std::invalid_argument("reports are not paired by seed");
    if (a.ok && b.ok) imp.per_run.push_back(100.0 * (b.accuracy - a.accuracy));
  }
  if (!imp.per_run.empty()) {
    double sum = 0.0;
    for (double v : imp.per_run) sum += v;
    imp.mean = sum / static_cast<double>(imp.per_run.size());
  }
  return imp;
}

}  // namespace tsml
