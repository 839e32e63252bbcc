#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

namespace tsml {

/// Dense label id assigned at ingestion; index into LabeledStream::label_names.
using Label = std::size_t;

/// A multivariate series with one state label per time step.
///
/// `values` is d x T (one column per time step). Label strings are mapped to
/// dense ids in order of first appearance.
class LabeledStream {
 public:
  LabeledStream(Eigen::MatrixXd values, std::vector<Label> labels,
                std::vector<std::string> label_names,
                std::vector<std::string> feature_names);

  /// Builds a stream from per-step label strings, assigning ids by first
  /// appearance.
  static LabeledStream from_strings(Eigen::MatrixXd values,
                                    const std::vector<std::string>& labels,
                                    std::vector<std::string> feature_names);

  std::size_t dims() const { return static_cast<std::size_t>(values_.rows()); }
  std::size_t length() const { return labels_.size(); }

  const Eigen::MatrixXd& values() const { return values_; }
  const std::vector<Label>& labels() const { return labels_; }
  const std::vector<std::string>& label_names() const { return label_names_; }
  const std::vector<std::string>& feature_names() const { return feature_names_; }
  const std::string& label_name(Label id) const { return label_names_.at(id); }

 private:
  Eigen::MatrixXd values_;
  std::vector<Label> labels_;
  std::vector<std::string> label_names_;
  std::vector<std::string> feature_names_;
};

/// Half-open time range [start, end) with a constant label.
struct Segment {
  std::size_t start = 0;
  std::size_t end = 0;
  Label label = 0;

  std::size_t length() const { return end - start; }
  bool operator==(const Segment&) const = default;
};

struct Origin {
  std::size_t stream = 0;
  std::size_t start = 0;
  bool operator==(const Origin&) const = default;
};

/// A d x w window of consecutive observations with its state label.
///
/// Eigen stores the window column-major, so the flattened vector is
/// time-major: [x_t; x_{t+1}; ...; x_{t+w-1}].
struct Sample {
  Eigen::MatrixXd window;
  Label label = 0;
  Origin origin;

  std::size_t dims() const { return static_cast<std::size_t>(window.rows()); }
  std::size_t width() const { return static_cast<std::size_t>(window.cols()); }

  Eigen::Map<const Eigen::VectorXd> flat() const {
    return {window.data(), window.size()};
  }

  static Sample from_flat(const Eigen::Ref<const Eigen::VectorXd>& flat, std::size_t d,
                          std::size_t w, Label label, Origin origin = {});
};

/// Parses `t,<f1..fd>,label`. Throws std::runtime_error naming the offending
/// data row (1-based, the header is not counted).
LabeledStream load_csv(const std::filesystem::path& path);

/// Writes the canonical CSV form with 17 significant digits.
void write_csv(const LabeledStream& stream, const std::filesystem::path& path);

/// Maximal runs of equal labels in temporal order.
std::vector<Segment> segments(const LabeledStream& stream);

/// Picks, per label, one donor run of length >= len uniformly at random and a
/// uniformly random start offset inside it. Output is ordered by label id.
std::vector<Segment> truncate_segments(const std::vector<Segment>& segs, std::size_t len,
                                       std::mt19937_64& rng,
                                       const std::vector<std::string>& label_names = {});

/// Per-feature z-score over the whole stream. Constant features are centred
/// only.
LabeledStream zscore(const LabeledStream& stream);

}  // namespace tsml
