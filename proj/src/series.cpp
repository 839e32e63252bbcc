#include "tsml/series.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string_view>

namespace tsml {

namespace {

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t pos = 0;
  while (true) {
    const auto comma = line.find(',', pos);
    if (comma == std::string_view::npos) {
      cells.push_back(line.substr(pos));
      break;
    }
    cells.push_back(line.substr(pos, comma - pos));
    pos = comma + 1;
  }
  return cells;
}

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

[[noreturn]] void fail_at(std::size_t row, const std::string& what) {
  throw std::runtime_error(what + " at row " + std::to_string(row));
}

double parse_real(std::string_view cell, std::size_t row) {
  cell = trim(cell);
  if (!cell.empty() && cell.front() == '+') cell.remove_prefix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (cell.empty() || ec != std::errc{} || ptr != cell.data() + cell.size()) {
    fail_at(row, "non-numeric feature cell '" + std::string(cell) + "'");
  }
  if (!std::isfinite(v)) fail_at(row, "non-finite feature cell '" + std::string(cell) + "'");
  return v;
}

long long parse_index(std::string_view cell, std::size_t row) {
  cell = trim(cell);
  long long v = 0;
  const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (cell.empty() || ec != std::errc{} || ptr != cell.data() + cell.size()) {
    fail_at(row, "malformed time index '" + std::string(cell) + "'");
  }
  return v;
}

}  // namespace

LabeledStream::LabeledStream(Eigen::MatrixXd values, std::vector<Label> labels,
                             std::vector<std::string> label_names,
                             std::vector<std::string> feature_names)
    : values_(std::move(values)),
      labels_(std::move(labels)),
      label_names_(std::move(label_names)),
      feature_names_(std::move(feature_names)) {
  if (values_.rows() < 1) throw std::invalid_argument("stream needs at least one feature");
  if (labels_.empty()) throw std::invalid_argument("stream needs at least one time step");
  if (static_cast<std::size_t>(values_.cols()) != labels_.size()) {
    throw std::invalid_argument("value columns and label count differ");
  }
  if (feature_names_.empty()) {
    for (Eigen::Index i = 0; i < values_.rows(); ++i) feature_names_.push_back("f" + std::to_string(i));
  }
  if (feature_names_.size() != dims()) throw std::invalid_argument("feature name count differs from d");
  if (!values_.allFinite()) throw std::invalid_argument("stream contains non-finite values");
  for (Label l : labels_) {
    if (l >= label_names_.size()) throw std::invalid_argument("label id without a name");
  }
}

LabeledStream LabeledStream::from_strings(Eigen::MatrixXd values,
                                          const std::vector<std::string>& labels,
                                          std::vector<std::string> feature_names) {
  std::map<std::string, Label> ids;
  std::vector<std::string> names;
  std::vector<Label> dense;
  dense.reserve(labels.size());
  for (const auto& s : labels) {
    auto [it, inserted] = ids.try_emplace(s, names.size());
    if (inserted) names.push_back(s);
    dense.push_back(it->second);
  }
  return {std::move(values), std::move(dense), std::move(names), std::move(feature_names)};
}

Sample Sample::from_flat(const Eigen::Ref<const Eigen::VectorXd>& flat, std::size_t d,
                         std::size_t w, Label label, Origin origin) {
  if (static_cast<std::size_t>(flat.size()) != d * w) {
    throw std::invalid_argument("flat vector length differs from d*w");
  }
  Sample s;
  s.window = Eigen::Map<const Eigen::MatrixXd>(flat.data(), static_cast<Eigen::Index>(d),
                                               static_cast<Eigen::Index>(w));
  s.label = label;
  s.origin = origin;
  return s;
}

LabeledStream load_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());

  std::string line;
  if (!std::getline(in, line) || trim(line).empty()) throw std::runtime_error("empty file " + path.string());
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);

  const auto header = split_commas(trim(line));
  if (header.size() < 3 || trim(header.front()) != "t" || trim(header.back()) != "label") {
    throw std::runtime_error("malformed header: expected t,<features...>,label");
  }
  const std::size_t d = header.size() - 2;
  std::vector<std::string> feature_names;
  for (std::size_t i = 1; i + 1 < header.size(); ++i) feature_names.emplace_back(trim(header[i]));

  std::vector<double> data;
  std::vector<std::string> labels;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    const auto body = trim(line);
    if (body.empty()) continue;
    ++row;
    const auto cells = split_commas(body);
    if (cells.size() != d + 2) {
      fail_at(row, "expected " + std::to_string(d + 2) + " cells, got " + std::to_string(cells.size()));
    }
    const long long t = parse_index(cells.front(), row);
    const auto expected = static_cast<long long>(row - 1);
    if (t != expected) {
      if (t == expected - 1) fail_at(row, "duplicate time index");
      fail_at(row, "non-contiguous time index");
    }
    for (std::size_t i = 0; i < d; ++i) data.push_back(parse_real(cells[i + 1], row));
    const auto label = trim(cells.back());
    if (label.empty()) fail_at(row, "empty label");
    labels.emplace_back(label);
  }
  if (labels.empty()) throw std::runtime_error("empty file " + path.string() + ": no data rows");

  Eigen::MatrixXd values = Eigen::Map<Eigen::MatrixXd>(data.data(), static_cast<Eigen::Index>(d),
                                                       static_cast<Eigen::Index>(labels.size()));
  return LabeledStream::from_strings(std::move(values), labels, std::move(feature_names));
}

void write_csv(const LabeledStream& stream, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.precision(17);
  out << 't';
  for (const auto& name : stream.feature_names()) out << ',' << name;
  out << ",label\n";
  for (std::size_t t = 0; t < stream.length(); ++t) {
    out << t;
    for (std::size_t i = 0; i < stream.dims(); ++i) {
      out << ',' << stream.values()(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(t));
    }
    out << ',' << stream.label_name(stream.labels()[t]) << '\n';
  }
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

std::vector<Segment> segments(const LabeledStream& stream) {
  std::vector<Segment> out;
  const auto& labels = stream.labels();
  std::size_t start = 0;
  for (std::size_t t = 1; t <= labels.size(); ++t) {
    if (t == labels.size() || labels[t] != labels[start]) {
      out.push_back({start, t, labels[start]});
      start = t;
    }
  }
  return out;
}

std::vector<Segment> truncate_segments(const std::vector<Segment>& segs, std::size_t len,
                                       std::mt19937_64& rng,
                                       const std::vector<std::string>& label_names) {
  if (len == 0) throw std::invalid_argument("truncation length must be positive");
  std::map<Label, std::vector<Segment>> by_label;
  for (const auto& s : segs) by_label[s.label];
  for (const auto& s : segs) {
    if (s.length() >= len) by_label[s.label].push_back(s);
  }

  std::vector<Segment> out;
  for (const auto& [label, donors] : by_label) {
    if (donors.empty()) {
      const std::string name = label < label_names.size() ? label_names[label] : std::to_string(label);
      throw std::runtime_error("no segment of label '" + name + "' has " + std::to_string(len) +
                               " observations");
    }
    std::uniform_int_distribution<std::size_t> pick(0, donors.size() - 1);
    const Segment& donor = donors[pick(rng)];
    std::uniform_int_distribution<std::size_t> offset(0, donor.length() - len);
    const std::size_t start = donor.start + offset(rng);
    out.push_back({start, start + len, label});
  }
  return out;
}

LabeledStream zscore(const LabeledStream& stream) {
  Eigen::MatrixXd v = stream.values();
  const Eigen::VectorXd mean = v.rowwise().mean();
  v.colwise() -= mean;
  const double n = static_cast<double>(v.cols());
  for (Eigen::Index i = 0; i < v.rows(); ++i) {
    const double sd = std::sqrt(v.row(i).squaredNorm() / n);
    if (sd > 0.0) v.row(i) /= sd;
  }
  return {std::move(v), stream.labels(), stream.label_names(), stream.feature_names()};
}

}  // namespace tsml
