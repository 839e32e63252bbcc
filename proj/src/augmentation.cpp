#include "tsml/augmentation.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <stdexcept>
#include <string>

namespace tsml {

namespace {

std::map<Label, std::vector<std::size_t>> indices_by_label(std::span<const Sample> samples) {
  std::map<Label, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < samples.size(); ++i) groups[samples[i].label].push_back(i);
  return groups;
}

std::vector<Sample> gather(std::span<const Sample> samples, std::vector<std::size_t> idx) {
  std::sort(idx.begin(), idx.end());
  std::vector<Sample> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) out.push_back(samples[i]);
  return out;
}

std::vector<std::size_t> choose(std::vector<std::size_t> pool, std::size_t n, std::mt19937_64& rng) {
  std::shuffle(pool.begin(), pool.end(), rng);
  pool.resize(n);
  return pool;
}

}  // namespace

std::vector<Sample> slide(const LabeledStream& stream, std::span<const Segment> segs,
                          std::size_t w, std::size_t stream_id) {
  if (w == 0) throw std::invalid_argument("window length must be positive");
  std::vector<Sample> out;
  const auto d = static_cast<Eigen::Index>(stream.dims());
  for (const auto& seg : segs) {
    if (seg.end > stream.length() || seg.start >= seg.end) {
      throw std::invalid_argument("segment outside stream bounds");
    }
    if (seg.length() < w) continue;
    for (std::size_t t = seg.start; t + w <= seg.end; ++t) {
      Sample s;
      s.window = stream.values().block(0, static_cast<Eigen::Index>(t), d, static_cast<Eigen::Index>(w));
      s.label = seg.label;
      s.origin = {stream_id, t};
      out.push_back(std::move(s));
    }
  }
  return out;
}

std::vector<Sample> draw_per_label(std::span<const Sample> samples, std::size_t n,
                                   std::uint64_t seed,
                                   const std::vector<std::string>& label_names) {
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> picked;
  for (auto& [label, idx] : indices_by_label(samples)) {
    if (idx.size() < n) {
      const std::string name = label < label_names.size() ? label_names[label] : std::to_string(label);
      throw std::runtime_error("label '" + name + "' has only " + std::to_string(idx.size()) +
                               " valid windows, " + std::to_string(n) + " requested");
    }
    const auto chosen = choose(std::move(idx), n, rng);
    picked.insert(picked.end(), chosen.begin(), chosen.end());
  }
  return gather(samples, std::move(picked));
}

std::vector<Sample> cap_per_label(std::span<const Sample> samples, std::size_t n,
                                  std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> picked;
  for (auto& [label, idx] : indices_by_label(samples)) {
    const auto chosen = idx.size() <= n ? std::move(idx) : choose(std::move(idx), n, rng);
    picked.insert(picked.end(), chosen.begin(), chosen.end());
  }
  return gather(samples, std::move(picked));
}

std::vector<Sample> random_extract(const LabeledStream& stream, std::span<const Segment> segs,
                                   std::size_t w, std::size_t n_per_label, std::uint64_t seed) {
  const auto all = slide(stream, segs, w);
  for (const auto& seg : segs) {
    const bool has_window = std::any_of(all.begin(), all.end(),
                                        [&](const Sample& s) { return s.label == seg.label; });
    if (!has_window) {
      throw std::runtime_error("label '" + stream.label_name(seg.label) + "' admits no window of length " +
                               std::to_string(w));
    }
  }
  return draw_per_label(all, n_per_label, seed, stream.label_names());
}

Split holdout_split(std::span<const Sample> samples, double test_fraction, std::uint64_t seed,
                    std::size_t gap) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw std::invalid_argument("test fraction must lie in (0, 1)");
  }
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> train_idx;
  std::vector<std::size_t> test_idx;

  for (auto& [label, idx] : indices_by_label(samples)) {
    if (idx.size() < 2) {
      throw std::runtime_error("label " + std::to_string(label) + " has fewer than 2 samples");
    }
    const auto n = idx.size();
    auto n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(n)));
    n_test = std::clamp<std::size_t>(n_test, 1, n - 1);

    if (gap == 0) {
      std::shuffle(idx.begin(), idx.end(), rng);
      test_idx.insert(test_idx.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_test));
      train_idx.insert(train_idx.end(), idx.begin() + static_cast<std::ptrdiff_t>(n_test), idx.end());
      continue;
    }

    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
      const auto& oa = samples[a].origin;
      const auto& ob = samples[b].origin;
      return std::tie(oa.stream, oa.start) < std::tie(ob.stream, ob.start);
    });
    std::uniform_int_distribution<std::size_t> pick(0, n - n_test);
    const std::size_t first = pick(rng);
    std::map<std::size_t, std::vector<std::size_t>> test_starts;
    for (std::size_t k = first; k < first + n_test; ++k) {
      test_idx.push_back(idx[k]);
      test_starts[samples[idx[k]].origin.stream].push_back(samples[idx[k]].origin.start);
    }
    std::size_t kept = 0;
    for (std::size_t k = 0; k < n; ++k) {
      if (k >= first && k < first + n_test) continue;
      const auto& o = samples[idx[k]].origin;
      bool clear = true;
      if (auto it = test_starts.find(o.stream); it != test_starts.end()) {
        // test starts are sorted because idx is
        const auto& starts = it->second;
        auto pos = std::lower_bound(starts.begin(), starts.end(), o.start);
        if (pos != starts.end() && *pos - o.start < gap) clear = false;
        if (pos != starts.begin() && o.start - *std::prev(pos) < gap) clear = false;
      }
      if (clear) {
        train_idx.push_back(idx[k]);
        ++kept;
      }
    }
    if (kept == 0) {
      throw std::runtime_error("label " + std::to_string(label) + " has no training samples left after the gap");
    }
  }
  return {gather(samples, std::move(train_idx)), gather(samples, std::move(test_idx))};
}

}  // namespace tsml
