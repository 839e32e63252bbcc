#pragma once

#include "tsml/series.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace tsml {

/// Every stride-1 window of length w lying wholly inside one segment.
/// Segments shorter than w contribute nothing. Order: segment order, then start.
std::vector<Sample> slide(const LabeledStream& stream, std::span<const Segment> segs,
                          std::size_t w, std::size_t stream_id = 0);

/// Draws exactly n samples per label uniformly without replacement. The
/// result keeps the input order. Throws naming the label when a class is short.
std::vector<Sample> draw_per_label(std::span<const Sample> samples, std::size_t n,
                                   std::uint64_t seed,
                                   const std::vector<std::string>& label_names = {});

/// Like draw_per_label but takes min(n, available) per label.
std::vector<Sample> cap_per_label(std::span<const Sample> samples, std::size_t n,
                                  std::uint64_t seed);

/// Random windows from the valid start positions of each label.
std::vector<Sample> random_extract(const LabeledStream& stream, std::span<const Segment> segs,
                                   std::size_t w, std::size_t n_per_label, std::uint64_t seed);

struct Split {
  std::vector<Sample> train;
  std::vector<Sample> test;
};

/// Stratified train/test split.
///
/// With `gap` > 0, each label's test set is a contiguous run of windows (in
/// origin order), and training windows whose start lies within `gap` steps of
/// any test start in the same stream are dropped. Pass gap = w to rule out
/// overlapping train/test windows.
Split holdout_split(std::span<const Sample> samples, double test_fraction, std::uint64_t seed,
                    std::size_t gap = 0);

}  // namespace tsml
