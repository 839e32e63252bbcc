#pragma once

#include "tsml/series.hpp"

#include <cstddef>
#include <functional>
#include <span>

namespace tsml {

using DistanceFn = std::function<double(const Sample&, const Sample&)>;

/// Majority label among the k nearest training samples. Distance ties go to
/// the lower train index; vote ties go to the label of the nearest member
/// among the tied labels.
Label knn_classify(const Sample& query, std::span<const Sample> train, std::size_t k, const DistanceFn& dist);

/// Same rule applied to precomputed distances (one per train sample).
Label knn_vote(std::span<const double> distances, std::span<const Sample> train, std::size_t k);

}  // namespace tsml
