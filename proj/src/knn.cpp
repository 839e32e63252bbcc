#include "tsml/knn.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace tsml {

Label knn_vote(std::span<const double> distances, std::span<const Sample> train, std::size_t k) {
  if (train.empty()) throw std::invalid_argument("knn needs a non-empty training set");
  if (distances.size() != train.size()) throw std::invalid_argument("one distance per training sample expected");
  if (k == 0) throw std::invalid_argument("k must be positive");
  if (k > train.size()) throw std::invalid_argument("k exceeds the training set size");

  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                    [&](std::size_t a, std::size_t b) {
                      return distances[a] < distances[b] || (distances[a] == distances[b] && a < b);
                    });

  std::map<Label, std::size_t> votes;
  std::size_t best = 0;
  for (std::size_t r = 0; r < k; ++r) best = std::max(best, ++votes[train[order[r]].label]);
  for (std::size_t r = 0; r < k; ++r) {
    const Label l = train[order[r]].label;
    if (votes[l] == best) return l;
  }
  return train[order.front()].label;  // unreachable
}

Label knn_classify(const Sample& query, std::span<const Sample> train, std::size_t k, const DistanceFn& dist) {
  if (train.empty()) throw std::invalid_argument("knn needs a non-empty training set");
  std::vector<double> distances;
  distances.reserve(train.size());
  for (const auto& s : train) distances.push_back(dist(query, s));
  return knn_vote(distances, train, k);
}

}  // namespace tsml
