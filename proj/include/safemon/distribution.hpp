#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "safemon/common.hpp"

namespace safemon {

/// Finite categorical distribution over keys ordered by operator<.
///
/// Support entries are unique, sorted by key, strictly positive, and sum to
/// one. Construction merges duplicate keys, drops entries below 1e-12 and
/// renormalizes the remainder.
template <class Key>
class Categorical {
 public:
  struct Entry {
    Key key;
    double probability;
    friend bool operator==(const Entry&, const Entry&) = default;
  };

  Categorical() = default;

  explicit Categorical(std::vector<Entry> entries) : support_(std::move(entries)) {
    std::sort(support_.begin(), support_.end(),
              [](const Entry& a, const Entry& b) { return a.key < b.key; });
    std::vector<Entry> merged;
    merged.reserve(support_.size());
    double total = 0.0;
    for (const auto& e : support_) {
      if (!(e.probability >= 0.0) || !std::isfinite(e.probability))
        throw ValidationError("categorical distribution: negative or non-finite probability");
      total += e.probability;
      if (!merged.empty() && !(merged.back().key < e.key))
        merged.back().probability += e.probability;
      else
        merged.push_back(e);
    }
    if (std::abs(total - 1.0) > kProbabilityTolerance)
      throw ValidationError("categorical distribution: probabilities sum to " +
                            format_exact(total));
    const auto pruned =
        std::erase_if(merged, [](const Entry& e) { return e.probability < kPruneThreshold; });
    if (pruned > 0) {
      double kept = 0.0;
      for (const auto& e : merged) kept += e.probability;
      for (auto& e : merged) e.probability /= kept;
    }
    support_ = std::move(merged);
  }

  static Categorical point(Key key) {
    Categorical d;
    d.support_.push_back({std::move(key), 1.0});
    return d;
  }

  std::span<const Entry> support() const { return support_; }
  std::size_t size() const { return support_.size(); }
  bool empty() const { return support_.empty(); }

  double probability(const Key& key) const {
    auto it = std::lower_bound(support_.begin(), support_.end(), key,
                               [](const Entry& e, const Key& k) { return e.key < k; });
    return (it != support_.end() && !(key < it->key)) ? it->probability : 0.0;
  }

  double total() const {
    double t = 0.0;
    for (const auto& e : support_) t += e.probability;
    return t;
  }

  friend bool operator==(const Categorical&, const Categorical&) = default;

 private:
  std::vector<Entry> support_;
};

using StateId = std::size_t;
using ActionId = std::size_t;
using CategoricalDistribution = Categorical<StateId>;

/// All probability mass on `state`.
inline CategoricalDistribution make_point_distribution(StateId state) {
  return CategoricalDistribution::point(state);
}

/// Product distribution: mass of (a, b) is first(a) * second(b).
template <class A, class B>
Categorical<std::pair<A, B>> product_distribution(const Categorical<A>& first,
                                                  const Categorical<B>& second) {
  using Pair = std::pair<A, B>;
  std::vector<typename Categorical<Pair>::Entry> entries;
  entries.reserve(first.size() * second.size());
  for (const auto& a : first.support())
    for (const auto& b : second.support())
      entries.push_back({Pair{a.key, b.key}, a.probability * b.probability});
  return Categorical<Pair>(std::move(entries));
}

}  // namespace safemon
