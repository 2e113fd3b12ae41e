#pragma once

#include "expander/common.hpp"
#include "expander/corpus.hpp"
#include "expander/projection.hpp"

#include <cstdint>
#include <set>
#include <string>
#include <vector>

namespace expander {

/// Upper bound on the number of distinct distance orders of n plane points
/// seen from arbitrary query locations: n(n-1)(n^2-n+2)/8 + 1.
std::uint64_t order_bound(std::uint64_t n);

/// n! saturating at UINT64_MAX.
std::uint64_t factorial(std::uint64_t n);

struct OrderCertificate {
  std::size_t n = 0;
  /// Each order lists point indices nearest first.
  std::set<std::vector<int>> realized_orders;
  std::uint64_t bound = 0;
  std::size_t lines = 0;  ///< distinct perpendicular bisectors

  std::size_t realized() const noexcept { return realized_orders.size(); }
  bool within_bound() const noexcept { return realized_orders.size() <= bound; }
};

/// Every strict distance order realised by some query location: one sample
/// point is taken on each side of every edge of the bisector arrangement.
/// Points must be distinct; at most 7 of them.
OrderCertificate count_distance_orders(const std::vector<Eigen::Vector2d>& points);

/// Layout with zero order loss for a graph in which every image has at most
/// one label: each label sits on its own hub, its images on a spiral whose
/// radius is 1 + the dense rank of their edge weight.
Layout construct_many_to_one_layout(const Corpus& corpus);

/// n images and n! labels; label p is linked to every image with weights
/// encoding permutation p as its required distance order.
Corpus make_permutation_instance(int n);

struct PermutationReport {
  std::size_t images = 0;
  std::uint64_t required_orders = 0;  ///< distinct orders the labels demand
  std::uint64_t bound = 0;            ///< order_bound(images)
  bool exceeds_bound = false;         ///< required_orders > bound
  int trials = 0;
  double min_residual = 0.0;  ///< smallest order loss reached by the search
  double max_residual = 0.0;
  std::size_t max_labels_satisfied = 0;  ///< most labels with their order realised strictly
  bool all_trials_positive = false;
  std::string note;
};

/// Randomised restarts of gradient search over free plane layouts, with the
/// image coordinates kept centred at unit RMS radius so the search cannot
/// collapse them into ties. The result is numerical evidence that no layout
/// realises every demanded order, not a proof.
PermutationReport verify_permutation_instance(const Corpus& corpus, int trials, std::uint64_t seed,
                                    int steps_per_trial = 300);

}  // namespace expander
