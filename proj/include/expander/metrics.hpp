#pragma once

#include "expander/common.hpp"
#include "expander/corpus.hpp"

#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

namespace expander {

/// Prediction entropy of the generated image plus its probability for the
/// class the original image was predicted as.
double informativeness(const Vector& p_original, const Vector& p_generated);

/// Mean KL divergence of softmax-normalised feature rows from the softmax of
/// their mean, for a single group of rows.
double group_diversity(const Matrix& embeddings);

/// Per-class group_diversity averaged over classes. `class_of[i]` is the
/// class of row i; classes are the distinct values that occur.
double diversity(const Matrix& embeddings, std::span<const std::size_t> class_of);

struct CmmdResult {
  double value = 0.0;    ///< sqrt(max(0, squared))
  double squared = 0.0;  ///< unbiased estimate before clamping
  bool clamped = false;  ///< squared was negative and value was clamped to 0
  double sigma = 0.0;
};

double gaussian_kernel(const Vector& x, const Vector& y, double sigma);

/// Unbiased Gaussian-kernel MMD between two sets of rows.
CmmdResult cmmd(const Matrix& originals, const Matrix& generated, double sigma);

/// Median pairwise Euclidean distance over the union of both sets (1.0 if
/// the median is zero).
double median_heuristic_sigma(const Matrix& a, const Matrix& b);

struct MetricPoint {
  int iteration = 0;
  double informativeness = 0.0;
  double diversity = 0.0;
  double distance = 0.0;
  int generated_count = 0;
  bool distance_clamped = false;
};

struct SnapshotOptions {
  std::optional<double> sigma;  ///< median heuristic when empty
};

/// Metrics over all generated images with iteration <= `iteration`.
MetricPoint metric_snapshot(const Corpus& corpus, int iteration, const SnapshotOptions& options = {});

/// Iteration-0 point describing the original images alone: their own
/// informativeness and diversity, distance 0.
MetricPoint baseline_snapshot(const Corpus& corpus);

class MetricTimeline {
 public:
  /// Throws BadConfig unless `point.iteration` exceeds the last one.
  void append(const MetricPoint& point);
  const std::vector<MetricPoint>& points() const noexcept { return points_; }
  std::size_t size() const noexcept { return points_.size(); }

 private:
  std::vector<MetricPoint> points_;
};

void write_timeline(std::ostream& out, const MetricTimeline& timeline);
MetricTimeline read_timeline(std::istream& in);

/// Fixed-width text table of the timeline.
void print_timeline_table(std::ostream& out, const MetricTimeline& timeline);

/// Three-panel SVG line chart of informativeness, diversity and distance.
void write_timeline_svg(std::ostream& out, const MetricTimeline& timeline);

}  // namespace expander
