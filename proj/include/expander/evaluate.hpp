#pragma once

#include "expander/common.hpp"
#include "expander/corpus.hpp"
#include "expander/projection.hpp"

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace expander {

enum class NeighborMode {
  intra,  ///< neighbours drawn from the point's own group
  inter   ///< neighbours drawn from every other group
};

struct NeighborhoodQuality {
  double trustworthiness = 1.0;
  double continuity = 1.0;
};

/// Rank-penalty trustworthiness and continuity. Row i of `high` and `low`
/// describe the same point; `group` assigns each point to a modality. The
/// penalty of a point is the sum of (rank - k) over intruders (T) or
/// extrusions (C), ranks counted within its neighbour pool, divided by the
/// largest penalty attainable for that pool size. Throws KTooLarge when
/// k >= number of points.
NeighborhoodQuality neighborhood_quality(const Matrix& high, const Matrix& low, std::span<const int> group,
                                         std::size_t k, NeighborMode mode,
                                         Distance high_metric = Distance::cosine);

/// Single-group convenience overloads.
double trustworthiness(const Matrix& high, const Matrix& low, std::size_t k,
                       Distance high_metric = Distance::cosine);
double continuity(const Matrix& high, const Matrix& low, std::size_t k,
                  Distance high_metric = Distance::cosine);

/// Corpus overloads: intra uses images only, inter uses images and labels
/// with each pool restricted to the other modality.
NeighborhoodQuality neighborhood_quality(const Corpus& corpus, const Layout& layout, std::size_t k,
                                         NeighborMode mode);
double trustworthiness(const Corpus& corpus, const Layout& layout, std::size_t k, NeighborMode mode);
double continuity(const Corpus& corpus, const Layout& layout, std::size_t k, NeighborMode mode);

/// Mean over edges of 1 / (1 + planar distance between image and label).
double ims(const Layout& layout, const Corpus& corpus);

struct EvalRow {
  std::string method;
  double t_intra = 0.0;
  double c_intra = 0.0;
  double ims = 0.0;
  double t_inter = 0.0;
  double c_inter = 0.0;
};

struct EvalReport {
  std::string dataset;
  std::size_t k = 30;
  std::vector<EvalRow> rows;

  const EvalRow& row(std::string_view method) const;
};

struct NamedLayout {
  std::string method;
  Layout layout;
};

/// One row per layout. IMS is measured after normalize() so methods with
/// different output scales are comparable; T and C are scale free.
EvalReport compare(const std::vector<NamedLayout>& methods, const Corpus& corpus, std::size_t k = 30,
                   std::string dataset = "corpus");

/// `a` is strictly better than `b` on IMS, T_inter and C_inter.
bool dominates_inter(const EvalRow& a, const EvalRow& b);

void write_report_json(std::ostream& out, const EvalReport& report);
void print_report_table(std::ostream& out, const EvalReport& report);

}  // namespace expander
