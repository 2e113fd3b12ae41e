#include "expander/evaluate.hpp"

#include <json.hpp>

#include <algorithm>
#include <iomanip>
#include <numeric>
#include <ostream>

namespace expander {

namespace {

// Largest total penalty for one point: m = min(k, P - k) strangers placed
// at the worst ranks P, P-1, ..., each contributing rank - k.
double max_penalty(std::size_t pool, std::size_t k) {
  const std::size_t m = std::min(k, pool - k);
  double total = 0.0;
  for (std::size_t t = 0; t < m; ++t) total += static_cast<double>(pool - t - k);
  return total;
}

double point_distance(const Matrix& x, Eigen::Index a, Eigen::Index b, Distance metric) {
  if (metric == Distance::cosine) return cosine_distance(x.row(a), x.row(b));
  return (x.row(a) - x.row(b)).norm();
}

// ranks[j] = 1-based position of pool member j when sorted by distance.
void rank_pool(const std::vector<std::size_t>& pool, const std::vector<double>& dist,
               std::vector<std::size_t>& order, std::vector<std::size_t>& ranks) {
  order.resize(pool.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return dist[a] != dist[b] ? dist[a] < dist[b] : pool[a] < pool[b];
  });
  ranks.resize(pool.size());
  for (std::size_t r = 0; r < order.size(); ++r) ranks[order[r]] = r + 1;
}

}  // namespace

NeighborhoodQuality neighborhood_quality(const Matrix& high, const Matrix& low, std::span<const int> group,
                                         std::size_t k, NeighborMode mode, Distance high_metric) {
  const auto n = static_cast<std::size_t>(high.rows());
  if (static_cast<std::size_t>(low.rows()) != n || group.size() != n)
    throw Error(ErrorCode::DimensionMismatch, "high has " + std::to_string(n) + " rows, low has " +
                                                  std::to_string(low.rows()) + ", groups " +
                                                  std::to_string(group.size()));
  if (k < 1 || k >= n)
    throw Error(ErrorCode::KTooLarge, "k = " + std::to_string(k) + " for " + std::to_string(n) + " points");

  double pen_t = 0.0, pen_c = 0.0, max_total = 0.0;
  std::vector<std::size_t> pool, order_h, order_l, rank_h, rank_l;
  std::vector<double> dh, dl;
  for (std::size_t i = 0; i < n; ++i) {
    pool.clear();
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      const bool same = group[j] == group[i];
      if ((mode == NeighborMode::intra) == same) pool.push_back(j);
    }
    const std::size_t kk = std::min(k, pool.size());
    if (kk == 0 || kk == pool.size()) {
      // Everything is a neighbour in both spaces.
      continue;
    }
    dh.resize(pool.size());
    dl.resize(pool.size());
    const auto ii = static_cast<Eigen::Index>(i);
    for (std::size_t p = 0; p < pool.size(); ++p) {
      const auto jj = static_cast<Eigen::Index>(pool[p]);
      dh[p] = point_distance(high, ii, jj, high_metric);
      dl[p] = (low.row(ii) - low.row(jj)).norm();
    }
    rank_pool(pool, dh, order_h, rank_h);
    rank_pool(pool, dl, order_l, rank_l);
    for (std::size_t p = 0; p < pool.size(); ++p) {
      if (rank_l[p] <= kk && rank_h[p] > kk) pen_t += static_cast<double>(rank_h[p] - kk);
      if (rank_h[p] <= kk && rank_l[p] > kk) pen_c += static_cast<double>(rank_l[p] - kk);
    }
    max_total += max_penalty(pool.size(), kk);
  }
  if (max_total == 0.0) return {1.0, 1.0};
  return {1.0 - pen_t / max_total, 1.0 - pen_c / max_total};
}

double trustworthiness(const Matrix& high, const Matrix& low, std::size_t k, Distance high_metric) {
  const std::vector<int> group(static_cast<std::size_t>(high.rows()), 0);
  return neighborhood_quality(high, low, group, k, NeighborMode::intra, high_metric).trustworthiness;
}

double continuity(const Matrix& high, const Matrix& low, std::size_t k, Distance high_metric) {
  const std::vector<int> group(static_cast<std::size_t>(high.rows()), 0);
  return neighborhood_quality(high, low, group, k, NeighborMode::intra, high_metric).continuity;
}

NeighborhoodQuality neighborhood_quality(const Corpus& corpus, const Layout& layout, std::size_t k,
                                         NeighborMode mode) {
  const Layout aligned = layout.aligned_to(corpus);
  if (mode == NeighborMode::intra) {
    const std::vector<int> group(corpus.images().size(), 0);
    return neighborhood_quality(corpus.image_embeddings(), aligned.images(), group, k, mode);
  }
  const auto ni = static_cast<Eigen::Index>(corpus.images().size());
  const auto nl = static_cast<Eigen::Index>(corpus.labels().size());
  Matrix high(ni + nl, corpus.dimension());
  high << corpus.image_embeddings(), corpus.label_embeddings();
  Matrix low(ni + nl, 2);
  low << aligned.images(), aligned.labels();
  std::vector<int> group(static_cast<std::size_t>(ni + nl), 0);
  std::fill(group.begin() + ni, group.end(), 1);
  return neighborhood_quality(high, low, group, k, mode);
}

double trustworthiness(const Corpus& corpus, const Layout& layout, std::size_t k, NeighborMode mode) {
  return neighborhood_quality(corpus, layout, k, mode).trustworthiness;
}

double continuity(const Corpus& corpus, const Layout& layout, std::size_t k, NeighborMode mode) {
  return neighborhood_quality(corpus, layout, k, mode).continuity;
}

double ims(const Layout& layout, const Corpus& corpus) {
  if (corpus.edges().empty()) throw Error(ErrorCode::EmptyGraph, "no image-label edges");
  const Layout aligned = layout.aligned_to(corpus);
  double total = 0.0;
  for (const auto& e : corpus.edges()) {
    const double d = (aligned.images().row(static_cast<Eigen::Index>(e.image)) -
                      aligned.labels().row(static_cast<Eigen::Index>(e.label)))
                         .norm();
    total += 1.0 / (1.0 + d);
  }
  return total / static_cast<double>(corpus.edges().size());
}

const EvalRow& EvalReport::row(std::string_view method) const {
  for (const auto& r : rows)
    if (r.method == method) return r;
  throw Error(ErrorCode::BadConfig, "no row for method " + std::string(method));
}

EvalReport compare(const std::vector<NamedLayout>& methods, const Corpus& corpus, std::size_t k,
                   std::string dataset) {
  EvalReport report{std::move(dataset), k, {}};
  for (const auto& m : methods) {
    const Layout layout = normalized(m.layout.aligned_to(corpus));
    const auto intra = neighborhood_quality(corpus, layout, k, NeighborMode::intra);
    const auto inter = neighborhood_quality(corpus, layout, k, NeighborMode::inter);
    report.rows.push_back({m.method, intra.trustworthiness, intra.continuity, ims(layout, corpus),
                           inter.trustworthiness, inter.continuity});
  }
  return report;
}

bool dominates_inter(const EvalRow& a, const EvalRow& b) {
  return a.ims > b.ims && a.t_inter > b.t_inter && a.c_inter > b.c_inter;
}

void write_report_json(std::ostream& out, const EvalReport& report) {
  nlohmann::ordered_json j;
  j["dataset"] = report.dataset;
  j["k"] = report.k;
  j["rows"] = nlohmann::ordered_json::array();
  for (const auto& r : report.rows)
    j["rows"].push_back({{"method", r.method},
                         {"t_intra", r.t_intra},
                         {"c_intra", r.c_intra},
                         {"ims", r.ims},
                         {"t_inter", r.t_inter},
                         {"c_inter", r.c_inter}});
  out << j.dump(2) << '\n';
}

void print_report_table(std::ostream& out, const EvalReport& report) {
  std::size_t width = 6;
  for (const auto& r : report.rows) width = std::max(width, r.method.size());
  const std::string k = std::to_string(report.k);
  out << std::left << std::setw(static_cast<int>(width)) << "method" << std::right;
  for (const std::string& h : {"T" + k + " intra", "C" + k + " intra", std::string("IMS"), "T" + k + " inter", "C" + k + " inter"})
    out << "  " << std::setw(10) << h;
  out << '\n';
  out << std::fixed << std::setprecision(4);
  for (const auto& r : report.rows) {
    out << std::left << std::setw(static_cast<int>(width)) << r.method << std::right;
    for (double v : {r.t_intra, r.c_intra, r.ims, r.t_inter, r.c_inter}) out << "  " << std::setw(10) << v;
    out << '\n';
  }
  out << std::defaultfloat;
}

}  // namespace expander
