#include "expander/evaluate.hpp"
#include "expander/theory.hpp"

#include "../support/fixtures.hpp"

#include <gtest/gtest.h>

#include <sstream>

using namespace expander;
using namespace expander::testing;

namespace {

/// Textbook trustworthiness with the usual normaliser, valid for k < n/2.
double reference_trustworthiness(const Matrix& high, const Matrix& low, std::size_t k) {
  const Eigen::Index n = high.rows();
  auto ranks = [&](const Matrix& pts, Eigen::Index i) {
    std::vector<std::pair<double, Eigen::Index>> d;
    for (Eigen::Index j = 0; j < n; ++j)
      if (j != i) d.emplace_back((pts.row(i) - pts.row(j)).norm(), j);
    std::sort(d.begin(), d.end());
    std::vector<std::size_t> rank(static_cast<std::size_t>(n), 0);
    for (std::size_t r = 0; r < d.size(); ++r) rank[static_cast<std::size_t>(d[r].second)] = r + 1;
    return rank;
  };
  double penalty = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto rh = ranks(high, i), rl = ranks(low, i);
    for (Eigen::Index j = 0; j < n; ++j) {
      const auto u = static_cast<std::size_t>(j);
      if (j != i && rl[u] <= k && rh[u] > k) penalty += double(rh[u] - k);
    }
  }
  const double N = double(n), K = double(k);
  return 1.0 - 2.0 / (N * K * (2.0 * N - 3.0 * K - 1.0)) * penalty;
}

}  // namespace

TEST(Trustworthiness, IdentityProjectionIsPerfect) {
  Rng rng(1);
  const Matrix x = random_rows(rng, 60, 2);
  EXPECT_DOUBLE_EQ(trustworthiness(x, x, 10, Distance::euclidean), 1.0);
  EXPECT_DOUBLE_EQ(continuity(x, x, 10, Distance::euclidean), 1.0);
}

TEST(Trustworthiness, MatchesTextbookFormulaForSmallK) {
  Rng rng(2);
  for (int t = 0; t < 5; ++t) {
    const Matrix high = random_rows(rng, 50, 5);
    const Matrix low = random_rows(rng, 50, 2);
    for (std::size_t k : {3u, 10u, 20u})
      EXPECT_NEAR(trustworthiness(high, low, k, Distance::euclidean), reference_trustworthiness(high, low, k),
                  1e-12);
  }
}

TEST(Trustworthiness, ShuffledLayoutScoresLower) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed);
    const Matrix x = random_rows(rng, 100, 2);
    std::vector<Eigen::Index> perm(100);
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(perm);
    const Matrix shuffled = x(perm, Eigen::all);
    EXPECT_LT(trustworthiness(x, shuffled, 30, Distance::euclidean), trustworthiness(x, x, 30, Distance::euclidean));
  }
}

TEST(Trustworthiness, InterModeOnSoleLabelIsPerfect) {
  // Tight clusters around orthogonal label directions; each image sits on
  // its label's hub at a radius ordered by its high-dimensional distance.
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Rng rng(seed);
    std::vector<ImageRecord> imgs;
    std::vector<LabelRecord> lbls;
    std::vector<EdgeSpec> edges;
    for (int j = 0; j < 4; ++j) {
      Vector axis = Vector::Zero(8);
      axis[j] = 1.0;
      const std::string lid = "l" + std::to_string(j);
      lbls.push_back(label(lid, lid, axis));
      for (int i = 0; i < 12; ++i) {
        Vector e = axis;
        for (int d = 0; d < 8; ++d) e[d] += 0.1 * rng.normal();
        const std::string id = "i" + std::to_string(j) + "-" + std::to_string(10 + i);
        imgs.push_back(image(id, "x", e));
        edges.push_back(edge(id, lid));
      }
    }
    const Corpus c = Corpus::build({"x"}, 8, imgs, lbls, edges);
    const Layout l = construct_many_to_one_layout(c);
    const auto q = neighborhood_quality(c, l, 5, NeighborMode::inter);
    EXPECT_DOUBLE_EQ(q.trustworthiness, 1.0);
    EXPECT_DOUBLE_EQ(q.continuity, 1.0);
  }
}

TEST(Continuity, CollapseHurtsTrustworthinessMore) {
  // Three tight clusters; the layout drops cluster 1 onto cluster 0.
  Rng rng(4);
  Matrix high(60, 2), low(60, 2);
  for (Eigen::Index i = 0; i < 60; ++i) {
    const int cl = int(i / 20);
    const Eigen::RowVector2d centre(10.0 * cl, 0.0);
    high.row(i) = centre + 0.5 * Eigen::RowVector2d(rng.normal(), rng.normal());
    low.row(i) = high.row(i);
    if (cl == 1) low.row(i) -= Eigen::RowVector2d(10.0, 0.0);
  }
  const double t = trustworthiness(high, low, 10, Distance::euclidean);
  const double c = continuity(high, low, 10, Distance::euclidean);
  EXPECT_GE(c, t);
  EXPECT_LT(t, 1.0);
}

TEST(Continuity, SaturatedKIsPerfect) {
  Rng rng(5);
  const Matrix high = random_rows(rng, 12, 4), low = random_rows(rng, 12, 2);
  EXPECT_DOUBLE_EQ(continuity(high, low, 11, Distance::euclidean), 1.0);
  EXPECT_DOUBLE_EQ(trustworthiness(high, low, 11, Distance::euclidean), 1.0);
}

TEST(Trustworthiness, KTooLarge) {
  Rng rng(5);
  const Matrix x = random_rows(rng, 5, 2);
  try {
    trustworthiness(x, x, 5);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::KTooLarge);
  }
}

TEST(Trustworthiness, ScoresStayInUnitIntervalAndAreMotionInvariant) {
  Rng rng(6);
  for (int t = 0; t < 30; ++t) {
    const Eigen::Index n = 10 + Eigen::Index(rng.below(40));
    const Matrix high = random_rows(rng, n, 4);
    const Matrix low = random_rows(rng, n, 2);
    std::vector<int> group(static_cast<std::size_t>(n));
    for (auto& g : group) g = int(rng.below(2));
    const std::size_t k = 1 + rng.below(static_cast<std::size_t>(n - 1));
    for (auto mode : {NeighborMode::intra, NeighborMode::inter}) {
      const auto q = neighborhood_quality(high, low, group, k, mode, Distance::euclidean);
      EXPECT_GE(q.trustworthiness, 0.0);
      EXPECT_LE(q.trustworthiness, 1.0);
      EXPECT_GE(q.continuity, 0.0);
      EXPECT_LE(q.continuity, 1.0);
      // Rotate, scale and translate the layout.
      const double a = rng.uniform(0, 6.28);
      Eigen::Matrix2d rot;
      rot << std::cos(a), -std::sin(a), std::sin(a), std::cos(a);
      Matrix moved = (3.7 * low * rot.transpose()).rowwise() + Eigen::RowVector2d(5.0, -2.0);
      const auto m = neighborhood_quality(high, moved, group, k, mode, Distance::euclidean);
      EXPECT_NEAR(m.trustworthiness, q.trustworthiness, 1e-12);
      EXPECT_NEAR(m.continuity, q.continuity, 1e-12);
    }
  }
}

TEST(Trustworthiness, ScrambledLineIsPenalised) {
  // Four points on a line, scrambled in the layout.
  const Matrix high = rows({{0.0}, {1.0}, {3.0}, {7.0}});
  const Matrix low = rows({{0.0}, {7.0}, {1.0}, {3.0}});
  const double t = trustworthiness(high, low, 1, Distance::euclidean);
  EXPECT_GE(t, 0.0);
  EXPECT_LT(t, 1.0);
}

TEST(Ims, CoincidentAndUnitDistance) {
  const Corpus c = Corpus::build({"x"}, 2, {image("i1", "x", vec({1, 0})), image("i2", "x", vec({0, 1}))},
                                 {label("a", "a", vec({1, 0}))}, {edge("i1", "a"), edge("i2", "a")});
  EXPECT_DOUBLE_EQ(ims(Layout::for_corpus(c, rows({{1.0, 1.0}, {1.0, 1.0}}), rows({{1.0, 1.0}})), c), 1.0);
  EXPECT_DOUBLE_EQ(ims(Layout::for_corpus(c, rows({{1.0, 0.0}, {0.0, 1.0}}), rows({{0.0, 0.0}})), c), 0.5);
}

TEST(Ims, NoEdgesThrows) {
  const Corpus c = Corpus::build({"x"}, 2, {image("i1", "x", vec({1, 0}))}, {label("a", "a", vec({1, 0}))}, {});
  EXPECT_THROW(ims(Layout::for_corpus(c, rows({{0.0, 0.0}}), rows({{0.0, 0.0}})), c), Error);
}

TEST(Compare, IdenticalLayoutsGiveIdenticalRows) {
  const Corpus c = make_random_corpus(3, 40, 6, 8);
  Rng rng(3);
  const Layout l = Layout::for_corpus(c, random_rows(rng, 40, 2), random_rows(rng, 6, 2));
  const auto report = compare({{"a", l}, {"b", l}}, c, 10, "rand");
  const auto& a = report.row("a");
  const auto& b = report.row("b");
  EXPECT_EQ(a.t_intra, b.t_intra);
  EXPECT_EQ(a.c_intra, b.c_intra);
  EXPECT_EQ(a.ims, b.ims);
  EXPECT_EQ(a.t_inter, b.t_inter);
  EXPECT_EQ(a.c_inter, b.c_inter);
  EXPECT_FALSE(dominates_inter(a, b));
  std::ostringstream table, js;
  print_report_table(table, report);
  write_report_json(js, report);
  for (const char* col : {"T10 intra", "C10 intra", "IMS", "T10 inter", "C10 inter"})
    EXPECT_NE(table.str().find(col), std::string::npos) << table.str();
  EXPECT_NE(js.str().find("\"t_inter\""), std::string::npos);
}

TEST(Compare, TrainedBeatsRandomOnIms) {
  const Corpus c = make_many_to_one(4, 50, 5, 8);
  Rng rng(4);
  const Layout random = Layout::for_corpus(c, random_rows(rng, Eigen::Index(c.images().size()), 2),
                                           random_rows(rng, Eigen::Index(c.labels().size()), 2));
  const auto report = compare({{"constructed", construct_many_to_one_layout(c)}, {"random", random}}, c, 5);
  EXPECT_GT(report.row("constructed").ims, report.row("random").ims);
}

TEST(Dominance, RequiresStrictGainOnEveryInterColumn) {
  EvalRow a{"a", 0, 0, 0.6, 0.8, 0.8}, b{"b", 0, 0, 0.5, 0.7, 0.7};
  EXPECT_TRUE(dominates_inter(a, b));
  b.c_inter = 0.8;
  EXPECT_FALSE(dominates_inter(a, b));
}
