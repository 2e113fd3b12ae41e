#include "expander/metrics.hpp"

#include "../support/fixtures.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <sstream>

using namespace expander;
using namespace expander::testing;

// Reference values computed with 30-digit arithmetic, independently of this code.
namespace oracle {
constexpr double kLn2PlusHalf = 1.19314718055994530941723212146;
constexpr double kEntropy64PlusPoint4 = 1.07301166700925643599671934249;
constexpr double kDiversityTwoAxes = 0.327813325472737701092963597705;
constexpr double kCmmdOffset1 = 0.488519414702416000108940939265;
constexpr double kCmmdOffset10 = 1.10139062980636749523182145807;
constexpr double kCmmdSquaredOffset01 = -0.38545673519445600721592601362;
}  // namespace oracle

TEST(Informativeness, OneHotGenerated) {
  EXPECT_NEAR(informativeness(vec({0.8, 0.2}), vec({1.0, 0.0})), 1.0, 1e-12);
}

TEST(Informativeness, UniformGenerated) {
  EXPECT_NEAR(informativeness(vec({0.9, 0.1}), vec({0.5, 0.5})), oracle::kLn2PlusHalf, 1e-9);
}

TEST(Informativeness, ArgmaxOfOriginalSelectsClass) {
  EXPECT_NEAR(informativeness(vec({0.2, 0.8}), vec({0.6, 0.4})), oracle::kEntropy64PlusPoint4, 1e-9);
}

TEST(Informativeness, RejectsNonDistributions) {
  EXPECT_THROW(informativeness(vec({0.5, 0.6}), vec({0.5, 0.5})), Error);
  EXPECT_THROW(informativeness(vec({0.5, 0.5}), vec({1.0})), Error);
}

TEST(Informativeness, BinaryGridStaysBelowBound) {
  const double bound = std::numbers::ln2 + 1.0;
  double best = 0.0, best_q = 0.0;
  for (int i = 0; i <= 1000; ++i) {
    const double q = i / 1000.0;
    const double v = informativeness(vec({1.0, 0.0}), vec({q, 1.0 - q}));
    EXPECT_LE(v, bound);
    if (v > best) best = v, best_q = q;
  }
  // Maximiser lies strictly between uniform and one-hot.
  EXPECT_GT(best_q, 0.5);
  EXPECT_LT(best_q, 1.0);
}

TEST(Diversity, IdenticalEmbeddingsGiveZero) {
  const Matrix m = rows({{0.3, -1.0, 2.0}, {0.3, -1.0, 2.0}, {0.3, -1.0, 2.0}});
  EXPECT_EQ(group_diversity(m), 0.0);
}

TEST(Diversity, TwoAxisPointsMatchKlOracle) {
  EXPECT_NEAR(group_diversity(rows({{2.0, 0.0}, {0.0, 2.0}})), oracle::kDiversityTwoAxes, 1e-12);
}

TEST(Diversity, AveragesOverClasses) {
  const Matrix m = rows({{2.0, 0.0}, {0.0, 2.0}, {1.0, 1.0}, {1.0, 1.0}});
  const std::vector<std::size_t> cls = {0, 0, 1, 1};
  EXPECT_NEAR(diversity(m, cls), oracle::kDiversityTwoAxes / 2.0, 1e-12);
}

TEST(Diversity, NonNegativeAndPermutationInvariant) {
  Rng rng(11);
  for (int t = 0; t < 30; ++t) {
    const Matrix m = random_rows(rng, 12, 5);
    std::vector<std::size_t> cls(12);
    for (auto& c : cls) c = rng.below(3);
    const double v = diversity(m, cls);
    EXPECT_GE(v, 0.0);
    std::vector<Eigen::Index> perm(12);
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(perm);
    std::vector<std::size_t> pcls;
    for (auto p : perm) pcls.push_back(cls[static_cast<std::size_t>(p)]);
    EXPECT_NEAR(diversity(m(perm, Eigen::all), pcls), v, 1e-12);
  }
}

TEST(Cmmd, IdenticalPointsGiveZero) {
  const Matrix x = rows({{1.0, 2.0}, {1.0, 2.0}});
  const auto r = cmmd(x, x, 1.0);
  EXPECT_NEAR(r.squared, 0.0, 1e-12);
  EXPECT_NEAR(r.value, 0.0, 1e-9);
}

TEST(Cmmd, OffsetSweepMatchesOracle) {
  const Matrix x = rows({{0.0, 0.0}, {1.0, 0.0}});
  auto shifted = [&](double d) {
    Matrix y = x;
    y.col(1).array() += d;
    return y;
  };
  const auto small = cmmd(x, shifted(0.1), 1.0);
  const auto mid = cmmd(x, shifted(1.0), 1.0);
  const auto large = cmmd(x, shifted(10.0), 1.0);
  EXPECT_NEAR(small.squared, oracle::kCmmdSquaredOffset01, 1e-12);
  EXPECT_TRUE(small.clamped);
  EXPECT_EQ(small.value, 0.0);
  EXPECT_NEAR(mid.value, oracle::kCmmdOffset1, 1e-12);
  EXPECT_NEAR(large.value, oracle::kCmmdOffset10, 1e-12);
  EXPECT_LT(small.value, mid.value);
  EXPECT_LT(mid.value, large.value);
}

TEST(Cmmd, TooFewSamples) {
  try {
    cmmd(rows({{1.0}, {1.0}}), rows({{1.0}}), 1.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::TooFewSamples);
  }
}

TEST(Cmmd, SymmetricAndPermutationInvariant) {
  Rng rng(4);
  for (int t = 0; t < 20; ++t) {
    const Matrix a = random_rows(rng, 7, 3);
    Matrix b = random_rows(rng, 5, 3);
    b.array() += 0.5;
    const auto ab = cmmd(a, b, 1.3);
    EXPECT_NEAR(ab.squared, cmmd(b, a, 1.3).squared, 1e-12);
    const Matrix a_rev = a.colwise().reverse();
    EXPECT_NEAR(ab.squared, cmmd(a_rev, b, 1.3).squared, 1e-12);
  }
}

TEST(Cmmd, MedianHeuristic) {
  // Distances over the union {0, 1, 3}: 1, 3, 2 -> median 2.
  EXPECT_DOUBLE_EQ(median_heuristic_sigma(rows({{0.0}, {1.0}}), rows({{3.0}})), 2.0);
  EXPECT_DOUBLE_EQ(median_heuristic_sigma(rows({{0.0}, {0.0}}), rows({{0.0}})), 1.0);
}

namespace {

Corpus snapshot_corpus(bool duplicate_round) {
  std::vector<ImageRecord> imgs = {image("o1", "a", vec({1.0, 0.0})), image("o2", "b", vec({0.0, 1.0})),
                                   image("o3", "a", vec({0.9, 0.1}))};
  auto gen = [&](std::string id, std::string cls, Vector e, Vector p, int it) {
    auto r = image(std::move(id), std::move(cls), std::move(e), ImageKind::generated, it);
    r.prediction = std::move(p);
    return r;
  };
  imgs.push_back(gen("g1", "a", vec({2.0, 0.0}), vec({0.5, 0.5}), 1));
  imgs.push_back(gen("g2", "a", vec({0.0, 2.0}), vec({1.0, 0.0}), 1));
  if (duplicate_round) {
    imgs.push_back(gen("h1", "a", vec({2.0, 0.0}), vec({0.5, 0.5}), 2));
    imgs.push_back(gen("h2", "a", vec({0.0, 2.0}), vec({1.0, 0.0}), 2));
  }
  return Corpus::build({"a", "b"}, 2, imgs, {}, {});
}

}  // namespace

TEST(MetricSnapshot, ComposesPerMetricOracles) {
  const Corpus c = snapshot_corpus(false);
  SnapshotOptions opts;
  opts.sigma = 1.0;
  const auto pt = metric_snapshot(c, 1, opts);
  EXPECT_EQ(pt.generated_count, 2);
  // g1: H(0.5,0.5) + 0.5; g2: 0 + 1.
  EXPECT_NEAR(pt.informativeness, (oracle::kLn2PlusHalf + 1.0) / 2.0, 1e-12);
  EXPECT_NEAR(pt.diversity, oracle::kDiversityTwoAxes, 1e-12);
  const Matrix orig = rows({{1.0, 0.0}, {0.0, 1.0}, {0.9, 0.1}});
  const Matrix gen = rows({{2.0, 0.0}, {0.0, 2.0}});
  EXPECT_NEAR(pt.distance, cmmd(orig, gen, 1.0).value, 1e-12);
}

TEST(MetricSnapshot, DuplicatedRoundKeepsDiversity) {
  const Corpus c = snapshot_corpus(true);
  EXPECT_NEAR(metric_snapshot(c, 2).diversity, metric_snapshot(c, 1).diversity, 1e-12);
}

TEST(MetricSnapshot, NoGeneratedImages) {
  const Corpus c = Corpus::build({"a"}, 2, {image("o", "a", vec({1, 0}))}, {}, {});
  try {
    metric_snapshot(c, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::MissingGenerated);
  }
}

TEST(MetricSnapshot, MissingPredictionsFailLoudly) {
  const Corpus c = Corpus::build(
      {"a"}, 2, {image("o", "a", vec({1, 0})), image("g", "a", vec({0, 1}), ImageKind::generated, 1)}, {}, {});
  try {
    metric_snapshot(c, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::MissingPredictions);
  }
}

TEST(MetricTimeline, AppendsInIterationOrderAndRoundTrips) {
  MetricTimeline t;
  t.append({0, 1.0, 0.1, 0.0, 0, false});
  t.append({1, 1.2, 0.2, 0.3, 8, false});
  EXPECT_THROW(t.append({1, 0.0, 0.0, 0.0, 0, false}), Error);
  std::stringstream s;
  write_timeline(s, t);
  const auto back = read_timeline(s);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back.points()[1].informativeness, 1.2);
  EXPECT_EQ(back.points()[1].generated_count, 8);
  std::ostringstream svg;
  write_timeline_svg(svg, t);
  EXPECT_NE(svg.str().find("<svg"), std::string::npos);
}
