#include "expander/refine.hpp"

#include "../support/fixtures.hpp"

#include <gtest/gtest.h>

#include <json.hpp>

#include <cmath>
#include <functional>
#include <sstream>

using namespace expander;
using namespace expander::testing;

namespace {

const Matrix kAxes = Matrix::Identity(3, 3);
Vector axis(int i) { return kAxes.row(i).transpose(); }

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected an error";
  return ErrorCode::IoError;
}

/// Class "cat" holds one image along e1 (to delete) and two along e2.
Corpus planted_corpus() {
  return Corpus::build({"cat", "dog"}, 3,
                       {image("cat-1", "cat", axis(0)), image("cat-2", "cat", axis(1)),
                        image("cat-3", "cat", vec({0.0, 1.0, 0.1})), image("dog-1", "dog", axis(2))},
                       {}, {});
}

Matrix planted_classes() { return rows({{0.0, 1.0, 0.0}, {0.0, 0.0, 1.0}}); }

std::size_t count_of(const std::string& text, const std::string& token) {
  std::size_t n = 0;
  for (auto pos = text.find(token); pos != std::string::npos; pos = text.find(token, pos + 1)) ++n;
  return n;
}

/// Proxies rotate from e1 toward e2 as option groups grow, and back toward
/// e1 with every "blur".
class PlantedGenerator final : public GenerationProvider {
 public:
  Matrix generate(const PromptTemplate& prompt, std::size_t count, std::uint64_t) override {
    const double options = double(count_of(prompt.text, "|"));
    const double blur = double(count_of(prompt.text, "blur"));
    Vector d = (options + 1.0) * axis(1) + (1.0 + 3.0 * blur) * axis(0);
    d.normalize();
    Matrix out(static_cast<Eigen::Index>(count), 3);
    for (Eigen::Index r = 0; r < out.rows(); ++r) out.row(r) = d.transpose();
    return out;
  }
};

class AppendingMutator final : public MutationProvider {
 public:
  explicit AppendingMutator(std::string suffix) : suffix_(std::move(suffix)) {}
  std::string mutate(const PromptTemplate& prompt, std::uint64_t) override { return prompt.text + suffix_; }

 private:
  std::string suffix_;
};

class BrokenGenerator final : public GenerationProvider {
 public:
  Matrix generate(const PromptTemplate&, std::size_t, std::uint64_t) override {
    throw Error(ErrorCode::ProviderUnreachable, "generator offline");
  }
};

}  // namespace

TEST(Confidence, HandSoftmax) {
  EXPECT_NEAR(confidence(axis(0), kAxes, 1.0), 0.576116884765829109, 1e-12);
}

TEST(Confidence, EqualSimilaritiesGiveUniform) {
  EXPECT_NEAR(confidence(vec({1.0, 1.0, 1.0}), kAxes, 0.3), 1.0 / 3.0, 1e-12);
}

TEST(Confidence, SharperAtLowTemperature) {
  const Vector e = vec({1.0, 0.4, 0.1});
  EXPECT_GT(confidence(e, kAxes, 0.1), confidence(e, kAxes, 1.0));
}

TEST(Confidence, NeedsTwoClasses) {
  EXPECT_EQ(code_of([] { confidence(axis(0), kAxes.topRows(1), 1.0); }), ErrorCode::SingleClass);
}

TEST(DeleteObjective, ClosedFormOnOrthogonalVectors) {
  const Matrix deleted = rows({{1, 0, 0}});
  const Matrix remaining = rows({{0, 1, 0}, {0, 1, 0}});
  const Matrix classes = rows({{0, 1, 0}, {0, 0, 1}});
  const Matrix toward = rows({{0, 1, 0}, {0, 1, 0}, {0, 1, 0}});
  const double conf = std::exp(1.0) / (std::exp(1.0) + 1.0);
  const auto good = delete_objective(toward, deleted, remaining, classes, 1.0);
  EXPECT_NEAR(good.away, 0.0, 1e-15);
  EXPECT_NEAR(good.toward, 6.0, 1e-12);
  EXPECT_NEAR(good.value, 0.0 + 3 * 2 * 1.0 + 3 * conf, 1e-12);

  const Matrix onto_deleted = rows({{1, 0, 0}, {1, 0, 0}, {1, 0, 0}});
  const auto bad = delete_objective(onto_deleted, deleted, remaining, classes, 1.0);
  EXPECT_NEAR(bad.value, -3.0 + 0.0 + 3 * 0.5, 1e-12);
  EXPECT_LT(bad.value, good.value);
}

TEST(DeleteObjective, EmptyDeletedSet) {
  EXPECT_EQ(code_of([] { delete_objective(rows({{1, 0}}), Matrix(0, 2), rows({{0, 1}}), rows({{1, 0}, {0, 1}}), 1.0); }),
            ErrorCode::EmptySet);
}

TEST(DeleteObjective, PermutationInvariantAndDuplicationDoublesAway) {
  Rng rng(3);
  const Matrix proxies = random_rows(rng, 6, 5), deleted = random_rows(rng, 3, 5), remaining = random_rows(rng, 4, 5);
  const Matrix classes = random_rows(rng, 3, 5);
  const auto v = delete_objective(proxies, deleted, remaining, classes, 0.2);
  const Matrix p_rev = proxies.colwise().reverse(), d_rev = deleted.colwise().reverse();
  EXPECT_NEAR(delete_objective(p_rev, d_rev, remaining, classes, 0.2).value, v.value, 1e-12);
  Matrix doubled(6, 5);
  doubled << deleted, deleted;
  const auto dv = delete_objective(proxies, doubled, remaining, classes, 0.2);
  EXPECT_NEAR(dv.away, 2.0 * v.away, 1e-12);
  EXPECT_NEAR(dv.toward, v.toward, 1e-12);
  EXPECT_NEAR(dv.confidence, v.confidence, 1e-12);
}

TEST(AddObjective, CollapsedProxiesHaveNoDiversity) {
  const auto v = add_objective(rows({{1, 2, 0}, {1, 2, 0}, {1, 2, 0}}), rows({{1, 0, 0}}), kAxes, 1.0);
  EXPECT_EQ(v.diversity, 0.0);
}

TEST(AddObjective, SymmetricSpreadBeatsCollapse) {
  const double c = std::cos(0.4), s = std::sin(0.4);
  const Matrix selected = rows({{1, 0, 0}});
  const Matrix classes = rows({{1, 0, 0}, {0, 0, 1}});
  const auto collapsed = add_objective(rows({{c, s, 0}, {c, s, 0}}), selected, classes, 0.5);
  const auto spread = add_objective(rows({{c, s, 0}, {c, -s, 0}}), selected, classes, 0.5);
  EXPECT_NEAR(spread.toward, collapsed.toward, 1e-12);
  EXPECT_NEAR(spread.confidence, collapsed.confidence, 1e-12);
  EXPECT_GT(spread.diversity, 0.0);
  EXPECT_GT(spread.value, collapsed.value);
}

TEST(AddObjective, OneProxyIsTooFew) {
  EXPECT_EQ(code_of([] { add_objective(rows({{1, 0, 0}}), rows({{1, 0, 0}}), kAxes, 1.0); }), ErrorCode::TooFewProxies);
}

TEST(Feedback, Validation) {
  const Corpus c = planted_corpus();
  EXPECT_NO_THROW(validate_feedback({FeedbackKind::remove, {"cat-1"}, "cat"}, c));
  EXPECT_EQ(code_of([&] { validate_feedback({FeedbackKind::remove, {}, "cat"}, c); }), ErrorCode::InvalidFeedback);
  EXPECT_EQ(code_of([&] { validate_feedback({FeedbackKind::remove, {"dog-1"}, "cat"}, c); }), ErrorCode::InvalidFeedback);
  EXPECT_EQ(code_of([&] { validate_feedback({FeedbackKind::add, {"cat-1"}, "horse"}, c); }), ErrorCode::InvalidFeedback);
  try {
    validate_feedback({FeedbackKind::remove, {"cat-1", "nope", "gone"}, "cat"}, c);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::UnknownImageIds);
    EXPECT_NE(e.detail().find("nope"), std::string::npos);
    EXPECT_NE(e.detail().find("gone"), std::string::npos);
  }
  EXPECT_EQ(parse_feedback_kind("delete"), FeedbackKind::remove);
  EXPECT_EQ(parse_feedback_kind("add"), FeedbackKind::add);
  EXPECT_EQ(to_string(FeedbackKind::remove), "delete");
}

TEST(Evolve, MonotoneMutationAcceptedEveryRound) {
  PlantedGenerator gen;
  AppendingMutator mut(" [x | y]");
  RefineConfig cfg;
  cfg.epsilon = 0.0;
  cfg.max_iter = 10;
  const PromptTemplate p{"prompt-cat", "cat", "a cat", 1, std::nullopt};
  const auto r = evolve(p, {FeedbackKind::remove, {"cat-1"}, "cat"}, planted_corpus(), planted_classes(), gen, mut, cfg);
  ASSERT_EQ(r.trace.steps.size(), 10u);
  double prev = r.trace.initial_objective;
  for (const auto& s : r.trace.steps) {
    EXPECT_TRUE(s.accepted);
    EXPECT_GT(s.objective, prev);
    prev = s.objective;
  }
  EXPECT_EQ(r.trace.termination, "max_iter");
  EXPECT_EQ(r.prompt.version, 11);
  EXPECT_EQ(r.prompt.parent_version, 10);
  EXPECT_EQ(p.version, 1);
  EXPECT_EQ(p.text, "a cat");
}

TEST(Evolve, StopsWhenGainFallsBelowEpsilon) {
  PlantedGenerator gen;
  AppendingMutator mut(" [x | y]");
  RefineConfig cfg;
  cfg.epsilon = 0.05;
  const PromptTemplate p{"prompt-cat", "cat", "a cat", 1, std::nullopt};
  const auto r = evolve(p, {FeedbackKind::remove, {"cat-1"}, "cat"}, planted_corpus(), planted_classes(), gen, mut, cfg);
  EXPECT_EQ(r.trace.termination, "converged");
  EXPECT_LT(r.trace.steps.size(), 10u);
}

TEST(Evolve, WorseMutationsAreAllRejected) {
  PlantedGenerator gen;
  AppendingMutator mut(" blur");
  const PromptTemplate p{"prompt-cat", "cat", "a [photo | picture] of a cat", 1, std::nullopt};
  const auto r = evolve(p, {FeedbackKind::remove, {"cat-1"}, "cat"}, planted_corpus(), planted_classes(), gen, mut, {});
  ASSERT_EQ(r.trace.steps.size(), 10u);
  for (const auto& s : r.trace.steps) {
    EXPECT_FALSE(s.accepted);
    EXPECT_LT(s.objective, r.trace.initial_objective);
  }
  EXPECT_EQ(r.prompt.version, 1);
  EXPECT_EQ(r.prompt.text, p.text);
  EXPECT_EQ(r.trace.termination, "max_iter");
}

TEST(Evolve, IdentityMutationNeverImproves) {
  PlantedGenerator gen;
  AppendingMutator mut("");
  const PromptTemplate p{"prompt-cat", "cat", "a cat", 1, std::nullopt};
  const auto r = evolve(p, {FeedbackKind::remove, {"cat-1"}, "cat"}, planted_corpus(), planted_classes(), gen, mut, {});
  for (const auto& s : r.trace.steps) EXPECT_FALSE(s.accepted);
  EXPECT_EQ(r.prompt.version, 1);
}

TEST(Evolve, ProviderFailureIsFlagged) {
  BrokenGenerator gen;
  AppendingMutator mut(" x");
  const PromptTemplate p{"prompt-cat", "cat", "a cat", 1, std::nullopt};
  const auto r = evolve(p, {FeedbackKind::remove, {"cat-1"}, "cat"}, planted_corpus(), planted_classes(), gen, mut, {});
  EXPECT_TRUE(r.trace.provider_failed);
  EXPECT_EQ(r.trace.termination, "provider_error");
  EXPECT_NE(r.trace.error.find("offline"), std::string::npos);
}

TEST(Evolve, DeletingWholeClassIsEmptySet) {
  PlantedGenerator gen;
  AppendingMutator mut(" x");
  const PromptTemplate p{"prompt-cat", "cat", "a cat", 1, std::nullopt};
  EXPECT_EQ(code_of([&] {
              evolve(p, {FeedbackKind::remove, {"cat-1", "cat-2", "cat-3"}, "cat"}, planted_corpus(), planted_classes(),
                     gen, mut, {});
            }),
            ErrorCode::EmptySet);
}

TEST(Evolve, AcceptedObjectiveIsMonotoneOnRandomMockRuns) {
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    auto sc = make_steering_scenario(seed, 16, 6);
    MockGenerator gen(16, seed);
    MockMutator mut(seed);
    Rng rng(seed);
    FeedbackAction action;
    action.class_name = "cat";
    action.kind = seed % 2 ? FeedbackKind::add : FeedbackKind::remove;
    for (const auto& id : sc.deleted)
      if (rng.uniform() < 0.6) action.image_ids.push_back(id);
    if (action.image_ids.empty()) action.image_ids.push_back(sc.deleted.front());
    RefineConfig cfg;
    cfg.seed = seed;
    const auto r = evolve(sc.prompt, action, sc.corpus, sc.class_embeddings, gen, mut, cfg);
    double best = r.trace.initial_objective;
    int accepted = 0;
    for (const auto& s : r.trace.steps) {
      if (s.accepted) {
        ASSERT_GT(s.objective, best);
        best = s.objective;
        ++accepted;
      } else {
        ASSERT_LE(s.objective, best);
      }
    }
    EXPECT_EQ(r.prompt.version, 1 + accepted);
    EXPECT_EQ(sc.prompt.version, 1);
    EXPECT_TRUE(is_valid_template(r.prompt.text));
  }
}

TEST(Evolve, DeterministicWithMocks) {
  const auto a = run_steering(4);
  const auto b = run_steering(4);
  EXPECT_EQ(a.result.prompt.text, b.result.prompt.text);
  ASSERT_EQ(a.result.trace.steps.size(), b.result.trace.steps.size());
  for (std::size_t i = 0; i < a.result.trace.steps.size(); ++i)
    EXPECT_EQ(a.result.trace.steps[i].objective, b.result.trace.steps[i].objective);
}

TEST(Evolve, DeleteFeedbackSteersAwayFromDeletedCluster) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto o = run_steering(seed);
    EXPECT_GT(o.final_to_remaining, o.final_to_deleted) << o.result.prompt.text;
    EXPECT_GT(o.final_to_remaining, o.initial_to_remaining) << o.result.prompt.text;
  }
}

TEST(Evolve, TraceJson) {
  const auto o = run_steering(2);
  std::ostringstream out;
  write_trace_json(out, o.result);
  const auto j = nlohmann::json::parse(out.str());
  EXPECT_EQ(j["steps"].size(), o.result.trace.steps.size());
  EXPECT_EQ(j["prompt"]["version"], o.result.prompt.version);
}
