// Prints one PASS/FAIL line per acceptance criterion and exits nonzero if
// any criterion fails.

#include "expander/bench.hpp"
#include "expander/hierarchy.hpp"
#include "expander/metrics.hpp"
#include "expander/refine.hpp"
#include "expander/service.hpp"
#include "expander/theory.hpp"

#include "../support/fixtures.hpp"
#include "../support/session_fixtures.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

using namespace expander;
using namespace expander::testing;

namespace {

struct Outcome {
  bool ok = false;
  std::string detail;
};

struct Criterion {
  std::string name;
  double time_limit_s;  ///< 0 means no limit
  std::function<Outcome()> check;
};

std::string fmt(const char* pattern, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, pattern, args...);
  return buf;
}

Outcome gradient_oracle() {
  double smooth = 0.0, relu = 0.0;
  Eigen::Index skipped = 0, total = 0;
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    smooth = std::max(smooth, check_gradients(seed, 1e-4).max_relative_error);
    const auto r = check_gradients(seed, 1e-4, Similarity::cosine, Activation::relu);
    relu = std::max(relu, r.max_relative_error);
    skipped += r.skipped_at_kinks;
    total += r.parameters;
  }
  return {smooth < 1e-4 && relu < 1e-4,
          fmt("max relative error %.3g (tanh, every parameter), %.3g (relu, %ld of %ld parameters skipped at "
              "kinks) over 3 seeds (limit 1e-4)",
              smooth, relu, static_cast<long>(skipped), static_cast<long>(total))};
}

Outcome order_bounds() {
  const std::uint64_t expected[] = {2, 7, 22, 56};
  Rng rng(2024);
  std::string detail;
  bool ok = true;
  for (int n = 2; n <= 5; ++n) {
    ok = ok && order_bound(static_cast<std::uint64_t>(n)) == expected[n - 2];
    std::size_t most = 0;
    for (int trial = 0; trial < 200; ++trial) {
      std::vector<Eigen::Vector2d> pts;
      for (int i = 0; i < n; ++i) pts.emplace_back(rng.uniform(-1, 1), rng.uniform(-1, 1));
      const auto cert = count_distance_orders(pts);
      ok = ok && cert.within_bound();
      most = std::max(most, cert.realized());
    }
    detail += fmt("n=%d max %zu/%llu ", n, most, static_cast<unsigned long long>(expected[n - 2]));
  }
  return {ok, detail};
}

Outcome many_to_one_zero_loss() {
  int zero = 0;
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const Corpus c = make_many_to_one(seed, 50, 5, 8);
    const double loss = order_loss(construct_many_to_one_layout(c), c).value;
    worst = std::max(worst, loss);
    if (loss == 0.0) ++zero;
  }
  return {zero == 50, fmt("%d/50 corpora with loss exactly 0 (max %.3g)", zero, worst)};
}

Outcome permutation_instance() {
  const Corpus c = make_permutation_instance(4);
  const auto r = verify_permutation_instance(c, 100, 7);
  return {r.all_trials_positive && r.trials == 100,
          fmt("%d trials, min residual %.4g, at most %zu of %llu demanded orders realised (bound %llu)", r.trials, r.min_residual,
              r.max_labels_satisfied, static_cast<unsigned long long>(r.required_orders),
              static_cast<unsigned long long>(r.bound))};
}

Outcome metric_closed_forms() {
  const double info = informativeness(testing::vec({1.0, 0.0}), testing::vec({0.5, 0.5}));
  const bool info_ok = std::abs(info - (std::log(2.0) + 0.5)) <= 1e-9;
  const Matrix x = rows({{0.0, 0.0}, {1.0, 0.0}});
  const double same = cmmd(x, x, 1.0).value;
  const Matrix flat = rows({{0.3, 0.7}, {0.3, 0.7}, {0.3, 0.7}});
  const double div = group_diversity(flat);
  double prev = -1.0;
  bool increasing = true;
  std::string sweep;
  for (double offset : {0.1, 1.0, 10.0}) {
    Matrix y = x;
    y.col(1).array() += offset;
    const double v = cmmd(x, y, 1.0).value;
    increasing = increasing && v > prev;
    prev = v;
    sweep += fmt("%.4g ", v);
  }
  return {info_ok && std::abs(same) <= 1e-9 && div == 0.0 && increasing,
          fmt("informativeness %.12f, cmmd(identical) %.3g, diversity %.3g, sweep ", info, same, div) + sweep};
}

Outcome table_direction() {
  int dominated = 0;
  double worst_gap = 0.0;
  std::string detail;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto r = run_benchmark(default_bench_options(seed));
    if (r.m2m_dominates) ++dominated;
    worst_gap = std::max({worst_gap, r.intra_gap_t, r.intra_gap_c});
    const auto& m = r.report.row("m2m");
    const auto& o = r.report.row("order-loss");
    detail += fmt("[seed %llu ims %.3f/%.3f T %.3f/%.3f C %.3f/%.3f] ", static_cast<unsigned long long>(seed), m.ims,
                  o.ims, m.t_inter, o.t_inter, m.c_inter, o.c_inter);
  }
  return {dominated >= 4 && worst_gap <= 0.02,
          fmt("dominates on %d/5 seeds, worst intra gap %.4f; ", dominated, worst_gap) + detail};
}

Outcome refinement() {
  int monotone = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    auto sc = make_steering_scenario(seed, 16, 6);
    MockGenerator gen(16, seed);
    MockMutator mut(seed);
    Rng rng(seed);
    FeedbackAction action{seed % 2 ? FeedbackKind::add : FeedbackKind::remove, {}, "cat"};
    for (const auto& id : sc.deleted)
      if (rng.uniform() < 0.6) action.image_ids.push_back(id);
    if (action.image_ids.empty()) action.image_ids.push_back(sc.deleted.front());
    RefineConfig cfg;
    cfg.seed = seed;
    const auto r = evolve(sc.prompt, action, sc.corpus, sc.class_embeddings, gen, mut, cfg);
    double best = r.trace.initial_objective;
    int accepted = 0;
    bool ok = !r.trace.provider_failed;
    for (const auto& s : r.trace.steps) {
      if (s.accepted) {
        ok = ok && s.objective > best;
        best = s.objective;
        ++accepted;
      } else {
        ok = ok && s.objective <= best;
      }
    }
    ok = ok && r.prompt.version == 1 + accepted;
    if (ok) ++monotone;
  }
  const auto steer = run_steering(1);
  const bool steered =
      steer.final_to_remaining > steer.final_to_deleted && steer.final_to_remaining > steer.initial_to_remaining;
  return {monotone == 100 && steered,
          fmt("%d/100 monotone runs; steering remaining %.3f vs deleted %.3f, initial remaining %.3f", monotone,
              steer.final_to_remaining, steer.final_to_deleted, steer.initial_to_remaining)};
}

Outcome tree_cut_properties() {
  Rng rng(500);
  int covers = 0;
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t n = 1 + rng.below(25);
    const LabelTree t = random_tree(rng, n);
    const std::size_t focus = rng.below(t.size());
    const std::size_t budget = 1 + rng.below(n + 3);
    if (is_antichain_cover(t, tree_cut(t, focus, budget))) ++covers;
  }
  bool root_ok = true, leaves_ok = true;
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 2 + rng.below(20);
    const LabelTree t = random_tree(rng, n);
    const std::size_t focus = rng.below(t.size());
    root_ok = root_ok && tree_cut(t, focus, 1).nodes == std::vector<std::size_t>{t.root()};
    std::vector<std::size_t> leaves(t.leaves());
    std::iota(leaves.begin(), leaves.end(), std::size_t{0});
    leaves_ok = leaves_ok && tree_cut(t, focus, t.leaves() + rng.below(5)).nodes == leaves;
  }
  return {covers == 500 && root_ok && leaves_ok,
          fmt("%d/500 antichain covers; budget 1 gives root: %s; budget >= leaves gives leaves: %s", covers,
              root_ok ? "yes" : "no", leaves_ok ? "yes" : "no")};
}

Outcome service_contract() {
  auto ps = make_planted_session();
  auto s = ps->manager.get(ps->id);
  std::atomic<bool> stop{false};
  std::atomic<long> reads{0}, mixed{0};
  std::vector<std::thread> readers;
  for (int r = 0; r < 4; ++r)
    readers.emplace_back([&] {
      while (!stop) {
        const auto snap = s->snapshot();
        const auto proj = projection_json(*snap);
        const auto metrics = metrics_json(*snap);
        const bool ok = proj["corpus_version"] == snap->corpus_version &&
                        metrics["corpus_version"] == snap->corpus_version &&
                        proj["images"].size() == snap->corpus->images().size() &&
                        metrics["points"].size() == snap->corpus_version;
        if (!ok) ++mixed;
        ++reads;
      }
    });

  const auto before = s->snapshot();
  const JobState job = s->wait(s->submit_feedback({FeedbackKind::remove, ps->scenario.deleted, "cat"}));
  bool flow = job.status == JobState::Status::done && job.recommendation_attached;
  if (flow) {
    s->accept("prompt-cat");
    const auto after = s->snapshot();
    flow = after->corpus_version == before->corpus_version + 1 &&
           after->timeline.size() == before->timeline.size() + 1;
  }
  stop = true;
  for (auto& t : readers) t.join();
  return {flow && mixed == 0 && reads > 0,
          fmt("flow %s; %ld reads, %ld mixed", flow ? "version +1 with one new metric point" : "failed", reads.load(),
              mixed.load())};
}

}  // namespace

int main() {
  const std::vector<Criterion> criteria = {
      {"gradient oracle", 10, gradient_oracle},
      {"distance-order bounds", 60, order_bounds},
      {"many-to-one zero order loss", 10, many_to_one_zero_loss},
      {"permutation instance keeps positive loss", 120, permutation_instance},
      {"metric closed forms", 0, metric_closed_forms},
      {"benchmark direction", 300, table_direction},
      {"refinement", 60, refinement},
      {"tree cut", 0, tree_cut_properties},
      {"service contract", 0, service_contract},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.check();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool in_time = c.time_limit_s <= 0 || seconds < c.time_limit_s;
    const bool pass = o.ok && in_time;
    if (!pass) ++failures;
    std::cout << (pass ? "PASS " : "FAIL ") << c.name << " (" << fmt("%.1f", seconds) << " s";
    if (c.time_limit_s > 0) std::cout << fmt(", limit %.0f s", c.time_limit_s);
    std::cout << "): " << o.detail << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
