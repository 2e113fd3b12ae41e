#include "expander/bench.hpp"

#include <chrono>
#include <cmath>

namespace expander {

BenchOptions default_bench_options(std::uint64_t seed) {
  BenchOptions o;
  o.data.seed = seed;
  o.projection.seed = seed;
  o.projection.epochs = 20;
  return o;
}

BenchResult run_benchmark(const BenchOptions& options) {
  const auto start = std::chrono::steady_clock::now();
  const Corpus corpus = make_benchmark(options.data);

  std::vector<NamedLayout> layouts;
  for (const auto& [name, objective] : {std::pair{"m2m", Objective::contrastive},
                                        std::pair{"order-loss", Objective::order_loss},
                                        std::pair{"image-only", Objective::image_only}}) {
    ProjectionConfig cfg = options.projection;
    cfg.objective = objective;
    layouts.push_back({name, train(corpus, cfg).layout});
  }

  BenchResult out;
  out.report = compare(layouts, corpus, options.k, "synthetic-" + std::to_string(options.data.seed));
  const auto& m2m = out.report.row("m2m");
  const auto& base = out.report.row("order-loss");
  const auto& img = out.report.row("image-only");
  out.m2m_dominates = dominates_inter(m2m, base);
  out.intra_gap_t = std::abs(m2m.t_intra - img.t_intra);
  out.intra_gap_c = std::abs(m2m.c_intra - img.c_intra);
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

}  // namespace expander
