#pragma once

#include "expander/evaluate.hpp"
#include "expander/projection.hpp"
#include "expander/synthetic.hpp"

#include <cstdint>

namespace expander {

struct BenchOptions {
  BenchmarkConfig data;
  ProjectionConfig projection;  ///< shared by all three runs except the objective
  std::size_t k = 30;
};

/// Defaults sized to finish quickly on one core.
BenchOptions default_bench_options(std::uint64_t seed);

struct BenchResult {
  EvalReport report;  ///< rows "m2m", "order-loss", "image-only"
  bool m2m_dominates = false;  ///< strictly better IMS, T_inter and C_inter than order-loss
  double intra_gap_t = 0.0;    ///< |T_intra(m2m) - T_intra(image-only)|
  double intra_gap_c = 0.0;
  double seconds = 0.0;
};

/// Generates the planted benchmark, trains the multi-modal contrastive
/// projection, the order-loss baseline and an image-only contrastive run of
/// the same architecture, and compares them.
BenchResult run_benchmark(const BenchOptions& options);

}  // namespace expander
