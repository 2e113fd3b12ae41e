#pragma once

#include "expander/corpus.hpp"
#include "expander/hierarchy.hpp"
#include "expander/network.hpp"
#include "expander/projection.hpp"
#include "expander/providers.hpp"
#include "expander/refine.hpp"
#include "expander/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <initializer_list>
#include <numeric>
#include <string>
#include <vector>

namespace expander::testing {

inline Vector vec(std::initializer_list<double> values) {
  Vector v(static_cast<Eigen::Index>(values.size()));
  Eigen::Index i = 0;
  for (double x : values) v[i++] = x;
  return v;
}

inline ImageRecord image(std::string id, std::string cls, Vector emb, ImageKind kind = ImageKind::original,
                         int iteration = 0) {
  ImageRecord r;
  r.id = std::move(id);
  r.class_name = std::move(cls);
  r.kind = kind;
  r.iteration = iteration;
  r.embedding = std::move(emb);
  return r;
}

inline LabelRecord label(std::string id, std::string text, Vector emb) {
  LabelRecord r;
  r.id = std::move(id);
  r.text = std::move(text);
  r.embedding = std::move(emb);
  return r;
}

inline EdgeSpec edge(std::string image_id, std::string label_id) {
  return {std::move(image_id), std::move(label_id), std::nullopt};
}

inline Matrix rows(std::initializer_list<std::initializer_list<double>> values) {
  Matrix m(static_cast<Eigen::Index>(values.size()), static_cast<Eigen::Index>(values.begin()->size()));
  Eigen::Index r = 0;
  for (const auto& row : values) {
    Eigen::Index c = 0;
    for (double x : row) m(r, c++) = x;
    ++r;
  }
  return m;
}

inline Matrix random_rows(Rng& rng, Eigen::Index n, Eigen::Index d) {
  Matrix m(n, d);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < d; ++j) m(i, j) = rng.normal();
  return m;
}

inline std::vector<LabelRecord> random_labels(Rng& rng, std::size_t n, int dim = 5) {
  std::vector<LabelRecord> out;
  for (std::size_t j = 0; j < n; ++j) {
    Vector e(dim);
    for (int d = 0; d < dim; ++d) e[d] = rng.normal();
    char id[16];
    std::snprintf(id, sizeof id, "l%03zu", j);
    out.push_back(label(id, id, e));
  }
  return out;
}

/// Random hierarchy with random image counts on the leaves.
inline LabelTree random_tree(Rng& rng, std::size_t n) {
  LabelTree t = build_hierarchy(random_labels(rng, n));
  // Give the tree counts without a corpus by rebuilding nodes.
  std::vector<TreeNode> nodes = t.nodes();
  for (std::size_t i = 0; i < t.leaves(); ++i) {
    nodes[i].original_count = static_cast<int>(rng.below(6));
    nodes[i].generated_count = static_cast<int>(rng.below(12));
  }
  for (std::size_t i = t.leaves(); i < nodes.size(); ++i) {
    nodes[i].original_count = nodes[nodes[i].children[0]].original_count + nodes[nodes[i].children[1]].original_count;
    nodes[i].generated_count =
        nodes[nodes[i].children[0]].generated_count + nodes[nodes[i].children[1]].generated_count;
  }
  return LabelTree(std::move(nodes));
}

struct GradientCheck {
  double max_relative_error = 0.0;
  double norm_relative_error = 0.0;
  Eigen::Index parameters = 0;
  Eigen::Index skipped_at_kinks = 0;  ///< ReLU parameters whose +-h step flips an activation
  std::size_t terms = 0;
};

/// Compares the analytic gradient of the weighted contrastive objective with
/// central differences, on a d=8 corpus of
/// 20 images and 6 labels. Central differences are meaningless across a ReLU
/// kink, so parameters whose step changes any activation pattern are skipped.
inline GradientCheck check_gradients(std::uint64_t seed, double h = 1e-4,
                                     Similarity kind = Similarity::cosine,
                                     Activation activation = Activation::tanh) {
  const Corpus corpus = make_random_corpus(seed, 20, 6, 8);
  NetworkConfig net_cfg;
  net_cfg.hidden = {16, 16, 12, 8, 6};
  net_cfg.activation = activation;
  Network<double> net(corpus.dimension(), net_cfg, seed);

  const auto iknn = knn_graph(corpus, 3, Modality::image);
  const auto lknn = knn_graph(corpus, 2, Modality::label);
  PairSampling sampling;
  sampling.batch_size = 20;
  sampling.negatives = 3;
  const PairBatch batch = sample_pairs(corpus, iknn, lknn, label_frequencies(corpus), sampling, seed + 1);
  const Matrix inputs = slot_inputs(corpus, batch);
  const TaskWeights weights{0.7, 1.3};
  const double tau = 0.5;

  const auto analytic = gradients<double>(net, inputs, batch, tau, weights, kind);

  Network<double> probe = net;
  using Pattern = std::vector<bool>;
  const auto pattern = [&] {
    Network<double>::Tape tape;
    probe.forward(inputs, tape);
    Pattern out;
    for (int l = 0; l + 1 < Network<double>::kLayers; ++l)
      for (Eigen::Index i = 0; i < tape.pre[l].size(); ++i) out.push_back(tape.pre[l].data()[i] > 0);
    return out;
  };
  const bool relu = activation == Activation::relu;
  const Pattern base = relu ? pattern() : Pattern{};

  Eigen::VectorXd numeric(net.parameter_count());
  std::vector<bool> skip(static_cast<std::size_t>(net.parameter_count()), false);
  for (Eigen::Index p = 0; p < net.parameter_count(); ++p) {
    const double saved = probe.parameters()[p];
    probe.parameters()[p] = saved + h;
    const double up = objective_value<double>(probe, inputs, batch, tau, weights, kind);
    bool kink = relu && pattern() != base;
    probe.parameters()[p] = saved - h;
    const double down = objective_value<double>(probe, inputs, batch, tau, weights, kind);
    kink = kink || (relu && pattern() != base);
    probe.parameters()[p] = saved;
    numeric[p] = (up - down) / (2 * h);
    skip[static_cast<std::size_t>(p)] = kink;
  }

  GradientCheck out;
  out.parameters = net.parameter_count();
  out.terms = batch.terms.size();
  Eigen::VectorXd a_kept = analytic.gradient, n_kept = numeric;
  for (Eigen::Index p = 0; p < numeric.size(); ++p)
    if (skip[static_cast<std::size_t>(p)]) {
      a_kept[p] = n_kept[p] = 0.0;
      ++out.skipped_at_kinks;
    }
  const double scale = std::max(a_kept.norm(), n_kept.norm());
  out.norm_relative_error = (a_kept - n_kept).norm() / std::max(scale, 1e-300);
  // Entries far below the gradient's own scale are compared against that scale.
  const double floor = 1e-3 * scale / std::sqrt(static_cast<double>(numeric.size()));
  for (Eigen::Index p = 0; p < numeric.size(); ++p) {
    if (skip[static_cast<std::size_t>(p)]) continue;
    const double a = analytic.gradient[p];
    const double n = numeric[p];
    const double denom = std::max({std::abs(a), std::abs(n), floor});
    out.max_relative_error = std::max(out.max_relative_error, std::abs(a - n) / denom);
  }
  return out;
}

struct SteeringOutcome {
  EvolutionResult result;
  double initial_to_remaining = 0.0;
  double initial_to_deleted = 0.0;
  double final_to_remaining = 0.0;
  double final_to_deleted = 0.0;
};

/// Mean cosine between every proxy row and every reference row.
inline double mean_cosine(const Matrix& proxies, const Matrix& reference) {
  const Matrix a = normalized_rows(proxies), b = normalized_rows(reference);
  return (a * b.transpose()).mean();
}

/// Runs delete feedback on the two-cluster cat scenario and measures fresh
/// proxies of the initial and final prompts against both clusters.
inline SteeringOutcome run_steering(std::uint64_t seed, const RefineConfig& config = {}) {
  auto sc = make_steering_scenario(seed);
  MockGenerator generator(sc.corpus.dimension(), seed);
  MockMutator mutator(seed);
  FeedbackAction action{FeedbackKind::remove, sc.deleted, "cat"};
  RefineConfig cfg = config;
  cfg.seed = seed;
  SteeringOutcome out{evolve(sc.prompt, action, sc.corpus, sc.class_embeddings, generator, mutator, cfg)};

  std::vector<Eigen::Index> del, rem;
  for (std::size_t i = 0; i < sc.corpus.images().size(); ++i) {
    const auto& img = sc.corpus.images()[i];
    if (img.class_name != "cat") continue;
    const bool deleted = std::find(sc.deleted.begin(), sc.deleted.end(), img.id) != sc.deleted.end();
    (deleted ? del : rem).push_back(static_cast<Eigen::Index>(i));
  }
  const Matrix all = sc.corpus.image_embeddings();
  const Matrix deleted = all(del, Eigen::all), remaining = all(rem, Eigen::all);
  const std::uint64_t eval_seed = splitmix64(seed ^ 0xfeedULL);
  const Matrix before = generator.generate(sc.prompt, 64, eval_seed);
  const Matrix after = generator.generate(out.result.prompt, 64, eval_seed);
  out.initial_to_remaining = mean_cosine(before, remaining);
  out.initial_to_deleted = mean_cosine(before, deleted);
  out.final_to_remaining = mean_cosine(after, remaining);
  out.final_to_deleted = mean_cosine(after, deleted);
  return out;
}

}  // namespace expander::testing
