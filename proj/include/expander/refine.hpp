#pragma once

#include "expander/common.hpp"
#include "expander/corpus.hpp"
#include "expander/prompt.hpp"
#include "expander/providers.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace expander {

/// Largest softmax(cos(embedding, class_j) / tau_c) over the class rows.
double confidence(const Vector& embedding, const Matrix& class_embeddings, double tau_c);

struct ObjectiveValue {
  double value = 0.0;
  double away = 0.0;        ///< delete: summed similarity to deleted images
  double toward = 0.0;      ///< summed similarity to remaining / selected images
  double diversity = 0.0;   ///< add: diversity of the proxy set
  double confidence = 0.0;  ///< summed proxy confidence
  std::size_t proxies = 0;
  std::size_t reference = 0;  ///< deleted (delete) or selected (add) set size
  std::size_t remaining = 0;
};

/// -sum sim(g, deleted) + sum sim(g, remaining) + sum confidence(g).
/// Rows are embeddings; sums run over every proxy and set member.
ObjectiveValue delete_objective(const Matrix& proxies, const Matrix& deleted, const Matrix& remaining,
                                const Matrix& class_embeddings, double tau_c);

/// diversity(proxies) + sum sim(g, selected) + sum confidence(g).
ObjectiveValue add_objective(const Matrix& proxies, const Matrix& selected, const Matrix& class_embeddings,
                             double tau_c);

enum class FeedbackKind { remove, add };
std::string_view to_string(FeedbackKind kind);
FeedbackKind parse_feedback_kind(std::string_view text);

struct FeedbackAction {
  FeedbackKind kind = FeedbackKind::remove;
  std::vector<std::string> image_ids;
  std::string class_name;
};

/// Throws UnknownImageIds listing missing ids, InvalidFeedback for an empty
/// selection or images outside the class.
void validate_feedback(const FeedbackAction& action, const Corpus& corpus);

struct RefineConfig {
  std::size_t proxies = 8;
  double epsilon = 1e-3;  ///< stop once an accepted step gains less than this, relatively
  int max_iter = 10;
  std::uint64_t seed = 0;
  double tau_c = 0.1;
};

struct EvolutionStep {
  int round = 0;
  std::string candidate;
  double objective = 0.0;
  bool accepted = false;
};

struct EvolutionTrace {
  double initial_objective = 0.0;
  std::vector<EvolutionStep> steps;
  std::string termination;  ///< "converged", "max_iter" or "provider_error"
  bool provider_failed = false;
  std::string error;
};

struct EvolutionResult {
  PromptTemplate prompt;  ///< best template; version bumped once per accepted step
  EvolutionTrace trace;
};

/// Scores one prompt for the feedback: proxies are generated with a seed
/// fixed for the whole run so equal prompts score equally.
class FeedbackScorer {
 public:
  FeedbackScorer(const FeedbackAction& action, const Corpus& corpus, Matrix class_embeddings,
                 GenerationProvider& generator, const RefineConfig& config);
  double operator()(const PromptTemplate& prompt) const;
  ObjectiveValue evaluate(const Matrix& proxies) const;

 private:
  FeedbackKind kind_;
  Matrix chosen_;
  Matrix remaining_;
  Matrix classes_;
  GenerationProvider& generator_;
  RefineConfig config_;
};

/// Hill climbing: each round mutates the current best; a candidate replaces
/// it only when its objective is strictly higher.
EvolutionResult evolve(const PromptTemplate& prompt, const FeedbackAction& action, const Corpus& corpus,
                       const Matrix& class_embeddings, GenerationProvider& generator,
                       MutationProvider& mutator, const RefineConfig& config);

void write_trace_json(std::ostream& out, const EvolutionResult& result);

}  // namespace expander
