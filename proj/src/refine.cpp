#include "expander/refine.hpp"

#include "expander/metrics.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <ostream>
#include <set>

namespace expander {

double confidence(const Vector& embedding, const Matrix& class_embeddings, double tau_c) {
  if (class_embeddings.rows() < 2)
    throw Error(ErrorCode::SingleClass, "confidence needs >= 2 classes, got " + std::to_string(class_embeddings.rows()));
  if (!(tau_c > 0.0)) throw Error(ErrorCode::BadConfig, "tau_c must be positive");
  Vector logits(class_embeddings.rows());
  for (Eigen::Index c = 0; c < class_embeddings.rows(); ++c)
    logits[c] = cosine_similarity(embedding, class_embeddings.row(c).transpose()) / tau_c;
  return softmax(logits).maxCoeff();
}

namespace {

double summed_similarity(const Matrix& a, const Matrix& b) {
  const Matrix na = normalized_rows(a), nb = normalized_rows(b);
  return (na * nb.transpose()).sum();
}

double summed_confidence(const Matrix& proxies, const Matrix& classes, double tau_c) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < proxies.rows(); ++i) total += confidence(proxies.row(i).transpose(), classes, tau_c);
  return total;
}

}  // namespace

ObjectiveValue delete_objective(const Matrix& proxies, const Matrix& deleted, const Matrix& remaining,
                                const Matrix& class_embeddings, double tau_c) {
  if (proxies.rows() == 0) throw Error(ErrorCode::EmptySet, "no proxies");
  if (deleted.rows() == 0) throw Error(ErrorCode::EmptySet, "no deleted images");
  if (remaining.rows() == 0) throw Error(ErrorCode::EmptySet, "no remaining images");
  ObjectiveValue v;
  v.away = summed_similarity(proxies, deleted);
  v.toward = summed_similarity(proxies, remaining);
  v.confidence = summed_confidence(proxies, class_embeddings, tau_c);
  v.value = -v.away + v.toward + v.confidence;
  v.proxies = static_cast<std::size_t>(proxies.rows());
  v.reference = static_cast<std::size_t>(deleted.rows());
  v.remaining = static_cast<std::size_t>(remaining.rows());
  return v;
}

ObjectiveValue add_objective(const Matrix& proxies, const Matrix& selected, const Matrix& class_embeddings,
                             double tau_c) {
  if (proxies.rows() < 2)
    throw Error(ErrorCode::TooFewProxies, "diversity needs >= 2 proxies, got " + std::to_string(proxies.rows()));
  if (selected.rows() == 0) throw Error(ErrorCode::EmptySet, "no selected images");
  ObjectiveValue v;
  v.diversity = group_diversity(proxies);
  v.toward = summed_similarity(proxies, selected);
  v.confidence = summed_confidence(proxies, class_embeddings, tau_c);
  v.value = v.diversity + v.toward + v.confidence;
  v.proxies = static_cast<std::size_t>(proxies.rows());
  v.reference = static_cast<std::size_t>(selected.rows());
  return v;
}

std::string_view to_string(FeedbackKind kind) { return kind == FeedbackKind::remove ? "delete" : "add"; }

FeedbackKind parse_feedback_kind(std::string_view text) {
  if (text == "delete") return FeedbackKind::remove;
  if (text == "add") return FeedbackKind::add;
  throw Error(ErrorCode::InvalidFeedback, "kind must be 'delete' or 'add', got '" + std::string(text) + "'");
}

void validate_feedback(const FeedbackAction& action, const Corpus& corpus) {
  if (action.image_ids.empty()) throw Error(ErrorCode::InvalidFeedback, "no image ids selected");
  if (!corpus.class_index(action.class_name))
    throw Error(ErrorCode::InvalidFeedback, "unknown class '" + action.class_name + "'");
  std::string missing;
  for (const auto& id : action.image_ids)
    if (!corpus.image_index(id)) missing += (missing.empty() ? "" : ", ") + id;
  if (!missing.empty()) throw Error(ErrorCode::UnknownImageIds, missing);
  for (const auto& id : action.image_ids) {
    const auto& img = corpus.images()[*corpus.image_index(id)];
    if (img.class_name != action.class_name)
      throw Error(ErrorCode::InvalidFeedback,
                  "image " + id + " is of class '" + img.class_name + "', not '" + action.class_name + "'");
  }
}

FeedbackScorer::FeedbackScorer(const FeedbackAction& action, const Corpus& corpus, Matrix class_embeddings,
                               GenerationProvider& generator, const RefineConfig& config)
    : kind_(action.kind), classes_(std::move(class_embeddings)), generator_(generator), config_(config) {
  validate_feedback(action, corpus);
  const std::set<std::string> chosen(action.image_ids.begin(), action.image_ids.end());
  std::vector<Eigen::Index> chosen_rows, rest_rows;
  for (std::size_t i = 0; i < corpus.images().size(); ++i) {
    const auto& img = corpus.images()[i];
    if (img.class_name != action.class_name) continue;
    (chosen.count(img.id) ? chosen_rows : rest_rows).push_back(static_cast<Eigen::Index>(i));
  }
  const Matrix all = corpus.image_embeddings();
  chosen_ = all(chosen_rows, Eigen::all);
  remaining_ = all(rest_rows, Eigen::all);
  if (kind_ == FeedbackKind::remove && remaining_.rows() == 0)
    throw Error(ErrorCode::EmptySet, "deleting every image of class '" + action.class_name + "' leaves nothing to steer toward");
  if (config_.proxies < 1) throw Error(ErrorCode::BadConfig, "proxy count must be >= 1");
}

ObjectiveValue FeedbackScorer::evaluate(const Matrix& proxies) const {
  if (kind_ == FeedbackKind::remove) return delete_objective(proxies, chosen_, remaining_, classes_, config_.tau_c);
  return add_objective(proxies, chosen_, classes_, config_.tau_c);
}

double FeedbackScorer::operator()(const PromptTemplate& prompt) const {
  const Matrix proxies = generator_.generate(prompt, config_.proxies, config_.seed);
  if (static_cast<std::size_t>(proxies.rows()) != config_.proxies)
    throw Error(ErrorCode::BadResponse, "expected " + std::to_string(config_.proxies) + " proxies, got " +
                                            std::to_string(proxies.rows()));
  return evaluate(proxies).value;
}

EvolutionResult evolve(const PromptTemplate& prompt, const FeedbackAction& action, const Corpus& corpus,
                       const Matrix& class_embeddings, GenerationProvider& generator,
                       MutationProvider& mutator, const RefineConfig& config) {
  if (config.max_iter < 0) throw Error(ErrorCode::BadConfig, "max_iter must be >= 0");
  const FeedbackScorer score(action, corpus, class_embeddings, generator, config);
  EvolutionResult result{prompt, {}};
  auto& trace = result.trace;
  try {
    double best = score(prompt);
    trace.initial_objective = best;
    trace.termination = "max_iter";
    for (int round = 1; round <= config.max_iter; ++round) {
      const std::string text = mutator.mutate(result.prompt, splitmix64(config.seed + static_cast<std::uint64_t>(round)));
      if (!is_valid_template(text))
        throw Error(ErrorCode::InvalidTemplateFromProvider, "mutation produced '" + text + "'");
      PromptTemplate candidate = result.prompt.derived(text);
      const double value = score(candidate);
      const bool accepted = value > best;
      trace.steps.push_back({round, text, value, accepted});
      if (!accepted) continue;
      const double gain = (value - best) / std::max(std::abs(best), 1e-12);
      result.prompt = std::move(candidate);
      best = value;
      if (gain < config.epsilon) {
        trace.termination = "converged";
        break;
      }
    }
  } catch (const Error& e) {
    if (e.code() == ErrorCode::EmptySet || e.code() == ErrorCode::TooFewProxies || e.code() == ErrorCode::SingleClass)
      throw;
    trace.provider_failed = true;
    trace.termination = "provider_error";
    trace.error = e.what();
  }
  return result;
}

void write_trace_json(std::ostream& out, const EvolutionResult& result) {
  nlohmann::ordered_json j;
  j["prompt"] = {{"id", result.prompt.id},
                 {"class", result.prompt.class_name},
                 {"template", result.prompt.text},
                 {"version", result.prompt.version}};
  if (result.prompt.parent_version) j["prompt"]["parent_version"] = *result.prompt.parent_version;
  j["initial_objective"] = result.trace.initial_objective;
  j["steps"] = nlohmann::ordered_json::array();
  for (const auto& s : result.trace.steps)
    j["steps"].push_back(
        {{"round", s.round}, {"candidate", s.candidate}, {"objective", s.objective}, {"accepted", s.accepted}});
  j["termination"] = result.trace.termination;
  if (result.trace.provider_failed) j["error"] = result.trace.error;
  out << j.dump(2) << '\n';
}

}  // namespace expander
