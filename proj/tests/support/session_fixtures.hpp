#pragma once

#include "expander/service.hpp"
#include "expander/synthetic.hpp"

#include "fixtures.hpp"

#include <future>
#include <memory>
#include <string>

namespace expander::testing {

/// Proxies point between the deleted and the kept cat clusters and move
/// toward the kept one as the template gains option separators, so every
/// appended option group strictly improves delete feedback.
class PlantedGenerator final : public GenerationProvider {
 public:
  PlantedGenerator(Vector keep, Vector drop) : keep_(std::move(keep)), drop_(std::move(drop)) {}

  Matrix generate(const PromptTemplate& prompt, std::size_t count, std::uint64_t) override {
    gate_.wait();
    const auto bars = static_cast<double>(std::count(prompt.text.begin(), prompt.text.end(), '|'));
    const Vector d = ((bars + 1.0) * keep_ + drop_).normalized();
    Matrix out(static_cast<Eigen::Index>(count), d.size());
    for (Eigen::Index r = 0; r < out.rows(); ++r) out.row(r) = d.transpose();
    return out;
  }

  /// Blocks every later generate() call until release().
  void hold() { gate_ = release_.get_future().share(); }
  void release() { release_.set_value(); }

 private:
  struct Open {
    Open() {
      std::promise<void> p;
      p.set_value();
      future = p.get_future().share();
    }
    std::shared_future<void> future;
  };

  Vector keep_, drop_;
  std::promise<void> release_;
  std::shared_future<void> gate_ = Open().future;
};

class OptionAppender final : public MutationProvider {
 public:
  std::string mutate(const PromptTemplate& prompt, std::uint64_t) override { return prompt.text + " [x | y]"; }
};

struct PlantedSession {
  SteeringScenario scenario;
  std::shared_ptr<PlantedGenerator> generator;
  SessionManager manager;
  std::string id;
};

inline SessionConfig quick_session_config() {
  SessionConfig cfg;
  cfg.projection.epochs = 10;
  cfg.refine.max_iter = 3;
  return cfg;
}

inline Vector centroid_of(const Corpus& corpus, const std::vector<std::string>& ids) {
  Vector sum = Vector::Zero(corpus.dimension());
  for (const auto& id : ids) sum += corpus.images()[*corpus.image_index(id)].embedding;
  return sum.normalized();
}

inline std::vector<std::string> kept_cats(const SteeringScenario& sc) {
  std::vector<std::string> out;
  for (const auto& img : sc.corpus.images())
    if (img.class_name == "cat" && std::find(sc.deleted.begin(), sc.deleted.end(), img.id) == sc.deleted.end())
      out.push_back(img.id);
  return out;
}

/// Session over the steering scenario whose generator is planted. Call
/// `generator->hold()` before submitting feedback to keep the job running.
inline std::unique_ptr<PlantedSession> make_planted_session(std::uint64_t seed = 0) {
  auto sc = make_steering_scenario(seed);
  auto gen = std::make_shared<PlantedGenerator>(centroid_of(sc.corpus, kept_cats(sc)),
                                                centroid_of(sc.corpus, sc.deleted));
  auto factory = [gen](const ProviderConfig& cfg) {
    Providers p;
    p.embedder = std::make_shared<MockEmbedder>(cfg.dimension, cfg.seed.value_or(0));
    p.generator = gen;
    p.mutator = std::make_shared<OptionAppender>();
    p.namer = std::make_shared<MockNamer>();
    return p;
  };
  auto out = std::unique_ptr<PlantedSession>(
      new PlantedSession{std::move(sc), gen, SessionManager(quick_session_config(), factory), {}});
  out->id = out->manager.create(out->scenario.corpus);
  return out;
}

}  // namespace expander::testing
