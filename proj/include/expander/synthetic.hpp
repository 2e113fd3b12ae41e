#pragma once

#include "expander/common.hpp"
#include "expander/corpus.hpp"
#include "expander/prompt.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace expander {

struct BenchmarkConfig {
  std::size_t classes = 10;
  std::size_t images_per_class = 100;
  std::size_t labels_per_class = 5;
  std::size_t shared_labels = 10;  ///< labels not tied to any class
  int dimension = 32;
  double image_noise = 0.35;
  double shared_rate = 0.25;  ///< chance an image also carries a shared label
  std::uint64_t seed = 0;
};

/// Planted many-to-many corpus. Class centres are hash_to_sphere(class name)
/// so they agree with the mock embedder under the same seed. Each image
/// mixes two or three of its class's labels plus noise and links to them;
/// some images also carry a shared label. Originals get zero-shot
/// predictions against the class centres.
Corpus make_benchmark(const BenchmarkConfig& config);

/// Softmax of cosine similarity to each class row over temperature tau.
Vector zero_shot(const Vector& embedding, const Matrix& class_embeddings, double tau = 0.1);

/// Random corpus in which every image has at most one label.
Corpus make_many_to_one(std::uint64_t seed, std::size_t max_images = 50, std::size_t max_labels = 5,
                        int dimension = 8);

/// Small corpus of `points` images with random labels and dense edges, used
/// by gradient checks.
Corpus make_random_corpus(std::uint64_t seed, std::size_t images, std::size_t labels, int dimension);

/// Two classes whose originals never mention "tiger"; iteration-1 generated
/// Bengal images carry it. `planted` lists those ids.
struct TigerScenario {
  Corpus corpus;
  std::vector<std::string> planted;
};
TigerScenario make_tiger_corpus(std::uint64_t seed, int dimension = 16);

/// Class "cat" holds two clusters produced by the mock generator from
/// "a cartoon of a cat" (to be deleted) and "a photo of a cat" (kept);
/// class "dog" provides the second class for confidence.
struct SteeringScenario {
  Corpus corpus;
  std::vector<std::string> deleted;
  PromptTemplate prompt;
  Matrix class_embeddings;
};
SteeringScenario make_steering_scenario(std::uint64_t seed, int dimension = 32, std::size_t per_cluster = 12);

}  // namespace expander
