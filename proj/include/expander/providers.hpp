#pragma once

#include "expander/common.hpp"
#include "expander/prompt.hpp"

#include <chrono>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace expander {

struct ProviderConfig {
  enum class Kind { mock, http };
  Kind kind = Kind::mock;
  std::optional<std::string> endpoint;  ///< e.g. "http://127.0.0.1:9000"
  double timeout_seconds = 10.0;
  std::optional<std::uint64_t> seed = 0;
  int retry = 1;
  int dimension = 32;  ///< embedding width the engine expects

  /// Throws BadConfig when http lacks an endpoint or mock lacks a seed.
  void validate() const;

  /// Reads EXPANDER_PROVIDER, EXPANDER_PROVIDER_ENDPOINT,
  /// EXPANDER_PROVIDER_TIMEOUT, EXPANDER_PROVIDER_RETRY and
  /// EXPANDER_PROVIDER_SEED on top of `base`.
  static ProviderConfig from_env(ProviderConfig base);
  static ProviderConfig from_env() { return from_env(ProviderConfig{}); }
};

class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  /// One row per input, each of width dimension().
  virtual Matrix embed(const std::vector<std::string>& inputs) = 0;
  virtual int dimension() const = 0;
};

class GenerationProvider {
 public:
  virtual ~GenerationProvider() = default;
  /// Embeddings of `count` proxy images generated from the template.
  virtual Matrix generate(const PromptTemplate& prompt, std::size_t count, std::uint64_t seed) = 0;
};

class MutationProvider {
 public:
  virtual ~MutationProvider() = default;
  /// New template text; the result is always a valid template.
  virtual std::string mutate(const PromptTemplate& prompt, std::uint64_t seed) = 0;
};

class NamingProvider {
 public:
  virtual ~NamingProvider() = default;
  /// Name for a group of labels given most frequent first.
  virtual std::string name(const std::vector<std::string>& members_by_frequency) = 0;
};

/// Unit vector derived from a hash of the text.
Vector hash_to_sphere(std::string_view text, int dimension, std::uint64_t seed);

class MockEmbedder final : public EmbeddingProvider {
 public:
  MockEmbedder(int dimension, std::uint64_t seed) : dimension_(dimension), seed_(seed) {}
  Matrix embed(const std::vector<std::string>& inputs) override;
  int dimension() const override { return dimension_; }

 private:
  int dimension_;
  std::uint64_t seed_;
};

/// Each proxy samples a concrete prompt from the template, takes the
/// normalized sum of its content-word embeddings as centre and adds
/// isotropic noise. The word "diverse" anywhere in the template widens the
/// noise.
class MockGenerator final : public GenerationProvider {
 public:
  static constexpr double kSpread = 0.15;
  static constexpr double kDiverseSpread = 0.6;

  MockGenerator(int dimension, std::uint64_t seed) : embedder_(dimension, seed), seed_(seed) {}
  Matrix generate(const PromptTemplate& prompt, std::size_t count, std::uint64_t seed) override;
  /// Noise-free centre of one concrete prompt.
  Vector centre(std::string_view concrete_prompt);

 private:
  MockEmbedder embedder_;
  std::uint64_t seed_;
};

/// Seeded edit drawn from four rules: swap an option for a lexicon word,
/// add a lexicon option, drop an option, reword the scene clause.
class MockMutator final : public MutationProvider {
 public:
  enum class Rule { swap_option, add_option, drop_option, reword_scene };
  explicit MockMutator(std::uint64_t seed) : seed_(seed) {}
  std::string mutate(const PromptTemplate& prompt, std::uint64_t seed) override;
  static std::string apply(std::string_view text, Rule rule, Rng& rng);
  static const std::vector<std::string>& lexicon();
  static const std::vector<std::string>& scenes();

 private:
  std::uint64_t seed_;
};

/// Joins the two most frequent member labels with "/".
class MockNamer final : public NamingProvider {
 public:
  std::string name(const std::vector<std::string>& members_by_frequency) override;
};

/// JSON-over-HTTP client. Every capability is a POST to /v1/<capability>
/// carrying {capability, payload, request_id}; replies carry {payload}.
class HttpProvider final : public EmbeddingProvider,
                           public GenerationProvider,
                           public MutationProvider,
                           public NamingProvider {
 public:
  explicit HttpProvider(ProviderConfig config);
  ~HttpProvider() override;

  Matrix embed(const std::vector<std::string>& inputs) override;
  int dimension() const override { return config_.dimension; }
  Matrix generate(const PromptTemplate& prompt, std::size_t count, std::uint64_t seed) override;
  std::string mutate(const PromptTemplate& prompt, std::uint64_t seed) override;
  std::string name(const std::vector<std::string>& members_by_frequency) override;

 private:
  struct Impl;
  ProviderConfig config_;
  std::unique_ptr<Impl> impl_;
};

struct Providers {
  std::shared_ptr<EmbeddingProvider> embedder;
  std::shared_ptr<GenerationProvider> generator;
  std::shared_ptr<MutationProvider> mutator;
  std::shared_ptr<NamingProvider> namer;
};

Providers make_providers(const ProviderConfig& config);

}  // namespace expander
