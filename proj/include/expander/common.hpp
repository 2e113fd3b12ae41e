#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace expander {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

enum class ErrorCode {
  MalformedRecord,
  DimensionMismatch,
  DanglingEdge,
  DuplicateId,
  EmptyModality,
  EmptyGraph,
  NotADistribution,
  EmptyClass,
  TooFewSamples,
  MissingPredictions,
  MissingGenerated,
  BadConfig,
  EmptyCandidates,
  IncompleteLayout,
  NonFiniteLoss,
  Diverged,
  DegenerateInput,
  TooManyPoints,
  NotManyToOne,
  UnknownNode,
  KTooLarge,
  SingleClass,
  EmptySet,
  TooFewProxies,
  InvalidTemplate,
  ProviderError,
  ProviderUnreachable,
  BadResponse,
  InvalidTemplateFromProvider,
  ConflictingJob,
  UnknownImageIds,
  UnknownSession,
  UnknownPrompt,
  UnknownJob,
  InvalidFeedback,
  NoPendingPrompt,
  IoError,
};

std::string_view to_string(ErrorCode code);

/// Every failure the engine reports carries a machine-readable code plus a
/// free-form detail (offending id, line number, expected/actual sizes).
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, std::string detail);

  ErrorCode code() const noexcept { return code_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorCode code_;
  std::string detail_;
};

/// SplitMix64 mixer. Used for hashing and as the engine's only random
/// source so that seeded results do not depend on the standard library's
/// distribution implementations.
constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t hash_string(std::string_view s, std::uint64_t seed = 0) noexcept;

class Rng {
 public:
  explicit Rng(std::uint64_t seed) noexcept : state_(seed) {}

  std::uint64_t next() noexcept {
    state_ += 0x9e3779b97f4a7c15ULL;
    return splitmix64(state_);
  }
  /// Uniform in [0, 1).
  double uniform() noexcept { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n).
  std::size_t below(std::size_t n) noexcept {
    return static_cast<std::size_t>(uniform() * static_cast<double>(n));
  }
  double normal() noexcept;

  template <typename T>
  void shuffle(std::vector<T>& v) noexcept {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[below(i)]);
  }

 private:
  std::uint64_t state_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

template <typename A, typename B>
double cosine_similarity(const Eigen::MatrixBase<A>& a, const Eigen::MatrixBase<B>& b) {
  const double na = a.norm();
  const double nb = b.norm();
  if (na == 0.0 || nb == 0.0) return 0.0;
  return a.dot(b) / (na * nb);
}

template <typename A, typename B>
double cosine_distance(const Eigen::MatrixBase<A>& a, const Eigen::MatrixBase<B>& b) {
  return 1.0 - cosine_similarity(a, b);
}

/// Rows of `points` scaled to unit norm; zero rows stay zero.
Matrix normalized_rows(const Matrix& points);

/// Numerically stable softmax of a vector.
template <typename Derived>
Vector softmax(const Eigen::MatrixBase<Derived>& logits) {
  Vector shifted = logits.array() - logits.maxCoeff();
  Vector e = shifted.array().exp();
  return e / e.sum();
}

/// Entropy in nats with 0 ln 0 := 0.
double entropy(const Vector& p);

/// D_KL(p || q) in nats; entries of p equal to zero contribute nothing.
double kl_divergence(const Vector& p, const Vector& q);

}  // namespace expander
