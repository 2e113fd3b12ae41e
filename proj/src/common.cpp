#include "expander/common.hpp"

namespace expander {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::MalformedRecord: return "MalformedRecord";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::DanglingEdge: return "DanglingEdge";
    case ErrorCode::DuplicateId: return "DuplicateId";
    case ErrorCode::EmptyModality: return "EmptyModality";
    case ErrorCode::EmptyGraph: return "EmptyGraph";
    case ErrorCode::NotADistribution: return "NotADistribution";
    case ErrorCode::EmptyClass: return "EmptyClass";
    case ErrorCode::TooFewSamples: return "TooFewSamples";
    case ErrorCode::MissingPredictions: return "MissingPredictions";
    case ErrorCode::MissingGenerated: return "MissingGenerated";
    case ErrorCode::BadConfig: return "BadConfig";
    case ErrorCode::EmptyCandidates: return "EmptyCandidates";
    case ErrorCode::IncompleteLayout: return "IncompleteLayout";
    case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::Diverged: return "Diverged";
    case ErrorCode::DegenerateInput: return "DegenerateInput";
    case ErrorCode::TooManyPoints: return "TooManyPoints";
    case ErrorCode::NotManyToOne: return "NotManyToOne";
    case ErrorCode::UnknownNode: return "UnknownNode";
    case ErrorCode::KTooLarge: return "KTooLarge";
    case ErrorCode::SingleClass: return "SingleClass";
    case ErrorCode::EmptySet: return "EmptySet";
    case ErrorCode::TooFewProxies: return "TooFewProxies";
    case ErrorCode::InvalidTemplate: return "InvalidTemplate";
    case ErrorCode::ProviderError: return "ProviderError";
    case ErrorCode::ProviderUnreachable: return "ProviderUnreachable";
    case ErrorCode::BadResponse: return "BadResponse";
    case ErrorCode::InvalidTemplateFromProvider: return "InvalidTemplateFromProvider";
    case ErrorCode::ConflictingJob: return "ConflictingJob";
    case ErrorCode::UnknownImageIds: return "UnknownImageIds";
    case ErrorCode::UnknownSession: return "UnknownSession";
    case ErrorCode::UnknownPrompt: return "UnknownPrompt";
    case ErrorCode::UnknownJob: return "UnknownJob";
    case ErrorCode::InvalidFeedback: return "InvalidFeedback";
    case ErrorCode::NoPendingPrompt: return "NoPendingPrompt";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

Error::Error(ErrorCode code, std::string detail)
    : std::runtime_error(std::string(to_string(code)) + ": " + detail),
      code_(code),
      detail_(std::move(detail)) {}

std::uint64_t hash_string(std::string_view s, std::uint64_t seed) noexcept {
  // FNV-1a, then mixed with the seed.
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return splitmix64(h ^ splitmix64(seed));
}

double Rng::normal() noexcept {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u = 0.0;
  while (u <= 0.0) u = uniform();
  const double v = uniform();
  const double r = std::sqrt(-2.0 * std::log(u));
  const double theta = 2.0 * M_PI * v;
  spare_ = r * std::sin(theta);
  has_spare_ = true;
  return r * std::cos(theta);
}

Matrix normalized_rows(const Matrix& points) {
  Matrix out = points;
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    const double n = out.row(i).norm();
    if (n > 0.0) out.row(i) /= n;
  }
  return out;
}

double entropy(const Vector& p) {
  double h = 0.0;
  for (Eigen::Index i = 0; i < p.size(); ++i)
    if (p[i] > 0.0) h -= p[i] * std::log(p[i]);
  return h;
}

double kl_divergence(const Vector& p, const Vector& q) {
  double d = 0.0;
  for (Eigen::Index i = 0; i < p.size(); ++i)
    if (p[i] > 0.0) d += p[i] * std::log(p[i] / q[i]);
  return d;
}

}  // namespace expander
