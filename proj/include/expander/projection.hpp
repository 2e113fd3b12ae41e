#pragma once

#include "expander/common.hpp"
#include "expander/corpus.hpp"
#include "expander/network.hpp"

#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace expander {

// ---------------------------------------------------------------------------
// Layout

/// 2D position of every image and label, rows aligned with the id lists.
class Layout {
 public:
  Layout() = default;
  Layout(std::vector<std::string> image_ids, Matrix image_xy, std::vector<std::string> label_ids,
         Matrix label_xy);

  /// Rows already in corpus order.
  static Layout for_corpus(const Corpus& corpus, Matrix image_xy, Matrix label_xy);

  const std::vector<std::string>& image_ids() const noexcept { return image_ids_; }
  const std::vector<std::string>& label_ids() const noexcept { return label_ids_; }
  const Matrix& images() const noexcept { return image_xy_; }
  const Matrix& labels() const noexcept { return label_xy_; }

  /// Same layout re-indexed to the corpus order; IncompleteLayout when a
  /// corpus point has no position.
  Layout aligned_to(const Corpus& corpus) const;
  bool finite() const;

 private:
  std::vector<std::string> image_ids_;
  Matrix image_xy_;
  std::vector<std::string> label_ids_;
  Matrix label_xy_;
};

/// Centred and scaled to unit RMS radius over all points.
Layout normalized(const Layout& layout);

void write_layout(std::ostream& out, const Layout& layout);
Layout read_layout(std::istream& in);

// ---------------------------------------------------------------------------
// Pair construction

enum class PairKind { II, IL, LL };
std::string_view to_string(PairKind kind);

struct PointRef {
  Modality modality;
  std::size_t index;
  bool operator==(const PointRef&) const = default;
};

/// One contrastive term: anchor and positive are slot indices, candidates
/// is the denominator set (contains the positive, never the anchor).
struct ContrastiveTerm {
  PairKind kind;
  std::size_t anchor;
  std::size_t positive;
  std::vector<std::size_t> candidates;
};

struct PairBatch {
  std::vector<PointRef> slots;
  std::vector<ContrastiveTerm> terms;
  std::size_t skipped_isolated = 0;   ///< images with no labels (no IL positive)
  std::size_t skipped_saturated = 0;  ///< images containing every label (no IL negative)

  bool empty() const noexcept { return terms.empty(); }
};

struct PairSampling {
  std::size_t batch_size = 256;
  std::size_t negatives = 5;  ///< IL negatives per anchor
  bool image_pairs = true;
  bool image_label_pairs = true;
  bool label_pairs = true;
};

/// Samples up to B image anchors and B label anchors and builds the three
/// kinds of terms around them.
PairBatch sample_pairs(const Corpus& corpus, const NeighborLists& image_knn,
                       const NeighborLists& label_knn, const std::vector<double>& frequencies,
                       const PairSampling& sampling, std::uint64_t seed);

/// Same, with the image anchors given explicitly.
PairBatch build_pairs(const Corpus& corpus, const NeighborLists& image_knn,
                      const NeighborLists& label_knn, const std::vector<double>& frequencies,
                      const PairSampling& sampling, const std::vector<std::size_t>& image_anchors,
                      const std::vector<std::size_t>& label_anchors, Rng& rng);

/// Throws BadConfig describing the first violated batch invariant.
void check_batch(const Corpus& corpus, const PairBatch& batch);

/// Network inputs for every slot, one row per slot.
Matrix slot_inputs(const Corpus& corpus, const PairBatch& batch);

// ---------------------------------------------------------------------------
// Losses

enum class Similarity { cosine, cauchy };

/// sim(a, b) and its gradient with respect to a.
template <typename Scalar>
struct SimilarityGrad {
  Scalar value;
  Eigen::Matrix<Scalar, 2, 1> d_a;
};

template <typename Scalar>
SimilarityGrad<Scalar> similarity(const Eigen::Matrix<Scalar, 2, 1>& a,
                                  const Eigen::Matrix<Scalar, 2, 1>& b, Similarity kind) {
  if (kind == Similarity::cauchy) {
    const Eigen::Matrix<Scalar, 2, 1> diff = a - b;
    const Scalar s = Scalar(1) / (Scalar(1) + diff.squaredNorm());
    return {s, Scalar(-2) * s * s * diff};
  }
  const Scalar na = std::max(a.norm(), Scalar(1e-12));
  const Scalar nb = std::max(b.norm(), Scalar(1e-12));
  const Scalar s = a.dot(b) / (na * nb);
  return {s, b / (na * nb) - s * a / (na * na)};
}

/// -log(exp(sim(a,p)/tau) / sum_t exp(sim(a,t)/tau)); `candidates` must
/// contain the positive.
double contrastive_loss(const Eigen::Vector2d& anchor, const Eigen::Vector2d& positive,
                        const std::vector<Eigen::Vector2d>& candidates, double tau,
                        Similarity kind = Similarity::cosine);

struct TaskWeights {
  double image_label = 1.0;  ///< weight of the image-label term
  double label_label = 1.0;  ///< weight of the label-label term
};

struct LossReport {
  int epoch = 0;
  double image_image = 0.0;
  double image_label = 0.0;
  double label_label = 0.0;
  double order = 0.0;  ///< order-loss objective, zero for contrastive runs
  TaskWeights weights;
  double total = 0.0;  ///< image_image + w1 image_label + w2 label_label + order
  std::size_t terms_image_image = 0;
  std::size_t terms_image_label = 0;
  std::size_t terms_label_label = 0;
};

/// Summed contrastive loss of every term in the batch given slot outputs z
/// (one 2D row per slot). Fills `d_z` with the gradient when non-null.
template <typename Scalar>
LossReport batch_contrastive_loss(
    const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& z, const PairBatch& batch,
    Scalar tau, const TaskWeights& weights, Similarity kind,
    Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>* d_z, Scalar* total_out = nullptr) {
  using V2 = Eigen::Matrix<Scalar, 2, 1>;
  if (d_z) d_z->setZero(z.rows(), z.cols());
  Scalar sums[3] = {0, 0, 0};
  LossReport report;
  report.weights = weights;
  std::vector<Scalar> logits, probs;
  std::vector<SimilarityGrad<Scalar>> sims;
  for (const auto& term : batch.terms) {
    if (term.candidates.empty()) throw Error(ErrorCode::EmptyCandidates, "contrastive term");
    const V2 a = z.row(static_cast<Eigen::Index>(term.anchor)).transpose();
    sims.clear();
    logits.clear();
    Scalar pos_logit = 0;
    std::size_t pos_at = term.candidates.size();
    for (std::size_t c = 0; c < term.candidates.size(); ++c) {
      const V2 t = z.row(static_cast<Eigen::Index>(term.candidates[c])).transpose();
      sims.push_back(similarity<Scalar>(a, t, kind));
      logits.push_back(sims.back().value / tau);
      if (term.candidates[c] == term.positive) {
        pos_logit = logits.back();
        pos_at = c;
      }
    }
    if (pos_at == term.candidates.size())
      throw Error(ErrorCode::EmptyCandidates, "positive missing from candidates");
    const Scalar mx = *std::max_element(logits.begin(), logits.end());
    Scalar denom = 0;
    probs.resize(logits.size());
    for (std::size_t c = 0; c < logits.size(); ++c) denom += (probs[c] = std::exp(logits[c] - mx));
    const Scalar loss = -(pos_logit - mx) + std::log(denom);

    const int k = static_cast<int>(term.kind);
    sums[k] += loss;
    if (term.kind == PairKind::II) ++report.terms_image_image;
    if (term.kind == PairKind::IL) ++report.terms_image_label;
    if (term.kind == PairKind::LL) ++report.terms_label_label;

    if (d_z) {
      const Scalar w = term.kind == PairKind::IL   ? Scalar(weights.image_label)
                       : term.kind == PairKind::LL ? Scalar(weights.label_label)
                                                   : Scalar(1);
      if (w == Scalar(0)) continue;
      V2 d_anchor = V2::Zero();
      for (std::size_t c = 0; c < logits.size(); ++c) {
        const Scalar g = w * (probs[c] / denom - (c == pos_at ? Scalar(1) : Scalar(0))) / tau;
        if (g == Scalar(0)) continue;
        d_anchor += g * sims[c].d_a;
        const V2 t = z.row(static_cast<Eigen::Index>(term.candidates[c])).transpose();
        // sim is symmetric, so d sim / d t is the same formula with roles swapped.
        const auto rev = similarity<Scalar>(t, a, kind);
        d_z->row(static_cast<Eigen::Index>(term.candidates[c])) += (g * rev.d_a).transpose();
      }
      d_z->row(static_cast<Eigen::Index>(term.anchor)) += d_anchor.transpose();
    }
  }
  report.image_image = static_cast<double>(sums[0]);
  report.image_label = static_cast<double>(sums[1]);
  report.label_label = static_cast<double>(sums[2]);
  const Scalar total = sums[0] + Scalar(weights.image_label) * sums[1] +
                       Scalar(weights.label_label) * sums[2];
  report.total = static_cast<double>(total);
  if (total_out) *total_out = total;
  return report;
}

/// Loss-balanced weights (L_t(now) / L_t(0))^alpha from per-epoch mean
/// losses; (1, 1) before two epochs exist. A fixed pair overrides.
TaskWeights task_weights(const std::vector<LossReport>& history, double alpha,
                         const std::optional<TaskWeights>& fixed = std::nullopt);

template <typename Scalar>
struct GradientResult {
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> gradient;
  LossReport report;
  Scalar total = 0;
};

/// Analytic gradient of the weighted contrastive objective with respect to
/// every network parameter. `inputs` holds one row per batch slot.
template <typename Scalar>
GradientResult<Scalar> gradients(const Network<Scalar>& network,
                                 const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& inputs,
                                 const PairBatch& batch, Scalar tau, const TaskWeights& weights,
                                 Similarity kind = Similarity::cosine) {
  using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  if (batch.empty()) throw Error(ErrorCode::EmptyCandidates, "empty batch");
  typename Network<Scalar>::Tape tape;
  const Mat z = network.forward(inputs, tape);
  Mat d_z;
  GradientResult<Scalar> out;
  out.report = batch_contrastive_loss<Scalar>(z, batch, tau, weights, kind, &d_z, &out.total);
  if (!std::isfinite(static_cast<double>(out.total)))
    throw Error(ErrorCode::NonFiniteLoss, "contrastive loss is not finite");
  out.gradient = network.backward(tape, d_z);
  return out;
}

/// Scalar loss only (used by finite-difference checks).
template <typename Scalar>
Scalar objective_value(const Network<Scalar>& network,
                       const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& inputs,
                       const PairBatch& batch, Scalar tau, const TaskWeights& weights,
                       Similarity kind = Similarity::cosine) {
  const auto z = network.forward(inputs);
  Scalar total = 0;
  batch_contrastive_loss<Scalar>(z, batch, tau, weights, kind, nullptr, &total);
  return total;
}

// ---------------------------------------------------------------------------
// Distance-order loss

struct OrderLossResult {
  double value = 0.0;
  std::size_t violations = 0;  ///< image pairs whose order is inverted
  bool vacuous = false;        ///< no edges: value is 0 by convention
};

/// Inverted label-to-image distance orders, weighted by the product of the
/// high- and low-dimensional gaps, over the sum of squared layout distances
/// along edges.
OrderLossResult order_loss(const Layout& layout, const Corpus& corpus);

/// Same on raw coordinate rows (corpus order), with optional gradients.
double order_loss_value(const Matrix& image_xy, const Matrix& label_xy, const Corpus& corpus,
                        Matrix* d_images = nullptr, Matrix* d_labels = nullptr,
                        std::size_t* violations = nullptr);

// ---------------------------------------------------------------------------
// Training

enum class Objective {
  contrastive,  ///< weighted image-image, image-label and label-label terms
  image_only,   ///< image-image term only
  order_loss,   ///< distance-order loss alone (baseline)
};

struct ProjectionConfig {
  int epochs = 200;
  std::size_t batch_size = 256;
  double tau = 0.1;
  std::size_t k = 15;
  std::size_t negatives = 5;
  double lr = 1e-3;
  std::uint64_t seed = 0;
  double alpha = 0.5;
  std::optional<TaskWeights> fixed_weights;
  NetworkConfig network;
  Objective objective = Objective::contrastive;
  Similarity similarity = Similarity::cosine;
};

struct TrainResult {
  Layout layout;  ///< normalised
  std::vector<LossReport> history;
  Network<double> network;
  std::size_t skipped_isolated = 0;
  std::size_t skipped_saturated = 0;
};

/// Projects every image and label of the corpus through `network` and
/// normalises the result.
Layout project(const Network<double>& network, const Corpus& corpus);

TrainResult train(const Corpus& corpus, const ProjectionConfig& config);

void write_loss_history(std::ostream& out, const std::vector<LossReport>& history);

}  // namespace expander
