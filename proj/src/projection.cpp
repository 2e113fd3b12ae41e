#include "expander/projection.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>
#include <set>
#include <unordered_map>

namespace expander {

using json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Layout

Layout::Layout(std::vector<std::string> image_ids, Matrix image_xy,
               std::vector<std::string> label_ids, Matrix label_xy)
    : image_ids_(std::move(image_ids)),
      image_xy_(std::move(image_xy)),
      label_ids_(std::move(label_ids)),
      label_xy_(std::move(label_xy)) {
  if (image_xy_.rows() != static_cast<Eigen::Index>(image_ids_.size()) ||
      label_xy_.rows() != static_cast<Eigen::Index>(label_ids_.size()) ||
      (image_xy_.size() > 0 && image_xy_.cols() != 2) ||
      (label_xy_.size() > 0 && label_xy_.cols() != 2))
    throw Error(ErrorCode::DimensionMismatch, "layout rows must match ids and have 2 columns");
  if (image_xy_.size() == 0) image_xy_.resize(static_cast<Eigen::Index>(image_ids_.size()), 2);
  if (label_xy_.size() == 0) label_xy_.resize(static_cast<Eigen::Index>(label_ids_.size()), 2);
}

Layout Layout::for_corpus(const Corpus& corpus, Matrix image_xy, Matrix label_xy) {
  std::vector<std::string> iid, lid;
  for (const auto& im : corpus.images()) iid.push_back(im.id);
  for (const auto& lb : corpus.labels()) lid.push_back(lb.id);
  return Layout(std::move(iid), std::move(image_xy), std::move(lid), std::move(label_xy));
}

Layout Layout::aligned_to(const Corpus& corpus) const {
  std::unordered_map<std::string, Eigen::Index> ii, li;
  for (std::size_t i = 0; i < image_ids_.size(); ++i) ii[image_ids_[i]] = static_cast<Eigen::Index>(i);
  for (std::size_t j = 0; j < label_ids_.size(); ++j) li[label_ids_[j]] = static_cast<Eigen::Index>(j);
  Matrix img(static_cast<Eigen::Index>(corpus.images().size()), 2);
  Matrix lab(static_cast<Eigen::Index>(corpus.labels().size()), 2);
  for (std::size_t i = 0; i < corpus.images().size(); ++i) {
    const auto it = ii.find(corpus.images()[i].id);
    if (it == ii.end()) throw Error(ErrorCode::IncompleteLayout, "image " + corpus.images()[i].id);
    img.row(static_cast<Eigen::Index>(i)) = image_xy_.row(it->second);
  }
  for (std::size_t j = 0; j < corpus.labels().size(); ++j) {
    const auto it = li.find(corpus.labels()[j].id);
    if (it == li.end()) throw Error(ErrorCode::IncompleteLayout, "label " + corpus.labels()[j].id);
    lab.row(static_cast<Eigen::Index>(j)) = label_xy_.row(it->second);
  }
  return for_corpus(corpus, std::move(img), std::move(lab));
}

bool Layout::finite() const { return image_xy_.allFinite() && label_xy_.allFinite(); }

Layout normalized(const Layout& layout) {
  const Eigen::Index n = layout.images().rows() + layout.labels().rows();
  if (n == 0) return layout;
  Matrix all(n, 2);
  all << layout.images(), layout.labels();
  const Eigen::RowVector2d center = all.colwise().mean();
  all.rowwise() -= center;
  const double rms = std::sqrt(all.rowwise().squaredNorm().mean());
  if (rms > 0.0) all /= rms;
  return Layout(layout.image_ids(), all.topRows(layout.images().rows()), layout.label_ids(),
                all.bottomRows(layout.labels().rows()));
}

void write_layout(std::ostream& out, const Layout& layout) {
  const auto emit = [&](const std::vector<std::string>& ids, const Matrix& xy, Modality m) {
    for (std::size_t i = 0; i < ids.size(); ++i) {
      json j;
      j["id"] = ids[i];
      j["modality"] = std::string(to_string(m));
      j["x"] = xy(static_cast<Eigen::Index>(i), 0);
      j["y"] = xy(static_cast<Eigen::Index>(i), 1);
      out << j.dump() << '\n';
    }
  };
  emit(layout.image_ids(), layout.images(), Modality::image);
  emit(layout.label_ids(), layout.labels(), Modality::label);
}

Layout read_layout(std::istream& in) {
  std::vector<std::string> iid, lid;
  std::vector<std::pair<double, double>> ixy, lxy;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
      const std::string modality = j.at("modality").get<std::string>();
      const auto xy = std::make_pair(j.at("x").get<double>(), j.at("y").get<double>());
      if (modality == "image") {
        iid.push_back(j.at("id").get<std::string>());
        ixy.push_back(xy);
      } else if (modality == "label") {
        lid.push_back(j.at("id").get<std::string>());
        lxy.push_back(xy);
      } else {
        throw Error(ErrorCode::MalformedRecord, "line " + std::to_string(n) + ": modality");
      }
    } catch (const json::exception& e) {
      throw Error(ErrorCode::MalformedRecord, "line " + std::to_string(n) + ": " + e.what());
    }
  }
  const auto to_matrix = [](const std::vector<std::pair<double, double>>& v) {
    Matrix m(static_cast<Eigen::Index>(v.size()), 2);
    for (std::size_t i = 0; i < v.size(); ++i) {
      m(static_cast<Eigen::Index>(i), 0) = v[i].first;
      m(static_cast<Eigen::Index>(i), 1) = v[i].second;
    }
    return m;
  };
  return Layout(std::move(iid), to_matrix(ixy), std::move(lid), to_matrix(lxy));
}

// ---------------------------------------------------------------------------
// Pairs

std::string_view to_string(PairKind kind) {
  switch (kind) {
    case PairKind::II: return "II";
    case PairKind::IL: return "IL";
    case PairKind::LL: return "LL";
  }
  return "?";
}

namespace {

/// Symmetric same-modality terms around anchors and their kNN positives.
/// Slots whose point is a kNN member of the anchor (other than the chosen
/// positive) or equals the positive's point are left out of the denominator.
void add_same_modality_terms(PairBatch& batch, Modality modality, PairKind kind,
                             const NeighborLists& knn, const std::vector<std::size_t>& anchors,
                             Rng& rng) {
  std::vector<std::size_t> chosen;
  std::vector<std::size_t> positives;
  for (std::size_t a : anchors) {
    const auto& nb = knn.neighbors.at(a);
    if (nb.empty()) continue;
    chosen.push_back(a);
    positives.push_back(nb[rng.below(nb.size())]);
  }
  const std::size_t b = chosen.size();
  if (b == 0) return;
  const std::size_t base = batch.slots.size();
  std::vector<std::size_t> slot_point(2 * b);
  for (std::size_t i = 0; i < b; ++i) {
    batch.slots.push_back({modality, chosen[i]});
    slot_point[i] = chosen[i];
  }
  for (std::size_t i = 0; i < b; ++i) {
    batch.slots.push_back({modality, positives[i]});
    slot_point[b + i] = positives[i];
  }

  const auto make_term = [&](std::size_t anchor_local, std::size_t pos_local) {
    const std::size_t anchor_pt = slot_point[anchor_local];
    const std::size_t pos_pt = slot_point[pos_local];
    const auto& nb = knn.neighbors[anchor_pt];
    ContrastiveTerm t{kind, base + anchor_local, base + pos_local, {}};
    t.candidates.reserve(2 * b - 1);
    for (std::size_t s = 0; s < 2 * b; ++s) {
      if (s == anchor_local) continue;
      if (s != pos_local) {
        const std::size_t pt = slot_point[s];
        if (pt == anchor_pt || pt == pos_pt) continue;
        if (std::find(nb.begin(), nb.end(), pt) != nb.end()) continue;
      }
      t.candidates.push_back(base + s);
    }
    batch.terms.push_back(std::move(t));
  };
  for (std::size_t i = 0; i < b; ++i) {
    make_term(i, b + i);
    make_term(b + i, i);
  }
}

/// Draws up to `count` distinct indices from `pool` with probability
/// proportional to `weight`, without replacement.
std::vector<std::size_t> weighted_without_replacement(std::vector<std::size_t> pool,
                                                      const std::vector<double>& weight,
                                                      std::size_t count, Rng& rng) {
  std::vector<std::size_t> out;
  while (out.size() < count && !pool.empty()) {
    double total = 0.0;
    for (std::size_t p : pool) total += weight[p];
    if (!(total > 0.0)) break;
    double r = rng.uniform() * total;
    std::size_t pick = pool.size() - 1;
    for (std::size_t i = 0; i < pool.size(); ++i) {
      r -= weight[pool[i]];
      if (r < 0.0) {
        pick = i;
        break;
      }
    }
    out.push_back(pool[pick]);
    pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(pick));
  }
  return out;
}

}  // namespace

PairBatch build_pairs(const Corpus& corpus, const NeighborLists& image_knn,
                      const NeighborLists& label_knn, const std::vector<double>& frequencies,
                      const PairSampling& sampling, const std::vector<std::size_t>& image_anchors,
                      const std::vector<std::size_t>& label_anchors, Rng& rng) {
  PairBatch batch;
  if (sampling.image_pairs)
    add_same_modality_terms(batch, Modality::image, PairKind::II, image_knn, image_anchors, rng);

  if (sampling.image_label_pairs) {
    const std::size_t n_labels = corpus.labels().size();
    for (std::size_t a : image_anchors) {
      const auto& own = corpus.labels_of(a);
      if (own.empty()) {
        ++batch.skipped_isolated;
        continue;
      }
      if (own.size() == n_labels) {
        ++batch.skipped_saturated;
        continue;
      }
      std::vector<std::size_t> pool;
      pool.reserve(n_labels - own.size());
      for (std::size_t j = 0; j < n_labels; ++j)
        if (!std::binary_search(own.begin(), own.end(), j)) pool.push_back(j);
      const std::size_t positive = own[rng.below(own.size())];
      const auto negatives =
          weighted_without_replacement(std::move(pool), frequencies, sampling.negatives, rng);
      if (negatives.empty()) {
        ++batch.skipped_saturated;
        continue;
      }
      const std::size_t anchor_slot = batch.slots.size();
      batch.slots.push_back({Modality::image, a});
      ContrastiveTerm t{PairKind::IL, anchor_slot, anchor_slot + 1, {}};
      batch.slots.push_back({Modality::label, positive});
      t.candidates.push_back(anchor_slot + 1);
      for (std::size_t neg : negatives) {
        t.candidates.push_back(batch.slots.size());
        batch.slots.push_back({Modality::label, neg});
      }
      batch.terms.push_back(std::move(t));
    }
  }

  if (sampling.label_pairs)
    add_same_modality_terms(batch, Modality::label, PairKind::LL, label_knn, label_anchors, rng);
  return batch;
}

PairBatch sample_pairs(const Corpus& corpus, const NeighborLists& image_knn,
                       const NeighborLists& label_knn, const std::vector<double>& frequencies,
                       const PairSampling& sampling, std::uint64_t seed) {
  Rng rng(seed);
  const auto pick = [&](std::size_t n) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    rng.shuffle(idx);
    idx.resize(std::min(n, sampling.batch_size));
    return idx;
  };
  const auto images = pick(corpus.images().size());
  const auto labels = pick(corpus.labels().size());
  return build_pairs(corpus, image_knn, label_knn, frequencies, sampling, images, labels, rng);
}

void check_batch(const Corpus& corpus, const PairBatch& batch) {
  for (const auto& t : batch.terms) {
    const auto& pos = batch.slots.at(t.positive);
    const auto& anchor = batch.slots.at(t.anchor);
    if (std::find(t.candidates.begin(), t.candidates.end(), t.anchor) != t.candidates.end())
      throw Error(ErrorCode::BadConfig, "anchor among its own candidates");
    for (std::size_t c : t.candidates) {
      if (c == t.positive) continue;
      if (batch.slots.at(c) == pos) throw Error(ErrorCode::BadConfig, "positive among negatives");
      if (t.kind == PairKind::IL) {
        const auto& own = corpus.labels_of(anchor.index);
        if (std::binary_search(own.begin(), own.end(), batch.slots[c].index))
          throw Error(ErrorCode::BadConfig, "IL negative contained in anchor image");
      }
    }
  }
}

Matrix slot_inputs(const Corpus& corpus, const PairBatch& batch) {
  Matrix x(static_cast<Eigen::Index>(batch.slots.size()), corpus.dimension());
  for (std::size_t s = 0; s < batch.slots.size(); ++s) {
    const auto& ref = batch.slots[s];
    x.row(static_cast<Eigen::Index>(s)) = ref.modality == Modality::image
                                              ? corpus.images()[ref.index].embedding.transpose()
                                              : corpus.labels()[ref.index].embedding.transpose();
  }
  return x;
}

// ---------------------------------------------------------------------------
// Losses

double contrastive_loss(const Eigen::Vector2d& anchor, const Eigen::Vector2d& positive,
                        const std::vector<Eigen::Vector2d>& candidates, double tau,
                        Similarity kind) {
  if (candidates.empty()) throw Error(ErrorCode::EmptyCandidates, "no candidates");
  if (!(tau > 0.0)) throw Error(ErrorCode::BadConfig, "tau must be positive");
  const double pos = similarity<double>(anchor, positive, kind).value / tau;
  std::vector<double> logits;
  for (const auto& c : candidates) logits.push_back(similarity<double>(anchor, c, kind).value / tau);
  const double mx = std::max(pos, *std::max_element(logits.begin(), logits.end()));
  double denom = 0.0;
  for (double l : logits) denom += std::exp(l - mx);
  return -(pos - mx) + std::log(denom);
}

TaskWeights task_weights(const std::vector<LossReport>& history, double alpha,
                         const std::optional<TaskWeights>& fixed) {
  if (fixed) return *fixed;
  TaskWeights w;
  if (history.size() < 2) return w;
  const auto ratio = [alpha](double now, double first) {
    if (!(first > 0.0) || !(now >= 0.0)) return 1.0;
    return std::pow(now / first, alpha);
  };
  w.image_label = ratio(history.back().image_label, history.front().image_label);
  w.label_label = ratio(history.back().label_label, history.front().label_label);
  return w;
}

// ---------------------------------------------------------------------------
// Distance-order loss

double order_loss_value(const Matrix& image_xy, const Matrix& label_xy, const Corpus& corpus,
                        Matrix* d_images, Matrix* d_labels, std::size_t* violations) {
  if (d_images) d_images->setZero(image_xy.rows(), 2);
  if (d_labels) d_labels->setZero(label_xy.rows(), 2);
  if (violations) *violations = 0;
  if (corpus.edges().empty()) return 0.0;

  // Per-edge low-dimensional distances and the shared denominator.
  std::map<std::pair<std::size_t, std::size_t>, double> high;
  for (const auto& e : corpus.edges()) high[{e.label, e.image}] = e.weight;

  double denom = 0.0;
  for (const auto& e : corpus.edges())
    denom += (image_xy.row(static_cast<Eigen::Index>(e.image)) -
              label_xy.row(static_cast<Eigen::Index>(e.label)))
                 .squaredNorm();
  if (!(denom > 0.0)) return 0.0;

  double numer = 0.0;
  Matrix num_img, num_lab;
  const bool grad = d_images || d_labels;
  if (grad) {
    num_img.setZero(image_xy.rows(), 2);
    num_lab.setZero(label_xy.rows(), 2);
  }
  for (std::size_t lbl = 0; lbl < corpus.labels().size(); ++lbl) {
    const auto& members = corpus.images_of(lbl);
    const Eigen::RowVector2d lp = label_xy.row(static_cast<Eigen::Index>(lbl));
    std::vector<double> h, l;
    std::vector<Eigen::RowVector2d> unit;
    for (std::size_t im : members) {
      h.push_back(high.at({lbl, im}));
      const Eigen::RowVector2d diff = image_xy.row(static_cast<Eigen::Index>(im)) - lp;
      const double dist = diff.norm();
      l.push_back(dist);
      unit.push_back(dist > 0.0 ? Eigen::RowVector2d(diff / dist) : Eigen::RowVector2d::Zero());
    }
    for (std::size_t a = 0; a < members.size(); ++a) {
      for (std::size_t b = a + 1; b < members.size(); ++b) {
        const double dh = h[a] - h[b];
        const double dl = l[a] - l[b];
        const double x = dh * dl;
        if (x >= 0.0) continue;
        numer += -x;
        if (violations) ++*violations;
        if (grad) {
          // d(-dh*dl) = -dh * (d l_a - d l_b)
          const Eigen::RowVector2d ga = -dh * unit[a];
          const Eigen::RowVector2d gb = dh * unit[b];
          num_img.row(static_cast<Eigen::Index>(members[a])) += ga;
          num_img.row(static_cast<Eigen::Index>(members[b])) += gb;
          num_lab.row(static_cast<Eigen::Index>(lbl)) -= ga + gb;
        }
      }
    }
  }
  const double value = numer / denom;
  if (grad) {
    // d(N/D) = dN/D - N dD/D^2, dD = 2 sum (img - lbl)
    Matrix den_img = Matrix::Zero(image_xy.rows(), 2);
    Matrix den_lab = Matrix::Zero(label_xy.rows(), 2);
    for (const auto& e : corpus.edges()) {
      const Eigen::RowVector2d diff = image_xy.row(static_cast<Eigen::Index>(e.image)) -
                                      label_xy.row(static_cast<Eigen::Index>(e.label));
      den_img.row(static_cast<Eigen::Index>(e.image)) += 2.0 * diff;
      den_lab.row(static_cast<Eigen::Index>(e.label)) -= 2.0 * diff;
    }
    if (d_images) *d_images = num_img / denom - value * den_img / denom;
    if (d_labels) *d_labels = num_lab / denom - value * den_lab / denom;
  }
  return value;
}

OrderLossResult order_loss(const Layout& layout, const Corpus& corpus) {
  const Layout aligned = layout.aligned_to(corpus);
  OrderLossResult r;
  if (corpus.edges().empty()) {
    r.vacuous = true;
    return r;
  }
  r.value = order_loss_value(aligned.images(), aligned.labels(), corpus, nullptr, nullptr,
                             &r.violations);
  return r;
}

// ---------------------------------------------------------------------------
// Training

Layout project(const Network<double>& network, const Corpus& corpus) {
  const Matrix img = corpus.images().empty() ? Matrix(0, 2)
                                             : network.forward(corpus.image_embeddings());
  const Matrix lab = corpus.labels().empty() ? Matrix(0, 2)
                                             : network.forward(corpus.label_embeddings());
  return normalized(Layout::for_corpus(corpus, img, lab));
}

namespace {

void check_config(const Corpus& corpus, const ProjectionConfig& c) {
  if (c.epochs < 0) throw Error(ErrorCode::BadConfig, "epochs must be >= 0");
  if (c.batch_size < 1) throw Error(ErrorCode::BadConfig, "batch size must be >= 1");
  if (!(c.tau > 0.0)) throw Error(ErrorCode::BadConfig, "tau must be positive");
  if (c.k < 1) throw Error(ErrorCode::BadConfig, "k must be >= 1");
  if (!(c.lr > 0.0)) throw Error(ErrorCode::BadConfig, "learning rate must be positive");
  if (corpus.images().size() < 2) throw Error(ErrorCode::EmptyModality, "need >= 2 images");
}

TrainResult train_order_loss(const Corpus& corpus, const ProjectionConfig& config,
                             Network<double> net) {
  TrainResult out;
  Adam<double> opt(net.parameter_count(), config.lr);
  Matrix x(static_cast<Eigen::Index>(corpus.point_count()), corpus.dimension());
  x << corpus.image_embeddings(), corpus.label_embeddings();
  const auto n_img = static_cast<Eigen::Index>(corpus.images().size());
  const std::size_t steps =
      (corpus.images().size() + config.batch_size - 1) / config.batch_size;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    double sum = 0.0;
    for (std::size_t s = 0; s < steps; ++s) {
      Network<double>::Tape tape;
      const Matrix z = net.forward(x, tape);
      Matrix d_img, d_lab;
      const double v =
          order_loss_value(z.topRows(n_img), z.bottomRows(z.rows() - n_img), corpus, &d_img, &d_lab);
      if (!std::isfinite(v)) throw Error(ErrorCode::Diverged, "order loss at epoch " + std::to_string(epoch));
      Matrix d_z(z.rows(), 2);
      d_z << d_img, d_lab;
      opt.step(net.parameters(), net.backward(tape, d_z));
      sum += v;
    }
    LossReport r;
    r.epoch = epoch;
    r.order = sum / static_cast<double>(steps);
    r.weights = {0.0, 0.0};
    r.total = r.order;
    out.history.push_back(r);
  }
  out.layout = project(net, corpus);
  out.network = std::move(net);
  return out;
}

}  // namespace

TrainResult train(const Corpus& corpus, const ProjectionConfig& config) {
  check_config(corpus, config);
  Network<double> net(corpus.dimension(), config.network, config.seed);
  if (config.objective == Objective::order_loss) return train_order_loss(corpus, config, std::move(net));

  const bool with_labels = config.objective == Objective::contrastive;
  const auto image_knn = knn_graph(corpus, config.k, Modality::image);
  NeighborLists label_knn;
  std::vector<double> freqs;
  if (with_labels) {
    if (corpus.labels().size() < 2) throw Error(ErrorCode::EmptyModality, "need >= 2 labels");
    label_knn = knn_graph(corpus, config.k, Modality::label);
    freqs = label_frequencies(corpus);
  }
  PairSampling sampling;
  sampling.batch_size = config.batch_size;
  sampling.negatives = config.negatives;
  sampling.image_label_pairs = with_labels;
  sampling.label_pairs = with_labels;

  TrainResult out;
  Adam<double> opt(net.parameter_count(), config.lr);
  Rng rng(splitmix64(config.seed ^ 0x5eedULL));
  const std::size_t n_img = corpus.images().size();
  const std::size_t n_lab = corpus.labels().size();
  std::vector<std::size_t> image_order(n_img), label_order(n_lab);
  std::iota(image_order.begin(), image_order.end(), 0);
  std::iota(label_order.begin(), label_order.end(), 0);

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const TaskWeights weights = with_labels
                                    ? task_weights(out.history, config.alpha, config.fixed_weights)
                                    : TaskWeights{0.0, 0.0};
    rng.shuffle(image_order);
    double sums[3] = {0, 0, 0};
    std::size_t counts[3] = {0, 0, 0};
    for (std::size_t start = 0; start < n_img; start += config.batch_size) {
      const std::size_t stop = std::min(n_img, start + config.batch_size);
      const std::vector<std::size_t> anchors(image_order.begin() + static_cast<std::ptrdiff_t>(start),
                                             image_order.begin() + static_cast<std::ptrdiff_t>(stop));
      std::vector<std::size_t> label_anchors;
      if (with_labels) {
        rng.shuffle(label_order);
        label_anchors.assign(label_order.begin(),
                             label_order.begin() +
                                 static_cast<std::ptrdiff_t>(std::min(n_lab, config.batch_size)));
      }
      const PairBatch batch =
          build_pairs(corpus, image_knn, label_knn, freqs, sampling, anchors, label_anchors, rng);
      out.skipped_isolated += batch.skipped_isolated;
      out.skipped_saturated += batch.skipped_saturated;
      if (batch.empty()) continue;
      GradientResult<double> g;
      try {
        g = gradients<double>(net, slot_inputs(corpus, batch), batch, config.tau, weights,
                              config.similarity);
      } catch (const Error& e) {
        if (e.code() == ErrorCode::NonFiniteLoss)
          throw Error(ErrorCode::Diverged, "epoch " + std::to_string(epoch) + ": " + e.detail());
        throw;
      }
      if (!g.gradient.allFinite())
        throw Error(ErrorCode::Diverged, "non-finite gradient at epoch " + std::to_string(epoch));
      opt.step(net.parameters(), g.gradient);
      sums[0] += g.report.image_image;
      sums[1] += g.report.image_label;
      sums[2] += g.report.label_label;
      counts[0] += g.report.terms_image_image;
      counts[1] += g.report.terms_image_label;
      counts[2] += g.report.terms_label_label;
    }
    LossReport r;
    r.epoch = epoch;
    r.weights = weights;
    r.image_image = counts[0] ? sums[0] / static_cast<double>(counts[0]) : 0.0;
    r.image_label = counts[1] ? sums[1] / static_cast<double>(counts[1]) : 0.0;
    r.label_label = counts[2] ? sums[2] / static_cast<double>(counts[2]) : 0.0;
    r.terms_image_image = counts[0];
    r.terms_image_label = counts[1];
    r.terms_label_label = counts[2];
    r.total = r.image_image + weights.image_label * r.image_label +
              weights.label_label * r.label_label;
    out.history.push_back(r);
  }
  out.layout = project(net, corpus);
  out.network = std::move(net);
  return out;
}

void write_loss_history(std::ostream& out, const std::vector<LossReport>& history) {
  json arr = json::array();
  for (const auto& r : history) {
    json j;
    j["epoch"] = r.epoch;
    j["image_image"] = r.image_image;
    j["image_label"] = r.image_label;
    j["label_label"] = r.label_label;
    j["order"] = r.order;
    j["w1"] = r.weights.image_label;
    j["w2"] = r.weights.label_label;
    j["total"] = r.total;
    arr.push_back(j);
  }
  out << arr.dump(2) << '\n';
}

}  // namespace expander
