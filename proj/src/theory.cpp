#include "expander/theory.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

namespace expander {

std::uint64_t order_bound(std::uint64_t n) {
  if (n == 0) return 1;
  // With a = n(n-1) = 2b the bound is a(a+2)/8 + 1 = b(b+1)/2 + 1, exact.
  const unsigned __int128 a = static_cast<unsigned __int128>(n) * (n - 1);
  const unsigned __int128 v = a * (a + 2) / 8 + 1;
  if (v > std::numeric_limits<std::uint64_t>::max())
    throw Error(ErrorCode::BadConfig, "order bound overflows for n=" + std::to_string(n));
  return static_cast<std::uint64_t>(v);
}

std::uint64_t factorial(std::uint64_t n) {
  std::uint64_t f = 1;
  for (std::uint64_t i = 2; i <= n; ++i) {
    if (f > std::numeric_limits<std::uint64_t>::max() / i) return std::numeric_limits<std::uint64_t>::max();
    f *= i;
  }
  return f;
}

// ---------------------------------------------------------------------------
// Bisector arrangement

namespace {

using P2 = Eigen::Matrix<long double, 2, 1>;

struct Line {
  P2 normal;  // unit
  long double offset;  // normal . x = offset
};

bool same_line(const Line& a, const Line& b) {
  constexpr long double tol = 1e-12L;
  const long double dot = a.normal.dot(b.normal);
  if (std::abs(std::abs(dot) - 1.0L) > tol) return false;
  const long double off = dot > 0 ? b.offset : -b.offset;
  return std::abs(a.offset - off) <= tol * (1.0L + std::abs(a.offset));
}

/// Strict distance order from q, or empty when two distances tie.
std::vector<int> order_from(const P2& q, const std::vector<P2>& pts) {
  std::vector<long double> d(pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) d[i] = (pts[i] - q).squaredNorm();
  std::vector<int> idx(pts.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](int a, int b) { return d[a] < d[b]; });
  for (std::size_t i = 1; i < idx.size(); ++i) {
    const long double lo = d[idx[i - 1]], hi = d[idx[i]];
    if (hi - lo <= 1e-15L * (1.0L + hi)) return {};
  }
  return idx;
}

}  // namespace

OrderCertificate count_distance_orders(const std::vector<Eigen::Vector2d>& points) {
  const std::size_t n = points.size();
  if (n == 0) throw Error(ErrorCode::DegenerateInput, "no points");
  if (n > 7) throw Error(ErrorCode::TooManyPoints, std::to_string(n) + " points (max 7)");
  std::vector<P2> pts;
  for (const auto& p : points) pts.push_back(p.cast<long double>());
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (pts[i] == pts[j])
        throw Error(ErrorCode::DegenerateInput,
                    "points " + std::to_string(i) + " and " + std::to_string(j) + " coincide");

  OrderCertificate cert;
  cert.n = n;
  cert.bound = order_bound(n);
  if (n == 1) {
    cert.realized_orders.insert({0});
    return cert;
  }

  std::vector<Line> lines;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      P2 a = 2.0L * (pts[j] - pts[i]);
      long double c = pts[j].squaredNorm() - pts[i].squaredNorm();
      const long double len = a.norm();
      Line l{a / len, c / len};
      if (std::none_of(lines.begin(), lines.end(), [&](const Line& m) { return same_line(l, m); }))
        lines.push_back(l);
    }
  cert.lines = lines.size();

  for (std::size_t li = 0; li < lines.size(); ++li) {
    const Line& line = lines[li];
    const P2 dir(-line.normal.y(), line.normal.x());
    const P2 base = line.normal * line.offset;
    std::vector<long double> ts;
    for (std::size_t mi = 0; mi < lines.size(); ++mi) {
      if (mi == li) continue;
      const long double denom = lines[mi].normal.dot(dir);
      if (std::abs(denom) < 1e-15L) continue;
      ts.push_back((lines[mi].offset - lines[mi].normal.dot(base)) / denom);
    }
    std::sort(ts.begin(), ts.end());
    std::vector<long double> samples;
    if (ts.empty()) {
      samples.push_back(0.0L);
    } else {
      samples.push_back(ts.front() - 1.0L);
      for (std::size_t k = 1; k < ts.size(); ++k)
        if (ts[k] - ts[k - 1] > 1e-13L) samples.push_back(0.5L * (ts[k] + ts[k - 1]));
      samples.push_back(ts.back() + 1.0L);
    }
    for (long double t : samples) {
      const P2 q = base + t * dir;
      long double delta = 1.0L;
      for (std::size_t mi = 0; mi < lines.size(); ++mi) {
        if (mi == li) continue;
        delta = std::min(delta, 0.5L * std::abs(lines[mi].normal.dot(q) - lines[mi].offset));
      }
      for (long double side : {-1.0L, 1.0L}) {
        auto order = order_from(q + side * delta * line.normal, pts);
        if (!order.empty()) cert.realized_orders.insert(std::move(order));
      }
    }
  }
  return cert;
}

// ---------------------------------------------------------------------------
// Many-to-one construction

Layout construct_many_to_one_layout(const Corpus& corpus) {
  for (std::size_t i = 0; i < corpus.images().size(); ++i)
    if (corpus.labels_of(i).size() > 1)
      throw Error(ErrorCode::NotManyToOne, corpus.images()[i].id + " has " +
                                               std::to_string(corpus.labels_of(i).size()) +
                                               " labels");

  const std::size_t n_lab = corpus.labels().size();
  // Dense rank of each edge weight within its label.
  std::vector<double> radius(corpus.images().size(), 1.0);
  std::vector<std::vector<std::size_t>> groups(n_lab + 1);
  double r_max = 1.0;
  for (std::size_t j = 0; j < n_lab; ++j) {
    std::vector<double> w;
    for (const auto& e : corpus.edges())
      if (e.label == j) w.push_back(e.weight);
    std::sort(w.begin(), w.end());
    w.erase(std::unique(w.begin(), w.end()), w.end());
    for (const auto& e : corpus.edges()) {
      if (e.label != j) continue;
      const auto rank = std::lower_bound(w.begin(), w.end(), e.weight) - w.begin();
      radius[e.image] = 1.0 + static_cast<double>(rank);
      r_max = std::max(r_max, radius[e.image]);
      groups[j].push_back(e.image);
    }
  }
  for (std::size_t i = 0; i < corpus.images().size(); ++i)
    if (corpus.labels_of(i).empty()) groups[n_lab].push_back(i);

  const double spacing = 4.0 * r_max;
  Matrix img(static_cast<Eigen::Index>(corpus.images().size()), 2);
  Matrix lab(static_cast<Eigen::Index>(n_lab), 2);
  for (std::size_t j = 0; j <= n_lab; ++j) {
    const double hx = spacing * static_cast<double>(j);
    if (j < n_lab) lab.row(static_cast<Eigen::Index>(j)) << hx, 0.0;
    const auto& g = groups[j];
    for (std::size_t k = 0; k < g.size(); ++k) {
      const double theta = 2.0 * M_PI * static_cast<double>(k) / static_cast<double>(g.size());
      const double r = j < n_lab ? radius[g[k]] : 1.0 + static_cast<double>(k);
      img.row(static_cast<Eigen::Index>(g[k])) << hx + r * std::cos(theta), r * std::sin(theta);
    }
  }
  return Layout::for_corpus(corpus, std::move(img), std::move(lab));
}

// ---------------------------------------------------------------------------
// Permutation instance

Corpus make_permutation_instance(int n) {
  if (n < 1 || n > 6) throw Error(ErrorCode::BadConfig, "permutation instance needs 1 <= n <= 6");
  const int dim = n + 1;
  std::vector<ImageRecord> images;
  for (int i = 0; i < n; ++i) {
    ImageRecord im;
    im.id = "img" + std::to_string(i);
    im.class_name = "x";
    im.embedding = Vector::Zero(dim);
    im.embedding[i] = 1.0;
    images.push_back(std::move(im));
  }
  std::vector<int> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), 0);
  std::vector<LabelRecord> labels;
  std::vector<EdgeSpec> edges;
  int p = 0;
  do {
    LabelRecord lb;
    char buf[16];
    std::snprintf(buf, sizeof buf, "perm%03d", p);
    lb.id = buf;
    lb.text = lb.id;
    lb.embedding = Vector::Zero(dim);
    lb.embedding[n] = 1.0;
    for (int rank = 0; rank < n; ++rank)
      edges.push_back({images[static_cast<std::size_t>(perm[static_cast<std::size_t>(rank)])].id,
                       lb.id, 1.0 + rank});
    labels.push_back(std::move(lb));
    ++p;
  } while (std::next_permutation(perm.begin(), perm.end()));
  return Corpus::build({"x"}, dim, std::move(images), std::move(labels), edges);
}

namespace {

bool many_to_one(const Corpus& corpus) {
  for (std::size_t i = 0; i < corpus.images().size(); ++i)
    if (corpus.labels_of(i).size() > 1) return false;
  return true;
}

/// Labels whose linked images appear at strictly increasing layout distance
/// in strictly increasing weight order (weight ties are not demanded).
std::size_t labels_satisfied(const Matrix& img, const Matrix& lab, const Corpus& corpus) {
  std::size_t ok = 0;
  for (std::size_t j = 0; j < corpus.labels().size(); ++j) {
    std::vector<std::pair<double, double>> wl;
    for (const auto& e : corpus.edges())
      if (e.label == j)
        wl.emplace_back(e.weight, (img.row(static_cast<Eigen::Index>(e.image)) -
                                   lab.row(static_cast<Eigen::Index>(j)))
                                      .norm());
    bool good = true;
    for (std::size_t a = 0; a < wl.size() && good; ++a)
      for (std::size_t b = 0; b < wl.size() && good; ++b)
        if (wl[a].first < wl[b].first && !(wl[a].second < wl[b].second)) good = false;
    if (good) ++ok;
  }
  return ok;
}

void normalize_images(Matrix& img) {
  img.rowwise() -= img.colwise().mean();
  const double rms = std::sqrt(img.rowwise().squaredNorm().mean());
  if (rms > 0.0) img /= rms;
}

}  // namespace

PermutationReport verify_permutation_instance(const Corpus& corpus, int trials, std::uint64_t seed,
                                    int steps_per_trial) {
  PermutationReport rep;
  rep.images = corpus.images().size();
  rep.bound = order_bound(rep.images);
  std::set<std::vector<std::size_t>> demanded;
  for (std::size_t j = 0; j < corpus.labels().size(); ++j) {
    std::vector<std::pair<double, std::size_t>> w;
    for (const auto& e : corpus.edges())
      if (e.label == j) w.emplace_back(e.weight, e.image);
    if (w.size() < 2) continue;
    std::sort(w.begin(), w.end());
    std::vector<std::size_t> order;
    for (const auto& [weight, im] : w) order.push_back(im);
    demanded.insert(order);
  }
  rep.required_orders = demanded.size();
  rep.exceeds_bound = rep.required_orders > rep.bound;
  rep.trials = std::max(0, trials);

  if (many_to_one(corpus)) {
    const Layout l = construct_many_to_one_layout(corpus);
    rep.min_residual = rep.max_residual = order_loss(l, corpus).value;
    rep.max_labels_satisfied = labels_satisfied(l.images(), l.labels(), corpus);
    rep.all_trials_positive = false;
    rep.note = "many-to-one instance: constructive layout preserves every order";
    return rep;
  }
  if (rep.trials == 0) {
    rep.note = "no search trials; bound comparison only";
    return rep;
  }

  rep.min_residual = std::numeric_limits<double>::infinity();
  rep.max_residual = 0.0;
  rep.all_trials_positive = true;
  const auto n_img = static_cast<Eigen::Index>(corpus.images().size());
  const auto n_lab = static_cast<Eigen::Index>(corpus.labels().size());
  for (int trial = 0; trial < rep.trials; ++trial) {
    Rng rng(splitmix64(seed) ^ splitmix64(static_cast<std::uint64_t>(trial) + 1));
    Vector params(2 * (n_img + n_lab));
    for (Eigen::Index k = 0; k < params.size(); ++k) params[k] = rng.normal();
    Adam<double> opt(params.size(), 0.02);
    double best = std::numeric_limits<double>::infinity();
    for (int step = 0; step <= steps_per_trial; ++step) {
      Matrix img = Eigen::Map<Matrix>(params.data(), n_img, 2);
      normalize_images(img);
      Eigen::Map<Matrix>(params.data(), n_img, 2) = img;
      const Matrix lab = Eigen::Map<Matrix>(params.data() + 2 * n_img, n_lab, 2);
      Matrix d_img, d_lab;
      const double v = order_loss_value(img, lab, corpus, &d_img, &d_lab);
      best = std::min(best, v);
      rep.max_labels_satisfied = std::max(rep.max_labels_satisfied, labels_satisfied(img, lab, corpus));
      if (step == steps_per_trial) break;
      Vector grad(params.size());
      Eigen::Map<Matrix>(grad.data(), n_img, 2) = d_img;
      Eigen::Map<Matrix>(grad.data() + 2 * n_img, n_lab, 2) = d_lab;
      opt.step(params, grad);
    }
    rep.min_residual = std::min(rep.min_residual, best);
    rep.max_residual = std::max(rep.max_residual, best);
    if (!(best > 0.0)) rep.all_trials_positive = false;
  }
  rep.note = "numerical evidence from randomised search, not a proof";
  return rep;
}

}  // namespace expander
