#include "expander/metrics.hpp"

#include <json.hpp>

#include <algorithm>
#include <iomanip>
#include <map>
#include <ostream>
#include <sstream>

namespace expander {

namespace {

void check_distribution(const Vector& p, const char* what) {
  if (p.size() == 0 || (p.array() < 0.0).any() || std::abs(p.sum() - 1.0) > 1e-6)
    throw Error(ErrorCode::NotADistribution, what);
}

}  // namespace

double informativeness(const Vector& p_original, const Vector& p_generated) {
  check_distribution(p_original, "p_original");
  check_distribution(p_generated, "p_generated");
  if (p_original.size() != p_generated.size())
    throw Error(ErrorCode::DimensionMismatch, "prediction vectors differ in length");
  Eigen::Index j = 0;
  p_original.maxCoeff(&j);
  return entropy(p_generated) + p_generated[j];
}

double group_diversity(const Matrix& embeddings) {
  if (embeddings.rows() == 0) throw Error(ErrorCode::EmptyClass, "no rows");
  const Vector center = embeddings.colwise().mean().transpose();
  const Vector q = softmax(center);
  double total = 0.0;
  for (Eigen::Index i = 0; i < embeddings.rows(); ++i)
    total += kl_divergence(softmax(embeddings.row(i).transpose()), q);
  return total / static_cast<double>(embeddings.rows());
}

double diversity(const Matrix& embeddings, std::span<const std::size_t> class_of) {
  if (static_cast<Eigen::Index>(class_of.size()) != embeddings.rows())
    throw Error(ErrorCode::DimensionMismatch, "class assignment count differs from rows");
  if (class_of.empty()) throw Error(ErrorCode::EmptyClass, "no images");
  std::map<std::size_t, std::vector<Eigen::Index>> groups;
  for (std::size_t i = 0; i < class_of.size(); ++i)
    groups[class_of[i]].push_back(static_cast<Eigen::Index>(i));
  double sum = 0.0;
  for (const auto& [cls, rows] : groups) sum += group_diversity(embeddings(rows, Eigen::all));
  return sum / static_cast<double>(groups.size());
}

double gaussian_kernel(const Vector& x, const Vector& y, double sigma) {
  return std::exp(-(x - y).squaredNorm() / (2.0 * sigma * sigma));
}

CmmdResult cmmd(const Matrix& originals, const Matrix& generated, double sigma) {
  const Eigen::Index n = originals.rows();
  const Eigen::Index m = generated.rows();
  if (n < 2 || m < 2)
    throw Error(ErrorCode::TooFewSamples,
                "need >= 2 per set, got N=" + std::to_string(n) + ", M=" + std::to_string(m));
  if (!(sigma > 0.0)) throw Error(ErrorCode::BadConfig, "sigma must be positive");
  if (originals.cols() != generated.cols())
    throw Error(ErrorCode::DimensionMismatch, "sets differ in dimension");

  const auto k = [sigma](const auto& a, const auto& b) {
    return std::exp(-(a - b).squaredNorm() / (2.0 * sigma * sigma));
  };
  double xx = 0.0, xy = 0.0, yy = 0.0;
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      if (i != j) xx += k(originals.row(i), originals.row(j));
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < m; ++j) xy += k(originals.row(i), generated.row(j));
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index j = 0; j < m; ++j)
      if (i != j) yy += k(generated.row(i), generated.row(j));

  const double dn = static_cast<double>(n), dm = static_cast<double>(m);
  CmmdResult r;
  r.sigma = sigma;
  r.squared = xx / (dn * (dn - 1.0)) - 2.0 * xy / (dn * dm) + yy / (dm * (dm - 1.0));
  r.clamped = r.squared < 0.0;
  r.value = std::sqrt(std::max(0.0, r.squared));
  return r;
}

double median_heuristic_sigma(const Matrix& a, const Matrix& b) {
  Matrix all(a.rows() + b.rows(), a.cols());
  all << a, b;
  std::vector<double> d;
  d.reserve(static_cast<std::size_t>(all.rows() * (all.rows() - 1) / 2));
  for (Eigen::Index i = 0; i < all.rows(); ++i)
    for (Eigen::Index j = i + 1; j < all.rows(); ++j) d.push_back((all.row(i) - all.row(j)).norm());
  if (d.empty()) return 1.0;
  const auto mid = d.begin() + static_cast<std::ptrdiff_t>(d.size() / 2);
  std::nth_element(d.begin(), mid, d.end());
  double med = *mid;
  if (d.size() % 2 == 0) med = 0.5 * (med + *std::max_element(d.begin(), mid));
  return med > 0.0 ? med : 1.0;
}

namespace {

Vector one_hot(std::size_t size, std::size_t index) {
  Vector v = Vector::Zero(static_cast<Eigen::Index>(size));
  v[static_cast<Eigen::Index>(index)] = 1.0;
  return v;
}

}  // namespace

MetricPoint metric_snapshot(const Corpus& corpus, int iteration, const SnapshotOptions& options) {
  std::vector<Eigen::Index> gen_rows, orig_rows;
  for (std::size_t i = 0; i < corpus.images().size(); ++i) {
    const auto& im = corpus.images()[i];
    if (im.kind == ImageKind::generated && im.iteration <= iteration)
      gen_rows.push_back(static_cast<Eigen::Index>(i));
    else if (im.kind == ImageKind::original)
      orig_rows.push_back(static_cast<Eigen::Index>(i));
  }
  if (gen_rows.empty())
    throw Error(ErrorCode::MissingGenerated,
                "no generated images up to iteration " + std::to_string(iteration));

  MetricPoint pt;
  pt.iteration = iteration;
  pt.generated_count = static_cast<int>(gen_rows.size());

  // The class a generated image was produced for stands in for argmax of the
  // original's prediction.
  double inf = 0.0;
  std::vector<std::size_t> class_of;
  for (auto r : gen_rows) {
    const auto& im = corpus.images()[static_cast<std::size_t>(r)];
    if (!im.prediction) throw Error(ErrorCode::MissingPredictions, im.id);
    const std::size_t c = *corpus.class_index(im.class_name);
    inf += informativeness(one_hot(corpus.classes().size(), c), *im.prediction);
    class_of.push_back(c);
  }
  pt.informativeness = inf / static_cast<double>(gen_rows.size());

  const Matrix all = corpus.image_embeddings();
  const Matrix gen = all(gen_rows, Eigen::all);
  const Matrix orig = all(orig_rows, Eigen::all);
  pt.diversity = diversity(gen, class_of);

  const double sigma = options.sigma ? *options.sigma : median_heuristic_sigma(orig, gen);
  const auto d = cmmd(orig, gen, sigma);
  pt.distance = d.value;
  pt.distance_clamped = d.clamped;
  return pt;
}

MetricPoint baseline_snapshot(const Corpus& corpus) {
  std::vector<Eigen::Index> rows;
  std::vector<std::size_t> class_of;
  double inf = 0.0;
  for (std::size_t i = 0; i < corpus.images().size(); ++i) {
    const auto& im = corpus.images()[i];
    if (im.kind != ImageKind::original) continue;
    if (!im.prediction) throw Error(ErrorCode::MissingPredictions, im.id);
    inf += informativeness(*im.prediction, *im.prediction);
    rows.push_back(static_cast<Eigen::Index>(i));
    class_of.push_back(*corpus.class_index(im.class_name));
  }
  if (rows.empty()) throw Error(ErrorCode::EmptyClass, "no original images");
  MetricPoint pt;
  pt.iteration = 0;
  pt.informativeness = inf / static_cast<double>(rows.size());
  pt.diversity = diversity(corpus.image_embeddings()(rows, Eigen::all), class_of);
  pt.distance = 0.0;
  pt.generated_count = 0;
  return pt;
}

void MetricTimeline::append(const MetricPoint& point) {
  if (!points_.empty() && point.iteration <= points_.back().iteration)
    throw Error(ErrorCode::BadConfig, "timeline iterations must strictly increase");
  if (!(point.distance >= 0.0)) throw Error(ErrorCode::BadConfig, "negative distance");
  points_.push_back(point);
}

void write_timeline(std::ostream& out, const MetricTimeline& timeline) {
  for (const auto& p : timeline.points()) {
    nlohmann::ordered_json j;
    j["iteration"] = p.iteration;
    j["informativeness"] = p.informativeness;
    j["diversity"] = p.diversity;
    j["distance"] = p.distance;
    j["generated_count"] = p.generated_count;
    j["distance_clamped"] = p.distance_clamped;
    out << j.dump() << '\n';
  }
}

MetricTimeline read_timeline(std::istream& in) {
  MetricTimeline t;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    MetricPoint p;
    p.iteration = j.at("iteration").get<int>();
    p.informativeness = j.at("informativeness").get<double>();
    p.diversity = j.at("diversity").get<double>();
    p.distance = j.at("distance").get<double>();
    p.generated_count = j.value("generated_count", 0);
    p.distance_clamped = j.value("distance_clamped", false);
    t.append(p);
  }
  return t;
}

void print_timeline_table(std::ostream& out, const MetricTimeline& timeline) {
  out << std::left << std::setw(10) << "iteration" << std::right << std::setw(12) << "generated"
      << std::setw(18) << "informativeness" << std::setw(12) << "diversity" << std::setw(12)
      << "distance" << '\n';
  out << std::fixed << std::setprecision(4);
  for (const auto& p : timeline.points())
    out << std::left << std::setw(10) << p.iteration << std::right << std::setw(12)
        << p.generated_count << std::setw(18) << p.informativeness << std::setw(12) << p.diversity
        << std::setw(12) << p.distance << '\n';
  out.unsetf(std::ios::floatfield);
}

void write_timeline_svg(std::ostream& out, const MetricTimeline& timeline) {
  constexpr int width = 720, panel_h = 160, margin = 40;
  const auto& pts = timeline.points();
  const int height = 3 * panel_h + margin;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\">\n";
  const char* names[3] = {"informativeness", "diversity", "distance"};
  const char* colors[3] = {"#1f77b4", "#2ca02c", "#d62728"};
  for (int panel = 0; panel < 3; ++panel) {
    std::vector<double> ys;
    for (const auto& p : pts)
      ys.push_back(panel == 0 ? p.informativeness : panel == 1 ? p.diversity : p.distance);
    const double top = margin / 2.0 + panel * panel_h;
    out << "  <text x=\"" << margin << "\" y=\"" << top + 12 << "\" font-size=\"12\">"
        << names[panel] << "</text>\n";
    if (ys.empty()) continue;
    double lo = *std::min_element(ys.begin(), ys.end());
    double hi = *std::max_element(ys.begin(), ys.end());
    if (hi - lo < 1e-12) {
      lo -= 0.5;
      hi += 0.5;
    }
    const double x0 = margin, x1 = width - margin;
    const double y0 = top + panel_h - 20, y1 = top + 20;
    std::ostringstream path;
    for (std::size_t i = 0; i < ys.size(); ++i) {
      const double x = ys.size() == 1 ? (x0 + x1) / 2
                                      : x0 + (x1 - x0) * static_cast<double>(i) /
                                                 static_cast<double>(ys.size() - 1);
      const double y = y0 + (y1 - y0) * (ys[i] - lo) / (hi - lo);
      path << (i == 0 ? "M" : " L") << x << ',' << y;
      out << "  <circle cx=\"" << x << "\" cy=\"" << y << "\" r=\"3\" fill=\"" << colors[panel]
          << "\"/>\n";
    }
    out << "  <path d=\"" << path.str() << "\" fill=\"none\" stroke=\"" << colors[panel]
        << "\" stroke-width=\"2\"/>\n";
  }
  out << "</svg>\n";
}

}  // namespace expander
