#include "expander/corpus.hpp"

#include <json.hpp>

#include <algorithm>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

namespace expander {

using json = nlohmann::ordered_json;

std::string_view to_string(ImageKind kind) {
  return kind == ImageKind::original ? "original" : "generated";
}

std::string_view to_string(Modality modality) {
  return modality == Modality::image ? "image" : "label";
}

Corpus Corpus::build(std::vector<std::string> classes, int dimension,
                     std::vector<ImageRecord> images, std::vector<LabelRecord> labels,
                     const std::vector<EdgeSpec>& edges) {
  if (dimension <= 0) throw Error(ErrorCode::BadConfig, "dimension must be positive");
  Corpus c;
  c.classes_ = std::move(classes);
  c.dimension_ = dimension;

  std::sort(images.begin(), images.end(),
            [](const ImageRecord& a, const ImageRecord& b) { return a.id < b.id; });
  std::sort(labels.begin(), labels.end(),
            [](const LabelRecord& a, const LabelRecord& b) { return a.id < b.id; });

  const std::set<std::string> class_set(c.classes_.begin(), c.classes_.end());
  if (class_set.size() != c.classes_.size())
    throw Error(ErrorCode::DuplicateId, "duplicate class name");

  for (std::size_t i = 0; i < images.size(); ++i) {
    const auto& im = images[i];
    if (!c.image_lookup_.emplace(im.id, i).second) throw Error(ErrorCode::DuplicateId, im.id);
    if (im.embedding.size() != dimension)
      throw Error(ErrorCode::DimensionMismatch,
                  im.id + ": expected " + std::to_string(dimension) + ", got " +
                      std::to_string(im.embedding.size()));
    if (!class_set.count(im.class_name))
      throw Error(ErrorCode::MalformedRecord, im.id + ": unknown class '" + im.class_name + "'");
    if (im.iteration < 0) throw Error(ErrorCode::MalformedRecord, im.id + ": negative iteration");
    if (im.kind == ImageKind::original && im.iteration != 0)
      throw Error(ErrorCode::MalformedRecord, im.id + ": original image with iteration != 0");
    if (im.prediction) {
      if (im.prediction->size() != static_cast<Eigen::Index>(c.classes_.size()))
        throw Error(ErrorCode::DimensionMismatch, im.id + ": prediction length");
      if ((im.prediction->array() < 0.0).any() || std::abs(im.prediction->sum() - 1.0) > 1e-6)
        throw Error(ErrorCode::NotADistribution, im.id + ": prediction");
    }
  }
  for (std::size_t j = 0; j < labels.size(); ++j) {
    const auto& lb = labels[j];
    if (!c.label_lookup_.emplace(lb.id, j).second) throw Error(ErrorCode::DuplicateId, lb.id);
    if (lb.embedding.size() != dimension)
      throw Error(ErrorCode::DimensionMismatch,
                  lb.id + ": expected " + std::to_string(dimension) + ", got " +
                      std::to_string(lb.embedding.size()));
  }
  c.images_ = std::move(images);
  c.labels_ = std::move(labels);

  c.edges_.reserve(edges.size());
  for (const auto& e : edges) {
    const auto ii = c.image_lookup_.find(e.image_id);
    if (ii == c.image_lookup_.end()) throw Error(ErrorCode::DanglingEdge, e.image_id);
    const auto li = c.label_lookup_.find(e.label_id);
    if (li == c.label_lookup_.end()) throw Error(ErrorCode::DanglingEdge, e.label_id);
    double w = e.weight ? *e.weight
                        : cosine_distance(c.images_[ii->second].embedding,
                                          c.labels_[li->second].embedding);
    if (!(w >= 0.0)) {
      // Rounding can leave a recomputed cosine distance a hair below zero.
      if (!e.weight && w > -1e-12)
        w = 0.0;
      else
        throw Error(ErrorCode::MalformedRecord, e.image_id + "/" + e.label_id + ": negative weight");
    }
    c.edges_.push_back({ii->second, li->second, w});
  }
  std::sort(c.edges_.begin(), c.edges_.end(), [](const Edge& a, const Edge& b) {
    return std::tie(a.image, a.label) < std::tie(b.image, b.label);
  });
  for (std::size_t k = 1; k < c.edges_.size(); ++k)
    if (c.edges_[k].image == c.edges_[k - 1].image && c.edges_[k].label == c.edges_[k - 1].label)
      throw Error(ErrorCode::DuplicateId, "edge " + c.images_[c.edges_[k].image].id + "/" +
                                              c.labels_[c.edges_[k].label].id);

  c.labels_of_.assign(c.images_.size(), {});
  c.images_of_.assign(c.labels_.size(), {});
  for (const auto& e : c.edges_) {
    c.labels_of_[e.image].push_back(e.label);
    c.images_of_[e.label].push_back(e.image);
  }
  for (auto& v : c.labels_of_) std::sort(v.begin(), v.end());
  for (auto& v : c.images_of_) std::sort(v.begin(), v.end());
  for (std::size_t j = 0; j < c.labels_.size(); ++j)
    c.labels_[j].frequency = static_cast<int>(c.images_of_[j].size());
  return c;
}

Corpus Corpus::with_additions(std::vector<ImageRecord> images,
                              const std::vector<EdgeSpec>& edges) const {
  std::vector<ImageRecord> all = images_;
  all.insert(all.end(), std::make_move_iterator(images.begin()),
             std::make_move_iterator(images.end()));
  std::vector<EdgeSpec> all_edges;
  all_edges.reserve(edges_.size() + edges.size());
  for (const auto& e : edges_)
    all_edges.push_back({images_[e.image].id, labels_[e.label].id, e.weight});
  all_edges.insert(all_edges.end(), edges.begin(), edges.end());
  return build(classes_, dimension_, std::move(all), labels_, all_edges);
}

std::optional<std::size_t> Corpus::image_index(std::string_view id) const {
  const auto it = image_lookup_.find(std::string(id));
  if (it == image_lookup_.end()) return std::nullopt;
  return it->second;
}

std::optional<std::size_t> Corpus::label_index(std::string_view id) const {
  const auto it = label_lookup_.find(std::string(id));
  if (it == label_lookup_.end()) return std::nullopt;
  return it->second;
}

std::optional<std::size_t> Corpus::class_index(std::string_view name) const {
  const auto it = std::find(classes_.begin(), classes_.end(), name);
  if (it == classes_.end()) return std::nullopt;
  return static_cast<std::size_t>(it - classes_.begin());
}

Matrix Corpus::image_embeddings() const {
  Matrix m(images_.size(), dimension_);
  for (std::size_t i = 0; i < images_.size(); ++i) m.row(i) = images_[i].embedding.transpose();
  return m;
}

Matrix Corpus::label_embeddings() const {
  Matrix m(labels_.size(), dimension_);
  for (std::size_t j = 0; j < labels_.size(); ++j) m.row(j) = labels_[j].embedding.transpose();
  return m;
}

int Corpus::max_iteration() const {
  int it = 0;
  for (const auto& im : images_) it = std::max(it, im.iteration);
  return it;
}

// ---------------------------------------------------------------------------
// Line-delimited JSON

namespace {

[[noreturn]] void malformed(std::size_t line, const std::string& field, const std::string& why) {
  throw Error(ErrorCode::MalformedRecord,
              "line " + std::to_string(line) + ", field '" + field + "': " + why);
}

const json& require(const json& obj, const char* key, std::size_t line) {
  const auto it = obj.find(key);
  if (it == obj.end()) malformed(line, key, "missing");
  return *it;
}

std::string require_string(const json& obj, const char* key, std::size_t line) {
  const auto& v = require(obj, key, line);
  if (!v.is_string()) malformed(line, key, "expected string");
  return v.get<std::string>();
}

std::optional<std::string> optional_string(const json& obj, const char* key, std::size_t line) {
  const auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return std::nullopt;
  if (!it->is_string()) malformed(line, key, "expected string");
  return it->get<std::string>();
}

Vector read_vector(const json& v, const char* key, std::size_t line) {
  if (!v.is_array()) malformed(line, key, "expected array of numbers");
  Vector out(static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!v[i].is_number()) malformed(line, key, "expected array of numbers");
    out[static_cast<Eigen::Index>(i)] = v[i].get<double>();
  }
  return out;
}

json write_vector(const Vector& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

}  // namespace

Corpus parse_corpus(std::istream& in) {
  std::optional<int> dimension;
  std::vector<std::string> classes;
  std::vector<ImageRecord> images;
  std::vector<LabelRecord> labels;
  std::vector<EdgeSpec> edges;

  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    json rec;
    try {
      rec = json::parse(text);
    } catch (const json::parse_error& e) {
      malformed(line, "<record>", e.what());
    }
    if (!rec.is_object()) malformed(line, "<record>", "expected object");
    const std::string type = require_string(rec, "type", line);
    if (type == "meta") {
      const auto& d = require(rec, "dimension", line);
      if (!d.is_number_integer() || d.get<int>() <= 0)
        malformed(line, "dimension", "expected positive integer");
      dimension = d.get<int>();
      const auto& cl = require(rec, "classes", line);
      if (!cl.is_array()) malformed(line, "classes", "expected array");
      classes.clear();
      for (const auto& c : cl) {
        if (!c.is_string()) malformed(line, "classes", "expected strings");
        classes.push_back(c.get<std::string>());
      }
    } else if (type == "image") {
      ImageRecord im;
      im.id = require_string(rec, "id", line);
      im.class_name = require_string(rec, "class", line);
      const std::string kind = require_string(rec, "kind", line);
      if (kind == "original")
        im.kind = ImageKind::original;
      else if (kind == "generated")
        im.kind = ImageKind::generated;
      else
        malformed(line, "kind", "expected 'original' or 'generated'");
      const auto it = rec.find("iteration");
      if (it != rec.end()) {
        if (!it->is_number_integer()) malformed(line, "iteration", "expected integer");
        im.iteration = it->get<int>();
      }
      im.prompt_id = optional_string(rec, "prompt_id", line);
      im.embedding = read_vector(require(rec, "embedding", line), "embedding", line);
      const auto pr = rec.find("prediction");
      if (pr != rec.end() && !pr->is_null()) im.prediction = read_vector(*pr, "prediction", line);
      im.caption = optional_string(rec, "caption", line);
      im.image_path = optional_string(rec, "image_path", line);
      images.push_back(std::move(im));
    } else if (type == "label") {
      LabelRecord lb;
      lb.id = require_string(rec, "id", line);
      lb.text = require_string(rec, "text", line);
      lb.embedding = read_vector(require(rec, "embedding", line), "embedding", line);
      labels.push_back(std::move(lb));
    } else if (type == "edge") {
      EdgeSpec e;
      e.image_id = require_string(rec, "image", line);
      e.label_id = require_string(rec, "label", line);
      const auto w = rec.find("weight");
      if (w != rec.end() && !w->is_null()) {
        if (!w->is_number()) malformed(line, "weight", "expected number");
        e.weight = w->get<double>();
      }
      edges.push_back(std::move(e));
    } else {
      malformed(line, "type", "unknown record type '" + type + "'");
    }
  }
  if (!dimension) malformed(line, "meta", "missing meta record");
  return Corpus::build(std::move(classes), *dimension, std::move(images), std::move(labels), edges);
}

Corpus load_corpus(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  return parse_corpus(in);
}

void write_corpus(std::ostream& out, const Corpus& corpus) {
  json meta;
  meta["type"] = "meta";
  meta["dimension"] = corpus.dimension();
  meta["classes"] = corpus.classes();
  out << meta.dump() << '\n';
  for (const auto& im : corpus.images()) {
    json r;
    r["type"] = "image";
    r["id"] = im.id;
    r["class"] = im.class_name;
    r["kind"] = std::string(to_string(im.kind));
    r["iteration"] = im.iteration;
    if (im.prompt_id) r["prompt_id"] = *im.prompt_id;
    r["embedding"] = write_vector(im.embedding);
    if (im.prediction) r["prediction"] = write_vector(*im.prediction);
    if (im.caption) r["caption"] = *im.caption;
    if (im.image_path) r["image_path"] = *im.image_path;
    out << r.dump() << '\n';
  }
  for (const auto& lb : corpus.labels()) {
    json r;
    r["type"] = "label";
    r["id"] = lb.id;
    r["text"] = lb.text;
    r["embedding"] = write_vector(lb.embedding);
    out << r.dump() << '\n';
  }
  for (const auto& e : corpus.edges()) {
    json r;
    r["type"] = "edge";
    r["image"] = corpus.images()[e.image].id;
    r["label"] = corpus.labels()[e.label].id;
    r["weight"] = e.weight;
    out << r.dump() << '\n';
  }
}

void save_corpus(const std::filesystem::path& path, const Corpus& corpus) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  write_corpus(out, corpus);
}

// ---------------------------------------------------------------------------
// Neighbourhoods

Matrix pairwise_distances(const Matrix& a, const Matrix& b, Distance metric) {
  if (metric == Distance::cosine) {
    const Matrix an = normalized_rows(a);
    const Matrix bn = normalized_rows(b);
    return (1.0 - (an * bn.transpose()).array()).matrix();
  }
  Matrix d(a.rows(), b.rows());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < b.rows(); ++j) d(i, j) = (a.row(i) - b.row(j)).norm();
  return d;
}

NeighborLists knn_lists(const Matrix& points, std::size_t k, Distance metric) {
  const auto n = static_cast<std::size_t>(points.rows());
  if (n == 0) throw Error(ErrorCode::EmptyModality, "no points");
  const std::size_t kk = std::min(k, n - 1);
  const Matrix dist = pairwise_distances(points, points, metric);

  NeighborLists out;
  out.neighbors.resize(n);
  out.distances.resize(n);
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::iota(order.begin(), order.end(), 0);
    order.erase(order.begin() + static_cast<std::ptrdiff_t>(i));
    const auto cmp = [&](std::size_t a, std::size_t b) {
      const double da = dist(i, a), db = dist(i, b);
      return da < db || (da == db && a < b);
    };
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(kk),
                      order.end(), cmp);
    out.neighbors[i].assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(kk));
    for (std::size_t j : out.neighbors[i]) out.distances[i].push_back(dist(i, j));
    order.resize(n);
  }
  return out;
}

NeighborLists knn_graph(const Corpus& corpus, std::size_t k, Modality modality, Distance metric) {
  const Matrix pts =
      modality == Modality::image ? corpus.image_embeddings() : corpus.label_embeddings();
  if (pts.rows() == 0)
    throw Error(ErrorCode::EmptyModality, std::string(to_string(modality)) + " set is empty");
  auto lists = knn_lists(pts, k, metric);
  lists.modality = modality;
  return lists;
}

std::vector<double> label_frequencies(const Corpus& corpus) {
  if (corpus.edges().empty()) throw Error(ErrorCode::EmptyGraph, "no edges");
  const double total = static_cast<double>(corpus.edges().size());
  std::vector<double> f;
  f.reserve(corpus.labels().size());
  for (const auto& lb : corpus.labels()) f.push_back(lb.frequency / total);
  return f;
}

}  // namespace expander
