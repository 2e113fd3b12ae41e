#pragma once

#include "expander/common.hpp"

#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace expander {

enum class ImageKind { original, generated };
enum class Modality { image, label };

std::string_view to_string(ImageKind kind);
std::string_view to_string(Modality modality);

struct ImageRecord {
  std::string id;
  std::string class_name;
  ImageKind kind = ImageKind::original;
  int iteration = 0;
  std::optional<std::string> prompt_id;
  Vector embedding;
  std::optional<Vector> prediction;
  std::optional<std::string> caption;
  std::optional<std::string> image_path;
};

struct LabelRecord {
  std::string id;
  std::string text;
  Vector embedding;
  /// Degree of the label in the bipartite graph; filled in by Corpus.
  int frequency = 0;
};

/// Edge as it appears in an input file; a missing weight is recomputed
/// from the embeddings.
struct EdgeSpec {
  std::string image_id;
  std::string label_id;
  std::optional<double> weight;
};

/// Resolved edge, indices into Corpus::images() / Corpus::labels().
struct Edge {
  std::size_t image;
  std::size_t label;
  double weight;
};

/// Validated, immutable collection of images, labels and their containment
/// graph. Images, labels and edges are sorted by id so that every index-based
/// tie-break in the engine is also an id-based one.
class Corpus {
 public:
  Corpus() = default;

  static Corpus build(std::vector<std::string> classes, int dimension,
                      std::vector<ImageRecord> images, std::vector<LabelRecord> labels,
                      const std::vector<EdgeSpec>& edges);

  /// New corpus containing this one plus the given images and edges.
  Corpus with_additions(std::vector<ImageRecord> images,
                        const std::vector<EdgeSpec>& edges) const;

  const std::vector<ImageRecord>& images() const noexcept { return images_; }
  const std::vector<LabelRecord>& labels() const noexcept { return labels_; }
  const std::vector<Edge>& edges() const noexcept { return edges_; }
  const std::vector<std::string>& classes() const noexcept { return classes_; }
  int dimension() const noexcept { return dimension_; }

  std::optional<std::size_t> image_index(std::string_view id) const;
  std::optional<std::size_t> label_index(std::string_view id) const;
  std::optional<std::size_t> class_index(std::string_view name) const;

  /// Label indices of an image, ascending.
  const std::vector<std::size_t>& labels_of(std::size_t image) const { return labels_of_[image]; }
  /// Image indices of a label, ascending.
  const std::vector<std::size_t>& images_of(std::size_t label) const { return images_of_[label]; }

  /// Embeddings as rows.
  Matrix image_embeddings() const;
  Matrix label_embeddings() const;

  /// Number of points in the joint layout (images first, then labels).
  std::size_t point_count() const noexcept { return images_.size() + labels_.size(); }
  int max_iteration() const;

 private:
  std::vector<std::string> classes_;
  int dimension_ = 0;
  std::vector<ImageRecord> images_;
  std::vector<LabelRecord> labels_;
  std::vector<Edge> edges_;
  std::unordered_map<std::string, std::size_t> image_lookup_;
  std::unordered_map<std::string, std::size_t> label_lookup_;
  std::vector<std::vector<std::size_t>> labels_of_;
  std::vector<std::vector<std::size_t>> images_of_;
};

Corpus parse_corpus(std::istream& in);
Corpus load_corpus(const std::filesystem::path& path);
void write_corpus(std::ostream& out, const Corpus& corpus);
void save_corpus(const std::filesystem::path& path, const Corpus& corpus);

enum class Distance { cosine, euclidean };

/// Distances between every row of `a` and every row of `b`.
Matrix pairwise_distances(const Matrix& a, const Matrix& b, Distance metric);

struct NeighborLists {
  Modality modality = Modality::image;
  /// neighbors[i] holds indices of the nearest points to i, nearest first.
  std::vector<std::vector<std::size_t>> neighbors;
  std::vector<std::vector<double>> distances;
};

/// Exact k nearest neighbours among the rows of `points`; ties by index.
NeighborLists knn_lists(const Matrix& points, std::size_t k, Distance metric = Distance::cosine);

NeighborLists knn_graph(const Corpus& corpus, std::size_t k, Modality modality,
                        Distance metric = Distance::cosine);

/// f_i = deg(label i) / total degree, aligned with corpus.labels().
std::vector<double> label_frequencies(const Corpus& corpus);

}  // namespace expander
