#pragma once

#include "expander/common.hpp"
#include "expander/corpus.hpp"

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace expander {

class NamingProvider;

struct TreeNode {
  std::string id;    ///< leaf: label id, inner: "node-K"
  std::string name;  ///< leaf: label text, inner: provider name or id
  int parent = -1;
  std::vector<std::size_t> children;  ///< empty for leaves, otherwise two
  std::vector<std::string> members;   ///< label ids, sorted
  Vector centroid;
  double height = 0.0;  ///< linkage distance at which the node was formed
  int original_count = 0;
  int generated_count = 0;
  bool placeholder_name = false;

  bool is_leaf() const noexcept { return children.empty(); }
};

/// Binary merge tree over labels. Leaves are nodes [0, leaves()) in label id
/// order; inner nodes follow in merge order and the root is last.
class LabelTree {
 public:
  LabelTree() = default;
  explicit LabelTree(std::vector<TreeNode> nodes);

  const std::vector<TreeNode>& nodes() const noexcept { return nodes_; }
  const TreeNode& node(std::size_t i) const { return nodes_.at(i); }
  std::size_t size() const noexcept { return nodes_.size(); }
  std::size_t leaves() const noexcept { return leaves_; }
  std::size_t root() const noexcept { return nodes_.size() - 1; }
  std::size_t depth(std::size_t i) const { return depth_.at(i); }

  /// Throws UnknownNode.
  std::size_t index(std::string_view id) const;
  std::optional<std::size_t> find(std::string_view id) const;

  /// Unweighted path length.
  std::size_t tree_distance(std::size_t a, std::size_t b) const;
  bool is_ancestor(std::size_t ancestor, std::size_t node) const;

  /// Copies image counts from the corpus: a node counts every image that
  /// contains at least one of its member labels.
  void attach_counts(const Corpus& corpus);
  void set_name(std::size_t i, std::string name, bool placeholder);

 private:
  std::vector<TreeNode> nodes_;
  std::vector<std::size_t> depth_;
  std::size_t leaves_ = 0;
};

/// Average-linkage agglomerative clustering under cosine distance. Equal
/// linkage distances are resolved by the smallest member label id.
LabelTree build_hierarchy(std::vector<LabelRecord> labels);
/// As above with counts attached and inner nodes named by id.
LabelTree build_hierarchy(const Corpus& corpus);

/// Generated over original images containing any member, with one added to
/// the denominator when no original contains it.
double api(const TreeNode& node);

enum class DoiScale {
  raw,        ///< API - TD
  normalized  ///< API min-max mapped onto [0, max TD from focus] first
};

double doi(const LabelTree& tree, std::size_t node, std::size_t focus, DoiScale scale = DoiScale::normalized);
double doi(const LabelTree& tree, std::string_view node, std::string_view focus,
           DoiScale scale = DoiScale::normalized);
/// DOI of every node for one focus.
std::vector<double> doi_all(const LabelTree& tree, std::size_t focus, DoiScale scale = DoiScale::normalized);

struct TreeCut {
  std::vector<std::size_t> nodes;  ///< ascending
  std::size_t focus = 0;
};

/// Greedy descent: starting from {root}, the cut node of highest DOI that
/// still fits the budget is replaced by its children. Ties go to the lower
/// node index.
TreeCut tree_cut(const LabelTree& tree, std::size_t focus, std::size_t budget,
                 DoiScale scale = DoiScale::normalized);

/// No node is an ancestor of another and members cover every label once.
bool is_antichain_cover(const LabelTree& tree, const TreeCut& cut);

struct NamingReport {
  std::size_t named = 0;
  std::size_t placeholders = 0;
  std::string first_error;
};

/// Names inner nodes from their members ordered by frequency. On provider
/// failure a node keeps its id as name and is flagged.
NamingReport name_nodes(LabelTree& tree, const Corpus& corpus, NamingProvider& provider);

void write_tree_json(std::ostream& out, const LabelTree& tree);
void write_cut_json(std::ostream& out, const LabelTree& tree, const TreeCut& cut);

}  // namespace expander
