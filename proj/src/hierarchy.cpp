#include "expander/hierarchy.hpp"

#include "expander/providers.hpp"

#include <json.hpp>

#include <algorithm>
#include <limits>
#include <ostream>
#include <set>

namespace expander {

using ojson = nlohmann::ordered_json;

LabelTree::LabelTree(std::vector<TreeNode> nodes) : nodes_(std::move(nodes)) {
  if (nodes_.empty()) throw Error(ErrorCode::EmptyModality, "a label tree needs at least one node");
  leaves_ = static_cast<std::size_t>(
      std::count_if(nodes_.begin(), nodes_.end(), [](const TreeNode& n) { return n.is_leaf(); }));
  depth_.assign(nodes_.size(), 0);
  // Parents always come after their children, so walk downwards from the root.
  for (std::size_t i = nodes_.size(); i-- > 0;)
    for (std::size_t c : nodes_[i].children) depth_[c] = depth_[i] + 1;
}

std::optional<std::size_t> LabelTree::find(std::string_view id) const {
  for (std::size_t i = 0; i < nodes_.size(); ++i)
    if (nodes_[i].id == id) return i;
  return std::nullopt;
}

std::size_t LabelTree::index(std::string_view id) const {
  if (auto i = find(id)) return *i;
  throw Error(ErrorCode::UnknownNode, std::string(id));
}

std::size_t LabelTree::tree_distance(std::size_t a, std::size_t b) const {
  if (a >= nodes_.size() || b >= nodes_.size())
    throw Error(ErrorCode::UnknownNode, "node index " + std::to_string(std::max(a, b)));
  std::size_t steps = 0;
  while (depth_[a] > depth_[b]) a = static_cast<std::size_t>(nodes_[a].parent), ++steps;
  while (depth_[b] > depth_[a]) b = static_cast<std::size_t>(nodes_[b].parent), ++steps;
  while (a != b) {
    a = static_cast<std::size_t>(nodes_[a].parent);
    b = static_cast<std::size_t>(nodes_[b].parent);
    steps += 2;
  }
  return steps;
}

bool LabelTree::is_ancestor(std::size_t ancestor, std::size_t node) const {
  if (ancestor == node) return false;
  for (int p = nodes_.at(node).parent; p >= 0; p = nodes_[static_cast<std::size_t>(p)].parent)
    if (static_cast<std::size_t>(p) == ancestor) return true;
  return false;
}

void LabelTree::attach_counts(const Corpus& corpus) {
  std::vector<std::vector<std::size_t>> holders(nodes_.size());
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    auto& node = nodes_[i];
    if (node.is_leaf()) {
      const auto j = corpus.label_index(node.id);
      if (!j) throw Error(ErrorCode::UnknownNode, "label " + node.id + " is not in the corpus");
      holders[i] = corpus.images_of(*j);
    } else {
      const auto& l = holders[node.children[0]];
      const auto& r = holders[node.children[1]];
      std::set_union(l.begin(), l.end(), r.begin(), r.end(), std::back_inserter(holders[i]));
    }
    node.original_count = node.generated_count = 0;
    for (std::size_t img : holders[i])
      ++(corpus.images()[img].kind == ImageKind::original ? node.original_count : node.generated_count);
  }
}

void LabelTree::set_name(std::size_t i, std::string name, bool placeholder) {
  nodes_.at(i).name = std::move(name);
  nodes_[i].placeholder_name = placeholder;
}

LabelTree build_hierarchy(std::vector<LabelRecord> labels) {
  if (labels.empty()) throw Error(ErrorCode::EmptyModality, "no labels to cluster");
  std::sort(labels.begin(), labels.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  for (std::size_t i = 1; i < labels.size(); ++i)
    if (labels[i].id == labels[i - 1].id) throw Error(ErrorCode::DuplicateId, labels[i].id);

  const std::size_t n = labels.size();
  const std::size_t total = 2 * n - 1;
  std::vector<TreeNode> nodes;
  nodes.reserve(total);
  for (const auto& l : labels) {
    TreeNode leaf;
    leaf.id = l.id;
    leaf.name = l.text;
    leaf.members = {l.id};
    leaf.centroid = l.embedding;
    nodes.push_back(std::move(leaf));
  }

  Matrix dist = Matrix::Zero(static_cast<Eigen::Index>(total), static_cast<Eigen::Index>(total));
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = a + 1; b < n; ++b)
      dist(a, b) = dist(b, a) = cosine_distance(labels[a].embedding, labels[b].embedding);

  // key = smallest leaf index in a cluster; leaves are id-sorted so this is
  // the smallest member id.
  std::vector<std::size_t> active(n), key(total), size(total, 1);
  for (std::size_t i = 0; i < n; ++i) active[i] = key[i] = i;

  while (active.size() > 1) {
    std::size_t ba = 0, bb = 0;
    double best = std::numeric_limits<double>::infinity();
    std::pair<std::size_t, std::size_t> best_key{};
    for (std::size_t x = 0; x < active.size(); ++x)
      for (std::size_t y = x + 1; y < active.size(); ++y) {
        const std::size_t a = active[x], b = active[y];
        const double d = dist(a, b);
        const std::pair<std::size_t, std::size_t> k{std::min(key[a], key[b]), std::max(key[a], key[b])};
        if (d < best || (d == best && k < best_key)) {
          best = d;
          best_key = k;
          ba = a;
          bb = b;
        }
      }
    if (key[bb] < key[ba]) std::swap(ba, bb);

    const std::size_t id = nodes.size();
    TreeNode inner;
    inner.id = "node-" + std::to_string(id);
    inner.name = inner.id;
    inner.children = {ba, bb};
    std::merge(nodes[ba].members.begin(), nodes[ba].members.end(), nodes[bb].members.begin(),
               nodes[bb].members.end(), std::back_inserter(inner.members));
    const double wa = static_cast<double>(size[ba]), wb = static_cast<double>(size[bb]);
    inner.centroid = (wa * nodes[ba].centroid + wb * nodes[bb].centroid) / (wa + wb);
    inner.height = best;
    nodes[ba].parent = nodes[bb].parent = static_cast<int>(id);
    nodes.push_back(std::move(inner));
    size[id] = size[ba] + size[bb];
    key[id] = std::min(key[ba], key[bb]);

    for (std::size_t k : active) {
      if (k == ba || k == bb) continue;
      const double d = (wa * dist(ba, k) + wb * dist(bb, k)) / (wa + wb);
      dist(id, k) = dist(k, id) = d;
    }
    std::erase_if(active, [&](std::size_t k) { return k == ba || k == bb; });
    active.push_back(id);
  }
  return LabelTree(std::move(nodes));
}

LabelTree build_hierarchy(const Corpus& corpus) {
  LabelTree tree = build_hierarchy(corpus.labels());
  tree.attach_counts(corpus);
  return tree;
}

double api(const TreeNode& node) {
  const double denominator = node.original_count > 0 ? node.original_count : 1.0;
  return node.generated_count / denominator;
}

std::vector<double> doi_all(const LabelTree& tree, std::size_t focus, DoiScale scale) {
  if (focus >= tree.size()) throw Error(ErrorCode::UnknownNode, "focus index " + std::to_string(focus));
  const std::size_t n = tree.size();
  std::vector<double> a(n), td(n);
  for (std::size_t i = 0; i < n; ++i) {
    a[i] = api(tree.node(i));
    td[i] = static_cast<double>(tree.tree_distance(i, focus));
  }
  if (scale == DoiScale::normalized) {
    const auto [lo, hi] = std::minmax_element(a.begin(), a.end());
    const double amin = *lo, amax = *hi;
    const double span = *std::max_element(td.begin(), td.end());
    for (double& v : a) v = amax > amin ? (v - amin) / (amax - amin) * span : 0.0;
  }
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] - td[i];
  return out;
}

double doi(const LabelTree& tree, std::size_t node, std::size_t focus, DoiScale scale) {
  if (node >= tree.size()) throw Error(ErrorCode::UnknownNode, "node index " + std::to_string(node));
  if (scale == DoiScale::raw) {
    if (focus >= tree.size()) throw Error(ErrorCode::UnknownNode, "focus index " + std::to_string(focus));
    return api(tree.node(node)) - static_cast<double>(tree.tree_distance(node, focus));
  }
  return doi_all(tree, focus, scale)[node];
}

double doi(const LabelTree& tree, std::string_view node, std::string_view focus, DoiScale scale) {
  return doi(tree, tree.index(node), tree.index(focus), scale);
}

TreeCut tree_cut(const LabelTree& tree, std::size_t focus, std::size_t budget, DoiScale scale) {
  if (budget < 1) throw Error(ErrorCode::BadConfig, "tree-cut budget must be >= 1");
  const auto score = doi_all(tree, focus, scale);
  std::vector<std::size_t> cut{tree.root()};
  while (true) {
    std::optional<std::size_t> pick;
    for (std::size_t c : cut) {
      const auto& node = tree.node(c);
      if (node.is_leaf() || cut.size() - 1 + node.children.size() > budget) continue;
      if (!pick || score[c] > score[*pick] || (score[c] == score[*pick] && c < *pick)) pick = c;
    }
    if (!pick) break;
    std::erase(cut, *pick);
    for (std::size_t child : tree.node(*pick).children) cut.push_back(child);
  }
  std::sort(cut.begin(), cut.end());
  return {std::move(cut), focus};
}

bool is_antichain_cover(const LabelTree& tree, const TreeCut& cut) {
  for (std::size_t a : cut.nodes)
    for (std::size_t b : cut.nodes)
      if (a != b && tree.is_ancestor(a, b)) return false;
  std::vector<std::string> covered;
  for (std::size_t c : cut.nodes)
    covered.insert(covered.end(), tree.node(c).members.begin(), tree.node(c).members.end());
  std::sort(covered.begin(), covered.end());
  if (std::adjacent_find(covered.begin(), covered.end()) != covered.end()) return false;
  return covered == tree.node(tree.root()).members;
}

NamingReport name_nodes(LabelTree& tree, const Corpus& corpus, NamingProvider& provider) {
  NamingReport report;
  for (std::size_t i = 0; i < tree.size(); ++i) {
    const auto& node = tree.node(i);
    if (node.is_leaf()) continue;
    std::vector<std::pair<int, std::string>> ranked;
    for (const auto& id : node.members) {
      const auto j = corpus.label_index(id);
      if (!j) throw Error(ErrorCode::UnknownNode, "label " + id + " is not in the corpus");
      const auto& label = corpus.labels()[*j];
      ranked.emplace_back(-label.frequency, label.text);
    }
    std::sort(ranked.begin(), ranked.end());
    std::vector<std::string> texts;
    for (auto& [f, t] : ranked) texts.push_back(std::move(t));
    try {
      tree.set_name(i, provider.name(texts), false);
      ++report.named;
    } catch (const std::exception& e) {
      tree.set_name(i, node.id, true);
      ++report.placeholders;
      if (report.first_error.empty()) report.first_error = e.what();
    }
  }
  return report;
}

namespace {

ojson node_json(const LabelTree& tree, std::size_t i) {
  const auto& n = tree.node(i);
  ojson j;
  j["id"] = n.id;
  j["name"] = n.name;
  if (n.placeholder_name) j["placeholder_name"] = true;
  j["members"] = n.members;
  j["original_count"] = n.original_count;
  j["generated_count"] = n.generated_count;
  j["api"] = api(n);
  j["height"] = n.height;
  if (!n.is_leaf()) {
    j["children"] = ojson::array();
    for (std::size_t c : n.children) j["children"].push_back(node_json(tree, c));
  }
  return j;
}

}  // namespace

void write_tree_json(std::ostream& out, const LabelTree& tree) {
  out << node_json(tree, tree.root()).dump(2) << '\n';
}

void write_cut_json(std::ostream& out, const LabelTree& tree, const TreeCut& cut) {
  const auto score = doi_all(tree, cut.focus);
  ojson j;
  j["focus"] = tree.node(cut.focus).id;
  j["nodes"] = ojson::array();
  for (std::size_t c : cut.nodes) {
    const auto& n = tree.node(c);
    j["nodes"].push_back({{"id", n.id},
                          {"name", n.name},
                          {"members", n.members},
                          {"original_count", n.original_count},
                          {"generated_count", n.generated_count},
                          {"doi", score[c]}});
  }
  out << j.dump(2) << '\n';
}

}  // namespace expander
