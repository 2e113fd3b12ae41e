#include "expander/synthetic.hpp"

#include "expander/providers.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>

namespace expander {

namespace {

std::string padded(std::string_view prefix, std::size_t n, int width = 3) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%0*zu", width, n);
  return std::string(prefix) + buf;
}

Vector random_unit(Rng& rng, int d) {
  Vector v(d);
  for (int i = 0; i < d; ++i) v[i] = rng.normal();
  return v / v.norm();
}

Vector noisy(const Vector& centre, double noise, Rng& rng) {
  const int d = static_cast<int>(centre.size());
  Vector v = centre;
  for (int i = 0; i < d; ++i) v[i] += noise * rng.normal() / std::sqrt(static_cast<double>(d));
  return v / v.norm();
}

}  // namespace

Vector zero_shot(const Vector& embedding, const Matrix& class_embeddings, double tau) {
  Vector logits(class_embeddings.rows());
  for (Eigen::Index c = 0; c < class_embeddings.rows(); ++c)
    logits[c] = cosine_similarity(embedding, class_embeddings.row(c).transpose()) / tau;
  return softmax(logits);
}

Corpus make_benchmark(const BenchmarkConfig& cfg) {
  if (cfg.classes < 2 || cfg.images_per_class < 1 || cfg.labels_per_class < 2)
    throw Error(ErrorCode::BadConfig, "benchmark needs >= 2 classes, >= 1 image and >= 2 labels per class");
  Rng rng(splitmix64(cfg.seed ^ 0xbe7c4ULL));
  const int d = cfg.dimension;
  std::vector<std::string> classes;
  Matrix centres(static_cast<Eigen::Index>(cfg.classes), d);
  for (std::size_t k = 0; k < cfg.classes; ++k) {
    classes.push_back(padded("class", k, 2));
    centres.row(static_cast<Eigen::Index>(k)) = hash_to_sphere(classes.back(), d, cfg.seed).transpose();
  }

  std::vector<LabelRecord> labels;
  for (std::size_t k = 0; k < cfg.classes; ++k)
    for (std::size_t m = 0; m < cfg.labels_per_class; ++m) {
      const Vector c = centres.row(static_cast<Eigen::Index>(k)).transpose();
      Vector e = c + 0.8 * random_unit(rng, d);
      labels.push_back({padded("label-" + classes[k] + "-", m, 2), classes[k] + " part " + std::to_string(m),
                        e / e.norm(), 0});
    }
  for (std::size_t s = 0; s < cfg.shared_labels; ++s)
    labels.push_back({padded("label-shared-", s, 2), "shared " + std::to_string(s), random_unit(rng, d), 0});

  std::vector<ImageRecord> images;
  std::vector<EdgeSpec> edges;
  std::vector<std::size_t> slots(cfg.labels_per_class);
  for (std::size_t k = 0; k < cfg.classes; ++k) {
    for (std::size_t i = 0; i < cfg.images_per_class; ++i) {
      ImageRecord img;
      img.id = padded("img-" + classes[k] + "-", i);
      img.class_name = classes[k];
      std::iota(slots.begin(), slots.end(), std::size_t{0});
      rng.shuffle(slots);
      const std::size_t take = std::min<std::size_t>(2 + rng.below(2), cfg.labels_per_class);
      Vector mix = Vector::Zero(d);
      for (std::size_t t = 0; t < take; ++t) {
        const std::size_t j = k * cfg.labels_per_class + slots[t];
        mix += labels[j].embedding;
        edges.push_back({img.id, labels[j].id, std::nullopt});
      }
      mix /= static_cast<double>(take);
      if (cfg.shared_labels > 0 && rng.uniform() < cfg.shared_rate) {
        const std::size_t j = cfg.classes * cfg.labels_per_class + rng.below(cfg.shared_labels);
        mix += 0.5 * labels[j].embedding;
        edges.push_back({img.id, labels[j].id, std::nullopt});
      }
      img.embedding = noisy(mix / mix.norm(), cfg.image_noise, rng);
      img.prediction = zero_shot(img.embedding, centres);
      images.push_back(std::move(img));
    }
  }
  return Corpus::build(classes, d, std::move(images), std::move(labels), edges);
}

Corpus make_many_to_one(std::uint64_t seed, std::size_t max_images, std::size_t max_labels, int dimension) {
  Rng rng(splitmix64(seed ^ 0x3a1ULL));
  const std::size_t n_images = 1 + rng.below(max_images);
  const std::size_t n_labels = 1 + rng.below(max_labels);
  std::vector<LabelRecord> labels;
  for (std::size_t j = 0; j < n_labels; ++j)
    labels.push_back({padded("l", j), "label " + std::to_string(j), random_unit(rng, dimension), 0});
  std::vector<ImageRecord> images;
  std::vector<EdgeSpec> edges;
  for (std::size_t i = 0; i < n_images; ++i) {
    ImageRecord img;
    img.id = padded("i", i);
    img.class_name = "c0";
    img.embedding = random_unit(rng, dimension);
    if (rng.uniform() < 0.85) edges.push_back({img.id, labels[rng.below(n_labels)].id, std::nullopt});
    images.push_back(std::move(img));
  }
  return Corpus::build({"c0"}, dimension, std::move(images), std::move(labels), edges);
}

Corpus make_random_corpus(std::uint64_t seed, std::size_t n_images, std::size_t n_labels, int dimension) {
  if (n_labels < 2 || n_images < 2) throw Error(ErrorCode::BadConfig, "need >= 2 images and >= 2 labels");
  Rng rng(splitmix64(seed ^ 0x5eedULL));
  std::vector<LabelRecord> labels;
  for (std::size_t j = 0; j < n_labels; ++j)
    labels.push_back({padded("l", j), "label " + std::to_string(j), random_unit(rng, dimension), 0});
  std::vector<ImageRecord> images;
  std::vector<EdgeSpec> edges;
  std::vector<std::size_t> order(n_labels);
  for (std::size_t i = 0; i < n_images; ++i) {
    ImageRecord img;
    img.id = padded("i", i);
    img.class_name = i % 2 ? "c1" : "c0";
    img.embedding = random_unit(rng, dimension);
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng.shuffle(order);
    const std::size_t take = 1 + rng.below(std::min<std::size_t>(3, n_labels - 1));
    for (std::size_t t = 0; t < take; ++t) edges.push_back({img.id, labels[order[t]].id, std::nullopt});
    images.push_back(std::move(img));
  }
  return Corpus::build({"c0", "c1"}, dimension, std::move(images), std::move(labels), edges);
}

TigerScenario make_tiger_corpus(std::uint64_t seed, int dimension) {
  Rng rng(splitmix64(seed ^ 0x7197ULL));
  const std::vector<std::string> classes = {"Bengal", "Persian"};
  Matrix centres(2, dimension);
  for (int k = 0; k < 2; ++k)
    centres.row(k) = hash_to_sphere(classes[static_cast<std::size_t>(k)], dimension, seed).transpose();
  const std::vector<std::string> words = {"cat", "fur", "sofa", "stripes", "tiger"};
  std::vector<LabelRecord> labels;
  for (const auto& w : words) labels.push_back({"label-" + w, w, hash_to_sphere(w, dimension, seed), 0});
  auto emb = [&](std::string_view w) { return labels[static_cast<std::size_t>(
                                                   std::find(words.begin(), words.end(), w) - words.begin())]
                                            .embedding; };

  std::vector<ImageRecord> images;
  std::vector<EdgeSpec> edges;
  TigerScenario out;
  auto add = [&](std::string id, int cls, ImageKind kind, int iteration, std::vector<std::string> tags) {
    ImageRecord img;
    img.id = std::move(id);
    img.class_name = classes[static_cast<std::size_t>(cls)];
    img.kind = kind;
    img.iteration = iteration;
    Vector mix = centres.row(cls).transpose();
    for (const auto& t : tags) {
      mix += 0.6 * emb(t);
      edges.push_back({img.id, "label-" + t, std::nullopt});
    }
    img.embedding = noisy(mix / mix.norm(), 0.3, rng);
    img.prediction = zero_shot(img.embedding, centres);
    images.push_back(std::move(img));
  };
  for (std::size_t i = 0; i < 10; ++i) {
    add(padded("orig-bengal-", i), 0, ImageKind::original, 0, {"cat", i % 2 ? "stripes" : "fur"});
    add(padded("orig-persian-", i), 1, ImageKind::original, 0, {"cat", i % 3 ? "fur" : "sofa"});
  }
  for (std::size_t i = 0; i < 6; ++i) {
    std::string id = padded("gen-bengal-", i);
    out.planted.push_back(id);
    add(std::move(id), 0, ImageKind::generated, 1, {"tiger", "stripes"});
  }
  for (std::size_t i = 0; i < 4; ++i) add(padded("gen-persian-", i), 1, ImageKind::generated, 1, {"cat", "sofa"});
  out.corpus = Corpus::build(classes, dimension, std::move(images), std::move(labels), edges);
  return out;
}

SteeringScenario make_steering_scenario(std::uint64_t seed, int dimension, std::size_t per_cluster) {
  MockGenerator generator(dimension, seed);
  MockEmbedder embedder(dimension, seed);
  SteeringScenario out;
  out.class_embeddings = embedder.embed({"cat", "dog"});
  out.prompt = {"prompt-cat", "cat", "a [cartoon | photo] of a cat", 1, std::nullopt};

  const std::vector<std::string> words = {"cartoon", "cat", "dog", "photo"};
  std::vector<LabelRecord> labels;
  for (const auto& w : words) labels.push_back({"label-" + w, w, hash_to_sphere(w, dimension, seed), 0});

  std::vector<ImageRecord> images;
  std::vector<EdgeSpec> edges;
  auto cluster = [&](const std::string& prefix, const std::string& cls, const std::string& text,
                     std::vector<std::string> tags, std::uint64_t salt) {
    const Matrix e = generator.generate({"", cls, text, 1, std::nullopt}, per_cluster, seed + salt);
    std::vector<std::string> ids;
    for (Eigen::Index r = 0; r < e.rows(); ++r) {
      ImageRecord img;
      img.id = padded(prefix, static_cast<std::size_t>(r));
      img.class_name = cls;
      img.embedding = e.row(r).transpose();
      img.prediction = zero_shot(img.embedding, out.class_embeddings);
      for (const auto& t : tags) edges.push_back({img.id, "label-" + t, std::nullopt});
      ids.push_back(img.id);
      images.push_back(std::move(img));
    }
    return ids;
  };
  out.deleted = cluster("cat-cartoon-", "cat", "a cartoon of a cat", {"cat", "cartoon"}, 1);
  cluster("cat-photo-", "cat", "a photo of a cat", {"cat", "photo"}, 2);
  cluster("dog-photo-", "dog", "a photo of a dog", {"dog", "photo"}, 3);
  out.corpus = Corpus::build({"cat", "dog"}, dimension, std::move(images), std::move(labels), edges);
  return out;
}

}  // namespace expander
