#include "expander/providers.hpp"

#include <httplib.h>
#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cstdlib>
#include <set>

namespace expander {

using json = nlohmann::json;

void ProviderConfig::validate() const {
  if (kind == Kind::http && (!endpoint || endpoint->empty()))
    throw Error(ErrorCode::BadConfig, "http provider requires an endpoint");
  if (kind == Kind::mock && !seed) throw Error(ErrorCode::BadConfig, "mock provider requires a seed");
  if (timeout_seconds <= 0.0) throw Error(ErrorCode::BadConfig, "timeout must be positive");
  if (retry < 0) throw Error(ErrorCode::BadConfig, "retry must be >= 0");
  if (dimension < 1) throw Error(ErrorCode::BadConfig, "dimension must be >= 1");
}

ProviderConfig ProviderConfig::from_env(ProviderConfig base) {
  auto env = [](const char* name) -> std::optional<std::string> {
    const char* v = std::getenv(name);
    if (!v || !*v) return std::nullopt;
    return std::string(v);
  };
  try {
    if (auto kind = env("EXPANDER_PROVIDER")) {
      if (*kind == "mock") base.kind = Kind::mock;
      else if (*kind == "http") base.kind = Kind::http;
      else throw Error(ErrorCode::BadConfig, "EXPANDER_PROVIDER must be mock or http, got " + *kind);
    }
    if (auto e = env("EXPANDER_PROVIDER_ENDPOINT")) base.endpoint = *e;
    if (auto t = env("EXPANDER_PROVIDER_TIMEOUT")) base.timeout_seconds = std::stod(*t);
    if (auto r = env("EXPANDER_PROVIDER_RETRY")) base.retry = std::stoi(*r);
    if (auto s = env("EXPANDER_PROVIDER_SEED")) base.seed = std::stoull(*s);
  } catch (const std::logic_error& e) {
    throw Error(ErrorCode::BadConfig, std::string("bad provider environment value: ") + e.what());
  }
  return base;
}

Vector hash_to_sphere(std::string_view text, int dimension, std::uint64_t seed) {
  Rng rng(hash_string(text, seed));
  Vector v(dimension);
  for (int i = 0; i < dimension; ++i) v[i] = rng.normal();
  return v / v.norm();
}

Matrix MockEmbedder::embed(const std::vector<std::string>& inputs) {
  if (inputs.empty()) throw Error(ErrorCode::EmptySet, "embed called with no inputs");
  Matrix out(static_cast<Eigen::Index>(inputs.size()), dimension_);
  for (std::size_t i = 0; i < inputs.size(); ++i)
    out.row(static_cast<Eigen::Index>(i)) = hash_to_sphere(inputs[i], dimension_, seed_).transpose();
  return out;
}

namespace {

bool is_stopword(const std::string& t) {
  static const std::set<std::string> words = {"a", "an", "the", "of", "in", "on", "at", "with",
                                              "and", "under", "to", "by", "for"};
  return words.count(t) > 0;
}

}  // namespace

Vector MockGenerator::centre(std::string_view concrete_prompt) {
  std::vector<std::string> words;
  for (auto& t : tokenize(concrete_prompt))
    if (!is_stopword(t)) words.push_back(std::move(t));
  if (words.empty()) words.push_back(std::string(concrete_prompt));
  const Matrix e = embedder_.embed(words);
  Vector c = e.colwise().sum().transpose();
  return c / c.norm();
}

Matrix MockGenerator::generate(const PromptTemplate& prompt, std::size_t count, std::uint64_t seed) {
  const int d = embedder_.dimension();
  Matrix out(static_cast<Eigen::Index>(count), d);
  if (count == 0) return out;
  const auto tokens = tokenize(prompt.text);
  const bool diverse = std::find(tokens.begin(), tokens.end(), "diverse") != tokens.end();
  const double spread = diverse ? kDiverseSpread : kSpread;
  const std::uint64_t base = hash_string(prompt.text, splitmix64(seed_ ^ splitmix64(seed)));
  for (std::size_t k = 0; k < count; ++k) {
    Rng rng(splitmix64(base + k));
    Vector v = centre(sample_prompt(prompt.text, rng));
    for (int i = 0; i < d; ++i) v[i] += spread * rng.normal() / std::sqrt(static_cast<double>(d));
    out.row(static_cast<Eigen::Index>(k)) = (v / v.norm()).transpose();
  }
  return out;
}

const std::vector<std::string>& MockMutator::lexicon() {
  static const std::vector<std::string> words = {"photo",    "picture",  "snapshot", "close-up",
                                                 "portrait", "cartoon",  "sketch",   "painting",
                                                 "drawing",  "render"};
  return words;
}

const std::vector<std::string>& MockMutator::scenes() {
  static const std::vector<std::string> words = {"in a garden",   "on a sofa",       "at the beach",
                                                 "in the snow",   "on a wooden floor",
                                                 "under soft light"};
  return words;
}

namespace {

std::string fresh_word(const std::vector<std::string>& taken, Rng& rng) {
  std::vector<std::string> pool;
  for (const auto& w : MockMutator::lexicon())
    if (std::find(taken.begin(), taken.end(), w) == taken.end()) pool.push_back(w);
  if (pool.empty()) return MockMutator::lexicon()[rng.below(MockMutator::lexicon().size())];
  return pool[rng.below(pool.size())];
}

std::vector<std::size_t> group_indices(const std::vector<TemplateSegment>& segs, std::size_t min_options) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < segs.size(); ++i)
    if (segs[i].is_group() && segs[i].options.size() >= min_options) out.push_back(i);
  return out;
}

// Turns the first content word of the first literal into a one-option group.
bool open_group(std::vector<TemplateSegment>& segs) {
  for (std::size_t i = 0; i < segs.size(); ++i) {
    if (segs[i].is_group()) continue;
    const std::string& lit = segs[i].literal;
    std::size_t pos = 0;
    while (pos < lit.size()) {
      while (pos < lit.size() && !std::isalnum(static_cast<unsigned char>(lit[pos]))) ++pos;
      std::size_t end = pos;
      while (end < lit.size() && !std::isspace(static_cast<unsigned char>(lit[end])) && lit[end] != ',') ++end;
      if (end == pos) break;
      std::string word = lit.substr(pos, end - pos);
      std::string lower;
      for (char c : word) lower.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
      if (!is_stopword(lower)) {
        std::vector<TemplateSegment> repl;
        if (pos > 0) repl.push_back({lit.substr(0, pos), {}});
        repl.push_back({{}, {word}});
        if (end < lit.size()) repl.push_back({lit.substr(end), {}});
        segs.erase(segs.begin() + static_cast<std::ptrdiff_t>(i));
        segs.insert(segs.begin() + static_cast<std::ptrdiff_t>(i), repl.begin(), repl.end());
        return true;
      }
      pos = end;
    }
  }
  return false;
}

}  // namespace

std::string MockMutator::apply(std::string_view text, Rule rule, Rng& rng) {
  auto segs = parse_template(text);
  switch (rule) {
    case Rule::swap_option: {
      const auto groups = group_indices(segs, 1);
      if (groups.empty()) return apply(text, Rule::add_option, rng);
      auto& g = segs[groups[rng.below(groups.size())]].options;
      g[rng.below(g.size())] = fresh_word(g, rng);
      break;
    }
    case Rule::add_option: {
      auto groups = group_indices(segs, 1);
      if (groups.empty()) {
        if (!open_group(segs)) {
          segs.insert(segs.begin(), TemplateSegment{" ", {}});
          segs.insert(segs.begin(), TemplateSegment{{}, {"photo"}});
        }
        groups = group_indices(segs, 1);
      }
      auto& g = segs[groups[rng.below(groups.size())]].options;
      g.push_back(fresh_word(g, rng));
      break;
    }
    case Rule::drop_option: {
      const auto groups = group_indices(segs, 2);
      if (groups.empty()) return apply(text, Rule::add_option, rng);
      auto& g = segs[groups[rng.below(groups.size())]].options;
      g.erase(g.begin() + static_cast<std::ptrdiff_t>(rng.below(g.size())));
      break;
    }
    case Rule::reword_scene: {
      std::string flat = render_template(segs);
      const std::string scene = scenes()[rng.below(scenes().size())];
      const auto comma = flat.rfind(", ");
      const auto bracket = flat.rfind(']');
      if (comma != std::string::npos && (bracket == std::string::npos || comma > bracket))
        flat = flat.substr(0, comma);
      return flat + ", " + scene;
    }
  }
  return render_template(segs);
}

std::string MockMutator::mutate(const PromptTemplate& prompt, std::uint64_t seed) {
  Rng rng(splitmix64(hash_string(prompt.text, seed_) ^ splitmix64(seed)));
  const auto rule = static_cast<Rule>(rng.below(4));
  return apply(prompt.text, rule, rng);
}

std::string MockNamer::name(const std::vector<std::string>& members) {
  if (members.empty()) throw Error(ErrorCode::ProviderError, "no members to name");
  if (members.size() == 1) return members.front();
  return members[0] + "/" + members[1];
}

struct HttpProvider::Impl {
  httplib::Client client;
  std::atomic<std::uint64_t> counter{0};
  explicit Impl(const std::string& endpoint) : client(endpoint) {}
};

HttpProvider::HttpProvider(ProviderConfig config) : config_(std::move(config)) {
  config_.kind = ProviderConfig::Kind::http;
  config_.validate();
  impl_ = std::make_unique<Impl>(*config_.endpoint);
  const auto usec = std::chrono::microseconds(static_cast<long long>(config_.timeout_seconds * 1e6));
  impl_->client.set_connection_timeout(usec);
  impl_->client.set_read_timeout(usec);
  impl_->client.set_write_timeout(usec);
}

HttpProvider::~HttpProvider() = default;

namespace {

json call(httplib::Client& client, std::atomic<std::uint64_t>& counter, const ProviderConfig& cfg,
          const std::string& capability, const json& payload) {
  std::string last;
  for (int attempt = 0; attempt <= cfg.retry; ++attempt) {
    const json body = {{"capability", capability},
                       {"payload", payload},
                       {"request_id", capability + "-" + std::to_string(counter++)}};
    auto res = client.Post("/v1/" + capability, body.dump(), "application/json");
    if (!res) {
      last = httplib::to_string(res.error());
      continue;
    }
    if (res->status != 200)
      throw Error(ErrorCode::BadResponse, capability + ": HTTP " + std::to_string(res->status));
    json reply = json::parse(res->body, nullptr, false);
    if (reply.is_discarded() || !reply.is_object() || !reply.contains("payload"))
      throw Error(ErrorCode::BadResponse, capability + ": reply is not an envelope with a payload");
    return reply["payload"];
  }
  throw Error(ErrorCode::ProviderUnreachable, capability + " at " + *cfg.endpoint + ": " + last);
}

Matrix read_embeddings(const json& payload, std::size_t rows, int dimension, const std::string& what) {
  if (!payload.contains("embeddings") || !payload["embeddings"].is_array())
    throw Error(ErrorCode::BadResponse, what + ": missing 'embeddings'");
  const auto& arr = payload["embeddings"];
  if (arr.size() != rows)
    throw Error(ErrorCode::BadResponse, what + ": expected " + std::to_string(rows) + " vectors, got " +
                                            std::to_string(arr.size()));
  Matrix out(static_cast<Eigen::Index>(rows), dimension);
  for (std::size_t i = 0; i < rows; ++i) {
    const auto& v = arr[i];
    if (!v.is_array() || v.size() != static_cast<std::size_t>(dimension))
      throw Error(ErrorCode::BadResponse, what + ": expected dimension " + std::to_string(dimension) +
                                              ", actual " + std::to_string(v.is_array() ? v.size() : 0));
    for (int c = 0; c < dimension; ++c) {
      if (!v[c].is_number()) throw Error(ErrorCode::BadResponse, what + ": non-numeric entry");
      out(static_cast<Eigen::Index>(i), c) = v[c].get<double>();
    }
  }
  return out;
}

}  // namespace

Matrix HttpProvider::embed(const std::vector<std::string>& inputs) {
  if (inputs.empty()) throw Error(ErrorCode::EmptySet, "embed called with no inputs");
  const json payload = call(impl_->client, impl_->counter, config_, "embed", {{"inputs", inputs}});
  return read_embeddings(payload, inputs.size(), config_.dimension, "embed");
}

Matrix HttpProvider::generate(const PromptTemplate& prompt, std::size_t count, std::uint64_t seed) {
  if (count == 0) return Matrix(0, config_.dimension);
  const json payload = call(impl_->client, impl_->counter, config_, "generate",
                            {{"template", prompt.text}, {"count", count}, {"seed", seed}});
  return read_embeddings(payload, count, config_.dimension, "generate");
}

std::string HttpProvider::mutate(const PromptTemplate& prompt, std::uint64_t seed) {
  std::string last;
  for (int attempt = 0; attempt <= config_.retry; ++attempt) {
    const json payload = call(impl_->client, impl_->counter, config_, "mutate",
                              {{"template", prompt.text}, {"seed", seed + static_cast<std::uint64_t>(attempt)}});
    if (!payload.contains("template") || !payload["template"].is_string())
      throw Error(ErrorCode::BadResponse, "mutate: missing 'template'");
    last = payload["template"].get<std::string>();
    if (is_valid_template(last)) return last;
  }
  throw Error(ErrorCode::InvalidTemplateFromProvider, "mutate returned an invalid template: " + last);
}

std::string HttpProvider::name(const std::vector<std::string>& members) {
  const json payload = call(impl_->client, impl_->counter, config_, "name", {{"members", members}});
  if (!payload.contains("name") || !payload["name"].is_string())
    throw Error(ErrorCode::BadResponse, "name: missing 'name'");
  return payload["name"].get<std::string>();
}

Providers make_providers(const ProviderConfig& config) {
  config.validate();
  if (config.kind == ProviderConfig::Kind::http) {
    auto http = std::make_shared<HttpProvider>(config);
    return {http, http, http, http};
  }
  const auto seed = *config.seed;
  return {std::make_shared<MockEmbedder>(config.dimension, seed),
          std::make_shared<MockGenerator>(config.dimension, seed), std::make_shared<MockMutator>(seed),
          std::make_shared<MockNamer>()};
}

}  // namespace expander
