#include "expander/service.hpp"

#include "expander/synthetic.hpp"

#include <httplib.h>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

namespace expander {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Configuration

namespace {

template <typename T>
void take(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

std::string_view to_string(Objective o) {
  switch (o) {
    case Objective::contrastive: return "contrastive";
    case Objective::image_only: return "image_only";
    case Objective::order_loss: return "order_loss";
  }
  return "contrastive";
}

Objective parse_objective(const std::string& s) {
  if (s == "contrastive") return Objective::contrastive;
  if (s == "image_only") return Objective::image_only;
  if (s == "order_loss") return Objective::order_loss;
  throw Error(ErrorCode::BadConfig, "unknown objective '" + s + "'");
}

}  // namespace

json to_json(const SessionConfig& c) {
  const auto& p = c.projection;
  json j;
  j["projection"] = {{"epochs", p.epochs},
                     {"batch_size", p.batch_size},
                     {"tau", p.tau},
                     {"k", p.k},
                     {"negatives", p.negatives},
                     {"lr", p.lr},
                     {"seed", p.seed},
                     {"alpha", p.alpha},
                     {"hidden", p.network.hidden},
                     {"activation", p.network.activation == Activation::relu ? "relu" : "tanh"},
                     {"objective", std::string(to_string(p.objective))},
                     {"similarity", p.similarity == Similarity::cosine ? "cosine" : "cauchy"}};
  if (p.fixed_weights)
    j["projection"]["fixed_weights"] = {p.fixed_weights->image_label, p.fixed_weights->label_label};
  j["refine"] = {{"proxies", c.refine.proxies},
                 {"epsilon", c.refine.epsilon},
                 {"max_iter", c.refine.max_iter},
                 {"seed", c.refine.seed},
                 {"tau_c", c.refine.tau_c}};
  j["providers"] = {{"kind", c.providers.kind == ProviderConfig::Kind::mock ? "mock" : "http"},
                    {"timeout", c.providers.timeout_seconds},
                    {"retry", c.providers.retry},
                    {"dimension", c.providers.dimension}};
  if (c.providers.endpoint) j["providers"]["endpoint"] = *c.providers.endpoint;
  if (c.providers.seed) j["providers"]["seed"] = *c.providers.seed;
  j["generation_count"] = c.generation_count;
  j["tags_per_image"] = c.tags_per_image;
  j["tau_c"] = c.tau_c;
  j["default_budget"] = c.default_budget;
  return j;
}

SessionConfig session_config_from_json(const json& j, SessionConfig c) {
  try {
    if (!j.is_object()) throw Error(ErrorCode::BadConfig, "config must be an object");
    if (j.contains("projection")) {
      const auto& p = j["projection"];
      auto& o = c.projection;
      take(p, "epochs", o.epochs);
      take(p, "batch_size", o.batch_size);
      take(p, "tau", o.tau);
      take(p, "k", o.k);
      take(p, "negatives", o.negatives);
      take(p, "lr", o.lr);
      take(p, "seed", o.seed);
      take(p, "alpha", o.alpha);
      take(p, "hidden", o.network.hidden);
      if (p.contains("activation")) {
        const auto a = p["activation"].get<std::string>();
        if (a != "relu" && a != "tanh") throw Error(ErrorCode::BadConfig, "activation must be relu or tanh");
        o.network.activation = a == "relu" ? Activation::relu : Activation::tanh;
      }
      if (p.contains("objective")) o.objective = parse_objective(p["objective"].get<std::string>());
      if (p.contains("similarity")) {
        const auto s = p["similarity"].get<std::string>();
        if (s != "cosine" && s != "cauchy") throw Error(ErrorCode::BadConfig, "similarity must be cosine or cauchy");
        o.similarity = s == "cosine" ? Similarity::cosine : Similarity::cauchy;
      }
      if (p.contains("fixed_weights")) {
        const auto w = p["fixed_weights"].get<std::vector<double>>();
        if (w.size() != 2) throw Error(ErrorCode::BadConfig, "fixed_weights needs two values");
        o.fixed_weights = TaskWeights{w[0], w[1]};
      }
    }
    if (j.contains("refine")) {
      const auto& r = j["refine"];
      take(r, "proxies", c.refine.proxies);
      take(r, "epsilon", c.refine.epsilon);
      take(r, "max_iter", c.refine.max_iter);
      take(r, "seed", c.refine.seed);
      take(r, "tau_c", c.refine.tau_c);
    }
    if (j.contains("providers")) {
      const auto& p = j["providers"];
      if (p.contains("kind")) {
        const auto k = p["kind"].get<std::string>();
        if (k != "mock" && k != "http") throw Error(ErrorCode::BadConfig, "provider kind must be mock or http");
        c.providers.kind = k == "mock" ? ProviderConfig::Kind::mock : ProviderConfig::Kind::http;
      }
      if (p.contains("endpoint")) c.providers.endpoint = p["endpoint"].get<std::string>();
      if (p.contains("seed")) c.providers.seed = p["seed"].get<std::uint64_t>();
      take(p, "timeout", c.providers.timeout_seconds);
      take(p, "retry", c.providers.retry);
      take(p, "dimension", c.providers.dimension);
    }
    take(j, "generation_count", c.generation_count);
    take(j, "tags_per_image", c.tags_per_image);
    take(j, "tau_c", c.tau_c);
    take(j, "default_budget", c.default_budget);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::BadConfig, e.what());
  }
  return c;
}

std::string_view to_string(JobState::Status status) {
  switch (status) {
    case JobState::Status::running: return "running";
    case JobState::Status::done: return "done";
    case JobState::Status::failed: return "failed";
  }
  return "running";
}

// ---------------------------------------------------------------------------
// Record serialisation for the event log

namespace {

json vector_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Vector json_vector(const json& j) {
  const auto values = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(values.data(), static_cast<Eigen::Index>(values.size()));
}

json image_record_json(const ImageRecord& img) {
  json j = {{"id", img.id},
            {"class", img.class_name},
            {"kind", std::string(to_string(img.kind))},
            {"iteration", img.iteration},
            {"embedding", vector_json(img.embedding)}};
  if (img.prompt_id) j["prompt_id"] = *img.prompt_id;
  if (img.prediction) j["prediction"] = vector_json(*img.prediction);
  return j;
}

ImageRecord image_record_from(const json& j) {
  ImageRecord img;
  img.id = j.at("id").get<std::string>();
  img.class_name = j.at("class").get<std::string>();
  img.kind = j.at("kind").get<std::string>() == "generated" ? ImageKind::generated : ImageKind::original;
  img.iteration = j.at("iteration").get<int>();
  img.embedding = json_vector(j.at("embedding"));
  if (j.contains("prompt_id")) img.prompt_id = j["prompt_id"].get<std::string>();
  if (j.contains("prediction")) img.prediction = json_vector(j["prediction"]);
  return img;
}

json action_json(const FeedbackAction& a) {
  return {{"kind", std::string(to_string(a.kind))}, {"class", a.class_name}, {"image_ids", a.image_ids}};
}

std::string padded(std::size_t n, int width) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%0*zu", width, n);
  return buf;
}

// Re-validates the corpus with zero-shot predictions for images lacking one.
Corpus with_predictions(const Corpus& corpus, const Matrix& class_embeddings, double tau) {
  const bool complete = std::all_of(corpus.images().begin(), corpus.images().end(),
                                    [](const ImageRecord& r) { return r.prediction.has_value(); });
  if (complete) return corpus;
  std::vector<ImageRecord> images = corpus.images();
  for (auto& img : images)
    if (!img.prediction) img.prediction = zero_shot(img.embedding, class_embeddings, tau);
  std::vector<EdgeSpec> edges;
  for (const auto& e : corpus.edges())
    edges.push_back({corpus.images()[e.image].id, corpus.labels()[e.label].id, e.weight});
  return Corpus::build(corpus.classes(), corpus.dimension(), std::move(images), corpus.labels(), edges);
}

std::shared_ptr<const LabelTree> make_tree(const Corpus& corpus, NamingProvider& namer) {
  auto tree = std::make_shared<LabelTree>(build_hierarchy(corpus));
  name_nodes(*tree, corpus, namer);
  return tree;
}

Error tagged(const Error& e, std::string_view stage) {
  return Error(e.code(), std::string(stage) + ": " + e.detail());
}

}  // namespace

// ---------------------------------------------------------------------------
// Session

Session::Session(std::string id, const Corpus& input, SessionConfig config, Providers providers)
    : id_(std::move(id)), config_(std::move(config)), providers_(std::move(providers)) {
  auto snap = std::make_shared<Snapshot>();
  std::shared_ptr<const Corpus> corpus;
  try {
    class_embeddings_ = providers_.embedder->embed(input.classes());
    corpus = std::make_shared<const Corpus>(with_predictions(input, class_embeddings_, config_.tau_c));
  } catch (const Error& e) {
    throw tagged(e, "ingest");
  }
  try {
    auto trained = train(*corpus, config_.projection);
    network_ = std::move(trained.network);
    snap->layout = std::make_shared<const Layout>(std::move(trained.layout));
  } catch (const Error& e) {
    throw tagged(e, "train");
  }
  try {
    snap->tree = make_tree(*corpus, *providers_.namer);
    snap->timeline.append(baseline_snapshot(*corpus));
    for (int it = 1; it <= corpus->max_iteration(); ++it) snap->timeline.append(metric_snapshot(*corpus, it));
  } catch (const Error& e) {
    throw tagged(e, "snapshot");
  }
  snap->corpus = corpus;
  for (const auto& cls : corpus->classes()) {
    PromptState ps;
    ps.current = {"prompt-" + cls, cls, "a [photo | picture] of a " + cls, 1, std::nullopt};
    ps.accepted_versions = {1};
    snap->prompts.emplace(ps.current.id, std::move(ps));
  }
  snapshot_ = std::move(snap);

  std::ostringstream text;
  write_corpus(text, input);
  record({{"type", "create"}, {"corpus", text.str()}, {"config", to_json(config_)}});
}

Session::~Session() {
  for (auto& t : workers_)
    if (t.joinable()) t.join();
}

std::shared_ptr<const Snapshot> Session::snapshot() const {
  std::lock_guard lock(snap_mutex_);
  return snapshot_;
}

void Session::publish(std::shared_ptr<const Snapshot> next) {
  std::lock_guard lock(snap_mutex_);
  snapshot_ = std::move(next);
}

void Session::record(json body) {
  std::lock_guard lock(event_mutex_);
  events_.push_back({events_.size() + 1, std::move(body)});
}

std::vector<Event> Session::events() const {
  std::lock_guard lock(event_mutex_);
  return events_;
}

std::string Session::submit_feedback(const FeedbackAction& action) {
  const auto snap = snapshot();
  validate_feedback(action, *snap->corpus);
  const PromptState* ps = nullptr;
  for (const auto& [pid, state] : snap->prompts)
    if (state.current.class_name == action.class_name) {
      ps = &state;
      break;
    }
  if (!ps) throw Error(ErrorCode::UnknownPrompt, "no prompt for class '" + action.class_name + "'");

  std::string job_id;
  {
    std::lock_guard lock(job_mutex_);
    for (const auto& [jid, job] : jobs_)
      if (job.class_name == action.class_name && job.status == JobState::Status::running)
        throw Error(ErrorCode::ConflictingJob, "class '" + action.class_name + "' is already evolving in " + jid);
    job_id = "job-" + std::to_string(next_job_++);
    JobState job;
    job.id = job_id;
    job.class_name = action.class_name;
    job.prompt_id = ps->current.id;
    job.base_version = ps->current.version;
    jobs_.emplace(job_id, std::move(job));
    record({{"type", "feedback"}, {"job", job_id}, {"prompt_id", ps->current.id}, {"action", action_json(action)}});
    workers_.emplace_back(&Session::run_job, this, job_id, action, ps->current, snap->corpus);
  }
  return job_id;
}

void Session::run_job(std::string job_id, FeedbackAction action, PromptTemplate prompt,
                      std::shared_ptr<const Corpus> corpus) {
  std::optional<EvolutionResult> result;
  std::string error;
  try {
    result = evolve(prompt, action, *corpus, class_embeddings_, *providers_.generator, *providers_.mutator,
                    config_.refine);
    if (result->trace.provider_failed) error = result->trace.error;
  } catch (const std::exception& e) {
    error = e.what();
  }
  bool attached = false;
  if (result && !result->trace.provider_failed && result->prompt.text != prompt.text) {
    try {
      attach_recommendation(job_id, prompt.id, prompt.version, result->prompt.text);
      attached = true;
    } catch (const Error&) {
      // The prompt was edited or removed while the job ran.
    }
  }
  {
    std::lock_guard lock(job_mutex_);
    auto& job = jobs_.at(job_id);
    job.result = std::move(result);
    job.recommendation_attached = attached;
    job.error = error;
    job.status = error.empty() ? JobState::Status::done : JobState::Status::failed;
  }
  job_cv_.notify_all();
}

void Session::attach_recommendation(const std::string& job_id, const std::string& prompt_id, int base_version,
                                    const std::optional<std::string>& text) {
  std::lock_guard write(write_mutex_);
  auto next = std::make_shared<Snapshot>(*snapshot());
  auto it = next->prompts.find(prompt_id);
  if (it == next->prompts.end()) throw Error(ErrorCode::UnknownPrompt, prompt_id);
  if (it->second.current.version != base_version)
    throw Error(ErrorCode::ConflictingJob, prompt_id + " changed while " + job_id + " ran");
  if (!text) return;
  it->second.pending = it->second.current.derived(*text);
  it->second.pending_job = job_id;
  ++next->revision;
  record({{"type", "recommendation"},
          {"job", job_id},
          {"prompt_id", prompt_id},
          {"base_version", base_version},
          {"template", *text}});
  publish(std::move(next));
}

JobState Session::job(const std::string& job_id) const {
  std::lock_guard lock(job_mutex_);
  auto it = jobs_.find(job_id);
  if (it == jobs_.end()) throw Error(ErrorCode::UnknownJob, job_id);
  return it->second;
}

JobState Session::wait(const std::string& job_id) const {
  std::unique_lock lock(job_mutex_);
  auto it = jobs_.find(job_id);
  if (it == jobs_.end()) throw Error(ErrorCode::UnknownJob, job_id);
  job_cv_.wait(lock, [&] { return it->second.status != JobState::Status::running; });
  return it->second;
}

Session::Generation Session::generate_round(const Snapshot& snap, const PromptTemplate& prompt) {
  const Corpus& corpus = *snap.corpus;
  const int iteration = corpus.max_iteration() + 1;
  const Matrix emb = providers_.generator->generate(prompt, config_.generation_count,
                                                    splitmix64(config_.refine.seed ^ snap.corpus_version));
  if (emb.cols() != corpus.dimension())
    throw Error(ErrorCode::BadResponse, "generated dimension " + std::to_string(emb.cols()) + ", expected " +
                                            std::to_string(corpus.dimension()));
  const Matrix labels = normalized_rows(corpus.label_embeddings());
  Generation gen;
  for (Eigen::Index r = 0; r < emb.rows(); ++r) {
    ImageRecord img;
    img.id = "gen-" + padded(static_cast<std::size_t>(iteration), 3) + "-" + prompt.id + "-" +
             padded(static_cast<std::size_t>(r), 3);
    img.class_name = prompt.class_name;
    img.kind = ImageKind::generated;
    img.iteration = iteration;
    img.prompt_id = prompt.id;
    img.embedding = emb.row(r).transpose();
    img.prediction = zero_shot(img.embedding, class_embeddings_, config_.tau_c);
    // Zero-shot tagging: the labels closest in embedding space.
    const Vector sims = labels * img.embedding.normalized();
    std::vector<std::size_t> order(static_cast<std::size_t>(sims.size()));
    std::iota(order.begin(), order.end(), std::size_t{0});
    const std::size_t tags = std::min(config_.tags_per_image, order.size());
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(tags), order.end(),
                      [&](std::size_t a, std::size_t b) {
                        return sims[static_cast<Eigen::Index>(a)] != sims[static_cast<Eigen::Index>(b)]
                                   ? sims[static_cast<Eigen::Index>(a)] > sims[static_cast<Eigen::Index>(b)]
                                   : a < b;
                      });
    for (std::size_t t = 0; t < tags; ++t) gen.edges.push_back({img.id, corpus.labels()[order[t]].id, std::nullopt});
    gen.images.push_back(std::move(img));
  }
  return gen;
}

std::shared_ptr<Snapshot> Session::with_generation(const Snapshot& snap, const std::string& prompt_id,
                                                   const Generation& gen) {
  auto next = std::make_shared<Snapshot>(snap);
  auto corpus = std::make_shared<const Corpus>(snap.corpus->with_additions(gen.images, gen.edges));
  next->layout = std::make_shared<const Layout>(project(network_, *corpus));
  next->tree = make_tree(*corpus, *providers_.namer);
  next->timeline.append(metric_snapshot(*corpus, corpus->max_iteration()));
  next->corpus = std::move(corpus);
  auto& ps = next->prompts.at(prompt_id);
  ps.current = *ps.pending;
  ps.pending.reset();
  ps.pending_job.reset();
  ps.accepted_versions.push_back(ps.current.version);
  ++next->corpus_version;
  ++next->revision;
  return next;
}

namespace {

PromptState& prompt_in(Snapshot& snap, const std::string& prompt_id) {
  auto it = snap.prompts.find(prompt_id);
  if (it == snap.prompts.end()) throw Error(ErrorCode::UnknownPrompt, prompt_id);
  return it->second;
}

}  // namespace

std::uint64_t Session::accept(const std::string& prompt_id) {
  std::lock_guard write(write_mutex_);
  const auto snap = snapshot();
  auto probe = std::make_shared<Snapshot>(*snap);
  const auto& ps = prompt_in(*probe, prompt_id);
  if (!ps.pending) throw Error(ErrorCode::NoPendingPrompt, prompt_id);
  const Generation gen = generate_round(*snap, *ps.pending);
  auto next = with_generation(*snap, prompt_id, gen);
  json images = json::array(), edges = json::array();
  for (const auto& img : gen.images) images.push_back(image_record_json(img));
  for (const auto& e : gen.edges) edges.push_back({{"image", e.image_id}, {"label", e.label_id}});
  record({{"type", "accept"}, {"prompt_id", prompt_id}, {"images", images}, {"edges", edges}});
  const auto version = next->corpus_version;
  publish(std::move(next));
  return version;
}

void Session::reject(const std::string& prompt_id) {
  std::lock_guard write(write_mutex_);
  auto next = std::make_shared<Snapshot>(*snapshot());
  auto& ps = prompt_in(*next, prompt_id);
  if (!ps.pending) throw Error(ErrorCode::NoPendingPrompt, prompt_id);
  ps.pending.reset();
  ps.pending_job.reset();
  ++next->revision;
  record({{"type", "reject"}, {"prompt_id", prompt_id}});
  publish(std::move(next));
}

PromptTemplate Session::edit(const std::string& prompt_id, const std::string& text) {
  parse_template(text);
  std::lock_guard write(write_mutex_);
  auto next = std::make_shared<Snapshot>(*snapshot());
  auto& ps = prompt_in(*next, prompt_id);
  ps.current = ps.current.derived(text);
  ps.pending.reset();
  ps.pending_job.reset();
  ps.accepted_versions.push_back(ps.current.version);
  ++next->revision;
  const PromptTemplate out = ps.current;
  record({{"type", "edit"}, {"prompt_id", prompt_id}, {"template", text}});
  publish(std::move(next));
  return out;
}

void Session::remove_prompt(const std::string& prompt_id) {
  std::lock_guard write(write_mutex_);
  auto next = std::make_shared<Snapshot>(*snapshot());
  prompt_in(*next, prompt_id);
  next->prompts.erase(prompt_id);
  ++next->revision;
  record({{"type", "delete"}, {"prompt_id", prompt_id}});
  publish(std::move(next));
}

void Session::apply(const Event& event) {
  const auto& b = event.body;
  const auto type = b.at("type").get<std::string>();
  if (type == "create") throw Error(ErrorCode::BadConfig, "create must be the first event");
  if (type == "feedback") {
    record(b);
    return;
  }
  const auto pid = b.at("prompt_id").get<std::string>();
  if (type == "recommendation") {
    attach_recommendation(b.at("job").get<std::string>(), pid, b.at("base_version").get<int>(),
                          b.at("template").get<std::string>());
  } else if (type == "accept") {
    std::lock_guard write(write_mutex_);
    Generation gen;
    for (const auto& img : b.at("images")) gen.images.push_back(image_record_from(img));
    for (const auto& e : b.at("edges"))
      gen.edges.push_back({e.at("image").get<std::string>(), e.at("label").get<std::string>(), std::nullopt});
    const auto snap = snapshot();
    if (!snap->prompts.count(pid) || !snap->prompts.at(pid).pending)
      throw Error(ErrorCode::NoPendingPrompt, pid);
    publish(with_generation(*snap, pid, gen));
    record(b);
  } else if (type == "reject") {
    reject(pid);
  } else if (type == "edit") {
    edit(pid, b.at("template").get<std::string>());
  } else if (type == "delete") {
    remove_prompt(pid);
  } else {
    throw Error(ErrorCode::BadConfig, "unknown event type '" + type + "'");
  }
}

// ---------------------------------------------------------------------------
// SessionManager

SessionManager::SessionManager(SessionConfig defaults, ProviderFactory factory)
    : defaults_(std::move(defaults)), factory_(std::move(factory)) {}

std::string SessionManager::next_id() {
  return "session-" + std::to_string(++counter_);
}

std::string SessionManager::create(const Corpus& corpus, const std::optional<SessionConfig>& config) {
  SessionConfig cfg = config.value_or(defaults_);
  cfg.providers.dimension = corpus.dimension();
  Providers providers;
  try {
    providers = factory_(cfg.providers);
  } catch (const Error& e) {
    throw tagged(e, "providers");
  }
  std::string id;
  {
    std::unique_lock lock(mutex_);
    id = next_id();
  }
  auto session = std::make_shared<Session>(id, corpus, std::move(cfg), std::move(providers));
  std::unique_lock lock(mutex_);
  sessions_.emplace(id, std::move(session));
  return id;
}

std::string SessionManager::create_from_file(const std::string& path, const std::optional<SessionConfig>& config) {
  Corpus corpus;
  try {
    corpus = load_corpus(path);
  } catch (const Error& e) {
    throw tagged(e, "ingest");
  }
  return create(corpus, config);
}

std::shared_ptr<Session> SessionManager::get(const std::string& id) const {
  std::shared_lock lock(mutex_);
  auto it = sessions_.find(id);
  if (it == sessions_.end()) throw Error(ErrorCode::UnknownSession, id);
  return it->second;
}

std::vector<std::string> SessionManager::ids() const {
  std::shared_lock lock(mutex_);
  std::vector<std::string> out;
  for (const auto& [id, s] : sessions_) out.push_back(id);
  return out;
}

std::string SessionManager::replay(const std::vector<Event>& events) {
  if (events.empty() || events.front().body.value("type", "") != "create")
    throw Error(ErrorCode::BadConfig, "an event log starts with a create event");
  const auto& create_event = events.front().body;
  std::istringstream text(create_event.at("corpus").get<std::string>());
  const Corpus corpus = parse_corpus(text);
  const SessionConfig cfg = session_config_from_json(create_event.at("config"), defaults_);
  const std::string id = create(corpus, cfg);
  auto session = get(id);
  for (std::size_t i = 1; i < events.size(); ++i) session->apply(events[i]);
  return id;
}

void write_events(std::ostream& out, const std::vector<Event>& events) {
  for (const auto& e : events) {
    json line = e.body;
    line["seq"] = e.seq;
    out << line.dump() << '\n';
  }
}

std::vector<Event> read_events(std::istream& in) {
  std::vector<Event> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object() || !j.contains("type"))
      throw Error(ErrorCode::MalformedRecord, "event line " + std::to_string(n));
    Event e;
    e.seq = j.value("seq", static_cast<std::uint64_t>(out.size() + 1));
    j.erase("seq");
    e.body = std::move(j);
    out.push_back(std::move(e));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Payloads

json projection_json(const Snapshot& snap) {
  const Corpus& c = *snap.corpus;
  const Layout& l = *snap.layout;
  json images = json::array(), labels = json::array();
  for (std::size_t i = 0; i < c.images().size(); ++i) {
    const auto& img = c.images()[i];
    const auto r = static_cast<Eigen::Index>(i);
    images.push_back({{"id", img.id},
                      {"class", img.class_name},
                      {"kind", std::string(to_string(img.kind))},
                      {"iteration", img.iteration},
                      {"x", l.images()(r, 0)},
                      {"y", l.images()(r, 1)}});
  }
  for (std::size_t j = 0; j < c.labels().size(); ++j) {
    const auto r = static_cast<Eigen::Index>(j);
    labels.push_back({{"id", c.labels()[j].id},
                      {"text", c.labels()[j].text},
                      {"x", l.labels()(r, 0)},
                      {"y", l.labels()(r, 1)}});
  }
  return {{"corpus_version", snap.corpus_version}, {"images", images}, {"labels", labels}};
}

json treecut_json(const Snapshot& snap, const std::optional<std::string>& focus, std::size_t budget) {
  const LabelTree& tree = *snap.tree;
  const std::size_t f = focus ? tree.index(*focus) : tree.root();
  const TreeCut cut = tree_cut(tree, f, budget);
  const auto score = doi_all(tree, f);
  json nodes = json::array();
  for (std::size_t n : cut.nodes) {
    const auto& node = tree.node(n);
    const auto& l = *snap.layout;
    // Nodes are placed at the mean position of their member labels.
    Eigen::Vector2d pos = Eigen::Vector2d::Zero();
    for (const auto& m : node.members) {
      const auto j = snap.corpus->label_index(m);
      pos += l.labels().row(static_cast<Eigen::Index>(*j)).transpose();
    }
    pos /= static_cast<double>(node.members.size());
    nodes.push_back({{"id", node.id},
                     {"name", node.name},
                     {"placeholder_name", node.placeholder_name},
                     {"members", node.members},
                     {"original_count", node.original_count},
                     {"generated_count", node.generated_count},
                     {"doi", score[n]},
                     {"x", pos.x()},
                     {"y", pos.y()}});
  }
  return {{"corpus_version", snap.corpus_version},
          {"focus", tree.node(f).id},
          {"budget", budget},
          {"nodes", nodes}};
}

json metrics_json(const Snapshot& snap) {
  json points = json::array();
  for (const auto& p : snap.timeline.points())
    points.push_back({{"iteration", p.iteration},
                      {"informativeness", p.informativeness},
                      {"diversity", p.diversity},
                      {"distance", p.distance},
                      {"generated_count", p.generated_count},
                      {"distance_clamped", p.distance_clamped}});
  return {{"corpus_version", snap.corpus_version}, {"points", points}};
}

namespace {

json prompt_json(const PromptTemplate& p) {
  json j = {{"id", p.id}, {"class", p.class_name}, {"template", p.text}, {"version", p.version}};
  j["parent_version"] = p.parent_version ? json(*p.parent_version) : json(nullptr);
  return j;
}

}  // namespace

json prompts_json(const Snapshot& snap) {
  json list = json::array();
  for (const auto& [pid, ps] : snap.prompts) {
    json j = prompt_json(ps.current);
    j["pending"] = ps.pending ? prompt_json(*ps.pending) : json(nullptr);
    j["pending_job"] = ps.pending_job ? json(*ps.pending_job) : json(nullptr);
    j["accepted_versions"] = ps.accepted_versions;
    list.push_back(std::move(j));
  }
  return {{"corpus_version", snap.corpus_version}, {"revision", snap.revision}, {"prompts", list}};
}

json labels_json(const Snapshot& snap) {
  const Corpus& c = *snap.corpus;
  struct Row {
    std::size_t j;
    int orig, gen;
    double ratio;
  };
  std::vector<Row> rows;
  for (std::size_t j = 0; j < c.labels().size(); ++j) {
    int orig = 0, gen = 0;
    for (std::size_t i : c.images_of(j)) ++(c.images()[i].kind == ImageKind::original ? orig : gen);
    rows.push_back({j, orig, gen, static_cast<double>(gen) / (orig > 0 ? orig : 1)});
  }
  std::stable_sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) { return a.ratio > b.ratio; });
  json list = json::array();
  for (const auto& r : rows)
    list.push_back({{"id", c.labels()[r.j].id},
                    {"text", c.labels()[r.j].text},
                    {"original_count", r.orig},
                    {"generated_count", r.gen},
                    {"ratio", r.ratio}});
  return {{"corpus_version", snap.corpus_version}, {"labels", list}};
}

json images_json(const Snapshot& snap, const ImageFilter& f) {
  const Corpus& c = *snap.corpus;
  std::optional<std::size_t> label;
  if (f.label) {
    label = c.label_index(*f.label);
    for (std::size_t j = 0; !label && j < c.labels().size(); ++j)
      if (c.labels()[j].text == *f.label) label = j;
    if (!label) throw Error(ErrorCode::UnknownNode, "label " + *f.label);
  }
  json list = json::array();
  for (std::size_t i = 0; i < c.images().size(); ++i) {
    const auto& img = c.images()[i];
    if (f.class_name && img.class_name != *f.class_name) continue;
    if (f.kind && img.kind != *f.kind) continue;
    if (f.iteration && img.iteration != *f.iteration) continue;
    if (f.prompt_id && img.prompt_id != *f.prompt_id) continue;
    if (label && !std::binary_search(c.labels_of(i).begin(), c.labels_of(i).end(), *label)) continue;
    list.push_back({{"id", img.id},
                    {"class", img.class_name},
                    {"kind", std::string(to_string(img.kind))},
                    {"iteration", img.iteration}});
  }
  return {{"corpus_version", snap.corpus_version}, {"images", list}};
}

json image_json(const Snapshot& snap, const std::string& image_id) {
  const Corpus& c = *snap.corpus;
  const auto i = c.image_index(image_id);
  if (!i) throw Error(ErrorCode::UnknownImageIds, image_id);
  const auto& img = c.images()[*i];
  json labels = json::array();
  for (std::size_t j : c.labels_of(*i)) labels.push_back({{"id", c.labels()[j].id}, {"text", c.labels()[j].text}});
  const auto r = static_cast<Eigen::Index>(*i);
  json j = {{"corpus_version", snap.corpus_version},
            {"id", img.id},
            {"class", img.class_name},
            {"kind", std::string(to_string(img.kind))},
            {"iteration", img.iteration},
            {"labels", labels},
            {"x", snap.layout->images()(r, 0)},
            {"y", snap.layout->images()(r, 1)}};
  j["prompt_id"] = img.prompt_id ? json(*img.prompt_id) : json(nullptr);
  j["caption"] = img.caption ? json(*img.caption) : json(nullptr);
  j["image_path"] = img.image_path ? json(*img.image_path) : json(nullptr);
  j["prediction"] = img.prediction ? vector_json(*img.prediction) : json(nullptr);
  return j;
}

json job_json(const JobState& job) {
  json j = {{"id", job.id},
            {"class", job.class_name},
            {"prompt_id", job.prompt_id},
            {"status", std::string(to_string(job.status))},
            {"recommendation_attached", job.recommendation_attached}};
  if (!job.error.empty()) j["error"] = job.error;
  if (job.result) {
    std::ostringstream trace;
    write_trace_json(trace, *job.result);
    j["trace"] = json::parse(trace.str());
  }
  return j;
}

int http_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::UnknownSession:
    case ErrorCode::UnknownPrompt:
    case ErrorCode::UnknownJob:
    case ErrorCode::UnknownNode:
      return 404;
    case ErrorCode::ConflictingJob:
    case ErrorCode::NoPendingPrompt:
      return 409;
    case ErrorCode::ProviderError:
    case ErrorCode::ProviderUnreachable:
    case ErrorCode::BadResponse:
    case ErrorCode::InvalidTemplateFromProvider:
      return 502;
    default:
      return 422;
  }
}

json error_json(const Error& e) {
  return {{"code", std::string(to_string(e.code()))}, {"message", e.what()}, {"detail", e.detail()}};
}

// ---------------------------------------------------------------------------
// HTTP

struct Server::Impl {
  SessionManager& manager;
  httplib::Server server;
  std::thread thread;
  explicit Impl(SessionManager& m) : manager(m) {}
};

namespace {

void reply(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

template <typename F>
httplib::Server::Handler guarded(F f) {
  return [f](const httplib::Request& req, httplib::Response& res) {
    try {
      f(req, res);
    } catch (const Error& e) {
      reply(res, http_status(e.code()), error_json(e));
    } catch (const json::exception& e) {
      reply(res, 422, error_json(Error(ErrorCode::MalformedRecord, e.what())));
    } catch (const std::exception& e) {
      reply(res, 500, {{"code", "Internal"}, {"message", e.what()}, {"detail", ""}});
    }
  };
}

json body_of(const httplib::Request& req) {
  if (req.body.empty()) return json::object();
  json j = json::parse(req.body, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw Error(ErrorCode::MalformedRecord, "request body is not a JSON object");
  return j;
}

std::optional<std::string> param(const httplib::Request& req, const char* key) {
  if (!req.has_param(key)) return std::nullopt;
  return req.get_param_value(key);
}

int to_int(const std::string& s, const char* what) {
  try {
    std::size_t used = 0;
    const int v = std::stoi(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::logic_error&) {
    throw Error(ErrorCode::BadConfig, std::string(what) + " must be an integer, got '" + s + "'");
  }
}

}  // namespace

Server::Server(SessionManager& manager) : impl_(std::make_unique<Impl>(manager)) {
  auto& srv = impl_->server;
  auto& mgr = impl_->manager;
  const std::string sid = R"(/sessions/([^/]+))";

  srv.Post("/sessions", guarded([&mgr](const httplib::Request& req, httplib::Response& res) {
             const json body = body_of(req);
             std::optional<SessionConfig> cfg;
             if (body.contains("config")) cfg = session_config_from_json(body["config"], mgr.defaults());
             std::string id;
             if (body.contains("corpus")) {
               std::istringstream text(body["corpus"].get<std::string>());
               Corpus corpus;
               try {
                 corpus = parse_corpus(text);
               } catch (const Error& e) {
                 throw Error(e.code(), "ingest: " + e.detail());
               }
               id = mgr.create(corpus, cfg);
             } else if (body.contains("corpus_path")) {
               id = mgr.create_from_file(body["corpus_path"].get<std::string>(), cfg);
             } else {
               throw Error(ErrorCode::MalformedRecord, "body needs 'corpus' or 'corpus_path'");
             }
             reply(res, 200, {{"id", id}, {"corpus_version", mgr.get(id)->snapshot()->corpus_version}});
           }));

  srv.Get(sid, guarded([&mgr](const httplib::Request& req, httplib::Response& res) {
            const auto s = mgr.get(req.matches[1]);
            const auto snap = s->snapshot();
            reply(res, 200,
                  {{"id", s->id()},
                   {"corpus_version", snap->corpus_version},
                   {"revision", snap->revision},
                   {"images", snap->corpus->images().size()},
                   {"labels", snap->corpus->labels().size()}});
          }));
  srv.Get(sid + "/projection", guarded([&mgr](const httplib::Request& req, httplib::Response& res) {
            reply(res, 200, projection_json(*mgr.get(req.matches[1])->snapshot()));
          }));
  srv.Get(sid + "/tree", guarded([&mgr](const httplib::Request& req, httplib::Response& res) {
            const auto snap = mgr.get(req.matches[1])->snapshot();
            std::ostringstream out;
            write_tree_json(out, *snap->tree);
            reply(res, 200, {{"corpus_version", snap->corpus_version}, {"root", json::parse(out.str())}});
          }));
  srv.Get(sid + "/treecut", guarded([&mgr](const httplib::Request& req, httplib::Response& res) {
            const auto s = mgr.get(req.matches[1]);
            const auto budget_text = param(req, "budget");
            const int budget = budget_text ? to_int(*budget_text, "budget")
                                           : static_cast<int>(s->config().default_budget);
            if (budget < 1) throw Error(ErrorCode::BadConfig, "budget must be >= 1");
            reply(res, 200, treecut_json(*s->snapshot(), param(req, "focus"), static_cast<std::size_t>(budget)));
          }));
  srv.Get(sid + "/metrics", guarded([&mgr](const httplib::Request& req, httplib::Response& res) {
            reply(res, 200, metrics_json(*mgr.get(req.matches[1])->snapshot()));
          }));
  srv.Get(sid + "/prompts", guarded([&mgr](const httplib::Request& req, httplib::Response& res) {
            reply(res, 200, prompts_json(*mgr.get(req.matches[1])->snapshot()));
          }));
  srv.Get(sid + "/labels", guarded([&mgr](const httplib::Request& req, httplib::Response& res) {
            reply(res, 200, labels_json(*mgr.get(req.matches[1])->snapshot()));
          }));
  srv.Get(sid + "/images", guarded([&mgr](const httplib::Request& req, httplib::Response& res) {
            ImageFilter f;
            f.class_name = param(req, "class");
            f.label = param(req, "label");
            f.prompt_id = param(req, "prompt");
            if (auto it = param(req, "iteration")) f.iteration = to_int(*it, "iteration");
            if (auto k = param(req, "kind")) {
              if (*k == "original") f.kind = ImageKind::original;
              else if (*k == "generated") f.kind = ImageKind::generated;
              else throw Error(ErrorCode::BadConfig, "kind must be original or generated");
            }
            reply(res, 200, images_json(*mgr.get(req.matches[1])->snapshot(), f));
          }));
  srv.Get(sid + "/images/([^/]+)", guarded([&mgr](const httplib::Request& req, httplib::Response& res) {
            reply(res, 200, image_json(*mgr.get(req.matches[1])->snapshot(), req.matches[2]));
          }));
  srv.Get(sid + "/jobs/([^/]+)", guarded([&mgr](const httplib::Request& req, httplib::Response& res) {
            reply(res, 200, job_json(mgr.get(req.matches[1])->job(req.matches[2])));
          }));
  srv.Get(sid + "/events", guarded([&mgr](const httplib::Request& req, httplib::Response& res) {
            json list = json::array();
            for (const auto& e : mgr.get(req.matches[1])->events()) {
              json line = e.body;
              line["seq"] = e.seq;
              list.push_back(std::move(line));
            }
            reply(res, 200, {{"events", list}});
          }));
  srv.Post(sid + "/feedback", guarded([&mgr](const httplib::Request& req, httplib::Response& res) {
             const auto s = mgr.get(req.matches[1]);
             const json body = body_of(req);
             FeedbackAction action;
             action.kind = parse_feedback_kind(body.at("kind").get<std::string>());
             action.class_name = body.at("class").get<std::string>();
             action.image_ids = body.at("image_ids").get<std::vector<std::string>>();
             const std::string job = s->submit_feedback(action);
             reply(res, 202, {{"job_id", job}});
           }));
  srv.Post(sid + "/prompts/([^/]+)/accept", guarded([&mgr](const httplib::Request& req, httplib::Response& res) {
             const auto version = mgr.get(req.matches[1])->accept(req.matches[2]);
             reply(res, 200, {{"corpus_version", version}});
           }));
  srv.Post(sid + "/prompts/([^/]+)/reject", guarded([&mgr](const httplib::Request& req, httplib::Response& res) {
             mgr.get(req.matches[1])->reject(req.matches[2]);
             reply(res, 200, {{"rejected", std::string(req.matches[2])}});
           }));
  srv.Patch(sid + "/prompts/([^/]+)", guarded([&mgr](const httplib::Request& req, httplib::Response& res) {
              const json body = body_of(req);
              const auto p = mgr.get(req.matches[1])->edit(req.matches[2], body.at("template").get<std::string>());
              reply(res, 200, prompt_json(p));
            }));
  srv.Delete(sid + "/prompts/([^/]+)", guarded([&mgr](const httplib::Request& req, httplib::Response& res) {
               mgr.get(req.matches[1])->remove_prompt(req.matches[2]);
               reply(res, 200, {{"deleted", std::string(req.matches[2])}});
             }));
}

Server::~Server() { stop(); }

int Server::start(const std::string& host, int port) {
  auto& srv = impl_->server;
  const int bound = port == 0 ? srv.bind_to_any_port(host) : (srv.bind_to_port(host, port) ? port : -1);
  if (bound < 0) throw Error(ErrorCode::IoError, "cannot bind " + host + ":" + std::to_string(port));
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  return bound;
}

void Server::run(const std::string& host, int port) {
  if (!impl_->server.listen(host, port))
    throw Error(ErrorCode::IoError, "cannot listen on " + host + ":" + std::to_string(port));
}

void Server::stop() {
  if (!impl_) return;
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

}  // namespace expander
