#pragma once

#include "expander/common.hpp"
#include "expander/corpus.hpp"
#include "expander/hierarchy.hpp"
#include "expander/metrics.hpp"
#include "expander/projection.hpp"
#include "expander/prompt.hpp"
#include "expander/providers.hpp"
#include "expander/refine.hpp"

#include <json.hpp>

#include <condition_variable>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <thread>
#include <vector>

namespace expander {

struct SessionConfig {
  ProjectionConfig projection;
  RefineConfig refine;
  ProviderConfig providers;
  std::size_t generation_count = 8;  ///< images generated when a prompt is accepted
  std::size_t tags_per_image = 2;    ///< labels attached to each generated image
  double tau_c = 0.1;                ///< zero-shot temperature for predictions
  std::size_t default_budget = 12;   ///< tree-cut budget when none is given
};

nlohmann::json to_json(const SessionConfig& config);
/// Fields present in `j` override those of `base`. Throws BadConfig.
SessionConfig session_config_from_json(const nlohmann::json& j, SessionConfig base);

struct PromptState {
  PromptTemplate current;
  std::optional<PromptTemplate> pending;
  std::optional<std::string> pending_job;
  std::vector<int> accepted_versions;  ///< lineage of accepted versions
};

/// Immutable view of a session. Readers hold one of these for a whole
/// request, so no response mixes two corpus versions.
struct Snapshot {
  std::uint64_t corpus_version = 1;
  std::uint64_t revision = 1;  ///< bumps on any change, prompts included
  std::shared_ptr<const Corpus> corpus;
  std::shared_ptr<const Layout> layout;
  std::shared_ptr<const LabelTree> tree;
  MetricTimeline timeline;
  std::map<std::string, PromptState> prompts;
};

struct JobState {
  enum class Status { running, done, failed };
  std::string id;
  std::string class_name;
  std::string prompt_id;
  int base_version = 0;  ///< prompt version the evolution started from
  Status status = Status::running;
  std::optional<EvolutionResult> result;
  bool recommendation_attached = false;
  std::string error;
};
std::string_view to_string(JobState::Status status);

struct Event {
  std::uint64_t seq = 0;
  nlohmann::json body;  ///< {"type": ..., ...}
};

/// One exploration session: the corpus with its projection, hierarchy,
/// metric timeline and prompts. Writes are serialised; reads take a
/// snapshot and never block on writers.
class Session {
 public:
  Session(std::string id, const Corpus& corpus, SessionConfig config, Providers providers);
  ~Session();
  Session(const Session&) = delete;
  Session& operator=(const Session&) = delete;

  const std::string& id() const noexcept { return id_; }
  const SessionConfig& config() const noexcept { return config_; }
  std::shared_ptr<const Snapshot> snapshot() const;

  /// Starts an asynchronous evolution for the action's class. Throws
  /// UnknownImageIds, InvalidFeedback or ConflictingJob.
  std::string submit_feedback(const FeedbackAction& action);
  JobState job(const std::string& job_id) const;
  /// Blocks until the job leaves the running state.
  JobState wait(const std::string& job_id) const;

  /// Promotes the pending prompt, generates a new round of images from it
  /// and refreshes layout, tree and metrics. Returns the new corpus version.
  std::uint64_t accept(const std::string& prompt_id);
  void reject(const std::string& prompt_id);
  PromptTemplate edit(const std::string& prompt_id, const std::string& text);
  void remove_prompt(const std::string& prompt_id);

  std::vector<Event> events() const;
  /// Applies a recorded event without consulting providers. Used by replay.
  void apply(const Event& event);

 private:
  struct Generation {
    std::vector<ImageRecord> images;
    std::vector<EdgeSpec> edges;
  };

  void publish(std::shared_ptr<const Snapshot> next);
  void record(nlohmann::json body);
  Generation generate_round(const Snapshot& snap, const PromptTemplate& prompt);
  std::shared_ptr<Snapshot> with_generation(const Snapshot& snap, const std::string& prompt_id,
                                            const Generation& gen);
  void run_job(std::string job_id, FeedbackAction action, PromptTemplate prompt,
               std::shared_ptr<const Corpus> corpus);
  void attach_recommendation(const std::string& job_id, const std::string& prompt_id, int base_version,
                             const std::optional<std::string>& text);

  std::string id_;
  SessionConfig config_;
  Providers providers_;
  Network<double> network_;
  Matrix class_embeddings_;

  mutable std::mutex snap_mutex_;
  std::shared_ptr<const Snapshot> snapshot_;
  std::mutex write_mutex_;

  mutable std::mutex job_mutex_;
  mutable std::condition_variable job_cv_;
  std::map<std::string, JobState> jobs_;
  std::uint64_t next_job_ = 1;
  std::vector<std::thread> workers_;

  mutable std::mutex event_mutex_;
  std::vector<Event> events_;
};

/// Owns all sessions. Session creation trains the projection synchronously.
class SessionManager {
 public:
  using ProviderFactory = std::function<Providers(const ProviderConfig&)>;

  explicit SessionManager(SessionConfig defaults = {}, ProviderFactory factory = make_providers);

  /// Stage-tagged errors: the detail starts with "ingest:" or "train:".
  std::string create(const Corpus& corpus, const std::optional<SessionConfig>& config = std::nullopt);
  std::string create_from_file(const std::string& path, const std::optional<SessionConfig>& config = std::nullopt);
  std::shared_ptr<Session> get(const std::string& id) const;
  std::vector<std::string> ids() const;
  const SessionConfig& defaults() const noexcept { return defaults_; }

  /// Rebuilds a session from its event log.
  std::string replay(const std::vector<Event>& events);

 private:
  std::string next_id();

  SessionConfig defaults_;
  ProviderFactory factory_;
  mutable std::shared_mutex mutex_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  std::uint64_t counter_ = 0;
};

void write_events(std::ostream& out, const std::vector<Event>& events);
std::vector<Event> read_events(std::istream& in);

/// JSON payloads shared by the HTTP routes and the CLI.
nlohmann::json projection_json(const Snapshot& snap);
nlohmann::json treecut_json(const Snapshot& snap, const std::optional<std::string>& focus, std::size_t budget);
nlohmann::json metrics_json(const Snapshot& snap);
nlohmann::json prompts_json(const Snapshot& snap);
nlohmann::json labels_json(const Snapshot& snap);
struct ImageFilter {
  std::optional<std::string> class_name;
  std::optional<ImageKind> kind;
  std::optional<std::string> label;  ///< label id or text
  std::optional<int> iteration;
  std::optional<std::string> prompt_id;
};
nlohmann::json images_json(const Snapshot& snap, const ImageFilter& filter);
nlohmann::json image_json(const Snapshot& snap, const std::string& image_id);
nlohmann::json job_json(const JobState& job);

/// HTTP status for an engine error code.
int http_status(ErrorCode code);
nlohmann::json error_json(const Error& error);

/// REST front end over a SessionManager.
class Server {
 public:
  explicit Server(SessionManager& manager);
  ~Server();
  /// Binds and serves on a background thread; port 0 picks a free port.
  int start(const std::string& host = "127.0.0.1", int port = 0);
  /// Serves on the calling thread until stop().
  void run(const std::string& host, int port);
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace expander
