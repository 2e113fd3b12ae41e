// Command-line entry points: ingest, project, metrics, evaluate, theory,
// treecut, refine, serve and bench.

#include "expander/bench.hpp"
#include "expander/corpus.hpp"
#include "expander/evaluate.hpp"
#include "expander/hierarchy.hpp"
#include "expander/metrics.hpp"
#include "expander/projection.hpp"
#include "expander/providers.hpp"
#include "expander/refine.hpp"
#include "expander/service.hpp"
#include "expander/theory.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <csignal>
#include <fstream>
#include <iostream>
#include <map>

using namespace expander;
using json = nlohmann::json;

namespace {

std::string current_stage = "cli";

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path);
  return out;
}

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot read " + path);
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) throw Error(ErrorCode::MalformedRecord, path + " is not valid JSON");
  return j;
}

Layout load_layout(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot read " + path);
  return read_layout(in);
}

struct ProjectionFlags {
  int epochs = 200;
  std::size_t batch = 256;
  double tau = 0.1;
  std::size_t k = 15;
  std::size_t negatives = 5;
  double lr = 1e-3;
  double alpha = 0.5;
  std::string objective = "contrastive";
  std::string similarity = "cosine";

  void add(CLI::App* app) {
    app->add_option("--epochs", epochs, "Training epochs")->capture_default_str();
    app->add_option("--batch-size", batch, "Anchors per modality per step")->capture_default_str();
    app->add_option("--tau", tau, "Contrastive temperature")->capture_default_str();
    app->add_option("--knn", k, "Neighbours used for positive pairs")->capture_default_str();
    app->add_option("--negatives", negatives, "Image-label negatives per anchor")->capture_default_str();
    app->add_option("--lr", lr, "Adam learning rate")->capture_default_str();
    app->add_option("--alpha", alpha, "Loss-balancing exponent")->capture_default_str();
    app->add_option("--objective", objective, "contrastive | image_only | order_loss")
        ->check(CLI::IsMember({"contrastive", "image_only", "order_loss"}))
        ->capture_default_str();
    app->add_option("--similarity", similarity, "cosine | cauchy")
        ->check(CLI::IsMember({"cosine", "cauchy"}))
        ->capture_default_str();
  }

  ProjectionConfig config(std::uint64_t seed) const {
    ProjectionConfig c;
    c.epochs = epochs;
    c.batch_size = batch;
    c.tau = tau;
    c.k = k;
    c.negatives = negatives;
    c.lr = lr;
    c.alpha = alpha;
    c.seed = seed;
    c.objective = objective == "order_loss"   ? Objective::order_loss
                  : objective == "image_only" ? Objective::image_only
                                              : Objective::contrastive;
    c.similarity = similarity == "cauchy" ? Similarity::cauchy : Similarity::cosine;
    return c;
  }
};

struct ProviderFlags {
  std::string kind;
  std::string endpoint;
  double timeout = 0.0;
  int retry = -1;

  void add(CLI::App* app) {
    app->add_option("--provider", kind, "mock | http (default from EXPANDER_PROVIDER, else mock)")
        ->check(CLI::IsMember({"mock", "http"}));
    app->add_option("--endpoint", endpoint, "Provider base URL for http");
    app->add_option("--provider-timeout", timeout, "Seconds per provider request");
    app->add_option("--provider-retry", retry, "Retries per provider request");
  }

  ProviderConfig config(std::uint64_t seed, int dimension) const {
    ProviderConfig base;
    base.seed = seed;
    ProviderConfig c = ProviderConfig::from_env(base);
    if (!kind.empty()) c.kind = kind == "http" ? ProviderConfig::Kind::http : ProviderConfig::Kind::mock;
    if (!endpoint.empty()) c.endpoint = endpoint;
    if (timeout > 0.0) c.timeout_seconds = timeout;
    if (retry >= 0) c.retry = retry;
    c.dimension = dimension;
    return c;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Interactive dataset expansion engine"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_config("--config", "", "Flat config file; command-line flags take precedence");
  std::uint64_t seed = 0;
  app.add_option("--seed", seed, "Seed for every random choice")->capture_default_str();

  std::string corpus_path, out_path;

  // ingest
  auto* ingest = app.add_subcommand("ingest", "Validate a corpus and print a summary");
  ingest->add_option("--corpus", corpus_path, "Corpus JSONL")->required();
  ingest->add_option("--out", out_path, "Write the validated corpus (weights filled in)");

  // project
  ProjectionFlags proj_flags;
  std::string loss_path;
  auto* project_cmd = app.add_subcommand("project", "Train the joint image-label projection");
  project_cmd->add_option("--corpus", corpus_path, "Corpus JSONL")->required();
  project_cmd->add_option("--out", out_path, "Layout JSONL")->required();
  project_cmd->add_option("--loss-history", loss_path, "Per-epoch loss JSONL");
  proj_flags.add(project_cmd);

  // metrics
  std::string svg_path;
  double sigma = 0.0;
  auto* metrics_cmd = app.add_subcommand("metrics", "Informativeness, diversity and distance per iteration");
  metrics_cmd->add_option("--corpus", corpus_path, "Corpus JSONL")->required();
  metrics_cmd->add_option("--out", out_path, "Timeline JSONL");
  metrics_cmd->add_option("--svg", svg_path, "Line chart of the timeline");
  metrics_cmd->add_option("--sigma", sigma, "Kernel bandwidth (median heuristic when omitted)");

  // evaluate
  std::vector<std::string> layout_specs;
  std::size_t eval_k = 30;
  std::string table_path;
  auto* evaluate_cmd = app.add_subcommand("evaluate", "Compare layouts with T, C and IMS");
  evaluate_cmd->add_option("--corpus", corpus_path, "Corpus JSONL")->required();
  evaluate_cmd->add_option("--layout", layout_specs, "name=path, repeatable")->required();
  evaluate_cmd->add_option("-k,--k", eval_k, "Neighbourhood size")->capture_default_str();
  evaluate_cmd->add_option("--out", out_path, "Report JSON");

  // theory
  std::optional<std::uint64_t> bound_n;
  int permutation_n = 0, trials = 100;
  std::string construct_path;
  auto* theory_cmd = app.add_subcommand("theory", "Distance-order bound and constructions");
  theory_cmd->add_option("--bound", bound_n, "Print the order bound for n points");
  theory_cmd->add_option("--permutation", permutation_n, "Search layouts for the n-image permutation instance");
  theory_cmd->add_option("--trials", trials, "Restarts for --permutation")->capture_default_str();
  theory_cmd->add_option("--construct", construct_path, "Many-to-one corpus to lay out with zero order loss");
  theory_cmd->add_option("--out", out_path, "Layout JSONL for --construct");

  // treecut
  std::string focus;
  std::size_t budget = 12;
  std::string tree_path;
  bool raw_doi = false;
  auto* treecut_cmd = app.add_subcommand("treecut", "Label hierarchy and DOI tree cut");
  treecut_cmd->add_option("--corpus", corpus_path, "Corpus JSONL")->required();
  treecut_cmd->add_option("--focus", focus, "Focus node id (root when omitted)");
  treecut_cmd->add_option("--budget", budget, "Maximum nodes in the cut")->capture_default_str();
  treecut_cmd->add_option("--tree", tree_path, "Write the whole tree as nested JSON");
  treecut_cmd->add_flag("--raw-doi", raw_doi, "Do not rescale API before subtracting tree distance");

  // refine
  std::string feedback_path, prompt_path, prompt_text, trace_path;
  RefineConfig refine_cfg;
  ProviderFlags provider_flags;
  auto* refine_cmd = app.add_subcommand("refine", "Evolve a prompt from delete/add feedback");
  refine_cmd->add_option("--corpus", corpus_path, "Corpus JSONL")->required();
  refine_cmd->add_option("--feedback", feedback_path, "{kind, class, image_ids}")->required();
  auto* prompt_file_opt = refine_cmd->add_option("--prompt", prompt_path, "{id, class, template, version}");
  refine_cmd->add_option("--prompt-text", prompt_text, "Template text instead of a prompt file")
      ->excludes(prompt_file_opt);
  refine_cmd->add_option("--out", out_path, "New prompt JSON");
  refine_cmd->add_option("--trace", trace_path, "Evolution trace JSON");
  refine_cmd->add_option("--proxies", refine_cfg.proxies, "Proxy images per candidate")->capture_default_str();
  refine_cmd->add_option("--epsilon", refine_cfg.epsilon, "Relative-gain stop threshold")->capture_default_str();
  refine_cmd->add_option("--max-iter", refine_cfg.max_iter, "Mutation rounds")->capture_default_str();
  refine_cmd->add_option("--tau-c", refine_cfg.tau_c, "Confidence temperature")->capture_default_str();
  provider_flags.add(refine_cmd);

  // serve
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string session_config_path;
  ProjectionFlags serve_proj;
  serve_proj.epochs = 30;
  auto* serve_cmd = app.add_subcommand("serve", "Run the REST session service");
  serve_cmd->add_option("--host", host)->capture_default_str();
  serve_cmd->add_option("--port", port)->capture_default_str();
  serve_cmd->add_option("--corpus", corpus_path, "Open a session on this corpus at start-up");
  serve_cmd->add_option("--session-config", session_config_path, "Session defaults as JSON");
  serve_proj.add(serve_cmd);
  ProviderFlags serve_providers;
  serve_providers.add(serve_cmd);

  // bench
  int bench_epochs = 0;
  std::size_t bench_seeds = 1;
  auto* bench_cmd = app.add_subcommand("bench", "Synthetic many-to-many benchmark");
  bench_cmd->add_option("--epochs", bench_epochs, "Override training epochs");
  bench_cmd->add_option("--seeds", bench_seeds, "Consecutive seeds starting at --seed")->capture_default_str();
  bench_cmd->add_option("--out", out_path, "Report JSON (last seed)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*ingest) {
      current_stage = "ingest";
      const Corpus c = load_corpus(corpus_path);
      std::size_t generated = 0;
      for (const auto& img : c.images()) generated += img.kind == ImageKind::generated;
      std::cout << "classes " << c.classes().size() << "\nimages " << c.images().size() << " (" << generated
                << " generated)\nlabels " << c.labels().size() << "\nedges " << c.edges().size()
                << "\ndimension " << c.dimension() << "\niterations " << c.max_iteration() << '\n';
      if (!out_path.empty()) save_corpus(out_path, c);
    } else if (*project_cmd) {
      current_stage = "ingest";
      const Corpus c = load_corpus(corpus_path);
      current_stage = "project";
      const auto result = train(c, proj_flags.config(seed));
      auto out = open_out(out_path);
      write_layout(out, result.layout);
      if (!loss_path.empty()) {
        auto loss = open_out(loss_path);
        write_loss_history(loss, result.history);
      }
      if (!result.history.empty())
        std::cout << "final loss " << result.history.back().total << " after " << result.history.size()
                  << " epochs\n";
    } else if (*metrics_cmd) {
      current_stage = "ingest";
      const Corpus c = load_corpus(corpus_path);
      current_stage = "metrics";
      SnapshotOptions opts;
      if (sigma > 0.0) opts.sigma = sigma;
      MetricTimeline timeline;
      timeline.append(baseline_snapshot(c));
      for (int it = 1; it <= c.max_iteration(); ++it) timeline.append(metric_snapshot(c, it, opts));
      print_timeline_table(std::cout, timeline);
      if (!out_path.empty()) {
        auto out = open_out(out_path);
        write_timeline(out, timeline);
      }
      if (!svg_path.empty()) {
        auto out = open_out(svg_path);
        write_timeline_svg(out, timeline);
      }
    } else if (*evaluate_cmd) {
      current_stage = "ingest";
      const Corpus c = load_corpus(corpus_path);
      current_stage = "evaluate";
      std::vector<NamedLayout> layouts;
      for (const auto& spec : layout_specs) {
        const auto eq = spec.find('=');
        if (eq == std::string::npos) throw Error(ErrorCode::BadConfig, "--layout expects name=path, got " + spec);
        layouts.push_back({spec.substr(0, eq), load_layout(spec.substr(eq + 1))});
      }
      const auto report = compare(layouts, c, eval_k, corpus_path);
      print_report_table(std::cout, report);
      if (!out_path.empty()) {
        auto out = open_out(out_path);
        write_report_json(out, report);
      }
    } else if (*theory_cmd) {
      current_stage = "theory";
      if (bound_n) std::cout << order_bound(*bound_n) << '\n';
      if (permutation_n > 0) {
        const auto report = verify_permutation_instance(make_permutation_instance(permutation_n), trials, seed);
        std::cout << "images " << report.images << "\nrequired orders " << report.required_orders
                  << "\nbound " << report.bound << "\nexceeds bound " << std::boolalpha << report.exceeds_bound
                  << "\ntrials " << report.trials << "\nmin residual " << report.min_residual
                  << "\nall trials positive " << report.all_trials_positive << '\n';
      }
      if (!construct_path.empty()) {
        const Corpus c = load_corpus(construct_path);
        const Layout layout = construct_many_to_one_layout(c);
        std::cout << "order loss " << order_loss(layout, c).value << '\n';
        if (!out_path.empty()) {
          auto out = open_out(out_path);
          write_layout(out, layout);
        }
      }
      if (!bound_n && permutation_n <= 0 && construct_path.empty())
        throw Error(ErrorCode::BadConfig, "theory needs --bound, --permutation or --construct");
    } else if (*treecut_cmd) {
      current_stage = "ingest";
      const Corpus c = load_corpus(corpus_path);
      current_stage = "treecut";
      LabelTree tree = build_hierarchy(c);
      MockNamer namer;
      name_nodes(tree, c, namer);
      const std::size_t f = focus.empty() ? tree.root() : tree.index(focus);
      const TreeCut cut = tree_cut(tree, f, budget, raw_doi ? DoiScale::raw : DoiScale::normalized);
      write_cut_json(std::cout, tree, cut);
      if (!tree_path.empty()) {
        auto out = open_out(tree_path);
        write_tree_json(out, tree);
      }
    } else if (*refine_cmd) {
      current_stage = "ingest";
      const Corpus c = load_corpus(corpus_path);
      current_stage = "refine";
      const json fb = read_json_file(feedback_path);
      FeedbackAction action;
      action.kind = parse_feedback_kind(fb.at("kind").get<std::string>());
      action.class_name = fb.at("class").get<std::string>();
      action.image_ids = fb.at("image_ids").get<std::vector<std::string>>();
      PromptTemplate prompt{"prompt-" + action.class_name, action.class_name,
                            "a [photo | picture] of a " + action.class_name, 1, std::nullopt};
      if (!prompt_path.empty()) {
        const json p = read_json_file(prompt_path);
        prompt.id = p.value("id", prompt.id);
        prompt.class_name = p.value("class", prompt.class_name);
        prompt.text = p.at("template").get<std::string>();
        prompt.version = p.value("version", 1);
      } else if (!prompt_text.empty()) {
        prompt.text = prompt_text;
      }
      parse_template(prompt.text);
      refine_cfg.seed = seed;
      const Providers providers = make_providers(provider_flags.config(seed, c.dimension()));
      const Matrix classes = providers.embedder->embed(c.classes());
      const auto result = evolve(prompt, action, c, classes, *providers.generator, *providers.mutator, refine_cfg);
      write_trace_json(std::cout, result);
      if (!trace_path.empty()) {
        auto out = open_out(trace_path);
        write_trace_json(out, result);
      }
      if (!out_path.empty()) {
        json p = {{"id", result.prompt.id},
                  {"class", result.prompt.class_name},
                  {"template", result.prompt.text},
                  {"version", result.prompt.version}};
        if (result.prompt.parent_version) p["parent_version"] = *result.prompt.parent_version;
        open_out(out_path) << p.dump(2) << '\n';
      }
      if (result.trace.provider_failed) throw Error(ErrorCode::ProviderError, result.trace.error);
    } else if (*serve_cmd) {
      current_stage = "serve";
      SessionConfig defaults;
      if (!session_config_path.empty()) defaults = session_config_from_json(read_json_file(session_config_path), defaults);
      defaults.projection = serve_proj.config(seed);
      defaults.refine.seed = seed;
      defaults.providers = serve_providers.config(seed, defaults.providers.dimension);
      SessionManager manager(defaults);
      if (!corpus_path.empty()) std::cout << "session " << manager.create_from_file(corpus_path) << '\n';
      Server server(manager);
      std::cout << "listening on " << host << ':' << port << std::endl;
      server.run(host, port);
    } else if (*bench_cmd) {
      current_stage = "bench";
      bool all_ok = true;
      for (std::size_t s = 0; s < bench_seeds; ++s) {
        auto options = default_bench_options(seed + s);
        if (bench_epochs > 0) options.projection.epochs = bench_epochs;
        const auto result = run_benchmark(options);
        std::cout << "seed " << seed + s << " (" << result.seconds << " s)\n";
        print_report_table(std::cout, result.report);
        std::cout << "m2m beats order-loss on IMS, T_inter and C_inter: " << (result.m2m_dominates ? "yes" : "NO")
                  << "\nintra gap to image-only: T " << result.intra_gap_t << ", C " << result.intra_gap_c << "\n\n";
        all_ok = all_ok && result.m2m_dominates;
        if (!out_path.empty()) {
          auto out = open_out(out_path);
          write_report_json(out, result.report);
        }
      }
      if (!all_ok) {
        std::cerr << "error [bench]: multi-modal projection did not dominate the order-loss baseline\n";
        return 3;
      }
    }
  } catch (const Error& e) {
    std::cerr << "error [" << current_stage << "]: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error [" << current_stage << "]: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
