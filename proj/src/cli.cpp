// Copyright 2026 The Omni-Emotion Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "omni_emotion/cli.hpp"

#include <CLI11.hpp>

#include <atomic>
#include <chrono>
#include <csignal>
#include <iomanip>
#include <thread>

#include "omni_emotion/config.hpp"
#include "omni_emotion/error.hpp"
#include "omni_emotion/eval.hpp"
#include "omni_emotion/log.hpp"
#include "omni_emotion/review_service.hpp"
#include "omni_emotion/training.hpp"
#include "omni_emotion/util.hpp"

namespace omni {

namespace {

std::atomic<bool> g_stop{false};
void on_signal(int) { g_stop = true; }

struct CommonFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
  std::string registry;
  std::string output_dir;
  std::string log_level;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("-c,--config", f.config, "Config file")->required();
  cmd->add_option("--seed", f.seed, "Random seed override");
  cmd->add_option("--workers", f.workers, "Worker count override")->check(CLI::PositiveNumber);
  cmd->add_option("--registry", f.registry, "Backend registry (mock or http)")
      ->check(CLI::IsMember({"mock", "http"}));
  cmd->add_option("--output-dir", f.output_dir, "Output directory override");
  cmd->add_option("--log-level", f.log_level, "debug, info, warning, error or off")
      ->check(CLI::IsMember({"debug", "info", "warning", "error", "off"}));
}

RunConfig load(const CommonFlags& f) {
  if (!f.log_level.empty()) {
    static const std::map<std::string, LogLevel> levels = {{"debug", LogLevel::kDebug},
                                                           {"info", LogLevel::kInfo},
                                                           {"warning", LogLevel::kWarning},
                                                           {"error", LogLevel::kError},
                                                           {"off", LogLevel::kOff}};
    set_log_level(levels.at(f.log_level));
  }
  ConfigOverrides o;
  o.seed = f.seed;
  o.workers = f.workers;
  if (f.registry == "mock") o.registry_mode = RegistryMode::kMock;
  if (f.registry == "http") o.registry_mode = RegistryMode::kHttp;
  if (!f.output_dir.empty()) o.output_dir = f.output_dir;
  return load_run_config(f.config, o);
}

std::unique_ptr<TemplateSet> templates_from(const RunConfig& run) {
  if (const auto dir = run.optional_path(run.raw, "templates_dir")) {
    return std::make_unique<TemplateSet>(TemplateSet::with_overrides(*dir));
  }
  return std::make_unique<TemplateSet>(TemplateSet::builtin());
}

std::map<std::string, MediaClip> clip_map(const std::filesystem::path& path) {
  std::map<std::string, MediaClip> out;
  for (auto& c : read_clips(path)) out.emplace(c.clip_id, std::move(c));
  return out;
}

std::filesystem::path require_existing(const std::filesystem::path& p, const std::string& what) {
  if (!std::filesystem::exists(p)) throw PreconditionError(what + " " + p.string() + " does not exist");
  return p;
}

// ---------------------------------------------------------------------------
// curate
// ---------------------------------------------------------------------------

int cmd_curate(const CommonFlags& flags, std::ostream& out) {
  const RunConfig run = load(flags);
  const json section = run.section("curate");
  const auto clips_path = run.require_path(section, "curate", "clips");
  const auto out_dir = run.output_dir(section, "curate");
  const auto templates = templates_from(run);
  CurationConfig cfg = curation_config_from_json(section, run);
  cfg.templates = templates.get();

  const auto registry = registry_from_config(run);
  const Backends backends = Backends::resolve(*registry, cfg.roles);
  const auto clips = read_clips(require_existing(clips_path, "clip manifest"));

  const CurationResult result = run_curation(clips, backends, cfg, cfg.roles.ids());
  std::filesystem::create_directories(out_dir);
  write_manifest(result.sre, out_dir / "sre.jsonl");
  write_manifest(result.hre, out_dir / "hre.jsonl");
  write_file_atomic(out_dir / "run_report.json", result.report.to_json().dump(2) + "\n");
  write_config_snapshot(run, out_dir, "curate");

  out << "curated " << clips.size() << " clips: SRE " << result.sre.records.size() << ", HRE "
      << result.hre.records.size() << '\n';
  for (const auto& [name, n] : result.report.counts) out << "  " << name << ": " << n << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

Model initial_model(const RunConfig& run, const json& train, const json& phase_section) {
  if (auto p = run.optional_path(phase_section, "init_checkpoint")) {
    return Model::load(require_existing(*p, "checkpoint"));
  }
  if (auto p = run.optional_path(train, "init_checkpoint")) return Model::load(require_existing(*p, "checkpoint"));
  return Model::init(model_config_from_run(run));
}

int cmd_train(const CommonFlags& flags, int phase_number_arg, std::ostream& out) {
  const RunConfig run = load(flags);
  const Phase phase = phase_from_number(phase_number_arg);
  const json train = run.section("train");
  const std::string key = "phase" + std::to_string(phase_number_arg);
  const json ps = train.contains(key) ? train.at(key) : json::object();
  if (!ps.is_object()) throw UsageError("train." + key + " must be an object");
  const auto out_dir = run.output_dir(train, "train");

  PhaseConfig pc = PhaseConfig::defaults(phase);
  pc.seed = run.seed;
  try {
    pc = phase_config_from_json(ps, pc);
  } catch (const ConfigError& e) {
    throw UsageError(e.what());
  }

  std::vector<InstructionExample> examples;
  switch (phase) {
    case Phase::AUDIO_ALIGN: {
      const auto p = run.require_path(ps, "train." + key, "audio_records");
      examples = build_phase1_examples(read_audio_records(require_existing(p, "audio records")), run.seed);
      break;
    }
    case Phase::FACIAL_ALIGN: {
      const auto p = run.require_path(ps, "train." + key, "records");
      examples = build_phase2_examples(read_classification_records(require_existing(p, "classification records")),
                                       run.seed);
      break;
    }
    case Phase::MULTIMODAL_SFT: {
      const auto sre_path = run.require_path(ps, "train." + key, "sre");
      const auto clips_path = run.require_path(ps, "train." + key, "clips");
      const DatasetManifest sre = read_manifest(require_existing(sre_path, "SRE manifest"));
      DatasetManifest hre;
      hre.name = "HRE";
      if (const auto hre_path = run.optional_path(ps, "hre")) hre = read_manifest(require_existing(*hre_path, "HRE manifest"));
      examples = build_phase3_examples(sre, hre, clip_map(require_existing(clips_path, "clip manifest")), run.seed);
      break;
    }
  }
  if (examples.empty()) throw PreconditionError("phase " + std::to_string(phase_number_arg) + " has no examples");

  Model model = initial_model(run, train, ps);
  std::unique_ptr<BackendRegistry> registry;
  FaceDetector* detector = nullptr;
  if (phase != Phase::AUDIO_ALIGN) {
    registry = registry_from_config(run);
    const BackendRoles roles = roles_from_json(train.value("roles", json()));
    detector = &registry->detector(roles.detector);
  }

  RunPhaseOptions opts;
  opts.log_path = out_dir / (key + ".log.jsonl");
  opts.checkpoint_dir = out_dir;
  const PhaseResult r = run_phase(pc, model, examples, detector, opts);
  write_config_snapshot(run, out_dir, "train " + key);

  out << "phase " << phase_number_arg << " (" << to_string(phase) << "): " << examples.size() << " examples, "
      << r.steps << " steps, final loss " << std::setprecision(6) << r.final_loss << '\n';
  out << "checkpoint " << r.checkpoint->string() << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

std::vector<std::string> class_list_from(const json& s) {
  if (s.contains("classes")) return s.at("classes").get<std::vector<std::string>>();
  if (s.contains("dataset")) return label_space_for(parse_source_dataset(s.at("dataset").get<std::string>()));
  throw UsageError("eval.cls needs 'classes' or 'dataset'");
}

int cmd_eval(const CommonFlags& flags, const std::string& task_name, std::ostream& out) {
  const RunConfig run = load(flags);
  const EvalTask task = parse_eval_task(task_name);
  const json ev = run.section("eval");
  const json s = ev.contains(task_name) ? ev.at(task_name) : json::object();
  const std::string sec = "eval." + task_name;
  const auto out_dir = run.output_dir(ev, "eval");
  const auto predictions = read_predictions(require_existing(run.require_path(s, sec, "predictions"), "predictions"));
  const auto references = read_predictions(require_existing(run.require_path(s, sec, "references"), "references"));

  EvalReport report;
  switch (task) {
    case EvalTask::EMER_OV: {
      const auto groups = run.optional_path(s, "groups");
      const GroupMap map = groups ? GroupMap::load(require_existing(*groups, "group table")) : GroupMap::builtin();
      report = evaluate_open_vocab(predictions, references, map);
      break;
    }
    case EvalTask::EMOTION_CLS:
      report = evaluate_classification(predictions, references, class_list_from(s));
      break;
    case EvalTask::REASONING_OVERLAP: {
      const auto templates = templates_from(run);
      const auto registry = registry_from_config(run);
      Judge& judge = registry->judge(s.value("judge", std::string("mock-judge")));
      report = evaluate_overlap(predictions, references, judge, *templates, run.workers);
      break;
    }
  }
  std::string stem = task_name;
  std::replace(stem.begin(), stem.end(), '-', '_');
  report.write(out_dir / (stem + "_report.json"), out_dir / (stem + "_report.csv"));
  write_config_snapshot(run, out_dir, "eval " + task_name);

  out << "eval " << task_name << ": " << report.per_sample.size() << " samples\n";
  for (const auto& [name, v] : report.metrics) {
    out << "  " << name << ": " << std::fixed << std::setprecision(2) << v << '\n';
  }
  out.unsetf(std::ios::fixed);
  return kExitOk;
}

// ---------------------------------------------------------------------------
// review-serve
// ---------------------------------------------------------------------------

int cmd_review_serve(const CommonFlags& flags, std::optional<int> port, std::optional<double> serve_seconds,
                     std::ostream& out) {
  const RunConfig run = load(flags);
  const json s = run.section("review");
  const auto store_path = require_existing(run.require_path(s, "review", "store"), "review store");
  std::map<std::string, MediaClip> clips;
  if (const auto c = run.optional_path(s, "clips")) clips = clip_map(require_existing(*c, "clip manifest"));

  ReviewServerOptions o;
  o.host = s.value("host", o.host);
  o.port = port.value_or(s.value("port", 8080));
  if (s.contains("token")) o.token = s.at("token").get<std::string>();
  if (const char* t = std::getenv("OMNI_REVIEW_TOKEN"); t != nullptr && *t != '\0') o.token = t;

  ReviewStore store(store_path, std::move(clips));
  ReviewServer server(store, o);
  const int bound = server.start();
  out << "review service on http://" << o.host << ":" << bound << " (" << store.pending() << " pending)" << std::endl;

  g_stop = false;
  auto prev_int = std::signal(SIGINT, on_signal);
  auto prev_term = std::signal(SIGTERM, on_signal);
  const auto started = std::chrono::steady_clock::now();
  while (!g_stop) {
    if (serve_seconds &&
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count() >= *serve_seconds) {
      break;
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(50));
  }
  std::signal(SIGINT, prev_int);
  std::signal(SIGTERM, prev_term);
  server.stop();
  out << "review service stopped; " << store.pending() << " pending" << std::endl;
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Emotion dataset curation, training and evaluation toolkit", "omni-emotion"};
  app.require_subcommand(1);

  CommonFlags curate_flags, train_flags, eval_flags, review_flags;
  auto* curate = app.add_subcommand("curate", "Build the SRE and HRE manifests from a clip manifest");
  add_common(curate, curate_flags);

  int phase = 0;
  auto* train = app.add_subcommand("train", "Run one training phase");
  add_common(train, train_flags);
  train->add_option("--phase", phase, "Phase number (1, 2 or 3)")->required()->check(CLI::Range(1, 3));

  std::string task;
  auto* eval = app.add_subcommand("eval", "Score predictions against references");
  add_common(eval, eval_flags);
  eval->add_option("--task", task, "emer-ov, cls or overlap")
      ->required()
      ->check(CLI::IsMember({"emer-ov", "cls", "overlap"}));

  std::optional<int> port;
  std::optional<double> serve_seconds;
  auto* review = app.add_subcommand("review-serve", "Serve the human review API");
  add_common(review, review_flags);
  review->add_option("--port", port, "Listen port (0 picks a free one)")->check(CLI::Range(0, 65535));
  review->add_option("--serve-seconds", serve_seconds, "Stop after this many seconds");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  if (!reversed.empty()) reversed.pop_back();
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (curate->parsed()) return cmd_curate(curate_flags, out);
    if (train->parsed()) return cmd_train(train_flags, phase, out);
    if (eval->parsed()) return cmd_eval(eval_flags, task, out);
    if (review->parsed()) return cmd_review_serve(review_flags, port, serve_seconds, out);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitFatal;
  } catch (const std::exception& e) {
    err << "fatal: " << e.what() << '\n';
    return kExitFatal;
  }
  return kExitUsage;
}

}  // namespace omni
