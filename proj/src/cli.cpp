#include "tryon/cli.hpp"

#include <algorithm>
#include <csignal>
#include <fstream>
#include <map>
#include <set>
#include <thread>

#include <pthread.h>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "tryon/dataset.hpp"
#include "tryon/engine.hpp"
#include "tryon/error.hpp"
#include "tryon/log.hpp"
#include "tryon/metrics.hpp"
#include "tryon/service.hpp"
#include "tryon/trainer.hpp"

namespace tryon {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string dashed(std::string key) {
  std::replace(key.begin(), key.end(), '_', '-');
  return "--" + key;
}

// Flags mirror the top-level scalar and list keys of a command's config document. A JSON
// config file may set any key, including nested objects (grid, jitter); flags win.
struct Command {
  Command(std::string n, json d, std::map<std::string, std::string> a)
      : name(std::move(n)), defaults(std::move(d)), aliases(std::move(a)) {}

  std::string name;
  json defaults;                                    // null => required
  std::map<std::string, std::string> aliases;       // extra flag -> key
  CLI::App* app = nullptr;
  std::map<std::string, std::string> raw;
  std::map<std::string, CLI::Option*> options;
  std::string config_file;

  void attach(CLI::App& parent, const std::string& description) {
    app = parent.add_subcommand(name, description);
    app->add_option("--config", config_file, "JSON config file (flags override it)");
    for (const auto& [key, value] : defaults.items()) {
      if (value.is_object()) continue;
      std::string names = dashed(key);
      for (const auto& [alias, target] : aliases)
        if (target == key) names += "," + alias;
      const std::string help = value.is_null() ? "required" : "default: " + value.dump();
      options[key] = app->add_option(names, raw[key], help);
    }
  }

  static json convert(const std::string& key, const std::string& text, const json& like) {
    auto fail = [&] { return ConfigError("invalid value '" + text + "' for " + dashed(key)); };
    try {
      std::size_t used = 0;
      if (like.is_boolean()) {
        if (text == "true" || text == "1" || text == "yes") return true;
        if (text == "false" || text == "0" || text == "no") return false;
        throw fail();
      }
      if (like.is_number_unsigned()) {
        if (text.starts_with('-')) throw fail();
        const auto v = std::stoull(text, &used);
        if (used != text.size()) throw fail();
        return v;
      }
      if (like.is_number_integer()) {
        const auto v = std::stoll(text, &used);
        if (used != text.size()) throw fail();
        return v;
      }
      if (like.is_number_float()) {
        const auto v = std::stod(text, &used);
        if (used != text.size()) throw fail();
        return v;
      }
      if (like.is_array()) {
        json arr = json::array();
        std::vector<std::string> parts;
        std::string cur;
        for (char c : text) {
          if (c == ',') {
            parts.push_back(cur);
            cur.clear();
          } else if (c != ' ') {
            cur.push_back(c);
          }
        }
        if (!cur.empty()) parts.push_back(cur);
        const bool numeric = !parts.empty() && std::all_of(parts.begin(), parts.end(), [](const std::string& p) {
          return !p.empty() && std::all_of(p.begin(), p.end(), [](char c) { return std::isdigit(c) || c == '-'; });
        });
        for (const auto& p : parts) arr.push_back(numeric ? json(std::stoll(p)) : json(p));
        return arr;
      }
    } catch (const std::logic_error&) {
      throw fail();
    }
    return text;
  }

  json resolve() const {
    json doc = defaults;
    if (!config_file.empty()) {
      std::ifstream in(config_file);
      if (!in) throw ConfigError("cannot read config file " + config_file);
      json file;
      try {
        file = json::parse(in);
      } catch (const json::exception& e) {
        throw ConfigError("config file " + config_file + " is not valid JSON: " + e.what());
      }
      if (!file.is_object()) throw ConfigError("config file " + config_file + " must hold a JSON object");
      for (const auto& [key, value] : file.items()) {
        if (key == "subcommand") {
          if (value != name) throw ConfigError("config file is for '" + value.dump() + "', not '" + name + "'");
          continue;
        }
        if (!defaults.contains(key)) throw ConfigError("unknown config key '" + key + "' for " + name);
        if (doc[key].is_object() && value.is_object())
          doc[key].merge_patch(value);
        else
          doc[key] = value;
      }
    }
    for (const auto& [key, opt] : options)
      if (opt->count() > 0) doc[key] = convert(key, raw.at(key), defaults.at(key));
    for (const auto& [key, value] : doc.items())
      if (value.is_null()) throw ConfigError("missing required option " + dashed(key));
    doc["subcommand"] = name;
    return doc;
  }
};

json backend_defaults() {
  return {{"pose_backend", "stub"},
          {"densepose_backend", "stub"},
          {"parse_backend", "stub"},
          {"backend_seed", 0u},
          {"backend_dir", ""}};
}

BackendConfig backend_config(const json& doc) {
  BackendConfig c;
  c.pose = doc.at("pose_backend").get<std::string>();
  c.densepose = doc.at("densepose_backend").get<std::string>();
  c.parse = doc.at("parse_backend").get<std::string>();
  c.seed = doc.at("backend_seed").get<std::uint64_t>();
  c.adapter_dir = doc.at("backend_dir").get<std::string>();
  return c;
}

json with(json a, const json& b) {
  for (const auto& [k, v] : b.items()) a[k] = v;
  return a;
}

void write_json(const fs::path& path, const json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path);
  if (!f) throw InputError("cannot write " + path.string());
  f << j.dump(2) << '\n';
}

LogLevel parse_log_level(const std::string& s) {
  if (s == "debug") return LogLevel::Debug;
  if (s == "info") return LogLevel::Info;
  if (s == "warn") return LogLevel::Warn;
  if (s == "error") return LogLevel::Error;
  if (s == "off") return LogLevel::Off;
  throw ConfigError("unknown log level '" + s + "'");
}

// --- commands ---------------------------------------------------------------

json run_capture_guide(const json& doc) {
  const auto protocol = CaptureProtocol::standard(doc.at("duration_s").get<double>());
  protocol.validate();
  const auto guide = capture_session_guide(protocol);
  const fs::path out = doc.at("out").get<std::string>();
  write_json(out / "guide.json", guide.to_json());
  return {{"guide", (out / "guide.json").string()}, {"poses", guide.entries.size()}, {"total_s", guide.total_s}};
}

json run_build_dataset(const json& doc) {
  auto video = open_video(doc.at("video").get<std::string>());
  auto cfg = DatasetBuildConfig::from_json(doc);
  cfg.workers = doc.at("workers").get<int>();
  if (cfg.workers < 1) throw ConfigError("--workers must be at least 1");
  const auto bc = backend_config(doc);
  make_backends(bc).require_available();
  const auto manifest = build_dataset(*video, [bc] { return make_backends(bc); }, cfg, doc.at("out").get<std::string>());
  return {{"records", manifest.records.size()}, {"skipped", manifest.skipped.size()},
          {"content_hash", manifest.content_hash}};
}

json run_validate_dataset(const json& doc) {
  const fs::path root = doc.at("dataset").get<std::string>();
  const auto report = validate_dataset(load_manifest(root), root);
  const json j = report.to_json();
  if (const auto path = doc.at("report").get<std::string>(); !path.empty()) write_json(path, j);
  if (!report.ok())
    throw InputError("dataset " + root.string() + " failed validation: " + std::to_string(report.failing()) +
                     " failing records, " + std::to_string(report.dataset_issues.size()) + " dataset issues");
  return j;
}

json run_train(const json& doc) {
  const fs::path root = doc.at("dataset").get<std::string>();
  const fs::path out = doc.at("out").get<std::string>();
  auto manifest = load_manifest(root);
  std::unique_ptr<Trainer> trainer;
  if (const auto resume = doc.at("resume").get<std::string>(); !resume.empty()) {
    trainer = Trainer::resume(resume, std::move(manifest), root, out);
  } else {
    auto cfg = TrainConfig::from_json(doc);
    cfg.validate();
    trainer = std::make_unique<Trainer>(std::move(manifest), root, cfg, out);
  }
  const auto final_path = trainer->run();
  json result{{"checkpoint", final_path.string()}, {"steps", trainer->step_count()}};
  if (!trainer->split().holdout.empty()) result["holdout"] = trainer->evaluate_holdout_split().to_json();
  return result;
}

json run_evaluate(const json& doc) {
  auto pred = open_video(doc.at("pred").get<std::string>());
  auto gt = open_video(doc.at("gt").get<std::string>());
  VideoEvalOptions opt;
  opt.metrics = doc.at("metrics").get<std::vector<std::string>>();
  const auto size = doc.at("compare_size").get<std::vector<int>>();
  if (size.size() == 2)
    opt.compare_size = std::pair{size[0], size[1]};
  else if (!size.empty())
    throw ConfigError("--compare-size expects W,H");
  json metrics = json::array();
  for (const auto& r : evaluate_videos(*pred, *gt, opt)) metrics.push_back(r.to_json());
  const json j{{"metrics", metrics}};
  if (const auto path = doc.at("report").get<std::string>(); !path.empty()) write_json(path, j);
  return j;
}

std::shared_ptr<const LoadedGarment> resolve_garment(const json& doc, std::optional<GarmentCatalog>& holder) {
  const auto id = doc.at("garment").get<std::string>();
  if (fs::is_regular_file(id)) return std::make_shared<LoadedGarment>(load_garment_checkpoint(id, fs::path(id).stem()));
  holder = GarmentCatalog::load(doc.at("catalog").get<std::string>());
  auto g = holder->find(id);
  if (!g) throw InputError("garment '" + id + "' is not in catalog " + doc.at("catalog").get<std::string>());
  return g;
}

json run_infer_video(const json& doc) {
  PipelineOptions opt;
  opt.roi_padding = doc.at("roi_padding").get<double>();
  std::optional<GarmentCatalog> catalog;
  const auto garment = resolve_garment(doc, catalog);
  const fs::path in = doc.at("in").get<std::string>();
  open_video(in);  // fail on undecodable input before touching the backends
  auto backends = make_backends(backend_config(doc));
  return infer_video(in, *garment, doc.at("out").get<std::string>(), std::move(backends), opt).to_json();
}

int run_serve(const json& doc, std::ostream& out) {
  ServiceOptions opt;
  opt.host = doc.at("host").get<std::string>();
  const auto port = doc.at("port").get<int>();
  const auto socket_port = doc.at("socket_port").get<int>();
  if (port < 0 || port > 65535 || socket_port < 0 || socket_port > 65535) throw ConfigError("port out of range");
  opt.http_port = static_cast<unsigned short>(port);
  if (socket_port > 0) opt.socket_port = static_cast<unsigned short>(socket_port);
  opt.queue_depth = doc.at("queue_depth").get<std::size_t>();
  if (opt.queue_depth == 0) throw ConfigError("--queue-depth must be at least 1");

  // Block termination signals in every thread; one waiter turns them into a clean stop.
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &set, nullptr);

  TryOnService service(GarmentCatalog::load(doc.at("catalog").get<std::string>()), backend_config(doc), opt);
  service.start();
  out << json{{"http_port", service.http_port()}, {"socket_port", service.socket_port()}}.dump() << std::endl;
  std::thread waiter([&] {
    int sig = 0;
    sigwait(&set, &sig);
    service.stop();
  });
  service.wait();
  waiter.join();
  return kExitOk;
}

void report_error(std::ostream& err, const char* kind, const std::string& message) {
  err << json{{"error", {{"kind", kind}, {"message", message}}}}.dump() << std::endl;
}

}  // namespace

int dispatch(const std::vector<std::string>& argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Per-garment virtual try-on: capture, dataset, training, evaluation and inference."};
  app.name(argv.empty() ? "tryon" : fs::path(argv[0]).filename().string());
  app.require_subcommand(0, 1);
  std::string log_level = "warn";
  app.add_option("--log-level", log_level, "debug|info|warn|error|off")->capture_default_str();

  const TrainConfig train_defaults;
  const DatasetBuildConfig build_defaults;
  std::vector<Command> commands{
      {"capture-guide", {{"out", nullptr}, {"duration_s", 120.0}}, {{"--duration", "duration_s"}}},
      {"build-dataset",
       with(with(build_defaults.to_json(), backend_defaults()),
            {{"video", nullptr}, {"out", nullptr}, {"garment_id", nullptr}, {"workers", build_defaults.workers}}),
       {}},
      {"validate-dataset", {{"dataset", nullptr}, {"report", ""}}, {}},
      {"train",
       with(train_defaults.to_json(), {{"dataset", nullptr}, {"out", nullptr}, {"resume", ""}}),
       {{"--batch", "batch_size"}, {"--lr", "learning_rate"}}},
      {"evaluate",
       {{"pred", nullptr}, {"gt", nullptr}, {"metrics", {"ssim", "l1"}}, {"compare_size", json::array()}, {"report", ""}},
       {}},
      {"infer-video",
       with(backend_defaults(),
            {{"in", nullptr}, {"out", nullptr}, {"garment", nullptr}, {"catalog", "."}, {"roi_padding", 0.15}}),
       {}},
      {"serve",
       with(backend_defaults(), {{"catalog", nullptr},
                                 {"host", "127.0.0.1"},
                                 {"port", 8080},
                                 {"socket_port", 0},
                                 {"queue_depth", 2u}}),
       {}},
  };
  const std::map<std::string, std::string> descriptions{
      {"capture-guide", "Export the 14-pose capture guide script as JSON"},
      {"build-dataset", "Build a per-garment training dataset from a capture video"},
      {"validate-dataset", "Check a dataset's files, shapes, masks and content hash"},
      {"train", "Train a garment synthesis network on a dataset"},
      {"evaluate", "Compare a predicted video against ground truth"},
      {"infer-video", "Run offline try-on over a video"},
      {"serve", "Serve the live try-on session (HTTP control + frame socket)"},
  };
  for (auto& c : commands) c.attach(app, descriptions.at(c.name));

  try {
    std::vector<std::string> args(argv.size() > 1 ? argv.begin() + 1 : argv.end(), argv.end());
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  const Command* chosen = nullptr;
  for (const auto& c : commands)
    if (c.app->parsed()) chosen = &c;
  if (!chosen) {
    err << app.help();
    return kExitConfig;
  }

  try {
    set_log_level(parse_log_level(log_level));
    const json doc = chosen->resolve();
    err << doc.dump() << std::endl;
    json result;
    if (chosen->name == "capture-guide") result = run_capture_guide(doc);
    else if (chosen->name == "build-dataset") result = run_build_dataset(doc);
    else if (chosen->name == "validate-dataset") result = run_validate_dataset(doc);
    else if (chosen->name == "train") result = run_train(doc);
    else if (chosen->name == "evaluate") result = run_evaluate(doc);
    else if (chosen->name == "infer-video") result = run_infer_video(doc);
    else return run_serve(doc, out);
    out << result.dump(2) << std::endl;
    return kExitOk;
  } catch (const ConfigError& e) {
    report_error(err, "config", e.what());
    return kExitConfig;
  } catch (const DivergenceError& e) {
    report_error(err, "divergence", e.what());
    return kExitConfig;
  } catch (const BackendError& e) {
    report_error(err, "backend", e.what());
    return kExitBackend;
  } catch (const InputError& e) {
    report_error(err, "input", e.what());
    return kExitInput;
  } catch (const json::exception& e) {
    report_error(err, "config", e.what());
    return kExitConfig;
  } catch (const fs::filesystem_error& e) {
    report_error(err, "input", e.what());
    return kExitInput;
  } catch (const std::exception& e) {
    report_error(err, "input", e.what());
    return kExitInput;
  }
}

}  // namespace tryon
