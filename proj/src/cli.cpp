#include "icll/cli.hpp"

#include "icll/eval.hpp"
#include "icll/presets.hpp"
#include "icll/report.hpp"
#include "icll/training.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <fstream>
#include <iostream>

namespace icll {
namespace {

constexpr const char* kVersion = "0.1.0";

struct ConfigArgs {
  std::string config_path;
  std::string preset;
  std::vector<std::string> overrides;
  int64_t seed = -1;
  std::string out;
};

void add_config_options(CLI::App* cmd, ConfigArgs& args, bool need_config) {
  auto* config = cmd->add_option("--config", args.config_path, "run config JSON file");
  auto* preset = cmd->add_option("--preset", args.preset, "named preset configuration");
  if (need_config) {
    config->excludes(preset);
    preset->excludes(config);
  }
  cmd->add_option("--set", args.overrides,
                  "dotted config override, e.g. --set train.epochs=50");
  cmd->add_option("--seed", args.seed, "run seed (overrides the config)");
  cmd->add_option("--out", args.out, "output directory (default $ICLL_OUT_DIR or ./runs)");
}

std::filesystem::path out_dir(const ConfigArgs& args, const std::string& fallback) {
  if (!args.out.empty()) return args.out;
  if (const char* env = std::getenv("ICLL_OUT_DIR")) return std::filesystem::path(env) / fallback;
  return std::filesystem::path("runs") / fallback;
}

json parse_override_value(const std::string& text) {
  const json parsed = json::parse(text, nullptr, /*allow_exceptions=*/false);
  if (!parsed.is_discarded()) return parsed;
  return json(text);  // bare strings
}

void apply_override(json& cfg, const std::string& kv) {
  const auto eq = kv.find('=');
  check(eq != std::string::npos, "--set expects key=value, got: " + kv);
  const std::string value = kv.substr(eq + 1);
  json* node = &cfg;
  std::string path = kv.substr(0, eq);
  size_t pos = 0;
  while (true) {
    const size_t dot = path.find('.', pos);
    const std::string key = path.substr(pos, dot - pos);
    if (dot == std::string::npos) {
      (*node)[key] = parse_override_value(value);
      break;
    }
    node = &(*node)[key];
    pos = dot + 1;
  }
}

RunConfig resolve_config(const ConfigArgs& args) {
  json j;
  if (!args.preset.empty()) {
    j = get_preset(args.preset);
  } else if (!args.config_path.empty()) {
    std::ifstream is(args.config_path);
    check(bool(is), "cannot open config file: " + args.config_path);
    is >> j;
  } else {
    fail("either --config or --preset is required");
  }
  for (const std::string& kv : args.overrides) apply_override(j, kv);
  RunConfig cfg = j.get<RunConfig>();
  if (args.seed >= 0) cfg.seed = uint64_t(args.seed);
  return cfg;
}

void write_meta(const std::filesystem::path& dir, int argc, const char* const* argv) {
  json j{{"icll_version", kVersion}};
  std::string cmdline;
  for (int i = 0; i < argc; ++i) {
    if (i) cmdline += ' ';
    cmdline += argv[i];
  }
  j["command"] = cmdline;
  std::ofstream os(dir / "meta.json", std::ios::trunc);
  os << j.dump(2) << "\n";
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::trunc);
  check(bool(os), "cannot write " + path.string());
  os << text;
}

json run_meta(const RunConfig& cfg) {
  return json{{"kind", to_string(cfg.task.kind)},
              {"variant", to_string(cfg.model.variant)},
              {"seed", cfg.seed},
              {"train_query_mode", to_string(cfg.train.train_query_mode)}};
}

void write_eval_outputs(const std::filesystem::path& dir, const EvalReport& report) {
  write_text(dir / "eval.json", report.to_json().dump(2) + "\n");
  std::ostringstream csv;
  report.write_csv(csv);
  write_text(dir / "eval.csv", csv.str());
}

EvalReport evaluate_checkpoint(const std::filesystem::path& ckpt,
                               const std::vector<std::string>& protocol_names,
                               Index episodes, int64_t seed, json extra_meta) {
  auto [model, cfg] = load_model(ckpt);
  EvalConfig ev;
  ev.n_episodes = episodes;
  ev.seed = seed >= 0 ? uint64_t(seed) : cfg.seed;
  ev.config_hash = cfg.hash();
  ev.meta = run_meta(cfg);
  for (auto& [k, v] : extra_meta.items()) ev.meta[k] = v;
  for (const std::string& p : protocol_names)
    ev.protocols.push_back(protocol_from_string(p));
  return evaluate(*model, ev);
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"icll: a desk-scale laboratory for in-context learners"};
  app.require_subcommand(1);

  // train ------------------------------------------------------------------
  ConfigArgs train_args;
  auto* cmd_train = app.add_subcommand("train", "train a model from a config or preset");
  add_config_options(cmd_train, train_args, true);

  // eval -------------------------------------------------------------------
  ConfigArgs eval_args;
  std::string eval_ckpt;
  std::vector<std::string> eval_protocols;
  Index eval_episodes = 1000;
  auto* cmd_eval = app.add_subcommand("eval", "evaluate a checkpoint across protocols");
  cmd_eval->add_option("--checkpoint", eval_ckpt, "checkpoint file")->required();
  cmd_eval->add_option("--protocols", eval_protocols,
                       "protocol names (default: all valid for the task)");
  cmd_eval->add_option("--episodes", eval_episodes, "episodes per protocol");
  add_config_options(cmd_eval, eval_args, false);

  // probe ------------------------------------------------------------------
  ConfigArgs probe_args;
  std::string probe_ckpt;
  Index probe_episodes = 1000;
  auto* cmd_probe = app.add_subcommand("probe", "linear latent decoding from feature taps");
  cmd_probe->add_option("--checkpoint", probe_ckpt, "checkpoint file")->required();
  cmd_probe->add_option("--episodes", probe_episodes, "episodes for the probe fit");
  add_config_options(cmd_probe, probe_args, false);

  // das --------------------------------------------------------------------
  ConfigArgs das_args;
  std::string das_ckpt;
  DasConfig das_cfg;
  Index das_latent_index = 0;
  auto* cmd_das = app.add_subcommand("das", "distributed alignment search at a location");
  cmd_das->add_option("--checkpoint", das_ckpt, "checkpoint file")->required();
  cmd_das->add_option("--latent-index", das_latent_index, "latent component to align");
  cmd_das->add_option("--k", das_cfg.k, "subspace dimension");
  cmd_das->add_option("--steps", das_cfg.steps, "optimizer steps");
  cmd_das->add_option("--pairs", das_cfg.train_pairs, "training pair count");
  add_config_options(cmd_das, das_args, false);

  // sweep ------------------------------------------------------------------
  ConfigArgs sweep_args;
  std::string sweep_axis;
  std::vector<double> sweep_values;
  Index sweep_episodes = 500;
  auto* cmd_sweep = app.add_subcommand("sweep", "train/evaluate a config along one axis");
  cmd_sweep->add_option("--axis", sweep_axis, "input_dim | context_len | model_size | moe_train_fraction | output_dim")->required();
  cmd_sweep->add_option("--values", sweep_values, "axis values")->required()->delimiter(',');
  cmd_sweep->add_option("--episodes", sweep_episodes, "eval episodes per member");
  add_config_options(cmd_sweep, sweep_args, true);

  // export-episodes ----------------------------------------------------------
  ConfigArgs export_args;
  Index export_n = 100;
  std::string export_mode = "id";
  std::string export_split = "train";
  auto* cmd_export = app.add_subcommand("export-episodes", "dump sampled episodes as JSONL");
  cmd_export->add_option("--n", export_n, "episode count");
  cmd_export->add_option("--mode", export_mode, "query mode");
  cmd_export->add_option("--split", export_split, "latent split (train|heldout)");
  add_config_options(cmd_export, export_args, true);

  // report -------------------------------------------------------------------
  ConfigArgs report_args;
  std::vector<std::string> report_inputs;
  std::string report_figure = "fig2";
  auto* cmd_report = app.add_subcommand("report", "merge eval.json files into a tidy CSV");
  cmd_report->add_option("--inputs", report_inputs, "eval.json files")->required();
  cmd_report->add_option("--figure", report_figure, "fig2 | fig5 | fig6 | raw");
  add_config_options(cmd_report, report_args, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    app.exit(e);
    return 3;
  }

  try {
    if (*cmd_train) {
      const RunConfig cfg = resolve_config(train_args);
      const auto dir = out_dir(train_args, "train");
      std::filesystem::create_directories(dir);
      write_meta(dir, argc, argv);
      const TrainResult result = train(cfg, dir);
      if (result.status == RunStatus::NanAbort) {
        std::cerr << "training aborted: " << result.message << "\n";
        return 2;
      }
      std::cout << "checkpoint: " << (dir / "checkpoint.icll").string() << "\n";
      return 0;
    }

    if (*cmd_eval) {
      const auto dir = out_dir(eval_args, "eval");
      std::filesystem::create_directories(dir);
      write_meta(dir, argc, argv);
      const EvalReport report = evaluate_checkpoint(
          eval_ckpt, eval_protocols, eval_episodes, eval_args.seed, json::object());
      write_eval_outputs(dir, report);
      std::cout << "report: " << (dir / "eval.json").string() << "\n";
      return 0;
    }

    if (*cmd_probe) {
      const auto dir = out_dir(probe_args, "probe");
      std::filesystem::create_directories(dir);
      write_meta(dir, argc, argv);
      auto [model, cfg] = load_model(probe_ckpt);
      const uint64_t seed = probe_args.seed >= 0 ? uint64_t(probe_args.seed) : cfg.seed;
      const auto probes = probe_model(*model, probe_episodes, seed);
      json j{{"meta", run_meta(cfg)}, {"probes", probe_report_json(probes)}};
      write_text(dir / "probe.json", j.dump(2) + "\n");
      std::cout << "report: " << (dir / "probe.json").string() << "\n";
      return 0;
    }

    if (*cmd_das) {
      const auto dir = out_dir(das_args, "das");
      std::filesystem::create_directories(dir);
      write_meta(dir, argc, argv);
      auto [model, cfg] = load_model(das_ckpt);
      das_cfg.seed = das_args.seed >= 0 ? uint64_t(das_args.seed) : cfg.seed;
      const DasResult result = das_search_model(*model, das_latent_index, das_cfg);
      json j{{"meta", run_meta(cfg)}, {"das", das_result_json(result)}};
      write_text(dir / "das.json", j.dump(2) + "\n");
      std::cout << "report: " << (dir / "das.json").string() << "\n";
      return 0;
    }

    if (*cmd_sweep) {
      const RunConfig base = resolve_config(sweep_args);
      const auto dir = out_dir(sweep_args, "sweep");
      std::filesystem::create_directories(dir);
      write_meta(dir, argc, argv);
      std::vector<json> reports;
      for (const auto& [label, cfg] : make_sweep(base, sweep_axis, sweep_values)) {
        const auto member_dir = dir / label;
        const TrainResult result = train(cfg, member_dir);
        if (result.status == RunStatus::NanAbort) {
          std::cerr << "sweep member " << label << " aborted: " << result.message << "\n";
          return 2;
        }
        EvalConfig ev;
        ev.n_episodes = sweep_episodes;
        ev.seed = cfg.seed;
        ev.config_hash = cfg.hash();
        ev.meta = run_meta(cfg);
        ev.meta["axis"] = sweep_axis;
        ev.meta["axis_value"] = label.substr(label.find('=') + 1);
        const EvalReport report = evaluate(*result.model, ev);
        write_eval_outputs(member_dir, report);
        reports.push_back(report.to_json());
      }
      write_text(dir / "report.csv",
                 make_report(reports, sweep_axis == "moe_train_fraction" ? "fig5" : "raw"));
      std::cout << "report: " << (dir / "report.csv").string() << "\n";
      return 0;
    }

    if (*cmd_export) {
      const RunConfig cfg = resolve_config(export_args);
      const auto dir = out_dir(export_args, "episodes");
      std::filesystem::create_directories(dir);
      write_meta(dir, argc, argv);
      TaskFamily family(cfg.task);
      const QueryMode mode = query_mode_from_string(export_mode);
      const LatentSplit split =
          export_split == "heldout" ? LatentSplit::Heldout : LatentSplit::Train;
      std::vector<Episode> episodes;
      for (Index i = 0; i < export_n; ++i) {
        Rng rng = Rng::derive(cfg.seed, {0xE9, uint64_t(i)});
        episodes.push_back(family.make_episode(rng, mode, split));
      }
      std::ofstream os(dir / "episodes.jsonl", std::ios::trunc);
      dump_episodes_jsonl(os, family, episodes);
      std::cout << "episodes: " << (dir / "episodes.jsonl").string() << "\n";
      return 0;
    }

    if (*cmd_report) {
      const auto dir = out_dir(report_args, "report");
      std::filesystem::create_directories(dir);
      std::vector<json> reports;
      for (const std::string& path : report_inputs) {
        std::ifstream is(path);
        check(bool(is), "cannot open " + path);
        json j;
        is >> j;
        reports.push_back(std::move(j));
      }
      write_text(dir / "report.csv", make_report(reports, report_figure));
      std::cout << "report: " << (dir / "report.csv").string() << "\n";
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 3;
}

}  // namespace icll
