#include "icll/training.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

namespace icll {

namespace {

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

constexpr uint64_t kEpisodeStream = 0xE0;
constexpr uint64_t kEvalStream = 0xEA;

}  // namespace

void to_json(json& j, const OptimConfig& c) {
  j = json{{"lr", c.lr},     {"beta1", c.beta1},         {"beta2", c.beta2},
           {"eps", c.eps},   {"clip", c.clip},           {"clip_norm", c.clip_norm}};
}

void from_json(const json& j, OptimConfig& c) {
  c = OptimConfig{};
  if (j.contains("lr")) j.at("lr").get_to(c.lr);
  if (j.contains("beta1")) j.at("beta1").get_to(c.beta1);
  if (j.contains("beta2")) j.at("beta2").get_to(c.beta2);
  if (j.contains("eps")) j.at("eps").get_to(c.eps);
  if (j.contains("clip")) j.at("clip").get_to(c.clip);
  if (j.contains("clip_norm")) j.at("clip_norm").get_to(c.clip_norm);
}

void to_json(json& j, const TrainSchedule& c) {
  j = json{{"epochs", c.epochs},
           {"episodes_per_epoch", c.episodes_per_epoch},
           {"batch_size", c.batch_size},
           {"eval_every", c.eval_every},
           {"eval_episodes", c.eval_episodes},
           {"train_query_mode", to_string(c.train_query_mode)}};
}

void from_json(const json& j, TrainSchedule& c) {
  c = TrainSchedule{};
  if (j.contains("epochs")) j.at("epochs").get_to(c.epochs);
  if (j.contains("episodes_per_epoch"))
    j.at("episodes_per_epoch").get_to(c.episodes_per_epoch);
  if (j.contains("batch_size")) j.at("batch_size").get_to(c.batch_size);
  if (j.contains("eval_every")) j.at("eval_every").get_to(c.eval_every);
  if (j.contains("eval_episodes")) j.at("eval_episodes").get_to(c.eval_episodes);
  if (j.contains("train_query_mode"))
    c.train_query_mode =
        query_mode_from_string(j.at("train_query_mode").get<std::string>());
}

void to_json(json& j, const RunConfig& c) {
  j = json{{"task", c.task},
           {"model", c.model},
           {"optim", c.optim},
           {"train", c.train},
           {"seed", c.seed}};
}

void from_json(const json& j, RunConfig& c) {
  c = RunConfig{};
  j.at("task").get_to(c.task);
  j.at("model").get_to(c.model);
  if (j.contains("optim")) j.at("optim").get_to(c.optim);
  if (j.contains("train")) j.at("train").get_to(c.train);
  if (j.contains("seed")) j.at("seed").get_to(c.seed);
}

uint64_t RunConfig::hash() const {
  json j = *this;
  return config_hash(j);
}

RunLog::RunLog(const std::filesystem::path& path) : os_(path, std::ios::trunc) {
  check(bool(os_), "runlog: cannot open " + path.string());
  os_ << "epoch,split,metric,value\n";
  os_.flush();
}

void RunLog::add(Index epoch, const std::string& split, const std::string& metric,
                 double value) {
  os_ << epoch << ',' << split << ',' << metric << ',' << fmt_double(value) << '\n';
  os_.flush();
}

std::shared_ptr<Model> model_from_config(const RunConfig& cfg) {
  auto family = std::make_shared<const TaskFamily>(cfg.task);
  return std::make_shared<Model>(Model::build(cfg.model, family, cfg.seed));
}

std::pair<std::shared_ptr<Model>, RunConfig> load_model(
    const std::filesystem::path& checkpoint, std::optional<uint64_t> expected_hash) {
  CheckpointData data = load_checkpoint(checkpoint, expected_hash);
  RunConfig cfg = data.config.get<RunConfig>();
  auto model = model_from_config(cfg);
  restore_params(model->params(), data);
  return {model, cfg};
}

namespace {

std::vector<Episode> fresh_batch(const TaskFamily& family, const RunConfig& cfg,
                                 Index epoch, Index batch, Index count) {
  std::vector<Episode> eps;
  eps.reserve(size_t(count));
  for (Index i = 0; i < count; ++i) {
    Rng rng = Rng::derive(cfg.seed, {kEpisodeStream, uint64_t(epoch), uint64_t(batch),
                                     uint64_t(i)});
    eps.push_back(family.make_episode(rng, cfg.train.train_query_mode));
  }
  return eps;
}

double eval_stream_loss(const Model& model, const RunConfig& cfg, Index epoch) {
  double total = 0.0;
  for (Index i = 0; i < cfg.train.eval_episodes; ++i) {
    Rng rng = Rng::derive(cfg.seed, {kEvalStream, uint64_t(epoch), uint64_t(i)});
    const Episode ep = model.family().make_episode(rng, cfg.train.train_query_mode);
    total += model.episode_loss(ep).item();
  }
  return total / double(cfg.train.eval_episodes);
}

void write_status(const std::filesystem::path& out_dir, const std::string& status,
                  Index epoch, const std::string& message) {
  json j{{"status", status}, {"epoch", epoch}};
  if (!message.empty()) j["message"] = message;
  std::ofstream os(out_dir / "status.json", std::ios::trunc);
  os << j.dump(2) << "\n";
}

}  // namespace

TrainResult train(const RunConfig& cfg, const std::filesystem::path& out_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  const json cfg_json = cfg;
  {
    std::ofstream os(out_dir / "config.json", std::ios::trunc);
    check(bool(os), "train: cannot write config echo");
    os << cfg_json.dump(2) << "\n";
  }

  TrainResult result;
  result.model = model_from_config(cfg);
  Model& model = *result.model;
  const TaskFamily& family = model.family();

  AdamConfig adam_cfg{cfg.optim.lr, cfg.optim.beta1, cfg.optim.beta2, cfg.optim.eps};
  AdamState adam(adam_cfg, model.params());
  RunLog log(out_dir / "runlog.csv");

  const Index batches =
      std::max<Index>(1, cfg.train.episodes_per_epoch / cfg.train.batch_size);
  const auto checkpoint_path = out_dir / "checkpoint.icll";

  log.add(0, "eval_id", "loss", eval_stream_loss(model, cfg, 0));
  save_checkpoint(checkpoint_path, cfg_json, model.params());

  for (Index epoch = 1; epoch <= cfg.train.epochs; ++epoch) {
    double epoch_loss = 0.0;
    for (Index batch = 0; batch < batches; ++batch) {
      const auto eps = fresh_batch(family, cfg, epoch, batch, cfg.train.batch_size);
      Graph g;
      WatchScope watch(model.params(), g);
      Tensor loss = model.batch_loss(eps);
      const double loss_value = loss.item();
      if (!std::isfinite(loss_value)) {
        result.status = RunStatus::NanAbort;
        result.message = "non-finite loss at epoch " + std::to_string(epoch) +
                         " batch " + std::to_string(batch);
        std::ofstream diag(out_dir / "nan_diagnostics.txt", std::ios::trunc);
        diag << result.message << "\n"
             << "last good checkpoint: " << checkpoint_path.string() << "\n";
        write_status(out_dir, "nan_abort", epoch, result.message);
        return result;
      }
      g.backward(loss);
      if (cfg.optim.clip) clip_global_norm(model.params(), cfg.optim.clip_norm);
      try {
        adam.step(model.params());
      } catch (const std::exception& e) {
        result.status = RunStatus::NanAbort;
        result.message = e.what();
        std::ofstream diag(out_dir / "nan_diagnostics.txt", std::ios::trunc);
        diag << result.message << "\n";
        write_status(out_dir, "nan_abort", epoch, result.message);
        return result;
      }
      model.params().zero_grad();
      epoch_loss += loss_value;
    }
    log.add(epoch, "train", "loss", epoch_loss / double(batches));
    if (epoch % cfg.train.eval_every == 0 || epoch == cfg.train.epochs) {
      log.add(epoch, "eval_id", "loss", eval_stream_loss(model, cfg, epoch));
      save_checkpoint(checkpoint_path, cfg_json, model.params());
    }
  }
  save_checkpoint(checkpoint_path, cfg_json, model.params());
  write_status(out_dir, "ok", cfg.train.epochs, "");
  return result;
}

std::vector<std::pair<std::string, RunConfig>> make_sweep(
    const RunConfig& base, const std::string& axis,
    const std::vector<double>& values) {
  check(!values.empty(), "sweep: no values");
  std::vector<std::pair<std::string, RunConfig>> runs;
  for (double v : values) {
    RunConfig cfg = base;
    if (axis == "input_dim") {
      cfg.task.x_dim = Index(v);
    } else if (axis == "context_len") {
      cfg.task.n_min = std::max<Index>(1, Index(v) - 25);
      cfg.task.n_max = Index(v) + 25;
    } else if (axis == "model_size") {
      // Ladder anchored at 4 heads / 4 layers / 128 model / 256 mlp; the
      // explicit variants split their depth between the two components.
      const Index m = Index(v);
      cfg.model.encoder = {4 * m, 128 * m, 256 * m, 4 * m, 1, 1};
      cfg.model.context = {2 * m, 128 * m, 256 * m, 4 * m, 1, 1};
      cfg.model.predictor = {2 * m, 128 * m, 256 * m, 4 * m, 1, 1};
    } else if (axis == "moe_train_fraction") {
      check(base.task.kind == TaskKind::Moe, "sweep: fraction axis needs the moe task");
      cfg.task.latent_train_fraction = v;
    } else if (axis == "output_dim") {
      cfg.task.y_dim = Index(v);
    } else {
      fail("sweep: unknown axis " + axis);
    }
    char label[64];
    std::snprintf(label, sizeof label, "%s=%g", axis.c_str(), v);
    runs.emplace_back(label, cfg);
  }
  return runs;
}

}  // namespace icll
