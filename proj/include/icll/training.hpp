#pragma once

#include "icll/models.hpp"

#include <filesystem>
#include <fstream>

namespace icll {

struct OptimConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  bool clip = true;  // gradient clipping; disable for fidelity runs
  double clip_norm = 1.0;
};

struct TrainSchedule {
  Index epochs = 1000;
  Index episodes_per_epoch = 6400;  // 100 fresh batches of 64 by default
  Index batch_size = 64;
  Index eval_every = 10;     // epochs between eval rows / checkpoints
  Index eval_episodes = 256;
  QueryMode train_query_mode = QueryMode::Id;
};

struct RunConfig {
  TaskConfig task;
  ModelConfig model;
  OptimConfig optim;
  TrainSchedule train;
  uint64_t seed = 0;

  uint64_t hash() const;
};

void to_json(json& j, const OptimConfig& c);
void from_json(const json& j, OptimConfig& c);
void to_json(json& j, const TrainSchedule& c);
void from_json(const json& j, TrainSchedule& c);
void to_json(json& j, const RunConfig& c);
void from_json(const json& j, RunConfig& c);

enum class RunStatus { Ok, NanAbort };

struct TrainResult {
  RunStatus status = RunStatus::Ok;
  std::shared_ptr<Model> model;
  std::string message;
};

/// Crash-safe CSV log: `epoch,split,metric,value`, flushed per row.
class RunLog {
 public:
  explicit RunLog(const std::filesystem::path& path);
  void add(Index epoch, const std::string& split, const std::string& metric,
           double value);

 private:
  std::ofstream os_;
};

/// Builds the task family and a fresh model for a run config.
std::shared_ptr<Model> model_from_config(const RunConfig& cfg);

/// Loads a checkpoint back into a freshly built model. When `expected_hash`
/// is set, a checkpoint from a different config (e.g. task kind) is refused.
std::pair<std::shared_ptr<Model>, RunConfig> load_model(
    const std::filesystem::path& checkpoint,
    std::optional<uint64_t> expected_hash = {});

/// Adam over the mean batch loss on a stream of freshly generated episodes.
/// Writes config.json, runlog.csv, checkpoint.icll and status.json under
/// `out_dir`; deterministic byte-for-byte given the config.
TrainResult train(const RunConfig& cfg, const std::filesystem::path& out_dir);

/// One config per sweep value along a named axis
/// (input_dim, context_len, model_size, moe_train_fraction, output_dim).
std::vector<std::pair<std::string, RunConfig>> make_sweep(
    const RunConfig& base, const std::string& axis, const std::vector<double>& values);

}  // namespace icll
