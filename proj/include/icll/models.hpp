#pragma once

#include "icll/tasks.hpp"
#include "icll/transformer.hpp"

#include <filesystem>
#include <memory>
#include <optional>

namespace icll {

enum class ModelVariant { Implicit, ExplicitMlp, ExplicitTsf, ExplicitKnown, ImplicitProxy };

const char* to_string(ModelVariant v);
ModelVariant model_variant_from_string(const std::string& s);

enum class AuxLoss { None, Decoded, Direct };

struct LossSpec {
  std::string task_loss = "auto";  // "auto" | "mse" | "cross_entropy"
  AuxLoss aux = AuxLoss::None;
  double aux_weight = 1.0;
};

struct ModelConfig {
  ModelVariant variant = ModelVariant::Implicit;
  EncoderConfig encoder;    // implicit backbone
  EncoderConfig context;    // explicit context aggregator
  EncoderConfig predictor;  // transformer predictor (ExplicitTsf)
  std::vector<Index> predictor_hidden{512, 512, 512};
  Index bottleneck_dim = 256;
  LossSpec loss;
};

void to_json(json& j, const ModelConfig& c);
void from_json(const json& j, ModelConfig& c);
void to_json(json& j, const EncoderConfig& c);
void from_json(const json& j, EncoderConfig& c);
void to_json(json& j, const LossSpec& c);
void from_json(const json& j, LossSpec& c);

/// Closed-form parameter count of a model for the given task shape;
/// asserted against constructed models in tests.
Index model_param_count(const ModelConfig& cfg, const IoShape& io);

/// Task loss plus the optional auxiliary latent term:
///   aux_decoded: || z - W z_psi ||^2 with W trained jointly ("aux.w"),
///   aux_direct:  || z - z_psi ||^2 (requires bottleneck_dim == dim z).
Tensor assemble_loss(const LossSpec& spec, const IoShape& io, const Tensor& pred,
                     const Vec& target, const Tensor* z_psi, const Vec* z_true,
                     const ParamStore* params);

/// One in-context learner bound to a task family. Forward paths record onto
/// a graph exactly when the parameters are watched there.
class Model {
 public:
  static Model build(const ModelConfig& cfg, std::shared_ptr<const TaskFamily> family,
                     uint64_t init_seed);

  const ModelConfig& config() const { return cfg_; }
  const TaskFamily& family() const { return *family_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }
  Index param_count() const { return params_.param_count(); }

  /// Prediction for the episode's query (logits for classification kinds).
  Tensor forward(const Episode& ep) const;
  /// Context summary z_psi; available on Explicit* and ImplicitProxy.
  Tensor bottleneck(const Episode& ep) const;
  /// Predictor path only: depends on the context through z_psi alone.
  Tensor predict_from_bottleneck(const Tensor& z_psi, const Vec& query_x) const;
  /// Episode loss per the configured LossSpec.
  Tensor episode_loss(const Episode& ep) const;
  Tensor batch_loss(const std::vector<Episode>& batch) const;

  /// Eager prediction; uses hard latent decoding where training uses a
  /// relaxation (ExplicitKnown on MoE).
  Vec predict(const Episode& ep) const;

  // Feature taps for probing and alignment search.
  std::vector<std::string> tap_locations() const;
  Index tap_dim(const std::string& location) const;
  Vec tap_value(const Episode& ep, const std::string& location) const;
  /// Forward pass with the tapped activation replaced by fn(activation).
  Tensor forward_intervened(const Episode& ep, const std::string& location,
                            const std::function<Tensor(const Tensor&)>& fn) const;
  /// Residual-stream states of every tap for the implicit query token
  /// (optionally under an intervention), for locality checks.
  std::vector<Vec> query_token_trace(const Episode& ep, const std::string& location = "",
                                     const std::function<Tensor(const Tensor&)>& fn = nullptr) const;

 private:
  ModelConfig cfg_;
  std::shared_ptr<const TaskFamily> family_;
  ParamStore params_;

  Tensor pair_rows(const Episode& ep) const;
  Tensor query_row(const Vec& x) const;
  Tensor context_bottleneck(const Episode& ep, bool include_query) const;
  Tensor known_prediction(const Tensor& z_hat, const Vec& query_x) const;
  Tensor mlp_prediction(const Tensor& z_psi, const Vec& query_x) const;
};

// ---------------------------------------------------------------------------
// Checkpoints: magic "ICLL", version, config hash + JSON, then per-parameter
// (name, shape, little-endian f64 payload). Round-trips are bit-exact.
// ---------------------------------------------------------------------------

uint64_t config_hash(const json& config);

void save_checkpoint(const std::filesystem::path& path, const json& config,
                     const ParamStore& params);

struct CheckpointData {
  json config;
  std::vector<std::pair<std::string, Tensor>> params;
};

/// Loads a checkpoint; when `expected_hash` is given, a mismatching config
/// hash (e.g. a different task kind) is an error.
CheckpointData load_checkpoint(const std::filesystem::path& path,
                               std::optional<uint64_t> expected_hash = {});

/// Copies checkpoint values into a freshly built model (names and shapes
/// must match exactly).
void restore_params(ParamStore& params, const CheckpointData& data);

}  // namespace icll
