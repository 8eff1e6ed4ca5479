#pragma once

#include "icll/models.hpp"

#include <map>

namespace icll {

enum class Protocol { Id, OodQuery3x, OodLatentHeldout, NearContextTrainFarEval };

const char* to_string(Protocol p);
Protocol protocol_from_string(const std::string& s);
/// Protocols meaningful for a task kind (OOD queries need Gaussian inputs,
/// latent holdout needs a compositional latent).
std::vector<Protocol> default_protocols(TaskKind k);

struct MetricStat {
  double mean = 0.0;
  double stderr_ = 0.0;
  long n = 0;
};

struct EvalConfig {
  std::vector<Protocol> protocols;
  Index n_episodes = 1000;
  uint64_t seed = 0;
  uint64_t config_hash = 0;
  json meta;  // carried into the report for downstream tooling
};

struct EvalReport {
  uint64_t config_hash = 0;
  json meta;
  std::map<std::string, std::map<std::string, MetricStat>> protocols;

  json to_json() const;
  static EvalReport from_json(const json& j);
  /// Plot-ready long form: protocol,metric,mean,stderr,n.
  void write_csv(std::ostream& os) const;
};

/// Metrics per protocol over fresh episodes: MSE for regression kinds,
/// accuracy (vs the argmax of the true conditional) + log-loss for
/// classification kinds, plus the closed-form oracle's MSE where one exists.
EvalReport evaluate(const Model& model, const EvalConfig& cfg);

// ---------------------------------------------------------------------------
// Linear probes (strictly post hoc; no gradient reaches the model)
// ---------------------------------------------------------------------------

struct ProbeResult {
  Mat weights;  // [feature_dim + 1, latent_dim], bias row last
  Vec score_per_component;
  double score = 0.0;  // mean R^2 (continuous) or accuracy (categorical)
  bool categorical = false;
  long n_fit = 0, n_eval = 0;
  bool underdetermined = false;  // fewer than 10x more episodes than features
};

/// Closed-form ridge fit on frozen features; scores on a held-out split.
ProbeResult probe_fit(const Mat& features, const Mat& latents, double ridge = 1e-6,
                      double fit_fraction = 0.8,
                      const std::vector<Index>& class_blocks = {});

/// Fits probes at every tap location of the model (bottleneck or per-layer
/// query states, plus the raw-context baseline).
std::map<std::string, ProbeResult> probe_model(const Model& model, Index n_episodes,
                                                uint64_t seed);

json probe_report_json(const std::map<std::string, ProbeResult>& probes);

// ---------------------------------------------------------------------------
// Distributed alignment search
// ---------------------------------------------------------------------------

struct DasConfig {
  Index k = 10;          // subspace dimension
  Index steps = 300;     // optimizer steps on the projection
  double lr = 1e-2;
  Index batch = 32;
  Index train_pairs = 256;
  Index eval_pairs = 256;
  double tau = 0.1;      // regression success threshold (MSE)
  uint64_t seed = 0;
};

/// A base/source run whose latents differ in exactly one component; the
/// counterfactual is the source-latent label at the base query.
struct DasPair {
  Episode base;
  Episode source;
  Vec counterfactual;  // label_mean under the source latent
};

/// The three entry points DAS needs into a model; models provide them via
/// model_das_hooks, and synthetic constructions can supply their own.
struct DasHooks {
  Index dim = 0;
  std::function<Vec(const Episode&)> activation;
  std::function<Tensor(const Episode&, const std::function<Tensor(const Tensor&)>&)>
      predict_intervened;
  std::function<Vec(const Episode&)> predict_plain;
};

struct DasResult {
  Mat pi;  // [dim, k], orthonormal columns
  std::string location;
  Index latent_index = 0;
  double iia = 0.0;
  double baseline = 0.0;
  double relative = 0.0;
  bool relative_defined = true;
  double mse_mean = 0.0;  // regression kinds: raw counterfactual MSE
  double max_orth_err = 0.0;
};

/// (IIA - baseline) / (1 - baseline); undefined at baseline == 1.
double relative_accuracy(double iia, double baseline, bool* defined = nullptr);

std::vector<DasPair> make_das_pairs(const TaskFamily& family, Index latent_index,
                                    Index count, uint64_t seed);

/// Learns an orthonormal projection by Adam on the interchange loss,
/// re-orthonormalizing (QR) after every step; evaluates IIA on held-out pairs.
DasResult das_train(const DasHooks& hooks, const IoShape& io,
                    const std::vector<DasPair>& train_pairs,
                    const std::vector<DasPair>& eval_pairs, const DasConfig& cfg);

DasHooks model_das_hooks(const Model& model, const std::string& location);

/// Bottleneck search for explicit variants; for the implicit model every
/// query-token layer is searched and the best location is reported.
DasResult das_search_model(const Model& model, Index latent_index,
                           const DasConfig& cfg);

json das_result_json(const DasResult& r);

}  // namespace icll
