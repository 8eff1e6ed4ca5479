#pragma once

#include "icll/rng.hpp"

#include <nlohmann/json.hpp>

#include <array>
#include <iosfwd>
#include <map>
#include <mutex>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace icll {

using json = nlohmann::json;

enum class TaskKind {
  LinReg,
  MlpReg,
  SinReg,
  GpReg,
  HodgkinHuxley,
  LinCls,
  MlpCls,
  Moe,
  Raven,
  Alchemy,
};

const char* to_string(TaskKind k);
TaskKind task_kind_from_string(const std::string& s);

bool is_classification(TaskKind k);
bool is_compositional(TaskKind k);
bool has_flat_latent(TaskKind k);
bool supports_known_predictor(TaskKind k);
bool has_closed_form_oracle(TaskKind k);
/// Kinds whose inputs are Gaussian draws (so OOD/near/far query modes apply).
bool gaussian_query_kind(TaskKind k);

enum class QueryMode { Id, Ood3x, NearContext, FarFromContext };
enum class LatentSplit { Train, Heldout };

const char* to_string(QueryMode m);
QueryMode query_mode_from_string(const std::string& s);
const char* to_string(LatentSplit s);

/// All task knobs; defaults are the per-kind experiment settings.
struct TaskConfig {
  TaskKind kind = TaskKind::LinReg;
  Index x_dim = 1;
  Index y_dim = 1;
  Index n_min = 16;
  Index n_max = 128;
  double noise_std = 0.0;  // observation noise on regression labels
  uint64_t family_seed = 1;
  double latent_train_fraction = 0.75;  // compositional holdout split

  Index sin_components = 3;
  double sin_lambda_max = 5.0;
  Index mlp_hidden = 64;
  double gp_bandwidth = 1.0;
  Index moe_layers = 5;
  Index moe_experts = 5;
  Index moe_dim = 4;
  Index raven_attributes = 4;
  Index raven_values = 40;
  Index raven_choices = 8;
  Index alchemy_stones = 8;
  Index alchemy_potions = 6;
  Index alchemy_graphs = 16;
  Index alchemy_potion_maps = 8;
  Index alchemy_stone_maps = 8;
  Index hh_steps = 1000;
  Index hh_grid = 80;
  double near_context_std = 0.1;
  double far_min_dist = 1.0;

  static TaskConfig defaults_for(TaskKind kind);
};

void to_json(json& j, const TaskConfig& c);
void from_json(const json& j, TaskConfig& c);

/// Episode-level token dimensions and loss layout implied by a task config.
struct IoShape {
  Index x_enc = 1;
  Index y_enc = 1;
  Index latent = 0;  // flat latent dim; 0 when no finite latent exists (GP)
  bool classification = false;
  std::vector<Index> class_blocks;  // logit blocks for (factored) cross-entropy
};

/// Episode-level dimensions implied by a config, without constructing the
/// family (no splits or pools).
IoShape task_io(const TaskConfig& cfg);

/// One sampled task: the latent plus per-instance frozen data.
struct TaskInstance {
  TaskKind kind = TaskKind::LinReg;
  Vec z;                     // continuous latent (flat)
  std::vector<int> z_tuple;  // categorical latent (compositional kinds)
  LatentSplit split = LatentSplit::Train;
  std::shared_ptr<const Vec> hh_voltage;  // solved membrane trace (HH)
  std::vector<std::array<int, 3>> raven_d3;  // distribute-three value sets
};

struct Episode {
  TaskInstance instance;
  std::vector<Vec> xs, ys;
  Vec query_x, query_y;
  QueryMode query_dist = QueryMode::Id;
  std::vector<Vec> choices;  // multiple-choice candidates (Raven)
  int answer_index = -1;

  Index n() const { return Index(xs.size()); }
};

// ---------------------------------------------------------------------------
// Hodgkin-Huxley integrator
// ---------------------------------------------------------------------------

/// Fixed constants of the HH system; only (g_na, g_k) vary across tasks.
struct HhConstants {
  double c_m = 1.0;        // uF/cm^2
  double g_leak = 0.1;     // mS/cm^2
  double e_leak = -70.0;   // mV
  double gbar_m = 0.07;    // slow K+ channel density
  double tau_max = 600.0;  // ms
  double v_t = -60.0;      // spike threshold shift
  double e_na = 53.0;
  double e_k = -107.0;
  double i_amp = 5e-4 / (M_PI * 70e-4 * 70e-4);  // step current, uA/cm^2
  double t_on = 10.0, t_off = 110.0;
  double noise_std = 0.0;  // Euler-Maruyama noise on V, disabled by default
  double v0 = -70.0;
  double t0 = 0.0, t1 = 120.0;
  // RK4 substeps per output-grid interval. The m-gate time constant drops
  // near 0.05 ms during an action potential upstroke, so the solver step
  // must sit well below the 0.12 ms observation grid.
  Index solver_substeps = 8;
};

/// RK4 integration of the 5-state system (V, m, h, n, p); returns V at
/// steps+1 uniformly spaced times. Throws if the state leaves finite range.
Vec hh_solve(double g_na, double g_k, Index steps = 1000,
             const HhConstants& c = HhConstants{}, Rng* noise_rng = nullptr);

/// The (g_na, g_k) sweep lattice: per_axis^2 pairs covering [0, g_max]^2.
std::vector<std::pair<double, double>> hh_sweep_grid(Index per_axis = 80,
                                                     double g_max = 40.0);

// ---------------------------------------------------------------------------
// Compositional splits
// ---------------------------------------------------------------------------

struct SplitResult {
  std::vector<std::vector<int>> train, heldout;
};

/// Splits the full product of component values into train/heldout sets such
/// that every component value occurs in train (full marginal support).
SplitResult latent_split(const std::vector<Index>& arity, double train_fraction,
                         Rng& rng);

// ---------------------------------------------------------------------------
// Task family: frozen experiment-level parameters + samplers
// ---------------------------------------------------------------------------

class TaskFamily {
 public:
  explicit TaskFamily(const TaskConfig& cfg);

  const TaskConfig& config() const { return cfg_; }
  const IoShape& io() const { return io_; }
  uint64_t fingerprint() const { return fingerprint_; }

  TaskInstance sample_task(Rng& rng, LatentSplit split = LatentSplit::Train) const;
  /// Instance with a caller-chosen latent (continuous kinds).
  TaskInstance instance_from_z(const Vec& z) const;
  /// Instance with a caller-chosen latent tuple (compositional kinds).
  TaskInstance instance_from_tuple(const std::vector<int>& tuple, Rng& rng) const;
  /// Copy of `base` with exactly one latent component resampled.
  TaskInstance resample_component(const TaskInstance& base, Index component,
                                  Rng& rng) const;
  Index latent_components(const TaskInstance& inst) const;

  /// Deterministic label for regression/MoE/Raven/Alchemy; class sample for
  /// classification kinds (which require `rng`).
  Vec label(const TaskInstance& inst, const Vec& x, Rng* rng = nullptr) const;
  /// Deterministic conditional: the regression mean, or class probabilities.
  Vec label_mean(const TaskInstance& inst, const Vec& x) const;

  Episode make_episode(Rng& rng, QueryMode mode = QueryMode::Id,
                       LatentSplit split = LatentSplit::Train) const;
  Episode make_episode_for(const TaskInstance& inst, Rng& rng,
                           QueryMode mode = QueryMode::Id) const;
  /// Same context/query inputs as `proto`, relabeled under `inst`.
  Episode relabel_episode(const Episode& proto, const TaskInstance& inst,
                          Rng& rng) const;

  /// Query input for the requested distribution, given the context inputs.
  Vec sample_query(const std::vector<Vec>& context_xs, QueryMode mode,
                   Rng& rng) const;

  /// Joint GP draw over all inputs (context + query) via Cholesky.
  Vec gp_sample_joint(const std::vector<Vec>& xs, Rng& rng) const;
  Mat gp_kernel(const std::vector<Vec>& a, const std::vector<Vec>& b) const;

  /// Analytically optimal prediction from the context (LinReg ridge solve,
  /// GP posterior mean, SinReg least squares on the known sine basis).
  Vec oracle_predict(const std::vector<Vec>& xs, const std::vector<Vec>& ys,
                     const Vec& query_x) const;

  /// Flat latent representation (one-hot concatenation for tuples).
  Vec latent_vec(const TaskInstance& inst) const;

  // Frozen experiment-level data.
  const Vec& sin_lambdas() const { return sin_lambdas_; }
  const std::vector<Mat>& moe_experts() const { return moe_experts_; }
  const std::vector<std::vector<int>>& train_combos() const { return split_.train; }
  const std::vector<std::vector<int>>& heldout_combos() const { return split_.heldout; }
  std::vector<Index> combo_arity() const;

  /// MoE expert application g_i (linear + tanh).
  Vec moe_apply(Index expert, const Vec& v) const;
  /// Test seam: replace the frozen expert weights.
  void override_moe_experts(std::vector<Mat> experts) { moe_experts_ = std::move(experts); }
  /// Alchemy transition: observed (stone, potion) -> observed stone.
  int alchemy_transition(const std::vector<int>& env, int stone, int potion) const;
  /// Raven: complete a row given its first two cells, per the instance rule.
  std::vector<int> raven_complete(const TaskInstance& inst,
                                  const std::vector<int>& cell1,
                                  const std::vector<int>& cell2) const;

 private:
  TaskConfig cfg_;
  IoShape io_;
  uint64_t fingerprint_ = 0;
  Vec sin_lambdas_;
  std::vector<Mat> moe_experts_;
  SplitResult split_;
  // Alchemy pools.
  std::vector<std::vector<int>> alchemy_graphs_;       // [stones*potions] result tables
  std::vector<std::vector<int>> alchemy_potion_maps_;  // permutations
  std::vector<std::vector<int>> alchemy_stone_maps_;
  // Memoized HH solves for grid tasks (guarded for parallel episode workers).
  mutable std::mutex hh_mutex_;
  mutable std::map<std::pair<double, double>, std::shared_ptr<const Vec>> hh_cache_;

  std::shared_ptr<const Vec> hh_trace(double g_na, double g_k) const;
};

// ---------------------------------------------------------------------------
// Episode JSONL exchange format
// ---------------------------------------------------------------------------

json episode_to_json(const TaskFamily& family, const Episode& ep);
Episode episode_from_json(const TaskFamily& family, const json& j);
void dump_episodes_jsonl(std::ostream& os, const TaskFamily& family,
                         const std::vector<Episode>& episodes);

}  // namespace icll
