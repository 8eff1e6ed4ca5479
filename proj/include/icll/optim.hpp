#pragma once

#include "icll/ops.hpp"
#include "icll/rng.hpp"

#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

namespace icll {

/// Ordered collection of named parameters. Order is insertion order and is
/// what the optimizer, checkpoint format and gradient clipping iterate over.
class ParamStore {
 public:
  Tensor& add(const std::string& name, Tensor t);
  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;
  bool contains(const std::string& name) const;

  std::vector<std::pair<std::string, Tensor>>& items() { return items_; }
  const std::vector<std::pair<std::string, Tensor>>& items() const { return items_; }

  void watch_all(Graph& g);
  void unwatch_all();
  void zero_grad();
  Index param_count() const;

 private:
  std::vector<std::pair<std::string, Tensor>> items_;
  std::unordered_map<std::string, size_t> index_;
};

/// Attaches all parameters to a graph for the scope's lifetime.
struct WatchScope {
  WatchScope(ParamStore& params, Graph& g) : params_(params) { params_.watch_all(g); }
  ~WatchScope() { params_.unwatch_all(); }
  ParamStore& params_;
};

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam with bias correction. Moment buffers are kept per parameter in store
/// order; `step` increments by exactly one per call.
class AdamState {
 public:
  AdamState() = default;
  AdamState(AdamConfig cfg, const ParamStore& params);

  /// Applies one update from the accumulated gradients. Throws on non-finite
  /// gradients (callers abort the run with diagnostics).
  void step(ParamStore& params);

  long step_count() const { return step_; }
  const AdamConfig& config() const { return cfg_; }

 private:
  AdamConfig cfg_;
  long step_ = 0;
  std::vector<Arr> m_, v_;
};

/// Scales all gradients so their global L2 norm is at most `max_norm`.
/// Returns the pre-clip norm.
double clip_global_norm(ParamStore& params, double max_norm);

/// Central-difference gradient check. Runs `f` once under a graph to get
/// analytic gradients of the scalar output w.r.t. every entry of `inputs`,
/// then perturbs each coordinate by +/- eps and reports
/// max |analytic - central| / (|analytic| + |central| + 1e-12).
using TensorFn = std::function<Tensor(std::vector<Tensor>&)>;
double finite_diff_check(const TensorFn& f, std::vector<Tensor> inputs,
                         double eps = 1e-5);

}  // namespace icll
