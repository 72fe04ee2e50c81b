#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "llr/allocate.hpp"
#include "llr/model.hpp"
#include "llr/schedule.hpp"

namespace llr {

enum class OptimizerKind { AdamW, AdamWLars, AdamWLamb };
enum class LrMode { Uniform, Llr };

struct OptimConfig {
  OptimizerKind optimizer = OptimizerKind::AdamW;
  double eta = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.1;
  double grad_clip = 1.0;
  double lamb_clip = 10.0;
  LrMode mode = LrMode::Uniform;
  PlanConfig plan_cfg;
  ScheduleConfig schedule_cfg;

  void validate() const;
};

template <typename S> struct AdamState {
  std::vector<Mat<S>> m;
  std::vector<Mat<S>> v;
};

struct StepStats {
  double grad_norm = 0.0;   // before clipping
  double clip_factor = 1.0; // multiplier applied to every gradient
  std::vector<double> effective_lrs; // after trust-ratio rescaling
};

/// Global-norm clipping, then one decoupled AdamW update per parameter group
/// with that group's learning rate. `t` is the 1-based update count used for
/// bias correction. Gradients are clipped in place.
template <typename S>
StepStats adamw_step(std::vector<Parameter<S>> &params,
                     std::vector<Mat<S>> &grads, AdamState<S> &state,
                     std::size_t t, std::span<const double> lrs,
                     const OptimConfig &opt);

std::string_view optimizer_name(OptimizerKind k);
std::optional<OptimizerKind> parse_optimizer(std::string_view name);
std::string_view lr_mode_name(LrMode m);
std::optional<LrMode> parse_lr_mode(std::string_view name);

} // namespace llr
