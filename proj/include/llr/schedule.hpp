#pragma once

#include <cstddef>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "llr/allocate.hpp"

namespace llr {

enum class BaseSchedule { CosineWarmup, Wsd };
enum class SwitchMode { Soft, Hard };

struct ScheduleConfig {
  BaseSchedule base = BaseSchedule::CosineWarmup;
  std::size_t t_max = 1000;
  std::size_t warmup_steps = 100;
  double min_lr_fraction = 0.0;
  std::size_t recompute_interval = 100;
  std::size_t t_switch = 50;
  double active_fraction = 0.2;
  SwitchMode switch_mode = SwitchMode::Soft;
  double wsd_stable_fraction = 0.8;

  void validate() const;

  /// Last step at which a plan may still be recomputed.
  std::size_t active_end() const;

  /// Plans a full run of t_max steps produces.
  std::size_t expected_plan_count() const;
};

/// Global schedule value at step t for peak learning rate `peak`.
double base_lr_at(const ScheduleConfig &cfg, double peak, std::size_t t);

struct PlanEpoch {
  std::size_t step = 0;
  LRPlan plan;
};

/// Snapshot of the scheduler's mutable state.
struct ScheduleState {
  std::size_t step = 0;
  LRPlan current_plan;
  LRPlan previous_plan;
  std::size_t last_recompute_step = 0;
  std::size_t in_switch_until = 0;
  bool frozen = false;
};

using AlphaProvider = std::function<std::vector<LayerAlpha>(std::size_t step)>;

/// Per-layer learning-rate trajectory: periodic plan recompute during the
/// active phase, linear look-ahead blending into each new plan, and the base
/// schedule scaled by every layer's planned peak.
///
/// Before the first plan, and for layers whose planned LR did not change
/// across a recompute, the layer follows base_lr_at directly.
class LayerwiseSchedule {
public:
  LayerwiseSchedule(ScheduleConfig cfg, PlanConfig plan_cfg,
                    std::vector<std::string> layers,
                    std::map<std::string, Role> roles);

  /// Advance to step t (0, 1, 2, ...). Returns true when a new plan was built.
  bool on_step(std::size_t t, const AlphaProvider &alphas);

  double layer_lr_at(std::string_view layer, std::size_t t) const;

  /// Learning rate for parameters outside the plan (norm gains, etc).
  double global_lr_at(std::size_t t) const;

  ScheduleState state() const;
  const std::vector<PlanEpoch> &history() const { return history_; }
  const std::vector<std::string> &layers() const { return layers_; }
  const ScheduleConfig &config() const { return cfg_; }
  const PlanConfig &plan_config() const { return plan_cfg_; }
  bool frozen() const { return frozen_; }

  /// Appends an externally built plan at step t; used for offline timelines.
  void push_plan(std::size_t t, LRPlan plan);

private:
  const PlanEpoch *epoch_at(std::size_t t, const PlanEpoch **previous) const;

  ScheduleConfig cfg_;
  PlanConfig plan_cfg_;
  std::vector<std::string> layers_;
  std::map<std::string, Role> roles_;
  std::vector<PlanEpoch> history_;
  std::optional<std::size_t> step_;
  bool frozen_ = false;
};

/// Free-function form of LayerwiseSchedule::layer_lr_at.
double layer_lr_at(const LayerwiseSchedule &schedule, std::string_view layer,
                   std::size_t t);

struct TimelineRow {
  std::size_t step = 0;
  std::string layer;
  double lr = 0.0;
};

/// Dense step-major table for steps [0, steps), layers in schedule order.
std::vector<TimelineRow> export_timeline(const LayerwiseSchedule &schedule,
                                         std::size_t steps);

/// `step,layer,lr` CSV, LF line endings, 17 significant digits.
void write_timeline_csv(std::ostream &out, const std::vector<TimelineRow> &rows);

std::string_view base_schedule_name(BaseSchedule b);
std::optional<BaseSchedule> parse_base_schedule(std::string_view name);

} // namespace llr
