#include "llr/schedule.hpp"

#include <cmath>
#include <numbers>
#include <ostream>

#include "llr/error.hpp"
#include "llr/format.hpp"

namespace llr {

void ScheduleConfig::validate() const {
  if (t_max == 0) {
    throw Error(ErrorCode::InvalidConfig, "t_max must be positive");
  }
  if (warmup_steps >= t_max) {
    throw Error(ErrorCode::InvalidConfig, "warmup_steps must be < t_max");
  }
  if (recompute_interval == 0 || recompute_interval > t_max) {
    throw Error(ErrorCode::InvalidConfig,
                "recompute interval must lie in [1, t_max]");
  }
  if (t_switch == 0 || t_switch > recompute_interval) {
    throw Error(ErrorCode::InvalidConfig,
                "t_switch must lie in [1, recompute interval]");
  }
  if (!(active_fraction > 0.0 && active_fraction <= 1.0)) {
    throw Error(ErrorCode::InvalidConfig, "active_fraction must be in (0, 1]");
  }
  if (!(min_lr_fraction >= 0.0 && min_lr_fraction <= 1.0)) {
    throw Error(ErrorCode::InvalidConfig, "min_lr_fraction must be in [0, 1]");
  }
  if (base == BaseSchedule::Wsd &&
      !(wsd_stable_fraction > 0.0 && wsd_stable_fraction < 1.0)) {
    throw Error(ErrorCode::InvalidConfig,
                "wsd_stable_fraction must be in (0, 1)");
  }
}

std::size_t ScheduleConfig::active_end() const {
  return static_cast<std::size_t>(
      std::floor(active_fraction * static_cast<double>(t_max) + 1e-9));
}

std::size_t ScheduleConfig::expected_plan_count() const {
  // Steps run 0..t_max-1, so a boundary at t_max itself never fires.
  const std::size_t last = std::min(active_end(), t_max - 1);
  return last / recompute_interval + 1;
}

double base_lr_at(const ScheduleConfig &cfg, double peak, std::size_t t) {
  if (t > cfg.t_max) {
    throw Error(ErrorCode::StepOutOfRange,
                "step " + std::to_string(t) + " beyond t_max " +
                    std::to_string(cfg.t_max));
  }
  const std::size_t warm = cfg.warmup_steps;
  if (t < warm) {
    return peak * static_cast<double>(t) / static_cast<double>(warm);
  }
  const double floor = cfg.min_lr_fraction;
  const double span = static_cast<double>(cfg.t_max - warm);
  const double progress = static_cast<double>(t - warm) / span;

  switch (cfg.base) {
  case BaseSchedule::CosineWarmup:
    return peak * (floor + (1.0 - floor) * 0.5 *
                               (1.0 + std::cos(std::numbers::pi * progress)));
  case BaseSchedule::Wsd: {
    const double stable = cfg.wsd_stable_fraction;
    if (progress <= stable) {
      return peak;
    }
    const double decay = (progress - stable) / (1.0 - stable);
    return peak * (1.0 - (1.0 - floor) * decay);
  }
  }
  return peak;
}

LayerwiseSchedule::LayerwiseSchedule(ScheduleConfig cfg, PlanConfig plan_cfg,
                                     std::vector<std::string> layers,
                                     std::map<std::string, Role> roles)
    : cfg_(cfg), plan_cfg_(plan_cfg), layers_(std::move(layers)),
      roles_(std::move(roles)) {
  cfg_.validate();
  plan_cfg_.validate();
}

bool LayerwiseSchedule::on_step(std::size_t t, const AlphaProvider &alphas) {
  const std::size_t expected = step_ ? *step_ + 1 : 0;
  if (t != expected) {
    throw Error(ErrorCode::NonMonotonicStep,
                "expected step " + std::to_string(expected) + ", got " +
                    std::to_string(t));
  }
  if (t >= cfg_.t_max) {
    throw Error(ErrorCode::StepOutOfRange,
                "step " + std::to_string(t) + " at or beyond t_max");
  }
  step_ = t;

  if (!frozen_ && t > cfg_.active_end()) {
    frozen_ = true;
  }
  if (frozen_ || t % cfg_.recompute_interval != 0) {
    return false;
  }

  LRPlan plan = build_plan(alphas(t), roles_, plan_cfg_, t);
  // Layers the provider could not analyse keep the global rate.
  for (const auto &name : layers_) {
    if (!plan.find(name)) {
      plan.per_layer.push_back({name, plan_cfg_.eta});
    }
  }
  history_.push_back({t, std::move(plan)});
  return true;
}

void LayerwiseSchedule::push_plan(std::size_t t, LRPlan plan) {
  if (!history_.empty() && history_.back().step >= t) {
    throw Error(ErrorCode::NonMonotonicStep, "plans must be pushed in order");
  }
  plan.created_at_step = t;
  history_.push_back({t, std::move(plan)});
}

const PlanEpoch *LayerwiseSchedule::epoch_at(std::size_t t,
                                             const PlanEpoch **previous) const {
  *previous = nullptr;
  const PlanEpoch *current = nullptr;
  for (const auto &e : history_) {
    if (e.step > t) {
      break;
    }
    *previous = current;
    current = &e;
  }
  return current;
}

double LayerwiseSchedule::layer_lr_at(std::string_view layer,
                                      std::size_t t) const {
  const PlanEpoch *previous = nullptr;
  const PlanEpoch *current = epoch_at(t, &previous);
  if (current == nullptr) {
    for (const auto &name : layers_) {
      if (name == layer) {
        return base_lr_at(cfg_, plan_cfg_.eta, t);
      }
    }
    throw Error(ErrorCode::UnknownLayer,
                "layer '" + std::string(layer) + "' is not scheduled");
  }

  const double target_peak = current->plan.base_lr(layer);
  const double start_peak =
      previous ? previous->plan.base_lr(layer) : plan_cfg_.eta;
  const std::size_t T = current->step;
  const std::size_t window_end = T + cfg_.t_switch;

  if (cfg_.switch_mode == SwitchMode::Hard || start_peak == target_peak ||
      t >= window_end) {
    return base_lr_at(cfg_, target_peak, t);
  }

  const double start = base_lr_at(cfg_, start_peak, T);
  const double target =
      base_lr_at(cfg_, target_peak, std::min(window_end, cfg_.t_max));
  const double frac =
      static_cast<double>(t - T) / static_cast<double>(cfg_.t_switch);
  return start + (target - start) * frac;
}

double LayerwiseSchedule::global_lr_at(std::size_t t) const {
  return base_lr_at(cfg_, plan_cfg_.eta, t);
}

ScheduleState LayerwiseSchedule::state() const {
  ScheduleState s;
  s.step = step_.value_or(0);
  s.frozen = frozen_;
  if (!history_.empty()) {
    s.current_plan = history_.back().plan;
    s.last_recompute_step = history_.back().step;
    s.in_switch_until = history_.back().step + cfg_.t_switch;
  } else {
    s.current_plan = uniform_plan(layers_, plan_cfg_.eta);
  }
  s.previous_plan = history_.size() >= 2
                        ? history_[history_.size() - 2].plan
                        : uniform_plan(layers_, plan_cfg_.eta);
  return s;
}

double layer_lr_at(const LayerwiseSchedule &schedule, std::string_view layer,
                   std::size_t t) {
  return schedule.layer_lr_at(layer, t);
}

std::vector<TimelineRow> export_timeline(const LayerwiseSchedule &schedule,
                                         std::size_t steps) {
  std::vector<TimelineRow> rows;
  rows.reserve(steps * schedule.layers().size());
  for (std::size_t t = 0; t < steps; ++t) {
    for (const auto &layer : schedule.layers()) {
      rows.push_back({t, layer, schedule.layer_lr_at(layer, t)});
    }
  }
  return rows;
}

void write_timeline_csv(std::ostream &out,
                        const std::vector<TimelineRow> &rows) {
  out << "step,layer,lr\n";
  for (const auto &row : rows) {
    out << row.step << ',' << row.layer << ',' << format_double(row.lr) << '\n';
  }
}

std::string_view base_schedule_name(BaseSchedule b) {
  return b == BaseSchedule::Wsd ? "wsd" : "cosine";
}

std::optional<BaseSchedule> parse_base_schedule(std::string_view name) {
  if (name == "cosine") return BaseSchedule::CosineWarmup;
  if (name == "wsd") return BaseSchedule::Wsd;
  return std::nullopt;
}

} // namespace llr
