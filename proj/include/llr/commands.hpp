#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "llr/allocate.hpp"
#include "llr/htsr.hpp"
#include "llr/schedule.hpp"
#include "llr/spectral.hpp"
#include "llr/trainer.hpp"

namespace llr {

struct LayerRecord {
  std::string name;
  Role role = Role::Other2D;
  std::optional<SpectralSummary> summary; // empty when the layer failed
  std::optional<double> assigned_lr;
  std::string error; // failure reason, empty on success
};

struct AnalysisReport {
  std::vector<LayerRecord> layers;
  FitConfig fit;
  std::optional<PlanConfig> plan_cfg;
  std::optional<LRPlan> plan;
  double alpha_min = 0.0;
  double alpha_max = 0.0;
  double alpha_std = 0.0;
};

/// Spectral sweep over every matrix; a failing layer is recorded with its
/// error rather than aborting the sweep. With `plan_cfg` each analysed layer
/// also receives its planned learning rate.
AnalysisReport cmd_analyze(const std::vector<WeightMatrix> &mats,
                           const FitConfig &fit,
                           const std::optional<PlanConfig> &plan_cfg);

/// JSON document of the report.
std::string render_report(const AnalysisReport &report);

/// JSON LRPlan document; requires report.plan.
std::string render_plan(const AnalysisReport &report);

/// Schedule whose plans are rebuilt from the report's frozen alphas at every
/// recompute boundary of a `cfg.t_max`-step run.
LayerwiseSchedule frozen_alpha_schedule(const AnalysisReport &report,
                                        const ScheduleConfig &cfg,
                                        const PlanConfig &plan_cfg);

/// Timeline CSV of the frozen-alpha schedule.
std::string cmd_schedule(const AnalysisReport &report, const ScheduleConfig &cfg,
                         const PlanConfig &plan_cfg);

/// Run-summary JSON: final loss, plans, per-recompute alphas, alpha std.
std::string render_run_summary(const TrainConfig &cfg, const TrainRun &run);

/// Runs training and writes summary.json, timeline.csv and losses.csv to
/// `out_dir`.
TrainRun cmd_train(const TrainConfig &cfg, const std::filesystem::path &out_dir);

} // namespace llr
