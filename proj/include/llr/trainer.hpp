#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "llr/corpus.hpp"
#include "llr/htsr.hpp"
#include "llr/model.hpp"
#include "llr/optim.hpp"
#include "llr/schedule.hpp"

namespace llr {

enum class Precision { F32, F64 };

struct TrainConfig {
  ModelConfig model;
  OptimConfig optim;
  DataConfig data;
  FitConfig fit;
  std::size_t steps = 2000;
  std::size_t batch_size = 16;
  double warmup_fraction = 0.1;
  std::size_t eval_batches = 8;
  double holdout_fraction = 0.1;
  std::uint64_t sample_seed = 0; // batch order; mixed with model.seed
  Precision precision = Precision::F32;

  void validate() const;

  /// optim.schedule_cfg with t_max and warmup derived from steps.
  ScheduleConfig effective_schedule() const;
};

/// Telemetry of one training run.
struct TrainRun {
  std::vector<double> losses;
  /// Per-step learning rate applied to each matrix layer (timeline order).
  std::vector<TimelineRow> lr_timeline;
  /// Matrix layers, in parameter order.
  std::vector<std::string> layers;
  std::vector<PlanEpoch> plans; // empty in Uniform mode
  std::vector<std::size_t> alpha_steps;
  std::vector<std::vector<SpectralSummary>> alpha_history;
  std::vector<double> alpha_std_history;
  double final_loss = 0.0;
  std::size_t steps_completed = 0;
  bool diverged = false;
  std::string failure;
};

/// Population standard deviation of the finite alphas.
double alpha_std(const std::vector<SpectralSummary> &summaries);

/// Spectral summaries of every analysable matrix; layers that cannot be fit
/// (too few positive eigenvalues, flat spectrum) are skipped.
std::vector<SpectralSummary> sweep_alphas(const std::vector<WeightMatrix> &mats,
                                          const FitConfig &fit);

TrainRun run_training(const TrainConfig &cfg);

/// `run_training` with a per-step callback hook; the callback sees each step
/// index and the learning rates applied to every parameter.
struct TrainHooks {
  std::function<void(std::size_t, const std::vector<double> &)> on_lrs;
};
TrainRun run_training(const TrainConfig &cfg, const TrainHooks &hooks);

} // namespace llr
