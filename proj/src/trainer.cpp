#include "llr/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <random>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "llr/error.hpp"

namespace llr {

namespace {

std::vector<std::vector<Token>> sample_windows(const std::vector<Token> &tokens,
                                               std::size_t begin, std::size_t end,
                                               std::size_t count, std::size_t len,
                                               std::mt19937_64 &rng) {
  std::uniform_int_distribution<std::size_t> start(begin, end - len);
  std::vector<std::vector<Token>> out(count);
  for (auto &seq : out) {
    const std::size_t s = start(rng);
    seq.assign(tokens.begin() + static_cast<std::ptrdiff_t>(s),
               tokens.begin() + static_cast<std::ptrdiff_t>(s + len));
  }
  return out;
}

template <typename S>
TrainRun train_impl(const TrainConfig &cfg, const TrainHooks &hooks) {
  cfg.validate();
  TrainRun run;

  Transformer<S> model(cfg.model);
  const std::vector<Token> tokens = gen_corpus(cfg.data);
  const std::size_t window = cfg.model.context + 1;
  const auto split = static_cast<std::size_t>(
      static_cast<double>(tokens.size()) * (1.0 - cfg.holdout_fraction));

  const ScheduleConfig sched_cfg = cfg.effective_schedule();
  PlanConfig plan_cfg = cfg.optim.plan_cfg;
  plan_cfg.eta = cfg.optim.eta;

  auto &params = model.params();
  std::map<std::string, Role> roles;
  for (const auto &p : params) {
    if (p.role != Role::NonMatrix) {
      run.layers.push_back(p.name);
      roles[p.name] = p.role;
    }
  }
  LayerwiseSchedule schedule(sched_cfg, plan_cfg, run.layers, roles);

  std::mt19937_64 sampler(cfg.model.seed * 0x9e3779b97f4a7c15ULL +
                          cfg.sample_seed + 1);
  AdamState<S> adam;
  std::vector<Mat<S>> grads;
  std::vector<double> lrs(params.size());
  run.lr_timeline.reserve(cfg.steps * run.layers.size());

  for (std::size_t t = 0; t < cfg.steps; ++t) {
    const Batch batch =
        make_batch(sample_windows(tokens, 0, split, cfg.batch_size, window, sampler));
    const double loss = static_cast<double>(model.loss_and_grad(batch, grads));
    if (!std::isfinite(loss)) {
      run.diverged = true;
      run.failure = "loss became non-finite at step " + std::to_string(t);
      break;
    }
    run.losses.push_back(loss);

    std::optional<std::vector<SpectralSummary>> sweep;
    auto measure = [&]() -> const std::vector<SpectralSummary> & {
      if (!sweep) {
        sweep = sweep_alphas(model.weight_matrices(), cfg.fit);
        run.alpha_steps.push_back(t);
        run.alpha_std_history.push_back(alpha_std(*sweep));
        run.alpha_history.push_back(*sweep);
      }
      return *sweep;
    };

    if (cfg.optim.mode == LrMode::Llr) {
      schedule.on_step(t, [&](std::size_t) {
        std::vector<LayerAlpha> alphas;
        for (const auto &s : measure()) {
          alphas.push_back({s.layer_name, s.alpha});
        }
        return alphas;
      });
      for (std::size_t i = 0; i < params.size(); ++i) {
        lrs[i] = params[i].role == Role::NonMatrix
                     ? schedule.global_lr_at(t)
                     : schedule.layer_lr_at(params[i].name, t);
      }
    } else {
      if (t % sched_cfg.recompute_interval == 0 && t <= sched_cfg.active_end()) {
        measure();
      }
      const double lr = base_lr_at(sched_cfg, cfg.optim.eta, t);
      std::fill(lrs.begin(), lrs.end(), lr);
    }

    for (std::size_t i = 0; i < params.size(); ++i) {
      if (params[i].role != Role::NonMatrix) {
        run.lr_timeline.push_back({t, params[i].name, lrs[i]});
      }
    }
    if (hooks.on_lrs) {
      hooks.on_lrs(t, lrs);
    }

    adamw_step(params, grads, adam, t + 1, lrs, cfg.optim);
    run.steps_completed = t + 1;
  }

  if (cfg.optim.mode == LrMode::Llr) {
    run.plans = schedule.history();
  }
  if (run.diverged) {
    run.final_loss = std::numeric_limits<double>::quiet_NaN();
    return run;
  }

  std::mt19937_64 eval_rng(cfg.data.seed ^ 0xe7a1e7a1e7a1e7a1ULL);
  double eval = 0.0;
  for (std::size_t b = 0; b < cfg.eval_batches; ++b) {
    const Batch batch = make_batch(sample_windows(tokens, split, tokens.size(),
                                                  cfg.batch_size, window, eval_rng));
    eval += static_cast<double>(model.forward_loss(batch));
  }
  run.final_loss = eval / static_cast<double>(cfg.eval_batches);
  if (!std::isfinite(run.final_loss)) {
    run.diverged = true;
    run.failure = "evaluation loss is non-finite";
  }
  return run;
}

} // namespace

void TrainConfig::validate() const {
  model.validate();
  optim.validate();
  optim.plan_cfg.validate();
  if (data.vocab != model.vocab) {
    throw Error(ErrorCode::InvalidConfig, "data vocab must equal model vocab");
  }
  if (steps == 0 || batch_size == 0 || eval_batches == 0) {
    throw Error(ErrorCode::InvalidConfig, "steps, batch_size, eval_batches must be positive");
  }
  if (!(warmup_fraction >= 0.0 && warmup_fraction < 1.0)) {
    throw Error(ErrorCode::InvalidConfig, "warmup_fraction must be in [0, 1)");
  }
  if (!(holdout_fraction > 0.0 && holdout_fraction < 1.0)) {
    throw Error(ErrorCode::InvalidConfig, "holdout_fraction must be in (0, 1)");
  }
  const auto holdout = static_cast<std::size_t>(
      static_cast<double>(data.length) * holdout_fraction);
  if (holdout < model.context + 2 || data.length - holdout < model.context + 2) {
    throw Error(ErrorCode::InvalidConfig, "corpus too short for the context length");
  }
  effective_schedule().validate();
}

ScheduleConfig TrainConfig::effective_schedule() const {
  ScheduleConfig s = optim.schedule_cfg;
  s.t_max = steps;
  s.warmup_steps = static_cast<std::size_t>(
      std::floor(warmup_fraction * static_cast<double>(steps)));
  return s;
}

double alpha_std(const std::vector<SpectralSummary> &summaries) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto &s : summaries) {
    if (std::isfinite(s.alpha)) {
      sum += s.alpha;
      ++n;
    }
  }
  if (n == 0) {
    return 0.0;
  }
  const double mean = sum / static_cast<double>(n);
  double var = 0.0;
  for (const auto &s : summaries) {
    if (std::isfinite(s.alpha)) {
      var += (s.alpha - mean) * (s.alpha - mean);
    }
  }
  return std::sqrt(var / static_cast<double>(n));
}

std::vector<SpectralSummary> sweep_alphas(const std::vector<WeightMatrix> &mats,
                                          const FitConfig &fit) {
  std::vector<SpectralSummary> out;
  out.reserve(mats.size());
  for (const auto &w : mats) {
    try {
      out.push_back(summarize(w, fit));
    } catch (const Error &e) {
      if (e.code() != ErrorCode::TooFewEigenvalues &&
          e.code() != ErrorCode::ZeroCutoff) {
        throw;
      }
    }
  }
  return out;
}

TrainRun run_training(const TrainConfig &cfg) { return run_training(cfg, {}); }

TrainRun run_training(const TrainConfig &cfg, const TrainHooks &hooks) {
#if defined(__GLIBC__)
  // Per-step activations are a few hundred KiB each; without this glibc hands
  // them to mmap/munmap on every step and a quarter of the run goes to the
  // kernel.
  mallopt(M_MMAP_THRESHOLD, 64 << 20);
  mallopt(M_TRIM_THRESHOLD, 256 << 20);
#endif
  return cfg.precision == Precision::F64 ? train_impl<double>(cfg, hooks)
                                         : train_impl<float>(cfg, hooks);
}

} // namespace llr
