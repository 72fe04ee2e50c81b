#include "llr/commands.hpp"

#include <cmath>
#include <limits>
#include <map>
#include <sstream>

#include "llr/error.hpp"
#include "llr/io.hpp"

namespace llr {

AnalysisReport cmd_analyze(const std::vector<WeightMatrix> &mats,
                           const FitConfig &fit,
                           const std::optional<PlanConfig> &plan_cfg) {
  AnalysisReport report;
  report.fit = fit;
  report.plan_cfg = plan_cfg;

  std::vector<SpectralSummary> ok;
  for (const auto &w : mats) {
    if (w.role == Role::NonMatrix) {
      continue;
    }
    LayerRecord rec;
    rec.name = w.name;
    rec.role = w.role;
    try {
      rec.summary = summarize(w, fit);
      ok.push_back(*rec.summary);
    } catch (const Error &e) {
      rec.error = std::string(error_code_name(e.code())) + ": " + e.what();
    }
    report.layers.push_back(std::move(rec));
  }
  if (ok.empty()) {
    throw Error(ErrorCode::EmptyInput, "no analysable matrix in the input");
  }

  report.alpha_min = std::numeric_limits<double>::infinity();
  report.alpha_max = -std::numeric_limits<double>::infinity();
  for (const auto &s : ok) {
    if (std::isfinite(s.alpha)) {
      report.alpha_min = std::min(report.alpha_min, s.alpha);
      report.alpha_max = std::max(report.alpha_max, s.alpha);
    }
  }
  report.alpha_std = alpha_std(ok);

  if (plan_cfg) {
    std::vector<LayerAlpha> alphas;
    std::map<std::string, Role> roles;
    for (const auto &s : ok) {
      alphas.push_back({s.layer_name, s.alpha});
      roles[s.layer_name] = s.role;
    }
    report.plan = build_plan(alphas, roles, *plan_cfg);
    for (auto &rec : report.layers) {
      if (rec.summary) {
        rec.assigned_lr = report.plan->base_lr(rec.name);
      }
    }
  }
  return report;
}

std::string render_report(const AnalysisReport &report) {
  JsonWriter w;
  w.begin_object();
  w.key("method").value(std::string(fit_method_name(report.fit.method)));
  if (report.plan_cfg) {
    const auto &p = *report.plan_cfg;
    w.key("plan").begin_object()
        .key("eta").value(p.eta)
        .key("s").value(p.s)
        .key("assignment").value(std::string(assignment_name(p.assignment)))
        .key("embedding_override").value(p.embedding_override)
        .end_object();
  } else {
    w.key("plan").null();
  }
  w.key("alpha_min").value(report.alpha_min);
  w.key("alpha_max").value(report.alpha_max);
  w.key("alpha_std").value(report.alpha_std);
  w.key("layers").begin_array();
  for (const auto &rec : report.layers) {
    w.begin_object();
    w.key("name").value(rec.name);
    w.key("role").value(std::string(role_name(rec.role)));
    if (rec.summary) {
      const auto &s = *rec.summary;
      w.key("n_eff").value(s.n_eff)
          .key("k_used").value(s.k_used)
          .key("alpha").value(s.alpha)
          .key("lambda_max").value(s.lambda_max)
          .key("fro_norm").value(s.fro_norm)
          .key("spec_norm").value(s.spec_norm);
      if (rec.assigned_lr) {
        w.key("assigned_lr").value(*rec.assigned_lr);
      }
    } else {
      w.key("error").value(rec.error);
    }
    w.end_object();
  }
  w.end_array();
  w.end_object();
  return w.str();
}

std::string render_plan(const AnalysisReport &report) {
  if (!report.plan || !report.plan_cfg) {
    throw Error(ErrorCode::InvalidConfig, "report carries no plan");
  }
  const auto &p = *report.plan_cfg;
  const auto &plan = *report.plan;
  JsonWriter w;
  w.begin_object()
      .key("eta").value(p.eta)
      .key("s").value(p.s)
      .key("assignment").value(std::string(assignment_name(p.assignment)))
      .key("method").value(std::string(fit_method_name(report.fit.method)))
      .key("embedding_override").value(p.embedding_override)
      .key("created_at_step").value(plan.created_at_step)
      .key("alpha_min").value(plan.alpha_min)
      .key("alpha_max").value(plan.alpha_max)
      .key("alpha_std").value(report.alpha_std);
  w.key("layers").begin_array();
  for (const auto &rec : report.layers) {
    if (!rec.summary) {
      continue;
    }
    w.begin_object()
        .key("name").value(rec.name)
        .key("role").value(std::string(role_name(rec.role)))
        .key("alpha").value(rec.summary->alpha)
        .key("base_lr").value(plan.base_lr(rec.name))
        .end_object();
  }
  w.end_array().end_object();
  return w.str();
}

LayerwiseSchedule frozen_alpha_schedule(const AnalysisReport &report,
                                        const ScheduleConfig &cfg,
                                        const PlanConfig &plan_cfg) {
  std::vector<std::string> layers;
  std::map<std::string, Role> roles;
  std::vector<LayerAlpha> alphas;
  for (const auto &rec : report.layers) {
    if (!rec.summary) {
      continue;
    }
    layers.push_back(rec.name);
    roles[rec.name] = rec.role;
    alphas.push_back({rec.name, rec.summary->alpha});
  }
  LayerwiseSchedule schedule(cfg, plan_cfg, layers, roles);
  for (std::size_t t = 0; t < cfg.t_max; ++t) {
    schedule.on_step(t, [&](std::size_t) { return alphas; });
  }
  return schedule;
}

std::string cmd_schedule(const AnalysisReport &report, const ScheduleConfig &cfg,
                         const PlanConfig &plan_cfg) {
  const LayerwiseSchedule schedule = frozen_alpha_schedule(report, cfg, plan_cfg);
  std::ostringstream out;
  write_timeline_csv(out, export_timeline(schedule, cfg.t_max));
  return out.str();
}

std::string render_run_summary(const TrainConfig &cfg, const TrainRun &run) {
  JsonWriter w;
  w.begin_object()
      .key("mode").value(std::string(lr_mode_name(cfg.optim.mode)))
      .key("optimizer").value(std::string(optimizer_name(cfg.optim.optimizer)))
      .key("steps_completed").value(run.steps_completed)
      .key("diverged").value(run.diverged);
  if (run.diverged) {
    w.key("failure").value(run.failure);
  }
  w.key("final_loss").value(run.final_loss);
  double mean_std = 0.0;
  for (double s : run.alpha_std_history) {
    mean_std += s;
  }
  if (!run.alpha_std_history.empty()) {
    mean_std /= static_cast<double>(run.alpha_std_history.size());
  }
  w.key("mean_alpha_std").value(mean_std);
  w.key("recomputes").begin_array();
  for (std::size_t i = 0; i < run.alpha_history.size(); ++i) {
    w.begin_object()
        .key("step").value(run.alpha_steps[i])
        .key("alpha_std").value(run.alpha_std_history[i]);
    w.key("layers").begin_array();
    for (const auto &s : run.alpha_history[i]) {
      w.begin_object().key("name").value(s.layer_name).key("alpha").value(s.alpha);
      for (const auto &epoch : run.plans) {
        if (epoch.step == run.alpha_steps[i]) {
          w.key("base_lr").value(epoch.plan.base_lr(s.layer_name));
        }
      }
      w.end_object();
    }
    w.end_array().end_object();
  }
  w.end_array().end_object();
  return w.str();
}

TrainRun cmd_train(const TrainConfig &cfg, const std::filesystem::path &out_dir) {
  TrainRun run = run_training(cfg);
  std::filesystem::create_directories(out_dir);

  std::ostringstream timeline;
  write_timeline_csv(timeline, run.lr_timeline);
  write_file(out_dir / "timeline.csv", timeline.str());

  std::ostringstream losses;
  losses << "step,loss\n";
  for (std::size_t t = 0; t < run.losses.size(); ++t) {
    losses << t << ',' << format_double(run.losses[t]) << '\n';
  }
  write_file(out_dir / "losses.csv", losses.str());
  write_file(out_dir / "summary.json", render_run_summary(cfg, run));
  return run;
}

} // namespace llr
