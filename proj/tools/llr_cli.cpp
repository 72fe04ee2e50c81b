// Command-line front end: analyze, plan, schedule, train.

#include <cstdio>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "llr/commands.hpp"
#include "llr/error.hpp"
#include "llr/io.hpp"

namespace {

constexpr int kUsage = 2;

void report_error(const std::string &code, const std::string &message) {
  nlohmann::json rec{{"error", code}, {"message", message}};
  std::cerr << rec.dump() << '\n';
}

void emit(const std::string &text, const std::string &out) {
  if (out.empty() || out == "-") {
    std::cout << text;
  } else {
    llr::write_file(out, text);
  }
}

struct PlanFlags {
  double eta = 1e-3;
  double s = 5.0;
  std::string assignment = "linear";
  bool no_embedding_override = false;
  bool set = false;

  void add_to(CLI::App *cmd, bool required) {
    auto *e = cmd->add_option("--eta", eta, "Global learning rate");
    auto *sc = cmd->add_option("--s", s, "Upper scaling ratio (plan range [eta, s*eta])");
    cmd->add_option("--assignment", assignment, "linear|sqrt|log2|linear-inv")
        ->check(CLI::IsMember({"linear", "sqrt", "log2", "linear-inv"}));
    cmd->add_flag("--no-embedding-override", no_embedding_override,
                  "Do not pin embedding/output head at the upper bound");
    if (required) {
      e->required();
      sc->required();
    }
  }

  std::optional<llr::PlanConfig> config(const CLI::App *cmd) const {
    if (cmd->count("--eta") == 0 && cmd->count("--s") == 0 &&
        cmd->count("--assignment") == 0) {
      return std::nullopt;
    }
    llr::PlanConfig p;
    p.eta = eta;
    p.s = s;
    p.assignment = *llr::parse_assignment(assignment);
    p.embedding_override = !no_embedding_override;
    p.validate();
    return p;
  }
};

} // namespace

int main(int argc, char **argv) {
  CLI::App app{"Spectral layerwise learning-rate toolkit"};
  app.require_subcommand(1);

  std::string manifest;
  std::string method = "median";
  std::string out;
  auto add_fit = [&](CLI::App *cmd) {
    cmd->add_option("--manifest", manifest, "Weight manifest (JSON)")->required();
    cmd->add_option("--method", method, "median|fixfinger|gof")
        ->check(CLI::IsMember({"median", "fixfinger", "gof"}));
  };

  auto *analyze = app.add_subcommand("analyze", "Per-layer ESD and alpha report");
  add_fit(analyze);
  PlanFlags analyze_plan;
  analyze_plan.add_to(analyze, false);
  analyze->add_option("--out", out, "Report path ('-' for stdout)");

  auto *plan = app.add_subcommand("plan", "Per-layer learning-rate plan");
  add_fit(plan);
  PlanFlags plan_flags;
  plan_flags.add_to(plan, false);
  plan->add_option("--out", out, "Plan path ('-' for stdout)");

  auto *schedule = app.add_subcommand(
      "schedule", "Per-step per-layer LR timeline with alphas frozen from a manifest");
  add_fit(schedule);
  PlanFlags sched_plan;
  sched_plan.add_to(schedule, false);
  llr::ScheduleConfig sched_cfg;
  std::string base = "cosine";
  std::string switch_mode = "soft";
  std::size_t warmup = 0;
  bool warmup_set = false;
  schedule->add_option("--steps", sched_cfg.t_max, "Total steps")->required();
  schedule->add_option("--interval", sched_cfg.recompute_interval, "Recompute interval");
  schedule->add_option("--switch", sched_cfg.t_switch, "Soft-switch window");
  schedule->add_option("--active", sched_cfg.active_fraction, "Active-phase fraction");
  schedule->add_option("--base", base, "cosine|wsd")->check(CLI::IsMember({"cosine", "wsd"}));
  schedule->add_option("--switch-mode", switch_mode, "soft|hard")
      ->check(CLI::IsMember({"soft", "hard"}));
  schedule->add_option("--warmup", warmup, "Warmup steps (default 10% of steps)")
      ->each([&](const std::string &) { warmup_set = true; });
  schedule->add_option("--min-lr-fraction", sched_cfg.min_lr_fraction, "Decay floor");
  schedule->add_option("--out", out, "CSV path ('-' for stdout)");

  auto *train = app.add_subcommand("train", "Train the toy transformer from a config file");
  std::string config_path;
  train->add_option("--config", config_path, "Run config (JSON)")->required();
  train->add_option("--out", out, "Output directory")->required();

  auto *init = app.add_subcommand("init-config", "Write the default run config");
  init->add_option("--out", out, "Config path ('-' for stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kUsage;
  }

  try {
    llr::FitConfig fit;
    fit.method = *llr::parse_fit_method(method);

    if (analyze->parsed()) {
      std::vector<std::string> warnings;
      const auto mats = llr::load_manifest(manifest, &warnings);
      for (const auto &w : warnings) {
        std::cerr << nlohmann::json{{"warning", w}}.dump() << '\n';
      }
      const auto report = llr::cmd_analyze(mats, fit, analyze_plan.config(analyze));
      emit(llr::render_report(report), out);
    } else if (plan->parsed()) {
      auto cfg = plan_flags.config(plan);
      if (!cfg) {
        cfg = llr::PlanConfig{};
      }
      const auto report = llr::cmd_analyze(llr::load_manifest(manifest), fit, cfg);
      emit(llr::render_plan(report), out);
    } else if (schedule->parsed()) {
      auto cfg = sched_plan.config(schedule);
      if (!cfg) {
        cfg = llr::PlanConfig{};
      }
      sched_cfg.base = *llr::parse_base_schedule(base);
      sched_cfg.switch_mode =
          switch_mode == "hard" ? llr::SwitchMode::Hard : llr::SwitchMode::Soft;
      sched_cfg.warmup_steps = warmup_set ? warmup : sched_cfg.t_max / 10;
      sched_cfg.validate();
      const auto report = llr::cmd_analyze(llr::load_manifest(manifest), fit, cfg);
      emit(llr::cmd_schedule(report, sched_cfg, *cfg), out);
    } else if (train->parsed()) {
      const auto cfg = llr::load_train_config(config_path);
      const auto run = llr::cmd_train(cfg, out);
      if (run.diverged) {
        report_error("DivergedLoss", run.failure);
        return llr::exit_status(llr::ErrorCode::DivergedLoss);
      }
      std::cout << "final_loss " << llr::format_double(run.final_loss) << '\n';
    } else if (init->parsed()) {
      emit(llr::render_train_config(llr::TrainConfig{}), out);
    }
  } catch (const llr::Error &e) {
    report_error(std::string(llr::error_code_name(e.code())), e.what());
    return llr::exit_status(e.code());
  } catch (const std::exception &e) {
    report_error("InternalError", e.what());
    return 4;
  }
  return 0;
}
