#include <doctest.h>

#include <cmath>
#include <random>
#include <set>
#include <sstream>

#include "llr/error.hpp"
#include "llr/schedule.hpp"

using namespace llr;

namespace {

ErrorCode code_of(auto &&fn) {
  try {
    fn();
  } catch (const Error &e) {
    return e.code();
  }
  FAIL("expected an llr::Error");
  return ErrorCode::IoError;
}

// Warmup-free WSD whose stable phase covers the first 90% of steps.
ScheduleConfig flat_config(std::size_t t_max = 1000) {
  ScheduleConfig c;
  c.base = BaseSchedule::Wsd;
  c.t_max = t_max;
  c.warmup_steps = 0;
  c.wsd_stable_fraction = 0.9;
  c.recompute_interval = 100;
  c.t_switch = 50;
  c.active_fraction = 1.0;
  return c;
}

PlanConfig plan_config(double s = 5.0) {
  PlanConfig p;
  p.eta = 1e-3;
  p.s = s;
  return p;
}

LRPlan single(const std::string &layer, double lr) {
  LRPlan p;
  p.per_layer = {{layer, lr}};
  return p;
}

} // namespace

TEST_CASE("base schedule shape") {
  ScheduleConfig c;
  c.t_max = 1000;
  c.warmup_steps = 100;
  CHECK(base_lr_at(c, 1e-3, 0) == 0.0);
  CHECK(base_lr_at(c, 1e-3, 50) == doctest::Approx(0.5e-3).epsilon(1e-15));
  CHECK(base_lr_at(c, 1e-3, 100) == 1e-3);
  CHECK(std::abs(base_lr_at(c, 1e-3, 550) - 0.5e-3) <= 1e-12 * 1e-3);
  CHECK(base_lr_at(c, 1e-3, 1000) == doctest::Approx(0.0).epsilon(1e-18));

  c.min_lr_fraction = 0.1;
  CHECK(base_lr_at(c, 1e-3, 1000) == doctest::Approx(1e-4).epsilon(1e-12));
  CHECK(code_of([&] { base_lr_at(c, 1e-3, 1001); }) == ErrorCode::StepOutOfRange);

  ScheduleConfig w = c;
  w.base = BaseSchedule::Wsd;
  w.min_lr_fraction = 0.0;
  w.wsd_stable_fraction = 0.8;
  // Warmup 100, stable through step 100 + 0.8 * 900 = 820, then linear to 0.
  CHECK(base_lr_at(w, 2.0, 500) == 2.0);
  CHECK(base_lr_at(w, 2.0, 820) == 2.0);
  CHECK(base_lr_at(w, 2.0, 910) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(base_lr_at(w, 2.0, 1000) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("config validation") {
  ScheduleConfig c;
  c.t_switch = 150;
  CHECK(code_of([&] { c.validate(); }) == ErrorCode::InvalidConfig);
  c = ScheduleConfig{};
  c.warmup_steps = c.t_max;
  CHECK(code_of([&] { c.validate(); }) == ErrorCode::InvalidConfig);
  c = ScheduleConfig{};
  c.active_fraction = 0.0;
  CHECK(code_of([&] { c.validate(); }) == ErrorCode::InvalidConfig);
}

TEST_CASE("soft switch interpolates toward the look-ahead target") {
  LayerwiseSchedule sched(flat_config(), plan_config(), {"a"}, {});
  sched.push_plan(0, single("a", 1e-3));
  sched.push_plan(100, single("a", 3e-3));
  CHECK(sched.layer_lr_at("a", 99) == 1e-3);
  CHECK(sched.layer_lr_at("a", 100) == 1e-3);
  CHECK(sched.layer_lr_at("a", 125) == doctest::Approx(2e-3).epsilon(1e-14));
  CHECK(sched.layer_lr_at("a", 150) == base_lr_at(sched.config(), 3e-3, 150));
  CHECK(sched.layer_lr_at("a", 151) == 3e-3);
  CHECK(code_of([&] { sched.layer_lr_at("b", 10); }) == ErrorCode::UnknownLayer);
}

TEST_CASE("window end is exact on a decaying schedule") {
  ScheduleConfig c;
  c.t_max = 1000;
  c.warmup_steps = 100;
  c.active_fraction = 1.0;
  LayerwiseSchedule sched(c, plan_config(), {"a"}, {});
  sched.push_plan(0, single("a", 2e-3));
  sched.push_plan(300, single("a", 4.5e-3));
  CHECK(sched.layer_lr_at("a", 300) == base_lr_at(c, 2e-3, 300));
  CHECK(sched.layer_lr_at("a", 350) == base_lr_at(c, 4.5e-3, 350));
  const double mid = sched.layer_lr_at("a", 325);
  CHECK(mid == doctest::Approx(0.5 * (base_lr_at(c, 2e-3, 300) + base_lr_at(c, 4.5e-3, 350))));
}

TEST_CASE("soft switch has no spike, hard switch jumps once") {
  auto c = flat_config();
  LayerwiseSchedule soft(c, plan_config(), {"a"}, {});
  soft.push_plan(0, single("a", 1e-3));
  soft.push_plan(100, single("a", 5e-3));
  double max_delta = 0.0;
  for (std::size_t t = 1; t < 200; ++t) {
    max_delta = std::max(max_delta, std::abs(soft.layer_lr_at("a", t) - soft.layer_lr_at("a", t - 1)));
  }
  CHECK(max_delta <= 4e-3 / 50.0 + 1e-12);

  c.switch_mode = SwitchMode::Hard;
  LayerwiseSchedule hard(c, plan_config(), {"a"}, {});
  hard.push_plan(0, single("a", 1e-3));
  hard.push_plan(100, single("a", 5e-3));
  std::size_t jumps = 0;
  for (std::size_t t = 1; t < 200; ++t) {
    const double d = std::abs(hard.layer_lr_at("a", t) - hard.layer_lr_at("a", t - 1));
    if (d > 1e-15) {
      ++jumps;
      CHECK(t == 100);
      CHECK(d == doctest::Approx(4e-3).epsilon(1e-14));
    }
  }
  CHECK(jumps == 1);
}

TEST_CASE("recompute cadence and active phase") {
  ScheduleConfig c;
  c.t_max = 1000;
  c.recompute_interval = 100;
  c.active_fraction = 0.2;
  std::vector<std::size_t> calls;
  LayerwiseSchedule sched(c, plan_config(), {"a", "b"}, {});
  for (std::size_t t = 0; t < c.t_max; ++t) {
    sched.on_step(t, [&](std::size_t step) {
      calls.push_back(step);
      return std::vector<LayerAlpha>{{"a", 2.0 + 0.001 * step}, {"b", 3.0}};
    });
  }
  CHECK(calls == std::vector<std::size_t>{0, 100, 200});
  CHECK(sched.history().size() == 3);
  CHECK(sched.frozen());
  CHECK(c.expected_plan_count() == 3);

  c.active_fraction = 1.0;
  LayerwiseSchedule full(c, plan_config(), {"a"}, {});
  for (std::size_t t = 0; t < c.t_max; ++t) {
    full.on_step(t, [](std::size_t) { return std::vector<LayerAlpha>{{"a", 2.0}}; });
  }
  CHECK(full.history().size() == 10);
  CHECK(c.expected_plan_count() == 10);
  CHECK_FALSE(full.frozen());

  for (std::size_t interval : {7u, 50u, 64u, 100u, 333u}) {
    for (double frac : {0.1, 0.2, 0.5, 1.0}) {
      ScheduleConfig k;
      k.t_max = 1000;
      k.recompute_interval = interval;
      k.t_switch = std::min<std::size_t>(interval, 50);
      k.active_fraction = frac;
      LayerwiseSchedule s(k, plan_config(), {"a"}, {});
      for (std::size_t t = 0; t < k.t_max; ++t) {
        s.on_step(t, [](std::size_t) { return std::vector<LayerAlpha>{{"a", 2.0}}; });
      }
      CHECK(s.history().size() == k.expected_plan_count());
    }
  }
}

TEST_CASE("on_step requires consecutive steps") {
  LayerwiseSchedule sched(flat_config(), plan_config(), {"a"}, {});
  auto alphas = [](std::size_t) { return std::vector<LayerAlpha>{{"a", 2.0}}; };
  CHECK(code_of([&] { sched.on_step(1, alphas); }) == ErrorCode::NonMonotonicStep);
  sched.on_step(0, alphas);
  sched.on_step(1, alphas);
  CHECK(code_of([&] { sched.on_step(1, alphas); }) == ErrorCode::NonMonotonicStep);
  CHECK(code_of([&] { sched.on_step(5, alphas); }) == ErrorCode::NonMonotonicStep);
  const auto st = sched.state();
  CHECK(st.step == 1);
  CHECK(st.last_recompute_step == 0);
  CHECK(st.in_switch_until == 50);
}

TEST_CASE("identical alphas give a continuous trajectory") {
  ScheduleConfig c;
  c.t_max = 1000;
  c.warmup_steps = 100;
  c.active_fraction = 1.0;
  LayerwiseSchedule sched(c, plan_config(), {"a", "b"}, {});
  for (std::size_t t = 0; t < c.t_max; ++t) {
    sched.on_step(t, [](std::size_t) {
      return std::vector<LayerAlpha>{{"a", 2.0}, {"b", 4.0}};
    });
  }
  for (std::size_t i = 1; i < sched.history().size(); ++i) {
    CHECK(sched.history()[i].plan.base_lr("b") == sched.history()[0].plan.base_lr("b"));
  }
  // After the first window every layer is exactly its scheduled value.
  for (std::size_t t = 50; t < c.t_max; ++t) {
    CHECK(sched.layer_lr_at("b", t) == base_lr_at(c, 5e-3, t));
    CHECK(sched.layer_lr_at("a", t) == base_lr_at(c, 1e-3, t));
  }
}

TEST_CASE("s = 1 reproduces the base schedule for every layer") {
  ScheduleConfig c;
  c.t_max = 600;
  c.warmup_steps = 60;
  c.active_fraction = 1.0;
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> alpha(1.5, 6.0);
  LayerwiseSchedule sched(c, plan_config(1.0), {"a", "b", "c"}, {{"a", Role::Embedding}});
  for (std::size_t t = 0; t < c.t_max; ++t) {
    sched.on_step(t, [&](std::size_t) {
      return std::vector<LayerAlpha>{{"a", alpha(rng)}, {"b", alpha(rng)}, {"c", alpha(rng)}};
    });
    for (const auto *l : {"a", "b", "c"}) {
      CHECK(sched.layer_lr_at(l, t) == base_lr_at(c, 1e-3, t));
    }
  }
}

TEST_CASE("linear allocation keeps every emitted rate within [0, s*eta]") {
  ScheduleConfig c;
  c.t_max = 2000;
  c.warmup_steps = 200;
  c.active_fraction = 1.0;
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> alpha(1.2, 9.0);
  const std::vector<std::string> layers{"e", "q", "k", "up"};
  LayerwiseSchedule sched(c, plan_config(), layers, {{"e", Role::Embedding}});
  for (std::size_t t = 0; t < c.t_max; ++t) {
    sched.on_step(t, [&](std::size_t) {
      std::vector<LayerAlpha> a;
      for (const auto &l : layers) {
        a.push_back({l, alpha(rng)});
      }
      return a;
    });
    for (const auto &l : layers) {
      const double lr = sched.layer_lr_at(l, t);
      CHECK(lr >= 0.0);
      CHECK(lr <= 5e-3 + 1e-18);
    }
  }
}

TEST_CASE("timeline export") {
  ScheduleConfig c = flat_config(3);
  c.recompute_interval = 1;
  c.t_switch = 1;
  LayerwiseSchedule sched(c, plan_config(1.0), {"x", "y"}, {});
  for (std::size_t t = 0; t < 3; ++t) {
    sched.on_step(t, [](std::size_t) { return std::vector<LayerAlpha>{{"x", 2.0}, {"y", 3.0}}; });
  }
  const auto rows = export_timeline(sched, 3);
  REQUIRE(rows.size() == 6);
  CHECK(rows[0].layer == "x");
  CHECK(rows[1].layer == "y");
  CHECK(rows[2].step == 1);
  for (std::size_t t = 0; t < 3; ++t) {
    CHECK(rows[2 * t].lr == rows[2 * t + 1].lr);
  }
  for (const auto &r : rows) {
    CHECK(r.lr == sched.layer_lr_at(r.layer, r.step));
  }

  std::ostringstream csv;
  write_timeline_csv(csv, {{0, "x", 0.1}, {1, "y", 1.0 / 3.0}});
  CHECK(csv.str() == "step,layer,lr\n0,x,0.10000000000000001\n1,y,0.33333333333333331\n");
}
