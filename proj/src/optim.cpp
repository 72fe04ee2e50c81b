#include "llr/optim.hpp"

#include <cmath>

#include "llr/error.hpp"

namespace llr {

void OptimConfig::validate() const {
  if (!(beta1 > 0.0 && beta1 < 1.0 && beta2 > 0.0 && beta2 < 1.0)) {
    throw Error(ErrorCode::InvalidConfig, "betas must lie in (0, 1)");
  }
  if (!(grad_clip > 0.0)) {
    throw Error(ErrorCode::InvalidConfig, "grad_clip must be positive");
  }
  if (!(eta > 0.0) || !(eps > 0.0) || weight_decay < 0.0) {
    throw Error(ErrorCode::InvalidConfig, "eta, eps must be positive and wd >= 0");
  }
}

template <typename S>
StepStats adamw_step(std::vector<Parameter<S>> &params,
                     std::vector<Mat<S>> &grads, AdamState<S> &state,
                     std::size_t t, std::span<const double> lrs,
                     const OptimConfig &opt) {
  const std::size_t n = params.size();
  if (grads.size() != n || lrs.size() != n) {
    throw Error(ErrorCode::ShapeMismatch,
                "gradients and learning rates must cover every parameter");
  }
  if (t == 0) {
    throw Error(ErrorCode::InvalidConfig, "adam step count is 1-based");
  }
  if (state.m.size() != n) {
    state.m.resize(n);
    state.v.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      state.m[i].setZero(params[i].value.rows(), params[i].value.cols());
      state.v[i].setZero(params[i].value.rows(), params[i].value.cols());
    }
  }

  double sq = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (grads[i].rows() != params[i].value.rows() ||
        grads[i].cols() != params[i].value.cols()) {
      throw Error(ErrorCode::ShapeMismatch,
                  "gradient shape differs for '" + params[i].name + "'");
    }
    sq += grads[i].template cast<double>().squaredNorm();
  }

  StepStats stats;
  stats.grad_norm = std::sqrt(sq);
  if (stats.grad_norm > opt.grad_clip) {
    stats.clip_factor = opt.grad_clip / stats.grad_norm;
    for (auto &g : grads) {
      g *= static_cast<S>(stats.clip_factor);
    }
  }

  const double b1 = opt.beta1;
  const double b2 = opt.beta2;
  const double bc1 = 1.0 - std::pow(b1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(b2, static_cast<double>(t));
  const double wd = opt.weight_decay;

  stats.effective_lrs.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    Parameter<S> &p = params[i];
    auto &m = state.m[i];
    auto &v = state.v[i];
    const auto &g = grads[i];
    const double group_wd = p.decay ? wd : 0.0;

    m = static_cast<S>(b1) * m + static_cast<S>(1.0 - b1) * g;
    v = static_cast<S>(b2) * v + static_cast<S>(1.0 - b2) * g.cwiseProduct(g);
    Mat<S> update = (m / static_cast<S>(bc1)).array() /
                    ((v / static_cast<S>(bc2)).array().sqrt() + static_cast<S>(opt.eps));

    double lr = lrs[i];
    switch (opt.optimizer) {
    case OptimizerKind::AdamW:
      break;
    case OptimizerKind::AdamWLars:
      lr = trust_ratio_lr(p.value.template cast<double>().norm(),
                          g.template cast<double>().norm(), lr, group_wd,
                          TrustVariant::Lars);
      break;
    case OptimizerKind::AdamWLamb: {
      update += static_cast<S>(group_wd) * p.value;
      lr = trust_ratio_lr(p.value.template cast<double>().norm(), 0.0, lr,
                          group_wd, TrustVariant::Lamb,
                          update.template cast<double>().norm(), opt.lamb_clip);
      p.value -= static_cast<S>(lr) * update;
      stats.effective_lrs[i] = lr;
      continue;
    }
    }
    if (group_wd > 0.0) {
      p.value *= static_cast<S>(1.0 - lr * group_wd);
    }
    p.value -= static_cast<S>(lr) * update;
    stats.effective_lrs[i] = lr;
  }
  return stats;
}

template StepStats adamw_step<float>(std::vector<Parameter<float>> &,
                                     std::vector<Mat<float>> &,
                                     AdamState<float> &, std::size_t,
                                     std::span<const double>,
                                     const OptimConfig &);
template StepStats adamw_step<double>(std::vector<Parameter<double>> &,
                                      std::vector<Mat<double>> &,
                                      AdamState<double> &, std::size_t,
                                      std::span<const double>,
                                      const OptimConfig &);

std::string_view optimizer_name(OptimizerKind k) {
  switch (k) {
  case OptimizerKind::AdamW: return "adamw";
  case OptimizerKind::AdamWLars: return "lars";
  case OptimizerKind::AdamWLamb: return "lamb";
  }
  return "adamw";
}

std::optional<OptimizerKind> parse_optimizer(std::string_view name) {
  if (name == "adamw") return OptimizerKind::AdamW;
  if (name == "lars") return OptimizerKind::AdamWLars;
  if (name == "lamb") return OptimizerKind::AdamWLamb;
  return std::nullopt;
}

std::string_view lr_mode_name(LrMode m) {
  return m == LrMode::Llr ? "llr" : "uniform";
}

std::optional<LrMode> parse_lr_mode(std::string_view name) {
  if (name == "uniform") return LrMode::Uniform;
  if (name == "llr") return LrMode::Llr;
  return std::nullopt;
}

} // namespace llr
