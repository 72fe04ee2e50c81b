#include "llr/allocate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "llr/error.hpp"

namespace llr {

void PlanConfig::validate() const {
  if (!(eta > 0.0) || !std::isfinite(eta)) {
    throw Error(ErrorCode::InvalidConfig, "eta must be positive");
  }
  if (!(s >= 1.0) || !std::isfinite(s)) {
    throw Error(ErrorCode::InvalidConfig, "s must be >= 1");
  }
}

double LRPlan::base_lr(std::string_view layer) const {
  if (auto lr = find(layer)) {
    return *lr;
  }
  throw Error(ErrorCode::UnknownLayer,
              "layer '" + std::string(layer) + "' is not in the plan");
}

std::optional<double> LRPlan::find(std::string_view layer) const {
  for (const auto &entry : per_layer) {
    if (entry.layer_name == layer) {
      return entry.base_lr;
    }
  }
  return std::nullopt;
}

double LRPlan::max_lr() const {
  double m = 0.0;
  for (const auto &entry : per_layer) {
    m = std::max(m, entry.base_lr);
  }
  return m;
}

LRPlan uniform_plan(const std::vector<std::string> &layers, double eta) {
  LRPlan plan;
  for (const auto &name : layers) {
    plan.per_layer.push_back({name, eta});
  }
  return plan;
}

LRPlan linear_map(const std::vector<LayerAlpha> &alphas, const PlanConfig &cfg) {
  cfg.validate();
  if (alphas.empty()) {
    throw Error(ErrorCode::EmptyInput, "no layers to allocate");
  }

  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  for (const auto &a : alphas) {
    if (std::isnan(a.alpha)) {
      throw Error(ErrorCode::NonFiniteInput,
                  "alpha of '" + a.layer_name + "' is NaN");
    }
    if (std::isfinite(a.alpha)) {
      lo = std::min(lo, a.alpha);
      hi = std::max(hi, a.alpha);
    }
  }

  const bool inverse = cfg.assignment == Assignment::LinearInverse;
  LRPlan plan;
  plan.alpha_min = lo;
  plan.alpha_max = hi;
  plan.per_layer.reserve(alphas.size());
  for (const auto &a : alphas) {
    double lr = 0.0;
    if (!std::isfinite(a.alpha)) {
      lr = inverse ? cfg.eta : cfg.s * cfg.eta;
    } else if (hi == lo) {
      lr = cfg.eta;
    } else {
      const double ratio =
          inverse ? (hi - a.alpha) / (hi - lo) : (a.alpha - lo) / (hi - lo);
      lr = cfg.eta * (ratio * (cfg.s - 1.0) + 1.0);
    }
    plan.per_layer.push_back({a.layer_name, lr});
  }
  return plan;
}

LRPlan mean_normalized_map(const std::vector<LayerAlpha> &alphas,
                           const PlanConfig &cfg) {
  cfg.validate();
  if (alphas.empty()) {
    throw Error(ErrorCode::EmptyInput, "no layers to allocate");
  }
  if (cfg.assignment != Assignment::Sqrt && cfg.assignment != Assignment::Log2) {
    throw Error(ErrorCode::InvalidConfig,
                "mean-normalized map needs the sqrt or log2 assignment");
  }
  const bool use_log = cfg.assignment == Assignment::Log2;

  std::vector<double> g;
  g.reserve(alphas.size());
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  for (const auto &a : alphas) {
    if (!std::isfinite(a.alpha)) {
      throw Error(ErrorCode::InfiniteAlpha,
                  "alpha of '" + a.layer_name + "' is not finite");
    }
    if (a.alpha <= 1.0) {
      throw Error(ErrorCode::NonPositiveLog,
                  "alpha of '" + a.layer_name + "' is <= 1");
    }
    g.push_back(use_log ? std::log2(a.alpha) : std::sqrt(a.alpha));
    lo = std::min(lo, a.alpha);
    hi = std::max(hi, a.alpha);
  }
  double mean = 0.0;
  for (double v : g) {
    mean += v;
  }
  mean /= static_cast<double>(g.size());

  LRPlan plan;
  plan.alpha_min = lo;
  plan.alpha_max = hi;
  for (std::size_t i = 0; i < alphas.size(); ++i) {
    double lr = cfg.eta * g[i] / mean;
    if (cfg.clamp_mean_normalized) {
      lr = std::clamp(lr, cfg.eta, cfg.s * cfg.eta);
    }
    plan.per_layer.push_back({alphas[i].layer_name, lr});
  }
  return plan;
}

LRPlan apply_embedding_override(LRPlan plan,
                                const std::map<std::string, Role> &roles,
                                const PlanConfig &cfg) {
  if (!cfg.embedding_override) {
    return plan;
  }
  const bool mean_normalized =
      cfg.assignment == Assignment::Sqrt || cfg.assignment == Assignment::Log2;
  const double pinned = mean_normalized ? plan.max_lr() : cfg.s * cfg.eta;
  for (auto &entry : plan.per_layer) {
    auto it = roles.find(entry.layer_name);
    if (it == roles.end()) {
      continue;
    }
    if (it->second == Role::Embedding || it->second == Role::OutputHead) {
      entry.base_lr = pinned;
    }
  }
  return plan;
}

LRPlan build_plan(const std::vector<LayerAlpha> &alphas,
                  const std::map<std::string, Role> &roles,
                  const PlanConfig &cfg, std::size_t step) {
  LRPlan plan;
  switch (cfg.assignment) {
  case Assignment::Linear:
  case Assignment::LinearInverse:
    plan = linear_map(alphas, cfg);
    break;
  case Assignment::Sqrt:
  case Assignment::Log2:
    plan = mean_normalized_map(alphas, cfg);
    break;
  }
  plan = apply_embedding_override(std::move(plan), roles, cfg);
  plan.created_at_step = step;
  return plan;
}

double trust_ratio_lr(double weight_norm, double grad_norm, double eta,
                      double wd, TrustVariant variant,
                      std::optional<double> update_norm, double lamb_clip) {
  double ratio = 1.0;
  switch (variant) {
  case TrustVariant::Lars: {
    const double denom = grad_norm + wd * weight_norm;
    if (weight_norm > 0.0 && denom > 0.0) {
      ratio = weight_norm / denom;
    }
    break;
  }
  case TrustVariant::Lamb: {
    if (!update_norm) {
      throw Error(ErrorCode::MissingUpdateNorm,
                  "LAMB trust ratio needs the update norm");
    }
    if (weight_norm > 0.0 && *update_norm > 0.0) {
      ratio = std::clamp(weight_norm / *update_norm, 0.0, lamb_clip);
    }
    break;
  }
  }
  return eta * ratio;
}

std::string_view assignment_name(Assignment a) {
  switch (a) {
  case Assignment::Linear: return "linear";
  case Assignment::Sqrt: return "sqrt";
  case Assignment::Log2: return "log2";
  case Assignment::LinearInverse: return "linear-inv";
  }
  return "linear";
}

std::optional<Assignment> parse_assignment(std::string_view name) {
  if (name == "linear") return Assignment::Linear;
  if (name == "sqrt") return Assignment::Sqrt;
  if (name == "log2") return Assignment::Log2;
  if (name == "linear-inv") return Assignment::LinearInverse;
  return std::nullopt;
}

} // namespace llr
