#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "llr/spectral.hpp"

namespace llr {

enum class Assignment { Linear, Sqrt, Log2, LinearInverse };

struct PlanConfig {
  double eta = 1e-3; // global learning rate
  double s = 5.0;    // upper scaling ratio; plans live in [eta, s*eta]
  Assignment assignment = Assignment::Linear;
  bool embedding_override = true;
  bool clamp_mean_normalized = false;

  void validate() const;
};

struct LayerAlpha {
  std::string layer_name;
  double alpha = 0.0;
};

struct LayerLr {
  std::string layer_name;
  double base_lr = 0.0;
};

/// Per-layer base learning rates produced from one alpha sweep.
struct LRPlan {
  std::vector<LayerLr> per_layer;
  double alpha_min = 0.0;
  double alpha_max = 0.0;
  std::size_t created_at_step = 0;

  /// Throws UnknownLayer.
  double base_lr(std::string_view layer) const;
  std::optional<double> find(std::string_view layer) const;
  double max_lr() const;
};

/// Every layer at eta.
LRPlan uniform_plan(const std::vector<std::string> &layers, double eta);

/// Bounded affine map of alpha onto [eta, s*eta] (Linear) or its mirror
/// (LinearInverse). +infinity alphas receive s*eta; a flat alpha range puts
/// every layer at eta.
LRPlan linear_map(const std::vector<LayerAlpha> &alphas, const PlanConfig &cfg);

/// eta * g(alpha_i) / mean_j g(alpha_j) with g = sqrt or log2.
LRPlan mean_normalized_map(const std::vector<LayerAlpha> &alphas,
                           const PlanConfig &cfg);

/// Pins Embedding/OutputHead layers at the plan's upper bound. No-op when
/// cfg.embedding_override is false.
LRPlan apply_embedding_override(LRPlan plan,
                                const std::map<std::string, Role> &roles,
                                const PlanConfig &cfg);

/// Dispatches on cfg.assignment and applies the embedding override.
LRPlan build_plan(const std::vector<LayerAlpha> &alphas,
                  const std::map<std::string, Role> &roles,
                  const PlanConfig &cfg, std::size_t step = 0);

enum class TrustVariant { Lars, Lamb };

/// LARS: eta * |w| / (|g| + wd |w|). LAMB: eta * |w| / update_norm, ratio
/// clipped to [0, lamb_clip]. The ratio is 1 whenever |w| or the
/// denominator is zero.
double trust_ratio_lr(double weight_norm, double grad_norm, double eta,
                      double wd, TrustVariant variant,
                      std::optional<double> update_norm = std::nullopt,
                      double lamb_clip = 10.0);

std::string_view assignment_name(Assignment a);
std::optional<Assignment> parse_assignment(std::string_view name);

} // namespace llr
