#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>

#include "llr/spectral.hpp"

namespace llr {

/// How the Hill cutoff k is chosen.
enum class FitMethod {
  Median,        // k = n/2, the upper half of the spectrum
  FixFinger,     // cutoff at the peak of the log10 eigenvalue histogram
  GoodnessOfFit, // cutoff minimising the KS distance to the fitted tail
};

struct FitConfig {
  FitMethod method = FitMethod::Median;
  std::optional<std::size_t> k_override;
  std::size_t histogram_bins = 100; // FixFinger only
};

struct AlphaFit {
  double alpha = 0.0;
  std::size_t k_used = 0;
};

/// Per-layer result of the spectral sweep. alpha may be +infinity when the
/// top of the spectrum is flat.
struct SpectralSummary {
  std::string layer_name;
  Role role = Role::Other2D;
  double alpha = 0.0;
  std::size_t k_used = 0;
  std::size_t n_eff = 0;
  double lambda_max = 0.0;
  double fro_norm = 0.0;
  double spec_norm = 0.0;
};

enum class MetricKind { PlAlphaHill, FrobeniusNorm, SpectralNorm, GradNorm };

/// Hill tail estimate 1 + k / Σ_{i=1..k} ln(λ_{n-i+1} / λ_{n-k}) on an
/// ascending spectrum (1-based indices). Returns +infinity when the log sum
/// vanishes.
double hill_alpha(std::span<const double> eigs, std::size_t k);
inline double hill_alpha(const Esd &esd, std::size_t k) {
  return hill_alpha(esd.eigenvalues, k);
}

/// Kolmogorov-Smirnov distance between the k eigenvalues above the cutoff
/// λ_{n-k} and a continuous power law with exponent `alpha` starting there.
double tail_ks_distance(std::span<const double> eigs, std::size_t k,
                        double alpha);

/// Sorts, drops non-positive eigenvalues, picks k per `cfg`, fits alpha.
AlphaFit fit_alpha(std::span<const double> eigs, const FitConfig &cfg);
inline AlphaFit fit_alpha(const Esd &esd, const FitConfig &cfg) {
  return fit_alpha(esd.eigenvalues, cfg);
}

/// ESD, norms and alpha of one matrix.
SpectralSummary summarize(const WeightMatrix &w, const FitConfig &cfg);

double metric_value(const SpectralSummary &summary,
                    std::optional<double> grad_norm, MetricKind kind);

std::string_view fit_method_name(FitMethod method);
std::optional<FitMethod> parse_fit_method(std::string_view name);

} // namespace llr
