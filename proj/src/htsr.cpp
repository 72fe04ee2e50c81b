#include "llr/htsr.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "llr/error.hpp"

namespace llr {

namespace {

constexpr double kDegenerateLogSum = 1e-300;
constexpr std::size_t kMinEigenvalues = 4;

std::size_t fix_finger_k(std::span<const double> eigs, std::size_t bins) {
  const std::size_t n = eigs.size();
  const double lo = std::log10(eigs.front());
  const double hi = std::log10(eigs.back());
  if (!(hi > lo) || bins == 0) {
    return n / 2;
  }
  const double width = (hi - lo) / static_cast<double>(bins);
  std::vector<std::size_t> counts(bins, 0);
  for (double e : eigs) {
    auto b = static_cast<std::size_t>((std::log10(e) - lo) / width);
    counts[std::min(b, bins - 1)]++;
  }
  const auto peak = static_cast<std::size_t>(
      std::max_element(counts.begin(), counts.end()) - counts.begin());
  const double xmin = std::pow(10.0, lo + (static_cast<double>(peak) + 0.5) * width);

  // Cutoff is the first eigenvalue at or above the histogram peak centre.
  const auto first =
      static_cast<std::size_t>(std::lower_bound(eigs.begin(), eigs.end(), xmin) -
                               eigs.begin());
  const std::size_t cutoff = std::min(first, n - 2);
  return n - 1 - cutoff;
}

std::size_t goodness_of_fit_k(std::span<const double> eigs) {
  const std::size_t n = eigs.size();
  std::size_t best_k = n / 2;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t k = 2; k <= n - 1; ++k) {
    if (eigs[n - k - 1] <= 0.0) {
      continue;
    }
    const double alpha = hill_alpha(eigs, k);
    if (!std::isfinite(alpha)) {
      continue;
    }
    const double d = tail_ks_distance(eigs, k, alpha);
    if (d < best_d) {
      best_d = d;
      best_k = k;
    }
  }
  return best_k;
}

} // namespace

double hill_alpha(std::span<const double> eigs, std::size_t k) {
  const std::size_t n = eigs.size();
  if (k < 1 || k + 1 > n) {
    throw Error(ErrorCode::BadK, "k=" + std::to_string(k) +
                                     " outside [1, n-1] for n=" +
                                     std::to_string(n));
  }
  const double cutoff = eigs[n - k - 1];
  if (!(cutoff > 0.0)) {
    throw Error(ErrorCode::ZeroCutoff, "cutoff eigenvalue is not positive");
  }
  double log_sum = 0.0;
  for (std::size_t i = 1; i <= k; ++i) {
    log_sum += std::log(eigs[n - i] / cutoff);
  }
  if (log_sum < kDegenerateLogSum) {
    return std::numeric_limits<double>::infinity();
  }
  return 1.0 + static_cast<double>(k) / log_sum;
}

double tail_ks_distance(std::span<const double> eigs, std::size_t k,
                        double alpha) {
  const std::size_t n = eigs.size();
  const double xmin = eigs[n - k - 1];
  const double kd = static_cast<double>(k);
  double d = 0.0;
  for (std::size_t j = 0; j < k; ++j) {
    const double x = eigs[n - k + j];
    const double model = 1.0 - std::pow(x / xmin, 1.0 - alpha);
    const double above = static_cast<double>(j + 1) / kd;
    const double below = static_cast<double>(j) / kd;
    d = std::max({d, std::abs(above - model), std::abs(model - below)});
  }
  return d;
}

AlphaFit fit_alpha(std::span<const double> eigs_in, const FitConfig &cfg) {
  std::vector<double> eigs;
  eigs.reserve(eigs_in.size());
  for (double e : eigs_in) {
    if (!std::isfinite(e)) {
      throw Error(ErrorCode::NonFiniteInput, "non-finite eigenvalue");
    }
    if (e > 0.0) {
      eigs.push_back(e);
    }
  }
  std::sort(eigs.begin(), eigs.end());
  const std::size_t n = eigs.size();
  if (n < kMinEigenvalues) {
    throw Error(ErrorCode::TooFewEigenvalues,
                std::to_string(n) + " positive eigenvalues, need at least 4");
  }

  std::size_t k = 0;
  if (cfg.k_override) {
    k = *cfg.k_override;
  } else {
    switch (cfg.method) {
    case FitMethod::Median:
      k = n / 2;
      break;
    case FitMethod::FixFinger:
      k = fix_finger_k(eigs, cfg.histogram_bins);
      break;
    case FitMethod::GoodnessOfFit:
      k = goodness_of_fit_k(eigs);
      break;
    }
  }
  return AlphaFit{hill_alpha(eigs, k), k};
}

SpectralSummary summarize(const WeightMatrix &w, const FitConfig &cfg) {
  const Esd spectrum = esd(w);
  SpectralSummary s;
  s.layer_name = w.name;
  s.role = w.role;
  s.n_eff = spectrum.n_eff();
  s.lambda_max = spectrum.lambda_max();
  s.fro_norm = frobenius_norm(w);
  s.spec_norm = std::sqrt(s.lambda_max);
  const AlphaFit fit = fit_alpha(spectrum, cfg);
  s.alpha = fit.alpha;
  s.k_used = fit.k_used;
  return s;
}

double metric_value(const SpectralSummary &summary,
                    std::optional<double> grad_norm, MetricKind kind) {
  switch (kind) {
  case MetricKind::PlAlphaHill:
    return summary.alpha;
  case MetricKind::FrobeniusNorm:
    return summary.fro_norm;
  case MetricKind::SpectralNorm:
    return summary.spec_norm;
  case MetricKind::GradNorm:
    if (!grad_norm) {
      throw Error(ErrorCode::MissingGradient,
                  "GradNorm metric needs a gradient snapshot for '" +
                      summary.layer_name + "'");
    }
    return *grad_norm;
  }
  return summary.alpha;
}

std::string_view fit_method_name(FitMethod method) {
  switch (method) {
  case FitMethod::Median: return "median";
  case FitMethod::FixFinger: return "fixfinger";
  case FitMethod::GoodnessOfFit: return "gof";
  }
  return "median";
}

std::optional<FitMethod> parse_fit_method(std::string_view name) {
  if (name == "median") return FitMethod::Median;
  if (name == "fixfinger") return FitMethod::FixFinger;
  if (name == "gof") return FitMethod::GoodnessOfFit;
  return std::nullopt;
}

} // namespace llr
