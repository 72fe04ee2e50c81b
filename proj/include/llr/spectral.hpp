#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace llr {

/// Role a parameter plays inside a decoder-only transformer. NonMatrix tags
/// 1-D parameters (norm gains, biases) that have no spectrum.
enum class Role {
  Embedding,
  OutputHead,
  AttQ,
  AttK,
  AttV,
  AttO,
  FfnGate,
  FfnUp,
  FfnDown,
  Other2D,
  NonMatrix,
};

/// Manifest spelling of a role ("embed", "att.q", "ffn.down", ...).
std::string_view role_name(Role role);

/// Inverse of role_name; std::nullopt for unrecognised strings.
std::optional<Role> parse_role(std::string_view name);

/// A named, row-major 2-D real matrix.
struct WeightMatrix {
  std::string name;
  Role role = Role::Other2D;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;

  WeightMatrix() = default;
  WeightMatrix(std::string name, Role role, std::size_t rows, std::size_t cols,
               std::vector<double> values);

  double operator()(std::size_t r, std::size_t c) const {
    return values[r * cols + c];
  }

  WeightMatrix transposed() const;
};

/// Eigenvalues of WᵀW restricted to the min(rows, cols) nonstructural ones,
/// sorted ascending.
struct Esd {
  std::vector<double> eigenvalues;

  std::size_t n_eff() const { return eigenvalues.size(); }
  double lambda_max() const {
    return eigenvalues.empty() ? 0.0 : eigenvalues.back();
  }
};

/// Squared singular values of `w`, ascending. Throws NotAMatrix or
/// NonFiniteInput.
Esd esd(const WeightMatrix &w);

double frobenius_norm(const WeightMatrix &w);

/// Largest singular value.
double spectral_norm(const WeightMatrix &w);

/// Spectra for many layers; output order follows input order.
std::vector<Esd> esd_batch(const std::vector<WeightMatrix> &layers);

} // namespace llr
