#include "llr/spectral.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <utility>

#include <Eigen/SVD>

#include "llr/error.hpp"

namespace llr {

namespace {

constexpr std::array<std::pair<Role, std::string_view>, 11> kRoleNames{{
    {Role::Embedding, "embed"},
    {Role::OutputHead, "output_head"},
    {Role::AttQ, "att.q"},
    {Role::AttK, "att.k"},
    {Role::AttV, "att.v"},
    {Role::AttO, "att.o"},
    {Role::FfnGate, "ffn.gate"},
    {Role::FfnUp, "ffn.up"},
    {Role::FfnDown, "ffn.down"},
    {Role::Other2D, "other"},
    {Role::NonMatrix, "vector"},
}};

// Squared singular values within this distance below zero are rounding noise.
constexpr double kNegativeTolerance = 1e-12;

void check_analyzable(const WeightMatrix &w) {
  if (w.role == Role::NonMatrix) {
    throw Error(ErrorCode::NotAMatrix, "'" + w.name + "' is a 1-D parameter");
  }
  if (w.rows == 0 || w.cols == 0 || w.values.size() != w.rows * w.cols) {
    throw Error(ErrorCode::ShapeMismatch,
                "'" + w.name + "' has inconsistent shape");
  }
  for (double v : w.values) {
    if (!std::isfinite(v)) {
      throw Error(ErrorCode::NonFiniteInput,
                  "'" + w.name + "' contains a non-finite value");
    }
  }
}

} // namespace

std::string_view role_name(Role role) {
  for (const auto &[r, name] : kRoleNames) {
    if (r == role) {
      return name;
    }
  }
  return "other";
}

std::optional<Role> parse_role(std::string_view name) {
  for (const auto &[r, n] : kRoleNames) {
    if (n == name) {
      return r;
    }
  }
  return std::nullopt;
}

WeightMatrix::WeightMatrix(std::string name_, Role role_, std::size_t rows_,
                           std::size_t cols_, std::vector<double> values_)
    : name(std::move(name_)), role(role_), rows(rows_), cols(cols_),
      values(std::move(values_)) {
  if (rows == 0 || cols == 0 || values.size() != rows * cols) {
    throw Error(ErrorCode::ShapeMismatch,
                "'" + name + "': values length does not match rows*cols");
  }
}

WeightMatrix WeightMatrix::transposed() const {
  std::vector<double> t(values.size());
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      t[c * rows + r] = values[r * cols + c];
    }
  }
  return WeightMatrix(name, role, cols, rows, std::move(t));
}

Esd esd(const WeightMatrix &w) {
  check_analyzable(w);

  using RowMajor =
      Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  Eigen::Map<const RowMajor> m(w.values.data(),
                               static_cast<Eigen::Index>(w.rows),
                               static_cast<Eigen::Index>(w.cols));

  Eigen::VectorXd sv;
  if (std::min(w.rows, w.cols) <= 16) {
    sv = Eigen::JacobiSVD<Eigen::MatrixXd>(m).singularValues();
  } else {
    sv = Eigen::BDCSVD<Eigen::MatrixXd>(m).singularValues();
  }

  Esd out;
  out.eigenvalues.reserve(static_cast<std::size_t>(sv.size()));
  for (Eigen::Index i = 0; i < sv.size(); ++i) {
    double lambda = sv[i] * sv[i];
    if (lambda < 0.0) {
      if (lambda < -kNegativeTolerance) {
        throw Error(ErrorCode::NonFiniteInput,
                    "'" + w.name + "': negative eigenvalue in spectrum");
      }
      lambda = 0.0;
    }
    out.eigenvalues.push_back(lambda);
  }
  std::sort(out.eigenvalues.begin(), out.eigenvalues.end());
  return out;
}

double frobenius_norm(const WeightMatrix &w) {
  check_analyzable(w);
  double sum = 0.0;
  for (double v : w.values) {
    sum += v * v;
  }
  return std::sqrt(sum);
}

double spectral_norm(const WeightMatrix &w) {
  return std::sqrt(esd(w).lambda_max());
}

std::vector<Esd> esd_batch(const std::vector<WeightMatrix> &layers) {
  std::vector<Esd> out;
  out.reserve(layers.size());
  for (const auto &w : layers) {
    out.push_back(esd(w));
  }
  return out;
}

} // namespace llr
