#include <doctest.h>

#include <cmath>

#include "llr/error.hpp"
#include "llr/spectral.hpp"
#include "oracles.hpp"

using namespace llr;
using llr::testing::gaussian_matrix;
using llr::testing::gram_eigenvalues;
using llr::testing::rel_diff;

namespace {

WeightMatrix identity(std::size_t n) {
  std::vector<double> v(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    v[i * n + i] = 1.0;
  }
  return WeightMatrix("I", Role::Other2D, n, n, std::move(v));
}

WeightMatrix diag34() {
  return WeightMatrix("d", Role::AttQ, 2, 3, {3, 0, 0, 0, 4, 0});
}

} // namespace

TEST_CASE("esd of small closed-form matrices") {
  CHECK(esd(identity(2)).eigenvalues == std::vector<double>{1.0, 1.0});
  const auto e = esd(diag34()).eigenvalues;
  REQUIRE(e.size() == 2);
  CHECK(e[0] == doctest::Approx(9.0).epsilon(1e-14));
  CHECK(e[1] == doctest::Approx(16.0).epsilon(1e-14));
}

TEST_CASE("esd matches a dense eigendecomposition of the Gram matrix") {
  const auto w = gaussian_matrix(8, 16, 42);
  const auto e = esd(w).eigenvalues;
  const auto ref = gram_eigenvalues(w);
  REQUIRE(e.size() == 8);
  for (std::size_t i = 0; i < e.size(); ++i) {
    CHECK(rel_diff(e[i], ref[i]) <= 1e-8);
  }
}

TEST_CASE("norms") {
  CHECK(frobenius_norm(identity(2)) == doctest::Approx(std::sqrt(2.0)).epsilon(1e-15));
  CHECK(frobenius_norm(diag34()) == doctest::Approx(5.0).epsilon(1e-15));
  CHECK(spectral_norm(identity(3)) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(spectral_norm(diag34()) == doctest::Approx(4.0).epsilon(1e-14));

  const auto w = gaussian_matrix(8, 16, 7);
  const auto e = esd(w).eigenvalues;
  double sum = 0.0;
  for (double x : e) {
    sum += x;
  }
  CHECK(rel_diff(frobenius_norm(w), std::sqrt(sum)) <= 1e-10);
  CHECK(spectral_norm(w) == std::sqrt(e.back()));
}

TEST_CASE("esd error paths") {
  WeightMatrix v("bias", Role::NonMatrix, 1, 4, {1, 2, 3, 4});
  CHECK_THROWS_AS(esd(v), Error);
  try {
    esd(v);
  } catch (const Error &e) {
    CHECK(e.code() == ErrorCode::NotAMatrix);
  }
  auto w = gaussian_matrix(3, 3, 1);
  w.values[4] = std::nan("");
  try {
    esd(w);
    FAIL("expected NonFiniteInput");
  } catch (const Error &e) {
    CHECK(e.code() == ErrorCode::NonFiniteInput);
  }
  w.values[4] = INFINITY;
  CHECK_THROWS_AS(frobenius_norm(w), Error);
  CHECK_THROWS_AS(WeightMatrix("bad", Role::Other2D, 2, 2, {1, 2, 3}), Error);
}

TEST_CASE("spectral invariants over random shapes") {
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<std::size_t> dim(1, 24);
  for (int trial = 0; trial < 60; ++trial) {
    const std::size_t r = dim(rng);
    const std::size_t c = dim(rng);
    const auto w = gaussian_matrix(r, c, 1000 + static_cast<std::uint64_t>(trial));
    const auto e = esd(w).eigenvalues;
    REQUIRE(e.size() == std::min(r, c));
    CHECK(std::is_sorted(e.begin(), e.end()));

    double trace = 0.0;
    for (double x : e) {
      CHECK(x >= 0.0);
      trace += x;
    }
    const double fro = frobenius_norm(w);
    CHECK(rel_diff(trace, fro * fro) <= 1e-8);

    const auto et = esd(w.transposed()).eigenvalues;
    auto scaled = w;
    for (auto &x : scaled.values) {
      x *= 2.5;
    }
    const auto es = esd(scaled).eigenvalues;
    const double floor = 1e-12 * e.back();
    for (std::size_t i = 0; i < e.size(); ++i) {
      if (e[i] > floor) {
        CHECK(rel_diff(et[i], e[i]) <= 1e-10);
        CHECK(rel_diff(es[i], 6.25 * e[i]) <= 1e-10);
      }
    }

    if (std::min(r, c) <= 16) {
      const auto ref = gram_eigenvalues(w);
      for (std::size_t i = 0; i < e.size(); ++i) {
        if (e[i] > floor) {
          CHECK(rel_diff(e[i], ref[i]) <= 1e-8);
        }
      }
    }
  }
}

TEST_CASE("role names round trip") {
  for (Role r : {Role::Embedding, Role::OutputHead, Role::AttQ, Role::AttK, Role::AttV,
                 Role::AttO, Role::FfnGate, Role::FfnUp, Role::FfnDown, Role::Other2D,
                 Role::NonMatrix}) {
    CHECK(parse_role(role_name(r)) == r);
  }
  CHECK(role_name(Role::AttQ) == "att.q");
  CHECK(role_name(Role::Embedding) == "embed");
  CHECK_FALSE(parse_role("attention.q").has_value());
}
