#include "test_helpers.hpp"

#include <catch2/catch_amalgamated.hpp>

using namespace qwdecay;

TEST_CASE("box construction and layout") {
  LatticeBox box = build_box(2, 5);
  REQUIRE(box.site_count() == 25);
  REQUIRE(box.dim() == 100);
  REQUIRE(box.legs() == 4);
  REQUIRE(box.max_norm() == Catch::Approx(std::sqrt(8.0)));

  // row-major site order, last axis fastest: first site is (-2,-2)
  REQUIRE(box.coord(0, 0) == -2);
  REQUIRE(box.coord(0, 1) == -2);
  REQUIRE(box.coord(1, 1) == -1);

  int origin = box.site_index({0, 0});
  REQUIRE(box.site_norm(origin) == 0.0);
  REQUIRE(box.component(origin, 1, 1) == static_cast<Eigen::Index>(origin) * 4 + 3);

  SECTION("wraparound preserves the centered range") {
    int edge = box.site_index({2, 0});
    int wrapped = box.neighbor(edge, 0, +1);
    REQUIRE(box.coord(wrapped, 0) == -2);
    REQUIRE(box.coord(wrapped, 1) == 0);
    REQUIRE(box.wrap(3) == -2);
    REQUIRE(box.wrap(-3) == 2);
  }

  SECTION("one-dimensional box") {
    LatticeBox line = build_box(1, 3);
    REQUIRE(line.site_count() == 3);
    REQUIRE(line.dim() == 6);
  }

  SECTION("invalid shapes are rejected") {
    REQUIRE_THROWS_AS(build_box(2, 4), std::invalid_argument);
    REQUIRE_THROWS_AS(build_box(2, 1), std::invalid_argument);
    REQUIRE_THROWS_AS(build_box(0, 5), std::invalid_argument);
  }
}

TEST_CASE("shell projector geometry") {
  LatticeBox box = build_box(2, 5);

  SECTION("origin shell") {
    DiagonalWeight w = shell_projector(box, 0.0, 1.0);
    REQUIRE(w.site_values.sum() == 1.0);
    REQUIRE(w.site_values[box.site_index({0, 0})] == 1.0);
  }

  SECTION("first ring under the Euclidean norm has eight sites") {
    // (+-1, 0), (0, +-1) and the diagonal (+-1, +-1) with |x| = sqrt(2) < 2
    DiagonalWeight w = shell_projector(box, 1.0, 2.0);
    REQUIRE(w.site_values.sum() == 8.0);
    REQUIRE(w.site_values[box.site_index({1, 1})] == 1.0);
    REQUIRE(w.site_values[box.site_index({2, 0})] == 0.0);
  }

  SECTION("disjoint shells partition the box") {
    RVector total = RVector::Zero(box.site_count());
    double inf = std::numeric_limits<double>::infinity();
    for (double lo = 0.0; lo < 3.0; lo += 1.0)
      total += shell_projector(box, lo, lo + 1.0).site_values;
    total += shell_projector(box, 3.0, inf).site_values;
    for (int s = 0; s < box.site_count(); ++s) REQUIRE(total[s] == 1.0);
  }

  SECTION("broadcast over internal components") {
    DiagonalWeight w = shell_projector(box, 0.0, 1.0);
    RVector full = w.full_diagonal(box);
    REQUIRE(full.size() == 100);
    REQUIRE(full.sum() == 4.0);
  }

  REQUIRE_THROWS_AS(shell_projector(box, 2.0, 2.0), std::invalid_argument);
  REQUIRE_THROWS_AS(shell_projector(box, -1.0, 2.0), std::invalid_argument);
}

TEST_CASE("ceiling to a multiple of the step") {
  REQUIRE(ceil_to_multiple(2.3, 1.0) == 3.0);
  REQUIRE(ceil_to_multiple(2.0, 1.0) == 2.0);
  REQUIRE(ceil_to_multiple(1.2, 0.5) == 1.5);
  REQUIRE(ceil_to_multiple(0.4, 1.0) == 1.0);

  SECTION("idempotent and minimal on random inputs") {
    std::mt19937_64 gen(7);
    for (int t = 0; t < 500; ++t) {
      double b = std::vector<double>{0.25, 0.5, 1.0, 2.0, 3.0}[t % 5];
      double x = uniform01(gen) * 100.0 + 1e-9;
      double c = ceil_to_multiple(x, b);
      REQUIRE(c >= x);
      REQUIRE(ceil_to_multiple(c, b) == c);
      if (c > b) REQUIRE(c - b < x);
    }
  }

  REQUIRE_THROWS_AS(ceil_to_multiple(0.0, 1.0), std::invalid_argument);
  REQUIRE_THROWS_AS(ceil_to_multiple(1.0, 0.0), std::invalid_argument);
  REQUIRE_THROWS_AS(ceil_to_multiple(-2.0, 1.0), std::invalid_argument);
}

TEST_CASE("step weight values") {
  REQUIRE(step_weight_value(0.0, 0.3, 1.0) == Catch::Approx(0.3));
  REQUIRE(step_weight_value(1.0, 0.3, 1.0) == Catch::Approx(0.6));
  REQUIRE(step_weight_value(0.999, 0.3, 1.0) == Catch::Approx(0.3));

  SECTION("truncation plateaus at delta N b") {
    REQUIRE(step_weight_value_truncated(5.7, 0.3, 1.0, 2) == Catch::Approx(0.6));
    REQUIRE(step_weight_value_truncated(0.5, 0.3, 1.0, 2) == Catch::Approx(0.3));
  }

  SECTION("sandwich bound delta r <= value <= delta (r + b)") {
    std::mt19937_64 gen(11);
    for (int t = 0; t < 500; ++t) {
      double r = uniform01(gen) * 20.0;
      double b = std::vector<double>{0.5, 1.0, 2.0}[t % 3];
      double delta = 0.05 + uniform01(gen);
      double v = step_weight_value(r, delta, b);
      REQUIRE(v >= delta * r - 1e-12);
      REQUIRE(v <= delta * (r + b) + 1e-12);
    }
  }

  REQUIRE_THROWS_AS(step_weight_value(-1.0, 0.3, 1.0), std::invalid_argument);
  REQUIRE_THROWS_AS(step_weight_value(1.0, 0.0, 1.0), std::invalid_argument);
  REQUIRE_THROWS_AS(step_weight_value_truncated(1.0, 0.3, 1.0, 0), std::invalid_argument);
}

TEST_CASE("step weights on the box") {
  LatticeBox box = build_box(2, 7);
  double delta = 0.3, b = 1.0;
  DiagonalWeight full = step_weight(box, delta, b);

  SECTION("truncated weight is monotone in N and saturates") {
    int n_box = static_cast<int>(std::lround(ceil_to_multiple(box.max_norm(), b) / b));
    DiagonalWeight prev = step_weight_truncated(box, delta, b, 1);
    for (int s = 0; s < box.site_count(); ++s) REQUIRE(prev.site_values[s] == delta * b);
    for (int n = 2; n <= n_box + 1; ++n) {
      DiagonalWeight cur = step_weight_truncated(box, delta, b, n);
      for (int s = 0; s < box.site_count(); ++s) {
        REQUIRE(cur.site_values[s] >= prev.site_values[s]);
        REQUIRE(cur.site_values[s] <= full.site_values[s]);
      }
      prev = cur;
    }
    for (int s = 0; s < box.site_count(); ++s)
      REQUIRE(prev.site_values[s] == full.site_values[s]);
  }

  SECTION("exponential weight and its inverse cancel") {
    DiagonalWeight e = exp_weight(full, +1);
    DiagonalWeight ei = exp_weight(full, -1);
    for (int s = 0; s < box.site_count(); ++s)
      REQUIRE(e.site_values[s] * ei.site_values[s] == Catch::Approx(1.0).margin(1e-12));
  }

  SECTION("overflow guard") {
    DiagonalWeight huge;
    huge.site_values = RVector::Constant(3, 800.0);
    REQUIRE_THROWS_AS(exp_weight(huge), qw_error);
    REQUIRE_NOTHROW(exp_weight(huge, +1, 1000.0));
  }
}

TEST_CASE("site masses") {
  LatticeBox box = build_box(2, 5);
  std::mt19937_64 gen(3);
  WaveFunction psi = qwtest::random_unit_vector(static_cast<int>(box.dim()), gen);
  RVector m = site_masses(box, psi);
  REQUIRE(m.sum() == Catch::Approx(1.0).margin(1e-12));
  REQUIRE(m.minCoeff() >= 0.0);

  WaveFunction bad(10);
  REQUIRE_THROWS_AS(site_masses(box, bad), std::invalid_argument);
}
