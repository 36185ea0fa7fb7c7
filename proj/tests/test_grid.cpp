#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <random>

#include <rieszlab/grid.hpp>

using namespace riesz;

TEST_SUITE_BEGIN("grid");

TEST_CASE("construction and indexing") {
  Grid g(2, 1.0, 0.25);
  CHECK(g.nodes_per_axis() == 9);
  CHECK(g.interior_per_axis() == 7);
  CHECK(g.num_interior() == 49);
  CHECK(g.num_nodes() == 81);
  CHECK(g.coord(0) == -1.0);
  CHECK(g.coord(8) == 1.0);
  // Coordinates are reproducible bit-exactly from the formula.
  CHECK(g.coord(3) == -1.0 + 3 * 0.25);

  for (Index k = 0; k < g.num_interior(); ++k) {
    CHECK(g.interior_index(g.interior_multi(k)) == k);
    CHECK(g.interior_of_node(g.node_of_interior(k)) == k);
  }
  CHECK(g.is_boundary({0, 3, 0}));
  CHECK(!g.is_boundary({1, 3, 0}));

  CHECK_THROWS(Grid(2, 1.0, 0.3));   // 2L/h not an integer
  CHECK_THROWS(Grid(4, 1.0, 0.25));  // dim out of range
  CHECK_THROWS(Grid(2, -1.0, 0.25));
}

TEST_CASE("interior ball is strict and centered") {
  Grid g(2, 1.0, 0.25);
  auto ball = g.interior_ball({0.0, 0.0, 0.0}, 0.25 + 1e-12);
  // Center plus four axis neighbours.
  CHECK(ball.size() == 5);
  auto tight = g.interior_ball({0.0, 0.0, 0.0}, 0.25);
  CHECK(tight.size() == 1);  // strict inequality drops the shell
}

TEST_CASE("ball_average: constants, odd functions, shift") {
  Grid g(2, 2.0, 0.125);
  auto c = GridFunction::sample(g, [](const Point&) { return 3.5; });
  CHECK(ball_average(c, {0.0, 0.0, 0.0}, 1.0) == doctest::Approx(3.5).epsilon(1e-13));

  auto odd = GridFunction::sample(g, [](const Point& x) { return x[0]; });
  CHECK(std::abs(ball_average(odd, {0.0, 0.0, 0.0}, 1.0)) < 1e-12);

  // Averaging commutes with adding a constant.
  GridFunction shifted = odd;
  shifted.values.array() += 2.0;
  CHECK(ball_average(shifted, {0.3, 0.1, 0.0}, 0.8) ==
        doctest::Approx(ball_average(odd, {0.3, 0.1, 0.0}, 0.8) + 2.0).epsilon(1e-12));
}

TEST_CASE("ball_average of a strip indicator matches the analytic area ratio") {
  // Indicator of {0 <= x2 <= 1} averaged over B(0, 8). Analytic value:
  // area(strip cap) / area(disk) with area = x2*sqrt(64-x2^2) + 64*asin(x2/8)
  // evaluated at x2 = 1, over 64*pi.
  Grid g(2, 10.0, 0.05);
  auto f = GridFunction::sample(
      g, [](const Point& x) { return (x[1] >= 0.0 && x[1] <= 1.0) ? 1.0 : 0.0; });
  const double cap = std::sqrt(63.0) + 64.0 * std::asin(1.0 / 8.0);
  const double exact = cap / (64.0 * M_PI);  // ~0.07937
  CHECK(ball_average(f, {0.0, 0.0, 0.0}, 8.0) == doctest::Approx(exact).epsilon(0.02));
}

TEST_CASE("ball_average throws on empty intersection") {
  Grid g(2, 1.0, 0.25);
  auto f = GridFunction::sample(g, [](const Point&) { return 1.0; });
  CHECK_THROWS(ball_average(f, {10.0, 10.0, 0.0}, 0.5));
}

TEST_CASE("lp_norm: constant on the unit box") {
  Grid g(2, 1.0, 1.0 / 64);
  auto f = GridFunction::sample(g, [](const Point&) { return 1.0; });
  // ||1||_2 over [-1,1]^2 is sqrt(4) = 2, up to the boundary layer.
  CHECK(lp_norm(f, 2.0) == doctest::Approx(2.0).epsilon(0.02));
  CHECK(lp_norm(f, std::numeric_limits<double>::infinity()) == 1.0);
  CHECK_THROWS(lp_norm(f, 0.5));
}

TEST_CASE("lp_norm: normalized means are monotone in p and triangle holds") {
  Grid g(2, 1.0, 1.0 / 16);
  std::mt19937_64 rng(7);
  std::normal_distribution<double> nd;
  GridFunction f(g), u(g), v(g);
  for (Index k = 0; k < g.num_interior(); ++k) {
    f.values[k] = nd(rng);
    u.values[k] = nd(rng);
    v.values[k] = nd(rng);
  }
  // Holder: volume-normalized p-means increase with p.
  const double vol = g.num_interior() * g.cell_volume();
  double prev = 0.0;
  for (double p : {1.0, 2.0, 4.0, 8.0}) {
    const double mean = lp_norm(f, p) / std::pow(vol, 1.0 / p);
    CHECK(mean >= prev - 1e-12);
    prev = mean;
  }
  for (double p : {1.0, 2.0, 3.0}) {
    GridFunction s(g, u.values + v.values);
    CHECK(lp_norm(s, p) <= lp_norm(u, p) + lp_norm(v, p) + 1e-12);
  }
}

TEST_CASE("vector lp_norm uses the pointwise Euclidean length") {
  Grid g(2, 1.0, 0.25);
  VectorGridFunction V(g);
  V.values.col(0).setConstant(3.0);
  V.values.col(1).setConstant(4.0);
  GridFunction n = V.pointwise_norm();
  CHECK(n.values.minCoeff() == doctest::Approx(5.0));
  CHECK(lp_norm(V, 2.0) == doctest::Approx(lp_norm(n, 2.0)).epsilon(1e-13));
}

TEST_CASE("ball_volume and measure_profile for unit and |x| weights") {
  Grid g(2, 6.0, 1.0 / 16);
  // Unit weight: V(0, r) ~ pi r^2.
  const double v2 = ball_volume(g, {0.0, 0.0, 0.0}, 2.0);
  CHECK(v2 == doctest::Approx(M_PI * 4.0).epsilon(0.02));

  std::vector<Point> centers = {{0.0, 0.0, 0.0}, {0.5, -0.25, 0.0}};
  std::vector<double> radii = {0.5, 1.0, 2.0, 4.0};
  auto unit = measure_profile(g, [](const Point&) { return 1.0; }, centers, radii);
  CHECK(unit.lower_exponent == doctest::Approx(2.0).epsilon(0.05));
  CHECK(unit.upper_exponent == doctest::Approx(2.0).epsilon(0.05));
  CHECK(unit.doubling_constant == doctest::Approx(4.0).epsilon(0.1));

  // w = |x|: V(0, r) = (2 pi / 3) r^3, so the growth exponent is 3.
  auto wabs = measure_profile(
      g, [](const Point& x) { return std::hypot(x[0], x[1]); },
      {Point{0.0, 0.0, 0.0}}, radii);
  CHECK(wabs.lower_exponent == doctest::Approx(3.0).epsilon(0.04));
  CHECK(wabs.upper_exponent == doctest::Approx(3.0).epsilon(0.04));
}

TEST_CASE("binary and csv serialization round-trip bit-exactly") {
  Grid g(2, 1.0, 0.125);
  std::mt19937_64 rng(11);
  std::normal_distribution<double> nd;
  GridFunction f(g);
  for (Index k = 0; k < g.num_interior(); ++k) f.values[k] = nd(rng) * 1e7;
  f.values[0] = 0.1;  // not exactly representable in decimal either

  auto tmp = std::filesystem::temp_directory_path();
  const std::string bin = (tmp / "rieszlab_rt.gf").string();
  const std::string csv = (tmp / "rieszlab_rt.csv").string();
  save_binary(f, bin);
  GridFunction fb = load_binary(bin);
  CHECK(fb.grid == g);
  CHECK(fb.values == f.values);  // bit-exact

  save_csv(f, csv);
  GridFunction fc = load_csv(csv);
  CHECK(fc.grid == g);
  CHECK(fc.values == f.values);  // %.17g round-trips doubles

  std::filesystem::remove(bin);
  std::filesystem::remove(csv);
}

TEST_SUITE_END();
