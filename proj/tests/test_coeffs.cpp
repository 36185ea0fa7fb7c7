#include <doctest.h>

#include <cmath>
#include <random>

#include <rieszlab/coeffs.hpp>

using namespace riesz;

namespace {

Point pt(double a, double b = 0.0, double c = 0.0) { return {a, b, c}; }

double max_entry_diff(const Mat3& A, const Mat3& B, int dim) {
  return (A.topLeftCorner(dim, dim) - B.topLeftCorner(dim, dim))
      .cwiseAbs()
      .maxCoeff();
}

}  // namespace

TEST_SUITE_BEGIN("coeffs");

TEST_CASE("meyer_conic point values and eigenstructure") {
  auto A = meyer_conic(-0.5);
  Mat3 v = A(pt(1.0, 0.0));
  CHECK(v(0, 0) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(v(1, 1) == doctest::Approx(0.25).epsilon(1e-14));
  CHECK(std::abs(v(0, 1)) < 1e-14);

  // Radial eigenvalue 1, tangential (1+beta)^2, at generic points.
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> ud(-2.0, 2.0);
  for (int i = 0; i < 50; ++i) {
    Point x = pt(ud(rng), ud(rng));
    const double r = std::hypot(x[0], x[1]);
    if (r < 1e-6) continue;
    Mat3 a = A(x);
    Eigen::Vector2d rad(x[0] / r, x[1] / r), tan(-x[1] / r, x[0] / r);
    Eigen::Vector2d Ar = a.topLeftCorner(2, 2) * rad;
    Eigen::Vector2d At = a.topLeftCorner(2, 2) * tan;
    CHECK((Ar - rad).norm() < 1e-12);
    CHECK((At - 0.25 * tan).norm() < 1e-12);
  }

  // beta = 0 is the identity.
  auto I = meyer_conic(0.0);
  CHECK(max_entry_diff(I(pt(0.7, -0.3)), Mat3::Identity(), 2) < 1e-14);
  CHECK_THROWS(meyer_conic(-1.0));  // degenerate tangential eigenvalue
}

TEST_CASE("conic_nd matches meyer_conic when lambda = (1+beta)^2") {
  const double beta = -0.5;
  auto M = meyer_conic(beta);
  auto C = conic_nd((1.0 + beta) * (1.0 + beta), 2);
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> ud(-3.0, 3.0);
  for (int i = 0; i < 40; ++i) {
    Point x = pt(ud(rng), ud(rng));
    CHECK(max_entry_diff(M(x), C(x), 2) < 1e-12);
  }
  // lambda = 1 is the identity in any dimension.
  auto I3 = conic_nd(1.0, 3);
  CHECK(max_entry_diff(I3(pt(0.2, -0.4, 0.9)), Mat3::Identity(), 3) < 1e-13);
  // Radial direction always has eigenvalue 1.
  auto C3 = conic_nd(0.3, 3);
  Point x = pt(1.0, 2.0, -1.0);
  Eigen::Vector3d xv(x[0], x[1], x[2]);
  Eigen::Vector3d r = xv.normalized();
  CHECK((C3(x) * r - r).norm() < 1e-12);
  CHECK_THROWS(conic_nd(0.0, 2));
}

TEST_CASE("beta_from_lambda closed form and defining quadratic") {
  CHECK(beta_from_lambda(0.25, 2) == doctest::Approx(-0.5).epsilon(1e-14));
  CHECK(beta_from_lambda(1.0, 2) == doctest::Approx(0.0).epsilon(1e-14));
  CHECK(beta_from_lambda(0.5, 3) ==
        doctest::Approx(-1.5 + std::sqrt(5.0) / 2.0).epsilon(1e-12));
  for (int n : {2, 3}) {
    for (double lam : {0.1, 0.25, 0.7, 1.3}) {
      const double b = beta_from_lambda(lam, n);
      // (1+beta)(beta + N - 1) = lambda (N - 1)
      CHECK(std::abs((1.0 + b) * (b + n - 1) - lam * (n - 1)) < 1e-12);
    }
  }
}

TEST_CASE("critical_p values") {
  CHECK(critical_p(-0.5, 2, ConicVariant::kFull) == doctest::Approx(4.0));
  CHECK(critical_p(-0.5, 3, ConicVariant::kPartial) == doctest::Approx(4.0));
  CHECK(critical_p(-0.5, 3, ConicVariant::kFull) == doctest::Approx(6.0));
  CHECK_THROWS(critical_p(0.5, 2, ConicVariant::kFull));
  CHECK_THROWS(critical_p(-1.0, 2, ConicVariant::kFull));
}

TEST_CASE("partial_conic acts in the (x1,x2) plane only") {
  auto P = partial_conic(-0.5, 3);
  Mat3 v = P(pt(1.0, 0.0, 0.0));
  CHECK(v(0, 0) == doctest::Approx(1.0).epsilon(1e-13));
  CHECK(v(1, 1) == doctest::Approx(0.25).epsilon(1e-13));
  CHECK(v(2, 2) == doctest::Approx(1.0).epsilon(1e-13));
  // Independent of x3, and the e3 row/column stays identity.
  Mat3 w = P(pt(1.0, 0.0, 5.0));
  CHECK((v - w).cwiseAbs().maxCoeff() < 1e-13);
  CHECK(std::abs(w(0, 2)) + std::abs(w(1, 2)) < 1e-14);
}

TEST_CASE("strip and compact perturbations switch on the right sets") {
  auto base = identity_field(2);
  auto pert = scaled_identity(2, 2.0);
  auto S = strip_perturbation(base, pert);
  CHECK(S(pt(3.0, 0.5))(0, 0) == doctest::Approx(2.0));
  CHECK(S(pt(3.0, 2.0))(0, 0) == doctest::Approx(1.0));
  CHECK(S(pt(3.0, -0.5))(0, 0) == doctest::Approx(1.0));

  auto C = compact_perturbation(base, pert, 1.0);
  CHECK(C(pt(0.2, 0.3))(0, 0) == doctest::Approx(2.0));
  CHECK(C(pt(1.5, 0.0))(0, 0) == doctest::Approx(1.0));
}

TEST_CASE("mollify reproduces constants and localizes the interface") {
  auto base = identity_field(2);
  auto sm = mollify(base, 0.3);
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> ud(-2.0, 2.0);
  for (int i = 0; i < 20; ++i) {
    Point x = pt(ud(rng), ud(rng));
    CHECK(max_entry_diff(sm(x), Mat3::Identity(), 2) < 1e-10);
  }

  auto sharp = strip_perturbation(base, scaled_identity(2, 2.0));
  auto soft = mollify(sharp, 0.1);
  // Far from the interface the field is untouched.
  CHECK(soft(pt(0.0, 0.5))(0, 0) == doctest::Approx(2.0).epsilon(1e-10));
  CHECK(soft(pt(0.0, -0.5))(0, 0) == doctest::Approx(1.0).epsilon(1e-10));
  // On the interface it sits strictly between the two states.
  const double mid = soft(pt(0.0, 0.0))(0, 0);
  CHECK(mid > 1.05);
  CHECK(mid < 1.95);
}

TEST_CASE("radii schedule separation chain") {
  CHECK_NOTHROW(RadiiSchedule({2.0, 100.0}));
  // sqrt(50) - 1 < 2 * 2^2 = 8 violates the chain.
  CHECK_THROWS(RadiiSchedule({2.0, 50.0}));
  CHECK_THROWS(RadiiSchedule({0.5, 100.0}));  // r_1 must exceed 1
  CHECK_THROWS(RadiiSchedule({}));
}

TEST_CASE("build_tiled: identity off the annuli, rescaled copy on them") {
  auto conic = meyer_conic(-0.5);
  RadiiSchedule sched({2.0, 100.0});
  auto tiled = build_tiled(conic, sched, 0.05);

  // Between the annuli (outer edge 2 r_1^2 = 8, next inner edge
  // sqrt(r_2) - 1 = 9) the field is the identity.
  CHECK(max_entry_diff(tiled(pt(8.6, 0.0)), Mat3::Identity(), 2) < 1e-9);
  CHECK(max_entry_diff(tiled(pt(0.05, 0.0)), Mat3::Identity(), 2) < 1e-9);

  // rescale(tiled, r_k) recovers A on the core of the annulus k.
  auto zoom = rescale(tiled, 100.0);
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> ang(0.0, 2.0 * M_PI);
  std::uniform_real_distribution<double> rad(0.9, 1.8);
  for (int i = 0; i < 20; ++i) {
    const double r = rad(rng), th = ang(rng);
    Point x = pt(r * std::cos(th), r * std::sin(th));
    CHECK(max_entry_diff(zoom(x), conic(x), 2) < 0.05);
  }
  // rescale with s = 1 is the identity transform.
  auto same = rescale(conic, 1.0);
  CHECK(max_entry_diff(same(pt(0.3, 0.4)), conic(pt(0.3, 0.4)), 2) < 1e-15);
}

TEST_CASE("gd_decay fits: strip gives 1, compact gives 2, equal fields flag") {
  auto base = identity_field(2);
  auto strip = strip_perturbation(base, scaled_identity(2, 2.0));
  std::vector<double> radii = {2, 4, 8, 16, 32, 64};
  std::vector<Point> origin = {pt(0.0, 0.0)};

  auto fs = gd_decay(strip, base, origin, radii);
  CHECK(fs.exponent == doctest::Approx(1.0).epsilon(0.15));
  CHECK(!fs.infinite_decay);

  auto comp = compact_perturbation(base, scaled_identity(2, 2.0), 1.0);
  auto fc = gd_decay(comp, base, origin, radii);
  CHECK(fc.exponent == doctest::Approx(2.0).epsilon(0.1));

  auto fz = gd_decay(base, base, origin, radii);
  CHECK(fz.infinite_decay);

  CHECK_THROWS(gd_decay(strip, base, origin, {0.5, 2.0}));  // radii must exceed 1

  auto prof = gd_profile(strip, base, origin, radii);
  REQUIRE(prof.size() == radii.size());
  for (size_t i = 0; i + 1 < prof.size(); ++i) CHECK(prof[i] >= prof[i + 1] - 1e-12);
}

TEST_CASE("weights: positivity spot checks and power law") {
  auto w = power_weight(2, 0.3);
  CHECK(w(pt(2.0, 0.0)) == doctest::Approx(std::pow(2.0, 0.3)).epsilon(1e-14));
  CHECK(w(pt(0.5, 0.5)) == doctest::Approx(std::pow(0.5, 0.15)).epsilon(1e-13));
  CHECK(unit_weight(3)(pt(1.0, 2.0, 3.0)) == 1.0);
  CHECK(!power_weight(2, 0.3).is_unit());
  CHECK(unit_weight(2).is_unit());
}

TEST_CASE("fit_power_decay: exact, scaled, and noisy inputs") {
  std::vector<double> x = {1, 2, 4, 8, 16, 32, 64, 128, 256, 512, 1024, 2048};
  std::vector<double> v1(x.size()), v2(x.size()), v3(x.size());
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> noise(-0.05, 0.05);
  for (size_t i = 0; i < x.size(); ++i) {
    v1[i] = std::pow(x[i], -0.5);
    v2[i] = 7.0 * std::pow(x[i], -0.3);
    v3[i] = v1[i] * (1.0 + noise(rng));
  }
  auto f1 = fit_power_decay(x, v1);
  CHECK(f1.exponent == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(f1.residual < 1e-12);
  auto f2 = fit_power_decay(x, v2);
  CHECK(f2.exponent == doctest::Approx(0.3).epsilon(1e-10));
  CHECK(f2.amplitude == doctest::Approx(7.0).epsilon(1e-10));
  auto f3 = fit_power_decay(x, v3);
  CHECK(f3.exponent == doctest::Approx(0.5).epsilon(0.1));
  CHECK_THROWS(fit_power_decay({1.0}, {1.0}));       // need two points
  CHECK_THROWS(fit_power_decay({1.0, 2.0}, {1.0}));  // length mismatch
}

TEST_CASE("spot check rejects misdeclared ellipticity bounds") {
  CHECK_THROWS(MatrixField(
      2, "bad", [](const Point&) { return Mat3(2.0 * Mat3::Identity()); }, 3.0,
      4.0));
}

TEST_CASE("field spec grammar") {
  auto m = parse_matrix_field("meyer_conic{beta=-0.5}", 2);
  CHECK(m(pt(1.0, 0.0))(1, 1) == doctest::Approx(0.25));

  auto s = parse_matrix_field("strip{base=identity,pert=scale{factor=2}}", 2);
  CHECK(s(pt(0.0, 0.5))(0, 0) == doctest::Approx(2.0));

  auto t = parse_matrix_field(
      "tiled{base=meyer_conic{beta=-0.5},radii=[2,100],moll=0.05}", 2);
  CHECK(max_entry_diff(t(pt(8.6, 0.0)), Mat3::Identity(), 2) < 1e-9);

  auto w = parse_weight_field("power{gamma=0.3}", 2);
  CHECK(w(pt(2.0, 0.0)) == doctest::Approx(std::pow(2.0, 0.3)));
  CHECK(parse_weight_field("unit", 2).is_unit());

  CHECK_THROWS(parse_matrix_field("no_such_field", 2));
  CHECK_THROWS(parse_matrix_field("meyer_conic{beta=}", 2));
  CHECK_THROWS(parse_matrix_field("strip{base=identity", 2));
}

TEST_SUITE_END();
