#include <doctest.h>

#include <cmath>
#include <random>

#include <rieszlab/funcalc.hpp>

using namespace riesz;

namespace {

GridFunction random_gf(const Grid& g, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  GridFunction f(g);
  for (Index k = 0; k < g.num_interior(); ++k) f.values[k] = nd(rng);
  return f;
}

double wnorm(const DiscreteOperator& op, const GridFunction& f) {
  return std::sqrt(op.inner_w(f, f));
}

// Dense-oracle reference for phi(L) f.
GridFunction dense_apply(const DiscreteOperator& op,
                         const std::function<double(double)>& phi,
                         const GridFunction& f) {
  const auto& d = op.dense_spectral();
  Eigen::VectorXd c = d.vectors.transpose() * (op.node_mass().asDiagonal() * f.values);
  for (Index j = 0; j < c.size(); ++j) c[j] *= phi(d.values[j]);
  return GridFunction(f.grid, d.vectors * c);
}

}  // namespace

TEST_SUITE_BEGIN("funcalc");

TEST_CASE("certified scalar quadrature for the inverse square root") {
  for (auto [lo, hi] : {std::pair<double, double>{1.0, 1.0},
                        {0.01, 1e4},
                        {5.0, 5e6}}) {
    auto q = SqrtQuadrature::build(lo, hi, 1e-6, 16);
    CHECK(q.certified_error <= 1e-6);
    const int samples = 973;
    for (int i = 0; i <= samples; ++i) {
      const double mu = lo * std::pow(hi / lo, double(i) / samples);
      CHECK(std::abs(q.eval_scalar(mu) * std::sqrt(mu) - 1.0) < 2e-6);
    }
  }
  // Degenerate single-point spectrum: exact scaling identity at mu = 1.
  auto q1 = SqrtQuadrature::build(1.0, 1.0, 1e-8, 16);
  CHECK(q1.eval_scalar(1.0) == doctest::Approx(1.0).epsilon(1e-8));
}

TEST_CASE("resolvent: eigenvector scaling, t = 0, and the 1/s bound") {
  Grid g(2, 1.0, 0.125);
  auto op = DiscreteOperator::assemble(g, meyer_conic(-0.5), unit_weight(2));
  FunCalc calc(op);
  const auto& d = op.dense_spectral();

  for (Index j : {Index(0), Index(10), g.num_interior() - 1}) {
    GridFunction v(g, d.vectors.col(j));
    for (auto [s, t] : {std::pair<double, double>{1.0, 1.0}, {0.5, 10.0}}) {
      GridFunction r = calc.resolvent(s, t, v);
      CHECK((r.values - v.values / (s + t * d.values[j])).norm() <
            1e-8 * v.values.norm());
    }
  }

  GridFunction f = random_gf(g, 1);
  GridFunction r0 = calc.resolvent(2.0, 0.0, f);
  CHECK((r0.values - f.values / 2.0).norm() == 0.0);  // exact short-circuit

  for (int i = 0; i < 20; ++i) {
    GridFunction u = random_gf(g, 50 + i);
    for (double t : {1.0, 10.0, 100.0}) {
      const double s = 0.5 + 0.1 * i;
      CHECK(wnorm(op, calc.resolvent(s, t, u)) <= (1.0 / s) * wnorm(op, u) * (1 + 1e-9));
    }
  }

  CHECK_THROWS(calc.resolvent(0.0, 1.0, f));   // s > 0 required
  CHECK_THROWS(calc.resolvent(1.0, -1.0, f));  // t >= 0 required
}

TEST_CASE("heat semigroup: identity, contraction, composition") {
  Grid g(2, 1.0, 0.125);
  auto op = DiscreteOperator::assemble(g, identity_field(2), unit_weight(2));
  FunCalc calc(op);
  GridFunction f = random_gf(g, 3);

  CHECK((calc.heat(0.0, f).values - f.values).norm() == 0.0);

  GridFunction h1 = calc.heat(0.01, f);
  GridFunction h2 = calc.heat(0.02, f);
  CHECK(wnorm(op, h1) <= wnorm(op, f) * (1 + 1e-10));
  CHECK(wnorm(op, h2) <= wnorm(op, h1) * (1 + 1e-10));
  // Dense path: exact semigroup composition.
  GridFunction h12 = calc.heat(0.01, h1);
  CHECK((h12.values - h2.values).norm() < 1e-10 * f.values.norm());

  // Oracle agreement.
  GridFunction ref = dense_apply(op, [](double lam) { return std::exp(-0.01 * lam); }, f);
  CHECK((h1.values - ref.values).norm() < 1e-10 * f.values.norm());
}

TEST_CASE("heat kernel matches the free-space Gaussian away from the boundary") {
  Grid g(2, 3.0, 1.0 / 16);  // 9025 unknowns: backward Euler path
  auto op = DiscreteOperator::assemble(g, identity_field(2), unit_weight(2));
  SolverConfig cfg;
  cfg.heat_target = 1e-4;
  FunCalc calc(op, cfg);

  GridFunction delta(g);
  const Index c = g.interior_index({g.nodes_per_axis() / 2, g.nodes_per_axis() / 2, 0});
  delta.values[c] = 1.0 / op.node_mass()[c];
  const double t = 0.1;
  GridFunction k = calc.heat(t, delta);

  const Point y = g.interior_point(c);
  int checked = 0;
  for (Index j : g.interior_ball(y, 3.0 * std::sqrt(t))) {
    const double d = dist(g.interior_point(j), y);
    const double gauss = std::exp(-d * d / (4.0 * t)) / (4.0 * M_PI * t);
    CHECK(k.values[j] == doctest::Approx(gauss).epsilon(0.05));
    ++checked;
  }
  CHECK(checked > 100);

  // Interior mass is conserved by the M-matrix discretization up to
  // boundary leakage, negligible at this time horizon.
  const double mass = (op.node_mass().array() * k.values.array()).sum();
  CHECK(mass == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("inv_sqrt agrees with the dense oracle") {
  Grid g(2, 1.0, 0.125);
  auto op = DiscreteOperator::assemble(g, meyer_conic(-0.5), power_weight(2, 0.3));
  FunCalc calc(op);
  std::mt19937_64 rng(7);
  for (int i = 0; i < 20; ++i) {
    GridFunction f = random_gf(g, 700 + i);
    for (auto [s, t] : {std::pair<double, double>{0.0, 1.0}, {1.0, 1.0}, {0.5, 10.0}}) {
      GridFunction u = calc.inv_sqrt(s, t, f);
      GridFunction ref = dense_apply(
          op, [s = s, t = t](double lam) { return 1.0 / std::sqrt(s + t * lam); }, f);
      CHECK((u.values - ref.values).norm() <= 1e-5 * ref.values.norm());
    }
  }
}

TEST_CASE("explicit and Lanczos quadrature paths agree") {
  Grid g(2, 1.0, 1.0 / 12);
  auto op = DiscreteOperator::assemble(g, meyer_conic(-0.5), unit_weight(2));
  FunCalc explicit_path(op);
  SolverConfig cfg;
  cfg.explicit_quad_cap = 1;  // force the Lanczos lane
  FunCalc krylov_path(op, cfg);
  for (int i = 0; i < 5; ++i) {
    GridFunction f = random_gf(g, 900 + i);
    GridFunction a = explicit_path.inv_sqrt(1.0, 1.0, f);
    GridFunction b = krylov_path.inv_sqrt(1.0, 1.0, f);
    CHECK((a.values - b.values).norm() <= 1e-5 * a.values.norm());
  }
}

TEST_CASE("inv_sqrt idempotence reproduces the inverse") {
  Grid g(2, 1.0, 0.125);
  auto op = DiscreteOperator::assemble(g, meyer_conic(-0.5), unit_weight(2));
  FunCalc calc(op);
  GridFunction f = random_gf(g, 11);
  GridFunction twice = calc.inv_sqrt(0.0, 1.0, calc.inv_sqrt(0.0, 1.0, f));
  GridFunction inv = dense_apply(op, [](double lam) { return 1.0 / lam; }, f);
  CHECK((twice.values - inv.values).norm() <= 1e-4 * inv.values.norm());
}

TEST_CASE("riesz transform is an energy isometry") {
  Grid g(2, 1.0, 0.125);
  for (int variant = 0; variant < 2; ++variant) {
    auto A = variant == 0 ? identity_field(2) : meyer_conic(-0.5);
    auto op = DiscreteOperator::assemble(g, A, unit_weight(2));
    FunCalc calc(op);
    for (int i = 0; i < 20; ++i) {
      GridFunction f = random_gf(g, 1000 + i);
      GridFunction u = calc.inv_sqrt(0.0, 1.0, f);
      // <L u, u>_w = ||f||_w^2 when u = L^{-1/2} f.
      const double defect =
          std::abs(op.energy(u) - op.inner_w(f, f)) / op.inner_w(f, f);
      CHECK(defect <= 1e-4);
      // riesz() is the nodal gradient of the same u.
      VectorGridFunction R = calc.riesz(f);
      VectorGridFunction Gu = op.gradient(u);
      CHECK((R.values - Gu.values).norm() <= 1e-10 * Gu.values.norm());
    }
  }
}

TEST_CASE("riesz isometry holds on the iterative path too") {
  Grid g(2, 1.0, 0.125);
  auto op = DiscreteOperator::assemble(g, meyer_conic(-0.5), unit_weight(2));
  SolverConfig cfg;
  cfg.direct_cap = 0;  // force CG solves
  FunCalc calc(op, cfg);
  for (int i = 0; i < 5; ++i) {
    GridFunction f = random_gf(g, 1100 + i);
    GridFunction u = calc.inv_sqrt(0.0, 1.0, f);
    const double defect =
        std::abs(op.energy(u) - op.inner_w(f, f)) / op.inner_w(f, f);
    CHECK(defect <= 1e-3);
  }
  CHECK(calc.cg_iteration_count() > 0);
}

TEST_CASE("adjoints are exact in the w-inner product") {
  Grid g(2, 1.0, 0.125);
  auto op = DiscreteOperator::assemble(g, meyer_conic(-0.5), power_weight(2, 0.3));
  FunCalc calc(op);
  std::mt19937_64 rng(13);
  std::normal_distribution<double> nd;
  auto pair_w = [&](const VectorGridFunction& V, const VectorGridFunction& W) {
    double s = 0.0;
    for (Index k = 0; k < g.num_interior(); ++k)
      s += op.node_mass()[k] * V.values.row(k).dot(W.values.row(k));
    return s;
  };
  for (int i = 0; i < 10; ++i) {
    GridFunction f = random_gf(g, 1200 + i);
    VectorGridFunction V(g);
    for (Index k = 0; k < g.num_interior(); ++k)
      for (int d = 0; d < 2; ++d) V.values(k, d) = nd(rng);

    CHECK(pair_w(calc.riesz(f), V) ==
          doctest::Approx(op.inner_w(f, calc.riesz_adjoint(V))).epsilon(1e-6));
    CHECK(pair_w(calc.grad_resolvent(1.0, 2.0, f), V) ==
          doctest::Approx(op.inner_w(f, calc.resolvent_adjoint_grad(1.0, 2.0, V)))
              .epsilon(1e-8));
    CHECK(pair_w(calc.grad_inv_sqrt(1.0, 2.0, f), V) ==
          doctest::Approx(op.inner_w(f, calc.inv_sqrt_adjoint_grad(1.0, 2.0, V)))
              .epsilon(1e-6));
  }
}

TEST_CASE("resolvent difference: zero perturbation and factored identity") {
  Grid g(2, 1.0, 0.125);
  auto opI = DiscreteOperator::assemble(g, identity_field(2), unit_weight(2));
  auto comp = compact_perturbation(identity_field(2), scaled_identity(2, 2.0), 0.5);
  auto opC = DiscreteOperator::assemble(g, comp, unit_weight(2));
  FunCalc calcI(opI), calcC(opC);

  GridFunction f = random_gf(g, 17);
  VectorGridFunction z = resolvent_diff_grad(calcI, calcI, 1.0, f);
  CHECK(z.values.cwiseAbs().maxCoeff() < 1e-10);

  // The factored path must match direct subtraction of the two resolvents.
  for (double t : {0.5, 4.0}) {
    VectorGridFunction d = resolvent_diff_grad(calcC, calcI, t, f);
    GridFunction u0 = calcI.resolvent(1.0, t, f);
    GridFunction u = calcC.resolvent(1.0, t, f);
    GridFunction diff(g, u0.values - u.values);
    VectorGridFunction direct = opC.gradient(diff);
    CHECK((d.values - direct.values).norm() <= 1e-8 * (direct.values.norm() + 1e-30));
  }
}

TEST_CASE("coefficient-difference splitting sums to (L0 - L) f") {
  Grid g(2, 1.0, 0.125);
  auto comp = compact_perturbation(identity_field(2), scaled_identity(2, 2.0), 0.5);
  auto opL = DiscreteOperator::assemble(g, comp, power_weight(2, 0.3));
  auto opL0 = DiscreteOperator::assemble(g, identity_field(2), unit_weight(2));

  for (int i = 0; i < 5; ++i) {
    GridFunction f = random_gf(g, 1300 + i);
    auto [p1, p2] = split_difference(opL, opL0, f);
    Eigen::VectorXd direct = opL0.apply(f).values - opL.apply(f).values;
    CHECK((p1.values + p2.values - direct).norm() <= 1e-9 * direct.norm());
  }

  // Equal weights kill the second piece.
  auto opLw = DiscreteOperator::assemble(g, comp, unit_weight(2));
  GridFunction f = random_gf(g, 19);
  auto [q1, q2] = split_difference(opLw, opL0, f);
  CHECK(q2.values.cwiseAbs().maxCoeff() < 1e-12);
  Eigen::VectorXd direct = opL0.apply(f).values - opLw.apply(f).values;
  CHECK((q1.values + q2.values - direct).norm() <= 1e-9 * direct.norm());
}

TEST_SUITE_END();
