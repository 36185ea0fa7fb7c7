#pragma once

#include <map>
#include <memory>
#include <mutex>
#include <utility>
#include <vector>

#include "rieszlab/discretize.hpp"

namespace riesz {

struct SolverConfig {
  double cg_tol = 1e-10;
  int cg_max_iters = 50000;
  // Scalar certification target for the inverse-square-root quadrature.
  double quad_target = 1e-6;
  int quad_points_per_panel = 16;
  // Scalar backward-Euler error target for the heat semigroup.
  double heat_target = 1e-6;
  long max_heat_steps = 4000000;
  // Stagnation tolerance of the Lanczos evaluation of the quadrature.
  double krylov_tol = 1e-7;
  int krylov_max = 20000;
  // Below this unknown count resolvents go through cached sparse LDLT
  // factorizations instead of CG.
  Index direct_cap = 2000000;
  // Below this unknown count the quadrature is evaluated by explicit
  // per-node resolvent solves; above it by the Lanczos path.
  Index explicit_quad_cap = 4000;
  // Mandatory factored-identity cross-check tolerance in resolvent_diff_grad.
  double identity_check_tol = 1e-6;
};

/// Certified quadrature for mu^{-1/2} as a combination of resolvents
/// (1 + sigma^2 mu)^{-1}: a linear head term, Gauss-Legendre nodes on
/// dyadic panels, and a short Neumann tail in mu^{-1}. Node placement is
/// chosen so the scalar relative error over [mu_lo, mu_hi] meets the
/// target; the same formula is then applied to the operator.
struct SqrtQuadrature {
  double head = 0.0;                              // integrand ~ 1 on [0, head]
  std::vector<std::pair<double, double>> nodes;   // (sigma, GL weight)
  double tail_start = 0.0;
  int tail_terms = 0;
  double certified_error = 0.0;

  static SqrtQuadrature build(double mu_lo, double mu_hi, double target,
                              int points_per_panel);
  // Scalar model value of the quadrature at mu (exact value mu^{-1/2}).
  double eval_scalar(double mu) const;
};

/// Functional calculus on one assembled operator. Pure given (op, cfg);
/// the internal factorization cache only memoizes exact solves.
class FunCalc {
 public:
  explicit FunCalc(const DiscreteOperator& op, SolverConfig cfg = {});

  const DiscreteOperator& op() const { return *op_; }
  const SolverConfig& config() const { return cfg_; }

  // (s + t L)^{-1} f. Satisfies the L2(w) bound ||.|| <= 1/s up to solver
  // tolerance. Throws with iteration diagnostics if CG stalls.
  GridFunction resolvent(double s, double t, const GridFunction& f) const;

  // e^{-tL} f: dense spectral calculus when the oracle is available,
  // otherwise substepped backward Euler with a scalar-model step count.
  GridFunction heat(double t, const GridFunction& f) const;

  // (s + t L)^{-1/2} f by the certified quadrature; s + t lambda_min > 0.
  GridFunction inv_sqrt(double s, double t, const GridFunction& f) const;

  VectorGridFunction riesz(const GridFunction& f) const;        // grad L^{-1/2}
  VectorGridFunction local_riesz(const GridFunction& f) const;  // grad (1+L)^{-1/2}
  VectorGridFunction grad_inv_sqrt(double s, double t, const GridFunction& f) const;
  VectorGridFunction grad_resolvent(double s, double t, const GridFunction& f) const;

  // w-adjoints of the composed maps, for norm estimation.
  GridFunction riesz_adjoint(const VectorGridFunction& V) const;
  GridFunction inv_sqrt_adjoint_grad(double s, double t,
                                     const VectorGridFunction& V) const;
  GridFunction resolvent_adjoint_grad(double s, double t,
                                      const VectorGridFunction& V) const;

  long long solve_count() const { return solves_; }
  long long cg_iteration_count() const { return cg_iters_; }

 private:
  Eigen::VectorXd solve(double s, double t, const Eigen::VectorXd& rhs_mass) const;
  Eigen::VectorXd apply_quadrature(double s, double t, const SqrtQuadrature& q,
                                   const Eigen::VectorXd& f) const;
  Eigen::VectorXd apply_quadrature_krylov(double s, double t,
                                          const SqrtQuadrature& q,
                                          const Eigen::VectorXd& f) const;
  const SqrtQuadrature& quadrature_for(double s, double t) const;

  const DiscreteOperator* op_;
  SolverConfig cfg_;
  mutable std::mutex mu_;
  mutable std::map<std::pair<double, double>, std::shared_ptr<void>> factor_cache_;
  mutable std::vector<std::pair<double, double>> factor_order_;
  mutable std::map<std::pair<double, double>, SqrtQuadrature> quad_cache_;
  mutable long long solves_ = 0;
  mutable long long cg_iters_ = 0;
};

/// grad[(1 + t L0)^{-1} - (1 + t L)^{-1}] f, computed both by direct
/// subtraction and through the factored identity
///   R0 - R = t R (L - L0) R0,
/// asserting agreement before returning the factored result.
VectorGridFunction resolvent_diff_grad(const FunCalc& calcL, const FunCalc& calcL0,
                                       double t, const GridFunction& f);

/// The two pieces of the coefficient-difference splitting
///   L0 - L = (1/w) div[((w - w0) A - w0 (A0 - A)) grad]
///            - ((w - w0)/(w0 w)) div(w0 A0 grad),
/// applied to f; their sum equals (L0 - L) f to assembly roundoff.
std::pair<GridFunction, GridFunction> split_difference(const DiscreteOperator& opL,
                                                       const DiscreteOperator& opL0,
                                                       const GridFunction& f);

}  // namespace riesz
