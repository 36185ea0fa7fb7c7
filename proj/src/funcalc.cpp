#include "rieszlab/funcalc.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include <Eigen/IterativeLinearSolvers>
#include <Eigen/SparseCholesky>

namespace riesz {

namespace {

using Factor = Eigen::SimplicialLDLT<SparseMat>;

void gauss_legendre(int n, std::vector<double>& nodes, std::vector<double>& weights) {
  nodes.resize(n);
  weights.resize(n);
  for (int i = 0; i < n; ++i) {
    double x = std::cos(M_PI * (i + 0.75) / (n + 0.5));
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = x;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2 * k - 1) * x * p1 - (k - 1) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      const double dp = n * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-15) break;
    }
    double p0 = 1.0, p1 = x;
    for (int k = 2; k <= n; ++k) {
      const double p2 = ((2 * k - 1) * x * p1 - (k - 1) * p0) / k;
      p0 = p1;
      p1 = p2;
    }
    const double dp = n * (x * p1 - p0) / (x * x - 1.0);
    nodes[i] = x;
    weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
  }
}

SparseMat shifted_system(const DiscreteOperator& op, double s, double t) {
  const Eigen::VectorXd& mass = op.node_mass();
  SparseMat sys = t * op.stiffness();
  SparseMat diag(mass.size(), mass.size());
  diag.reserve(Eigen::VectorXi::Constant(static_cast<int>(mass.size()), 1));
  for (Index i = 0; i < mass.size(); ++i)
    diag.insert(i, i) = s * mass[i];
  diag.makeCompressed();
  sys = sys + diag;
  sys.makeCompressed();
  return sys;
}

// Solve (a I + b T) x = e1 for symmetric tridiagonal T given by (alpha, beta);
// the matrix is positive definite in all our uses, so the Thomas sweep is
// stable without pivoting.
Eigen::VectorXd tridiag_solve_e1(const std::vector<double>& alpha,
                                 const std::vector<double>& beta, int j,
                                 double a, double b,
                                 const Eigen::VectorXd* rhs = nullptr) {
  Eigen::VectorXd d(j), e(j > 1 ? j - 1 : 0), x(j);
  for (int i = 0; i < j; ++i) d[i] = a + b * alpha[i];
  for (int i = 0; i + 1 < j; ++i) e[i] = b * beta[i];
  Eigen::VectorXd r = Eigen::VectorXd::Zero(j);
  if (rhs)
    r = *rhs;
  else
    r[0] = 1.0;
  // forward elimination
  for (int i = 1; i < j; ++i) {
    const double m = e[i - 1] / d[i - 1];
    d[i] -= m * e[i - 1];
    r[i] -= m * r[i - 1];
  }
  x[j - 1] = r[j - 1] / d[j - 1];
  for (int i = j - 2; i >= 0; --i) x[i] = (r[i] - e[i] * x[i + 1]) / d[i];
  return x;
}

}  // namespace

SqrtQuadrature SqrtQuadrature::build(double mu_lo, double mu_hi, double target,
                                     int points_per_panel) {
  if (!(mu_lo > 0.0) || !(mu_hi >= mu_lo))
    throw std::invalid_argument("SqrtQuadrature: need 0 < mu_lo <= mu_hi");
  if (!(target > 0.0 && target < 1.0))
    throw std::invalid_argument("SqrtQuadrature: target in (0,1)");

  std::vector<double> gx, gw;
  gauss_legendre(points_per_panel, gx, gw);

  double theta = 0.1;   // head = theta / sqrt(mu_hi)
  double Theta = 10.0;  // tail_start = Theta / sqrt(mu_lo)
  int tail_terms = 4;
  int panels_per_octave = 1;

  // Certification grid in mu, log spaced with endpoints.
  const int ngrid = 400;
  std::vector<double> mus(ngrid);
  for (int i = 0; i < ngrid; ++i) {
    const double u = static_cast<double>(i) / (ngrid - 1);
    mus[i] = mu_lo * std::pow(mu_hi / mu_lo, u);
  }

  SqrtQuadrature q;
  for (int attempt = 0; attempt < 40; ++attempt) {
    q.head = theta / std::sqrt(mu_hi);
    q.tail_start = Theta / std::sqrt(mu_lo);
    q.tail_terms = tail_terms;
    q.nodes.clear();
    const int octaves = std::max(
        1, static_cast<int>(std::ceil(std::log2(q.tail_start / q.head))));
    const int panels = octaves * panels_per_octave;
    const double ratio = std::pow(q.tail_start / q.head, 1.0 / panels);
    double lo = q.head;
    for (int pnl = 0; pnl < panels; ++pnl) {
      const double hi = (pnl + 1 == panels) ? q.tail_start : lo * ratio;
      const double c = 0.5 * (hi + lo), r = 0.5 * (hi - lo);
      for (int i = 0; i < points_per_panel; ++i)
        q.nodes.emplace_back(c + r * gx[i], r * gw[i]);
      lo = hi;
    }
    double err = 0.0;
    for (double mu : mus)
      err = std::max(err, std::abs(q.eval_scalar(mu) * std::sqrt(mu) - 1.0));
    q.certified_error = err;
    if (err <= target) return q;
    theta *= 0.5;
    Theta *= 1.3;
    tail_terms = std::min(tail_terms + 1, 8);
    if (attempt % 2 == 1)
      panels_per_octave = std::min(panels_per_octave * 2, 8);
  }
  std::ostringstream msg;
  msg << "SqrtQuadrature: certification failed, best error "
      << q.certified_error << " > target " << target;
  throw std::runtime_error(msg.str());
}

double SqrtQuadrature::eval_scalar(double mu) const {
  double v = head;  // integrand (1 + sigma^2 mu)^{-1} ~ 1 on [0, head]
  for (const auto& [sigma, wq] : nodes) v += wq / (1.0 + sigma * sigma * mu);
  // Remainder of the integral past tail_start: alternating series in
  // 1/(sigma^2 mu).
  double sign = 1.0;
  for (int k = 0; k < tail_terms; ++k) {
    v += sign / ((2 * k + 1) * std::pow(mu, k + 1) *
                 std::pow(tail_start, 2 * k + 1));
    sign = -sign;
  }
  return 2.0 / M_PI * v;
}

FunCalc::FunCalc(const DiscreteOperator& op, SolverConfig cfg)
    : op_(&op), cfg_(std::move(cfg)) {
  if (!(cfg_.cg_tol > 0 && cfg_.cg_tol < 1) || cfg_.cg_max_iters <= 0 ||
      !(cfg_.quad_target > 0 && cfg_.quad_target < 1) ||
      cfg_.quad_points_per_panel < 2 || !(cfg_.heat_target > 0) ||
      !(cfg_.krylov_tol > 0) || cfg_.krylov_max <= 0)
    throw std::invalid_argument("SolverConfig: tolerances in (0,1), positive counts");
}

Eigen::VectorXd FunCalc::solve(double s, double t, const Eigen::VectorXd& rhs) const {
  const Index n = rhs.size();
  ++solves_;
  if (n <= cfg_.direct_cap) {
    const std::pair<double, double> key{s, t};
    std::shared_ptr<void> holder;
    {
      std::lock_guard<std::mutex> lk(mu_);
      auto it = factor_cache_.find(key);
      if (it != factor_cache_.end()) holder = it->second;
    }
    if (!holder) {
      auto fac = std::make_shared<Factor>();
      fac->compute(shifted_system(*op_, s, t));
      if (fac->info() != Eigen::Success)
        throw std::runtime_error("resolvent: sparse LDLT factorization failed");
      holder = fac;
      std::lock_guard<std::mutex> lk(mu_);
      const std::size_t max_factors = n <= 50000 ? 256 : 16;
      if (factor_cache_.size() >= max_factors) {
        factor_cache_.erase(factor_order_.front());
        factor_order_.erase(factor_order_.begin());
      }
      factor_cache_[key] = holder;
      factor_order_.push_back(key);
    }
    return std::static_pointer_cast<Factor>(holder)->solve(rhs);
  }
  Eigen::ConjugateGradient<SparseMat, Eigen::Lower | Eigen::Upper> cg;
  cg.setTolerance(cfg_.cg_tol);
  cg.setMaxIterations(cfg_.cg_max_iters);
  const SparseMat sys = shifted_system(*op_, s, t);
  cg.compute(sys);
  Eigen::VectorXd x = cg.solve(rhs);
  cg_iters_ += cg.iterations();
  if (cg.info() != Eigen::Success) {
    std::ostringstream msg;
    msg << "resolvent: CG did not converge in " << cg.iterations()
        << " iterations, residual " << cg.error() << " (s=" << s << ", t=" << t
        << ", n=" << n << ")";
    throw std::runtime_error(msg.str());
  }
  return x;
}

GridFunction FunCalc::resolvent(double s, double t, const GridFunction& f) const {
  if (!(s > 0.0)) throw std::invalid_argument("resolvent: s > 0 required");
  if (!(t >= 0.0)) throw std::invalid_argument("resolvent: t >= 0 required");
  if (!(f.grid == op_->grid())) throw std::invalid_argument("resolvent: grid mismatch");
  GridFunction out(f.grid);
  if (t == 0.0) {
    out.values = f.values / s;
    return out;
  }
  out.values = solve(s, t, op_->node_mass().cwiseProduct(f.values));
  return out;
}

GridFunction FunCalc::heat(double t, const GridFunction& f) const {
  if (!(t >= 0.0)) throw std::invalid_argument("heat: t >= 0 required");
  if (!(f.grid == op_->grid())) throw std::invalid_argument("heat: grid mismatch");
  GridFunction out{f.grid, f.values};
  if (t == 0.0) return out;
  if (op_->has_dense_oracle()) {
    const DenseSpectral& sp = op_->dense_spectral();
    const Eigen::VectorXd c =
        sp.vectors.transpose() * op_->node_mass().cwiseProduct(f.values);
    out.values =
        sp.vectors * (-t * sp.values.array()).exp().matrix().cwiseProduct(c);
    return out;
  }
  // Substep count from the scalar backward-Euler model over the spectral range.
  const auto [lam_lo, lam_hi] = op_->spectral_bounds();
  const double mu_hi = t * lam_hi;
  long m = 8;
  for (;; m *= 2) {
    double err = 0.0;
    const int ngrid = 300;
    for (int i = 0; i < ngrid; ++i) {
      const double u = static_cast<double>(i) / (ngrid - 1);
      const double mu = 1e-4 * std::pow(std::max(mu_hi, 1e-3) / 1e-4, u);
      err = std::max(err, std::abs(std::exp(-static_cast<double>(m) *
                                            std::log1p(mu / m)) -
                                   std::exp(-mu)));
    }
    if (err <= cfg_.heat_target) break;
    if (2 * m > cfg_.max_heat_steps) {
      std::ostringstream msg;
      msg << "heat: backward Euler needs more than " << cfg_.max_heat_steps
          << " substeps for target " << cfg_.heat_target;
      throw std::runtime_error(msg.str());
    }
  }
  const double dt = t / static_cast<double>(m);
  for (long j = 0; j < m; ++j)
    out.values = solve(1.0, dt, op_->node_mass().cwiseProduct(out.values));
  (void)lam_lo;
  return out;
}

const SqrtQuadrature& FunCalc::quadrature_for(double s, double t) const {
  const std::pair<double, double> key{s, t};
  std::lock_guard<std::mutex> lk(mu_);
  auto it = quad_cache_.find(key);
  if (it != quad_cache_.end()) return it->second;
  const auto [lam_lo, lam_hi] = op_->spectral_bounds();
  const double mu_lo = s + t * lam_lo;
  const double mu_hi = s + t * lam_hi;
  if (!(mu_lo > 0.0))
    throw std::invalid_argument("inv_sqrt: shift + t*lambda_min must be positive");
  auto q = SqrtQuadrature::build(mu_lo, mu_hi, cfg_.quad_target,
                                 cfg_.quad_points_per_panel);
  return quad_cache_.emplace(key, std::move(q)).first->second;
}

Eigen::VectorXd FunCalc::apply_quadrature(double s, double t,
                                          const SqrtQuadrature& q,
                                          const Eigen::VectorXd& f) const {
  const Eigen::VectorXd& mass = op_->node_mass();
  Eigen::VectorXd acc = q.head * f;
  for (const auto& [sigma, wq] : q.nodes) {
    const double s2 = sigma * sigma;
    acc += wq * solve(1.0 + s2 * s, s2 * t, mass.cwiseProduct(f));
  }
  Eigen::VectorXd v = f;
  double sign = 1.0;
  for (int k = 0; k < q.tail_terms; ++k) {
    v = solve(s, t, mass.cwiseProduct(v));  // (s + tL)^{-(k+1)} f
    acc += sign / ((2 * k + 1) * std::pow(q.tail_start, 2 * k + 1)) * v;
    sign = -sign;
  }
  return 2.0 / M_PI * acc;
}

// Two-pass Lanczos on B = D^{-1/2} S D^{-1/2} (D the node mass), evaluating
// the certified quadrature on the tridiagonal restriction. No basis storage:
// the second pass regenerates the same vectors.
Eigen::VectorXd FunCalc::apply_quadrature_krylov(double s, double t,
                                                 const SqrtQuadrature& q,
                                                 const Eigen::VectorXd& f) const {
  const Eigen::VectorXd& mass = op_->node_mass();
  const Eigen::VectorXd dsqrt = mass.cwiseSqrt();
  const Eigen::VectorXd dinv = dsqrt.cwiseInverse();
  const SparseMat& S = op_->stiffness();
  const Index n = f.size();

  const Eigen::VectorXd g = dsqrt.cwiseProduct(f);
  const double gnorm = g.norm();
  Eigen::VectorXd out = Eigen::VectorXd::Zero(n);
  if (gnorm == 0.0) return out;

  auto applyB = [&](const Eigen::VectorXd& v) -> Eigen::VectorXd {
    return dinv.cwiseProduct(S * dinv.cwiseProduct(v));
  };
  auto eval_tridiag = [&](const std::vector<double>& alpha,
                          const std::vector<double>& beta,
                          int j) -> Eigen::VectorXd {
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(j);
    acc[0] = q.head;
    for (const auto& [sigma, wq] : q.nodes) {
      const double s2 = sigma * sigma;
      acc += wq * tridiag_solve_e1(alpha, beta, j, 1.0 + s2 * s, s2 * t);
    }
    Eigen::VectorXd v = Eigen::VectorXd::Zero(j);
    v[0] = 1.0;
    double sign = 1.0;
    for (int k = 0; k < q.tail_terms; ++k) {
      v = tridiag_solve_e1(alpha, beta, j, s, t, &v);
      acc += sign / ((2 * k + 1) * std::pow(q.tail_start, 2 * k + 1)) * v;
      sign = -sign;
    }
    return 2.0 / M_PI * acc;
  };

  std::vector<double> alpha, beta;
  alpha.reserve(256);
  beta.reserve(256);
  const int check_every = 20;
  Eigen::VectorXd y_prev;
  int steps = 0;
  bool breakdown = false;
  {
    Eigen::VectorXd v_prev = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd v = g / gnorm;
    for (int j = 0; j < cfg_.krylov_max; ++j) {
      Eigen::VectorXd w = applyB(v);
      if (j > 0) w -= beta[j - 1] * v_prev;
      const double a = v.dot(w);
      w -= a * v;
      alpha.push_back(a);
      const double b = w.norm();
      steps = j + 1;
      if (b < 1e-13 * std::max(1.0, std::abs(a))) {
        breakdown = true;
        break;
      }
      beta.push_back(b);
      v_prev = v;
      v = w / b;
      if (steps % check_every == 0 || steps == cfg_.krylov_max) {
        Eigen::VectorXd y = eval_tridiag(alpha, beta, steps);
        if (y_prev.size() > 0) {
          Eigen::VectorXd diff = y;
          diff.head(y_prev.size()) -= y_prev;
          if (diff.norm() <= cfg_.krylov_tol * y.norm()) break;
        }
        y_prev = std::move(y);
      }
    }
  }
  if (!breakdown && steps == cfg_.krylov_max && y_prev.size() == 0)
    throw std::runtime_error("inv_sqrt: Lanczos did not stabilize");

  const Eigen::VectorXd y = eval_tridiag(alpha, beta, steps);
  // Second pass: rebuild the basis and accumulate V y.
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(n);
  {
    Eigen::VectorXd v_prev = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd v = g / gnorm;
    for (int j = 0; j < steps; ++j) {
      acc += y[j] * v;
      if (j + 1 == steps) break;
      Eigen::VectorXd w = applyB(v);
      if (j > 0) w -= beta[j - 1] * v_prev;
      w -= alpha[j] * v;
      v_prev = v;
      v = w / beta[j];
    }
  }
  return gnorm * dinv.cwiseProduct(acc);
}

GridFunction FunCalc::inv_sqrt(double s, double t, const GridFunction& f) const {
  if (!(f.grid == op_->grid())) throw std::invalid_argument("inv_sqrt: grid mismatch");
  if (!(s >= 0.0) || !(t >= 0.0))
    throw std::invalid_argument("inv_sqrt: shift and scale must be nonnegative");
  GridFunction out(f.grid);
  if (t == 0.0) {
    if (!(s > 0.0)) throw std::invalid_argument("inv_sqrt: s + t*lambda_min = 0");
    out.values = f.values / std::sqrt(s);
    return out;
  }
  const SqrtQuadrature& q = quadrature_for(s, t);
  if (f.grid.num_interior() <= cfg_.explicit_quad_cap)
    out.values = apply_quadrature(s, t, q, f.values);
  else
    out.values = apply_quadrature_krylov(s, t, q, f.values);
  return out;
}

VectorGridFunction FunCalc::grad_inv_sqrt(double s, double t,
                                          const GridFunction& f) const {
  return op_->gradient(inv_sqrt(s, t, f));
}

VectorGridFunction FunCalc::grad_resolvent(double s, double t,
                                           const GridFunction& f) const {
  return op_->gradient(resolvent(s, t, f));
}

VectorGridFunction FunCalc::riesz(const GridFunction& f) const {
  return grad_inv_sqrt(0.0, 1.0, f);
}

VectorGridFunction FunCalc::local_riesz(const GridFunction& f) const {
  return grad_inv_sqrt(1.0, 1.0, f);
}

GridFunction FunCalc::riesz_adjoint(const VectorGridFunction& V) const {
  return inv_sqrt_adjoint_grad(0.0, 1.0, V);
}

GridFunction FunCalc::inv_sqrt_adjoint_grad(double s, double t,
                                            const VectorGridFunction& V) const {
  // (grad Q)^* = Q (-div_w), Q = (s+tL)^{-1/2} self-adjoint in <.,.>_w.
  GridFunction g = op_->divergence_w(V);
  g.values = -g.values;
  return inv_sqrt(s, t, g);
}

GridFunction FunCalc::resolvent_adjoint_grad(double s, double t,
                                             const VectorGridFunction& V) const {
  GridFunction g = op_->divergence_w(V);
  g.values = -g.values;
  return resolvent(s, t, g);
}

VectorGridFunction resolvent_diff_grad(const FunCalc& calcL, const FunCalc& calcL0,
                                       double t, const GridFunction& f) {
  const DiscreteOperator& opL = calcL.op();
  const DiscreteOperator& opL0 = calcL0.op();
  if (!(opL.grid() == opL0.grid()))
    throw std::invalid_argument("resolvent_diff_grad: operators on different grids");
  if (!(t > 0.0)) throw std::invalid_argument("resolvent_diff_grad: t > 0 required");

  const GridFunction u0 = calcL0.resolvent(1.0, t, f);
  const GridFunction u = calcL.resolvent(1.0, t, f);
  const Eigen::VectorXd direct = u0.values - u.values;

  // Factored identity: R0 - R = t R (L - L0) R0 with R = (1+tL)^{-1}.
  GridFunction g{f.grid, opL.apply(u0).values - opL0.apply(u0).values};
  GridFunction v = calcL.resolvent(1.0, t, g);
  v.values *= t;

  const double fref = f.values.norm();
  const double dref = direct.norm();
  if (dref > 1e-12 * fref) {
    const double rel = (v.values - direct).norm() / dref;
    const double tol = std::max(calcL.config().identity_check_tol,
                                calcL0.config().identity_check_tol);
    if (rel > tol) {
      std::ostringstream msg;
      msg << "resolvent_diff_grad: factored identity residual " << rel
          << " exceeds tolerance " << tol << " (assembly inconsistency?)";
      throw std::runtime_error(msg.str());
    }
  }
  return opL.gradient(v);
}

std::pair<GridFunction, GridFunction> split_difference(const DiscreteOperator& opL,
                                                       const DiscreteOperator& opL0,
                                                       const GridFunction& f) {
  if (!(opL.grid() == opL0.grid()))
    throw std::invalid_argument("split_difference: operators on different grids");
  if (!(f.grid == opL.grid()))
    throw std::invalid_argument("split_difference: grid mismatch");
  const Grid& grid = opL.grid();
  const int dim = grid.dim();
  const MatrixField& A = opL.field();
  const MatrixField& A0 = opL0.field();
  const WeightField& w = opL.weight();
  const WeightField& w0 = opL0.weight();

  // First piece: (1/w) div[P grad] f with P = (w - w0) A - w0 (A0 - A)
  // = w A - w0 A0. Assembling the form of P cell by cell therefore gives
  // exactly S_w - S_0, so the two pieces sum to (L0 - L) f by construction.
  MatrixField::EvalFn P = [&A, &A0, &w, &w0](const Point& x) -> Mat3 {
    return (w(x) - w0(x)) * A(x) - w0(x) * (A0(x) - A(x));
  };
  const SparseMat Sdiff = assemble_stiffness(grid, P, dim);
  GridFunction piece1{grid, -(Sdiff * f.values).cwiseQuotient(opL.node_mass())};

  // Second piece: -((w - w0)/(w0 w)) div(w0 A0 grad) f = ((w - w0)/w) L0 f,
  // with the node-averaged weights the assemblies actually use.
  const Eigen::VectorXd ratio =
      (opL.node_weight() - opL0.node_weight()).cwiseQuotient(opL.node_weight());
  GridFunction piece2{grid, ratio.cwiseProduct(opL0.apply(f).values)};
  return {std::move(piece1), std::move(piece2)};
}

}  // namespace riesz
