#include "rieszlab/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>
#include <stdexcept>

#include <Eigen/SparseCholesky>

namespace riesz {

namespace {

void gauss_legendre01(int n, std::vector<double>& nodes, std::vector<double>& weights) {
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
    nodes[i] = 0.5 * (x + 1.0);  // mapped to [0, 1]
    weights[i] = 1.0 / ((1.0 - x * x) * dp * dp);
  }
}

// Pointwise duality map |v|^{p-1} sign(v); rows of a multi-component field
// map to |row|^{p-2} row (Euclidean row length).
Eigen::VectorXd dual_scalar(const Eigen::VectorXd& v, double p) {
  Eigen::VectorXd out(v.size());
  for (Index i = 0; i < v.size(); ++i) {
    const double a = std::abs(v[i]);
    out[i] = a < 1e-280 ? 0.0 : std::pow(a, p - 1.0) * (v[i] > 0 ? 1.0 : -1.0);
  }
  return out;
}

Eigen::MatrixXd dual_rows(const Eigen::MatrixXd& Y, double p) {
  Eigen::MatrixXd out(Y.rows(), Y.cols());
  for (Index i = 0; i < Y.rows(); ++i) {
    const double a = Y.row(i).norm();
    if (a < 1e-280)
      out.row(i).setZero();
    else
      out.row(i) = std::pow(a, p - 2.0) * Y.row(i);
  }
  return out;
}

// Chebyshev (minimax) line fit z ~ a - c u: intercept is the mid-range for
// fixed slope, and the half-range is convex in c, so golden-section search
// suffices.
struct LineFit {
  double a = 0.0, c = 0.0, halfrange = 0.0;
};

LineFit minimax_line(const std::vector<double>& u, const std::vector<double>& z) {
  auto halfrange = [&](double c, double* mid = nullptr) {
    double lo = 1e300, hi = -1e300;
    for (std::size_t i = 0; i < u.size(); ++i) {
      const double v = z[i] + c * u[i];
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    if (mid) *mid = 0.5 * (lo + hi);
    return 0.5 * (hi - lo);
  };
  double lo = -2.0, hi = 6.0;
  const double gr = (std::sqrt(5.0) - 1.0) / 2.0;
  double x1 = hi - gr * (hi - lo), x2 = lo + gr * (hi - lo);
  double f1 = halfrange(x1), f2 = halfrange(x2);
  for (int it = 0; it < 200; ++it) {
    if (f1 < f2) {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - gr * (hi - lo);
      f1 = halfrange(x1);
    } else {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + gr * (hi - lo);
      f2 = halfrange(x2);
    }
  }
  LineFit fit;
  fit.c = 0.5 * (lo + hi);
  fit.halfrange = halfrange(fit.c, &fit.a);
  return fit;
}

double local_ball_volume(const Grid& g, const Eigen::VectorXd& wnode,
                         const Point& center, double r) {
  const int dim = g.dim();
  const double h = g.spacing(), L = g.half_width();
  std::array<int, 2> lo3[3];
  std::array<int, 3> ilo{1, 1, 1}, ihi{1, 1, 1};
  (void)lo3;
  for (int d = 0; d < dim; ++d) {
    ilo[d] = std::max(1, static_cast<int>(std::ceil((center[d] - r + L) / h)));
    ihi[d] = std::min(g.nodes_per_axis() - 2,
                      static_cast<int>(std::floor((center[d] + r + L) / h)));
  }
  double vol = 0.0;
  const double hc = g.cell_volume();
  std::array<int, 3> ix{1, 1, 1};
  for (int i0 = ilo[0]; i0 <= ihi[0]; ++i0)
    for (int i1 = ilo[1]; i1 <= ihi[1]; ++i1)
      for (int i2 = ilo[2]; i2 <= ihi[2]; ++i2) {
        ix = {i0, i1, dim > 2 ? i2 : 1};
        Point x{g.coord(i0), g.coord(i1), dim > 2 ? g.coord(i2) : 0.0};
        if (dist(x, center) < r) vol += wnode[g.interior_index(ix)] * hc;
        if (dim <= 2) break;
      }
  return vol;
}

}  // namespace

double weighted_lp(const Eigen::VectorXd& x, const Eigen::VectorXd& mass, double p) {
  double s = 0.0;
  for (Index i = 0; i < x.size(); ++i) s += mass[i] * std::pow(std::abs(x[i]), p);
  return std::pow(s, 1.0 / p);
}

double weighted_lp(const Eigen::MatrixXd& x, const Eigen::VectorXd& mass, double p) {
  double s = 0.0;
  for (Index i = 0; i < x.rows(); ++i) s += mass[i] * std::pow(x.row(i).norm(), p);
  return std::pow(s, 1.0 / p);
}

NormEstimate pnorm_estimate(const BlackBoxMap& T, double p, const AnalysisConfig& cfg,
                            const std::vector<Eigen::VectorXd>& structured_starts) {
  if (!(p > 1.0) || !std::isfinite(p))
    throw std::invalid_argument("pnorm_estimate: p in (1, inf) required");
  const double pc = p / (p - 1.0);
  const Index n = T.mass.size();

  std::vector<Eigen::VectorXd> starts = structured_starts;
  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (int r = 0; r < cfg.restarts; ++r) {
    Eigen::VectorXd x(n);
    for (Index i = 0; i < n; ++i) x[i] = gauss(rng);
    starts.push_back(std::move(x));
  }

  NormEstimate best;
  best.p = p;
  best.restarts = static_cast<int>(starts.size());
  for (const Eigen::VectorXd& start : starts) {
    double nrm = weighted_lp(start, T.mass, p);
    if (!(nrm > 0.0)) continue;
    Eigen::VectorXd x = start / nrm;
    double best_in_start = 0.0;
    int stall = 0;
    for (int it = 0; it < cfg.max_power_iters; ++it) {
      const Eigen::MatrixXd Y = T.apply(x);
      const double val = weighted_lp(Y, T.mass, p);
      ++best.iterations;
      if (!std::isfinite(val))
        throw std::runtime_error("pnorm_estimate: non-finite iterate");
      if (val > best.value) {
        best.value = val;
        best.witness = x;
      }
      if (val <= best_in_start * (1.0 + cfg.power_stall_tol)) {
        if (++stall >= cfg.stall_patience) break;
      } else {
        stall = 0;
      }
      best_in_start = std::max(best_in_start, val);
      const Eigen::VectorXd z = T.adjoint(dual_rows(Y, p));
      Eigen::VectorXd xn = dual_scalar(z, pc);
      const double xnrm = weighted_lp(xn, T.mass, p);
      if (!(xnrm > 0.0)) break;
      x = xn / xnrm;
    }
  }
  if (best.witness.size() > 0) {
    // Witness re-application: the reported value is exactly what one direct
    // evaluation reproduces.
    const double wn = weighted_lp(best.witness, T.mass, p);
    best.value = weighted_lp(Eigen::MatrixXd(T.apply(best.witness)), T.mass, p) / wn;
  }
  return best;
}

namespace {

BlackBoxMap vector_output_map(
    const FunCalc& calc,
    std::function<VectorGridFunction(const GridFunction&)> fwd,
    std::function<GridFunction(const VectorGridFunction&)> adj) {
  const DiscreteOperator& op = calc.op();
  const Grid grid = op.grid();
  BlackBoxMap T;
  T.mass = op.node_mass();
  T.components = grid.dim();
  T.apply = [grid, fwd](const Eigen::VectorXd& x) -> Eigen::MatrixXd {
    GridFunction f{grid, x};
    return fwd(f).values;
  };
  T.adjoint = [grid, adj](const Eigen::MatrixXd& Y) -> Eigen::VectorXd {
    VectorGridFunction V{grid};
    V.values = Y;
    return adj(V).values;
  };
  return T;
}

BlackBoxMap scalar_output_map(const FunCalc& calc,
                              std::function<GridFunction(const GridFunction&)> fwd) {
  // Self-adjoint scalar kernels of the calculus.
  const Grid grid = calc.op().grid();
  BlackBoxMap T;
  T.mass = calc.op().node_mass();
  T.components = 1;
  T.apply = [grid, fwd](const Eigen::VectorXd& x) -> Eigen::MatrixXd {
    GridFunction f{grid, x};
    return fwd(f).values;
  };
  T.adjoint = [grid, fwd](const Eigen::MatrixXd& Y) -> Eigen::VectorXd {
    GridFunction f{grid, Y.col(0)};
    return fwd(f).values;
  };
  return T;
}

}  // namespace

BlackBoxMap riesz_map(const FunCalc& calc) { return grad_inv_sqrt_map(calc, 0.0, 1.0); }

BlackBoxMap local_riesz_map(const FunCalc& calc) {
  return grad_inv_sqrt_map(calc, 1.0, 1.0);
}

BlackBoxMap grad_inv_sqrt_map(const FunCalc& calc, double s, double t) {
  return vector_output_map(
      calc,
      [&calc, s, t](const GridFunction& f) { return calc.grad_inv_sqrt(s, t, f); },
      [&calc, s, t](const VectorGridFunction& V) {
        return calc.inv_sqrt_adjoint_grad(s, t, V);
      });
}

BlackBoxMap grad_resolvent_map(const FunCalc& calc, double s, double t) {
  return vector_output_map(
      calc,
      [&calc, s, t](const GridFunction& f) { return calc.grad_resolvent(s, t, f); },
      [&calc, s, t](const VectorGridFunction& V) {
        return calc.resolvent_adjoint_grad(s, t, V);
      });
}

BlackBoxMap resolvent_map(const FunCalc& calc, double s, double t) {
  return scalar_output_map(
      calc, [&calc, s, t](const GridFunction& f) { return calc.resolvent(s, t, f); });
}

BlackBoxMap inv_sqrt_map(const FunCalc& calc, double s, double t) {
  return scalar_output_map(
      calc, [&calc, s, t](const GridFunction& f) { return calc.inv_sqrt(s, t, f); });
}

BlackBoxMap resolvent_diff_map(const FunCalc& calcL, const FunCalc& calcL0, double t) {
  const Grid grid = calcL.op().grid();
  BlackBoxMap T;
  T.mass = calcL.op().node_mass();
  T.components = grid.dim();
  T.apply = [&calcL, &calcL0, grid, t](const Eigen::VectorXd& x) -> Eigen::MatrixXd {
    GridFunction f{grid, x};
    return resolvent_diff_grad(calcL, calcL0, t, f).values;
  };
  // The difference of resolvents is self-adjoint in <.,.>_w, so the adjoint
  // is (R0 - R)(-div_w); the direct subtraction agrees with the factored
  // path within the identity tolerance.
  T.adjoint = [&calcL, &calcL0, grid, t](const Eigen::MatrixXd& Y) -> Eigen::VectorXd {
    VectorGridFunction V{grid};
    V.values = Y;
    GridFunction g = calcL.op().divergence_w(V);
    g.values = -g.values;
    return calcL0.resolvent(1.0, t, g).values - calcL.resolvent(1.0, t, g).values;
  };
  return T;
}

std::vector<Eigen::VectorXd> singular_bump_starts(const Grid& grid) {
  const double h = grid.spacing(), L = grid.half_width();
  std::vector<Eigen::VectorXd> starts;
  const Point origin{0.0, 0.0, 0.0};
  for (double sigma : {2.0 * h, 8.0 * h, L / 10.0}) {
    Eigen::VectorXd x(grid.num_interior());
    for (Index k = 0; k < grid.num_interior(); ++k) {
      const double d = dist(grid.interior_point(k), origin);
      x[k] = std::exp(-d * d / (2.0 * sigma * sigma));
    }
    starts.push_back(std::move(x));
  }
  return starts;
}

RieszNormCurve riesz_norm_curve(const MatrixField& A, const WeightField& w, double p,
                                const std::vector<Mesh>& meshes,
                                const AnalysisConfig& cfg) {
  if (meshes.size() < 3)
    throw std::invalid_argument("riesz_norm_curve: need at least 3 meshes");
  bool h_refine = true, l_growth = true;
  for (std::size_t i = 1; i < meshes.size(); ++i) {
    h_refine = h_refine && meshes[i].L == meshes[0].L && meshes[i].h < meshes[i - 1].h;
    l_growth = l_growth && meshes[i].h == meshes[0].h && meshes[i].L > meshes[i - 1].L;
  }
  if (!h_refine && !l_growth)
    throw std::invalid_argument(
        "riesz_norm_curve: meshes must refine h at fixed L or grow L at fixed h");

  RieszNormCurve curve;
  curve.meshes = meshes;
  curve.refined_in_h = h_refine;
  std::vector<double> xs, vals;
  for (const Mesh& m : meshes) {
    Grid grid(A.dim(), m.L, m.h);
    const DiscreteOperator op = DiscreteOperator::assemble(grid, A, w, cfg.assemble);
    const FunCalc calc(op, cfg.solver);
    const BlackBoxMap T = riesz_map(calc);
    curve.norms.push_back(pnorm_estimate(T, p, cfg, singular_bump_starts(grid)));
    xs.push_back(h_refine ? 1.0 / m.h : m.L);
    vals.push_back(curve.norms.back().value);
  }
  curve.fit = fit_power_decay(xs, vals);
  curve.fit.exponent = -curve.fit.exponent;  // oriented so positive = growth
  return curve;
}

double rh_ratio(const DiscreteOperator& op, const Point& center, double r,
                const ScalarFn& boundary_trace, double p) {
  const Grid& grid = op.grid();
  for (int d = 0; d < grid.dim(); ++d)
    if (std::abs(center[d]) + 2.0 * r > grid.half_width())
      throw std::invalid_argument("rh_ratio: B(center, 2r) must lie inside the box");

  const std::vector<Index> ball = grid.interior_ball(center, r);
  if (ball.empty()) throw std::invalid_argument("rh_ratio: empty lattice ball");
  std::vector<Index> local(grid.num_interior(), -1);
  for (std::size_t i = 0; i < ball.size(); ++i) local[ball[i]] = static_cast<Index>(i);

  // Dirichlet data everywhere outside the ball (only the one-cell ring
  // adjacent to the ball actually couples).
  Eigen::VectorXd g_int(grid.num_interior());
  for (Index k = 0; k < grid.num_interior(); ++k)
    g_int[k] = boundary_trace(grid.interior_point(k));

  const SparseMat& S = op.stiffness();
  const SparseMat& Sb = op.boundary_coupling();
  const Index nb = static_cast<Index>(ball.size());
  std::vector<Eigen::Triplet<double>> trips;
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(nb);
  for (Index row = 0; row < nb; ++row) {
    const Index k = ball[row];
    for (SparseMat::InnerIterator it(S, k); it; ++it) {
      const Index j = it.index();
      if (local[j] >= 0)
        trips.emplace_back(static_cast<int>(row), static_cast<int>(local[j]),
                           it.value());
      else
        rhs[row] -= it.value() * g_int[j];
    }
    for (SparseMat::InnerIterator it(Sb, k); it; ++it) {
      Point x = grid.node_point(it.index());
      rhs[row] -= it.value() * boundary_trace(x);
    }
  }
  SparseMat Sball(nb, nb);
  Sball.setFromTriplets(trips.begin(), trips.end());
  Eigen::SimplicialLDLT<SparseMat> fac(Sball);
  if (fac.info() != Eigen::Success)
    throw std::runtime_error("rh_ratio: Dirichlet solve factorization failed");
  const Eigen::VectorXd u_ball = fac.solve(rhs);

  GridFunction u{grid, g_int};
  for (Index row = 0; row < nb; ++row) u.values[ball[row]] = u_ball[row];
  const VectorGridFunction grad = op.gradient(u);

  const Eigen::VectorXd& wn = op.node_weight();
  double num = 0.0, num_mass = 0.0, den = 0.0, den_mass = 0.0;
  for (Index k : grid.interior_ball(center, r / 2.0)) {
    num += wn[k] * std::pow(grad.values.row(k).norm(), p);
    num_mass += wn[k];
  }
  for (Index k : ball) {
    den += wn[k] * std::abs(u.values[k]);
    den_mass += wn[k];
  }
  if (!(den > 1e-300 * den_mass))
    throw std::runtime_error("rh_ratio: degenerate denominator (u is zero)");
  return r * std::pow(num / num_mass, 1.0 / p) / (den / den_mass);
}

double harmonic_residual(const DiscreteOperator& op, const ScalarFn& f_exact,
                         const std::function<bool(const Point&)>& region) {
  const Grid& grid = op.grid();
  Eigen::VectorXd all(grid.num_nodes());
  for (Index k = 0; k < grid.num_nodes(); ++k) all[k] = f_exact(grid.node_point(k));
  const GridFunction Lf = op.apply_with_boundary(all);
  double worst = 0.0;
  for (Index k = 0; k < grid.num_interior(); ++k)
    if (region(grid.interior_point(k)))
      worst = std::max(worst, std::abs(Lf.values[k]));
  return worst;
}

double harmonic_residual(const DiscreteOperator& op, const ScalarFn& f_exact,
                         double r_in, double r_out) {
  const Point origin{0.0, 0.0, 0.0};
  return harmonic_residual(op, f_exact, [&](const Point& x) {
    const double d = dist(x, origin);
    return r_in <= d && d <= r_out;
  });
}

KernelFit heat_kernel_probe(const DiscreteOperator& op, const Point& y,
                            const std::vector<double>& times, const AnalysisConfig& cfg,
                            const KernelProbeOptions& opts) {
  const Grid& grid = op.grid();
  const double h = grid.spacing(), L = grid.half_width();
  if (times.empty()) throw std::invalid_argument("heat_kernel_probe: empty time list");
  for (double t : times)
    if (!(t > h * h) || !(t < (L / 4.0) * (L / 4.0)))
      throw std::invalid_argument(
          "heat_kernel_probe: times must lie in (h^2, (L/4)^2)");

  // Kernel column source: delta at the node nearest y, scaled by cell mass.
  Index src = -1;
  double best = 1e300;
  for (Index k = 0; k < grid.num_interior(); ++k) {
    const double d = dist(grid.interior_point(k), y);
    if (d < best) {
      best = d;
      src = k;
    }
  }
  const Point ysnap = grid.interior_point(src);

  const FunCalc calc(op, cfg.solver);
  const Eigen::VectorXd& mass = op.node_mass();
  const Eigen::VectorXd& wn = op.node_weight();

  KernelFit fit;
  fit.times = times;
  fit.mass_min = 1e300;
  fit.mass_max = -1e300;
  fit.gly_p = opts.gly_p;

  std::vector<Eigen::VectorXd> columns;
  std::vector<double> us, zs;
  const double lam_scale = op.field().upper_bound();
  for (double t : times) {
    GridFunction delta{grid};
    delta.values[src] = 1.0 / mass[src];
    const GridFunction k_t = calc.heat(t, delta);
    const double total = mass.dot(k_t.values);
    fit.mass_min = std::min(fit.mass_min, total);
    fit.mass_max = std::max(fit.mass_max, total);
    if (k_t.values.minCoeff() < -1e-12) fit.negative_values_warning = true;
    columns.push_back(k_t.values);

    const double rad = 3.0 * std::sqrt(t);
    const double guard = 3.0 * std::sqrt(t * lam_scale);
    for (Index k : grid.interior_ball(ysnap, rad)) {
      const Point x = grid.interior_point(k);
      double dbd = L;
      for (int d = 0; d < grid.dim(); ++d) dbd = std::min(dbd, L - std::abs(x[d]));
      if (dbd < guard) continue;
      const double kv = k_t.values[k];
      if (!(kv > 0.0)) continue;  // clamped out of the log fit
      const double V = local_ball_volume(grid, wn, x, std::sqrt(t));
      if (!(V > 0.0)) continue;
      us.push_back(dist(x, ysnap) * dist(x, ysnap) / t);
      zs.push_back(std::log(kv * V));
    }
  }
  if (us.size() < 8)
    throw std::runtime_error("heat_kernel_probe: validity region too small");

  // Bin the cloud in d^2/t and minimax-fit the bin maxima (upper Gaussian
  // envelope) and minima (lower envelope) separately.
  const double umax = *std::max_element(us.begin(), us.end());
  const int nbins = 16;
  std::vector<double> bu, bmax, bmin;
  for (int b = 0; b < nbins; ++b) {
    double zmax = -1e300, zmin = 1e300, usum = 0.0;
    int cnt = 0;
    for (std::size_t i = 0; i < us.size(); ++i) {
      const int bi = std::min(nbins - 1, static_cast<int>(us[i] / umax * nbins));
      if (bi != b) continue;
      zmax = std::max(zmax, zs[i]);
      zmin = std::min(zmin, zs[i]);
      usum += us[i];
      ++cnt;
    }
    if (cnt == 0) continue;
    bu.push_back(usum / cnt);
    bmax.push_back(zmax);
    bmin.push_back(zmin);
  }
  if (bu.size() < 3)
    throw std::runtime_error("heat_kernel_probe: too few radial bins for the fit");

  const LineFit up = minimax_line(bu, bmax);
  const LineFit lo = minimax_line(bu, bmin);
  fit.c_upper = up.c;
  fit.C_upper = std::exp(up.a + up.halfrange);
  fit.upper_residual = up.halfrange;
  fit.c_lower = lo.c;
  fit.C_lower = std::exp(-(lo.a - lo.halfrange));
  fit.lower_residual = lo.halfrange;

  // Weighted gradient integral against the Gaussian-weighted bound.
  const double gamma = opts.gly_gamma >= 0.0 ? opts.gly_gamma : fit.c_upper / 4.0;
  fit.gly_gamma = gamma;
  const double p = opts.gly_p;
  for (std::size_t ti = 0; ti < times.size(); ++ti) {
    const double t = times[ti];
    const GridFunction k_t{grid, columns[ti]};
    const VectorGridFunction gk = op.gradient(k_t);
    const double guard = 3.0 * std::sqrt(t * lam_scale);
    double integral = 0.0;
    for (Index k = 0; k < grid.num_interior(); ++k) {
      const Point x = grid.interior_point(k);
      double dbd = L;
      for (int d = 0; d < grid.dim(); ++d) dbd = std::min(dbd, L - std::abs(x[d]));
      if (dbd < guard) continue;
      const double d2 = dist(x, ysnap) * dist(x, ysnap);
      integral +=
          std::pow(gk.values.row(k).norm(), p) * std::exp(gamma * d2 / t) * mass[k];
    }
    const double Vy = local_ball_volume(grid, wn, ysnap, std::sqrt(t));
    const double bound = fit.C_upper / (std::pow(t, p / 2.0) * std::pow(Vy, p - 1.0));
    fit.gly_value = std::max(fit.gly_value, integral);
    fit.gly_bound = std::max(fit.gly_bound, bound);
  }
  return fit;
}

DecayFit decay_exponent(const std::vector<double>& t, const std::vector<double>& values) {
  if (t.size() != values.size() || t.size() < 3)
    throw std::invalid_argument("decay_exponent: need >= 3 (t, value) samples");
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (!(t[i] > 1.0)) throw std::invalid_argument("decay_exponent: t > 1 required");
    if (!(values[i] > 0.0))
      throw std::invalid_argument("decay_exponent: nonpositive value");
  }
  return fit_power_decay(t, values);
}

PerturbationReport perturbation_decay(const DiscreteOperator& opL,
                                      const DiscreteOperator& opL0, double p,
                                      const std::vector<double>& t_list,
                                      const AnalysisConfig& cfg,
                                      const PerturbationOptions& popt) {
  if (!(opL.grid() == opL0.grid()))
    throw std::invalid_argument("perturbation_decay: operators on different grids");
  for (double t : t_list)
    if (!(t > 1.0))
      throw std::invalid_argument("perturbation_decay: t_list must lie in (1, inf)");

  const FunCalc calcL(opL, cfg.solver);
  const FunCalc calcL0(opL0, cfg.solver);
  PerturbationReport rep;
  rep.times = t_list;
  const std::vector<Eigen::VectorXd> starts = singular_bump_starts(opL.grid());
  for (double t : t_list) {
    const BlackBoxMap T = resolvent_diff_map(calcL, calcL0, t);
    rep.values.push_back(pnorm_estimate(T, p, cfg, starts).value);
  }
  if (std::all_of(rep.values.begin(), rep.values.end(),
                  [](double v) { return v == 0.0; })) {
    rep.fit.infinite_decay = true;
  } else {
    rep.fit = decay_exponent(rep.times, rep.values);
  }
  if (popt.eps > 0.0 && popt.p0 > p) {
    rep.predicted_alpha = std::min(popt.eps * (p - 1.0) / (2.0 * p),
                                   popt.eps * (popt.p0 - p) /
                                       (2.0 * p * (popt.p0 + p)));
    rep.predicted_rate = rep.predicted_alpha + 0.5;
  }
  return rep;
}

AppendixReport appendix_suite(const DiscreteOperator& op, double p,
                              const AnalysisConfig& cfg) {
  const FunCalc calc(op, cfg.solver);
  AppendixReport rep;
  rep.p = p;

  for (double s : {0.5, 1.0, 2.0}) {
    for (double t : {1.0, 10.0, 100.0}) {
      AppendixRecord rec;
      rec.s = s;
      rec.t = t;
      const BlackBoxMap R = resolvent_map(calc, s, t);
      rec.norm2 = pnorm_estimate(R, 2.0, cfg).value;
      rec.normp = pnorm_estimate(R, p, cfg).value;
      rep.resolvent_bound.push_back(rec);
      rep.a1_slack_p2 = std::max(rep.a1_slack_p2, rec.norm2 - 1.0 / s);

      const BlackBoxMap H = inv_sqrt_map(calc, s, t);
      rep.a2_constant_p2 = std::max(
          rep.a2_constant_p2, std::sqrt(s) * pnorm_estimate(H, 2.0, cfg).value);
      rep.a2_constant_p = std::max(rep.a2_constant_p,
                                   std::sqrt(s) * pnorm_estimate(H, p, cfg).value);
    }
  }

  // int_0^1 ||grad (1+tL)^{-1} f||_p dt/sqrt(t) = 2 int_0^1 ... d(sqrt t),
  // for a fixed mesh-scale bump witness; the substitution removes the
  // integrable endpoint singularity so Gauss-Legendre converges fast.
  const std::vector<Eigen::VectorXd> starts = singular_bump_starts(op.grid());
  GridFunction f{op.grid(), starts[1]};
  f.values /= weighted_lp(f.values, op.node_mass(), p);
  auto integral = [&](int nq) {
    std::vector<double> xs, ws;
    gauss_legendre01(nq, xs, ws);
    double acc = 0.0;
    for (int i = 0; i < nq; ++i) {
      const double sigma = xs[i];
      const VectorGridFunction g = calc.grad_resolvent(1.0, sigma * sigma, f);
      acc += 2.0 * ws[i] * weighted_lp(g.values, op.node_mass(), p);
    }
    return acc;
  };
  rep.integral_value = integral(12);
  rep.integral_refined = integral(24);

  // The nu fits sample the resolvent-scaling window t in [1/lam_max,
  // 1/lam_min], where the gradient families obey the Euclidean power laws.
  // Outside it (t lam_min >> 1) the Dirichlet spectral gap takes over and
  // every resolvent family decays at the gap rate instead. The lower end
  // additionally keeps sqrt(t) a few cells wide: the centered-difference
  // gradient loses the top of the frequency band, which flattens the
  // sqrt-family slope by O(h / sqrt(t)).
  // The upper end also stays below domain scale (sqrt(t) <= L/3): once the
  // kernel width is comparable to the box, the Dirichlet walls steepen the
  // resolvent family toward the gap rate.
  const auto [lam_lo, lam_hi] = op.spectral_bounds();
  const double hh = op.grid().spacing();
  const double LL = op.grid().half_width();
  const double t_hi = std::min(0.5 / lam_lo, LL * LL / 9.0);
  const double t_lo =
      std::min(std::max(25.0 * hh * hh, 5.0 / lam_hi), t_hi / 4.0);
  std::vector<double> ts, vr, vs;
  for (int i = 0; i < 5; ++i)
    ts.push_back(t_lo * std::pow(t_hi / t_lo, i / 4.0));
  for (double t : ts) {
    vr.push_back(pnorm_estimate(grad_resolvent_map(calc, 1.0, t), p, cfg, starts).value);
    vs.push_back(pnorm_estimate(grad_inv_sqrt_map(calc, 1.0, t), p, cfg, starts).value);
  }
  const DecayFit rfit = fit_power_decay(ts, vr);
  rep.nu_resolvent = rfit.exponent;
  rep.nu_sqrt = fit_power_decay(ts, vs).exponent;

  // Transfer check. From (1+tL)^{-1/2} = (1/pi) int_0^inf s^{-1/2} (1+s)^{-1}
  // (1 + t/(1+s) L)^{-1} ds, the sqrt-family norm is dominated by the same
  // integral of the resolvent-family norm; substituting s = tan^2(theta)
  // turns it into (2/pi) int_0^{pi/2} vr(t cos^2 theta) dtheta. The check
  // compares measured sqrt-family values against this integral of the fitted
  // resolvent-family power law, capped at the lattice gradient bound n/h
  // (the resolvent contracts Lp, and each centered difference is 1/h-bounded),
  // which also covers tau below the sampled window. Comparing the families
  // through the integral instead of through their fitted exponents keeps the
  // verdict stable: the lattice and Dirichlet-wall biases enter both sides
  // with the same sign and largely cancel.
  const double grad_cap = op.grid().dim() / hh;
  const auto vr_model = [&](double tau) {
    return std::min(grad_cap, rfit.amplitude * std::pow(tau, -rfit.exponent));
  };
  std::vector<double> qx, qw;
  gauss_legendre01(200, qx, qw);
  const auto transfer_bound = [&](double t) {
    double acc = 0.0;
    for (std::size_t i = 0; i < qx.size(); ++i) {
      const double c = std::cos(qx[i] * M_PI / 2.0);
      acc += qw[i] * vr_model(t * c * c);
    }
    return acc;  // the pi/2 Jacobian cancels the 2/pi prefactor
  };
  for (std::size_t j = 0; j < ts.size(); ++j)
    rep.lemma_a2_ratio = std::max(rep.lemma_a2_ratio,
                                  vs[j] / transfer_bound(ts[j]));
  rep.lemma_a2_ok = rep.lemma_a2_ratio <= 1.0 + rep.lemma_a2_slack;
  return rep;
}

}  // namespace riesz
