#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "rieszlab/funcalc.hpp"

namespace riesz {

/// Linear map with its weighted adjoint, exposed to the norm estimator.
/// Input is a scalar grid vector; output has `components` columns measured
/// with the pointwise Euclidean length. The adjoint is taken in the
/// mass-weighted inner product <x, y> = sum_i mass_i x_i y_i.
struct BlackBoxMap {
  std::function<Eigen::MatrixXd(const Eigen::VectorXd&)> apply;
  std::function<Eigen::VectorXd(const Eigen::MatrixXd&)> adjoint;
  Eigen::VectorXd mass;
  int components = 1;
};

struct NormEstimate {
  double p = 0.0;
  double value = 0.0;  // certified lower bound: ||T witness||_p / ||witness||_p
  int iterations = 0;  // total duality-map iterations across starts
  int restarts = 0;
  Eigen::VectorXd witness;
};

struct AnalysisConfig {
  SolverConfig solver;
  AssembleOptions assemble;
  int restarts = 8;           // random starts, on top of structured ones
  int max_power_iters = 40;
  double power_stall_tol = 1e-3;
  int stall_patience = 3;
  std::uint64_t seed = 2024;
};

// Weighted L^p norms of scalar vectors and of multi-component vectors
// (Euclidean pointwise length in the latter case).
double weighted_lp(const Eigen::VectorXd& x, const Eigen::VectorXd& mass, double p);
double weighted_lp(const Eigen::MatrixXd& x, const Eigen::VectorXd& mass, double p);

/// Duality-map power iteration for ||T||_{p->p}, p in (1, inf):
/// x <- normalize(J_{p'}(T* J_p(T x))) with J_p(v) = |v|^{p-2} v pointwise.
/// Lower-bound only; the returned value is re-verified on the witness.
NormEstimate pnorm_estimate(const BlackBoxMap& T, double p, const AnalysisConfig& cfg,
                            const std::vector<Eigen::VectorXd>& structured_starts = {});

// Ready-made maps over a calculus object (all adjoints exact in <.,.>_w).
BlackBoxMap riesz_map(const FunCalc& calc);
BlackBoxMap local_riesz_map(const FunCalc& calc);
BlackBoxMap grad_resolvent_map(const FunCalc& calc, double s, double t);
BlackBoxMap grad_inv_sqrt_map(const FunCalc& calc, double s, double t);
BlackBoxMap resolvent_map(const FunCalc& calc, double s, double t);
BlackBoxMap inv_sqrt_map(const FunCalc& calc, double s, double t);
// f -> grad[(1+tL0)^{-1} - (1+tL)^{-1}] f (factored path, identity-checked).
BlackBoxMap resolvent_diff_map(const FunCalc& calcL, const FunCalc& calcL0, double t);

// Gaussian bumps centered on the coefficient singularity (the origin),
// at widths tied to the mesh; used as structured power-iteration starts.
std::vector<Eigen::VectorXd> singular_bump_starts(const Grid& grid);

struct Mesh {
  double L = 0.0;
  double h = 0.0;
};

/// Riesz p-norm across a mesh family, with the growth fit. `fit.exponent`
/// is the slope of log(norm) against log(1/h) (h-refinement family) or
/// log(L) (domain-growth family): > 0 signals an unboundedness trend,
/// ~ 0 saturation.
struct RieszNormCurve {
  std::vector<Mesh> meshes;
  std::vector<NormEstimate> norms;
  DecayFit fit;  // exponent oriented so positive = growth
  bool refined_in_h = true;
};

RieszNormCurve riesz_norm_curve(const MatrixField& A, const WeightField& w, double p,
                                const std::vector<Mesh>& meshes,
                                const AnalysisConfig& cfg);

/// Reverse Holder ratio: solve the discrete Dirichlet problem L u = 0 on the
/// lattice ball B(center, r) with u = boundary_trace outside, and return
///   rho_p = r * (avg_{B(center,r/2)} |grad u|^p)^{1/p} / avg_{B(center,r)} |u|
/// (half-ball on the gradient side; averages weighted by w).
double rh_ratio(const DiscreteOperator& op, const Point& center, double r,
                const ScalarFn& boundary_trace, double p);

// Max of |L f_h| over interior nodes selected by `region` (f_h samples
// f_exact on all nodes). The annulus overload selects r_in <= |x| <= r_out.
double harmonic_residual(const DiscreteOperator& op, const ScalarFn& f_exact,
                         const std::function<bool(const Point&)>& region);
double harmonic_residual(const DiscreteOperator& op, const ScalarFn& f_exact,
                         double r_in, double r_out);

struct KernelFit {
  double C_upper = 0.0, c_upper = 0.0;   // k V(x,sqrt t) <= C e^{-c d^2/t}
  double C_lower = 0.0, c_lower = 0.0;   // k V(x,sqrt t) >= (1/C) e^{-c' d^2/t}
  double upper_residual = 0.0, lower_residual = 0.0;  // sup log-scale misfit
  double mass_min = 0.0, mass_max = 0.0;  // total weighted kernel mass over times
  double gly_value = 0.0;   // max_t of the weighted gradient integral
  double gly_bound = 0.0;   // max_t of C_upper / (t^{p/2} V(y,sqrt t)^{p-1})
  double gly_p = 0.0, gly_gamma = 0.0;
  bool negative_values_warning = false;
  std::vector<double> times;
};

struct KernelProbeOptions {
  double gly_p = 2.0;
  double gly_gamma = -1.0;  // < 0: default to c_upper / 4 from the same probe
};

KernelFit heat_kernel_probe(const DiscreteOperator& op, const Point& y,
                            const std::vector<double>& times, const AnalysisConfig& cfg,
                            const KernelProbeOptions& opts = {});

// Log-log least squares on (t, value) samples with t > 1, values > 0.
DecayFit decay_exponent(const std::vector<double>& t, const std::vector<double>& values);

struct PerturbationOptions {
  double eps = -1.0;  // quasi-isometry closeness parameter for the predicted rate
  double p0 = -1.0;   // exponent where the unperturbed transform is bounded
};

struct PerturbationReport {
  std::vector<double> times;
  std::vector<double> values;  // ||grad[(1+tL0)^{-1} - (1+tL)^{-1}]||_{p->p}
  DecayFit fit;
  double predicted_alpha = -1.0;  // min{eps(p-1)/2p, eps(p0-p)/(2p(p0+p))}
  double predicted_rate = -1.0;   // alpha + 1/2
};

PerturbationReport perturbation_decay(const DiscreteOperator& opL,
                                      const DiscreteOperator& opL0, double p,
                                      const std::vector<double>& t_list,
                                      const AnalysisConfig& cfg,
                                      const PerturbationOptions& popt = {});

struct AppendixRecord {
  double s = 0.0, t = 0.0;
  double norm2 = 0.0;   // measured ||(s+tL)^{-1}||_{2->2}
  double normp = 0.0;   // same at the requested p
};

struct AppendixReport {
  double p = 0.0;
  std::vector<AppendixRecord> resolvent_bound;  // (a1): norm2 <= 1/s
  double a1_slack_p2 = 0.0;       // max over the grid of norm2 - 1/s
  double a2_constant_p2 = 0.0;    // max of sqrt(s) * ||(s+tL)^{-1/2}||_2
  double a2_constant_p = 0.0;
  double integral_value = 0.0;    // int_0^1 ||grad(1+tL)^{-1} f||_p dt/sqrt(t)
  double integral_refined = 0.0;  // same with doubled quadrature
  double nu_resolvent = 0.0;      // decay exponent of ||grad(1+tL)^{-1}||_{p->p}
  double nu_sqrt = 0.0;           // decay exponent of ||grad(1+tL)^{-1/2}||_{p->p}
  bool lemma_a2_ok = false;       // sqrt family lies under the subordination
                                  // transfer of the resolvent-family model
  double lemma_a2_ratio = 0.0;    // max_t measured_sqrt / transferred bound
  double lemma_a2_slack = 0.05;   // multiplicative allowance on the bound
};

AppendixReport appendix_suite(const DiscreteOperator& op, double p,
                              const AnalysisConfig& cfg);

}  // namespace riesz
