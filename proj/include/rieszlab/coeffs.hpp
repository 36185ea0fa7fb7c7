#pragma once

#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "rieszlab/grid.hpp"

namespace riesz {

using Mat3 = Eigen::Matrix3d;  // top-left dim x dim block is meaningful

/// Position-dependent symmetric coefficient matrix A(x) with declared
/// ellipticity constants. Construction spot-checks the sandwich
/// c_ell |xi|^2 <= <A xi, xi> <= C_ell |xi|^2 on a quasi-random sample.
class MatrixField {
 public:
  using EvalFn = std::function<Mat3(const Point&)>;

  MatrixField(int dim, std::string id, EvalFn eval, double c_ell, double C_ell,
              bool spot_check = true);

  Mat3 operator()(const Point& x) const { return eval_(x); }
  int dim() const { return dim_; }
  double lower_bound() const { return c_ell_; }
  double upper_bound() const { return C_ell_; }
  const std::string& id() const { return id_; }

 private:
  int dim_;
  std::string id_;
  EvalFn eval_;
  double c_ell_, C_ell_;
};

/// Strictly positive scalar weight w(x).
class WeightField {
 public:
  using EvalFn = std::function<double(const Point&)>;

  WeightField(int dim, std::string id, EvalFn eval);

  double operator()(const Point& x) const { return eval_(x); }
  int dim() const { return dim_; }
  const std::string& id() const { return id_; }
  bool is_unit() const { return id_ == "unit"; }
  ScalarFn fn() const;

 private:
  int dim_;
  std::string id_;
  EvalFn eval_;
};

WeightField unit_weight(int dim);
// w(x) = |x|^gamma (A2 for |gamma| < dim); gamma = 1 gives w = |x|.
WeightField power_weight(int dim, double gamma);

/// Increasing radii r_1 < r_2 < ... with r_k < r_k^2 < 2 r_k^2 <
/// sqrt(r_{k+1}) - 1 and r_1 > 1; the separation chain keeps the tiled
/// annuli pairwise disjoint.
struct RadiiSchedule {
  std::vector<double> radii;

  explicit RadiiSchedule(std::vector<double> r);
};

/// Fitted power law value ~ C * x^{-exponent} from log-log least squares.
struct DecayFit {
  double amplitude = 0.0;       // C
  double exponent = 0.0;
  double residual = 0.0;        // RMS of log residuals
  double x_lo = 0.0, x_hi = 0.0;
  bool infinite_decay = false;  // all samples were exactly zero
};

// Log-log least squares of value = C * x^{-exponent}. Requires positive
// values; x need not be sorted.
DecayFit fit_power_decay(const std::vector<double>& x,
                         const std::vector<double>& values);

// --- Coefficient field library -------------------------------------------

MatrixField identity_field(int dim);
MatrixField scaled_identity(int dim, double factor);

// Planar conic matrix A = I + beta(beta+2)/|x|^2 [[x2^2,-x1x2],[-x1x2,x1^2]];
// radial eigenvalue 1, tangential (1+beta)^2. A(0) = I by convention.
MatrixField meyer_conic(double beta);

// N-dimensional conic with radial eigenvalue 1 and tangential eigenvalue
// lambda: A = (1/|x|^2) A_N + lambda I - (lambda/|x|^2) A_N, A_N = x x^T.
MatrixField conic_nd(double lambda, int dim);

// beta = -N/2 + sqrt((N/2 - 1)^2 + lambda(N-1)); satisfies
// (1+beta)(beta+N-1) = lambda(N-1).
double beta_from_lambda(double lambda, int dim);

enum class ConicVariant { kFull, kPartial };

// Critical exponent of Riesz L^p unboundedness: N/|beta| for the full
// conic, 2/|beta| for the partial conic. Requires beta in (-1, 0).
double critical_p(double beta, int dim, ConicVariant variant);

// Identity in coordinates 3..N, planar conic block in (x1, x2); singular
// set is the line {x1 = x2 = 0}.
MatrixField partial_conic(double beta, int dim);

// A_pert on the strip x_n in [0, 1], A0 elsewhere (sharp interface).
MatrixField strip_perturbation(const MatrixField& A0, const MatrixField& Apert);

// A_pert inside B(0, R0), A0 outside.
MatrixField compact_perturbation(const MatrixField& A0, const MatrixField& Apert,
                                 double R0);

// Entrywise convolution with the bump psi(z) ~ (1 - |z/scale|^2)^4 on
// |z| < scale, normalized so a constant field is reproduced exactly by
// the fixed-order tensor quadrature used for evaluation.
MatrixField mollify(const MatrixField& field, double scale);

// Smooth tiled field: A(x/r_k) on each annulus of inner radius
// sqrt(r_k) - 1 and outer radius 2 r_k^2, identity elsewhere, then mollified.
MatrixField build_tiled(const MatrixField& A, const RadiiSchedule& radii,
                        double mollifier_scale);

// x -> field(s * x).
MatrixField rescale(const MatrixField& field, double s);

struct GdDecayOptions {
  // Sampling lattice resolution: nodes per ball diameter.
  int samples_per_diameter = 512;
};

// Decay fit of D(r) = max over centers of the weighted ball average of
// |A - A0|_F, for radii r > 1. Infinite-decay flag when all D(r) = 0.
DecayFit gd_decay(const MatrixField& A, const MatrixField& A0,
                  const std::vector<Point>& centers,
                  const std::vector<double>& radii,
                  const WeightField* w0 = nullptr,
                  const GdDecayOptions& opts = {});

// The raw D(r) values behind gd_decay, one per radius.
std::vector<double> gd_profile(const MatrixField& A, const MatrixField& A0,
                               const std::vector<Point>& centers,
                               const std::vector<double>& radii,
                               const WeightField* w0 = nullptr,
                               const GdDecayOptions& opts = {});

// --- Field spec grammar ----------------------------------------------------
//
//   field  := name | name '{' arg (',' arg)* '}'
//   arg    := key '=' value
//   value  := number | list | field
//   list   := '[' number (',' number)* ']'
//
// Matrix fields: identity, scale{factor}, meyer_conic{beta},
//   conic_nd{lambda,n}, partial_conic{beta,n},
//   strip{base=...,pert=...}, compact{base=...,pert=...,r0=...},
//   mollified{base=...,scale=...}, tiled{base=...,radii=[...],moll=...},
//   rescaled{base=...,s=...}.
// Weight fields: unit, power{gamma}.
// A dimension hint supplies n where the spec does not pin it.
MatrixField parse_matrix_field(const std::string& spec, int dim_hint);
WeightField parse_weight_field(const std::string& spec, int dim_hint);

}  // namespace riesz
