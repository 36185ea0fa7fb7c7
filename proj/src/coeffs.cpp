#include "rieszlab/coeffs.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <sstream>
#include <stdexcept>

namespace riesz {

namespace {

// Halton points in [-R, R]^dim, used for construction-time spot checks.
double halton(int index, int base) {
  double f = 1.0, r = 0.0;
  while (index > 0) {
    f /= base;
    r += f * (index % base);
    index /= base;
  }
  return r;
}

std::vector<Point> spot_sample(int dim, int count, double R) {
  static const int bases[3] = {2, 3, 5};
  std::vector<Point> pts;
  pts.reserve(count);
  for (int i = 1; i <= count; ++i) {
    Point p{0.0, 0.0, 0.0};
    for (int d = 0; d < dim; ++d) p[d] = R * (2.0 * halton(i, bases[d]) - 1.0);
    pts.push_back(p);
  }
  return pts;
}

constexpr int kSpotCheckCount = 1000;
constexpr double kSpotCheckRadius = 5.0;

}  // namespace

MatrixField::MatrixField(int dim, std::string id, EvalFn eval, double c_ell,
                         double C_ell, bool spot_check)
    : dim_(dim), id_(std::move(id)), eval_(std::move(eval)),
      c_ell_(c_ell), C_ell_(C_ell) {
  if (dim != 2 && dim != 3)
    throw std::invalid_argument("matrix field: dim must be 2 or 3");
  if (!(c_ell > 0.0) || !(C_ell >= c_ell))
    throw std::invalid_argument("matrix field '" + id_ +
                                "': need 0 < c_ell <= C_ell");
  if (!spot_check) return;
  const double slack = 1e-9 * std::max(1.0, C_ell_);
  for (const auto& x : spot_sample(dim_, kSpotCheckCount, kSpotCheckRadius)) {
    const Mat3 a = eval_(x);
    Eigen::MatrixXd A = a.topLeftCorner(dim_, dim_);
    if ((A - A.transpose()).cwiseAbs().maxCoeff() > 1e-12)
      throw std::runtime_error("matrix field '" + id_ + "': not symmetric");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(A, Eigen::EigenvaluesOnly);
    const double lo = es.eigenvalues().minCoeff();
    const double hi = es.eigenvalues().maxCoeff();
    if (lo < c_ell_ - slack || hi > C_ell_ + slack) {
      std::ostringstream os;
      os << "matrix field '" << id_ << "': ellipticity spot-check failed at ("
         << x[0] << "," << x[1] << "," << x[2] << "): eigenvalues [" << lo
         << "," << hi << "] outside [" << c_ell_ << "," << C_ell_ << "]";
      throw std::runtime_error(os.str());
    }
  }
}

WeightField::WeightField(int dim, std::string id, EvalFn eval)
    : dim_(dim), id_(std::move(id)), eval_(std::move(eval)) {
  for (const auto& x : spot_sample(dim_, kSpotCheckCount, kSpotCheckRadius)) {
    if (!(eval_(x) >= 0.0) || !std::isfinite(eval_(x)))
      throw std::runtime_error("weight field '" + id_ + "': negative or non-finite");
  }
}

ScalarFn WeightField::fn() const {
  auto e = eval_;
  return [e](const Point& x) { return e(x); };
}

WeightField unit_weight(int dim) {
  return WeightField(dim, "unit", [](const Point&) { return 1.0; });
}

WeightField power_weight(int dim, double gamma) {
  std::ostringstream id;
  id << "power{gamma=" << gamma << "}";
  return WeightField(dim, id.str(), [gamma, dim](const Point& x) {
    double r2 = 0.0;
    for (int d = 0; d < dim; ++d) r2 += x[d] * x[d];
    return std::pow(r2, 0.5 * gamma);
  });
}

RadiiSchedule::RadiiSchedule(std::vector<double> r) : radii(std::move(r)) {
  if (radii.empty()) throw std::invalid_argument("radii schedule: empty");
  if (!(radii.front() > 1.0))
    throw std::invalid_argument("radii schedule: r_1 > 1 required");
  for (size_t k = 0; k + 1 < radii.size(); ++k) {
    const double rk = radii[k], rn = radii[k + 1];
    if (!(rk < rn)) {
      std::ostringstream os;
      os << "radii schedule: r_" << k + 1 << " < r_" << k + 2 << " violated ("
         << rk << " >= " << rn << ")";
      throw std::invalid_argument(os.str());
    }
    const double lim = std::sqrt(rn) - 1.0;
    if (!(2.0 * rk * rk < lim)) {
      std::ostringstream os;
      os << "radii schedule: 2*r_" << k + 1 << "^2 < sqrt(r_" << k + 2
         << ")-1 violated (" << 2.0 * rk * rk << " >= " << lim << ")";
      throw std::invalid_argument(os.str());
    }
  }
}

DecayFit fit_power_decay(const std::vector<double>& x,
                         const std::vector<double>& values) {
  if (x.size() != values.size() || x.size() < 2)
    throw std::invalid_argument("fit_power_decay: need >= 2 samples");
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double n = static_cast<double>(x.size());
  for (size_t i = 0; i < x.size(); ++i) {
    if (!(values[i] > 0.0))
      throw std::invalid_argument("fit_power_decay: nonpositive value");
    const double lx = std::log(x[i]), ly = std::log(values[i]);
    sx += lx; sy += ly; sxx += lx * lx; sxy += lx * ly;
  }
  const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  const double icept = (sy - slope * sx) / n;
  DecayFit fit;
  fit.exponent = -slope;
  fit.amplitude = std::exp(icept);
  fit.x_lo = *std::min_element(x.begin(), x.end());
  fit.x_hi = *std::max_element(x.begin(), x.end());
  double ss = 0.0;
  for (size_t i = 0; i < x.size(); ++i) {
    const double res = std::log(values[i]) - (icept + slope * std::log(x[i]));
    ss += res * res;
  }
  fit.residual = std::sqrt(ss / n);
  return fit;
}

// --- field library ----------------------------------------------------------

MatrixField identity_field(int dim) {
  return MatrixField(dim, "identity",
                     [](const Point&) { return Mat3::Identity(); }, 1.0, 1.0);
}

MatrixField scaled_identity(int dim, double factor) {
  if (!(factor > 0.0)) throw std::invalid_argument("scale: factor must be > 0");
  std::ostringstream id;
  id << "scale{factor=" << factor << "}";
  return MatrixField(dim, id.str(),
                     [factor](const Point&) -> Mat3 { return factor * Mat3::Identity(); },
                     factor, factor);
}

namespace {

// P_r + tangential * (I - P_r) restricted to the (x1, x2) plane block;
// identity in remaining coordinates. rho2 = x1^2 + x2^2.
Mat3 planar_conic_matrix(double tangential, double x1, double x2) {
  Mat3 a = Mat3::Identity();
  const double rho2 = x1 * x1 + x2 * x2;
  if (rho2 == 0.0) return a;  // removable point/line: A = I convention
  const double c = (tangential - 1.0) / rho2;
  // I + c * [[x2^2, -x1 x2], [-x1 x2, x1^2]] in the plane block.
  a(0, 0) = 1.0 + c * x2 * x2;
  a(0, 1) = a(1, 0) = -c * x1 * x2;
  a(1, 1) = 1.0 + c * x1 * x1;
  return a;
}

}  // namespace

MatrixField meyer_conic(double beta) {
  if (!(beta > -1.0)) throw std::invalid_argument("meyer_conic: degenerate (beta <= -1)");
  const double tang = (1.0 + beta) * (1.0 + beta);
  std::ostringstream id;
  id << "meyer_conic{beta=" << beta << "}";
  return MatrixField(2, id.str(),
                     [tang](const Point& x) { return planar_conic_matrix(tang, x[0], x[1]); },
                     std::min(1.0, tang), std::max(1.0, tang));
}

MatrixField conic_nd(double lambda, int dim) {
  if (!(lambda > 0.0)) throw std::invalid_argument("conic_nd: lambda must be > 0");
  std::ostringstream id;
  id << "conic_nd{lambda=" << lambda << ",n=" << dim << "}";
  return MatrixField(
      dim, id.str(),
      [lambda, dim](const Point& x) -> Mat3 {
        double r2 = 0.0;
        for (int d = 0; d < dim; ++d) r2 += x[d] * x[d];
        if (r2 == 0.0) return Mat3::Identity();
        Mat3 a = lambda * Mat3::Identity();
        for (int i = 0; i < dim; ++i)
          for (int j = 0; j < dim; ++j)
            a(i, j) += (1.0 - lambda) * x[i] * x[j] / r2;
        for (int d = dim; d < 3; ++d) a(d, d) = 1.0;
        return a;
      },
      std::min(1.0, lambda), std::max(1.0, lambda));
}

double beta_from_lambda(double lambda, int dim) {
  if (!(lambda > 0.0)) throw std::invalid_argument("beta_from_lambda: lambda must be > 0");
  const double half = 0.5 * dim;
  return -half + std::sqrt((half - 1.0) * (half - 1.0) + lambda * (dim - 1));
}

double critical_p(double beta, int dim, ConicVariant variant) {
  if (!(beta > -1.0 && beta < 0.0))
    throw std::invalid_argument("critical_p: beta must be in (-1, 0)");
  const double b = std::abs(beta);
  return variant == ConicVariant::kFull ? dim / b : 2.0 / b;
}

MatrixField partial_conic(double beta, int dim) {
  if (dim < 3) throw std::invalid_argument("partial_conic: use meyer_conic for n = 2");
  if (!(beta > -1.0 && beta < 0.0))
    throw std::invalid_argument("partial_conic: beta must be in (-1, 0)");
  const double tang = (1.0 + beta) * (1.0 + beta);
  std::ostringstream id;
  id << "partial_conic{beta=" << beta << ",n=" << dim << "}";
  return MatrixField(dim, id.str(),
                     [tang](const Point& x) { return planar_conic_matrix(tang, x[0], x[1]); },
                     std::min(1.0, tang), std::max(1.0, tang));
}

MatrixField strip_perturbation(const MatrixField& A0, const MatrixField& Apert) {
  if (A0.dim() != Apert.dim())
    throw std::invalid_argument("strip_perturbation: dimension mismatch");
  const int dim = A0.dim();
  const int last = dim - 1;
  std::ostringstream id;
  id << "strip{base=" << A0.id() << ",pert=" << Apert.id() << "}";
  return MatrixField(dim, id.str(),
                     [A0, Apert, last](const Point& x) {
                       return (x[last] >= 0.0 && x[last] <= 1.0) ? Apert(x) : A0(x);
                     },
                     std::min(A0.lower_bound(), Apert.lower_bound()),
                     std::max(A0.upper_bound(), Apert.upper_bound()));
}

MatrixField compact_perturbation(const MatrixField& A0, const MatrixField& Apert,
                                 double R0) {
  if (A0.dim() != Apert.dim())
    throw std::invalid_argument("compact_perturbation: dimension mismatch");
  if (!(R0 > 0.0)) throw std::invalid_argument("compact_perturbation: R0 must be > 0");
  const int dim = A0.dim();
  std::ostringstream id;
  id << "compact{base=" << A0.id() << ",pert=" << Apert.id() << ",r0=" << R0 << "}";
  return MatrixField(dim, id.str(),
                     [A0, Apert, R0, dim](const Point& x) {
                       double r2 = 0.0;
                       for (int d = 0; d < dim; ++d) r2 += x[d] * x[d];
                       return r2 < R0 * R0 ? Apert(x) : A0(x);
                     },
                     std::min(A0.lower_bound(), Apert.lower_bound()),
                     std::max(A0.upper_bound(), Apert.upper_bound()));
}

namespace {

// Fixed-order Gauss-Legendre rule on [-1, 1].
void gauss_legendre(int n, std::vector<double>& nodes, std::vector<double>& weights) {
  nodes.resize(n);
  weights.resize(n);
  for (int i = 0; i < n; ++i) {
    // Newton on Legendre polynomial from the Chebyshev initial guess.
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

struct MollifierStencil {
  std::vector<Point> offsets;   // scaled quadrature points
  std::vector<double> weights;  // sum to 1 exactly
};

// psi(z) ~ (1 - |z/scale|^2)^4 on |z| < scale, normalized against the same
// tensor quadrature, so constant fields are reproduced to machine precision.
MollifierStencil make_mollifier_stencil(int dim, double scale, int order = 8) {
  std::vector<double> gx, gw;
  gauss_legendre(order, gx, gw);
  MollifierStencil st;
  double total = 0.0;
  const int nz = dim == 3 ? order : 1;
  for (int i = 0; i < order; ++i) {
    for (int j = 0; j < order; ++j) {
      for (int k = 0; k < nz; ++k) {
        Point u{gx[i], gx[j], dim == 3 ? gx[k] : 0.0};
        double w = gw[i] * gw[j] * (dim == 3 ? gw[k] : 1.0);
        double r2 = u[0] * u[0] + u[1] * u[1] + u[2] * u[2];
        if (r2 >= 1.0) continue;
        const double t = 1.0 - r2;
        const double psi = t * t * t * t;
        st.offsets.push_back({scale * u[0], scale * u[1], scale * u[2]});
        st.weights.push_back(w * psi);
        total += w * psi;
      }
    }
  }
  for (double& w : st.weights) w /= total;
  return st;
}

}  // namespace

MatrixField mollify(const MatrixField& field, double scale) {
  if (!(scale > 0.0)) throw std::invalid_argument("mollify: scale must be > 0");
  auto stencil = std::make_shared<MollifierStencil>(
      make_mollifier_stencil(field.dim(), scale));
  std::ostringstream id;
  id << "mollified{base=" << field.id() << ",scale=" << scale << "}";
  return MatrixField(field.dim(), id.str(),
                     [field, stencil](const Point& x) {
                       Mat3 acc = Mat3::Zero();
                       for (size_t q = 0; q < stencil->weights.size(); ++q) {
                         const Point& z = stencil->offsets[q];
                         acc += stencil->weights[q] *
                                field({x[0] - z[0], x[1] - z[1], x[2] - z[2]});
                       }
                       return acc;
                     },
                     field.lower_bound(), field.upper_bound());
}

MatrixField build_tiled(const MatrixField& A, const RadiiSchedule& radii,
                        double mollifier_scale) {
  const auto rs = radii.radii;
  const int dim = A.dim();
  std::ostringstream id;
  id << "tiled{base=" << A.id() << ",radii=[";
  for (size_t k = 0; k < rs.size(); ++k) id << (k ? "," : "") << rs[k];
  id << "],moll=" << mollifier_scale << "}";
  MatrixField raw(
      dim, "tiled-raw",
      [A, rs, dim](const Point& x) -> Mat3 {
        double r = 0.0;
        for (int d = 0; d < dim; ++d) r += x[d] * x[d];
        r = std::sqrt(r);
        for (double rk : rs) {
          const double inner = std::sqrt(rk) - 1.0;
          const double outer = 2.0 * rk * rk;
          if (r >= inner && r <= outer)
            return A({x[0] / rk, x[1] / rk, x[2] / rk});
          if (r < inner) break;  // annuli are increasing and disjoint
        }
        return Mat3::Identity();
      },
      std::min(1.0, A.lower_bound()), std::max(1.0, A.upper_bound()),
      /*spot_check=*/false);
  MatrixField smooth = mollify(raw, mollifier_scale);
  return MatrixField(dim, id.str(),
                     [smooth](const Point& x) { return smooth(x); },
                     smooth.lower_bound(), smooth.upper_bound(),
                     /*spot_check=*/false);
}

MatrixField rescale(const MatrixField& field, double s) {
  if (!(s > 0.0)) throw std::invalid_argument("rescale: s must be > 0");
  std::ostringstream id;
  id << "rescaled{base=" << field.id() << ",s=" << s << "}";
  return MatrixField(field.dim(), id.str(),
                     [field, s](const Point& x) {
                       return field({s * x[0], s * x[1], s * x[2]});
                     },
                     field.lower_bound(), field.upper_bound(),
                     /*spot_check=*/false);
}

std::vector<double> gd_profile(const MatrixField& A, const MatrixField& A0,
                               const std::vector<Point>& centers,
                               const std::vector<double>& radii,
                               const WeightField* w0, const GdDecayOptions& opts) {
  if (A.dim() != A0.dim()) throw std::invalid_argument("gd_decay: dimension mismatch");
  if (radii.size() < 3) throw std::invalid_argument("gd_decay: need >= 3 radii");
  for (double r : radii)
    if (!(r > 1.0))
      throw std::invalid_argument("gd_decay: condition is scale-restricted to r > 1");
  const int dim = A.dim();
  const int nd = dim == 3 ? std::min(opts.samples_per_diameter, 96)
                          : opts.samples_per_diameter;
  std::vector<double> profile;
  profile.reserve(radii.size());
  for (double r : radii) {
    double worst = 0.0;
    for (const auto& c : centers) {
      const double step = 2.0 * r / nd;
      double num = 0.0, den = 0.0;
      const int nz = dim == 3 ? nd : 1;
      for (int i = 0; i < nd; ++i) {
        for (int j = 0; j < nd; ++j) {
          for (int k = 0; k < nz; ++k) {
            Point x{c[0] - r + (i + 0.5) * step, c[1] - r + (j + 0.5) * step,
                    dim == 3 ? c[2] - r + (k + 0.5) * step : 0.0};
            double d2 = 0.0;
            for (int d = 0; d < dim; ++d) {
              const double t = x[d] - c[d];
              d2 += t * t;
            }
            if (d2 >= r * r) continue;
            const double w = w0 ? (*w0)(x) : 1.0;
            const Mat3 diff = A(x) - A0(x);
            num += diff.norm() * w;
            den += w;
          }
        }
      }
      if (den > 0.0) worst = std::max(worst, num / den);
    }
    profile.push_back(worst);
  }
  return profile;
}

DecayFit gd_decay(const MatrixField& A, const MatrixField& A0,
                  const std::vector<Point>& centers,
                  const std::vector<double>& radii, const WeightField* w0,
                  const GdDecayOptions& opts) {
  const auto profile = gd_profile(A, A0, centers, radii, w0, opts);
  bool all_zero = true;
  for (double v : profile)
    if (v != 0.0) all_zero = false;
  if (all_zero) {
    DecayFit fit;
    fit.infinite_decay = true;
    fit.x_lo = radii.front();
    fit.x_hi = radii.back();
    return fit;
  }
  return fit_power_decay(radii, profile);
}

}  // namespace riesz
