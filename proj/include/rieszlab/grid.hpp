#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace riesz {

using Index = std::int64_t;

// A point in R^n, n <= 3; unused trailing coordinates are zero.
using Point = std::array<double, 3>;

// Scalar callback used for weights w(x) > 0.
using ScalarFn = std::function<double(const Point&)>;

inline double dist(const Point& a, const Point& b) {
  const double dx = a[0] - b[0], dy = a[1] - b[1], dz = a[2] - b[2];
  return std::sqrt(dx * dx + dy * dy + dz * dz);
}

/// Uniform Cartesian grid on the box [-L, L]^n with homogeneous Dirichlet
/// boundary: boundary nodes carry no unknown. Node coordinates are
/// -L + i*h, reproducible bit-exactly from (n, L, h, i).
class Grid {
 public:
  Grid(int dim, double half_width, double spacing);

  int dim() const { return dim_; }
  double half_width() const { return half_width_; }
  double spacing() const { return spacing_; }

  int nodes_per_axis() const { return m_; }
  int interior_per_axis() const { return m_ - 2; }
  Index num_nodes() const;
  Index num_interior() const;

  double coord(int i) const { return -half_width_ + i * spacing_; }

  // Interior nodes are indexed lexicographically over axis indices in
  // [1, m-2]; full nodes over [0, m-1].
  Index interior_index(const std::array<int, 3>& ix) const;
  std::array<int, 3> interior_multi(Index k) const;
  Point interior_point(Index k) const;

  Index node_index(const std::array<int, 3>& ix) const;
  std::array<int, 3> node_multi(Index k) const;
  Point node_point(Index k) const;
  bool is_boundary(const std::array<int, 3>& ix) const;
  // Maps a full-node index to its interior index, or -1 on the boundary.
  Index interior_of_node(Index k) const;
  Index node_of_interior(Index k) const;

  // Interior node indices with |x - center| < r (strict; cells not clipped).
  std::vector<Index> interior_ball(const Point& center, double r) const;

  double cell_volume() const;  // h^n

  bool operator==(const Grid& o) const;

 private:
  int dim_;
  double half_width_;
  double spacing_;
  int m_;
};

/// One real value per interior node.
struct GridFunction {
  Grid grid;
  Eigen::VectorXd values;

  explicit GridFunction(const Grid& g)
      : grid(g), values(Eigen::VectorXd::Zero(g.num_interior())) {}
  GridFunction(const Grid& g, Eigen::VectorXd v);

  static GridFunction sample(const Grid& g,
                             const std::function<double(const Point&)>& f);
};

/// One real n-vector per interior node, stored row-per-node.
struct VectorGridFunction {
  Grid grid;
  Eigen::MatrixXd values;  // num_interior x dim

  explicit VectorGridFunction(const Grid& g)
      : grid(g), values(Eigen::MatrixXd::Zero(g.num_interior(), g.dim())) {}

  // Pointwise Euclidean length, as a scalar grid function.
  GridFunction pointwise_norm() const;
};

/// Doubling/volume-growth summary of a weighted measure, fitted from ball
/// volumes V(y, r).
struct MeasureProfile {
  double doubling_constant = 1.0;  // C_D
  double lower_exponent = 0.0;     // upsilon
  double upper_exponent = 0.0;     // Upsilon
};

// Weighted average of f over the Euclidean ball B(center, r); unit weight
// when w is null. Throws on empty intersection with the interior.
double ball_average(const GridFunction& f, const Point& center, double r,
                    const ScalarFn& w = nullptr);

// (sum |f|^p w h^n)^(1/p); p = infinity gives max|f|. Throws for p < 1.
double lp_norm(const GridFunction& f, double p, const ScalarFn& w = nullptr);
double lp_norm(const VectorGridFunction& f, double p,
               const ScalarFn& w = nullptr);

// Weighted ball volume sum_{nodes in B} w h^n.
double ball_volume(const Grid& g, const Point& center, double r,
                   const ScalarFn& w = nullptr);

// Volume-growth exponents from log V(y,r) vs log r, pooled over centers.
MeasureProfile measure_profile(const Grid& g, const ScalarFn& w,
                               const std::vector<Point>& centers,
                               const std::vector<double>& radii);

// Serialization. The binary layout is:
//   magic "RLGF" (4 bytes), int32 dim, float64 L, float64 h,
//   int64 value count, then raw little-endian float64 values in interior
//   lexicographic order. Round-trips bit-exactly.
// CSV holds one header line "dim,L,h" + values one per line at full
// precision (%.17g), which also round-trips doubles exactly.
void save_binary(const GridFunction& f, const std::string& path);
GridFunction load_binary(const std::string& path);
void save_csv(const GridFunction& f, const std::string& path);
GridFunction load_csv(const std::string& path);

}  // namespace riesz
