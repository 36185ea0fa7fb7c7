#include "rieszlab/grid.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace riesz {

namespace {

double round_to_int_check(double x, const char* what) {
  const double r = std::round(x);
  if (std::abs(x - r) > 1e-9 * std::max(1.0, std::abs(x)) || r < 1.0) {
    throw std::invalid_argument(std::string(what) +
                                ": L/h must be a positive integer");
  }
  return r;
}

}  // namespace

Grid::Grid(int dim, double half_width, double spacing)
    : dim_(dim), half_width_(half_width), spacing_(spacing) {
  if (dim != 2 && dim != 3) throw std::invalid_argument("grid: dim must be 2 or 3");
  if (!(spacing > 0.0)) throw std::invalid_argument("grid: h must be positive");
  const double ratio = round_to_int_check(half_width / spacing, "grid");
  m_ = 2 * static_cast<int>(ratio) + 1;
  if (m_ - 2 < 1) throw std::invalid_argument("grid: no interior nodes");
}

Index Grid::num_nodes() const {
  Index n = 1;
  for (int d = 0; d < dim_; ++d) n *= m_;
  return n;
}

Index Grid::num_interior() const {
  Index n = 1;
  for (int d = 0; d < dim_; ++d) n *= (m_ - 2);
  return n;
}

Index Grid::interior_index(const std::array<int, 3>& ix) const {
  const int mi = m_ - 2;
  Index k = 0;
  for (int d = dim_ - 1; d >= 0; --d) k = k * mi + (ix[d] - 1);
  return k;
}

std::array<int, 3> Grid::interior_multi(Index k) const {
  const int mi = m_ - 2;
  std::array<int, 3> ix{0, 0, 0};
  for (int d = 0; d < dim_; ++d) {
    ix[d] = static_cast<int>(k % mi) + 1;
    k /= mi;
  }
  return ix;
}

Point Grid::interior_point(Index k) const {
  const auto ix = interior_multi(k);
  Point p{0.0, 0.0, 0.0};
  for (int d = 0; d < dim_; ++d) p[d] = coord(ix[d]);
  return p;
}

Index Grid::node_index(const std::array<int, 3>& ix) const {
  Index k = 0;
  for (int d = dim_ - 1; d >= 0; --d) k = k * m_ + ix[d];
  return k;
}

std::array<int, 3> Grid::node_multi(Index k) const {
  std::array<int, 3> ix{0, 0, 0};
  for (int d = 0; d < dim_; ++d) {
    ix[d] = static_cast<int>(k % m_);
    k /= m_;
  }
  return ix;
}

Point Grid::node_point(Index k) const {
  const auto ix = node_multi(k);
  Point p{0.0, 0.0, 0.0};
  for (int d = 0; d < dim_; ++d) p[d] = coord(ix[d]);
  return p;
}

bool Grid::is_boundary(const std::array<int, 3>& ix) const {
  for (int d = 0; d < dim_; ++d)
    if (ix[d] == 0 || ix[d] == m_ - 1) return true;
  return false;
}

Index Grid::interior_of_node(Index k) const {
  const auto ix = node_multi(k);
  if (is_boundary(ix)) return -1;
  return interior_index(ix);
}

Index Grid::node_of_interior(Index k) const {
  return node_index(interior_multi(k));
}

std::vector<Index> Grid::interior_ball(const Point& center, double r) const {
  std::vector<Index> out;
  // Axis index window covering the ball.
  std::array<int, 3> lo{1, 1, 1}, hi{1, 1, 1};
  for (int d = 0; d < dim_; ++d) {
    lo[d] = std::max(1, static_cast<int>(std::ceil((center[d] - r + half_width_) / spacing_)));
    hi[d] = std::min(m_ - 2, static_cast<int>(std::floor((center[d] + r + half_width_) / spacing_)));
    if (lo[d] > hi[d]) return out;
  }
  std::array<int, 3> ix{1, 1, 1};
  const double r2 = r * r;
  const int zlo = dim_ == 3 ? lo[2] : 1, zhi = dim_ == 3 ? hi[2] : 1;
  for (int iz = zlo; iz <= zhi; ++iz) {
    for (int iy = lo[1]; iy <= hi[1]; ++iy) {
      for (int ixx = lo[0]; ixx <= hi[0]; ++ixx) {
        ix = {ixx, iy, dim_ == 3 ? iz : 0};
        double d2 = 0.0;
        for (int d = 0; d < dim_; ++d) {
          const double t = coord(ix[d]) - center[d];
          d2 += t * t;
        }
        if (d2 < r2) out.push_back(interior_index(ix));
      }
    }
  }
  return out;
}

double Grid::cell_volume() const {
  double v = 1.0;
  for (int d = 0; d < dim_; ++d) v *= spacing_;
  return v;
}

bool Grid::operator==(const Grid& o) const {
  return dim_ == o.dim_ && half_width_ == o.half_width_ && spacing_ == o.spacing_;
}

GridFunction::GridFunction(const Grid& g, Eigen::VectorXd v)
    : grid(g), values(std::move(v)) {
  if (values.size() != grid.num_interior())
    throw std::invalid_argument("grid function: value count mismatch");
}

GridFunction GridFunction::sample(const Grid& g,
                                  const std::function<double(const Point&)>& f) {
  GridFunction out(g);
  const Index n = g.num_interior();
  for (Index k = 0; k < n; ++k) out.values[k] = f(g.interior_point(k));
  return out;
}

GridFunction VectorGridFunction::pointwise_norm() const {
  GridFunction out(grid);
  out.values = values.rowwise().norm();
  return out;
}

double ball_average(const GridFunction& f, const Point& center, double r,
                    const ScalarFn& w) {
  const auto nodes = f.grid.interior_ball(center, r);
  if (nodes.empty()) throw std::runtime_error("ball_average: empty ball");
  double num = 0.0, den = 0.0;
  for (Index k : nodes) {
    const double wk = w ? w(f.grid.interior_point(k)) : 1.0;
    num += f.values[k] * wk;
    den += wk;
  }
  if (den <= 0.0) throw std::runtime_error("ball_average: zero weight mass");
  return num / den;
}

double ball_volume(const Grid& g, const Point& center, double r,
                   const ScalarFn& w) {
  const auto nodes = g.interior_ball(center, r);
  double v = 0.0;
  for (Index k : nodes) v += (w ? w(g.interior_point(k)) : 1.0);
  return v * g.cell_volume();
}

namespace {

double lp_reduce(const Grid& g, const Eigen::VectorXd& mags, double p,
                 const ScalarFn& w) {
  if (p < 1.0) throw std::invalid_argument("lp_norm: p must be >= 1");
  if (std::isinf(p)) return mags.size() ? mags.maxCoeff() : 0.0;
  double s = 0.0;
  const Index n = mags.size();
  for (Index k = 0; k < n; ++k) {
    const double wk = w ? w(g.interior_point(k)) : 1.0;
    s += std::pow(mags[k], p) * wk;
  }
  return std::pow(s * g.cell_volume(), 1.0 / p);
}

}  // namespace

double lp_norm(const GridFunction& f, double p, const ScalarFn& w) {
  return lp_reduce(f.grid, f.values.cwiseAbs(), p, w);
}

double lp_norm(const VectorGridFunction& f, double p, const ScalarFn& w) {
  return lp_reduce(f.grid, f.values.rowwise().norm(), p, w);
}

MeasureProfile measure_profile(const Grid& g, const ScalarFn& w,
                               const std::vector<Point>& centers,
                               const std::vector<double>& radii) {
  if (radii.size() < 2) throw std::invalid_argument("measure_profile: need >= 2 radii");
  for (size_t i = 1; i < radii.size(); ++i)
    if (radii[i] <= radii[i - 1])
      throw std::invalid_argument("measure_profile: radii must increase");

  MeasureProfile out;
  out.lower_exponent = std::numeric_limits<double>::infinity();
  out.upper_exponent = -std::numeric_limits<double>::infinity();
  out.doubling_constant = 1.0;
  bool any = false;
  for (const auto& c : centers) {
    std::vector<double> vols;
    vols.reserve(radii.size());
    for (double r : radii) vols.push_back(ball_volume(g, c, r, w));
    if (vols.front() <= 0.0)
      throw std::runtime_error("measure_profile: zero measure ball (all-zero weight?)");
    for (size_t i = 0; i + 1 < radii.size(); ++i) {
      if (vols[i] <= 0.0 || vols[i + 1] <= 0.0) continue;
      const double slope = std::log(vols[i + 1] / vols[i]) /
                           std::log(radii[i + 1] / radii[i]);
      out.lower_exponent = std::min(out.lower_exponent, slope);
      out.upper_exponent = std::max(out.upper_exponent, slope);
      any = true;
    }
    // Doubling constant from (r, 2r) pairs available inside the radii list.
    for (size_t i = 0; i < radii.size(); ++i) {
      const double v2 = ball_volume(g, c, 2.0 * radii[i], w);
      if (vols[i] > 0.0 && v2 > 0.0)
        out.doubling_constant = std::max(out.doubling_constant, v2 / vols[i]);
    }
  }
  if (!any) throw std::runtime_error("measure_profile: no usable volume pairs");
  return out;
}

void save_binary(const GridFunction& f, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path);
  os.write("RLGF", 4);
  const std::int32_t dim = f.grid.dim();
  const double L = f.grid.half_width(), h = f.grid.spacing();
  const std::int64_t n = f.values.size();
  os.write(reinterpret_cast<const char*>(&dim), sizeof dim);
  os.write(reinterpret_cast<const char*>(&L), sizeof L);
  os.write(reinterpret_cast<const char*>(&h), sizeof h);
  os.write(reinterpret_cast<const char*>(&n), sizeof n);
  os.write(reinterpret_cast<const char*>(f.values.data()),
           static_cast<std::streamsize>(n * sizeof(double)));
  if (!os) throw std::runtime_error("write failed: " + path);
}

GridFunction load_binary(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "RLGF", 4) != 0)
    throw std::runtime_error("bad magic in " + path);
  std::int32_t dim;
  double L, h;
  std::int64_t n;
  is.read(reinterpret_cast<char*>(&dim), sizeof dim);
  is.read(reinterpret_cast<char*>(&L), sizeof L);
  is.read(reinterpret_cast<char*>(&h), sizeof h);
  is.read(reinterpret_cast<char*>(&n), sizeof n);
  Grid g(dim, L, h);
  if (n != g.num_interior()) throw std::runtime_error("value count mismatch in " + path);
  Eigen::VectorXd v(n);
  is.read(reinterpret_cast<char*>(v.data()),
          static_cast<std::streamsize>(n * sizeof(double)));
  if (!is) throw std::runtime_error("read failed: " + path);
  return GridFunction(g, std::move(v));
}

void save_csv(const GridFunction& f, const std::string& path) {
  std::FILE* fp = std::fopen(path.c_str(), "w");
  if (!fp) throw std::runtime_error("cannot open " + path);
  std::fprintf(fp, "%d,%.17g,%.17g\n", f.grid.dim(), f.grid.half_width(),
               f.grid.spacing());
  for (Index k = 0; k < f.values.size(); ++k)
    std::fprintf(fp, "%.17g\n", f.values[k]);
  std::fclose(fp);
}

GridFunction load_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open " + path);
  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error("empty csv " + path);
  int dim;
  double L, h;
  if (std::sscanf(line.c_str(), "%d,%lf,%lf", &dim, &L, &h) != 3)
    throw std::runtime_error("bad csv header in " + path);
  Grid g(dim, L, h);
  Eigen::VectorXd v(g.num_interior());
  for (Index k = 0; k < v.size(); ++k) {
    if (!std::getline(is, line)) throw std::runtime_error("truncated csv " + path);
    v[k] = std::strtod(line.c_str(), nullptr);
  }
  return GridFunction(g, std::move(v));
}

}  // namespace riesz
