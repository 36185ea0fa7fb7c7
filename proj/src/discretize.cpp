#include "rieszlab/discretize.hpp"

#include <cmath>
#include <random>
#include <stdexcept>
#include <vector>

#include <Eigen/SparseCholesky>

namespace riesz {

namespace {

struct AssembledForm {
  SparseMat S;   // interior x interior
  SparseMat Sb;  // interior x all-nodes (boundary columns only)
};

// Corner-quadrature assembly of the form sum_cells (h^n/2^n) <P G u, G v>
// with P sampled at cell centers and G the corner gradient.
AssembledForm assemble_form(const Grid& grid,
                            const std::function<Mat3(const Point&)>& sample) {
  const int dim = grid.dim();
  const int m = grid.nodes_per_axis();
  const int corners = 1 << dim;
  const double h = grid.spacing();
  const double omega = grid.cell_volume() / corners / (h * h);

  const Index ni = grid.num_interior();
  const Index nn = grid.num_nodes();
  std::vector<Eigen::Triplet<double>> trip_ii, trip_ib;
  const Index ncells = [&] {
    Index c = 1;
    for (int d = 0; d < dim; ++d) c *= (m - 1);
    return c;
  }();
  trip_ii.reserve(static_cast<size_t>(ncells) * corners * corners);

  std::array<int, 3> cell{0, 0, 0};
  Eigen::MatrixXd elem(corners, corners);
  std::vector<Index> corner_node(corners);
  std::vector<Index> corner_interior(corners);

  const int zmax = dim == 3 ? m - 1 : 1;
  for (int cz = 0; cz < zmax; ++cz) {
    for (int cy = 0; cy < m - 1; ++cy) {
      for (int cx = 0; cx < m - 1; ++cx) {
        cell = {cx, cy, cz};
        Point center{0.0, 0.0, 0.0};
        for (int d = 0; d < dim; ++d) center[d] = grid.coord(cell[d]) + 0.5 * h;
        const Mat3 P = sample(center);

        elem.setZero();
        for (int b = 0; b < corners; ++b) {
          // Corner-gradient component d couples the two cell corners that
          // differ in bit d; accumulate P_de over all corners.
          for (int d = 0; d < dim; ++d) {
            const int pd = b | (1 << d), md = b & ~(1 << d);
            for (int e = 0; e < dim; ++e) {
              const int pe = b | (1 << e), me = b & ~(1 << e);
              const double c = omega * P(d, e);
              elem(pd, pe) += c;
              elem(pd, me) -= c;
              elem(md, pe) -= c;
              elem(md, me) += c;
            }
          }
        }

        for (int b = 0; b < corners; ++b) {
          std::array<int, 3> ix = cell;
          for (int d = 0; d < dim; ++d)
            if (b & (1 << d)) ++ix[d];
          corner_node[b] = grid.node_index(ix);
          corner_interior[b] = grid.is_boundary(ix) ? -1 : grid.interior_index(ix);
        }
        for (int a = 0; a < corners; ++a) {
          if (corner_interior[a] < 0) continue;  // Dirichlet rows eliminated
          for (int b = 0; b < corners; ++b) {
            const double v = elem(a, b);
            if (v == 0.0) continue;
            if (corner_interior[b] >= 0)
              trip_ii.emplace_back(corner_interior[a], corner_interior[b], v);
            else
              trip_ib.emplace_back(corner_interior[a], corner_node[b], v);
          }
        }
      }
    }
  }

  AssembledForm out;
  out.S.resize(ni, ni);
  out.S.setFromTriplets(trip_ii.begin(), trip_ii.end());
  out.Sb.resize(ni, nn);
  out.Sb.setFromTriplets(trip_ib.begin(), trip_ib.end());
  return out;
}

}  // namespace

SparseMat assemble_stiffness(const Grid& grid, const MatrixField::EvalFn& P,
                             int dim) {
  if (dim != grid.dim()) throw std::invalid_argument("assemble_stiffness: dim mismatch");
  return assemble_form(grid, P).S;
}

DiscreteOperator::DiscreteOperator(Grid g, MatrixField A, WeightField w,
                                   AssembleOptions opts)
    : grid_(g), A_(std::move(A)), w_(std::move(w)), opts_(opts) {}

DiscreteOperator DiscreteOperator::assemble(const Grid& grid, const MatrixField& A,
                                            const WeightField& w,
                                            const AssembleOptions& opts) {
  if (grid.dim() != A.dim())
    throw std::invalid_argument("assemble: grid/field dimension mismatch");
  if (opts.spot_check) {
    // MatrixField construction spot-checks; re-checking a copy here keeps the
    // precondition even for fields built with checks disabled.
    MatrixField recheck(A.dim(), A.id(), [&A](const Point& x) { return A(x); },
                        A.lower_bound(), A.upper_bound(), true);
  }

  DiscreteOperator op(grid, A, w, opts);
  auto form = assemble_form(grid, [&A, &w](const Point& x) -> Mat3 {
    return w(x) * A(x);
  });
  op.S_ = std::move(form.S);
  op.Sb_ = std::move(form.Sb);

  // Node masses from offset-averaged weight samples.
  const Index ni = grid.num_interior();
  op.wnode_.resize(ni);
  const int dim = grid.dim();
  const int corners = 1 << dim;
  const double q = grid.spacing() / 4.0;
  for (Index k = 0; k < ni; ++k) {
    const Point x = grid.interior_point(k);
    double acc = 0.0;
    for (int b = 0; b < corners; ++b) {
      Point y = x;
      for (int d = 0; d < dim; ++d) y[d] += (b & (1 << d)) ? q : -q;
      acc += w(y);
    }
    op.wnode_[k] = acc / corners;
    if (!(op.wnode_[k] > 0.0))
      throw std::runtime_error("assemble: nonpositive node weight");
  }
  op.mass_ = op.wnode_ * grid.cell_volume();

  // M-matrix detection: nonpositive off-diagonals and nonnegative total row
  // sums (boundary columns included).
  double scale = 0.0;
  for (int k = 0; k < op.S_.outerSize(); ++k)
    for (SparseMat::InnerIterator it(op.S_, k); it; ++it)
      scale = std::max(scale, std::abs(it.value()));
  const double tol = 1e-12 * scale;
  bool mm = true;
  for (int k = 0; k < op.S_.outerSize() && mm; ++k)
    for (SparseMat::InnerIterator it(op.S_, k); it; ++it)
      if (it.row() != it.col() && it.value() > tol) {
        mm = false;
        break;
      }
  if (mm) {
    Eigen::VectorXd rs = op.S_ * Eigen::VectorXd::Ones(ni) +
                         op.Sb_ * Eigen::VectorXd::Ones(grid.num_nodes());
    if ((rs.array() < -tol * 10).any()) mm = false;
  }
  op.m_matrix_ = mm;

  // Nodal gradient matrices: centered inside, one-sided next to the boundary.
  const int m = grid.nodes_per_axis();
  const double h = grid.spacing();
  for (int d = 0; d < dim; ++d) {
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(2 * ni);
    for (Index k = 0; k < ni; ++k) {
      auto ix = grid.interior_multi(k);
      const bool lo_bdry = (ix[d] == 1), hi_bdry = (ix[d] == m - 2);
      if (lo_bdry && hi_bdry) continue;  // single interior layer: zero
      auto up = ix, dn = ix;
      ++up[d];
      --dn[d];
      if (lo_bdry) {
        trip.emplace_back(k, grid.interior_index(up), 1.0 / h);
        trip.emplace_back(k, k, -1.0 / h);
      } else if (hi_bdry) {
        trip.emplace_back(k, k, 1.0 / h);
        trip.emplace_back(k, grid.interior_index(dn), -1.0 / h);
      } else {
        trip.emplace_back(k, grid.interior_index(up), 0.5 / h);
        trip.emplace_back(k, grid.interior_index(dn), -0.5 / h);
      }
    }
    op.G_[d].resize(ni, ni);
    op.G_[d].setFromTriplets(trip.begin(), trip.end());
  }
  return op;
}

GridFunction DiscreteOperator::apply(const GridFunction& f) const {
  if (!(f.grid == grid_)) throw std::invalid_argument("apply: grid mismatch");
  GridFunction out(grid_);
  out.values = (S_ * f.values).cwiseQuotient(mass_);
  return out;
}

GridFunction DiscreteOperator::apply_with_boundary(
    const Eigen::VectorXd& all_node_values) const {
  if (all_node_values.size() != grid_.num_nodes())
    throw std::invalid_argument("apply_with_boundary: need values on all nodes");
  Eigen::VectorXd fi(grid_.num_interior());
  for (Index k = 0; k < fi.size(); ++k) fi[k] = all_node_values[grid_.node_of_interior(k)];
  GridFunction out(grid_);
  out.values = (S_ * fi + Sb_ * all_node_values).cwiseQuotient(mass_);
  return out;
}

double DiscreteOperator::energy(const GridFunction& f) const {
  return f.values.dot(S_ * f.values);
}

double DiscreteOperator::inner_w(const GridFunction& f, const GridFunction& g) const {
  return f.values.dot(mass_.cwiseProduct(g.values));
}

std::pair<double, double> DiscreteOperator::spectral_bounds() const {
  if (bounds_) return *bounds_;
  if (dense_) {
    bounds_ = {dense_->values.minCoeff(), dense_->values.maxCoeff()};
    return *bounds_;
  }
  const Index n = grid_.num_interior();
  const Eigen::VectorXd d_sqrt = mass_.cwiseSqrt();
  const Eigen::VectorXd d_isqrt = d_sqrt.cwiseInverse();
  auto apply_b = [&](const Eigen::VectorXd& v) -> Eigen::VectorXd {
    return d_isqrt.cwiseProduct(S_ * d_isqrt.cwiseProduct(v));
  };

  std::mt19937_64 rng(1234);
  std::normal_distribution<double> gauss;
  Eigen::VectorXd v(n);
  for (Index k = 0; k < n; ++k) v[k] = gauss(rng);
  v.normalize();
  double lam_max = 0.0;
  for (int it = 0; it < 80; ++it) {
    Eigen::VectorXd bv = apply_b(v);
    lam_max = v.dot(bv);
    v = bv.normalized();
  }

  Eigen::SimplicialLDLT<SparseMat> chol(S_);
  if (chol.info() != Eigen::Success)
    throw std::runtime_error("spectral_bounds: factorization failed");
  for (Index k = 0; k < n; ++k) v[k] = gauss(rng);
  v.normalize();
  double lam_min = 0.0;
  for (int it = 0; it < 40; ++it) {
    Eigen::VectorXd x = d_sqrt.cwiseProduct(chol.solve(d_sqrt.cwiseProduct(v)));
    v = x.normalized();
    lam_min = v.dot(apply_b(v));
  }
  bounds_ = {0.95 * lam_min, 1.05 * lam_max};
  return *bounds_;
}

const DenseSpectral& DiscreteOperator::dense_spectral() const {
  if (dense_) return *dense_;
  const Index n = grid_.num_interior();
  if (n > opts_.dense_cap)
    throw std::runtime_error(
        "dense_spectral: " + std::to_string(n) + " unknowns exceed cap " +
        std::to_string(opts_.dense_cap) + "; use the matrix-free path");
  const Eigen::VectorXd d_sqrt = mass_.cwiseSqrt();
  const Eigen::VectorXd d_isqrt = d_sqrt.cwiseInverse();
  Eigen::MatrixXd B = Eigen::MatrixXd(S_);
  B = d_isqrt.asDiagonal() * B * d_isqrt.asDiagonal();
  B = 0.5 * (B + B.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(B);
  if (es.info() != Eigen::Success)
    throw std::runtime_error("dense_spectral: eigensolver failed");
  auto dense = std::make_shared<DenseSpectral>();
  dense->values = es.eigenvalues();
  dense->vectors = d_isqrt.asDiagonal() * es.eigenvectors();
  dense_ = dense;
  bounds_ = {dense_->values.minCoeff(), dense_->values.maxCoeff()};
  return *dense_;
}

VectorGridFunction DiscreteOperator::gradient(const GridFunction& f) const {
  if (!(f.grid == grid_)) throw std::invalid_argument("gradient: grid mismatch");
  VectorGridFunction out(grid_);
  for (int d = 0; d < grid_.dim(); ++d) out.values.col(d) = G_[d] * f.values;
  return out;
}

GridFunction DiscreteOperator::divergence_w(const VectorGridFunction& V) const {
  if (!(V.grid == grid_)) throw std::invalid_argument("divergence_w: grid mismatch");
  GridFunction out(grid_);
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(grid_.num_interior());
  for (int d = 0; d < grid_.dim(); ++d)
    acc += G_[d].transpose() * mass_.cwiseProduct(V.values.col(d));
  out.values = -acc.cwiseQuotient(mass_);
  return out;
}

}  // namespace riesz
