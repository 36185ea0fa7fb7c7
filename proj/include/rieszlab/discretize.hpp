#pragma once

#include <memory>
#include <optional>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "rieszlab/coeffs.hpp"
#include "rieszlab/grid.hpp"

namespace riesz {

using SparseMat = Eigen::SparseMatrix<double>;

/// Dense eigendecomposition of L in the w-weighted inner product:
/// L V = V diag(vals) with V^T M V = I (M the node-mass matrix).
struct DenseSpectral {
  Eigen::VectorXd values;
  Eigen::MatrixXd vectors;  // nodal, w-orthonormal columns
};

struct AssembleOptions {
  int dense_cap = 3000;
  bool spot_check = true;  // re-validate field ellipticity before assembly
};

/// Discrete L = -(1/w) div(w A grad) on a Dirichlet box grid.
///
/// Assembled from the quadratic form: per cell, the product field (wA) is
/// sampled at the cell center and each cell corner contributes
/// (h^n / 2^n) <(wA) G u, G v> with G the corner gradient of one-sided edge
/// differences. The form is symmetric and inherits the ellipticity sandwich
/// of (wA) exactly, quadrature point by quadrature point. For A = I the
/// stencil reduces to the standard (2n+1)-point Laplacian; anisotropic
/// entries produce the compact 9-point (n=2) / 27-point (n=3) coupling.
class DiscreteOperator {
 public:
  static DiscreteOperator assemble(const Grid& grid, const MatrixField& A,
                                   const WeightField& w,
                                   const AssembleOptions& opts = {});

  const Grid& grid() const { return grid_; }
  const MatrixField& field() const { return A_; }
  const WeightField& weight() const { return w_; }

  // Node mass M_k = w_k h^n; w at nodes is averaged over 2^n points offset
  // by h/4 per axis so singular (A2) weights stay strictly positive.
  const Eigen::VectorXd& node_mass() const { return mass_; }
  const Eigen::VectorXd& node_weight() const { return wnode_; }

  const SparseMat& stiffness() const { return S_; }          // interior x interior
  const SparseMat& boundary_coupling() const { return Sb_; } // interior x all-nodes

  bool is_m_matrix() const { return m_matrix_; }

  GridFunction apply(const GridFunction& f) const;  // L f = M^{-1} S f
  // L applied to samples of a function given on all nodes (interior result).
  GridFunction apply_with_boundary(const Eigen::VectorXd& all_node_values) const;

  double energy(const GridFunction& f) const;  // <L f, f>_w = f^T S f
  double inner_w(const GridFunction& f, const GridFunction& g) const;

  // Extremal eigenvalues of L (dense when available, otherwise iterated
  // bounds with a small safety margin).
  std::pair<double, double> spectral_bounds() const;

  // Full w-orthonormal eigendecomposition; throws above the dense cap.
  const DenseSpectral& dense_spectral() const;
  bool has_dense_oracle() const { return grid_.num_interior() <= opts_.dense_cap; }
  int dense_cap() const { return opts_.dense_cap; }

  // Centered differences at interior nodes, one-sided where a neighbor is a
  // Dirichlet boundary node.
  VectorGridFunction gradient(const GridFunction& f) const;
  // Negative w-adjoint of gradient: <div_w V, f>_w = -<V, grad f>_w exactly.
  GridFunction divergence_w(const VectorGridFunction& V) const;

  const SparseMat& gradient_matrix(int axis) const { return G_[axis]; }

 private:
  DiscreteOperator(Grid g, MatrixField A, WeightField w, AssembleOptions opts);

  Grid grid_;
  MatrixField A_;
  WeightField w_;
  AssembleOptions opts_;
  Eigen::VectorXd mass_, wnode_;
  SparseMat S_, Sb_;
  std::array<SparseMat, 3> G_;
  bool m_matrix_ = false;
  mutable std::optional<std::pair<double, double>> bounds_;
  mutable std::shared_ptr<DenseSpectral> dense_;
};

// Assemble only the stiffness form of a (possibly indefinite) symmetric
// product field P(x), sampled at cell centers like the operator assembly.
// Used for the coefficient-difference splitting, where P = (w - w0) A -
// w0 (A0 - A) need not be elliptic.
SparseMat assemble_stiffness(const Grid& grid, const MatrixField::EvalFn& P,
                             int dim);

}  // namespace riesz
