#pragma once

#include "curlcurl/fe_space.hpp"

#include <Eigen/Sparse>

#include <functional>
#include <memory>

namespace curlcurl::solver {

using fe::DiscreteField;
using fe::SpacePtr;
using Vec3 = Eigen::Vector3d;
using VectorField = std::function<Vec3(const Vec3&)>;
using SparseMatrix = Eigen::SparseMatrix<double>;

/// Relative residual accepted from the linear solver.
inline constexpr double tol_lin = 1e-9;

/// Quadrature order used for terms that involve the load J on Nedelec(p).
int data_order(int p);

/// [[K, B^T], [B, 0]] on Nedelec(p) x Lagrange(p+1). K, B and rhs are indexed by the full
/// dof numbering; dofs on the Dirichlet boundary are dropped when solving.
struct SaddleSystem
{
  SpacePtr nedelec;
  SpacePtr lagrange;
  SparseMatrix K; // (curl u, curl v)
  SparseMatrix B; // (u, grad q), rows are Lagrange dofs
  Eigen::VectorXd rhs; // (J, v)
  std::vector<int> free_u, free_q; // unconstrained dofs in ascending order

  int n_free() const { return int(free_u.size() + free_q.size()); }
};

/// Assembles the system on the mesh; Dirichlet dofs come from the mesh boundary labels.
SaddleSystem assemble_curlcurl_system(std::shared_ptr<const mesh::MeshTopology> mesh, int p,
                                      const VectorField& J);

struct SolveStats
{
  int n_unknowns = 0;
  double residual = 0; // relative residual of the reduced saddle system
  double galerkin_residual = 0; // max |(J, v) - (curl A_h, curl v)| / scale over free v
  double gauge_residual = 0;    // max |(A_h, grad q)| / scale over free q
  double seconds = 0;
};

struct GalerkinSolution
{
  DiscreteField A_h;
  DiscreteField multiplier;
  SolveStats stats;
};

/// Sparse LU of the reduced saddle system with iterative refinement. Throws SingularSystem
/// when the factorization breaks down or the residual stays above tol_lin.
GalerkinSolution solve_galerkin(const SaddleSystem& system);

/// Above this many free Nedelec dofs, reference_solution switches to CG without the gauge.
inline constexpr int direct_reference_limit = 8000;

/// Galerkin solution at degree p + 2 on the same mesh. Large problems are solved by
/// Jacobi-preconditioned CG on K x = b alone: the curl of the result is the Galerkin curl,
/// but the field carries an arbitrary gradient part and the multiplier is left at zero.
GalerkinSolution reference_solution(std::shared_ptr<const mesh::MeshTopology> mesh, int p,
                                    const VectorField& J,
                                    int direct_limit = direct_reference_limit);

/// ||curl(A - A_h)|| with the curl of the exact solution given in closed form. The default
/// quadrature order is max(2 p + 4, 14) with p the Nedelec degree.
double energy_error(const DiscreteField& A_h, const VectorField& curl_A, int order = -1);

/// ||curl(ref - A_h)|| for two discrete fields on the same mesh, exact quadrature.
double energy_error(const DiscreteField& A_h, const DiscreteField& ref);

/// ||curl A_h||.
double curl_norm(const DiscreteField& A_h);

/// Residual functional (J, v) - (curl A_h, curl v) for every basis function v of a Nedelec
/// space on the same mesh, in the full numbering of that space.
Eigen::VectorXd residual_functional(const DiscreteField& A_h, const SpacePtr& test_space,
                                    const VectorField& J);

/// (u, grad q) for every Lagrange basis function q.
Eigen::VectorXd gauge_functional(const DiscreteField& A_h, const SpacePtr& lagrange);

} // namespace curlcurl::solver
