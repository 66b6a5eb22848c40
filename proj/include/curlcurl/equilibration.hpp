#pragma once

#include "curlcurl/fe_space.hpp"

#include <array>
#include <functional>
#include <memory>
#include <vector>

namespace curlcurl::equilibration {

using fe::DiscreteField;
using Vec3 = Eigen::Vector3d;
using VectorField = std::function<Vec3(const Vec3&)>;

/// psi_l = |b - a| (psi_a grad psi_b - psi_b grad psi_a) for the edge l = (a, b), a < b, with
/// psi_a, psi_b the hat functions. Its tangential component is 1 along l and 0 on every other
/// edge, and curl psi_l = 2 |b - a| grad psi_a x grad psi_b is constant per cell.
struct EdgeFunction
{
  int edge = -1;
  double length = 0;
  Vec3 tangent = Vec3::Zero();
  mesh::EdgePatch patch;
  /// psi_l in the lowest-order Nedelec space of the whole mesh.
  DiscreteField field;
  /// Sampled on the degree-3 lattice of every patch cell (20 points, vertices included).
  double sup_psi = 0;
  /// Exact: curl psi_l is cellwise constant.
  double sup_curl = 0;
};

/// Builds psi_l on a given Nedelec(0) space.
EdgeFunction edge_function(const fe::SpacePtr& nedelec0, int edge);
EdgeFunction edge_function(std::shared_ptr<const mesh::MeshTopology> mesh, int edge);

struct EdgeFunctionValue
{
  Vec3 psi;
  Vec3 curl;
};

/// psi_l and its curl at reference point xhat of cell K; zero when K is not in the patch.
EdgeFunctionValue edge_function_at(const mesh::MeshTopology& mesh, int edge, int K,
                                   const fe::CellMap& map, const Vec3& xhat);

/// Discrete patch problem: minimize ||sigma + g|| over RT(q) fields on the patch with
/// div sigma = r cellwise. Interior edges constrain the normal trace on the whole patch
/// boundary and carry one extra multiplier fixing the mean of the DG multiplier; Dirichlet
/// edges leave the faces on the Dirichlet boundary free.
struct PatchMixedProblem
{
  mesh::EdgePatch patch;
  int q = 0;
  Vec3 tangent = Vec3::Zero();
  std::vector<fe::CellMap> maps; // one per patch cell
  /// Patch unknown of every local RT dof of every patch cell, -1 where the trace is fixed.
  std::vector<std::vector<int>> cell_dofs;
  /// Global dof in RaviartThomas(q) with the FESpace numbering, per patch unknown.
  std::vector<int> rt_global;
  int n_rt = 0;
  /// DG(q) coefficients of r per patch cell in the reference DG basis.
  std::vector<Eigen::VectorXd> r;
  /// g at the points of tet_quadrature(order) per patch cell.
  std::vector<Eigen::Matrix3Xd> g;
  int order = 0;
  bool mean_constraint = false;
  double compatibility = 0;       // (r, 1) over the patch
  double compatibility_scale = 0; // L1 norm of the two terms of r
  double data_oscillation = 0;    // ||psi.J - pi_q(psi.J)|| over the patch
  double sup_psi = 0, sup_curl = 0;
};

/// Problem of edge l for the field A_h and load J. With the Lagrange multiplier of the
/// Galerkin solve the load is J - grad lambda_h, the one the discrete equations actually
/// balance; lambda_h vanishes up to quadrature error in (J, grad q). Throws DegreeMismatch
/// when q < p + 1 and CompatibilityViolation when an interior edge gets
/// |(r, 1)| > 1e-10 * scale.
PatchMixedProblem build_patch_problem(const DiscreteField& A_h, const VectorField& J, int edge,
                                      int q, const DiscreteField* multiplier = nullptr);

/// Problem with prescribed data: r is projected onto DG(q) per cell (quadrature of order
/// data_order), g is sampled. No compatibility check.
PatchMixedProblem make_patch_problem(const mesh::MeshTopology& mesh, const mesh::EdgePatch& patch,
                                     int q, const std::function<double(int, const Vec3&)>& r,
                                     const std::function<Vec3(int, const Vec3&)>& g,
                                     int data_order = -1);

struct PatchSolution
{
  int edge = -1;
  int q = 0;
  Vec3 tangent = Vec3::Zero();
  Eigen::VectorXd sigma; // patch unknowns
  Eigen::VectorXd multiplier; // DG multiplier, then the mean multiplier if present
  std::vector<int> rt_global;
  double residual = 0; // relative residual of the mixed system
};

/// Dense LU of the mixed system. Throws SingularPatchSystem.
PatchSolution solve_patch(const PatchMixedProblem& problem);

/// Local RT(q) coefficients of sigma on the i-th patch cell.
Eigen::VectorXd patch_cell_coeffs(const PatchMixedProblem& problem, const PatchSolution& sol,
                                  int i);

enum class PoincareMode { Eigen, Bound };

/// C_P = 1 / (h sqrt(lambda)) with lambda the first nonzero Laplace eigenvalue on the union of
/// `cells` (Lagrange(3)), Dirichlet on `dirichlet_faces` and mean-zero when that list is
/// empty. Bound mode returns 1/pi. Throws EigenFailure.
double poincare_constant(const mesh::MeshTopology& mesh, const std::vector<int>& cells,
                         const std::vector<int>& dirichlet_faces, double h,
                         PoincareMode mode = PoincareMode::Eigen);
double poincare_constant(const mesh::MeshTopology& mesh, const mesh::EdgePatch& patch,
                         PoincareMode mode = PoincareMode::Eigen);

struct EdgeEstimate
{
  int edge = -1;
  double eta = 0;
  double osc = 0;
  double c_p = 0;    // 0 when the oscillation was not requested
  double c_cont = 0; // sup psi + C_P h sup curl psi
};

/// eta = ||sigma + g|| over the patch; osc = C_P h ||psi.J - pi_q(psi.J)|| with c_p given.
EdgeEstimate edge_estimate(const PatchMixedProblem& problem, const PatchSolution& sol,
                           double c_p = 0);

/// S^k = sum_l (tau_l . u^k) sigma_l in RaviartThomas(q), zero normal trace on Neumann faces.
struct EquilibratedFieldSet
{
  int q = 0;
  std::array<DiscreteField, 3> S;
};

/// Sums the patch fields in ascending edge order. Throws DegreeMismatch if a solution has a
/// different degree.
EquilibratedFieldSet assemble_equilibrated_fields(std::shared_ptr<const mesh::MeshTopology> mesh,
                                                  const std::vector<PatchSolution>& solutions,
                                                  int q);

struct CellEstimate
{
  int cell = -1;
  std::array<double, 3> eta{};
  std::array<double, 3> osc{}; // h_K / pi ||div S^k - J_k||
};

CellEstimate cell_estimate(int K, const EquilibratedFieldSet& fields, const DiscreteField& A_h,
                           const VectorField& J, const DiscreteField* multiplier = nullptr);
std::vector<CellEstimate> cell_estimates(const EquilibratedFieldSet& fields,
                                         const DiscreteField& A_h, const VectorField& J,
                                         const DiscreteField* multiplier = nullptr);

struct EstimatorTotals
{
  double c_lift = 1;
  double eta_edge_raw = 0;   // (sum eta_l^2)^1/2
  double eta_edge = 0;       // sqrt6 C_L (sum eta_l^2 + osc_l^2)^1/2
  double eta_cell = 0;       // C_L (sum_K sum_k (eta_K^k + osc_K^k)^2)^1/2
  double eta_edge_plain = 0; // sqrt6 (sum eta_l^2)^1/2
  double eta_cell_plain = 0; // (sum_K sum_k (eta_K^k)^2)^1/2
  double osc_edge = 0;       // (sum osc_l^2)^1/2
  double osc_cell = 0;       // (sum_K sum_k (osc_K^k)^2)^1/2
};

EstimatorTotals totals(const std::vector<EdgeEstimate>& edges,
                       const std::vector<CellEstimate>& cells, double c_lift = 1);

struct EstimatorOptions
{
  int q_offset = 1; // q = p + q_offset
  bool edge_oscillation = true;
  PoincareMode poincare = PoincareMode::Eigen;
  double c_lift = 1;
};

struct Estimate
{
  int q = 0;
  std::vector<EdgeEstimate> edges; // indexed by edge id
  EquilibratedFieldSet fields;
  std::vector<CellEstimate> cells; // indexed by cell id
  EstimatorTotals totals;
  double max_compatibility = 0; // max |(r_l, 1)| / scale over interior edges
};

/// Solves every patch problem, recombines the fields and evaluates both estimators.
Estimate estimate(const DiscreteField& A_h, const VectorField& J,
                  const EstimatorOptions& options = {}, const DiscreteField* multiplier = nullptr);

} // namespace curlcurl::equilibration
