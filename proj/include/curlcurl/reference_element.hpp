#pragma once

#include "curlcurl/quadrature.hpp"

#include <Eigen/Dense>

#include <array>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

namespace curlcurl::fe {

enum class Family { Lagrange, Nedelec, RaviartThomas, DiscontinuousP };

std::string to_string(Family f);

/// Degree caps; reference_element() throws UnsupportedDegree beyond them.
inline constexpr int max_lagrange_degree = 8;
inline constexpr int max_nedelec_degree = 7;
inline constexpr int max_rt_degree = 8;
inline constexpr int max_dg_degree = 8;

/// Shape functions tabulated at the points of one quadrature rule.
struct Tabulation
{
  /// values[g] is value_size x n_shape.
  std::vector<Eigen::MatrixXd> values;
  /// Derivative per family: gradient (3 x n) for scalar families, curl (3 x n) for
  /// Nedelec, divergence (1 x n) for Raviart-Thomas.
  std::vector<Eigen::MatrixXd> derivs;
};

/// Local vertex pairs of the 6 edges and vertex triples of the 4 faces (face i is opposite
/// vertex i). The local numbering is the ascending order of global vertex ids.
inline constexpr std::array<std::array<int, 2>, 6> local_edges{
  {{0, 1}, {0, 2}, {0, 3}, {1, 2}, {1, 3}, {2, 3}}};
inline constexpr std::array<std::array<int, 3>, 4> local_faces{
  {{1, 2, 3}, {0, 2, 3}, {0, 1, 3}, {0, 1, 2}}};

/// Finite element on the reference tetrahedron conv{0, e1, e2, e3}.
///
/// Dofs are ordered vertex by vertex, then edge by edge, then face by face, then interior.
/// Edge and face dofs are parametrized from the lowest local vertex, so two cells that order
/// their vertices by global id see the same functionals on a shared entity.
class ReferenceElement
{
public:
  ReferenceElement(Family family, int degree);

  Family family() const { return family_; }
  int degree() const { return degree_; }
  int n_shape() const { return n_shape_; }
  int value_size() const { return value_size_; }
  int deriv_size() const { return family_ == Family::RaviartThomas ? 1 : 3; }

  /// Dofs attached to each vertex, edge, face and to the interior.
  const std::array<int, 4>& entity_dofs() const { return entity_dofs_; }
  /// First local dof index of the given entity.
  int first_dof(int entity_dim, int local_entity) const;

  /// Evaluate values (value_size x n) and derivatives (deriv_size x n) at a reference point.
  void evaluate(const Eigen::Vector3d& xhat, Eigen::MatrixXd& values,
                Eigen::MatrixXd* derivs = nullptr) const;

  /// Cached tabulation at the points of a rule from tet_quadrature().
  const Tabulation& tabulate(const QuadratureRule& rule) const;

  /// Apply the dof functionals to a function given on the reference cell.
  Eigen::VectorXd
  interpolate(const std::function<Eigen::VectorXd(const Eigen::Vector3d&)>& f) const;

  /// Sample points of the dof functionals; dof i equals dof_weights.row(i) applied to the
  /// stacked samples [f(x_0); f(x_1); ...].
  const std::vector<Eigen::Vector3d>& dof_points() const { return dof_points_; }
  const Eigen::MatrixXd& dof_weights() const { return dof_weights_; }

  /// Max deviation of the dof matrix from identity, recomputed in double precision.
  double unisolvence_defect() const;

private:
  using LMat = Eigen::Matrix<long double, Eigen::Dynamic, Eigen::Dynamic>;

  void evaluate_ld(const Eigen::Vector3d& xhat, Eigen::MatrixXd& values,
                   Eigen::MatrixXd* derivs) const;

  Family family_;
  int degree_;
  int n_shape_ = 0;
  int value_size_ = 1;
  int poly_degree_ = 0;
  std::array<int, 4> entity_dofs_{};
  std::vector<std::array<int, 3>> exps_;
  LMat coef_; // (value_size * n_mon) x n_shape, monomials centred at the barycentre
  std::vector<Eigen::Vector3d> dof_points_;
  Eigen::MatrixXd dof_weights_;

  mutable std::mutex cache_mutex_;
  mutable std::map<int, std::unique_ptr<Tabulation>> tabulations_;
};

/// Cached reference element. Throws UnsupportedDegree outside the compiled range.
const ReferenceElement& reference_element(Family family, int degree);

/// Space dimensions on one tetrahedron.
int dimension(Family family, int degree);

} // namespace curlcurl::fe
