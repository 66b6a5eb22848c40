#pragma once

#include "curlcurl/mesh.hpp"
#include "curlcurl/reference_element.hpp"

#include <functional>
#include <memory>
#include <vector>

namespace curlcurl::fe {

using mesh::MeshTopology;

/// Affine map x = x0 + J xhat onto cell K, built from the vertices sorted by global id.
/// det may be negative; integrals use |det|.
struct CellMap
{
  Eigen::Vector3d x0;
  Eigen::Matrix3d J, Jinv, JinvT;
  double det = 0;

  Eigen::Vector3d to_physical(const Eigen::Vector3d& xhat) const { return x0 + J * xhat; }
  Eigen::Vector3d to_reference(const Eigen::Vector3d& x) const { return Jinv * (x - x0); }
};

CellMap cell_map(const MeshTopology& mesh, int K);

/// Which boundary entities carry essential (constrained) dofs.
enum class Essential { None, Dirichlet, Neumann };

/// Global numbering: vertex dofs, then edge, face and cell dofs, each block ordered by entity
/// id. Shared entities get the same ids from every cell; since local entities follow the
/// ascending global vertex order, no sign flips are needed.
class DofMap
{
public:
  DofMap(const MeshTopology& mesh, const ReferenceElement& element, Essential essential,
         int components = 1);

  int n_dofs() const { return n_dofs_; }
  int n_local() const { return n_local_; }
  int components() const { return components_; }
  /// Global ids of the local dofs of cell K; component c of a vector DG space occupies
  /// local positions [c * n_shape, (c + 1) * n_shape).
  const std::vector<int>& cell_dofs(int K) const { return cell_dofs_[K]; }
  const std::vector<bool>& constrained() const { return constrained_; }
  int n_constrained() const;
  /// Orientation sign of a local dof; always +1 with the sorted local numbering.
  int sign(int, int) const { return 1; }

private:
  int n_dofs_ = 0;
  int n_local_ = 0;
  int components_ = 1;
  std::vector<std::vector<int>> cell_dofs_;
  std::vector<bool> constrained_;
};

struct FESpace
{
  FESpace(std::shared_ptr<const MeshTopology> mesh, Family family, int degree,
          Essential essential = Essential::None, int components = 1);

  std::shared_ptr<const MeshTopology> mesh;
  Family family;
  int degree;
  Essential essential;
  const ReferenceElement* element;
  DofMap dofs;

  int n_dofs() const { return dofs.n_dofs(); }
  /// Size of a point value (1 or 3).
  int value_size() const { return family == Family::DiscontinuousP ? dofs.components() : element->value_size(); }
};

using SpacePtr = std::shared_ptr<const FESpace>;

SpacePtr make_space(std::shared_ptr<const MeshTopology> mesh, Family family, int degree,
                    Essential essential = Essential::None, int components = 1);

struct DiscreteField
{
  SpacePtr space;
  Eigen::VectorXd coeffs;

  DiscreteField() = default;
  DiscreteField(SpacePtr s) : space(std::move(s)), coeffs(Eigen::VectorXd::Zero(space->n_dofs())) {}
  DiscreteField(SpacePtr s, Eigen::VectorXd c) : space(std::move(s)), coeffs(std::move(c)) {}
};

enum class Quantity { Value, Curl, Div, Grad };

/// Physical shape functions of cell K at one reference point: values (value_size x n) and
/// the family derivative (curl, div or grad) after the Piola transforms.
void physical_shapes(const ReferenceElement& el, const CellMap& map, const Eigen::MatrixXd& ref_values,
                     const Eigen::MatrixXd& ref_derivs, Eigen::MatrixXd& values, Eigen::MatrixXd& derivs);

/// Values at reference points of cell K; returns (dim x n_points). Throws IncompatibleQuery
/// when the quantity does not exist for the family.
Eigen::MatrixXd evaluate_field(const DiscreteField& field, int K,
                               const std::vector<Eigen::Vector3d>& ref_points, Quantity what);

/// Same at the points of a rule, using the element's cached tabulation.
Eigen::MatrixXd evaluate_field(const DiscreteField& field, int K, const QuadratureRule& rule,
                               Quantity what);

/// Cell-local coefficient vector of a field.
Eigen::VectorXd local_coeffs(const DiscreteField& field, int K);

/// Interpolation through the dof functionals of a physical function.
DiscreteField interpolate(SpacePtr space, const std::function<Eigen::VectorXd(const Eigen::Vector3d&)>& f);

/// Cellwise L2 projection onto DiscontinuousP(q) with as many components as f returns.
/// f receives the cell index and the physical point. Cells not listed stay zero.
DiscreteField l2_project_piecewise(std::shared_ptr<const MeshTopology> mesh,
                                   const std::function<Eigen::VectorXd(int, const Eigen::Vector3d&)>& f,
                                   int components, int q, const std::vector<int>& cells, int order = -1);
DiscreteField l2_project_piecewise(std::shared_ptr<const MeshTopology> mesh,
                                   const std::function<Eigen::VectorXd(int, const Eigen::Vector3d&)>& f,
                                   int components, int q, int order = -1);

} // namespace curlcurl::fe
