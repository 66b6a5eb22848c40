#include "curlcurl/fe_space.hpp"

#include "curlcurl/error.hpp"

#include <algorithm>

namespace curlcurl::fe {

CellMap cell_map(const MeshTopology& mesh, int K)
{
  const auto s = mesh.sorted_tet(K);
  CellMap m;
  m.x0 = mesh.vertices[s[0]];
  for (int i = 0; i < 3; ++i)
    m.J.col(i) = mesh.vertices[s[i + 1]] - m.x0;
  m.det = m.J.determinant();
  m.Jinv = m.J.inverse();
  m.JinvT = m.Jinv.transpose();
  return m;
}

DofMap::DofMap(const MeshTopology& mesh, const ReferenceElement& el, Essential essential,
               int components)
  : components_(components)
{
  const auto& per = el.entity_dofs();
  const int n_shape = el.n_shape();
  n_local_ = n_shape * components;
  const std::array<int, 4> n_entities{mesh.n_vertices(), mesh.n_edges(), mesh.n_faces(),
                                      mesh.n_tets()};
  std::array<int, 4> offset{};
  int total = 0;
  for (int d = 0; d < 4; ++d) {
    offset[d] = total;
    total += n_entities[d] * per[d];
  }
  n_dofs_ = total * components;

  cell_dofs_.resize(mesh.n_tets());
  for (int K = 0; K < mesh.n_tets(); ++K) {
    const auto s = mesh.sorted_tet(K);
    auto& dofs = cell_dofs_[K];
    dofs.resize(n_local_);
    int i = 0;
    auto put = [&](int d, int gid) {
      for (int k = 0; k < per[d]; ++k)
        dofs[i++] = offset[d] + gid * per[d] + k;
    };
    for (int v = 0; v < 4; ++v)
      put(0, s[v]);
    for (int e = 0; e < 6; ++e)
      put(1, mesh.tet_edges[K][e]);
    for (int f = 0; f < 4; ++f)
      put(2, mesh.tet_faces[K][f]);
    put(3, K);
    for (int c = 1; c < components; ++c)
      for (int k = 0; k < n_shape; ++k)
        dofs[c * n_shape + k] = c * total + dofs[k];
  }

  constrained_.assign(n_dofs_, false);
  if (essential == Essential::None)
    return;
  const auto want = essential == Essential::Dirichlet ? mesh::BoundaryLabel::Dirichlet
                                                      : mesh::BoundaryLabel::Neumann;
  auto mark = [&](int d, int gid) {
    for (int c = 0; c < components; ++c)
      for (int k = 0; k < per[d]; ++k)
        constrained_[c * total + offset[d] + gid * per[d] + k] = true;
  };
  for (const auto& [f, label] : mesh.boundary_faces) {
    if (label != want)
      continue;
    mark(2, f);
    for (int e : mesh.face_edges[f])
      mark(1, e);
    for (int v : mesh.faces[f])
      mark(0, v);
  }
}

int DofMap::n_constrained() const
{
  return int(std::count(constrained_.begin(), constrained_.end(), true));
}

FESpace::FESpace(std::shared_ptr<const MeshTopology> m, Family fam, int deg, Essential ess,
                 int components)
  : mesh(std::move(m)), family(fam), degree(deg), essential(ess),
    element(&reference_element(fam, deg)),
    dofs(*mesh, *element, ess, fam == Family::DiscontinuousP ? components : 1)
{
  if (components != 1 && fam != Family::DiscontinuousP)
    throw IncompatibleQuery("only DiscontinuousP spaces take several components");
}

SpacePtr make_space(std::shared_ptr<const MeshTopology> mesh, Family family, int degree,
                    Essential essential, int components)
{
  return std::make_shared<const FESpace>(std::move(mesh), family, degree, essential, components);
}

void physical_shapes(const ReferenceElement& el, const CellMap& map,
                     const Eigen::MatrixXd& rv, const Eigen::MatrixXd& rd,
                     Eigen::MatrixXd& values, Eigen::MatrixXd& derivs)
{
  switch (el.family()) {
  case Family::Lagrange:
  case Family::DiscontinuousP:
    values = rv;
    derivs = map.JinvT * rd;
    break;
  case Family::Nedelec:
    values = map.JinvT * rv;
    derivs = (map.J * rd) / map.det;
    break;
  case Family::RaviartThomas:
    values = (map.J * rv) / map.det;
    derivs = rd / map.det;
    break;
  }
}

Eigen::VectorXd local_coeffs(const DiscreteField& field, int K)
{
  const auto& dofs = field.space->dofs.cell_dofs(K);
  Eigen::VectorXd c(dofs.size());
  for (std::size_t i = 0; i < dofs.size(); ++i)
    c[i] = field.coeffs[dofs[i]];
  return c;
}

namespace {

void check_quantity(Family fam, Quantity what)
{
  const bool ok = what == Quantity::Value || (what == Quantity::Curl && fam == Family::Nedelec) ||
                  (what == Quantity::Div && fam == Family::RaviartThomas) ||
                  (what == Quantity::Grad && (fam == Family::Lagrange || fam == Family::DiscontinuousP));
  if (!ok)
    throw IncompatibleQuery("quantity not defined for " + to_string(fam));
}

/// The field at n points; `shapes(g)` returns the reference values and derivatives at point g.
template <class Shapes>
Eigen::MatrixXd evaluate_at(const DiscreteField& field, int K, std::size_t n, Quantity what,
                            Shapes&& shapes)
{
  const auto& sp = *field.space;
  const auto& el = *sp.element;
  const auto map = cell_map(*sp.mesh, K);
  const Eigen::VectorXd c = local_coeffs(field, K);
  const int nc = sp.dofs.components();
  const int ns = el.n_shape();
  const bool value = what == Quantity::Value;
  const int rows = value ? (sp.family == Family::Lagrange || sp.family == Family::DiscontinuousP ? 1 : 3)
                         : (what == Quantity::Div ? 1 : 3);
  Eigen::MatrixXd out(nc * rows, Eigen::Index(n));
  for (std::size_t g = 0; g < n; ++g) {
    const auto [rv, rd] = shapes(g);
    const Eigen::MatrixXd& m = value ? rv : rd;
    for (int comp = 0; comp < nc; ++comp) {
      // contract with the coefficients first, then map the few resulting rows
      const Eigen::VectorXd r = m * c.segment(comp * ns, ns);
      Eigen::VectorXd phys;
      switch (sp.family) {
      case Family::Lagrange:
      case Family::DiscontinuousP:
        phys = value ? r : Eigen::VectorXd(map.JinvT * r);
        break;
      case Family::Nedelec:
        phys = value ? Eigen::VectorXd(map.JinvT * r) : Eigen::VectorXd(map.J * r / map.det);
        break;
      case Family::RaviartThomas:
        phys = value ? Eigen::VectorXd(map.J * r / map.det) : Eigen::VectorXd(r / map.det);
        break;
      }
      out.col(g).segment(comp * rows, rows) = phys;
    }
  }
  return out;
}

} // namespace

Eigen::MatrixXd evaluate_field(const DiscreteField& field, int K,
                               const std::vector<Eigen::Vector3d>& ref_points, Quantity what)
{
  check_quantity(field.space->family, what);
  const auto& el = *field.space->element;
  Eigen::MatrixXd rv, rd;
  return evaluate_at(field, K, ref_points.size(), what, [&](std::size_t g) {
    el.evaluate(ref_points[g], rv, &rd);
    return std::pair<const Eigen::MatrixXd&, const Eigen::MatrixXd&>(rv, rd);
  });
}

Eigen::MatrixXd evaluate_field(const DiscreteField& field, int K, const QuadratureRule& rule,
                               Quantity what)
{
  check_quantity(field.space->family, what);
  const auto& tab = field.space->element->tabulate(rule);
  return evaluate_at(field, K, rule.size(), what, [&](std::size_t g) {
    return std::pair<const Eigen::MatrixXd&, const Eigen::MatrixXd&>(tab.values[g], tab.derivs[g]);
  });
}

DiscreteField interpolate(SpacePtr space,
                          const std::function<Eigen::VectorXd(const Eigen::Vector3d&)>& f)
{
  DiscreteField out(space);
  const auto& el = *space->element;
  const auto& mesh = *space->mesh;
  const int nc = space->dofs.components();
  for (int K = 0; K < mesh.n_tets(); ++K) {
    const auto map = cell_map(mesh, K);
    Eigen::VectorXd local(space->dofs.n_local());
    for (int comp = 0; comp < nc; ++comp) {
      const Eigen::VectorXd d = el.interpolate([&](const Eigen::Vector3d& xh) -> Eigen::VectorXd {
        const Eigen::VectorXd v = f(map.to_physical(xh));
        switch (space->family) {
        case Family::Nedelec:
          return map.J.transpose() * v;
        case Family::RaviartThomas:
          return map.det * (map.Jinv * v);
        default:
          return v.segment(comp, 1);
        }
      });
      local.segment(comp * el.n_shape(), el.n_shape()) = d;
    }
    const auto& dofs = space->dofs.cell_dofs(K);
    for (std::size_t i = 0; i < dofs.size(); ++i)
      out.coeffs[dofs[i]] = local[i];
  }
  return out;
}

DiscreteField
l2_project_piecewise(std::shared_ptr<const MeshTopology> mesh,
                     const std::function<Eigen::VectorXd(int, const Eigen::Vector3d&)>& f,
                     int components, int q, const std::vector<int>& cells, int order)
{
  auto space = make_space(mesh, Family::DiscontinuousP, q, Essential::None, components);
  DiscreteField out(space);
  const auto& rule = tet_quadrature(order < 0 ? 2 * q + 2 : order);
  const auto& tab = space->element->tabulate(rule);
  const int ns = space->element->n_shape();
  for (int K : cells) {
    // the reference basis is L2-orthonormal, so the physical mass matrix is |det| I
    const auto map = cell_map(*mesh, K);
    Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(ns, components);
    for (std::size_t g = 0; g < rule.size(); ++g) {
      const Eigen::VectorXd v = f(K, map.to_physical(rule.points[g]));
      acc += rule.weights[g] * tab.values[g].transpose() * v.transpose();
    }
    const auto& dofs = space->dofs.cell_dofs(K);
    for (int c = 0; c < components; ++c)
      for (int k = 0; k < ns; ++k)
        out.coeffs[dofs[c * ns + k]] = acc(k, c);
  }
  return out;
}

DiscreteField
l2_project_piecewise(std::shared_ptr<const MeshTopology> mesh,
                     const std::function<Eigen::VectorXd(int, const Eigen::Vector3d&)>& f,
                     int components, int q, int order)
{
  std::vector<int> cells(mesh->n_tets());
  for (int K = 0; K < mesh->n_tets(); ++K)
    cells[K] = K;
  return l2_project_piecewise(std::move(mesh), f, components, q, cells, order);
}

} // namespace curlcurl::fe
