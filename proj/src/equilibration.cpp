#include "curlcurl/equilibration.hpp"

#include "assembly.hpp"
#include "curlcurl/error.hpp"
#include "curlcurl/solver.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/LU>

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <mutex>
#include <numbers>
#include <unordered_map>

namespace curlcurl::equilibration {

using fe::Family;
using fe::QuadratureRule;
using fe::tet_quadrature;

namespace {

constexpr double pi = std::numbers::pi;

/// Reference quantities shared by all patch problems of degree q.
struct PatchTables
{
  const fe::ReferenceElement* rt;
  const fe::ReferenceElement* dg;
  const QuadratureRule* rule; // order 2q + 4
  std::array<Eigen::MatrixXd, 9> mass; // RT value moments
  Eigen::MatrixXd div; // (n_dg x n_rt): sum w phi_mu div tau_i
  Eigen::MatrixXd dg_mass; // sum w phi_mu phi_nu
  Eigen::MatrixXd dg_mass_inv;
  Eigen::VectorXd dg_mean; // sum w phi_mu
};

const PatchTables& patch_tables(int q)
{
  static std::mutex mutex;
  static std::map<int, std::unique_ptr<PatchTables>> cache;
  std::lock_guard lock(mutex);
  auto& slot = cache[q];
  if (!slot) {
    auto t = std::make_unique<PatchTables>();
    t->rt = &fe::reference_element(Family::RaviartThomas, q);
    t->dg = &fe::reference_element(Family::DiscontinuousP, q);
    t->rule = &tet_quadrature(2 * q + 4);
    const auto& tr = t->rt->tabulate(*t->rule);
    const auto& td = t->dg->tabulate(*t->rule);
    t->mass = detail::component_moments(*t->rule, tr.values, tr.values);
    const int nr = t->rt->n_shape(), nd = t->dg->n_shape();
    t->div = Eigen::MatrixXd::Zero(nd, nr);
    t->dg_mass = Eigen::MatrixXd::Zero(nd, nd);
    t->dg_mean = Eigen::VectorXd::Zero(nd);
    for (std::size_t g = 0; g < t->rule->size(); ++g) {
      const double w = t->rule->weights[g];
      const Eigen::RowVectorXd phi = td.values[g].row(0);
      t->div.noalias() += w * phi.transpose() * tr.derivs[g].row(0);
      t->dg_mass.noalias() += w * phi.transpose() * phi;
      t->dg_mean += w * phi.transpose();
    }
    t->dg_mass_inv = t->dg_mass.inverse();
    slot = std::move(t);
  }
  return *slot;
}

/// Local index of global vertex v in the sorted vertex list of a cell, -1 if absent.
int local_vertex(const mesh::Tet& sorted, int v)
{
  for (int i = 0; i < 4; ++i)
    if (sorted[i] == v)
      return i;
  return -1;
}

Vec3 reference_hat_gradient(int i)
{
  return i == 0 ? Vec3(-1, -1, -1) : Vec3::Unit(i - 1);
}

double reference_hat(int i, const Vec3& xhat)
{
  return i == 0 ? 1 - xhat.sum() : xhat[i - 1];
}

/// psi_l on one cell: the hat gradients are fixed, only the barycentrics vary with the point.
struct EdgeShape
{
  int ia = -1, ib = -1;
  Vec3 ga, gb, curl;
  double len = 0;

  EdgeShape(const mesh::MeshTopology& mesh, int edge, int K, const fe::CellMap& map)
  {
    const auto s = mesh.sorted_tet(K);
    const auto& e = mesh.edges[edge];
    ia = local_vertex(s, e[0]);
    ib = local_vertex(s, e[1]);
    if (ia < 0 || ib < 0) {
      ga = gb = curl = Vec3::Zero();
      return;
    }
    len = mesh.edge_length(edge);
    ga = map.JinvT * reference_hat_gradient(ia);
    gb = map.JinvT * reference_hat_gradient(ib);
    curl = 2 * len * ga.cross(gb);
  }

  EdgeFunctionValue operator()(const Vec3& xhat) const
  {
    if (ia < 0)
      return {Vec3::Zero(), Vec3::Zero()};
    const double la = reference_hat(ia, xhat), lb = reference_hat(ib, xhat);
    return {len * (la * gb - lb * ga), curl};
  }
};

/// The 20 points of the degree-3 lattice of the reference cell.
const std::vector<Vec3>& sup_lattice()
{
  static const std::vector<Vec3> pts = [] {
    std::vector<Vec3> out;
    for (int i = 0; i <= 3; ++i)
      for (int j = 0; i + j <= 3; ++j)
        for (int k = 0; i + j + k <= 3; ++k)
          out.emplace_back(i / 3.0, j / 3.0, k / 3.0);
    return out;
  }();
  return pts;
}

std::pair<double, double> sup_norms(const mesh::MeshTopology& mesh, int edge,
                                    const std::vector<int>& cells)
{
  double sp = 0, sc = 0;
  for (int K : cells) {
    const EdgeShape shape(mesh, edge, K, fe::cell_map(mesh, K));
    for (const auto& x : sup_lattice()) {
      const auto v = shape(x);
      sp = std::max(sp, v.psi.norm());
      sc = std::max(sc, v.curl.norm());
    }
  }
  return {sp, sc};
}

/// Patch unknowns for the RT dofs of the patch cells.
void number_patch_dofs(const mesh::MeshTopology& mesh, PatchMixedProblem& pb)
{
  const auto& rt = *patch_tables(pb.q).rt;
  const auto& per = rt.entity_dofs();
  const int per_face = per[2], per_cell = per[3];
  std::map<int, int> face_count;
  for (int K : pb.patch.cells)
    for (int f : mesh.tet_faces[K])
      ++face_count[f];
  auto free_face = [&](int f) {
    if (face_count[f] == 2)
      return true;
    return pb.patch.dirichlet_edge &&
           std::find(pb.patch.gamma_faces.begin(), pb.patch.gamma_faces.end(), f) !=
             pb.patch.gamma_faces.end();
  };
  const int face_block = mesh.n_faces() * per_face;
  std::map<int, int> face_start;
  pb.cell_dofs.assign(pb.patch.cells.size(), std::vector<int>(rt.n_shape(), -1));
  for (std::size_t c = 0; c < pb.patch.cells.size(); ++c) {
    const int K = pb.patch.cells[c];
    for (int lf = 0; lf < 4; ++lf) {
      const int f = mesh.tet_faces[K][lf];
      if (!free_face(f))
        continue;
      auto [it, fresh] = face_start.emplace(f, pb.n_rt);
      if (fresh) {
        for (int k = 0; k < per_face; ++k)
          pb.rt_global.push_back(f * per_face + k);
        pb.n_rt += per_face;
      }
      for (int k = 0; k < per_face; ++k)
        pb.cell_dofs[c][rt.first_dof(2, lf) + k] = it->second + k;
    }
    for (int k = 0; k < per_cell; ++k) {
      pb.cell_dofs[c][rt.first_dof(3, 0) + k] = pb.n_rt + k;
      pb.rt_global.push_back(face_block + K * per_cell + k);
    }
    pb.n_rt += per_cell;
  }
}

/// DG(q) projection coefficients of f on one cell: M^-1 sum w f phi.
Eigen::VectorXd project_cell(const PatchTables& t, const QuadratureRule& rule,
                             const Eigen::VectorXd& f_at_points)
{
  const auto& td = t.dg->tabulate(rule);
  Eigen::VectorXd b = Eigen::VectorXd::Zero(t.dg->n_shape());
  for (std::size_t g = 0; g < rule.size(); ++g)
    b += rule.weights[g] * f_at_points[g] * td.values[g].row(0).transpose();
  return t.dg_mass_inv * b;
}

} // namespace

EdgeFunctionValue edge_function_at(const mesh::MeshTopology& mesh, int edge, int K,
                                   const fe::CellMap& map, const Vec3& xhat)
{
  return EdgeShape(mesh, edge, K, map)(xhat);
}

EdgeFunction edge_function(const fe::SpacePtr& nedelec0, int edge)
{
  const auto& mesh = *nedelec0->mesh;
  if (nedelec0->family != Family::Nedelec || nedelec0->degree != 0)
    throw IncompatibleQuery("edge functions live in Nedelec(0)");
  if (edge < 0 || edge >= mesh.n_edges())
    throw InvalidConfig("edge id out of range");
  EdgeFunction ef;
  ef.edge = edge;
  ef.length = mesh.edge_length(edge);
  ef.tangent = mesh.tangent(edge);
  ef.patch = mesh::edge_patch(mesh, edge);
  // the edge dof is the moment against b - a, so psi_l is |b - a| times the basis function
  ef.field = DiscreteField(nedelec0);
  ef.field.coeffs[edge] = ef.length;
  std::tie(ef.sup_psi, ef.sup_curl) = sup_norms(mesh, edge, ef.patch.cells);
  return ef;
}

EdgeFunction edge_function(std::shared_ptr<const mesh::MeshTopology> mesh, int edge)
{
  return edge_function(fe::make_space(std::move(mesh), Family::Nedelec, 0), edge);
}

PatchMixedProblem make_patch_problem(const mesh::MeshTopology& mesh, const mesh::EdgePatch& patch,
                                     int q, const std::function<double(int, const Vec3&)>& r,
                                     const std::function<Vec3(int, const Vec3&)>& g,
                                     int data_order)
{
  if (q < 0)
    throw UnsupportedDegree("patch degree must be non-negative");
  const auto& t = patch_tables(q);
  PatchMixedProblem pb;
  pb.patch = patch;
  pb.q = q;
  pb.tangent = mesh.tangent(patch.edge);
  pb.order = t.rule->order;
  pb.mean_constraint = !patch.dirichlet_edge;
  number_patch_dofs(mesh, pb);
  const auto& drule = tet_quadrature(data_order < 0 ? 2 * q + 4 : data_order);
  for (int K : patch.cells) {
    const auto map = fe::cell_map(mesh, K);
    pb.maps.push_back(map);
    Eigen::VectorXd f(drule.size());
    for (std::size_t i = 0; i < drule.size(); ++i)
      f[i] = r(K, map.to_physical(drule.points[i]));
    pb.r.push_back(project_cell(t, drule, f));
    Eigen::Matrix3Xd gv(3, t.rule->size());
    for (std::size_t i = 0; i < t.rule->size(); ++i)
      gv.col(i) = g(K, map.to_physical(t.rule->points[i]));
    pb.g.push_back(gv);
  }
  for (std::size_t c = 0; c < pb.r.size(); ++c)
    pb.compatibility += std::abs(pb.maps[c].det) * t.dg_mean.dot(pb.r[c]);
  std::tie(pb.sup_psi, pb.sup_curl) = sup_norms(mesh, patch.edge, patch.cells);
  return pb;
}

namespace {

/// J - grad lambda_h at the rule points of cell K, or J alone without a multiplier.
Eigen::Matrix3Xd effective_load(const VectorField& J, const DiscreteField* multiplier, int K,
                                const fe::CellMap& map, const QuadratureRule& rule)
{
  Eigen::Matrix3Xd out(3, rule.size());
  for (std::size_t i = 0; i < rule.size(); ++i)
    out.col(i) = J(map.to_physical(rule.points[i]));
  if (multiplier) {
    const auto& tl = multiplier->space->element->tabulate(rule);
    const Eigen::VectorXd c = fe::local_coeffs(*multiplier, K);
    for (std::size_t i = 0; i < rule.size(); ++i)
      out.col(i) -= map.JinvT * (tl.derivs[i] * c);
  }
  return out;
}

} // namespace

namespace {

/// Load-dependent data of one edge problem on one cell.
struct CellLoad
{
  Eigen::VectorXd r; // DG coefficients of the divergence datum
  double scale = 0;  // integral of |psi.J| + |curl psi.curl A_h|
  double osc2 = 0;   // squared projection error of psi.J
};

const QuadratureRule& data_rule(int q, int p)
{
  // same rule as the solver load vector, so (psi.J, 1) matches the Galerkin residual
  return tet_quadrature(std::max(2 * q + 4, solver::data_order(p)));
}

/// The load and curl A_h are evaluated once on cell K and reduced for each listed edge.
std::vector<CellLoad> cell_loads(const DiscreteField& A_h, const VectorField& J,
                                 const DiscreteField* multiplier, int K, int q,
                                 const std::vector<int>& edges)
{
  const auto& sp = *A_h.space;
  const auto& mesh = *sp.mesh;
  const auto& t = patch_tables(q);
  const auto& drule = data_rule(q, sp.degree);
  const auto& ta = sp.element->tabulate(drule);
  const auto& td = t.dg->tabulate(drule);
  const auto map = fe::cell_map(mesh, K);
  const Eigen::VectorXd c = fe::local_coeffs(A_h, K);
  const double adet = std::abs(map.det);
  const Eigen::Matrix3Xd load = effective_load(J, multiplier, K, map, drule);
  Eigen::Matrix3Xd curl_a(3, drule.size());
  for (std::size_t i = 0; i < drule.size(); ++i)
    curl_a.col(i) = map.J * (ta.derivs[i] * c) / map.det;

  std::vector<CellLoad> out(edges.size());
  Eigen::VectorXd fj(drule.size()), fc(drule.size());
  for (std::size_t k = 0; k < edges.size(); ++k) {
    const EdgeShape shape(mesh, edges[k], K, map);
    auto& o = out[k];
    for (std::size_t i = 0; i < drule.size(); ++i) {
      const auto psi = shape(drule.points[i]);
      fj[i] = psi.psi.dot(load.col(i));
      fc[i] = psi.curl.dot(curl_a.col(i));
      o.scale += drule.weights[i] * adet * (std::abs(fj[i]) + std::abs(fc[i]));
    }
    const Eigen::VectorXd pj = project_cell(t, drule, fj);
    o.r = pj - project_cell(t, drule, fc);
    for (std::size_t i = 0; i < drule.size(); ++i) {
      const double d = fj[i] - td.values[i].row(0).dot(pj);
      o.osc2 += drule.weights[i] * adet * d * d;
    }
  }
  return out;
}

/// Patch problem of `edge` with the load data of each patch cell supplied by `load`.
PatchMixedProblem patch_problem(const DiscreteField& A_h, int edge, int q,
                                const std::function<const CellLoad&(int)>& load)
{
  const auto& sp = *A_h.space;
  const auto& mesh = *sp.mesh;
  const auto& t = patch_tables(q);
  PatchMixedProblem pb;
  pb.patch = mesh::edge_patch(mesh, edge);
  pb.q = q;
  pb.tangent = mesh.tangent(edge);
  pb.order = t.rule->order;
  pb.mean_constraint = !pb.patch.dirichlet_edge;
  number_patch_dofs(mesh, pb);

  const auto& ta = sp.element->tabulate(*t.rule);
  double osc2 = 0;
  for (int K : pb.patch.cells) {
    const auto map = fe::cell_map(mesh, K);
    pb.maps.push_back(map);
    const auto& l = load(K);
    pb.r.push_back(l.r);
    pb.compatibility += std::abs(map.det) * t.dg_mean.dot(l.r);
    pb.compatibility_scale += l.scale;
    osc2 += l.osc2;
    const Eigen::VectorXd c = fe::local_coeffs(A_h, K);
    const EdgeShape shape(mesh, edge, K, map);
    Eigen::Matrix3Xd gv(3, t.rule->size());
    for (std::size_t i = 0; i < t.rule->size(); ++i)
      gv.col(i) = shape(t.rule->points[i]).psi.cross(map.J * (ta.derivs[i] * c) / map.det);
    pb.g.push_back(gv);
  }
  pb.data_oscillation = std::sqrt(osc2);
  std::tie(pb.sup_psi, pb.sup_curl) = sup_norms(mesh, edge, pb.patch.cells);
  if (pb.mean_constraint && std::abs(pb.compatibility) > 1e-10 * pb.compatibility_scale)
    throw CompatibilityViolation("edge " + std::to_string(edge) + ": (r, 1) = " +
                                 std::to_string(pb.compatibility) + " against scale " +
                                 std::to_string(pb.compatibility_scale));
  return pb;
}

void check_degrees(const DiscreteField& A_h, int q)
{
  const auto& sp = *A_h.space;
  if (sp.family != Family::Nedelec)
    throw IncompatibleQuery("A_h must be a Nedelec field");
  if (q < sp.degree + 1)
    throw DegreeMismatch("patch degree " + std::to_string(q) + " below p + 1 = " +
                         std::to_string(sp.degree + 1));
}

} // namespace

PatchMixedProblem build_patch_problem(const DiscreteField& A_h, const VectorField& J, int edge,
                                      int q, const DiscreteField* multiplier)
{
  check_degrees(A_h, q);
  CellLoad current;
  return patch_problem(A_h, edge, q, [&](int K) -> const CellLoad& {
    current = cell_loads(A_h, J, multiplier, K, q, {edge})[0];
    return current;
  });
}

PatchSolution solve_patch(const PatchMixedProblem& pb)
{
  const auto& t = patch_tables(pb.q);
  const auto& tr = t.rt->tabulate(*t.rule);
  const int nc = int(pb.patch.cells.size());
  const int nd = t.dg->n_shape(), nr = t.rt->n_shape();
  const int n_dg = nc * nd;
  const int n = pb.n_rt + n_dg + (pb.mean_constraint ? 1 : 0);

  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n, n);
  Eigen::VectorXd b = Eigen::VectorXd::Zero(n);
  for (int c = 0; c < nc; ++c) {
    const auto& map = pb.maps[c];
    const double adet = std::abs(map.det), sgn = map.det > 0 ? 1.0 : -1.0;
    const auto& ids = pb.cell_dofs[c];
    // (sigma, tau) with tau = J tau_hat / det
    const Eigen::MatrixXd M = detail::contract(t.mass, map.J.transpose() * map.J) / adet;
    Eigen::VectorXd f = Eigen::VectorXd::Zero(nr);
    for (std::size_t g = 0; g < t.rule->size(); ++g)
      f.noalias() -= t.rule->weights[g] * sgn * tr.values[g].transpose() *
                     (map.J.transpose() * pb.g[c].col(g));
    const int off = pb.n_rt + c * nd;
    for (int i = 0; i < nr; ++i) {
      if (ids[i] < 0)
        continue;
      b[ids[i]] += f[i];
      for (int j = 0; j < nr; ++j)
        if (ids[j] >= 0)
          A(ids[i], ids[j]) += M(i, j);
      for (int mu = 0; mu < nd; ++mu) {
        const double d = sgn * t.div(mu, i);
        A(off + mu, ids[i]) += d;
        A(ids[i], off + mu) += d;
      }
    }
    b.segment(off, nd) = adet * (t.dg_mass * pb.r[c]);
    if (pb.mean_constraint) {
      A.block(off, n - 1, nd, 1) = adet * t.dg_mean;
      A.block(n - 1, off, 1, nd) = adet * t.dg_mean.transpose();
    }
  }

  PatchSolution sol;
  sol.edge = pb.patch.edge;
  sol.q = pb.q;
  sol.tangent = pb.tangent;
  sol.rt_global = pb.rt_global;
  Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
  if (b.lpNorm<Eigen::Infinity>() > 0) {
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(A);
    x = lu.solve(b);
    Eigen::VectorXd res = b - A * x;
    const double scale =
      A.cwiseAbs().rowwise().sum().maxCoeff() * x.lpNorm<Eigen::Infinity>() + b.lpNorm<Eigen::Infinity>();
    sol.residual = res.lpNorm<Eigen::Infinity>() / scale;
    if (sol.residual > 1e-14) {
      x += lu.solve(res);
      res = b - A * x;
      sol.residual = res.lpNorm<Eigen::Infinity>() / scale;
    }
    if (!x.allFinite() || !(sol.residual <= 1e-10) || lu.rcond() < 1e-15)
      throw SingularPatchSystem("edge " + std::to_string(pb.patch.edge) + ": residual " +
                                std::to_string(sol.residual) + ", rcond " +
                                std::to_string(lu.rcond()));
  }
  sol.sigma = x.head(pb.n_rt);
  sol.multiplier = x.tail(n - pb.n_rt);
  return sol;
}

Eigen::VectorXd patch_cell_coeffs(const PatchMixedProblem& pb, const PatchSolution& sol, int i)
{
  const auto& ids = pb.cell_dofs[i];
  Eigen::VectorXd c = Eigen::VectorXd::Zero(ids.size());
  for (std::size_t k = 0; k < ids.size(); ++k)
    if (ids[k] >= 0)
      c[k] = sol.sigma[ids[k]];
  return c;
}

EdgeEstimate edge_estimate(const PatchMixedProblem& pb, const PatchSolution& sol, double c_p)
{
  const auto& t = patch_tables(pb.q);
  const auto& tr = t.rt->tabulate(*t.rule);
  double e2 = 0;
  for (std::size_t c = 0; c < pb.maps.size(); ++c) {
    const auto& map = pb.maps[c];
    const Eigen::VectorXd coeffs = patch_cell_coeffs(pb, sol, int(c));
    double s = 0;
    for (std::size_t g = 0; g < t.rule->size(); ++g) {
      const Vec3 sigma = map.J * (tr.values[g] * coeffs) / map.det;
      s += t.rule->weights[g] * (sigma + pb.g[c].col(g)).squaredNorm();
    }
    e2 += s * std::abs(map.det);
  }
  EdgeEstimate est;
  est.edge = pb.patch.edge;
  est.eta = std::sqrt(e2);
  est.c_p = c_p;
  est.osc = c_p * pb.patch.h * pb.data_oscillation;
  est.c_cont = pb.sup_psi + c_p * pb.patch.h * pb.sup_curl;
  return est;
}

double poincare_constant(const mesh::MeshTopology& mesh, const std::vector<int>& cells,
                         const std::vector<int>& dirichlet_faces, double h, PoincareMode mode)
{
  if (mode == PoincareMode::Bound)
    return 1 / pi;
  if (!(h > 0) || cells.empty())
    throw EigenFailure("empty patch");
  const auto& el = fe::reference_element(Family::Lagrange, 3);
  static const auto tables = [] {
    const auto& e = fe::reference_element(Family::Lagrange, 3);
    const auto& rule = tet_quadrature(6);
    const auto& tab = e.tabulate(rule);
    auto grad = detail::component_moments(rule, tab.derivs, tab.derivs);
    Eigen::MatrixXd mass = Eigen::MatrixXd::Zero(e.n_shape(), e.n_shape());
    for (std::size_t g = 0; g < rule.size(); ++g)
      mass.noalias() += rule.weights[g] * tab.values[g].transpose() * tab.values[g];
    return std::make_pair(grad, mass);
  }();
  const auto& per = el.entity_dofs();

  // patch numbering keyed by (entity dimension, global entity id, dof index)
  std::map<std::array<int, 3>, int> index;
  std::vector<std::vector<int>> local(cells.size());
  for (std::size_t c = 0; c < cells.size(); ++c) {
    const int K = cells[c];
    const auto s = mesh.sorted_tet(K);
    auto put = [&](int d, int gid) {
      for (int k = 0; k < per[d]; ++k)
        local[c].push_back(index.emplace(std::array{d, gid, k}, int(index.size())).first->second);
    };
    for (int v = 0; v < 4; ++v)
      put(0, s[v]);
    for (int e = 0; e < 6; ++e)
      put(1, mesh.tet_edges[K][e]);
    for (int f = 0; f < 4; ++f)
      put(2, mesh.tet_faces[K][f]);
    put(3, K);
  }
  const int n = int(index.size());
  std::vector<bool> fixed(n, false);
  for (int f : dirichlet_faces) {
    for (int v : mesh.faces[f])
      for (int k = 0; k < per[0]; ++k)
        if (auto it = index.find({0, v, k}); it != index.end())
          fixed[it->second] = true;
    for (int e : mesh.face_edges[f])
      for (int k = 0; k < per[1]; ++k)
        if (auto it = index.find({1, e, k}); it != index.end())
          fixed[it->second] = true;
    for (int k = 0; k < per[2]; ++k)
      if (auto it = index.find({2, f, k}); it != index.end())
        fixed[it->second] = true;
  }
  std::vector<int> free_id(n, -1);
  int nf = 0;
  for (int i = 0; i < n; ++i)
    if (!fixed[i])
      free_id[i] = nf++;
  if (nf == 0)
    throw EigenFailure("no free dofs on the patch");

  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(nf, nf), M = Eigen::MatrixXd::Zero(nf, nf);
  for (std::size_t c = 0; c < cells.size(); ++c) {
    const auto map = fe::cell_map(mesh, cells[c]);
    const double adet = std::abs(map.det);
    const Eigen::MatrixXd a = adet * detail::contract(tables.first, map.Jinv * map.JinvT);
    const Eigen::MatrixXd m = adet * tables.second;
    for (int i = 0; i < el.n_shape(); ++i) {
      const int gi = free_id[local[c][i]];
      if (gi < 0)
        continue;
      for (int j = 0; j < el.n_shape(); ++j) {
        const int gj = free_id[local[c][j]];
        if (gj >= 0) {
          A(gi, gj) += a(i, j);
          M(gi, gj) += m(i, j);
        }
      }
    }
  }
  Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> es(A, M, Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success)
    throw EigenFailure("generalized eigensolver did not converge");
  const Eigen::VectorXd& lam = es.eigenvalues();
  const double top = lam.cwiseAbs().maxCoeff();
  double lambda;
  if (dirichlet_faces.empty()) {
    // the constants span the kernel; the mean-zero constraint removes them
    if (nf < 2 || std::abs(lam[0]) > 1e-8 * top)
      throw EigenFailure("Neumann spectrum has no zero mode");
    lambda = lam[1];
  }
  else
    lambda = lam[0];
  if (!(lambda > 1e-10 * top))
    throw EigenFailure("smallest eigenvalue is not positive");
  return 1 / (h * std::sqrt(lambda));
}

double poincare_constant(const mesh::MeshTopology& mesh, const mesh::EdgePatch& patch,
                         PoincareMode mode)
{
  static const std::vector<int> none;
  return poincare_constant(mesh, patch.cells, patch.dirichlet_edge ? patch.gamma_faces : none,
                           patch.h, mode);
}

namespace {

/// S^k += (tau . u^k) sigma for one patch.
void accumulate(EquilibratedFieldSet& set, const PatchSolution& sol)
{
  for (int k = 0; k < 3; ++k) {
    const double w = sol.tangent[k];
    if (w == 0)
      continue;
    auto& c = set.S[k].coeffs;
    for (std::size_t i = 0; i < sol.rt_global.size(); ++i)
      c[sol.rt_global[i]] += w * sol.sigma[i];
  }
}

EquilibratedFieldSet empty_fields(std::shared_ptr<const mesh::MeshTopology> mesh, int q)
{
  EquilibratedFieldSet set;
  set.q = q;
  const auto space = fe::make_space(std::move(mesh), Family::RaviartThomas, q, fe::Essential::Neumann);
  for (auto& s : set.S)
    s = DiscreteField(space);
  return set;
}

} // namespace

EquilibratedFieldSet assemble_equilibrated_fields(std::shared_ptr<const mesh::MeshTopology> mesh,
                                                  const std::vector<PatchSolution>& solutions,
                                                  int q)
{
  for (const auto& s : solutions)
    if (s.q != q)
      throw DegreeMismatch("patch solution of degree " + std::to_string(s.q) +
                           " in a set of degree " + std::to_string(q));
  auto set = empty_fields(std::move(mesh), q);
  std::vector<const PatchSolution*> order;
  for (const auto& s : solutions)
    order.push_back(&s);
  std::stable_sort(order.begin(), order.end(),
                   [](const PatchSolution* a, const PatchSolution* b) { return a->edge < b->edge; });
  for (const auto* s : order)
    accumulate(set, *s);
  return set;
}

CellEstimate cell_estimate(int K, const EquilibratedFieldSet& fields, const DiscreteField& A_h,
                           const VectorField& J, const DiscreteField* multiplier)
{
  const auto& sa = *A_h.space;
  const auto& ss = *fields.S[0].space;
  const auto& mesh = *sa.mesh;
  const auto& rule = tet_quadrature(2 * fields.q + 4);
  const auto& drule = tet_quadrature(std::max(2 * fields.q + 4, solver::data_order(sa.degree)));
  const auto& ta = sa.element->tabulate(rule);
  const auto& ts = ss.element->tabulate(rule);
  const auto& tsd = ss.element->tabulate(drule);
  const auto map = fe::cell_map(mesh, K);
  const double adet = std::abs(map.det);
  const Eigen::VectorXd ca = fe::local_coeffs(A_h, K);
  std::array<Eigen::VectorXd, 3> cs;
  for (int k = 0; k < 3; ++k)
    cs[k] = fe::local_coeffs(fields.S[k], K);

  CellEstimate out;
  out.cell = K;
  std::array<double, 3> e2{}, o2{};
  for (std::size_t g = 0; g < rule.size(); ++g) {
    const Vec3 curl_a = map.J * (ta.derivs[g] * ca) / map.det;
    for (int k = 0; k < 3; ++k) {
      const Vec3 s = map.J * (ts.values[g] * cs[k]) / map.det;
      e2[k] += rule.weights[g] * (Vec3::Unit(k).cross(curl_a) + s).squaredNorm();
    }
  }
  const Eigen::Matrix3Xd load = effective_load(J, multiplier, K, map, drule);
  for (std::size_t g = 0; g < drule.size(); ++g) {
    const Vec3 j = load.col(g);
    for (int k = 0; k < 3; ++k) {
      const double d = tsd.derivs[g].row(0).dot(cs[k]) / map.det - j[k];
      o2[k] += drule.weights[g] * d * d;
    }
  }
  const double hK = mesh::geometry_stats(mesh, K).h;
  for (int k = 0; k < 3; ++k) {
    out.eta[k] = std::sqrt(e2[k] * adet);
    out.osc[k] = hK / pi * std::sqrt(o2[k] * adet);
  }
  return out;
}

std::vector<CellEstimate> cell_estimates(const EquilibratedFieldSet& fields,
                                         const DiscreteField& A_h, const VectorField& J,
                                         const DiscreteField* multiplier)
{
  std::vector<CellEstimate> out(A_h.space->mesh->n_tets());
  parallel_for(int(out.size()),
               [&](int K) { out[K] = cell_estimate(K, fields, A_h, J, multiplier); });
  return out;
}

EstimatorTotals totals(const std::vector<EdgeEstimate>& edges,
                       const std::vector<CellEstimate>& cells, double c_lift)
{
  EstimatorTotals t;
  t.c_lift = c_lift;
  double eta2 = 0, osc2 = 0;
  for (const auto& e : edges) {
    eta2 += e.eta * e.eta;
    osc2 += e.osc * e.osc;
  }
  double c2 = 0, cp2 = 0, co2 = 0;
  for (const auto& c : cells)
    for (int k = 0; k < 3; ++k) {
      c2 += (c.eta[k] + c.osc[k]) * (c.eta[k] + c.osc[k]);
      cp2 += c.eta[k] * c.eta[k];
      co2 += c.osc[k] * c.osc[k];
    }
  const double s6 = std::sqrt(6.0);
  t.eta_edge_raw = std::sqrt(eta2);
  t.eta_edge = s6 * c_lift * std::sqrt(eta2 + osc2);
  t.eta_cell = c_lift * std::sqrt(c2);
  t.eta_edge_plain = s6 * std::sqrt(eta2);
  t.eta_cell_plain = std::sqrt(cp2);
  t.osc_edge = std::sqrt(osc2);
  t.osc_cell = std::sqrt(co2);
  return t;
}

Estimate estimate(const DiscreteField& A_h, const VectorField& J, const EstimatorOptions& options,
                  const DiscreteField* multiplier)
{
  if (options.q_offset < 1)
    throw DegreeMismatch("q must be at least p + 1");
  const auto mesh_ptr = A_h.space->mesh;
  const auto& mesh = *mesh_ptr;
  Estimate est;
  est.q = A_h.space->degree + options.q_offset;
  est.edges.resize(mesh.n_edges());
  est.fields = empty_fields(mesh_ptr, est.q);

  struct Local
  {
    EdgeEstimate estimate;
    PatchSolution solution;
    double compatibility = 0;
  };
  check_degrees(A_h, est.q);
  // every cell sits in six patches, so its load is reduced once for all of them
  std::vector<std::vector<CellLoad>> loads(mesh.n_tets());
  parallel_for(mesh.n_tets(), [&](int K) {
    const auto& te = mesh.tet_edges[K];
    loads[K] = cell_loads(A_h, J, multiplier, K, est.q, {te.begin(), te.end()});
  });
  detail::for_each_ordered<Local>(
    mesh.n_edges(),
    [&](int e, Local& out) {
      const auto pb = patch_problem(A_h, e, est.q, [&](int K) -> const CellLoad& {
        const auto& te = mesh.tet_edges[K];
        return loads[K][std::find(te.begin(), te.end(), e) - te.begin()];
      });
      out.solution = solve_patch(pb);
      const double c_p =
        options.edge_oscillation ? poincare_constant(mesh, pb.patch, options.poincare) : 0.0;
      out.estimate = edge_estimate(pb, out.solution, c_p);
      if (pb.mean_constraint && pb.compatibility_scale > 0)
        out.compatibility = std::abs(pb.compatibility) / pb.compatibility_scale;
    },
    [&](int e, Local& in) {
      est.edges[e] = in.estimate;
      accumulate(est.fields, in.solution);
      est.max_compatibility = std::max(est.max_compatibility, in.compatibility);
    },
    512);
  est.cells = cell_estimates(est.fields, A_h, J, multiplier);
  est.totals = totals(est.edges, est.cells, options.c_lift);
  return est;
}

} // namespace curlcurl::equilibration
