#include "curlcurl/solver.hpp"

#include "curlcurl/error.hpp"
#include "assembly.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/IterativeLinearSolvers>
#include <Eigen/SparseLU>

#include <algorithm>
#include <chrono>

namespace curlcurl::solver {

using fe::Family;
using fe::QuadratureRule;
using fe::tet_quadrature;
using detail::component_moments;
using detail::contract;
using detail::ordered_sum;

template <class Local, class Compute, class Scatter>
void for_cells_ordered(int n, Compute&& compute, Scatter&& scatter)
{
  detail::for_each_ordered<Local>(n, compute, scatter);
}

namespace {

/// Column-major pattern with one column per dof of `outer` holding the dofs of `inner` that
/// share a cell with it.
SparseMatrix cell_pattern(const fe::DofMap& inner, const fe::DofMap& outer, int n_cells)
{
  std::vector<std::vector<int>> cols(outer.n_dofs());
  for (int K = 0; K < n_cells; ++K) {
    const auto& ri = inner.cell_dofs(K);
    for (int j : outer.cell_dofs(K))
      cols[j].insert(cols[j].end(), ri.begin(), ri.end());
  }
  SparseMatrix m(inner.n_dofs(), outer.n_dofs());
  Eigen::VectorXi sizes(outer.n_dofs());
  for (int j = 0; j < outer.n_dofs(); ++j) {
    auto& c = cols[j];
    std::sort(c.begin(), c.end());
    c.erase(std::unique(c.begin(), c.end()), c.end());
    sizes[j] = int(c.size());
  }
  m.reserve(sizes.sum());
  for (int j = 0; j < outer.n_dofs(); ++j) {
    m.startVec(j);
    for (int i : cols[j])
      m.insertBack(i, j) = 0.0;
    std::vector<int>().swap(cols[j]);
  }
  m.finalize();
  return m;
}

/// Adds a local block into an existing pattern.
void scatter_block(SparseMatrix& m, const std::vector<int>& rows, const std::vector<int>& cols,
                   const Eigen::MatrixXd& local)
{
  const int* outer = m.outerIndexPtr();
  const int* inner = m.innerIndexPtr();
  double* val = m.valuePtr();
  for (std::size_t j = 0; j < cols.size(); ++j) {
    const int* begin = inner + outer[cols[j]];
    const int* end = inner + outer[cols[j] + 1];
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const int* pos = std::lower_bound(begin, end, rows[i]);
      val[pos - inner] += local(i, j);
    }
  }
}

double inf_norm(const SparseMatrix& m)
{
  Eigen::VectorXd rows = Eigen::VectorXd::Zero(m.rows());
  for (int j = 0; j < m.outerSize(); ++j)
    for (SparseMatrix::InnerIterator it(m, j); it; ++it)
      rows[it.row()] += std::abs(it.value());
  return m.rows() ? rows.maxCoeff() : 0.0;
}

std::vector<int> free_dofs(const fe::DofMap& dofs)
{
  std::vector<int> out;
  for (int i = 0; i < dofs.n_dofs(); ++i)
    if (!dofs.constrained()[i])
      out.push_back(i);
  return out;
}

/// [[K, B^T], [B, 0]] on the free dofs, filled column by column in ascending row order.
SparseMatrix reduced_saddle(const SaddleSystem& system)
{
  const int nu = int(system.free_u.size()), nq = int(system.free_q.size());
  const int n = nu + nq;
  std::vector<int> ru(system.K.rows(), -1), rq(system.B.rows(), -1);
  for (int i = 0; i < nu; ++i)
    ru[system.free_u[i]] = i;
  for (int i = 0; i < nq; ++i)
    rq[system.free_q[i]] = nu + i;
  const SparseMatrix Bt = system.B.transpose();
  SparseMatrix S(n, n);
  Eigen::VectorXi sizes(n);
  for (int j = 0; j < nu; ++j) {
    const int c = system.free_u[j];
    sizes[j] = int(system.K.outerIndexPtr()[c + 1] - system.K.outerIndexPtr()[c] +
                   system.B.outerIndexPtr()[c + 1] - system.B.outerIndexPtr()[c]);
  }
  for (int j = 0; j < nq; ++j) {
    const int c = system.free_q[j];
    sizes[nu + j] = int(Bt.outerIndexPtr()[c + 1] - Bt.outerIndexPtr()[c]);
  }
  S.reserve(sizes.sum());
  for (int j = 0; j < nu; ++j) {
    const int c = system.free_u[j];
    S.startVec(j);
    for (SparseMatrix::InnerIterator it(system.K, c); it; ++it)
      if (ru[it.row()] >= 0)
        S.insertBack(ru[it.row()], j) = it.value();
    for (SparseMatrix::InnerIterator it(system.B, c); it; ++it)
      if (rq[it.row()] >= 0)
        S.insertBack(rq[it.row()], j) = it.value();
  }
  for (int j = 0; j < nq; ++j) {
    const int c = system.free_q[j];
    S.startVec(nu + j);
    for (SparseMatrix::InnerIterator it(Bt, c); it; ++it)
      if (ru[it.row()] >= 0)
        S.insertBack(ru[it.row()], nu + j) = it.value();
  }
  S.finalize();

  return S;
}

/// Rows `rows` and columns `cols` of A.
SparseMatrix restrict_matrix(const SparseMatrix& A, const std::vector<int>& rows,
                             const std::vector<int>& cols)
{
  std::vector<int> rr(A.rows(), -1);
  for (std::size_t i = 0; i < rows.size(); ++i)
    rr[rows[i]] = int(i);
  SparseMatrix out(Eigen::Index(rows.size()), Eigen::Index(cols.size()));
  for (std::size_t j = 0; j < cols.size(); ++j) {
    out.startVec(Eigen::Index(j));
    for (SparseMatrix::InnerIterator it(A, cols[j]); it; ++it)
      if (rr[it.row()] >= 0)
        out.insertBack(rr[it.row()], Eigen::Index(j)) = it.value();
  }
  out.finalize();
  return out;
}

/// Exact embedding of the free dofs of `coarse` into the free dofs of `fine` (same mesh, same
/// family). Both spaces use the same Piola map, so one reference-cell matrix serves all cells.
SparseMatrix embedding(const fe::FESpace& coarse, const std::vector<int>& coarse_free,
                       const fe::FESpace& fine, const std::vector<int>& fine_free)
{
  const auto& rule = tet_quadrature(2 * fine.degree + 2);
  const auto& tc = coarse.element->tabulate(rule);
  const auto& tf = fine.element->tabulate(rule);
  const int vs = coarse.element->value_size();
  Eigen::MatrixXd Vc(vs * rule.size(), coarse.element->n_shape());
  Eigen::MatrixXd Vf(vs * rule.size(), fine.element->n_shape());
  for (std::size_t g = 0; g < rule.size(); ++g) {
    Vc.middleRows(vs * g, vs) = tc.values[g];
    Vf.middleRows(vs * g, vs) = tf.values[g];
  }
  const Eigen::MatrixXd local = Vf.colPivHouseholderQr().solve(Vc);

  std::vector<int> rf(fine.n_dofs(), -1), rc(coarse.n_dofs(), -1);
  for (std::size_t i = 0; i < fine_free.size(); ++i)
    rf[fine_free[i]] = int(i);
  for (std::size_t i = 0; i < coarse_free.size(); ++i)
    rc[coarse_free[i]] = int(i);
  // a conforming function has the same coefficients seen from every cell, so each fine row
  // is taken from the first cell that contains it
  std::vector<char> done(fine_free.size(), 0);
  std::vector<Eigen::Triplet<double>> entries;
  for (int K = 0; K < fine.mesh->n_tets(); ++K) {
    const auto& df = fine.dofs.cell_dofs(K);
    const auto& dc = coarse.dofs.cell_dofs(K);
    for (std::size_t i = 0; i < df.size(); ++i) {
      const int r = rf[df[i]];
      if (r < 0 || done[r])
        continue;
      done[r] = 1;
      for (std::size_t j = 0; j < dc.size(); ++j)
        if (rc[dc[j]] >= 0 && std::abs(local(i, j)) > 1e-13)
          entries.emplace_back(r, rc[dc[j]], local(i, j));
    }
  }
  SparseMatrix P(Eigen::Index(fine_free.size()), Eigen::Index(coarse_free.size()));
  P.setFromTriplets(entries.begin(), entries.end());
  return P;
}

/// Inverse of the diagonal blocks of K, one block per mesh entity of the Nedelec space
/// (edges, then faces, then cells in the dof numbering). Eigenvalues of a block that are
/// numerically zero are replaced by its largest one, keeping the result positive definite.
SparseMatrix entity_block_inverse(const SparseMatrix& K, const fe::FESpace& space,
                                  const std::vector<int>& free)
{
  const auto& mesh = *space.mesh;
  const int k = space.degree;
  const int per_edge = k + 1, per_face = k * (k + 1), per_cell = (k - 1) * k * (k + 1) / 2;
  std::vector<std::pair<int, int>> blocks; // first global dof, size
  if (mesh.n_edges() * per_edge + int(mesh.faces.size()) * per_face + mesh.n_tets() * per_cell ==
      space.n_dofs()) {
    for (int e = 0; e < mesh.n_edges(); ++e)
      blocks.emplace_back(e * per_edge, per_edge);
    const int f0 = mesh.n_edges() * per_edge;
    for (int f = 0; f < int(mesh.faces.size()); ++f)
      blocks.emplace_back(f0 + f * per_face, per_face);
    const int c0 = f0 + int(mesh.faces.size()) * per_face;
    for (int K = 0; K < mesh.n_tets() && per_cell > 0; ++K)
      blocks.emplace_back(c0 + K * per_cell, per_cell);
  }
  else {
    for (int i = 0; i < space.n_dofs(); ++i)
      blocks.emplace_back(i, 1);
  }

  std::vector<int> rf(space.n_dofs(), -1);
  for (std::size_t i = 0; i < free.size(); ++i)
    rf[free[i]] = int(i);
  std::vector<Eigen::Triplet<double>> entries;
  for (const auto& [first, size] : blocks) {
    std::vector<int> ids;
    for (int i = first; i < first + size; ++i)
      if (rf[i] >= 0)
        ids.push_back(rf[i]);
    const int m = int(ids.size());
    if (m == 0)
      continue;
    Eigen::MatrixXd block(m, m);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < m; ++j)
        block(i, j) = K.coeff(ids[i], ids[j]);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(block);
    Eigen::VectorXd ev = es.eigenvalues();
    const double top = std::max(ev.maxCoeff(), 1e-300);
    for (int i = 0; i < m; ++i)
      if (ev[i] <= 1e-10 * top)
        ev[i] = top;
    const Eigen::MatrixXd inv =
      es.eigenvectors() * ev.cwiseInverse().asDiagonal() * es.eigenvectors().transpose();
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < m; ++j)
        entries.emplace_back(ids[i], ids[j], inv(i, j));
  }
  SparseMatrix D(Eigen::Index(free.size()), Eigen::Index(free.size()));
  D.setFromTriplets(entries.begin(), entries.end());
  return D;
}

/// Additive two-level preconditioner for the reference curl-curl matrix: entity block
/// Jacobi plus a correction through the degree-p Galerkin space, whose gauged saddle solve
/// acts as a symmetric generalized inverse of the coarse curl-curl matrix. The correction
/// removes the mesh-size dependence of the iteration count.
class TwoLevelPreconditioner
{
public:
  TwoLevelPreconditioner() = default;

  void setup(SparseMatrix block_inverse, SparseMatrix embedding, const SparseMatrix& saddle)
  {
    D_ = std::move(block_inverse);
    P_ = std::move(embedding);
    n_saddle_ = saddle.rows();
    lu_.compute(saddle);
    if (lu_.info() != Eigen::Success)
      throw SingularSystem("sparse LU of the coarse saddle system failed");
  }

  template <class M> TwoLevelPreconditioner& analyzePattern(const M&) { return *this; }
  template <class M> TwoLevelPreconditioner& factorize(const M&) { return *this; }
  template <class M> TwoLevelPreconditioner& compute(const M&) { return *this; }
  Eigen::ComputationInfo info() const { return Eigen::Success; }

  template <class Rhs> Eigen::VectorXd solve(const Rhs& r) const
  {
    Eigen::VectorXd rc = Eigen::VectorXd::Zero(n_saddle_);
    rc.head(P_.cols()) = P_.transpose() * r;
    const Eigen::VectorXd xc = lu_.solve(rc);
    return D_ * r + P_ * xc.head(P_.cols());
  }

private:
  SparseMatrix D_, P_;
  Eigen::Index n_saddle_ = 0;
  mutable Eigen::SparseLU<SparseMatrix> lu_;
};

} // namespace

int data_order(int p)
{
  return std::max(2 * p + 6, 14);
}

SaddleSystem assemble_curlcurl_system(std::shared_ptr<const mesh::MeshTopology> mesh, int p,
                                      const VectorField& J)
{
  if (p < 0)
    throw UnsupportedDegree("Nedelec degree must be non-negative");
  SaddleSystem s;
  s.nedelec = fe::make_space(mesh, Family::Nedelec, p, fe::Essential::Dirichlet);
  s.lagrange = fe::make_space(mesh, Family::Lagrange, p + 1, fe::Essential::Dirichlet);
  const auto& ned = *s.nedelec->element;
  const auto& lag = *s.lagrange->element;
  const auto& nd = s.nedelec->dofs;
  const auto& ld = s.lagrange->dofs;
  const int nt = mesh->n_tets();

  const auto& rule = tet_quadrature(2 * p + 2);
  const auto& tn = ned.tabulate(rule);
  const auto& tl = lag.tabulate(rule);
  const auto curl_moments = component_moments(rule, tn.derivs, tn.derivs);
  const auto grad_moments = component_moments(rule, tl.derivs, tn.values);
  const auto& drule = tet_quadrature(data_order(p));
  const auto& td = ned.tabulate(drule);

  s.K = cell_pattern(nd, nd, nt);
  s.B = cell_pattern(ld, nd, nt);
  s.rhs = Eigen::VectorXd::Zero(nd.n_dofs());

  struct Local
  {
    Eigen::MatrixXd k, b;
    Eigen::VectorXd f;
  };
  for_cells_ordered<Local>(
    nt,
    [&](int K, Local& out) {
      const auto map = fe::cell_map(*mesh, K);
      const double adet = std::abs(map.det);
      // curl u = J curl_hat / det, u = J^{-T} u_hat, grad q = J^{-T} grad_hat
      out.k = contract(curl_moments, map.J.transpose() * map.J) / adet;
      out.b = adet * contract(grad_moments, map.Jinv * map.JinvT);
      out.f = Eigen::VectorXd::Zero(ned.n_shape());
      for (std::size_t g = 0; g < drule.size(); ++g) {
        const Vec3 j = map.Jinv * J(map.to_physical(drule.points[g]));
        out.f.noalias() += drule.weights[g] * adet * td.values[g].transpose() * j;
      }
    },
    [&](int K, const Local& in) {
      const auto& u = nd.cell_dofs(K);
      scatter_block(s.K, u, u, in.k);
      scatter_block(s.B, ld.cell_dofs(K), u, in.b);
      for (std::size_t i = 0; i < u.size(); ++i)
        s.rhs[u[i]] += in.f[i];
    });

  s.free_u = free_dofs(nd);
  s.free_q = free_dofs(ld);
  return s;
}

GalerkinSolution solve_galerkin(const SaddleSystem& system)
{
  const auto t0 = std::chrono::steady_clock::now();
  const int nu = int(system.free_u.size()), nq = int(system.free_q.size());
  const int n = nu + nq;
  GalerkinSolution sol{fe::DiscreteField(system.nedelec), fe::DiscreteField(system.lagrange), {}};
  sol.stats.n_unknowns = n;
  if (n == 0)
    return sol;

  const SparseMatrix S = reduced_saddle(system);

  Eigen::VectorXd b = Eigen::VectorXd::Zero(n);
  for (int i = 0; i < nu; ++i)
    b[i] = system.rhs[system.free_u[i]];

  Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
  double rel = 0;
  if (b.lpNorm<Eigen::Infinity>() > 0) {
    Eigen::SparseLU<SparseMatrix> lu;
    lu.compute(S);
    if (lu.info() != Eigen::Success)
      throw SingularSystem("sparse LU failed; check the boundary labels and the topology");
    const double snorm = inf_norm(S);
    auto backward_error = [&](const Eigen::VectorXd& r) {
      return r.lpNorm<Eigen::Infinity>() /
             (snorm * x.lpNorm<Eigen::Infinity>() + b.lpNorm<Eigen::Infinity>());
    };
    x = lu.solve(b);
    Eigen::VectorXd r = b - S * x;
    rel = backward_error(r);
    for (int it = 0; it < 3 && rel > 1e-14; ++it) {
      x += lu.solve(r);
      r = b - S * x;
      rel = backward_error(r);
    }
    if (!x.allFinite() || !(rel <= tol_lin))
      throw SingularSystem("linear residual " + std::to_string(rel) + " above tolerance");
  }
  sol.stats.residual = rel;

  for (int i = 0; i < nu; ++i)
    sol.A_h.coeffs[system.free_u[i]] = x[i];
  for (int i = 0; i < nq; ++i)
    sol.multiplier.coeffs[system.free_q[i]] = x[nu + i];

  // Galerkin and gauge residuals over the free test functions, without the multiplier
  const Eigen::VectorXd rg = system.rhs - system.K * sol.A_h.coeffs;
  const Eigen::VectorXd gq = system.B * sol.A_h.coeffs;
  double mg = 0, mq = 0;
  for (int i : system.free_u)
    mg = std::max(mg, std::abs(rg[i]));
  for (int i : system.free_q)
    mq = std::max(mq, std::abs(gq[i]));
  const double fscale = std::max(system.rhs.lpNorm<Eigen::Infinity>(), 1e-300);
  sol.stats.galerkin_residual = mg / fscale;
  sol.stats.gauge_residual =
    mq / std::max(inf_norm(system.B) * sol.A_h.coeffs.lpNorm<Eigen::Infinity>(), 1e-300);
  sol.stats.seconds =
    std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return sol;
}

GalerkinSolution reference_solution(std::shared_ptr<const mesh::MeshTopology> mesh, int p,
                                    const VectorField& J, int direct_limit)
{
  const auto system = assemble_curlcurl_system(std::move(mesh), p + 2, J);
  if (int(system.free_u.size()) <= direct_limit)
    return solve_galerkin(system);

  // K x = b without the gauge. b is orthogonal to the gradients (up to quadrature), so the
  // system is consistent and CG minimizes the curl-energy error over its Krylov spaces; the
  // gradient part of x is arbitrary and does not affect the curl.
  const auto t0 = std::chrono::steady_clock::now();
  const int nu = int(system.free_u.size());
  const SparseMatrix K = restrict_matrix(system.K, system.free_u, system.free_u);
  Eigen::VectorXd b(nu);
  for (int i = 0; i < nu; ++i)
    b[i] = system.rhs[system.free_u[i]];

  GalerkinSolution sol{fe::DiscreteField(system.nedelec), fe::DiscreteField(system.lagrange), {}};
  sol.stats.n_unknowns = nu;
  if (b.lpNorm<Eigen::Infinity>() > 0) {
    const auto coarse = assemble_curlcurl_system(system.nedelec->mesh, p, J);
    Eigen::ConjugateGradient<SparseMatrix, Eigen::Lower | Eigen::Upper, TwoLevelPreconditioner>
      cg;
    cg.preconditioner().setup(
      entity_block_inverse(K, *system.nedelec, system.free_u),
      embedding(*coarse.nedelec, coarse.free_u, *system.nedelec, system.free_u),
      reduced_saddle(coarse));
    cg.setTolerance(tol_lin * 0.1);
    cg.setMaxIterations(20 * nu);
    cg.compute(K);
    const Eigen::VectorXd x = cg.solve(b);
    if (cg.info() != Eigen::Success || !x.allFinite())
      throw SingularSystem("CG did not converge on the reference problem");
    for (int i = 0; i < nu; ++i)
      sol.A_h.coeffs[system.free_u[i]] = x[i];
    sol.stats.residual = cg.error();
    sol.stats.galerkin_residual =
      (b - K * x).lpNorm<Eigen::Infinity>() / b.lpNorm<Eigen::Infinity>();
  }
  sol.stats.seconds =
    std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return sol;
}

double energy_error(const DiscreteField& A_h, const VectorField& curl_A, int order)
{
  const auto& sp = *A_h.space;
  if (sp.family != Family::Nedelec)
    throw IncompatibleQuery("energy_error needs a Nedelec field");
  const auto& rule = tet_quadrature(order < 0 ? std::max(2 * sp.degree + 4, 14) : order);
  const auto& tab = sp.element->tabulate(rule);
  const auto& mesh = *sp.mesh;
  const double e2 = ordered_sum(mesh.n_tets(), [&](int K) {
    const auto map = fe::cell_map(mesh, K);
    const Eigen::VectorXd c = fe::local_coeffs(A_h, K);
    double s = 0;
    for (std::size_t g = 0; g < rule.size(); ++g) {
      const Vec3 ch = map.J * (tab.derivs[g] * c) / map.det;
      s += rule.weights[g] * (curl_A(map.to_physical(rule.points[g])) - ch).squaredNorm();
    }
    return s * std::abs(map.det);
  });
  return std::sqrt(std::max(e2, 0.0));
}

double energy_error(const DiscreteField& A_h, const DiscreteField& ref)
{
  const auto& sa = *A_h.space;
  const auto& sr = *ref.space;
  if (sa.family != Family::Nedelec || sr.family != Family::Nedelec)
    throw IncompatibleQuery("energy_error needs Nedelec fields");
  if (sa.mesh->n_tets() != sr.mesh->n_tets())
    throw IncompatibleQuery("fields live on different meshes");
  const auto& rule = tet_quadrature(2 * std::max(sa.degree, sr.degree));
  const auto& ta = sa.element->tabulate(rule);
  const auto& tr = sr.element->tabulate(rule);
  const auto& mesh = *sa.mesh;
  // reference curls map by J / det
  const double f2 = ordered_sum(mesh.n_tets(), [&](int K) {
    const auto map = fe::cell_map(mesh, K);
    const Eigen::VectorXd ca = fe::local_coeffs(A_h, K), cr = fe::local_coeffs(ref, K);
    double s = 0;
    for (std::size_t g = 0; g < rule.size(); ++g)
      s += rule.weights[g] * (map.J * (tr.derivs[g] * cr - ta.derivs[g] * ca)).squaredNorm();
    return s / std::abs(map.det);
  });
  return std::sqrt(std::max(f2, 0.0));
}

double curl_norm(const DiscreteField& A_h)
{
  const auto& sp = *A_h.space;
  const auto& rule = tet_quadrature(2 * sp.degree);
  const auto& tab = sp.element->tabulate(rule);
  const auto& mesh = *sp.mesh;
  const double n2 = ordered_sum(mesh.n_tets(), [&](int K) {
    const auto map = fe::cell_map(mesh, K);
    const Eigen::VectorXd c = fe::local_coeffs(A_h, K);
    double s = 0;
    for (std::size_t g = 0; g < rule.size(); ++g)
      s += rule.weights[g] * (map.J * (tab.derivs[g] * c)).squaredNorm();
    return s / std::abs(map.det);
  });
  return std::sqrt(n2);
}

Eigen::VectorXd residual_functional(const DiscreteField& A_h, const SpacePtr& test_space,
                                    const VectorField& J)
{
  const auto& sa = *A_h.space;
  const auto& st = *test_space;
  if (sa.family != Family::Nedelec || st.family != Family::Nedelec)
    throw IncompatibleQuery("residual_functional needs Nedelec spaces");
  const auto& mesh = *st.mesh;
  const auto& rule = tet_quadrature(sa.degree + st.degree);
  const auto& ta = sa.element->tabulate(rule);
  const auto& tt = st.element->tabulate(rule);
  const auto& drule = tet_quadrature(data_order(st.degree));
  const auto& td = st.element->tabulate(drule);
  Eigen::VectorXd out = Eigen::VectorXd::Zero(st.n_dofs());
  for_cells_ordered<Eigen::VectorXd>(
    mesh.n_tets(),
    [&](int K, Eigen::VectorXd& r) {
      const auto map = fe::cell_map(mesh, K);
      const double adet = std::abs(map.det);
      const Eigen::VectorXd c = fe::local_coeffs(A_h, K);
      r = Eigen::VectorXd::Zero(st.element->n_shape());
      const Eigen::Matrix3d G = map.J.transpose() * map.J;
      for (std::size_t g = 0; g < rule.size(); ++g) {
        const Vec3 ca = ta.derivs[g] * c;
        r.noalias() -= rule.weights[g] / adet * tt.derivs[g].transpose() * (G * ca);
      }
      for (std::size_t g = 0; g < drule.size(); ++g) {
        const Vec3 j = map.Jinv * J(map.to_physical(drule.points[g]));
        r.noalias() += drule.weights[g] * adet * td.values[g].transpose() * j;
      }
    },
    [&](int K, const Eigen::VectorXd& r) {
      const auto& d = st.dofs.cell_dofs(K);
      for (std::size_t i = 0; i < d.size(); ++i)
        out[d[i]] += r[i];
    });
  return out;
}

Eigen::VectorXd gauge_functional(const DiscreteField& A_h, const SpacePtr& lagrange)
{
  const auto& sa = *A_h.space;
  const auto& sl = *lagrange;
  const auto& mesh = *sl.mesh;
  const auto& rule = tet_quadrature(sa.degree + sl.degree + 1);
  const auto& ta = sa.element->tabulate(rule);
  const auto& tl = sl.element->tabulate(rule);
  Eigen::VectorXd out = Eigen::VectorXd::Zero(sl.n_dofs());
  for_cells_ordered<Eigen::VectorXd>(
    mesh.n_tets(),
    [&](int K, Eigen::VectorXd& r) {
      const auto map = fe::cell_map(mesh, K);
      const Eigen::VectorXd c = fe::local_coeffs(A_h, K);
      r = Eigen::VectorXd::Zero(sl.element->n_shape());
      const Eigen::Matrix3d H = map.Jinv * map.JinvT;
      for (std::size_t g = 0; g < rule.size(); ++g)
        r.noalias() += rule.weights[g] * tl.derivs[g].transpose() * (H * (ta.values[g] * c));
      r *= std::abs(map.det);
    },
    [&](int K, const Eigen::VectorXd& r) {
      const auto& d = sl.dofs.cell_dofs(K);
      for (std::size_t i = 0; i < d.size(); ++i)
        out[d[i]] += r[i];
    });
  return out;
}

} // namespace curlcurl::solver
