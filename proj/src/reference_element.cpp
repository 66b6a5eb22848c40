#include "curlcurl/reference_element.hpp"

#include "curlcurl/error.hpp"

#include <Eigen/Cholesky>
#include <Eigen/LU>

#include <cmath>

namespace curlcurl::fe {

namespace {

using LD = long double;
using LMat = Eigen::Matrix<LD, Eigen::Dynamic, Eigen::Dynamic>;
using LVec = Eigen::Matrix<LD, Eigen::Dynamic, 1>;
using LVec3 = Eigen::Matrix<LD, 3, 1>;

const LVec3 centroid(0.25L, 0.25L, 0.25L);

const std::array<LVec3, 4> ref_vertices{LVec3(0, 0, 0), LVec3(1, 0, 0), LVec3(0, 1, 0),
                                        LVec3(0, 0, 1)};

std::vector<std::array<int, 3>> monomials(int degree)
{
  std::vector<std::array<int, 3>> e;
  for (int d = 0; d <= degree; ++d)
    for (int a = d; a >= 0; --a)
      for (int b = d - a; b >= 0; --b)
        e.push_back({a, b, d - a - b});
  return e;
}

int monomial_index(const std::vector<std::array<int, 3>>& exps, const std::array<int, 3>& a)
{
  // exps is sorted by total degree; a linear scan keeps this simple and is only used at setup
  for (std::size_t i = 0; i < exps.size(); ++i)
    if (exps[i] == a)
      return int(i);
  return -1;
}

/// Monomial values and first derivatives at y = x - centroid.
void eval_monomials(const std::vector<std::array<int, 3>>& exps, int degree, const LVec3& x,
                    LVec& m, LMat* dm)
{
  const LVec3 y = x - centroid;
  std::array<std::vector<LD>, 3> pw;
  for (int c = 0; c < 3; ++c) {
    pw[c].assign(degree + 1, 1);
    for (int e = 1; e <= degree; ++e)
      pw[c][e] = pw[c][e - 1] * y[c];
  }
  const int n = int(exps.size());
  m.resize(n);
  if (dm)
    dm->resize(3, n);
  for (int i = 0; i < n; ++i) {
    const auto& a = exps[i];
    m[i] = pw[0][a[0]] * pw[1][a[1]] * pw[2][a[2]];
    if (dm) {
      (*dm)(0, i) = a[0] ? a[0] * pw[0][a[0] - 1] * pw[1][a[1]] * pw[2][a[2]] : 0;
      (*dm)(1, i) = a[1] ? a[1] * pw[0][a[0]] * pw[1][a[1] - 1] * pw[2][a[2]] : 0;
      (*dm)(2, i) = a[2] ? a[2] * pw[0][a[0]] * pw[1][a[1]] * pw[2][a[2] - 1] : 0;
    }
  }
}

LD legendre01(int m, LD s)
{
  const LD z = 2 * s - 1;
  LD p0 = 1, p1 = z;
  if (m == 0)
    return p0;
  for (int k = 2; k <= m; ++k) {
    const LD p2 = ((2 * k - 1) * z * p1 - (k - 1) * p0) / k;
    p0 = p1;
    p1 = p2;
  }
  return p1;
}

/// Columns of `values` (sampled at points with weights w) made orthonormal in the discrete
/// inner product sum_g w_g f(x_g) g(x_g).
LMat orthonormalize_samples(const LMat& values, const std::vector<LD>& w)
{
  LMat G = values.transpose() * Eigen::Map<const LVec>(w.data(), Eigen::Index(w.size())).asDiagonal() * values;
  Eigen::LLT<LMat> llt(G);
  const LMat Linv = llt.matrixL().solve(LMat::Identity(G.rows(), G.cols()));
  return values * Linv.transpose();
}

/// Functional: sum over samples of weight . f(point).
struct Functional
{
  std::vector<LVec3> points;
  std::vector<LVec3> weights; // for scalar families only weights[.][0] is used
};

int check_degree(Family family, int degree)
{
  int cap = 0, low = 0;
  switch (family) {
  case Family::Lagrange:
    cap = max_lagrange_degree;
    low = 1;
    break;
  case Family::Nedelec:
    cap = max_nedelec_degree;
    break;
  case Family::RaviartThomas:
    cap = max_rt_degree;
    break;
  case Family::DiscontinuousP:
    cap = max_dg_degree;
    break;
  }
  if (degree < low || degree > cap)
    throw UnsupportedDegree(to_string(family) + " degree " + std::to_string(degree) +
                            " outside [" + std::to_string(low) + ", " + std::to_string(cap) +
                            "]");
  return degree;
}

} // namespace

std::string to_string(Family f)
{
  switch (f) {
  case Family::Lagrange:
    return "Lagrange";
  case Family::Nedelec:
    return "Nedelec";
  case Family::RaviartThomas:
    return "RaviartThomas";
  case Family::DiscontinuousP:
    return "DiscontinuousP";
  }
  return "?";
}

int dimension(Family family, int p)
{
  switch (family) {
  case Family::Lagrange:
  case Family::DiscontinuousP:
    return (p + 1) * (p + 2) * (p + 3) / 6;
  case Family::Nedelec:
    return (p + 1) * (p + 3) * (p + 4) / 2;
  case Family::RaviartThomas:
    return (p + 1) * (p + 2) * (p + 4) / 2;
  }
  return 0;
}

ReferenceElement::ReferenceElement(Family family, int degree)
  : family_(family), degree_(check_degree(family, degree))
{
  const int p = degree;
  const bool vector = family == Family::Nedelec || family == Family::RaviartThomas;
  value_size_ = vector ? 3 : 1;
  poly_degree_ = vector ? p + 1 : p;
  exps_ = monomials(poly_degree_);
  const int nm = int(exps_.size());
  n_shape_ = dimension(family, p);

  // spanning set, one coefficient column per function
  std::vector<LVec> span;
  auto unit = [&](int comp, int mono) {
    LVec v = LVec::Zero(value_size_ * nm);
    v[comp * nm + mono] = 1;
    return v;
  };
  const int n_low = vector ? (p + 1) * (p + 2) * (p + 3) / 6 : nm; // dim P_p
  for (int c = 0; c < value_size_; ++c)
    for (int i = 0; i < n_low; ++i)
      span.push_back(unit(c, i));

  if (family == Family::Nedelec) {
    // y x (y^a e_i), |a| = p; keep a maximal independent subset (integer data, so the
    // Gram-Schmidt test is exact up to rounding)
    std::vector<LVec> ortho;
    const int first_p = p * (p + 1) * (p + 2) / 6;
    for (int i = first_p; i < n_low; ++i)
      for (int comp = 0; comp < 3; ++comp) {
        LVec v = LVec::Zero(3 * nm);
        // (y x e_comp)_out = eps_{out, j, comp} y_j
        for (int out = 0; out < 3; ++out)
          for (int j = 0; j < 3; ++j) {
            int sign = 0;
            if ((out + 1) % 3 == j && (j + 1) % 3 == comp)
              sign = 1;
            else if ((out + 2) % 3 == j && (j + 2) % 3 == comp)
              sign = -1;
            if (!sign)
              continue;
            auto a = exps_[i];
            ++a[j];
            v[out * nm + monomial_index(exps_, a)] += sign;
          }
        LVec r = v;
        for (const auto& o : ortho)
          r -= o.dot(r) * o;
        const LD nr = r.norm();
        if (nr > 1e-8L * v.norm()) {
          ortho.push_back(r / nr);
          span.push_back(v);
        }
      }
  }
  else if (family == Family::RaviartThomas) {
    const int first_p = p * (p + 1) * (p + 2) / 6;
    for (int i = first_p; i < n_low; ++i) {
      LVec v = LVec::Zero(3 * nm);
      for (int c = 0; c < 3; ++c) {
        auto a = exps_[i];
        ++a[c];
        v[c * nm + monomial_index(exps_, a)] = 1;
      }
      span.push_back(v);
    }
  }
  if (int(span.size()) != n_shape_)
    throw UnsupportedDegree("internal: spanning set of size " + std::to_string(span.size()) +
                            " for " + to_string(family) + " " + std::to_string(p));

  LMat S(value_size_ * nm, n_shape_);
  for (int j = 0; j < n_shape_; ++j)
    S.col(j) = span[j];

  // orthonormalize in L2 of the reference cell
  const auto qr = detail::collapsed_tet_rule<LD>(2 * poly_degree_);
  LMat Mm = LMat::Zero(nm, nm);
  LVec mv;
  for (std::size_t g = 0; g < qr.weights.size(); ++g) {
    const LVec3 x(qr.points[g][0], qr.points[g][1], qr.points[g][2]);
    eval_monomials(exps_, poly_degree_, x, mv, nullptr);
    Mm.noalias() += qr.weights[g] * mv * mv.transpose();
  }
  LMat Mfull = LMat::Zero(value_size_ * nm, value_size_ * nm);
  for (int c = 0; c < value_size_; ++c)
    Mfull.block(c * nm, c * nm, nm, nm) = Mm;
  const LMat G = S.transpose() * Mfull * S;
  Eigen::LLT<LMat> llt(G);
  const LMat Linv = llt.matrixL().solve(LMat::Identity(n_shape_, n_shape_));
  const LMat B = S * Linv.transpose();

  // dof functionals
  std::vector<Functional> fun;
  entity_dofs_ = {0, 0, 0, 0};
  auto point_value = [&](const LVec3& x) {
    Functional f;
    f.points.push_back(x);
    f.weights.push_back(LVec3(1, 0, 0));
    return f;
  };

  if (family == Family::Lagrange) {
    const int k = p;
    entity_dofs_ = {1, k - 1, (k - 1) * (k - 2) / 2, (k - 1) * (k - 2) * (k - 3) / 6};
    for (int v = 0; v < 4; ++v)
      fun.push_back(point_value(ref_vertices[v]));
    for (const auto& e : local_edges) {
      const LVec3 t = ref_vertices[e[1]] - ref_vertices[e[0]];
      for (int m = 1; m < k; ++m)
        fun.push_back(point_value(ref_vertices[e[0]] + (LD(m) / k) * t));
    }
    for (const auto& f : local_faces) {
      const LVec3 t1 = ref_vertices[f[1]] - ref_vertices[f[0]];
      const LVec3 t2 = ref_vertices[f[2]] - ref_vertices[f[0]];
      for (int a = 1; a < k; ++a)
        for (int b = 1; a + b < k; ++b)
          fun.push_back(point_value(ref_vertices[f[0]] + (LD(a) / k) * t1 + (LD(b) / k) * t2));
    }
    for (int a = 1; a < k; ++a)
      for (int b = 1; a + b < k; ++b)
        for (int c = 1; a + b + c < k; ++c)
          fun.push_back(point_value(LVec3(LD(a) / k, LD(b) / k, LD(c) / k)));
  }
  else if (family == Family::DiscontinuousP) {
    entity_dofs_ = {0, 0, 0, n_shape_};
    const auto rule = detail::collapsed_tet_rule<LD>(2 * p);
    for (int i = 0; i < n_shape_; ++i) {
      Functional f;
      for (std::size_t g = 0; g < rule.weights.size(); ++g) {
        const LVec3 x(rule.points[g][0], rule.points[g][1], rule.points[g][2]);
        eval_monomials(exps_, poly_degree_, x, mv, nullptr);
        f.points.push_back(x);
        f.weights.push_back(LVec3(rule.weights[g] * B.col(i).dot(mv), 0, 0));
      }
      fun.push_back(std::move(f));
    }
  }
  else {
    const bool ned = family == Family::Nedelec;
    // face moments against P_{p-1} (Nedelec, both tangents) or P_p (RT, normal)
    const int face_deg = ned ? p - 1 : p;
    const int n_face_poly = face_deg >= 0 ? (face_deg + 1) * (face_deg + 2) / 2 : 0;
    const int n_int_poly = ned ? (p >= 2 ? (p - 1) * p * (p + 1) / 6 : 0)
                               : (p >= 1 ? p * (p + 1) * (p + 2) / 6 : 0);
    entity_dofs_ = {0, ned ? p + 1 : 0, ned ? 2 * n_face_poly : n_face_poly, 3 * n_int_poly};

    if (ned) {
      const auto lr = [&] {
        std::vector<LD> x, w;
        detail::gauss_legendre01<LD>(p + 2, x, w);
        return std::pair(x, w);
      }();
      for (const auto& e : local_edges) {
        const LVec3 t = ref_vertices[e[1]] - ref_vertices[e[0]];
        for (int m = 0; m <= p; ++m) {
          Functional f;
          for (std::size_t g = 0; g < lr.first.size(); ++g) {
            const LD s = lr.first[g];
            f.points.push_back(ref_vertices[e[0]] + s * t);
            f.weights.push_back(lr.second[g] * std::sqrt(LD(2 * m + 1)) * legendre01(m, s) * t);
          }
          fun.push_back(std::move(f));
        }
      }
    }
    if (face_deg >= 0) {
      const auto tr = detail::collapsed_tri_rule<LD>(2 * p + 2);
      std::vector<std::array<int, 2>> fexp;
      for (int d = 0; d <= face_deg; ++d)
        for (int a = d; a >= 0; --a)
          fexp.push_back({a, d - a});
      LMat fq(tr.weights.size(), fexp.size());
      for (std::size_t g = 0; g < tr.weights.size(); ++g)
        for (std::size_t j = 0; j < fexp.size(); ++j)
          fq(g, j) = std::pow(tr.points[g][0] - 1.0L / 3, fexp[j][0]) *
                     std::pow(tr.points[g][1] - 1.0L / 3, fexp[j][1]);
      fq = orthonormalize_samples(fq, tr.weights);
      for (const auto& fc : local_faces) {
        const LVec3 t1 = ref_vertices[fc[1]] - ref_vertices[fc[0]];
        const LVec3 t2 = ref_vertices[fc[2]] - ref_vertices[fc[0]];
        const LVec3 nrm = t1.cross(t2);
        for (std::size_t j = 0; j < fexp.size(); ++j) {
          const int n_dir = ned ? 2 : 1;
          for (int dir = 0; dir < n_dir; ++dir) {
            const LVec3 d = ned ? (dir == 0 ? t1 : t2) : nrm;
            Functional f;
            for (std::size_t g = 0; g < tr.weights.size(); ++g) {
              const LD s = tr.points[g][0], t = tr.points[g][1];
              f.points.push_back(ref_vertices[fc[0]] + s * t1 + t * t2);
              f.weights.push_back(tr.weights[g] * fq(g, j) * d);
            }
            fun.push_back(std::move(f));
          }
        }
      }
    }
    if (n_int_poly > 0) {
      const int int_deg = ned ? p - 2 : p - 1;
      const auto rule = detail::collapsed_tet_rule<LD>(2 * p + 2);
      const auto iexp = monomials(int_deg);
      LMat iq(rule.weights.size(), iexp.size());
      for (std::size_t g = 0; g < rule.weights.size(); ++g) {
        const LVec3 x(rule.points[g][0], rule.points[g][1], rule.points[g][2]);
        eval_monomials(iexp, int_deg, x, mv, nullptr);
        iq.row(g) = mv.transpose();
      }
      iq = orthonormalize_samples(iq, rule.weights);
      for (std::size_t j = 0; j < iexp.size(); ++j)
        for (int c = 0; c < 3; ++c) {
          Functional f;
          for (std::size_t g = 0; g < rule.weights.size(); ++g) {
            LVec3 w = LVec3::Zero();
            w[c] = rule.weights[g] * iq(g, j);
            f.points.emplace_back(rule.points[g][0], rule.points[g][1], rule.points[g][2]);
            f.weights.push_back(w);
          }
          fun.push_back(std::move(f));
        }
    }
  }
  if (int(fun.size()) != n_shape_)
    throw UnsupportedDegree("internal: " + std::to_string(fun.size()) + " functionals for " +
                            to_string(family) + " " + std::to_string(p));

  // functionals share sample points; evaluate the orthonormal basis once per distinct point
  std::map<std::array<LD, 3>, int> point_id;
  std::vector<LVec3> pts;
  std::vector<std::vector<std::pair<int, LVec3>>> rows(n_shape_);
  for (int i = 0; i < n_shape_; ++i)
    for (std::size_t g = 0; g < fun[i].points.size(); ++g) {
      const auto& x = fun[i].points[g];
      auto [it, inserted] = point_id.try_emplace({x[0], x[1], x[2]}, int(pts.size()));
      if (inserted)
        pts.push_back(x);
      rows[i].emplace_back(it->second, fun[i].weights[g]);
    }
  const int np = int(pts.size());
  LMat V(value_size_ * np, n_shape_);
  for (int g = 0; g < np; ++g) {
    eval_monomials(exps_, poly_degree_, pts[g], mv, nullptr);
    for (int c = 0; c < value_size_; ++c)
      V.row(value_size_ * g + c) = mv.transpose() * B.middleRows(c * nm, nm);
  }
  LMat W = LMat::Zero(n_shape_, value_size_ * np);
  for (int i = 0; i < n_shape_; ++i)
    for (const auto& [g, w] : rows[i])
      for (int c = 0; c < value_size_; ++c)
        W(i, value_size_ * g + c) += w[c];

  // dual basis
  const LMat D = W * V;
  Eigen::FullPivLU<LMat> lu(D);
  coef_ = B * lu.solve(LMat::Identity(n_shape_, n_shape_));

  dof_points_.reserve(np);
  for (const auto& x : pts)
    dof_points_.emplace_back(double(x[0]), double(x[1]), double(x[2]));
  dof_weights_ = W.cast<double>();
}

int ReferenceElement::first_dof(int entity_dim, int local_entity) const
{
  static constexpr std::array<int, 4> count{4, 6, 4, 1};
  int off = 0;
  for (int d = 0; d < entity_dim; ++d)
    off += count[d] * entity_dofs_[d];
  return off + local_entity * entity_dofs_[entity_dim];
}

void ReferenceElement::evaluate_ld(const Eigen::Vector3d& xhat, Eigen::MatrixXd& values,
                                   Eigen::MatrixXd* derivs) const
{
  const int nm = int(exps_.size());
  LVec m;
  LMat dm;
  eval_monomials(exps_, poly_degree_, xhat.cast<LD>(), m, derivs ? &dm : nullptr);
  values.resize(value_size_, n_shape_);
  for (int c = 0; c < value_size_; ++c)
    values.row(c) = (m.transpose() * coef_.middleRows(c * nm, nm)).cast<double>();
  if (!derivs)
    return;
  if (value_size_ == 1) {
    derivs->resize(3, n_shape_);
    *derivs = (dm * coef_).cast<double>();
    return;
  }
  // partial derivatives d_j v_c as rows of (3 x n) per component
  std::array<LMat, 3> dv;
  for (int c = 0; c < 3; ++c)
    dv[c] = dm * coef_.middleRows(c * nm, nm);
  if (family_ == Family::Nedelec) {
    derivs->resize(3, n_shape_);
    derivs->row(0) = (dv[2].row(1) - dv[1].row(2)).cast<double>();
    derivs->row(1) = (dv[0].row(2) - dv[2].row(0)).cast<double>();
    derivs->row(2) = (dv[1].row(0) - dv[0].row(1)).cast<double>();
  }
  else {
    derivs->resize(1, n_shape_);
    derivs->row(0) = (dv[0].row(0) + dv[1].row(1) + dv[2].row(2)).cast<double>();
  }
}

void ReferenceElement::evaluate(const Eigen::Vector3d& xhat, Eigen::MatrixXd& values,
                                Eigen::MatrixXd* derivs) const
{
  evaluate_ld(xhat, values, derivs);
}

const Tabulation& ReferenceElement::tabulate(const QuadratureRule& rule) const
{
  std::lock_guard lock(cache_mutex_);
  auto& slot = tabulations_[rule.order];
  if (!slot) {
    auto tab = std::make_unique<Tabulation>();
    tab->values.resize(rule.size());
    tab->derivs.resize(rule.size());
    for (std::size_t g = 0; g < rule.size(); ++g)
      evaluate_ld(rule.points[g], tab->values[g], &tab->derivs[g]);
    slot = std::move(tab);
  }
  return *slot;
}

Eigen::VectorXd ReferenceElement::interpolate(
  const std::function<Eigen::VectorXd(const Eigen::Vector3d&)>& f) const
{
  Eigen::VectorXd samples(value_size_ * Eigen::Index(dof_points_.size()));
  for (std::size_t g = 0; g < dof_points_.size(); ++g)
    samples.segment(value_size_ * Eigen::Index(g), value_size_) = f(dof_points_[g]);
  return dof_weights_ * samples;
}

double ReferenceElement::unisolvence_defect() const
{
  Eigen::MatrixXd samples(value_size_ * Eigen::Index(dof_points_.size()), n_shape_);
  Eigen::MatrixXd v;
  for (std::size_t g = 0; g < dof_points_.size(); ++g) {
    evaluate(dof_points_[g], v);
    samples.middleRows(value_size_ * Eigen::Index(g), value_size_) = v;
  }
  const Eigen::MatrixXd D = dof_weights_ * samples;
  return (D - Eigen::MatrixXd::Identity(n_shape_, n_shape_)).cwiseAbs().maxCoeff();
}

const ReferenceElement& reference_element(Family family, int degree)
{
  check_degree(family, degree);
  static std::map<std::pair<int, int>, std::unique_ptr<ReferenceElement>> cache;
  static std::mutex mutex;
  std::lock_guard lock(mutex);
  auto& slot = cache[{int(family), degree}];
  if (!slot)
    slot = std::make_unique<ReferenceElement>(family, degree);
  return *slot;
}

} // namespace curlcurl::fe
