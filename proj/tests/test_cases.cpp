#include <doctest.h>

#include "curlcurl/cases.hpp"
#include "curlcurl/error.hpp"
#include "curlcurl/fe_space.hpp"

#include <cmath>
#include <numbers>
#include <random>

using namespace curlcurl;
using namespace curlcurl::cases;

namespace {

constexpr double pi = std::numbers::pi;

/// Central-difference curl of a field.
Vec3 fd_curl(const VectorField& f, const Vec3& x, double h = 1e-5)
{
  Eigen::Matrix3d D; // D(i, j) = d f_i / d x_j
  for (int j = 0; j < 3; ++j) {
    const Vec3 e = h * Vec3::Unit(j);
    D.col(j) = (f(x + e) - f(x - e)) / (2 * h);
  }
  return {D(2, 1) - D(1, 2), D(0, 2) - D(2, 0), D(1, 0) - D(0, 1)};
}

double integrate_over_mesh(const mesh::MeshTopology& m, const std::function<double(const Vec3&)>& f,
                           int order)
{
  const auto& rule = fe::tet_quadrature(order);
  double s = 0;
  for (int K = 0; K < m.n_tets(); ++K) {
    const auto map = fe::cell_map(m, K);
    for (std::size_t g = 0; g < rule.size(); ++g)
      s += rule.weights[g] * std::abs(map.det) * f(map.to_physical(rule.points[g]));
  }
  return s;
}

/// Reference-cell points and weights of a composite rule: sub-cells whose radial range
/// r = |(x1, x2)| contains a knot of J are split into 8 until `depth` is exhausted;
/// sub-cells get a lower-order rule.
template <class F>
void composite_rule(const fe::CellMap& map, const std::array<Vec3, 4>& v, int depth,
                    const std::vector<double>& knots, F&& visit, int level = 0)
{
  // r is convex: its max over the cell is at a vertex, its min is the distance from the
  // x3 axis to the projected hull of the vertices
  std::array<Eigen::Vector2d, 4> p;
  double rmax = 0;
  for (int i = 0; i < 4; ++i) {
    p[i] = map.to_physical(v[i]).head<2>();
    rmax = std::max(rmax, p[i].norm());
  }
  double rmin = 1e300;
  for (int i = 0; i < 4; ++i)
    for (int j = i + 1; j < 4; ++j) {
      const Eigen::Vector2d d = p[j] - p[i];
      const double t = d.squaredNorm() > 0 ? std::clamp(-p[i].dot(d) / d.squaredNorm(), 0.0, 1.0) : 0.0;
      rmin = std::min(rmin, (p[i] + t * d).norm());
    }
  auto cross = [](const Eigen::Vector2d& a, const Eigen::Vector2d& b) { return a[0] * b[1] - a[1] * b[0]; };
  for (int i = 0; i < 4; ++i)
    for (int j = i + 1; j < 4; ++j)
      for (int k = j + 1; k < 4; ++k) {
        const double s1 = cross(p[j] - p[i], -p[i]), s2 = cross(p[k] - p[j], -p[j]),
                     s3 = cross(p[i] - p[k], -p[k]);
        if ((s1 >= 0 && s2 >= 0 && s3 >= 0) || (s1 <= 0 && s2 <= 0 && s3 <= 0))
          rmin = 0;
      }
  bool straddles = false;
  for (double k : knots)
    straddles |= rmin < k && k < rmax;
  if (depth == 0 || !straddles) {
    const auto& rule = fe::tet_quadrature(level == 0 ? 16 : 8);
    Eigen::Matrix3d B;
    for (int i = 0; i < 3; ++i)
      B.col(i) = v[i + 1] - v[0];
    const double det = std::abs(B.determinant());
    for (std::size_t g = 0; g < rule.size(); ++g)
      visit(Vec3(v[0] + B * rule.points[g]), rule.weights[g] * det);
    return;
  }
  auto m = [&](int a, int b) { return Vec3((v[a] + v[b]) / 2); };
  const Vec3 m01 = m(0, 1), m02 = m(0, 2), m03 = m(0, 3), m12 = m(1, 2), m13 = m(1, 3), m23 = m(2, 3);
  const std::array<std::array<Vec3, 4>, 8> kids{{{v[0], m01, m02, m03},
                                                 {m01, v[1], m12, m13},
                                                 {m02, m12, v[2], m23},
                                                 {m03, m13, m23, v[3]},
                                                 {m01, m02, m03, m13},
                                                 {m01, m02, m12, m13},
                                                 {m02, m03, m13, m23},
                                                 {m02, m12, m13, m23}}};
  for (const auto& k : kids)
    composite_rule(map, k, depth - 1, knots, visit, level + 1);
}

/// max |(J, grad q)| / (||J|| ||grad q||) over random q in Lagrange(2) vanishing on the
/// Dirichlet boundary. grad q is affine per cell, so only the moments of J against 1 and
/// xhat are needed; `depth` refines their quadrature around the radial knots of J.
double gradient_orthogonality(const CaseDefinition& c, int n, int trials, int depth = 0)
{
  auto m = std::make_shared<const mesh::MeshTopology>(c.mesh_builder(n));
  auto space = fe::make_space(m, fe::Family::Lagrange, 2, fe::Essential::Dirichlet);
  std::mt19937 rng(7);
  std::uniform_real_distribution<double> u(-1, 1);
  const std::array<Vec3, 4> ref{Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0), Vec3(0, 0, 1)};
  const std::vector<Vec3> corners(ref.begin(), ref.end());
  std::vector<Vec3> m0(m->n_tets());
  std::vector<Eigen::Matrix3d> m1(m->n_tets());
  double jj = 0;
  for (int K = 0; K < m->n_tets(); ++K) {
    const auto map = fe::cell_map(*m, K);
    m0[K].setZero();
    m1[K].setZero();
    composite_rule(map, ref, depth, {0.25, 0.75}, [&](const Vec3& xhat, double wref) {
      const double w = wref * std::abs(map.det);
      const Vec3 j = c.J(map.to_physical(xhat));
      m0[K] += w * j;
      m1[K] += w * j * xhat.transpose();
      jj += w * j.squaredNorm();
    });
  }
  const auto& rule2 = fe::tet_quadrature(2);
  double worst = 0;
  for (int t = 0; t < trials; ++t) {
    fe::DiscreteField q(space);
    for (int i = 0; i < space->n_dofs(); ++i)
      if (!space->dofs.constrained()[i])
        q.coeffs[i] = u(rng);
    double jg = 0, gg = 0;
    for (int K = 0; K < m->n_tets(); ++K) {
      const auto map = fe::cell_map(*m, K);
      // grad q = g0 + G xhat
      const auto gv = fe::evaluate_field(q, K, corners, fe::Quantity::Grad);
      const Vec3 g0 = gv.col(0);
      Eigen::Matrix3d G;
      for (int i = 0; i < 3; ++i)
        G.col(i) = gv.col(i + 1) - g0;
      jg += m0[K].dot(g0) + m1[K].cwiseProduct(G).sum();
      const auto gr = fe::evaluate_field(q, K, rule2.points, fe::Quantity::Grad);
      for (std::size_t g = 0; g < rule2.size(); ++g)
        gg += rule2.weights[g] * std::abs(map.det) * gr.col(g).squaredNorm();
    }
    worst = std::max(worst, std::abs(jg) / std::sqrt(jj * gg));
  }
  return worst;
}

} // namespace

TEST_CASE("cube data at sample points")
{
  const auto c = smooth_cube_case();
  const Vec3 a = (*c.A)(Vec3(0, 0.5, 0.5));
  CHECK(a[0] == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(std::abs(a[1]) < 1e-15);
  CHECK(std::abs(a[2]) < 1e-15);
  CHECK(std::abs(c.J(Vec3(0.5, 0.25, 0.25))[0]) < 1e-14);
  CHECK(c.convex);
}

TEST_CASE("cube: closed-form curl and J agree with finite differences")
{
  const auto c = smooth_cube_case();
  std::mt19937 rng(3);
  std::uniform_real_distribution<double> u(0.05, 0.95);
  for (int i = 0; i < 10; ++i) {
    const Vec3 x(u(rng), u(rng), u(rng));
    CHECK((fd_curl(*c.A, x) - (*c.curl_A)(x)).norm() < 1e-8);
    const Vec3 cc = fd_curl(*c.curl_A, x, 1e-4);
    CHECK((cc - c.J(x)).norm() < 1e-5 * c.J(x).norm() + 1e-6);
  }
}

TEST_CASE("cube: energy of curl A")
{
  // |curl A|^2 integrates to pi^2 (1/8 + 1/8 + 4/8) = 3 pi^2 / 4
  const auto c = smooth_cube_case();
  const auto m = mesh::unit_cube_mesh(2);
  const double e = integrate_over_mesh(m, [&](const Vec3& x) { return (*c.curl_A)(x).squaredNorm(); }, 30);
  CHECK(e == doctest::Approx(3 * pi * pi / 4).epsilon(1e-10));
}

TEST_CASE("cutoff continuity at the knots")
{
  const double eps = 1e-15;
  for (double knot : {0.25, 0.75}) {
    const auto lo = cutoff(knot - eps), hi = cutoff(knot + eps);
    for (int d = 0; d < 3; ++d)
      CHECK(std::abs(lo[d] - hi[d]) <= 1e-12);
  }
  CHECK(cutoff(0.25)[0] == 1.0);
  CHECK(cutoff(0.75)[0] == doctest::Approx(0.0));
  // monotone bridge
  double prev = 1;
  for (int i = 1; i <= 100; ++i) {
    const double v = cutoff(0.25 + 0.5 * i / 100)[0];
    CHECK(v <= prev + 1e-15);
    prev = v;
  }
  // derivatives against finite differences
  for (double r : {0.3, 0.5, 0.61, 0.7}) {
    const double h = 1e-6;
    CHECK((cutoff(r + h)[0] - cutoff(r - h)[0]) / (2 * h) == doctest::Approx(cutoff(r)[1]).epsilon(1e-6));
    CHECK((cutoff(r + h)[1] - cutoff(r - h)[1]) / (2 * h) == doctest::Approx(cutoff(r)[2]).epsilon(1e-6));
  }
}

TEST_CASE("ltype: exponent, zeros and harmonic core")
{
  const auto c = ltype_case(pi / 2);
  // alpha = pi / (3pi/2) = 2/3: s(r, theta) on the ray theta = 0 with r in the core
  const double r = 0.2;
  const Vec3 x(r * std::cos(pi / 4), r * std::sin(pi / 4), 0.5);
  CHECK((*c.A)(x)[2] == doctest::Approx(std::pow(r, 2.0 / 3) * std::sin(2.0 / 3 * pi / 4)).epsilon(1e-14));

  // s vanishes on the cut faces theta = 0 and theta = 2pi - phi
  for (double phi : {3 * pi / 4, pi / 2, pi / 8}) {
    const auto cc = ltype_case(phi);
    for (double rr : {0.1, 0.4, 0.6}) {
      CHECK(std::abs((*cc.A)(Vec3(rr, 0, 0.3))[2]) < 1e-14);
      const double th = 2 * pi - phi;
      CHECK(std::abs((*cc.A)(Vec3(rr * std::cos(th), rr * std::sin(th), 0.3))[2]) < 1e-12);
    }
    // J = 0 where chi = 1 or chi = 0
    CHECK(cc.J(Vec3(0.1, 0.1, 0.5)).norm() == 0.0);
    CHECK(cc.J(Vec3(0.9, 0.9, 0.5)).norm() == 0.0);
  }
}

TEST_CASE("ltype: curl and J agree with finite differences")
{
  for (double phi : {3 * pi / 4, pi / 2, pi / 8}) {
    const auto c = ltype_case(phi);
    for (double th : {0.3, 1.7, 3.1, 4.0}) {
      if (th >= 2 * pi - phi)
        continue;
      for (double r : {0.3, 0.45, 0.6, 0.8}) {
        const Vec3 x(r * std::cos(th), r * std::sin(th), 0.4);
        CHECK((fd_curl(*c.A, x) - (*c.curl_A)(x)).norm() < 1e-7);
        CHECK((fd_curl(*c.curl_A, x, 1e-4) - c.J(x)).norm() < 1e-4);
      }
    }
  }
}

TEST_CASE("ltype: bad angle")
{
  CHECK_THROWS_AS(ltype_case(0.0), BadAngle);
  CHECK_THROWS_AS(ltype_case(2 * pi), BadAngle);
  CHECK_THROWS_AS(ltype_mesh(-1.0, 2), BadAngle);
}

TEST_CASE("ltype mesh: conforming, area of L times 1")
{
  for (double phi : {3 * pi / 4, pi / 2, pi / 8}) {
    // the removed sector of the square (2pi - phi < theta < 2pi) has area
    // phi <= pi/4: tan(phi)/2; else below.
    double removed;
    if (phi <= pi / 4)
      removed = std::tan(phi) / 2;
    else if (phi <= 3 * pi / 4)
      removed = 0.5 + (phi <= pi / 2 ? 0.5 - std::tan(pi / 2 - phi) / 2 : 0.5 + std::tan(phi - pi / 2) / 2);
    else
      removed = 1.5 + 0.5 - std::tan(pi - phi) / 2;
    const auto m = ltype_mesh(phi, 2);
    const auto rep = mesh::check_conformity(m);
    CHECK(rep.ok);
    CHECK(rep.volume == doctest::Approx(4 - removed).epsilon(1e-12));
    // the reentrant edge is an edge of the mesh
    bool found = false;
    for (const auto& e : m.edges) {
      const Vec3 a = m.vertices[e[0]], b = m.vertices[e[1]];
      if (a.head<2>().norm() < 1e-14 && b.head<2>().norm() < 1e-14)
        found = true;
    }
    CHECK(found);
  }
}

TEST_CASE("fichera: volume and data")
{
  const auto c = fichera_case();
  const auto m = c.mesh_builder(1);
  const auto rep = mesh::check_conformity(m);
  CHECK(rep.ok);
  CHECK(rep.volume == doctest::Approx(7.0).epsilon(1e-12));
  CHECK(!c.A.has_value());
  CHECK((c.J(Vec3(0.3, -0.2, 0.9)) - Vec3(1, 1, 0)).norm() == 0.0);
}

TEST_CASE("J is orthogonal to discrete gradients")
{
  CHECK(gradient_orthogonality(fichera_case(), 1, 3) < 1e-8);
  CHECK(gradient_orthogonality(smooth_cube_case(), 2, 3) < 1e-8);
    // J is only C0 across r = 1/4 and r = 3/4, so the rule is refined around those circles
  CHECK(gradient_orthogonality(ltype_case(pi / 2), 2, 2, 5) < 1e-8);
}

TEST_CASE("poly case: traces and data")
{
  const auto c = polynomial_case(); // runs the trace check
  for (const Vec3& x : {Vec3(0.2, 0.3, 0.7), Vec3(0.9, 0.1, 0.4)}) {
    CHECK((fd_curl(*c.A, x) - (*c.curl_A)(x)).norm() < 1e-8);
    CHECK((fd_curl(*c.curl_A, x, 1e-4) - c.J(x)).norm() < 1e-8);
  }
  const auto m = c.mesh_builder(2);
  int neumann = 0;
  for (const auto& [f, label] : m.boundary_faces)
    if (label == mesh::BoundaryLabel::Neumann) {
      ++neumann;
      for (int v : m.faces[f])
        CHECK((m.vertices[v][2] == 0.0 || m.vertices[v][2] == 1.0));
    }
  CHECK(neumann == 2 * 2 * 2 * 2);
}

TEST_CASE("case lookup")
{
  for (const auto& name : case_names())
    CHECK(case_by_name(name).name == name);
  CHECK_THROWS_AS(case_by_name("sphere"), InvalidConfig);
}
