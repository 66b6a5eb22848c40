#include "curlcurl/cases.hpp"

#include "curlcurl/error.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>

namespace curlcurl::cases {

namespace {

constexpr double pi = std::numbers::pi;

mesh::BoundaryLabel all_dirichlet(const std::array<Vec3, 3>&)
{
  return mesh::BoundaryLabel::Dirichlet;
}

/// Polar angle in [0, 2pi).
double angle(double x, double y)
{
  double t = std::atan2(y, x);
  if (t < 0)
    t += 2 * pi;
  return t;
}

} // namespace

CaseDefinition smooth_cube_case()
{
  CaseDefinition c;
  c.name = "cube";
  c.convex = true;
  c.mesh_builder = [](int n) { return mesh::unit_cube_mesh(n); };
  c.boundary = all_dirichlet;
  auto A = [](const Vec3& x) -> Vec3 {
    const double c1 = std::cos(pi * x[0]), c2 = std::cos(pi * x[1]), s1 = std::sin(pi * x[0]),
                 s2 = std::sin(pi * x[1]), s3 = std::sin(pi * x[2]);
    return {c1 * s2 * s3, -s1 * c2 * s3, 0.0};
  };
  c.A = A;
  // -Laplace A = 3 pi^2 A and div A = 0
  c.J = [A](const Vec3& x) -> Vec3 { return 3 * pi * pi * A(x); };
  c.curl_A = [](const Vec3& x) -> Vec3 {
    const double c1 = std::cos(pi * x[0]), c2 = std::cos(pi * x[1]), c3 = std::cos(pi * x[2]);
    const double s1 = std::sin(pi * x[0]), s2 = std::sin(pi * x[1]), s3 = std::sin(pi * x[2]);
    return {pi * s1 * c2 * c3, pi * c1 * s2 * c3, -2 * pi * c1 * c2 * s3};
  };
  return c;
}

std::array<double, 3> cutoff(double r)
{
  if (r <= 0.25)
    return {1.0, 0.0, 0.0};
  if (r >= 0.75)
    return {0.0, 0.0, 0.0};
  // chi = 1 - P(t), P(t) = 10t^3 - 15t^4 + 6t^5, t = (r - 1/4) / (1/2)
  const double t = (r - 0.25) / 0.5;
  const double P = t * t * t * (10 + t * (-15 + 6 * t));
  const double dP = 30 * t * t * (1 - t) * (1 - t);
  const double ddP = 60 * t * (1 - t) * (1 - 2 * t);
  return {1 - P, -2 * dP, -4 * ddP};
}

std::vector<Eigen::Vector2d> ltype_polygon(double phi)
{
  const double end = 2 * pi - phi;
  std::vector<std::pair<double, Eigen::Vector2d>> pts;
  pts.emplace_back(0.0, Eigen::Vector2d(1, 0));
  const std::array<Eigen::Vector2d, 7> candidates{
    Eigen::Vector2d(1, 1), Eigen::Vector2d(0, 1), Eigen::Vector2d(-1, 1), Eigen::Vector2d(-1, 0),
    Eigen::Vector2d(-1, -1), Eigen::Vector2d(0, -1), Eigen::Vector2d(1, -1)};
  for (const auto& p : candidates) {
    const double t = angle(p[0], p[1]);
    if (t < end - 1e-12)
      pts.emplace_back(t, p);
  }
  // where the ray theta = 2pi - phi leaves the square
  const Eigen::Vector2d d(std::cos(end), std::sin(end));
  const Eigen::Vector2d exit = d / std::max(std::abs(d[0]), std::abs(d[1]));
  pts.emplace_back(end, exit);
  std::sort(pts.begin(), pts.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  std::vector<Eigen::Vector2d> out;
  for (const auto& [t, p] : pts)
    out.push_back(p);
  return out;
}

mesh::MeshTopology ltype_mesh(double phi, int n)
{
  if (!(phi > 0 && phi < 2 * pi))
    throw BadAngle("phi must lie in (0, 2pi)");
  if (n < 1)
    throw InvalidConfig("ltype mesh needs n >= 1");
  const auto poly = ltype_polygon(phi);

  // 2D vertices, merged along the shared fan rays by rounded coordinates
  std::map<std::array<long long, 2>, int> index;
  std::vector<Eigen::Vector2d> pts;
  auto vertex = [&](const Eigen::Vector2d& p) {
    const std::array<long long, 2> key{std::llround(p[0] * 1e9), std::llround(p[1] * 1e9)};
    auto [it, fresh] = index.emplace(key, int(pts.size()));
    if (fresh)
      pts.push_back(p);
    return it->second;
  };
  // fan from the origin; a last sector narrower than 30 degrees is merged with its neighbor
  // and the quadrilateral is cut along the other diagonal, which keeps the cells fat
  std::vector<std::array<Eigen::Vector2d, 3>> coarse;
  const Eigen::Vector2d o = Eigen::Vector2d::Zero();
  for (std::size_t f = 0; f + 1 < poly.size(); ++f)
    coarse.push_back({o, poly[f], poly[f + 1]});
  auto cross = [](const Eigen::Vector2d& u, const Eigen::Vector2d& v) { return u[0] * v[1] - u[1] * v[0]; };
  const std::size_t m = poly.size();
  if (m >= 3) {
    const Eigen::Vector2d A = poly[m - 3], C = poly[m - 2], E = poly[m - 1];
    const double last = std::atan2(cross(C, E), C.dot(E));
    const bool convex_at_c = cross(C - A, E - C) > 0 && cross(A, E) > 0;
    if (last < pi / 6 && convex_at_c) {
      coarse.resize(coarse.size() - 2);
      coarse.push_back({o, A, E});
      coarse.push_back({A, C, E});
    }
  }
  std::vector<std::array<int, 3>> tris;
  for (const auto& [P0, P, Q] : coarse) {
    auto lattice = [&](int i, int j) { return vertex(P0 + (i * (P - P0) + j * (Q - P0)) / double(n)); };
    for (int i = 0; i < n; ++i)
      for (int j = 0; i + j < n; ++j) {
        tris.push_back({lattice(i, j), lattice(i + 1, j), lattice(i, j + 1)});
        if (i + j + 2 <= n)
          tris.push_back({lattice(i + 1, j), lattice(i + 1, j + 1), lattice(i, j + 1)});
      }
  }

  const int n2 = int(pts.size());
  std::vector<Eigen::Vector3d> x;
  x.reserve(std::size_t(n2) * (n + 1));
  for (int k = 0; k <= n; ++k)
    for (const auto& p : pts)
      x.emplace_back(p[0], p[1], double(k) / n);

  // each quad side (u < v) is cut from the bottom of u to the top of v, which is consistent
  // between neighboring prisms
  std::vector<mesh::Tet> tets;
  for (int k = 0; k < n; ++k)
    for (auto t : tris) {
      std::sort(t.begin(), t.end());
      const int a = k * n2 + t[0], b = k * n2 + t[1], c = k * n2 + t[2];
      const int a1 = a + n2, b1 = b + n2, c1 = c + n2;
      tets.push_back({a, b, c, c1});
      tets.push_back({a, b, b1, c1});
      tets.push_back({a, a1, b1, c1});
    }
  mesh::orient_positively(x, tets);
  auto labels = mesh::label_boundary(x, tets, all_dirichlet);
  return mesh::build_topology(std::move(x), std::move(tets), labels);
}

CaseDefinition ltype_case(double phi)
{
  if (!(phi > 0 && phi < 2 * pi))
    throw BadAngle("phi must lie in (0, 2pi)");
  const double alpha = pi / (2 * pi - phi);
  CaseDefinition c;
  c.name = "ltype";
  c.convex = false;
  c.mesh_builder = [phi](int n) { return ltype_mesh(phi, n); };
  c.boundary = all_dirichlet;
  c.A = [alpha](const Vec3& x) -> Vec3 {
    const double r = std::hypot(x[0], x[1]);
    const double s = cutoff(r)[0] * std::pow(r, alpha) * std::sin(alpha * angle(x[0], x[1]));
    return {0.0, 0.0, s};
  };
  // curl (0,0,s) = (ds/dx2, -ds/dx1, 0)
  c.curl_A = [alpha](const Vec3& x) -> Vec3 {
    const double r = std::hypot(x[0], x[1]);
    if (r < 1e-300)
      return Vec3::Zero();
    const double th = angle(x[0], x[1]);
    const auto [chi, dchi, ddchi] = cutoff(r);
    const double ra = std::pow(r, alpha), sn = std::sin(alpha * th), cs = std::cos(alpha * th);
    const double ds_dr = dchi * ra * sn + chi * alpha * ra / r * sn;
    const double ds_dth_r = chi * alpha * ra / r * cs;
    const double ct = x[0] / r, st = x[1] / r;
    const double dx1 = ds_dr * ct - ds_dth_r * st;
    const double dx2 = ds_dr * st + ds_dth_r * ct;
    return {dx2, -dx1, 0.0};
  };
  // J = -Laplace A; r^alpha sin(alpha theta) is harmonic
  c.J = [alpha](const Vec3& x) -> Vec3 {
    const double r = std::hypot(x[0], x[1]);
    if (r <= 0.25 || r >= 0.75)
      return Vec3::Zero();
    const auto [chi, dchi, ddchi] = cutoff(r);
    const double sn = std::sin(alpha * angle(x[0], x[1]));
    const double lap = (ddchi + dchi / r) * std::pow(r, alpha) * sn +
                       2 * dchi * alpha * std::pow(r, alpha - 1) * sn;
    return {0.0, 0.0, -lap};
  };
  return c;
}

CaseDefinition fichera_case()
{
  CaseDefinition c;
  c.name = "fichera";
  c.convex = false;
  c.mesh_builder = [](int n) {
    std::vector<std::array<int, 3>> cells;
    for (int k = 0; k < 2; ++k)
      for (int j = 0; j < 2; ++j)
        for (int i = 0; i < 2; ++i)
          if (!(i == 1 && j == 1 && k == 1))
            cells.push_back({i, j, k});
    return mesh::kuhn_mesh(cells, n, Vec3(-1, -1, -1), 1.0);
  };
  c.boundary = all_dirichlet;
  c.J = [](const Vec3&) -> Vec3 { return {1.0, 1.0, 0.0}; };
  return c;
}

CaseDefinition polynomial_case()
{
  CaseDefinition c;
  c.name = "poly";
  c.convex = true;
  auto boundary = [](const std::array<Vec3, 3>& f) {
    for (double z : {0.0, 1.0})
      if (std::abs(f[0][2] - z) < 1e-12 && std::abs(f[1][2] - z) < 1e-12 &&
          std::abs(f[2][2] - z) < 1e-12)
        return mesh::BoundaryLabel::Neumann;
    return mesh::BoundaryLabel::Dirichlet;
  };
  c.boundary = boundary;
  c.mesh_builder = [boundary](int n) { return mesh::relabel(mesh::unit_cube_mesh(n), boundary); };
  c.A = [](const Vec3& x) -> Vec3 { return {x[1] * (1 - x[1]), 0.0, 0.0}; };
  c.curl_A = [](const Vec3& x) -> Vec3 { return {0.0, 0.0, -(1 - 2 * x[1])}; };
  c.J = [](const Vec3&) -> Vec3 { return {2.0, 0.0, 0.0}; };

  // A x n = 0 on the Dirichlet faces, curl A x n = 0 on the Neumann faces
  for (int axis = 0; axis < 3; ++axis)
    for (double side : {0.0, 1.0}) {
      const Vec3 normal = Vec3::Unit(axis);
      for (int i = 0; i < 50; ++i) {
        Vec3 x;
        x[axis] = side;
        x[(axis + 1) % 3] = (i % 7 + 0.5) / 7;
        x[(axis + 2) % 3] = (i / 7 + 0.5) / 8;
        const Vec3 trace = axis == 2 ? (*c.curl_A)(x).cross(normal) : (*c.A)(x).cross(normal);
        if (trace.norm() > 1e-14)
          throw TraceCheckFailure("nonzero trace on face x" + std::to_string(axis + 1) + " = " +
                                  std::to_string(int(side)));
      }
    }
  return c;
}

std::vector<std::string> case_names()
{
  return {"cube", "ltype-3pi4", "ltype-pi2", "ltype-pi8", "fichera", "poly"};
}

CaseDefinition case_by_name(const std::string& name)
{
  CaseDefinition c;
  if (name == "cube")
    return smooth_cube_case();
  if (name == "ltype-3pi4")
    c = ltype_case(3 * pi / 4);
  else if (name == "ltype-pi2")
    c = ltype_case(pi / 2);
  else if (name == "ltype-pi8")
    c = ltype_case(pi / 8);
  else if (name == "fichera")
    return fichera_case();
  else if (name == "poly")
    return polynomial_case();
  else
    throw InvalidConfig("unknown case '" + name + "'");
  c.name = name;
  return c;
}

} // namespace curlcurl::cases
