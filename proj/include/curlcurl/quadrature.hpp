#pragma once

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <numbers>
#include <vector>

namespace curlcurl::fe {

/// Highest polynomial order the simplex rules are generated for.
inline constexpr int max_quadrature_order = 40;

/// Quadrature rule on the reference tetrahedron conv{0, e1, e2, e3}; weights sum to 1/6.
struct QuadratureRule
{
  int order = 0;
  std::vector<Eigen::Vector3d> points;
  std::vector<double> weights;

  std::size_t size() const { return weights.size(); }
};

/// Rule on the reference triangle conv{0, e1, e2} in (s, t) coordinates; weights sum to 1/2.
struct TriangleRule
{
  int order = 0;
  std::vector<std::array<double, 2>> points;
  std::vector<double> weights;
};

/// Gauss-Legendre rule on [0, 1]; weights sum to 1.
struct LineRule
{
  int order = 0;
  std::vector<double> points;
  std::vector<double> weights;
};

/// Returns a cached collapsed Gauss-Legendre (Stroud conical product) rule exact for total
/// degree <= order. Throws UnsupportedOrder above max_quadrature_order.
const QuadratureRule& tet_quadrature(int order);
const TriangleRule& triangle_quadrature(int order);
const LineRule& line_quadrature(int order);

namespace detail {

/// Gauss-Legendre nodes and weights on [0, 1], computed by Newton iteration in precision T.
template<class T>
void gauss_legendre01(int n, std::vector<T>& x, std::vector<T>& w)
{
  x.assign(n, T(0));
  w.assign(n, T(0));
  const T pi = std::numbers::pi_v<T>;
  for (int i = 0; i < (n + 1) / 2; ++i) {
    T z = std::cos(pi * (T(i) + T(0.75)) / (T(n) + T(0.5)));
    T dp = 0;
    for (int it = 0; it < 100; ++it) {
      T p0 = 1, p1 = z;
      for (int k = 2; k <= n; ++k) {
        const T p2 = ((2 * k - 1) * z * p1 - (k - 1) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      dp = n * (z * p1 - p0) / (z * z - 1);
      const T dz = p1 / dp;
      z -= dz;
      if (std::abs(dz) < 10 * std::numeric_limits<T>::epsilon())
        break;
    }
    // recompute derivative at the converged node
    {
      T p0 = 1, p1 = z;
      for (int k = 2; k <= n; ++k) {
        const T p2 = ((2 * k - 1) * z * p1 - (k - 1) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      dp = (n == 1) ? T(1) : n * (z * p1 - p0) / (z * z - 1);
    }
    const T wi = 2 / ((1 - z * z) * dp * dp);
    x[i] = (1 - z) / 2;
    x[n - 1 - i] = (1 + z) / 2;
    w[i] = wi / 2;
    w[n - 1 - i] = wi / 2;
  }
}

template<class T>
struct GenericTetRule
{
  std::vector<std::array<T, 3>> points;
  std::vector<T> weights;
};

template<class T>
struct GenericTriRule
{
  std::vector<std::array<T, 2>> points;
  std::vector<T> weights;
};

/// Duffy map x = u, y = v(1-u), z = w(1-u)(1-v) with Jacobian (1-u)^2 (1-v). A degree-d
/// integrand becomes degree d+2 in u, d+1 in v and d in w.
template<class T>
GenericTetRule<T> collapsed_tet_rule(int order)
{
  std::vector<T> xu, wu, xv, wv, xw, ww;
  gauss_legendre01<T>((order + 4) / 2, xu, wu);
  gauss_legendre01<T>((order + 3) / 2, xv, wv);
  gauss_legendre01<T>((order + 2) / 2, xw, ww);
  GenericTetRule<T> rule;
  for (std::size_t i = 0; i < xu.size(); ++i)
    for (std::size_t j = 0; j < xv.size(); ++j)
      for (std::size_t k = 0; k < xw.size(); ++k) {
        const T u = xu[i], v = xv[j], w = xw[k];
        rule.points.push_back({u, v * (1 - u), w * (1 - u) * (1 - v)});
        rule.weights.push_back(wu[i] * wv[j] * ww[k] * (1 - u) * (1 - u) * (1 - v));
      }
  return rule;
}

template<class T>
GenericTriRule<T> collapsed_tri_rule(int order)
{
  std::vector<T> xu, wu, xv, wv;
  gauss_legendre01<T>((order + 3) / 2, xu, wu);
  gauss_legendre01<T>((order + 2) / 2, xv, wv);
  GenericTriRule<T> rule;
  for (std::size_t i = 0; i < xu.size(); ++i)
    for (std::size_t j = 0; j < xv.size(); ++j) {
      const T u = xu[i], v = xv[j];
      rule.points.push_back({u, v * (1 - u)});
      rule.weights.push_back(wu[i] * wv[j] * (1 - u));
    }
  return rule;
}

} // namespace detail

} // namespace curlcurl::fe
