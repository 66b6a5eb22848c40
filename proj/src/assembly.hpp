#pragma once

// Assembly helpers shared by the solver and the estimators.

#include "curlcurl/parallel.hpp"
#include "curlcurl/quadrature.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <vector>

namespace curlcurl::detail {

/// Computes per-item results in parallel batches and hands them to `scatter` in index order,
/// so reductions are deterministic.
template <class Local, class Compute, class Scatter>
void for_each_ordered(int n, Compute&& compute, Scatter&& scatter, int batch = 2048)
{
  std::vector<Local> buf;
  for (int start = 0; start < n; start += batch) {
    const int count = std::min(batch, n - start);
    buf.clear();
    buf.resize(count);
    parallel_for(count, [&](int i) { compute(start + i, buf[i]); });
    for (int i = 0; i < count; ++i)
      scatter(start + i, buf[i]);
  }
}

/// Sum of f(i) for i in [0, n) in index order, evaluated in parallel.
template <class F>
double ordered_sum(int n, F&& f)
{
  std::vector<double> part(n);
  parallel_for(n, [&](int i) { part[i] = f(i); });
  double s = 0;
  for (double v : part)
    s += v;
  return s;
}

/// Sums of w * a_i^T b_j over a tabulation, for every pair of components (i, j).
inline std::array<Eigen::MatrixXd, 9> component_moments(const fe::QuadratureRule& rule,
                                                        const std::vector<Eigen::MatrixXd>& a,
                                                        const std::vector<Eigen::MatrixXd>& b)
{
  std::array<Eigen::MatrixXd, 9> m;
  for (auto& x : m)
    x = Eigen::MatrixXd::Zero(a[0].cols(), b[0].cols());
  for (std::size_t g = 0; g < rule.size(); ++g)
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        m[3 * i + j].noalias() += rule.weights[g] * a[g].row(i).transpose() * b[g].row(j);
  return m;
}

/// sum_ij G_ij m[3i + j]
inline Eigen::MatrixXd contract(const std::array<Eigen::MatrixXd, 9>& m, const Eigen::Matrix3d& G)
{
  Eigen::MatrixXd out = G(0, 0) * m[0];
  for (int k = 1; k < 9; ++k)
    out += G(k / 3, k % 3) * m[k];
  return out;
}

} // namespace curlcurl::detail
