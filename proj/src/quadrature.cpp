#include "curlcurl/quadrature.hpp"

#include "curlcurl/error.hpp"

#include <map>
#include <memory>
#include <mutex>

namespace curlcurl::fe {

namespace {

void check_order(int order)
{
  if (order < 0 || order > max_quadrature_order)
    throw UnsupportedOrder("quadrature order " + std::to_string(order) + " outside [0, " +
                           std::to_string(max_quadrature_order) + "]");
}

template<class Rule, class Make>
const Rule& cached(std::map<int, std::unique_ptr<Rule>>& cache, std::mutex& mutex, int order,
                   Make make)
{
  check_order(order);
  std::lock_guard lock(mutex);
  auto& slot = cache[order];
  if (!slot)
    slot = std::make_unique<Rule>(make(order));
  return *slot;
}

} // namespace

const QuadratureRule& tet_quadrature(int order)
{
  static std::map<int, std::unique_ptr<QuadratureRule>> cache;
  static std::mutex mutex;
  return cached(cache, mutex, order, [](int o) {
    const auto g = detail::collapsed_tet_rule<long double>(o);
    QuadratureRule rule;
    rule.order = o;
    for (std::size_t i = 0; i < g.weights.size(); ++i) {
      rule.points.emplace_back(double(g.points[i][0]), double(g.points[i][1]),
                               double(g.points[i][2]));
      rule.weights.push_back(double(g.weights[i]));
    }
    return rule;
  });
}

const TriangleRule& triangle_quadrature(int order)
{
  static std::map<int, std::unique_ptr<TriangleRule>> cache;
  static std::mutex mutex;
  return cached(cache, mutex, order, [](int o) {
    const auto g = detail::collapsed_tri_rule<long double>(o);
    TriangleRule rule;
    rule.order = o;
    for (std::size_t i = 0; i < g.weights.size(); ++i) {
      rule.points.push_back({double(g.points[i][0]), double(g.points[i][1])});
      rule.weights.push_back(double(g.weights[i]));
    }
    return rule;
  });
}

const LineRule& line_quadrature(int order)
{
  static std::map<int, std::unique_ptr<LineRule>> cache;
  static std::mutex mutex;
  return cached(cache, mutex, order, [](int o) {
    std::vector<long double> x, w;
    detail::gauss_legendre01<long double>(o / 2 + 1, x, w);
    LineRule rule;
    rule.order = o;
    for (std::size_t i = 0; i < x.size(); ++i) {
      rule.points.push_back(double(x[i]));
      rule.weights.push_back(double(w[i]));
    }
    return rule;
  });
}

} // namespace curlcurl::fe
