#include "curlcurl/adaptivity.hpp"

#include "curlcurl/error.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

namespace curlcurl::adaptivity {

Evaluation evaluate(const cases::CaseDefinition& c, std::shared_ptr<const mesh::MeshTopology> mesh,
                    int p, const RunOptions& options)
{
  const auto start = std::chrono::steady_clock::now();
  Evaluation out;
  out.mesh = mesh;
  const auto system = solver::assemble_curlcurl_system(mesh, p, c.J);
  out.solution = solver::solve_galerkin(system);

  auto est_options = options.estimator;
  if (options.oscillation)
    est_options.edge_oscillation = true;
  out.estimate =
    equilibration::estimate(out.solution.A_h, c.J, est_options, &out.solution.multiplier);

  auto& r = out.record;
  r.p = p;
  r.q = out.estimate.q;
  r.nr_dofs = int(system.free_u.size());
  r.h_max = mesh->h_max();
  if (c.curl_A)
    r.err = solver::energy_error(out.solution.A_h, *c.curl_A);
  else
    r.err = solver::energy_error(out.solution.A_h, solver::reference_solution(mesh, p, c.J).A_h);

  const auto& t = out.estimate.totals;
  r.eta_edge_raw = t.eta_edge_raw;
  r.eta_edge = options.oscillation ? t.eta_edge : t.c_lift * t.eta_edge_plain;
  r.eta_cell = options.oscillation ? t.eta_cell : t.c_lift * t.eta_cell_plain;
  r.osc_edge = t.osc_edge;
  r.osc_cell = t.osc_cell;
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

std::vector<int> dorfler_mark(const std::vector<std::pair<int, double>>& values, double theta)
{
  if (!(theta > 0 && theta <= 1))
    throw InvalidConfig("theta must lie in (0, 1]");
  auto sorted = values;
  std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) {
    const double ea = std::abs(a.second), eb = std::abs(b.second);
    return ea != eb ? ea > eb : a.first < b.first;
  });
  // the total is summed in the same order as the prefix, so theta = 1 is reached exactly
  double total = 0;
  for (const auto& [id, eta] : sorted)
    total += eta * eta;
  std::vector<int> marked;
  double sum = 0;
  for (const auto& [id, eta] : sorted) {
    if (sum >= theta * total)
      break;
    marked.push_back(id);
    sum += eta * eta;
  }
  std::sort(marked.begin(), marked.end());
  return marked;
}

std::vector<int> dorfler_mark(const std::vector<double>& values, double theta)
{
  std::vector<std::pair<int, double>> indexed;
  indexed.reserve(values.size());
  for (std::size_t i = 0; i < values.size(); ++i)
    indexed.emplace_back(int(i), values[i]);
  return dorfler_mark(indexed, theta);
}

std::vector<double> cell_indicators(const mesh::MeshTopology& mesh,
                                    const equilibration::Estimate& estimate, Driver driver,
                                    bool oscillation)
{
  std::vector<double> eta2(mesh.n_tets(), 0.0);
  if (driver == Driver::Edge) {
    for (const auto& e : estimate.edges) {
      const auto& cells = mesh.edge_tets[e.edge];
      const double v = e.eta * e.eta + (oscillation ? e.osc * e.osc : 0.0);
      for (int K : cells)
        eta2[K] += v / double(cells.size());
    }
  } else {
    for (const auto& c : estimate.cells)
      for (int k = 0; k < 3; ++k) {
        const double v = c.eta[k] + (oscillation ? c.osc[k] : 0.0);
        eta2[c.cell] += v * v;
      }
  }
  for (auto& v : eta2)
    v = std::sqrt(v);
  return eta2;
}

std::vector<ConvergenceRecord> adapt_loop(const cases::CaseDefinition& c,
                                          mesh::MeshTopology initial, const AdaptOptions& options,
                                          const std::function<void(const Evaluation&)>& on_step)
{
  if (options.budget_dofs <= 0 || options.max_iters <= 0)
    throw InvalidConfig("budget must be positive");
  if (!(options.theta > 0 && options.theta < 1))
    throw InvalidConfig("theta must lie in (0, 1)");
  std::vector<ConvergenceRecord> records;
  auto mesh = std::make_shared<const mesh::MeshTopology>(std::move(initial));
  for (int iter = 0;; ++iter) {
    auto ev = evaluate(c, mesh, options.p, options.run);
    ev.record.iter = iter;
    records.push_back(ev.record);
    if (on_step)
      on_step(ev);
    if (ev.record.nr_dofs >= options.budget_dofs || iter + 1 >= options.max_iters)
      break;
    const auto marked = dorfler_mark(
      cell_indicators(*mesh, ev.estimate, options.driver, options.run.oscillation), options.theta);
    if (marked.empty())
      break;
    mesh = std::make_shared<const mesh::MeshTopology>(mesh::refine_bisection(*mesh, marked));
  }
  return records;
}

double loglog_slope(const std::vector<double>& x, const std::vector<double>& y)
{
  if (x.size() != y.size() || x.size() < 2)
    throw InvalidConfig("slope needs at least two points");
  const int n = int(x.size());
  double mx = 0, my = 0;
  for (int i = 0; i < n; ++i) {
    mx += std::log(x[i]) / n;
    my += std::log(y[i]) / n;
  }
  double sxy = 0, sxx = 0;
  for (int i = 0; i < n; ++i) {
    const double dx = std::log(x[i]) - mx;
    sxy += dx * (std::log(y[i]) - my);
    sxx += dx * dx;
  }
  return sxy / sxx;
}

} // namespace curlcurl::adaptivity
