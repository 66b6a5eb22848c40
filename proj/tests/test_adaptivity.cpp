#include <doctest.h>

#include "curlcurl/adaptivity.hpp"
#include "curlcurl/error.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

using namespace curlcurl;
using namespace curlcurl::adaptivity;

TEST_CASE("dorfler marking examples")
{
  const std::vector<double> eta{4, 3, 2, 1};
  CHECK(dorfler_mark(eta, 0.5) == std::vector<int>{0});
  CHECK(dorfler_mark(eta, 0.9) == std::vector<int>{0, 1, 2});
  CHECK(dorfler_mark(eta, 1.0) == std::vector<int>{0, 1, 2, 3});
  CHECK(dorfler_mark(std::vector<double>{4, 3, 0, 1}, 1.0) == std::vector<int>{0, 1, 3});
  CHECK(dorfler_mark(std::vector<double>{4, 3, 0, 1}, 1 - 1e-12) == std::vector<int>{0, 1, 3});
  // 16 + 9 = 25 < 0.9 * 30 = 27 needs the third; exactly theta * total stops
  CHECK(dorfler_mark(std::vector<double>{3, 4}, 16.0 / 25) == std::vector<int>{1});
  CHECK(dorfler_mark(std::vector<double>{}, 0.5).empty());
  CHECK(dorfler_mark(std::vector<double>{0, 0}, 0.5).empty());
  CHECK_THROWS_AS(dorfler_mark(eta, 0.0), InvalidConfig);
  CHECK_THROWS_AS(dorfler_mark(eta, 1.5), InvalidConfig);
}

TEST_CASE("dorfler marking: ties and permutations")
{
  CHECK(dorfler_mark(std::vector<double>{1, 1, 1, 1}, 0.5) == std::vector<int>{0, 1});
  CHECK(dorfler_mark(std::vector<double>{1, 2, 1, 2}, 0.6) == std::vector<int>{1, 3});
  std::mt19937 rng(3);
  std::uniform_int_distribution<int> level(0, 5); // repeated values exercise the tie rule
  for (int t = 0; t < 20; ++t) {
    std::vector<std::pair<int, double>> v;
    for (int i = 0; i < 40; ++i)
      v.emplace_back(i, 0.5 * level(rng));
    for (double theta : {0.1, 0.5, 0.9}) {
      const auto ref = dorfler_mark(v, theta);
      auto shuffled = v;
      std::shuffle(shuffled.begin(), shuffled.end(), rng);
      CHECK(dorfler_mark(shuffled, theta) == ref);
      // smallest set: dropping the last chosen value breaks the criterion
      double total = 0, sum = 0;
      for (const auto& [i, e] : v)
        total += e * e;
      double smallest = 1e300;
      for (int i : ref) {
        sum += v[i].second * v[i].second;
        smallest = std::min(smallest, v[i].second);
      }
      CHECK(sum >= theta * total);
      CHECK(sum - smallest * smallest < theta * total);
    }
  }
}

TEST_CASE("cell indicators preserve the total")
{
  const auto c = cases::smooth_cube_case();
  const auto m = std::make_shared<const mesh::MeshTopology>(c.mesh_builder(2));
  const auto ev = evaluate(c, m, 0);
  double edges = 0, cells = 0;
  for (const auto& e : ev.estimate.edges)
    edges += e.eta * e.eta;
  for (const auto& k : ev.estimate.cells)
    for (double v : k.eta)
      cells += v * v;
  double sum = 0;
  for (double v : cell_indicators(*m, ev.estimate, Driver::Edge, false))
    sum += v * v;
  CHECK(sum == doctest::Approx(edges).epsilon(1e-12));
  sum = 0;
  for (double v : cell_indicators(*m, ev.estimate, Driver::Cell, false))
    sum += v * v;
  CHECK(sum == doctest::Approx(cells).epsilon(1e-12));
}

TEST_CASE("records")
{
  const auto c = cases::smooth_cube_case();
  const auto m = std::make_shared<const mesh::MeshTopology>(c.mesh_builder(2));
  const auto r = evaluate(c, m, 0).record;
  CHECK(r.nr_dofs == 26);
  CHECK(r.q == 1);
  CHECK(r.err > 0);
  CHECK(r.eta_edge == doctest::Approx(std::sqrt(6.0) * r.eta_edge_raw));
  CHECK(r.eff_edge() * r.err == doctest::Approx(r.eta_edge));
  CHECK(r.eff_cell() * r.err == doctest::Approx(r.eta_cell));

  RunOptions o;
  o.estimator.c_lift = 2;
  o.oscillation = true;
  const auto r2 = evaluate(c, m, 0, o).record;
  CHECK(r2.eta_edge ==
        doctest::Approx(2 * std::sqrt(6.0) * std::hypot(r2.eta_edge_raw, r2.osc_edge)));
  CHECK(r2.eta_cell > 2 * r.eta_cell);
}

TEST_CASE("adapt loop with an immediate budget is a single direct run")
{
  const auto c = cases::smooth_cube_case();
  AdaptOptions o;
  o.budget_dofs = 1;
  const auto records = adapt_loop(c, c.mesh_builder(2), o);
  REQUIRE(records.size() == 1);
  const auto direct = evaluate(c, std::make_shared<const mesh::MeshTopology>(c.mesh_builder(2)), 0,
                               o.run)
                        .record;
  CHECK(records[0].iter == 0);
  CHECK(records[0].nr_dofs == direct.nr_dofs);
  CHECK(records[0].err == direct.err);
  CHECK(records[0].eta_edge == direct.eta_edge);
  CHECK(records[0].eta_cell == direct.eta_cell);
  CHECK_THROWS_AS(adapt_loop(c, c.mesh_builder(1), {.budget_dofs = 0}), InvalidConfig);
}

TEST_CASE("adaptive L-type run")
{
  const auto c = cases::ltype_case(3 * std::numbers::pi / 4);
  AdaptOptions o;
  o.driver = Driver::Cell;
  o.budget_dofs = 2000;
  int last_iter = -1;
  std::vector<std::pair<int, bool>> efficiency;
  const auto records = adapt_loop(c, c.mesh_builder(1), o, [&](const Evaluation& ev) {
    // local efficiency, every cell
    bool ok = true;
    for (int K = 0; K < ev.mesh->n_tets(); ++K) {
      double lhs = 0, rhs = 0;
      for (double v : ev.estimate.cells[K].eta)
        lhs += v * v;
      for (int e : ev.mesh->tet_edges[K])
        rhs += ev.estimate.edges[e].eta * ev.estimate.edges[e].eta;
      ok = ok && lhs <= 6 * rhs + 1e-10;
    }
    efficiency.emplace_back(ev.record.iter, ok);
    last_iter = ev.record.iter;
  });
  REQUIRE(records.size() >= 3);
  CHECK(last_iter == records.back().iter);
  CHECK(records.back().nr_dofs >= o.budget_dofs);
  for (const auto& [iter, ok] : efficiency)
    CHECK_MESSAGE(ok, "iteration " << iter);
  for (std::size_t i = 1; i < records.size(); ++i) {
    CHECK(records[i].iter == int(i));
    CHECK(records[i].nr_dofs > records[i - 1].nr_dofs);
    CHECK(records[i].err <= 1.05 * records[i - 1].err);
  }
}

TEST_CASE("adaptive Fichera run with the reference error")
{
  const auto c = cases::fichera_case();
  AdaptOptions o;
  o.budget_dofs = 150;
  const auto records = adapt_loop(c, c.mesh_builder(1), o);
  REQUIRE(records.size() >= 2);
  for (std::size_t i = 1; i < records.size(); ++i)
    CHECK(records[i].err <= 1.05 * records[i - 1].err);
  for (const auto& r : records)
    CHECK(r.eff_edge() >= std::sqrt(6.0) * 0.98);
}

TEST_CASE("loglog slope")
{
  const std::vector<double> x{1, 2, 4, 8};
  std::vector<double> y;
  for (double v : x)
    y.push_back(3 * std::pow(v, -1.0 / 3));
  CHECK(loglog_slope(x, y) == doctest::Approx(-1.0 / 3).epsilon(1e-12));
  CHECK_THROWS_AS(loglog_slope({1}, {1}), InvalidConfig);
}
