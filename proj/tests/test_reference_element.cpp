#include <doctest.h>

#include "curlcurl/error.hpp"
#include "curlcurl/reference_element.hpp"

#include <cmath>

using namespace curlcurl;
using namespace curlcurl::fe;

TEST_CASE("dimensions")
{
  CHECK(reference_element(Family::Nedelec, 0).n_shape() == 6);
  CHECK(reference_element(Family::Nedelec, 2).n_shape() == 45);
  CHECK(reference_element(Family::RaviartThomas, 0).n_shape() == 4);
  CHECK(reference_element(Family::RaviartThomas, 2).n_shape() == 36);
  CHECK(reference_element(Family::Lagrange, 3).n_shape() == 20);
  CHECK(reference_element(Family::DiscontinuousP, 2).n_shape() == 10);
}

TEST_CASE("unisolvence for degrees 0..3")
{
  for (int p = 0; p <= 3; ++p) {
    CAPTURE(p);
    CHECK(reference_element(Family::Nedelec, p).unisolvence_defect() < 1e-10);
    CHECK(reference_element(Family::RaviartThomas, p).unisolvence_defect() < 1e-10);
    CHECK(reference_element(Family::DiscontinuousP, p).unisolvence_defect() < 1e-10);
    CHECK(reference_element(Family::Lagrange, p + 1).unisolvence_defect() < 1e-10);
  }
}

TEST_CASE("unisolvence at the high end of the compiled range")
{
  for (int p = 4; p <= max_nedelec_degree; ++p) {
    CAPTURE(p);
    CHECK(reference_element(Family::Nedelec, p).unisolvence_defect() < 1e-10);
  }
  for (int p = 4; p <= max_rt_degree; ++p) {
    CAPTURE(p);
    CHECK(reference_element(Family::RaviartThomas, p).unisolvence_defect() < 1e-10);
  }
  for (int p = 5; p <= max_lagrange_degree; ++p) {
    CAPTURE(p);
    CHECK(reference_element(Family::Lagrange, p).unisolvence_defect() < 1e-10);
  }
}

TEST_CASE("unsupported degrees throw")
{
  CHECK_THROWS_AS(reference_element(Family::Lagrange, 0), UnsupportedDegree);
  CHECK_THROWS_AS(reference_element(Family::Nedelec, max_nedelec_degree + 1), UnsupportedDegree);
  CHECK_THROWS_AS(reference_element(Family::RaviartThomas, -1), UnsupportedDegree);
}

TEST_CASE("lowest order Nedelec has one dof per edge with unit tangential moment")
{
  const auto& el = reference_element(Family::Nedelec, 0);
  CHECK(el.entity_dofs() == std::array<int, 4>{0, 1, 0, 0});
  // edge (0,1): shape 0 has tangential component 1 along it and the others vanish
  Eigen::MatrixXd v, c;
  for (double s : {0.1, 0.5, 0.8}) {
    el.evaluate(Eigen::Vector3d(s, 0, 0), v, &c);
    CHECK(v(0, 0) == doctest::Approx(1.0));
    for (int k = 1; k < 6; ++k)
      CHECK(std::abs(v(0, k)) < 1e-13);
  }
}

TEST_CASE("RT0 interpolant of x has divergence 3")
{
  const auto& el = reference_element(Family::RaviartThomas, 0);
  const Eigen::VectorXd c = el.interpolate([](const Eigen::Vector3d& x) -> Eigen::VectorXd { return x; });
  Eigen::MatrixXd v, d;
  el.evaluate(Eigen::Vector3d(0.2, 0.3, 0.1), v, &d);
  CHECK((d * c)(0) == doctest::Approx(3.0));
  CHECK((v * c - Eigen::Vector3d(0.2, 0.3, 0.1)).norm() < 1e-13);
}

TEST_CASE("Nedelec interpolation reproduces its own space")
{
  for (int p = 0; p <= 3; ++p) {
    const auto& el = reference_element(Family::Nedelec, p);
    // a field in P_p^3 + x cross P_p^3
    auto f = [p](const Eigen::Vector3d& x) -> Eigen::VectorXd {
      const Eigen::Vector3d a(std::pow(x[1], p) + 1, std::pow(x[0], p), -2.0);
      return Eigen::Vector3d(a + x.cross(Eigen::Vector3d(std::pow(x[2], p), 0, std::pow(x[1], p))));
    };
    const Eigen::VectorXd c = el.interpolate(f);
    Eigen::MatrixXd v;
    for (const Eigen::Vector3d x : {Eigen::Vector3d(0.1, 0.2, 0.3), Eigen::Vector3d(0.6, 0.1, 0.2)}) {
      el.evaluate(x, v);
      CHECK((v * c - f(x)).norm() < 1e-11);
    }
  }
}

TEST_CASE("tabulation agrees with pointwise evaluation")
{
  const auto& el = reference_element(Family::RaviartThomas, 2);
  const auto& rule = tet_quadrature(6);
  const auto& tab = el.tabulate(rule);
  REQUIRE(tab.values.size() == rule.size());
  Eigen::MatrixXd v, d;
  el.evaluate(rule.points[3], v, &d);
  CHECK((tab.values[3] - v).norm() < 1e-14);
  CHECK((tab.derivs[3] - d).norm() < 1e-14);
}
