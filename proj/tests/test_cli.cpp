#include <doctest.h>

#include "curlcurl/cli.hpp"
#include "curlcurl/error.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace curlcurl;
using namespace curlcurl::cli;

namespace {

struct Result
{
  int code;
  std::string out, err;
};

Result call(std::vector<std::string> args)
{
  args.insert(args.begin(), "curlcurl");
  std::vector<const char*> argv;
  for (const auto& a : args)
    argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = main_entry(int(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::vector<std::vector<std::string>> read_csv(const std::string& path)
{
  std::ifstream in(path);
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> row;
    std::stringstream s(line);
    std::string cell;
    while (std::getline(s, cell, ','))
      row.push_back(cell);
    rows.push_back(row);
  }
  return rows;
}

std::string temp_path(const std::string& name)
{
  return (std::filesystem::temp_directory_path() / ("curlcurl_test_" + name)).string();
}

std::string slurp(const std::string& path)
{
  std::ifstream in(path);
  return {std::istreambuf_iterator<char>(in), {}};
}

} // namespace

TEST_CASE("hconv on the cube: three rows with decreasing error")
{
  const auto path = temp_path("hconv.csv");
  const auto r = call({"--case", "cube", "--mode", "hconv", "--p", "0", "--levels", "3", "--out", path});
  REQUIRE(r.code == exit_ok);
  const auto rows = read_csv(path);
  REQUIRE(rows.size() == 4);
  std::string header;
  for (std::size_t i = 0; i < rows[0].size(); ++i)
    header += (i ? "," : "") + rows[0][i];
  CHECK(header == "h,p,nr_dofs,err,etae_raw,etae,etac,osce,oscc,eff_edge,eff_cell");
  for (int i = 1; i < 3; ++i) {
    CHECK(std::stod(rows[i + 1][3]) < std::stod(rows[i][3]));
    CHECK(std::stod(rows[i + 1][0]) == doctest::Approx(std::stod(rows[i][0]) / 2));
  }
  for (std::size_t i = 1; i < rows.size(); ++i) {
    REQUIRE(rows[i].size() == 11);
    CHECK(rows[i][1] == "0");
    // etae = sqrt6 etae_raw without oscillation, eff = eta / err
    CHECK(std::stod(rows[i][5]) == doctest::Approx(std::sqrt(6.0) * std::stod(rows[i][4])).epsilon(1e-10));
    CHECK(std::stod(rows[i][9]) == doctest::Approx(std::stod(rows[i][5]) / std::stod(rows[i][3])).epsilon(1e-10));
    CHECK(std::stod(rows[i][10]) == doctest::Approx(std::stod(rows[i][6]) / std::stod(rows[i][3])).epsilon(1e-10));
  }
  std::filesystem::remove(path);
}

TEST_CASE("poly case: zero error and zero estimate")
{
  const auto r = call({"--case", "poly", "--p", "2", "--n", "2"});
  REQUIRE(r.code == exit_ok);
  std::stringstream s(r.out);
  std::string header, row;
  std::getline(s, header);
  std::getline(s, row);
  std::vector<double> v;
  std::stringstream cells(row);
  std::string cell;
  while (std::getline(cells, cell, ','))
    v.push_back(std::stod(cell));
  REQUIRE(v.size() == 11);
  CHECK(v[1] == 2);
  CHECK(v[3] <= 1e-8);
  CHECK(v[4] <= 1e-8);
}

TEST_CASE("validation errors exit with 2")
{
  CHECK(call({"--mode", "adapt", "--theta", "1.5"}).code == exit_validation);
  CHECK(call({"--case", "nope"}).code == exit_validation);
  CHECK(call({"--p", "-1"}).code == exit_validation);
  CHECK(call({"--n", "0"}).code == exit_validation);
  CHECK(call({"--mode", "sideways"}).code == exit_validation);
  CHECK(call({"--driver", "vertex"}).code == exit_validation);
  CHECK(call({"--budget-dofs", "0", "--mode", "adapt"}).code == exit_validation);
  CHECK(call({"--clift", "-1"}).code == exit_validation);
  CHECK(call({"--no-such-flag"}).code == exit_validation);
  CHECK(call({"--mesh-in", "/nonexistent/mesh.mesh"}).code == exit_validation);
  const auto r = call({"--theta", "0"});
  CHECK(r.code == exit_validation);
  CHECK(r.err.find("theta") != std::string::npos);
  CHECK(call({"--help"}).code == exit_ok);
}

TEST_CASE("output is deterministic and uses 12 significant digits")
{
  const auto a = temp_path("a.csv"), b = temp_path("b.csv");
  REQUIRE(call({"--case", "cube", "--n", "1", "--p", "1", "--out", a}).code == exit_ok);
  REQUIRE(call({"--case", "cube", "--n", "1", "--p", "1", "--out", b}).code == exit_ok);
  CHECK(slurp(a) == slurp(b));
  // rewriting replaces the file
  REQUIRE(call({"--case", "cube", "--n", "1", "--p", "1", "--out", a}).code == exit_ok);
  CHECK(slurp(a) == slurp(b));
  const auto rows = read_csv(a);
  REQUIRE(rows.size() == 2);
  const std::string err = rows[1][3];
  int digits = 0;
  for (char ch : err.substr(0, err.find('e')))
    digits += std::isdigit(static_cast<unsigned char>(ch)) ? 1 : 0;
  CHECK(digits == 12 + (err[0] == '0' ? 1 : 0));
  std::filesystem::remove(a);
  std::filesystem::remove(b);
}

TEST_CASE("pconv rows vary p")
{
  const auto r = call({"--case", "cube", "--n", "1", "--mode", "pconv", "--p", "0", "--pmax", "2"});
  REQUIRE(r.code == exit_ok);
  std::stringstream s(r.out);
  std::string line;
  std::getline(s, line);
  CHECK(line == std::string(convergence_header));
  for (int p = 0; p <= 2; ++p) {
    REQUIRE(std::getline(s, line));
    std::stringstream cells(line);
    std::string h, pp;
    std::getline(cells, h, ',');
    std::getline(cells, pp, ',');
    CHECK(std::stoi(pp) == p);
  }
  CHECK(!std::getline(s, line));
}

TEST_CASE("adapt mode")
{
  const auto r = call({"--case", "ltype-pi2", "--mode", "adapt", "--n", "1", "--driver", "cell",
                       "--max-iters", "3", "--theta", "0.3"});
  REQUIRE(r.code == exit_ok);
  std::stringstream s(r.out);
  std::string line;
  std::getline(s, line);
  CHECK(line == std::string(adapt_header));
  int rows = 0;
  while (std::getline(s, line)) {
    CHECK(line.rfind(std::to_string(rows) + ",", 0) == 0);
    ++rows;
  }
  CHECK(rows == 3);
}

TEST_CASE("mesh file input matches the builder")
{
  const auto path = temp_path("cube.mesh");
  mesh::write_medit(mesh::unit_cube_mesh(1), path);
  const auto from_file = call({"--case", "cube", "--mesh-in", path});
  const auto builder = call({"--case", "cube", "--n", "1"});
  REQUIRE(from_file.code == exit_ok);
  CHECK(from_file.out == builder.out);

  // without a reference list the case labels the boundary; with one, the file does
  const auto poly = call({"--case", "poly", "--n", "2", "--p", "2"});
  mesh::write_medit(mesh::unit_cube_mesh(2), path);
  const auto relabeled = call({"--case", "poly", "--mesh-in", path, "--p", "2"});
  REQUIRE(relabeled.code == exit_ok);
  CHECK(relabeled.out == poly.out);
  mesh::write_medit(cases::polynomial_case().mesh_builder(2), path);
  const auto listed = call({"--case", "poly", "--mesh-in", path, "--p", "2", "--dirichlet-refs", "1"});
  REQUIRE(listed.code == exit_ok);
  CHECK(listed.out == poly.out);
  const auto unknown = call({"--case", "poly", "--mesh-in", path, "--p", "2", "--dirichlet-refs", "7"});
  // all faces Neumann: J = (2,0,0) is not orthogonal to every gradient, which the
  // estimator reports as a solver-side failure
  CHECK(unknown.code == exit_solver);
  CHECK(unknown.out.empty());
  CHECK(unknown.err.find("CompatibilityViolation") != std::string::npos);
  std::filesystem::remove(path);
}

TEST_CASE("run_study and validate")
{
  RunConfig c;
  c.case_name = "cube";
  c.n = 1;
  CHECK_NOTHROW(validate(c));
  const auto rows = run_study(c);
  REQUIRE(rows.size() == 1);
  CHECK(to_csv(Mode::Single, rows).rfind(std::string(convergence_header) + "\n", 0) == 0);
  c.pmax = -1;
  c.mode = Mode::PConv;
  CHECK_THROWS_AS(validate(c), InvalidConfig);
  std::ostringstream out, err;
  CHECK(run(c, out, err) == exit_validation);
  CHECK(out.str().empty());
}
