#include "curlcurl/cli.hpp"

#include "curlcurl/error.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

namespace curlcurl::cli {

namespace {

mesh::MeshTopology initial_mesh(const RunConfig& config, const cases::CaseDefinition& c, int n)
{
  if (config.mesh_in.empty())
    return c.mesh_builder(n);
  // listed references are Dirichlet and the rest Neumann; without a list the case decides
  if (config.dirichlet_refs.empty()) {
    const auto any = mesh::BoundaryLabel::Dirichlet;
    return mesh::relabel(mesh::read_medit(config.mesh_in, {}, &any), c.boundary);
  }
  std::map<int, mesh::BoundaryLabel> labels;
  for (int ref : config.dirichlet_refs)
    labels[ref] = mesh::BoundaryLabel::Dirichlet;
  const auto fallback = mesh::BoundaryLabel::Neumann;
  return mesh::read_medit(config.mesh_in, labels, &fallback);
}

adaptivity::RunOptions run_options(const RunConfig& config, bool compute_oscillation)
{
  adaptivity::RunOptions o;
  o.estimator.q_offset = config.q_offset;
  o.estimator.c_lift = config.c_lift;
  o.estimator.edge_oscillation = compute_oscillation || config.oscillation;
  o.oscillation = config.oscillation;
  return o;
}

std::string format(double v)
{
  std::ostringstream s;
  s.precision(12);
  s << v;
  return s.str();
}

} // namespace

void validate(const RunConfig& config)
{
  auto require = [](bool ok, const std::string& what) {
    if (!ok)
      throw InvalidConfig(what);
  };
  const auto names = cases::case_names();
  require(std::find(names.begin(), names.end(), config.case_name) != names.end(),
          "unknown case '" + config.case_name + "'");
  require(config.p >= 0, "p must be >= 0");
  require(config.q_offset >= 1, "q offset must be >= 1");
  require(config.n >= 1, "n must be >= 1");
  require(config.levels >= 1, "levels must be >= 1");
  require(config.mode != Mode::PConv || config.pmax >= config.p, "pmax must be >= p");
  require(config.theta > 0 && config.theta < 1, "theta must lie in (0, 1)");
  require(config.budget_dofs > 0, "budget must be > 0");
  require(config.max_iters > 0, "iteration limit must be > 0");
  require(config.c_lift > 0, "C_L must be > 0");
  require(config.mesh_in.empty() || std::filesystem::exists(config.mesh_in),
          "mesh file '" + config.mesh_in + "' not found");
}

std::vector<adaptivity::ConvergenceRecord> run_study(const RunConfig& config)
{
  validate(config);
  const auto c = cases::case_by_name(config.case_name);
  std::vector<adaptivity::ConvergenceRecord> rows;
  auto shared = [](mesh::MeshTopology m) { return std::make_shared<const mesh::MeshTopology>(std::move(m)); };

  switch (config.mode) {
  case Mode::Single:
    rows.push_back(adaptivity::evaluate(c, shared(initial_mesh(config, c, config.n)), config.p,
                                        run_options(config, true))
                     .record);
    break;
  case Mode::HConv: {
    // builder meshes at n, 2n, 4n; a mesh file is refined uniformly instead
    auto m = shared(initial_mesh(config, c, config.n));
    for (int level = 0; level < config.levels; ++level) {
      if (level > 0)
        m = shared(config.mesh_in.empty() ? c.mesh_builder(config.n << level)
                                          : mesh::refine_uniform(*m));
      auto r = adaptivity::evaluate(c, m, config.p, run_options(config, true)).record;
      r.iter = level;
      rows.push_back(r);
    }
    break;
  }
  case Mode::PConv: {
    const auto m = shared(initial_mesh(config, c, config.n));
    for (int p = config.p; p <= config.pmax; ++p) {
      auto r = adaptivity::evaluate(c, m, p, run_options(config, true)).record;
      r.iter = p - config.p;
      rows.push_back(r);
    }
    break;
  }
  case Mode::Adapt: {
    adaptivity::AdaptOptions o;
    o.p = config.p;
    o.driver = config.driver;
    o.theta = config.theta;
    o.budget_dofs = config.budget_dofs;
    o.max_iters = config.max_iters;
    o.run = run_options(config, false);
    rows = adaptivity::adapt_loop(c, initial_mesh(config, c, config.n), o);
    break;
  }
  }
  return rows;
}

std::string to_csv(Mode mode, const std::vector<adaptivity::ConvergenceRecord>& records)
{
  std::ostringstream s;
  if (mode == Mode::Adapt) {
    s << adapt_header << '\n';
    for (const auto& r : records)
      s << r.iter << ',' << r.nr_dofs << ',' << format(r.h_max) << ',' << format(r.err) << ','
        << format(r.eta_edge) << ',' << format(r.eta_cell) << ',' << format(r.eff_edge()) << ','
        << format(r.eff_cell()) << '\n';
  } else {
    s << convergence_header << '\n';
    for (const auto& r : records)
      s << format(r.h_max) << ',' << r.p << ',' << r.nr_dofs << ',' << format(r.err) << ','
        << format(r.eta_edge_raw) << ',' << format(r.eta_edge) << ',' << format(r.eta_cell) << ','
        << format(r.osc_edge) << ',' << format(r.osc_cell) << ',' << format(r.eff_edge()) << ','
        << format(r.eff_cell()) << '\n';
  }
  return s.str();
}

int run(const RunConfig& config, std::ostream& out, std::ostream& err)
{
  std::string csv;
  try {
    csv = to_csv(config.mode, run_study(config));
  } catch (const InvalidConfig& e) {
    err << e.what() << '\n';
    return exit_validation;
  } catch (const BadAngle& e) {
    err << e.what() << '\n';
    return exit_validation;
  } catch (const ParseError& e) {
    err << e.what() << '\n';
    return exit_validation;
  } catch (const UnmappedReference& e) {
    err << e.what() << '\n';
    return exit_validation;
  } catch (const UnsupportedDegree& e) {
    err << e.what() << '\n';
    return exit_validation;
  } catch (const std::exception& e) {
    err << e.what() << '\n';
    return exit_solver;
  }
  if (config.out.empty()) {
    out << csv << std::flush;
    return exit_ok;
  }
  std::ofstream file(config.out, std::ios::trunc);
  file << csv;
  if (!file) {
    err << "cannot write '" << config.out << "'\n";
    return exit_validation;
  }
  return exit_ok;
}

int main_entry(int argc, const char* const* argv, std::ostream& out, std::ostream& err)
{
  RunConfig config;
  CLI::App app{"Curl-curl solver with equilibrated a posteriori estimators"};
  const std::map<std::string, Mode> modes{
    {"single", Mode::Single}, {"hconv", Mode::HConv}, {"pconv", Mode::PConv}, {"adapt", Mode::Adapt}};
  const std::map<std::string, adaptivity::Driver> drivers{{"edge", adaptivity::Driver::Edge},
                                                          {"cell", adaptivity::Driver::Cell}};
  app.add_option("--case", config.case_name, "cube, ltype-3pi4, ltype-pi2, ltype-pi8, fichera, poly");
  app.add_option("--mode", config.mode, "single, hconv, pconv or adapt")
    ->transform(CLI::CheckedTransformer(modes, CLI::ignore_case));
  app.add_option("--p", config.p, "Nedelec degree");
  app.add_option("--q-offset", config.q_offset, "flux degree minus p");
  app.add_option("--n", config.n, "initial mesh resolution");
  app.add_option("--levels", config.levels, "hconv: number of meshes");
  app.add_option("--pmax", config.pmax, "pconv: largest degree");
  app.add_option("--driver", config.driver, "adapt: edge or cell estimator")
    ->transform(CLI::CheckedTransformer(drivers, CLI::ignore_case));
  app.add_option("--theta", config.theta, "bulk marking fraction");
  app.add_option("--budget-dofs", config.budget_dofs, "adapt: stop at this many dofs");
  app.add_option("--max-iters", config.max_iters, "adapt: iteration limit");
  app.add_option("--clift", config.c_lift, "lifting constant C_L");
  app.add_flag("--osc", config.oscillation, "include oscillation terms in the totals");
  app.add_option("--mesh-in", config.mesh_in, "MEDIT mesh instead of the case mesh");
  app.add_option("--dirichlet-refs", config.dirichlet_refs, "MEDIT triangle references on the Dirichlet boundary")
    ->delimiter(',');
  app.add_option("--out", config.out, "CSV path (default: standard output)");
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return exit_ok;
  } catch (const CLI::ParseError& e) {
    err << e.what() << '\n';
    return exit_validation;
  }
  return run(config, out, err);
}

} // namespace curlcurl::cli
