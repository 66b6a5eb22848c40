#pragma once

#include "curlcurl/adaptivity.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace curlcurl::cli {

enum class Mode { Single, HConv, PConv, Adapt };

struct RunConfig
{
  std::string case_name = "cube";
  Mode mode = Mode::Single;
  int p = 0;
  int q_offset = 1;
  int n = 2;      // initial mesh resolution
  int levels = 3; // hconv: meshes n, 2n, 4n, ...
  int pmax = 3;   // pconv: p, ..., pmax
  adaptivity::Driver driver = adaptivity::Driver::Edge;
  double theta = 0.1;
  int budget_dofs = 50000;
  int max_iters = 1000;
  double c_lift = 1;
  bool oscillation = false;
  std::string mesh_in;
  std::vector<int> dirichlet_refs;
  std::string out; // empty: standard output
};

inline constexpr int exit_ok = 0;
inline constexpr int exit_validation = 2;
inline constexpr int exit_solver = 3;

inline const char* const convergence_header =
  "h,p,nr_dofs,err,etae_raw,etae,etac,osce,oscc,eff_edge,eff_cell";
inline const char* const adapt_header = "iter,nr_dofs,h_max,err,etae,etac,eff_edge,eff_cell";

/// Throws InvalidConfig.
void validate(const RunConfig& config);

/// Rows of the study described by the config. Throws like the library.
std::vector<adaptivity::ConvergenceRecord> run_study(const RunConfig& config);

/// CSV text for the records, header first.
std::string to_csv(Mode mode, const std::vector<adaptivity::ConvergenceRecord>& records);

/// Validates, runs and writes the CSV to the --out file or to `out`. Returns one of the exit
/// codes; messages go to `err`.
int run(const RunConfig& config, std::ostream& out, std::ostream& err);

/// Command-line front end: parses the flags and calls run.
int main_entry(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

} // namespace curlcurl::cli
