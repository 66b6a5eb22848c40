#pragma once

#include "curlcurl/cases.hpp"
#include "curlcurl/equilibration.hpp"
#include "curlcurl/solver.hpp"

#include <functional>
#include <memory>
#include <utility>
#include <vector>

namespace curlcurl::adaptivity {

/// One solve/estimate on one mesh.
struct ConvergenceRecord
{
  int iter = 0;
  int p = 0;
  int q = 0;
  int nr_dofs = 0; // free Nedelec dofs
  double h_max = 0;
  double err = 0;
  double eta_edge_raw = 0; // (sum eta_l^2)^1/2
  double eta_edge = 0;     // sqrt6 C_L (sum eta_l^2 [+ osc_l^2])^1/2
  double eta_cell = 0;     // C_L (sum_K sum_k (eta_K^k [+ osc_K^k])^2)^1/2
  double osc_edge = 0;
  double osc_cell = 0;
  double seconds = 0;

  double eff_edge() const { return eta_edge / err; }
  double eff_cell() const { return eta_cell / err; }
};

struct RunOptions
{
  equilibration::EstimatorOptions estimator; // edge_oscillation: compute osc_l at all
  bool oscillation = false; // add the oscillation terms to eta_edge and eta_cell
};

struct Evaluation
{
  std::shared_ptr<const mesh::MeshTopology> mesh;
  solver::GalerkinSolution solution;
  equilibration::Estimate estimate;
  ConvergenceRecord record;
};

/// Solves at degree p, runs both estimators and measures the error, against the closed-form
/// curl when the case has one and the degree p + 2 reference solution otherwise.
Evaluation evaluate(const cases::CaseDefinition& c, std::shared_ptr<const mesh::MeshTopology> mesh,
                    int p, const RunOptions& options = {});

/// Bulk criterion: the smallest set of largest values whose squares sum to at least
/// theta times the total. Ties go to the smaller id. Returns ids in ascending order.
/// Throws InvalidConfig unless 0 < theta <= 1.
std::vector<int> dorfler_mark(const std::vector<std::pair<int, double>>& values, double theta);
std::vector<int> dorfler_mark(const std::vector<double>& values, double theta);

enum class Driver { Edge, Cell };

/// Per-cell marking quantity. The edge driver gives every patch cell eta_l^2 / |patch|.
std::vector<double> cell_indicators(const mesh::MeshTopology& mesh,
                                    const equilibration::Estimate& estimate, Driver driver,
                                    bool oscillation);

struct AdaptOptions
{
  int p = 0;
  Driver driver = Driver::Edge;
  double theta = 0.1;
  int budget_dofs = 50000; // stop once a mesh reaches this many dofs
  int max_iters = 1000;
  RunOptions run;
};

/// solve -> estimate -> record -> mark -> bisect until the budget is reached, the iteration
/// limit is hit or nothing is marked. `on_step` sees every evaluation before refinement.
std::vector<ConvergenceRecord> adapt_loop(const cases::CaseDefinition& c,
                                          mesh::MeshTopology initial, const AdaptOptions& options,
                                          const std::function<void(const Evaluation&)>& on_step = {});

/// Least-squares slope of log y against log x.
double loglog_slope(const std::vector<double>& x, const std::vector<double>& y);

} // namespace curlcurl::adaptivity
