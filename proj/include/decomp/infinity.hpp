#pragma once

#include "decomp/trailing.hpp"

#include <functional>
#include <map>
#include <memory>
#include <string>

namespace decomp {

// Gluing data over copies of Omega_rho: transition maps psi_{ij} (chart j
// coordinates to chart i coordinates) defined on Omega_{2 rho}, overlap
// sets derived by membership: Omega_ij = { xi in Omega_rho : |psi_ji(xi)| < rho }.
struct GluingData {
  int dim = 0;
  double rho = 0.0;
  int chart_count = 0;
  std::vector<std::pair<int, int>> pairs;  // ordered pairs, diagonal excluded
  std::function<Vec(int, int, const Vec&)> psi;

  bool has_pair(int i, int j) const;
  // xi (a chart-i coordinate) lies in Omega_ij.
  bool in_overlap(int i, int j, const Vec& xi) const;
};

GluingData gluing_from_transitions(const TrailingSystem& ts, const TransitionTable& table);

struct GluingViolation {
  std::string condition;  // identity | symmetry | diffeomorphism | inverse | cocycle | boundary
  int i = -1, j = -1, l = -1;
  double residual = 0.0;
};

struct GluingReport {
  bool pass = true;
  std::vector<GluingViolation> violations;
  std::map<std::string, double> worst;  // worst residual per condition

  std::string summary() const;
};

// Checks the gluing conditions on sample grids; never throws.
GluingReport validate_gluing_data(const GluingData& gd, double tol, int grid_res = 12);

// The manifold at infinity: charts 0..n-1, transitions, limit metric
// fields on a shared quadrature grid, and the limit partition. Points are
// (chart, coordinates) with overlap identification through psi. Sums over
// the truncated atlas match sums over the full net only within
// `completeness` of the core; profile supports must stay in that zone.
struct GluedManifold {
  GluingData data;
  std::shared_ptr<const QuadratureGrid> grid;
  std::vector<MetricField> metric;  // per chart, nodes of *grid
  std::vector<Mat> metric_origin;
  std::vector<ChartFunction> eta;
  double completeness = 0.0;
  std::string provenance;

  int charts() const { return data.chart_count; }
  // Diagnostic geodesic-graph distance between chart origins (coarse).
  double chart_origin_distance(int i, int j) const;
};

// Validates and packages the estimated pieces. Refuses unconverged pairs
// and any gluing violation.
GluedManifold assemble_infinity_manifold(const TrailingSystem& ts, const TransitionTable& table,
                                         std::vector<LimitMetricResult> metrics,
                                         std::vector<LimitPartitionResult> etas,
                                         std::shared_ptr<const QuadratureGrid> grid, double tol,
                                         std::string provenance = {});

// A function on the glued manifold, stored per chart: w o phi_i = w_i.
class GlobalProfile {
 public:
  GlobalProfile() = default;
  GlobalProfile(const GluedManifold* glued, std::vector<ChartFunction> locals)
      : glued_(glued), locals_(std::move(locals)) {}

  const GluedManifold& glued() const { return *glued_; }
  const ChartFunction& local(int i) const { return locals_[i]; }
  int charts() const { return static_cast<int>(locals_.size()); }
  double eval(int chart, const Vec& xi) const { return locals_[chart].value(xi); }
  bool empty() const { return locals_.empty(); }

 private:
  const GluedManifold* glued_ = nullptr;
  std::vector<ChartFunction> locals_;
};

// Asserts overlap compatibility w_i o psi_ij = w_j within tol; rejects
// with the worst offender's location otherwise.
GlobalProfile assemble_global_profile(const GluedManifold& gm, std::vector<ChartFunction> locals,
                                      double tol);

struct InfinityNorms {
  double h12 = 0.0;     // norm
  double h12_sq = 0.0;  // squared norm
  double lp = 0.0;      // norm
  double lp_p = 0.0;    // p-th power
};

// eta-weighted chart-sum quadrature with the limit metric.
InfinityNorms infinity_norms(const GlobalProfile& gp, double p);

// JSON document round trip for inspection, golden tests, and the CLI
// gluing checker. Serialized maps/metrics are cartesian samples; the
// reconstruction interpolates them.
std::string glued_manifold_to_json(const GluedManifold& gm, int sample_res = 24);
GluedManifold glued_manifold_from_json(const std::string& text);

}  // namespace decomp
