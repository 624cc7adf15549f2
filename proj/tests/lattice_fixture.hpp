#pragma once

// Shared test fixture: a unit-lattice net on a strip with aligned frames,
// cores marching along the x axis, and helpers that run the trailing ->
// transitions -> limits -> assembly pipeline on it.

#include "decomp/infinity.hpp"

#include <memory>

namespace decomp::testfix {

inline Vec v2(double a, double b) {
  Vec v(2);
  v << a, b;
  return v;
}

struct LatticeWorld {
  std::unique_ptr<ManifoldModel> model;
  std::unique_ptr<DiscreteNet> net;
  std::unique_ptr<PartitionOfUnity> pu;
  std::vector<int> core;

  LatticeWorld(int kmax, double rho, int xmin, int xmax, int half_rows = 2,
               std::unique_ptr<ManifoldModel> custom_model = nullptr,
               double region_radius = 1.0) {
    model = custom_model ? std::move(custom_model)
                         : std::make_unique<ManifoldModel>(ManifoldModel::euclidean(2));
    std::vector<Vec> centers;
    std::vector<int> core_ids(kmax, -1);
    for (int i = xmin; i <= xmax; ++i)
      for (int j = -half_rows; j <= half_rows; ++j) {
        centers.push_back(v2(i, j));
        for (int k = 1; k <= kmax; ++k)
          if (i == k && j == 0) core_ids[k - 1] = static_cast<int>(centers.size()) - 1;
      }
    std::vector<Ball> region = {Ball{v2(std::round(0.5 * (xmin + xmax)), 0.0), region_radius}};
    net = std::make_unique<DiscreteNet>(model.get(), centers, rho, 0.75 * rho, region, true, 1);
    pu = std::make_unique<PartitionOfUnity>(net.get());
    core = core_ids;
  }
};

struct Assembled {
  // The transition estimates point back into *ts, so it lives on the heap.
  std::unique_ptr<TrailingSystem> ts;
  TransitionTable table;
  std::shared_ptr<const QuadratureGrid> grid;
  GluedManifold gm;
};

inline Assembled assemble_lattice(const LatticeWorld& w, int i_max, int quad_res = 12,
                                  double tol = 1e-9, int eta_res = 32) {
  Assembled out;
  auto ts0 = build_trailing_system(*w.net, w.core, i_max);
  out.ts = std::make_unique<TrailingSystem>(stabilize_intersections(ts0, w.net->rho()));
  out.table = estimate_transition_limits(*out.ts, 8, tol);
  out.grid = std::make_shared<QuadratureGrid>(
      QuadratureGrid::ball(w.model->dim(), w.net->rho(), quad_res));
  std::vector<LimitMetricResult> metrics;
  std::vector<LimitPartitionResult> etas;
  for (int i = 0; i < out.ts->ranks(); ++i) {
    metrics.push_back(estimate_limit_metric(*out.ts, i, *out.grid, 1e-6));
    etas.push_back(estimate_limit_partition(*out.ts, *w.pu, i, eta_res, 1e-6));
  }
  out.gm = assemble_infinity_manifold(*out.ts, out.table, std::move(metrics), std::move(etas),
                                      out.grid, tol, "lattice-fixture");
  return out;
}

}  // namespace decomp::testfix
