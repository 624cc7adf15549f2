#include <doctest.h>

#include "decomp/trailing.hpp"

#include <memory>

#include <cmath>

using namespace decomp;

namespace {

Vec vec2(double a, double b) {
  Vec v(2);
  v << a, b;
  return v;
}

// Unit lattice net on a strip, aligned frames, with cores marching along x.
struct LatticeWorld {
  std::unique_ptr<ManifoldModel> model;
  std::unique_ptr<DiscreteNet> net;
  std::vector<int> core;  // net indices of (k, 0)

  LatticeWorld(int kmax, double rho, int xmin, int xmax) {
    model = std::make_unique<ManifoldModel>(ManifoldModel::euclidean(2));
    std::vector<Vec> centers;
    std::vector<int> core_ids(kmax, -1);
    for (int i = xmin; i <= xmax; ++i)
      for (int j = -2; j <= 2; ++j) {
        centers.push_back(vec2(i, j));
        for (int k = 1; k <= kmax; ++k)
          if (i == k && j == 0) core_ids[k - 1] = static_cast<int>(centers.size()) - 1;
      }
    std::vector<Ball> region = {Ball{vec2(0.5 * (xmin + xmax), 0.0), 1.0}};
    net = std::make_unique<DiscreteNet>(model.get(), centers, rho, 0.75 * rho, region, true, 1);
    core = core_ids;
  }
};

}  // namespace

TEST_CASE("i_max = 0 keeps only the core itself") {
  LatticeWorld w(8, 0.8, -2, 12);
  auto ts = build_trailing_system(*w.net, w.core, 0);
  CHECK(ts.ranks() == 1);
  for (int r = 0; r < ts.retained_count(); ++r) CHECK(ts.order[r][0] == w.core[r]);
}

TEST_CASE("lattice orderings: fixed lexicographic offsets, identical for all k") {
  LatticeWorld w(8, 0.8, -4, 14);
  auto ts = build_trailing_system(*w.net, w.core, 4);
  for (int r = 0; r < ts.retained_count(); ++r) {
    const Vec yk = w.net->center(ts.order[r][0]);
    CHECK(ts.order[r][0] == w.core[r]);
    // the four unit neighbors in lexicographic order of absolute coords
    const Vec expected[4] = {vec2(-1, 0), vec2(0, -1), vec2(0, 1), vec2(1, 0)};
    for (int i = 1; i <= 4; ++i) {
      const Vec off = w.net->center(ts.order[r][i]) - yk;
      CHECK((off - expected[i - 1]).norm() < 1e-14);
    }
  }
}

TEST_CASE("trailing distances are nondecreasing in the rank") {
  LatticeWorld w(8, 0.8, -4, 14);
  auto ts = build_trailing_system(*w.net, w.core, 12);
  for (int r = 0; r < ts.retained_count(); ++r) {
    const Vec yk = w.net->center(ts.order[r][0]);
    double prev = 0.0;
    for (int i = 0; i < ts.ranks(); ++i) {
      const double d = geodesic_distance(w.net->model(), yk, w.net->center(ts.order[r][i]));
      CHECK(d >= prev - 1e-14);
      prev = d;
    }
  }
}

TEST_CASE("core not in the net is a domain error") {
  LatticeWorld w(8, 0.8, -2, 12);
  std::vector<int> bad = w.core;
  bad[0] = 10000;
  CHECK_THROWS_AS(build_trailing_system(*w.net, bad, 2), DomainError);
}

TEST_CASE("stabilization: translation-invariant pattern keeps every k") {
  LatticeWorld w(12, 0.8, -4, 18);
  auto ts = build_trailing_system(*w.net, w.core, 8);
  auto st = stabilize_intersections(ts, 0.8);
  CHECK(st.retained_count() == 12);
  CHECK(st.stabilized);
  // pattern symmetric, reflexive
  for (int i = 0; i < st.ranks(); ++i) {
    bool self = false;
    for (int j : st.isect[i]) self |= (j == i);
    CHECK(self);
  }
}

TEST_CASE("separated balls: J_i = {i} when 2 rho is below the net separation") {
  LatticeWorld w(10, 0.45, -4, 16);  // 2 rho = 0.9 < 1
  auto ts = build_trailing_system(*w.net, w.core, 6);
  auto st = stabilize_intersections(ts, 0.45);
  for (int i = 0; i < st.ranks(); ++i) {
    REQUIRE(st.isect[i].size() == 1);
    CHECK(st.isect[i][0] == i);
  }
}

TEST_CASE("|J_i| stays below the covering multiplicity") {
  LatticeWorld w(10, 0.8, -4, 16);
  auto ts = build_trailing_system(*w.net, w.core, 12);
  auto st = stabilize_intersections(ts, 0.8);
  const int mult = covering_multiplicity(*w.net, 2.0 * 0.8);
  for (int i = 0; i < st.ranks(); ++i)
    CHECK(static_cast<int>(st.isect[i].size()) <= mult);
}

TEST_CASE("transitions on the lattice are exact translations, constant in k") {
  LatticeWorld w(16, 0.8, -4, 22);
  auto ts = build_trailing_system(*w.net, w.core, 8);
  auto st = stabilize_intersections(ts, 0.8);
  auto table = estimate_transition_limits(st, 8, 1e-9);

  const auto tail = st.tail_positions();
  for (auto& [key, est] : table) {
    auto [i, j] = key;
    CHECK(est.converged());
    CHECK(est.residual() < 1e-12);
    // expected translation from the (k-independent) lattice offsets
    const int r0 = tail.front();
    const Vec hij = w.net->center(st.order[r0][j]) - w.net->center(st.order[r0][i]);
    Vec xi = vec2(0.31, -0.12);
    CHECK((est.eval(xi) - (xi + hij)).norm() < 1e-12);
    if (i == j) {
      CHECK((est.eval(xi) - xi).norm() == 0.0);  // psi_ii = id exactly
    }
  }
}

TEST_CASE("cocycle residual is bounded by twice the transition tolerance") {
  LatticeWorld w(16, 0.8, -4, 22);
  auto ts = build_trailing_system(*w.net, w.core, 8);
  auto st = stabilize_intersections(ts, 0.8);
  const double tol = 1e-9;
  auto table = estimate_transition_limits(st, 8, tol);

  int checked = 0;
  for (auto& [kij, est_lj] : table) {
    auto [l, j] = kij;
    for (int i = 0; i < st.ranks(); ++i) {
      if (!table.count({j, i}) || !table.count({l, i})) continue;
      const Vec xi = vec2(0.1, 0.2);
      const Vec via = table.at({l, j}).eval(table.at({j, i}).eval(xi));
      const Vec direct = table.at({l, i}).eval(xi);
      CHECK((via - direct).norm() <= 2.0 * tol);
      ++checked;
    }
  }
  CHECK(checked > 10);
}

TEST_CASE("transition inversion and jacobian bounds") {
  LatticeWorld w(16, 0.8, -4, 22);
  auto ts = build_trailing_system(*w.net, w.core, 8);
  auto st = stabilize_intersections(ts, 0.8);
  const double tol = 1e-9;
  auto table = estimate_transition_limits(st, 8, tol);
  for (auto& [key, est] : table) {
    auto [i, j] = key;
    if (i == j) continue;
    REQUIRE(table.count({j, i}) == 1);
    const auto& inv = table.at({j, i});
    // probe overlap points: psi_ji maps them into Omega_rho
    for (double t : {-0.3, 0.0, 0.3}) {
      const Vec xi = vec2(t, 0.1);
      const Vec img = inv.eval(xi);  // chart j -> chart i? (j,i) maps i-coords
      if (img.norm() < 0.8) {
        CHECK((est.eval(img) - xi).norm() <= 2.0 * tol);
      }
    }
    CHECK(est.bound_c1() <= 1.0 + 1e-6);  // translations: |Dpsi| = 1
  }
}

TEST_CASE("limit metric: euclidean lattice gives the identity field") {
  LatticeWorld w(16, 0.8, -4, 22);
  auto ts = build_trailing_system(*w.net, w.core, 4);
  auto st = stabilize_intersections(ts, 0.8);
  auto grid = QuadratureGrid::ball(2, 0.8, 10);
  auto lm = estimate_limit_metric(st, 0, grid, 1e-8);
  CHECK(lm.converged);
  for (int k = 0; k < grid.count(); ++k)
    CHECK((lm.field.g[k] - Mat::Identity(2, 2)).norm() < 1e-7);
  CHECK((lm.at_origin - Mat::Identity(2, 2)).norm() < 1e-6);
  CHECK(lm.origin_d1 < 1e-3);
}

TEST_CASE("limit metric on the perturbed model: bump left behind gives a flat limit") {
  MetricBump bump;
  bump.center = vec2(-6.0, 0.0);
  bump.radius = 4.0;
  bump.amplitude = 0.12;
  auto model = ManifoldModel::perturbed_euclidean(2, bump);
  REQUIRE(model.injectivity_floor() > 6.4);

  std::vector<Vec> centers;
  std::vector<int> core(16, -1);
  for (int i = -1; i <= 20; ++i)
    for (int j = -2; j <= 2; ++j) {
      centers.push_back(vec2(i, j));
      for (int k = 1; k <= 16; ++k)
        if (i == k && j == 0) core[k - 1] = static_cast<int>(centers.size()) - 1;
    }
  std::vector<Ball> region = {Ball{vec2(0.0, 0.0), 0.3}};
  DiscreteNet net(&model, centers, 0.8, 0.6, region, true, 1);

  // early charts graze the bump support; the tail is flat
  auto early_chart = net.chart(net.nearest(vec2(-1.0, 0.0)));
  const Mat J = early_chart.jacobian(vec2(-1.2, 0.0));
  Mat g(2, 2);
  const Vec x = early_chart.forward(vec2(-1.2, 0.0));
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b) g(a, b) = model.tangent_inner(x, J.col(a), J.col(b));
  CHECK((g - Mat::Identity(2, 2)).norm() > 1e-3);  // genuinely curved early on

  auto ts = build_trailing_system(net, core, 4);
  auto st = stabilize_intersections(ts, 0.8);
  auto grid = QuadratureGrid::ball(2, 0.8, 8);
  auto lm = estimate_limit_metric(st, 0, grid, 1e-6);
  CHECK(lm.converged);
  for (int k = 0; k < grid.count(); ++k)
    CHECK((lm.field.g[k] - Mat::Identity(2, 2)).norm() < 1e-6);
}

TEST_CASE("limit partition sums to one through the transitions") {
  LatticeWorld w(16, 0.8, -4, 22);
  PartitionOfUnity pu(w.net.get());
  auto ts = build_trailing_system(*w.net, w.core, 8);
  auto st = stabilize_intersections(ts, 0.8);
  auto table = estimate_transition_limits(st, 8, 1e-9);

  std::vector<ChartFunction> eta(st.ranks());
  for (int i = 0; i < st.ranks(); ++i) {
    auto lp = estimate_limit_partition(st, pu, i, 32, 1e-9);
    CHECK(lp.converged);
    eta[i] = std::move(lp.eta);
  }

  // sum over i in J_j of eta_i o psi_ij = 1 on the completeness zone
  const double zone = completeness_radius(st);
  CHECK(zone >= 0.8);  // covers a full chart-0 ball
  const auto tail = st.tail_positions();
  int checked = 0;
  for (int j = 0; j < st.ranks(); ++j) {
    const Vec hj = w.net->center(st.order[tail.front()][j]) -
                   w.net->center(st.order[tail.front()][0]);
    for (double tx : {-0.5, 0.0, 0.4}) {
      for (double ty : {-0.4, 0.2}) {
        const Vec xi = vec2(tx, ty);
        if (xi.norm() >= 0.8) continue;
        if ((xi + hj).norm() > zone) continue;  // outside the truncation zone
        double sum = 0.0;
        for (int i : st.isect[j]) sum += eta[i].value(table.at({i, j}).eval(xi));
        CHECK(std::abs(sum - 1.0) < 1e-6);
        ++checked;
      }
    }
  }
  CHECK(checked > 12);
}
