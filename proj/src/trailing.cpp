#include "decomp/trailing.hpp"

#include <algorithm>
#include <limits>
#include <cmath>

namespace decomp {

namespace {

bool lex_less(const Vec& a, const Vec& b) {
  for (int i = 0; i < a.size(); ++i) {
    if (a[i] < b[i]) return true;
    if (a[i] > b[i]) return false;
  }
  return false;
}

// Sample nodes inside the ball of the given radius (cartesian lattice).
std::vector<Vec> ball_samples(int dim, double radius, int res) {
  CartesianGrid grid{dim, radius, res};
  std::vector<Vec> out;
  for (int k = 0; k < grid.count(); ++k) {
    Vec xi = grid.node(k);
    if (xi.norm() <= radius) out.push_back(std::move(xi));
  }
  return out;
}

}  // namespace

std::vector<int> TrailingSystem::tail_positions() const {
  const int n = retained_count();
  const int t = std::max(2, n / 4);
  std::vector<int> out;
  for (int r = n - t; r < n; ++r) out.push_back(r);
  return out;
}

std::vector<std::pair<int, int>> TrailingSystem::pair_set() const {
  std::vector<std::pair<int, int>> out;
  for (int i = 0; i < static_cast<int>(isect.size()); ++i)
    for (int j : isect[i]) out.emplace_back(i, j);
  return out;
}

TrailingSystem build_trailing_system(const DiscreteNet& net, const std::vector<int>& core,
                                     int i_max, std::vector<int> k_labels) {
  if (core.empty()) throw DomainError("build_trailing_system: empty core sequence");
  for (int c : core)
    if (c < 0 || c >= net.size())
      throw DomainError("build_trailing_system: core point is not a net point");
  if (i_max < 0) throw DomainError("build_trailing_system: i_max must be >= 0");
  if (k_labels.empty()) {
    k_labels.resize(core.size());
    for (std::size_t k = 0; k < core.size(); ++k) k_labels[k] = static_cast<int>(k) + 1;
  }
  if (k_labels.size() != core.size())
    throw DomainError("build_trailing_system: one label per core entry required");

  TrailingSystem ts;
  ts.net = &net;
  ts.core = core;
  ts.i_max = i_max;
  ts.k_labels = std::move(k_labels);
  const int ranks = std::min(i_max + 1, net.size());

  std::vector<int> all(net.size());
  for (int i = 0; i < net.size(); ++i) all[i] = i;

  for (std::size_t k = 0; k < core.size(); ++k) {
    const Vec& yk = net.center(core[k]);
    std::vector<int> idx = all;
    std::vector<double> dist(net.size());
    for (int i = 0; i < net.size(); ++i) dist[i] = net.model().distance(yk, net.center(i));
    std::sort(idx.begin(), idx.end(), [&](int a, int b) {
      if (dist[a] != dist[b]) return dist[a] < dist[b];
      return lex_less(net.center(a), net.center(b));
    });
    idx.resize(ranks);
    ts.retained.push_back(static_cast<int>(k));
    ts.order.push_back(std::move(idx));
  }
  return ts;
}

TrailingSystem stabilize_intersections(const TrailingSystem& ts, double rho) {
  if (ts.ranks() < 1) throw DomainError("stabilize_intersections: system has no ranks");
  const DiscreteNet& net = *ts.net;
  const int R = ts.ranks();

  // Intersection pattern per retained position: balls B(.,rho) meet iff
  // the centers are closer than 2 rho.
  auto pattern_of = [&](int r) {
    std::vector<bool> p;
    p.reserve(R * R);
    for (int i = 0; i < R; ++i)
      for (int j = 0; j < R; ++j)
        p.push_back(net.model().distance(net.center(ts.order[r][i]),
                                         net.center(ts.order[r][j])) < 2.0 * rho);
    return p;
  };

  const int n = ts.retained_count();
  const auto target = pattern_of(n - 1);  // the tail pattern is the limit
  TrailingSystem out;
  out.net = ts.net;
  out.core = ts.core;
  out.i_max = ts.i_max;
  for (int r = 0; r < n; ++r) {
    if (pattern_of(r) == target) {
      out.retained.push_back(ts.retained[r]);
      out.k_labels.push_back(ts.k_labels[r]);
      out.order.push_back(ts.order[r]);
    }
  }
  if (out.retained_count() < 8)
    throw ExtractionError(
        "stabilize_intersections: no stable subsequence of length >= 8; raise K_max");

  out.isect.assign(R, {});
  for (int i = 0; i < R; ++i)
    for (int j = 0; j < R; ++j)
      if (target[i * R + j]) out.isect[i].push_back(j);
  out.stabilized = true;
  return out;
}

double completeness_radius(const TrailingSystem& ts) {
  const DiscreteNet& net = *ts.net;
  double zone = std::numeric_limits<double>::infinity();
  std::vector<char> ranked(net.size());
  for (int r = 0; r < ts.retained_count(); ++r) {
    std::fill(ranked.begin(), ranked.end(), 0);
    for (int idx : ts.order[r]) ranked[idx] = 1;
    const Vec& yk = net.center(ts.order[r][0]);
    double dmin = std::numeric_limits<double>::infinity();
    for (int p = 0; p < net.size(); ++p)
      if (!ranked[p]) dmin = std::min(dmin, net.model().distance(yk, net.center(p)));
    zone = std::min(zone, dmin - net.rho());
  }
  return zone;
}

TransitionMapEstimate::TransitionMapEstimate(const TrailingSystem* ts, int i, int j)
    : ts_(ts), i_(i), j_(j) {
  if (!ts->stabilized)
    throw DomainError("TransitionMapEstimate: system must be stabilized first");
  tail_ = ts->tail_positions();
}

Vec TransitionMapEstimate::eval(const Vec& xi) const {
  if (i_ == j_) return xi;  // psi_ii = id exactly
  Vec acc = Vec::Zero(xi.size());
  for (int r : tail_) acc += ts_->chart(r, i_).inverse(ts_->chart(r, j_).forward(xi));
  return acc / static_cast<double>(tail_.size());
}

Mat TransitionMapEstimate::jacobian(const Vec& xi) const {
  const int n = static_cast<int>(xi.size());
  Mat J(n, n);
  const double h = 1e-4;
  for (int a = 0; a < n; ++a) {
    Vec xp = xi, xm = xi;
    xp[a] += h;
    xm[a] -= h;
    J.col(a) = (eval(xp) - eval(xm)) / (2.0 * h);
  }
  return J;
}

void TransitionMapEstimate::certify(int grid_res, double tol) {
  const DiscreteNet& net = *ts_->net;
  const int dim = net.model().dim();
  const double two_rho = 2.0 * net.rho();
  const double a_bound = 0.75 * net.model().injectivity_floor();
  const auto nodes = ball_samples(dim, two_rho, grid_res);

  if (i_ == j_) {
    converged_ = true;
    residual_ = 0.0;
    c0_ = two_rho;
    c1_ = 1.0;
    c2_ = 0.0;
    return;
  }

  double osc = 0.0;
  for (const Vec& xi : nodes) {
    Vec lo = Vec::Constant(dim, std::numeric_limits<double>::infinity());
    Vec hi = Vec::Constant(dim, -std::numeric_limits<double>::infinity());
    for (int r : tail_) {
      const Vec v = ts_->chart(r, i_).inverse(ts_->chart(r, j_).forward(xi));
      lo = lo.cwiseMin(v);
      hi = hi.cwiseMax(v);
      if (v.norm() >= a_bound)
        throw NumericalError("transition sample escapes Omega_a", v.norm());
    }
    osc = std::max(osc, (hi - lo).norm());
  }
  residual_ = osc;
  converged_ = osc < tol;

  // sampled derivative bounds of the limit map
  c0_ = 0.0;
  c1_ = 0.0;
  c2_ = 0.0;
  const double h = 1e-3;
  for (const Vec& xi : nodes) {
    if (xi.norm() > two_rho - 2.0 * h) continue;
    const Vec v = eval(xi);
    c0_ = std::max(c0_, v.norm());
    for (int a = 0; a < dim; ++a) {
      Vec xp = xi, xm = xi;
      xp[a] += h;
      xm[a] -= h;
      const Vec fp = eval(xp), fm = eval(xm);
      c1_ = std::max(c1_, ((fp - fm) / (2.0 * h)).norm());
      c2_ = std::max(c2_, ((fp - 2.0 * v + fm) / (h * h)).norm());
    }
  }
}

TransitionTable estimate_transition_limits(const TrailingSystem& ts, int grid_res, double tol) {
  if (!ts.stabilized)
    throw DomainError("estimate_transition_limits: system must be stabilized first");
  TransitionTable table;
  for (auto [i, j] : ts.pair_set()) {
    TransitionMapEstimate est(&ts, i, j);
    est.certify(grid_res, tol);
    table.emplace(std::make_pair(i, j), std::move(est));
  }
  return table;
}

LimitMetricResult estimate_limit_metric(const TrailingSystem& ts, int rank,
                                        const QuadratureGrid& grid, double tol) {
  if (!ts.stabilized)
    throw DomainError("estimate_limit_metric: system must be stabilized first");
  const int dim = ts.net->model().dim();
  const auto tail = ts.tail_positions();

  std::vector<MetricField> fields;
  fields.reserve(tail.size());
  for (int r : tail) fields.push_back(pullback_metric(ts.chart(r, rank), grid));

  LimitMetricResult out;
  out.field.grid = &grid;
  out.field.g.resize(grid.count());
  out.field.g_inv.resize(grid.count());
  out.field.sqrt_det.resize(grid.count());
  double osc = 0.0;
  for (int k = 0; k < grid.count(); ++k) {
    Mat acc = Mat::Zero(dim, dim);
    for (const auto& f : fields) acc += f.g[k];
    acc /= static_cast<double>(fields.size());
    for (const auto& f : fields) osc = std::max(osc, (f.g[k] - acc).norm());
    Eigen::SelfAdjointEigenSolver<Mat> es(acc);
    if (es.eigenvalues().minCoeff() < 0.5 - 1e-9)
      throw NumericalError("limit metric violates the SPD floor", es.eigenvalues().minCoeff());
    out.field.g[k] = acc;
    out.field.g_inv[k] = acc.inverse();
    out.field.sqrt_det[k] = std::sqrt(acc.determinant());
  }
  out.residual = osc;
  out.converged = osc < tol;

  // normal-coordinate law at the origin
  auto metric_at = [&](const Vec& xi) {
    Mat acc = Mat::Zero(dim, dim);
    for (int r : tail) {
      const NormalChart& ch = ts.chart(r, rank);
      const Mat J = ch.jacobian(xi);
      const Vec x = ch.forward(xi);
      Mat g(dim, dim);
      for (int a = 0; a < dim; ++a)
        for (int b = 0; b < dim; ++b)
          g(a, b) = ch.model().tangent_inner(x, J.col(a), J.col(b));
      acc += g;
    }
    return (acc / static_cast<double>(tail.size())).eval();
  };
  out.at_origin = metric_at(Vec::Zero(dim));
  const double h = 1e-3;
  double d1 = 0.0;
  for (int a = 0; a < dim; ++a) {
    Vec xp = Vec::Zero(dim), xm = Vec::Zero(dim);
    xp[a] += h;
    xm[a] -= h;
    d1 = std::max(d1, ((metric_at(xp) - metric_at(xm)) / (2.0 * h)).norm());
  }
  out.origin_d1 = d1;
  return out;
}

LimitPartitionResult estimate_limit_partition(const TrailingSystem& ts,
                                              const PartitionOfUnity& pu, int rank, int res,
                                              double tol) {
  if (!ts.stabilized)
    throw DomainError("estimate_limit_partition: system must be stabilized first");
  const double rho = ts.net->rho();
  const int dim = ts.net->model().dim();
  const auto tail = ts.tail_positions();

  std::vector<ChartFunction> samples;
  samples.reserve(tail.size());
  for (int r : tail) {
    const NormalChart& ch = ts.chart(r, rank);
    const int center = ts.order[r][rank];
    samples.push_back(ChartFunction::materialize(
        dim, rho, res, [&](const Vec& xi) { return pu.weight(center, ch.forward(xi)); }));
  }

  LimitPartitionResult out;
  std::vector<const ChartFunction*> ptrs;
  for (const auto& s : samples) ptrs.push_back(&s);
  out.eta = ChartFunction::average(ptrs);
  // exact tail-average evaluator; the trailing system and partition must
  // outlive the returned function
  const TrailingSystem* tsp = &ts;
  const PartitionOfUnity* pup = &pu;
  const auto tail_copy = tail;
  out.eta.set_exact([tsp, pup, rank, tail_copy](const Vec& xi) {
    double acc = 0.0;
    for (int r : tail_copy)
      acc += pup->weight(tsp->order[r][rank], tsp->chart(r, rank).forward(xi));
    return acc / static_cast<double>(tail_copy.size());
  });
  double osc = 0.0;
  for (std::size_t v = 0; v < samples.front().values().raw().size(); ++v) {
    double lo = samples.front().values().raw()[v], hi = lo;
    for (const auto& s : samples) {
      lo = std::min(lo, s.values().raw()[v]);
      hi = std::max(hi, s.values().raw()[v]);
    }
    osc = std::max(osc, hi - lo);
  }
  out.residual = osc;
  out.converged = osc < tol;
  return out;
}

}  // namespace decomp
