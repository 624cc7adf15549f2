#pragma once

#include "decomp/funcspace.hpp"

#include <map>
#include <utility>

namespace decomp {

// Distance orderings of the net around a moving core y_k, truncated at
// rank i_max, over a retained subset of the original indices k. After
// stabilization the ball-intersection pattern J_i is constant across the
// retained k.
struct TrailingSystem {
  const DiscreteNet* net = nullptr;
  std::vector<int> core;  // net index of y_k, one per input position
  int i_max = 0;
  std::vector<int> retained;            // input positions kept, ascending (0-based)
  std::vector<int> k_labels;            // original 1-based k per retained position
  std::vector<std::vector<int>> order;  // per retained position: net indices, rank 0..i_max
  std::vector<std::vector<int>> isect;  // J_i per rank i, set by stabilization
  bool stabilized = false;

  // Retained position of the original index k, or -1.
  int position_of_k(int k) const {
    for (int r = 0; r < static_cast<int>(k_labels.size()); ++r)
      if (k_labels[r] == k) return r;
    return -1;
  }

  int ranks() const { return static_cast<int>(order.empty() ? 0 : order.front().size()); }
  int retained_count() const { return static_cast<int>(retained.size()); }
  // Net chart of the rank-i trailing point at retained position r.
  const NormalChart& chart(int r, int i) const { return net->chart(order[r][i]); }
  // Positions of the last quarter of the retained indices (at least 2).
  std::vector<int> tail_positions() const;
  // All pairs (i, j) with j in J_i (includes the diagonal).
  std::vector<std::pair<int, int>> pair_set() const;
};

// Orders the net around each core point by distance, ties broken
// lexicographically on ambient coordinates.
TrailingSystem build_trailing_system(const DiscreteNet& net, const std::vector<int>& core,
                                     int i_max, std::vector<int> k_labels = {});

// Retains the subsequence of k whose ball-intersection pattern matches the
// pattern at the largest k (the finite-k surrogate of the diagonal
// subsequence); records J_i. Throws ExtractionError if fewer than 8 indices
// survive.
TrailingSystem stabilize_intersections(const TrailingSystem& ts, double rho);

// Radius of the zone around the core where the truncated enumeration is
// complete: inside distance R of y_k every center whose bump can be active
// is among the ranks, so sums over ranks agree with sums over the whole
// net. Identities involving the limit partition hold on this zone only.
double completeness_radius(const TrailingSystem& ts);

// psi_{ij} = lim_k e_{y_{k;i}}^{-1} o e_{y_{k;j}} (chart-j coordinates to
// chart-i coordinates), estimated as the tail average over the retained k
// and certified by the sup oscillation over a sample grid on Omega_{2rho}.
class TransitionMapEstimate {
 public:
  TransitionMapEstimate() = default;
  TransitionMapEstimate(const TrailingSystem* ts, int i, int j);

  int i() const { return i_; }
  int j() const { return j_; }
  bool converged() const { return converged_; }
  double residual() const { return residual_; }
  double bound_c0() const { return c0_; }
  double bound_c1() const { return c1_; }
  double bound_c2() const { return c2_; }

  // Tail-average value; the identity for i == j.
  Vec eval(const Vec& xi) const;
  // Central-difference jacobian of eval at step 1e-4.
  Mat jacobian(const Vec& xi) const;

  void certify(int grid_res, double tol);  // fills converged/residual/bounds

 private:
  const TrailingSystem* ts_ = nullptr;
  int i_ = 0, j_ = 0;
  std::vector<int> tail_;
  bool converged_ = false;
  double residual_ = 0.0;
  double c0_ = 0.0, c1_ = 0.0, c2_ = 0.0;
};

using TransitionTable = std::map<std::pair<int, int>, TransitionMapEstimate>;

// Estimates all pairs of the stabilized system. Unconverged pairs are
// flagged, not fatal; downstream assembly refuses them.
TransitionTable estimate_transition_limits(const TrailingSystem& ts, int grid_res, double tol);

struct LimitMetricResult {
  MetricField field;       // on the supplied quadrature grid
  Mat at_origin;           // limit metric at xi = 0
  double origin_d1 = 0.0;  // sup FD first derivative of g at 0
  bool converged = false;
  double residual = 0.0;
};

// Tail average over the retained k of the pullback metrics of the rank-i
// trailing charts.
LimitMetricResult estimate_limit_metric(const TrailingSystem& ts, int rank,
                                        const QuadratureGrid& grid, double tol);

struct LimitPartitionResult {
  ChartFunction eta;
  bool converged = false;
  double residual = 0.0;
};

// eta_i = lim_k chi_{y_{k;i}} o e_{y_{k;i}} on Omega_rho.
LimitPartitionResult estimate_limit_partition(const TrailingSystem& ts,
                                              const PartitionOfUnity& pu, int rank, int res,
                                              double tol);

}  // namespace decomp
