#pragma once

#include "decomp/geometry.hpp"

namespace decomp {

// A rho_hat-separated set of centers whose rho-balls cover the region,
// together with one normal chart per center. Immutable after construction.
class DiscreteNet {
 public:
  DiscreteNet(const ManifoldModel* model, std::vector<Vec> centers, double rho, double rho_hat,
              std::vector<Ball> region, bool aligned_frames, std::uint64_t seed);

  const ManifoldModel& model() const { return *model_; }
  int size() const { return static_cast<int>(centers_.size()); }
  const Vec& center(int i) const { return centers_[i]; }
  const std::vector<Vec>& centers() const { return centers_; }
  const NormalChart& chart(int i) const { return charts_[i]; }
  double rho() const { return rho_; }
  double rho_hat() const { return rho_hat_; }
  double chart_radius() const { return chart_radius_; }
  const std::vector<Ball>& region() const { return region_; }

  // Index of the center nearest to x.
  int nearest(const Vec& x) const;
  // Indices of centers within geodesic distance r of x.
  std::vector<int> within(const Vec& x, double r) const;
  // Precomputed indices within 2*rho of center i (including i); any bump
  // overlapping B(center_i, rho) has its center in this list.
  const std::vector<int>& neighbors(int i) const { return neighbors_[i]; }

 private:
  const ManifoldModel* model_;
  std::vector<Vec> centers_;
  double rho_, rho_hat_, chart_radius_;
  std::vector<Ball> region_;
  std::vector<NormalChart> charts_;
  std::vector<std::vector<int>> neighbors_;
};

// Greedy maximal rho_hat-separated net over a dense candidate sampling of
// the region (farthest-point insertion, deterministic under seed).
DiscreteNet build_net(const ManifoldModel& model, const std::vector<Ball>& region, double rho,
                      double rho_hat, std::uint64_t seed, bool aligned_frames = false);

// Net from explicitly given centers (lattice orbits and the like); the
// separation and cover invariants are verified, not constructed.
DiscreteNet net_from_centers(const ManifoldModel& model, std::vector<Vec> centers,
                             const std::vector<Ball>& region, double rho, double rho_hat,
                             std::uint64_t seed, bool aligned_frames);

// Max number of centers within distance r of any dense-sample point.
int covering_multiplicity(const DiscreteNet& net, double r);

// chi_y(x) = b(d(x,y)/rho) / sum_y' b(d(x,y')/rho) with b the C2 radial
// cutoff; supported in B(y, rho), summing to one over the net region.
class PartitionOfUnity {
 public:
  explicit PartitionOfUnity(const DiscreteNet* net);

  const DiscreteNet& net() const { return *net_; }
  double rho() const { return net_->rho(); }

  // Weight of center i at the manifold point x.
  double weight(int i, const Vec& x) const;
  // All nonzero weights at x as (center, weight) pairs.
  std::vector<std::pair<int, double>> weights(const Vec& x) const;

 private:
  double raw(int i, const Vec& x) const;
  const DiscreteNet* net_;
};

PartitionOfUnity build_partition_of_unity(const ManifoldModel& model, const DiscreteNet& net);

// Sampled sup-norms of chi, grad chi, and the FD Hessian of chi for one
// center, taken over a grid in that center's chart.
struct PartitionDerivativeBounds {
  double c0 = 0.0, c1 = 0.0, c2 = 0.0;
};
PartitionDerivativeBounds partition_derivative_bounds(const PartitionOfUnity& pu, int center,
                                                      int grid_res);

}  // namespace decomp
