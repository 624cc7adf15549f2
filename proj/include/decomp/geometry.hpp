#pragma once

#include "decomp/common.hpp"
#include "decomp/grid.hpp"

#include <memory>
#include <optional>

namespace decomp {

enum class ManifoldKind { Euclidean, Hyperbolic, PerturbedEuclidean };

// Conformal metric bump: g = (1 + amplitude * profile(|x-c|/radius)) * I on
// a compact support ball. The profile is the C2 cutoff bump_template.
struct MetricBump {
  Vec center;
  double radius = 1.0;
  double amplitude = 0.0;
};

// An analytic Riemannian manifold of bounded geometry. Euclidean R^N,
// hyperbolic H^N in the hyperboloid model (ambient R^{N+1}, Minkowski
// form), or R^N with a compactly supported conformal perturbation.
//
// Points live in ambient coordinates; tangent vectors are ambient vectors
// tangent to the manifold at their base point. All members are const after
// construction and safe to call concurrently.
class ManifoldModel {
 public:
  static ManifoldModel euclidean(int dim);
  static ManifoldModel hyperbolic(int dim);
  static ManifoldModel perturbed_euclidean(int dim, const MetricBump& bump);

  ManifoldKind kind() const { return kind_; }
  int dim() const { return dim_; }
  int ambient_dim() const { return kind_ == ManifoldKind::Hyperbolic ? dim_ + 1 : dim_; }
  double injectivity_floor() const { return injectivity_floor_; }
  const std::optional<MetricBump>& bump() const { return bump_; }

  // Canonical base point: origin, or the hyperboloid apex (1,0,...,0).
  Vec base_point() const;

  // Riemannian inner product of tangent vectors u, v at x.
  double tangent_inner(const Vec& x, const Vec& u, const Vec& v) const;

  // Nearest-point retraction of an ambient point onto the manifold
  // (identity except for the hyperboloid). Used by ambient finite
  // differences of functions defined only on the manifold.
  Vec project(const Vec& x) const;

  // Geodesic with initial position x and initial velocity v (ambient,
  // tangent at x), evaluated at parameter 1. Closed form where available;
  // the perturbed model integrates the geodesic equation with a fixed-step
  // classical Runge-Kutta scheme, step chosen for ~1e-8 local truncation
  // error per unit length.
  Vec exp(const Vec& x, const Vec& v) const;

  // Inverse of exp: the initial velocity of the geodesic from x to q.
  // Closed form where available, else Newton shooting on the flow.
  Vec log(const Vec& x, const Vec& q) const;

  double distance(const Vec& x, const Vec& q) const;

  // A cheap lower bound for the geodesic distance, used to prune
  // support membership tests without shooting.
  double distance_lower_bound(const Vec& x, const Vec& q) const;

  // Distance surrogate used by partition-of-unity weights: the geodesic
  // distance on euclidean/hyperbolic models; on the perturbed model the
  // conformal length of the straight segment, which dominates the true
  // distance (so subordination to geodesic balls is preserved), matches
  // it exactly away from the profile ramp, and needs no shooting.
  double pu_distance(const Vec& x, const Vec& q) const;

  // Conformal factor of the perturbed metric (1 elsewhere).
  double conformal_factor(const Vec& x) const;

 private:
  ManifoldModel() = default;

  Vec grad_conformal_factor(const Vec& x) const;
  Vec geodesic_rhs(const Vec& x, const Vec& u) const;  // -Gamma(u,u)
  Vec integrate_geodesic(const Vec& x, const Vec& v) const;
  Vec newton_log(const Vec& x, const Vec& q) const;
  bool segment_clear_of_bump(const Vec& a, const Vec& b, double slack) const;
  bool segment_in_core(const Vec& a, const Vec& b) const;
  double estimate_injectivity_floor() const;

  ManifoldKind kind_ = ManifoldKind::Euclidean;
  int dim_ = 0;
  double injectivity_floor_ = 0.0;
  std::optional<MetricBump> bump_;
};

// Minkowski pairing -u0*v0 + sum ui*vi used by the hyperboloid model.
double minkowski(const Vec& u, const Vec& v);

// Orthonormal tangent basis at a point; columns of `basis` are ambient
// tangent vectors with tangent_inner(f_a, f_b) = delta_ab. Frames are
// per-point data and are not required to vary smoothly with the point.
struct Frame {
  Vec base;
  Mat basis;  // ambient_dim x dim
};

// Deterministic frame from a seed: metric-weighted Gram-Schmidt of a
// seeded pseudo-random basis. Same seed => bit-identical frame.
Frame make_frame(const ManifoldModel& model, const Vec& x, std::uint64_t seed);

// Axis-aligned frame: the canonical basis scaled to unit metric length
// (hyperboloid: projected canonical basis, orthonormalized). Used where
// chart transitions must be equivariant under model translations.
Frame aligned_frame(const ManifoldModel& model, const Vec& x);

Vec exp_map(const ManifoldModel& model, const Vec& x, const Frame& frame, const Vec& v);
Vec log_map(const ManifoldModel& model, const Vec& x, const Frame& frame, const Vec& q);
double geodesic_distance(const ManifoldModel& model, const Vec& x, const Vec& q);

// Geodesic normal coordinates e_y : Omega_radius -> B(y, radius).
class NormalChart {
 public:
  NormalChart() = default;
  NormalChart(const ManifoldModel* model, Vec center, double radius, Frame frame)
      : model_(model), center_(std::move(center)), radius_(radius), frame_(std::move(frame)) {}

  const ManifoldModel& model() const { return *model_; }
  const Vec& center() const { return center_; }
  double radius() const { return radius_; }
  const Frame& frame() const { return frame_; }

  Vec forward(const Vec& xi) const;   // e_y
  Vec inverse(const Vec& q) const;    // e_y^{-1}
  // Columns d e_y(xi) by central differences, step 1e-4.
  Mat jacobian(const Vec& xi) const;

 private:
  const ManifoldModel* model_ = nullptr;
  Vec center_;
  double radius_ = 0.0;
  Frame frame_;
};

NormalChart make_normal_chart(const ManifoldModel& model, const Vec& y, double radius,
                              std::uint64_t seed);
NormalChart make_aligned_chart(const ManifoldModel& model, const Vec& y, double radius);

// Pullback metric samples g_ij(xi) = g(d e_y dxi_i, d e_y dxi_j) on a
// quadrature grid, with inverses and volume densities.
struct MetricField {
  const QuadratureGrid* grid = nullptr;
  std::vector<Mat> g;
  std::vector<Mat> g_inv;
  std::vector<double> sqrt_det;

  static MetricField identity(const QuadratureGrid& grid, int dim);
};

MetricField pullback_metric(const NormalChart& chart, const QuadratureGrid& grid);

}  // namespace decomp
