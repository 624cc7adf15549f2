#include "decomp/geometry.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>

namespace decomp {

namespace {

constexpr double kLargeFloorEuclidean = 1.0e6;
// Hyperboloid coordinates grow like cosh(d); beyond d ~ 10 the Minkowski
// pairing of nearby points cancels below 1e-6 precision in doubles, so the
// finite cap standing in for the infinite injectivity radius stays at 8.
constexpr double kLargeFloorHyperbolic = 8.0;
constexpr double kGeodesicStep = 0.01;           // ~1e-8 local error per unit length
constexpr double kChartFdStep = 1.0e-4;

double safe_acosh(double t) {
  if (t <= 1.0) return 0.0;
  if (t > 1e8) return std::log(2.0) + std::log(t);  // acosh(t) ~ log(2t), avoids t^2 overflow
  return std::acosh(t);
}

}  // namespace

double minkowski(const Vec& u, const Vec& v) {
  double s = -u[0] * v[0];
  for (int i = 1; i < u.size(); ++i) s += u[i] * v[i];
  return s;
}

ManifoldModel ManifoldModel::euclidean(int dim) {
  if (dim < 2) throw DomainError("ManifoldModel: dimension must be >= 2");
  ManifoldModel m;
  m.kind_ = ManifoldKind::Euclidean;
  m.dim_ = dim;
  m.injectivity_floor_ = kLargeFloorEuclidean;
  return m;
}

ManifoldModel ManifoldModel::hyperbolic(int dim) {
  if (dim < 2) throw DomainError("ManifoldModel: dimension must be >= 2");
  ManifoldModel m;
  m.kind_ = ManifoldKind::Hyperbolic;
  m.dim_ = dim;
  m.injectivity_floor_ = kLargeFloorHyperbolic;
  return m;
}

ManifoldModel ManifoldModel::perturbed_euclidean(int dim, const MetricBump& bump) {
  if (dim < 2) throw DomainError("ManifoldModel: dimension must be >= 2");
  if (bump.center.size() != dim)
    throw ConstructionError("MetricBump: center dimension mismatch");
  if (bump.radius <= 0.0) throw ConstructionError("MetricBump: radius must be positive");
  // Smallest metric eigenvalue is 1 + min(amplitude, 0); keep it >= 1/2.
  if (bump.amplitude <= -0.5)
    throw ConstructionError("MetricBump: amplitude must exceed -0.5 (SPD floor 1/2)");
  if (bump.amplitude > 4.0)
    throw ConstructionError("MetricBump: amplitude above 4 is not supported");
  ManifoldModel m;
  m.kind_ = ManifoldKind::PerturbedEuclidean;
  m.dim_ = dim;
  m.bump_ = bump;
  m.injectivity_floor_ = m.estimate_injectivity_floor();
  return m;
}

Vec ManifoldModel::base_point() const {
  Vec x = Vec::Zero(ambient_dim());
  if (kind_ == ManifoldKind::Hyperbolic) x[0] = 1.0;
  return x;
}

double ManifoldModel::conformal_factor(const Vec& x) const {
  if (!bump_) return 1.0;
  const double t = (x - bump_->center).norm() / bump_->radius;
  return 1.0 + bump_->amplitude * bump_template(t);
}

Vec ManifoldModel::grad_conformal_factor(const Vec& x) const {
  Vec g = Vec::Zero(dim_);
  if (!bump_) return g;
  const Vec d = x - bump_->center;
  const double r = d.norm();
  if (r < 1e-14) return g;
  const double t = r / bump_->radius;
  const double dp = bump_->amplitude * bump_template_d1(t) / bump_->radius;
  if (dp == 0.0) return g;
  return (dp / r) * d;
}

double ManifoldModel::tangent_inner(const Vec& x, const Vec& u, const Vec& v) const {
  switch (kind_) {
    case ManifoldKind::Euclidean:
      return u.dot(v);
    case ManifoldKind::Hyperbolic:
      return minkowski(u, v);
    case ManifoldKind::PerturbedEuclidean:
      return conformal_factor(x) * u.dot(v);
  }
  return 0.0;
}

Vec ManifoldModel::project(const Vec& x) const {
  if (kind_ != ManifoldKind::Hyperbolic) return x;
  const double q = -minkowski(x, x);
  if (q <= 0.0) throw DomainError("project: point is not timelike");
  return x / std::sqrt(q);
}

bool ManifoldModel::segment_clear_of_bump(const Vec& a, const Vec& b, double slack) const {
  if (!bump_) return true;
  const Vec d = b - a;
  const double len2 = d.squaredNorm();
  double t = 0.0;
  if (len2 > 0.0) t = std::clamp((bump_->center - a).dot(d) / len2, 0.0, 1.0);
  const double dist = (a + t * d - bump_->center).norm();
  return dist > bump_->radius + slack;
}

bool ManifoldModel::segment_in_core(const Vec& a, const Vec& b) const {
  // The profile is constant on the plateau |x - c| <= 0.6 R, so the metric
  // is a constant multiple of the identity there and geodesics between
  // plateau points are straight (the plateau ball is convex).
  if (!bump_) return false;
  const double core = 0.6 * bump_->radius;
  return (a - bump_->center).norm() <= core && (b - bump_->center).norm() <= core;
}

Vec ManifoldModel::geodesic_rhs(const Vec& x, const Vec& u) const {
  // Conformal metric g = psi * I:
  //   Gamma^k_ij = (d_i psi delta_jk + d_j psi delta_ik - d_k psi delta_ij) / (2 psi)
  // so -Gamma(u,u) = (|u|^2 grad psi - 2 (u . grad psi) u) / (2 psi).
  const double psi = conformal_factor(x);
  const Vec gp = grad_conformal_factor(x);
  return (u.squaredNorm() * gp - 2.0 * u.dot(gp) * u) / (2.0 * psi);
}

Vec ManifoldModel::integrate_geodesic(const Vec& x, const Vec& v) const {
  const double len = v.norm();
  if (len == 0.0) return x;
  const long n = static_cast<long>(std::ceil(len / kGeodesicStep));
  if (n > 100000000L) throw NumericalError("exp: geodesic step underflow", static_cast<double>(n));
  const double h = 1.0 / static_cast<double>(n);

  Vec p = x, u = v;
  Vec k1p(dim_), k1u(dim_), k2p(dim_), k2u(dim_), k3p(dim_), k3u(dim_), k4p(dim_), k4u(dim_);
  for (long s = 0; s < n; ++s) {
    k1p = u;
    k1u = geodesic_rhs(p, u);
    k2p = u + 0.5 * h * k1u;
    k2u = geodesic_rhs(p + 0.5 * h * k1p, k2p);
    k3p = u + 0.5 * h * k2u;
    k3u = geodesic_rhs(p + 0.5 * h * k2p, k3p);
    k4p = u + h * k3u;
    k4u = geodesic_rhs(p + h * k3p, k4p);
    p += (h / 6.0) * (k1p + 2.0 * k2p + 2.0 * k3p + k4p);
    u += (h / 6.0) * (k1u + 2.0 * k2u + 2.0 * k3u + k4u);
  }
  return p;
}

Vec ManifoldModel::exp(const Vec& x, const Vec& v) const {
  switch (kind_) {
    case ManifoldKind::Euclidean:
      return x + v;
    case ManifoldKind::Hyperbolic: {
      const double s2 = minkowski(v, v);
      if (s2 <= 0.0) return x;  // zero tangent vector
      const double s = std::sqrt(s2);
      return project(std::cosh(s) * x + (std::sinh(s) / s) * v);
    }
    case ManifoldKind::PerturbedEuclidean: {
      // Outside the bump support Gamma vanishes, so a geodesic whose
      // straight prolongation stays clear of the support is that line.
      if (segment_clear_of_bump(x, x + v, 0.0)) return x + v;
      if (segment_in_core(x, x + v)) return x + v;
      return integrate_geodesic(x, v);
    }
  }
  return x;
}

Vec ManifoldModel::newton_log(const Vec& x, const Vec& q) const {
  Vec v = q - x;  // straight-line initial guess
  const double scale = 1.0 + q.norm();
  const double tol = 1e-10 * scale;
  Vec best = v;
  double best_res = std::numeric_limits<double>::infinity();

  auto update_best = [&](const Vec& vv, double res) {
    if (res < best_res) {
      best_res = res;
      best = vv;
    }
  };

  // Fixed-point stage: exp(x, .) is a small perturbation of v -> x + v at
  // our amplitudes, so v <- v - (exp(x,v) - q) contracts quickly and costs
  // one flow per step.
  for (int it = 0; it < 30; ++it) {
    const Vec r = exp(x, v) - q;
    const double res = r.norm();
    update_best(v, res);
    if (res < tol) return v;
    v -= r;
  }

  v = best;
  for (int it = 0; it < 25; ++it) {
    const Vec r = exp(x, v) - q;
    const double res = r.norm();
    update_best(v, res);
    if (res < tol) return v;
    Mat J(dim_, dim_);
    const double h = 1e-6 * std::max(1.0, v.norm());
    for (int i = 0; i < dim_; ++i) {
      Vec vp = v, vm = v;
      vp[i] += h;
      vm[i] -= h;
      J.col(i) = (exp(x, vp) - exp(x, vm)) / (2.0 * h);
    }
    v -= J.colPivHouseholderQr().solve(r);
  }
  // The flow itself carries ~1e-8 integration error; accept the best
  // iterate when it is within that regime.
  if (best_res < 1e-7 * scale) return best;
  throw NumericalError("log: shooting did not converge", best_res);
}

Vec ManifoldModel::log(const Vec& x, const Vec& q) const {
  switch (kind_) {
    case ManifoldKind::Euclidean:
      return q - x;
    case ManifoldKind::Hyperbolic: {
      const double a = -minkowski(x, q);
      if (a <= 1.0 + 1e-15) return Vec::Zero(ambient_dim());
      const double d = safe_acosh(a);
      const Vec u = q - a * x;  // tangent at x, |u|^2 = a^2 - 1
      return (d / std::sqrt(a * a - 1.0)) * u;
    }
    case ManifoldKind::PerturbedEuclidean: {
      if (segment_clear_of_bump(x, q, 0.0)) return q - x;
      if (segment_in_core(x, q)) return q - x;  // straight, reparametrized
      return newton_log(x, q);
    }
  }
  return q - x;
}

double ManifoldModel::distance(const Vec& x, const Vec& q) const {
  switch (kind_) {
    case ManifoldKind::Euclidean:
      return (q - x).norm();
    case ManifoldKind::Hyperbolic:
      return safe_acosh(-minkowski(x, q));
    case ManifoldKind::PerturbedEuclidean: {
      const double de = (q - x).norm();
      if (de == 0.0) return 0.0;
      // With amplitude >= 0 the metric dominates the flat one, so a
      // straight segment clear of the support is the minimizing geodesic.
      // With amplitude < 0 a shortcut could dip toward the bump; the lens
      // bound below confines any shorter competitor path.
      double slack = 0.0;
      if (bump_ && bump_->amplitude < 0.0) {
        const double m = 1.0 + bump_->amplitude;
        slack = 0.5 * de * std::sqrt(1.0 / m - 1.0);
      }
      if (segment_clear_of_bump(x, q, slack)) return de;
      if (segment_in_core(x, q)) return std::sqrt(conformal_factor(bump_->center)) * de;
      // Deterministic orientation keeps the result exactly symmetric.
      bool swap = false;
      for (int i = 0; i < dim_; ++i) {
        if (x[i] != q[i]) {
          swap = x[i] > q[i];
          break;
        }
      }
      const Vec& a = swap ? q : x;
      const Vec& b = swap ? x : q;
      Vec v = newton_log(a, b);
      return std::sqrt(tangent_inner(a, v, v));
    }
  }
  return 0.0;
}

double ManifoldModel::distance_lower_bound(const Vec& x, const Vec& q) const {
  switch (kind_) {
    case ManifoldKind::Euclidean:
      return (q - x).norm();
    case ManifoldKind::Hyperbolic:
      return distance(x, q);  // closed form, already cheap
    case ManifoldKind::PerturbedEuclidean:
      return std::sqrt(1.0 + std::min(0.0, bump_->amplitude)) * (q - x).norm();
  }
  return 0.0;
}

double ManifoldModel::pu_distance(const Vec& x, const Vec& q) const {
  if (kind_ != ManifoldKind::PerturbedEuclidean) return distance(x, q);
  const double de = (q - x).norm();
  if (de == 0.0) return 0.0;
  if (segment_clear_of_bump(x, q, 0.0)) return de;
  if (segment_in_core(x, q)) return std::sqrt(conformal_factor(bump_->center)) * de;
  // Conformal length of the straight segment: an upper bound for the
  // geodesic distance, smooth in both endpoints, and exact in the two
  // cases above. Simpson with 8 intervals; the integrand is C2.
  double acc = 0.0;
  const int n = 8;
  for (int i = 0; i <= n; ++i) {
    const double t = static_cast<double>(i) / n;
    const double w = (i == 0 || i == n) ? 1.0 : (i % 2 ? 4.0 : 2.0);
    acc += w * std::sqrt(conformal_factor(x + t * (q - x)));
  }
  return acc / (3.0 * n) * de;
}

double ManifoldModel::estimate_injectivity_floor() const {
  // Conservative conjugate-point sampling: shoot pairs of nearby geodesics
  // from points around the bump and accept a radius only while the pair
  // separation keeps growing (no focusing).
  const double cap = kLargeFloorEuclidean;
  if (!bump_ || bump_->amplitude == 0.0) return cap;

  const double R = bump_->radius;
  std::mt19937_64 rng(0x9d2c5680u);
  std::vector<Vec> bases;
  bases.push_back(bump_->center);
  for (int s = 0; s < 10; ++s) {
    Vec d(dim_);
    for (int i = 0; i < dim_; ++i) d[i] = 2.0 * uniform01(rng) - 1.0;
    d.normalize();
    bases.push_back(bump_->center + (0.4 + 2.0 * uniform01(rng)) * R * d);
  }

  const double radii[] = {2.0 * R, 4.0 * R, 8.0 * R, 16.0 * R};
  double ok = R;
  const double delta = 1e-3;
  for (double L : radii) {
    bool clean = true;
    for (const Vec& x : bases) {
      for (int s = 0; s < 12 && clean; ++s) {
        Vec u(dim_);
        for (int i = 0; i < dim_; ++i) u[i] = 2.0 * uniform01(rng) - 1.0;
        u.normalize();
        Vec u2 = u;
        u2[s % dim_] += delta;
        u2.normalize();
        // Jacobi-field proxy: the separation of two nearby geodesics must
        // keep growing; any shrinkage signals focusing before radius L.
        double prev = 0.0;
        for (int step = 1; step <= 10; ++step) {
          const double t = 0.1 * L * step;
          const double sep = (integrate_geodesic(x, t * u) - integrate_geodesic(x, t * u2)).norm();
          if (sep < 0.98 * prev) {
            clean = false;
            break;
          }
          prev = sep;
        }
      }
      if (!clean) break;
    }
    if (!clean) break;
    ok = L;
  }
  return std::min(cap, 0.9 * ok);
}

namespace {

Mat seeded_raw_basis(int rows, int cols, std::mt19937_64& rng) {
  Mat raw(rows, cols);
  for (int j = 0; j < cols; ++j)
    for (int i = 0; i < rows; ++i) raw(i, j) = 2.0 * uniform01(rng) - 1.0;
  return raw;
}

Frame gram_schmidt(const ManifoldModel& model, const Vec& x, Mat cand) {
  const int n = model.dim();
  for (int j = 0; j < n; ++j) {
    Vec v = cand.col(j);
    for (int i = 0; i < j; ++i)
      v -= model.tangent_inner(x, v, cand.col(i)) * cand.col(i);
    const double nrm2 = model.tangent_inner(x, v, v);
    if (nrm2 < 1e-12) throw ConstructionError("frame: degenerate basis candidate");
    cand.col(j) = v / std::sqrt(nrm2);
  }
  return Frame{x, cand};
}

Mat project_columns_to_tangent(const ManifoldModel& model, const Vec& x, Mat raw) {
  if (model.kind() != ManifoldKind::Hyperbolic) return raw;
  for (int j = 0; j < raw.cols(); ++j) {
    Vec v = raw.col(j);
    raw.col(j) = v + minkowski(v, x) * x;  // <x,x> = -1
  }
  return raw;
}

}  // namespace

Frame make_frame(const ManifoldModel& model, const Vec& x, std::uint64_t seed) {
  std::uint64_t s = seed;
  for (int attempt = 0; attempt < 8; ++attempt) {
    std::mt19937_64 rng(s);
    Mat raw = seeded_raw_basis(model.ambient_dim(), model.dim(), rng);
    raw = project_columns_to_tangent(model, x, raw);
    try {
      return gram_schmidt(model, x, raw);
    } catch (const ConstructionError&) {
      s = mix_seed(s, 0x5851f42d4c957f2dULL);
    }
  }
  throw ConstructionError("make_frame: no non-degenerate seeded basis found");
}

Frame aligned_frame(const ManifoldModel& model, const Vec& x) {
  const int n = model.dim();
  const int a = model.ambient_dim();
  Mat cand = Mat::Zero(a, n);
  if (model.kind() == ManifoldKind::Hyperbolic) {
    for (int j = 0; j < n; ++j) cand(j + 1, j) = 1.0;
    cand = project_columns_to_tangent(model, x, cand);
  } else {
    for (int j = 0; j < n; ++j) cand(j, j) = 1.0;
  }
  return gram_schmidt(model, x, cand);
}

Vec exp_map(const ManifoldModel& model, const Vec& x, const Frame& frame, const Vec& v) {
  if (v.norm() >= model.injectivity_floor())
    throw DomainError("exp_map: |v| exceeds the injectivity floor");
  if (v.isZero(0.0)) return x;
  return model.exp(x, frame.basis * v);
}

Vec log_map(const ManifoldModel& model, const Vec& x, const Frame& frame, const Vec& q) {
  const Vec va = model.log(x, q);
  // Coordinates of a tangent vector in a g-orthonormal frame are its
  // metric pairings with the frame columns.
  Vec v(model.dim());
  for (int j = 0; j < model.dim(); ++j)
    v[j] = model.tangent_inner(x, va, frame.basis.col(j));
  return v;
}

double geodesic_distance(const ManifoldModel& model, const Vec& x, const Vec& q) {
  return model.distance(x, q);
}

Vec NormalChart::forward(const Vec& xi) const { return exp_map(*model_, center_, frame_, xi); }

Vec NormalChart::inverse(const Vec& q) const { return log_map(*model_, center_, frame_, q); }

Mat NormalChart::jacobian(const Vec& xi) const {
  const int n = model_->dim();
  Mat J(model_->ambient_dim(), n);
  for (int i = 0; i < n; ++i) {
    Vec xp = xi, xm = xi;
    xp[i] += kChartFdStep;
    xm[i] -= kChartFdStep;
    J.col(i) = (forward(xp) - forward(xm)) / (2.0 * kChartFdStep);
  }
  return J;
}

NormalChart make_normal_chart(const ManifoldModel& model, const Vec& y, double radius,
                              std::uint64_t seed) {
  if (radius >= model.injectivity_floor())
    throw DomainError("make_normal_chart: radius must stay below the injectivity floor");
  return NormalChart(&model, y, radius, make_frame(model, y, seed));
}

NormalChart make_aligned_chart(const ManifoldModel& model, const Vec& y, double radius) {
  if (radius >= model.injectivity_floor())
    throw DomainError("make_normal_chart: radius must stay below the injectivity floor");
  return NormalChart(&model, y, radius, aligned_frame(model, y));
}

MetricField MetricField::identity(const QuadratureGrid& grid, int dim) {
  MetricField f;
  f.grid = &grid;
  f.g.assign(grid.count(), Mat::Identity(dim, dim));
  f.g_inv.assign(grid.count(), Mat::Identity(dim, dim));
  f.sqrt_det.assign(grid.count(), 1.0);
  return f;
}

MetricField pullback_metric(const NormalChart& chart, const QuadratureGrid& grid) {
  if (grid.radius > chart.radius() + 1e-12)
    throw DomainError("pullback_metric: grid exceeds the chart domain");
  const ManifoldModel& model = chart.model();
  const int n = model.dim();

  MetricField f;
  f.grid = &grid;
  f.g.resize(grid.count());
  f.g_inv.resize(grid.count());
  f.sqrt_det.resize(grid.count());

  for (int k = 0; k < grid.count(); ++k) {
    const Vec xi = grid.nodes.col(k);
    const Mat J = chart.jacobian(xi);
    const Vec x = chart.forward(xi);
    Mat g(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = i; j < n; ++j) g(i, j) = g(j, i) = model.tangent_inner(x, J.col(i), J.col(j));

    Eigen::SelfAdjointEigenSolver<Mat> es(g);
    if (es.eigenvalues().minCoeff() < 0.5 - 1e-9)
      throw NumericalError("pullback_metric: SPD floor 1/2 violated",
                           es.eigenvalues().minCoeff());
    f.g[k] = g;
    f.g_inv[k] = g.inverse();
    f.sqrt_det[k] = std::sqrt(g.determinant());
  }
  return f;
}

}  // namespace decomp
