#include "decomp/grid.hpp"

#include <cmath>

namespace decomp {

void gauss_legendre(int n, Vec& nodes, Vec& weights) {
  if (n < 1) throw DomainError("gauss_legendre: order must be >= 1");
  nodes.resize(n);
  weights.resize(n);
  const double pi = std::acos(-1.0);
  for (int i = 0; i < n; ++i) {
    // Newton iteration from the Chebyshev estimate of the i-th root.
    double x = std::cos(pi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = x;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      dp = n * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-15) break;
    }
    nodes[i] = x;
    weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
  }
}

QuadratureGrid QuadratureGrid::ball(int dim, double radius, int radial_res) {
  if (radius <= 0.0) throw DomainError("QuadratureGrid::ball: radius must be positive");
  if (radial_res < 2) throw DomainError("QuadratureGrid::ball: need at least 2 radial nodes");

  QuadratureGrid g;
  g.dim = dim;
  g.radius = radius;
  const double pi = std::acos(-1.0);

  Vec rn, rw;
  gauss_legendre(radial_res, rn, rw);

  if (dim == 2) {
    const int na = 2 * radial_res;
    g.nodes.resize(2, radial_res * na);
    g.weights.resize(radial_res * na);
    int idx = 0;
    for (int i = 0; i < radial_res; ++i) {
      const double r = 0.5 * radius * (rn[i] + 1.0);
      const double wr = 0.5 * radius * rw[i] * r;  // r dr
      for (int j = 0; j < na; ++j) {
        const double th = 2.0 * pi * j / na;
        g.nodes(0, idx) = r * std::cos(th);
        g.nodes(1, idx) = r * std::sin(th);
        g.weights[idx] = wr * (2.0 * pi / na);
        ++idx;
      }
    }
    return g;
  }

  if (dim == 3) {
    Vec cn, cw;
    gauss_legendre(radial_res, cn, cw);  // cos(theta) on [-1,1]
    const int na = 2 * radial_res;
    g.nodes.resize(3, radial_res * radial_res * na);
    g.weights.resize(radial_res * radial_res * na);
    int idx = 0;
    for (int i = 0; i < radial_res; ++i) {
      const double r = 0.5 * radius * (rn[i] + 1.0);
      const double wr = 0.5 * radius * rw[i] * r * r;  // r^2 dr
      for (int m = 0; m < radial_res; ++m) {
        const double c = cn[m];
        const double s = std::sqrt(std::max(0.0, 1.0 - c * c));
        for (int j = 0; j < na; ++j) {
          const double ph = 2.0 * pi * j / na;
          g.nodes(0, idx) = r * s * std::cos(ph);
          g.nodes(1, idx) = r * s * std::sin(ph);
          g.nodes(2, idx) = r * c;
          g.weights[idx] = wr * cw[m] * (2.0 * pi / na);
          ++idx;
        }
      }
    }
    return g;
  }

  throw DomainError("QuadratureGrid::ball: only dimensions 2 and 3 are supported");
}

int CartesianGrid::count() const {
  int c = 1;
  for (int d = 0; d < dim; ++d) c *= points_per_axis();
  return c;
}

Vec CartesianGrid::node(int flat) const {
  Vec x(dim);
  const int ppa = points_per_axis();
  for (int d = 0; d < dim; ++d) {
    const int i = flat % ppa;
    flat /= ppa;
    x[d] = -half + i * h();
  }
  return x;
}

CartesianField::CartesianField(const CartesianGrid& grid, int components)
    : grid_(grid),
      components_(components),
      data_(static_cast<std::size_t>(grid.count()) * components, 0.0) {}

double CartesianField::value(const Vec& xi, int comp) const {
  const int ppa = grid_.points_per_axis();
  const double h = grid_.h();
  const int dim = grid_.dim;

  // Cell index and local coordinates, clamped to the box.
  int base[3] = {0, 0, 0};
  double frac[3] = {0.0, 0.0, 0.0};
  for (int d = 0; d < dim; ++d) {
    double t = (xi[d] + grid_.half) / h;
    if (t < 0.0) t = 0.0;
    if (t > grid_.res) t = grid_.res;
    int i = static_cast<int>(t);
    if (i >= grid_.res) i = grid_.res - 1;
    base[d] = i;
    frac[d] = t - i;
  }

  double acc = 0.0;
  const int corners = 1 << dim;
  for (int c = 0; c < corners; ++c) {
    double w = 1.0;
    int flat = 0;
    int stride = 1;
    for (int d = 0; d < dim; ++d) {
      const int bit = (c >> d) & 1;
      w *= bit ? frac[d] : (1.0 - frac[d]);
      flat += (base[d] + bit) * stride;
      stride *= ppa;
    }
    acc += w * at(flat, comp);
  }
  return acc;
}

Vec CartesianField::values(const Vec& xi) const {
  Vec out(components_);
  for (int c = 0; c < components_; ++c) out[c] = value(xi, c);
  return out;
}

}  // namespace decomp
