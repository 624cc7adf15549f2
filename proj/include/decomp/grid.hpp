#pragma once

#include "decomp/common.hpp"

namespace decomp {

// Gauss-Legendre rule on [-1, 1].
void gauss_legendre(int n, Vec& nodes, Vec& weights);

// Quadrature nodes and weights over the ball Omega_r in R^N, N = 2 or 3.
// Product rule: Gauss-Legendre in the radial (and polar, N = 3) factor,
// uniform in the angular factor, with the volume element folded into the
// weights. The weights sum to the exact Lebesgue volume of the ball.
struct QuadratureGrid {
  int dim = 0;
  double radius = 0.0;
  Mat nodes;    // dim x count
  Vec weights;  // count

  int count() const { return static_cast<int>(weights.size()); }

  // radial_res = number of radial Gauss points; angular resolution scales
  // with it. Throws DomainError for unsupported dimensions.
  static QuadratureGrid ball(int dim, double radius, int radial_res);
};

// Corner-aligned uniform lattice on [-half, half]^dim.
struct CartesianGrid {
  int dim = 0;
  double half = 0.0;
  int res = 0;  // cells per axis

  double h() const { return 2.0 * half / res; }
  int points_per_axis() const { return res + 1; }
  int count() const;
  Vec node(int flat) const;
};

// Vector-valued samples on a CartesianGrid with multilinear interpolation.
// Queries outside the box are clamped to it.
class CartesianField {
 public:
  CartesianField() = default;
  CartesianField(const CartesianGrid& grid, int components);

  const CartesianGrid& grid() const { return grid_; }
  int components() const { return components_; }
  bool empty() const { return data_.empty(); }

  double& at(int flat, int comp) { return data_[static_cast<std::size_t>(flat) * components_ + comp]; }
  double at(int flat, int comp) const { return data_[static_cast<std::size_t>(flat) * components_ + comp]; }

  double value(const Vec& xi, int comp) const;
  Vec values(const Vec& xi) const;  // all components at once

  const std::vector<double>& raw() const { return data_; }
  std::vector<double>& raw() { return data_; }

 private:
  CartesianGrid grid_;
  int components_ = 0;
  std::vector<double> data_;
};

}  // namespace decomp
