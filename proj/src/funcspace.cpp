#include "decomp/funcspace.hpp"

#include <cmath>

namespace decomp {

namespace {
constexpr double kGradStep = 1.0e-4;
}

ManifoldFunction::ManifoldFunction(const ManifoldModel* model, Eval eval, Grad grad,
                                   std::vector<Ball> support, std::string label)
    : model_(model),
      eval_(std::move(eval)),
      grad_(std::move(grad)),
      support_(std::move(support)),
      label_(std::move(label)) {}

ManifoldFunction ManifoldFunction::zero(const ManifoldModel& model) {
  return ManifoldFunction(&model, nullptr, nullptr, {}, "zero");
}

bool ManifoldFunction::inside_support(const Vec& x) const {
  // Conservative: the lower bound may admit points slightly outside the
  // geodesic ball, where the evaluator still returns its own zero.
  for (const Ball& b : support_)
    if (model_->distance_lower_bound(x, b.center) <= b.radius) return true;
  return false;
}

double ManifoldFunction::operator()(const Vec& x) const {
  if (!eval_ || !inside_support(x)) return 0.0;
  return eval_(x);
}

Vec ManifoldFunction::differential(const Vec& x) const {
  const int a = model_->ambient_dim();
  if (support_.empty()) return Vec::Zero(a);
  bool near = false;  // FD probes reach slightly outside the support
  for (const Ball& b : support_)
    if (model_->distance_lower_bound(x, b.center) <= b.radius + 10.0 * kGradStep) near = true;
  if (!near) return Vec::Zero(a);
  if (grad_) return grad_(x);
  Vec g(a);
  for (int i = 0; i < a; ++i) {
    Vec xp = x, xm = x;
    xp[i] += kGradStep;
    xm[i] -= kGradStep;
    g[i] = ((*this)(model_->project(xp)) - (*this)(model_->project(xm))) / (2.0 * kGradStep);
  }
  return g;
}

bool ManifoldFunction::touches(const Vec& center, double r) const {
  for (const Ball& b : support_)
    if (model_->distance_lower_bound(center, b.center) < r + b.radius) return true;
  return false;
}

ManifoldFunction ManifoldFunction::difference(const ManifoldFunction& f,
                                              const ManifoldFunction& g) {
  if (g.is_zero()) return f;
  const ManifoldFunction fc = f, gc = g;
  std::vector<Ball> support = f.support_;
  support.insert(support.end(), g.support_.begin(), g.support_.end());
  const ManifoldModel* model = f.model_ ? f.model_ : g.model_;
  return ManifoldFunction(
      model, [fc, gc](const Vec& x) { return fc(x) - gc(x); },
      [fc, gc](const Vec& x) -> Vec { return fc.differential(x) - gc.differential(x); },
      std::move(support), f.label() + "-" + g.label());
}

ManifoldFunction ManifoldFunction::sum(const ManifoldFunction& f, const ManifoldFunction& g) {
  if (g.is_zero()) return f;
  if (f.is_zero()) return g;
  const ManifoldFunction fc = f, gc = g;
  std::vector<Ball> support = f.support_;
  support.insert(support.end(), g.support_.begin(), g.support_.end());
  return ManifoldFunction(
      f.model_, [fc, gc](const Vec& x) { return fc(x) + gc(x); },
      [fc, gc](const Vec& x) -> Vec { return fc.differential(x) + gc.differential(x); },
      std::move(support), f.label() + "+" + g.label());
}

ChartFunction ChartFunction::materialize(int dim, double half, int res,
                                         const std::function<double(const Vec&)>& f,
                                         const std::function<Vec(const Vec&)>& grad) {
  ChartFunction out;
  CartesianGrid grid{dim, half, res};
  out.values_ = CartesianField(grid, 1);
  out.grads_ = CartesianField(grid, dim);
  for (int k = 0; k < grid.count(); ++k) {
    const Vec xi = grid.node(k);
    out.values_.at(k, 0) = f(xi);
    Vec g(dim);
    if (grad) {
      g = grad(xi);
    } else {
      for (int i = 0; i < dim; ++i) {
        Vec xp = xi, xm = xi;
        xp[i] += kGradStep;
        xm[i] -= kGradStep;
        g[i] = (f(xp) - f(xm)) / (2.0 * kGradStep);
      }
    }
    for (int i = 0; i < dim; ++i) out.grads_.at(k, i) = g[i];
  }
  out.exact_ = f;
  if (grad) out.exact_grad_ = grad;
  return out;
}

ChartFunction ChartFunction::zero(int dim, double half, int res) {
  ChartFunction out;
  CartesianGrid grid{dim, half, res};
  out.values_ = CartesianField(grid, 1);
  out.grads_ = CartesianField(grid, dim);
  return out;
}

ChartFunction ChartFunction::average(const std::vector<const ChartFunction*>& parts) {
  if (parts.empty()) throw DomainError("ChartFunction::average: no inputs");
  ChartFunction out = *parts.front();
  const std::size_t nv = out.values_.raw().size();
  const std::size_t ng = out.grads_.raw().size();
  for (std::size_t p = 1; p < parts.size(); ++p) {
    if (parts[p]->values_.raw().size() != nv)
      throw DomainError("ChartFunction::average: grids differ");
    for (std::size_t i = 0; i < nv; ++i) out.values_.raw()[i] += parts[p]->values_.raw()[i];
    for (std::size_t i = 0; i < ng; ++i) out.grads_.raw()[i] += parts[p]->grads_.raw()[i];
  }
  const double inv = 1.0 / static_cast<double>(parts.size());
  for (double& v : out.values_.raw()) v *= inv;
  for (double& v : out.grads_.raw()) v *= inv;
  // exact evaluators of the average, if every part carries them
  bool all_exact = true, all_grad = true;
  for (const auto* p : parts) {
    all_exact &= p->has_exact();
    all_grad &= p->has_exact_grad();
  }
  out.exact_ = nullptr;
  out.exact_grad_ = nullptr;
  if (all_exact) {
    std::vector<std::function<double(const Vec&)>> fs;
    for (const auto* p : parts) fs.push_back(p->exact_);
    out.exact_ = [fs, inv](const Vec& xi) {
      double acc = 0.0;
      for (const auto& f : fs) acc += f(xi);
      return acc * inv;
    };
  }
  if (all_grad) {
    std::vector<std::function<Vec(const Vec&)>> gs;
    for (const auto* p : parts) gs.push_back(p->exact_grad_);
    out.exact_grad_ = [gs, inv](const Vec& xi) -> Vec {
      Vec acc = gs.front()(xi);
      for (std::size_t q = 1; q < gs.size(); ++q) acc += gs[q](xi);
      return acc * inv;
    };
  }
  return out;
}

NetQuadrature::NetQuadrature(const DiscreteNet& net, int radial_res)
    : net_(&net),
      grid_(QuadratureGrid::ball(net.model().dim(), net.rho(), radial_res)),
      radial_res_(radial_res),
      pu_(&net),
      curved_(net.size()),
      state_(net.size(), 0),
      chi_(net.size()),
      chi_st_(net.size()),
      pos_st_(net.size()),
      identity_(Mat::Identity(net.model().dim(), net.model().dim())) {}

Vec NetQuadrature::node_offset(int off, int k) const {
  Vec xi = grid_.nodes.col(k);
  if (off > 0) {
    const int axis = (off - 1) / 2;
    xi[axis] += (off % 2 ? fd_step() : -fd_step());
  }
  return xi;
}

void NetQuadrature::ensure_chi(int chart) const {
  if (chi_[chart]) return;
  std::vector<double> c(grid_.count());
  for (int k = 0; k < grid_.count(); ++k) c[k] = pu_.weight(chart, position(chart, k));
  chi_[chart] = std::move(c);
}

void NetQuadrature::ensure_stencil(int chart) const {
  if (chi_st_[chart]) return;
  const int n = net_->model().dim();
  const NormalChart& ch = net_->chart(chart);
  std::vector<std::vector<double>> cs(1 + 2 * n);
  std::vector<std::vector<Vec>> ps(1 + 2 * n);
  for (int off = 0; off < 1 + 2 * n; ++off) {
    cs[off].resize(grid_.count());
    ps[off].resize(grid_.count());
    for (int k = 0; k < grid_.count(); ++k) {
      const Vec xi = node_offset(off, k);
      const Vec x = off == 0 ? position(chart, k) : ch.forward(xi);
      ps[off][k] = x;
      cs[off][k] = pu_.weight(chart, x);
    }
  }
  chi_st_[chart] = std::move(cs);
  pos_st_[chart] = std::move(ps);
}

double NetQuadrature::chi(int chart, int k) const {
  ensure_chi(chart);
  return (*chi_[chart])[k];
}

double NetQuadrature::chi_offset(int chart, int off, int k) const {
  ensure_stencil(chart);
  return (*chi_st_[chart])[off][k];
}

Vec NetQuadrature::position_offset(int chart, int off, int k) const {
  ensure_stencil(chart);
  return (*pos_st_[chart])[off][k];
}

void NetQuadrature::ensure(int chart) const {
  if (state_[chart] != 0) return;
  const ManifoldModel& m = net_->model();
  bool flat = m.kind() == ManifoldKind::Euclidean;
  if (m.kind() == ManifoldKind::PerturbedEuclidean) {
    const auto& b = *m.bump();
    flat = (net_->center(chart) - b.center).norm() > b.radius + net_->chart_radius() + 0.05;
  }
  if (flat) {
    state_[chart] = 1;
    return;
  }
  Curved c;
  const NormalChart& ch = net_->chart(chart);
  c.pos.resize(grid_.count());
  c.jac.resize(grid_.count());
  for (int k = 0; k < grid_.count(); ++k) {
    c.pos[k] = ch.forward(grid_.nodes.col(k));
    c.jac[k] = ch.jacobian(grid_.nodes.col(k));
  }
  c.metric = pullback_metric(ch, grid_);
  curved_[chart] = std::move(c);
  state_[chart] = 2;
}

bool NetQuadrature::flat(int chart) const {
  ensure(chart);
  return state_[chart] == 1;
}

Vec NetQuadrature::position(int chart, int k) const {
  ensure(chart);
  if (state_[chart] == 1)
    return net_->center(chart) + net_->chart(chart).frame().basis * grid_.nodes.col(k);
  return curved_[chart]->pos[k];
}

Mat NetQuadrature::jacobian(int chart, int k) const {
  ensure(chart);
  if (state_[chart] == 1) return net_->chart(chart).frame().basis;
  return curved_[chart]->jac[k];
}

const Mat& NetQuadrature::metric_inv(int chart, int k) const {
  ensure(chart);
  if (state_[chart] == 1) return identity_;
  return curved_[chart]->metric.g_inv[k];
}

double NetQuadrature::sqrt_det(int chart, int k) const {
  ensure(chart);
  if (state_[chart] == 1) return 1.0;
  return curved_[chart]->metric.sqrt_det[k];
}

double lp_norm(const ManifoldFunction& f, const DiscreteNet& net, const PartitionOfUnity& pu,
               double p, NetQuadrature& quad) {
  if (p < 1.0) throw DomainError("lp_norm: p must be >= 1");
  if (f.is_zero()) return 0.0;
  const QuadratureGrid& grid = quad.grid();
  double total = 0.0;
  for (int i = 0; i < net.size(); ++i) {
    if (!f.touches(net.center(i), net.rho())) continue;
    double acc = 0.0;
    for (int k = 0; k < grid.count(); ++k) {
      const double chi = quad.chi(i, k);
      if (chi == 0.0) continue;
      const double v = f(quad.position(i, k));
      if (v == 0.0) continue;
      acc += grid.weights[k] * chi * std::pow(std::abs(v), p) * quad.sqrt_det(i, k);
    }
    total += acc;
  }
  return std::pow(total, 1.0 / p);
}

double h12_inner(const ManifoldFunction& f, const ManifoldFunction& h, const DiscreteNet& net,
                 const PartitionOfUnity& pu, NetQuadrature& quad) {
  if (f.is_zero() || h.is_zero()) return 0.0;
  const QuadratureGrid& grid = quad.grid();
  const int n = net.model().dim();
  double total = 0.0;
  for (int i = 0; i < net.size(); ++i) {
    if (!f.touches(net.center(i), net.rho()) || !h.touches(net.center(i), net.rho())) continue;
    double acc = 0.0;
    for (int k = 0; k < grid.count(); ++k) {
      const double chi = quad.chi(i, k);
      if (chi == 0.0) continue;
      const Vec x = quad.position(i, k);
      const Mat J = quad.jacobian(i, k);
      const Vec df = f.differential(x);
      const Vec dh = h.differential(x);
      Vec cf(n), ch(n);
      for (int a = 0; a < n; ++a) {
        cf[a] = df.dot(J.col(a));
        ch[a] = dh.dot(J.col(a));
      }
      const double gradterm = cf.dot(quad.metric_inv(i, k) * ch);
      acc += grid.weights[k] * chi * (gradterm + f(x) * h(x)) * quad.sqrt_det(i, k);
    }
    total += acc;
  }
  return total;
}

double h12_norm(const ManifoldFunction& f, const DiscreteNet& net, const PartitionOfUnity& pu,
                NetQuadrature& quad) {
  return std::sqrt(std::max(0.0, h12_inner(f, f, net, pu, quad)));
}

double equivalent_norm(const ManifoldFunction& f, const DiscreteNet& net,
                       const PartitionOfUnity& pu, NetQuadrature& quad) {
  if (f.is_zero()) return 0.0;
  const QuadratureGrid& grid = quad.grid();
  const int n = net.model().dim();
  const double h = NetQuadrature::fd_step();
  double total = 0.0;
  for (int i = 0; i < net.size(); ++i) {
    if (!f.touches(net.center(i), net.rho())) continue;
    auto piece = [&](int off, int k) {
      const double chi = quad.chi_offset(i, off, k);
      return chi == 0.0 ? 0.0 : chi * f(quad.position_offset(i, off, k));
    };
    double acc = 0.0;
    for (int k = 0; k < grid.count(); ++k) {
      const double v = piece(0, k);
      double g2 = 0.0;
      for (int a = 0; a < n; ++a)
        g2 += sq((piece(2 * a + 1, k) - piece(2 * a + 2, k)) / (2.0 * h));
      acc += grid.weights[k] * (g2 + v * v);
    }
    total += acc;
  }
  return std::sqrt(total);
}

double ball_lp_mass(const ManifoldFunction& f, int chart, double p, NetQuadrature& quad) {
  if (f.is_zero()) return 0.0;
  const DiscreteNet& net = quad.net();
  if (!f.touches(net.center(chart), net.rho())) return 0.0;
  const QuadratureGrid& grid = quad.grid();
  double acc = 0.0;
  for (int k = 0; k < grid.count(); ++k) {
    const double v = f(quad.position(chart, k));
    if (v == 0.0) continue;
    acc += grid.weights[k] * std::pow(std::abs(v), p) * quad.sqrt_det(chart, k);
  }
  return acc;
}

WeakLimitResult weak_limit_estimate(const std::vector<ChartFunction>& pullbacks,
                                    int dictionary_size, double tol,
                                    const QuadratureGrid& pairing_grid) {
  const int K = static_cast<int>(pullbacks.size());
  if (K < 8) throw DomainError("weak_limit_estimate: need at least 8 pullbacks");
  const int dim = pullbacks.front().dim();
  const double rho = pairing_grid.radius;
  const int D = std::max(1, dictionary_size);

  // Tensor-product bump atoms on a D^dim grid of centers.
  const double w = 1.2 * rho / D;
  auto atom = [&](int flat, const Vec& xi) {
    double v = 1.0;
    for (int d = 0; d < dim; ++d) {
      const int j = flat % D;
      flat /= D;
      const double c = -rho + (j + 0.5) * 2.0 * rho / D;
      v *= bump_template(std::abs(xi[d] - c) / w);
      if (v == 0.0) return 0.0;
    }
    return v;
  };
  int atoms = 1;
  for (int d = 0; d < dim; ++d) atoms *= D;

  // Dictionary coefficients of the last-quarter tail plus one earlier
  // reference block to measure oscillation against.
  const int tail = std::max(2, K / 4);
  const int from = K - 2 * tail;  // compare the last two quarters
  Mat coef(atoms, 2 * tail);
  for (int k = from; k < K; ++k) {
    for (int m = 0; m < atoms; ++m) {
      double acc = 0.0;
      for (int q = 0; q < pairing_grid.count(); ++q) {
        const Vec xi = pairing_grid.nodes.col(q);
        const double a = atom(m, xi);
        if (a == 0.0) continue;
        acc += pairing_grid.weights[q] * a * pullbacks[k].value(xi);
      }
      coef(m, k - from) = acc;
    }
  }

  double osc = 0.0;
  for (int m = 0; m < atoms; ++m)
    osc = std::max(osc, coef.row(m).maxCoeff() - coef.row(m).minCoeff());

  WeakLimitResult out;
  out.residual = osc;
  out.converged = osc < tol;
  std::vector<const ChartFunction*> tail_parts;
  for (int k = K - tail; k < K; ++k) tail_parts.push_back(&pullbacks[k]);
  out.limit = ChartFunction::average(tail_parts);
  return out;
}

}  // namespace decomp
