#include "decomp/covering.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace decomp {

namespace {

// Dense candidate sampling of the region: a coordinate grid of the given
// spacing in an aligned chart at each region ball's center.
Mat sample_region(const ManifoldModel& model, const std::vector<Ball>& region, double spacing) {
  std::vector<Vec> pts;
  const int n = model.dim();
  for (const Ball& ball : region) {
    if (ball.radius >= model.injectivity_floor())
      throw DomainError("sample_region: region ball exceeds the injectivity floor");
    auto chart = make_aligned_chart(model, ball.center, ball.radius);
    const int steps = std::max(1, static_cast<int>(std::ceil(ball.radius / spacing)));
    Vec xi(n);
    std::vector<int> idx(n, -steps);
    while (true) {
      for (int d = 0; d < n; ++d) xi[d] = idx[d] * spacing;
      if (xi.norm() <= ball.radius) pts.push_back(chart.forward(xi));
      int d = 0;
      while (d < n && ++idx[d] > steps) idx[d++] = -steps;
      if (d == n) break;
    }
  }
  Mat out(model.ambient_dim(), static_cast<int>(pts.size()));
  for (std::size_t i = 0; i < pts.size(); ++i) out.col(static_cast<int>(i)) = pts[i];
  return out;
}

}  // namespace

DiscreteNet::DiscreteNet(const ManifoldModel* model, std::vector<Vec> centers, double rho,
                         double rho_hat, std::vector<Ball> region, bool aligned_frames,
                         std::uint64_t seed)
    : model_(model),
      centers_(std::move(centers)),
      rho_(rho),
      rho_hat_(rho_hat),
      region_(std::move(region)) {
  if (!(rho / 2.0 < rho_hat && rho_hat < rho))
    throw DomainError("DiscreteNet: need rho/2 < rho_hat < rho");
  if (!(rho < model_->injectivity_floor() / 8.0))
    throw DomainError("DiscreteNet: need rho < r(M)/8");
  if (centers_.empty()) throw ConstructionError("DiscreteNet: no centers");

  chart_radius_ = std::min(3.0 * rho_, 0.9 * model_->injectivity_floor());
  charts_.reserve(centers_.size());
  for (std::size_t i = 0; i < centers_.size(); ++i) {
    charts_.push_back(aligned_frames
                          ? make_aligned_chart(*model_, centers_[i], chart_radius_)
                          : make_normal_chart(*model_, centers_[i], chart_radius_,
                                              mix_seed(seed, 0x100 + i)));
  }

  for (std::size_t i = 0; i < centers_.size(); ++i)
    for (std::size_t j = i + 1; j < centers_.size(); ++j)
      if (model_->distance(centers_[i], centers_[j]) < rho_hat_ - 1e-12)
        throw ConstructionError("DiscreteNet: separation rho_hat violated");

  neighbors_.resize(centers_.size());
  for (std::size_t i = 0; i < centers_.size(); ++i)
    for (std::size_t j = 0; j < centers_.size(); ++j)
      if (model_->distance(centers_[i], centers_[j]) < 2.0 * rho_)
        neighbors_[i].push_back(static_cast<int>(j));
}

int DiscreteNet::nearest(const Vec& x) const {
  int best = -1;
  double bd = std::numeric_limits<double>::infinity();
  for (int i = 0; i < size(); ++i) {
    const double d = model_->distance(x, centers_[i]);
    if (d < bd) {
      bd = d;
      best = i;
    }
  }
  return best;
}

std::vector<int> DiscreteNet::within(const Vec& x, double r) const {
  std::vector<int> out;
  for (int i = 0; i < size(); ++i)
    if (model_->distance(x, centers_[i]) < r) out.push_back(i);
  return out;
}

DiscreteNet build_net(const ManifoldModel& model, const std::vector<Ball>& region, double rho,
                      double rho_hat, std::uint64_t seed, bool aligned_frames) {
  if (!(rho / 2.0 < rho_hat && rho_hat < rho && rho < model.injectivity_floor() / 8.0))
    throw DomainError("build_net: need rho/2 < rho_hat < rho < r(M)/8");
  if (region.empty()) throw DomainError("build_net: empty region");

  const Mat cand = sample_region(model, region, rho_hat / 8.0);
  const int n = static_cast<int>(cand.cols());
  if (n == 0) throw DomainError("build_net: region produced no candidates");

  // Farthest-point insertion until every candidate is rho_hat-covered; the
  // result is maximal rho_hat-separated and rho-covers with margin.
  std::mt19937_64 rng(seed);
  std::vector<Vec> centers;
  Vec dmin = Vec::Constant(n, std::numeric_limits<double>::infinity());
  int next = static_cast<int>(rng() % static_cast<std::uint64_t>(n));
  while (true) {
    const Vec y = cand.col(next);
    centers.push_back(y);
    double far = 0.0;
    int argfar = 0;
    for (int i = 0; i < n; ++i) {
      const double d = model.distance(cand.col(i), y);
      if (d < dmin[i]) dmin[i] = d;
      if (dmin[i] > far) {
        far = dmin[i];
        argfar = i;
      }
    }
    if (far < rho_hat) break;
    next = argfar;
  }
  return DiscreteNet(&model, std::move(centers), rho, rho_hat, region, aligned_frames, seed);
}

DiscreteNet net_from_centers(const ManifoldModel& model, std::vector<Vec> centers,
                             const std::vector<Ball>& region, double rho, double rho_hat,
                             std::uint64_t seed, bool aligned_frames) {
  DiscreteNet net(&model, std::move(centers), rho, rho_hat, region, aligned_frames, seed);
  const Mat samples = sample_region(model, region, rho_hat / 4.0);
  for (int i = 0; i < samples.cols(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (int j = 0; j < net.size(); ++j)
      best = std::min(best, model.distance(samples.col(i), net.center(j)));
    if (best >= rho)
      throw ConstructionError("net_from_centers: centers do not rho-cover the region");
  }
  return net;
}

int covering_multiplicity(const DiscreteNet& net, double r) {
  if (r < net.rho()) throw DomainError("covering_multiplicity: r must be >= rho");
  const Mat samples = sample_region(net.model(), net.region(), net.rho_hat() / 4.0);
  int mult = 0;
  for (int i = 0; i < samples.cols(); ++i) {
    int count = 0;
    for (int j = 0; j < net.size(); ++j)
      if (net.model().distance(samples.col(i), net.center(j)) < r) ++count;
    mult = std::max(mult, count);
  }
  return mult;
}

PartitionOfUnity::PartitionOfUnity(const DiscreteNet* net) : net_(net) {}

double PartitionOfUnity::raw(int i, const Vec& x) const {
  return bump_template(net_->model().pu_distance(x, net_->center(i)) / net_->rho());
}

double PartitionOfUnity::weight(int i, const Vec& x) const {
  const double num = raw(i, x);
  if (num == 0.0) return 0.0;
  double den = 0.0;
  for (int j : net_->neighbors(i)) den += raw(j, x);
  return num / den;  // den >= num > 0
}

std::vector<std::pair<int, double>> PartitionOfUnity::weights(const Vec& x) const {
  std::vector<std::pair<int, double>> out;
  const int j0 = net_->nearest(x);
  if (j0 < 0 || net_->model().distance(x, net_->center(j0)) >= net_->rho()) return out;
  double den = 0.0;
  std::vector<std::pair<int, double>> raws;
  for (int j : net_->neighbors(j0)) {
    const double r = raw(j, x);
    if (r > 0.0) {
      raws.emplace_back(j, r);
      den += r;
    }
  }
  if (den == 0.0) return out;
  out.reserve(raws.size());
  for (auto& [j, r] : raws) out.emplace_back(j, r / den);
  return out;
}

PartitionOfUnity build_partition_of_unity(const ManifoldModel& model, const DiscreteNet& net) {
  if (&model != &net.model())
    throw DomainError("build_partition_of_unity: net belongs to a different model");
  PartitionOfUnity pu(&net);
  // cover-gap check: the normalizing sum must be bounded away from zero
  // over the net region
  const Mat samples = sample_region(model, net.region(), net.rho_hat() / 4.0);
  for (int s = 0; s < samples.cols(); ++s) {
    const Vec x = samples.col(s);
    const int j0 = net.nearest(x);
    double den = 0.0;
    for (int j : net.neighbors(j0))
      den += bump_template(model.pu_distance(x, net.center(j)) / net.rho());
    if (den < 1e-12)
      throw ConstructionError("build_partition_of_unity: cover gap at a region sample");
  }
  return pu;
}

PartitionDerivativeBounds partition_derivative_bounds(const PartitionOfUnity& pu, int center,
                                                      int grid_res) {
  const DiscreteNet& net = pu.net();
  const NormalChart& chart = net.chart(center);
  const double rho = net.rho();
  const double h = 1e-3;
  PartitionDerivativeBounds b;
  const int n = net.model().dim();

  CartesianGrid grid{n, rho, grid_res};
  auto chi = [&](const Vec& xi) { return pu.weight(center, chart.forward(xi)); };
  for (int k = 0; k < grid.count(); ++k) {
    const Vec xi = grid.node(k);
    if (xi.norm() > rho - 2.0 * h) continue;
    const double c = chi(xi);
    b.c0 = std::max(b.c0, std::abs(c));
    for (int i = 0; i < n; ++i) {
      Vec xp = xi, xm = xi;
      xp[i] += h;
      xm[i] -= h;
      const double fp = chi(xp), fm = chi(xm);
      b.c1 = std::max(b.c1, std::abs((fp - fm) / (2.0 * h)));
      b.c2 = std::max(b.c2, std::abs((fp - 2.0 * c + fm) / (h * h)));
      for (int j = i + 1; j < n; ++j) {
        Vec xpp = xi, xpm = xi, xmp = xi, xmm = xi;
        xpp[i] += h;
        xpp[j] += h;
        xpm[i] += h;
        xpm[j] -= h;
        xmp[i] -= h;
        xmp[j] += h;
        xmm[i] -= h;
        xmm[j] -= h;
        b.c2 = std::max(
            b.c2, std::abs((chi(xpp) - chi(xpm) - chi(xmp) + chi(xmm)) / (4.0 * h * h)));
      }
    }
  }
  return b;
}

}  // namespace decomp
