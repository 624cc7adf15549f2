#include "decomp/infinity.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <sstream>

namespace decomp {

namespace {

std::vector<Vec> ball_nodes(int dim, double radius, int res) {
  CartesianGrid grid{dim, radius, res};
  std::vector<Vec> out;
  for (int k = 0; k < grid.count(); ++k) {
    Vec xi = grid.node(k);
    if (xi.norm() < radius) out.push_back(std::move(xi));
  }
  return out;
}

Mat fd_jacobian(const std::function<Vec(const Vec&)>& f, const Vec& xi, double h) {
  const int n = static_cast<int>(xi.size());
  Mat J(n, n);
  for (int a = 0; a < n; ++a) {
    Vec xp = xi, xm = xi;
    xp[a] += h;
    xm[a] -= h;
    J.col(a) = (f(xp) - f(xm)) / (2.0 * h);
  }
  return J;
}

}  // namespace

bool GluingData::has_pair(int i, int j) const {
  return std::find(pairs.begin(), pairs.end(), std::make_pair(i, j)) != pairs.end();
}

bool GluingData::in_overlap(int i, int j, const Vec& xi) const {
  if (i == j) return xi.norm() < rho;
  if (!has_pair(j, i)) return false;
  return xi.norm() < rho && psi(j, i, xi).norm() < rho;
}

GluingData gluing_from_transitions(const TrailingSystem& ts, const TransitionTable& table) {
  GluingData gd;
  gd.dim = ts.net->model().dim();
  gd.rho = ts.net->rho();
  gd.chart_count = ts.ranks();
  for (auto& [key, est] : table)
    if (key.first != key.second) gd.pairs.push_back(key);
  // The estimates reference the trailing system (and through it the net);
  // those owners must outlive the gluing data.
  auto tp = std::make_shared<TransitionTable>(table);
  gd.psi = [tp](int i, int j, const Vec& xi) {
    if (i == j) return xi;
    return tp->at({i, j}).eval(xi);
  };
  return gd;
}

std::string GluingReport::summary() const {
  std::ostringstream os;
  os << (pass ? "pass" : "FAIL");
  for (const auto& v : violations) {
    os << "; " << v.condition << "(" << v.i << "," << v.j;
    if (v.l >= 0) os << "," << v.l;
    os << ") residual " << v.residual;
  }
  return os.str();
}

GluingReport validate_gluing_data(const GluingData& gd, double tol, int grid_res) {
  GluingReport rep;
  const auto nodes = ball_nodes(gd.dim, gd.rho, grid_res);
  auto note = [&](const std::string& cond, double res) {
    auto it = rep.worst.find(cond);
    if (it == rep.worst.end() || res > it->second) rep.worst[cond] = res;
  };
  auto flag = [&](const std::string& cond, int i, int j, int l, double res) {
    rep.pass = false;
    rep.violations.push_back({cond, i, j, l, res});
  };

  // (i) psi_ii = id
  for (int i = 0; i < gd.chart_count; ++i) {
    double worst = 0.0;
    for (const Vec& xi : nodes) worst = std::max(worst, (gd.psi(i, i, xi) - xi).norm());
    note("identity", worst);
    if (worst > tol) flag("identity", i, i, -1, worst);
  }

  for (auto [i, j] : gd.pairs) {
    // symmetry of the pair list (Omega_ij nonempty iff Omega_ji nonempty)
    bool nonempty = false;
    for (const Vec& xi : nodes)
      if (gd.in_overlap(i, j, xi)) {
        nonempty = true;
        break;
      }
    if (nonempty && !gd.has_pair(j, i)) {
      note("symmetry", 1.0);
      flag("symmetry", i, j, -1, 1.0);
      continue;
    }

    // (ii) diffeomorphism: nonsingular jacobian of psi_ji on Omega_ij
    double min_det = std::numeric_limits<double>::infinity();
    double inv_worst = 0.0;
    for (const Vec& xi : nodes) {
      if (!gd.in_overlap(i, j, xi)) continue;
      auto f = [&](const Vec& z) { return gd.psi(j, i, z); };
      min_det = std::min(min_det, std::abs(fd_jacobian(f, xi, 1e-5).determinant()));
      // (iii b) psi_ij = psi_ji^{-1}
      inv_worst = std::max(inv_worst, (gd.psi(i, j, gd.psi(j, i, xi)) - xi).norm());
    }
    if (min_det < std::numeric_limits<double>::infinity()) {
      note("diffeomorphism", 1.0 / std::max(min_det, 1e-300));
      if (min_det < 1e-3) flag("diffeomorphism", i, j, -1, min_det);
      note("inverse", inv_worst);
      if (inv_worst > tol) flag("inverse", i, j, -1, inv_worst);
    }
  }

  // (iii c / iv) cocycle on composable triples
  for (auto [l, j] : gd.pairs) {
    for (int i = 0; i < gd.chart_count; ++i) {
      if (i == l || i == j) continue;
      if (!gd.has_pair(j, i) || !gd.has_pair(l, i)) continue;
      double worst = 0.0;
      for (const Vec& xi : nodes) {
        if (!gd.in_overlap(i, j, xi) || !gd.in_overlap(i, l, xi)) continue;
        const Vec via = gd.psi(l, j, gd.psi(j, i, xi));
        worst = std::max(worst, (via - gd.psi(l, i, xi)).norm());
      }
      note("cocycle", worst);
      if (worst > 2.0 * tol) flag("cocycle", i, j, l, worst);
    }
  }

  // (v) interior overlap boundary maps to the boundary of Omega_rho.
  // March sample segments for membership flips and bisect to the
  // boundary point.
  for (auto [i, j] : gd.pairs) {
    double worst = 0.0;
    for (std::size_t a = 0; a + 1 < nodes.size(); ++a) {
      const Vec &xa = nodes[a], &xb = nodes[a + 1];
      if ((xa - xb).norm() > 0.5 * gd.rho) continue;
      const bool ina = gd.in_overlap(i, j, xa);
      const bool inb = gd.in_overlap(i, j, xb);
      if (ina == inb) continue;
      Vec lo = ina ? xa : xb, hi = ina ? xb : xa;  // lo inside, hi outside
      for (int it = 0; it < 60; ++it) {
        const Vec mid = 0.5 * (lo + hi);
        (gd.in_overlap(i, j, mid) ? lo : hi) = mid;
      }
      if (lo.norm() > gd.rho - 1e-6) continue;  // flip caused by leaving Omega_rho
      const double img = gd.psi(j, i, lo).norm();
      worst = std::max(worst, gd.rho - img);
    }
    note("boundary", worst);
    if (worst > std::max(1e-6, 10.0 * tol)) flag("boundary", i, j, -1, worst);
  }

  return rep;
}

namespace {

const Mat& metric_nearest(const GluedManifold& gm, int chart, const Vec& xi) {
  int best = 0;
  double bd = std::numeric_limits<double>::infinity();
  for (int k = 0; k < gm.grid->count(); ++k) {
    const double d = (gm.grid->nodes.col(k) - xi).squaredNorm();
    if (d < bd) {
      bd = d;
      best = k;
    }
  }
  return gm.metric[chart].g[best];
}

}  // namespace

double GluedManifold::chart_origin_distance(int i, int j) const {
  // Dijkstra over the chart graph; edge weight = in-chart length of the
  // straight segment from the origin to the neighbor origin, measured in
  // the limit metric at the nearest grid nodes. Diagnostic accuracy only.
  const int n = charts();
  std::vector<double> dist(n, std::numeric_limits<double>::infinity());
  std::priority_queue<std::pair<double, int>, std::vector<std::pair<double, int>>,
                      std::greater<>>
      pq;
  dist[i] = 0.0;
  pq.emplace(0.0, i);
  while (!pq.empty()) {
    auto [d, u] = pq.top();
    pq.pop();
    if (d > dist[u] + 1e-15) continue;
    if (u == j) break;
    for (auto [a, b] : data.pairs) {
      if (a != u) continue;
      const Vec v = data.psi(a, b, Vec::Zero(data.dim));  // origin of chart b in chart a
      if (v.norm() >= 2.0 * data.rho) continue;
      double len = 0.0;
      const int steps = 8;
      for (int s = 0; s < steps; ++s) {
        const Vec mid = ((s + 0.5) / steps) * v;
        const Mat& g = metric_nearest(*this, a, mid);
        len += std::sqrt((v / steps).dot(g * (v / steps)));
      }
      if (dist[u] + len < dist[b]) {
        dist[b] = dist[u] + len;
        pq.emplace(dist[b], b);
      }
    }
  }
  return dist[j];
}

GluedManifold assemble_infinity_manifold(const TrailingSystem& ts, const TransitionTable& table,
                                         std::vector<LimitMetricResult> metrics,
                                         std::vector<LimitPartitionResult> etas,
                                         std::shared_ptr<const QuadratureGrid> grid, double tol,
                                         std::string provenance) {
  const int n = ts.ranks();
  if (static_cast<int>(metrics.size()) != n || static_cast<int>(etas.size()) != n)
    throw DomainError("assemble_infinity_manifold: need one metric and partition per chart");

  for (auto& [key, est] : table)
    if (!est.converged())
      throw ConstructionError("assembly refused: unconverged transition pair (" +
                              std::to_string(key.first) + "," + std::to_string(key.second) +
                              "), residual " + std::to_string(est.residual()));
  for (int i = 0; i < n; ++i) {
    if (!metrics[i].converged)
      throw ConstructionError("assembly refused: unconverged limit metric at chart " +
                              std::to_string(i));
    if (!etas[i].converged)
      throw ConstructionError("assembly refused: unconverged limit partition at chart " +
                              std::to_string(i));
  }

  GluedManifold gm;
  gm.data = gluing_from_transitions(ts, table);
  gm.grid = std::move(grid);
  gm.provenance = std::move(provenance);
  gm.completeness = completeness_radius(ts);
  if (gm.completeness < ts.net->rho())
    throw ConstructionError("assembly refused: truncated atlas does not cover a full core ball; "
                            "raise i_max");

  auto rep = validate_gluing_data(gm.data, tol);
  if (!rep.pass)
    throw ConstructionError("assembly refused: gluing validation failed: " + rep.summary());

  for (int i = 0; i < n; ++i) {
    // normal-coordinate law at the chart origin
    if ((metrics[i].at_origin - Mat::Identity(gm.data.dim, gm.data.dim)).norm() > 1e-6)
      throw ConstructionError("assembly refused: limit metric at the origin is not the identity");
    if (metrics[i].origin_d1 > 1e-3)
      throw ConstructionError("assembly refused: limit metric derivatives at 0 do not vanish");
    metrics[i].field.grid = gm.grid.get();
    gm.metric.push_back(std::move(metrics[i].field));
    gm.metric_origin.push_back(std::move(metrics[i].at_origin));
    gm.eta.push_back(std::move(etas[i].eta));
  }

  // partition identity on the completeness zone
  {
    const auto tail = ts.tail_positions();
    const int r0 = tail.front();
    for (int j = 0; j < n; ++j) {
      const double hj = ts.net->model().distance(ts.net->center(ts.order[r0][j]),
                                                 ts.net->center(ts.order[r0][0]));
      for (int k = 0; k < gm.grid->count(); ++k) {
        const Vec xi = gm.grid->nodes.col(k);
        if (hj + xi.norm() > gm.completeness) continue;
        double sum = 0.0;
        for (int i : ts.isect[j]) {
          const Vec img = gm.data.psi(i, j, xi);
          sum += gm.eta[i].has_exact() ? gm.eta[i].exact_value(img) : gm.eta[i].value(img);
        }
        if (std::abs(sum - 1.0) > 1e-6)
          throw ConstructionError("assembly refused: limit partition does not sum to 1 (chart " +
                                  std::to_string(j) + ", defect " + std::to_string(sum - 1.0) +
                                  ")");
      }
    }
  }

  // metric compatibility across overlaps (random tangent pairs)
  {
    std::mt19937_64 rng(0xC0FFEE);
    for (auto [i, j] : gm.data.pairs) {
      for (int k = 0; k < gm.grid->count(); k += 7) {
        const Vec xi = gm.grid->nodes.col(k);
        if (!gm.data.in_overlap(i, j, xi)) continue;
        const Vec img = gm.data.psi(j, i, xi);
        auto f = [&](const Vec& z) { return gm.data.psi(j, i, z); };
        const Mat D = fd_jacobian(f, xi, 1e-5);
        const Mat& gi = gm.metric[i].g[k];
        const Mat& gj = metric_nearest(gm, j, img);
        for (int t = 0; t < 2; ++t) {
          Vec v(gm.data.dim), w(gm.data.dim);
          for (int d = 0; d < gm.data.dim; ++d) {
            v[d] = 2.0 * uniform01(rng) - 1.0;
            w[d] = 2.0 * uniform01(rng) - 1.0;
          }
          const double lhs = v.dot(gi * w);
          const double rhs = (D * v).dot(gj * (D * w));
          if (std::abs(lhs - rhs) > 5.0 * tol * std::max(1.0, std::abs(lhs)))
            throw ConstructionError("assembly refused: metric incompatibility on overlap (" +
                                    std::to_string(i) + "," + std::to_string(j) + "): " +
                                    std::to_string(std::abs(lhs - rhs)));
        }
      }
    }
  }

  return gm;
}

GlobalProfile assemble_global_profile(const GluedManifold& gm, std::vector<ChartFunction> locals,
                                      double tol) {
  if (static_cast<int>(locals.size()) != gm.charts())
    throw DomainError("assemble_global_profile: one local profile per chart required");

  double worst = 0.0;
  int wi = -1, wj = -1;
  Vec wx;
  for (auto [i, j] : gm.data.pairs) {
    for (int k = 0; k < gm.grid->count(); ++k) {
      const Vec xi = gm.grid->nodes.col(k);  // chart-j coordinate
      if (!gm.data.in_overlap(j, i, xi)) continue;
      const Vec img = gm.data.psi(i, j, xi);
      const double a = locals[i].best_value(img);
      const double b = locals[j].best_value(xi);
      if (std::abs(a - b) > worst) {
        worst = std::abs(a - b);
        wi = i;
        wj = j;
        wx = xi;
      }
    }
  }
  if (worst > tol) {
    std::ostringstream os;
    os << "global profile rejected: overlap mismatch " << worst << " between charts " << wi
       << " and " << wj << " at (";
    for (int d = 0; d < wx.size(); ++d) os << (d ? "," : "") << wx[d];
    os << ")";
    throw ConstructionError(os.str());
  }
  return GlobalProfile(&gm, std::move(locals));
}

std::string glued_manifold_to_json(const GluedManifold& gm, int sample_res) {
  nlohmann::json doc;
  doc["kind"] = "glued-manifold";
  doc["dim"] = gm.data.dim;
  doc["rho"] = gm.data.rho;
  doc["charts"] = gm.data.chart_count;
  doc["completeness"] = gm.completeness;
  doc["provenance"] = gm.provenance;
  doc["psi_sample_res"] = sample_res;

  nlohmann::json pairs = nlohmann::json::array();
  for (auto [i, j] : gm.data.pairs) pairs.push_back({i, j});
  doc["pairs"] = pairs;

  // transition samples on the cartesian box of half-width 2 rho
  CartesianGrid pgrid{gm.data.dim, 2.0 * gm.data.rho, sample_res};
  nlohmann::json psi = nlohmann::json::object();
  for (auto [i, j] : gm.data.pairs) {
    std::vector<double> flat;
    flat.reserve(static_cast<std::size_t>(pgrid.count()) * gm.data.dim);
    for (int k = 0; k < pgrid.count(); ++k) {
      const Vec v = gm.data.psi(i, j, pgrid.node(k));
      for (int d = 0; d < gm.data.dim; ++d) flat.push_back(v[d]);
    }
    psi[std::to_string(i) + "," + std::to_string(j)] = flat;
  }
  doc["psi"] = psi;

  // exact per-node metric samples on the quadrature grid
  doc["quad"] = {{"dim", gm.grid->dim}, {"radius", gm.grid->radius}, {"count", gm.grid->count()}};
  nlohmann::json metric = nlohmann::json::array();
  for (const auto& field : gm.metric) {
    std::vector<double> flat;
    for (const Mat& g : field.g)
      for (int a = 0; a < g.rows(); ++a)
        for (int b = 0; b < g.cols(); ++b) flat.push_back(g(a, b));
    metric.push_back(flat);
  }
  doc["metric"] = metric;
  nlohmann::json origins = nlohmann::json::array();
  for (const Mat& g : gm.metric_origin) {
    std::vector<double> flat;
    for (int a = 0; a < g.rows(); ++a)
      for (int b = 0; b < g.cols(); ++b) flat.push_back(g(a, b));
    origins.push_back(flat);
  }
  doc["metric_origin"] = origins;

  nlohmann::json eta = nlohmann::json::array();
  for (const auto& e : gm.eta)
    eta.push_back({{"half", e.half()}, {"res", e.res()}, {"values", e.values().raw()},
                   {"grads", e.grads().raw()}});
  doc["eta"] = eta;

  // nodes/weights are reconstructed from (dim, radius, radial_res)
  const double c = gm.grid->count() / 2.0;
  doc["quad"]["radial_res"] = static_cast<int>(
      std::lround(gm.grid->dim == 2 ? std::sqrt(c) : std::cbrt(c)));
  return doc.dump();
}

GluedManifold glued_manifold_from_json(const std::string& text) {
  const auto doc = nlohmann::json::parse(text);
  if (doc.value("kind", "") != std::string("glued-manifold"))
    throw DomainError("glued_manifold_from_json: not a glued-manifold document");

  GluedManifold gm;
  gm.data.dim = doc.at("dim").get<int>();
  gm.data.rho = doc.at("rho").get<double>();
  gm.data.chart_count = doc.at("charts").get<int>();
  gm.completeness = doc.value("completeness", 0.0);
  gm.provenance = doc.value("provenance", "");

  for (const auto& p : doc.at("pairs"))
    gm.data.pairs.emplace_back(p.at(0).get<int>(), p.at(1).get<int>());

  const int sample_res = doc.at("psi_sample_res").get<int>();
  CartesianGrid pgrid{gm.data.dim, 2.0 * gm.data.rho, sample_res};
  auto fields = std::make_shared<std::map<std::pair<int, int>, CartesianField>>();
  for (auto [i, j] : gm.data.pairs) {
    const auto& flat =
        doc.at("psi").at(std::to_string(i) + "," + std::to_string(j)).get<std::vector<double>>();
    CartesianField f(pgrid, gm.data.dim);
    f.raw() = flat;
    (*fields)[{i, j}] = std::move(f);
  }
  const int dim = gm.data.dim;
  gm.data.psi = [fields, dim](int i, int j, const Vec& xi) -> Vec {
    if (i == j) return xi;
    return fields->at({i, j}).values(xi);
  };

  const auto& q = doc.at("quad");
  const int radial = q.at("radial_res").get<int>();
  auto grid = std::make_shared<QuadratureGrid>(
      QuadratureGrid::ball(q.at("dim").get<int>(), q.at("radius").get<double>(), radial));
  if (grid->count() != q.at("count").get<int>())
    throw DomainError("glued_manifold_from_json: quadrature shape mismatch");
  gm.grid = grid;

  for (const auto& flat_j : doc.at("metric")) {
    const auto flat = flat_j.get<std::vector<double>>();
    MetricField field;
    field.grid = gm.grid.get();
    std::size_t pos = 0;
    for (int k = 0; k < gm.grid->count(); ++k) {
      Mat g(dim, dim);
      for (int a = 0; a < dim; ++a)
        for (int b = 0; b < dim; ++b) g(a, b) = flat.at(pos++);
      field.g.push_back(g);
      field.g_inv.push_back(g.inverse());
      field.sqrt_det.push_back(std::sqrt(g.determinant()));
    }
    gm.metric.push_back(std::move(field));
  }
  for (const auto& flat_j : doc.at("metric_origin")) {
    const auto flat = flat_j.get<std::vector<double>>();
    Mat g(dim, dim);
    std::size_t pos = 0;
    for (int a = 0; a < dim; ++a)
      for (int b = 0; b < dim; ++b) g(a, b) = flat.at(pos++);
    gm.metric_origin.push_back(std::move(g));
  }

  for (const auto& e : doc.at("eta")) {
    ChartFunction cf = ChartFunction::zero(dim, e.at("half").get<double>(), e.at("res").get<int>());
    cf.values().raw() = e.at("values").get<std::vector<double>>();
    cf.grads().raw() = e.at("grads").get<std::vector<double>>();
    gm.eta.push_back(std::move(cf));
  }
  return gm;
}

InfinityNorms infinity_norms(const GlobalProfile& gp, double p) {
  const GluedManifold& gm = gp.glued();
  InfinityNorms out;
  for (int i = 0; i < gm.charts(); ++i) {
    for (int k = 0; k < gm.grid->count(); ++k) {
      const Vec xi = gm.grid->nodes.col(k);
      const double eta = gm.eta[i].has_exact() ? gm.eta[i].exact_value(xi) : gm.eta[i].value(xi);
      if (eta <= 0.0) continue;
      const double w = gp.local(i).best_value(xi);
      const Vec dw = gp.local(i).best_grad(xi);
      const double sd = gm.metric[i].sqrt_det[k];
      const double quad = gm.grid->weights[k] * eta * sd;
      out.h12_sq += quad * (dw.dot(gm.metric[i].g_inv[k] * dw) + w * w);
      out.lp_p += quad * std::pow(std::abs(w), p);
    }
  }
  out.h12 = std::sqrt(std::max(0.0, out.h12_sq));
  out.lp = std::pow(out.lp_p, 1.0 / p);
  return out;
}

}  // namespace decomp
