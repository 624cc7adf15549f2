#include "decomp/decomposition.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace decomp {

namespace {

// H^{1,2} mass of f over one net ball (no partition weight): the
// candidate-energy estimate used by the greedy dominance check.
double ball_h12_mass(const ManifoldFunction& f, int chart, NetQuadrature& quad) {
  const DiscreteNet& net = quad.net();
  if (f.is_zero() || !f.touches(net.center(chart), net.rho())) return 0.0;
  const QuadratureGrid& grid = quad.grid();
  const int n = net.model().dim();
  double acc = 0.0;
  for (int k = 0; k < grid.count(); ++k) {
    const Vec x = quad.position(chart, k);
    const Vec df = f.differential(x);
    const Mat J = quad.jacobian(chart, k);
    Vec cf(n);
    for (int a = 0; a < n; ++a) cf[a] = df.dot(J.col(a));
    acc += grid.weights[k] *
           (cf.dot(quad.metric_inv(chart, k) * cf) + sq(f(x))) * quad.sqrt_det(chart, k);
  }
  return acc;
}

// Chart pullbacks of f along one trailing rank, materialized per retained k.
std::vector<ChartFunction> rank_pullbacks(const std::vector<ManifoldFunction>& residual,
                                          const TrailingSystem& ts, int rank, int res) {
  const double rho = ts.net->rho();
  const int dim = ts.net->model().dim();
  std::vector<ChartFunction> out;
  out.reserve(ts.retained_count());
  for (int r = 0; r < ts.retained_count(); ++r) {
    const NormalChart& chart = ts.chart(r, rank);
    const ManifoldFunction& f = residual[ts.retained[r]];
    auto eval = [&chart, &f](const Vec& xi) { return f(chart.forward(xi)); };
    auto grad = [&chart, &f](const Vec& xi) -> Vec {
      const Vec x = chart.forward(xi);
      const Vec df = f.differential(x);
      const Mat J = chart.jacobian(xi);
      Vec g(J.cols());
      for (int a = 0; a < J.cols(); ++a) g[a] = df.dot(J.col(a));
      return g;
    };
    ChartFunction cf = ChartFunction::materialize(dim, rho, res, eval, grad);
    // rebind the exact evaluators to stable storage
    const NormalChart* cp = &chart;
    const ManifoldFunction fc = f;
    cf.set_exact([cp, fc](const Vec& xi) { return fc(cp->forward(xi)); });
    cf.set_exact_grad([cp, fc](const Vec& xi) -> Vec {
      const Vec x = cp->forward(xi);
      const Vec df = fc.differential(x);
      const Mat J = cp->jacobian(xi);
      Vec g(J.cols());
      for (int a = 0; a < J.cols(); ++a) g[a] = df.dot(J.col(a));
      return g;
    });
    out.push_back(std::move(cf));
  }
  return out;
}

}  // namespace

void ExtractionParams::validate(int dim) const {
  if (p <= 2.0) throw DomainError("params: p must exceed 2");
  if (dim > 2) {
    const double crit = 2.0 * dim / (dim - 2.0);
    if (p >= crit)
      throw DomainError("params: p must stay below the Sobolev conjugate 2N/(N-2)");
  }
  if (!(rho / 2.0 < rho_hat && rho_hat < rho)) throw DomainError("params: rho/2 < rho_hat < rho");
  if (eps_stop < 0.0) throw DomainError("params: eps_stop must be >= 0");
  if (max_profiles < 1) throw DomainError("params: max_profiles must be >= 1");
  if (k_max < 8) throw DomainError("params: k_max must be >= 8");
  if (i_max < 0) throw DomainError("params: i_max must be >= 0");
}

ScanResult spotlight_scan(const ManifoldFunction& residual, const DiscreteNet& net, double p,
                          NetQuadrature& quad) {
  ScanResult out;
  out.mass_table.assign(net.size(), 0.0);
  for (int i = 0; i < net.size(); ++i) {
    out.mass_table[i] = ball_lp_mass(residual, i, p, quad);
    if (out.mass_table[i] > out.local_mass) {
      out.local_mass = out.mass_table[i];
      out.best_center = i;
    }
  }
  if (out.best_center < 0 && net.size() > 0) out.best_center = 0;
  return out;
}

VanishingResult vanishing_test(const FunctionSequence& seq, const DiscreteNet& net,
                               const PartitionOfUnity& pu, double p, double eps,
                               NetQuadrature& quad) {
  VanishingResult out;
  const int K = seq.size();
  out.sup_mass_trace.resize(K);
  for (int k = 1; k <= K; ++k)
    out.sup_mass_trace[k - 1] = spotlight_scan(seq.at_k(k), net, p, quad).local_mass;

  const double last = out.sup_mass_trace.back();
  bool decreasing = true;
  const int tail = std::max(2, K / 4);
  for (int k = K - tail; k < K - 1; ++k)
    decreasing &= out.sup_mass_trace[k + 1] <= out.sup_mass_trace[k] * 1.001 + 1e-15;
  out.vanishing = last < eps && decreasing;

  // the constant realizing int |u|^p <= C ||u||^2 (sup local mass)^{1-2/p}
  double C = 0.0;
  for (int k : {1, K / 2, K}) {
    const ManifoldFunction& u = seq.at_k(k);
    const double lp = std::pow(lp_norm(u, net, pu, p, quad), p);
    const double h2 = h12_inner(u, u, net, pu, quad);
    const double sup = out.sup_mass_trace[k - 1];
    if (sup > 0.0 && h2 > 0.0) C = std::max(C, lp / (h2 * std::pow(sup, 1.0 - 2.0 / p)));
  }
  out.embedding_constant = C;
  return out;
}

ManifoldFunction synthesize_elementary_concentration(const GlobalProfile& gp,
                                                     const TrailingSystem& ts,
                                                     const PartitionOfUnity& pu, int k,
                                                     bool use_exact) {
  const int r = ts.position_of_k(k);
  if (r < 0)
    throw DomainError("synthesize_elementary_concentration: k = " + std::to_string(k) +
                      " is not retained");
  const DiscreteNet& net = *ts.net;
  const double rho = net.rho();
  const int ranks = ts.ranks();

  std::vector<Ball> support;
  std::vector<int> centers(ranks);
  for (int i = 0; i < ranks; ++i) {
    centers[i] = ts.order[r][i];
    support.push_back(Ball{net.center(centers[i]), rho});
  }

  const GlobalProfile* gpp = &gp;
  const TrailingSystem* tsp = &ts;
  const PartitionOfUnity* pup = &pu;
  auto eval = [gpp, tsp, pup, centers, r, rho, use_exact](const Vec& x) {
    const DiscreteNet& n = *tsp->net;
    double acc = 0.0;
    for (std::size_t i = 0; i < centers.size(); ++i) {
      if (n.model().pu_distance(x, n.center(centers[i])) >= rho) continue;
      const double chi = pup->weight(centers[i], x);
      if (chi == 0.0) continue;
      const ChartFunction& wi = gpp->local(static_cast<int>(i));
      const Vec xi = tsp->chart(r, static_cast<int>(i)).inverse(x);
      acc += chi * (use_exact && wi.has_exact() ? wi.exact_value(xi) : wi.value(xi));
    }
    return acc;
  };
  return ManifoldFunction(&net.model(), eval, nullptr, std::move(support),
                          "W_k[" + std::to_string(k) + "]");
}

Decomposition extract_profiles(const FunctionSequence& seq, const ManifoldModel& model,
                               const DiscreteNet& net, const PartitionOfUnity& pu,
                               const ExtractionParams& params) {
  params.validate(model.dim());
  const int K = seq.size();
  if (K != params.k_max)
    throw DomainError("extract_profiles: sequence length disagrees with k_max");

  Decomposition dec;
  DecompositionReport& rep = dec.report;
  rep.seed = params.seed;

  NetQuadrature scan_quad(net, params.scan_res);
  NetQuadrature norm_quad(net, params.grid_res);
  const int dim = model.dim();
  const double rho = net.rho();

  // ---- Step 1: weak limit over a fixed reference window ----
  std::vector<int> window;
  for (int i = 0; i < net.size(); ++i) {
    bool touched = false;
    for (int k = 1; k <= std::min(4, K); ++k) touched |= seq.at_k(k).touches(net.center(i), rho);
    if (touched) window.push_back(i);
  }

  std::vector<std::pair<int, ChartFunction>> window_limits;
  bool w0_converged = true;
  double w0_residual = 0.0;
  for (int i : window) {
    std::vector<ChartFunction> pullbacks;
    pullbacks.reserve(K);
    const NormalChart& chart = net.chart(i);
    for (int k = 1; k <= K; ++k) {
      const ManifoldFunction& u = seq.at_k(k);
      pullbacks.push_back(ChartFunction::materialize(
          dim, rho, params.profile_res, [&](const Vec& xi) { return u(chart.forward(xi)); },
          [&](const Vec& xi) -> Vec {
            const Vec x = chart.forward(xi);
            const Vec du = u.differential(x);
            const Mat J = chart.jacobian(xi);
            Vec g(dim);
            for (int a = 0; a < dim; ++a) g[a] = du.dot(J.col(a));
            return g;
          }));
    }
    auto wl = weak_limit_estimate(pullbacks, params.dictionary_size, params.tol.weak_limit,
                                  scan_quad.grid());
    w0_converged &= wl.converged;
    w0_residual = std::max(w0_residual, wl.residual);
    double sup = 0.0;
    for (double v : wl.limit.values().raw()) sup = std::max(sup, std::abs(v));
    if (sup > 1e-12) window_limits.emplace_back(i, std::move(wl.limit));
  }
  rep.weak_limit_converged = w0_converged;
  rep.weak_limit_residual = w0_residual;

  if (window_limits.empty()) {
    dec.weak_limit = ManifoldFunction::zero(model);
  } else {
    auto limits = std::make_shared<std::vector<std::pair<int, ChartFunction>>>(
        std::move(window_limits));
    const DiscreteNet* np = &net;
    const PartitionOfUnity* pp = &pu;
    std::vector<Ball> support;
    for (auto& [i, cf] : *limits) support.push_back(Ball{net.center(i), rho});
    auto eval = [limits, np, pp](const Vec& x) {
      double acc = 0.0;
      for (auto& [i, cf] : *limits) {
        if (np->model().pu_distance(x, np->center(i)) >= np->rho()) continue;
        const double chi = pp->weight(i, x);
        if (chi == 0.0) continue;
        acc += chi * cf.value(np->chart(i).inverse(x));
      }
      return acc;
    };
    dec.weak_limit = ManifoldFunction(&model, eval, nullptr, std::move(support), "w0");
  }

  // residual after subtracting the weak limit
  std::vector<ManifoldFunction> residual;
  residual.reserve(K);
  for (int k = 1; k <= K; ++k)
    residual.push_back(ManifoldFunction::difference(seq.at_k(k), dec.weak_limit));

  // the case-2 assertion: fixed-chart weak limits of the residual vanish
  if (!dec.weak_limit.is_zero()) {
    for (int i : window) {
      std::vector<ChartFunction> pullbacks;
      const NormalChart& chart = net.chart(i);
      for (int k = 1; k <= K; ++k)
        pullbacks.push_back(ChartFunction::materialize(
            dim, rho, params.profile_res / 2,
            [&](const Vec& xi) { return residual[k - 1](chart.forward(xi)); }));
      auto wl =
          weak_limit_estimate(pullbacks, params.dictionary_size, params.tol.weak_limit,
                              scan_quad.grid());
      double sup = 0.0;
      for (double v : wl.limit.values().raw()) sup = std::max(sup, std::abs(v));
      if (sup > 50.0 * params.tol.weak_limit)
        rep.diagnostics.push_back("residual keeps a fixed-chart limit at center " +
                                  std::to_string(i) + " (sup " + std::to_string(sup) + ")");
    }
  }

  // per-k labels of the active subsequence (stabilization may trim it)
  std::vector<int> active(K);
  for (int k = 0; k < K; ++k) active[k] = k + 1;

  auto record_trace = [&](int stage) {
    StageTrace tr;
    tr.stage = stage;
    for (int k : active) {
      tr.lp.push_back(lp_norm(residual[k - 1], net, pu, params.p, scan_quad));
      tr.h12.push_back(h12_norm(residual[k - 1], net, pu, scan_quad));
    }
    rep.traces.push_back(std::move(tr));
  };
  record_trace(0);

  const double initial_sup =
      spotlight_scan(residual[active.back() - 1], net, params.p, scan_quad).local_mass;
  const double eps_stop = params.eps_stop > 0.0 ? params.eps_stop : 1e-3 * initial_sup;

  std::vector<char> folded;  // per bubble: fold already applied once

  // ---- Step 2: greedy bubble extraction ----
  while (static_cast<int>(dec.bubbles.size()) < params.max_profiles) {
    auto scan_last = spotlight_scan(residual[active.back() - 1], net, params.p, scan_quad);
    if (scan_last.local_mass < eps_stop) break;  // case 1: nothing left to extract

    // per-k argmax cores
    std::vector<int> core;
    core.reserve(active.size());
    for (int k : active)
      core.push_back(spotlight_scan(residual[k - 1], net, params.p, scan_quad).best_center);

    // divergence from previously used cores
    int merge_with = -1;
    for (std::size_t b = 0; b < dec.bubbles.size(); ++b) {
      const auto& bts = *dec.bubbles[b]->ts;
      const double threshold = 4.0 * rho * params.i_max;
      // compare along the common retained indices
      double d_last = 0.0;
      bool increasing = true;
      double prev = -1.0;
      const int tail = std::max(2, static_cast<int>(active.size()) / 4);
      for (std::size_t a = active.size() - tail; a < active.size(); ++a) {
        const int r = bts.position_of_k(active[a]);
        if (r < 0) continue;
        const double d = model.distance(net.center(core[a]), net.center(bts.order[r][0]));
        d_last = d;
        if (prev >= 0.0 && d < prev - 1e-9) increasing = false;
        prev = d;
      }
      if (d_last <= threshold || !increasing) {
        merge_with = static_cast<int>(b);
        break;
      }
    }

    if (merge_with >= 0) {
      if (folded[merge_with])
        throw ExtractionError("non-divergent duplicate core detected twice (bubble " +
                              std::to_string(merge_with + 1) + ")");
      folded[merge_with] = 1;
      rep.diagnostics.push_back("candidate core folded into bubble " +
                                std::to_string(merge_with + 1));
      // add the bubble back, re-estimate its profile from the fuller residual
      Bubble& bub = *dec.bubbles[merge_with];
      for (int k : active) {
        if (bub.ts->position_of_k(k) < 0) continue;
        auto w_old = synthesize_elementary_concentration(bub.profile, *bub.ts, pu, k);
        residual[k - 1] = ManifoldFunction::sum(residual[k - 1], w_old);
      }
      std::vector<ChartFunction> locals;
      for (int i = 0; i < bub.ts->ranks(); ++i) {
        auto pulls = rank_pullbacks(residual, *bub.ts, i, params.profile_res);
        auto wl = weak_limit_estimate(pulls, params.dictionary_size, params.tol.weak_limit,
                                      scan_quad.grid());
        locals.push_back(std::move(wl.limit));
      }
      bub.profile = assemble_global_profile(bub.glued, std::move(locals),
                                            std::max(1e-6, 5.0 * params.tol.weak_limit));
      bub.norms = infinity_norms(bub.profile, params.p);
      for (int k : active) {
        if (bub.ts->position_of_k(k) < 0) continue;
        auto w_new = synthesize_elementary_concentration(bub.profile, *bub.ts, pu, k);
        residual[k - 1] = ManifoldFunction::difference(residual[k - 1], w_new);
      }
      continue;
    }

    // build and stabilize the trailing system for the new core
    auto bubble = std::make_unique<Bubble>();
    bubble->core = core;
    auto ts0 = build_trailing_system(net, core, params.i_max, active);
    bubble->ts = std::make_unique<TrailingSystem>(stabilize_intersections(ts0, rho));
    const TrailingSystem& ts = *bubble->ts;
    if (static_cast<int>(ts.k_labels.size()) < static_cast<int>(active.size()))
      rep.diagnostics.push_back("stabilization dropped " +
                                std::to_string(active.size() - ts.k_labels.size()) +
                                " indices at bubble " + std::to_string(dec.bubbles.size() + 1));
    active = ts.k_labels;

    bubble->transitions = estimate_transition_limits(ts, 10, params.tol.transition);
    bool transitions_ok = true;
    for (auto& [key, est] : bubble->transitions) transitions_ok &= est.converged();
    if (!transitions_ok) {
      rep.diagnostics.push_back("bubble " + std::to_string(dec.bubbles.size() + 1) +
                                " skipped: unconverged transition maps");
      break;
    }

    bubble->grid = std::make_shared<QuadratureGrid>(
        QuadratureGrid::ball(dim, rho, params.grid_res));
    std::vector<LimitMetricResult> metrics;
    std::vector<LimitPartitionResult> etas;
    for (int i = 0; i < ts.ranks(); ++i) {
      metrics.push_back(estimate_limit_metric(ts, i, *bubble->grid, params.tol.metric));
      etas.push_back(estimate_limit_partition(ts, pu, i, params.profile_res,
                                              params.tol.metric * 10.0));
    }
    bubble->glued =
        assemble_infinity_manifold(ts, bubble->transitions, std::move(metrics), std::move(etas),
                                   bubble->grid, params.tol.transition,
                                   "bubble-" + std::to_string(dec.bubbles.size() + 1));

    // local profiles along each trailing rank
    std::vector<ChartFunction> locals;
    bool locals_converged = true;
    for (int i = 0; i < ts.ranks(); ++i) {
      auto pulls = rank_pullbacks(residual, ts, i, params.profile_res);
      auto wl = weak_limit_estimate(pulls, params.dictionary_size, params.tol.weak_limit,
                                    scan_quad.grid());
      locals_converged &= wl.converged;
      locals.push_back(std::move(wl.limit));
    }
    if (!locals_converged)
      rep.diagnostics.push_back("bubble " + std::to_string(dec.bubbles.size() + 1) +
                                ": weak-limit oscillation above tolerance");

    bubble->profile = assemble_global_profile(bubble->glued, std::move(locals),
                                              std::max(1e-6, 5.0 * params.tol.weak_limit));
    bubble->norms = infinity_norms(bubble->profile, params.p);
    bubble->modulus_estimate = bubble->norms.h12_sq;

    // greedy dominance: compare against rejected scan candidates
    {
      const int r_last = ts.retained_count() - 1;
      std::vector<char> used(net.size(), 0);
      for (int i = 0; i < ts.ranks(); ++i) used[ts.order[r_last][i]] = 1;
      std::vector<std::pair<double, int>> cands;
      for (int i = 0; i < net.size(); ++i)
        if (!used[i] && scan_last.mass_table[i] > 0.0)
          cands.emplace_back(scan_last.mass_table[i], i);
      std::sort(cands.rbegin(), cands.rend());
      double best = 0.0;
      const int k_last = active.back();
      for (std::size_t c = 0; c < std::min<std::size_t>(cands.size(), 10); ++c)
        best = std::max(best, ball_h12_mass(residual[k_last - 1], cands[c].second, scan_quad));
      bubble->best_rejected_estimate = best;
      if (bubble->modulus_estimate < 0.5 * best)
        rep.diagnostics.push_back("greedy dominance violated at bubble " +
                                  std::to_string(dec.bubbles.size() + 1));
    }

    // subtract the elementary concentrations
    for (int k : active) {
      auto wk = synthesize_elementary_concentration(bubble->profile, *bubble->ts, pu, k);
      residual[k - 1] = ManifoldFunction::difference(residual[k - 1], wk);
    }

    rep.bubble_h12_sq.push_back(bubble->norms.h12_sq);
    rep.bubble_lp_p.push_back(bubble->norms.lp_p);
    rep.bubble_modulus.push_back(bubble->modulus_estimate);
    rep.bubble_rejected.push_back(bubble->best_rejected_estimate);
    dec.bubbles.push_back(std::move(bubble));
    folded.push_back(0);
    record_trace(static_cast<int>(dec.bubbles.size()));

    // stagnation check on the residual mass
    auto scan_after = spotlight_scan(residual[active.back() - 1], net, params.p, scan_quad);
    if (scan_after.local_mass > 0.95 * scan_last.local_mass) {
      rep.diagnostics.push_back("residual mass stagnated; stopping extraction");
      break;
    }
  }

  rep.bubble_count = static_cast<int>(dec.bubbles.size());
  dec.residuals = std::move(residual);
  dec.active = active;

  // weak-limit norms for the report
  rep.weak_limit_h12 = h12_norm(dec.weak_limit, net, pu, norm_quad);
  rep.weak_limit_lp = lp_norm(dec.weak_limit, net, pu, params.p, norm_quad);
  return dec;
}

EnergyVerdicts verify_energy_identities(Decomposition& dec, const FunctionSequence& seq,
                                        const ManifoldModel& model, const DiscreteNet& net,
                                        const PartitionOfUnity& pu, const ExtractionParams& params,
                                        NetQuadrature& quad) {
  (void)model;
  EnergyVerdicts out;
  const auto& active = dec.active;
  const int tail = std::max(2, static_cast<int>(active.size()) / 4);

  double limsup = 0.0;
  for (std::size_t a = active.size() - tail; a < active.size(); ++a) {
    const ManifoldFunction& u = seq.at_k(active[a]);
    limsup = std::max(limsup, h12_inner(u, u, net, pu, quad));
  }
  out.plancherel_reference = limsup;

  for (std::size_t b = 0; b < dec.bubbles.size(); ++b) {
    Bubble& bub = *dec.bubbles[b];
    const double wsq = bub.norms.h12_sq;
    for (std::size_t a = active.size() - tail; a < active.size(); ++a) {
      const int k = active[a];
      if (bub.ts->position_of_k(k) < 0) continue;
      auto wk = synthesize_elementary_concentration(bub.profile, *bub.ts, pu, k);
      const double proj = h12_inner(seq.at_k(k), wk, net, pu, quad);
      const double len = h12_inner(wk, wk, net, pu, quad);
      out.projection_gap.push_back(std::abs(proj - wsq) / wsq);
      out.length_gap.push_back(std::abs(len - wsq) / wsq);
    }
  }

  double sum_wsq = 0.0, sum_lpp = 0.0;
  for (auto& bub : dec.bubbles) {
    sum_wsq += bub->norms.h12_sq;
    sum_lpp += bub->norms.lp_p;
  }
  const double w0sq = sq(dec.report.weak_limit_h12);
  out.plancherel_slack = limsup - w0sq - sum_wsq;

  const int k_last = active.back();
  const double u_lpp = std::pow(lp_norm(seq.at_k(k_last), net, pu, params.p, quad), params.p);
  const double w0_lpp = std::pow(dec.report.weak_limit_lp, params.p);
  out.brezis_lieb_discrepancy =
      u_lpp > 0.0 ? std::abs(u_lpp - w0_lpp - sum_lpp) / u_lpp : 0.0;
  return out;
}

DecouplingVerdicts verify_decoupling(Decomposition& dec, const FunctionSequence& seq,
                                     const DiscreteNet& net, const PartitionOfUnity& pu,
                                     const ExtractionParams& params, NetQuadrature& quad) {
  (void)seq;
  DecouplingVerdicts out;
  const int nb = static_cast<int>(dec.bubbles.size());
  out.overlap_at_kmax = Mat::Zero(nb, nb);
  const auto& active = dec.active;
  if (nb == 0 || active.empty()) return out;
  const int k_last = active.back();

  std::vector<ManifoldFunction> w_last;
  for (auto& bub : dec.bubbles)
    w_last.push_back(synthesize_elementary_concentration(bub->profile, *bub->ts, pu, k_last));
  for (int a = 0; a < nb; ++a)
    for (int b = a; b < nb; ++b) {
      const double v = h12_inner(w_last[a], w_last[b], net, pu, quad);
      out.overlap_at_kmax(a, b) = v;
      out.overlap_at_kmax(b, a) = v;
    }

  // probe pullback along a diverging center sequence
  const int tail = std::max(2, static_cast<int>(active.size()) / 4);
  const double rho = net.rho();
  const int dim = net.model().dim();
  auto flat_grid = QuadratureGrid::ball(dim, rho, params.scan_res);
  for (int b = 0; b < nb; ++b) {
    Bubble& bub = *dec.bubbles[b];
    std::vector<double> trace;
    for (std::size_t a = active.size() - tail; a < active.size(); ++a) {
      const int k = active[a];
      const int r = bub.ts->position_of_k(k);
      if (r < 0) continue;
      // probe: the net center farthest from the bubble core at this k
      const Vec& yk = net.center(bub.ts->order[r][0]);
      int probe = 0;
      double best = -1.0;
      for (int i = 0; i < net.size(); ++i) {
        const double d = net.model().distance(yk, net.center(i));
        if (d > best) {
          best = d;
          probe = i;
        }
      }
      auto wk = synthesize_elementary_concentration(bub.profile, *bub.ts, pu, k);
      const NormalChart& chart = net.chart(probe);
      double acc = 0.0;
      const double h = 1e-4;
      for (int q = 0; q < flat_grid.count(); ++q) {
        const Vec xi = flat_grid.nodes.col(q);
        const double v = wk(chart.forward(xi));
        double g2 = 0.0;
        for (int d2 = 0; d2 < dim; ++d2) {
          Vec xp = xi, xm = xi;
          xp[d2] += h;
          xm[d2] -= h;
          g2 += sq((wk(chart.forward(xp)) - wk(chart.forward(xm))) / (2.0 * h));
        }
        acc += flat_grid.weights[q] * (g2 + v * v);
      }
      trace.push_back(acc);
    }
    for (std::size_t t = 1; t < trace.size(); ++t)
      out.probe_decreasing &= trace[t] <= trace[t - 1] * 1.05 + 1e-12;
    out.probe.push_back(std::move(trace));
  }
  return out;
}

}  // namespace decomp
