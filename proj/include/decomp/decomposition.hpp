#pragma once

#include "decomp/infinity.hpp"

namespace decomp {

struct Tolerances {
  double weak_limit = 1e-3;
  double transition = 1e-6;
  double metric = 1e-6;
};

struct ExtractionParams {
  double p = 4.0;
  double rho = 0.8;
  double rho_hat = 0.6;
  double eps_stop = 0.0;  // 0: default 1e-3 x initial sup local mass
  int k_max = 48;
  int i_max = 12;
  int max_profiles = 4;
  Tolerances tol;
  int grid_res = 64;       // radial resolution of norm quadrature
  int scan_res = 32;       // radial resolution of spotlight scans
  int profile_res = 96;    // cartesian resolution of materialized profiles
  int dictionary_size = 4;
  std::uint64_t seed = 1;

  void validate(int dim) const;  // enforces 2 < p < 2N/(N-2) and friends
};

// One ball scan of the residual: mass(y) = int_{B(y, rho)} |f|^p.
struct ScanResult {
  int best_center = -1;
  double local_mass = 0.0;
  std::vector<double> mass_table;  // one entry per net center
};

ScanResult spotlight_scan(const ManifoldFunction& residual, const DiscreteNet& net, double p,
                          NetQuadrature& quad);

struct VanishingResult {
  bool vanishing = false;
  std::vector<double> sup_mass_trace;  // sup_y local mass per k
  double embedding_constant = 0.0;     // C with int |u|^p <= C ||u||^2 (sup mass)^{1-2/p}
};

// Spotlight vanishing test: sup local p-mass at K_max below eps and
// decreasing over the tail.
VanishingResult vanishing_test(const FunctionSequence& seq, const DiscreteNet& net,
                               const PartitionOfUnity& pu, double p, double eps,
                               NetQuadrature& quad);

// One extracted bubble: core trajectory, trailing system, manifold at
// infinity, global profile, and bookkeeping.
struct Bubble {
  std::vector<int> core;  // net index per k
  std::unique_ptr<TrailingSystem> ts;
  TransitionTable transitions;
  std::shared_ptr<const QuadratureGrid> grid;
  GluedManifold glued;
  GlobalProfile profile;
  InfinityNorms norms;
  double modulus_estimate = 0.0;       // selected ||w||^2 on M_infinity
  double best_rejected_estimate = 0.0; // strongest H^1 ball-energy among rejected candidates
};

// The truncated patched sum W_k = sum_{i <= i_max} chi_{y_{k;i}} w_i o e^{-1}.
// With use_exact the local profiles evaluate through their exact tail
// averages (slow, reserved for pointwise identity checks); by default the
// materialized interpolants are used.
ManifoldFunction synthesize_elementary_concentration(const GlobalProfile& gp,
                                                     const TrailingSystem& ts,
                                                     const PartitionOfUnity& pu, int k,
                                                     bool use_exact = false);

struct StageTrace {
  int stage = 0;                    // 0: input sequence, n: after bubble n
  std::vector<double> lp;           // per k
  std::vector<double> h12;          // per k
};

struct EnergyVerdicts {
  std::vector<double> projection_gap;   // | <u_k, W^n_k> - ||w^n||^2 | / ||w^n||^2, tail k
  std::vector<double> length_gap;       // | ||W^n_k||^2 - ||w^n||^2 | / ||w^n||^2, tail k
  double plancherel_slack = 0.0;        // limsup ||u||^2 - ||w0||^2 - sum ||w^n||^2
  double plancherel_reference = 0.0;    // limsup ||u||^2
  double brezis_lieb_discrepancy = 0.0; // relative, at K_max
};

struct DecouplingVerdicts {
  Mat overlap_at_kmax;                      // pairwise <W^n, W^l> at K_max
  std::vector<std::vector<double>> probe;   // per bubble: ||W^n_k o e_{y'_k}|| trace, tail k
  bool probe_decreasing = true;
};

struct DecompositionReport {
  bool weak_limit_converged = false;
  double weak_limit_residual = 0.0;
  double weak_limit_h12 = 0.0;  // ||w0||_{H^{1,2}(M)}
  double weak_limit_lp = 0.0;
  int bubble_count = 0;
  std::vector<double> bubble_h12_sq;       // ||w^n||^2 on M_infinity
  std::vector<double> bubble_lp_p;         // ||w^n||_p^p on M_infinity
  std::vector<double> bubble_modulus;      // modulus estimate at selection
  std::vector<double> bubble_rejected;     // best rejected candidate estimate
  std::vector<StageTrace> traces;          // stage 0..bubble_count
  EnergyVerdicts energy;
  DecouplingVerdicts decoupling;
  std::vector<std::string> diagnostics;
  std::uint64_t seed = 0;
  std::string config_hash;
};

// The full pipeline state: extraction keeps the per-bubble machinery
// alive because profiles and transitions reference it.
struct Decomposition {
  ManifoldFunction weak_limit;
  std::vector<std::unique_ptr<Bubble>> bubbles;
  std::vector<ManifoldFunction> residuals;  // final residual per original k (1-based k - 1)
  std::vector<int> active;                  // surviving original k, ascending
  DecompositionReport report;
};

// Steps 1-5 of the greedy extraction: weak limit, spotlight argmax cores,
// trailing systems, manifolds at infinity, global profiles, subtraction.
Decomposition extract_profiles(const FunctionSequence& seq, const ManifoldModel& model,
                               const DiscreteNet& net, const PartitionOfUnity& pu,
                               const ExtractionParams& params);

// Energy identities at tail k: projection (eq. of <u_k, W_k>), length,
// Plancherel slack, and the L^p additivity discrepancy.
EnergyVerdicts verify_energy_identities(Decomposition& dec, const FunctionSequence& seq,
                                        const ManifoldModel& model, const DiscreteNet& net,
                                        const PartitionOfUnity& pu, const ExtractionParams& params,
                                        NetQuadrature& quad);

// Pairwise overlaps and pullback decay along a diverging probe.
DecouplingVerdicts verify_decoupling(Decomposition& dec, const FunctionSequence& seq,
                                     const DiscreteNet& net, const PartitionOfUnity& pu,
                                     const ExtractionParams& params, NetQuadrature& quad);

}  // namespace decomp
