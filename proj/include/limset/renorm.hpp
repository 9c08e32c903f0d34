#pragma once

#include "limset/kleinian.hpp"

#include <string>
#include <vector>

namespace limset {

// Parameters of the recurrent expansion step, as certified by rrp_calibrate.
struct RRPParams {
  Scalar s = 0.0;      // weight exponent
  Scalar ell = 0.0;    // ceiling on the displacement of one expansion edge
  Scalar K = 1.0;      // certified weighted growth factor, > 1
  Scalar sigma = 0.0;  // shadow radius, at most log(1+sqrt(2))
  // Sibling e^{d(0,v)} ratios stay below this; equals e^ell, which property
  // (ii) of the expansion already forces.
  Scalar comparability_c = 1.0;
};

enum class Phase { recurrent, transient };

// Vertex of the coset tree.  `level` counts net applications of the cyclic
// direction (= the word's image in Z); `parent` indexes the caller's node
// store, -1 for the root.
struct HTreeNode {
  OrbitPoint orbit;
  Cap shadow;
  Phase phase = Phase::recurrent;
  int level = 0;
  std::int64_t parent = -1;
};

// Identity vertex with the full boundary circle as its shadow.
HTreeNode root_node();

// Diagnostics for one trial state visited during calibration.
struct StateDiag {
  Word state;
  int kept = 0;               // accepted successors at this state
  Scalar K = 0.0;             // weighted sum ratio achieved here
  Scalar worst_nest = 0.0;    // smallest relative containment margin
  Scalar worst_gap = 0.0;     // smallest angular gap between siblings
};

struct CalibrationResult {
  RRPParams params;
  // The successor alphabet: kernel elements within `params.ell` of the
  // origin whose shadows pack disjointly.  Expansion at any vertex composes
  // exactly these, so edge displacements transfer verbatim.
  std::vector<OrbitPoint> successors;
  std::vector<StateDiag> states;
  Scalar K_min_raw = 0.0;     // before the safety factor
  Scalar safety = 0.0;
  Scalar shell = 0.0;         // orbit shell at which the search stopped
  std::uint64_t states_checked = 0;
};

struct CalibrationOptions {
  Scalar sigma = 0.0;        // <= 0: use the Schweikart constant
  Scalar K_margin = 1e-2;    // require K >= 1 + margin after safety
  Scalar safety = 0.999;     // published K = safety * worst trial state
  int closure_depth = 6;     // trial states: successor words up to this length
  Scalar ell_max = 24.0;
  std::uint64_t budget = 4'000'000;
  // When positive, s must lie strictly below this (a certified lower bound
  // for the kernel's critical exponent supplied by the caller).
  Scalar delta_lo = 0.0;
};

// Searches increasing orbit shells of the kernel subgroup for the smallest
// edge ceiling whose greedy shadow packing multiplies summed s-weighted
// shadow diameters by a factor > 1 at every trial state.  Trial states are
// all successor words up to closure_depth, so the published factor is the
// worst over the visited tree, discounted by the safety factor.
// Throws std::runtime_error("...s too close to delta(H)...") when the shell
// search exhausts ell_max or the budget without certifying growth.
CalibrationResult rrp_calibrate(const SchottkyGroup& g, Scalar s,
                                const CalibrationOptions& opt = {});

// Successor vertices of u: the calibrated alphabet composed onto u, greedily
// packed, then re-verified from raw geometry.  Checks, in this order:
// containment of every successor shadow in u's shadow, edge displacement
// <= ell, pairwise disjointness and e^d comparability of siblings, and the
// weighted sum ratio >= K.  Throws std::runtime_error naming the failed
// property and the vertex word; fewer than two survivors is an error.
// max_children > 0 keeps only that many largest-shadow successors (the
// caller is responsible for flagging the weakened sum).
std::vector<HTreeNode> rrp_expand(const HTreeNode& u,
                                  const CalibrationResult& calib,
                                  int max_children = 0);

struct TRPParams {
  int q = 1;                  // prolongation steps per application
  Scalar k_gamma = 0.0;       // certified per-step shrinkage floor, in (0,1)
  Scalar summit_slack = 0.0;  // ceiling on d(vertex, summit), = 2*ell + tau
  Scalar comparability_c = 1.0;  // per-step ratio band around e^{-step}
};

struct TRPStep {
  Scalar d_before = 0.0;
  Scalar d_after = 0.0;
  Scalar log_ratio = 0.0;  // log of the shadow diameter ratio, < 0
};

struct TRPReport {
  HTreeNode node;           // the prolonged vertex
  std::vector<TRPStep> steps;
  Scalar cum_log_ratio = 0.0;
  Scalar summit_dist = 0.0;    // d(0, summit of the conjugated axis)
  Scalar summit_gap = 0.0;     // d(start vertex, summit)
  Scalar membership_margin = 0.0;  // cap halfwidth minus endpoint offset
  bool membership_direct = false;  // measured directly vs. via closed form
  bool pass_shrink = false;    // cumulative ratio >= k_gamma^q
  bool pass_band = false;      // every step within comparability_c of e^{-step}
  bool pass_summit = false;    // summit_gap <= summit_slack
  bool pass_membership = false;
  bool pass = false;
};

// Applies the cyclic direction q times to a recurrent vertex and measures
// the shadow shrinkage per step, the total against k_gamma^q, the proximity
// of the start vertex to the summit of the conjugated axis, and whether the
// pushed attracting endpoint lands in the summit's shadow.  All failure
// modes are reported, not thrown; q = 0 returns the vertex unchanged.
//
// The summit data comes from the conjugating matrix itself (the axis chart
// of the cyclic direction composed with the vertex inverse), which stays
// well conditioned at any depth.  The endpoint membership is measured
// directly while the summit is within distance 12 of the origin; beyond
// that the offset and the halfwidth agree to all double digits and the
// sign of the margin is decided in exact closed form.
TRPReport trp_apply(const HTreeNode& u, const SchottkyGroup& g, int q,
                    const TRPParams& params, Scalar sigma);

struct KGammaEstimate {
  Scalar value = 0.0;      // published floor: 0.99 * worst sampled ratio
  Scalar min_ratio = 0.0;
  Scalar max_ratio = 0.0;
  std::size_t samples = 0;
};

// Minimum one-step shadow ratio under the cyclic direction over the first
// sample_size vertices of the calibrated tree in breadth-first order.
// Throws std::invalid_argument on an empty sample.
KGammaEstimate k_gamma_estimate(const SchottkyGroup& g,
                                const CalibrationResult& calib,
                                std::size_t sample_size);

}  // namespace limset
