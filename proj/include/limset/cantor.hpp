#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "limset/hypgeo.hpp"
#include "limset/kleinian.hpp"
#include "limset/renorm.hpp"

namespace limset {

// Parameters of the alternating expansion/prolongation run.  q clears the
// escape threshold (q * step >= 4 * ell); p is the least count of expansion
// levels restoring growth, K^p k^q > 1.
struct ConstructionSchedule {
  Scalar s = 0.0;
  int q = 1;      // prolongation steps per block
  int p = 1;      // expansion levels per block
  int depth = 1;  // alternating blocks
};

// Throws std::invalid_argument when K <= 1 (nothing can restore growth),
// k_gamma lies outside (0,1), or step <= 0.  The minimality of p is
// re-verified on the computed logs, so boundary cases land on the strict
// side: K^(p-1) k^q <= 1 < K^p k^q.
ConstructionSchedule choose_schedule(Scalar s, const RRPParams& rrp,
                                     Scalar k_gamma, Scalar step,
                                     int depth = 3);

// T: rest points after a prolongation (T0 is the root alone).
// R: leaves of a p-level expansion.
enum class GenKind { T, R };

// One level of the alternating run.  `parent` on each vertex indexes the
// previous set in the list; intermediate expansion levels are not recorded.
struct GenerationSet {
  GenKind kind = GenKind::T;
  int block = 0;  // 0 for the root set, then 1, 2, ...
  std::vector<HTreeNode> vertices;
  bool pruned = false;   // fanout was capped while building this set
  bool partial = false;  // vertex budget ran out before the set was finished
  std::vector<Cap> caps() const;
};

struct BuildOptions {
  int max_children = 0;  // expansion fanout cap; 0 = none.  A cap only
                         // weakens the weighted sums, never the geometry.
  std::uint64_t budget = 2'000'000;  // vertices created, intermediates included
  bool verify_direct = true;  // cross-check disjointness and nesting from the
                              // raw caps wherever the scale still resolves them
};

// From T0 = {root}, each block expands every vertex p levels and prolongs
// every leaf q steps.  A failed expansion or prolongation certificate throws
// std::runtime_error naming the offending vertex; an exhausted budget returns
// what was built with the unfinished set flagged `partial`.
std::vector<GenerationSet> build_generations(const SchottkyGroup& g,
                                             const CalibrationResult& calib,
                                             const TRPParams& trp,
                                             const ConstructionSchedule& sched,
                                             const BuildOptions& opt = {});

// Boundary trace of the deepest finished prolonged set.
struct CantorSample {
  int depth = 0;
  std::vector<BoundaryPoint> directions;
  std::vector<Scalar> cap_widths;  // full angular widths
  bool resolvable = true;  // false once sibling separations fall below double
                           // resolution; the widths remain meaningful
};

// Throws std::invalid_argument when no prolonged set is finished.
CantorSample make_sample(const std::vector<GenerationSet>& gens);

struct BlockSums {
  int block = 0;
  Scalar sum_t = 0.0;     // sum of diameter^s over the prolonged set
  Scalar sum_r = 0.0;     // same over the expanded set
  Scalar ratio_tr = 0.0;  // sum_t / sum_r, required >= k^q
  Scalar ratio_rt = 0.0;  // sum_r / previous sum_t, required >= K^p
  bool ok_tr = false;
  bool ok_rt = false;
};

struct CrucialSumReport {
  Scalar s = 0.0;
  Scalar need_tr = 0.0;        // k^q
  Scalar need_rt = 0.0;        // K^p
  Scalar growth_factor = 0.0;  // K^p k^q
  bool growth_ok = false;      // > 1
  std::vector<BlockSums> blocks;
  bool sums_increasing = false;  // prolonged sums strictly rise block to block
  bool weakened = false;  // pruned or truncated input: the expansion link and
                          // the growth conclusion are reported, not asserted
  bool pass = false;
};

// Chains sum_T(n) >= k^q sum_R(n) >= K^p k^q sum_T(n-1) > sum_T(n-1) with
// relative slack tol.  Needs at least two finished blocks; throws
// std::invalid_argument otherwise.
CrucialSumReport crucial_sum_check(const std::vector<GenerationSet>& gens,
                                   const ConstructionSchedule& sched,
                                   const RRPParams& rrp, Scalar k_gamma,
                                   Scalar tol = 1e-6);

struct DimensionReport {
  Scalar s = 0.0;
  Scalar box_slope = 0.0;  // log count against log(1/width) over prolonged sets
  Scalar mass_exponent = 0.0;  // min log(mass)/log(diam) over the deepest caps
  int fit_points = 0;
  Scalar epsilon = 0.0;
  bool pass = false;  // mass_exponent >= s - epsilon
};

// Box-counting fit plus the mass test: unit mass flows down the tree, split
// at each expansion proportionally to diameter^s, carried unchanged through
// prolongations.  Requires an unpruned, untruncated run at least three blocks
// deep; throws std::invalid_argument otherwise.
DimensionReport dimension_lower_bound(const std::vector<GenerationSet>& gens,
                                      Scalar s, Scalar epsilon = 0.1);

// Nested reference family: every cap spawns `fanout` children scaled by
// `ratio`, flush to the parent's edges.  Exercises the dimension estimators
// against the closed form log(fanout) / log(1/ratio).
std::vector<GenerationSet> synthetic_generations(Scalar ratio, int fanout,
                                                 int depth);

// Root-to-leaf trace, one construction step per edge.  `proxies` holds the
// distance to a tabulated family of label-0 orbit points; the table is a
// finite subset of the orbit, so each value is an upper bound on the true
// distance to the full orbit.  Whether the trace admits loop approximations
// at every scale is not decided here; the proxies only witness outward drift.
struct EscapeProfile {
  QuasiGeodesicPath path;
  std::vector<Scalar> arc_lengths;  // strictly increasing
  std::vector<Scalar> proxies;
  std::vector<Phase> phases;  // phase of the edge arriving at each vertex
  std::vector<int> blocks;
  Scalar min_corner = 0.0;  // realised bending-angle floor along the trace
  std::size_t table_size = 0;
  bool start_certified = false;  // label-0 vertices carry their own table
                                 // column, so their proxies are exact zeros
};

struct ProfileOptions {
  Scalar ball_radius = 0.0;  // label-0 cloud radius; 0 picks three times the
                             // displacement floor
  std::uint64_t ball_budget = 500'000;
  int max_children = 0;  // must match the fanout cap of the run being traced
  Scalar min_angle = 0.0;  // declared corner floor; 0 adopts the measured one
};

// Replays the branch from the root to `leaf` and evaluates every distance in
// the frame of the vertex it concerns, so depth does not erode precision.
// The edge and corner floors are checked in step form; a violation throws.
EscapeProfile make_escape_profile(const SchottkyGroup& g,
                                  const CalibrationResult& calib,
                                  const TRPParams& trp,
                                  const ConstructionSchedule& sched,
                                  const HTreeNode& leaf,
                                  const ProfileOptions& opt = {});

// Same trace machinery over an explicit step sequence; used for the axis and
// recurrent-only controls.  Each step is one reduced word over the group's
// letters; an edge is transient when its step shifts the cyclic label.
EscapeProfile make_step_profile(const SchottkyGroup& g,
                                const std::vector<Word>& steps,
                                const ProfileOptions& opt = {});

struct SegmentIncrement {
  int block = 0;
  std::size_t first = 0, last = 0;  // vertex range of the transient run
  Scalar start_proxy = 0.0;
  Scalar end_proxy = 0.0;
  Scalar increment = 0.0;
  bool ok = false;
};

struct TransienceReport {
  Scalar required = 0.0;  // 3 * ell - tolerance
  std::vector<SegmentIncrement> segments;
  Scalar first_block_max = 0.0;
  Scalar last_block_min = 0.0;
  bool trend_ok = false;  // evaluated once three blocks are present
  Scalar max_proxy = 0.0;
  Scalar final_proxy = 0.0;
  bool inconclusive = false;  // table too thin to trust the run starts
  bool pass = false;
};

// (a) every transient run raises the proxy by at least 3 * ell - tolerance;
// (b) with three or more blocks, the last block's minimum clears the first
// block's maximum.  A thin table flags the report inconclusive, never passed.
TransienceReport transience_check(const EscapeProfile& profile, Scalar ell,
                                  Scalar tolerance = 0.1);

struct ReductionReport {
  DeltaEstimate kernel;
  DeltaEstimate ambient;
  bool overlap = false;
  bool ordered = false;  // kernel point estimate does not exceed the ambient one
  Scalar recommended_s = 0.0;  // strictly below the kernel band
  std::string note;
};

// Compares the growth-exponent bands of the kernel and the ambient group.
// Disjoint bands only flag a likely mismatch; nothing here blocks a run.
ReductionReport reduction_case_report(const DeltaEstimate& kernel,
                                      const DeltaEstimate& ambient);

}  // namespace limset
