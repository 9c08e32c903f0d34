#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>

#include "limset/cantor.hpp"
#include "limset/kleinian.hpp"
#include "limset/renorm.hpp"

namespace limset {

// Streaming re-verification of a full construction run.  The generation
// builder materialises every vertex, so its reach ends at a few million;
// this walker re-derives the same tree depth-first with O(depth) state and
// checks every expansion and prolongation certificate as it passes, which
// makes runs of astronomical width verifiable on a fixed memory budget.
// Work is split into one chunk per first-block prolonged vertex and the
// accumulated totals go to a checkpoint file after every few chunks, so a
// multi-day run can be stopped, inspected and resumed at chunk granularity.

struct SweepTotals {
  // Kahan sums of diameter^s and vertex counts, indexed by block; entry 0
  // of the prolonged row is the root set.
  double t_sum[4] = {0, 0, 0, 0};
  double t_carry[4] = {0, 0, 0, 0};
  double r_sum[4] = {0, 0, 0, 0};
  double r_carry[4] = {0, 0, 0, 0};
  std::uint64_t t_count[4] = {0, 0, 0, 0};
  std::uint64_t r_count[4] = {0, 0, 0, 0};

  std::uint64_t vertices = 0;       // vertices created, intermediates included
  std::uint64_t expansions = 0;     // vertices that were expanded
  std::uint64_t prolongations = 0;  // γ^q steps applied

  // expansion certificate extremes, all over the whole run so far
  int min_keep = 99;              // smallest successor set accepted
  std::uint64_t wide_nodes = 0;   // nodes keeping more than two successors
  double worst_nest = 1.0;        // min (f.hw - |off| - hw) / f.hw over kept
  double worst_gap = 1e300;       // min pairwise (sep - hw_i - hw_j) / f.hw
  double min_K = 1e300;           // min weighted shadow sum
  double max_K = 0.0;

  // prolongation certificate extremes
  double band_max_dev = 0.0;      // max |log ratio + step length|
  double shrink_min = 1e300;      // min (cum log ratio - q log k_gamma)
  double summit_max_gap = 0.0;
  std::uint64_t summit_checked = 0;
  double membership_min = 1e300;  // min margin among directly measured cases
  std::uint64_t membership_direct = 0;

  double mass_min_exponent = 1e300;  // min log mu / log diam over final leaves

  std::uint64_t backtrack_guard = 0;  // displacement-guard drops (letter rule
                                      // should make this stay zero)
  std::uint64_t failures = 0;
  std::string first_failure;

  void add_t(int block, double term);
  void add_r(int block, double term);
  void merge(const SweepTotals& o);
};

struct SweepOptions {
  std::string checkpoint;       // path; empty = no checkpoint io
  bool resume = true;           // load checkpoint and skip finished chunks
  std::uint64_t chunk_limit = 0;   // stop after this many new chunks; 0 = all
  double max_seconds = 0.0;        // wall clock budget; 0 = none
  std::uint64_t checkpoint_every = 16;  // chunks between checkpoint writes
  std::uint64_t progress_every = 64;    // chunks between progress lines
  std::uint64_t summit_stride_final = 8191;  // final-block summit sampling
  std::ostream* log = nullptr;
};

struct SweepOutcome {
  SweepTotals totals;
  std::uint64_t chunks_done = 0;
  std::uint64_t chunks_total = 0;
  bool stage1_done = false;
  bool complete = false;
  double elapsed_s = 0.0;
  double ns_per_vertex = 0.0;
  std::uint64_t config_hash = 0;
};

// FNV-1a over the numbers that pin the tree: group spec, schedule, published
// expansion data and prolongation floors.
std::uint64_t sweep_config_hash(const SchottkyGroup& g,
                                const CalibrationResult& calib,
                                const TRPParams& trp,
                                const ConstructionSchedule& sched);

SweepOutcome run_deep_sweep(const SchottkyGroup& g,
                            const CalibrationResult& calib,
                            const TRPParams& trp,
                            const ConstructionSchedule& sched,
                            const SweepOptions& opt);

std::optional<SweepOutcome> load_sweep_checkpoint(const std::string& path);
void save_sweep_checkpoint(const std::string& path, const SweepOutcome& out);

// Cross-checks the walker against the reference implementations: the log and
// exp kernels against the standard library, small complete runs against
// build_generations sums and the mass walk, and sampled deep vertices
// against rrp_expand / trp_apply.  Returns false (with a report on `log`)
// on the first disagreement beyond tolerance.
bool sweep_selftest(const SchottkyGroup& g, const CalibrationResult& calib,
                    const TRPParams& trp, std::ostream& log);

}  // namespace limset
