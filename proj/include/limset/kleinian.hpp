#pragma once

#include "limset/hypgeo.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace limset {

// Letters encode generators of a free group: +k is generator k (1-based),
// -k its inverse.  Words are always kept freely reduced.
using Letter = std::int8_t;
using Word = std::vector<Letter>;

inline Letter letter_inverse(Letter l) { return static_cast<Letter>(-l); }

bool is_reduced(const Word& w);

// Free reduction of the concatenation u v.
Word reduce_concat(const Word& u, const Word& v);

Word word_inverse(const Word& w);

// Letters as text: generator k -> 'a'+k-1, inverse -> upper case.
std::string word_str(const Word& w);

// Euclidean disk; the ping-pong disks below are all orthogonal to the
// unit circle (|center|^2 - radius^2 = 1).
struct Disk {
  Complex center{0.0, 0.0};
  Scalar radius = 0.0;
};

// Image of a disk not containing the pole under a disk-preserving Mobius
// map.  Stable for the nested ping-pong disks used here because the pole
// stays separated from the source disk.
Disk mobius_disk_image(const Isometry& g, const Disk& d);

// One generator: attracting/repelling axis endpoints given by angle,
// plus the translation length along that axis.
struct GeneratorSpec {
  Scalar angle_repelling = 0.0;
  Scalar angle_attracting = 0.0;
  Scalar length = 0.0;
};

// Free convex-cocompact group given by ping-pong on the isometric disks
// of its generators.  The first generator is the distinguished cyclic
// direction ("gamma"); the homomorphism to Z sends it to 1, and the
// kernel of that homomorphism is the normal subgroup the whole pipeline
// studies.  The axis of gamma need not pass through the origin: z(n)
// always means gamma^n(0), and gamma_step() = d(0, gamma(0)) is the
// relevant per-application travel (it equals the translation length
// exactly when the axis runs through 0, and exceeds it otherwise).
class SchottkyGroup {
 public:
  // Throws std::invalid_argument naming the offending pair when the 2k
  // ping-pong disks fail to be pairwise disjoint with the given margin.
  SchottkyGroup(std::vector<GeneratorSpec> specs, std::vector<int> phi,
                Scalar disk_margin = 1e-6);

  int rank() const { return static_cast<int>(gens_.size()); }

  // l in {+-1, ..., +-rank}
  const Isometry& gen(Letter l) const;
  const Isometry& gamma() const { return gens_[0]; }
  Scalar gamma_length() const { return gamma_length_; }
  Scalar gamma_step() const { return gamma_step_; }

  // Target disk of a letter: every reduced word starting with l sends the
  // origin into P(l).
  const Disk& target_disk(Letter l) const;

  Isometry word_isometry(const Word& w) const;

  // Exponent-sum homomorphism to Z.
  int label(const Word& w) const;
  const std::vector<int>& phi() const { return phi_; }

  // gamma^n(0)
  BallPoint z(int n) const;
  Isometry gamma_power(int n) const;

  // Smallest euclidean gap between distinct ping-pong disks.
  Scalar min_gap() const { return min_gap_; }

  // Smallest hyperbolic distance from the origin to any target disk; no
  // nontrivial orbit point comes closer than this.
  Scalar displacement_floor() const { return floor_; }

  const std::vector<GeneratorSpec>& specs() const { return specs_; }

 private:
  std::vector<GeneratorSpec> specs_;
  std::vector<Isometry> gens_;
  std::vector<Isometry> inv_gens_;
  std::vector<Disk> disks_;  // index 2*(k-1) for +k, 2*(k-1)+1 for -k
  std::vector<int> phi_;
  Scalar gamma_length_ = 0.0;
  Scalar gamma_step_ = 0.0;
  Scalar min_gap_ = 0.0;
  Scalar floor_ = 0.0;
};

struct OrbitPoint {
  Word word;
  Isometry g;
  Scalar dist = 0.0;  // d(0, g(0))
  int label = 0;
};

struct Enumeration {
  std::vector<OrbitPoint> pts;  // depth-first order, deterministic
  bool complete = true;
  std::uint64_t visited = 0;
};

// All reduced words whose orbit point lies within hyperbolic distance t
// of the origin.  Complete by construction: a branch is cut only when
// the disk containing its whole subtree already lies beyond t.  Throws
// budget_exceeded (carrying the partial point count) when more than
// `budget` nodes would be visited.
Enumeration enumerate_ball(const SchottkyGroup& g, Scalar t,
                           std::uint64_t budget = 50'000'000,
                           bool include_identity = true);

// All reduced words of length at most max_length, no pruning.
Enumeration enumerate_words(const SchottkyGroup& g, int max_length,
                            std::uint64_t budget = 50'000'000,
                            bool include_identity = true);

std::vector<OrbitPoint> filter_label(const std::vector<OrbitPoint>& pts,
                                     int label);

// d(0, g(0)) for each point, sorted ascending.
std::vector<Scalar> displacement_multiset(const std::vector<OrbitPoint>& pts);

struct TruncatedSeries {
  Scalar s = 0.0;
  Scalar t = 0.0;
  Scalar value = 0.0;
  std::uint64_t count = 0;
  // False when the displacement list is not known to cover every group
  // element up to t; the sum is then only a lower bound.
  bool certified = true;
};

//  sum of exp(-s d) over displacements d <= t  (identity contributes 1
// when present in the list as d = 0).
TruncatedSeries poincare_truncated(const std::vector<Scalar>& displacements,
                                   Scalar s, Scalar t, bool certified = true);

struct ConjugationReport {
  int n = 0;
  Scalar s = 0.0;
  Scalar t = 0.0;
  TruncatedSeries series_base;  // observation point 0
  TruncatedSeries series_conj;  // observation point gamma^n(0)
  std::size_t count_base = 0;
  std::size_t count_conj = 0;
  Scalar max_abs_diff = 0.0;    // over matched sorted displacements
  Scalar first_mismatch = -1.0; // smallest unmatched displacement, if any
  bool multisets_match = false;
  bool words_match = false;     // conjugated word sets agree exactly
  bool pass = false;
};

// Verifies that the kernel subgroup looks the same from gamma^n(0) as
// from the origin: equal truncated series and equal displacement
// multisets up to tol.  Enumerates both sides independently.
ConjugationReport conjugation_invariance_check(const SchottkyGroup& g,
                                               Scalar s, int n, Scalar t,
                                               std::uint64_t budget =
                                                   50'000'000,
                                               Scalar tol = 1e-9);

enum class DeltaMethod { counting_fit, series_bisection };

struct DeltaEstimate {
  Scalar value = 0.0;
  Scalar lo = 0.0;  // lo <= value <= hi; lo may be negative
  Scalar hi = 0.0;
  DeltaMethod method = DeltaMethod::counting_fit;
  Scalar t_max = 0.0;
  int annuli = 0;  // counting fit only
};

struct DeltaOptions {
  Scalar annulus_width = 0.5;
  Scalar window_lo = 0.2;  // fraction of max displacement
  Scalar window_hi = 0.9;
  int min_annuli = 8;
  Scalar s_max = 1.5;      // bisection search range
  int bisect_iters = 48;
  Scalar tail_fraction = 0.8;
  Scalar tail_threshold = 0.1;
};

// Critical-exponent estimate from a displacement list.  counting_fit:
// least-squares slope of log annulus counts inside the window; throws
// when fewer than min_annuli annuli are populated.  series_bisection:
// bisects on the tail weight of the truncated series.  The band [lo,hi]
// widens with the observed curvature of the fit and with 1/t.
DeltaEstimate estimate_delta(const std::vector<Scalar>& displacements,
                             DeltaMethod method,
                             const DeltaOptions& opt = DeltaOptions());

}  // namespace limset
