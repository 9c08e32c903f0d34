#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <utility>
#include <vector>

#include "limset/core.hpp"

namespace limset {

using Vec2 = Eigen::Vector2d;

inline Complex cx(const Vec2& v) { return Complex(v.x(), v.y()); }
inline Vec2 vec(Complex z) { return Vec2(z.real(), z.imag()); }

// acosh(1+t) without cancellation for small t >= 0.
inline Scalar acosh1p(Scalar t) {
  return std::log1p(t + std::sqrt(t * (t + 2.0)));
}

// Interior point of the unit ball, kept strictly away from the boundary so
// that every downstream formula has a nonzero conformal factor.
struct BallPoint {
  Vec2 x{0.0, 0.0};

  BallPoint() = default;
  explicit BallPoint(const Vec2& v) : x(v) {
    if (!(v.norm() < 1.0 - tol().boundary_eps))
      throw std::domain_error("BallPoint: |x| too close to 1");
  }
  explicit BallPoint(Complex z) : BallPoint(vec(z)) {}
  Complex z() const { return cx(x); }
};

// Unit vector marking a point of the ideal boundary circle.
struct BoundaryPoint {
  Vec2 u{1.0, 0.0};

  BoundaryPoint() = default;
  explicit BoundaryPoint(const Vec2& v) {
    Scalar n = v.norm();
    if (n < 1e-12) throw std::domain_error("BoundaryPoint: zero direction");
    u = v / n;
  }
  explicit BoundaryPoint(Complex z) : BoundaryPoint(vec(z)) {}
  static BoundaryPoint at_angle(Scalar theta) {
    return BoundaryPoint(Vec2(std::cos(theta), std::sin(theta)));
  }
  Scalar angle() const { return std::atan2(u.y(), u.x()); }
  Complex z() const { return cx(u); }
};

// Hyperbolic distance in the conformal ball model.
template <typename DA, typename DB>
Scalar dist(const Eigen::MatrixBase<DA>& z, const Eigen::MatrixBase<DB>& w) {
  Scalar a = 1.0 - z.squaredNorm();
  Scalar b = 1.0 - w.squaredNorm();
  if (a <= 0.0 || b <= 0.0) throw std::domain_error("dist: point outside ball");
  return acosh1p(2.0 * (z - w).squaredNorm() / (a * b));
}

template <typename DA>
Scalar dist0(const Eigen::MatrixBase<DA>& z) {
  Scalar n = z.norm();
  if (n >= 1.0) throw std::domain_error("dist0: point outside ball");
  return 2.0 * std::atanh(n);
}

inline Scalar dist(const BallPoint& z, const BallPoint& w) { return dist(z.x, w.x); }
inline Scalar dist0(const BallPoint& z) { return dist0(z.x); }

enum class IsoClass { identity, elliptic, loxodromic };

// Orientation-preserving isometry of the disk, stored as the SU(1,1)
// representative [[a, b], [conj b, conj a]] with |a|^2 - |b|^2 = 1.
// Composition renormalises the determinant, so long products stay on the
// group to machine precision.
class Isometry {
 public:
  Isometry() : a_(1.0, 0.0), b_(0.0, 0.0) {}
  Isometry(Complex a, Complex b);

  static Isometry identity() { return Isometry(); }
  static Isometry rotation(Scalar theta);
  // Axis from p (repelling) to q (attracting), translating by len > 0.
  static Isometry loxodromic(const BoundaryPoint& p, const BoundaryPoint& q,
                             Scalar len);
  static Isometry translate_to_origin(const BallPoint& w);
  static Isometry from_matrix(const Eigen::Matrix2cd& m);

  Complex a() const { return a_; }
  Complex b() const { return b_; }
  Eigen::Matrix2cd matrix() const;
  Scalar trace() const { return 2.0 * a_.real(); }

  Complex apply(Complex z) const;
  Vec2 apply(const Vec2& v) const { return vec(apply(cx(v))); }
  BallPoint apply(const BallPoint& p) const { return BallPoint(apply(p.z())); }
  BoundaryPoint apply(const BoundaryPoint& p) const;

  // Composition and inversion never renormalise: at depth the determinant
  // |a|^2 - |b|^2 is a catastrophically cancelled difference of huge terms,
  // while the entries themselves keep small relative error.
  Isometry operator*(const Isometry& o) const;
  Isometry inverse() const { return Isometry(raw_t{}, std::conj(a_), -b_); }

  // d(0, g(0)) computed from the entries; stays accurate far beyond the
  // depth at which g(0) itself saturates in double precision.
  Scalar displacement() const {
    Scalar bb = std::abs(b_);
    if (bb > 1e60) return 2.0 * (std::log(bb) + std::log(2.0));
    return acosh1p(2.0 * bb * bb);
  }
  // Direction of g(0) on the boundary circle; needs b != 0.
  BoundaryPoint image_direction() const;

  IsoClass classify() const;
  bool is_loxodromic() const { return classify() == IsoClass::loxodromic; }
  Scalar translation_length() const;
  // {attracting, repelling}, both ideal.
  std::pair<BoundaryPoint, BoundaryPoint> fixed_points() const;

 private:
  struct raw_t {};
  Isometry(raw_t, Complex a, Complex b) : a_(a), b_(b) {}
  Complex a_, b_;
  void normalise();
};

// d(g(0), h(0)).  Forms g^{-1} h, so it is only trustworthy while the
// entries of g and h are moderate; for deep words sharing a prefix, compose
// the relative word from its factors instead.
inline Scalar dist(const Isometry& g, const Isometry& h) {
  return (g.inverse() * h).displacement();
}

// Complete geodesic determined by two distinct ideal endpoints.  Eucli-
// dean support is either a diameter or a circle orthogonal to the unit
// circle; near-diametral input collapses to the diameter branch.
class Geodesic {
 public:
  Geodesic(const BoundaryPoint& xi, const BoundaryPoint& eta);

  const BoundaryPoint& neg() const { return xi_; }
  const BoundaryPoint& pos() const { return eta_; }
  bool diametral() const { return diametral_; }

  // Point of the geodesic closest to the origin.
  BallPoint summit() const;
  Scalar dist_to(const BallPoint& p) const;
  // Arclength parametrisation with t = 0 at the summit, increasing
  // towards the positive endpoint.
  BallPoint point_at(Scalar t) const;

 private:
  BoundaryPoint xi_, eta_;
  bool diametral_ = false;
  Vec2 center_{0.0, 0.0};  // valid when !diametral_
  Scalar radius_ = 0.0;
};

// Geodesic ray from the origin towards an ideal direction.
Scalar dist_to_ray(const BallPoint& p, const BoundaryPoint& dir);

// Largest distance from a geodesic's summit to the two radial rays pointing
// at its endpoints; strictly below the Schweikart constant for every
// geodesic, approaching it as the endpoints collide.
Scalar summit_ray_gap(const Geodesic& g);

// Arc of the boundary circle: unit direction plus angular half-width.
struct Cap {
  Vec2 dir{1.0, 0.0};
  Scalar hw = 0.0;

  static Cap full() { return Cap{Vec2(1.0, 0.0), M_PI}; }
  bool is_full() const { return hw >= M_PI - 1e-15; }
  Scalar diameter() const { return 2.0 * hw; }
  bool valid() const;

  bool contains(const BoundaryPoint& p, Scalar slack = 0.0) const;
  bool contains(const Cap& inner, Scalar slack = 0.0) const;
  bool disjoint_from(const Cap& o, Scalar slack = 0.0) const;
};

Scalar angle_between(const Vec2& u, const Vec2& v);

// Euclidean center and radius of the hyperbolic ball B(w, r).
std::pair<Vec2, Scalar> euclid_ball(const BallPoint& w, Scalar r);

// Radial projection of B(w, r) to the boundary; requires d(0, w) > r.
Cap shadow(const BallPoint& w, Scalar r);

// shadow(g(0), sigma) from the matrix entries of g, avoiding g(0) itself.
Cap image_shadow(const Isometry& g, Scalar sigma);

// log(4 / (1 - cos a0)): once the angle opposite a side is at least a0, the
// side length is within this constant of the sum of the other two.
Scalar pythagoras_defect(Scalar a0);

// Side opposite the angle alpha enclosed by sides b and c.
Scalar side_from_cosine_rule(Scalar b, Scalar c, Scalar alpha);
// Angle opposite side a in a triangle with sides a, b, c.
Scalar angle_at(Scalar a, Scalar b, Scalar c);

struct PathCheck {
  bool ok = false;
  Scalar worst_upper = 0.0;  // max over pairs of d(i,j) - (a|i-j| + b)
  Scalar worst_lower = 0.0;  // max over pairs of (|i-j|/a - b) - d(i,j)
  Scalar max_step = 0.0;
  std::size_t n = 0;
};

// Two-sided (a, b) quasi-geodesic test over all index pairs.  The isometry
// variant takes the per-step factors; node i is the product of steps[0..i).
// Each pairwise distance is read off a freshly composed relative word, which
// avoids the cancellation of differencing two deep cumulative matrices.
PathCheck check_quasi_steps(const std::vector<Isometry>& steps, Scalar a, Scalar b);
PathCheck check_quasi_path(const std::vector<BallPoint>& pts, Scalar a, Scalar b);

// Boundary direction of the path tail; *spread receives the largest angle
// between tail directions, a convergence certificate when small.
BoundaryPoint quasi_limit(const std::vector<Isometry>& path,
                          Scalar* spread = nullptr);

// Piecewise geodesic path with declared floors on edge length and interior
// bending angle.  The floors, not the realised minima, drive the a-priori
// tracking bound below.
struct QuasiGeodesicPath {
  std::vector<BallPoint> vertices;
  Scalar min_edge_length = 0.0;  // > 0
  Scalar min_angle = 0.0;        // in (0, pi)
};

// Checks the floors vertex by vertex; throws std::invalid_argument naming
// the first offending edge or corner.
void quasi_geodesic_validate(const QuasiGeodesicPath& path);

struct QuasiLimitReport {
  BoundaryPoint limit;        // read off the deepest vertex
  Scalar max_ray_dist = 0.0;  // realised max distance to the tracking ray
  Scalar bound = 0.0;         // ceiling from the declared floors alone
};

// Validates, then estimates the ideal limit from the deepest vertices and
// measures how far the path strays from the geodesic ray that starts at the
// first vertex and aims at the limit.  Needs min_edge_length above the bend
// defect of min_angle, so every edge makes definite outward progress; the
// reported ceiling shrinks as the edge floor grows.
QuasiLimitReport quasi_geodesic_limit(const QuasiGeodesicPath& path);

// Signed angle from the image direction of `parent` to that of
// `parent * step`.  The naive difference of the two directions drowns in
// rounding once it falls below ~1e-15; here the unit determinant collapses
// the cancelling terms, leaving only moderate products of the step entries,
// so the result keeps relative precision at any depth.
Scalar relative_cap_offset(const Isometry& parent, const Isometry& step);

// log of the halfwidth of Pi(B(g(0), sigma)) given L = log(|a||b|) of g;
// valid for any L with exp(-L) below the shadow threshold.
Scalar log_cap_halfwidth(Scalar L, Scalar sigma);

// Floor check in step form for group paths too deep for explicit vertices.
// Corner i is read off the displacement triple of steps i-1, i and their
// product, so accuracy does not degrade with depth.
struct StepFloorCheck {
  bool ok = true;
  std::size_t index = 0;  // offending edge or corner when !ok
  std::string what;       // empty when ok
  Scalar min_edge_seen = 0.0;
  Scalar min_angle_seen = 0.0;
};
StepFloorCheck quasi_steps_floors(const std::vector<Isometry>& steps,
                                  Scalar min_edge_length, Scalar min_angle);

}  // namespace limset
