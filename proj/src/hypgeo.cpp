#include "limset/hypgeo.hpp"

#include <algorithm>
#include <limits>

namespace limset {

void Isometry::normalise() {
  Scalar det = std::norm(a_) - std::norm(b_);
  if (!(det > 0.0))
    throw std::domain_error("Isometry: |a|^2 - |b|^2 must be positive");
  Scalar s = 1.0 / std::sqrt(det);
  a_ *= s;
  b_ *= s;
}

Isometry::Isometry(Complex a, Complex b) : a_(a), b_(b) { normalise(); }

Isometry Isometry::rotation(Scalar theta) {
  return Isometry(std::polar(1.0, theta / 2.0), Complex(0.0, 0.0));
}

Isometry Isometry::loxodromic(const BoundaryPoint& p, const BoundaryPoint& q,
                              Scalar len) {
  if (!(len > 0.0)) throw std::domain_error("loxodromic: length must be positive");
  Complex P = p.z(), Q = q.z();
  Complex den = Q - P;
  if (std::abs(den) < 1e-9)
    throw std::domain_error("loxodromic: endpoints coincide");
  Scalar ep = std::exp(len / 2.0), em = std::exp(-len / 2.0);
  Complex a = (Q * ep - P * em) / den;
  Complex b = Q * P * (em - ep) / den;
  return Isometry(a, b);
}

Isometry Isometry::translate_to_origin(const BallPoint& w) {
  Scalar s = std::sqrt(1.0 - w.x.squaredNorm());
  return Isometry(Complex(1.0 / s, 0.0), -w.z() / s);
}

Isometry Isometry::from_matrix(const Eigen::Matrix2cd& m) {
  Scalar scale = m.norm();
  if (scale < 1e-12) throw std::domain_error("from_matrix: zero matrix");
  if (std::abs(m(1, 0) - std::conj(m(0, 1))) > 1e-9 * scale ||
      std::abs(m(1, 1) - std::conj(m(0, 0))) > 1e-9 * scale)
    throw std::domain_error("from_matrix: not of the form [[a,b],[conj b, conj a]]");
  return Isometry(m(0, 0), m(0, 1));
}

Eigen::Matrix2cd Isometry::matrix() const {
  Eigen::Matrix2cd m;
  m << a_, b_, std::conj(b_), std::conj(a_);
  return m;
}

Complex Isometry::apply(Complex z) const {
  return (a_ * z + b_) / (std::conj(b_) * z + std::conj(a_));
}

BoundaryPoint Isometry::apply(const BoundaryPoint& p) const {
  return BoundaryPoint(apply(p.z()));
}

Isometry Isometry::operator*(const Isometry& o) const {
  return Isometry(raw_t{}, a_ * o.a_ + b_ * std::conj(o.b_),
                  a_ * o.b_ + b_ * std::conj(o.a_));
}

BoundaryPoint Isometry::image_direction() const {
  Complex d = a_ * b_;
  if (std::abs(d) < 1e-12)
    throw std::domain_error("image_direction: g(0) is at the origin");
  return BoundaryPoint(d);
}

IsoClass Isometry::classify() const {
  if (b_ == Complex(0.0, 0.0) && (a_ == Complex(1.0, 0.0) || a_ == Complex(-1.0, 0.0)))
    return IsoClass::identity;
  Scalar t = std::abs(trace());
  if (std::abs(t - 2.0) <= tol().trace_band)
    throw indeterminate_classification(
        "classify: |trace| within the unreliable band around 2");
  return t < 2.0 ? IsoClass::elliptic : IsoClass::loxodromic;
}

Scalar Isometry::translation_length() const {
  if (classify() != IsoClass::loxodromic)
    throw std::logic_error("translation_length: not loxodromic");
  return 2.0 * std::acosh(std::abs(trace()) / 2.0);
}

std::pair<BoundaryPoint, BoundaryPoint> Isometry::fixed_points() const {
  if (classify() != IsoClass::loxodromic)
    throw std::logic_error("fixed_points: not loxodromic");
  Complex c = std::conj(b_);
  // roots of c w^2 + (conj a - a) w - b; both lie on the unit circle
  Scalar disc = std::sqrt(std::max(0.0, a_.real() * a_.real() - 1.0));
  Complex base = Complex(0.0, a_.imag());
  Complex w1 = (base + disc) / c;
  Complex w2 = (base - disc) / c;
  Scalar m1 = std::abs(c * w1 + std::conj(a_));
  Scalar m2 = std::abs(c * w2 + std::conj(a_));
  if (std::abs(m1 - m2) <= tol().trace_band * (m1 + m2))
    throw indeterminate_classification("fixed_points: multipliers too close");
  if (m1 > m2) return {BoundaryPoint(w1), BoundaryPoint(w2)};
  return {BoundaryPoint(w2), BoundaryPoint(w1)};
}

Geodesic::Geodesic(const BoundaryPoint& xi, const BoundaryPoint& eta)
    : xi_(xi), eta_(eta) {
  if ((xi.u - eta.u).norm() < 1e-9)
    throw std::domain_error("Geodesic: endpoints coincide");
  Scalar cross = xi.u.x() * eta.u.y() - xi.u.y() * eta.u.x();
  if (std::abs(cross) < 1e-12) {
    diametral_ = true;
    return;
  }
  // half the angular separation; trig form keeps the radius accurate for
  // nearly coincident endpoints where |c|^2 - 1 would cancel away
  Scalar half = 0.5 * std::atan2(std::abs(cross), xi.u.dot(eta.u));
  center_ = (xi.u + eta.u).normalized() / std::cos(half);
  radius_ = std::tan(half);
}

BallPoint Geodesic::summit() const {
  if (diametral_) return BallPoint();
  Scalar cn = center_.norm();
  // |c| - rho via the reciprocal, stable for near-diametral arcs
  Scalar s = 1.0 / (cn + radius_);
  return BallPoint(center_ * (s / cn));
}

Scalar Geodesic::dist_to(const BallPoint& p) const {
  Scalar conf = 1.0 - p.x.squaredNorm();
  if (diametral_) {
    Complex u = std::conj(xi_.z()) * p.z();
    return std::asinh(2.0 * std::abs(u.imag()) / conf);
  }
  // ||z - c||^2 - rho^2 expanded through |c|^2 - rho^2 = 1
  Scalar power = 1.0 + p.x.squaredNorm() - 2.0 * p.x.dot(center_);
  return std::asinh(std::abs(power) / (radius_ * conf));
}

BallPoint Geodesic::point_at(Scalar t) const {
  if (t == 0.0) return summit();
  Isometry slide = t > 0.0 ? Isometry::loxodromic(xi_, eta_, t)
                           : Isometry::loxodromic(eta_, xi_, -t);
  return slide.apply(summit());
}

Scalar dist_to_ray(const BallPoint& p, const BoundaryPoint& dir) {
  Complex u = std::conj(dir.z()) * p.z();
  if (u.real() <= 0.0) return dist0(p);
  return std::asinh(2.0 * std::abs(u.imag()) / (1.0 - std::norm(u)));
}

Scalar summit_ray_gap(const Geodesic& g) {
  BallPoint s = g.summit();
  return std::min(dist_to_ray(s, g.neg()), dist_to_ray(s, g.pos()));
}

Scalar angle_between(const Vec2& u, const Vec2& v) {
  Scalar cross = u.x() * v.y() - u.y() * v.x();
  return std::atan2(std::abs(cross), u.dot(v));
}

bool Cap::valid() const {
  return std::abs(dir.norm() - 1.0) <= 1e-9 && hw >= 0.0 && hw <= M_PI + 1e-12;
}

bool Cap::contains(const BoundaryPoint& p, Scalar slack) const {
  if (is_full()) return true;
  return angle_between(dir, p.u) <= hw + slack;
}

bool Cap::contains(const Cap& inner, Scalar slack) const {
  if (is_full()) return true;
  if (inner.is_full()) return false;
  return angle_between(dir, inner.dir) + inner.hw <= hw + slack;
}

bool Cap::disjoint_from(const Cap& o, Scalar slack) const {
  if (is_full() || o.is_full()) return false;
  return angle_between(dir, o.dir) > hw + o.hw + slack;
}

std::pair<Vec2, Scalar> euclid_ball(const BallPoint& w, Scalar r) {
  if (!(r >= 0.0)) throw std::domain_error("euclid_ball: negative radius");
  Scalar t = std::tanh(r / 2.0);
  Scalar u2 = w.x.squaredNorm();
  Scalar den = 1.0 - t * t * u2;
  return {w.x * ((1.0 - t * t) / den), t * (1.0 - u2) / den};
}

Cap shadow(const BallPoint& w, Scalar r) {
  auto [c, rho] = euclid_ball(w, r);
  Scalar cn = c.norm();
  if (cn <= rho)
    throw std::domain_error("shadow: ball reaches the origin");
  return Cap{c / cn, std::asin(std::min(1.0, rho / cn))};
}

Cap image_shadow(const Isometry& g, Scalar sigma) {
  Scalar t = std::tanh(sigma / 2.0);
  Scalar ab = std::abs(g.a()) * std::abs(g.b());
  if (ab < 1e-300) throw std::domain_error("image_shadow: g(0) at the origin");
  Scalar arg = t / ((1.0 - t * t) * ab);
  if (arg >= 1.0)
    throw std::domain_error("image_shadow: ball reaches the origin");
  return Cap{g.image_direction().u, std::asin(arg)};
}

Scalar pythagoras_defect(Scalar a0) {
  if (!(a0 > 0.0 && a0 <= M_PI))
    throw std::domain_error("pythagoras_defect: angle outside (0, pi]");
  return std::log(2.0) - 2.0 * std::log(std::sin(a0 / 2.0));
}

Scalar side_from_cosine_rule(Scalar b, Scalar c, Scalar alpha) {
  if (!(b > 0.0 && c > 0.0) || !(alpha > 0.0 && alpha < M_PI))
    throw std::domain_error("side_from_cosine_rule: bad arguments");
  Scalar ch = std::cosh(b) * std::cosh(c) -
              std::sinh(b) * std::sinh(c) * std::cos(alpha);
  return std::acosh(std::max(1.0, ch));
}

Scalar angle_at(Scalar a, Scalar b, Scalar c) {
  if (!(a > 0.0 && b > 0.0 && c > 0.0))
    throw std::domain_error("angle_at: sides must be positive");
  Scalar ca = (std::cosh(b) * std::cosh(c) - std::cosh(a)) /
              (std::sinh(b) * std::sinh(c));
  return std::acos(std::clamp(ca, -1.0, 1.0));
}

namespace {

template <typename Seq, typename Dist>
PathCheck check_quasi_impl(const Seq& pts, Scalar a, Scalar b, Dist&& dd) {
  if (!(a >= 1.0) || !(b >= 0.0))
    throw std::domain_error("check_quasi_path: need a >= 1 and b >= 0");
  PathCheck r;
  r.n = pts.size();
  if (r.n < 2) {
    r.ok = r.n == 1;
    return r;
  }
  r.worst_upper = -1e300;
  r.worst_lower = -1e300;
  for (std::size_t i = 0; i + 1 < pts.size(); ++i)
    r.max_step = std::max(r.max_step, dd(pts[i], pts[i + 1]));
  for (std::size_t i = 0; i < pts.size(); ++i) {
    for (std::size_t j = i + 1; j < pts.size(); ++j) {
      Scalar d = dd(pts[i], pts[j]);
      Scalar k = static_cast<Scalar>(j - i);
      r.worst_upper = std::max(r.worst_upper, d - (a * k + b));
      r.worst_lower = std::max(r.worst_lower, (k / a - b) - d);
    }
  }
  r.ok = r.worst_upper <= tol().check && r.worst_lower <= tol().check;
  return r;
}

}  // namespace

PathCheck check_quasi_steps(const std::vector<Isometry>& steps, Scalar a, Scalar b) {
  if (!(a >= 1.0) || !(b >= 0.0))
    throw std::domain_error("check_quasi_steps: need a >= 1 and b >= 0");
  PathCheck r;
  r.n = steps.size() + 1;
  r.worst_upper = -1e300;
  r.worst_lower = -1e300;
  for (const Isometry& s : steps) r.max_step = std::max(r.max_step, s.displacement());
  for (std::size_t i = 0; i + 1 < r.n; ++i) {
    Isometry rel;
    for (std::size_t j = i + 1; j < r.n; ++j) {
      rel = rel * steps[j - 1];
      Scalar d = rel.displacement();
      Scalar k = static_cast<Scalar>(j - i);
      r.worst_upper = std::max(r.worst_upper, d - (a * k + b));
      r.worst_lower = std::max(r.worst_lower, (k / a - b) - d);
    }
  }
  r.ok = r.worst_upper <= tol().check && r.worst_lower <= tol().check;
  return r;
}

PathCheck check_quasi_path(const std::vector<BallPoint>& pts, Scalar a, Scalar b) {
  return check_quasi_impl(pts, a, b, [](const BallPoint& p, const BallPoint& q) {
    return dist(p, q);
  });
}

BoundaryPoint quasi_limit(const std::vector<Isometry>& path, Scalar* spread) {
  std::vector<Vec2> dirs;
  for (std::size_t i = path.size() / 2; i < path.size(); ++i) {
    Complex d = path[i].a() * path[i].b();
    if (std::abs(d) >= 1e-12) dirs.push_back(vec(d).normalized());
  }
  if (dirs.empty())
    throw std::domain_error("quasi_limit: no usable tail directions");
  if (spread) {
    Scalar s = 0.0;
    for (std::size_t i = 0; i < dirs.size(); ++i)
      for (std::size_t j = i + 1; j < dirs.size(); ++j)
        s = std::max(s, angle_between(dirs[i], dirs[j]));
    *spread = s;
  }
  return BoundaryPoint(dirs.back());
}

void quasi_geodesic_validate(const QuasiGeodesicPath& path) {
  if (!(path.min_edge_length > 0.0))
    throw std::invalid_argument("quasi path: edge floor must be positive");
  if (!(path.min_angle > 0.0 && path.min_angle < M_PI))
    throw std::invalid_argument("quasi path: angle floor must lie in (0, pi)");
  const auto& v = path.vertices;
  if (v.size() < 2)
    throw std::invalid_argument("quasi path: need at least two vertices");
  for (std::size_t i = 0; i + 1 < v.size(); ++i) {
    Scalar e = dist(v[i], v[i + 1]);
    if (e == 0.0)
      throw std::invalid_argument("quasi path: vertices " + std::to_string(i) +
                                  " and " + std::to_string(i + 1) + " coincide");
    if (e < path.min_edge_length)
      throw std::invalid_argument(
          "quasi path: edge " + std::to_string(i) + " has length " +
          std::to_string(e) + ", below the floor " +
          std::to_string(path.min_edge_length));
  }
  for (std::size_t i = 1; i + 1 < v.size(); ++i) {
    Scalar ang = angle_at(dist(v[i - 1], v[i + 1]), dist(v[i - 1], v[i]),
                          dist(v[i], v[i + 1]));
    if (ang < path.min_angle)
      throw std::invalid_argument(
          "quasi path: corner at vertex " + std::to_string(i) + " bends to " +
          std::to_string(ang) + ", below the floor " +
          std::to_string(path.min_angle));
  }
}

QuasiLimitReport quasi_geodesic_limit(const QuasiGeodesicPath& path) {
  quasi_geodesic_validate(path);
  Scalar K = pythagoras_defect(path.min_angle);
  Scalar L = path.min_edge_length;
  if (!(L > K))
    throw std::invalid_argument(
        "quasi path: edge floor " + std::to_string(L) +
        " does not exceed the bend defect " + std::to_string(K) +
        " of the angle floor, so outward progress is not guaranteed");
  const auto& v = path.vertices;
  Isometry T = Isometry::translate_to_origin(v.front());
  BoundaryPoint dir(T.apply(v.back()).x);
  QuasiLimitReport r;
  r.limit = T.inverse().apply(dir);
  for (const BallPoint& p : v)
    r.max_ray_dist = std::max(r.max_ray_dist, dist_to_ray(T.apply(p), dir));
  // Per corner the path loses at most K of straight-line progress, and the
  // losses decay geometrically at rate L - K along the tail; the Schweikart
  // term absorbs the wedge between the chord and the limiting ray.
  r.bound = K * (L + K) / (L - K) + schweikart();
  return r;
}

Scalar relative_cap_offset(const Isometry& parent, const Isometry& step) {
  Complex ab_u = parent.a() * std::conj(parent.b());
  Scalar na = std::norm(parent.a()), nb = std::norm(parent.b());
  if (!(nb > 0.0))
    throw std::domain_error("relative_cap_offset: parent fixes the origin");
  // With z = (a_v b_v) conj(a_u b_u) for v = parent*step, the determinant
  // identity gives Im z = (|a_u|^2 - |b_u|^2) Im w = Im w exactly.
  Complex w = ab_u * (step.a() * step.b());
  Scalar rez = na * nb * (std::norm(step.a()) + std::norm(step.b())) +
               (na + nb) * w.real();
  return std::atan2(w.imag(), rez);
}

Scalar log_cap_halfwidth(Scalar L, Scalar sigma) {
  Scalar t = std::tanh(sigma / 2.0);
  Scalar lx = std::log(t / (1.0 - t * t)) - L;
  if (lx < -7.0) {
    Scalar x2 = std::exp(2.0 * lx);
    return lx + std::log1p(x2 * (1.0 / 6.0 + 0.075 * x2));
  }
  Scalar x = std::exp(lx);
  if (x >= 1.0)
    throw std::domain_error("log_cap_halfwidth: ball covers the origin");
  return std::log(std::asin(x));
}

StepFloorCheck quasi_steps_floors(const std::vector<Isometry>& steps,
                                  Scalar min_edge_length, Scalar min_angle) {
  StepFloorCheck r;
  r.min_edge_seen = std::numeric_limits<Scalar>::infinity();
  r.min_angle_seen = M_PI;
  for (std::size_t i = 0; i < steps.size(); ++i) {
    Scalar e = steps[i].displacement();
    r.min_edge_seen = std::min(r.min_edge_seen, e);
    if (e < min_edge_length) {
      r.ok = false;
      r.index = i;
      r.what = "edge " + std::to_string(i) + " has length " + std::to_string(e) +
               ", below the floor " + std::to_string(min_edge_length);
      return r;
    }
  }
  for (std::size_t i = 0; i + 1 < steps.size(); ++i) {
    Scalar ang = angle_at((steps[i] * steps[i + 1]).displacement(),
                          steps[i].displacement(), steps[i + 1].displacement());
    r.min_angle_seen = std::min(r.min_angle_seen, ang);
    if (ang < min_angle) {
      r.ok = false;
      r.index = i + 1;
      r.what = "corner after step " + std::to_string(i) + " bends to " +
               std::to_string(ang) + ", below the floor " +
               std::to_string(min_angle);
      return r;
    }
  }
  return r;
}

}  // namespace limset
