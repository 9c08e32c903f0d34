#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "limset/hypgeo.hpp"

using namespace limset;

namespace {

std::mt19937_64 rng(20260825ull);

BallPoint random_point(Scalar rmax = 0.95) {
  std::uniform_real_distribution<Scalar> ang(0.0, 2.0 * M_PI);
  std::uniform_real_distribution<Scalar> rad(0.0, rmax);
  Scalar r = rad(rng), t = ang(rng);
  return BallPoint(Vec2(r * std::cos(t), r * std::sin(t)));
}

Isometry random_isometry() {
  std::uniform_real_distribution<Scalar> ang(0.0, 2.0 * M_PI);
  Isometry t = Isometry::translate_to_origin(random_point(0.9)).inverse();
  return t * Isometry::rotation(ang(rng));
}

}  // namespace

TEST_CASE("distance against fixed reference values") {
  BallPoint z(Vec2(0.1, 0.2)), w(Vec2(-0.3, 0.4));
  CHECK(dist(z, w) == doctest::Approx(1.0154342565303058).epsilon(1e-12));
  CHECK(dist0(z) == doctest::Approx(0.45489907201158275).epsilon(1e-12));
  CHECK(dist(z, z) == doctest::Approx(0.0));
  // radial points: d(0, z) = 2 artanh |z|
  for (Scalar u : {0.1, 0.5, 0.9, 0.999}) {
    CHECK(dist0(Vec2(u, 0.0)) == doctest::Approx(2.0 * std::atanh(u)).epsilon(1e-13));
  }
}

TEST_CASE("metric axioms on random points") {
  for (int i = 0; i < 300; ++i) {
    BallPoint a = random_point(), b = random_point(), c = random_point();
    Scalar dab = dist(a, b), dba = dist(b, a);
    CHECK(dab == doctest::Approx(dba).epsilon(1e-12));
    CHECK(dab >= 0.0);
    if (dab > 0.0) CHECK((a.x - b.x).norm() > 0.0);
    CHECK(dist(a, c) <= dab + dist(b, c) + 1e-10);
  }
}

TEST_CASE("ball point validation rejects boundary") {
  CHECK_THROWS_AS(BallPoint(Vec2(1.0, 0.0)), std::domain_error);
  CHECK_THROWS_AS(BallPoint(Vec2(0.8, 0.8)), std::domain_error);
  CHECK_NOTHROW(BallPoint(Vec2(0.9999, 0.0)));
}

TEST_CASE("isometries preserve distance") {
  for (int i = 0; i < 100; ++i) {
    Isometry g = random_isometry() * random_isometry();
    BallPoint a = random_point(), b = random_point();
    CHECK(dist(g.apply(a), g.apply(b)) == doctest::Approx(dist(a, b)).epsilon(1e-9));
  }
}

TEST_CASE("group structure") {
  Isometry g = random_isometry(), h = random_isometry();
  BallPoint p = random_point();
  Vec2 lhs = (g * h).apply(p).x;
  Vec2 rhs = g.apply(h.apply(p)).x;
  CHECK((lhs - rhs).norm() < 1e-12);
  Vec2 back = (g.inverse() * g).apply(p).x;
  CHECK((back - p.x).norm() < 1e-12);
  // determinant pinned to 1
  CHECK(std::norm(g.a()) - std::norm(g.b()) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("loxodromic from endpoints reproduces reference matrix") {
  Isometry g = Isometry::loxodromic(BoundaryPoint::at_angle(2.5),
                                    BoundaryPoint::at_angle(-0.7), 1.3);
  CHECK(g.a().real() == doctest::Approx(1.2187933028874561).epsilon(1e-12));
  CHECK(g.a().imag() == doctest::Approx(-0.020353373544071036).epsilon(1e-9));
  CHECK(g.b().real() == doctest::Approx(0.5460139050996489).epsilon(1e-12));
  CHECK(g.b().imag() == doctest::Approx(-0.43328996112969238).epsilon(1e-12));
  Complex g0 = g.apply(Complex(0.0, 0.0));
  CHECK(g0.real() == doctest::Approx(0.44193541207216544).epsilon(1e-12));
  CHECK(g0.imag() == doctest::Approx(-0.36288748601270490).epsilon(1e-12));
  CHECK(g.displacement() == doctest::Approx(1.3004876906372658).epsilon(1e-12));
}

TEST_CASE("loxodromic classification, length and fixed points") {
  BoundaryPoint p = BoundaryPoint::at_angle(2.5), q = BoundaryPoint::at_angle(-0.7);
  Isometry g = Isometry::loxodromic(p, q, 1.3);
  CHECK(g.classify() == IsoClass::loxodromic);
  CHECK(g.translation_length() == doctest::Approx(1.3).epsilon(1e-12));
  auto [att, rep] = g.fixed_points();
  CHECK((att.u - q.u).norm() < 1e-10);
  CHECK((rep.u - p.u).norm() < 1e-10);
  // iteration converges to the attracting endpoint
  Complex z(0.0, 0.0);
  for (int i = 0; i < 60; ++i) z = g.apply(z);
  CHECK(std::abs(z - q.z()) < 1e-6);

  CHECK(Isometry::rotation(0.8).classify() == IsoClass::elliptic);
  CHECK(Isometry().classify() == IsoClass::identity);
  CHECK_THROWS_AS(Isometry::rotation(0.8).translation_length(), std::logic_error);
}

TEST_CASE("near-parabolic trace refuses to classify") {
  Isometry g = Isometry::loxodromic(BoundaryPoint::at_angle(0.0),
                                    BoundaryPoint::at_angle(M_PI), 1e-12);
  CHECK_THROWS_AS(g.classify(), indeterminate_classification);
}

TEST_CASE("axis translation moves origin by exactly the length") {
  // axis through the origin: displacement equals translation length
  Isometry g = Isometry::loxodromic(BoundaryPoint::at_angle(M_PI),
                                    BoundaryPoint::at_angle(0.0), 4.0);
  CHECK(g.displacement() == doctest::Approx(4.0).epsilon(1e-12));
  CHECK(g.apply(Complex(0, 0)).real() == doctest::Approx(std::tanh(2.0)).epsilon(1e-12));
  // entry-based distance between images agrees with pointwise distance
  Isometry h = random_isometry();
  CHECK(dist(g, h) ==
        doctest::Approx(dist(g.apply(BallPoint()), h.apply(BallPoint()))).epsilon(1e-9));
}

TEST_CASE("entry-based displacement survives depth that saturates points") {
  Isometry step = Isometry::loxodromic(BoundaryPoint::at_angle(M_PI),
                                       BoundaryPoint::at_angle(0.0), 4.0);
  Isometry g;
  for (int n = 1; n <= 200; ++n) {
    g = g * step;
    CHECK(g.displacement() == doctest::Approx(4.0 * n).epsilon(1e-11));
  }
  // 800 units of displacement: the image point itself is numerically on the
  // boundary and useless, the entries are not
  CHECK(std::abs(g.apply(Complex(0, 0))) >= 1.0 - 1e-15);
}

TEST_CASE("translate_to_origin sends its argument to 0") {
  for (int i = 0; i < 50; ++i) {
    BallPoint w = random_point();
    Isometry t = Isometry::translate_to_origin(w);
    CHECK(std::abs(t.apply(w.z())) < 1e-12);
    CHECK(t.displacement() == doctest::Approx(dist0(w)).epsilon(1e-10));
  }
}

TEST_CASE("geodesic summit matches reference") {
  Geodesic g(BoundaryPoint::at_angle(0.3), BoundaryPoint::at_angle(2.1));
  CHECK(!g.diametral());
  BallPoint s = g.summit();
  CHECK(s.x.x() == doctest::Approx(0.12630617025227608).epsilon(1e-12));
  CHECK(s.x.y() == doctest::Approx(0.32487862069895494).epsilon(1e-12));
  CHECK(dist0(s) == doctest::Approx(0.72762462434018419).epsilon(1e-12));
  CHECK(g.dist_to(s) < 1e-10);
  // sampled points along the arc never get closer to 0 than the summit
  for (Scalar t = -3.0; t <= 3.0; t += 0.125) {
    CHECK(dist0(g.point_at(t)) >= dist0(s) - 1e-10);
  }
}

TEST_CASE("diametral geodesic") {
  Geodesic g(BoundaryPoint::at_angle(1.1), BoundaryPoint::at_angle(1.1 + M_PI));
  CHECK(g.diametral());
  CHECK(dist0(g.summit()) == doctest::Approx(0.0));
  BallPoint p(Vec2(0.3, 0.0));
  // distance from a point to a diameter via the sinh identity
  Complex u = std::exp(Complex(0, -1.1)) * p.z();
  Scalar want = std::asinh(2.0 * std::abs(u.imag()) / (1.0 - std::norm(u)));
  CHECK(g.dist_to(p) == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("point_at parametrises by arclength") {
  Geodesic g(BoundaryPoint::at_angle(-0.4), BoundaryPoint::at_angle(1.9));
  BallPoint prev = g.point_at(-2.0);
  for (Scalar t = -1.5; t <= 2.01; t += 0.5) {
    BallPoint cur = g.point_at(t);
    CHECK(dist(prev, cur) == doctest::Approx(0.5).epsilon(1e-9));
    CHECK(g.dist_to(cur) < 1e-9);
    prev = cur;
  }
}

TEST_CASE("summit ray gap: fixed value, universal bound, supremum") {
  // endpoints at +-beta about the x axis
  auto gap_at = [](Scalar beta) {
    return summit_ray_gap(Geodesic(BoundaryPoint::at_angle(beta),
                                   BoundaryPoint::at_angle(-beta)));
  };
  CHECK(gap_at(0.4) == doctest::Approx(0.82443970245920082).epsilon(1e-10));
  std::uniform_real_distribution<Scalar> ang(0.0, 2.0 * M_PI);
  for (int i = 0; i < 400; ++i) {
    Scalar t1 = ang(rng), t2 = ang(rng);
    if (std::abs(std::remainder(t1 - t2, 2.0 * M_PI)) < 1e-3) continue;
    Scalar gp = summit_ray_gap(Geodesic(BoundaryPoint::at_angle(t1),
                                        BoundaryPoint::at_angle(t2)));
    CHECK(gp < schweikart());
  }
  // sup approached as the endpoints collide
  CHECK(gap_at(1e-3) > schweikart() - 1e-6);
  CHECK(gap_at(1e-3) < schweikart());
  // closed form arsinh(cos beta) across the range
  for (Scalar beta = 0.05; beta < M_PI / 2; beta += 0.1) {
    CHECK(gap_at(beta) == doctest::Approx(std::asinh(std::cos(beta))).epsilon(1e-10));
  }
}

TEST_CASE("euclidean ball of a hyperbolic ball") {
  BallPoint w(Vec2(0.5, 0.1));
  auto [c, r] = euclid_ball(w, 0.4);
  CHECK(c.x() == doctest::Approx(0.48543841192848209).epsilon(1e-12));
  CHECK(c.y() == doctest::Approx(0.097087682385696418).epsilon(1e-12));
  CHECK(r == doctest::Approx(0.14755226798290044).epsilon(1e-12));
  // membership round-trip: hyperbolic sphere points sit on the euclidean sphere
  for (Scalar t = 0.0; t < 2.0 * M_PI; t += 0.37) {
    Isometry back = Isometry::translate_to_origin(w).inverse();
    Scalar u = std::tanh(0.2);
    Vec2 p = back.apply(Vec2(u * std::cos(t), u * std::sin(t)));
    CHECK((p - c).norm() == doctest::Approx(r).epsilon(1e-10));
  }
}

TEST_CASE("shadow cap matches reference and contains sampled shadows") {
  BallPoint w(Vec2(0.5, 0.1));
  Cap cap = shadow(w, 0.4);
  CHECK(std::atan2(cap.dir.y(), cap.dir.x()) ==
        doctest::Approx(0.19739555984988076).epsilon(1e-12));
  CHECK(cap.hw == doctest::Approx(0.30265343533941433).epsilon(1e-12));
  auto [c, r] = euclid_ball(w, 0.4);
  std::uniform_real_distribution<Scalar> uni(-1.0, 1.0);
  int hits = 0;
  while (hits < 2000) {
    Vec2 p = c + r * Vec2(uni(rng), uni(rng));
    if ((p - c).norm() > r) continue;
    ++hits;
    CHECK(cap.contains(BoundaryPoint(p), 1e-12));
  }
  // directions just outside the cap miss the ball
  for (Scalar side : {-1.0, 1.0}) {
    Scalar th = std::atan2(cap.dir.y(), cap.dir.x()) + side * cap.hw * (1.0 + 1e-6);
    Vec2 d(std::cos(th), std::sin(th));
    Scalar perp = std::abs(d.x() * c.y() - d.y() * c.x());
    CHECK(perp > r);
  }
}

TEST_CASE("shadow rejects balls covering the origin") {
  CHECK_THROWS_AS(shadow(BallPoint(Vec2(0.1, 0.0)), 1.0), std::domain_error);
}

TEST_CASE("shadow shrinks like exp(-d) at fixed radius") {
  Scalar sigma = 0.3;
  Scalar prev = 0.0;
  for (int k = 2; k <= 10; ++k) {
    BallPoint w(Vec2(std::tanh(0.5 * k), 0.0));
    Scalar hw = shadow(w, sigma).hw;
    if (k > 2) {
      Scalar ratio = hw / prev;
      CHECK(ratio == doctest::Approx(std::exp(-1.0)).epsilon(0.05));
    }
    prev = hw;
  }
  // far field: hw ~ 2 sinh(sigma) e^{-d}
  BallPoint far(Vec2(std::tanh(6.0), 0.0));
  CHECK(shadow(far, sigma).hw ==
        doctest::Approx(2.0 * std::sinh(sigma) * std::exp(-12.0)).epsilon(1e-3));
}

TEST_CASE("image shadow from entries equals pointwise shadow") {
  for (int i = 0; i < 40; ++i) {
    Isometry g = random_isometry() * random_isometry();
    if (g.displacement() < 1.0) continue;
    Cap a = image_shadow(g, 0.35);
    Cap b = shadow(g.apply(BallPoint()), 0.35);
    CHECK(angle_between(a.dir, b.dir) < 1e-9);
    CHECK(a.hw == doctest::Approx(b.hw).epsilon(1e-9));
  }
}

TEST_CASE("cap algebra") {
  Cap a{Vec2(1.0, 0.0), 0.5};
  Cap b{BoundaryPoint::at_angle(0.2).u, 0.25};
  Cap c{BoundaryPoint::at_angle(2.0).u, 0.3};
  CHECK(a.contains(b));
  CHECK(!b.contains(a));
  CHECK(a.disjoint_from(c));
  CHECK(!a.disjoint_from(b));
  Cap full = Cap::full();
  CHECK(full.contains(a));
  CHECK(full.contains(c));
  CHECK(!full.disjoint_from(a));
  CHECK(full.diameter() == doctest::Approx(2.0 * M_PI));
  CHECK(a.valid());
  CHECK(full.valid());
  // tangent caps are not disjoint but become so with negative slack
  Cap t1{BoundaryPoint::at_angle(0.0).u, 0.3}, t2{BoundaryPoint::at_angle(0.6).u, 0.3};
  CHECK(!t1.disjoint_from(t2, 1e-9));
  CHECK(t1.disjoint_from(t2, -1e-3));
  // containment is monotone under shrinking the inner cap
  Cap b2 = b;
  b2.hw *= 0.5;
  CHECK(a.contains(b2));
}

TEST_CASE("pythagoras defect reference values") {
  CHECK(pythagoras_defect(M_PI / 6) == doctest::Approx(3.3963994386046526).epsilon(1e-12));
  CHECK(pythagoras_defect(M_PI / 2) == doctest::Approx(1.3862943611198906).epsilon(1e-12));
  CHECK(pythagoras_defect(2 * M_PI / 3) == doctest::Approx(0.98082925301172624).epsilon(1e-12));
  // decreasing in the angle
  CHECK(pythagoras_defect(0.3) > pythagoras_defect(0.6));
}

TEST_CASE("almost-additivity of triangle sides above an angle floor") {
  std::uniform_real_distribution<Scalar> len(0.2, 12.0);
  std::uniform_real_distribution<Scalar> angd(0.0, 1.0);
  for (Scalar a0 : {M_PI / 6, M_PI / 3, M_PI / 2}) {
    Scalar K = pythagoras_defect(a0);
    for (int i = 0; i < 200; ++i) {
      Scalar b = len(rng), c = len(rng);
      Scalar alpha = a0 + angd(rng) * (M_PI - 1e-3 - a0);
      Scalar a = side_from_cosine_rule(b, c, alpha);
      CHECK(a <= b + c + 1e-10);
      CHECK(a >= b + c - K - 1e-10);
      // cosine rule round trip
      CHECK(angle_at(a, b, c) == doctest::Approx(alpha).epsilon(1e-8));
    }
  }
}

TEST_CASE("ray distance") {
  BoundaryPoint e1 = BoundaryPoint::at_angle(0.0);
  BallPoint p(Vec2(0.4, 0.3));
  // foot on the positive half: distance to the ray equals distance to the diameter
  Scalar dd = std::asinh(2.0 * 0.3 / (1.0 - 0.25));
  CHECK(dist_to_ray(p, e1) == doctest::Approx(dd).epsilon(1e-12));
  // foot behind the origin: nearest ray point is the origin itself
  BallPoint q(Vec2(-0.4, 0.3));
  CHECK(dist_to_ray(q, e1) == doctest::Approx(dist0(q)).epsilon(1e-12));
}

TEST_CASE("quasi-geodesic check accepts geodesic orbits and rejects backtracks") {
  Isometry step = Isometry::loxodromic(BoundaryPoint::at_angle(M_PI),
                                       BoundaryPoint::at_angle(0.0), 1.5);
  std::vector<Isometry> steps(40, step);
  PathCheck ok = check_quasi_steps(steps, 1.6, 0.5);
  CHECK(ok.ok);
  CHECK(ok.max_step == doctest::Approx(1.5).epsilon(1e-10));

  // fold the path back on itself: lower quasi-geodesic bound fails
  std::vector<Isometry> bad(12, step);
  bad.insert(bad.end(), 12, step.inverse());
  PathCheck rej = check_quasi_steps(bad, 1.6, 0.5);
  CHECK(!rej.ok);
  CHECK(rej.worst_lower > 0.0);

  std::vector<Isometry> path{Isometry()};
  for (int i = 0; i < 40; ++i) path.push_back(path.back() * step);
  Scalar spread = 1.0;
  BoundaryPoint lim = quasi_limit(path, &spread);
  CHECK((lim.u - Vec2(1.0, 0.0)).norm() < 1e-6);
  CHECK(spread < 1e-6);
}

namespace {

// piecewise geodesic that turns by +-(pi - a0) after every edge of length L
std::vector<Isometry> zigzag_steps(Scalar L, Scalar a0, int n) {
  std::vector<Isometry> steps;
  Isometry t = Isometry::loxodromic(BoundaryPoint::at_angle(M_PI),
                                    BoundaryPoint::at_angle(0.0), L);
  for (int k = 1; k <= n; ++k) {
    Scalar th = (k % 2 == 1 ? 1.0 : -1.0) * (M_PI - a0);
    steps.push_back(t * Isometry::rotation(th));
  }
  return steps;
}

std::vector<BallPoint> path_vertices(const std::vector<Isometry>& steps) {
  std::vector<BallPoint> v{BallPoint()};
  Isometry m;
  for (const auto& s : steps) {
    m = m * s;
    v.push_back(m.apply(BallPoint()));
  }
  return v;
}

template <typename F>
std::string thrown_msg(F&& f) {
  try {
    f();
  } catch (const std::invalid_argument& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST_CASE("declared-floor path validation names the offender") {
  QuasiGeodesicPath good{path_vertices(zigzag_steps(2.0, 2 * M_PI / 3, 8)),
                         1.999, 2 * M_PI / 3 - 1e-6};
  CHECK_NOTHROW(quasi_geodesic_validate(good));

  QuasiGeodesicPath short_edge = good;
  short_edge.vertices[3] = BallPoint(
      Vec2(0.5 * (short_edge.vertices[2].x + short_edge.vertices[3].x)));
  std::string m1 = thrown_msg([&] { quasi_geodesic_validate(short_edge); });
  CHECK(m1.find("edge 2") != std::string::npos);
  CHECK(m1.find("below the floor") != std::string::npos);

  QuasiGeodesicPath sharp{{BallPoint(Vec2(0.0, 0.0)), BallPoint(Vec2(0.8, 0.0)),
                           BallPoint(Vec2(0.2, 0.05))},
                          0.3, M_PI / 2};
  std::string m2 = thrown_msg([&] { quasi_geodesic_validate(sharp); });
  CHECK(m2.find("corner at vertex 1") != std::string::npos);

  QuasiGeodesicPath dup{{BallPoint(Vec2(0.1, 0.0)), BallPoint(Vec2(0.1, 0.0))},
                        0.3, M_PI / 2};
  CHECK(thrown_msg([&] { quasi_geodesic_validate(dup); }).find("coincide") !=
        std::string::npos);

  QuasiGeodesicPath bad_floor = good;
  bad_floor.min_angle = M_PI;
  CHECK_THROWS_AS(quasi_geodesic_validate(bad_floor), std::invalid_argument);
  bad_floor.min_angle = 1.0;
  bad_floor.min_edge_length = 0.0;
  CHECK_THROWS_AS(quasi_geodesic_validate(bad_floor), std::invalid_argument);
}

TEST_CASE("path along a single ray reaches its exact endpoint") {
  std::vector<BallPoint> radial;
  for (int k = 0; k <= 8; ++k)
    radial.push_back(BallPoint(std::polar(std::tanh(k / 2.0), 0.7)));
  QuasiGeodesicPath p{radial, 0.99, 3.0};
  QuasiLimitReport rep = quasi_geodesic_limit(p);
  CHECK(rep.limit.angle() == doctest::Approx(0.7).epsilon(1e-12));
  CHECK(rep.max_ray_dist < 1e-8);
  CHECK(rep.max_ray_dist <= rep.bound);

  // same statement off-centre: vertices marched along a non-diametral
  // geodesic, limit read back in the original frame
  Geodesic g(BoundaryPoint::at_angle(2.9), BoundaryPoint::at_angle(0.4));
  std::vector<BallPoint> along;
  for (int k = 0; k <= 8; ++k) along.push_back(g.point_at(0.5 + 1.2 * k));
  QuasiLimitReport rep2 = quasi_geodesic_limit({along, 1.19, 3.0});
  CHECK((rep2.limit.u - g.pos().u).norm() < 1e-9);
  CHECK(rep2.max_ray_dist < 1e-7);
}

TEST_CASE("zig-zag stays a bounded distance from its limiting ray") {
  Scalar a0 = 2 * M_PI / 3;
  QuasiGeodesicPath p12{path_vertices(zigzag_steps(2.0, a0, 12)), 1.999,
                        a0 - 1e-6};
  QuasiLimitReport r12 = quasi_geodesic_limit(p12);
  CHECK(r12.max_ray_dist == doctest::Approx(0.46391741434018510).epsilon(1e-7));
  CHECK(r12.bound == doctest::Approx(3.7519212363019530).epsilon(1e-6));
  CHECK(r12.max_ray_dist <= r12.bound);

  // deepening the path barely moves the realised maximum
  QuasiLimitReport r10 =
      quasi_geodesic_limit({path_vertices(zigzag_steps(2.0, a0, 10)), 1.999,
                            a0 - 1e-6});
  CHECK(std::abs(r12.max_ray_dist - r10.max_ray_dist) < 1e-5);

  // doubling the edge floor shrinks the ceiling and keeps the realised
  // distance under it
  QuasiGeodesicPath p6{path_vertices(zigzag_steps(4.0, a0, 6)), 3.999,
                       a0 - 1e-6};
  QuasiLimitReport r6 = quasi_geodesic_limit(p6);
  CHECK(r6.max_ray_dist == doctest::Approx(0.53720366955679072).epsilon(1e-6));
  CHECK(r6.bound < r12.bound);
  CHECK(r6.max_ray_dist <= r6.bound);

  // edge floor below the bend defect: no progress certificate
  QuasiGeodesicPath weak = p12;
  weak.min_edge_length = 0.9;
  CHECK(thrown_msg([&] { quasi_geodesic_limit(weak); }).find("bend defect") !=
        std::string::npos);
}

TEST_CASE("step-form floor check matches the vertex form at depth") {
  Scalar a0 = 2 * M_PI / 3;
  auto steps = zigzag_steps(2.0, a0, 400);
  StepFloorCheck deep = quasi_steps_floors(steps, 1.999, a0 - 1e-9);
  CHECK(deep.ok);
  CHECK(deep.min_edge_seen == doctest::Approx(2.0).epsilon(1e-10));
  CHECK(deep.min_angle_seen == doctest::Approx(a0).epsilon(1e-9));

  StepFloorCheck e = quasi_steps_floors(steps, 2.5, 1.0);
  CHECK(!e.ok);
  CHECK(e.index == 0);
  CHECK(e.what.find("edge 0") != std::string::npos);

  StepFloorCheck c = quasi_steps_floors(steps, 1.9, 2.2);
  CHECK(!c.ok);
  CHECK(c.index == 1);
  CHECK(c.what.find("corner after step 0") != std::string::npos);

  // agreement with the explicit-vertex validator while both are in range
  auto ten = zigzag_steps(2.0, a0, 10);
  CHECK_NOTHROW(quasi_geodesic_validate(
      {path_vertices(ten), 1.999, a0 - 1e-6}));
}

TEST_CASE("relative cap offset and log halfwidth match direct shadows") {
  Isometry a = Isometry::loxodromic(BoundaryPoint::at_angle(M_PI),
                                    BoundaryPoint::at_angle(0.0), 3.0);
  Isometry b = Isometry::loxodromic(BoundaryPoint::at_angle(-M_PI / 2),
                                    BoundaryPoint::at_angle(M_PI / 2), 3.0);
  Isometry parent = a * b * a;
  for (const Isometry& step : {b, a * b, b * a, b.inverse()}) {
    Isometry child = parent * step;
    Cap cu = image_shadow(parent, 0.5);
    Cap cv = image_shadow(child, 0.5);
    Scalar cross = cu.dir.x() * cv.dir.y() - cu.dir.y() * cv.dir.x();
    Scalar direct = std::atan2(cross, cu.dir.dot(cv.dir));
    CHECK(relative_cap_offset(parent, step) == doctest::Approx(direct).epsilon(1e-9));
    Scalar L = std::log(std::abs(child.a())) + std::log(std::abs(child.b()));
    CHECK(log_cap_halfwidth(L, 0.5) ==
          doctest::Approx(std::log(cv.hw)).epsilon(1e-10));
  }

  // accumulated offsets stay consistent with direct directions while those
  // are resolvable (beyond that range the offsets keep shrinking with depth)
  Isometry m = a;
  Scalar theta = std::atan2(image_shadow(m, 0.5).dir.y(), image_shadow(m, 0.5).dir.x());
  for (int k = 0; k < 60; ++k) {
    const Isometry& step = (k % 2 == 0) ? b : a;
    Scalar off = relative_cap_offset(m, step);
    Isometry next = m * step;
    Scalar Lm = std::log(std::abs(m.a())) + std::log(std::abs(m.b()));
    Scalar Ln = std::log(std::abs(next.a())) + std::log(std::abs(next.b()));
    CHECK(log_cap_halfwidth(Ln, 0.5) < log_cap_halfwidth(Lm, 0.5));
    if (std::abs(next.b()) < 1e6) {
      Cap direct = image_shadow(next, 0.5);
      Scalar want = theta + off;
      Scalar got = std::atan2(direct.dir.y(), direct.dir.x());
      Scalar diff = std::remainder(want - got, 2 * M_PI);
      CHECK(std::abs(diff) < 1e-9);
    }
    theta += off;
    m = next;
  }
}
