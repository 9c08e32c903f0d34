#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "limset/renorm.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <string>
#include <vector>

#include "limset/presets.hpp"

using namespace limset;

namespace {

CalibrationResult escape_calib() {
  return rrp_calibrate(make_group(preset_spec("escape")), 0.002);
}

// exponent used throughout for the rank-2 preset: half the measured growth
// midpoint, fixed here so the baselines below stay pinned
constexpr Scalar kDefaultS = 0.069170;

CalibrationResult default_calib() {
  return rrp_calibrate(make_group(preset_spec("default")), kDefaultS);
}

std::vector<std::string> words_of(const std::vector<HTreeNode>& v) {
  std::vector<std::string> w;
  for (const auto& n : v) w.push_back(word_str(n.orbit.word));
  return w;
}

TRPParams trp_params(const CalibrationResult& cal, Scalar k_gamma) {
  TRPParams p;
  p.k_gamma = k_gamma;
  p.summit_slack = 2.0 * cal.params.ell + schweikart();
  p.comparability_c = cal.params.comparability_c;
  return p;
}

}  // namespace

TEST_CASE("calibration reproduces the frozen baselines on both presets") {
  auto esc = escape_calib();
  CHECK(esc.params.s == 0.002);
  CHECK(esc.params.ell == doctest::Approx(2.200000002201).epsilon(1e-9));
  CHECK(esc.shell == doctest::Approx(2.2).epsilon(1e-9));
  CHECK(esc.K_min_raw == doctest::Approx(1.991972847134).epsilon(1e-6));
  CHECK(esc.params.K == doctest::Approx(0.999 * esc.K_min_raw).epsilon(1e-12));
  CHECK(esc.params.sigma == doctest::Approx(schweikart()).epsilon(1e-12));
  CHECK(esc.params.comparability_c ==
        doctest::Approx(std::exp(esc.params.ell)).epsilon(1e-12));
  CHECK(esc.states_checked == 253);
  REQUIRE(esc.successors.size() == 4);
  std::set<std::string> got;
  for (const auto& p : esc.successors) {
    got.insert(word_str(p.word));
    CHECK(p.dist == doctest::Approx(2.2).epsilon(1e-12));
    CHECK(p.label == 0);
  }
  CHECK(got == std::set<std::string>{"b", "B", "c", "C"});

  // design margins of the certified packing: every trial state keeps its
  // children strictly inside with room, siblings well separated
  Scalar min_nest = 1.0, min_gap = 1e9;
  for (const auto& st : esc.states) {
    min_nest = std::min(min_nest, st.worst_nest);
    min_gap = std::min(min_gap, st.worst_gap);
  }
  CHECK(min_nest > 0.015);
  CHECK(min_gap > 0.25);

  auto def = default_calib();
  CHECK(def.params.ell == doctest::Approx(10.577456537367).epsilon(1e-9));
  CHECK(def.K_min_raw == doctest::Approx(1.755755587565).epsilon(1e-6));
  CHECK(def.states_checked == 2185);
  REQUIRE(def.successors.size() == 6);
  std::set<std::string> dw;
  for (const auto& p : def.successors) dw.insert(word_str(p.word));
  CHECK(dw == std::set<std::string>{"b", "B", "abA", "aBA", "Aba", "ABa"});
}

TEST_CASE("root expansion returns exactly the published successor set") {
  for (const char* name : {"escape", "default"}) {
    auto g = make_group(preset_spec(name));
    auto cal = rrp_calibrate(g, name[0] == 'e' ? 0.002 : kDefaultS);
    auto kids = rrp_expand(root_node(), cal);
    REQUIRE(kids.size() == cal.successors.size());
    for (std::size_t i = 0; i < kids.size(); ++i) {
      CHECK(word_str(kids[i].orbit.word) ==
            word_str(cal.successors[i].word));
      CHECK(kids[i].orbit.dist == cal.successors[i].dist);
      CHECK(kids[i].phase == Phase::recurrent);
      CHECK(kids[i].level == 0);
      CHECK(kids[i].orbit.label == 0);
    }
  }
}

TEST_CASE("calibration refuses exponents at the certified band edge") {
  auto g = make_group(preset_spec("escape"));
  CalibrationOptions opt;
  opt.delta_lo = 0.3;
  CHECK_THROWS_AS(rrp_calibrate(g, 0.35, opt), std::invalid_argument);
  CHECK_THROWS_AS(rrp_calibrate(g, 0.30, opt), std::invalid_argument);
  CHECK_NOTHROW(rrp_calibrate(g, 0.002, opt));
  CHECK_THROWS_AS(rrp_calibrate(g, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(rrp_calibrate(g, -0.1), std::invalid_argument);
}

TEST_CASE("exhausted search budgets report the exponent as unreachable") {
  auto g = make_group(preset_spec("default"));
  CalibrationOptions tiny;
  tiny.budget = 200;
  try {
    rrp_calibrate(g, kDefaultS, tiny);
    FAIL("expected a budget failure");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find("s too close to delta(H)") !=
          std::string::npos);
  }
  CalibrationOptions low;
  low.ell_max = 3.0;  // every kernel shell of this group lies above 3
  try {
    rrp_calibrate(g, kDefaultS, low);
    FAIL("expected a shell-range failure");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find("s too close to delta(H)") !=
          std::string::npos);
  }
}

TEST_CASE("calibrated ceiling grows with the exponent") {
  auto g = make_group(preset_spec("default"));
  CalibrationOptions opt;
  opt.budget = 30'000'000;
  Scalar prev_ell = 0.0;
  std::vector<Scalar> ells;
  for (Scalar s : {kDefaultS, 0.138, 0.15, 0.18}) {
    auto c = rrp_calibrate(g, s, opt);
    CHECK(c.params.ell >= prev_ell);
    prev_ell = c.params.ell;
    ells.push_back(c.params.ell);
  }
  CHECK(ells[1] == doctest::Approx(10.577456537).epsilon(1e-8));
  CHECK(ells[2] == doctest::Approx(13.845947601).epsilon(1e-8));
  CHECK(ells[3] == doctest::Approx(14.613706344).epsilon(1e-8));
  CHECK(ells[2] > ells[1]);  // the ceiling strictly moves out
  CHECK(ells[3] > ells[2]);
}

TEST_CASE("expansion certificate re-checked from raw shadows on a small tree") {
  auto cal = escape_calib();
  const RRPParams& pr = cal.params;
  std::vector<HTreeNode> level = {root_node()};
  for (int depth = 1; depth <= 3; ++depth) {
    std::vector<HTreeNode> next;
    for (const auto& u : level) {
      auto kids = rrp_expand(u, cal);
      REQUIRE(kids.size() >= 2);
      Scalar sum = 0.0, lo = 1e9, hi = 0.0;
      for (const auto& c : kids) {
        CHECK(u.shadow.contains(c.shadow));
        const Scalar edge =
            (u.orbit.g.inverse() * c.orbit.g).displacement();
        CHECK(edge <= pr.ell * (1.0 + 1e-9));
        lo = std::min(lo, edge);
        hi = std::max(hi, edge);
        sum += std::pow(c.shadow.diameter(), pr.s);
      }
      CHECK(std::exp(hi - lo) <= pr.comparability_c * (1.0 + 1e-9));
      for (std::size_t i = 0; i < kids.size(); ++i)
        for (std::size_t j = i + 1; j < kids.size(); ++j)
          CHECK(kids[i].shadow.disjoint_from(kids[j].shadow));
      CHECK(sum / std::pow(u.shadow.diameter(), pr.s) >=
            pr.K * (1.0 - 1e-12));
      for (auto& c : kids) next.push_back(std::move(c));
    }
    level = std::move(next);
  }
  CHECK(level.size() == 16);  // fanout 4 at the root, then 2 per vertex
}

TEST_CASE("edge displacements transfer verbatim down the tree") {
  auto cal = escape_calib();
  std::vector<Scalar> base;
  for (const auto& p : cal.successors) base.push_back(p.dist);
  std::sort(base.begin(), base.end());

  std::vector<HTreeNode> level = rrp_expand(root_node(), cal);
  for (int depth = 2; depth <= 3; ++depth) {
    std::vector<HTreeNode> next;
    for (const auto& u : level) {
      auto kids = rrp_expand(u, cal);
      std::vector<Scalar> edges;
      for (const auto& c : kids)
        edges.push_back((u.orbit.g.inverse() * c.orbit.g).displacement());
      std::sort(edges.begin(), edges.end());
      // the kept edges are a sub-multiset of the root edge multiset, and
      // every measured edge sits on a published displacement to 1e-9
      for (Scalar e : edges) {
        bool hit = false;
        for (Scalar b : base) hit = hit || std::abs(e - b) <= 1e-9;
        CHECK(hit);
      }
      for (auto& c : kids) next.push_back(std::move(c));
    }
    level = std::move(next);
  }
}

TEST_CASE("prolongation with no steps is the identity") {
  auto cal = escape_calib();
  auto g = make_group(preset_spec("escape"));
  auto kids = rrp_expand(root_node(), cal);
  auto rep = trp_apply(kids[0], g, 0, trp_params(cal, 1e-4),
                       cal.params.sigma);
  CHECK(rep.pass);
  CHECK(rep.steps.empty());
  CHECK(rep.cum_log_ratio == 0.0);
  CHECK(word_str(rep.node.orbit.word) == word_str(kids[0].orbit.word));
  CHECK(rep.node.orbit.dist == kids[0].orbit.dist);
  CHECK(rep.node.level == kids[0].level);
}

TEST_CASE("prolongation shrinkage matches the closed form on a diametral axis") {
  // both generators diametral with translation length 2; the distinguished
  // direction then has d(0, g^n 0) = 2n exactly and each step scales the
  // shadow by asin(1/sinh(2n+2)) / asin(1/sinh(2n))
  const Scalar kPi = 3.14159265358979323846;
  std::vector<GeneratorSpec> specs{{kPi, 0.0, 2.0},
                                   {-kPi / 2, kPi / 2, 2.0}};
  SchottkyGroup g(specs, {1, 0});
  CHECK(g.gamma_step() == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(g.gamma_step() == doctest::Approx(g.gamma_length()).epsilon(1e-12));

  HTreeNode u;
  u.orbit = OrbitPoint{Word{Letter(1)}, g.gamma(), g.gamma_step(), 1};
  u.shadow = image_shadow(g.gamma(), schweikart());
  u.phase = Phase::transient;
  u.level = 1;

  TRPParams tp;
  tp.k_gamma = std::exp(-2.2);
  tp.summit_slack = 6.0;
  tp.comparability_c = std::exp(0.05);  // tight band, still clears 0.0310
  auto rep = trp_apply(u, g, 6, tp, schweikart());

  CHECK(rep.pass);
  REQUIRE(rep.steps.size() == 6);
  // independently computed: prod asin(1/sinh(2n+2))/asin(1/sinh(2n)),
  // n = 1..6, equals 5.9535402782791513e-6 = 0.96896720619596184 e^{-12}
  CHECK(rep.cum_log_ratio ==
        doctest::Approx(std::log(5.9535402782791513e-6)).epsilon(1e-12));
  CHECK(std::exp(rep.steps[0].log_ratio + 2.0) ==
        doctest::Approx(0.96950941849145031).epsilon(1e-11));
  CHECK(std::exp(rep.steps[5].log_ratio + 2.0) ==
        doctest::Approx(0.99999999993823349).epsilon(1e-11));
  for (const auto& st : rep.steps)
    CHECK(st.d_after == doctest::Approx(st.d_before + 2.0).epsilon(1e-9));

  // the vertex sits on the axis: the conjugated axis is the axis itself
  CHECK(rep.summit_dist <= 1e-9);
  CHECK(rep.summit_gap == doctest::Approx(2.0).epsilon(1e-9));
  CHECK(rep.membership_margin == doctest::Approx(kPi));
  CHECK(rep.node.orbit.dist == doctest::Approx(14.0).epsilon(1e-9));
  CHECK(word_str(rep.node.orbit.word) == "aaaaaaa");
  CHECK(rep.node.orbit.label == 7);
  CHECK(rep.node.level == 7);
}

TEST_CASE("summit data matches the independent computation at depth one") {
  // frozen from a 60-digit computation of the axis conjugated by the first
  // diametral generator of the bundled rank-3 layout
  auto cal = escape_calib();
  auto g = make_group(preset_spec("escape"));
  auto kids = rrp_expand(root_node(), cal);
  const HTreeNode* b = nullptr;
  for (const auto& k : kids)
    if (word_str(k.orbit.word) == "b") b = &k;
  REQUIRE(b != nullptr);
  auto rep = trp_apply(*b, g, 1, trp_params(cal, std::exp(-8.63)),
                       cal.params.sigma);
  CHECK(rep.pass);
  CHECK(rep.summit_dist ==
        doctest::Approx(2.3518499619091351).epsilon(1e-12));
  CHECK(rep.summit_gap ==
        doctest::Approx(1.2217352369102917).epsilon(1e-12));
  CHECK(rep.membership_direct);
  CHECK(rep.membership_margin ==
        doctest::Approx(0.0035150210868752).epsilon(1e-9));
  CHECK(rep.node.orbit.dist ==
        doctest::Approx(9.361329188).epsilon(1e-9));
  CHECK(word_str(rep.node.orbit.word) == "ba");
}

TEST_CASE("prolongation certificates hold across the alternating schedule") {
  auto cal = escape_calib();
  auto g = make_group(preset_spec("escape"));
  const Scalar lam = g.gamma_step();
  auto tp = trp_params(cal, std::exp(-8.63));

  std::vector<HTreeNode> lvl = rrp_expand(root_node(), cal), all = lvl;
  for (const auto& n : lvl)
    for (auto& c : rrp_expand(n, cal)) all.push_back(std::move(c));

  Scalar worst_band = 0.0;
  for (const auto& n : all) {
    auto r = trp_apply(n, g, 3, tp, cal.params.sigma);
    CHECK(r.pass_shrink);
    CHECK(r.pass_band);
    CHECK(r.pass_summit);
    CHECK(r.pass_membership);
    CHECK(r.cum_log_ratio >= 3.0 * std::log(tp.k_gamma));
    for (const auto& st : r.steps) {
      CHECK(st.log_ratio < 0.0);
      worst_band = std::max(worst_band, std::abs(st.log_ratio + lam));
    }
  }
  CHECK(worst_band <= cal.params.ell);
  CHECK(worst_band == doctest::Approx(1.692612613).epsilon(1e-6));

  // expansion and prolongation interleaved: the summit stays within reach
  // of every vertex the schedule actually visits
  Scalar chain_worst = 0.0;
  for (const auto& n : lvl) {
    auto r1 = trp_apply(n, g, 1, tp, cal.params.sigma);
    CHECK(r1.pass);
    chain_worst = std::max(chain_worst, r1.summit_gap);
    for (auto& c : rrp_expand(r1.node, cal)) {
      auto r2 = trp_apply(c, g, 1, tp, cal.params.sigma);
      CHECK(r2.pass);
      chain_worst = std::max(chain_worst, r2.summit_gap);
      for (auto& c2 : rrp_expand(r2.node, cal)) {
        auto r3 = trp_apply(c2, g, 1, tp, cal.params.sigma);
        CHECK(r3.pass);
        chain_worst = std::max(chain_worst, r3.summit_gap);
      }
    }
  }
  CHECK(chain_worst <= tp.summit_slack);
  CHECK(chain_worst == doctest::Approx(1.493849909).epsilon(1e-6));
}

TEST_CASE("endpoint membership decided on both sides of the direct window") {
  auto cal = escape_calib();
  auto g = make_group(preset_spec("escape"));
  auto tp = trp_params(cal, std::exp(-8.63));

  // vertices this deep are never prolongation targets (the proximity
  // certificate does not apply), but the endpoint decision must still be
  // sound; past the direct window it comes from the closed form
  std::vector<HTreeNode> deep = rrp_expand(root_node(), cal);
  for (int d = 2; d <= 7; ++d) {
    std::vector<HTreeNode> next;
    for (const auto& n : deep)
      for (auto& c : rrp_expand(n, cal)) next.push_back(std::move(c));
    deep = std::move(next);
  }
  REQUIRE(deep.size() == 256);
  int direct_n = 0, closed_n = 0;
  for (const auto& n : deep) {
    auto r = trp_apply(n, g, 1, tp, cal.params.sigma);
    CHECK(r.pass_membership);
    CHECK(r.membership_margin > 0.0);
    if (r.membership_direct) {
      ++direct_n;
      if (r.summit_dist > 10.5) {
        // near the window edge the direct measurement should agree with
        // the closed-form leading term to within its own rounding floor
        const Scalar pred = 4.5 * std::exp(-3.0 * r.summit_dist);
        CHECK(r.membership_margin / pred > 0.1);
        CHECK(r.membership_margin / pred < 3.0);
      }
    } else {
      ++closed_n;
      CHECK(r.summit_dist > 12.0);
    }
  }
  CHECK(direct_n >= 1);
  CHECK(closed_n >= 1);
}

TEST_CASE("prolongation flags shrinkage and band violations") {
  auto cal = escape_calib();
  auto g = make_group(preset_spec("escape"));
  auto kids = rrp_expand(root_node(), cal);

  auto strict = trp_params(cal, 0.9);  // floor far above the true ratio
  auto r1 = trp_apply(kids[0], g, 1, strict, cal.params.sigma);
  CHECK_FALSE(r1.pass_shrink);
  CHECK_FALSE(r1.pass);

  auto tight = trp_params(cal, std::exp(-8.63));
  tight.comparability_c = std::exp(0.5);  // band narrower than the turn loss
  auto r2 = trp_apply(kids[0], g, 1, tight, cal.params.sigma);
  CHECK_FALSE(r2.pass_band);
  CHECK_FALSE(r2.pass);

  CHECK_THROWS_AS(
      trp_apply(kids[0], g, -1, tight, cal.params.sigma),
      std::invalid_argument);
}

TEST_CASE("child cap limits the expansion fanout") {
  auto cal = default_calib();
  auto kids = rrp_expand(root_node(), cal, 2);
  REQUIRE(kids.size() == 2);
  // largest shadows win: the two short-edge successors
  CHECK(word_str(kids[0].orbit.word) == "b");
  CHECK(word_str(kids[1].orbit.word) == "B");
}

TEST_CASE("cyclic contraction floor is scale stable and below one") {
  for (const char* name : {"escape", "default"}) {
    auto g = make_group(preset_spec(name));
    auto cal = rrp_calibrate(g, name[0] == 'e' ? 0.002 : kDefaultS);
    auto small = k_gamma_estimate(g, cal, 120);
    auto big = k_gamma_estimate(g, cal, 1200);
    CHECK(small.value < 1.0);
    CHECK(big.value < 1.0);
    CHECK(small.value <= small.min_ratio);
    CHECK(big.value ==
          doctest::Approx(small.value).epsilon(0.1));  // 10x sample, +-10%
    CHECK(big.samples == 1200);
  }
  auto g = make_group(preset_spec("escape"));
  auto cal = escape_calib();
  CHECK_THROWS_AS(k_gamma_estimate(g, cal, 0), std::invalid_argument);

  // frozen baselines
  auto esc = k_gamma_estimate(g, cal, 1200);
  CHECK(std::log(esc.min_ratio) == doctest::Approx(-8.622284291).epsilon(1e-6));
  auto def_g = make_group(preset_spec("default"));
  auto def = k_gamma_estimate(def_g, default_calib(), 1200);
  CHECK(std::log(def.min_ratio) == doctest::Approx(-3.999640204).epsilon(1e-6));
  // appending the cyclic step to a vertex whose word ends against it can
  // grow the shadow; the floor is a floor, not a two-sided bound
  CHECK(def.max_ratio > 1.0);
}
