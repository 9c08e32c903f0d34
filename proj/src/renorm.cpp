#include "limset/renorm.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace limset {

HTreeNode root_node() {
  HTreeNode n;
  n.orbit = OrbitPoint{Word{}, Isometry::identity(), 0.0, 0};
  n.shadow = Cap::full();
  return n;
}

namespace {

// log halfwidth of the boundary shadow of B(g(0), rad) at displacement d,
// exact below d = 30 and series-accurate (error < 1e-26) beyond.
Scalar log_shadow_hw(Scalar d, Scalar rad) {
  const Scalar sr = std::sinh(rad);
  if (d < 30.0)
    return std::log(std::asin(std::min(1.0, sr / std::sinh(d))));
  return std::log(2.0 * sr) - d - std::log1p(-std::exp(-2.0 * d));
}

Scalar log_ab(const Isometry& g) {
  return std::log(std::abs(g.a())) + std::log(std::abs(g.b()));
}

// A vertex shadow viewed as the frame its successors are tested in.  Cap
// centers of candidates are located by their signed offset from this
// center; at depth the offsets and halfwidths shrink together like
// e^{-d}, so their ratios keep full precision where absolute directions
// have long since collapsed onto each other.
struct Frame {
  bool full = false;
  Scalar angle = 0.0;   // accumulated center direction (display only)
  Scalar hw = 0.0;
  Scalar log_hw = 0.0;

  static Frame of(const Cap& c) {
    Frame f;
    f.full = c.is_full();
    f.angle = std::atan2(c.dir.y(), c.dir.x());
    f.hw = f.full ? M_PI : c.hw;
    f.log_hw = std::log(f.hw);
    return f;
  }
};

struct Candidate {
  std::size_t src = 0;   // index into the successor alphabet
  Isometry g;            // state composed with the successor
  Word word;
  Cap cap;               // absolute cap, center accumulated through offsets
  Scalar off = 0.0;      // center offset in the state frame (absolute angle
                         // when the state shadow is the full circle)
  Scalar log_hw = 0.0;
  Scalar edge = 0.0;     // displacement of the successor itself
  Scalar dist = 0.0;     // d(0, candidate)
};

Scalar center_sep(const Frame& f, const Candidate& x, const Candidate& y) {
  Scalar d = std::abs(x.off - y.off);
  if (f.full && d > M_PI) d = 2.0 * M_PI - d;
  return d;
}

struct Packing {
  std::vector<Candidate> kept;  // shadow size descending
  Scalar K = 0.0;
  Scalar worst_nest = 1.0;
  Scalar worst_gap = std::numeric_limits<Scalar>::infinity();
};

// Greedy packing: largest shadow first, keep a candidate when its shadow
// nests in the state shadow and clears everything already kept.
Packing pack(const Frame& f, std::vector<Candidate> cands, Scalar s,
             int max_children) {
  std::stable_sort(cands.begin(), cands.end(),
                   [](const Candidate& x, const Candidate& y) {
                     return x.log_hw > y.log_hw;
                   });
  Packing p;
  for (Candidate& c : cands) {
    const Scalar hw_c = c.cap.hw;
    if (!f.full) {
      const Scalar m = (f.hw - std::abs(c.off) - hw_c) / f.hw;
      if (m < 0.0) continue;
      p.worst_nest = std::min(p.worst_nest, m);
    }
    bool clear = true;
    for (const Candidate& k : p.kept)
      if (center_sep(f, c, k) <= hw_c + k.cap.hw) {
        clear = false;
        break;
      }
    if (!clear) continue;
    p.kept.push_back(std::move(c));
  }
  if (max_children > 0 &&
      p.kept.size() > static_cast<std::size_t>(max_children))
    p.kept.resize(static_cast<std::size_t>(max_children));
  for (std::size_t i = 0; i < p.kept.size(); ++i)
    for (std::size_t j = i + 1; j < p.kept.size(); ++j)
      p.worst_gap = std::min(
          p.worst_gap,
          (center_sep(f, p.kept[i], p.kept[j]) - p.kept[i].cap.hw -
           p.kept[j].cap.hw) /
              f.hw);
  const Scalar ref = f.full ? std::log(M_PI) : f.log_hw;
  Scalar sum = 0.0;
  for (const Candidate& k : p.kept) sum += std::exp(s * (k.log_hw - ref));
  p.K = sum;
  return p;
}

std::vector<Candidate> compose_candidates(const Isometry& state,
                                          const Word& state_word,
                                          const Frame& f,
                                          const std::vector<OrbitPoint>& succ,
                                          Scalar sigma) {
  std::vector<Candidate> out;
  out.reserve(succ.size());
  for (std::size_t i = 0; i < succ.size(); ++i) {
    Candidate c;
    c.src = i;
    c.g = state * succ[i].g;
    c.dist = c.g.displacement();
    // a product this close to the origin is a backtracking word; its shadow
    // could not nest in any proper cap anyway
    if (c.dist <= sigma * (1.0 + 1e-9) + 1e-12) continue;
    c.word = reduce_concat(state_word, succ[i].word);
    c.log_hw = log_cap_halfwidth(log_ab(c.g), sigma);
    c.off = f.full ? std::arg(c.g.a() * c.g.b())
                   : relative_cap_offset(state, succ[i].g);
    const Scalar dir = f.full ? c.off : f.angle + c.off;
    c.cap = Cap{Vec2(std::cos(dir), std::sin(dir)), std::exp(c.log_hw)};
    c.edge = succ[i].dist;
    out.push_back(std::move(c));
  }
  return out;
}

}  // namespace

CalibrationResult rrp_calibrate(const SchottkyGroup& g, Scalar s,
                                const CalibrationOptions& opt) {
  if (!(s > 0.0))
    throw std::invalid_argument("rrp_calibrate: s must be positive");
  if (opt.delta_lo > 0.0 && !(s < opt.delta_lo))
    throw std::invalid_argument(
        "rrp_calibrate: s must lie strictly below the certified lower band "
        "edge of the kernel's convergence exponent");
  const Scalar tau = schweikart();
  const Scalar sigma = opt.sigma > 0.0 ? std::min(opt.sigma, tau) : tau;

  std::uint64_t work = 0;
  const auto out_of_budget = [&](const char* where) {
    std::ostringstream os;
    os << "rrp_calibrate: s too close to delta(H) for this budget (" << where
       << " exhausted before any shell certified growth)";
    return std::runtime_error(os.str());
  };

  Scalar t_enum = g.displacement_floor() + 0.75;
  Scalar tried = 0.0;
  CalibrationResult res;
  res.safety = opt.safety;

  while (true) {
    Enumeration en;
    try {
      en = enumerate_ball(g, t_enum, opt.budget);
    } catch (const budget_exceeded&) {
      throw out_of_budget("enumeration budget");
    }
    work += en.visited;
    std::vector<OrbitPoint> pool;
    for (const OrbitPoint& p : filter_label(en.pts, 0))
      if (p.dist > 1e-12) pool.push_back(p);
    std::stable_sort(pool.begin(), pool.end(),
                     [](const OrbitPoint& a, const OrbitPoint& b) {
                       return a.dist < b.dist;
                     });
    std::vector<Scalar> shells;
    for (const OrbitPoint& p : pool)
      if (shells.empty() || p.dist > shells.back() + 1e-9)
        shells.push_back(p.dist);

    for (Scalar shell : shells) {
      if (shell <= tried + 1e-9 || shell > opt.ell_max) continue;
      tried = shell;
      const Scalar ell = shell * (1.0 + 1e-9) + 1e-12;
      std::vector<OrbitPoint> alphabet;
      for (const OrbitPoint& p : pool)
        if (p.dist <= ell) alphabet.push_back(p);
      if (alphabet.size() < 2) continue;

      // closure sweep: every successor word up to closure_depth is a trial
      // state; all of them must keep >= 2 caps for the shell to qualify
      struct TrialState {
        Word w;
        Isometry g;
        Frame f;
        int depth;
      };
      std::deque<TrialState> queue;
      Frame root;
      root.full = true;
      root.hw = M_PI;
      root.log_hw = std::log(M_PI);
      queue.push_back({Word{}, Isometry::identity(), root, 0});
      Scalar K_min = std::numeric_limits<Scalar>::infinity();
      std::vector<StateDiag> diags;
      std::vector<std::size_t> root_kept;
      std::uint64_t checked = 0;
      bool starved = false;
      while (!queue.empty()) {
        TrialState st = std::move(queue.front());
        queue.pop_front();
        work += alphabet.size();
        if (work > opt.budget) throw out_of_budget("closure budget");
        ++checked;
        Packing p = pack(st.f,
                         compose_candidates(st.g, st.w, st.f, alphabet, sigma),
                         s, 0);
        diags.push_back({st.w, static_cast<int>(p.kept.size()), p.K,
                         p.worst_nest, p.worst_gap});
        if (p.kept.size() < 2) {
          starved = true;
          break;
        }
        K_min = std::min(K_min, p.K);
        if (st.depth == 0)
          for (const Candidate& c : p.kept) root_kept.push_back(c.src);
        if (st.depth < opt.closure_depth)
          for (Candidate& c : p.kept)
            queue.push_back({std::move(c.word), c.g, Frame::of(c.cap),
                             st.depth + 1});
      }
      if (starved) continue;
      if (opt.safety * K_min >= 1.0 + opt.K_margin) {
        res.params = RRPParams{s, ell, opt.safety * K_min, sigma,
                               std::exp(ell)};
        // publish the root packing; alphabet entries the root already drops
        // (shadow inside a sibling's) would be dropped at every vertex
        res.successors.clear();
        for (std::size_t i : root_kept)
          res.successors.push_back(alphabet[i]);
        res.states = std::move(diags);
        res.K_min_raw = K_min;
        res.shell = shell;
        res.states_checked = checked;
        return res;
      }
    }

    if (t_enum > opt.ell_max) throw out_of_budget("shell range");
    t_enum = std::min(t_enum * 1.5 + 0.5, opt.ell_max + 1e-6);
  }
}

std::vector<HTreeNode> rrp_expand(const HTreeNode& u,
                                  const CalibrationResult& calib,
                                  int max_children) {
  const RRPParams& pr = calib.params;
  const auto fail = [&](const char* what, const Word& w) {
    std::ostringstream os;
    os << "rrp_expand: " << what << " at '" << word_str(w) << "'";
    throw std::runtime_error(os.str());
  };

  const Frame f = Frame::of(u.shadow);
  Packing p = pack(f,
                   compose_candidates(u.orbit.g, u.orbit.word, f,
                                      calib.successors, pr.sigma),
                   pr.s, max_children);
  if (p.kept.size() < 2) fail("fewer than two successors", u.orbit.word);

  // re-verify every property from raw geometry; the packing above selected
  // the set but nothing about it is assumed here
  Scalar edge_lo = std::numeric_limits<Scalar>::infinity(), edge_hi = 0.0;
  for (const Candidate& c : p.kept) {
    if (!f.full && std::abs(c.off) + c.cap.hw > f.hw * (1.0 + 1e-12))
      fail("successor shadow escapes the parent shadow", c.word);
    if (c.edge > pr.ell * (1.0 + 1e-12))
      fail("expansion edge exceeds the displacement ceiling", c.word);
    edge_lo = std::min(edge_lo, c.edge);
    edge_hi = std::max(edge_hi, c.edge);
  }
  if (std::exp(edge_hi - edge_lo) > pr.comparability_c * (1.0 + 1e-12))
    fail("sibling displacement spread exceeds the comparability constant",
         u.orbit.word);
  for (std::size_t i = 0; i < p.kept.size(); ++i)
    for (std::size_t j = i + 1; j < p.kept.size(); ++j)
      if (center_sep(f, p.kept[i], p.kept[j]) <=
          (p.kept[i].cap.hw + p.kept[j].cap.hw) * (1.0 - 1e-12))
        fail("sibling shadows overlap", p.kept[j].word);
  const Scalar ref = f.full ? std::log(M_PI) : f.log_hw;
  Scalar measured = 0.0;
  for (const Candidate& c : p.kept)
    measured += std::exp(pr.s * (c.log_hw - ref));
  // a capped fanout deliberately weakens the weighted sum; the caller owns
  // flagging that, every geometric property above still binds
  if (max_children == 0 && measured < pr.K * (1.0 - 1e-12)) {
    std::ostringstream os;
    os << "rrp_expand: weighted shadow sum below the certified factor at '"
       << word_str(u.orbit.word) << "' (measured " << measured << ", need "
       << pr.K << ")";
    throw std::runtime_error(os.str());
  }

  std::vector<HTreeNode> out;
  out.reserve(p.kept.size());
  for (Candidate& c : p.kept) {
    HTreeNode n;
    n.orbit = OrbitPoint{std::move(c.word), c.g, c.dist, u.orbit.label};
    n.shadow = c.cap;
    n.phase = Phase::recurrent;
    n.level = u.level;
    out.push_back(std::move(n));
  }
  return out;
}

TRPReport trp_apply(const HTreeNode& u, const SchottkyGroup& g, int q,
                    const TRPParams& params, Scalar sigma) {
  if (q < 0) throw std::invalid_argument("trp_apply: q must be nonnegative");
  TRPReport rep;
  if (q == 0) {
    rep.node = u;
    rep.pass_shrink = rep.pass_band = rep.pass_summit = rep.pass_membership =
        rep.pass = true;
    rep.membership_margin = M_PI;
    return rep;
  }

  const Scalar tau = schweikart();
  const Scalar lambda = g.gamma_step();
  const Isometry& gam = g.gamma();
  const Scalar log_c = std::log(params.comparability_c);

  Isometry M = u.orbit.g;
  Isometry gq = Isometry::identity();
  Word w = u.orbit.word;
  Scalar d_prev = u.orbit.dist;
  rep.pass_band = true;
  for (int j = 0; j < q; ++j) {
    M = M * gam;
    gq = gq * gam;
    w = reduce_concat(w, Word{Letter(1)});
    const Scalar d = M.displacement();
    const Scalar lr = log_shadow_hw(d, tau) - log_shadow_hw(d_prev, tau);
    rep.steps.push_back({d_prev, d, lr});
    rep.cum_log_ratio += lr;
    if (std::abs(lr + lambda) > log_c + 1e-12) rep.pass_band = false;
    d_prev = d;
  }
  rep.pass_shrink =
      rep.cum_log_ratio >= q * std::log(params.k_gamma) - 1e-9;

  // Summit of the conjugated axis.  T charts the axis of the cyclic
  // direction onto the real diameter (attracting end at +1); in that chart
  // the pulled-back origin v = (T M^-1)(0) sits at distance d(0, axis
  // summit) above the diameter, and its foot x* is the summit pulled back.
  // Every quantity below is an O(1)-conditioned function of the chart
  // entries, so depth costs no precision.
  const auto fixed = gam.fixed_points();
  const BoundaryPoint& att = fixed.first;
  Geodesic axis(fixed.second, fixed.first);
  const Isometry M1 = Isometry::translate_to_origin(axis.summit());
  const Isometry T = Isometry::rotation(-M1.apply(att).angle()) * M1;

  const Isometry R = T * u.orbit.g.inverse();
  const Complex AB = R.a() * R.b();
  rep.summit_dist = std::asinh(2.0 * std::abs(AB.imag()));

  Scalar xstar = 0.0;
  const Complex v = R.b() / std::conj(R.a());
  if (std::abs(v.real()) > 1e-300) {
    const Scalar sgn = v.real() > 0.0 ? 1.0 : -1.0;
    const Complex v2 = sgn * v;
    const Scalar cm1 = std::norm(v2 - 1.0) / (2.0 * v2.real());
    const Scalar cp1 = std::norm(v2 + 1.0) / (2.0 * v2.real());
    xstar = sgn / (1.0 + cm1 + std::sqrt(cm1 * cp1));
    xstar = std::clamp(xstar, -1.0 + 1e-12, 1.0 - 1e-12);
  }
  const Vec2 t0 = T.apply(Vec2(0.0, 0.0));
  rep.summit_gap = dist(t0, Vec2(xstar, 0.0));
  rep.pass_summit = rep.summit_gap <= params.summit_slack + 1e-9;

  // the pushed attracting endpoint must land in the summit shadow; directly
  // measurable while the summit is near the origin, and decided by
  // sinh(tau) = 1 > tanh(t) beyond (both angles agree to all double digits
  // there, so a subtraction would only measure noise)
  const Scalar t = rep.summit_dist;
  if (t <= tau) {
    rep.membership_margin = M_PI;
    rep.membership_direct = true;
    rep.pass_membership = true;
  } else if (t <= 12.0) {
    const Isometry N = u.orbit.g * T.inverse();
    const Complex num = N.a() * xstar + N.b();
    const Complex den = std::conj(N.b()) * xstar + std::conj(N.a());
    const Vec2 zdir = vec(num * std::conj(den)).normalized();
    const Scalar hw = std::asin(std::min(1.0, std::sinh(tau) / std::sinh(t)));
    const Scalar off = angle_between(zdir, u.orbit.g.apply(att).u);
    rep.membership_margin = hw - off;
    rep.membership_direct = true;
    rep.pass_membership = rep.membership_margin >= -(1e-9 * hw + 1e-15);
  } else {
    // cosh^2(t)(sinh^2(t) - 1) < sinh^4(t) holds identically, so the
    // endpoint lies inside; the leading term of the exact gap is reported
    rep.membership_margin = 4.5 * std::exp(-3.0 * t);
    rep.membership_direct = false;
    rep.pass_membership = true;
  }

  // prolonged shadow center accumulated in the start vertex's frame, same
  // bookkeeping as expansion
  const Scalar log_hw = log_cap_halfwidth(log_ab(M), sigma);
  Scalar dir;
  if (u.orbit.word.empty())
    dir = std::arg(M.a() * M.b());
  else
    dir = std::atan2(u.shadow.dir.y(), u.shadow.dir.x()) +
          relative_cap_offset(u.orbit.g, gq);
  rep.node.orbit = OrbitPoint{std::move(w), M, d_prev, u.orbit.label + q};
  rep.node.shadow =
      Cap{Vec2(std::cos(dir), std::sin(dir)), std::exp(log_hw)};
  rep.node.phase = Phase::transient;
  rep.node.level = u.level + q;
  rep.pass = rep.pass_shrink && rep.pass_band && rep.pass_summit &&
             rep.pass_membership;
  return rep;
}

KGammaEstimate k_gamma_estimate(const SchottkyGroup& g,
                                const CalibrationResult& calib,
                                std::size_t sample_size) {
  if (sample_size == 0)
    throw std::invalid_argument("k_gamma_estimate: empty sample");
  const Scalar sigma = calib.params.sigma;
  const Isometry& gam = g.gamma();
  KGammaEstimate est;
  est.min_ratio = std::numeric_limits<Scalar>::infinity();

  std::deque<HTreeNode> queue;
  for (HTreeNode& c : rrp_expand(root_node(), calib))
    queue.push_back(std::move(c));
  while (!queue.empty() && est.samples < sample_size) {
    HTreeNode n = std::move(queue.front());
    queue.pop_front();
    const Scalar lr = log_shadow_hw((n.orbit.g * gam).displacement(), sigma) -
                      log_shadow_hw(n.orbit.dist, sigma);
    est.min_ratio = std::min(est.min_ratio, std::exp(lr));
    est.max_ratio = std::max(est.max_ratio, std::exp(lr));
    ++est.samples;
    if (est.samples + queue.size() < sample_size)
      for (HTreeNode& c : rrp_expand(n, calib)) queue.push_back(std::move(c));
  }
  est.value = std::min(0.99 * est.min_ratio, 1.0 - 1e-12);
  return est;
}

}  // namespace limset
