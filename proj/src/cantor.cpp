#include "limset/cantor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <utility>

namespace limset {

namespace {

constexpr Scalar kInf = std::numeric_limits<Scalar>::infinity();

[[noreturn]] void fail_at(const char* what, const Word& w) {
  throw std::runtime_error(std::string(what) + " at '" + word_str(w) + "'");
}

// Kahan sum of diameter^s over a vertex set.
Scalar sum_pow(const std::vector<HTreeNode>& vs, Scalar s) {
  Scalar sum = 0.0, c = 0.0;
  for (const HTreeNode& v : vs) {
    Scalar term = std::exp(s * std::log(v.shadow.diameter()));
    Scalar y = term - c;
    Scalar t = sum + y;
    c = (t - sum) - y;
    sum = t;
  }
  return sum;
}

Scalar cap_angle(const Cap& c) { return std::atan2(c.dir.y(), c.dir.x()); }

// Containment and disjointness sweep for an emitted generation.  Parent
// indices resolve through `parents`; containment is taken against `anchor`,
// the prolonged set whose caps this generation subdivides.  A prolonged cap
// need not sit inside the expansion leaf it sprang from (the tail swings it
// sideways by a bounded multiple of the leaf width), so the ancestor cap is
// the right container, not the immediate parent.  Offsets are computed in
// each ancestor's own frame and keep full precision at depths where absolute
// directions have collapsed onto each other.
void direct_sweep(const GenerationSet& gen, const GenerationSet& parents,
                  const GenerationSet& anchor) {
  const std::vector<HTreeNode>& vs = gen.vertices;
  struct Entry {
    std::size_t anc;
    Scalar off;
    std::size_t idx;
  };
  std::vector<Entry> es;
  es.reserve(vs.size());
  bool root_frame = false;

  for (std::size_t i = 0; i < vs.size(); ++i) {
    const HTreeNode& v = vs[i];
    if (v.parent < 0 ||
        static_cast<std::size_t>(v.parent) >= parents.vertices.size())
      fail_at("generation vertex with no ancestor", v.orbit.word);
    std::int64_t anc = v.parent;
    if (gen.kind == GenKind::T)
      anc = parents.vertices[static_cast<std::size_t>(anc)].parent;
    if (anc < 0 || static_cast<std::size_t>(anc) >= anchor.vertices.size())
      fail_at("generation vertex with no ancestor", v.orbit.word);
    const HTreeNode& a = anchor.vertices[static_cast<std::size_t>(anc)];
    Entry e{static_cast<std::size_t>(anc), 0.0, i};
    if (a.shadow.is_full()) {
      root_frame = true;
      e.off = cap_angle(v.shadow);
    } else {
      e.off = relative_cap_offset(a.orbit.g, a.orbit.g.inverse() * v.orbit.g);
      if (std::abs(e.off) + v.shadow.hw > a.shadow.hw * (1.0 + 1e-9))
        fail_at("cap escapes its ancestor", v.orbit.word);
    }
    es.push_back(e);
  }

  // Siblings under one ancestor are compared by frame offset; distinct
  // ancestors hold disjoint caps of their own generation, so containment
  // already separates the groups.
  std::sort(es.begin(), es.end(), [](const Entry& x, const Entry& y) {
    return x.anc != y.anc ? x.anc < y.anc : x.off < y.off;
  });
  for (std::size_t i = 0; i + 1 < es.size(); ++i) {
    const Entry& x = es[i];
    const Entry& y = es[i + 1];
    if (x.anc != y.anc) continue;
    if (y.off - x.off <= vs[x.idx].shadow.hw + vs[y.idx].shadow.hw)
      fail_at("generation caps overlap", vs[y.idx].orbit.word);
  }
  if (root_frame && es.size() > 2 && es.front().anc == es.back().anc) {
    Scalar wrap = 2.0 * M_PI - (es.back().off - es.front().off);
    if (wrap <= vs[es.front().idx].shadow.hw + vs[es.back().idx].shadow.hw)
      fail_at("generation caps overlap", vs[es.back().idx].orbit.word);
  }

  // Raw-direction cross-check over the whole set while the caps are wide
  // enough that absolute angles still resolve the gaps between them.
  if (vs.size() > 20000) return;
  Scalar min_hw = kInf;
  for (const HTreeNode& v : vs) min_hw = std::min(min_hw, v.shadow.hw);
  if (min_hw < 1e-10) return;
  std::vector<std::size_t> order(vs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
    return cap_angle(vs[x].shadow) < cap_angle(vs[y].shadow);
  });
  for (std::size_t i = 0; i + 1 < order.size(); ++i) {
    if (!vs[order[i]].shadow.disjoint_from(vs[order[i + 1]].shadow))
      fail_at("generation caps overlap", vs[order[i + 1]].orbit.word);
  }
  if (order.size() > 2 &&
      !vs[order.front()].shadow.disjoint_from(vs[order.back()].shadow))
    fail_at("generation caps overlap", vs[order.back()].orbit.word);
}

}  // namespace

std::vector<Cap> GenerationSet::caps() const {
  std::vector<Cap> out;
  out.reserve(vertices.size());
  for (const HTreeNode& v : vertices) out.push_back(v.shadow);
  return out;
}

ConstructionSchedule choose_schedule(Scalar s, const RRPParams& rrp,
                                     Scalar k_gamma, Scalar step, int depth) {
  if (!(rrp.K > 1.0))
    throw std::invalid_argument("choose_schedule: growth factor K <= 1");
  if (!(k_gamma > 0.0 && k_gamma < 1.0))
    throw std::invalid_argument(
        "choose_schedule: shrinkage floor outside (0, 1)");
  if (!(step > 0.0)) throw std::invalid_argument("choose_schedule: step <= 0");
  if (!(rrp.ell > 0.0))
    throw std::invalid_argument("choose_schedule: displacement ceiling <= 0");
  if (depth < 1) throw std::invalid_argument("choose_schedule: depth < 1");

  ConstructionSchedule out;
  out.s = s;
  out.depth = depth;
  out.q = std::max(1, static_cast<int>(
                          std::ceil(4.0 * rrp.ell / step - 1e-9)));
  Scalar ln_k = std::log(rrp.K);
  Scalar ln_s = std::log(k_gamma);
  int p = static_cast<int>(std::floor(-out.q * ln_s / ln_k)) + 1;
  if (p < 1) p = 1;
  // The closed form can land on the wrong side of an exact boundary; the
  // published factor must use the same arithmetic as the checks downstream.
  while (p * ln_k + out.q * ln_s <= 0.0) ++p;
  while (p > 1 && (p - 1) * ln_k + out.q * ln_s > 0.0) --p;
  out.p = p;
  return out;
}

std::vector<GenerationSet> build_generations(const SchottkyGroup& g,
                                             const CalibrationResult& calib,
                                             const TRPParams& trp,
                                             const ConstructionSchedule& sched,
                                             const BuildOptions& opt) {
  if (sched.p < 1 || sched.q < 0 || sched.depth < 1)
    throw std::invalid_argument("build_generations: degenerate schedule");

  std::vector<GenerationSet> out;
  out.push_back(GenerationSet{GenKind::T, 0, {root_node()}, false, false});
  std::uint64_t made = 1;
  bool capped = opt.max_children > 0;

  for (int block = 1; block <= sched.depth; ++block) {
    const GenerationSet& base = out.back();
    GenerationSet rg;
    rg.kind = GenKind::R;
    rg.block = block;
    rg.pruned = capped || base.pruned;
    bool over = false;

    for (std::size_t i = 0; i < base.vertices.size() && !over; ++i) {
      // depth-first through the p intermediate levels; only the leaves are
      // recorded
      std::vector<std::pair<HTreeNode, int>> stack;
      stack.emplace_back(base.vertices[i], 0);
      while (!stack.empty()) {
        auto [node, lvl] = std::move(stack.back());
        stack.pop_back();
        if (lvl == sched.p) {
          node.parent = static_cast<std::int64_t>(i);
          rg.vertices.push_back(std::move(node));
          continue;
        }
        std::vector<HTreeNode> kids = rrp_expand(node, calib, opt.max_children);
        made += kids.size();
        if (made > opt.budget) {
          rg.partial = true;
          over = true;
          break;
        }
        for (std::size_t k = kids.size(); k-- > 0;)
          stack.emplace_back(std::move(kids[k]), lvl + 1);
      }
    }
    if (opt.verify_direct && !rg.partial) direct_sweep(rg, base, base);
    out.push_back(std::move(rg));
    if (over) break;

    const GenerationSet& rgen = out.back();
    GenerationSet tg;
    tg.kind = GenKind::T;
    tg.block = block;
    tg.pruned = rgen.pruned;
    for (std::size_t i = 0; i < rgen.vertices.size(); ++i) {
      made += static_cast<std::uint64_t>(std::max(1, sched.q));
      if (made > opt.budget) {
        tg.partial = true;
        over = true;
        break;
      }
      TRPReport rep = trp_apply(rgen.vertices[i], g, sched.q, trp,
                                calib.params.sigma);
      if (!rep.pass)
        fail_at("prolongation certificate failed", rep.node.orbit.word);
      rep.node.parent = static_cast<std::int64_t>(i);
      tg.vertices.push_back(std::move(rep.node));
    }
    if (opt.verify_direct && !tg.partial)
      direct_sweep(tg, rgen, out[out.size() - 2]);
    out.push_back(std::move(tg));
    if (over) break;
  }
  return out;
}

CantorSample make_sample(const std::vector<GenerationSet>& gens) {
  const GenerationSet* deepest = nullptr;
  for (const GenerationSet& gs : gens)
    if (gs.kind == GenKind::T && gs.block >= 1 && !gs.partial) deepest = &gs;
  if (deepest == nullptr || deepest->vertices.empty())
    throw std::invalid_argument("make_sample: no finished prolonged set");

  CantorSample out;
  out.depth = deepest->block;
  std::vector<Scalar> angles;
  for (const HTreeNode& v : deepest->vertices) {
    out.directions.emplace_back(v.shadow.dir);
    out.cap_widths.push_back(v.shadow.diameter());
    angles.push_back(cap_angle(v.shadow));
  }
  std::sort(angles.begin(), angles.end());
  for (std::size_t i = 0; i + 1 < angles.size(); ++i)
    if (angles[i] == angles[i + 1]) out.resolvable = false;
  return out;
}

CrucialSumReport crucial_sum_check(const std::vector<GenerationSet>& gens,
                                   const ConstructionSchedule& sched,
                                   const RRPParams& rrp, Scalar k_gamma,
                                   Scalar tol) {
  if (!(k_gamma > 0.0 && k_gamma < 1.0))
    throw std::invalid_argument("crucial_sum_check: shrinkage floor outside (0, 1)");
  if (!(rrp.K > 0.0))
    throw std::invalid_argument("crucial_sum_check: nonpositive growth factor");

  // Usable prefix: T0 followed by finished (R, T) pairs.
  bool truncated = false;
  std::vector<const GenerationSet*> used;
  for (const GenerationSet& gs : gens) {
    if (gs.partial) {
      truncated = true;
      break;
    }
    used.push_back(&gs);
  }
  std::size_t pairs = used.empty() ? 0 : (used.size() - 1) / 2;
  if ((used.size() % 2) == 0 && !used.empty()) {
    truncated = true;  // trailing R with no prolonged partner
    used.pop_back();
  }
  if (pairs < 2)
    throw std::invalid_argument(
        "crucial_sum_check: need at least two finished blocks");

  CrucialSumReport rep;
  rep.s = sched.s;
  rep.need_tr = std::exp(sched.q * std::log(k_gamma));
  rep.need_rt = std::exp(sched.p * std::log(rrp.K));
  rep.growth_factor =
      std::exp(sched.p * std::log(rrp.K) + sched.q * std::log(k_gamma));
  rep.growth_ok = rep.growth_factor > 1.0;

  bool pruned = false;
  for (const GenerationSet* gs : used) pruned = pruned || gs->pruned;
  rep.weakened = pruned || truncated;

  Scalar prev_t = sum_pow(used[0]->vertices, sched.s);
  bool all_tr = true, all_rt = true, increasing = true;
  for (std::size_t b = 1; b + 1 < used.size(); b += 2) {
    BlockSums bs;
    bs.block = used[b]->block;
    bs.sum_r = sum_pow(used[b]->vertices, sched.s);
    bs.sum_t = sum_pow(used[b + 1]->vertices, sched.s);
    bs.ratio_tr = bs.sum_t / bs.sum_r;
    bs.ratio_rt = bs.sum_r / prev_t;
    bs.ok_tr = bs.ratio_tr >= rep.need_tr * (1.0 - tol);
    bs.ok_rt = bs.ratio_rt >= rep.need_rt * (1.0 - tol);
    all_tr = all_tr && bs.ok_tr;
    all_rt = all_rt && bs.ok_rt;
    if (!(bs.sum_t > prev_t)) increasing = false;
    prev_t = bs.sum_t;
    rep.blocks.push_back(bs);
  }
  rep.sums_increasing = increasing;
  rep.pass = rep.weakened
                 ? (all_tr && rep.growth_ok)
                 : (all_tr && all_rt && rep.growth_ok && increasing);
  return rep;
}

DimensionReport dimension_lower_bound(const std::vector<GenerationSet>& gens,
                                      Scalar s, Scalar epsilon) {
  std::vector<const GenerationSet*> used;
  for (const GenerationSet& gs : gens) {
    if (gs.partial) break;
    if (gs.pruned)
      throw std::invalid_argument("dimension_lower_bound: pruned run");
    used.push_back(&gs);
  }
  if ((used.size() % 2) == 0 && !used.empty()) used.pop_back();
  std::size_t blocks = used.empty() ? 0 : (used.size() - 1) / 2;
  if (blocks < 3)
    throw std::invalid_argument(
        "dimension_lower_bound: insufficient depth (three blocks required)");

  DimensionReport rep;
  rep.s = s;
  rep.epsilon = epsilon;

  // Box-counting fit over the prolonged sets (and the root).
  Scalar sx = 0, sy = 0, sxx = 0, sxy = 0;
  int npts = 0;
  for (const GenerationSet* gs : used) {
    if (gs->kind != GenKind::T) continue;
    Scalar mean_log = 0.0;
    for (const HTreeNode& v : gs->vertices)
      mean_log += std::log(v.shadow.diameter());
    mean_log /= static_cast<Scalar>(gs->vertices.size());
    Scalar x = -mean_log;
    Scalar y = std::log(static_cast<Scalar>(gs->vertices.size()));
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    ++npts;
  }
  rep.fit_points = npts;
  Scalar denom = npts * sxx - sx * sx;
  rep.box_slope = denom > 0 ? (npts * sxy - sx * sy) / denom : 0.0;

  // Mass walk: split at expansions in proportion to diameter^s, carry
  // through prolongations unchanged.
  std::vector<Scalar> log_mu(used[0]->vertices.size(), 0.0);
  for (std::size_t b = 1; b + 1 < used.size(); b += 2) {
    const std::vector<HTreeNode>& rv = used[b]->vertices;
    std::size_t nparents = used[b - 1]->vertices.size();
    std::vector<Scalar> shift(nparents, -kInf);
    std::vector<Scalar> lse(nparents, 0.0);
    std::vector<Scalar> wlog(rv.size());
    for (std::size_t i = 0; i < rv.size(); ++i) {
      wlog[i] = s * std::log(rv[i].shadow.diameter());
      std::size_t pi = static_cast<std::size_t>(rv[i].parent);
      shift[pi] = std::max(shift[pi], wlog[i]);
    }
    for (std::size_t i = 0; i < rv.size(); ++i) {
      std::size_t pi = static_cast<std::size_t>(rv[i].parent);
      lse[pi] += std::exp(wlog[i] - shift[pi]);
    }
    std::vector<Scalar> mu_r(rv.size());
    for (std::size_t i = 0; i < rv.size(); ++i) {
      std::size_t pi = static_cast<std::size_t>(rv[i].parent);
      mu_r[i] = log_mu[pi] + wlog[i] - shift[pi] - std::log(lse[pi]);
    }
    const std::vector<HTreeNode>& tv = used[b + 1]->vertices;
    std::vector<Scalar> mu_t(tv.size());
    for (std::size_t i = 0; i < tv.size(); ++i)
      mu_t[i] = mu_r[static_cast<std::size_t>(tv[i].parent)];
    log_mu = std::move(mu_t);
  }
  Scalar best = kInf;
  const std::vector<HTreeNode>& leaves = used.back()->vertices;
  for (std::size_t i = 0; i < leaves.size(); ++i) {
    Scalar ld = std::log(leaves[i].shadow.diameter());
    if (ld < -1e-9) best = std::min(best, log_mu[i] / ld);
  }
  rep.mass_exponent = best;
  rep.pass = rep.mass_exponent >= s - epsilon;
  return rep;
}

std::vector<GenerationSet> synthetic_generations(Scalar ratio, int fanout,
                                                 int depth) {
  if (!(ratio > 0.0 && ratio < 1.0))
    throw std::invalid_argument("synthetic_generations: ratio outside (0, 1)");
  if (fanout < 1)
    throw std::invalid_argument("synthetic_generations: fanout < 1");
  if (fanout >= 2 && !(ratio * fanout < 1.0))
    throw std::invalid_argument(
        "synthetic_generations: children would touch (ratio * fanout >= 1)");
  if (depth < 1) throw std::invalid_argument("synthetic_generations: depth < 1");

  std::vector<GenerationSet> out;
  out.push_back(GenerationSet{GenKind::T, 0, {root_node()}, false, false});
  for (int block = 1; block <= depth; ++block) {
    const std::vector<HTreeNode>& base = out.back().vertices;
    GenerationSet rg{GenKind::R, block, {}, false, false};
    for (std::size_t i = 0; i < base.size(); ++i) {
      Scalar theta = cap_angle(base[i].shadow);
      Scalar h = base[i].shadow.hw;
      Scalar hc = h * ratio;
      for (int k = 0; k < fanout; ++k) {
        Scalar off = fanout == 1
                         ? 0.0
                         : -h + hc + k * (2.0 * (h - hc)) /
                                         static_cast<Scalar>(fanout - 1);
        HTreeNode n;
        n.shadow = Cap{Vec2(std::cos(theta + off), std::sin(theta + off)), hc};
        n.parent = static_cast<std::int64_t>(i);
        rg.vertices.push_back(std::move(n));
      }
    }
    GenerationSet tg{GenKind::T, block, rg.vertices, false, false};
    for (std::size_t i = 0; i < tg.vertices.size(); ++i) {
      tg.vertices[i].parent = static_cast<std::int64_t>(i);
      tg.vertices[i].phase = Phase::transient;
    }
    out.push_back(std::move(rg));
    out.push_back(std::move(tg));
  }
  return out;
}

namespace {

struct StepRec {
  Word word;
  Isometry g;
  Phase phase = Phase::recurrent;
  int block = 0;
};

EscapeProfile profile_from_steps(const SchottkyGroup& g,
                                 const std::vector<StepRec>& steps,
                                 const ProfileOptions& opt) {
  std::size_t n = steps.size() + 1;
  std::vector<Isometry> step_iso;
  step_iso.reserve(steps.size());
  for (const StepRec& s : steps) step_iso.push_back(s.g);

  EscapeProfile out;
  out.phases.assign(n, Phase::recurrent);
  out.blocks.assign(n, 0);
  out.arc_lengths.assign(n, 0.0);
  std::vector<Isometry> vtx(n);
  std::vector<int> label(n, 0);
  std::vector<Scalar> dist0(n, 0.0);
  // Cumulative products are renormalized to unit leading entry with the
  // removed factor carried in log form, so dist0 stays finite on branches
  // whose raw entries overflow; vtx itself is only consulted while shallow.
  Complex na(1.0, 0.0), nb(0.0, 0.0);
  Scalar lsc = 0.0;
  bool shallow = true;
  for (std::size_t i = 1; i < n; ++i) {
    if (shallow) {
      vtx[i] = vtx[i - 1] * steps[i - 1].g;
      if (!(std::abs(vtx[i].a()) < 1e100)) shallow = false;
    }
    const Complex sa = steps[i - 1].g.a(), sb = steps[i - 1].g.b();
    const Complex ta = na * sa + nb * std::conj(sb);
    const Complex tb = na * sb + nb * std::conj(sa);
    const Scalar m = std::abs(ta);
    na = ta / m;
    nb = tb / m;
    lsc += std::log(m);
    const Scalar lb = lsc + std::log(std::abs(nb));
    dist0[i] = lb > 138.0 ? 2.0 * (lb + std::log(2.0))
                          : acosh1p(2.0 * std::exp(2.0 * lb));
    label[i] = label[i - 1] + g.label(steps[i - 1].word);
    out.arc_lengths[i] =
        out.arc_lengths[i - 1] + steps[i - 1].g.displacement();
    out.phases[i] = steps[i - 1].phase;
    out.blocks[i] = steps[i - 1].block;
  }

  // Floors measured in step form, then re-asserted as declared floors; the
  // triple construction keeps full accuracy at any depth.
  StepFloorCheck probe = quasi_steps_floors(step_iso, 1e-12, 1e-12);
  if (!probe.ok)
    throw std::runtime_error("profile: degenerate step " +
                             std::to_string(probe.index) + " (" + probe.what +
                             ")");
  bool has_corners = steps.size() >= 2;
  out.min_corner = has_corners ? probe.min_angle_seen : M_PI;
  Scalar edge_floor = g.displacement_floor() * (1.0 - 1e-6);
  Scalar angle_floor = opt.min_angle > 0.0 ? opt.min_angle
                       : has_corners ? probe.min_angle_seen * (1.0 - 1e-9)
                                     : 1.0;
  StepFloorCheck strict = quasi_steps_floors(step_iso, edge_floor, angle_floor);
  if (!strict.ok)
    throw std::runtime_error("profile: floor violation at step " +
                             std::to_string(strict.index) + " (" + strict.what +
                             ")");

  out.path.min_edge_length = edge_floor;
  out.path.min_angle = angle_floor;
  Scalar dmax = 0.0;
  for (Scalar d : dist0) dmax = std::max(dmax, d);
  if (dmax <= 27.0) {
    out.path.vertices.reserve(n);
    for (std::size_t i = 0; i < n; ++i)
      out.path.vertices.push_back(vtx[i].apply(BallPoint()));
    quasi_geodesic_validate(out.path);
  } else {
    // beyond coordinate range only the representable prefix is kept; the
    // floors above are certified in step form for the whole branch
    for (std::size_t i = 0; i < n && dist0[i] <= 27.0; ++i)
      out.path.vertices.push_back(vtx[i].apply(BallPoint()));
  }

  // Label-0 cloud seeding the distance table.  A zero budget leaves the
  // cloud empty on purpose: the resulting profile carries no usable table
  // and downstream checks must flag themselves inconclusive.
  Scalar r0 = opt.ball_radius > 0.0 ? opt.ball_radius
                                    : 3.0 * g.displacement_floor();
  std::vector<OrbitPoint> cloud;
  if (opt.ball_budget > 0) {
    Enumeration en = enumerate_ball(g, r0, opt.ball_budget);
    cloud = filter_label(en.pts, 0);
    cloud.insert(cloud.begin(),
                 OrbitPoint{Word{}, Isometry::identity(), 0.0, 0});
  }
  out.table_size = cloud.size() * n;
  out.start_certified = label[0] == 0 && !cloud.empty();

  // One table column per trace vertex: the vertex composed with its own
  // cyclic correction and the cloud.  Each candidate is assembled as a
  // reduced word and only then evaluated: multiplying a gamma run by an
  // opposing correction power in matrix form cancels catastrophically once
  // the powers are large, while the reduced word never meets that regime.
  Scalar step_len = g.gamma_step();
  out.proxies.assign(n, kInf);
  std::vector<Letter> wbuf, cand;
  auto append = [](std::vector<Letter>& w, Letter l) {
    if (!w.empty() && w.back() == -l)
      w.pop_back();
    else
      w.push_back(l);
  };
  for (std::size_t i = 0; i < n; ++i) {
    Scalar best = kInf;
    auto visit = [&](std::size_t j) {
      Scalar reach = std::abs(label[j]) * step_len + r0;
      if (std::abs(dist0[i] - dist0[j]) - reach >= best) return;
      cand = wbuf;
      const Letter cl = label[j] > 0 ? Letter(-1) : Letter(1);
      for (int t = std::abs(label[j]); t-- > 0;) append(cand, cl);
      Isometry a = Isometry::identity();
      for (Letter l : cand) {
        a = a * g.gen(l);
        // a column this far out can never improve the minimum
        if (!(std::abs(a.a()) < 1e290)) return;
      }
      for (const OrbitPoint& c : cloud)
        best = std::min(best, (a * c.g).displacement());
    };
    wbuf.clear();
    for (std::size_t j = i; j < n; ++j) {
      if (j > i)
        for (Letter l : steps[j - 1].word) append(wbuf, l);
      visit(j);
    }
    wbuf.clear();
    for (std::size_t j = i; j-- > 0;) {
      const Word& w = steps[j].word;
      for (std::size_t t = w.size(); t-- > 0;) append(wbuf, -w[t]);
      visit(j);
    }
    out.proxies[i] = best;
  }
  return out;
}

bool is_prefix(const Word& w, const Word& of, std::size_t from) {
  if (from + w.size() > of.size()) return false;
  for (std::size_t i = 0; i < w.size(); ++i)
    if (w[i] != of[from + i]) return false;
  return true;
}

}  // namespace

EscapeProfile make_escape_profile(const SchottkyGroup& g,
                                  const CalibrationResult& calib,
                                  const TRPParams& trp,
                                  const ConstructionSchedule& sched,
                                  const HTreeNode& leaf,
                                  const ProfileOptions& opt) {
  const Word& target = leaf.orbit.word;
  std::vector<StepRec> steps;
  HTreeNode cur = root_node();
  std::size_t pos = 0;
  int block = 0;
  while (pos < target.size()) {
    ++block;
    for (int lvl = 0; lvl < sched.p && pos < target.size(); ++lvl) {
      std::vector<HTreeNode> kids = rrp_expand(cur, calib, opt.max_children);
      const HTreeNode* hit = nullptr;
      std::size_t step_len = 0;
      for (const HTreeNode& k : kids) {
        std::size_t sl = k.orbit.word.size() - cur.orbit.word.size();
        Word sw(k.orbit.word.end() - static_cast<std::ptrdiff_t>(sl),
                k.orbit.word.end());
        if (is_prefix(sw, target, pos)) {
          if (hit != nullptr)
            throw std::logic_error("profile: ambiguous replay step");
          hit = &k;
          step_len = sl;
        }
      }
      if (hit == nullptr)
        throw std::logic_error("profile: leaf word does not replay at '" +
                               word_str(cur.orbit.word) + "'");
      Word sw(hit->orbit.word.end() - static_cast<std::ptrdiff_t>(step_len),
              hit->orbit.word.end());
      steps.push_back(StepRec{sw, g.word_isometry(sw), Phase::recurrent, block});
      pos += step_len;
      cur = *hit;
    }
    if (pos >= target.size()) break;
    TRPReport rep = trp_apply(cur, g, sched.q, trp, calib.params.sigma);
    if (!rep.pass)
      fail_at("prolongation certificate failed", rep.node.orbit.word);
    for (int k = 0; k < sched.q; ++k) {
      if (pos >= target.size() || target[pos] != 1)
        throw std::logic_error("profile: leaf word does not replay at '" +
                               word_str(cur.orbit.word) + "'");
      steps.push_back(StepRec{Word{1}, g.gen(1), Phase::transient, block});
      ++pos;
    }
    cur = rep.node;
  }
  return profile_from_steps(g, steps, opt);
}

EscapeProfile make_step_profile(const SchottkyGroup& g,
                                const std::vector<Word>& words,
                                const ProfileOptions& opt) {
  std::vector<StepRec> steps;
  int runs = 0;
  bool in_run = false;
  for (const Word& w : words) {
    if (w.empty() || !is_reduced(w))
      throw std::invalid_argument("make_step_profile: steps must be nonempty reduced words");
    StepRec rec;
    rec.word = w;
    rec.g = g.word_isometry(w);
    rec.phase = g.label(w) != 0 ? Phase::transient : Phase::recurrent;
    if (rec.phase == Phase::transient) {
      if (!in_run) ++runs;
      in_run = true;
      rec.block = runs;
    } else {
      in_run = false;
      rec.block = runs + 1;
    }
    steps.push_back(std::move(rec));
  }
  return profile_from_steps(g, steps, opt);
}

TransienceReport transience_check(const EscapeProfile& profile, Scalar ell,
                                  Scalar tolerance) {
  if (!(ell > 0.0))
    throw std::invalid_argument("transience_check: ell <= 0");
  const std::vector<Scalar>& px = profile.proxies;
  std::size_t n = px.size();
  if (n < 2)
    throw std::invalid_argument("transience_check: trace too short");

  TransienceReport rep;
  rep.required = 3.0 * ell - tolerance;
  rep.inconclusive = profile.table_size == 0 || !profile.start_certified;

  bool all_ok = true;
  std::size_t i = 1;
  while (i < n) {
    if (profile.phases[i] != Phase::transient) {
      ++i;
      continue;
    }
    std::size_t first = i;
    while (i < n && profile.phases[i] == Phase::transient) ++i;
    SegmentIncrement seg;
    seg.block = profile.blocks[first];
    seg.first = first;
    seg.last = i - 1;
    seg.start_proxy = px[first - 1];
    seg.end_proxy = px[i - 1];
    seg.increment = seg.end_proxy - seg.start_proxy;
    seg.ok = seg.increment >= rep.required;
    all_ok = all_ok && seg.ok;
    rep.segments.push_back(seg);
  }

  int b_lo = 0, b_hi = 0;
  for (std::size_t j = 1; j < n; ++j) {
    if (profile.blocks[j] < 1) continue;
    if (b_lo == 0 || profile.blocks[j] < b_lo) b_lo = profile.blocks[j];
    b_hi = std::max(b_hi, profile.blocks[j]);
  }
  bool trend_applies = false;
  if (b_lo >= 1 && b_hi - b_lo >= 2) {
    trend_applies = true;
    rep.first_block_max = -kInf;
    rep.last_block_min = kInf;
    for (std::size_t j = 1; j < n; ++j) {
      if (profile.blocks[j] == b_lo)
        rep.first_block_max = std::max(rep.first_block_max, px[j]);
      if (profile.blocks[j] == b_hi)
        rep.last_block_min = std::min(rep.last_block_min, px[j]);
    }
    rep.trend_ok = rep.last_block_min > rep.first_block_max;
  }
  rep.max_proxy = *std::max_element(px.begin(), px.end());
  rep.final_proxy = px.back();
  rep.pass = !rep.inconclusive && all_ok && (!trend_applies || rep.trend_ok);
  return rep;
}

ReductionReport reduction_case_report(const DeltaEstimate& kernel,
                                      const DeltaEstimate& ambient) {
  ReductionReport rep;
  rep.kernel = kernel;
  rep.ambient = ambient;
  rep.overlap = kernel.hi >= ambient.lo && ambient.hi >= kernel.lo;
  rep.ordered = kernel.value <= ambient.value + 1e-12;
  Scalar base = kernel.lo > 0.0 ? kernel.lo : std::max(kernel.value, 0.0);
  rep.recommended_s = 0.5 * base;
  rep.note = rep.overlap
                 ? "bands overlap; the kernel shares the ambient growth "
                   "exponent at this resolution"
                 : "bands disjoint; the paired estimates likely come from "
                   "different groups or a collapsed kernel";
  return rep;
}

}  // namespace limset
