#include "limset/kleinian.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <sstream>
#include <stdexcept>

namespace limset {

bool is_reduced(const Word& w) {
  for (std::size_t i = 1; i < w.size(); ++i)
    if (w[i] == static_cast<Letter>(-w[i - 1])) return false;
  return true;
}

Word reduce_concat(const Word& u, const Word& v) {
  Word out;
  out.reserve(u.size() + v.size());
  for (Letter l : u) out.push_back(l);
  for (Letter l : v) {
    if (!out.empty() && out.back() == static_cast<Letter>(-l))
      out.pop_back();
    else
      out.push_back(l);
  }
  return out;
}

Word word_inverse(const Word& w) {
  Word out;
  out.reserve(w.size());
  for (auto it = w.rbegin(); it != w.rend(); ++it)
    out.push_back(static_cast<Letter>(-*it));
  return out;
}

std::string word_str(const Word& w) {
  if (w.empty()) return "e";
  std::string s;
  s.reserve(w.size());
  for (Letter l : w) {
    int k = l > 0 ? l : -l;
    char c = static_cast<char>((l > 0 ? 'a' : 'A') + (k - 1));
    s.push_back(c);
  }
  return s;
}

Disk mobius_disk_image(const Isometry& g, const Disk& d) {
  const Complex al = g.a(), be = g.b();
  const Complex ga = std::conj(be), de = std::conj(al);
  const Complex den_c = ga * d.center + de;
  const Scalar den = std::norm(den_c) - std::norm(ga) * d.radius * d.radius;
  const Complex num =
      (al * d.center + be) * std::conj(den_c) - al * std::conj(ga) * d.radius * d.radius;
  // det(g) = 1, so the radius picks up only the 1/|den| factor.
  return Disk{num / den, std::abs(d.radius / den)};
}

SchottkyGroup::SchottkyGroup(std::vector<GeneratorSpec> specs,
                             std::vector<int> phi, Scalar disk_margin)
    : specs_(std::move(specs)), phi_(std::move(phi)) {
  const int k = static_cast<int>(specs_.size());
  if (k < 2)
    throw std::invalid_argument("SchottkyGroup: at least two generators required");
  if (static_cast<int>(phi_.size()) != k)
    throw std::invalid_argument("SchottkyGroup: phi must assign an integer to every generator");
  if (phi_[0] != 1)
    throw std::invalid_argument("SchottkyGroup: the cyclic direction (first generator) must have phi = 1");

  gens_.reserve(k);
  inv_gens_.reserve(k);
  for (const GeneratorSpec& sp : specs_) {
    if (!(sp.length > 0.0))
      throw std::invalid_argument("SchottkyGroup: translation lengths must be positive");
    Isometry g = Isometry::loxodromic(BoundaryPoint::at_angle(sp.angle_repelling),
                                      BoundaryPoint::at_angle(sp.angle_attracting),
                                      sp.length);
    gens_.push_back(g);
    inv_gens_.push_back(g.inverse());
  }
  gamma_length_ = specs_[0].length;
  gamma_step_ = gens_[0].displacement();

  disks_.resize(2 * k);
  for (int i = 0; i < k; ++i) {
    const Complex a = gens_[i].a(), b = gens_[i].b();
    const Scalar r = 1.0 / std::abs(b);
    // target of letter +(i+1): isometric disk of the inverse generator
    disks_[2 * i] = Disk{a / std::conj(b), r};
    // target of letter -(i+1): isometric disk of the generator itself
    disks_[2 * i + 1] = Disk{-std::conj(a) / std::conj(b), r};
  }

  min_gap_ = std::numeric_limits<Scalar>::infinity();
  for (int i = 0; i < 2 * k; ++i) {
    for (int j = i + 1; j < 2 * k; ++j) {
      const Scalar gap = std::abs(disks_[i].center - disks_[j].center) -
                         disks_[i].radius - disks_[j].radius;
      min_gap_ = std::min(min_gap_, gap);
      if (gap < disk_margin) {
        const Letter li = static_cast<Letter>((i % 2 == 0) ? (i / 2 + 1) : -(i / 2 + 1));
        const Letter lj = static_cast<Letter>((j % 2 == 0) ? (j / 2 + 1) : -(j / 2 + 1));
        std::ostringstream os;
        os << "SchottkyGroup: ping-pong disks for '" << word_str(Word{li})
           << "' and '" << word_str(Word{lj}) << "' are not disjoint (gap=" << gap
           << ", margin=" << disk_margin
           << "); translation length too small for disjointness";
        throw std::invalid_argument(os.str());
      }
    }
  }

  floor_ = std::numeric_limits<Scalar>::infinity();
  for (const Disk& d : disks_) {
    const Scalar u = std::abs(d.center) - d.radius;
    floor_ = std::min(floor_, 2.0 * std::atanh(std::min(u, 1.0 - 1e-16)));
  }
}

const Isometry& SchottkyGroup::gen(Letter l) const {
  const int k = l > 0 ? l : -l;
  if (l == 0 || k > rank()) throw std::out_of_range("SchottkyGroup::gen: bad letter");
  return l > 0 ? gens_[k - 1] : inv_gens_[k - 1];
}

const Disk& SchottkyGroup::target_disk(Letter l) const {
  const int k = l > 0 ? l : -l;
  if (l == 0 || k > rank()) throw std::out_of_range("SchottkyGroup::target_disk: bad letter");
  return disks_[2 * (k - 1) + (l > 0 ? 0 : 1)];
}

Isometry SchottkyGroup::word_isometry(const Word& w) const {
  Isometry m = Isometry::identity();
  for (Letter l : w) m = m * gen(l);
  return m;
}

int SchottkyGroup::label(const Word& w) const {
  int n = 0;
  for (Letter l : w) n += (l > 0) ? phi_[l - 1] : -phi_[-l - 1];
  return n;
}

Isometry SchottkyGroup::gamma_power(int n) const {
  const Isometry& step = n >= 0 ? gens_[0] : inv_gens_[0];
  Isometry m = Isometry::identity();
  for (int i = 0; i < std::abs(n); ++i) m = m * step;
  return m;
}

BallPoint SchottkyGroup::z(int n) const {
  return gamma_power(n).apply(BallPoint(Vec2(0.0, 0.0)));
}

namespace {

std::vector<Letter> letter_order(int rank) {
  std::vector<Letter> order;
  order.reserve(2 * rank);
  for (int i = 1; i <= rank; ++i) {
    order.push_back(static_cast<Letter>(i));
    order.push_back(static_cast<Letter>(-i));
  }
  return order;
}

}  // namespace

Enumeration enumerate_ball(const SchottkyGroup& g, Scalar t,
                           std::uint64_t budget, bool include_identity) {
  Enumeration out;
  const auto order = letter_order(g.rank());
  Word word;

  std::function<void(const Isometry&, Letter)> visit =
      [&](const Isometry& m, Letter last) {
        if (++out.visited > budget)
          throw budget_exceeded("enumerate_ball: budget exceeded", out.pts.size());
        const Scalar d = m.displacement();
        if (d <= t && (include_identity || !word.empty()))
          out.pts.push_back(OrbitPoint{word, m, d, g.label(word)});
        for (Letter l : order) {
          if (last != 0 && l == static_cast<Letter>(-last)) continue;
          const Disk reach = word.empty()
                                 ? g.target_disk(l)
                                 : mobius_disk_image(m, g.target_disk(l));
          // every orbit point of the subtree lies inside `reach`
          const Scalar u = std::abs(reach.center) - reach.radius;
          const Scalar lb =
              2.0 * std::atanh(std::clamp(u * (1.0 - 1e-14), 0.0, 1.0 - 1e-16));
          if (lb > t) continue;
          word.push_back(l);
          visit(m * g.gen(l), l);
          word.pop_back();
        }
      };

  visit(Isometry::identity(), 0);
  return out;
}

Enumeration enumerate_words(const SchottkyGroup& g, int max_length,
                            std::uint64_t budget, bool include_identity) {
  Enumeration out;
  const auto order = letter_order(g.rank());
  Word word;

  std::function<void(const Isometry&, Letter)> visit =
      [&](const Isometry& m, Letter last) {
        if (++out.visited > budget)
          throw budget_exceeded("enumerate_words: budget exceeded", out.pts.size());
        if (include_identity || !word.empty())
          out.pts.push_back(OrbitPoint{word, m, m.displacement(), g.label(word)});
        if (static_cast<int>(word.size()) >= max_length) return;
        for (Letter l : order) {
          if (last != 0 && l == static_cast<Letter>(-last)) continue;
          word.push_back(l);
          visit(m * g.gen(l), l);
          word.pop_back();
        }
      };

  visit(Isometry::identity(), 0);
  return out;
}

std::vector<OrbitPoint> filter_label(const std::vector<OrbitPoint>& pts,
                                     int label) {
  std::vector<OrbitPoint> out;
  for (const OrbitPoint& p : pts)
    if (p.label == label) out.push_back(p);
  return out;
}

std::vector<Scalar> displacement_multiset(const std::vector<OrbitPoint>& pts) {
  std::vector<Scalar> d;
  d.reserve(pts.size());
  for (const OrbitPoint& p : pts) d.push_back(p.dist);
  std::sort(d.begin(), d.end());
  return d;
}

TruncatedSeries poincare_truncated(const std::vector<Scalar>& displacements,
                                   Scalar s, Scalar t, bool certified) {
  TruncatedSeries out;
  out.s = s;
  out.t = t;
  out.certified = certified;
  for (Scalar d : displacements) {
    if (d <= t) {
      out.value += std::exp(-s * d);
      ++out.count;
    }
  }
  return out;
}

ConjugationReport conjugation_invariance_check(const SchottkyGroup& g, Scalar s,
                                               int n, Scalar t,
                                               std::uint64_t budget,
                                               Scalar tol) {
  ConjugationReport rep;
  rep.n = n;
  rep.s = s;
  rep.t = t;

  // Orbit points can land exactly on the cut-off (powers of a generator at
  // integer multiples of its length).  Both observation points use the same
  // slightly padded threshold so rounding cannot split such a pair.
  const Scalar t_eff = t * (1.0 + 1e-12) + 1e-12;

  const auto base = filter_label(enumerate_ball(g, t_eff, budget).pts, 0);
  std::vector<Scalar> mult_base = displacement_multiset(base);
  std::vector<std::string> words_base;
  words_base.reserve(base.size());
  for (const OrbitPoint& p : base) words_base.push_back(word_str(p.word));
  std::sort(words_base.begin(), words_base.end());

  // Every h with d(z_n, h z_n) <= t satisfies d(0, h 0) <= t + 2 d(0, z_n).
  const Scalar zn_dist = g.gamma_power(n).displacement();
  const auto wide =
      filter_label(enumerate_ball(g, t_eff + 2.0 * zn_dist + 1e-6, budget).pts, 0);
  const Word wp = [&] {
    Word w;
    for (int i = 0; i < std::abs(n); ++i)
      w.push_back(static_cast<Letter>(n >= 0 ? 1 : -1));
    return w;
  }();
  const Word wm = word_inverse(wp);

  std::vector<Scalar> mult_conj;
  std::vector<std::string> words_conj;
  for (const OrbitPoint& p : wide) {
    // d(z_n, h z_n) = d(0, (gamma^-n h gamma^n)(0)).  Reduce the conjugated
    // word first and compose it fresh: multiplying the already-deep matrix
    // of h by gamma^{+-n} would cancel catastrophically.
    const Word conj = reduce_concat(reduce_concat(wm, p.word), wp);
    const Scalar d = g.word_isometry(conj).displacement();
    if (d <= t_eff) {
      mult_conj.push_back(d);
      words_conj.push_back(word_str(conj));
    }
  }
  std::sort(mult_conj.begin(), mult_conj.end());
  std::sort(words_conj.begin(), words_conj.end());

  rep.count_base = mult_base.size();
  rep.count_conj = mult_conj.size();
  rep.series_base = poincare_truncated(mult_base, s, t_eff);
  rep.series_conj = poincare_truncated(mult_conj, s, t_eff);

  rep.multisets_match = mult_base.size() == mult_conj.size();
  const std::size_t m = std::min(mult_base.size(), mult_conj.size());
  for (std::size_t i = 0; i < m; ++i) {
    const Scalar diff = std::abs(mult_base[i] - mult_conj[i]);
    rep.max_abs_diff = std::max(rep.max_abs_diff, diff);
    if (diff > tol && rep.first_mismatch < 0.0) {
      rep.first_mismatch = std::min(mult_base[i], mult_conj[i]);
      rep.multisets_match = false;
    }
  }
  if (mult_base.size() != mult_conj.size() && rep.first_mismatch < 0.0) {
    if (mult_base.size() > m)
      rep.first_mismatch = mult_base[m];
    else if (mult_conj.size() > m)
      rep.first_mismatch = mult_conj[m];
  }
  rep.words_match = words_base == words_conj;
  rep.pass = rep.multisets_match && rep.words_match &&
             std::abs(rep.series_base.value - rep.series_conj.value) <=
                 tol * std::max(1.0, rep.series_base.value);
  return rep;
}

namespace {

struct LineFit {
  Scalar slope = 0.0;
  Scalar se = 0.0;
  int n = 0;
};

LineFit ls_fit(const std::vector<Scalar>& xs, const std::vector<Scalar>& ys) {
  LineFit f;
  f.n = static_cast<int>(xs.size());
  if (f.n < 2) return f;
  Scalar sx = 0, sy = 0;
  for (int i = 0; i < f.n; ++i) {
    sx += xs[i];
    sy += ys[i];
  }
  const Scalar mx = sx / f.n, my = sy / f.n;
  Scalar sxx = 0, sxy = 0;
  for (int i = 0; i < f.n; ++i) {
    sxx += (xs[i] - mx) * (xs[i] - mx);
    sxy += (xs[i] - mx) * (ys[i] - my);
  }
  f.slope = sxy / sxx;
  if (f.n > 2) {
    Scalar ss = 0;
    for (int i = 0; i < f.n; ++i) {
      const Scalar r = ys[i] - my - f.slope * (xs[i] - mx);
      ss += r * r;
    }
    f.se = std::sqrt(ss / ((f.n - 2) * sxx));
  }
  return f;
}

DeltaEstimate delta_counting(const std::vector<Scalar>& d,
                             const DeltaOptions& opt) {
  DeltaEstimate est;
  est.method = DeltaMethod::counting_fit;
  const Scalar T = *std::max_element(d.begin(), d.end());
  est.t_max = T;
  const Scalar w = opt.annulus_width;
  const long i0 = static_cast<long>(std::floor(opt.window_lo * T / w));
  const long i1 = static_cast<long>(std::floor(opt.window_hi * T / w));
  std::vector<std::uint64_t> counts(static_cast<std::size_t>(i1 - i0 + 1), 0);
  for (Scalar x : d) {
    const long i = static_cast<long>(std::floor(x / w));
    if (i >= i0 && i <= i1) ++counts[static_cast<std::size_t>(i - i0)];
  }
  std::vector<Scalar> xs, ys;
  for (std::size_t j = 0; j < counts.size(); ++j) {
    if (counts[j] == 0) continue;
    xs.push_back((static_cast<Scalar>(i0 + static_cast<long>(j)) + 0.5) * w);
    ys.push_back(std::log(static_cast<Scalar>(counts[j])));
  }
  if (static_cast<int>(xs.size()) < opt.min_annuli) {
    std::ostringstream os;
    os << "estimate_delta: window too short (" << xs.size()
       << " populated annuli, need " << opt.min_annuli << ")";
    throw std::runtime_error(os.str());
  }
  est.annuli = static_cast<int>(xs.size());
  const LineFit fit = ls_fit(xs, ys);

  // curvature of the fit: difference between the slopes of the two halves
  Scalar decay = 0.0;
  const std::size_t half = xs.size() / 2;
  if (half >= 3 && xs.size() - half >= 3) {
    const LineFit f1 = ls_fit({xs.begin(), xs.begin() + half},
                              {ys.begin(), ys.begin() + half});
    const LineFit f2 = ls_fit({xs.begin() + half, xs.end()},
                              {ys.begin() + half, ys.end()});
    decay = std::max(0.0, f1.slope - f2.slope);
  }
  const Scalar margin = 2.0 * fit.se + decay + 2.0 / T + 0.02;
  est.value = std::clamp(fit.slope, 0.0, 1.0);
  est.lo = est.value - margin;
  est.hi = est.value + margin;
  return est;
}

DeltaEstimate delta_bisect(const std::vector<Scalar>& d,
                           const DeltaOptions& opt) {
  DeltaEstimate est;
  est.method = DeltaMethod::series_bisection;
  const Scalar T = *std::max_element(d.begin(), d.end());
  est.t_max = T;
  const Scalar t0 = opt.tail_fraction * T;

  const auto tail_weight = [&](Scalar s) {
    Scalar full = 0, head = 0;
    for (Scalar x : d) {
      const Scalar e = std::exp(-s * x);
      full += e;
      if (x <= t0) head += e;
    }
    return 1.0 - head / full;
  };

  Scalar lo = 0.0, hi = opt.s_max;
  if (tail_weight(lo) <= opt.tail_threshold) {
    hi = 0.0;  // series concentrated even at s = 0
  } else {
    for (int i = 0; i < opt.bisect_iters; ++i) {
      const Scalar mid = 0.5 * (lo + hi);
      if (tail_weight(mid) > opt.tail_threshold)
        lo = mid;
      else
        hi = mid;
    }
  }
  const Scalar margin = 2.0 / T + 0.03;
  est.value = std::clamp(0.5 * (lo + hi), 0.0, 1.0);
  est.lo = est.value - margin;
  est.hi = est.value + margin;
  return est;
}

}  // namespace

DeltaEstimate estimate_delta(const std::vector<Scalar>& displacements,
                             DeltaMethod method, const DeltaOptions& opt) {
  if (displacements.empty())
    throw std::runtime_error("estimate_delta: empty displacement list");
  return method == DeltaMethod::counting_fit ? delta_counting(displacements, opt)
                                             : delta_bisect(displacements, opt);
}

}  // namespace limset
