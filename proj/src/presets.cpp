#include "limset/presets.hpp"

#include <cmath>
#include <stdexcept>

namespace limset {

namespace {

constexpr Scalar kDeg = M_PI / 180.0;

PresetSpec default_spec() {
  PresetSpec p;
  p.name = "default";
  p.gens = {
      {M_PI, 0.0, 4.0},
      {-M_PI / 2, M_PI / 2, 4.0},
  };
  p.phi = {1, 0};
  p.s_fraction = 0.5;
  p.notes = "two diametral axes, lengths 4; label on the first generator";
  return p;
}

PresetSpec escape_spec() {
  // The labelled generator is bent off the origin: endpoints 39.2deg and
  // 129.2deg subtend a right angle, so its axis passes at distance
  // log(1+sqrt(2)) and a translation length L gives step
  // d(0, g0) = acosh(1 + 2(cosh L - 1)).  L below is chosen to make the
  // step exactly 8.8018, just above four times the expansion radius 2.2
  // that the two diametral generators calibrate to.
  const Scalar step = 8.8018;
  const Scalar L = std::acosh(1.0 + (std::cosh(step) - 1.0) / 2.0);
  PresetSpec p;
  p.name = "escape";
  p.gens = {
      {39.2 * kDeg, 129.2 * kDeg, L},
      {M_PI, 0.0, 2.2},
      {258.4 * kDeg, 78.4 * kDeg, 2.2},
  };
  p.phi = {1, 0, 0};
  p.s_absolute = 0.002;
  p.notes = "rank 3; depth-3 alternating run sized for a single-day budget";
  return p;
}

}  // namespace

PresetSpec preset_spec(const std::string& name) {
  if (name == "default") return default_spec();
  if (name == "escape") return escape_spec();
  throw std::invalid_argument("unknown preset '" + name +
                              "' (available: default, escape, cyclic)");
}

std::vector<std::string> preset_names() { return {"default", "escape"}; }

SchottkyGroup make_group(const PresetSpec& spec) {
  return SchottkyGroup(spec.gens, spec.phi);
}

std::vector<Scalar> cyclic_displacements(Scalar step, int n_max) {
  if (!(step > 0) || n_max < 1)
    throw std::invalid_argument("cyclic_displacements: need step > 0, n_max >= 1");
  std::vector<Scalar> out;
  out.reserve(2 * static_cast<std::size_t>(n_max));
  for (int n = 1; n <= n_max; ++n) {
    out.push_back(step * n);
    out.push_back(step * n);
  }
  return out;
}

}  // namespace limset
