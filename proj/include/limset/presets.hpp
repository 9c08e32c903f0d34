#pragma once

#include <string>
#include <vector>

#include "limset/kleinian.hpp"

namespace limset {

/// Named generator layout bundled with the run parameters it was sized for.
///
/// s_absolute > 0 pins the construction exponent directly; otherwise the
/// driver takes s = s_fraction * (measured growth-exponent midpoint).
struct PresetSpec {
  std::string name;
  std::vector<GeneratorSpec> gens;
  std::vector<int> phi;
  Scalar s_absolute = 0.0;
  Scalar s_fraction = 0.5;
  std::string notes;
};

// "default": rank 2, both axes through the origin, lengths 4.
// "escape": rank 3, sized so a depth-3 alternating run fits in a few hours;
//           the third generator carries the nonzero label and steps 8.8018.
PresetSpec preset_spec(const std::string& name);

std::vector<std::string> preset_names();

SchottkyGroup make_group(const PresetSpec& spec);

/// Orbit displacements d(0, g^n 0) of a single hyperbolic through the origin,
/// n = -n_max..n_max without 0.  Control data for the rank-one comparison.
std::vector<Scalar> cyclic_displacements(Scalar step, int n_max);

}  // namespace limset
