#pragma once

#include <complex>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace limset {

using Scalar = double;
using Complex = std::complex<Scalar>;

// Numerical policy shared across the library.  Distances are absolute
// quantities of order 1..100 here, so a single relative tolerance works.
struct Tolerances {
  Scalar boundary_eps = 1e-12;   // points must satisfy |z| < 1 - boundary_eps
  Scalar check = 1e-9;           // default relative tolerance for checks
  Scalar trace_band = 1e-9;      // |tr^2 - 4| below this is unclassifiable
};

inline const Tolerances& tol() {
  static Tolerances t;
  return t;
}

struct budget_exceeded : std::runtime_error {
  std::uint64_t partial_count;
  explicit budget_exceeded(std::uint64_t n)
      : std::runtime_error("enumeration budget exceeded after " +
                           std::to_string(n) + " nodes"),
        partial_count(n) {}
  budget_exceeded(const std::string& what, std::uint64_t n)
      : std::runtime_error(what + " (partial count " + std::to_string(n) + ")"),
        partial_count(n) {}
};

struct indeterminate_classification : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// FNV-1a, used to stamp output files with a config fingerprint.
inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

inline constexpr const char* version() { return "0.1.0"; }

// Schweikart constant: the supremum of the gap between a geodesic's summit
// and the radial segments toward its endpoints, arsinh(1) = log(1+sqrt 2).
inline constexpr Scalar schweikart() { return 0.881373587019543; }

}  // namespace limset
