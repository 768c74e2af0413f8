#pragma once

// Angle-bracket slice kernels shared by the great-circle update for theta and
// the elliptical update for the horseshoe coefficient vector.

#include "changeplane/random.hpp"

#include <numbers>

namespace changeplane {

inline constexpr int kSliceRetryCap = 1000;

struct SliceStats {
  int rejections = 0;
  bool cap_hit = false;
  /// Count of rejections that failed to narrow the bracket; must stay zero.
  int non_shrinking = 0;
};

/// One slice update along theta cos(phi) + u sin(phi), restricted to the
/// first coordinate being non-negative. `loglik(c, s)` evaluates the target at
/// cos(phi) = c, sin(phi) = s. Returns the accepted angle (0 when the retry cap
/// is hit, i.e. the chain stays put).
template <class AngleLogLik>
double hemisphere_slice_angle(double theta1, double u1, double current_loglik,
                              AngleLogLik&& loglik, Rng& rng, SliceStats& stats) {
  const double level = current_loglik + std::log(rng.uniform());
  double lo = -std::numbers::pi;
  double hi = std::numbers::pi;
  double phi = rng.uniform(lo, hi);
  for (int k = 0; k < kSliceRetryCap; ++k) {
    const double c = std::cos(phi);
    const double s = std::sin(phi);
    if (theta1 * c + u1 * s >= 0.0 && loglik(c, s) >= level) return phi;
    ++stats.rejections;
    const double width = hi - lo;
    if (phi < 0.0) {
      lo = phi;
    } else {
      hi = phi;
    }
    if (!(hi - lo < width)) ++stats.non_shrinking;
    phi = rng.uniform(lo, hi);
  }
  stats.cap_hit = true;
  return 0.0;
}

/// Standard elliptical slice update along nu cos(phi) + aux sin(phi), where aux
/// is a fresh draw from the Gaussian prior. Bracket starts at [phi - 2pi, phi].
template <class AngleLogLik>
double ellipse_slice_angle(double current_loglik, AngleLogLik&& loglik, Rng& rng,
                           SliceStats& stats) {
  const double level = current_loglik + std::log(rng.uniform());
  double phi = rng.uniform(0.0, 2.0 * std::numbers::pi);
  double lo = phi - 2.0 * std::numbers::pi;
  double hi = phi;
  for (int k = 0; k < kSliceRetryCap; ++k) {
    if (loglik(std::cos(phi), std::sin(phi)) > level) return phi;
    ++stats.rejections;
    const double width = hi - lo;
    if (phi < 0.0) {
      lo = phi;
    } else {
      hi = phi;
    }
    if (!(hi - lo < width)) ++stats.non_shrinking;
    phi = rng.uniform(lo, hi);
  }
  stats.cap_hit = true;
  return 0.0;
}

}  // namespace changeplane
