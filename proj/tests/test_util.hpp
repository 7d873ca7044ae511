#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>

#include <Eigen/Geometry>

#include "asplat/autodiff.hpp"
#include "asplat/cameras.hpp"
#include "asplat/error.hpp"

namespace asplat::testing {

inline Mat3 random_rotation(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::Quaterniond q(n(rng), n(rng), n(rng), n(rng));
  q.normalize();
  return q.toRotationMatrix();
}

inline Intrinsics random_intrinsics(std::mt19937_64& rng, int w = 64, int h = 48) {
  std::uniform_real_distribution<double> f(30.0, 120.0);
  std::uniform_real_distribution<double> u(0.3, 0.7);
  Intrinsics K;
  K.width = w;
  K.height = h;
  K.fx = f(rng);
  K.fy = f(rng);
  K.cx = u(rng) * w;
  K.cy = u(rng) * h;
  return K;
}

inline Extrinsics random_extrinsics(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> t(-3.0, 3.0);
  Extrinsics E;
  E.R = random_rotation(rng);
  E.T = Vec3(t(rng), t(rng), t(rng));
  return E;
}

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline constexpr ErrorCode kNoError = static_cast<ErrorCode>(0);

// Error code thrown by f, or kNoError.
inline ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return kNoError;
}

// Central difference of `loss` in p.value[i]; restores the entry.
template <class F>
double central_difference(ad::Parameter& p, std::size_t i, F&& loss, double h) {
  const double keep = p.value[i];
  p.value[i] = keep + h;
  const double fp = loss();
  p.value[i] = keep - h;
  const double fm = loss();
  p.value[i] = keep;
  return (fp - fm) / (2 * h);
}

// Relative error with a tiny absolute floor for entries that are zero on both sides.
inline bool grad_close(double analytic, double fd, double rel, double abs_floor = 1e-8) {
  const double diff = std::abs(analytic - fd);
  return diff <= abs_floor || diff <= rel * std::max(std::abs(analytic), std::abs(fd));
}

}  // namespace asplat::testing
