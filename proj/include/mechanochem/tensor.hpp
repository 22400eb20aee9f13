#pragma once

#include <cmath>
#include <stdexcept>

namespace mechanochem {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
};

inline Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
inline Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
inline Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
inline double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }

// Symmetric 2x2 tensor, stored as (xx, yy, xy).
struct SymTensor2 {
  double xx = 0.0;
  double yy = 0.0;
  double xy = 0.0;

  static SymTensor2 identity() { return {1.0, 1.0, 0.0}; }
  double trace() const { return xx + yy; }
  double frobenius_norm() const {
    return std::sqrt(xx * xx + yy * yy + 2.0 * xy * xy);
  }
};

inline SymTensor2 operator+(SymTensor2 a, SymTensor2 b) {
  return {a.xx + b.xx, a.yy + b.yy, a.xy + b.xy};
}
inline SymTensor2 operator-(SymTensor2 a, SymTensor2 b) {
  return {a.xx - b.xx, a.yy - b.yy, a.xy - b.xy};
}
inline SymTensor2 operator*(double s, SymTensor2 a) {
  return {s * a.xx, s * a.yy, s * a.xy};
}

// Full contraction A : B for symmetric tensors (off-diagonal counted twice).
inline double ddot(SymTensor2 a, SymTensor2 b) {
  return a.xx * b.xx + a.yy * b.yy + 2.0 * a.xy * b.xy;
}

// General 2x2 tensor, used at API boundaries that must reject
// asymmetric input.
struct Tensor2 {
  double xx = 0.0;
  double xy = 0.0;
  double yx = 0.0;
  double yy = 0.0;
};

inline SymTensor2 require_symmetric(const Tensor2& t) {
  const double scale = std::abs(t.xx) + std::abs(t.xy) + std::abs(t.yx) +
                       std::abs(t.yy) + 1.0;
  if (std::abs(t.xy - t.yx) > 1e-12 * scale)
    throw std::invalid_argument("tensor argument must be symmetric");
  return {t.xx, t.yy, 0.5 * (t.xy + t.yx)};
}

}  // namespace mechanochem
