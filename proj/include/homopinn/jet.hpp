#pragma once

// First-order dual number with two tangent slots. Pointwise residual
// expressions are written once as templates over the scalar type; evaluating
// them on Jet gives the partials with respect to (u, lap u) that the reverse
// sweep through the network needs.

#include <cmath>

namespace homopinn {

struct Jet {
  double v = 0.0;
  double du = 0.0;  // d/du
  double dl = 0.0;  // d/d(lap u)

  constexpr Jet() = default;
  constexpr Jet(double value) : v(value) {}  // NOLINT: constants promote implicitly
  constexpr Jet(double value, double d_u, double d_l) : v(value), du(d_u), dl(d_l) {}

  static constexpr Jet var_u(double value) { return {value, 1.0, 0.0}; }
  static constexpr Jet var_lap(double value) { return {value, 0.0, 1.0}; }

  Jet& operator+=(const Jet& o) { v += o.v; du += o.du; dl += o.dl; return *this; }
  Jet& operator-=(const Jet& o) { v -= o.v; du -= o.du; dl -= o.dl; return *this; }
  Jet& operator*=(const Jet& o) {
    du = du * o.v + v * o.du;
    dl = dl * o.v + v * o.dl;
    v *= o.v;
    return *this;
  }
  Jet& operator/=(const Jet& o) {
    const double inv = 1.0 / o.v;
    du = (du - v * inv * o.du) * inv;
    dl = (dl - v * inv * o.dl) * inv;
    v *= inv;
    return *this;
  }
};

inline Jet operator-(const Jet& a) { return {-a.v, -a.du, -a.dl}; }
inline Jet operator+(Jet a, const Jet& b) { return a += b; }
inline Jet operator-(Jet a, const Jet& b) { return a -= b; }
inline Jet operator*(Jet a, const Jet& b) { return a *= b; }
inline Jet operator/(Jet a, const Jet& b) { return a /= b; }

inline Jet sin(const Jet& a) {
  const double c = std::cos(a.v);
  return {std::sin(a.v), c * a.du, c * a.dl};
}
inline Jet cos(const Jet& a) {
  const double s = -std::sin(a.v);
  return {std::cos(a.v), s * a.du, s * a.dl};
}
inline Jet tanh(const Jet& a) {
  const double t = std::tanh(a.v);
  const double d = 1.0 - t * t;
  return {t, d * a.du, d * a.dl};
}

inline double value_of(double x) { return x; }
inline double value_of(const Jet& x) { return x.v; }

}  // namespace homopinn
