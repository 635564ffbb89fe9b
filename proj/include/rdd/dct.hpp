#pragma once

// Orthonormal 8x8 DCT-II and its inverse. Coefficient (u, v) of a block is
// stored at index 8 u + v, u the vertical frequency.

#include <array>
#include <cmath>
#include <numbers>

namespace rdd::dct {

using Block = std::array<double, 64>;

namespace detail {

inline const std::array<double, 64>& basis() {
  static const std::array<double, 64> c = [] {
    std::array<double, 64> m{};
    for (int k = 0; k < 8; ++k) {
      const double scale = k == 0 ? std::sqrt(1.0 / 8.0) : std::sqrt(2.0 / 8.0);
      for (int i = 0; i < 8; ++i) m[8 * k + i] = scale * std::cos((2 * i + 1) * k * std::numbers::pi / 16.0);
    }
    return m;
  }();
  return c;
}

}  // namespace detail

/// C X C^T.
inline Block forward(const Block& x) {
  const auto& c = detail::basis();
  Block t{}, y{};
  for (int u = 0; u < 8; ++u) {
    for (int j = 0; j < 8; ++j) {
      double s = 0.0;
      for (int i = 0; i < 8; ++i) s += c[8 * u + i] * x[8 * i + j];
      t[8 * u + j] = s;
    }
  }
  for (int u = 0; u < 8; ++u) {
    for (int v = 0; v < 8; ++v) {
      double s = 0.0;
      for (int j = 0; j < 8; ++j) s += t[8 * u + j] * c[8 * v + j];
      y[8 * u + v] = s;
    }
  }
  return y;
}

/// C^T Y C.
inline Block inverse(const Block& y) {
  const auto& c = detail::basis();
  Block t{}, x{};
  for (int i = 0; i < 8; ++i) {
    for (int v = 0; v < 8; ++v) {
      double s = 0.0;
      for (int u = 0; u < 8; ++u) s += c[8 * u + i] * y[8 * u + v];
      t[8 * i + v] = s;
    }
  }
  for (int i = 0; i < 8; ++i) {
    for (int j = 0; j < 8; ++j) {
      double s = 0.0;
      for (int v = 0; v < 8; ++v) s += t[8 * i + v] * c[8 * v + j];
      x[8 * i + j] = s;
    }
  }
  return x;
}

}  // namespace rdd::dct
