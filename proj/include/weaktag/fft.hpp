#pragma once

#include <bit>
#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <span>
#include <vector>

#include "weaktag/error.hpp"

namespace weaktag {

/// In-place iterative radix-2 decimation-in-time FFT (forward, no scaling).
/// Length must be a power of two.
class Fft {
 public:
  explicit Fft(std::size_t n) : n_(n) {
    require(n >= 1 && std::has_single_bit(n), Errc::invalid_argument,
            "FFT length must be a power of two, got " + std::to_string(n));
    const int bits = std::countr_zero(n);
    reversed_.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t r = 0;
      for (int b = 0; b < bits; ++b)
        if (i & (std::size_t{1} << b)) r |= std::size_t{1} << (bits - 1 - b);
      reversed_[i] = r;
    }
    twiddles_.resize(n / 2);
    for (std::size_t k = 0; k < n / 2; ++k) {
      const double angle = -2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n);
      twiddles_[k] = {std::cos(angle), std::sin(angle)};
    }
  }

  std::size_t size() const { return n_; }

  void transform(std::span<std::complex<double>> data) const {
    require(data.size() == n_, Errc::shape_mismatch, "FFT input length");
    for (std::size_t i = 0; i < n_; ++i)
      if (i < reversed_[i]) std::swap(data[i], data[reversed_[i]]);
    for (std::size_t len = 2; len <= n_; len <<= 1) {
      const std::size_t half = len / 2;
      const std::size_t stride = n_ / len;
      for (std::size_t start = 0; start < n_; start += len) {
        for (std::size_t k = 0; k < half; ++k) {
          const auto t = twiddles_[k * stride] * data[start + k + half];
          const auto u = data[start + k];
          data[start + k] = u + t;
          data[start + k + half] = u - t;
        }
      }
    }
  }

 private:
  std::size_t n_;
  std::vector<std::size_t> reversed_;
  std::vector<std::complex<double>> twiddles_;
};

}  // namespace weaktag
