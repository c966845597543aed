#pragma once

#include <complex>
#include <span>

namespace pnradar::fftutil {

/// Unnormalized complex DFT of arbitrary length:
///   out[k] = sum_n in[n] * exp(sign * j*2*pi*n*k / len).
/// sign = -1 is the forward transform, +1 the inverse (without the 1/len).
/// Plans are cached per (length, sign) and shared across threads; execution
/// is re-entrant.
void transform(std::span<const std::complex<double>> in, std::span<std::complex<double>> out,
               int sign);

inline void forward(std::span<const std::complex<double>> in,
                    std::span<std::complex<double>> out) {
    transform(in, out, -1);
}

inline void backward(std::span<const std::complex<double>> in,
                     std::span<std::complex<double>> out) {
    transform(in, out, +1);
}

}  // namespace pnradar::fftutil
