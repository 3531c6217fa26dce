#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

namespace orchive {

inline bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

/// Iterative radix-2 complex FFT with precomputed twiddles and bit-reversal
/// table. One plan per transform size; plans are immutable and shareable.
class FftPlan {
public:
    /// Throws std::invalid_argument if size is not a power of two.
    explicit FftPlan(std::size_t size);

    std::size_t size() const { return size_; }

    /// In-place forward transform (no scaling). data.size() must equal size().
    void forward(std::span<std::complex<double>> data) const;

    /// Magnitudes of bins 0..N/2 of a real input of length N.
    void real_magnitudes(std::span<const double> input, std::span<double> magnitudes) const;

private:
    std::size_t size_;
    std::vector<std::complex<double>> twiddles_;
    std::vector<std::size_t> bit_reverse_;
};

}  // namespace orchive
