#include "orchive/fft.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace orchive {

FftPlan::FftPlan(std::size_t size) : size_(size) {
    if (!is_power_of_two(size)) throw std::invalid_argument("FFT size must be a power of two");

    twiddles_.resize(size / 2);
    for (std::size_t k = 0; k < size / 2; ++k) {
        const double angle = -2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(size);
        twiddles_[k] = {std::cos(angle), std::sin(angle)};
    }

    unsigned bits = 0;
    while ((std::size_t{1} << bits) < size) ++bits;
    bit_reverse_.resize(size);
    for (std::size_t i = 0; i < size; ++i) {
        std::size_t r = 0;
        for (unsigned b = 0; b < bits; ++b) r |= ((i >> b) & 1u) << (bits - 1 - b);
        bit_reverse_[i] = r;
    }
}

void FftPlan::forward(std::span<std::complex<double>> data) const {
    if (data.size() != size_) throw std::invalid_argument("FFT input length mismatch");
    for (std::size_t i = 0; i < size_; ++i) {
        const std::size_t j = bit_reverse_[i];
        if (i < j) std::swap(data[i], data[j]);
    }
    for (std::size_t len = 2; len <= size_; len <<= 1) {
        const std::size_t half = len / 2;
        const std::size_t stride = size_ / len;
        for (std::size_t start = 0; start < size_; start += len) {
            for (std::size_t k = 0; k < half; ++k) {
                const std::complex<double> t = twiddles_[k * stride] * data[start + k + half];
                data[start + k + half] = data[start + k] - t;
                data[start + k] += t;
            }
        }
    }
}

void FftPlan::real_magnitudes(std::span<const double> input, std::span<double> magnitudes) const {
    if (input.size() != size_ || magnitudes.size() != size_ / 2 + 1) {
        throw std::invalid_argument("FFT buffer length mismatch");
    }
    // TODO: pack the real input into an N/2 complex transform to halve the work.
    thread_local std::vector<std::complex<double>> scratch;
    scratch.assign(input.begin(), input.end());
    forward(scratch);
    for (std::size_t k = 0; k < magnitudes.size(); ++k) magnitudes[k] = std::abs(scratch[k]);
}

}  // namespace orchive
