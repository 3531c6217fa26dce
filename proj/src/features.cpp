#include "orchive/features.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <numbers>
#include <numeric>

namespace orchive {

WindowFunction parse_window_function(const std::string& name) {
    if (name == "hamming") return WindowFunction::hamming;
    if (name == "hann") return WindowFunction::hann;
    if (name == "rectangular") return WindowFunction::rectangular;
    throw std::invalid_argument("unknown window function: " + name);
}

std::string to_string(WindowFunction w) {
    switch (w) {
        case WindowFunction::hamming: return "hamming";
        case WindowFunction::hann: return "hann";
        case WindowFunction::rectangular: return "rectangular";
    }
    return "hamming";
}

void FrameSpec::validate() const {
    if (!is_power_of_two(window_size) || window_size < 256 || window_size > 16384) {
        throw std::invalid_argument("window size must be a power of two in [256, 16384], got " +
                                    std::to_string(window_size));
    }
    if (hop_size == 0 || hop_size > window_size) {
        throw std::invalid_argument("hop size must be in (0, window size], got " +
                                    std::to_string(hop_size));
    }
}

std::vector<double> make_window(WindowFunction w, std::size_t n) {
    std::vector<double> out(n, 1.0);
    if (w == WindowFunction::rectangular || n < 2) return out;
    const double a0 = w == WindowFunction::hamming ? 0.54 : 0.5;
    const double denom = static_cast<double>(n - 1);
    for (std::size_t i = 0; i < n; ++i) {
        out[i] = a0 - (1.0 - a0) * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / denom);
    }
    return out;
}

std::size_t frame_count(std::size_t samples, const FrameSpec& spec) {
    if (samples < spec.window_size || spec.hop_size == 0) return 0;
    return (samples - spec.window_size) / spec.hop_size + 1;
}

std::vector<std::vector<double>> frame_signal(const AudioBuffer& buffer, const FrameSpec& spec) {
    spec.validate();
    const std::size_t count = frame_count(buffer.size(), spec);
    if (count == 0) throw ShortSignalError("signal shorter than one analysis window");
    const std::vector<double> window = make_window(spec.window, spec.window_size);
    const auto samples = buffer.samples();
    std::vector<std::vector<double>> frames(count, std::vector<double>(spec.window_size));
    for (std::size_t f = 0; f < count; ++f) {
        const std::size_t start = f * spec.hop_size;
        for (std::size_t i = 0; i < spec.window_size; ++i) frames[f][i] = samples[start + i] * window[i];
    }
    return frames;
}

SpectralFrame magnitude_spectrum(std::span<const double> frame, int sample_rate_hz) {
    if (!is_power_of_two(frame.size())) {
        throw std::invalid_argument("spectrum frame length must be a power of two");
    }
    thread_local std::map<std::size_t, std::unique_ptr<FftPlan>> plans;
    auto& plan = plans[frame.size()];
    if (!plan) plan = std::make_unique<FftPlan>(frame.size());

    SpectralFrame out;
    out.magnitudes.resize(frame.size() / 2 + 1);
    out.bin_hz = static_cast<double>(sample_rate_hz) / static_cast<double>(frame.size());
    plan->real_magnitudes(frame, out.magnitudes);
    return out;
}

double centroid(const SpectralFrame& s) {
    double weighted = 0.0;
    double total = 0.0;
    for (std::size_t i = 0; i < s.magnitudes.size(); ++i) {
        weighted += s.frequency(i) * s.magnitudes[i];
        total += s.magnitudes[i];
    }
    return total > 0.0 ? weighted / total : 0.0;
}

double rolloff(const SpectralFrame& s, double fraction) {
    if (!(fraction > 0.0 && fraction < 1.0)) {
        throw std::invalid_argument("rolloff fraction must be in (0, 1)");
    }
    const double total = std::accumulate(s.magnitudes.begin(), s.magnitudes.end(), 0.0);
    if (total <= 0.0) return 0.0;
    const double target = fraction * total;
    double cumulative = 0.0;
    for (std::size_t i = 0; i < s.magnitudes.size(); ++i) {
        cumulative += s.magnitudes[i];
        if (cumulative >= target) return s.frequency(i);
    }
    return s.nyquist_hz();
}

double flux(const SpectralFrame& current, const SpectralFrame& previous) {
    if (current.magnitudes.size() != previous.magnitudes.size()) {
        throw std::invalid_argument("flux: spectra have different bin counts");
    }
    const auto norm = [](const std::vector<double>& m) {
        double sq = 0.0;
        for (double v : m) sq += v * v;
        return std::sqrt(sq);
    };
    const double nc = norm(current.magnitudes);
    const double np = norm(previous.magnitudes);
    const double sc = nc > 0.0 ? 1.0 / nc : 0.0;
    const double sp = np > 0.0 ? 1.0 / np : 0.0;
    double sq = 0.0;
    for (std::size_t i = 0; i < current.magnitudes.size(); ++i) {
        const double d = current.magnitudes[i] * sc - previous.magnitudes[i] * sp;
        sq += d * d;
    }
    return std::sqrt(sq);
}

std::size_t zero_crossings(std::span<const double> frame) {
    std::size_t count = 0;
    for (std::size_t i = 1; i < frame.size(); ++i) {
        if ((frame[i] >= 0.0) != (frame[i - 1] >= 0.0)) ++count;
    }
    return count;
}

double MelFilterbank::hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }

double MelFilterbank::mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

MelFilterbank::MelFilterbank(std::size_t fft_size, int sample_rate_hz, MelConfig config)
    : config_(config), bin_count_(fft_size / 2 + 1) {
    if (!is_power_of_two(fft_size)) throw std::invalid_argument("mel: FFT size must be a power of two");
    if (config_.filter_count < kMfccCount) {
        throw std::invalid_argument("mel: need at least as many filters as coefficients");
    }
    const std::size_t m = config_.filter_count;
    const double bin_hz = static_cast<double>(sample_rate_hz) / static_cast<double>(fft_size);
    const double top_mel = hz_to_mel(sample_rate_hz / 2.0);

    std::vector<double> edges(m + 2);
    for (std::size_t i = 0; i < m + 2; ++i) {
        edges[i] = mel_to_hz(top_mel * static_cast<double>(i) / static_cast<double>(m + 1));
    }

    filters_.resize(m);
    for (std::size_t f = 0; f < m; ++f) {
        const double lo = edges[f], mid = edges[f + 1], hi = edges[f + 2];
        Filter& filter = filters_[f];
        filter.first_bin = bin_count_;
        for (std::size_t k = 0; k < bin_count_; ++k) {
            const double hz = static_cast<double>(k) * bin_hz;
            double w = 0.0;
            if (hz > lo && hz <= mid) {
                w = (hz - lo) / (mid - lo);
            } else if (hz > mid && hz < hi) {
                w = (hi - hz) / (hi - mid);
            }
            if (w <= 0.0) {
                if (filter.first_bin != bin_count_) break;
                continue;
            }
            if (filter.first_bin == bin_count_) filter.first_bin = k;
            filter.weights.push_back(w);
        }
        if (filter.first_bin == bin_count_) filter.first_bin = 0;
    }

    dct_.resize(kMfccCount * m);
    const double scale0 = std::sqrt(1.0 / static_cast<double>(m));
    const double scale = std::sqrt(2.0 / static_cast<double>(m));
    for (std::size_t k = 0; k < kMfccCount; ++k) {
        for (std::size_t n = 0; n < m; ++n) {
            dct_[k * m + n] = (k == 0 ? scale0 : scale) *
                              std::cos(std::numbers::pi * static_cast<double>(k) *
                                       (static_cast<double>(n) + 0.5) / static_cast<double>(m));
        }
    }
}

std::vector<double> MelFilterbank::energies(std::span<const double> magnitudes) const {
    if (magnitudes.size() != bin_count_) throw std::invalid_argument("mel: bin count mismatch");
    std::vector<double> out(filters_.size(), 0.0);
    for (std::size_t f = 0; f < filters_.size(); ++f) {
        const Filter& filter = filters_[f];
        double e = 0.0;
        for (std::size_t i = 0; i < filter.weights.size(); ++i) {
            const double m = magnitudes[filter.first_bin + i];
            e += filter.weights[i] * m * m;
        }
        out[f] = e;
    }
    return out;
}

std::array<double, kMfccCount> MelFilterbank::mfcc(std::span<const double> magnitudes) const {
    std::vector<double> log_energy = energies(magnitudes);
    for (double& e : log_energy) e = std::log(e + config_.log_floor);
    const std::size_t m = filters_.size();
    std::array<double, kMfccCount> out{};
    for (std::size_t k = 0; k < kMfccCount; ++k) {
        double acc = 0.0;
        for (std::size_t n = 0; n < m; ++n) acc += dct_[k * m + n] * log_energy[n];
        out[k] = acc;
    }
    return out;
}

std::array<double, kMfccCount> mfcc(const SpectralFrame& s, const MelFilterbank& bank) {
    return bank.mfcc(s.magnitudes);
}

std::array<double, kFrameFeatureCount> FeatureVector::values() const {
    std::array<double, kFrameFeatureCount> v{};
    v[0] = centroid_hz;
    v[1] = rolloff_hz;
    v[2] = flux;
    v[3] = zcr;
    std::copy(mfcc.begin(), mfcc.end(), v.begin() + 4);
    return v;
}

FeatureVector FeatureVector::from_values(std::span<const double, kFrameFeatureCount> v) {
    FeatureVector f;
    f.centroid_hz = v[0];
    f.rolloff_hz = v[1];
    f.flux = v[2];
    f.zcr = v[3];
    std::copy(v.begin() + 4, v.end(), f.mfcc.begin());
    return f;
}

const std::array<std::string, kFrameFeatureCount>& frame_feature_names() {
    static const std::array<std::string, kFrameFeatureCount> names = [] {
        std::array<std::string, kFrameFeatureCount> n;
        n[0] = "centroid";
        n[1] = "rolloff";
        n[2] = "flux";
        n[3] = "zcr";
        for (std::size_t i = 0; i < kMfccCount; ++i) n[4 + i] = "mfcc" + std::to_string(i);
        return n;
    }();
    return names;
}

std::vector<std::string> texture_feature_names() {
    std::vector<std::string> out;
    out.reserve(kTextureFeatureCount);
    for (const auto& n : frame_feature_names()) out.push_back("mean_" + n);
    for (const auto& n : frame_feature_names()) out.push_back("std_" + n);
    return out;
}

std::vector<double> TextureVector::values() const {
    std::vector<double> v(means.begin(), means.end());
    v.insert(v.end(), stddevs.begin(), stddevs.end());
    return v;
}

TextureVector window_stats(std::span<const FeatureVector> frames) {
    if (frames.empty()) throw std::invalid_argument("texture statistics of an empty window");
    TextureVector out;
    out.memory = frames.size();
    const double n = static_cast<double>(frames.size());
    std::vector<std::array<double, kFrameFeatureCount>> rows;
    rows.reserve(frames.size());
    for (const auto& f : frames) rows.push_back(f.values());

    for (std::size_t d = 0; d < kFrameFeatureCount; ++d) {
        const double first = rows[0][d];
        bool constant = true;
        double sum = 0.0;
        for (const auto& r : rows) {
            sum += r[d];
            constant = constant && r[d] == first;
        }
        if (constant) {
            out.means[d] = first;
            out.stddevs[d] = 0.0;
            continue;
        }
        const double mean = sum / n;
        double sq = 0.0;
        for (const auto& r : rows) sq += (r[d] - mean) * (r[d] - mean);
        out.means[d] = mean;
        out.stddevs[d] = std::sqrt(sq / n);
    }
    return out;
}

TextureAccumulator::TextureAccumulator(std::size_t memory) : memory_(memory) {
    if (memory_ == 0) throw std::invalid_argument("texture memory must be >= 1");
    ring_.resize(memory_);
}

TextureVector TextureAccumulator::push(const FeatureVector& frame) {
    ring_[next_] = frame;
    next_ = (next_ + 1) % memory_;
    filled_ = std::min(filled_ + 1, memory_);
    // Statistics are order-independent, so the ring can be summarised as-is.
    return window_stats(std::span<const FeatureVector>(ring_.data(), filled_ == memory_ ? memory_ : filled_));
}

void TextureAccumulator::reset() {
    next_ = 0;
    filled_ = 0;
}

std::vector<TextureVector> texture_stats(std::span<const FeatureVector> frames, std::size_t memory) {
    if (frames.empty()) throw std::invalid_argument("texture_stats: empty input");
    TextureAccumulator acc(memory);
    std::vector<TextureVector> out;
    out.reserve(frames.size());
    for (const auto& f : frames) out.push_back(acc.push(f));
    return out;
}

FrameAnalyzer::FrameAnalyzer(const FrameSpec& spec, int sample_rate_hz, MelConfig mel,
                             double rolloff_fraction)
    : spec_((spec.validate(), spec)),
      sample_rate_hz_(sample_rate_hz),
      rolloff_fraction_(rolloff_fraction),
      plan_(spec.window_size),
      mel_(spec.window_size, sample_rate_hz, mel),
      window_(make_window(spec.window, spec.window_size)),
      windowed_(spec.window_size) {
    current_.bin_hz = previous_.bin_hz =
        static_cast<double>(sample_rate_hz) / static_cast<double>(spec.window_size);
    reset();
}

void FrameAnalyzer::reset() {
    current_.magnitudes.assign(spec_.window_size / 2 + 1, 0.0);
    previous_.magnitudes.assign(spec_.window_size / 2 + 1, 0.0);
}

FeatureVector FrameAnalyzer::analyze(std::span<const double> raw_frame) {
    if (raw_frame.size() != spec_.window_size) throw std::invalid_argument("frame length mismatch");
    FeatureVector out;
    out.zcr = static_cast<double>(zero_crossings(raw_frame));
    for (std::size_t i = 0; i < raw_frame.size(); ++i) windowed_[i] = raw_frame[i] * window_[i];
    plan_.real_magnitudes(windowed_, current_.magnitudes);
    out.centroid_hz = centroid(current_);
    out.rolloff_hz = rolloff(current_, rolloff_fraction_);
    out.flux = flux(current_, previous_);
    out.mfcc = mel_.mfcc(current_.magnitudes);
    std::swap(current_, previous_);
    return out;
}

FeatureStream::FeatureStream(const FrameSpec& spec, int sample_rate_hz)
    : analyzer_(spec, sample_rate_hz) {}

void FeatureStream::push(std::span<const double> samples, std::vector<FeatureVector>& out) {
    pending_.insert(pending_.end(), samples.begin(), samples.end());
    const std::size_t window = analyzer_.spec().window_size;
    const std::size_t hop = analyzer_.spec().hop_size;
    while (pending_.size() - offset_ >= window) {
        out.push_back(analyzer_.analyze(std::span<const double>(pending_.data() + offset_, window)));
        offset_ += hop;
        ++emitted_;
    }
    if (offset_ > 0 && offset_ >= pending_.size() / 2) {
        const std::size_t keep_from = std::min(offset_, pending_.size());
        pending_.erase(pending_.begin(), pending_.begin() + static_cast<std::ptrdiff_t>(keep_from));
        offset_ -= keep_from;
    }
}

std::vector<FeatureVector> extract_frame_features(const AudioBuffer& buffer, const FrameSpec& spec) {
    spec.validate();
    const std::size_t count = frame_count(buffer.size(), spec);
    if (count == 0) throw ShortSignalError("signal shorter than one analysis window");
    FrameAnalyzer analyzer(spec, buffer.sample_rate_hz());
    std::vector<FeatureVector> out;
    out.reserve(count);
    const auto samples = buffer.samples();
    for (std::size_t f = 0; f < count; ++f) {
        out.push_back(analyzer.analyze(samples.subspan(f * spec.hop_size, spec.window_size)));
    }
    return out;
}

TextureVector centered_texture(std::span<const FeatureVector> frames, std::size_t memory) {
    if (frames.empty()) throw std::invalid_argument("centered_texture: empty input");
    if (memory == 0) throw std::invalid_argument("texture memory must be >= 1");
    if (memory >= frames.size()) return window_stats(frames);
    const std::size_t start = (frames.size() - memory) / 2;
    return window_stats(frames.subspan(start, memory));
}

TextureVector extract_clip_features(const AudioBuffer& buffer, const FrameSpec& spec) {
    return window_stats(extract_frame_features(buffer, spec));
}

}  // namespace orchive
