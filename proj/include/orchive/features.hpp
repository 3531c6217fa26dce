#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "orchive/audio.hpp"
#include "orchive/fft.hpp"

namespace orchive {

inline constexpr std::size_t kMfccCount = 13;
inline constexpr std::size_t kFrameFeatureCount = 4 + kMfccCount;        // 17
inline constexpr std::size_t kTextureFeatureCount = 2 * kFrameFeatureCount;  // 34
inline constexpr double kDefaultRolloffFraction = 0.85;

enum class WindowFunction { hamming, hann, rectangular };

WindowFunction parse_window_function(const std::string& name);
std::string to_string(WindowFunction w);

/// Analysis framing. Defaults are the best cell of the window/memory sweep.
struct FrameSpec {
    std::size_t window_size = 4096;
    std::size_t hop_size = 2048;
    WindowFunction window = WindowFunction::hamming;

    /// window_size must be a power of two in [256, 16384]; 0 < hop_size <= window_size.
    void validate() const;

    static FrameSpec half_overlap(std::size_t window_size,
                                  WindowFunction window = WindowFunction::hamming) {
        return FrameSpec{window_size, window_size / 2, window};
    }

    friend bool operator==(const FrameSpec&, const FrameSpec&) = default;
};

inline constexpr std::size_t kDefaultMemory = 80;

/// Raised when a signal cannot hold a single analysis window.
class ShortSignalError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

std::vector<double> make_window(WindowFunction w, std::size_t n);

/// floor((samples - window) / hop) + 1, or 0 when samples < window.
std::size_t frame_count(std::size_t samples, const FrameSpec& spec);

/// Frames multiplied by the window function. Throws ShortSignalError.
std::vector<std::vector<double>> frame_signal(const AudioBuffer& buffer, const FrameSpec& spec);

struct SpectralFrame {
    std::vector<double> magnitudes;  // N/2 + 1 bins
    double bin_hz = 0.0;

    double frequency(std::size_t bin) const { return static_cast<double>(bin) * bin_hz; }
    double nyquist_hz() const {
        return magnitudes.empty() ? 0.0 : frequency(magnitudes.size() - 1);
    }
};

/// |FFT| of bins 0..N/2. Throws std::invalid_argument for a non-power-of-two frame.
SpectralFrame magnitude_spectrum(std::span<const double> frame, int sample_rate_hz);

/// Magnitude-weighted mean frequency; 0 for an all-zero spectrum.
double centroid(const SpectralFrame& s);

/// Frequency of the first bin whose cumulative magnitude reaches fraction * total.
double rolloff(const SpectralFrame& s, double fraction = kDefaultRolloffFraction);

/// L2 distance between the unit-normalized magnitude vectors.
double flux(const SpectralFrame& current, const SpectralFrame& previous);

/// Adjacent pairs whose signs differ, zero counted as positive.
std::size_t zero_crossings(std::span<const double> frame);

struct MelConfig {
    std::size_t filter_count = 40;
    double log_floor = 1e-10;
};

/// Triangular mel filters spanning 0 Hz to Nyquist, followed by an
/// orthonormal DCT-II of the log filter energies.
class MelFilterbank {
public:
    MelFilterbank(std::size_t fft_size, int sample_rate_hz, MelConfig config = {});

    std::size_t bin_count() const { return bin_count_; }
    std::size_t filter_count() const { return config_.filter_count; }

    /// Sum of weight * magnitude^2 per filter.
    std::vector<double> energies(std::span<const double> magnitudes) const;
    std::array<double, kMfccCount> mfcc(std::span<const double> magnitudes) const;

    static double hz_to_mel(double hz);
    static double mel_to_hz(double mel);

private:
    struct Filter {
        std::size_t first_bin = 0;
        std::vector<double> weights;
    };

    MelConfig config_;
    std::size_t bin_count_;
    std::vector<Filter> filters_;
    std::vector<double> dct_;  // kMfccCount x filter_count, row-major
};

std::array<double, kMfccCount> mfcc(const SpectralFrame& s, const MelFilterbank& bank);

/// The 17 per-frame features.
struct FeatureVector {
    double centroid_hz = 0.0;
    double rolloff_hz = 0.0;
    double flux = 0.0;
    double zcr = 0.0;
    std::array<double, kMfccCount> mfcc{};

    std::array<double, kFrameFeatureCount> values() const;
    static FeatureVector from_values(std::span<const double, kFrameFeatureCount> v);

    friend bool operator==(const FeatureVector&, const FeatureVector&) = default;
};

const std::array<std::string, kFrameFeatureCount>& frame_feature_names();
/// "mean_<name>" for all 17, then "std_<name>".
std::vector<std::string> texture_feature_names();

/// Mean and population standard deviation of a run of feature frames.
struct TextureVector {
    std::array<double, kFrameFeatureCount> means{};
    std::array<double, kFrameFeatureCount> stddevs{};
    std::size_t memory = 0;

    /// means followed by stddevs (34 values).
    std::vector<double> values() const;
};

TextureVector window_stats(std::span<const FeatureVector> frames);

/// Running texture window: statistics over the last `memory` pushed frames
/// (fewer until the window fills).
class TextureAccumulator {
public:
    explicit TextureAccumulator(std::size_t memory);

    TextureVector push(const FeatureVector& frame);
    void reset();
    std::size_t memory() const { return memory_; }

private:
    std::size_t memory_;
    std::vector<FeatureVector> ring_;
    std::size_t next_ = 0;
    std::size_t filled_ = 0;
};

/// One TextureVector per input frame. Throws std::invalid_argument for empty
/// input or memory == 0.
std::vector<TextureVector> texture_stats(std::span<const FeatureVector> frames, std::size_t memory);

/// Per-frame feature pipeline for one stream. Keeps the previous spectrum
/// for flux, so frames must be fed in order.
class FrameAnalyzer {
public:
    FrameAnalyzer(const FrameSpec& spec, int sample_rate_hz, MelConfig mel = {},
                  double rolloff_fraction = kDefaultRolloffFraction);

    /// raw_frame is the unwindowed frame of window_size samples.
    FeatureVector analyze(std::span<const double> raw_frame);
    void reset();

    const FrameSpec& spec() const { return spec_; }
    int sample_rate_hz() const { return sample_rate_hz_; }

private:
    FrameSpec spec_;
    int sample_rate_hz_;
    double rolloff_fraction_;
    FftPlan plan_;
    MelFilterbank mel_;
    std::vector<double> window_;
    std::vector<double> windowed_;
    SpectralFrame current_;
    SpectralFrame previous_;
};

/// Chunked framing on top of FrameAnalyzer: accepts arbitrary sample blocks
/// and emits a FeatureVector for every completed frame.
class FeatureStream {
public:
    FeatureStream(const FrameSpec& spec, int sample_rate_hz);

    void push(std::span<const double> samples, std::vector<FeatureVector>& out);
    std::size_t frames_emitted() const { return emitted_; }

private:
    FrameAnalyzer analyzer_;
    std::vector<double> pending_;
    std::size_t offset_ = 0;
    std::size_t emitted_ = 0;
};

/// Per-frame features of a whole buffer. Throws ShortSignalError.
std::vector<FeatureVector> extract_frame_features(const AudioBuffer& buffer, const FrameSpec& spec);

/// Statistics over the `memory` frames centred on the middle of the clip
/// (all frames when memory >= frame count).
TextureVector centered_texture(std::span<const FeatureVector> frames, std::size_t memory);

/// Whole-clip mean/std of every frame: the training-instance representation.
TextureVector extract_clip_features(const AudioBuffer& buffer, const FrameSpec& spec);

}  // namespace orchive
