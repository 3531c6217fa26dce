#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace orchive {

/// Corpus rate assumed when a duration has to be turned into samples
/// without a buffer at hand.
inline constexpr int kDefaultSampleRate = 44100;

/// Mono signal with samples in [-1, 1]. Immutable once constructed.
class AudioBuffer {
public:
    AudioBuffer() = default;
    /// Throws std::invalid_argument if sample_rate_hz <= 0 or a sample is
    /// outside [-1, 1].
    AudioBuffer(std::vector<double> samples, int sample_rate_hz);

    std::span<const double> samples() const { return samples_; }
    std::size_t size() const { return samples_.size(); }
    bool empty() const { return samples_.empty(); }
    int sample_rate_hz() const { return sample_rate_hz_; }
    double duration_seconds() const {
        return static_cast<double>(samples_.size()) / sample_rate_hz_;
    }
    double operator[](std::size_t i) const { return samples_[i]; }

    friend bool operator==(const AudioBuffer&, const AudioBuffer&) = default;

private:
    std::vector<double> samples_;
    int sample_rate_hz_ = kDefaultSampleRate;
};

class WavError : public std::runtime_error {
public:
    enum class Kind { missing_file, unsupported_codec, empty_audio, malformed, write_failed };

    WavError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    Kind kind() const { return kind_; }

private:
    Kind kind_;
};

/// Header facts of a PCM WAV file.
struct WavInfo {
    int sample_rate_hz = 0;
    int channels = 0;
    int bits_per_sample = 0;
    bool is_float = false;
    std::uint64_t frame_count = 0;

    double duration_seconds() const {
        return sample_rate_hz > 0 ? static_cast<double>(frame_count) / sample_rate_hz : 0.0;
    }
};

/// Sequential reader that mixes to mono while decoding, so long recordings
/// can be processed in bounded chunks.
class WavReader {
public:
    explicit WavReader(const std::filesystem::path& path);

    const WavInfo& info() const { return info_; }
    std::uint64_t frames_remaining() const { return info_.frame_count - position_; }

    /// Seeks to an absolute frame index (clamped to the end).
    void seek(std::uint64_t frame);

    /// Reads up to max_frames mono samples; returns an empty vector at end.
    std::vector<double> read(std::size_t max_frames);

private:
    std::ifstream in_;
    WavInfo info_;
    std::uint64_t data_offset_ = 0;
    std::uint64_t position_ = 0;
    bool clamp_warned_ = false;
};

/// Reads only the header and chunk table.
WavInfo read_wav_info(const std::filesystem::path& path);

/// Loads a whole PCM WAV file (8/16/24-bit integer or 32-bit float, 1-2 channels)
/// mixed down to mono by channel mean.
AudioBuffer load_wav(const std::filesystem::path& path);

/// Writes 16-bit PCM mono using the same 1/32768 scale load_wav decodes with;
/// values are rounded and saturated to the int16 range.
void write_wav16(const std::filesystem::path& path, std::span<const double> samples,
                 int sample_rate_hz);

/// Samples covering [start_s, start_s + dur_s), clamped to the buffer end.
/// Throws std::out_of_range if start_s is at or beyond the end,
/// std::invalid_argument for negative start or non-positive duration.
AudioBuffer slice(const AudioBuffer& buffer, double start_s, double dur_s);

/// Sample index for a time offset; tolerant of binary rounding just below
/// an integer (4.0 s * 44100 must be 176400, not 176399).
std::size_t seconds_to_samples(double seconds, int sample_rate_hz);

}  // namespace orchive
