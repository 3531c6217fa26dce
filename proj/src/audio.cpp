#include "orchive/audio.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>

#include "orchive/util.hpp"

namespace orchive {

namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

std::uint32_t read_u32le(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint16_t read_u16le(const unsigned char* p) {
    return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

void put_u32le(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_u16le(std::string& out, std::uint16_t v) {
    out.push_back(static_cast<char>(v & 0xFF));
    out.push_back(static_cast<char>((v >> 8) & 0xFF));
}

struct ParsedHeader {
    WavInfo info;
    std::uint64_t data_offset = 0;
};

ParsedHeader parse_header(std::ifstream& in, const std::filesystem::path& path) {
    const std::string name = path.string();
    in.seekg(0, std::ios::end);
    const auto file_size = static_cast<std::uint64_t>(in.tellg());
    in.seekg(0);

    std::array<unsigned char, 12> riff{};
    if (!in.read(reinterpret_cast<char*>(riff.data()), riff.size()) ||
        std::memcmp(riff.data(), "RIFF", 4) != 0 || std::memcmp(riff.data() + 8, "WAVE", 4) != 0) {
        throw WavError(WavError::Kind::malformed, "not a RIFF/WAVE file: " + name);
    }

    ParsedHeader header;
    bool have_fmt = false;
    std::uint16_t format = 0;
    std::uint16_t block_align = 0;
    for (;;) {
        std::array<unsigned char, 8> chunk{};
        if (!in.read(reinterpret_cast<char*>(chunk.data()), chunk.size())) break;
        const std::uint32_t size = read_u32le(chunk.data() + 4);
        const auto body = static_cast<std::uint64_t>(in.tellg());

        if (std::memcmp(chunk.data(), "fmt ", 4) == 0) {
            if (size < 16) throw WavError(WavError::Kind::malformed, "short fmt chunk: " + name);
            std::vector<unsigned char> fmt(size);
            if (!in.read(reinterpret_cast<char*>(fmt.data()), size)) {
                throw WavError(WavError::Kind::malformed, "truncated fmt chunk: " + name);
            }
            format = read_u16le(fmt.data());
            header.info.channels = read_u16le(fmt.data() + 2);
            header.info.sample_rate_hz = static_cast<int>(read_u32le(fmt.data() + 4));
            block_align = read_u16le(fmt.data() + 12);
            header.info.bits_per_sample = read_u16le(fmt.data() + 14);
            if (format == kFormatExtensible) {
                if (size < 26) throw WavError(WavError::Kind::malformed, "short extensible fmt: " + name);
                format = read_u16le(fmt.data() + 24);
            }
            have_fmt = true;
        } else if (std::memcmp(chunk.data(), "data", 4) == 0) {
            if (!have_fmt) throw WavError(WavError::Kind::malformed, "data before fmt chunk: " + name);
            if (format != kFormatPcm && format != kFormatFloat) {
                throw WavError(WavError::Kind::unsupported_codec,
                               "unsupported WAV codec (format tag " + std::to_string(format) +
                                   "): " + name);
            }
            header.info.is_float = format == kFormatFloat;
            const int bits = header.info.bits_per_sample;
            const bool bits_ok = header.info.is_float ? bits == 32
                                                      : (bits == 8 || bits == 16 || bits == 24 || bits == 32);
            if (!bits_ok) {
                throw WavError(WavError::Kind::unsupported_codec,
                               "unsupported sample width " + std::to_string(bits) + ": " + name);
            }
            if (header.info.channels < 1 || header.info.channels > 2) {
                throw WavError(WavError::Kind::unsupported_codec,
                               "unsupported channel count " + std::to_string(header.info.channels) +
                                   ": " + name);
            }
            if (header.info.sample_rate_hz <= 0) {
                throw WavError(WavError::Kind::malformed, "invalid sample rate: " + name);
            }
            const std::uint64_t frame_bytes =
                static_cast<std::uint64_t>(header.info.channels) * (bits / 8);
            if (block_align != 0 && block_align != frame_bytes) {
                throw WavError(WavError::Kind::malformed, "inconsistent block alignment: " + name);
            }
            // Truncated recordings keep whatever complete frames are present.
            const std::uint64_t available = std::min<std::uint64_t>(size, file_size - body);
            header.info.frame_count = available / frame_bytes;
            header.data_offset = body;
            if (header.info.frame_count == 0) {
                throw WavError(WavError::Kind::empty_audio, "WAV file has no audio frames: " + name);
            }
            return header;
        }
        in.seekg(static_cast<std::streamoff>(body + size + (size & 1u)));
    }
    if (!have_fmt) throw WavError(WavError::Kind::malformed, "missing fmt chunk: " + name);
    throw WavError(WavError::Kind::malformed, "missing data chunk: " + name);
}

std::ifstream open_input(const std::filesystem::path& path) {
    std::error_code ec;
    if (!std::filesystem::is_regular_file(path, ec)) {
        throw WavError(WavError::Kind::missing_file, "no such file: " + path.string());
    }
    std::ifstream in(path, std::ios::binary);
    if (!in) throw WavError(WavError::Kind::missing_file, "cannot open: " + path.string());
    return in;
}

}  // namespace

AudioBuffer::AudioBuffer(std::vector<double> samples, int sample_rate_hz)
    : samples_(std::move(samples)), sample_rate_hz_(sample_rate_hz) {
    if (sample_rate_hz_ <= 0) throw std::invalid_argument("sample rate must be positive");
    for (double s : samples_) {
        if (!(s >= -1.0 && s <= 1.0)) throw std::invalid_argument("sample outside [-1, 1]");
    }
}

WavReader::WavReader(const std::filesystem::path& path) : in_(open_input(path)) {
    const ParsedHeader header = parse_header(in_, path);
    info_ = header.info;
    data_offset_ = header.data_offset;
    in_.seekg(static_cast<std::streamoff>(data_offset_));
}

void WavReader::seek(std::uint64_t frame) {
    position_ = std::min(frame, info_.frame_count);
    const std::uint64_t frame_bytes =
        static_cast<std::uint64_t>(info_.channels) * (info_.bits_per_sample / 8);
    in_.clear();
    in_.seekg(static_cast<std::streamoff>(data_offset_ + position_ * frame_bytes));
}

std::vector<double> WavReader::read(std::size_t max_frames) {
    const std::size_t frames =
        static_cast<std::size_t>(std::min<std::uint64_t>(max_frames, frames_remaining()));
    std::vector<double> out(frames);
    if (frames == 0) return out;

    const int channels = info_.channels;
    const int bytes = info_.bits_per_sample / 8;
    std::vector<unsigned char> raw(frames * static_cast<std::size_t>(channels * bytes));
    if (!in_.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()))) {
        throw WavError(WavError::Kind::malformed, "short read in WAV data");
    }

    bool clamped = false;
    const auto decode = [&](const unsigned char* p) -> double {
        if (info_.is_float) {
            float f;
            const std::uint32_t bits = read_u32le(p);
            std::memcpy(&f, &bits, sizeof f);
            double v = f;
            if (!(v >= -1.0 && v <= 1.0)) {
                clamped = true;
                v = std::isnan(v) ? 0.0 : std::clamp(v, -1.0, 1.0);
            }
            return v;
        }
        switch (bytes) {
            case 1:
                return (static_cast<int>(p[0]) - 128) / 128.0;
            case 2:
                return static_cast<std::int16_t>(read_u16le(p)) / 32768.0;
            case 3: {
                std::int32_t v = static_cast<std::int32_t>(p[0] | (p[1] << 8) | (p[2] << 16));
                if (v & 0x800000) v -= 0x1000000;
                return v / 8388608.0;
            }
            default:
                return static_cast<std::int32_t>(read_u32le(p)) / 2147483648.0;
        }
    };

    const unsigned char* p = raw.data();
    for (std::size_t i = 0; i < frames; ++i) {
        double sum = 0.0;
        for (int c = 0; c < channels; ++c, p += bytes) sum += decode(p);
        out[i] = sum / channels;
    }
    if (clamped && !clamp_warned_) {
        clamp_warned_ = true;
        log_warning("float WAV samples outside [-1, 1] were clamped");
    }
    position_ += frames;
    return out;
}

WavInfo read_wav_info(const std::filesystem::path& path) {
    std::ifstream in = open_input(path);
    return parse_header(in, path).info;
}

AudioBuffer load_wav(const std::filesystem::path& path) {
    WavReader reader(path);
    std::vector<double> samples = reader.read(static_cast<std::size_t>(reader.info().frame_count));
    return AudioBuffer(std::move(samples), reader.info().sample_rate_hz);
}

void write_wav16(const std::filesystem::path& path, std::span<const double> samples,
                 int sample_rate_hz) {
    if (sample_rate_hz <= 0) throw std::invalid_argument("sample rate must be positive");
    const auto data_bytes = static_cast<std::uint32_t>(samples.size() * 2);
    std::string out;
    out.reserve(44 + data_bytes);
    out += "RIFF";
    put_u32le(out, 36 + data_bytes);
    out += "WAVE";
    out += "fmt ";
    put_u32le(out, 16);
    put_u16le(out, kFormatPcm);
    put_u16le(out, 1);
    put_u32le(out, static_cast<std::uint32_t>(sample_rate_hz));
    put_u32le(out, static_cast<std::uint32_t>(sample_rate_hz) * 2);
    put_u16le(out, 2);
    put_u16le(out, 16);
    out += "data";
    put_u32le(out, data_bytes);
    for (double s : samples) {
        const double scaled = std::clamp(std::round(s * 32768.0), -32768.0, 32767.0);
        put_u16le(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(scaled)));
    }

    std::ofstream file(path, std::ios::binary | std::ios::trunc);
    if (!file || !file.write(out.data(), static_cast<std::streamsize>(out.size()))) {
        throw WavError(WavError::Kind::write_failed, "cannot write WAV: " + path.string());
    }
}

std::size_t seconds_to_samples(double seconds, int sample_rate_hz) {
    if (seconds <= 0.0) return 0;
    return static_cast<std::size_t>(std::floor(seconds * sample_rate_hz + 1e-7));
}

AudioBuffer slice(const AudioBuffer& buffer, double start_s, double dur_s) {
    if (start_s < 0.0) throw std::invalid_argument("slice start must be >= 0");
    if (!(dur_s > 0.0)) throw std::invalid_argument("slice duration must be > 0");
    const int sr = buffer.sample_rate_hz();
    const std::size_t begin = seconds_to_samples(start_s, sr);
    if (begin >= buffer.size()) throw std::out_of_range("slice start beyond buffer end");
    const std::size_t end =
        std::min(buffer.size(), std::max(begin + 1, seconds_to_samples(start_s + dur_s, sr)));
    auto s = buffer.samples();
    return AudioBuffer(std::vector<double>(s.begin() + static_cast<std::ptrdiff_t>(begin),
                                           s.begin() + static_cast<std::ptrdiff_t>(end)),
                       sr);
}

}  // namespace orchive
