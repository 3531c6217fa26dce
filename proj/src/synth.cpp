#include "orchive/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "orchive/audio.hpp"

namespace orchive {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr const char* kSyntheticTimestamp = "1970-01-01T00:00:00Z";

double rms(std::span<const double> x) {
    if (x.empty()) return 0.0;
    double sq = 0.0;
    for (double v : x) sq += v * v;
    return std::sqrt(sq / static_cast<double>(x.size()));
}

void scale_to_rms(std::vector<double>& x, double target) {
    const double r = rms(x);
    if (r <= 0.0) return;
    const double g = target / r;
    for (double& v : x) v *= g;
}

double db_to_gain(double db) { return std::pow(10.0, db / 20.0); }

// Raised-cosine fade in/out over `ramp` samples each.
void apply_ramps(std::vector<double>& x, std::size_t ramp) {
    ramp = std::min(ramp, x.size() / 2);
    for (std::size_t i = 0; i < ramp; ++i) {
        const double g = 0.5 - 0.5 * std::cos(std::numbers::pi * static_cast<double>(i) / static_cast<double>(ramp));
        x[i] *= g;
        x[x.size() - 1 - i] *= g;
    }
}

// Adds sum_h amp[h-1] * sin(h * phase) using the Chebyshev recurrence, so each
// sample costs one sin/cos pair regardless of the harmonic count.
void add_harmonics(double phase, std::span<const double> amps, double gain, double& out) {
    const double s1 = std::sin(phase);
    const double c2 = 2.0 * std::cos(phase);
    double prev = 0.0, cur = s1, acc = 0.0;
    for (double a : amps) {
        acc += a * cur;
        const double next = c2 * cur - prev;
        prev = cur;
        cur = next;
    }
    out += gain * acc;
}

struct CallShape {
    double base_hz;
    std::size_t harmonics;
    double tilt;
};

double contour_hz(CallContour c, double t, double base, double sweeps) {
    switch (c) {
        case CallContour::rising: return base * (1.0 + 0.6 * t);
        case CallContour::falling: return base * (1.0 - 0.3 * t);
        case CallContour::flat_harmonic: return base;
        case CallContour::two_part:
        case CallContour::pulsed: {
            // Smooth step to the upper part at the midpoint.
            const double s = 0.5 + 0.5 * std::tanh((t - 0.5) * 40.0);
            return base * (1.0 + 0.35 * s);
        }
        case CallContour::chirp: {
            const double frac = t * sweeps - std::floor(t * sweeps);
            return base * (1.0 + 0.6 * frac);
        }
    }
    return base;
}

// Each template gets its own pitch range and spectral tilt so that frame
// statistics (which ignore temporal order) can still tell them apart.
// two_part and pulsed share both and differ only in amplitude modulation.
CallShape draw_shape(CallContour c, Rng& rng) {
    CallShape s{};
    s.harmonics = 6 + static_cast<std::size_t>(rng.below(5));
    switch (c) {
        case CallContour::rising:
            s.base_hz = rng.uniform(550.0, 650.0);
            s.tilt = rng.uniform(1.4, 1.8);
            break;
        case CallContour::falling:
            s.base_hz = rng.uniform(1700.0, 1900.0);
            s.tilt = rng.uniform(0.6, 0.9);
            break;
        case CallContour::flat_harmonic:
            s.base_hz = rng.uniform(1000.0, 1200.0);
            s.tilt = rng.uniform(0.4, 0.7);
            s.harmonics += 4;
            break;
        case CallContour::two_part:
        case CallContour::pulsed:
            s.base_hz = rng.uniform(850.0, 1000.0);
            s.tilt = rng.uniform(1.0, 1.3);
            break;
        case CallContour::chirp:
            s.base_hz = rng.uniform(1100.0, 1300.0);
            s.tilt = rng.uniform(1.0, 1.3);
            break;
    }
    return s;
}

struct Vowel {
    double f1, f2, f3;
};

constexpr std::array<Vowel, 5> kVowels{{{730, 1090, 2440}, {270, 2290, 3010}, {530, 1840, 2480},
                                        {660, 1720, 2410}, {300, 870, 2240}}};

double formant_gain(double hz, const Vowel& v) {
    const auto peak = [hz](double f, double bw, double g) {
        const double d = (hz - f) / bw;
        return g / (1.0 + d * d);
    };
    return peak(v.f1, 90.0, 1.0) + peak(v.f2, 110.0, 0.6) + peak(v.f3, 140.0, 0.3);
}

void clamp_peak(std::vector<double>& x, double limit = 0.95) {
    double peak = 0.0;
    for (double v : x) peak = std::max(peak, std::abs(v));
    if (peak > limit) {
        const double g = limit / peak;
        for (double& v : x) v *= g;
    }
}

std::string indexed_name(const std::string& prefix, std::size_t i) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%03zu", i);
    return prefix + "_" + buf;
}

}  // namespace

std::string to_string(CallContour c) {
    switch (c) {
        case CallContour::rising: return "rising";
        case CallContour::falling: return "falling";
        case CallContour::flat_harmonic: return "flat_harmonic";
        case CallContour::two_part: return "two_part";
        case CallContour::pulsed: return "pulsed";
        case CallContour::chirp: return "chirp";
    }
    return "rising";
}

const std::vector<std::string>& call_type_labels() {
    static const std::vector<std::string> labels{"N1", "N3", "N4", "N7", "N9", "N47"};
    return labels;
}

std::vector<double> synthesize_background(std::size_t samples, int sample_rate_hz, double rms_level, Rng& rng) {
    std::vector<double> out(samples);
    const double pole = rng.uniform(0.90, 0.995);
    const double white_mix = rng.uniform(0.05, 0.3);
    double state = 0.0;
    for (auto& v : out) {
        const double w = rng.normal();
        state = pole * state + (1.0 - pole) * w * 8.0;
        v = state + white_mix * w;
    }
    if (rng.uniform() < 0.5) {
        // Engine-like hum: low fundamental with a few decaying harmonics.
        const double f0 = rng.uniform(40.0, 120.0);
        const double level = rng.uniform(0.3, 1.0) * rms(out);
        std::vector<double> amps(5);
        for (std::size_t h = 0; h < amps.size(); ++h) amps[h] = level / static_cast<double>(h + 1);
        const double phase0 = rng.uniform(0.0, kTwoPi);
        for (std::size_t i = 0; i < samples; ++i) {
            add_harmonics(phase0 + kTwoPi * f0 * static_cast<double>(i) / sample_rate_hz, amps, 1.0, out[i]);
        }
    }
    scale_to_rms(out, rms_level);
    return out;
}

std::vector<double> synthesize_call(CallContour contour, std::size_t samples, int sample_rate_hz, Rng& rng) {
    const CallShape shape = draw_shape(contour, rng);
    const double sweeps = rng.uniform(3.0, 4.0);
    const double vibrato_rate = rng.uniform(4.0, 7.0);
    const double vibrato_phase = rng.uniform(0.0, kTwoPi);
    const double pulse_rate = rng.uniform(25.0, 35.0);
    const double nyquist_guard = 0.45 * sample_rate_hz;

    std::vector<double> out(samples, 0.0);
    std::vector<double> amps(shape.harmonics);
    double phase = rng.uniform(0.0, kTwoPi);
    const double n = static_cast<double>(std::max<std::size_t>(samples, 1));
    for (std::size_t i = 0; i < samples; ++i) {
        const double t = static_cast<double>(i) / n;
        const double seconds = static_cast<double>(i) / sample_rate_hz;
        const double f0 = contour_hz(contour, t, shape.base_hz, sweeps) *
                          (1.0 + 0.01 * std::sin(kTwoPi * vibrato_rate * seconds + vibrato_phase));
        phase += kTwoPi * f0 / sample_rate_hz;
        if (phase > kTwoPi) phase -= kTwoPi;
        for (std::size_t h = 0; h < amps.size(); ++h) {
            const double hz = f0 * static_cast<double>(h + 1);
            amps[h] = hz < nyquist_guard ? std::pow(static_cast<double>(h + 1), -shape.tilt) : 0.0;
        }
        double gain = 1.0;
        if (contour == CallContour::pulsed) {
            gain = 1.0 - 0.85 * (0.5 + 0.5 * std::cos(kTwoPi * pulse_rate * seconds));
        }
        add_harmonics(phase, amps, gain, out[i]);
    }
    apply_ramps(out, static_cast<std::size_t>(0.02 * sample_rate_hz));
    scale_to_rms(out, 1.0);
    return out;
}

std::vector<double> synthesize_voice(std::size_t samples, int sample_rate_hz, Rng& rng) {
    const double f0_base = rng.uniform(100.0, 220.0);
    const double syllable_rate = rng.uniform(3.0, 6.0);
    const double intonation_phase = rng.uniform(0.0, kTwoPi);
    const std::size_t syllable_len =
        std::max<std::size_t>(1, static_cast<std::size_t>(sample_rate_hz / syllable_rate));
    const double duration = static_cast<double>(samples) / sample_rate_hz;

    std::vector<double> out(samples, 0.0);
    std::vector<double> amps;
    Vowel vowel = kVowels[0];
    double phase = 0.0;
    for (std::size_t i = 0; i < samples; ++i) {
        const double seconds = static_cast<double>(i) / sample_rate_hz;
        const std::size_t in_syllable = i % syllable_len;
        const double f0 = f0_base * (1.0 + 0.1 * std::sin(kTwoPi * 0.5 * seconds + intonation_phase) -
                                     0.1 * seconds / std::max(duration, 1e-9));
        if (in_syllable == 0) {
            vowel = kVowels[rng.below(kVowels.size())];
            const std::size_t count = static_cast<std::size_t>(4500.0 / f0);
            amps.assign(count, 0.0);
            for (std::size_t h = 0; h < count; ++h) {
                amps[h] = formant_gain(f0 * static_cast<double>(h + 1), vowel) / std::sqrt(static_cast<double>(h + 1));
            }
        }
        phase += kTwoPi * f0 / sample_rate_hz;
        if (phase > kTwoPi) phase -= kTwoPi;
        // Voiced for the first 75% of each syllable with a sin^2 envelope.
        const double pos = static_cast<double>(in_syllable) / static_cast<double>(syllable_len);
        const double env = pos < 0.75 ? std::pow(std::sin(std::numbers::pi * pos / 0.75), 2.0) : 0.0;
        if (env > 0.0) add_harmonics(phase, amps, env, out[i]);
        // Weak breath noise between voiced parts.
        out[i] += 0.02 * rng.normal() * (1.0 - env);
    }
    scale_to_rms(out, 1.0);
    return out;
}

std::vector<double> synthesize_clip(const std::string& label, const SyntheticCorpusSpec& spec, Rng& rng) {
    const int sr = spec.sample_rate_hz;
    const double body_s = rng.uniform(spec.min_duration_s, spec.max_duration_s);
    const auto body = static_cast<std::size_t>(body_s * sr);

    if (label == "background") {
        const double level = db_to_gain(rng.uniform(-55.0, -25.0));
        auto out = synthesize_background(body, sr, level, rng);
        clamp_peak(out);
        return out;
    }

    std::vector<double> signal;
    if (label == "voice") {
        signal = synthesize_voice(body, sr, rng);
    } else if (label == "orca") {
        signal = synthesize_call(kAllContours[rng.below(kAllContours.size())], body, sr, rng);
    } else {
        const auto& names = call_type_labels();
        const auto it = std::find(names.begin(), names.end(), label);
        if (it == names.end()) throw std::invalid_argument("no synthesizer for label: " + label);
        signal = synthesize_call(kAllContours[static_cast<std::size_t>(it - names.begin())], body, sr, rng);
    }

    const auto lead = static_cast<std::size_t>(rng.uniform(spec.pad_min_s, spec.pad_max_s) * sr);
    const auto tail = static_cast<std::size_t>(rng.uniform(spec.pad_min_s, spec.pad_max_s) * sr);
    const double noise_level = db_to_gain(rng.uniform(-50.0, -30.0));
    const double snr_db = rng.uniform(spec.snr_db_min, spec.snr_db_max);
    std::vector<double> out = synthesize_background(lead + body + tail, sr, noise_level, rng);
    const double signal_gain = noise_level * db_to_gain(snr_db);
    for (std::size_t i = 0; i < body; ++i) out[lead + i] += signal_gain * signal[i];
    clamp_peak(out);
    return out;
}

GeneratedCorpus generate_synthetic_corpus(const SyntheticCorpusSpec& spec, const std::filesystem::path& out_dir,
                                          std::size_t threads) {
    if (spec.clips_per_class == 0) throw std::invalid_argument("clips_per_class must be > 0");
    if (!(spec.min_duration_s > 0.0 && spec.max_duration_s >= spec.min_duration_s)) {
        throw std::invalid_argument("invalid clip duration range");
    }
    GeneratedCorpus corpus;
    corpus.labels = spec.kind == CorpusKind::three_class ? LabelSet::three_class() : LabelSet(call_type_labels());

    std::error_code ec;
    std::filesystem::create_directories(out_dir / "wav", ec);
    if (ec) throw std::runtime_error("cannot create output directory " + out_dir.string() + ": " + ec.message());

    const std::size_t classes = corpus.labels.size();
    const std::size_t total = classes * spec.clips_per_class;
    corpus.entries.resize(total);
    corpus.annotations.resize(total);

    parallel_for(total, threads, [&](std::size_t n) {
        const std::size_t c = n / spec.clips_per_class;
        const std::size_t i = n % spec.clips_per_class;
        const std::string& label = corpus.labels[c];
        Rng rng(mix_seed(spec.seed, n));
        const std::vector<double> clip = synthesize_clip(label, spec, rng);
        const std::string id = indexed_name(label, i);
        const std::filesystem::path path = out_dir / "wav" / (id + ".wav");
        write_wav16(path, clip, spec.sample_rate_hz);
        const double duration = static_cast<double>(clip.size()) / spec.sample_rate_hz;
        corpus.entries[n] = {id, path, duration};
        corpus.annotations[n] = {id, id, 0.0, duration, label, "synth", kSyntheticTimestamp};
    });

    corpus.manifest_path = out_dir / "manifest.json";
    corpus.annotations_path = out_dir / "annotations.jsonl";
    save_manifest(corpus.manifest_path, corpus.entries);
    write_annotation_log(corpus.annotations_path, corpus.annotations);
    return corpus;
}

GeneratedCorpus generate_synthetic_recordings(const SyntheticRecordingSpec& spec,
                                              const std::filesystem::path& out_dir, std::size_t threads) {
    if (spec.count == 0) throw std::invalid_argument("recording count must be > 0");
    if (!(spec.min_segment_s > 0.0 && spec.max_segment_s >= spec.min_segment_s && spec.duration_s > 0.0)) {
        throw std::invalid_argument("invalid recording/segment durations");
    }
    GeneratedCorpus corpus;
    corpus.labels = LabelSet::three_class();
    std::error_code ec;
    std::filesystem::create_directories(out_dir / "wav", ec);
    if (ec) throw std::runtime_error("cannot create output directory " + out_dir.string() + ": " + ec.message());

    const int sr = spec.sample_rate_hz;
    corpus.entries.resize(spec.count);
    std::vector<std::vector<Annotation>> per_recording(spec.count);

    parallel_for(spec.count, threads, [&](std::size_t r) {
        Rng rng(mix_seed(spec.seed ^ 0x5EC0'0000ULL, r));
        const std::string id = indexed_name("rec", r);
        const auto total = static_cast<std::size_t>(spec.duration_s * sr);
        const double noise_level = db_to_gain(rng.uniform(-50.0, -35.0));
        std::vector<double> audio = synthesize_background(total, sr, noise_level, rng);

        std::size_t pos = 0;
        std::size_t previous = 3;
        std::size_t segment_no = 0;
        while (pos < total) {
            auto len = static_cast<std::size_t>(rng.uniform(spec.min_segment_s, spec.max_segment_s) * sr);
            if (total - pos < len + static_cast<std::size_t>(spec.min_segment_s * sr)) len = total - pos;
            std::size_t cls = rng.below(3);
            if (cls == previous) cls = (cls + 1 + rng.below(2)) % 3;
            previous = cls;
            const std::string& label = corpus.labels[cls];

            if (label != "background") {
                std::vector<double> signal =
                    label == "orca" ? synthesize_call(kAllContours[rng.below(kAllContours.size())], len, sr, rng)
                                    : synthesize_voice(len, sr, rng);
                apply_ramps(signal, static_cast<std::size_t>(0.05 * sr));
                const double gain = noise_level * db_to_gain(rng.uniform(spec.snr_db_min, spec.snr_db_max));
                for (std::size_t i = 0; i < len; ++i) audio[pos + i] += gain * signal[i];
            }
            per_recording[r].push_back({indexed_name(id + "_s", segment_no++), id,
                                        static_cast<double>(pos) / sr, static_cast<double>(pos + len) / sr, label,
                                        "synth", kSyntheticTimestamp});
            pos += len;
        }
        clamp_peak(audio);
        const std::filesystem::path path = out_dir / "wav" / (id + ".wav");
        write_wav16(path, audio, sr);
        corpus.entries[r] = {id, path, static_cast<double>(total) / sr};
    });

    for (auto& a : per_recording) corpus.annotations.insert(corpus.annotations.end(), a.begin(), a.end());
    corpus.manifest_path = out_dir / "manifest.json";
    corpus.annotations_path = out_dir / "annotations.jsonl";
    save_manifest(corpus.manifest_path, corpus.entries);
    write_annotation_log(corpus.annotations_path, corpus.annotations);
    return corpus;
}

}  // namespace orchive
