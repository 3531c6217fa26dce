#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "orchive/annotations.hpp"
#include "orchive/dataset.hpp"
#include "orchive/util.hpp"

namespace orchive {

/// Pitch-contour templates standing in for cataloged call types. They are
/// not acoustic imitations of real calls, only mutually distinguishable shapes.
enum class CallContour { rising, falling, flat_harmonic, two_part, pulsed, chirp };

inline constexpr std::array<CallContour, 6> kAllContours{CallContour::rising,   CallContour::falling,
                                                         CallContour::flat_harmonic, CallContour::two_part,
                                                         CallContour::pulsed,   CallContour::chirp};

std::string to_string(CallContour c);

/// Call-type label for each contour, in kAllContours order: N1 N3 N4 N7 N9 N47.
const std::vector<std::string>& call_type_labels();

/// two_part and pulsed share a stepped contour and differ mainly in their
/// amplitude pattern; they are the designed near-confusable pair.
inline constexpr std::pair<CallContour, CallContour> kSimilarContours{CallContour::two_part, CallContour::pulsed};

enum class CorpusKind { three_class, call_types };

struct SyntheticCorpusSpec {
    CorpusKind kind = CorpusKind::three_class;
    std::size_t clips_per_class = 30;
    double min_duration_s = 1.0;
    double max_duration_s = 2.0;
    /// Signal-to-noise ratio of calls/voice over the noise bed.
    double snr_db_min = 10.0;
    double snr_db_max = 30.0;
    /// Noise-only lead-in and tail around each call/voice clip.
    double pad_min_s = 0.05;
    double pad_max_s = 0.25;
    int sample_rate_hz = kDefaultSampleRate;
    std::uint64_t seed = 1;
};

struct SyntheticRecordingSpec {
    std::size_t count = 100;
    double duration_s = 30.0;
    double min_segment_s = 2.0;
    double max_segment_s = 6.0;
    double snr_db_min = 10.0;
    double snr_db_max = 30.0;
    int sample_rate_hz = kDefaultSampleRate;
    std::uint64_t seed = 1;
};

struct GeneratedCorpus {
    std::filesystem::path manifest_path;
    std::filesystem::path annotations_path;
    std::vector<ManifestEntry> entries;
    std::vector<Annotation> annotations;
    LabelSet labels;
};

/// Noise bed: low-passed (colored) noise, optionally with a boat-like
/// harmonic hum, scaled to rms_level.
std::vector<double> synthesize_background(std::size_t samples, int sample_rate_hz, double rms_level, Rng& rng);

/// Harmonic stack following the contour, with attack/release ramps. Unit RMS.
std::vector<double> synthesize_call(CallContour contour, std::size_t samples, int sample_rate_hz, Rng& rng);

/// Formant-shaped harmonic source with syllabic amplitude modulation. Unit RMS.
std::vector<double> synthesize_voice(std::size_t samples, int sample_rate_hz, Rng& rng);

/// One clip of the given class. Labels are "orca", "voice", "background"
/// or a call-type label.
std::vector<double> synthesize_clip(const std::string& label, const SyntheticCorpusSpec& spec, Rng& rng);

/// Writes <out_dir>/wav/*.wav, manifest.json and annotations.jsonl (one
/// annotation spanning each clip). Byte-identical output for equal specs.
GeneratedCorpus generate_synthetic_corpus(const SyntheticCorpusSpec& spec, const std::filesystem::path& out_dir,
                                          std::size_t threads = 1);

/// Long recordings made of random orca/voice/background segments over a
/// continuous noise bed, with ground-truth segment annotations.
GeneratedCorpus generate_synthetic_recordings(const SyntheticRecordingSpec& spec,
                                              const std::filesystem::path& out_dir, std::size_t threads = 1);

}  // namespace orchive
