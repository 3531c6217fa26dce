#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "orchive/annotations.hpp"
#include "orchive/audio.hpp"
#include "orchive/features.hpp"

namespace orchive {

/// Ordered, duplicate-free class names (at least two).
class LabelSet {
public:
    LabelSet() = default;
    explicit LabelSet(std::vector<std::string> names);

    static LabelSet three_class() { return LabelSet({"orca", "background", "voice"}); }

    const std::vector<std::string>& names() const { return names_; }
    std::size_t size() const { return names_.size(); }
    const std::string& operator[](std::size_t i) const { return names_.at(i); }
    std::optional<std::size_t> index_of(const std::string& label) const;
    bool contains(const std::string& label) const { return index_of(label).has_value(); }

    friend bool operator==(const LabelSet&, const LabelSet&) = default;

private:
    std::vector<std::string> names_;
};

struct Instance {
    std::vector<double> features;
    std::size_t label = 0;
    std::string source_id;  // annotation id the instance came from, if any
    /// Optional per-frame texture vectors of the clip (frame-level evaluation).
    std::vector<std::vector<double>> frame_vectors;
};

struct Dataset {
    std::vector<Instance> instances;
    LabelSet label_set;
    std::vector<std::string> feature_names;

    std::size_t size() const { return instances.size(); }
    std::size_t dimension() const { return feature_names.size(); }
    std::vector<std::size_t> class_counts() const;
    /// Throws std::invalid_argument if dimensions or label indices are inconsistent.
    void validate() const;
};

class AllSilenceError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline constexpr double kDefaultSilenceThreshold = 0.1;
inline constexpr double kOrcaMiddleSeconds = 0.023;
inline constexpr double kBackgroundMiddleSeconds = 0.15;

/// Drops leading/trailing 20 ms frames (10 ms hop) whose RMS is below
/// threshold_ratio times the 90th-percentile RMS of the non-zero frames. Repeats until the
/// result is stable, which makes the operation idempotent.
/// Throws AllSilenceError if nothing survives.
AudioBuffer trim_silence(const AudioBuffer& buffer, double threshold_ratio = kDefaultSilenceThreshold);

/// dur_s of audio centred on the buffer midpoint (whole buffer if shorter).
AudioBuffer middle_extract(const AudioBuffer& buffer, double dur_s);

enum class Preprocessing { none, trim_silence, middle_extract };
Preprocessing parse_preprocessing(const std::string& name);
std::string to_string(Preprocessing p);

struct PreprocessOptions {
    Preprocessing kind = Preprocessing::none;
    double silence_threshold = kDefaultSilenceThreshold;
    double middle_seconds = kOrcaMiddleSeconds;
    /// Per-label middle durations, e.g. background -> 0.15 s.
    std::map<std::string, double> middle_seconds_by_label{{"background", kBackgroundMiddleSeconds}};

    double middle_for(const std::string& label) const;
};

/// Corpus manifest entry: a recording file and its duration.
struct ManifestEntry {
    std::string recording_id;
    std::filesystem::path path;
    double duration_s = 0.0;

    friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};

/// JSON array of {recording_id, path, duration_s}. Relative paths are resolved
/// against the manifest's directory.
std::vector<ManifestEntry> load_manifest(const std::filesystem::path& path);
/// Paths are written relative to the manifest directory when possible.
void save_manifest(const std::filesystem::path& path, const std::vector<ManifestEntry>& entries);

class UnknownRecordingError : public std::out_of_range {
public:
    using std::out_of_range::out_of_range;
};

/// Resolves recording ids to audio.
class AudioSource {
public:
    virtual ~AudioSource() = default;
    /// Throws UnknownRecordingError for an unresolvable id.
    virtual std::shared_ptr<const AudioBuffer> load(const std::string& recording_id) const = 0;
    virtual bool contains(const std::string& recording_id) const = 0;
};

/// Loads manifest recordings from disk on first use and caches them.
class ManifestAudioSource : public AudioSource {
public:
    explicit ManifestAudioSource(std::vector<ManifestEntry> entries);

    std::shared_ptr<const AudioBuffer> load(const std::string& recording_id) const override;
    bool contains(const std::string& recording_id) const override;
    const std::vector<ManifestEntry>& entries() const { return entries_; }
    void clear_cache() const;

private:
    std::vector<ManifestEntry> entries_;
    std::map<std::string, std::size_t> index_;
    mutable std::mutex mutex_;
    mutable std::map<std::string, std::shared_ptr<const AudioBuffer>> cache_;
};

/// In-memory recordings, mainly for tests and generated data.
class MemoryAudioSource : public AudioSource {
public:
    void add(std::string recording_id, AudioBuffer buffer);
    std::shared_ptr<const AudioBuffer> load(const std::string& recording_id) const override;
    bool contains(const std::string& recording_id) const override;

private:
    std::map<std::string, std::shared_ptr<const AudioBuffer>> buffers_;
};

struct SkippedClip {
    std::string annotation_id;
    std::string reason;
};

struct BuildOptions {
    FrameSpec frame_spec{};
    PreprocessOptions preprocess{};
    /// 0 = whole-clip statistics; otherwise statistics over the `memory`
    /// frames centred on the clip middle.
    std::size_t memory = 0;
    /// Also keep the per-frame sliding texture vectors (this memory) per clip.
    std::size_t frame_vector_memory = 0;
    std::size_t threads = 1;
};

struct BuildResult {
    Dataset dataset;
    std::vector<SkippedClip> skipped;
};

class EmptyDatasetError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// One instance per annotation that survives preprocessing and framing.
/// Bad clips are skipped and reported; an unresolvable recording id or an
/// empty result throws.
BuildResult build_dataset(const std::vector<Annotation>& annotations, const AudioSource& source,
                          const LabelSet& labels, const BuildOptions& options = {});

/// Fold index sets from per-class round-robin dealing after a seeded shuffle.
/// Throws std::invalid_argument if k < 2 or a class has fewer than k members.
std::vector<std::vector<std::size_t>> stratified_kfold(const Dataset& d, std::size_t k, std::uint64_t seed);

}  // namespace orchive
