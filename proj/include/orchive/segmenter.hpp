#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "orchive/audio.hpp"
#include "orchive/features.hpp"
#include "orchive/svm.hpp"

namespace orchive {

inline constexpr std::size_t kDefaultSmoothingRadius = 5;
inline constexpr double kDefaultMinSegmentSeconds = 1.0;

/// One predicted label index per analysis hop.
struct LabelStream {
    std::vector<std::size_t> labels;
    double hop_s = 0.0;

    double duration_s() const { return static_cast<double>(labels.size()) * hop_s; }
    friend bool operator==(const LabelStream&, const LabelStream&) = default;
};

struct Segment {
    double start_s = 0.0;
    double end_s = 0.0;
    std::string label;

    friend bool operator==(const Segment&, const Segment&) = default;
};

/// Contiguous, non-overlapping segments starting at 0; neighbours differ in label.
struct SegmentTimeline {
    std::string recording_id;
    std::vector<Segment> segments;

    friend bool operator==(const SegmentTimeline&, const SegmentTimeline&) = default;
};

nlohmann::json timeline_to_json(const SegmentTimeline& t);
SegmentTimeline timeline_from_json(const nlohmann::json& j);
/// "start,end,label" header plus one row per segment.
std::string timeline_to_csv(const SegmentTimeline& t);
void write_timeline(const SegmentTimeline& t, const std::filesystem::path& json_path,
                    const std::filesystem::path& csv_path);

/// Streaming frame classifier: feeds samples in arbitrary chunks, keeps one
/// texture window of state, and emits one label per completed frame.
class StreamClassifier {
public:
    StreamClassifier(const SvmModel& model, const FrameSpec& spec, std::size_t memory, int sample_rate_hz);

    void push(std::span<const double> samples, std::vector<std::size_t>& labels_out);
    double hop_s() const { return hop_s_; }

private:
    const SvmModel& model_;
    FeatureStream features_;
    TextureAccumulator texture_;
    std::vector<FeatureVector> scratch_;
    double hop_s_;
};

/// Texture vector per hop (sliding memory window), each classified.
/// Throws ShortSignalError for a buffer shorter than one window and
/// std::invalid_argument if the model does not take texture vectors.
LabelStream classify_stream(const AudioBuffer& buffer, const SvmModel& model, const FrameSpec& spec,
                            std::size_t memory);

/// Sliding majority vote over 2*radius+1 labels (truncated at the edges).
/// When several labels tie for the maximum the centre label wins if it is
/// among them, otherwise the lowest label index.
LabelStream smooth_labels(const LabelStream& s, std::size_t radius);

/// Run-length encodes the stream, then repeatedly merges the shortest
/// segment below min_duration_s into its longer neighbour (left on ties).
/// Throws std::invalid_argument on an empty stream.
SegmentTimeline labels_to_segments(const LabelStream& s, double min_duration_s, const LabelSet& labels,
                                   const std::string& recording_id = {});

struct SegmentOptions {
    /// Zero values take the model's own feature settings.
    std::size_t window_size = 0;
    std::size_t hop_size = 0;
    std::size_t memory = 0;
    std::size_t smoothing_radius = kDefaultSmoothingRadius;
    double min_segment_s = kDefaultMinSegmentSeconds;
    /// Samples read per chunk when streaming from disk.
    std::size_t chunk_frames = 1 << 16;
};

FrameSpec effective_frame_spec(const SvmModel& model, const SegmentOptions& options);
std::size_t effective_memory(const SvmModel& model, const SegmentOptions& options);

/// Full pipeline on an in-memory buffer.
SegmentTimeline segment_buffer(const AudioBuffer& buffer, const SvmModel& model, const SegmentOptions& options,
                               const std::string& recording_id = {});

/// Full pipeline streaming a WAV file chunk by chunk.
SegmentTimeline segment_wav(const std::filesystem::path& path, const SvmModel& model,
                            const SegmentOptions& options, const std::string& recording_id = {});

}  // namespace orchive
