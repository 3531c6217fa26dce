#include "orchive/segmenter.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "orchive/util.hpp"

namespace orchive {

nlohmann::json timeline_to_json(const SegmentTimeline& t) {
    nlohmann::json segments = nlohmann::json::array();
    for (const auto& s : t.segments) {
        segments.push_back({{"start_s", s.start_s}, {"end_s", s.end_s}, {"label", s.label}});
    }
    return {{"recording_id", t.recording_id}, {"segments", segments}};
}

SegmentTimeline timeline_from_json(const nlohmann::json& j) {
    SegmentTimeline t;
    t.recording_id = j.value("recording_id", std::string{});
    for (const auto& s : j.at("segments")) {
        t.segments.push_back({s.at("start_s").get<double>(), s.at("end_s").get<double>(),
                              s.at("label").get<std::string>()});
    }
    return t;
}

std::string timeline_to_csv(const SegmentTimeline& t) {
    std::ostringstream out;
    out << "start,end,label\n";
    for (const auto& s : t.segments) {
        out << format_double(s.start_s) << ',' << format_double(s.end_s) << ',' << s.label << '\n';
    }
    return out.str();
}

void write_timeline(const SegmentTimeline& t, const std::filesystem::path& json_path,
                    const std::filesystem::path& csv_path) {
    {
        std::ofstream out(json_path, std::ios::trunc);
        if (!out || !(out << timeline_to_json(t).dump(2) << '\n')) {
            throw std::runtime_error("cannot write timeline: " + json_path.string());
        }
    }
    if (!csv_path.empty()) {
        std::ofstream out(csv_path, std::ios::trunc);
        if (!out || !(out << timeline_to_csv(t))) {
            throw std::runtime_error("cannot write timeline: " + csv_path.string());
        }
    }
}

StreamClassifier::StreamClassifier(const SvmModel& model, const FrameSpec& spec, std::size_t memory,
                                   int sample_rate_hz)
    : model_(model),
      features_(spec, sample_rate_hz),
      texture_(memory),
      hop_s_(static_cast<double>(spec.hop_size) / sample_rate_hz) {
    if (model.dimension() != kTextureFeatureCount) {
        throw std::invalid_argument("model expects " + std::to_string(model.dimension()) +
                                    "-dim vectors, stream produces " + std::to_string(kTextureFeatureCount));
    }
}

void StreamClassifier::push(std::span<const double> samples, std::vector<std::size_t>& labels_out) {
    scratch_.clear();
    features_.push(samples, scratch_);
    for (const auto& f : scratch_) labels_out.push_back(predict(model_, texture_.push(f).values()).label);
}

LabelStream classify_stream(const AudioBuffer& buffer, const SvmModel& model, const FrameSpec& spec,
                            std::size_t memory) {
    spec.validate();
    if (frame_count(buffer.size(), spec) == 0) throw ShortSignalError("signal shorter than one analysis window");
    StreamClassifier classifier(model, spec, memory, buffer.sample_rate_hz());
    LabelStream out;
    out.hop_s = classifier.hop_s();
    classifier.push(buffer.samples(), out.labels);
    return out;
}

LabelStream smooth_labels(const LabelStream& s, std::size_t radius) {
    LabelStream out{s.labels, s.hop_s};
    const std::size_t n = s.labels.size();
    if (radius == 0 || n == 0) return out;
    const std::size_t classes = *std::max_element(s.labels.begin(), s.labels.end()) + 1;
    std::vector<std::size_t> counts(classes, 0);

    // Window for position i is [i - radius, i + radius] clipped to [0, n).
    std::size_t lo = 0, hi = 0;  // current window [lo, hi)
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t want_lo = i >= radius ? i - radius : 0;
        const std::size_t want_hi = std::min(n, i + radius + 1);
        while (hi < want_hi) ++counts[s.labels[hi++]];
        while (lo < want_lo) --counts[s.labels[lo++]];

        const std::size_t best = *std::max_element(counts.begin(), counts.end());
        const std::size_t centre = s.labels[i];
        if (counts[centre] == best) {
            out.labels[i] = centre;
        } else {
            out.labels[i] = static_cast<std::size_t>(std::find(counts.begin(), counts.end(), best) - counts.begin());
        }
    }
    return out;
}

SegmentTimeline labels_to_segments(const LabelStream& s, double min_duration_s, const LabelSet& labels,
                                   const std::string& recording_id) {
    if (s.labels.empty()) throw std::invalid_argument("cannot segment an empty label stream");
    if (min_duration_s < 0.0) throw std::invalid_argument("min segment duration must be >= 0");
    if (!(s.hop_s > 0.0)) throw std::invalid_argument("label stream hop must be > 0");

    struct Run {
        std::size_t begin, end, label;
        std::size_t length() const { return end - begin; }
    };
    std::vector<Run> runs;
    for (std::size_t i = 0; i < s.labels.size(); ++i) {
        if (runs.empty() || runs.back().label != s.labels[i]) runs.push_back({i, i + 1, s.labels[i]});
        else runs.back().end = i + 1;
    }

    const auto too_short = [&](const Run& r) { return static_cast<double>(r.length()) * s.hop_s < min_duration_s; };
    while (runs.size() > 1) {
        std::size_t victim = runs.size();
        for (std::size_t r = 0; r < runs.size(); ++r) {
            if (too_short(runs[r]) && (victim == runs.size() || runs[r].length() < runs[victim].length())) victim = r;
        }
        if (victim == runs.size()) break;

        const bool has_left = victim > 0;
        const bool has_right = victim + 1 < runs.size();
        const bool into_left =
            has_left && (!has_right || runs[victim - 1].length() >= runs[victim + 1].length());
        if (into_left) {
            runs[victim - 1].end = runs[victim].end;
            runs.erase(runs.begin() + static_cast<std::ptrdiff_t>(victim));
            const std::size_t l = victim - 1;
            if (l + 1 < runs.size() && runs[l + 1].label == runs[l].label) {
                runs[l].end = runs[l + 1].end;
                runs.erase(runs.begin() + static_cast<std::ptrdiff_t>(l + 1));
            }
        } else {
            runs[victim + 1].begin = runs[victim].begin;
            runs.erase(runs.begin() + static_cast<std::ptrdiff_t>(victim));
            if (victim > 0 && runs[victim - 1].label == runs[victim].label) {
                runs[victim - 1].end = runs[victim].end;
                runs.erase(runs.begin() + static_cast<std::ptrdiff_t>(victim));
            }
        }
    }

    SegmentTimeline t;
    t.recording_id = recording_id;
    for (const auto& r : runs) {
        if (r.label >= labels.size()) throw std::out_of_range("label index outside label set");
        t.segments.push_back({static_cast<double>(r.begin) * s.hop_s, static_cast<double>(r.end) * s.hop_s,
                              labels[r.label]});
    }
    return t;
}

FrameSpec effective_frame_spec(const SvmModel& model, const SegmentOptions& options) {
    FrameSpec spec = model.frame_spec;
    if (options.window_size) {
        spec.window_size = options.window_size;
        if (!options.hop_size) spec.hop_size = options.window_size / 2;
    }
    if (options.hop_size) spec.hop_size = options.hop_size;
    spec.validate();
    return spec;
}

std::size_t effective_memory(const SvmModel& model, const SegmentOptions& options) {
    return options.memory ? options.memory : model.memory;
}

SegmentTimeline segment_buffer(const AudioBuffer& buffer, const SvmModel& model, const SegmentOptions& options,
                               const std::string& recording_id) {
    const LabelStream raw =
        classify_stream(buffer, model, effective_frame_spec(model, options), effective_memory(model, options));
    return labels_to_segments(smooth_labels(raw, options.smoothing_radius), options.min_segment_s, model.labels,
                              recording_id);
}

SegmentTimeline segment_wav(const std::filesystem::path& path, const SvmModel& model,
                            const SegmentOptions& options, const std::string& recording_id) {
    const FrameSpec spec = effective_frame_spec(model, options);
    WavReader reader(path);
    if (reader.info().frame_count < spec.window_size) {
        throw ShortSignalError("recording shorter than one analysis window: " + path.string());
    }
    StreamClassifier classifier(model, spec, effective_memory(model, options), reader.info().sample_rate_hz);
    LabelStream raw;
    raw.hop_s = classifier.hop_s();
    for (;;) {
        const std::vector<double> chunk = reader.read(std::max<std::size_t>(options.chunk_frames, 1));
        if (chunk.empty()) break;
        classifier.push(chunk, raw.labels);
    }
    return labels_to_segments(smooth_labels(raw, options.smoothing_radius), options.min_segment_s, model.labels,
                              recording_id);
}

}  // namespace orchive
