#include "orchive/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include "orchive/util.hpp"

namespace orchive {

LabelSet::LabelSet(std::vector<std::string> names) : names_(std::move(names)) {
    if (names_.size() < 2) throw std::invalid_argument("a label set needs at least two labels");
    std::set<std::string> seen;
    for (const auto& n : names_) {
        if (n.empty()) throw std::invalid_argument("empty label name");
        if (!seen.insert(n).second) throw std::invalid_argument("duplicate label: " + n);
    }
}

std::optional<std::size_t> LabelSet::index_of(const std::string& label) const {
    const auto it = std::find(names_.begin(), names_.end(), label);
    if (it == names_.end()) return std::nullopt;
    return static_cast<std::size_t>(it - names_.begin());
}

std::vector<std::size_t> Dataset::class_counts() const {
    std::vector<std::size_t> counts(label_set.size(), 0);
    for (const auto& inst : instances) {
        if (inst.label < counts.size()) ++counts[inst.label];
    }
    return counts;
}

void Dataset::validate() const {
    for (const auto& inst : instances) {
        if (inst.features.size() != feature_names.size()) {
            throw std::invalid_argument("instance dimension does not match feature names");
        }
        if (inst.label >= label_set.size()) throw std::invalid_argument("label index out of range");
    }
}

namespace {

struct FrameGrid {
    std::size_t length;
    std::size_t hop;
    std::size_t count;
};

FrameGrid silence_grid(std::size_t samples, int sample_rate_hz) {
    FrameGrid g;
    g.length = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(0.020 * sample_rate_hz)));
    g.hop = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(0.010 * sample_rate_hz)));
    if (samples <= g.length) {
        g.length = samples;
        g.count = 1;
    } else {
        // The last frame is pulled back to end exactly at the final sample.
        g.count = (samples - g.length + g.hop - 1) / g.hop + 1;
    }
    return g;
}

// One trimming pass; returns [begin, end) sample bounds.
std::pair<std::size_t, std::size_t> trim_bounds(std::span<const double> s, int sample_rate_hz,
                                                double threshold_ratio) {
    const FrameGrid g = silence_grid(s.size(), sample_rate_hz);
    std::vector<double> rms(g.count);
    const auto frame_start = [&](std::size_t f) { return std::min(f * g.hop, s.size() - g.length); };
    for (std::size_t f = 0; f < g.count; ++f) {
        double sq = 0.0;
        for (std::size_t i = 0; i < g.length; ++i) {
            const double v = s[frame_start(f) + i];
            sq += v * v;
        }
        rms[f] = std::sqrt(sq / static_cast<double>(g.length));
    }
    std::vector<double> sorted;
    for (double r : rms) {
        if (r > 0.0) sorted.push_back(r);
    }
    if (sorted.empty()) throw AllSilenceError("all-silence clip");
    std::sort(sorted.begin(), sorted.end());
    const auto rank = static_cast<std::size_t>(std::ceil(0.9 * static_cast<double>(sorted.size())));
    const double reference = sorted[std::max<std::size_t>(rank, 1) - 1];
    const double threshold = threshold_ratio * reference;

    std::size_t first = 0;
    while (first < g.count && rms[first] < threshold) ++first;
    std::size_t last = g.count - 1;
    while (last > first && rms[last] < threshold) --last;
    if (first == g.count) throw AllSilenceError("all-silence clip");

    const std::size_t begin = frame_start(first);
    const std::size_t end = frame_start(last) + g.length;
    return {begin, end};
}

}  // namespace

AudioBuffer trim_silence(const AudioBuffer& buffer, double threshold_ratio) {
    if (!(threshold_ratio > 0.0 && threshold_ratio < 1.0)) {
        throw std::invalid_argument("silence threshold ratio must be in (0, 1)");
    }
    if (buffer.empty()) throw AllSilenceError("all-silence clip");
    std::vector<double> current(buffer.samples().begin(), buffer.samples().end());
    for (;;) {
        const auto [begin, end] = trim_bounds(current, buffer.sample_rate_hz(), threshold_ratio);
        if (begin == 0 && end == current.size()) break;
        current = std::vector<double>(current.begin() + static_cast<std::ptrdiff_t>(begin),
                                      current.begin() + static_cast<std::ptrdiff_t>(end));
    }
    return AudioBuffer(std::move(current), buffer.sample_rate_hz());
}

AudioBuffer middle_extract(const AudioBuffer& buffer, double dur_s) {
    if (!(dur_s > 0.0)) throw std::invalid_argument("middle_extract duration must be > 0");
    const double total = buffer.duration_seconds();
    if (total <= dur_s) return buffer;
    return slice(buffer, (total - dur_s) / 2.0, dur_s);
}

Preprocessing parse_preprocessing(const std::string& name) {
    if (name == "none") return Preprocessing::none;
    if (name == "trim" || name == "trim_silence") return Preprocessing::trim_silence;
    if (name == "middle" || name == "middle_extract") return Preprocessing::middle_extract;
    throw std::invalid_argument("unknown preprocessing: " + name);
}

std::string to_string(Preprocessing p) {
    switch (p) {
        case Preprocessing::none: return "none";
        case Preprocessing::trim_silence: return "trim_silence";
        case Preprocessing::middle_extract: return "middle_extract";
    }
    return "none";
}

double PreprocessOptions::middle_for(const std::string& label) const {
    const auto it = middle_seconds_by_label.find(label);
    return it == middle_seconds_by_label.end() ? middle_seconds : it->second;
}

std::vector<ManifestEntry> load_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open manifest: " + path.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error("malformed manifest " + path.string() + ": " + e.what());
    }
    if (!j.is_array()) throw std::runtime_error("manifest must be a JSON array: " + path.string());
    const std::filesystem::path base = path.parent_path();
    std::vector<ManifestEntry> out;
    std::set<std::string> ids;
    for (const auto& e : j) {
        ManifestEntry entry;
        entry.recording_id = e.at("recording_id").get<std::string>();
        entry.path = e.at("path").get<std::string>();
        if (entry.path.is_relative()) entry.path = base / entry.path;
        entry.duration_s = e.value("duration_s", 0.0);
        if (!ids.insert(entry.recording_id).second) {
            throw std::runtime_error("duplicate recording_id in manifest: " + entry.recording_id);
        }
        out.push_back(std::move(entry));
    }
    return out;
}

void save_manifest(const std::filesystem::path& path, const std::vector<ManifestEntry>& entries) {
    const std::filesystem::path base = path.parent_path();
    nlohmann::json j = nlohmann::json::array();
    for (const auto& e : entries) {
        std::filesystem::path p = e.path;
        if (!base.empty() && p.is_absolute() == base.is_absolute()) {
            const auto rel = p.lexically_relative(base);
            if (!rel.empty() && *rel.begin() != "..") p = rel;
        }
        j.push_back({{"recording_id", e.recording_id}, {"path", p.generic_string()}, {"duration_s", e.duration_s}});
    }
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write manifest: " + path.string());
    out << j.dump(2) << '\n';
}

ManifestAudioSource::ManifestAudioSource(std::vector<ManifestEntry> entries) : entries_(std::move(entries)) {
    for (std::size_t i = 0; i < entries_.size(); ++i) index_[entries_[i].recording_id] = i;
}

std::shared_ptr<const AudioBuffer> ManifestAudioSource::load(const std::string& recording_id) const {
    const auto it = index_.find(recording_id);
    if (it == index_.end()) throw UnknownRecordingError("unknown recording: " + recording_id);
    {
        std::lock_guard lock(mutex_);
        const auto c = cache_.find(recording_id);
        if (c != cache_.end()) return c->second;
    }
    auto buffer = std::make_shared<const AudioBuffer>(load_wav(entries_[it->second].path));
    std::lock_guard lock(mutex_);
    return cache_.emplace(recording_id, std::move(buffer)).first->second;
}

bool ManifestAudioSource::contains(const std::string& recording_id) const {
    return index_.count(recording_id) != 0;
}

void ManifestAudioSource::clear_cache() const {
    std::lock_guard lock(mutex_);
    cache_.clear();
}

void MemoryAudioSource::add(std::string recording_id, AudioBuffer buffer) {
    buffers_[std::move(recording_id)] = std::make_shared<const AudioBuffer>(std::move(buffer));
}

std::shared_ptr<const AudioBuffer> MemoryAudioSource::load(const std::string& recording_id) const {
    const auto it = buffers_.find(recording_id);
    if (it == buffers_.end()) throw UnknownRecordingError("unknown recording: " + recording_id);
    return it->second;
}

bool MemoryAudioSource::contains(const std::string& recording_id) const {
    return buffers_.count(recording_id) != 0;
}

BuildResult build_dataset(const std::vector<Annotation>& annotations, const AudioSource& source,
                          const LabelSet& labels, const BuildOptions& options) {
    options.frame_spec.validate();
    for (const auto& a : annotations) {
        if (!source.contains(a.recording_id)) {
            throw UnknownRecordingError("annotation " + a.id + " refers to unknown recording " + a.recording_id);
        }
    }

    struct Outcome {
        std::optional<Instance> instance;
        std::string skip_reason;
    };
    std::vector<Outcome> outcomes(annotations.size());

    parallel_for(annotations.size(), options.threads, [&](std::size_t i) {
        const Annotation& a = annotations[i];
        Outcome& out = outcomes[i];
        const auto label = labels.index_of(a.label);
        if (!label) {
            out.skip_reason = "label '" + a.label + "' not in label set";
            return;
        }
        if (!(a.start_s >= 0.0 && a.end_s > a.start_s)) {
            out.skip_reason = "invalid interval";
            return;
        }
        const auto recording = source.load(a.recording_id);
        try {
            AudioBuffer clip = slice(*recording, a.start_s, a.end_s - a.start_s);
            switch (options.preprocess.kind) {
                case Preprocessing::none:
                    break;
                case Preprocessing::trim_silence:
                    clip = trim_silence(clip, options.preprocess.silence_threshold);
                    break;
                case Preprocessing::middle_extract:
                    clip = middle_extract(clip, options.preprocess.middle_for(a.label));
                    break;
            }
            const std::vector<FeatureVector> frames = extract_frame_features(clip, options.frame_spec);
            Instance inst;
            inst.label = *label;
            inst.source_id = a.id;
            inst.features = (options.memory == 0 ? window_stats(frames)
                                                 : centered_texture(frames, options.memory))
                                .values();
            if (options.frame_vector_memory > 0) {
                for (const auto& t : texture_stats(frames, options.frame_vector_memory)) {
                    inst.frame_vectors.push_back(t.values());
                }
            }
            out.instance = std::move(inst);
        } catch (const AllSilenceError&) {
            out.skip_reason = "all-silence clip";
        } catch (const ShortSignalError&) {
            out.skip_reason = "clip shorter than one analysis window";
        } catch (const std::out_of_range&) {
            out.skip_reason = "annotation starts beyond the recording end";
        }
    });

    BuildResult result;
    result.dataset.label_set = labels;
    result.dataset.feature_names = texture_feature_names();
    for (std::size_t i = 0; i < outcomes.size(); ++i) {
        if (outcomes[i].instance) {
            result.dataset.instances.push_back(std::move(*outcomes[i].instance));
        } else {
            result.skipped.push_back({annotations[i].id, outcomes[i].skip_reason});
        }
    }
    if (result.dataset.instances.empty()) throw EmptyDatasetError("empty dataset: no clip survived preprocessing");
    return result;
}

std::vector<std::vector<std::size_t>> stratified_kfold(const Dataset& d, std::size_t k, std::uint64_t seed) {
    if (k < 2) throw std::invalid_argument("k-fold needs k >= 2");
    std::vector<std::vector<std::size_t>> by_class(d.label_set.size());
    for (std::size_t i = 0; i < d.instances.size(); ++i) {
        const std::size_t label = d.instances[i].label;
        if (label >= by_class.size()) throw std::invalid_argument("label index out of range");
        by_class[label].push_back(i);
    }
    for (std::size_t c = 0; c < by_class.size(); ++c) {
        if (by_class[c].size() < k) {
            throw std::invalid_argument("class '" + d.label_set[c] + "' has " +
                                        std::to_string(by_class[c].size()) + " instances, fewer than k = " +
                                        std::to_string(k));
        }
    }

    Rng rng(seed);
    std::vector<std::vector<std::size_t>> folds(k);
    std::size_t dealt = 0;
    for (auto& members : by_class) {
        rng.shuffle(members);
        for (std::size_t idx : members) folds[dealt++ % k].push_back(idx);
    }
    for (auto& f : folds) std::sort(f.begin(), f.end());
    return folds;
}

}  // namespace orchive
