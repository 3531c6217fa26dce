#pragma once

#include <cmath>
#include <filesystem>
#include <numbers>
#include <string>
#include <vector>

#include "orchive/audio.hpp"
#include "orchive/dataset.hpp"
#include "orchive/svm.hpp"
#include "orchive/synth.hpp"
#include "orchive/util.hpp"

namespace testing {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag = "orchive") {
        path_ = std::filesystem::temp_directory_path() / (tag + "-" + orchive::random_hex_id(12));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

inline std::vector<double> tone(double hz, double seconds, int sr, double amplitude = 0.5) {
    std::vector<double> out(static_cast<std::size_t>(seconds * sr));
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = amplitude * std::sin(2.0 * std::numbers::pi * hz * static_cast<double>(i) / sr);
    }
    return out;
}

inline std::vector<double> noise(std::size_t n, double amplitude, std::uint64_t seed) {
    orchive::Rng rng(seed);
    std::vector<double> out(n);
    for (double& v : out) v = amplitude * rng.uniform(-1.0, 1.0);
    return out;
}

/// One unit Gaussian blob per class in `dim` dimensions; class c is pushed
/// out along axis c % dim by (c + 1) * spread.
inline orchive::Dataset blob_dataset(std::size_t classes, std::size_t per_class, std::size_t dim, double spread,
                                     std::uint64_t seed) {
    std::vector<std::string> names;
    for (std::size_t c = 0; c < classes; ++c) names.push_back("c" + std::to_string(c));
    orchive::Dataset d;
    d.label_set = orchive::LabelSet(names);
    for (std::size_t j = 0; j < dim; ++j) d.feature_names.push_back("f" + std::to_string(j));
    orchive::Rng rng(seed);
    for (std::size_t c = 0; c < classes; ++c) {
        for (std::size_t i = 0; i < per_class; ++i) {
            orchive::Instance inst;
            inst.label = c;
            inst.source_id = names[c] + "_" + std::to_string(i);
            for (std::size_t j = 0; j < dim; ++j) {
                inst.features.push_back(rng.normal() + (j == c % dim ? spread * static_cast<double>(c + 1) : 0.0));
            }
            d.instances.push_back(std::move(inst));
        }
    }
    return d;
}

/// Three-class model with default feature settings, trained once per process
/// on a small synthetic corpus.
inline const orchive::SvmModel& synthetic_model() {
    static const orchive::SvmModel model = [] {
        TempDir dir("orchive-model");
        orchive::SyntheticCorpusSpec spec;
        spec.clips_per_class = 20;
        spec.seed = 31;
        const auto corpus = orchive::generate_synthetic_corpus(spec, dir.path(), 4);
        const orchive::ManifestAudioSource source(corpus.entries);
        orchive::BuildOptions build;
        build.threads = 4;
        const auto d = orchive::build_dataset(corpus.annotations, source, corpus.labels, build).dataset;
        orchive::TrainOptions options;
        options.threads = 4;
        return orchive::train(d, options);
    }();
    return model;
}

}  // namespace testing
