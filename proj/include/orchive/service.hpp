#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "orchive/audio.hpp"
#include "orchive/dataset.hpp"

namespace orchive {

inline constexpr double kSpectrogramFloorDb = -80.0;
inline constexpr std::size_t kMaxTimePixels = 4096;
inline constexpr std::size_t kMaxFrequencyBins = 1024;

struct SpectrogramRequest {
    double start_s = 0.0;
    double end_s = 0.0;
    std::size_t time_px = 512;
    std::size_t freq_bins = 256;
    std::size_t window_size = 1024;
};

/// STFT magnitudes over [start_s, end_s) max-pooled to time_px columns by
/// freq_bins rows (row 0 = 0 Hz), in dB relative to a full-scale sinusoid
/// and floored at kSpectrogramFloorDb. Throws std::invalid_argument for a
/// bad range or resolution.
struct SpectrogramTile {
    double start_s = 0.0;
    double end_s = 0.0;
    std::size_t window_size = 0;
    std::size_t hop_size = 0;
    double max_hz = 0.0;
    std::vector<std::vector<double>> bins;  // [time][frequency]
};

SpectrogramTile compute_spectrogram(const AudioBuffer& buffer, const SpectrogramRequest& request);

struct ServiceConfig {
    std::filesystem::path manifest;
    std::filesystem::path annotations;
    std::filesystem::path models_dir;
    /// Served at "/" when set (the annotator UI bundle).
    std::filesystem::path static_dir;
    LabelSet labels = LabelSet::three_class();
    std::string host = "127.0.0.1";
    int port = 8080;
    std::size_t job_workers = 2;
    /// Recordings longer than this are segmented as background jobs.
    double sync_segment_limit_s = 600.0;
    std::size_t tile_cache_capacity = 256;
};

/// HTTP/JSON API over a manifest, an annotation log and a models directory.
///
///   GET    /config
///   GET    /recordings
///   GET    /recordings/{id}/spectrogram?start&end&time_px&freq_bins
///   GET    /annotations[?recording_id=]
///   POST   /annotations
///   DELETE /annotations/{id}
///   GET    /models
///   POST   /recordings/{id}/segment   {"model_id": ...}
///   GET    /jobs/{id}
class Service {
public:
    explicit Service(ServiceConfig config);
    ~Service();
    Service(const Service&) = delete;
    Service& operator=(const Service&) = delete;

    /// Binds (port 0 picks a free port) and serves on a background thread.
    /// Returns the bound port.
    int start();
    /// Binds and serves on the calling thread until stop().
    void run();
    void stop();
    int port() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace orchive
