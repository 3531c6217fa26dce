#include "orchive/service.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <condition_variable>
#include <deque>
#include <list>
#include <map>
#include <mutex>
#include <optional>
#include <thread>
#include <unordered_map>

#include <httplib.h>

#include "orchive/annotations.hpp"
#include "orchive/features.hpp"
#include "orchive/fft.hpp"
#include "orchive/model_io.hpp"
#include "orchive/segmenter.hpp"
#include "orchive/util.hpp"

namespace orchive {

SpectrogramTile compute_spectrogram(const AudioBuffer& buffer, const SpectrogramRequest& r) {
    const double duration = buffer.duration_seconds();
    if (!(r.start_s >= 0.0) || !(r.end_s > r.start_s) || r.end_s > duration + 1e-9) {
        throw std::invalid_argument("spectrogram range must satisfy 0 <= start < end <= duration");
    }
    if (r.time_px == 0 || r.time_px > kMaxTimePixels) throw std::invalid_argument("time_px must be in [1, 4096]");
    if (r.freq_bins == 0 || r.freq_bins > kMaxFrequencyBins) {
        throw std::invalid_argument("freq_bins must be in [1, 1024]");
    }
    if (!is_power_of_two(r.window_size) || r.window_size < 16) {
        throw std::invalid_argument("spectrogram window must be a power of two >= 16");
    }

    const int sr = buffer.sample_rate_hz();
    const std::size_t n = r.window_size;
    const std::size_t s0 = std::min(seconds_to_samples(r.start_s, sr), buffer.size() - 1);
    const std::size_t s1 = std::clamp(seconds_to_samples(r.end_s, sr), s0 + 1, buffer.size());
    const std::size_t len = s1 - s0;
    // At most ~4 STFT frames per output column.
    const std::size_t hop = std::max<std::size_t>({1, n / 4, (len + 4 * r.time_px - 1) / (4 * r.time_px)});
    const std::size_t frames = std::max<std::size_t>(1, (len + hop - 1) / hop);
    const std::size_t bins = n / 2 + 1;

    const std::vector<double> window = make_window(WindowFunction::hann, n);
    double window_sum = 0.0;
    for (double w : window) window_sum += w;
    const double reference = window_sum / 2.0;  // peak bin magnitude of a full-scale sinusoid

    const FftPlan plan(n);
    const auto samples = buffer.samples();
    std::vector<double> frame(n), mags(bins);

    SpectrogramTile tile;
    tile.start_s = r.start_s;
    tile.end_s = r.end_s;
    tile.window_size = n;
    tile.hop_size = hop;
    tile.max_hz = sr / 2.0;
    tile.bins.assign(r.time_px, std::vector<double>(r.freq_bins, 0.0));

    const auto pool_range = [](std::size_t i, std::size_t out, std::size_t in) {
        const std::size_t lo = i * in / out;
        const std::size_t hi = std::max(lo + 1, ((i + 1) * in + out - 1) / out);
        return std::pair{std::min(lo, in - 1), std::min(hi, in)};
    };

    for (std::size_t c = 0; c < r.time_px; ++c) {
        auto& column = tile.bins[c];
        const auto [f_lo, f_hi] = pool_range(c, r.time_px, frames);
        std::vector<double> peak(bins, 0.0);
        for (std::size_t f = f_lo; f < f_hi; ++f) {
            // Frame centred on the middle of its hop; audio outside the
            // buffer reads as zero.
            const auto centre = static_cast<std::ptrdiff_t>(s0 + f * hop + hop / 2);
            const std::ptrdiff_t first = centre - static_cast<std::ptrdiff_t>(n / 2);
            for (std::size_t i = 0; i < n; ++i) {
                const std::ptrdiff_t k = first + static_cast<std::ptrdiff_t>(i);
                frame[i] = (k >= 0 && k < static_cast<std::ptrdiff_t>(samples.size()))
                               ? samples[static_cast<std::size_t>(k)] * window[i]
                               : 0.0;
            }
            plan.real_magnitudes(frame, mags);
            for (std::size_t b = 0; b < bins; ++b) peak[b] = std::max(peak[b], mags[b]);
        }
        for (std::size_t row = 0; row < r.freq_bins; ++row) {
            const auto [b_lo, b_hi] = pool_range(row, r.freq_bins, bins);
            double m = 0.0;
            for (std::size_t b = b_lo; b < b_hi; ++b) m = std::max(m, peak[b]);
            const double db = m > 0.0 ? 20.0 * std::log10(m / reference) : kSpectrogramFloorDb;
            column[row] = std::max(kSpectrogramFloorDb, std::round(db * 100.0) / 100.0);
        }
    }
    return tile;
}

namespace {

using nlohmann::json;

void send_json(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& message) {
    send_json(res, status, {{"error", message}});
}

std::optional<double> query_double(const httplib::Request& req, const char* key) {
    if (!req.has_param(key)) return std::nullopt;
    const std::string v = req.get_param_value(key);
    double out = 0.0;
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || ptr != v.data() + v.size() || !std::isfinite(out)) {
        throw std::invalid_argument(std::string("bad numeric parameter ") + key + "=" + v);
    }
    return out;
}

std::optional<std::size_t> query_size(const httplib::Request& req, const char* key) {
    if (!req.has_param(key)) return std::nullopt;
    const std::string v = req.get_param_value(key);
    std::size_t out = 0;
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || ptr != v.data() + v.size()) {
        throw std::invalid_argument(std::string("bad integer parameter ") + key + "=" + v);
    }
    return out;
}

struct RecordingEntry {
    std::string recording_id;
    std::filesystem::path path;
    double duration_s = 0.0;
    int sample_rate_hz = 0;
};

/// Least-recently-used cache of serialized tiles.
class TileCache {
public:
    explicit TileCache(std::size_t capacity) : capacity_(capacity) {}

    std::optional<std::string> get(const std::string& key) {
        std::lock_guard lock(mutex_);
        const auto it = index_.find(key);
        if (it == index_.end()) return std::nullopt;
        order_.splice(order_.begin(), order_, it->second);
        return it->second->second;
    }

    void put(const std::string& key, std::string value) {
        if (capacity_ == 0) return;
        std::lock_guard lock(mutex_);
        if (const auto it = index_.find(key); it != index_.end()) {
            it->second->second = std::move(value);
            order_.splice(order_.begin(), order_, it->second);
            return;
        }
        order_.emplace_front(key, std::move(value));
        index_[key] = order_.begin();
        if (order_.size() > capacity_) {
            index_.erase(order_.back().first);
            order_.pop_back();
        }
    }

private:
    std::size_t capacity_;
    std::mutex mutex_;
    std::list<std::pair<std::string, std::string>> order_;
    std::unordered_map<std::string, std::list<std::pair<std::string, std::string>>::iterator> index_;
};

struct Job {
    std::string id;
    std::string recording_id;
    std::string model_id;
    std::string state = "queued";
    std::string error;
    json result;
};

json job_to_json(const Job& job) {
    json j{{"job_id", job.id}, {"recording_id", job.recording_id}, {"model_id", job.model_id}, {"state", job.state}};
    if (job.state == "failed") j["error"] = job.error;
    if (job.state == "done") j["result"] = job.result;
    return j;
}

}  // namespace

struct Service::Impl {
    ServiceConfig config;
    std::vector<RecordingEntry> recordings;
    std::map<std::string, std::size_t> recording_index;
    std::unique_ptr<ManifestAudioSource> audio;
    std::unique_ptr<AnnotationLog> log;
    TileCache tiles;

    std::mutex models_mutex;
    struct CachedModel {
        std::filesystem::file_time_type mtime;
        std::shared_ptr<const SvmModel> model;
    };
    std::map<std::string, CachedModel> models;

    std::mutex jobs_mutex;
    std::condition_variable jobs_cv;
    std::map<std::string, std::shared_ptr<Job>> jobs;
    std::deque<std::shared_ptr<Job>> queue;
    std::map<std::pair<std::string, std::string>, std::string> active;  // (recording, model) -> job id
    std::map<std::pair<std::string, std::string>, json> results;
    bool shutting_down = false;
    std::vector<std::jthread> job_threads;

    httplib::Server server;
    std::jthread server_thread;
    int bound_port = -1;

    explicit Impl(ServiceConfig c) : config(std::move(c)), tiles(config.tile_cache_capacity) {
        std::vector<ManifestEntry> entries;
        if (!config.manifest.empty()) entries = load_manifest(config.manifest);
        for (const auto& e : entries) {
            RecordingEntry r{e.recording_id, e.path, e.duration_s, 0};
            try {
                const WavInfo info = read_wav_info(e.path);
                r.duration_s = info.duration_seconds();
                r.sample_rate_hz = info.sample_rate_hz;
            } catch (const std::exception& ex) {
                log_warning("recording " + e.recording_id + " unreadable: " + ex.what());
            }
            if (!recording_index.emplace(r.recording_id, recordings.size()).second) {
                throw std::invalid_argument("duplicate recording id in manifest: " + r.recording_id);
            }
            recordings.push_back(std::move(r));
        }
        audio = std::make_unique<ManifestAudioSource>(std::move(entries));
        if (config.annotations.empty()) throw std::invalid_argument("service needs an annotation log path");
        log = std::make_unique<AnnotationLog>(config.annotations);

        for (std::size_t i = 0; i < std::max<std::size_t>(config.job_workers, 1); ++i) {
            job_threads.emplace_back([this] { job_loop(); });
        }
        routes();
    }

    ~Impl() {
        server.stop();
        if (server_thread.joinable()) server_thread.join();
        {
            std::lock_guard lock(jobs_mutex);
            shutting_down = true;
        }
        jobs_cv.notify_all();
        job_threads.clear();
    }

    const RecordingEntry* find_recording(const std::string& id) const {
        const auto it = recording_index.find(id);
        return it == recording_index.end() ? nullptr : &recordings[it->second];
    }

    std::vector<std::filesystem::path> model_files() const {
        std::vector<std::filesystem::path> out;
        std::error_code ec;
        if (config.models_dir.empty() || !std::filesystem::is_directory(config.models_dir, ec)) return out;
        for (const auto& e : std::filesystem::directory_iterator(config.models_dir, ec)) {
            if (e.is_regular_file() && e.path().extension() == ".json") out.push_back(e.path());
        }
        std::sort(out.begin(), out.end());
        return out;
    }

    /// Null when no such model file exists; throws if it fails to load.
    std::shared_ptr<const SvmModel> get_model(const std::string& id) {
        for (const auto& path : model_files()) {
            if (path.stem().string() != id) continue;
            const auto mtime = std::filesystem::last_write_time(path);
            std::lock_guard lock(models_mutex);
            auto it = models.find(id);
            if (it == models.end() || it->second.mtime != mtime) {
                auto model = std::make_shared<const SvmModel>(load_model(path));
                it = models.insert_or_assign(id, CachedModel{mtime, std::move(model)}).first;
            }
            return it->second.model;
        }
        return nullptr;
    }

    json run_segmentation(const std::string& recording_id, const std::string& model_id) {
        const RecordingEntry* rec = find_recording(recording_id);
        const auto model = get_model(model_id);
        if (!rec || !model) throw std::runtime_error("recording or model disappeared");
        json j = timeline_to_json(segment_wav(rec->path, *model, SegmentOptions{}, recording_id));
        j["model_id"] = model_id;
        return j;
    }

    void job_loop() {
        for (;;) {
            std::shared_ptr<Job> job;
            {
                std::unique_lock lock(jobs_mutex);
                jobs_cv.wait(lock, [this] { return shutting_down || !queue.empty(); });
                if (shutting_down) return;
                job = queue.front();
                queue.pop_front();
                job->state = "running";
            }
            json result;
            std::string error;
            try {
                result = run_segmentation(job->recording_id, job->model_id);
            } catch (const std::exception& e) {
                error = e.what();
            }
            std::lock_guard lock(jobs_mutex);
            active.erase({job->recording_id, job->model_id});
            if (error.empty()) {
                job->state = "done";
                job->result = result;
                results[{job->recording_id, job->model_id}] = std::move(result);
            } else {
                job->state = "failed";
                job->error = error;
            }
        }
    }

    void routes() {
        server.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
            try {
                std::rethrow_exception(ep);
            } catch (const std::exception& e) {
                send_error(res, 500, e.what());
            } catch (...) {
                send_error(res, 500, "unknown error");
            }
        });

        server.Get("/config", [this](const httplib::Request&, httplib::Response& res) {
            send_json(res, 200,
                      {{"labels", config.labels.names()},
                       {"spectrogram", {{"max_time_px", kMaxTimePixels},
                                        {"max_freq_bins", kMaxFrequencyBins},
                                        {"floor_db", kSpectrogramFloorDb}}},
                       {"sync_segment_limit_s", config.sync_segment_limit_s}});
        });

        server.Get("/recordings", [this](const httplib::Request&, httplib::Response& res) {
            json list = json::array();
            for (const auto& r : recordings) {
                list.push_back({{"recording_id", r.recording_id},
                                {"path", r.path.string()},
                                {"duration_s", r.duration_s},
                                {"sample_rate_hz", r.sample_rate_hz}});
            }
            send_json(res, 200, list);
        });

        server.Get(R"(/recordings/([^/]+)/spectrogram)", [this](const httplib::Request& req, httplib::Response& res) {
            const std::string id = req.matches[1];
            const RecordingEntry* rec = find_recording(id);
            if (!rec) return send_error(res, 404, "unknown recording: " + id);
            SpectrogramRequest sr;
            try {
                sr.start_s = query_double(req, "start").value_or(0.0);
                sr.end_s = query_double(req, "end").value_or(rec->duration_s);
                sr.time_px = query_size(req, "time_px").value_or(sr.time_px);
                sr.freq_bins = query_size(req, "freq_bins").value_or(sr.freq_bins);
            } catch (const std::invalid_argument& e) {
                return send_error(res, 400, e.what());
            }
            const std::string key = id + '|' + format_double(sr.start_s) + '|' + format_double(sr.end_s) + '|' +
                                    std::to_string(sr.time_px) + '|' + std::to_string(sr.freq_bins);
            if (auto cached = tiles.get(key)) {
                res.status = 200;
                res.set_content(*cached, "application/json");
                return;
            }
            std::shared_ptr<const AudioBuffer> buffer;
            try {
                buffer = audio->load(id);
            } catch (const UnknownRecordingError&) {
                return send_error(res, 404, "unknown recording: " + id);
            }
            SpectrogramTile tile;
            try {
                tile = compute_spectrogram(*buffer, sr);
            } catch (const std::invalid_argument& e) {
                return send_error(res, 400, e.what());
            }
            std::string body = json{{"recording_id", id},
                                    {"start_s", tile.start_s},
                                    {"end_s", tile.end_s},
                                    {"time_px", sr.time_px},
                                    {"freq_bins", sr.freq_bins},
                                    {"window_size", tile.window_size},
                                    {"hop_size", tile.hop_size},
                                    {"sample_rate_hz", buffer->sample_rate_hz()},
                                    {"max_hz", tile.max_hz},
                                    {"floor_db", kSpectrogramFloorDb},
                                    {"bins", tile.bins}}
                                   .dump();
            tiles.put(key, body);
            res.status = 200;
            res.set_content(std::move(body), "application/json");
        });

        server.Get("/annotations", [this](const httplib::Request& req, httplib::Response& res) {
            std::optional<std::string> rec;
            if (req.has_param("recording_id")) rec = req.get_param_value("recording_id");
            send_json(res, 200, json(log->list(rec)));
        });

        server.Post("/annotations", [this](const httplib::Request& req, httplib::Response& res) {
            json body;
            try {
                body = json::parse(req.body);
            } catch (const json::exception& e) {
                return send_error(res, 400, std::string("invalid JSON: ") + e.what());
            }
            Annotation a;
            try {
                a.id = body.value("id", std::string{});
                a.recording_id = body.at("recording_id").get<std::string>();
                a.start_s = body.at("start_s").get<double>();
                a.end_s = body.at("end_s").get<double>();
                a.label = body.at("label").get<std::string>();
                a.author = body.value("author", std::string{});
            } catch (const json::exception& e) {
                return send_error(res, 422, std::string("missing or mistyped field: ") + e.what());
            }
            if (!config.labels.contains(a.label)) return send_error(res, 422, "label not in label set: " + a.label);
            const RecordingEntry* rec = find_recording(a.recording_id);
            if (!rec) return send_error(res, 404, "unknown recording: " + a.recording_id);
            if (!std::isfinite(a.start_s) || !std::isfinite(a.end_s) || a.start_s < 0.0 || a.end_s <= a.start_s ||
                a.end_s > rec->duration_s + 1e-6) {
                return send_error(res, 422, "interval must satisfy 0 <= start_s < end_s <= duration");
            }
            const bool existed = !a.id.empty() && log->find(a.id).has_value();
            try {
                const Annotation stored = log->append(a);
                send_json(res, existed ? 200 : 201, json(stored));
            } catch (const std::invalid_argument& e) {
                send_error(res, 409, e.what());
            }
        });

        server.Delete(R"(/annotations/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
            const std::string id = req.matches[1];
            if (!log->remove(id)) return send_error(res, 404, "unknown annotation: " + id);
            send_json(res, 200, {{"id", id}, {"deleted", true}});
        });

        server.Get("/models", [this](const httplib::Request&, httplib::Response& res) {
            json list = json::array();
            for (const auto& path : model_files()) {
                const std::string id = path.stem().string();
                try {
                    const auto m = get_model(id);
                    list.push_back({{"model_id", id},
                                    {"labels", m->labels.names()},
                                    {"kernel", m->kernel.to_string()},
                                    {"window_size", m->frame_spec.window_size},
                                    {"hop_size", m->frame_spec.hop_size},
                                    {"memory", m->memory}});
                } catch (const std::exception& e) {
                    log_warning("skipping model " + path.string() + ": " + e.what());
                }
            }
            send_json(res, 200, list);
        });

        server.Post(R"(/recordings/([^/]+)/segment)", [this](const httplib::Request& req, httplib::Response& res) {
            const std::string id = req.matches[1];
            std::string model_id;
            try {
                model_id = json::parse(req.body).at("model_id").get<std::string>();
            } catch (const json::exception& e) {
                return send_error(res, 400, std::string("body must be {\"model_id\": ...}: ") + e.what());
            }
            const RecordingEntry* rec = find_recording(id);
            if (!rec) return send_error(res, 404, "unknown recording: " + id);
            std::shared_ptr<const SvmModel> model;
            try {
                model = get_model(model_id);
            } catch (const std::exception& e) {
                return send_error(res, 500, "model failed to load: " + std::string(e.what()));
            }
            if (!model) return send_error(res, 404, "unknown model: " + model_id);

            const auto key = std::pair{id, model_id};
            std::shared_ptr<Job> job;
            {
                std::lock_guard lock(jobs_mutex);
                if (const auto it = results.find(key); it != results.end()) return send_json(res, 200, it->second);
                if (const auto it = active.find(key); it != active.end()) {
                    return send_json(res, 409, {{"error", "segmentation already running"}, {"job_id", it->second}});
                }
                job = std::make_shared<Job>();
                job->id = random_hex_id();
                job->recording_id = id;
                job->model_id = model_id;
                jobs[job->id] = job;
                active[key] = job->id;
                if (rec->duration_s > config.sync_segment_limit_s) {
                    queue.push_back(job);
                    jobs_cv.notify_one();
                    return send_json(res, 202, job_to_json(*job));
                }
                job->state = "running";
            }

            json result;
            std::string error;
            try {
                result = run_segmentation(id, model_id);
            } catch (const std::exception& e) {
                error = e.what();
            }
            std::lock_guard lock(jobs_mutex);
            active.erase(key);
            if (!error.empty()) {
                job->state = "failed";
                job->error = error;
                return send_error(res, 422, "segmentation failed: " + error);
            }
            job->state = "done";
            job->result = result;
            results[key] = result;
            send_json(res, 200, result);
        });

        server.Get(R"(/jobs/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
            std::lock_guard lock(jobs_mutex);
            const auto it = jobs.find(req.matches[1]);
            if (it == jobs.end()) return send_error(res, 404, "unknown job: " + std::string(req.matches[1]));
            send_json(res, 200, job_to_json(*it->second));
        });

        if (!config.static_dir.empty() && !server.set_mount_point("/", config.static_dir.string())) {
            log_warning("static directory not found: " + config.static_dir.string());
        }
    }

    void bind() {
        if (config.port == 0) {
            bound_port = server.bind_to_any_port(config.host);
        } else {
            bound_port = server.bind_to_port(config.host, config.port) ? config.port : -1;
        }
        if (bound_port < 0) {
            throw std::runtime_error("cannot bind " + config.host + ":" + std::to_string(config.port));
        }
    }
};

Service::Service(ServiceConfig config) : impl_(std::make_unique<Impl>(std::move(config))) {}

Service::~Service() = default;

int Service::start() {
    impl_->bind();
    impl_->server_thread = std::jthread([this] { impl_->server.listen_after_bind(); });
    impl_->server.wait_until_ready();
    return impl_->bound_port;
}

void Service::run() {
    impl_->bind();
    log_info("listening on http://" + impl_->config.host + ":" + std::to_string(impl_->bound_port));
    impl_->server.listen_after_bind();
}

void Service::stop() { impl_->server.stop(); }

int Service::port() const { return impl_->bound_port; }

}  // namespace orchive
