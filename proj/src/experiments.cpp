#include "orchive/experiments.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <thread>

#include "orchive/fft.hpp"
#include "orchive/util.hpp"

namespace orchive {

namespace {

std::string percent(double accuracy) {
    if (std::isnan(accuracy)) return "n/a";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", accuracy * 100.0);
    return buf;
}

std::string pad_left(const std::string& s, std::size_t width) {
    return s.size() >= width ? s : std::string(width - s.size(), ' ') + s;
}

double parse_number(const std::string& field, const char* what) {
    try {
        std::size_t used = 0;
        const double v = std::stod(field, &used);
        if (used != field.size()) throw std::invalid_argument(field);
        return v;
    } catch (const std::exception&) {
        throw std::invalid_argument(std::string("bad ") + what + " value: '" + field + "'");
    }
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

void SweepGrid::validate() const {
    if (windows.empty() || memories.empty()) throw std::invalid_argument("sweep grid lists must be non-empty");
    for (std::size_t w : windows) {
        if (!is_power_of_two(w)) throw std::invalid_argument("sweep window is not a power of two: " + std::to_string(w));
    }
    for (std::size_t m : memories) {
        if (m == 0) throw std::invalid_argument("sweep memory must be > 0");
    }
    if (folds < 2) throw std::invalid_argument("sweep needs at least 2 folds");
}

std::vector<SweepRow> run_sweep(const SweepGrid& grid, const std::vector<Annotation>& annotations,
                                const AudioSource& source, const LabelSet& labels, const SweepOptions& options) {
    grid.validate();
    std::vector<SweepRow> rows;
    for (std::size_t window : grid.windows) {
        for (std::size_t memory : grid.memories) {
            BuildOptions build;
            build.frame_spec.window_size = window;
            build.frame_spec.hop_size = window / 2;
            build.preprocess = options.preprocess;
            build.memory = memory;
            build.threads = options.threads;
            const BuildResult built = build_dataset(annotations, source, labels, build);
            TrainOptions train = options.train;
            train.threads = options.threads;
            const CrossValidationResult cv = cross_validate(built.dataset, grid.folds, options.seed, train);
            rows.push_back({window, window / 2, memory, cv.accuracy, built.dataset.size()});
        }
    }
    return rows;
}

std::string sweep_table_text(const std::vector<SweepRow>& rows) {
    std::vector<std::size_t> windows, memories;
    for (const auto& r : rows) {
        if (std::find(windows.begin(), windows.end(), r.window) == windows.end()) windows.push_back(r.window);
        if (std::find(memories.begin(), memories.end(), r.memory) == memories.end()) memories.push_back(r.memory);
    }
    std::ostringstream out;
    out << pad_left("win", 6) << pad_left("hop", 6);
    for (std::size_t m : memories) out << pad_left("mem " + std::to_string(m), 10);
    out << '\n';
    for (std::size_t w : windows) {
        out << pad_left(std::to_string(w), 6) << pad_left(std::to_string(w / 2), 6);
        for (std::size_t m : memories) {
            const auto it = std::find_if(rows.begin(), rows.end(),
                                         [&](const SweepRow& r) { return r.window == w && r.memory == m; });
            out << pad_left(it == rows.end() ? "-" : percent(it->accuracy), 10);
        }
        out << '\n';
    }
    return out.str();
}

std::string sweep_table_csv(const std::vector<SweepRow>& rows) {
    std::ostringstream out;
    out << "window,hop,memory,accuracy,instances\n";
    for (const auto& r : rows) {
        out << r.window << ',' << r.hop << ',' << r.memory << ',' << format_double(r.accuracy) << ','
            << r.instances << '\n';
    }
    return out.str();
}

double sweep_memory_mean(const std::vector<SweepRow>& rows, std::size_t memory) {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& r : rows) {
        if (r.memory == memory) {
            sum += r.accuracy;
            ++n;
        }
    }
    if (n == 0) throw std::invalid_argument("no sweep rows with memory " + std::to_string(memory));
    return sum / static_cast<double>(n);
}

const SweepRow& sweep_cell(const std::vector<SweepRow>& rows, std::size_t window, std::size_t memory) {
    const auto it = std::find_if(rows.begin(), rows.end(),
                                 [&](const SweepRow& r) { return r.window == window && r.memory == memory; });
    if (it == rows.end()) {
        throw std::invalid_argument("no sweep cell for window " + std::to_string(window) + ", memory " +
                                    std::to_string(memory));
    }
    return *it;
}

std::vector<PreprocessingRow> run_preprocessing_comparison(const std::vector<Preprocessing>& kinds,
                                                           const std::vector<Annotation>& annotations,
                                                           const AudioSource& source, const LabelSet& labels,
                                                           const BuildOptions& build, std::size_t folds,
                                                           const SweepOptions& options) {
    std::vector<PreprocessingRow> rows;
    for (Preprocessing kind : kinds) {
        BuildOptions b = build;
        b.preprocess.kind = kind;
        b.threads = options.threads;
        PreprocessingRow row;
        row.preprocessing = kind;
        try {
            const BuildResult built = build_dataset(annotations, source, labels, b);
            row.instances = built.dataset.size();
            row.skipped = built.skipped.size();
            TrainOptions train = options.train;
            train.threads = options.threads;
            row.accuracy = cross_validate(built.dataset, folds, options.seed, train).accuracy;
        } catch (const EmptyDatasetError&) {
            row.skipped = annotations.size();
            row.accuracy = std::numeric_limits<double>::quiet_NaN();
        } catch (const std::invalid_argument& e) {
            // Too few surviving clips per class for the fold count.
            log_warning(to_string(kind) + ": " + e.what());
            row.accuracy = std::numeric_limits<double>::quiet_NaN();
        }
        rows.push_back(row);
    }
    return rows;
}

std::string preprocessing_table_text(const std::vector<PreprocessingRow>& rows) {
    std::ostringstream out;
    out << pad_left("preprocessing", 16) << pad_left("instances", 11) << pad_left("skipped", 9)
        << pad_left("accuracy", 10) << '\n';
    for (const auto& r : rows) {
        out << pad_left(to_string(r.preprocessing), 16) << pad_left(std::to_string(r.instances), 11)
            << pad_left(std::to_string(r.skipped), 9) << pad_left(percent(r.accuracy), 10) << '\n';
    }
    return out.str();
}

void TimingReport::validate() const {
    for (const auto& r : rows) {
        if (!(r.wall_time_s > 0.0)) throw std::invalid_argument("timing rows need wall_time_s > 0");
    }
}

std::string format_dhms(double seconds) {
    if (!(seconds >= 0.0)) throw std::invalid_argument("duration must be >= 0");
    auto total = static_cast<long long>(std::llround(seconds));
    const long long s = total % 60;
    total /= 60;
    const long long m = total % 60;
    total /= 60;
    const long long h = total % 24;
    const long long d = total / 24;
    char buf[48];
    std::snprintf(buf, sizeof buf, "%02lld:%02lld:%02lld:%02lld", d, h, m, s);
    return buf;
}

double parse_dhms(const std::string& text) {
    const auto parts = split(text, ':');
    if (parts.size() != 4) throw std::invalid_argument("expected dd:hh:mm:ss, got '" + text + "'");
    const double d = parse_number(parts[0], "days");
    const double h = parse_number(parts[1], "hours");
    const double m = parse_number(parts[2], "minutes");
    const double s = parse_number(parts[3], "seconds");
    if (h >= 24 || m >= 60 || s >= 60 || d < 0 || h < 0 || m < 0 || s < 0) {
        throw std::invalid_argument("out-of-range field in '" + text + "'");
    }
    return ((d * 24 + h) * 60 + m) * 60 + s;
}

std::string timing_to_csv(const TimingReport& report) {
    std::ostringstream out;
    out << "training_len_s,corpus_fraction,worker_count,wall_time_s,wall_time\n";
    for (const auto& r : report.rows) {
        out << format_double(r.training_len_s) << ',' << format_double(r.corpus_fraction) << ',' << r.worker_count
            << ',' << format_double(r.wall_time_s) << ',' << format_dhms(r.wall_time_s) << '\n';
    }
    return out.str();
}

TimingReport timing_from_csv(const std::string& text) {
    TimingReport report;
    std::istringstream in(text);
    std::string line;
    bool header = true;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        line = trim(line);
        if (line.empty()) continue;
        if (header) {
            header = false;
            if (line.rfind("training_len_s", 0) == 0) continue;
        }
        const auto f = split(line, ',');
        if (f.size() < 4) throw std::invalid_argument("timing CSV line " + std::to_string(line_no) + ": too few fields");
        TimingRow r;
        r.training_len_s = parse_number(trim(f[0]), "training_len_s");
        r.corpus_fraction = parse_number(trim(f[1]), "corpus_fraction");
        const double workers = parse_number(trim(f[2]), "worker_count");
        if (workers < 1 || workers != std::floor(workers)) throw std::invalid_argument("bad worker_count");
        r.worker_count = static_cast<std::size_t>(workers);
        r.wall_time_s = parse_number(trim(f[3]), "wall_time_s");
        report.rows.push_back(r);
    }
    report.validate();
    return report;
}

std::string timing_table_text(const TimingReport& report) {
    std::ostringstream out;
    out << pad_left("training_s", 11) << pad_left("fraction", 10) << pad_left("workers", 9) << pad_left("time", 13)
        << pad_left("seconds", 12) << '\n';
    for (const auto& r : report.rows) {
        char frac[32], secs[32];
        std::snprintf(frac, sizeof frac, "%g%%", r.corpus_fraction * 100.0);
        std::snprintf(secs, sizeof secs, "%.3f", r.wall_time_s);
        out << pad_left(format_double(r.training_len_s), 11) << pad_left(frac, 10)
            << pad_left(std::to_string(r.worker_count), 9) << pad_left(format_dhms(r.wall_time_s), 13)
            << pad_left(secs, 12) << '\n';
    }
    return out.str();
}

void write_timing_csv(const TimingReport& report, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out || !(out << timing_to_csv(report))) throw std::runtime_error("cannot write " + path.string());
}

TimingReport read_timing_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::ostringstream text;
    text << in.rdbuf();
    return timing_from_csv(text.str());
}

std::size_t fraction_count(std::size_t n, double fraction) {
    if (!(fraction > 0.0 && fraction <= 1.0)) throw std::invalid_argument("fraction must be in (0, 1]");
    if (n == 0) return 0;
    const auto count = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n) - 1e-9));
    return std::clamp<std::size_t>(count, 1, n);
}

std::vector<std::vector<std::size_t>> partition_round_robin(std::size_t count, std::size_t workers) {
    if (workers == 0) throw std::invalid_argument("worker count must be >= 1");
    std::vector<std::vector<std::size_t>> parts(workers);
    for (std::size_t i = 0; i < count; ++i) parts[i % workers].push_back(i);
    return parts;
}

BatchResult run_batch(const std::vector<ManifestEntry>& manifest, const SvmModel& model, const BatchOptions& options) {
    if (manifest.empty()) throw std::invalid_argument("manifest is empty");
    if (options.workers == 0) throw std::invalid_argument("worker count must be >= 1");
    const std::size_t n = fraction_count(manifest.size(), options.fraction);
    const auto parts = partition_round_robin(n, options.workers);

    BatchResult result;
    for (const auto& p : parts) {
        auto& ids = result.partitions.emplace_back();
        for (std::size_t i : p) ids.push_back(manifest[i].recording_id);
    }
    result.timing = {options.training_len_s, options.fraction, options.workers, 0.0};

    if (!options.out_dir.empty()) {
        std::error_code ec;
        std::filesystem::create_directories(options.out_dir, ec);
        if (ec) throw std::runtime_error("cannot create " + options.out_dir.string() + ": " + ec.message());
    }
    if (options.dry_run) {
        if (!options.out_dir.empty()) {
            for (std::size_t w = 0; w < parts.size(); ++w) {
                std::ofstream out(options.out_dir / ("worker_" + std::to_string(w) + ".txt"), std::ios::trunc);
                for (std::size_t i : parts[w]) out << manifest[i].path.string() << '\n';
                if (!out) throw std::runtime_error("cannot write worker list in " + options.out_dir.string());
            }
        }
        return result;
    }

    std::vector<std::optional<SegmentTimeline>> timelines(n);
    std::vector<std::string> errors(n);
    const auto start = std::chrono::steady_clock::now();
    {
        std::vector<std::jthread> workers;
        workers.reserve(parts.size());
        for (const auto& part : parts) {
            workers.emplace_back([&, part_ptr = &part] {
                for (std::size_t i : *part_ptr) {
                    try {
                        timelines[i] = segment_wav(manifest[i].path, model, options.segment, manifest[i].recording_id);
                    } catch (const std::exception& e) {
                        errors[i] = e.what();
                    }
                }
            });
        }
    }
    // Single writer: outputs are written after all workers have joined.
    for (std::size_t i = 0; i < n; ++i) {
        if (!timelines[i]) {
            log_warning("batch: " + manifest[i].recording_id + " failed: " + errors[i]);
            result.failures.push_back({manifest[i].recording_id, errors[i]});
            continue;
        }
        if (!options.out_dir.empty()) {
            const std::string& id = manifest[i].recording_id;
            write_timeline(*timelines[i], options.out_dir / (id + ".json"), options.out_dir / (id + ".csv"));
        }
        result.timelines.push_back(std::move(*timelines[i]));
    }
    result.timing.wall_time_s =
        std::max(std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count(), 1e-9);
    if (result.timelines.empty()) {
        throw BatchError("all " + std::to_string(n) + " recordings failed; first error: " + errors.front());
    }
    return result;
}

ScalingResult scaling_check(const TimingReport& report, double tolerance) {
    report.validate();
    if (!(tolerance >= 1.0)) throw std::invalid_argument("scaling tolerance must be >= 1");
    // (worker_count, training_len_s) -> fraction -> wall times
    std::map<std::pair<std::size_t, double>, std::map<double, std::vector<double>>> groups;
    for (const auto& r : report.rows) {
        if (!(r.corpus_fraction > 0.0)) throw std::invalid_argument("timing rows need corpus_fraction > 0");
        groups[{r.worker_count, r.training_len_s}][r.corpus_fraction].push_back(r.wall_time_s);
    }
    ScalingResult result;
    result.pass = true;
    for (const auto& [key, by_fraction] : groups) {
        std::vector<std::pair<double, double>> points;  // fraction, median time
        for (const auto& [fraction, times] : by_fraction) points.emplace_back(fraction, median(times));
        for (std::size_t a = 0; a < points.size(); ++a) {
            for (std::size_t b = a + 1; b < points.size(); ++b) {
                ScalingPair p;
                p.worker_count = key.first;
                p.fraction_small = points[a].first;
                p.fraction_large = points[b].first;
                p.fraction_ratio = points[b].first / points[a].first;
                p.time_ratio = points[b].second / points[a].second;
                p.deviation = std::max(p.time_ratio / p.fraction_ratio, p.fraction_ratio / p.time_ratio);
                p.pass = p.deviation <= tolerance;
                result.pass = result.pass && p.pass;
                result.pairs.push_back(p);
            }
        }
    }
    if (result.pairs.empty()) {
        throw std::invalid_argument("scaling check needs two or more fractions at the same worker count");
    }
    return result;
}

std::string scaling_table_text(const ScalingResult& result) {
    std::ostringstream out;
    out << pad_left("workers", 8) << pad_left("fractions", 16) << pad_left("frac_ratio", 12)
        << pad_left("time_ratio", 12) << pad_left("deviation", 11) << pad_left("result", 8) << '\n';
    for (const auto& p : result.pairs) {
        char fr[48], a[32], b[32], c[32];
        std::snprintf(fr, sizeof fr, "%g%%/%g%%", p.fraction_large * 100.0, p.fraction_small * 100.0);
        std::snprintf(a, sizeof a, "%.3f", p.fraction_ratio);
        std::snprintf(b, sizeof b, "%.3f", p.time_ratio);
        std::snprintf(c, sizeof c, "%.3f", p.deviation);
        out << pad_left(std::to_string(p.worker_count), 8) << pad_left(fr, 16) << pad_left(a, 12) << pad_left(b, 12)
            << pad_left(c, 11) << pad_left(p.pass ? "pass" : "FAIL", 8) << '\n';
    }
    out << (result.pass ? "scaling: pass\n" : "scaling: FAIL\n");
    return out.str();
}

}  // namespace orchive
