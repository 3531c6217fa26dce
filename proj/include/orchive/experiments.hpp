#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "orchive/annotations.hpp"
#include "orchive/dataset.hpp"
#include "orchive/segmenter.hpp"
#include "orchive/svm.hpp"

namespace orchive {

// ---- DSP parameter sweep ----

struct SweepGrid {
    std::vector<std::size_t> windows{512, 1024, 2048, 4096};
    std::vector<std::size_t> memories{20, 40, 80};
    std::size_t folds = 10;

    /// Throws std::invalid_argument for empty lists, non-power-of-two
    /// windows, zero memory or folds < 2.
    void validate() const;
};

struct SweepRow {
    std::size_t window = 0;
    std::size_t hop = 0;
    std::size_t memory = 0;
    double accuracy = 0.0;
    std::size_t instances = 0;
};

struct SweepOptions {
    TrainOptions train{};
    PreprocessOptions preprocess{};
    std::uint64_t seed = 1;
    std::size_t threads = 1;
};

/// One cross-validated accuracy per (window, memory) cell, hop = window/2.
/// Each clip contributes the texture of the `memory` frames centred on its
/// middle. Rows are ordered by window, then memory.
std::vector<SweepRow> run_sweep(const SweepGrid& grid, const std::vector<Annotation>& annotations,
                                const AudioSource& source, const LabelSet& labels, const SweepOptions& options = {});

/// Window rows by memory columns, accuracies in percent.
std::string sweep_table_text(const std::vector<SweepRow>& rows);
std::string sweep_table_csv(const std::vector<SweepRow>& rows);

/// Mean accuracy over all rows with the given memory.
double sweep_memory_mean(const std::vector<SweepRow>& rows, std::size_t memory);
const SweepRow& sweep_cell(const std::vector<SweepRow>& rows, std::size_t window, std::size_t memory);

// ---- preprocessing comparison ----

struct PreprocessingRow {
    Preprocessing preprocessing = Preprocessing::none;
    std::size_t instances = 0;
    std::size_t skipped = 0;
    double accuracy = 0.0;  // NaN when too few instances survived
};

std::vector<PreprocessingRow> run_preprocessing_comparison(const std::vector<Preprocessing>& kinds,
                                                           const std::vector<Annotation>& annotations,
                                                           const AudioSource& source, const LabelSet& labels,
                                                           const BuildOptions& build, std::size_t folds,
                                                           const SweepOptions& options = {});
std::string preprocessing_table_text(const std::vector<PreprocessingRow>& rows);

// ---- timing ----

struct TimingRow {
    double training_len_s = 0.0;
    double corpus_fraction = 0.0;
    std::size_t worker_count = 1;
    double wall_time_s = 0.0;

    friend bool operator==(const TimingRow&, const TimingRow&) = default;
};

struct TimingReport {
    std::vector<TimingRow> rows;

    /// Throws std::invalid_argument if a wall time is not positive.
    void validate() const;
};

/// Seconds rounded to whole seconds as dd:hh:mm:ss.
std::string format_dhms(double seconds);
double parse_dhms(const std::string& text);

std::string timing_to_csv(const TimingReport& report);
TimingReport timing_from_csv(const std::string& text);
std::string timing_table_text(const TimingReport& report);
void write_timing_csv(const TimingReport& report, const std::filesystem::path& path);
TimingReport read_timing_csv(const std::filesystem::path& path);

// ---- batch segmentation ----

/// ceil(fraction * n), at least 1. Throws for fraction outside (0, 1].
std::size_t fraction_count(std::size_t n, double fraction);

/// Item i goes to worker i % workers.
std::vector<std::vector<std::size_t>> partition_round_robin(std::size_t count, std::size_t workers);

struct BatchOptions {
    std::size_t workers = 1;
    double fraction = 1.0;
    /// Per-recording <id>.json and <id>.csv are written here when set.
    std::filesystem::path out_dir;
    SegmentOptions segment{};
    /// Only compute the partitions (and write worker_<n>.txt lists).
    bool dry_run = false;
    /// Recorded in the timing row.
    double training_len_s = 0.0;
};

struct BatchFailure {
    std::string recording_id;
    std::string error;
};

struct BatchResult {
    /// Recording ids per worker.
    std::vector<std::vector<std::string>> partitions;
    /// Successful timelines in manifest order.
    std::vector<SegmentTimeline> timelines;
    std::vector<BatchFailure> failures;
    TimingRow timing;
};

class BatchError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Segments the first fraction_count(N, fraction) recordings on `workers`
/// threads. Failures are logged and collected; throws BatchError only when
/// every selected recording fails.
BatchResult run_batch(const std::vector<ManifestEntry>& manifest, const SvmModel& model, const BatchOptions& options);

// ---- scaling ----

struct ScalingPair {
    std::size_t worker_count = 1;
    double fraction_small = 0.0;
    double fraction_large = 0.0;
    double fraction_ratio = 0.0;
    double time_ratio = 0.0;
    /// max(time_ratio / fraction_ratio, fraction_ratio / time_ratio).
    double deviation = 0.0;
    bool pass = false;
};

struct ScalingResult {
    bool pass = false;
    std::vector<ScalingPair> pairs;
};

/// Compares every pair of distinct fractions run with the same worker count
/// and training length; repeated rows at one fraction use their median time.
/// Throws std::invalid_argument when no group has two distinct fractions.
ScalingResult scaling_check(const TimingReport& report, double tolerance = 1.5);
std::string scaling_table_text(const ScalingResult& result);

}  // namespace orchive
