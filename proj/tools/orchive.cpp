// Command-line front end: feature extraction, training, evaluation,
// segmentation, synthetic data, experiments and the annotation service.

#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "orchive/arff.hpp"
#include "orchive/dataset.hpp"
#include "orchive/experiments.hpp"
#include "orchive/model_io.hpp"
#include "orchive/segmenter.hpp"
#include "orchive/service.hpp"
#include "orchive/svm.hpp"
#include "orchive/synth.hpp"
#include "orchive/util.hpp"

namespace fs = std::filesystem;
using namespace orchive;

namespace {

struct FeatureArgs {
    std::size_t window = 4096;
    std::size_t hop = 0;  // 0 = window / 2
    std::string window_function = "hamming";
    std::size_t memory = kDefaultMemory;
    std::string preprocess = "none";

    void add_to(CLI::App* app) {
        app->add_option("--window", window, "analysis window size (power of two)");
        app->add_option("--hop", hop, "hop size (default window/2)");
        app->add_option("--window-function", window_function, "hamming | hann | rectangular");
        app->add_option("--memory", memory, "texture window length in frames");
        app->add_option("--preprocess", preprocess, "none | trim_silence | middle_extract");
    }

    FrameSpec frame_spec() const {
        FrameSpec s{window, hop ? hop : window / 2, parse_window_function(window_function)};
        s.validate();
        return s;
    }

    BuildOptions build(std::size_t threads) const {
        BuildOptions b;
        b.frame_spec = frame_spec();
        b.preprocess.kind = parse_preprocessing(preprocess);
        b.memory = memory;
        b.threads = threads;
        return b;
    }
};

LabelSet parse_labels(const std::string& text) {
    std::vector<std::string> names;
    for (const auto& s : split(text, ',')) {
        if (!trim(s).empty()) names.push_back(trim(s));
    }
    return LabelSet(std::move(names));
}

Dataset dataset_from_corpus(const fs::path& manifest, const fs::path& annotations, const LabelSet& labels,
                            const BuildOptions& build) {
    ManifestAudioSource source(load_manifest(manifest));
    BuildResult r = build_dataset(read_annotation_log(annotations), source, labels, build);
    for (const auto& s : r.skipped) log_warning("skipped " + s.annotation_id + ": " + s.reason);
    return std::move(r.dataset);
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::trunc);
    if (!out || !(out << text)) throw std::runtime_error("cannot write " + path.string());
}

Service* g_service = nullptr;

void on_signal(int) {
    if (g_service) g_service->stop();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Orca call / background / voice classification toolkit"};
    app.require_subcommand(1);
    std::size_t threads = 0;
    app.add_option("--threads", threads, "worker threads (0 = hardware concurrency)");

    // extract
    auto* extract = app.add_subcommand("extract", "build texture-feature instances and write ARFF");
    fs::path ex_manifest, ex_annotations, ex_out;
    std::string ex_labels = "orca,background,voice";
    FeatureArgs ex_features;
    extract->add_option("--manifest", ex_manifest)->required();
    extract->add_option("--annotations", ex_annotations)->required();
    extract->add_option("--out", ex_out, "ARFF output")->required();
    extract->add_option("--labels", ex_labels, "comma-separated class labels");
    ex_features.add_to(extract);

    // train
    auto* trainc = app.add_subcommand("train", "train a one-vs-one SVM from an ARFF file");
    fs::path tr_arff, tr_out;
    double tr_c = 1.0;
    std::string tr_kernel = "linear";
    FeatureArgs tr_features;
    trainc->add_option("--arff", tr_arff)->required();
    trainc->add_option("--out", tr_out, "model JSON")->required();
    trainc->add_option("--C", tr_c, "soft-margin penalty");
    trainc->add_option("--kernel", tr_kernel, "linear | rbf:<gamma>");
    tr_features.add_to(trainc);

    // crossval
    auto* cv = app.add_subcommand("crossval", "stratified k-fold cross-validation");
    fs::path cv_arff, cv_manifest, cv_annotations;
    std::string cv_labels = "orca,background,voice", cv_kernel = "linear";
    std::size_t cv_k = 10, cv_frames = 0;
    std::uint64_t cv_seed = 1;
    double cv_c = 1.0;
    FeatureArgs cv_features;
    cv->add_option("--arff", cv_arff);
    cv->add_option("--manifest", cv_manifest);
    cv->add_option("--annotations", cv_annotations);
    cv->add_option("--labels", cv_labels);
    cv->add_option("--k", cv_k, "folds");
    cv->add_option("--seed", cv_seed);
    cv->add_option("--C", cv_c);
    cv->add_option("--kernel", cv_kernel);
    cv->add_option("--frame-memory", cv_frames, "also report a per-frame matrix using this texture memory");
    cv_features.add_to(cv);

    // segment
    auto* seg = app.add_subcommand("segment", "segment a WAV recording into a labelled timeline");
    fs::path sg_model, sg_wav, sg_out, sg_csv;
    SegmentOptions sg_options;
    seg->add_option("--model", sg_model)->required();
    seg->add_option("--wav", sg_wav)->required();
    seg->add_option("--out", sg_out, "timeline JSON")->required();
    seg->add_option("--csv", sg_csv, "timeline CSV (default: --out with .csv)");
    seg->add_option("--window", sg_options.window_size, "override the model's window size");
    seg->add_option("--hop", sg_options.hop_size, "override the model's hop size");
    seg->add_option("--memory", sg_options.memory, "override the model's texture memory");
    seg->add_option("--radius", sg_options.smoothing_radius, "majority-smoothing radius in frames");
    seg->add_option("--min-segment", sg_options.min_segment_s, "minimum segment length in seconds");

    // synth
    auto* synth = app.add_subcommand("synth", "generate a synthetic corpus");
    fs::path sy_out;
    std::string sy_kind = "three";
    SyntheticCorpusSpec sy_spec;
    SyntheticRecordingSpec sy_rec;
    sy_rec.count = 0;
    synth->add_option("--out", sy_out)->required();
    synth->add_option("--kind", sy_kind, "three | calls");
    synth->add_option("--clips", sy_spec.clips_per_class, "clips per class");
    synth->add_option("--snr-min", sy_spec.snr_db_min);
    synth->add_option("--snr-max", sy_spec.snr_db_max);
    synth->add_option("--seed", sy_spec.seed);
    synth->add_option("--recordings", sy_rec.count, "generate N long recordings instead of clips");
    synth->add_option("--duration", sy_rec.duration_s, "recording length in seconds");

    // sweep
    auto* sweep = app.add_subcommand("sweep", "window/memory parameter sweep with cross-validation");
    fs::path sw_manifest, sw_annotations, sw_csv;
    std::string sw_labels = "orca,background,voice", sw_kernel = "linear";
    std::vector<std::size_t> sw_windows{512, 1024, 2048, 4096}, sw_memories{20, 40, 80};
    std::size_t sw_k = 10;
    std::uint64_t sw_seed = 1;
    double sw_c = 1.0;
    sweep->add_option("--manifest", sw_manifest)->required();
    sweep->add_option("--annotations", sw_annotations)->required();
    sweep->add_option("--labels", sw_labels);
    sweep->add_option("--windows", sw_windows)->delimiter(',');
    sweep->add_option("--memories", sw_memories)->delimiter(',');
    sweep->add_option("--k", sw_k);
    sweep->add_option("--seed", sw_seed);
    sweep->add_option("--C", sw_c);
    sweep->add_option("--kernel", sw_kernel);
    sweep->add_option("--csv", sw_csv, "also write the table as CSV");

    // batch
    auto* batch = app.add_subcommand("batch", "segment a manifest with a worker pool");
    fs::path bt_manifest, bt_model, bt_timing;
    BatchOptions bt_options;
    batch->add_option("--manifest", bt_manifest)->required();
    batch->add_option("--model", bt_model)->required();
    batch->add_option("--workers", bt_options.workers);
    batch->add_option("--fraction", bt_options.fraction, "leading fraction of the manifest to process");
    batch->add_option("--out", bt_options.out_dir, "per-recording output directory");
    batch->add_flag("--dry-run", bt_options.dry_run, "only print the per-worker file lists");
    batch->add_option("--training-len", bt_options.training_len_s, "training-set length recorded in the timing row");
    batch->add_option("--timing-csv", bt_timing, "append the timing row to this CSV");

    // scaling-report
    auto* scaling = app.add_subcommand("scaling-report", "check wall-time scaling of a timing CSV");
    fs::path sc_timing;
    double sc_tolerance = 1.5;
    scaling->add_option("--timing", sc_timing)->required();
    scaling->add_option("--tolerance", sc_tolerance, "allowed factor between time and fraction ratios");

    // serve
    auto* serve = app.add_subcommand("serve", "run the annotation HTTP service");
    ServiceConfig sv_config;
    std::string sv_labels = "orca,background,voice";
    serve->add_option("--manifest", sv_config.manifest)->required();
    serve->add_option("--annotations", sv_config.annotations)->required();
    serve->add_option("--models-dir", sv_config.models_dir);
    serve->add_option("--port", sv_config.port);
    serve->add_option("--host", sv_config.host);
    serve->add_option("--labels", sv_labels);
    serve->add_option("--static", sv_config.static_dir, "directory served at /");
    serve->add_option("--job-workers", sv_config.job_workers);

    CLI11_PARSE(app, argc, argv);
    if (threads == 0) threads = default_thread_count();

    try {
        if (*extract) {
            const Dataset d =
                dataset_from_corpus(ex_manifest, ex_annotations, parse_labels(ex_labels), ex_features.build(threads));
            export_arff(d, ex_out);
            std::printf("%zu instances, %zu features -> %s\n", d.size(), d.dimension(), ex_out.c_str());
        } else if (*trainc) {
            const Dataset d = read_arff(tr_arff);
            TrainOptions options;
            options.C = tr_c;
            options.kernel = Kernel::parse(tr_kernel);
            options.threads = threads;
            SvmModel model = train(d, options);
            model.frame_spec = tr_features.frame_spec();
            model.memory = tr_features.memory;
            save_model(model, tr_out);
            std::printf("trained %zu machines on %zu instances -> %s\n", model.machines.size(), d.size(),
                        tr_out.c_str());
        } else if (*cv) {
            Dataset d;
            if (!cv_arff.empty()) {
                d = read_arff(cv_arff);
            } else {
                if (cv_manifest.empty() || cv_annotations.empty()) {
                    throw std::invalid_argument("crossval needs --arff or --manifest with --annotations");
                }
                BuildOptions b = cv_features.build(threads);
                b.frame_vector_memory = cv_frames;
                d = dataset_from_corpus(cv_manifest, cv_annotations, parse_labels(cv_labels), b);
            }
            TrainOptions options;
            options.C = cv_c;
            options.kernel = Kernel::parse(cv_kernel);
            options.threads = threads;
            const CrossValidationResult r = cross_validate(d, cv_k, cv_seed, options);
            std::printf("clips: %zu, accuracy %.2f%%\n%s", r.clips.total(), r.accuracy * 100.0,
                        r.clips.to_text(d.label_set).c_str());
            if (r.frames) {
                std::printf("frames: %zu, accuracy %.2f%%\n%s", r.frames->total(), r.frames->accuracy() * 100.0,
                            r.frames->to_text(d.label_set).c_str());
            }
        } else if (*seg) {
            const SvmModel model = load_model(sg_model);
            const SegmentTimeline t = segment_wav(sg_wav, model, sg_options, sg_wav.stem().string());
            fs::path csv = sg_csv.empty() ? fs::path(sg_out).replace_extension(".csv") : sg_csv;
            write_timeline(t, sg_out, csv);
            std::printf("%zu segments -> %s, %s\n", t.segments.size(), sg_out.c_str(), csv.c_str());
        } else if (*synth) {
            GeneratedCorpus c;
            if (sy_rec.count > 0) {
                sy_rec.seed = sy_spec.seed;
                sy_rec.snr_db_min = sy_spec.snr_db_min;
                sy_rec.snr_db_max = sy_spec.snr_db_max;
                c = generate_synthetic_recordings(sy_rec, sy_out, threads);
            } else {
                if (sy_kind == "three") sy_spec.kind = CorpusKind::three_class;
                else if (sy_kind == "calls") sy_spec.kind = CorpusKind::call_types;
                else throw std::invalid_argument("--kind must be three or calls");
                c = generate_synthetic_corpus(sy_spec, sy_out, threads);
            }
            std::printf("%zu recordings, %zu annotations -> %s\n", c.entries.size(), c.annotations.size(),
                        c.manifest_path.c_str());
        } else if (*sweep) {
            ManifestAudioSource source(load_manifest(sw_manifest));
            SweepGrid grid{sw_windows, sw_memories, sw_k};
            SweepOptions options;
            options.seed = sw_seed;
            options.threads = threads;
            options.train.C = sw_c;
            options.train.kernel = Kernel::parse(sw_kernel);
            const auto rows =
                run_sweep(grid, read_annotation_log(sw_annotations), source, parse_labels(sw_labels), options);
            std::fputs(sweep_table_text(rows).c_str(), stdout);
            if (!sw_csv.empty()) write_text(sw_csv, sweep_table_csv(rows));
        } else if (*batch) {
            const SvmModel model = load_model(bt_model);
            const BatchResult r = run_batch(load_manifest(bt_manifest), model, bt_options);
            if (bt_options.dry_run) {
                for (std::size_t w = 0; w < r.partitions.size(); ++w) {
                    std::printf("worker %zu:", w);
                    for (const auto& id : r.partitions[w]) std::printf(" %s", id.c_str());
                    std::printf("\n");
                }
                return 0;
            }
            TimingReport report{{r.timing}};
            std::fputs(timing_table_text(report).c_str(), stdout);
            std::printf("%zu ok, %zu failed\n", r.timelines.size(), r.failures.size());
            if (!bt_timing.empty()) {
                TimingReport all;
                if (fs::exists(bt_timing)) all = read_timing_csv(bt_timing);
                all.rows.push_back(r.timing);
                write_timing_csv(all, bt_timing);
            }
        } else if (*scaling) {
            const TimingReport report = read_timing_csv(sc_timing);
            std::fputs(timing_table_text(report).c_str(), stdout);
            const ScalingResult r = scaling_check(report, sc_tolerance);
            std::fputs(scaling_table_text(r).c_str(), stdout);
            return r.pass ? 0 : 1;
        } else if (*serve) {
            sv_config.labels = parse_labels(sv_labels);
            Service service(sv_config);
            g_service = &service;
            std::signal(SIGINT, on_signal);
            std::signal(SIGTERM, on_signal);
            service.run();
            g_service = nullptr;
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
