#include <doctest.h>

#include <fstream>
#include <set>
#include <sstream>

#include "orchive/experiments.hpp"
#include "orchive/synth.hpp"
#include "support.hpp"

using namespace orchive;

namespace {

std::string file_bytes(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

/// A cheap texture-dimension model: meaningless decisions, but deterministic
/// and shaped like a real segmentation model.
SvmModel texture_blob_model() {
    Dataset d = testing::blob_dataset(3, 12, kTextureFeatureCount, 3.0, 77);
    d.label_set = LabelSet::three_class();
    d.feature_names = texture_feature_names();
    SvmModel m = train(d);
    m.memory = 20;
    return m;
}

TimingReport report_of(std::initializer_list<std::pair<double, double>> fraction_times, std::size_t workers = 1) {
    TimingReport r;
    for (const auto& [f, t] : fraction_times) r.rows.push_back({30.0, f, workers, t});
    return r;
}

}  // namespace

TEST_SUITE("experiments") {
    TEST_CASE("round-robin partitions") {
        const auto p = partition_round_robin(10, 3);
        REQUIRE(p.size() == 3);
        CHECK(p[0] == std::vector<std::size_t>{0, 3, 6, 9});
        CHECK(p[1] == std::vector<std::size_t>{1, 4, 7});
        CHECK(p[2] == std::vector<std::size_t>{2, 5, 8});
        CHECK(partition_round_robin(2, 4)[3].empty());
        CHECK_THROWS(partition_round_robin(5, 0));
    }

    TEST_CASE("fraction counts") {
        CHECK(fraction_count(100, 0.01) == 1);
        CHECK(fraction_count(100, 0.05) == 5);
        CHECK(fraction_count(100, 0.1) == 10);
        CHECK(fraction_count(100, 1.0) == 100);
        CHECK(fraction_count(7, 0.5) == 4);
        CHECK(fraction_count(3, 0.01) == 1);
        CHECK_THROWS(fraction_count(10, 0.0));
        CHECK_THROWS(fraction_count(10, 1.5));
    }

    TEST_CASE("dd:hh:mm:ss formatting") {
        CHECK(format_dhms(318) == "00:00:05:18");
        CHECK(format_dhms(32465) == "00:09:01:05");
        CHECK(format_dhms(2 * 86400 + 4 * 3600 + 18 * 60 + 32) == "02:04:18:32");
        CHECK(format_dhms(0.4) == "00:00:00:00");
        CHECK(parse_dhms("00:00:50:58") == 3058.0);
        CHECK(parse_dhms("02:04:18:32") == 188312.0);
        CHECK_THROWS(parse_dhms("00:06:16"));
        CHECK_THROWS(parse_dhms("00:00:61:00"));
        for (double s : {0.0, 59.0, 3600.0, 86399.0, 1e6}) CHECK(parse_dhms(format_dhms(s)) == s);
    }

    TEST_CASE("published 30-second timing block scales linearly") {
        TimingReport r;
        for (const auto& [f, text] : std::vector<std::pair<double, std::string>>{
                 {0.01, "00:00:05:18"}, {0.05, "00:00:25:20"}, {0.10, "00:00:50:58"}, {1.00, "00:09:01:05"}}) {
            r.rows.push_back({30.0, f, 1, parse_dhms(text)});
        }
        const ScalingResult s = scaling_check(r);
        CHECK(s.pass);
        CHECK(s.pairs.size() == 6);
        for (const auto& p : s.pairs) CHECK(p.deviation < 1.2);
    }

    TEST_CASE("scaling check examples") {
        const ScalingResult linear = scaling_check(report_of({{0.01, 10.0}, {0.1, 100.0}, {1.0, 1000.0}}));
        CHECK(linear.pass);
        CHECK(linear.pairs.size() == 3);
        CHECK(linear.pairs[0].deviation == doctest::Approx(1.0));

        const ScalingResult flat = scaling_check(report_of({{0.01, 10.0}, {1.0, 20.0}}));
        CHECK_FALSE(flat.pass);
        CHECK(flat.pairs[0].deviation == doctest::Approx(50.0));

        // Repeats use the median, so one outlier does not fail the pair.
        CHECK(scaling_check(report_of({{0.1, 1.0}, {0.1, 1.1}, {0.1, 9.0}, {1.0, 10.5}})).pass);

        CHECK_THROWS_AS(scaling_check(report_of({{0.1, 1.0}})), std::invalid_argument);
        // Different worker counts never pair up.
        TimingReport mixed = report_of({{0.1, 1.0}});
        mixed.rows.push_back({30.0, 1.0, 4, 3.0});
        CHECK_THROWS_AS(scaling_check(mixed), std::invalid_argument);
        CHECK(scaling_table_text(linear).find("scaling: pass") != std::string::npos);
    }

    TEST_CASE("timing CSV round trip") {
        TimingReport r;
        r.rows = {{30.0, 0.01, 1, 0.151}, {30.0, 0.1, 4, 1.25}, {240.0, 1.0, 8, 12345.678}};
        const std::string csv = timing_to_csv(r);
        CHECK(csv.rfind("training_len_s,corpus_fraction,worker_count,wall_time_s,wall_time\n", 0) == 0);
        CHECK(timing_from_csv(csv).rows == r.rows);
        testing::TempDir dir;
        write_timing_csv(r, dir / "t.csv");
        CHECK(read_timing_csv(dir / "t.csv").rows == r.rows);
        CHECK_THROWS(timing_from_csv("training_len_s,corpus_fraction,worker_count,wall_time_s\n30,0.1,1,0\n"));
        TimingReport bad;
        bad.rows = {{30.0, 0.1, 1, -1.0}};
        CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    }

    TEST_CASE("sweep grid validation") {
        SweepGrid g;
        CHECK_NOTHROW(g.validate());
        CHECK(g.windows.size() * g.memories.size() == 12);
        g.windows = {1000};
        CHECK_THROWS(g.validate());
        g = SweepGrid{};
        g.memories = {};
        CHECK_THROWS(g.validate());
        g = SweepGrid{};
        g.folds = 1;
        CHECK_THROWS(g.validate());
    }
}

TEST_SUITE("synthesis") {
    TEST_CASE("three-class corpus counts and determinism") {
        testing::TempDir a, b;
        SyntheticCorpusSpec spec;
        spec.seed = 5;
        const GeneratedCorpus ca = generate_synthetic_corpus(spec, a.path(), 4);
        const GeneratedCorpus cb = generate_synthetic_corpus(spec, b.path(), 1);
        CHECK(ca.entries.size() == 90);
        CHECK(ca.annotations.size() == 90);
        std::size_t wavs = 0;
        for (const auto& e : std::filesystem::directory_iterator(a / "wav")) wavs += e.path().extension() == ".wav";
        CHECK(wavs == 90);
        std::map<std::string, std::size_t> per_class;
        for (const auto& ann : ca.annotations) ++per_class[ann.label];
        CHECK(per_class == std::map<std::string, std::size_t>{{"background", 30}, {"orca", 30}, {"voice", 30}});
        for (std::size_t i = 0; i < ca.entries.size(); ++i) {
            CHECK(file_bytes(ca.entries[i].path) == file_bytes(cb.entries[i].path));
        }
        CHECK(file_bytes(ca.annotations_path) == file_bytes(cb.annotations_path));

        testing::TempDir c;
        spec.seed = 6;
        const GeneratedCorpus cc = generate_synthetic_corpus(spec, c.path());
        CHECK(file_bytes(cc.entries[0].path) != file_bytes(ca.entries[0].path));
    }

    TEST_CASE("annotations span each clip and load back") {
        testing::TempDir dir;
        SyntheticCorpusSpec spec;
        spec.kind = CorpusKind::call_types;
        spec.clips_per_class = 3;
        const GeneratedCorpus c = generate_synthetic_corpus(spec, dir.path());
        CHECK(c.labels.names() == call_type_labels());
        CHECK(c.annotations.size() == 18);
        CHECK(load_manifest(c.manifest_path) == c.entries);
        CHECK(read_annotation_log(c.annotations_path).size() == 18);
        for (std::size_t i = 0; i < c.entries.size(); ++i) {
            CHECK(c.annotations[i].recording_id == c.entries[i].recording_id);
            CHECK(c.annotations[i].start_s == 0.0);
            CHECK(c.annotations[i].end_s == doctest::Approx(c.entries[i].duration_s));
            CHECK(load_wav(c.entries[i].path).duration_seconds() == doctest::Approx(c.entries[i].duration_s));
        }
    }

    TEST_CASE("recordings carry contiguous ground truth") {
        testing::TempDir dir;
        SyntheticRecordingSpec spec;
        spec.count = 3;
        spec.duration_s = 25.0;
        const GeneratedCorpus c = generate_synthetic_recordings(spec, dir.path(), 2);
        REQUIRE(c.entries.size() == 3);
        for (const auto& e : c.entries) {
            CHECK(e.duration_s == doctest::Approx(25.0));
            double cursor = 0.0;
            std::string previous;
            for (const auto& a : c.annotations) {
                if (a.recording_id != e.recording_id) continue;
                CHECK(a.start_s == doctest::Approx(cursor));
                CHECK(a.label != previous);
                CHECK(c.labels.contains(a.label));
                cursor = a.end_s;
                previous = a.label;
            }
            CHECK(cursor == doctest::Approx(25.0));
        }
    }

    TEST_CASE("synthetic calls and voice are unit RMS") {
        orchive::Rng rng(3);
        for (CallContour c : kAllContours) {
            const auto x = synthesize_call(c, 44100, 44100, rng);
            double e = 0.0;
            for (double v : x) e += v * v;
            CHECK(std::sqrt(e / static_cast<double>(x.size())) == doctest::Approx(1.0).epsilon(1e-9));
        }
        const auto v = synthesize_voice(44100, 44100, rng);
        double e = 0.0;
        for (double s : v) e += s * s;
        CHECK(std::sqrt(e / static_cast<double>(v.size())) == doctest::Approx(1.0).epsilon(1e-9));
    }

    TEST_CASE("held-out split of the three-class corpus") {
        testing::TempDir dir;
        SyntheticCorpusSpec spec;
        spec.seed = 9;
        const GeneratedCorpus c = generate_synthetic_corpus(spec, dir.path(), 4);
        const ManifestAudioSource source(c.entries);
        BuildOptions build;
        build.threads = 4;
        const Dataset d = build_dataset(c.annotations, source, c.labels, build).dataset;
        // Per class: first 21 clips train, last 9 test.
        std::vector<std::size_t> train_idx, test_idx;
        std::vector<std::size_t> seen(d.label_set.size(), 0);
        for (std::size_t i = 0; i < d.size(); ++i) {
            (seen[d.instances[i].label]++ < 21 ? train_idx : test_idx).push_back(i);
        }
        const SvmModel m = train(d, {}, train_idx);
        std::size_t ok = 0;
        for (std::size_t i : test_idx) ok += predict(m, d.instances[i].features).label == d.instances[i].label;
        const double accuracy = static_cast<double>(ok) / static_cast<double>(test_idx.size());
        MESSAGE("70/30 accuracy " << accuracy);
        CHECK(accuracy >= 0.95);
    }
}

TEST_SUITE("experiments") {
    TEST_CASE("a 2x2 sweep yields 4 ordered rows") {
        testing::TempDir dir;
        SyntheticCorpusSpec spec;
        spec.clips_per_class = 6;
        const GeneratedCorpus c = generate_synthetic_corpus(spec, dir.path());
        const ManifestAudioSource source(c.entries);
        SweepGrid g;
        g.windows = {1024, 2048};
        g.memories = {10, 20};
        g.folds = 3;
        const auto rows = run_sweep(g, c.annotations, source, c.labels);
        REQUIRE(rows.size() == 4);
        CHECK(rows[0].window == 1024);
        CHECK(rows[0].hop == 512);
        CHECK(rows[1].memory == 20);
        CHECK(rows[3].window == 2048);
        for (const auto& r : rows) {
            CHECK(r.accuracy >= 0.0);
            CHECK(r.accuracy <= 1.0);
            CHECK(r.instances == 18);
        }
        CHECK(&sweep_cell(rows, 2048, 10) == &rows[2]);
        CHECK(sweep_memory_mean(rows, 10) == doctest::Approx((rows[0].accuracy + rows[2].accuracy) / 2));
        const std::string csv = sweep_table_csv(rows);
        CHECK(std::count(csv.begin(), csv.end(), '\n') == 5);
        CHECK(sweep_table_text(rows).find("2048") != std::string::npos);
    }

    TEST_CASE("preprocessing comparison reports each kind") {
        testing::TempDir dir;
        SyntheticCorpusSpec spec;
        spec.clips_per_class = 6;
        const GeneratedCorpus c = generate_synthetic_corpus(spec, dir.path());
        const ManifestAudioSource source(c.entries);
        BuildOptions build;
        build.frame_spec = FrameSpec::half_overlap(512);
        const auto rows = run_preprocessing_comparison(
            {Preprocessing::none, Preprocessing::trim_silence, Preprocessing::middle_extract}, c.annotations, source,
            c.labels, build, 3);
        REQUIRE(rows.size() == 3);
        CHECK(rows[0].instances == 18);
        CHECK(rows[0].skipped == 0);
        for (const auto& r : rows) CHECK(r.instances + r.skipped == 18);
        CHECK(preprocessing_table_text(rows).find("trim_silence") != std::string::npos);
    }

    TEST_CASE("batch dry run writes worker lists only") {
        testing::TempDir dir;
        std::vector<ManifestEntry> manifest;
        for (int i = 0; i < 10; ++i) manifest.push_back({"r" + std::to_string(i), dir / ("r" + std::to_string(i) + ".wav"), 1.0});
        BatchOptions o;
        o.workers = 3;
        o.fraction = 0.5;
        o.dry_run = true;
        o.out_dir = dir.path();
        const BatchResult r = run_batch(manifest, texture_blob_model(), o);
        REQUIRE(r.partitions.size() == 3);
        CHECK(r.partitions[0] == std::vector<std::string>{"r0", "r3"});
        CHECK(r.partitions[2] == std::vector<std::string>{"r2"});
        CHECK(r.timelines.empty());
        CHECK(file_bytes(dir / "worker_1.txt") == (dir / "r1.wav").string() + "\n" + (dir / "r4.wav").string() + "\n");
    }

    TEST_CASE("batch output is identical for any worker count") {
        testing::TempDir dir;
        SyntheticRecordingSpec spec;
        spec.count = 6;
        spec.duration_s = 8.0;
        const GeneratedCorpus c = generate_synthetic_recordings(spec, dir / "rec", 2);
        const SvmModel model = texture_blob_model();
        std::vector<std::string> outputs;
        for (std::size_t workers : {1u, 4u}) {
            const auto out = dir / ("out" + std::to_string(workers));
            std::filesystem::create_directories(out);
            BatchOptions o;
            o.workers = workers;
            o.out_dir = out;
            o.training_len_s = 30.0;
            const BatchResult r = run_batch(c.entries, model, o);
            CHECK(r.timelines.size() == 6);
            CHECK(r.failures.empty());
            CHECK(r.timing.worker_count == workers);
            CHECK(r.timing.corpus_fraction == 1.0);
            CHECK(r.timing.training_len_s == 30.0);
            CHECK(r.timing.wall_time_s > 0.0);
            std::string all;
            for (const auto& e : c.entries) {
                all += file_bytes(out / (e.recording_id + ".json"));
                all += file_bytes(out / (e.recording_id + ".csv"));
            }
            outputs.push_back(all);
        }
        CHECK(outputs[0] == outputs[1]);
    }

    TEST_CASE("batch failures are collected, and all-failed throws") {
        testing::TempDir dir;
        SyntheticRecordingSpec spec;
        spec.count = 2;
        spec.duration_s = 5.0;
        GeneratedCorpus c = generate_synthetic_recordings(spec, dir.path());
        c.entries.push_back({"ghost", dir / "ghost.wav", 5.0});
        BatchOptions o;
        o.workers = 2;
        const SvmModel model = texture_blob_model();
        const BatchResult r = run_batch(c.entries, model, o);
        CHECK(r.timelines.size() == 2);
        REQUIRE(r.failures.size() == 1);
        CHECK(r.failures[0].recording_id == "ghost");
        const std::vector<ManifestEntry> ghosts{{"g1", dir / "g1.wav", 1.0}, {"g2", dir / "g2.wav", 1.0}};
        CHECK_THROWS_AS(run_batch(ghosts, model, o), BatchError);
        CHECK_THROWS(run_batch({}, model, o));
    }
}
