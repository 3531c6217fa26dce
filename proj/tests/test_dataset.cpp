#include <doctest.h>

#include <fstream>
#include <regex>
#include <set>
#include <sstream>

#include "oracles.hpp"
#include "orchive/arff.hpp"
#include "orchive/dataset.hpp"
#include "orchive/synth.hpp"
#include "support.hpp"

using namespace orchive;

namespace {

Dataset labelled(std::vector<std::size_t> per_class) {
    std::vector<std::string> names;
    for (std::size_t c = 0; c < per_class.size(); ++c) names.push_back("k" + std::to_string(c));
    Dataset d;
    d.label_set = LabelSet(names);
    d.feature_names = {"x"};
    for (std::size_t c = 0; c < per_class.size(); ++c) {
        for (std::size_t i = 0; i < per_class[c]; ++i) {
            d.instances.push_back({{static_cast<double>(d.instances.size())}, c, {}, {}});
        }
    }
    return d;
}

std::vector<std::string> lines_of(const std::string& text) {
    std::vector<std::string> out;
    std::istringstream in(text);
    for (std::string line; std::getline(in, line);) out.push_back(line);
    return out;
}

}  // namespace

TEST_SUITE("dataset") {
    TEST_CASE("label sets") {
        CHECK_THROWS(LabelSet({"one"}));
        CHECK_THROWS(LabelSet({"a", "a"}));
        const LabelSet l = LabelSet::three_class();
        CHECK(l.size() == 3);
        CHECK(l.index_of("voice") == 2);
        CHECK_FALSE(l.index_of("N1").has_value());
    }

    TEST_CASE("trim_silence keeps the tone region") {
        const int sr = 44100;
        std::vector<double> x(sr, 0.0);
        const auto t = testing::tone(440.0, 1.0, sr);
        x.insert(x.end(), t.begin(), t.end());
        x.insert(x.end(), sr, 0.0);
        const AudioBuffer trimmed = trim_silence(AudioBuffer(x, sr));
        const double hop = 0.01 * sr;
        CHECK(std::abs(static_cast<double>(trimmed.size()) - sr) <= 2 * hop);
        // Locate the trimmed region: it must start within one hop of the tone.
        const auto it = std::search(x.begin(), x.end(), trimmed.samples().begin(), trimmed.samples().begin() + 2000);
        REQUIRE(it != x.end());
        const auto start = static_cast<double>(it - x.begin());
        CHECK(std::abs(start - sr) <= hop);
        CHECK(std::abs(start + static_cast<double>(trimmed.size()) - 2.0 * sr) <= hop);
    }

    TEST_CASE("trim_silence identity, error and idempotence") {
        const AudioBuffer loud(testing::noise(44100, 0.8, 1), 44100);
        CHECK(trim_silence(loud) == loud);
        CHECK_THROWS_AS(trim_silence(AudioBuffer(std::vector<double>(44100, 0.0), 44100)), AllSilenceError);

        orchive::Rng rng(21);
        for (int trial = 0; trial < 20; ++trial) {
            std::vector<double> x;
            const int parts = 2 + static_cast<int>(rng.below(4));
            for (int p = 0; p < parts; ++p) {
                const double level = rng.uniform() < 0.5 ? 0.0 : rng.uniform(0.001, 0.9);
                const auto seg = testing::noise(static_cast<std::size_t>(rng.uniform(0.05, 0.6) * 22050), level,
                                                rng.next_u64());
                x.insert(x.end(), seg.begin(), seg.end());
            }
            x.push_back(0.5);
            const AudioBuffer once = trim_silence(AudioBuffer(x, 22050));
            CHECK(trim_silence(once) == once);
        }
    }

    TEST_CASE("middle_extract") {
        const int sr = 44100;
        const AudioBuffer b(testing::noise(10 * sr, 0.5, 2), sr);
        const AudioBuffer m = middle_extract(b, 0.023);
        CHECK(m == slice(b, 4.9885, 0.023));
        CHECK(std::abs(static_cast<double>(m.size()) - 0.023 * sr) <= 1.0);

        const AudioBuffer tiny(testing::noise(441, 0.5, 3), sr);
        CHECK(middle_extract(tiny, 0.023) == tiny);

        PreprocessOptions p;
        CHECK(p.middle_for("orca") == 0.023);
        CHECK(p.middle_for("background") == 0.15);
    }

    TEST_CASE("build_dataset skips bad clips and reports them") {
        MemoryAudioSource source;
        std::vector<double> x = testing::tone(500.0, 1.0, 44100);
        x.resize(x.size() + 44100, 0.0);
        source.add("r", AudioBuffer(x, 44100));
        const std::vector<Annotation> annotations{
            {"a1", "r", 0.0, 0.5, "orca", "t", "2026-01-01T00:00:00Z"},
            {"a2", "r", 0.2, 0.9, "voice", "t", "2026-01-01T00:00:00Z"},
            {"a3", "r", 1.2, 1.9, "background", "t", "2026-01-01T00:00:00Z"},
        };
        BuildOptions options;
        options.frame_spec = {1024, 512};
        options.preprocess.kind = Preprocessing::trim_silence;
        const BuildResult r = build_dataset(annotations, source, LabelSet::three_class(), options);
        CHECK(r.dataset.size() == 2);
        REQUIRE(r.skipped.size() == 1);
        CHECK(r.skipped[0].annotation_id == "a3");
        CHECK(r.dataset.dimension() == 34);
        CHECK(r.dataset.instances[0].source_id == "a1");

        CHECK_THROWS_AS(build_dataset({}, source, LabelSet::three_class(), options), EmptyDatasetError);
        const std::vector<Annotation> unknown{{"u", "nowhere", 0.0, 1.0, "orca", "", ""}};
        CHECK_THROWS_AS(build_dataset(unknown, source, LabelSet::three_class(), options), UnknownRecordingError);
    }

    TEST_CASE("197 call clips give 197 instances") {
        MemoryAudioSource source;
        std::vector<Annotation> annotations;
        SyntheticCorpusSpec spec;
        spec.min_duration_s = 0.5;
        spec.max_duration_s = 0.6;
        const auto& names = call_type_labels();
        orchive::Rng rng(197);
        for (std::size_t i = 0; i < 197; ++i) {
            const std::string& label = names[i % names.size()];
            const std::string id = "call" + std::to_string(i);
            const auto clip = synthesize_clip(label, spec, rng);
            annotations.push_back({id, id, 0.0, static_cast<double>(clip.size()) / 44100.0, label, "", ""});
            source.add(id, AudioBuffer(clip, 44100));
        }
        BuildOptions options;
        options.threads = 2;
        const BuildResult r = build_dataset(annotations, source, LabelSet(names), options);
        CHECK(r.dataset.size() == 197);
        CHECK(r.dataset.dimension() == 34);
        CHECK(r.skipped.empty());
        const auto counts = r.dataset.class_counts();
        CHECK(counts[0] == 33);
        CHECK(counts[5] == 32);
    }

    TEST_CASE("stratified folds") {
        const Dataset d = labelled({50, 50});
        const auto folds = stratified_kfold(d, 10, 42);
        REQUIRE(folds.size() == 10);
        std::set<std::size_t> seen;
        for (const auto& f : folds) {
            CHECK(f.size() == 10);
            std::size_t first = 0;
            for (std::size_t i : f) {
                first += d.instances[i].label == 0;
                CHECK(seen.insert(i).second);
            }
            CHECK(first == 5);
        }
        CHECK(seen.size() == 100);
        CHECK(stratified_kfold(d, 10, 42) == folds);
        CHECK(stratified_kfold(d, 10, 43) != folds);

        const Dataset three = labelled({10, 10, 10});
        for (const auto& f : stratified_kfold(three, 10, 7)) {
            std::vector<std::size_t> per(3, 0);
            for (std::size_t i : f) ++per[three.instances[i].label];
            CHECK(per == std::vector<std::size_t>{1, 1, 1});
        }

        CHECK_THROWS_AS(stratified_kfold(labelled({9, 10}), 10, 1), std::invalid_argument);
        CHECK_THROWS_AS(stratified_kfold(d, 1, 1), std::invalid_argument);
    }

    TEST_CASE("folds partition uneven data") {
        orchive::Rng rng(4);
        for (int trial = 0; trial < 30; ++trial) {
            const std::size_t k = 2 + rng.below(9);
            std::vector<std::size_t> sizes;
            for (int c = 0; c < 3; ++c) sizes.push_back(k + rng.below(20));
            const Dataset d = labelled(sizes);
            const auto folds = stratified_kfold(d, k, rng.next_u64());
            std::vector<int> hits(d.size(), 0);
            for (const auto& f : folds) {
                for (std::size_t i : f) ++hits[i];
            }
            CHECK(std::all_of(hits.begin(), hits.end(), [](int h) { return h == 1; }));
        }
    }

    TEST_CASE("ARFF layout") {
        Dataset d;
        d.label_set = LabelSet({"a", "b"});
        d.feature_names = {"f1", "f2"};
        d.instances.push_back({{0.5, -2.25}, 1, {}, {}});
        const auto lines = lines_of(to_arff(d, "demo"));
        REQUIRE(lines.size() == 6);
        CHECK(lines[0] == "@RELATION demo");
        CHECK(lines[1] == "@ATTRIBUTE f1 numeric");
        CHECK(lines[2] == "@ATTRIBUTE f2 numeric");
        CHECK(lines[3] == "@ATTRIBUTE class {a,b}");
        CHECK(lines[4] == "@DATA");
        CHECK(lines[5] == "0.5,-2.25,b");
    }

    TEST_CASE("ARFF round trip") {
        Dataset d = testing::blob_dataset(3, 40, 34, 2.0, 5);
        d.feature_names = texture_feature_names();
        orchive::Rng rng(6);
        for (auto& inst : d.instances) {
            for (double& v : inst.features) v *= std::pow(10.0, rng.uniform(-8.0, 8.0));
        }
        testing::TempDir dir;
        export_arff(d, dir / "d.arff");
        std::ifstream in(dir / "d.arff");
        std::stringstream text;
        text << in.rdbuf();

        std::size_t attributes = 0;
        for (const auto& line : lines_of(text.str())) attributes += line.rfind("@ATTRIBUTE", 0) == 0;
        CHECK(attributes == 35);

        const oracle::ArffTable ref = oracle::parse_arff(text.str());
        const Dataset back = read_arff(dir / "d.arff");
        REQUIRE(back.size() == d.size());
        CHECK(back.feature_names == d.feature_names);
        CHECK(back.label_set == d.label_set);
        CHECK(ref.attributes == d.feature_names);
        CHECK(ref.classes == d.label_set.names());
        for (std::size_t i = 0; i < d.size(); ++i) {
            CHECK(back.instances[i].label == d.instances[i].label);
            CHECK(ref.labels[i] == d.label_set[d.instances[i].label]);
            for (std::size_t j = 0; j < d.dimension(); ++j) {
                const double v = d.instances[i].features[j];
                CHECK(std::abs(back.instances[i].features[j] - v) <= 1e-9 * std::max(1.0, std::abs(v)));
                CHECK(ref.rows[i][j] == v);
            }
        }
    }

    TEST_CASE("ARFF parser accepts foreign spelling") {
        const std::string text =
            "% comment\n@relation 'x y'\n\n@attribute 'a b' NUMERIC\n@attribute c real\n"
            "@attribute class {'p q',r}\n@data\n1,2,'p q'\n3e-1, 4 ,r\n";
        const Dataset d = parse_arff(text);
        REQUIRE(d.size() == 2);
        CHECK(d.feature_names == std::vector<std::string>{"a b", "c"});
        CHECK(d.label_set.names() == std::vector<std::string>{"p q", "r"});
        CHECK(d.instances[1].features == std::vector<double>{0.3, 4.0});
        CHECK_THROWS(parse_arff("@relation x\n@attribute a numeric\n@attribute class {p}\n@data\n1,zz\n"));
    }

    TEST_CASE("manifest round trip with relative paths") {
        testing::TempDir dir;
        std::filesystem::create_directories(dir / "wav");
        const std::vector<ManifestEntry> entries{{"r1", dir / "wav" / "r1.wav", 1.5}, {"r2", dir / "wav" / "r2.wav", 3.0}};
        save_manifest(dir / "manifest.json", entries);
        std::ifstream in(dir / "manifest.json");
        std::stringstream text;
        text << in.rdbuf();
        CHECK(text.str().find(dir.path().string()) == std::string::npos);
        CHECK(load_manifest(dir / "manifest.json") == entries);
    }
}

TEST_SUITE("annotations") {
    TEST_CASE("append, list, remove and replay after restart") {
        testing::TempDir dir;
        const auto path = dir / "log.jsonl";
        std::vector<Annotation> before;
        {
            AnnotationLog log(path);
            const Annotation a = log.append({"", "r1", 1.0, 2.5, "orca", "amy", ""});
            CHECK(a.id.size() == 16);
            CHECK(std::regex_match(a.created_at, std::regex(R"(\d{4}-\d\d-\d\dT\d\d:\d\d:\d\dZ)")));
            log.append({"fixed", "r2", 0.0, 1.0, "voice", "bo", "2026-02-03T04:05:06Z"});
            log.append({"gone", "r1", 3.0, 4.0, "background", "bo", ""});
            CHECK(log.remove("gone"));
            CHECK_FALSE(log.remove("gone"));
            CHECK_FALSE(log.remove("never"));
            CHECK(log.size() == 2);
            CHECK(log.list("r1").size() == 1);
            before = log.list();
        }
        AnnotationLog reopened(path);
        CHECK(reopened.list() == before);
        CHECK(read_annotation_log(path) == before);

        std::ifstream in(path);
        std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        CHECK(text.find("\"deleted\":true") != std::string::npos);
        CHECK(std::count(text.begin(), text.end(), '\n') == 4);
    }

    TEST_CASE("append is idempotent per id") {
        testing::TempDir dir;
        AnnotationLog log(dir / "log.jsonl");
        const Annotation a{"same", "r", 0.0, 1.0, "orca", "x", "2026-01-01T00:00:00Z"};
        CHECK(log.append(a) == a);
        CHECK(log.append(a) == a);
        CHECK(log.size() == 1);
        Annotation changed = a;
        changed.label = "voice";
        CHECK_THROWS_AS(log.append(changed), std::invalid_argument);
    }

    TEST_CASE("a torn trailing line is skipped") {
        testing::TempDir dir;
        const auto path = dir / "log.jsonl";
        write_annotation_log(path, {{"a", "r", 0.0, 1.0, "orca", "", "2026-01-01T00:00:00Z"}});
        std::ofstream(path, std::ios::app) << "{\"id\":\"b\",\"recording";
        AnnotationLog log(path);
        CHECK(log.size() == 1);
        log.append({"c", "r", 1.0, 2.0, "voice", "", ""});
        CHECK(AnnotationLog(path).size() == 2);
    }
}
