#include <doctest.h>

#include "oracles.hpp"
#include "orchive/model_io.hpp"
#include "orchive/svm.hpp"
#include "support.hpp"

using namespace orchive;

namespace {

struct Problem {
    std::vector<std::vector<double>> rows;
    std::vector<int> y;
};

Problem random_problem(std::size_t n, std::size_t dim, orchive::Rng& rng) {
    Problem p;
    for (std::size_t i = 0; i < n; ++i) {
        p.y.push_back(i % 2 ? 1 : -1);
        std::vector<double> x(dim);
        for (double& v : x) v = rng.normal() + (p.y.back() > 0 ? 0.7 : -0.7) * rng.uniform();
        p.rows.push_back(std::move(x));
    }
    return p;
}

Eigen::MatrixXd gram(const Problem& p, const Kernel& k) {
    const auto n = static_cast<Eigen::Index>(p.rows.size());
    Eigen::MatrixXd g(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) {
            g(i, j) = k(p.rows[static_cast<std::size_t>(i)], p.rows[static_cast<std::size_t>(j)]);
        }
    }
    return g;
}

/// Largest KKT residual |y f(x) - 1| by alpha state, computed from the raw
/// alphas and bias rather than through the library's helper.
double kkt_residual(const Problem& p, const SmoResult& r, double c, const Kernel& k) {
    double worst = 0.0;
    for (std::size_t i = 0; i < p.rows.size(); ++i) {
        double f = r.machine.bias;
        for (std::size_t j = 0; j < p.rows.size(); ++j) f += r.alphas[j] * p.y[j] * k(p.rows[j], p.rows[i]);
        const double m = p.y[i] * f;
        const double a = r.alphas[i];
        double v = 0.0;
        if (a <= 1e-9 * c) v = std::max(0.0, 1.0 - m);
        else if (a >= c * (1.0 - 1e-9)) v = std::max(0.0, m - 1.0);
        else v = std::abs(m - 1.0);
        worst = std::max(worst, v);
    }
    return worst;
}

double train_accuracy(const Problem& p, const BinarySvm& m) {
    std::size_t ok = 0;
    for (std::size_t i = 0; i < p.rows.size(); ++i) ok += (m.decision(p.rows[i]) >= 0 ? 1 : -1) == p.y[i];
    return static_cast<double>(ok) / static_cast<double>(p.rows.size());
}

}  // namespace

TEST_SUITE("classifier") {
    TEST_CASE("kernel parsing") {
        CHECK(Kernel::parse("linear") == Kernel::linear());
        CHECK(Kernel::parse("rbf:0.5") == Kernel::rbf(0.5));
        CHECK(Kernel::parse(Kernel::rbf(0.125).to_string()) == Kernel::rbf(0.125));
        CHECK_THROWS(Kernel::parse("poly"));
        CHECK_THROWS(Kernel::parse("rbf:-1"));
        const std::vector<double> a{1, 2}, b{3, 5};
        CHECK(Kernel::linear()(a, b) == 13.0);
        CHECK(Kernel::rbf(0.5)(a, b) == doctest::Approx(std::exp(-0.5 * 13.0)));
    }

    TEST_CASE("two symmetric points") {
        const Problem p{{{-1.0}, {1.0}}, {-1, 1}};
        SmoOptions o;
        o.C = 100.0;
        const SmoResult r = train_binary_smo(p.rows, p.y, o);
        CHECK(r.alphas[0] == doctest::Approx(0.5));
        CHECK(r.alphas[1] == doctest::Approx(0.5));
        CHECK(std::abs(r.machine.bias) < 1e-9);
        CHECK(std::abs(r.machine.decision(std::vector<double>{0.0})) < 1e-9);
        CHECK(r.machine.support_vectors.size() == 2);
    }

    TEST_CASE("separable blobs are fitted exactly") {
        orchive::Rng rng(12);
        Problem p;
        for (int i = 0; i < 80; ++i) {
            const int y = i % 2 ? 1 : -1;
            p.y.push_back(y);
            p.rows.push_back({rng.normal() * 0.5 + 3.0 * y, rng.normal() * 0.5 - 2.0 * y});
        }
        for (const Kernel& k : {Kernel::linear(), Kernel::rbf(0.5)}) {
            const SmoResult r = train_binary_smo(p.rows, p.y, {}, k);
            CHECK(r.machine.converged);
            CHECK(train_accuracy(p, r.machine) == 1.0);
        }
    }

    TEST_CASE("XOR against a grid-search QP") {
        const Problem p{{{0, 0}, {1, 1}, {0, 1}, {1, 0}}, {1, 1, -1, -1}};
        const double c = 1.0;
        SmoOptions o;
        o.C = c;
        const SmoResult r = train_binary_smo(p.rows, p.y, o);

        const int steps = 40;
        double grid_best = -1e300;
        for (int a = 0; a <= steps; ++a) {
            for (int b = 0; b <= steps; ++b) {
                for (int d = 0; d <= steps; ++d) {
                    // The equality constraint fixes the fourth alpha.
                    const double al[4] = {c * a / steps, c * b / steps, c * d / steps, 0.0};
                    const double fourth = al[0] + al[1] - al[2];
                    if (fourth < 0.0 || fourth > c) continue;
                    const double alphas[4] = {al[0], al[1], al[2], fourth};
                    grid_best = std::max(grid_best, dual_objective(p.rows, p.y, alphas, Kernel::linear()));
                }
            }
        }
        CHECK(std::abs(r.dual_objective - grid_best) <= 1e-3);
        CHECK(r.dual_objective >= grid_best - 1e-9);
        CHECK(train_accuracy(p, r.machine) <= 0.75);
    }

    TEST_CASE("SMO reaches the exhaustive QP optimum") {
        orchive::Rng rng(2024);
        for (int trial = 0; trial < 12; ++trial) {
            const std::size_t n = 4 + rng.below(6);
            const Problem p = random_problem(n, 2 + rng.below(3), rng);
            const double c = std::pow(10.0, rng.uniform(-1.0, 1.0));
            const Kernel k = trial % 2 ? Kernel::rbf(rng.uniform(0.2, 2.0)) : Kernel::linear();
            SmoOptions o;
            o.C = c;
            const SmoResult r = train_binary_smo(p.rows, p.y, o, k);
            const oracle::QpSolution best = oracle::svm_dual_exhaustive(gram(p, k), p.y, c);
            CHECK(std::abs(r.dual_objective - best.objective) <= 1e-4);
            CHECK(kkt_residual(p, r, c, k) <= o.tol);
            CHECK(max_kkt_violation(p.rows, p.y, r.alphas, r.machine.bias, c, k) <= o.tol);
            double balance = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                CHECK(r.alphas[i] >= 0.0);
                CHECK(r.alphas[i] <= c);
                balance += r.alphas[i] * p.y[i];
            }
            CHECK(std::abs(balance) <= 1e-9);
        }
    }

    TEST_CASE("SMO input validation") {
        const std::vector<std::vector<double>> rows{{0.0}, {1.0}};
        CHECK_THROWS_AS(train_binary_smo(rows, std::vector<int>{1, 1}), std::invalid_argument);
        SmoOptions bad;
        bad.C = 0.0;
        CHECK_THROWS_AS(train_binary_smo(rows, std::vector<int>{1, -1}, bad), std::invalid_argument);
    }

    TEST_CASE("one-vs-one ensemble size and determinism") {
        const Dataset three = testing::blob_dataset(3, 20, 5, 4.0, 1);
        CHECK(train(three).machines.size() == 3);
        const Dataset six = testing::blob_dataset(6, 10, 6, 4.0, 2);
        const SvmModel a = train(six);
        CHECK(a.machines.size() == 15);
        const SvmModel b = train(six);
        CHECK(model_to_json(a) == model_to_json(b));
        TrainOptions parallel;
        parallel.threads = 4;
        CHECK(model_to_json(train(six, parallel)) == model_to_json(a));
    }

    TEST_CASE("prediction contract") {
        const Dataset d = testing::blob_dataset(3, 30, 4, 6.0, 3);
        const SvmModel m = train(d);
        std::size_t ok = 0;
        for (const auto& inst : d.instances) {
            const Prediction p = predict(m, inst.features);
            CHECK(std::accumulate(p.votes.begin(), p.votes.end(), std::size_t{0}) == 3);
            ok += p.label == inst.label;
        }
        CHECK(ok == d.size());
        CHECK_THROWS_AS(predict(m, std::vector<double>{1.0}), std::invalid_argument);
    }

    TEST_CASE("vote ties go to the lowest label") {
        // Three machines that each vote for a different class: a 1-1-1 tie.
        SvmModel m;
        m.labels = LabelSet({"a", "b", "c"});
        m.norm.mean = {0.0};
        m.norm.stddev = {1.0};
        const auto machine = [](std::size_t p, std::size_t q, double bias) {
            BinarySvm s;
            s.positive_class = p;
            s.negative_class = q;
            s.bias = bias;
            s.collapse_linear();
            return s;
        };
        m.machines = {machine(0, 1, 1.0), machine(0, 2, -1.0), machine(1, 2, 1.0)};
        const Prediction p = predict(m, std::vector<double>{0.0});
        CHECK(p.votes == std::vector<std::size_t>{1, 1, 1});
        CHECK(p.label == 0);
    }

    TEST_CASE("affine rescaling of features does not change predictions") {
        Dataset d = testing::blob_dataset(3, 25, 6, 1.5, 4);
        const Dataset test = testing::blob_dataset(3, 25, 6, 1.5, 5);
        Dataset scaled = d;
        orchive::Rng rng(6);
        std::vector<double> gain(6), shift(6);
        for (std::size_t j = 0; j < 6; ++j) {
            gain[j] = rng.uniform(0.001, 1000.0);
            shift[j] = rng.uniform(-1e3, 1e3);
        }
        const auto transform = [&](std::vector<double> v) {
            for (std::size_t j = 0; j < v.size(); ++j) v[j] = v[j] * gain[j] + shift[j];
            return v;
        };
        for (auto& inst : scaled.instances) inst.features = transform(inst.features);
        const SvmModel a = train(d), b = train(scaled);
        for (const auto& inst : test.instances) {
            CHECK(predict(a, inst.features).label == predict(b, transform(inst.features)).label);
        }
    }

    TEST_CASE("normalization statistics") {
        const std::vector<double> r1{1.0, 5.0}, r2{3.0, 5.0};
        const NormStats s = NormStats::fit({&r1, &r2});
        CHECK(s.mean == std::vector<double>{2.0, 5.0});
        CHECK(s.stddev == std::vector<double>{1.0, 1.0});
        CHECK(s.apply(std::vector<double>{4.0, 7.0}) == std::vector<double>{2.0, 2.0});
    }

    TEST_CASE("cross-validation") {
        const Dataset d = testing::blob_dataset(3, 20, 3, 10.0, 7);
        const CrossValidationResult r = cross_validate(d, 10, 1);
        CHECK(r.accuracy == 1.0);
        for (std::size_t i = 0; i < 3; ++i) {
            CHECK(r.clips.row_sum(i) == 20);
            CHECK(r.clips.at(i, i) == 20);
        }
        CHECK_FALSE(r.frames.has_value());

        Dataset dup;
        dup.label_set = LabelSet({"a", "b", "c"});
        dup.feature_names = {"x", "y"};
        for (std::size_t c = 0; c < 3; ++c) {
            const std::vector<double> v{static_cast<double>(c), static_cast<double>(c * c)};
            dup.instances.push_back({v, c, {}, {}});
            dup.instances.push_back({v, c, {}, {}});
        }
        CHECK(cross_validate(dup, 2, 3).accuracy == 1.0);

        const Dataset noisy = testing::blob_dataset(4, 25, 5, 0.8, 8);
        const CrossValidationResult n = cross_validate(noisy, 5, 2);
        std::size_t trace = 0;
        for (std::size_t i = 0; i < 4; ++i) {
            CHECK(n.clips.row_sum(i) == 25);
            trace += n.clips.at(i, i);
        }
        CHECK(n.accuracy == doctest::Approx(static_cast<double>(trace) / 100.0));
        TrainOptions four;
        four.threads = 4;
        CHECK(cross_validate(noisy, 5, 2, four).clips == n.clips);
    }

    TEST_CASE("per-frame confusion when frame vectors are present") {
        Dataset d = testing::blob_dataset(2, 10, 3, 8.0, 9);
        std::size_t frames = 0;
        for (auto& inst : d.instances) {
            inst.frame_vectors = {inst.features, inst.features, inst.features};
            frames += 3;
        }
        const CrossValidationResult r = cross_validate(d, 5, 1);
        REQUIRE(r.frames.has_value());
        CHECK(r.frames->total() == frames);
    }

    TEST_CASE("confusion matrix bookkeeping") {
        ConfusionMatrix m(2);
        m.add(0, 0, 3);
        m.add(0, 1);
        m.add(1, 1, 4);
        CHECK(m.total() == 8);
        CHECK(m.correct() == 7);
        CHECK(m.accuracy() == 7.0 / 8.0);
        ConfusionMatrix other(2);
        other.add(1, 0, 2);
        m.merge(other);
        CHECK(m.at(1, 0) == 2);
        CHECK(m.row_sum(1) == 6);
        CHECK(m.to_text(LabelSet({"x", "y"})).find('x') != std::string::npos);
    }
}

TEST_SUITE("model_io") {
    TEST_CASE("model JSON round trip keeps predictions") {
        for (const Kernel& k : {Kernel::linear(), Kernel::rbf(0.3)}) {
            const Dataset d = testing::blob_dataset(3, 30, 8, 1.0, 10);
            TrainOptions o;
            o.kernel = k;
            o.C = 2.0;
            SvmModel m = train(d, o);
            m.frame_spec = {2048, 1024, WindowFunction::hann};
            m.memory = 40;
            testing::TempDir dir;
            save_model(m, dir / "m.json");
            const SvmModel back = load_model(dir / "m.json");
            CHECK(back.frame_spec == m.frame_spec);
            CHECK(back.memory == 40);
            CHECK(back.kernel == k);
            CHECK(back.labels == m.labels);
            orchive::Rng rng(11);
            for (int i = 0; i < 1000; ++i) {
                std::vector<double> v(8);
                for (double& x : v) x = rng.normal() * 3.0;
                const Prediction a = predict(m, v), b = predict(back, v);
                CHECK(a.label == b.label);
                CHECK(a.votes == b.votes);
            }
        }
    }

    TEST_CASE("malformed models are rejected") {
        const SvmModel m = train(testing::blob_dataset(3, 10, 2, 5.0, 1));
        auto j = model_to_json(m);
        j["version"] = 99;
        CHECK_THROWS(model_from_json(j));
        j = model_to_json(m);
        j["machines"].erase(0);
        CHECK_THROWS(model_from_json(j));
        j = model_to_json(m);
        j["format"] = "other";
        CHECK_THROWS(model_from_json(j));
        testing::TempDir dir;
        std::ofstream(dir / "bad.json") << "{not json";
        CHECK_THROWS(load_model(dir / "bad.json"));
    }
}
