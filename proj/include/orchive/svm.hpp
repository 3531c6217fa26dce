#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "orchive/dataset.hpp"
#include "orchive/features.hpp"

namespace orchive {

struct Kernel {
    enum class Type { linear, rbf };

    Type type = Type::linear;
    double gamma = 0.0;  // rbf only

    static Kernel linear() { return {}; }
    static Kernel rbf(double gamma);
    /// "linear" or "rbf:<gamma>".
    static Kernel parse(const std::string& text);
    std::string to_string() const;

    double operator()(std::span<const double> a, std::span<const double> b) const;

    friend bool operator==(const Kernel&, const Kernel&) = default;
};

/// Per-dimension z-score statistics; zero deviations are stored as 1.
struct NormStats {
    std::vector<double> mean;
    std::vector<double> stddev;

    static NormStats fit(const std::vector<const std::vector<double>*>& rows);
    std::vector<double> apply(std::span<const double> raw) const;
    std::size_t dimension() const { return mean.size(); }
};

struct SmoOptions {
    double C = 1.0;
    double tol = 1e-3;
    /// Pair-update cap; 0 picks max(1e6, 1000 n).
    std::size_t max_iterations = 0;
};

/// Soft-margin binary SVM: f(x) = sum_i coef_i K(sv_i, x) + bias, coef_i = alpha_i y_i.
/// Positive decisions mean positive_class.
struct BinarySvm {
    std::size_t positive_class = 0;
    std::size_t negative_class = 1;
    Kernel kernel;
    double C = 1.0;
    std::vector<std::vector<double>> support_vectors;
    std::vector<double> coefficients;
    double bias = 0.0;
    /// Collapsed primal weights (linear kernel only).
    std::vector<double> weights;
    bool converged = true;
    std::size_t iterations = 0;

    double decision(std::span<const double> x) const;
    /// Recomputes `weights` from the support vectors for a linear kernel.
    void collapse_linear();
};

struct SmoResult {
    BinarySvm machine;
    std::vector<double> alphas;  // one per training point
    double dual_objective = 0.0;
};

/// Sequential minimal optimization of the soft-margin dual. Each step
/// optimizes the maximal-violating pair analytically; stops when the KKT gap
/// drops to tol. On hitting the iteration cap the best-so-far machine is
/// returned with converged = false.
/// Throws std::invalid_argument if both classes are not present, C <= 0 or tol <= 0.
SmoResult train_binary_smo(const std::vector<std::vector<double>>& rows, std::span<const int> labels,
                           const SmoOptions& options = {}, const Kernel& kernel = {});

/// W(alpha) = sum alpha - 1/2 sum_ij alpha_i alpha_j y_i y_j K_ij.
double dual_objective(const std::vector<std::vector<double>>& rows, std::span<const int> labels,
                      std::span<const double> alphas, const Kernel& kernel);

/// Largest KKT violation over the training points (margin units).
double max_kkt_violation(const std::vector<std::vector<double>>& rows, std::span<const int> labels,
                         std::span<const double> alphas, double bias, double C, const Kernel& kernel);

/// One-vs-one ensemble with the normalization fitted on its training data.
struct SvmModel {
    LabelSet labels;
    std::vector<std::string> feature_names;
    Kernel kernel;
    double C = 1.0;
    NormStats norm;
    std::vector<BinarySvm> machines;  // one per unordered class pair, (0,1), (0,2), ...
    /// Feature extraction settings the model expects at prediction time.
    FrameSpec frame_spec{};
    std::size_t memory = kDefaultMemory;

    std::size_t dimension() const { return norm.dimension(); }
};

struct TrainOptions {
    double C = 1.0;
    Kernel kernel{};
    double tol = 1e-3;
    std::size_t max_iterations = 0;
    std::size_t threads = 1;
};

/// Fits norm stats and all pairwise machines on the given instances
/// (all of them when `subset` is empty).
SvmModel train(const Dataset& d, const TrainOptions& options = {},
               std::span<const std::size_t> subset = {});

struct Prediction {
    std::size_t label = 0;
    std::vector<std::size_t> votes;
};

/// Majority vote of the pairwise machines on a raw (unnormalized) vector.
/// Equal vote counts resolve to the lowest label index.
/// Throws std::invalid_argument on dimension mismatch.
Prediction predict(const SvmModel& model, std::span<const double> raw);

/// Rows are true classes, columns predicted classes.
class ConfusionMatrix {
public:
    explicit ConfusionMatrix(std::size_t classes = 0) : k_(classes), counts_(classes * classes, 0) {}

    void add(std::size_t truth, std::size_t predicted, std::size_t n = 1);
    std::size_t at(std::size_t truth, std::size_t predicted) const { return counts_.at(truth * k_ + predicted); }
    std::size_t classes() const { return k_; }
    std::size_t total() const;
    std::size_t correct() const;
    std::size_t row_sum(std::size_t truth) const;
    double accuracy() const;
    void merge(const ConfusionMatrix& other);

    /// Aligned text table with label headers.
    std::string to_text(const LabelSet& labels) const;

    friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;

private:
    std::size_t k_;
    std::vector<std::size_t> counts_;
};

struct CrossValidationResult {
    ConfusionMatrix clips;
    /// Present when every instance carries frame_vectors: each frame of a
    /// held-out clip classified by its fold's model.
    std::optional<ConfusionMatrix> frames;
    double accuracy = 0.0;
};

/// Stratified k-fold; each fold's model (including its norm stats) sees only
/// the training split.
CrossValidationResult cross_validate(const Dataset& d, std::size_t k, std::uint64_t seed,
                                     const TrainOptions& options = {});

}  // namespace orchive
