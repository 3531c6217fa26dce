#include "orchive/svm.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "orchive/util.hpp"

namespace orchive {

Kernel Kernel::rbf(double gamma) {
    if (!(gamma > 0.0)) throw std::invalid_argument("rbf gamma must be > 0");
    return Kernel{Type::rbf, gamma};
}

Kernel Kernel::parse(const std::string& text) {
    if (text == "linear") return linear();
    if (text.rfind("rbf:", 0) == 0) {
        double gamma = 0.0;
        try {
            std::size_t used = 0;
            gamma = std::stod(text.substr(4), &used);
            if (used != text.size() - 4) throw std::invalid_argument("trailing characters");
        } catch (const std::exception&) {
            throw std::invalid_argument("bad rbf gamma in kernel spec: " + text);
        }
        return rbf(gamma);
    }
    throw std::invalid_argument("kernel must be 'linear' or 'rbf:<gamma>', got: " + text);
}

std::string Kernel::to_string() const {
    return type == Type::linear ? "linear" : "rbf:" + format_double(gamma);
}

double Kernel::operator()(std::span<const double> a, std::span<const double> b) const {
    if (type == Type::linear) {
        double dot = 0.0;
        for (std::size_t i = 0; i < a.size(); ++i) dot += a[i] * b[i];
        return dot;
    }
    double sq = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        sq += d * d;
    }
    return std::exp(-gamma * sq);
}

NormStats NormStats::fit(const std::vector<const std::vector<double>*>& rows) {
    if (rows.empty()) throw std::invalid_argument("cannot fit normalization on no rows");
    const std::size_t dim = rows.front()->size();
    NormStats s;
    s.mean.assign(dim, 0.0);
    s.stddev.assign(dim, 0.0);
    const double n = static_cast<double>(rows.size());
    for (const auto* r : rows) {
        for (std::size_t d = 0; d < dim; ++d) s.mean[d] += (*r)[d];
    }
    for (double& m : s.mean) m /= n;
    for (const auto* r : rows) {
        for (std::size_t d = 0; d < dim; ++d) {
            const double diff = (*r)[d] - s.mean[d];
            s.stddev[d] += diff * diff;
        }
    }
    for (double& sd : s.stddev) {
        sd = std::sqrt(sd / n);
        // Constant (or numerically constant) features pass through centred only.
        if (!(sd > 1e-12)) sd = 1.0;
    }
    return s;
}

std::vector<double> NormStats::apply(std::span<const double> raw) const {
    if (raw.size() != mean.size()) throw std::invalid_argument("normalization dimension mismatch");
    std::vector<double> out(raw.size());
    for (std::size_t d = 0; d < raw.size(); ++d) out[d] = (raw[d] - mean[d]) / stddev[d];
    return out;
}

double BinarySvm::decision(std::span<const double> x) const {
    if (!weights.empty()) {
        double f = bias;
        for (std::size_t d = 0; d < x.size(); ++d) f += weights[d] * x[d];
        return f;
    }
    double f = bias;
    for (std::size_t i = 0; i < support_vectors.size(); ++i) f += coefficients[i] * kernel(support_vectors[i], x);
    return f;
}

void BinarySvm::collapse_linear() {
    weights.clear();
    if (kernel.type != Kernel::Type::linear || support_vectors.empty()) return;
    weights.assign(support_vectors.front().size(), 0.0);
    for (std::size_t i = 0; i < support_vectors.size(); ++i) {
        for (std::size_t d = 0; d < weights.size(); ++d) weights[d] += coefficients[i] * support_vectors[i][d];
    }
}

namespace {

constexpr std::size_t kFullKernelLimit = 4000;

// Kernel rows, precomputed when small enough to hold as a dense matrix.
class KernelRows {
public:
    KernelRows(const std::vector<std::vector<double>>& rows, const Kernel& kernel)
        : rows_(rows), kernel_(kernel), n_(rows.size()) {
        if (n_ <= kFullKernelLimit) {
            full_.resize(n_ * n_);
            for (std::size_t i = 0; i < n_; ++i) {
                for (std::size_t j = i; j < n_; ++j) {
                    const double k = kernel_(rows_[i], rows_[j]);
                    full_[i * n_ + j] = k;
                    full_[j * n_ + i] = k;
                }
            }
        } else {
            scratch_[0].resize(n_);
            scratch_[1].resize(n_);
        }
    }

    // slot distinguishes the two rows a step needs at once.
    std::span<const double> row(std::size_t i, int slot) {
        if (!full_.empty()) return std::span<const double>(full_.data() + i * n_, n_);
        auto& s = scratch_[slot];
        for (std::size_t j = 0; j < n_; ++j) s[j] = kernel_(rows_[i], rows_[j]);
        return s;
    }

    double diag(std::size_t i) const {
        return full_.empty() ? kernel_(rows_[i], rows_[i]) : full_[i * n_ + i];
    }

private:
    const std::vector<std::vector<double>>& rows_;
    const Kernel& kernel_;
    std::size_t n_;
    std::vector<double> full_;
    std::vector<double> scratch_[2];
};

}  // namespace

SmoResult train_binary_smo(const std::vector<std::vector<double>>& rows, std::span<const int> labels,
                           const SmoOptions& options, const Kernel& kernel) {
    const std::size_t n = rows.size();
    if (labels.size() != n) throw std::invalid_argument("SMO: label count mismatch");
    if (!(options.C > 0.0)) throw std::invalid_argument("SMO: C must be > 0");
    if (!(options.tol > 0.0)) throw std::invalid_argument("SMO: tol must be > 0");
    bool has_pos = false, has_neg = false;
    for (int y : labels) {
        if (y == 1) has_pos = true;
        else if (y == -1) has_neg = true;
        else throw std::invalid_argument("SMO: labels must be +1 or -1");
    }
    if (!has_pos || !has_neg) throw std::invalid_argument("SMO: training data must contain both classes");

    const double C = options.C;
    const std::size_t max_iter =
        options.max_iterations ? options.max_iterations : std::max<std::size_t>(1'000'000, 1000 * n);

    KernelRows K(rows, kernel);
    std::vector<double> alpha(n, 0.0);
    std::vector<double> grad(n, -1.0);  // gradient of 1/2 a'Qa - e'a

    const auto in_up = [&](std::size_t t) { return labels[t] == 1 ? alpha[t] < C : alpha[t] > 0.0; };
    const auto in_low = [&](std::size_t t) { return labels[t] == 1 ? alpha[t] > 0.0 : alpha[t] < C; };

    double m_up = 0.0, m_low = 0.0;
    bool converged = false;
    std::size_t iter = 0;
    for (;; ++iter) {
        std::size_t i = n, j = n;
        m_up = -std::numeric_limits<double>::infinity();
        m_low = std::numeric_limits<double>::infinity();
        for (std::size_t t = 0; t < n; ++t) {
            const double v = -labels[t] * grad[t];
            if (in_up(t) && v > m_up) {
                m_up = v;
                i = t;
            }
            if (in_low(t) && v < m_low) {
                m_low = v;
                j = t;
            }
        }
        if (i == n || j == n || m_up - m_low <= options.tol) {
            converged = true;
            break;
        }
        if (iter >= max_iter) break;

        const auto Ki = K.row(i, 0);
        const auto Kj = K.row(j, 1);
        double curvature = K.diag(i) + K.diag(j) - 2.0 * Ki[j];
        if (curvature <= 0.0) curvature = 1e-12;

        const double bound_i = labels[i] == 1 ? C - alpha[i] : alpha[i];
        const double bound_j = labels[j] == 1 ? alpha[j] : C - alpha[j];
        const double step = (m_up - m_low) / curvature;
        const double lambda = std::min({step, bound_i, bound_j});

        alpha[i] += labels[i] * lambda;
        alpha[j] -= labels[j] * lambda;
        if (lambda == bound_i) alpha[i] = labels[i] == 1 ? C : 0.0;
        if (lambda == bound_j) alpha[j] = labels[j] == 1 ? 0.0 : C;
        alpha[i] = std::clamp(alpha[i], 0.0, C);
        alpha[j] = std::clamp(alpha[j], 0.0, C);

        for (std::size_t t = 0; t < n; ++t) grad[t] += labels[t] * lambda * (Ki[t] - Kj[t]);
    }

    // Bias: mean over free vectors, else the middle of the feasible interval.
    double bias_sum = 0.0;
    std::size_t free_count = 0;
    for (std::size_t t = 0; t < n; ++t) {
        if (alpha[t] > 0.0 && alpha[t] < C) {
            bias_sum += -labels[t] * grad[t];
            ++free_count;
        }
    }
    double bias = 0.0;
    if (free_count > 0) {
        bias = bias_sum / static_cast<double>(free_count);
    } else if (std::isfinite(m_up) && std::isfinite(m_low)) {
        bias = (m_up + m_low) / 2.0;
    } else if (std::isfinite(m_up)) {
        bias = m_up;
    } else if (std::isfinite(m_low)) {
        bias = m_low;
    }

    SmoResult result;
    BinarySvm& svm = result.machine;
    svm.kernel = kernel;
    svm.C = C;
    svm.bias = bias;
    svm.converged = converged;
    svm.iterations = iter;
    for (std::size_t t = 0; t < n; ++t) {
        if (alpha[t] > 0.0) {
            svm.support_vectors.push_back(rows[t]);
            svm.coefficients.push_back(alpha[t] * labels[t]);
        }
    }
    svm.collapse_linear();

    double w = 0.0;
    for (std::size_t t = 0; t < n; ++t) w += alpha[t] * (1.0 - grad[t]);
    result.dual_objective = w / 2.0;
    result.alphas = std::move(alpha);
    if (!converged) {
        log_warning("SMO stopped at the iteration cap (" + std::to_string(iter) +
                    ") before reaching tol; returning best-so-far machine");
    }
    return result;
}

double dual_objective(const std::vector<std::vector<double>>& rows, std::span<const int> labels,
                      std::span<const double> alphas, const Kernel& kernel) {
    double linear = 0.0, quad = 0.0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        linear += alphas[i];
        for (std::size_t j = 0; j < rows.size(); ++j) {
            quad += alphas[i] * alphas[j] * labels[i] * labels[j] * kernel(rows[i], rows[j]);
        }
    }
    return linear - 0.5 * quad;
}

double max_kkt_violation(const std::vector<std::vector<double>>& rows, std::span<const int> labels,
                         std::span<const double> alphas, double bias, double C, const Kernel& kernel) {
    double worst = 0.0;
    for (std::size_t t = 0; t < rows.size(); ++t) {
        double f = bias;
        for (std::size_t s = 0; s < rows.size(); ++s) {
            if (alphas[s] != 0.0) f += alphas[s] * labels[s] * kernel(rows[s], rows[t]);
        }
        const double r = labels[t] * f - 1.0;
        double v;
        if (alphas[t] <= 0.0) v = std::max(0.0, -r);
        else if (alphas[t] >= C) v = std::max(0.0, r);
        else v = std::abs(r);
        worst = std::max(worst, v);
    }
    return worst;
}

SvmModel train(const Dataset& d, const TrainOptions& options, std::span<const std::size_t> subset) {
    std::vector<std::size_t> indices(subset.begin(), subset.end());
    if (indices.empty()) {
        indices.resize(d.instances.size());
        for (std::size_t i = 0; i < indices.size(); ++i) indices[i] = i;
    }
    if (indices.empty()) throw std::invalid_argument("cannot train on an empty dataset");
    const std::size_t k = d.label_set.size();
    if (k < 2) throw std::invalid_argument("training needs at least two classes");

    SvmModel model;
    model.labels = d.label_set;
    model.feature_names = d.feature_names;
    model.kernel = options.kernel;
    model.C = options.C;

    std::vector<const std::vector<double>*> raw;
    raw.reserve(indices.size());
    for (std::size_t i : indices) raw.push_back(&d.instances.at(i).features);
    model.norm = NormStats::fit(raw);

    std::vector<std::vector<std::size_t>> by_class(k);
    std::vector<std::vector<double>> normalized(indices.size());
    for (std::size_t r = 0; r < indices.size(); ++r) {
        normalized[r] = model.norm.apply(*raw[r]);
        by_class[d.instances[indices[r]].label].push_back(r);
    }

    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    for (std::size_t p = 0; p < k; ++p) {
        for (std::size_t q = p + 1; q < k; ++q) pairs.emplace_back(p, q);
    }
    model.machines.resize(pairs.size());

    parallel_for(pairs.size(), options.threads, [&](std::size_t m) {
        const auto [p, q] = pairs[m];
        if (by_class[p].empty() || by_class[q].empty()) {
            throw std::invalid_argument("class '" + d.label_set[by_class[p].empty() ? p : q] +
                                        "' has no training instances");
        }
        std::vector<std::vector<double>> rows;
        std::vector<int> y;
        for (std::size_t r : by_class[p]) {
            rows.push_back(normalized[r]);
            y.push_back(1);
        }
        for (std::size_t r : by_class[q]) {
            rows.push_back(normalized[r]);
            y.push_back(-1);
        }
        SmoOptions smo{options.C, options.tol, options.max_iterations};
        BinarySvm machine = train_binary_smo(rows, y, smo, options.kernel).machine;
        machine.positive_class = p;
        machine.negative_class = q;
        model.machines[m] = std::move(machine);
    });
    return model;
}

Prediction predict(const SvmModel& model, std::span<const double> raw) {
    if (raw.size() != model.dimension()) {
        throw std::invalid_argument("feature dimension " + std::to_string(raw.size()) +
                                    " does not match model dimension " + std::to_string(model.dimension()));
    }
    const std::vector<double> x = model.norm.apply(raw);
    Prediction p;
    p.votes.assign(model.labels.size(), 0);
    for (const auto& m : model.machines) {
        ++p.votes[m.decision(x) >= 0.0 ? m.positive_class : m.negative_class];
    }
    p.label = static_cast<std::size_t>(std::max_element(p.votes.begin(), p.votes.end()) - p.votes.begin());
    return p;
}

void ConfusionMatrix::add(std::size_t truth, std::size_t predicted, std::size_t n) {
    if (truth >= k_ || predicted >= k_) throw std::out_of_range("confusion matrix index");
    counts_[truth * k_ + predicted] += n;
}

std::size_t ConfusionMatrix::total() const {
    std::size_t s = 0;
    for (std::size_t c : counts_) s += c;
    return s;
}

std::size_t ConfusionMatrix::correct() const {
    std::size_t s = 0;
    for (std::size_t i = 0; i < k_; ++i) s += counts_[i * k_ + i];
    return s;
}

std::size_t ConfusionMatrix::row_sum(std::size_t truth) const {
    std::size_t s = 0;
    for (std::size_t j = 0; j < k_; ++j) s += counts_.at(truth * k_ + j);
    return s;
}

double ConfusionMatrix::accuracy() const {
    const std::size_t t = total();
    return t == 0 ? 0.0 : static_cast<double>(correct()) / static_cast<double>(t);
}

void ConfusionMatrix::merge(const ConfusionMatrix& other) {
    if (other.k_ != k_) throw std::invalid_argument("confusion matrix size mismatch");
    for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
}

std::string ConfusionMatrix::to_text(const LabelSet& labels) const {
    std::size_t width = 6;
    for (const auto& n : labels.names()) width = std::max(width, n.size() + 1);
    for (std::size_t c : counts_) width = std::max(width, std::to_string(c).size() + 1);
    std::ostringstream out;
    out << std::setw(static_cast<int>(width)) << "";
    for (std::size_t j = 0; j < k_; ++j) out << std::setw(static_cast<int>(width)) << labels[j];
    out << '\n';
    for (std::size_t i = 0; i < k_; ++i) {
        out << std::setw(static_cast<int>(width)) << labels[i];
        for (std::size_t j = 0; j < k_; ++j) out << std::setw(static_cast<int>(width)) << at(i, j);
        out << '\n';
    }
    return out.str();
}

CrossValidationResult cross_validate(const Dataset& d, std::size_t k, std::uint64_t seed,
                                     const TrainOptions& options) {
    const auto folds = stratified_kfold(d, k, seed);
    const std::size_t classes = d.label_set.size();
    const bool with_frames =
        !d.instances.empty() &&
        std::all_of(d.instances.begin(), d.instances.end(), [](const Instance& i) { return !i.frame_vectors.empty(); });

    std::vector<ConfusionMatrix> clip_parts(k, ConfusionMatrix(classes));
    std::vector<ConfusionMatrix> frame_parts(k, ConfusionMatrix(classes));

    TrainOptions inner = options;
    inner.threads = 1;
    parallel_for(k, options.threads, [&](std::size_t f) {
        std::vector<std::size_t> train_idx;
        for (std::size_t g = 0; g < k; ++g) {
            if (g != f) train_idx.insert(train_idx.end(), folds[g].begin(), folds[g].end());
        }
        std::sort(train_idx.begin(), train_idx.end());
        const SvmModel model = train(d, inner, train_idx);
        for (std::size_t i : folds[f]) {
            const Instance& inst = d.instances[i];
            clip_parts[f].add(inst.label, predict(model, inst.features).label);
            if (with_frames) {
                for (const auto& v : inst.frame_vectors) frame_parts[f].add(inst.label, predict(model, v).label);
            }
        }
    });

    CrossValidationResult result{ConfusionMatrix(classes), std::nullopt, 0.0};
    for (const auto& m : clip_parts) result.clips.merge(m);
    if (with_frames) {
        ConfusionMatrix frames(classes);
        for (const auto& m : frame_parts) frames.merge(m);
        result.frames = std::move(frames);
    }
    result.accuracy = result.clips.accuracy();
    return result;
}

}  // namespace orchive
