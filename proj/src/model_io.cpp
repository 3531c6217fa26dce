#include "orchive/model_io.hpp"

#include <fstream>
#include <stdexcept>

namespace orchive {

namespace {

constexpr const char* kFormatName = "orchive-svm";

nlohmann::json kernel_to_json(const Kernel& k) {
    if (k.type == Kernel::Type::linear) return {{"type", "linear"}};
    return {{"type", "rbf"}, {"gamma", k.gamma}};
}

Kernel kernel_from_json(const nlohmann::json& j) {
    const auto type = j.at("type").get<std::string>();
    if (type == "linear") return Kernel::linear();
    if (type == "rbf") return Kernel::rbf(j.at("gamma").get<double>());
    throw std::runtime_error("unknown kernel type in model: " + type);
}

}  // namespace

nlohmann::json model_to_json(const SvmModel& model) {
    nlohmann::json machines = nlohmann::json::array();
    for (const auto& m : model.machines) {
        machines.push_back({{"classes", {m.positive_class, m.negative_class}},
                            {"bias", m.bias},
                            {"converged", m.converged},
                            {"coefficients", m.coefficients},
                            {"support_vectors", m.support_vectors}});
    }
    return {{"format", kFormatName},
            {"version", kModelFormatVersion},
            {"kernel", kernel_to_json(model.kernel)},
            {"C", model.C},
            {"labels", model.labels.names()},
            {"feature_names", model.feature_names},
            {"features",
             {{"window_size", model.frame_spec.window_size},
              {"hop_size", model.frame_spec.hop_size},
              {"window_function", to_string(model.frame_spec.window)},
              {"memory", model.memory}}},
            {"norm", {{"mean", model.norm.mean}, {"std", model.norm.stddev}}},
            {"machines", machines}};
}

SvmModel model_from_json(const nlohmann::json& j) {
    try {
        if (j.value("format", std::string{}) != kFormatName) throw std::runtime_error("not an orchive SVM model");
        const int version = j.at("version").get<int>();
        if (version != kModelFormatVersion) {
            throw std::runtime_error("unsupported model version " + std::to_string(version));
        }
        SvmModel model;
        model.kernel = kernel_from_json(j.at("kernel"));
        model.C = j.at("C").get<double>();
        model.labels = LabelSet(j.at("labels").get<std::vector<std::string>>());
        model.feature_names = j.value("feature_names", std::vector<std::string>{});
        if (j.contains("features")) {
            const auto& f = j.at("features");
            model.frame_spec.window_size = f.at("window_size").get<std::size_t>();
            model.frame_spec.hop_size = f.at("hop_size").get<std::size_t>();
            model.frame_spec.window = parse_window_function(f.value("window_function", std::string("hamming")));
            model.memory = f.value("memory", kDefaultMemory);
        }
        model.norm.mean = j.at("norm").at("mean").get<std::vector<double>>();
        model.norm.stddev = j.at("norm").at("std").get<std::vector<double>>();
        const std::size_t dim = model.norm.mean.size();
        if (model.norm.stddev.size() != dim) throw std::runtime_error("norm mean/std length mismatch");

        const std::size_t k = model.labels.size();
        for (const auto& mj : j.at("machines")) {
            BinarySvm m;
            const auto classes = mj.at("classes").get<std::vector<std::size_t>>();
            if (classes.size() != 2 || classes[0] >= k || classes[1] >= k || classes[0] == classes[1]) {
                throw std::runtime_error("bad machine class pair");
            }
            m.positive_class = classes[0];
            m.negative_class = classes[1];
            m.kernel = model.kernel;
            m.C = model.C;
            m.bias = mj.at("bias").get<double>();
            m.converged = mj.value("converged", true);
            m.coefficients = mj.at("coefficients").get<std::vector<double>>();
            m.support_vectors = mj.at("support_vectors").get<std::vector<std::vector<double>>>();
            if (m.coefficients.size() != m.support_vectors.size()) {
                throw std::runtime_error("coefficient/support vector count mismatch");
            }
            for (const auto& sv : m.support_vectors) {
                if (sv.size() != dim) throw std::runtime_error("support vector dimension mismatch");
            }
            m.collapse_linear();
            model.machines.push_back(std::move(m));
        }
        if (model.machines.size() != k * (k - 1) / 2) {
            throw std::runtime_error("model must hold one machine per class pair");
        }
        return model;
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error(std::string("malformed model JSON: ") + e.what());
    }
}

void save_model(const SvmModel& model, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out || !(out << model_to_json(model).dump() << '\n')) {
        throw std::runtime_error("cannot write model: " + path.string());
    }
}

SvmModel load_model(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open model: " + path.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error("malformed model JSON " + path.string() + ": " + e.what());
    }
    return model_from_json(j);
}

}  // namespace orchive
