#pragma once

#include <filesystem>

#include <json.hpp>

#include "orchive/svm.hpp"

namespace orchive {

inline constexpr int kModelFormatVersion = 1;

nlohmann::json model_to_json(const SvmModel& model);
/// Throws std::runtime_error on an unknown format or version, or an
/// inconsistent model (machine count, dimensions, class indices).
SvmModel model_from_json(const nlohmann::json& j);

void save_model(const SvmModel& model, const std::filesystem::path& path);
SvmModel load_model(const std::filesystem::path& path);

}  // namespace orchive
