#pragma once

#include <filesystem>
#include <string>

#include "orchive/dataset.hpp"

namespace orchive {

/// @RELATION, one numeric @ATTRIBUTE per feature, a nominal class attribute,
/// @DATA, then one comma-separated row per instance with the label last.
/// Numbers are written with round-trip precision.
void export_arff(const Dataset& d, const std::filesystem::path& path,
                 const std::string& relation = "orchive");

std::string to_arff(const Dataset& d, const std::string& relation = "orchive");

/// Reads the subset of ARFF written by export_arff: numeric attributes
/// followed by a final nominal class attribute. Comments (%) and blank lines
/// are ignored; keywords are case-insensitive.
Dataset read_arff(const std::filesystem::path& path);
Dataset parse_arff(const std::string& text);

}  // namespace orchive
