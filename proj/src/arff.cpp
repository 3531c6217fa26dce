#include "orchive/arff.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "orchive/util.hpp"

namespace orchive {

namespace {

bool needs_quotes(const std::string& s) {
    return s.find_first_of(" \t,{}'\"%") != std::string::npos;
}

std::string quote(const std::string& s) {
    if (!needs_quotes(s)) return s;
    std::string out = "'";
    for (char c : s) {
        if (c == '\'' || c == '\\') out.push_back('\\');
        out.push_back(c);
    }
    out.push_back('\'');
    return out;
}

std::string unquote(const std::string& raw) {
    std::string s = trim(raw);
    if (s.size() >= 2 && (s.front() == '\'' || s.front() == '"') && s.back() == s.front()) {
        std::string out;
        for (std::size_t i = 1; i + 1 < s.size(); ++i) {
            if (s[i] == '\\' && i + 2 < s.size()) ++i;
            out.push_back(s[i]);
        }
        return out;
    }
    return s;
}

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    return s;
}

// Splits on commas outside quotes.
std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    char in_quote = 0;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (in_quote) {
            if (c == '\\' && i + 1 < line.size()) {
                cur.push_back(c);
                cur.push_back(line[++i]);
                continue;
            }
            if (c == in_quote) in_quote = 0;
            cur.push_back(c);
        } else if (c == '\'' || c == '"') {
            in_quote = c;
            cur.push_back(c);
        } else if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    out.push_back(cur);
    return out;
}

// "@attribute <name> <type>" -> {name, type}; name may be quoted.
std::pair<std::string, std::string> parse_attribute(const std::string& line) {
    std::string rest = trim(line.substr(std::string("@attribute").size()));
    std::string name;
    std::size_t pos = 0;
    if (!rest.empty() && (rest[0] == '\'' || rest[0] == '"')) {
        const char q = rest[0];
        pos = 1;
        while (pos < rest.size() && rest[pos] != q) {
            if (rest[pos] == '\\') ++pos;
            ++pos;
        }
        name = unquote(rest.substr(0, pos + 1));
        ++pos;
    } else {
        while (pos < rest.size() && !std::isspace(static_cast<unsigned char>(rest[pos]))) ++pos;
        name = rest.substr(0, pos);
    }
    return {name, trim(rest.substr(std::min(pos, rest.size())))};
}

double parse_number(const std::string& field, std::size_t line_no) {
    const std::string s = trim(field);
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size()) {
        throw std::runtime_error("ARFF line " + std::to_string(line_no) + ": bad number '" + s + "'");
    }
    return v;
}

}  // namespace

std::string to_arff(const Dataset& d, const std::string& relation) {
    if (d.instances.empty()) throw std::invalid_argument("cannot export an empty dataset");
    d.validate();
    std::ostringstream out;
    out << "@RELATION " << quote(relation) << '\n';
    for (const auto& name : d.feature_names) out << "@ATTRIBUTE " << quote(name) << " numeric\n";
    out << "@ATTRIBUTE class {";
    for (std::size_t i = 0; i < d.label_set.size(); ++i) {
        if (i) out << ',';
        out << quote(d.label_set[i]);
    }
    out << "}\n@DATA\n";
    for (const auto& inst : d.instances) {
        for (double v : inst.features) out << format_double(v) << ',';
        out << quote(d.label_set[inst.label]) << '\n';
    }
    return out.str();
}

void export_arff(const Dataset& d, const std::filesystem::path& path, const std::string& relation) {
    const std::string text = to_arff(d, relation);
    std::ofstream out(path, std::ios::trunc);
    if (!out || !(out << text)) throw std::runtime_error("cannot write ARFF file: " + path.string());
}

Dataset parse_arff(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    std::vector<std::pair<std::string, std::string>> attributes;
    bool in_data = false;
    Dataset d;

    while (std::getline(in, line)) {
        ++line_no;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '%') continue;
        if (!in_data) {
            const std::string key = lower(t.substr(0, t.find_first_of(" \t")));
            if (key == "@relation") continue;
            if (key == "@attribute") {
                attributes.push_back(parse_attribute(t));
                continue;
            }
            if (key == "@data") {
                if (attributes.size() < 2) throw std::runtime_error("ARFF needs features and a class attribute");
                const auto& cls = attributes.back().second;
                if (cls.empty() || cls.front() != '{' || cls.back() != '}') {
                    throw std::runtime_error("ARFF last attribute must be nominal {..}");
                }
                std::vector<std::string> labels;
                for (const auto& f : split_fields(cls.substr(1, cls.size() - 2))) labels.push_back(unquote(f));
                d.label_set = LabelSet(std::move(labels));
                for (std::size_t i = 0; i + 1 < attributes.size(); ++i) {
                    const std::string type = lower(attributes[i].second);
                    if (type != "numeric" && type != "real" && type != "integer") {
                        throw std::runtime_error("ARFF attribute '" + attributes[i].first + "' is not numeric");
                    }
                    d.feature_names.push_back(attributes[i].first);
                }
                in_data = true;
                continue;
            }
            throw std::runtime_error("ARFF line " + std::to_string(line_no) + ": unexpected '" + t + "'");
        }
        const auto fields = split_fields(t);
        if (fields.size() != attributes.size()) {
            throw std::runtime_error("ARFF line " + std::to_string(line_no) + ": expected " +
                                     std::to_string(attributes.size()) + " fields");
        }
        Instance inst;
        inst.features.reserve(fields.size() - 1);
        for (std::size_t i = 0; i + 1 < fields.size(); ++i) inst.features.push_back(parse_number(fields[i], line_no));
        const std::string label = unquote(fields.back());
        const auto idx = d.label_set.index_of(label);
        if (!idx) throw std::runtime_error("ARFF line " + std::to_string(line_no) + ": unknown class '" + label + "'");
        inst.label = *idx;
        d.instances.push_back(std::move(inst));
    }
    if (!in_data) throw std::runtime_error("ARFF file has no @DATA section");
    return d;
}

Dataset read_arff(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open ARFF file: " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_arff(ss.str());
}

}  // namespace orchive
