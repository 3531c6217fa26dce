#include "orchive/annotations.hpp"

#include <fstream>
#include <stdexcept>

#include "orchive/util.hpp"

namespace orchive {

void to_json(nlohmann::json& j, const Annotation& a) {
    j = nlohmann::json{{"id", a.id},           {"recording_id", a.recording_id},
                       {"start_s", a.start_s}, {"end_s", a.end_s},
                       {"label", a.label},     {"author", a.author},
                       {"created_at", a.created_at}};
}

void from_json(const nlohmann::json& j, Annotation& a) {
    a.id = j.value("id", std::string{});
    a.recording_id = j.at("recording_id").get<std::string>();
    a.start_s = j.at("start_s").get<double>();
    a.end_s = j.at("end_s").get<double>();
    a.label = j.at("label").get<std::string>();
    a.author = j.value("author", std::string{});
    a.created_at = j.value("created_at", std::string{});
}

namespace {

struct Replay {
    std::vector<Annotation> records;
    std::vector<bool> live;
};

Replay replay(const std::filesystem::path& path) {
    Replay r;
    std::ifstream in(path);
    if (!in) return r;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception&) {
            // A torn final write leaves a partial line; everything before it is intact.
            log_warning(path.string() + ":" + std::to_string(line_no) + ": skipping unreadable record");
            continue;
        }
        const std::string id = j.value("id", std::string{});
        if (j.value("deleted", false)) {
            for (std::size_t i = 0; i < r.records.size(); ++i) {
                if (r.live[i] && r.records[i].id == id) r.live[i] = false;
            }
            continue;
        }
        try {
            Annotation a = j.get<Annotation>();
            for (std::size_t i = 0; i < r.records.size(); ++i) {
                if (r.live[i] && r.records[i].id == a.id) r.live[i] = false;
            }
            r.records.push_back(std::move(a));
            r.live.push_back(true);
        } catch (const nlohmann::json::exception&) {
            log_warning(path.string() + ":" + std::to_string(line_no) + ": skipping malformed annotation");
        }
    }
    return r;
}

}  // namespace

AnnotationLog::AnnotationLog(std::filesystem::path path) : path_(std::move(path)) {
    Replay r = replay(path_);
    records_ = std::move(r.records);
    live_ = std::move(r.live);
    if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
    bool torn_tail = false;
    if (std::ifstream in(path_, std::ios::binary); in && in.seekg(0, std::ios::end) && in.tellg() > 0) {
        in.seekg(-1, std::ios::end);
        torn_tail = in.get() != '\n';
    }
    out_.open(path_, std::ios::app);
    if (!out_) throw std::runtime_error("cannot open annotation log for append: " + path_.string());
    // Close off a torn last record so the next append starts on its own line.
    if (torn_tail) out_ << '\n' << std::flush;
}

void AnnotationLog::write_line(const std::string& line) {
    out_ << line << '\n';
    out_.flush();
    if (!out_) throw std::runtime_error("annotation log write failed: " + path_.string());
}

Annotation AnnotationLog::append(Annotation a) {
    std::lock_guard lock(mutex_);
    if (a.id.empty()) a.id = random_hex_id();
    for (std::size_t i = 0; i < records_.size(); ++i) {
        if (!live_[i] || records_[i].id != a.id) continue;
        const Annotation& existing = records_[i];
        const bool same = existing.recording_id == a.recording_id && existing.start_s == a.start_s &&
                          existing.end_s == a.end_s && existing.label == a.label &&
                          existing.author == a.author;
        if (same) return existing;
        throw std::invalid_argument("annotation id already in use: " + a.id);
    }
    if (a.created_at.empty()) a.created_at = iso8601_utc_now();
    write_line(nlohmann::json(a).dump());
    records_.push_back(a);
    live_.push_back(true);
    return a;
}

bool AnnotationLog::remove(const std::string& id) {
    std::lock_guard lock(mutex_);
    bool found = false;
    for (std::size_t i = 0; i < records_.size(); ++i) {
        if (live_[i] && records_[i].id == id) {
            live_[i] = false;
            found = true;
        }
    }
    if (!found) return false;
    write_line(nlohmann::json{{"id", id}, {"deleted", true}, {"deleted_at", iso8601_utc_now()}}.dump());
    return true;
}

std::optional<Annotation> AnnotationLog::find(const std::string& id) const {
    std::lock_guard lock(mutex_);
    for (std::size_t i = 0; i < records_.size(); ++i) {
        if (live_[i] && records_[i].id == id) return records_[i];
    }
    return std::nullopt;
}

std::vector<Annotation> AnnotationLog::list(const std::optional<std::string>& recording_id) const {
    std::lock_guard lock(mutex_);
    std::vector<Annotation> out;
    for (std::size_t i = 0; i < records_.size(); ++i) {
        if (!live_[i]) continue;
        if (recording_id && records_[i].recording_id != *recording_id) continue;
        out.push_back(records_[i]);
    }
    return out;
}

std::size_t AnnotationLog::size() const {
    std::lock_guard lock(mutex_);
    std::size_t n = 0;
    for (bool l : live_) n += l ? 1 : 0;
    return n;
}

std::vector<Annotation> read_annotation_log(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) {
        throw std::runtime_error("annotation log not found: " + path.string());
    }
    Replay r = replay(path);
    std::vector<Annotation> out;
    for (std::size_t i = 0; i < r.records.size(); ++i) {
        if (r.live[i]) out.push_back(r.records[i]);
    }
    return out;
}

void write_annotation_log(const std::filesystem::path& path, const std::vector<Annotation>& annotations) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write annotation log: " + path.string());
    for (const auto& a : annotations) out << nlohmann::json(a).dump() << '\n';
    if (!out) throw std::runtime_error("annotation log write failed: " + path.string());
}

}  // namespace orchive
