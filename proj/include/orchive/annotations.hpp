#pragma once

#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace orchive {

/// A labelled time region [start_s, end_s) of one recording.
struct Annotation {
    std::string id;
    std::string recording_id;
    double start_s = 0.0;
    double end_s = 0.0;
    std::string label;
    std::string author;
    std::string created_at;  // ISO-8601 UTC

    double duration_s() const { return end_s - start_s; }
    friend bool operator==(const Annotation&, const Annotation&) = default;
};

void to_json(nlohmann::json& j, const Annotation& a);
void from_json(const nlohmann::json& j, Annotation& a);

/// Append-only JSON-lines store. Each line is either an annotation object or
/// a tombstone {"id":..., "deleted": true, "deleted_at":...}. Replaying the
/// file in order reconstructs the live set.
///
/// One appender at a time per file; all methods are safe to call from
/// multiple threads of the owning process.
class AnnotationLog {
public:
    /// Opens (creating if absent) and replays the log.
    explicit AnnotationLog(std::filesystem::path path);

    const std::filesystem::path& path() const { return path_; }

    /// Appends a record. An empty id is replaced by a fresh one, a missing
    /// created_at by the current time. Re-appending an identical live record
    /// is a no-op that returns the stored record; a different record under an
    /// existing live id throws std::invalid_argument.
    Annotation append(Annotation a);

    /// Writes a tombstone. Returns false if the id is not live.
    bool remove(const std::string& id);

    std::optional<Annotation> find(const std::string& id) const;

    /// Live annotations in insertion order, optionally for one recording.
    std::vector<Annotation> list(const std::optional<std::string>& recording_id = std::nullopt) const;

    std::size_t size() const;

private:
    void write_line(const std::string& line);

    std::filesystem::path path_;
    mutable std::mutex mutex_;
    std::vector<Annotation> records_;  // insertion order, includes removed
    std::vector<bool> live_;
    std::ofstream out_;
};

/// Reads the live annotations of a log file without opening it for append.
std::vector<Annotation> read_annotation_log(const std::filesystem::path& path);

/// Writes a fresh log containing exactly these annotations.
void write_annotation_log(const std::filesystem::path& path, const std::vector<Annotation>& annotations);

}  // namespace orchive
