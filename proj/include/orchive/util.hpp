#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace orchive {

/// Runs fn(i) for i in [0, count) on up to `threads` worker threads.
/// Exceptions thrown by fn are rethrown (first one wins) after all workers join.
void parallel_for(std::size_t count, std::size_t threads,
                  const std::function<void(std::size_t)>& fn);

/// Number of threads to use when the caller passes 0.
std::size_t default_thread_count();

/// Writes a warning line to stderr (serialized across threads).
void log_warning(std::string_view message);
void log_info(std::string_view message);

/// Current UTC time as ISO-8601 with seconds precision, e.g. "2026-10-16T10:26:00Z".
std::string iso8601_utc_now();

/// Shortest decimal text that round-trips the double exactly.
std::string format_double(double value);

/// Random hex identifier (not reproducible, for record ids).
std::string random_hex_id(std::size_t hex_chars = 16);

/// splitmix64 step, used to derive independent sub-seeds.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

/// Portable deterministic generator: mt19937_64 with explicitly defined
/// uniform/normal transforms (std distributions are implementation-defined).
class Rng {
public:
    explicit Rng(std::uint64_t seed);

    std::uint64_t next_u64();
    /// Uniform in [0, 1).
    double uniform();
    double uniform(double lo, double hi);
    /// Uniform integer in [0, bound).
    std::uint64_t below(std::uint64_t bound);
    double normal();

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

std::vector<std::string> split(std::string_view text, char sep);
std::string trim(std::string_view text);

}  // namespace orchive
