#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace streamforge {

// Error hierarchy. Every failure surfaced to callers derives from Error so the
// CLI can map it to a non-zero exit code without catching std::exception.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ParseError : public Error {
public:
    ParseError(std::string path, std::size_t line, const std::string& what);
    [[nodiscard]] std::size_t line() const noexcept { return line_; }
    [[nodiscard]] const std::string& path() const noexcept { return path_; }

private:
    std::string path_;
    std::size_t line_;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class PreconditionError : public Error {
public:
    using Error::Error;
};

// ---------------------------------------------------------------------------
// Hashing

/// Lowercase hex SHA-256 of the bytes.
std::string sha256_hex(std::string_view bytes);

/// SHA-256 of a file's contents; throws Error if unreadable.
std::string file_sha256(const std::filesystem::path& path);

/// One-way pseudonym for a raw identifier (author, account, phone...).
/// Stable across runs so the same author maps to the same pseudonym.
std::string anonymize(std::string_view raw_identifier);

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t basis = 0xcbf29ce484222325ULL);
std::uint64_t splitmix64(std::uint64_t& state);

// ---------------------------------------------------------------------------
// Seeded randomness. std::uniform_int_distribution is implementation-defined,
// so sampling goes through these helpers to keep outputs identical across
// standard libraries.

/// Derives an independent seed for a named sub-task of a run.
std::uint64_t derive_seed(std::uint64_t master, std::string_view name);
std::uint64_t derive_seed(std::uint64_t master, std::string_view name, std::uint64_t index);

class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next() { return splitmix64(state_); }
    /// Uniform integer in [0, bound). bound must be > 0.
    std::uint64_t below(std::uint64_t bound);
    /// Uniform real in [0, 1).
    double unit();

    template <typename T>
    void shuffle(std::vector<T>& items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            const auto j = static_cast<std::size_t>(below(i));
            std::swap(items[i - 1], items[j]);
        }
    }

    /// k distinct indices from [0, n), uniformly, in selection order.
    std::vector<std::size_t> sample_indices(std::size_t n, std::size_t k);

private:
    std::uint64_t state_;
};

// ---------------------------------------------------------------------------
// Text helpers

std::string to_lower_ascii(std::string_view text);
std::string trim(std::string_view text);
/// Lowercase, trim, and collapse internal whitespace runs to one space.
std::string normalize_value(std::string_view text);
bool contains_ci(std::string_view haystack, std::string_view needle);
std::vector<std::string> split(std::string_view text, char sep);
std::string join(std::span<const std::string> parts, std::string_view sep);
/// Number of UTF-8 code points (invalid bytes count as one each).
std::size_t utf8_length(std::string_view text);

// ---------------------------------------------------------------------------

/// Runs fn(i) for i in [0, n) on at most `workers` threads. Each index runs
/// exactly once; the first exception thrown is rethrown after all workers join.
void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view content);

} // namespace streamforge
