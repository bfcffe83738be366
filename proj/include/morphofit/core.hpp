// core.hpp - shared basics: error taxonomy, logging, deterministic RNG,
// binary matrix container, atomic file writes.
#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace morphofit {

using Vec3 = Eigen::Vector3d;

// ---------------------------------------------------------------------------
// Errors. The CLI maps these onto exit codes: ParamError -> 1 (usage),
// ParseError/IoError -> 2 (data), NumericError -> 3 (numerical failure).
// ---------------------------------------------------------------------------

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed input data (bad OBJ record, bad JSON schema, inconsistent CSV).
class ParseError : public Error {
public:
    using Error::Error;
};

/// Invalid arguments, configs or dimension mismatches.
class ParamError : public Error {
public:
    using Error::Error;
};

/// Filesystem-level failure (missing file, unwritable path, refuse-to-write).
class IoError : public Error {
public:
    using Error::Error;
};

/// Numerical failure (singular system, optimizer non-convergence).
class NumericError : public Error {
public:
    using Error::Error;
};

// ---------------------------------------------------------------------------
// Logging, level from MORPHOFIT_LOG (debug|info|warn|error|off), default warn.
// ---------------------------------------------------------------------------

enum class LogLevel { Debug = 0, Info = 1, Warn = 2, ErrorLvl = 3, Off = 4 };

inline LogLevel log_level() {
    static const LogLevel level = [] {
        const char* env = std::getenv("MORPHOFIT_LOG");
        if (!env) return LogLevel::Warn;
        std::string s(env);
        if (s == "debug") return LogLevel::Debug;
        if (s == "info") return LogLevel::Info;
        if (s == "warn") return LogLevel::Warn;
        if (s == "error") return LogLevel::ErrorLvl;
        if (s == "off" || s == "silent") return LogLevel::Off;
        return LogLevel::Warn;
    }();
    return level;
}

namespace detail {
inline void log_concat(std::ostringstream&) {}
template <typename T, typename... Rest>
void log_concat(std::ostringstream& os, const T& v, const Rest&... rest) {
    os << v;
    log_concat(os, rest...);
}
}  // namespace detail

template <typename... Args>
void log_at(LogLevel lvl, const Args&... args) {
    if (lvl < log_level()) return;
    static const char* names[] = {"debug", "info", "warn", "error"};
    std::ostringstream os;
    detail::log_concat(os, args...);
    std::cerr << "[morphofit:" << names[static_cast<int>(lvl)] << "] " << os.str() << "\n";
}

template <typename... Args>
void log_debug(const Args&... a) { log_at(LogLevel::Debug, a...); }
template <typename... Args>
void log_info(const Args&... a) { log_at(LogLevel::Info, a...); }
template <typename... Args>
void log_warn(const Args&... a) { log_at(LogLevel::Warn, a...); }
template <typename... Args>
void log_error(const Args&... a) { log_at(LogLevel::ErrorLvl, a...); }

// ---------------------------------------------------------------------------
// Deterministic RNG: xoshiro256** seeded via splitmix64. Self-contained so
// that sampled streams are bit-identical across platforms and stdlibs.
// ---------------------------------------------------------------------------

class Rng {
public:
    explicit Rng(std::uint64_t seed) {
        std::uint64_t x = seed;
        for (auto& word : state_) word = splitmix64(x);
        has_cached_normal_ = false;
    }

    std::uint64_t next_u64() {
        const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    /// Uniform double in [0, 1), 53-bit resolution.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Unbiased integer in [0, n), rejection sampled.
    std::uint64_t below(std::uint64_t n) {
        if (n == 0) throw ParamError("Rng::below: n must be positive");
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t v = next_u64();
        while (v >= limit) v = next_u64();
        return v % n;
    }

    /// Standard normal via Box-Muller (second value cached).
    double normal() {
        if (has_cached_normal_) {
            has_cached_normal_ = false;
            return cached_normal_;
        }
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 2.0 * M_PI * u2;
        cached_normal_ = r * std::sin(a);
        has_cached_normal_ = true;
        return r * std::cos(a);
    }

    double normal(double mean, double sigma) { return mean + sigma * normal(); }

    /// Derive an independent, reproducible stream (e.g. one per subject).
    Rng fork(std::uint64_t stream) const {
        std::uint64_t x = state_[0] ^ (stream * 0x9E3779B97F4A7C15ull);
        return Rng(splitmix64(x) ^ state_[3]);
    }

    /// Deterministic Fisher-Yates shuffle (std::shuffle is stdlib-dependent).
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::swap(v[i - 1], v[static_cast<std::size_t>(below(i))]);
        }
    }

private:
    static std::uint64_t splitmix64(std::uint64_t& x) {
        x += 0x9E3779B97F4A7C15ull;
        std::uint64_t z = x;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }
    static std::uint64_t rotl(std::uint64_t v, int k) { return (v << k) | (v >> (64 - k)); }

    std::uint64_t state_[4];
    double cached_normal_ = 0.0;
    bool has_cached_normal_ = false;
};

// ---------------------------------------------------------------------------
// File helpers. Writes go through a temp file + rename so partially written
// outputs are never observed.
// ---------------------------------------------------------------------------

inline void write_file_atomic(const std::filesystem::path& path,
                              const std::function<void(std::ostream&)>& writer,
                              bool binary = false) {
    namespace fs = std::filesystem;
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream os(tmp, binary ? std::ios::binary : std::ios::out);
        if (!os) throw IoError("cannot open for writing: " + tmp.string());
        writer(os);
        os.flush();
        if (!os) throw IoError("write failed: " + tmp.string());
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) throw IoError("rename failed for " + path.string() + ": " + ec.message());
}

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open: " + path.string());
    std::ostringstream os;
    os << is.rdbuf();
    return os.str();
}

// Binary matrix container: magic, uint64 rows, uint64 cols, row-major doubles.
inline constexpr char kMatrixMagic[8] = {'M', 'F', 'M', 'A', 'T', '6', '4', '\n'};

inline void write_matrix_bin(const std::filesystem::path& path, const Eigen::MatrixXd& m) {
    write_file_atomic(path, [&](std::ostream& os) {
        os.write(kMatrixMagic, 8);
        const std::uint64_t rows = static_cast<std::uint64_t>(m.rows());
        const std::uint64_t cols = static_cast<std::uint64_t>(m.cols());
        os.write(reinterpret_cast<const char*>(&rows), 8);
        os.write(reinterpret_cast<const char*>(&cols), 8);
        for (Eigen::Index r = 0; r < m.rows(); ++r) {
            for (Eigen::Index c = 0; c < m.cols(); ++c) {
                const double v = m(r, c);
                os.write(reinterpret_cast<const char*>(&v), 8);
            }
        }
    }, /*binary=*/true);
}

inline Eigen::MatrixXd read_matrix_bin(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open: " + path.string());
    char magic[8];
    is.read(magic, 8);
    if (!is || std::memcmp(magic, kMatrixMagic, 8) != 0) {
        throw ParseError("bad matrix header in " + path.string());
    }
    std::uint64_t rows = 0, cols = 0;
    is.read(reinterpret_cast<char*>(&rows), 8);
    is.read(reinterpret_cast<char*>(&cols), 8);
    if (!is) throw ParseError("truncated matrix header in " + path.string());
    Eigen::MatrixXd m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (std::uint64_t r = 0; r < rows; ++r) {
        for (std::uint64_t c = 0; c < cols; ++c) {
            double v;
            is.read(reinterpret_cast<char*>(&v), 8);
            if (!is) throw ParseError("truncated matrix data in " + path.string());
            m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = v;
        }
    }
    return m;
}

}  // namespace morphofit
