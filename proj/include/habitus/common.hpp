#pragma once

#include <cstdint>
#include <cmath>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace habitus {

namespace fs = std::filesystem;

// All recoverable failures surface as Error with a short tag identifying
// the subsystem ("cloudio", "train", ...) so the CLI can report the stage.
class Error : public std::runtime_error {
public:
    Error(std::string tag, const std::string& msg)
        : std::runtime_error("[" + tag + "] " + msg), tag_(std::move(tag)) {}
    const std::string& tag() const { return tag_; }

private:
    std::string tag_;
};

// ---------------------------------------------------------------------------
// Deterministic RNG.
//
// std::uniform_real_distribution and friends are implementation-defined, so
// every random draw in the project goes through this splitmix64-based
// generator. Identical seeds give identical streams on any platform.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // in [0, 1)
    double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

    // integer in [0, n)
    std::uint64_t next_below(std::uint64_t n) { return n ? next_u64() % n : 0; }

    // standard normal, Box-Muller
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = next_double();
        double u2 = next_double();
        while (u1 <= 0.0) u1 = next_double();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 2.0 * 3.14159265358979323846 * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

    // Derive an independent stream for a sub-task (per tree, per fold, ...).
    static std::uint64_t derive(std::uint64_t seed, std::uint64_t stream) {
        Rng mixer(seed ^ (0x6a09e667f3bcc909ULL + stream * 0x9e3779b97f4a7c15ULL));
        return mixer.next_u64();
    }

private:
    std::uint64_t state_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

// FNV-1a, used for config/stage cache keys.
inline std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL) {
    for (unsigned char ch : bytes) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string to_hex(std::uint64_t value);

// --- small string/file helpers -------------------------------------------

std::string trim(std::string_view s);
std::vector<std::string> split(std::string_view s, char sep);
std::string read_text_file(const fs::path& path);
void write_text_file(const fs::path& path, std::string_view content);
std::vector<std::uint8_t> read_binary_file(const fs::path& path);
void write_binary_file(const fs::path& path, const void* data, std::size_t size);

// Fixed-format float for CSV output; %.12g keeps reruns byte-identical.
std::string fmt_double(double v);

}  // namespace habitus
