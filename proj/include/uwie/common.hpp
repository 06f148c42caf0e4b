#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>

namespace uwie {

// ---------------------------------------------------------------------------
// Error taxonomy. The CLI maps these onto exit codes: numeric failures exit
// with 3, everything else data/format related with 2.

enum class ErrorKind {
    InvalidInput,
    Config,
    Shape,
    State,
    Numeric,
    Format,
    Corruption,
    Data,
    IllConditioned,
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& msg) : std::runtime_error(msg), kind_(kind) {}
    ErrorKind kind() const { return kind_; }

private:
    ErrorKind kind_;
};

struct InvalidInputError : Error {
    explicit InvalidInputError(const std::string& m) : Error(ErrorKind::InvalidInput, m) {}
};
struct ConfigError : Error {
    explicit ConfigError(const std::string& m) : Error(ErrorKind::Config, m) {}
};
struct ShapeError : Error {
    explicit ShapeError(const std::string& m) : Error(ErrorKind::Shape, m) {}
};
struct StateError : Error {
    explicit StateError(const std::string& m) : Error(ErrorKind::State, m) {}
};
struct NumericError : Error {
    explicit NumericError(const std::string& m) : Error(ErrorKind::Numeric, m) {}
};
struct FormatError : Error {
    explicit FormatError(const std::string& m) : Error(ErrorKind::Format, m) {}
};
struct CorruptionError : Error {
    explicit CorruptionError(const std::string& m) : Error(ErrorKind::Corruption, m) {}
};
struct DataError : Error {
    explicit DataError(const std::string& m) : Error(ErrorKind::Data, m) {}
};
struct IllConditionedError : Error {
    explicit IllConditionedError(const std::string& m) : Error(ErrorKind::IllConditioned, m) {}
};

// ---------------------------------------------------------------------------
// Deterministic RNG. mt19937_64 has a standardized bit stream; the [0,1)
// mapping below avoids std::uniform_real_distribution, whose output is
// implementation-defined. All randomness in the project flows through this.

class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // Uniform in [0,1) with 53 random mantissa bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n), n >= 1. Rejection-free modulo is fine here:
    // n is tiny compared to 2^64, bias is negligible and fully deterministic.
    std::uint64_t below(std::uint64_t n) { return engine_() % n; }

private:
    std::mt19937_64 engine_;
};

// FNV-1a, used to derive per-item seeds and split assignments so that
// processing order and parallel fan-out never change outputs.
std::uint64_t fnv1a64(std::string_view bytes);
std::uint64_t fnv1a64(std::uint64_t h, std::string_view bytes);

// Derived seed for a (master, tag, a, b) tuple, e.g. per-sample synthesis
// seeds hash(master, scene_id, class_id, draw_index).
std::uint64_t derive_seed(std::uint64_t master, std::string_view tag, std::uint64_t a = 0,
                          std::uint64_t b = 0);

// Deterministic Fisher-Yates shuffle driven by Rng::below.
template <typename T>
void shuffle(std::span<T> items, Rng& rng) {
    for (std::size_t i = items.size(); i > 1; --i) {
        std::size_t j = static_cast<std::size_t>(rng.below(i));
        std::swap(items[i - 1], items[j]);
    }
}

// Pairwise summation in index order: the one reduction order used for all
// dataset-level means, so parallel producers + this reducer stay bit-stable.
double pairwise_sum(std::span<const double> values);

double mean(std::span<const double> values);

}  // namespace uwie
