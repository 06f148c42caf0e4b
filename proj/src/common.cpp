#include "uwie/common.hpp"

#include <array>
#include <cstring>

namespace uwie {

static constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ULL;
static constexpr std::uint64_t kFnvPrime = 0x100000001b3ULL;

std::uint64_t fnv1a64(std::uint64_t h, std::string_view bytes) {
    for (unsigned char c : bytes) {
        h ^= c;
        h *= kFnvPrime;
    }
    return h;
}

std::uint64_t fnv1a64(std::string_view bytes) { return fnv1a64(kFnvOffset, bytes); }

static std::uint64_t fnv1a64_u64(std::uint64_t h, std::uint64_t v) {
    std::array<char, 8> buf;
    for (int i = 0; i < 8; ++i) buf[static_cast<std::size_t>(i)] = static_cast<char>((v >> (8 * i)) & 0xff);
    return fnv1a64(h, std::string_view(buf.data(), buf.size()));
}

std::uint64_t derive_seed(std::uint64_t master, std::string_view tag, std::uint64_t a,
                          std::uint64_t b) {
    std::uint64_t h = kFnvOffset;
    h = fnv1a64_u64(h, master);
    h = fnv1a64(h, tag);
    h = fnv1a64_u64(h, a);
    h = fnv1a64_u64(h, b);
    // mt19937_64 seeded with 0 is valid but avoid it anyway.
    return h == 0 ? kFnvPrime : h;
}

double pairwise_sum(std::span<const double> values) {
    const std::size_t n = values.size();
    if (n == 0) return 0.0;
    if (n <= 8) {
        double s = 0.0;
        for (double v : values) s += v;
        return s;
    }
    const std::size_t half = n / 2;
    return pairwise_sum(values.first(half)) + pairwise_sum(values.subspan(half));
}

double mean(std::span<const double> values) {
    if (values.empty()) throw InvalidInputError("mean of empty range");
    return pairwise_sum(values) / static_cast<double>(values.size());
}

}  // namespace uwie
