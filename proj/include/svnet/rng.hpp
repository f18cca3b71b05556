#pragma once

#include <cstdint>
#include <cmath>
#include <string_view>

namespace svnet {

// ============================================================================
// Counter-based random numbers (Philox 2x64-10).
//
// Every draw is a pure function of (key, block, counter). Streams never share
// state, so paths can be generated on any worker in any order and still
// reproduce bit-identically; reductions fix the combination order separately.
// ============================================================================

constexpr std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

// FNV-1a, used to fold experiment names / config text into key material.
constexpr std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (char c : s) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001B3ULL;
    }
    return h;
}

struct PhiloxPair {
    std::uint64_t a, b;
};

inline PhiloxPair philox2x64(std::uint64_t c0, std::uint64_t c1, std::uint64_t key) {
    constexpr std::uint64_t M = 0xD2B74407B1CE6E93ULL;
    constexpr std::uint64_t W = 0x9E3779B97F4A7C15ULL;
    for (int round = 0; round < 10; ++round) {
        const unsigned __int128 prod = static_cast<unsigned __int128>(M) * c0;
        const std::uint64_t hi = static_cast<std::uint64_t>(prod >> 64);
        const std::uint64_t lo = static_cast<std::uint64_t>(prod);
        c0 = hi ^ key ^ c1;
        c1 = lo;
        key += W;
    }
    return {c0, c1};
}

// One substream: (key, block) fixed, counter advances. Emits uniforms in (0,1]
// and standard normals via Box-Muller (pairs cached).
class RngStream {
public:
    RngStream(std::uint64_t key, std::uint64_t block) : key_(key), block_(block) {}

    std::uint64_t next_u64() {
        if (half_) {
            half_ = false;
            return saved_;
        }
        const PhiloxPair p = philox2x64(counter_++, block_, key_);
        saved_ = p.b;
        half_ = true;
        return p.a;
    }

    // strictly positive so log() below is safe
    double uniform() {
        return (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
    }

    double normal() {
        if (have_normal_) {
            have_normal_ = false;
            return saved_normal_;
        }
        const double u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 6.283185307179586476925286766559 * u2;
        saved_normal_ = r * std::sin(a);
        have_normal_ = true;
        return r * std::cos(a);
    }

private:
    std::uint64_t key_;
    std::uint64_t block_;
    std::uint64_t counter_ = 0;
    std::uint64_t saved_ = 0;
    bool half_ = false;
    double saved_normal_ = 0.0;
    bool have_normal_ = false;
};

// Master key with pure derivation: child() forks a labelled namespace,
// stream() addresses a (path, stream_id) substream inside it.
struct RngKey {
    std::uint64_t master = 0;

    static RngKey from_seed(std::uint64_t seed) { return {splitmix64(seed)}; }

    RngKey child(std::uint64_t tag) const { return {splitmix64(master ^ splitmix64(tag))}; }
    RngKey child(std::string_view name) const { return child(fnv1a(name)); }

    RngStream stream(std::uint64_t path_index, std::uint32_t stream_id = 0) const {
        return RngStream(master, (path_index << 16) | (stream_id & 0xFFFFu));
    }
};

} // namespace svnet
