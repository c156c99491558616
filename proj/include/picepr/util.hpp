#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

namespace picepr {

/// SHA-256 of `data`, hex-encoded. Backed by OpenSSL's EVP interface.
std::string sha256_hex(std::string_view data);

/// FNV-1a 64-bit. Used where a fast deterministic scramble is enough
/// (mock content generation), not where collision resistance matters.
constexpr std::uint64_t fnv1a64(std::string_view data) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : data) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

/// Deterministic Fisher-Yates permutation of 0..n-1. mt19937_64 has a
/// standard-defined sequence and the swap loop is explicit, so the result is
/// identical across platforms and standard libraries (std::shuffle is not).
std::vector<std::size_t> shuffled_indices(std::size_t n, std::uint64_t seed);

std::string trim(std::string_view s);
std::string to_lower(std::string s);
std::vector<std::string> split(std::string_view s, char sep);

/// Runs fn(i) for i in [0, n) on up to `workers` threads. Exceptions from
/// fn propagate (first one wins); remaining items still drain.
void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn);

}  // namespace picepr
