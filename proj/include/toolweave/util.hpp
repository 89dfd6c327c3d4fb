#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace toolweave {

using Json = nlohmann::json;

// --- deterministic hashing / RNG --------------------------------------------
// All randomness in the project flows through these so that runs are
// byte-identical across compilers and standard libraries. Do not replace
// with std::uniform_int_distribution / std::shuffle (implementation-defined).

uint64_t splitmix64(uint64_t x);
uint64_t fnv1a64(std::string_view s);
uint64_t mix64(uint64_t a, uint64_t b);

class Rng {
public:
    explicit Rng(uint64_t seed) : state_(splitmix64(seed ^ 0x9e3779b97f4a7c15ull)) {}

    uint64_t next();
    // Uniform in [0, n), n > 0. Rejection sampling, no modulo bias.
    uint64_t bounded(uint64_t n);
    double unit();  // [0, 1)

    template <typename T>
    void shuffle(std::vector<T>& v) {
        if (v.size() < 2) return;
        for (size_t i = v.size() - 1; i > 0; --i) {
            size_t j = static_cast<size_t>(bounded(i + 1));
            std::swap(v[i], v[j]);
        }
    }

    // First k elements of a Fisher-Yates pass; order is part of the contract.
    template <typename T>
    std::vector<T> sample(std::vector<T> pool, size_t k) {
        if (k > pool.size()) k = pool.size();
        for (size_t i = 0; i < k; ++i) {
            size_t j = i + static_cast<size_t>(bounded(pool.size() - i));
            std::swap(pool[i], pool[j]);
        }
        pool.resize(k);
        return pool;
    }

private:
    uint64_t state_;
};

// --- strings -----------------------------------------------------------------

std::string trim(std::string_view s);
std::string collapse_whitespace(std::string_view s);
std::string to_lower(std::string_view s);
std::string hex8(uint64_t v);

// Strips ```...``` fences and leading "json" language tags from model output.
std::string strip_code_fences(std::string_view s);

std::string sha256_hex(std::string_view data);

// --- canonical JSON ----------------------------------------------------------
// Keys sorted, string values whitespace-collapsed, integral doubles folded to
// integers. Used to key simulated tool responses so textually different but
// semantically equal arguments hit the same template.

Json canonicalize(const Json& v);
std::string canonical_dump(const Json& v);

// Extracts the first balanced JSON array/object starting at or after `from`.
// Returns empty string if none found.
std::string extract_balanced_json(std::string_view text, size_t from);

// --- small file helpers ------------------------------------------------------

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, std::string_view content);
std::string now_iso8601();

}  // namespace toolweave
