#pragma once

#include <optional>
#include <string>
#include <string_view>

namespace lims {

enum class DigestAlgorithm { sha256, sha384, sha512 };

std::string_view to_string(DigestAlgorithm alg);
std::optional<DigestAlgorithm> parse_digest_algorithm(std::string_view tag);

// Raw digest bytes.
std::string hash_bytes(DigestAlgorithm alg, std::string_view data);
std::string base64_encode(std::string_view bytes);
std::string hex_encode(std::string_view bytes);

// SRI-style digest "<alg>-<base64>", e.g. "sha384-oqVuAfXRKap7fdgcCY5uykM6+R9GqQ8K/uxy9rx7HNQlGYl1kPzQho1wx4JwY8wC".
struct SriDigest {
    DigestAlgorithm algorithm = DigestAlgorithm::sha256;
    std::string base64;

    static SriDigest parse(std::string_view text);
    static SriDigest of(DigestAlgorithm alg, std::string_view content);
    std::string str() const;
    bool matches(std::string_view content) const;

    bool operator==(const SriDigest&) const = default;
};

} // namespace lims
