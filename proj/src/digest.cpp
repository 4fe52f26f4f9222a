#include "lims/digest.hpp"

#include <stdexcept>
#include <string>

#include <openssl/evp.h>

#include "lims/error.hpp"

namespace lims {

std::string_view to_string(DigestAlgorithm alg) {
    switch (alg) {
        case DigestAlgorithm::sha256: return "sha256";
        case DigestAlgorithm::sha384: return "sha384";
        case DigestAlgorithm::sha512: return "sha512";
    }
    return "sha256";
}

std::optional<DigestAlgorithm> parse_digest_algorithm(std::string_view tag) {
    if (tag == "sha256") return DigestAlgorithm::sha256;
    if (tag == "sha384") return DigestAlgorithm::sha384;
    if (tag == "sha512") return DigestAlgorithm::sha512;
    return std::nullopt;
}

std::string hash_bytes(DigestAlgorithm alg, std::string_view data) {
    const EVP_MD* md = nullptr;
    switch (alg) {
        case DigestAlgorithm::sha256: md = EVP_sha256(); break;
        case DigestAlgorithm::sha384: md = EVP_sha384(); break;
        case DigestAlgorithm::sha512: md = EVP_sha512(); break;
    }
    unsigned char out[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), out, &len, md, nullptr) != 1) {
        throw Error("digest computation failed");
    }
    return std::string(reinterpret_cast<const char*>(out), len);
}

std::string base64_encode(std::string_view bytes) {
    std::string out(4 * ((bytes.size() + 2) / 3), '\0');
    const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                                  reinterpret_cast<const unsigned char*>(bytes.data()), static_cast<int>(bytes.size()));
    out.resize(static_cast<std::size_t>(n));
    return out;
}

std::string hex_encode(std::string_view bytes) {
    static constexpr char digits[] = "0123456789abcdef";
    std::string out;
    out.reserve(bytes.size() * 2);
    for (unsigned char c : bytes) {
        out.push_back(digits[c >> 4]);
        out.push_back(digits[c & 0xF]);
    }
    return out;
}

SriDigest SriDigest::parse(std::string_view text) {
    const auto dash = text.find('-');
    if (dash == std::string_view::npos) {
        throw ConfigError("digest must look like <alg>-<base64>: " + std::string(text));
    }
    const auto alg = parse_digest_algorithm(text.substr(0, dash));
    if (!alg) {
        throw ConfigError("digest algorithm must be sha256, sha384 or sha512: " + std::string(text));
    }
    const auto b64 = text.substr(dash + 1);
    if (b64.empty()) {
        throw ConfigError("empty digest: " + std::string(text));
    }
    return SriDigest{*alg, std::string(b64)};
}

SriDigest SriDigest::of(DigestAlgorithm alg, std::string_view content) {
    return SriDigest{alg, base64_encode(hash_bytes(alg, content))};
}

std::string SriDigest::str() const {
    return std::string(to_string(algorithm)) + "-" + base64;
}

bool SriDigest::matches(std::string_view content) const {
    return SriDigest::of(algorithm, content).base64 == base64;
}

} // namespace lims
