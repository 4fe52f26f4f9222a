#include <gtest/gtest.h>

#include "lims/digest.hpp"

namespace lims {
namespace {

// Reference digests computed with Python's hashlib/base64.
TEST(Digest, Sha256Hex) {
    EXPECT_EQ(hex_encode(hash_bytes(DigestAlgorithm::sha256, "hello")),
              "2cf24dba5fb0a30e26e83b2ac5b9e29e1b161e5c1fa7425e73043362938b9824");
}

TEST(Digest, Base64) {
    EXPECT_EQ(base64_encode(""), "");
    EXPECT_EQ(base64_encode("f"), "Zg==");
    EXPECT_EQ(base64_encode("foobar"), "Zm9vYmFy");
}

TEST(Digest, SriOfKnownContent) {
    EXPECT_EQ(SriDigest::of(DigestAlgorithm::sha256, "alert(1)").str(),
              "sha256-bhHHL3z2vDgxUt0W3dWQOrprscmda2Y5pLsLg4GF+pI=");
    EXPECT_EQ(SriDigest::of(DigestAlgorithm::sha384, "alert(1)").str(),
              "sha384-HT2E9NfWiuQ/w1PRai+hTyqW16NIoCGA/m8VQDUopfAtcz6YQjtsMmQd5uRbVDpW");
    EXPECT_EQ(SriDigest::of(DigestAlgorithm::sha512, "alert(1)").str(),
              "sha512-+uuYUxxe7oWIShQrWEmMn/fixz/rxDP4qcAZddXLDM3nN8/tpk1ZC2jXQk6N+mXE65jwfzNVUJL/qjA3y9KbuQ==");
}

TEST(Digest, SriParseAndMatch) {
    const auto d = SriDigest::parse("sha384-HT2E9NfWiuQ/w1PRai+hTyqW16NIoCGA/m8VQDUopfAtcz6YQjtsMmQd5uRbVDpW");
    EXPECT_EQ(d.algorithm, DigestAlgorithm::sha384);
    EXPECT_TRUE(d.matches("alert(1)"));
    EXPECT_FALSE(d.matches("alert(2)"));
    EXPECT_ANY_THROW(SriDigest::parse("md5-abc"));
    EXPECT_ANY_THROW(SriDigest::parse("sha256"));
}

} // namespace
} // namespace lims
