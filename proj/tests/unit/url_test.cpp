#include <gtest/gtest.h>

#include "lims/error.hpp"
#include "lims/url.hpp"

namespace lims {
namespace {

TEST(NormalizeUrl, StripsSchemeDefaultPortAndQuery) {
    const auto n = normalize_url("https://Example.COM:443/a?id=1");
    EXPECT_EQ(n.text(), "example.com/a");
    ASSERT_TRUE(n.query);
    EXPECT_EQ(*n.query, "id=1");
}

TEST(NormalizeUrl, Basics) {
    EXPECT_EQ(normalize_url("https://a.b/").text(), "a.b/");
    EXPECT_EQ(normalize_url("http://a.b").text(), "a.b/");
    EXPECT_EQ(normalize_url("http://A.b:80/x/Y#frag").text(), "a.b/x/Y");
    EXPECT_EQ(normalize_url("https://a.b:8443/x").text(), "a.b:8443/x");
    EXPECT_EQ(normalize_url("https://a.b/%41b").text(), "a.b/%41b");
    EXPECT_FALSE(normalize_url("https://a.b/p#q?x").query);
}

TEST(NormalizeUrl, Malformed) {
    EXPECT_THROW(normalize_url("not a url"), MalformedUrl);
    EXPECT_THROW(normalize_url("ftp://a.b/"), MalformedUrl);
    EXPECT_THROW(normalize_url("https:///path"), MalformedUrl);
    EXPECT_THROW(normalize_url("https://a.b:99999/"), MalformedUrl);
}

TEST(NormalizeUrl, Idempotent) {
    for (const char* raw : {"https://Example.COM:443/a?id=1", "http://x.y.z:81/p/q", "https://a.b"}) {
        const std::string once = normalize_url(raw).text();
        EXPECT_EQ(parse_normalized(once).text(), once) << raw;
    }
}

TEST(PublicSuffix, RegistrableDomain) {
    EXPECT_EQ(etld1("www.example.com"), "example.com");
    EXPECT_EQ(etld1("example.co.uk"), "example.co.uk");
    EXPECT_EQ(etld1("a.b.example.co.uk"), "example.co.uk");
    EXPECT_EQ(etld1("cdn.jsdelivr.net"), "jsdelivr.net");
    EXPECT_EQ(etld1("192.0.2.1"), "192.0.2.1");
    EXPECT_EQ(etld1("com"), "com");
}

TEST(PublicSuffix, WildcardAndExceptionRules) {
    const auto psl = PublicSuffixList::from_text("com\n*.ck\n!www.ck\n// comment\n");
    EXPECT_EQ(psl.registrable_domain("a.b.ck"), "a.b.ck");
    EXPECT_EQ(psl.registrable_domain("x.a.b.ck"), "a.b.ck");
    EXPECT_EQ(psl.registrable_domain("www.ck"), "www.ck");
    EXPECT_EQ(psl.registrable_domain("foo.www.ck"), "www.ck");
    EXPECT_EQ(psl.registrable_domain("x.example.com"), "example.com");
}

TEST(Origin, OfAbsoluteUrl) {
    EXPECT_EQ(origin_of("https://CDN.example.com/x.js?v=1"), "https://cdn.example.com");
    EXPECT_EQ(origin_of("http://a.b:8080/"), "http://a.b:8080");
}

} // namespace
} // namespace lims
