#pragma once

#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_set>

namespace lims {

// A URL reduced to the form patterns are matched against: `host/path`.
// Scheme, default port, query and fragment are stripped; the query is
// kept on the side because some conditions inspect it.
struct NormalizedUrl {
    std::string host;   // lowercase, includes ":port" when non-default
    std::string path;   // always starts with '/'
    std::optional<std::string> query;

    std::string text() const { return host + path; }
    std::string host_name() const;  // host without port
};

// Throws MalformedUrl when the input has no http(s) scheme or no host.
NormalizedUrl normalize_url(std::string_view raw);

// Accepts either an absolute URL or an already-normalized `host/path` text.
NormalizedUrl parse_normalized(std::string_view text);

// Host name (no port) of a normalized `host/path` text.
std::string host_of(std::string_view normalized);

// Public-suffix rules in the publicsuffix.org list syntax (`*.` wildcards
// and `!` exceptions). Unknown TLDs fall back to the implicit "*" rule.
class PublicSuffixList {
public:
    static const PublicSuffixList& builtin();
    static PublicSuffixList from_text(std::string_view list_text);

    // The registrable domain (eTLD+1) of a host; the host itself when it is
    // an IP literal or is itself a public suffix.
    std::string registrable_domain(std::string_view host) const;

private:
    std::unordered_set<std::string> rules_;
    std::unordered_set<std::string> wildcards_;   // stored without "*."
    std::unordered_set<std::string> exceptions_;  // stored without "!"
};

inline std::string etld1(std::string_view host) {
    return PublicSuffixList::builtin().registrable_domain(host);
}

// Origin of an absolute URL, e.g. "https://cdn.example.com".
std::string origin_of(std::string_view raw_url);

} // namespace lims
