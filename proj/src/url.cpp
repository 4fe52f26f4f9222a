#include "lims/url.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <string>
#include <vector>

#include "lims/error.hpp"

namespace lims {

namespace {

std::string lowercase(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
    return out;
}

bool is_ip_literal(std::string_view host) {
    if (!host.empty() && host.front() == '[') return true;
    if (host.empty()) return false;
    return std::all_of(host.begin(), host.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)) || c == '.'; });
}

bool valid_host_char(char c) {
    const auto u = static_cast<unsigned char>(c);
    return std::isalnum(u) || c == '-' || c == '.' || c == '_' || u >= 0x80;
}

// Subset of the public suffix list covering common gTLDs, ccTLDs and their
// second-level registries. Load a full list with PublicSuffixList::from_text.
constexpr std::string_view builtin_suffixes = R"(
com
net
org
edu
gov
mil
int
info
biz
io
co
ai
app
dev
xyz
shop
store
online
site
tech
top
club
blog
cloud
news
tv
me
us
ca
de
fr
it
es
nl
be
ch
at
se
no
dk
fi
pl
cz
ru
ua
jp
co.jp
ne.jp
or.jp
ac.jp
go.jp
cn
com.cn
net.cn
org.cn
gov.cn
hk
com.hk
tw
com.tw
kr
co.kr
in
co.in
gov.in
au
com.au
net.au
org.au
edu.au
gov.au
nz
co.nz
uk
co.uk
org.uk
ac.uk
gov.uk
ltd.uk
plc.uk
br
com.br
gov.br
ar
com.ar
mx
com.mx
do
com.do
org.do
gov.do
edu.do
om
com.om
br
sg
com.sg
za
co.za
tr
com.tr
ir
eg
il
co.il
gr
pt
ie
*.ck
!www.ck
github.io
blogspot.com
cloudfront.net
herokuapp.com
)";

} // namespace

std::string NormalizedUrl::host_name() const {
    if (!host.empty() && host.front() == '[') {
        const auto close = host.find(']');
        return host.substr(0, close == std::string::npos ? host.size() : close + 1);
    }
    return host.substr(0, host.find(':'));
}

NormalizedUrl normalize_url(std::string_view raw) {
    const auto scheme_end = raw.find("://");
    if (scheme_end == std::string_view::npos) {
        throw MalformedUrl("URL has no scheme: " + std::string(raw));
    }
    const std::string scheme = lowercase(raw.substr(0, scheme_end));
    if (scheme != "https" && scheme != "http") {
        throw MalformedUrl("URL scheme must be http or https: " + std::string(raw));
    }
    std::string_view rest = raw.substr(scheme_end + 3);

    std::optional<std::string> query;
    if (const auto hash = rest.find('#'); hash != std::string_view::npos) {
        rest = rest.substr(0, hash);
    }
    if (const auto q = rest.find('?'); q != std::string_view::npos) {
        query = std::string(rest.substr(q + 1));
        rest = rest.substr(0, q);
    }

    const auto slash = rest.find('/');
    std::string_view authority = rest.substr(0, slash);
    std::string path = slash == std::string_view::npos ? "/" : std::string(rest.substr(slash));

    if (const auto at = authority.rfind('@'); at != std::string_view::npos) {
        authority = authority.substr(at + 1);
    }

    std::string_view host_part = authority;
    std::string_view port_part;
    if (!authority.empty() && authority.front() == '[') {
        const auto close = authority.find(']');
        if (close == std::string_view::npos) {
            throw MalformedUrl("unterminated IPv6 literal: " + std::string(raw));
        }
        host_part = authority.substr(0, close + 1);
        if (close + 1 < authority.size()) {
            if (authority[close + 1] != ':') throw MalformedUrl("bad authority: " + std::string(raw));
            port_part = authority.substr(close + 2);
        }
    } else if (const auto colon = authority.rfind(':'); colon != std::string_view::npos) {
        host_part = authority.substr(0, colon);
        port_part = authority.substr(colon + 1);
    }

    std::string host = lowercase(host_part);
    while (!host.empty() && host.back() == '.') host.pop_back();
    if (host.empty()) {
        throw MalformedUrl("URL has no host: " + std::string(raw));
    }
    if (host.front() != '[' && !std::all_of(host.begin(), host.end(), valid_host_char)) {
        throw MalformedUrl("invalid host: " + std::string(raw));
    }

    if (!port_part.empty()) {
        int port = 0;
        auto [ptr, ec] = std::from_chars(port_part.data(), port_part.data() + port_part.size(), port);
        if (ec != std::errc{} || ptr != port_part.data() + port_part.size() || port <= 0 || port > 65535) {
            throw MalformedUrl("invalid port: " + std::string(raw));
        }
        const int default_port = scheme == "https" ? 443 : 80;
        if (port != default_port) {
            host += ":" + std::to_string(port);
        }
    }

    return NormalizedUrl{std::move(host), std::move(path), std::move(query)};
}

NormalizedUrl parse_normalized(std::string_view text) {
    if (text.find("://") != std::string_view::npos) {
        return normalize_url(text);
    }
    return normalize_url("https://" + std::string(text));
}

std::string host_of(std::string_view normalized) {
    return parse_normalized(normalized).host_name();
}

const PublicSuffixList& PublicSuffixList::builtin() {
    static const PublicSuffixList list = from_text(builtin_suffixes);
    return list;
}

PublicSuffixList PublicSuffixList::from_text(std::string_view list_text) {
    PublicSuffixList list;
    std::size_t pos = 0;
    while (pos < list_text.size()) {
        auto eol = list_text.find('\n', pos);
        if (eol == std::string_view::npos) eol = list_text.size();
        std::string_view line = list_text.substr(pos, eol - pos);
        pos = eol + 1;
        if (const auto ws = line.find_first_of(" \t\r"); ws != std::string_view::npos) {
            line = line.substr(0, ws);
        }
        if (line.empty() || line.starts_with("//")) continue;
        const std::string rule = lowercase(line);
        if (rule.starts_with("!")) {
            list.exceptions_.insert(rule.substr(1));
        } else if (rule.starts_with("*.")) {
            list.wildcards_.insert(rule.substr(2));
        } else {
            list.rules_.insert(rule);
        }
    }
    return list;
}

std::string PublicSuffixList::registrable_domain(std::string_view host_in) const {
    std::string host = lowercase(host_in);
    if (const auto colon = host.find(':'); colon != std::string::npos && host.front() != '[') {
        host.resize(colon);
    }
    if (is_ip_literal(host)) return host;

    std::vector<std::string_view> labels;
    std::string_view hv = host;
    std::size_t start = 0;
    while (start <= hv.size()) {
        const auto dot = hv.find('.', start);
        const auto end = dot == std::string_view::npos ? hv.size() : dot;
        labels.push_back(hv.substr(start, end - start));
        if (dot == std::string_view::npos) break;
        start = dot + 1;
    }

    // Longest matching rule wins; exceptions beat wildcards.
    std::size_t suffix_labels = 1;  // implicit "*" rule
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const std::string candidate(hv.substr(static_cast<std::size_t>(labels[i].data() - hv.data())));
        const std::size_t count = labels.size() - i;
        if (exceptions_.contains(candidate)) {
            suffix_labels = count - 1;
            break;
        }
        if (rules_.contains(candidate) && count > suffix_labels) {
            suffix_labels = count;
        }
        if (i + 1 < labels.size()) {
            const std::string parent(hv.substr(static_cast<std::size_t>(labels[i + 1].data() - hv.data())));
            if (wildcards_.contains(parent) && count > suffix_labels) {
                suffix_labels = count;
            }
        }
    }

    if (suffix_labels >= labels.size()) {
        return host;
    }
    const std::size_t first = labels.size() - suffix_labels - 1;
    return std::string(hv.substr(static_cast<std::size_t>(labels[first].data() - hv.data())));
}

std::string origin_of(std::string_view raw_url) {
    const auto scheme_end = raw_url.find("://");
    const std::string scheme = scheme_end == std::string_view::npos ? "https" : lowercase(raw_url.substr(0, scheme_end));
    const NormalizedUrl n = normalize_url(raw_url);
    return scheme + "://" + n.host;
}

} // namespace lims
