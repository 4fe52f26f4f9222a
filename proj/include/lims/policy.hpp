#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace lims {

// Glob over the policy URL alphabet. `*` matches any (possibly empty) run of
// characters; every other character matches itself. Matching is anchored at
// both ends, case-insensitive on the host part of the URL, case-sensitive on
// the path.
class UrlPattern {
public:
    UrlPattern() = default;

    // Throws std::invalid_argument if a character is outside the alphabet.
    explicit UrlPattern(std::string raw);

    const std::string& raw() const noexcept { return raw_; }
    bool matches(std::string_view normalized_url) const;

    static bool is_url_char(char c) noexcept;

    bool operator==(const UrlPattern&) const = default;

private:
    std::string raw_;
};

inline bool matches(const UrlPattern& pattern, std::string_view normalized_url) {
    return pattern.matches(normalized_url);
}

// Rewrites regex-style ".*" into the DSL wildcard `*`.
std::string translate_regex_wildcards(std::string_view regexish);

enum class Action { allow, deny };

std::string_view to_string(Action a);

struct PolicyRule {
    Action action = Action::deny;
    UrlPattern page_pattern;
    UrlPattern resource_pattern;
    std::optional<std::string> condition;
    std::size_t rule_id = 0;  // ordinal within the document

    bool operator==(const PolicyRule&) const = default;
};

struct PolicyDocument {
    std::vector<PolicyRule> rules;

    bool operator==(const PolicyDocument&) const = default;
};

bool is_condition_name(std::string_view name) noexcept;

// Throws SyntaxError with the 1-based line/column of the offending token.
PolicyDocument parse_policy(std::string_view source);

// One rule per line, no trailing newline; the empty document is "".
std::string serialize_policy(const PolicyDocument& doc);
std::string serialize_rule(const PolicyRule& rule);

// Rules whose page and resource patterns both match, in document order.
std::vector<PolicyRule> applicable_rules(const PolicyDocument& doc, std::string_view page_url,
                                         std::string_view resource_url);

// What the matching rules require for one request.
struct RuleResolution {
    bool unconditional_deny = false;
    std::optional<std::size_t> deny_rule_id;   // set when unconditional_deny
    std::vector<std::string> conditions;       // distinct, first-seen order
};

// Deny dominates allow: an unconditional deny blocks outright; otherwise the
// union of the matching rules' conditions must all verify.
RuleResolution resolve_rules(std::span<const PolicyRule> matching);

} // namespace lims
