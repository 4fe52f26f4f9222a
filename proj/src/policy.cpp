#include "lims/policy.hpp"

#include <algorithm>
#include <cctype>
#include <stdexcept>
#include <string>

#include "lims/error.hpp"

namespace lims {

namespace {

bool is_letter(char c) noexcept {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z');
}

bool is_digit(char c) noexcept {
    return c >= '0' && c <= '9';
}

char fold(char c) noexcept {
    return static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
}

} // namespace

bool UrlPattern::is_url_char(char c) noexcept {
    return is_letter(c) || is_digit(c) || c == '.' || c == '/' || c == ':' || c == '_' || c == '-';
}

UrlPattern::UrlPattern(std::string raw) : raw_(std::move(raw)) {
    for (char c : raw_) {
        if (c != '*' && !is_url_char(c)) {
            throw std::invalid_argument("character outside the URL pattern alphabet: '" + std::string(1, c) + "'");
        }
    }
}

bool UrlPattern::matches(std::string_view url) const {
    const std::size_t host_end = std::min(url.find('/'), url.size());
    auto same = [&](char pc, std::size_t j) { return j < host_end ? fold(pc) == fold(url[j]) : pc == url[j]; };

    // Iterative glob with single-star backtracking: linear in practice,
    // O(|pattern| * |url|) worst case.
    std::size_t p = 0;
    std::size_t u = 0;
    std::size_t star = std::string::npos;
    std::size_t star_u = 0;
    while (u < url.size()) {
        if (p < raw_.size() && raw_[p] == '*') {
            star = p++;
            star_u = u;
        } else if (p < raw_.size() && same(raw_[p], u)) {
            ++p;
            ++u;
        } else if (star != std::string::npos) {
            p = star + 1;
            u = ++star_u;
        } else {
            return false;
        }
    }
    while (p < raw_.size() && raw_[p] == '*') ++p;
    return p == raw_.size();
}

std::string translate_regex_wildcards(std::string_view regexish) {
    std::string out;
    out.reserve(regexish.size());
    for (std::size_t i = 0; i < regexish.size(); ++i) {
        if (regexish[i] == '.' && i + 1 < regexish.size() && regexish[i + 1] == '*') {
            out.push_back('*');
            ++i;
        } else {
            out.push_back(regexish[i]);
        }
    }
    return out;
}

std::string_view to_string(Action a) {
    return a == Action::allow ? "allow" : "deny";
}

bool is_condition_name(std::string_view name) noexcept {
    if (name.empty() || !is_letter(name.front())) return false;
    return std::all_of(name.begin(), name.end(), [](char c) { return is_letter(c) || is_digit(c) || c == '_'; });
}

namespace {

enum class TokenKind { identifier, pattern, semicolon, end };

struct Token {
    TokenKind kind = TokenKind::end;
    std::string text;
    std::size_t line = 1;
    std::size_t column = 1;
};

std::string describe(const Token& t) {
    switch (t.kind) {
        case TokenKind::identifier: return "identifier '" + t.text + "'";
        case TokenKind::pattern: return "URL pattern \"" + t.text + "\"";
        case TokenKind::semicolon: return "';'";
        case TokenKind::end: return "end of input";
    }
    return "token";
}

class Lexer {
public:
    explicit Lexer(std::string_view src) : src_(src) {}

    Token next() {
        skip_space();
        Token t;
        t.line = line_;
        t.column = column_;
        if (pos_ >= src_.size()) {
            t.kind = TokenKind::end;
            return t;
        }
        const char c = src_[pos_];
        if (c == ';') {
            advance();
            t.kind = TokenKind::semicolon;
            t.text = ";";
            return t;
        }
        if (c == '"') {
            advance();
            t.kind = TokenKind::pattern;
            while (true) {
                if (pos_ >= src_.size()) {
                    throw SyntaxError(line_, column_, "closing '\"' of URL pattern", "end of input");
                }
                const char pc = src_[pos_];
                if (pc == '"') {
                    advance();
                    return t;
                }
                if (pc != '*' && !UrlPattern::is_url_char(pc)) {
                    throw SyntaxError(line_, column_, "URL pattern character (letter, digit, . / : _ - or *)",
                                      quote(pc));
                }
                t.text.push_back(pc);
                advance();
            }
        }
        if (is_letter(c)) {
            t.kind = TokenKind::identifier;
            while (pos_ < src_.size() && (is_letter(src_[pos_]) || is_digit(src_[pos_]) || src_[pos_] == '_')) {
                t.text.push_back(src_[pos_]);
                advance();
            }
            return t;
        }
        throw SyntaxError(line_, column_, "rule token", quote(c));
    }

private:
    static std::string quote(char c) {
        if (c == '\n') return "newline";
        return "'" + std::string(1, c) + "'";
    }

    void skip_space() {
        while (pos_ < src_.size() && std::isspace(static_cast<unsigned char>(src_[pos_]))) advance();
    }

    void advance() {
        if (src_[pos_] == '\n') {
            ++line_;
            column_ = 1;
        } else {
            ++column_;
        }
        ++pos_;
    }

    std::string_view src_;
    std::size_t pos_ = 0;
    std::size_t line_ = 1;
    std::size_t column_ = 1;
};

class Parser {
public:
    explicit Parser(std::string_view src) : lexer_(src) { look_ = lexer_.next(); }

    PolicyDocument parse() {
        PolicyDocument doc;
        while (look_.kind != TokenKind::end) {
            doc.rules.push_back(parse_rule(doc.rules.size()));
        }
        return doc;
    }

private:
    PolicyRule parse_rule(std::size_t ordinal) {
        PolicyRule rule;
        rule.rule_id = ordinal;
        if (look_.kind != TokenKind::identifier || (look_.text != "allow" && look_.text != "deny")) {
            fail("action keyword 'allow' or 'deny'");
        }
        rule.action = look_.text == "allow" ? Action::allow : Action::deny;
        shift();
        rule.page_pattern = expect_pattern("page URL pattern");
        rule.resource_pattern = expect_pattern("resource URL pattern");
        if (look_.kind == TokenKind::identifier && look_.text == "if") {
            shift();
            if (look_.kind != TokenKind::identifier) {
                fail("condition name");
            }
            rule.condition = look_.text;
            shift();
        }
        if (look_.kind != TokenKind::semicolon) {
            fail(rule.condition ? "';'" : "'if' or ';'");
        }
        shift();
        return rule;
    }

    UrlPattern expect_pattern(const char* what) {
        if (look_.kind != TokenKind::pattern) {
            fail(what);
        }
        UrlPattern p(look_.text);
        shift();
        return p;
    }

    [[noreturn]] void fail(const std::string& expected) const {
        throw SyntaxError(look_.line, look_.column, expected, describe(look_));
    }

    void shift() { look_ = lexer_.next(); }

    Lexer lexer_;
    Token look_;
};

} // namespace

PolicyDocument parse_policy(std::string_view source) {
    return Parser(source).parse();
}

std::string serialize_rule(const PolicyRule& rule) {
    std::string out(to_string(rule.action));
    out += " \"" + rule.page_pattern.raw() + "\" \"" + rule.resource_pattern.raw() + "\"";
    if (rule.condition) {
        out += " if " + *rule.condition;
    }
    out += ";";
    return out;
}

std::string serialize_policy(const PolicyDocument& doc) {
    std::string out;
    for (const auto& rule : doc.rules) {
        if (!out.empty()) out.push_back('\n');
        out += serialize_rule(rule);
    }
    return out;
}

std::vector<PolicyRule> applicable_rules(const PolicyDocument& doc, std::string_view page_url,
                                         std::string_view resource_url) {
    std::vector<PolicyRule> out;
    for (const auto& rule : doc.rules) {
        if (rule.page_pattern.matches(page_url) && rule.resource_pattern.matches(resource_url)) {
            out.push_back(rule);
        }
    }
    return out;
}

RuleResolution resolve_rules(std::span<const PolicyRule> matching) {
    RuleResolution res;
    for (const auto& rule : matching) {
        if (!rule.condition) {
            if (rule.action == Action::deny && !res.unconditional_deny) {
                res.unconditional_deny = true;
                res.deny_rule_id = rule.rule_id;
            }
            continue;
        }
        if (std::find(res.conditions.begin(), res.conditions.end(), *rule.condition) == res.conditions.end()) {
            res.conditions.push_back(*rule.condition);
        }
    }
    return res;
}

} // namespace lims
