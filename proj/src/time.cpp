#include "lims/time.hpp"

#include <charconv>
#include <cstdio>
#include <stdexcept>
#include <string>

namespace lims {

namespace {

int parse_field(std::string_view text, std::size_t pos, std::size_t len) {
    if (pos + len > text.size()) {
        throw std::invalid_argument("truncated date/time: " + std::string(text));
    }
    int value = 0;
    const char* first = text.data() + pos;
    auto [ptr, ec] = std::from_chars(first, first + len, value);
    if (ec != std::errc{} || ptr != first + len) {
        throw std::invalid_argument("bad date/time field in: " + std::string(text));
    }
    return value;
}

void expect_char(std::string_view text, std::size_t pos, char c) {
    if (pos >= text.size() || text[pos] != c) {
        throw std::invalid_argument("malformed date/time: " + std::string(text));
    }
}

} // namespace

Date parse_date(std::string_view text) {
    if (text.size() != 10) {
        throw std::invalid_argument("expected YYYY-MM-DD, got: " + std::string(text));
    }
    const int y = parse_field(text, 0, 4);
    expect_char(text, 4, '-');
    const int m = parse_field(text, 5, 2);
    expect_char(text, 7, '-');
    const int d = parse_field(text, 8, 2);
    const std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{static_cast<unsigned>(m)},
                                          std::chrono::day{static_cast<unsigned>(d)}};
    if (!ymd.ok()) {
        throw std::invalid_argument("invalid calendar date: " + std::string(text));
    }
    return Date{ymd};
}

std::string format_date(Date d) {
    const std::chrono::year_month_day ymd{d};
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()), static_cast<unsigned>(ymd.month()),
                  static_cast<unsigned>(ymd.day()));
    return buf;
}

Timestamp parse_timestamp(std::string_view text) {
    if (text.size() == 10) {
        return Timestamp{parse_date(text)};
    }
    if (text.size() != 20 || text.back() != 'Z') {
        throw std::invalid_argument("expected YYYY-MM-DDTHH:MM:SSZ, got: " + std::string(text));
    }
    const Date day = parse_date(text.substr(0, 10));
    expect_char(text, 10, 'T');
    const int hh = parse_field(text, 11, 2);
    expect_char(text, 13, ':');
    const int mm = parse_field(text, 14, 2);
    expect_char(text, 16, ':');
    const int ss = parse_field(text, 17, 2);
    if (hh > 23 || mm > 59 || ss > 60) {
        throw std::invalid_argument("time of day out of range: " + std::string(text));
    }
    return Timestamp{day} + std::chrono::hours{hh} + std::chrono::minutes{mm} + Seconds{ss};
}

std::string format_timestamp(Timestamp t) {
    const Date day = std::chrono::floor<std::chrono::days>(t);
    const auto tod = std::chrono::hh_mm_ss{t - Timestamp{day}};
    char buf[32];
    std::snprintf(buf, sizeof buf, "%sT%02d:%02d:%02dZ", format_date(day).c_str(),
                  static_cast<int>(tod.hours().count()), static_cast<int>(tod.minutes().count()),
                  static_cast<int>(tod.seconds().count()));
    return buf;
}

long days_between(Timestamp from, Timestamp to) {
    return static_cast<long>(std::chrono::floor<std::chrono::days>(to - from).count());
}

Timestamp SystemClock::now() const {
    return std::chrono::floor<Seconds>(std::chrono::system_clock::now());
}

} // namespace lims
