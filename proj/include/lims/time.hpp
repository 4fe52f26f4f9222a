#pragma once

#include <atomic>
#include <chrono>
#include <string>
#include <string_view>

namespace lims {

using Timestamp = std::chrono::sys_seconds;
using Date = std::chrono::sys_days;
using Seconds = std::chrono::seconds;

// "YYYY-MM-DD"
Date parse_date(std::string_view text);
std::string format_date(Date d);

// "YYYY-MM-DDTHH:MM:SSZ"; a bare date is accepted as midnight UTC.
Timestamp parse_timestamp(std::string_view text);
std::string format_timestamp(Timestamp t);

// Whole days from `from` to `to`, floored.
long days_between(Timestamp from, Timestamp to);

class Clock {
public:
    virtual ~Clock() = default;
    virtual Timestamp now() const = 0;
};

class SystemClock final : public Clock {
public:
    Timestamp now() const override;
};

// Test and simulation clock; thread-safe.
class ManualClock final : public Clock {
public:
    explicit ManualClock(Timestamp start) : now_(start.time_since_epoch().count()) {}

    Timestamp now() const override { return Timestamp{Seconds{now_.load()}}; }
    void set(Timestamp t) { now_.store(t.time_since_epoch().count()); }
    void advance(Seconds by) { now_.fetch_add(by.count()); }

private:
    std::atomic<Seconds::rep> now_;
};

} // namespace lims
