#pragma once

#include <compare>
#include <cstdint>
#include <string>

namespace hedgeflow {

/// Calendar date at day resolution, stored as days since 1970-01-01.
/// Serialized everywhere as ISO "YYYY-MM-DD".
class Date {
public:
    Date() = default;
    Date(int year, int month, int day);

    static Date parse(const std::string& iso);
    static Date from_serial(std::int64_t days) {
        Date d;
        d.serial_ = days;
        return d;
    }

    std::int64_t serial() const { return serial_; }
    int year() const;
    int month() const;
    int day() const;

    Date plus_days(std::int64_t n) const { return from_serial(serial_ + n); }
    std::string to_string() const;

    auto operator<=>(const Date&) const = default;

private:
    std::int64_t serial_ = 0;
};

/// b - a in calendar days.
inline std::int64_t days_between(Date a, Date b) { return b.serial() - a.serial(); }

} // namespace hedgeflow
