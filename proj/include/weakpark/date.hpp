#ifndef WEAKPARK_DATE_HPP_
#define WEAKPARK_DATE_HPP_

#include <chrono>
#include <cstdio>
#include <string>
#include <string_view>

#include "weakpark/error.hpp"

namespace weakpark {

/// Calendar date without time zone. Ordering and arithmetic go through
/// sys_days so that day offsets cross month/year boundaries correctly.
class Date {
 public:
  Date() = default;
  explicit Date(std::chrono::sys_days d) : days_(d) {}
  Date(int y, unsigned m, unsigned d)
      : days_(std::chrono::year_month_day{std::chrono::year{y},
                                          std::chrono::month{m},
                                          std::chrono::day{d}}) {}

  static Date parse(std::string_view s) {
    int y = 0;
    unsigned m = 0, d = 0;
    char tail = 0;
    std::string buf(s);
    if (s.size() != 10 || s[4] != '-' || s[7] != '-' ||
        std::sscanf(buf.c_str(), "%4d-%2u-%2u%c", &y, &m, &d, &tail) != 3) {
      throw Error(ErrorKind::kParse, "bad date '" + buf + "', want YYYY-MM-DD");
    }
    std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{m},
                                    std::chrono::day{d}};
    if (!ymd.ok()) throw Error(ErrorKind::kParse, "invalid calendar date '" + buf + "'");
    return Date(std::chrono::sys_days{ymd});
  }

  std::string str() const {
    std::chrono::year_month_day ymd{days_};
    char out[16];
    std::snprintf(out, sizeof(out), "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                  static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
    return out;
  }

  bool is_saturday() const {
    return std::chrono::weekday{days_} == std::chrono::Saturday;
  }
  bool is_sunday() const { return std::chrono::weekday{days_} == std::chrono::Sunday; }

  Date plus_days(int n) const { return Date(days_ + std::chrono::days{n}); }
  long days_since_epoch() const { return days_.time_since_epoch().count(); }

  friend auto operator<=>(const Date&, const Date&) = default;

 private:
  std::chrono::sys_days days_{};
};

}  // namespace weakpark

#endif  // WEAKPARK_DATE_HPP_
