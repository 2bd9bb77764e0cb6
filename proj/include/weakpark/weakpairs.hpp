#ifndef WEAKPARK_WEAKPAIRS_HPP_
#define WEAKPARK_WEAKPAIRS_HPP_

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "weakpark/date.hpp"
#include "weakpark/geodata.hpp"

namespace weakpark {

struct WeekendPair {
  std::string lot_id;
  Date sat_date;
  Date sun_date;
};

/// One training example: label 1 iff date_a is the Saturday.
struct LabeledPair {
  std::string lot_id;
  Date date_a;
  Date date_b;
  int label = 0;

  friend bool operator==(const LabeledPair&, const LabeledPair&) = default;
};

enum class PairingWindow {
  kSameWeekend,   // (Sat, Sat + 1 day) only
  kCrossWeekend,  // every Saturday x every Sunday of the lot
};

/// Input: QC-surviving dates per lot. Output sorted by lot id, then
/// Saturday, then Sunday.
std::vector<WeekendPair> enumerate_weekend_pairs(
    const std::map<std::string, std::vector<Date>>& kept_dates,
    PairingWindow window = PairingWindow::kSameWeekend);

std::vector<LabeledPair> make_labeled_pairs(const std::vector<WeekendPair>& weekend_pairs,
                                            bool include_both_orders = true);

/// Label implied by the dates alone (Saturday first = 1).
int weak_label(const Date& a, const Date& b);

struct LotRef {
  std::string id;
  SizeClass size_class;
};

struct ClassSplit {
  std::vector<std::string> train;
  std::vector<std::string> test;
};

struct SplitSpec {
  std::uint64_t seed = 0;
  double ratio = 0.8;
  std::map<SizeClass, ClassSplit> classes;
  std::vector<std::string> warnings;

  bool is_test(std::string_view lot_id) const;
  bool is_train(std::string_view lot_id) const;
};

/// Number of test lots for a class of n lots: round-half-up((1-ratio) n),
/// at least 1 when n >= 2, 0 when n == 1.
std::size_t test_count(std::size_t n, double ratio);

/// Per size class: sort ids, Fisher-Yates with a splitmix64 stream, first
/// test_count ids go to test.
SplitSpec split_lots(const std::vector<LotRef>& lots, double ratio, std::uint64_t seed);

std::string pairs_to_ndjson(const std::vector<LabeledPair>& pairs);
std::vector<LabeledPair> pairs_from_ndjson(std::string_view text);

std::string split_to_json(const SplitSpec& split);
SplitSpec split_from_json(std::string_view text);

}  // namespace weakpark

#endif  // WEAKPARK_WEAKPAIRS_HPP_
