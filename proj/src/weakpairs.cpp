#include "weakpark/weakpairs.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include <json.hpp>

#include "weakpark/error.hpp"
#include "weakpark/io.hpp"
#include "weakpark/rng.hpp"

namespace weakpark {

namespace {
using nlohmann::json;
using ojson = nlohmann::ordered_json;
}  // namespace

std::vector<WeekendPair> enumerate_weekend_pairs(
    const std::map<std::string, std::vector<Date>>& kept_dates, PairingWindow window) {
  std::vector<WeekendPair> out;
  for (const auto& [lot, dates] : kept_dates) {
    std::set<Date> present(dates.begin(), dates.end());
    std::vector<Date> sats, suns;
    for (const Date& d : present) {
      if (d.is_saturday()) sats.push_back(d);
      if (d.is_sunday()) suns.push_back(d);
    }
    for (const Date& sat : sats) {
      if (window == PairingWindow::kSameWeekend) {
        if (present.contains(sat.plus_days(1))) out.push_back({lot, sat, sat.plus_days(1)});
      } else {
        for (const Date& sun : suns) out.push_back({lot, sat, sun});
      }
    }
  }
  return out;
}

int weak_label(const Date& a, const Date& b) {
  require(a != b, "pair dates must differ");
  return a.is_saturday() && b.is_sunday() ? 1 : 0;
}

std::vector<LabeledPair> make_labeled_pairs(const std::vector<WeekendPair>& weekend_pairs,
                                            bool include_both_orders) {
  std::vector<LabeledPair> out;
  out.reserve(weekend_pairs.size() * (include_both_orders ? 2 : 1));
  for (const auto& w : weekend_pairs) {
    require(w.sat_date.is_saturday() && w.sun_date.is_sunday(),
            "weekend pair for lot " + w.lot_id + " is not Saturday/Sunday");
    out.push_back({w.lot_id, w.sat_date, w.sun_date, 1});
    if (include_both_orders) out.push_back({w.lot_id, w.sun_date, w.sat_date, 0});
  }
  return out;
}

bool SplitSpec::is_test(std::string_view lot_id) const {
  for (const auto& [cls, s] : classes) {
    if (std::find(s.test.begin(), s.test.end(), lot_id) != s.test.end()) return true;
  }
  return false;
}

bool SplitSpec::is_train(std::string_view lot_id) const {
  for (const auto& [cls, s] : classes) {
    if (std::find(s.train.begin(), s.train.end(), lot_id) != s.train.end()) return true;
  }
  return false;
}

std::size_t test_count(std::size_t n, double ratio) {
  if (n < 2) return 0;
  // The 1e-9 nudge keeps exact products like 0.2 * 10 from landing at 1.999...
  const double raw = (1.0 - ratio) * static_cast<double>(n);
  auto k = static_cast<std::size_t>(std::floor(raw + 0.5 + 1e-9));
  return std::clamp<std::size_t>(k, 1, n - 1);
}

SplitSpec split_lots(const std::vector<LotRef>& lots, double ratio, std::uint64_t seed) {
  require(ratio > 0.0 && ratio < 1.0, "split ratio must lie in (0, 1)");
  SplitSpec spec;
  spec.seed = seed;
  spec.ratio = ratio;
  std::map<SizeClass, std::vector<std::string>> by_class;
  std::set<std::string> seen;
  for (const auto& l : lots) {
    require(seen.insert(l.id).second, "duplicate lot id '" + l.id + "' in split input");
    by_class[l.size_class].push_back(l.id);
  }
  SplitMix64 rng(seed);
  // Fixed class order so a class's shuffle does not depend on map layout.
  for (SizeClass cls : kReportOrder) {
    auto it = by_class.find(cls);
    if (it == by_class.end()) continue;
    std::vector<std::string> ids = it->second;
    std::sort(ids.begin(), ids.end());
    fisher_yates(ids, rng);
    const std::size_t k = test_count(ids.size(), ratio);
    if (ids.size() == 1) {
      spec.warnings.push_back("size class " + std::string(to_string(cls)) +
                              " has a single lot; it goes to train");
    }
    ClassSplit cs;
    cs.test.assign(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(k));
    cs.train.assign(ids.begin() + static_cast<std::ptrdiff_t>(k), ids.end());
    std::sort(cs.test.begin(), cs.test.end());
    std::sort(cs.train.begin(), cs.train.end());
    spec.classes.emplace(cls, std::move(cs));
  }
  return spec;
}

std::string pairs_to_ndjson(const std::vector<LabeledPair>& pairs) {
  std::string out;
  for (const auto& p : pairs) {
    ojson rec = {{"lot_id", p.lot_id},
                 {"date_a", p.date_a.str()},
                 {"date_b", p.date_b.str()},
                 {"label", p.label}};
    out += rec.dump();
    out += '\n';
  }
  return out;
}

std::vector<LabeledPair> pairs_from_ndjson(std::string_view text) {
  std::vector<LabeledPair> out;
  std::size_t line_no = 0;
  for (const auto& line : split_lines(text)) {
    ++line_no;
    try {
      json rec = json::parse(line);
      LabeledPair p{rec.at("lot_id").get<std::string>(),
                    Date::parse(rec.at("date_a").get<std::string>()),
                    Date::parse(rec.at("date_b").get<std::string>()), rec.at("label").get<int>()};
      require(p.label == 0 || p.label == 1, "label must be 0 or 1", ErrorKind::kParse);
      require(p.date_a != p.date_b, "pair dates must differ", ErrorKind::kParse);
      out.push_back(std::move(p));
    } catch (const json::exception& e) {
      throw Error(ErrorKind::kParse,
                  "pairs file line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

std::string split_to_json(const SplitSpec& split) {
  ojson classes = ojson::object();
  for (SizeClass cls : kReportOrder) {
    auto it = split.classes.find(cls);
    if (it == split.classes.end()) continue;
    classes[std::string(to_string(cls))] = {{"train", it->second.train},
                                            {"test", it->second.test}};
  }
  ojson doc = {{"seed", split.seed}, {"ratio", split.ratio}, {"classes", classes}};
  return doc.dump(2) + "\n";
}

SplitSpec split_from_json(std::string_view text) {
  SplitSpec spec;
  try {
    json doc = json::parse(text);
    spec.seed = doc.at("seed").get<std::uint64_t>();
    spec.ratio = doc.at("ratio").get<double>();
    for (const auto& [name, v] : doc.at("classes").items()) {
      ClassSplit cs{v.at("train").get<std::vector<std::string>>(),
                    v.at("test").get<std::vector<std::string>>()};
      spec.classes.emplace(size_class_from_string(name), std::move(cs));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kParse, std::string("bad split file: ") + e.what());
  }
  return spec;
}

}  // namespace weakpark
