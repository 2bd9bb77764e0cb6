#ifndef WEAKPARK_EVALRANK_HPP_
#define WEAKPARK_EVALRANK_HPP_

#include <filesystem>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "weakpark/date.hpp"
#include "weakpark/geodata.hpp"
#include "weakpark/pairnet.hpp"
#include "weakpark/weakpairs.hpp"

namespace weakpark {

/// Mann-Whitney AUC with average ranks for ties (ties count 1/2).
/// O(n log n). Throws unless both labels are present.
double auc(std::span<const double> scores, std::span<const int> labels);

/// Fraction of predict_label(score, threshold) == label.
double accuracy(std::span<const double> scores, std::span<const int> labels,
                double threshold = kDefaultScoreThreshold);

struct ClassMetrics {
  std::string name;  // "large" | "medium" | "small" | "all"
  double auc = 0.0;
  double accuracy = 0.0;
  std::size_t n_pairs = 0;

  friend bool operator==(const ClassMetrics&, const ClassMetrics&) = default;
};

struct EvalReport {
  std::vector<ClassMetrics> rows;  // large, medium, small (present ones), then "all"
  std::vector<std::string> warnings;
};

/// Returns a borrowed model input for (lot, date).
using InputProvider = std::function<std::span<const float>(const std::string&, const Date&)>;

/// Raw (unsymmetrised) scores of each test pair, grouped by size class.
/// Classes with no pairs are omitted with a warning.
EvalReport evaluate_split(const PairNetParams<float>& params,
                          const std::map<SizeClass, std::vector<LabeledPair>>& pairs_by_class,
                          const InputProvider& inputs,
                          double threshold = kDefaultScoreThreshold);

struct RankingEntry {
  Date date;
  std::string period_tag;
  double win_fraction = 0.0;
  std::size_t n_opponents = 0;

  friend bool operator==(const RankingEntry&, const RankingEntry&) = default;
};

struct DatedInput {
  Date date;
  std::string period_tag;
  std::span<const float> input;
};

/// All-pairs symmetrised comparison over distinct dates. win_fraction is the
/// mean symmetrised score against every other date; sorted descending with
/// earlier dates first on ties.
std::vector<RankingEntry> rank_dates(const PairNetParams<float>& params,
                                     std::span<const DatedInput> dates);

/// Same procedure from a precomputed score matrix s[i][j] = score(i, j).
std::vector<RankingEntry> rank_from_scores(std::span<const DatedInput> dates,
                                           const std::vector<std::vector<double>>& scores);

enum class ExportFormat { kCsv, kSvgBars };
ExportFormat export_format_from_string(std::string_view s);

std::string report_to_csv(const EvalReport& report);
EvalReport report_from_csv(std::string_view text);
std::string ranking_to_csv(std::span<const RankingEntry> ranking);
std::vector<RankingEntry> ranking_from_csv(std::string_view text);

std::string ranking_to_svg(std::span<const RankingEntry> ranking);
std::string report_to_svg(const EvalReport& report);

void export_report(const EvalReport& report, const std::filesystem::path& path,
                   ExportFormat format);
void export_ranking(std::span<const RankingEntry> ranking, const std::filesystem::path& path,
                    ExportFormat format);

std::string report_to_json(const EvalReport& report);

}  // namespace weakpark

#endif  // WEAKPARK_EVALRANK_HPP_
