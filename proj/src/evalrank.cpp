#include "weakpark/evalrank.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "weakpark/error.hpp"
#include "weakpark/io.hpp"

namespace weakpark {

namespace {

using ojson = nlohmann::ordered_json;

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

double parse_double(const std::string& s) {
  try {
    std::size_t used = 0;
    double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw Error(ErrorKind::kParse, "bad number '" + s + "' in CSV");
  }
}

std::size_t parse_size(const std::string& s) {
  try {
    std::size_t used = 0;
    unsigned long long v = std::stoull(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return static_cast<std::size_t>(v);
  } catch (const std::exception&) {
    throw Error(ErrorKind::kParse, "bad count '" + s + "' in CSV");
  }
}

std::vector<std::string> split_csv_row(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::string xml_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&':
        out += "&amp;";
        break;
      case '<':
        out += "&lt;";
        break;
      case '>':
        out += "&gt;";
        break;
      case '"':
        out += "&quot;";
        break;
      default:
        out += c;
    }
  }
  return out;
}

constexpr const char* kPalette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                    "#8c564b"};

struct Bar {
  std::string label;
  std::string group;
  double value;
};

// Static bar chart, values in [0, 1], one colour per group.
std::string bars_svg(const std::vector<Bar>& bars, const std::string& title,
                     const std::string& y_label) {
  const int bar_w = 28, gap = 8, left = 60, top = 40, plot_h = 240, bottom = 90;
  const int width = left + static_cast<int>(bars.size()) * (bar_w + gap) + 160;
  const int height = top + plot_h + bottom;
  std::vector<std::string> groups;
  for (const auto& b : bars) {
    if (std::find(groups.begin(), groups.end(), b.group) == groups.end()) groups.push_back(b.group);
  }
  auto colour = [&](const std::string& g) {
    auto idx = static_cast<std::size_t>(std::find(groups.begin(), groups.end(), g) - groups.begin());
    return kPalette[idx % std::size(kPalette)];
  };
  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
    << "\" viewBox=\"0 0 " << width << ' ' << height << "\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<text x=\"" << left << "\" y=\"20\" font-family=\"sans-serif\" font-size=\"14\">"
    << xml_escape(title) << "</text>\n";
  for (int t = 0; t <= 4; ++t) {
    const double v = t * 0.25;
    const int y = top + plot_h - static_cast<int>(std::lround(v * plot_h));
    o << "<line x1=\"" << left << "\" y1=\"" << y << "\" x2=\"" << width - 150 << "\" y2=\"" << y
      << "\" stroke=\"#dddddd\"/>\n";
    o << "<text x=\"" << left - 8 << "\" y=\"" << y + 4
      << "\" font-family=\"sans-serif\" font-size=\"10\" text-anchor=\"end\">" << fmt_double(v)
      << "</text>\n";
  }
  o << "<text x=\"14\" y=\"" << top + plot_h / 2 << "\" font-family=\"sans-serif\" font-size=\"11\" "
    << "transform=\"rotate(-90 14 " << top + plot_h / 2 << ")\" text-anchor=\"middle\">"
    << xml_escape(y_label) << "</text>\n";
  for (std::size_t i = 0; i < bars.size(); ++i) {
    const double v = std::clamp(bars[i].value, 0.0, 1.0);
    const int h = static_cast<int>(std::lround(v * plot_h));
    const int x = left + gap + static_cast<int>(i) * (bar_w + gap);
    o << "<rect x=\"" << x << "\" y=\"" << top + plot_h - h << "\" width=\"" << bar_w
      << "\" height=\"" << h << "\" fill=\"" << colour(bars[i].group) << "\"/>\n";
    const int ly = top + plot_h + 10;
    o << "<text x=\"" << x + bar_w / 2 << "\" y=\"" << ly
      << "\" font-family=\"sans-serif\" font-size=\"10\" text-anchor=\"end\" transform=\"rotate(-60 "
      << x + bar_w / 2 << ' ' << ly << ")\">" << xml_escape(bars[i].label) << "</text>\n";
  }
  for (std::size_t g = 0; g < groups.size(); ++g) {
    const int y = top + 10 + static_cast<int>(g) * 18;
    const int x = width - 140;
    o << "<rect x=\"" << x << "\" y=\"" << y - 10 << "\" width=\"12\" height=\"12\" fill=\""
      << colour(groups[g]) << "\"/>\n";
    o << "<text x=\"" << x + 18 << "\" y=\"" << y
      << "\" font-family=\"sans-serif\" font-size=\"11\">" << xml_escape(groups[g]) << "</text>\n";
  }
  o << "</svg>\n";
  return o.str();
}

}  // namespace

double auc(std::span<const double> scores, std::span<const int> labels) {
  require(scores.size() == labels.size(), "scores and labels differ in length");
  std::size_t n_pos = 0;
  for (int y : labels) {
    require(y == 0 || y == 1, "labels must be 0 or 1");
    n_pos += static_cast<std::size_t>(y);
  }
  const std::size_t n = scores.size();
  const std::size_t n_neg = n - n_pos;
  require(n_pos > 0 && n_neg > 0, "AUC needs both positive and negative labels");
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Rank sum of positives with tied groups sharing their average rank.
  double pos_rank_sum = 0.0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[idx[j]] == scores[idx[i]]) ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);  // mean of ranks i+1..j
    for (std::size_t k = i; k < j; ++k) {
      if (labels[idx[k]] == 1) pos_rank_sum += avg_rank;
    }
    i = j;
  }
  const double np = static_cast<double>(n_pos);
  const double u = pos_rank_sum - np * (np + 1.0) / 2.0;
  return u / (np * static_cast<double>(n_neg));
}

double accuracy(std::span<const double> scores, std::span<const int> labels, double threshold) {
  require(!scores.empty(), "accuracy of an empty set");
  require(scores.size() == labels.size(), "scores and labels differ in length");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (predict_label(scores[i], threshold) == labels[i]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(scores.size());
}

EvalReport evaluate_split(const PairNetParams<float>& params,
                          const std::map<SizeClass, std::vector<LabeledPair>>& pairs_by_class,
                          const InputProvider& inputs, double threshold) {
  EvalReport report;
  std::map<std::pair<std::string, Date>, std::vector<float>> cache;
  auto embedding = [&](const std::string& lot, const Date& d) -> const std::vector<float>& {
    auto key = std::make_pair(lot, d);
    auto it = cache.find(key);
    if (it == cache.end()) it = cache.emplace(key, encode(params, inputs(lot, d))).first;
    return it->second;
  };
  std::vector<double> all_scores;
  std::vector<int> all_labels;
  auto metrics = [&](std::string name, const std::vector<double>& s, const std::vector<int>& y) {
    ClassMetrics m{std::move(name), std::nan(""), accuracy(s, y, threshold), s.size()};
    const bool both = std::find(y.begin(), y.end(), 0) != y.end() &&
                      std::find(y.begin(), y.end(), 1) != y.end();
    if (both) {
      m.auc = auc(s, y);
    } else {
      report.warnings.push_back("class " + m.name + " has a single label value; AUC undefined");
    }
    return m;
  };
  for (SizeClass cls : kReportOrder) {
    auto it = pairs_by_class.find(cls);
    if (it == pairs_by_class.end() || it->second.empty()) {
      report.warnings.push_back("no test pairs for class " + std::string(to_string(cls)));
      continue;
    }
    std::vector<double> scores;
    std::vector<int> labels;
    for (const auto& p : it->second) {
      const auto& ea = embedding(p.lot_id, p.date_a);
      const auto& eb = embedding(p.lot_id, p.date_b);
      scores.push_back(score_embeddings(params, std::span<const float>(ea), std::span<const float>(eb)));
      labels.push_back(p.label);
    }
    all_scores.insert(all_scores.end(), scores.begin(), scores.end());
    all_labels.insert(all_labels.end(), labels.begin(), labels.end());
    report.rows.push_back(metrics(std::string(to_string(cls)), scores, labels));
  }
  require(!all_scores.empty(), "evaluation has no test pairs");
  report.rows.push_back(metrics("all", all_scores, all_labels));
  return report;
}

std::vector<RankingEntry> rank_from_scores(std::span<const DatedInput> dates,
                                           const std::vector<std::vector<double>>& s) {
  const std::size_t n = dates.size();
  require(n >= 2, "ranking needs at least two dates");
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      require(dates[i].date != dates[j].date, "duplicate date " + dates[i].date.str() + " in ranking");
    }
  }
  std::vector<RankingEntry> out;
  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      acc += 0.5 * (s[i][j] + 1.0 - s[j][i]);
    }
    out.push_back({dates[i].date, dates[i].period_tag, acc / static_cast<double>(n - 1), n - 1});
  }
  std::sort(out.begin(), out.end(), [](const RankingEntry& a, const RankingEntry& b) {
    if (a.win_fraction != b.win_fraction) return a.win_fraction > b.win_fraction;
    return a.date < b.date;
  });
  return out;
}

std::vector<RankingEntry> rank_dates(const PairNetParams<float>& params,
                                     std::span<const DatedInput> dates) {
  const std::size_t n = dates.size();
  require(n >= 2, "ranking needs at least two dates");
  std::vector<std::vector<float>> emb;
  for (const auto& d : dates) emb.push_back(encode(params, d.input));
  std::vector<std::vector<double>> s(n, std::vector<double>(n, 0.5));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i != j) {
        s[i][j] = score_embeddings(params, std::span<const float>(emb[i]),
                                   std::span<const float>(emb[j]));
      }
    }
  }
  return rank_from_scores(dates, s);
}

ExportFormat export_format_from_string(std::string_view s) {
  if (s == "csv") return ExportFormat::kCsv;
  if (s == "svg-bars" || s == "svg") return ExportFormat::kSvgBars;
  throw Error(ErrorKind::kValidation, "unknown export format '" + std::string(s) + "'");
}

std::string report_to_csv(const EvalReport& report) {
  std::string out = "class,auc,accuracy,n_pairs\n";
  for (const auto& r : report.rows) {
    out += r.name + "," + fmt_double(r.auc) + "," + fmt_double(r.accuracy) + "," +
           std::to_string(r.n_pairs) + "\n";
  }
  return out;
}

EvalReport report_from_csv(std::string_view text) {
  auto lines = split_lines(text);
  require(!lines.empty() && lines.front() == "class,auc,accuracy,n_pairs",
          "report CSV header mismatch", ErrorKind::kParse);
  EvalReport r;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    auto cells = split_csv_row(lines[i]);
    require(cells.size() == 4, "report CSV row " + std::to_string(i) + " has wrong arity",
            ErrorKind::kParse);
    r.rows.push_back({cells[0], parse_double(cells[1]), parse_double(cells[2]), parse_size(cells[3])});
  }
  return r;
}

std::string ranking_to_csv(std::span<const RankingEntry> ranking) {
  std::string out = "date,period_tag,win_fraction,n_opponents\n";
  for (const auto& e : ranking) {
    require(e.period_tag.find(',') == std::string::npos, "period tag may not contain ','");
    out += e.date.str() + "," + e.period_tag + "," + fmt_double(e.win_fraction) + "," +
           std::to_string(e.n_opponents) + "\n";
  }
  return out;
}

std::vector<RankingEntry> ranking_from_csv(std::string_view text) {
  auto lines = split_lines(text);
  require(!lines.empty() && lines.front() == "date,period_tag,win_fraction,n_opponents",
          "ranking CSV header mismatch", ErrorKind::kParse);
  std::vector<RankingEntry> out;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    auto cells = split_csv_row(lines[i]);
    require(cells.size() == 4, "ranking CSV row " + std::to_string(i) + " has wrong arity",
            ErrorKind::kParse);
    out.push_back({Date::parse(cells[0]), cells[1], parse_double(cells[2]), parse_size(cells[3])});
  }
  return out;
}

std::string ranking_to_svg(std::span<const RankingEntry> ranking) {
  require(!ranking.empty(), "cannot plot an empty ranking");
  // Group by period tag (first appearance in date order), dates ascending.
  std::vector<RankingEntry> by_date(ranking.begin(), ranking.end());
  std::sort(by_date.begin(), by_date.end(),
            [](const RankingEntry& a, const RankingEntry& b) { return a.date < b.date; });
  std::vector<std::string> tags;
  for (const auto& e : by_date) {
    if (std::find(tags.begin(), tags.end(), e.period_tag) == tags.end()) tags.push_back(e.period_tag);
  }
  std::vector<Bar> bars;
  for (const auto& t : tags) {
    for (const auto& e : by_date) {
      if (e.period_tag == t) bars.push_back({e.date.str(), t, e.win_fraction});
    }
  }
  return bars_svg(bars, "Pairwise date ranking", "win fraction");
}

std::string report_to_svg(const EvalReport& report) {
  require(!report.rows.empty(), "cannot plot an empty report");
  std::vector<Bar> bars;
  for (const auto& r : report.rows) bars.push_back({r.name, r.name, std::isnan(r.auc) ? 0.0 : r.auc});
  return bars_svg(bars, "Pairwise comparison AUC by lot size", "AUC");
}

void export_report(const EvalReport& report, const std::filesystem::path& path,
                   ExportFormat format) {
  require(!report.rows.empty(), "cannot export an empty report");
  write_file_atomic(path, format == ExportFormat::kCsv ? report_to_csv(report) : report_to_svg(report));
}

void export_ranking(std::span<const RankingEntry> ranking, const std::filesystem::path& path,
                    ExportFormat format) {
  require(!ranking.empty(), "cannot export an empty ranking");
  write_file_atomic(path,
                    format == ExportFormat::kCsv ? ranking_to_csv(ranking) : ranking_to_svg(ranking));
}

std::string report_to_json(const EvalReport& report) {
  ojson rows = ojson::array();
  for (const auto& r : report.rows) {
    rows.push_back({{"class", r.name},
                    {"auc", std::isnan(r.auc) ? ojson(nullptr) : ojson(r.auc)},
                    {"accuracy", r.accuracy},
                    {"n_pairs", r.n_pairs}});
  }
  ojson doc = {{"rows", rows}, {"warnings", report.warnings}};
  return doc.dump(2) + "\n";
}

}  // namespace weakpark
