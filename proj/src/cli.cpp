#include "weakpark/cli.hpp"

#include <CLI11.hpp>
#include <httplib.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <json.hpp>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "weakpark/error.hpp"
#include "weakpark/io.hpp"
#include "weakpark/pipeline.hpp"

namespace weakpark {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace {

constexpr const char* kStoreEnv = "WEAKPARK_CHIP_STORE";

struct Common {
  std::string store;
  std::string out = "out";
  std::uint64_t seed = 7;
};

void require_file(const fs::path& p) {
  if (!fs::is_regular_file(p)) throw Error(ErrorKind::kIo, "missing file: " + p.string());
}

std::string read_required(const fs::path& p) {
  require_file(p);
  return read_file(p);
}

void require_positive(double v, const std::string& name) {
  require(std::isfinite(v) && v > 0.0, name + " must be positive");
}

fs::path out_dir(const Common& c) {
  fs::create_directories(c.out);
  return fs::path(c.out);
}

std::vector<ParkingLot> load_lots(const fs::path& p) {
  return parse_parking_collection(read_required(p)).items;
}

fs::path lots_path(const std::string& flag, const Common& c) {
  return flag.empty() ? fs::path(c.store) / "lots.geojson" : fs::path(flag);
}

// Accepts GeoJSON as-is; converts Overpass responses.
std::string as_geojson(const std::string& text) {
  const auto pos = text.find_first_not_of(" \t\r\n");
  if (pos != std::string::npos && text.find("\"elements\"") != std::string::npos &&
      text.find("\"FeatureCollection\"") == std::string::npos) {
    return overpass_to_geojson(text);
  }
  return text;
}

std::string fetch_overpass(const std::string& endpoint, const std::string& query,
                           std::ostream& err) {
  const auto scheme_end = endpoint.find("://");
  require(scheme_end != std::string::npos, "endpoint must be an http:// URL");
  const auto path_start = endpoint.find('/', scheme_end + 3);
  const std::string host = endpoint.substr(0, path_start);
  const std::string path = path_start == std::string::npos ? "/" : endpoint.substr(path_start);
  err << "fetching " << endpoint << "\n";
  httplib::Client client(host);
  client.set_read_timeout(300, 0);
  auto res = client.Post(path, httplib::Params{{"data", query}});
  if (!res) throw Error(ErrorKind::kIo, "request to " + endpoint + " failed");
  if (res->status != 200) {
    throw Error(ErrorKind::kIo, "endpoint returned HTTP " + std::to_string(res->status));
  }
  return res->body;
}

std::string fill_query(std::string tmpl, const std::string& bbox) {
  const std::string key = "{{bbox}}";
  for (auto p = tmpl.find(key); p != std::string::npos; p = tmpl.find(key, p + bbox.size())) {
    tmpl.replace(p, key.size(), bbox);
  }
  return tmpl;
}

std::map<std::string, std::vector<Date>> kept_from_qc(const std::string& text) {
  std::map<std::string, std::vector<Date>> kept;
  for (const auto& line : split_lines(text)) {
    auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded()) throw Error(ErrorKind::kParse, "bad QC record: " + line);
    if (j.at("kept").get<bool>()) {
      kept[j.at("lot_id").get<std::string>()].push_back(Date::parse(j.at("date").get<std::string>()));
    }
  }
  for (auto& [lot, dates] : kept) std::sort(dates.begin(), dates.end());
  return kept;
}

SplitSpec load_or_make_split(const std::string& split_flag, const std::vector<ParkingLot>& lots,
                             double ratio, const Common& c, std::ostream& err) {
  if (!split_flag.empty()) return split_from_json(read_required(split_flag));
  const fs::path auto_path = fs::path(c.out) / "split.json";
  SplitSpec s = split_lots(lot_refs(lots), ratio, c.seed);
  for (const auto& w : s.warnings) err << "warning: " << w << "\n";
  write_file_atomic(auto_path, split_to_json(s));
  err << "no --split given; wrote " << auto_path.string() << " (seed " << c.seed << ")\n";
  return s;
}

std::vector<int> parse_int_list(const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    try {
      out.push_back(std::stoi(tok));
    } catch (const std::exception&) {
      throw Error(ErrorKind::kValidation, "bad integer list: " + s);
    }
  }
  return out;
}

std::map<std::string, std::string> read_config(const fs::path& p) {
  std::map<std::string, std::string> kv;
  int lineno = 0;
  for (const auto& raw : split_lines(read_required(p))) {
    ++lineno;
    std::string line = raw.substr(0, raw.find('#'));
    const auto b = line.find_first_not_of(" \t");
    if (b == std::string::npos) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw Error(ErrorKind::kParse, p.string() + ":" + std::to_string(lineno) + ": expected key=value");
    }
    auto trim = [](std::string s) {
      const auto x = s.find_first_not_of(" \t");
      const auto y = s.find_last_not_of(" \t\r");
      return x == std::string::npos ? std::string() : s.substr(x, y - x + 1);
    };
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return kv;
}

// Splices config keys into argv as --key=value right after the subcommand
// unless the same flag was given explicitly.
std::vector<std::string> apply_config(const std::vector<std::string>& args, CLI::App& app,
                                      std::ostream& err) {
  std::string config_path;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) config_path = args[i + 1];
    if (args[i].rfind("--config=", 0) == 0) config_path = args[i].substr(9);
  }
  if (config_path.empty()) return args;
  const auto kv = read_config(config_path);

  std::size_t sub_pos = args.size();
  CLI::App* sub = nullptr;
  for (std::size_t i = 0; i < args.size(); ++i) {
    for (CLI::App* s : app.get_subcommands({})) {
      if (s->get_name() == args[i]) {
        sub = s;
        sub_pos = i;
        break;
      }
    }
    if (sub) break;
  }
  if (!sub) return args;

  std::set<std::string> given;
  for (std::size_t i = sub_pos + 1; i < args.size(); ++i) {
    if (args[i].rfind("--", 0) == 0) given.insert(args[i].substr(2, args[i].find('=') - 2));
  }
  std::vector<std::string> extra;
  for (const auto& [key, value] : kv) {
    if (key == "config" || given.count(key)) continue;
    if (sub->get_option_no_throw("--" + key) == nullptr) {
      err << "config: key '" << key << "' not used by " << sub->get_name() << "\n";
      continue;
    }
    extra.push_back("--" + key + "=" + value);
  }
  std::vector<std::string> out(args.begin(), args.begin() + static_cast<long>(sub_pos) + 1);
  out.insert(out.end(), extra.begin(), extra.end());
  out.insert(out.end(), args.begin() + static_cast<long>(sub_pos) + 1, args.end());
  return out;
}

void add_common(CLI::App* sub, Common& c, bool with_store = true) {
  sub->add_option("--config", "Flat key=value file; flags override its keys");
  if (with_store) {
    sub->add_option("--store", c.store, "Chip store root (env " + std::string(kStoreEnv) + ")");
  }
  sub->add_option("--out", c.out, "Output directory")->capture_default_str();
  sub->add_option("--seed", c.seed, "Random seed")->capture_default_str();
}

void print_summary(std::ostream& out, const ojson& j) { out << j.dump() << "\n"; }

ojson report_json(const EvalReport& r) { return ojson::parse(report_to_json(r)); }

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"weakpark: parking-lot occupancy from weakly labelled satellite image pairs"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every subcommand");

  Common c;

  // ingest-poi / ingest-parking
  std::string in_path, record_path, bbox, endpoint = "http://overpass-api.de/api/interpreter";
  std::string query_path;
  bool live = false;
  auto add_ingest = [&](CLI::App* s) {
    add_common(s, c, false);
    s->add_option("--input", in_path, "Recorded GeoJSON or Overpass JSON to replay");
    s->add_flag("--live", live, "Fetch from the Overpass endpoint");
    s->add_option("--endpoint", endpoint, "Overpass interpreter URL (http)")->capture_default_str();
    s->add_option("--bbox", bbox, "south,west,north,east for --live");
    s->add_option("--query", query_path, "Query template with {{bbox}}");
    s->add_option("--record", record_path, "Save the raw --live response here");
  };
  auto* ingest_poi = app.add_subcommand("ingest-poi", "Extract supermarket / DIY POIs");
  add_ingest(ingest_poi);
  auto* ingest_parking = app.add_subcommand("ingest-parking", "Extract surface parking polygons");
  add_ingest(ingest_parking);

  // match
  std::string pois_path, parking_path;
  double proximity_m = kDefaultProximityM;
  auto* match = app.add_subcommand("match", "Join POIs to their nearest parking lot");
  add_common(match, c, false);
  match->add_option("--pois", pois_path, "POI GeoJSON (default <out>/pois.geojson)");
  match->add_option("--parking", parking_path, "Parking GeoJSON (default <out>/parking.geojson)");
  match->add_option("--proximity-m", proximity_m, "Match distance threshold")->capture_default_str();

  // qc
  std::string lots_flag;
  double tv = kDefaultTvThreshold;
  int bins = kDefaultHistogramBins;
  auto* qc = app.add_subcommand("qc", "Coverage, cloud and brightness filtering");
  add_common(qc, c);
  qc->add_option("--lots", lots_flag, "Lot polygons (default <store>/lots.geojson)");
  qc->add_option("--tv", tv, "Brightness TV-distance threshold")->capture_default_str();
  qc->add_option("--bins", bins, "Luminance histogram bins")->capture_default_str();

  // pairs
  std::string qc_path, window = "same";
  bool single_order = false;
  auto* pairs_cmd = app.add_subcommand("pairs", "Build weakly labelled Saturday/Sunday pairs");
  add_common(pairs_cmd, c);
  pairs_cmd->add_option("--qc", qc_path, "QC records; without it every stored date is used");
  pairs_cmd->add_option("--window", window, "same | cross")->capture_default_str();
  pairs_cmd->add_flag("--single-order", single_order, "Emit only (Sat, Sun) orderings");

  // split
  double ratio = 0.8;
  auto* split_cmd = app.add_subcommand("split", "Lot-level train/test split per size class");
  add_common(split_cmd, c);
  split_cmd->add_option("--lots", lots_flag, "Lot polygons (default <store>/lots.geojson)");
  split_cmd->add_option("--ratio", ratio, "Train fraction")->capture_default_str();

  // train
  std::string pairs_path, split_path;
  TrainConfig tcfg;
  EncoderConfig ecfg;
  std::string channels = "16,32,64,128";
  int threads = 0;
  auto* train_cmd = app.add_subcommand("train", "Train the pairwise comparison model");
  add_common(train_cmd, c);
  train_cmd->add_option("--lots", lots_flag, "Lot polygons (default <store>/lots.geojson)");
  train_cmd->add_option("--pairs", pairs_path, "Pairs NDJSON (default <out>/pairs.ndjson)");
  train_cmd->add_option("--split", split_path, "Split JSON; derived from --seed when absent");
  train_cmd->add_option("--ratio", ratio, "Train fraction for the derived split")->capture_default_str();
  train_cmd->add_option("--epochs", tcfg.epochs, "Epochs")->capture_default_str();
  train_cmd->add_option("--lr", tcfg.learning_rate, "Adam learning rate")->capture_default_str();
  train_cmd->add_option("--batch-size", tcfg.batch_size, "Pairs per batch")->capture_default_str();
  train_cmd->add_option("--threads", threads, "Worker threads (0 = all cores)")->capture_default_str();
  train_cmd->add_option("--side", ecfg.side, "Input side length")->capture_default_str();
  train_cmd->add_option("--channels", channels, "Encoder channels")->capture_default_str();
  train_cmd->add_option("--embedding-dim", ecfg.embedding_dim, "Embedding size")->capture_default_str();
  train_cmd->add_option("--head-hidden", ecfg.head_hidden, "Head hidden units")->capture_default_str();

  // eval
  std::string model_path, truth_path, format = "csv";
  double score_threshold = kDefaultScoreThreshold;
  auto* eval_cmd = app.add_subcommand("eval", "Per-class AUC and accuracy on held-out lots");
  add_common(eval_cmd, c);
  eval_cmd->add_option("--lots", lots_flag, "Lot polygons (default <store>/lots.geojson)");
  eval_cmd->add_option("--model", model_path, "Checkpoint directory (default <out>)");
  eval_cmd->add_option("--pairs", pairs_path, "Pairs NDJSON (default <out>/pairs.ndjson)");
  eval_cmd->add_option("--split", split_path, "Split JSON; derived from --seed when absent");
  eval_cmd->add_option("--ratio", ratio, "Train fraction for the derived split")->capture_default_str();
  eval_cmd->add_option("--truth", truth_path, "synth_manifest.json: score against true occupancy");
  eval_cmd->add_option("--score-threshold", score_threshold, "Accuracy threshold")->capture_default_str();
  eval_cmd->add_option("--format", format, "csv | svg")->capture_default_str();

  // rank
  std::string lot_id;
  std::vector<std::string> tag_args;
  auto* rank_cmd = app.add_subcommand("rank", "Soft-Borda ranking of one lot's dates");
  add_common(rank_cmd, c);
  rank_cmd->add_option("--lots", lots_flag, "Lot polygons (default <store>/lots.geojson)");
  rank_cmd->add_option("--model", model_path, "Checkpoint directory (default <out>)");
  rank_cmd->add_option("--lot", lot_id, "Lot id")->required();
  rank_cmd->add_option("--truth", truth_path, "synth_manifest.json supplying period tags");
  rank_cmd->add_option("--tag", tag_args, "DATE=TAG period tag, repeatable");
  rank_cmd->add_option("--format", format, "csv | svg")->capture_default_str();

  // synth-gen
  BenchmarkOptions bopt;
  auto* synth = app.add_subcommand("synth-gen", "Write the synthetic benchmark into the chip store");
  add_common(synth, c);
  synth->add_option("--lots", bopt.lots_per_class, "Lots per size class")->capture_default_str();
  synth->add_option("--weekends", bopt.n_weekends, "Weekends per lot")->capture_default_str();
  synth->add_option("--epsilon", bopt.epsilon, "Weekend flip probability")->capture_default_str();
  synth->add_option("--cloud-prob", bopt.cloud_chip_prob, "Chance of a clouded chip")->capture_default_str();
  synth->add_flag("--period-lot", bopt.period_lot, "Add a pre/post ranking lot");

  // plot
  std::string ranking_csv, report_csv, plot_out;
  auto* plot = app.add_subcommand("plot", "Render a ranking or report CSV as SVG");
  add_common(plot, c, false);
  plot->add_option("--ranking", ranking_csv, "Ranking CSV");
  plot->add_option("--report", report_csv, "Report CSV");
  plot->add_option("--output", plot_out, "SVG path (default <out>/<input stem>.svg)");

  try {
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
    args = apply_config(args, app, err);
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    CLI::App* active = &app;
    for (CLI::App* s : app.get_subcommands()) active = s;
    err << active->help();
    return 2;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }

  if (c.store.empty()) {
    const char* env = std::getenv(kStoreEnv);
    c.store = env && *env ? env : "data";
  }

  try {
    const fs::path od(c.out);

    if (ingest_poi->parsed() || ingest_parking->parsed()) {
      const bool poi = ingest_poi->parsed();
      std::string text;
      if (live) {
        require(!bbox.empty(), "--live needs --bbox");
        const std::string tmpl = query_path.empty()
                                     ? read_required(fs::path("share") / "overpass_query.txt")
                                     : read_required(query_path);
        text = fetch_overpass(endpoint, fill_query(tmpl, bbox), err);
        if (!record_path.empty()) write_file_atomic(record_path, text);
      } else {
        require(!in_path.empty(), "give --input (replay) or --live");
        text = read_required(in_path);
      }
      const std::string gj = as_geojson(text);
      const fs::path dst = out_dir(c) / (poi ? "pois.geojson" : "parking.geojson");
      std::size_t n = 0, skipped = 0;
      if (poi) {
        auto r = parse_poi_collection(gj);
        n = r.items.size();
        skipped = r.skipped;
        write_file_atomic(dst, serialize_poi_collection(r.items));
      } else {
        auto r = parse_parking_collection(gj);
        n = r.items.size();
        skipped = r.skipped;
        write_file_atomic(dst, serialize_parking_collection(r.items));
      }
      if (skipped) err << "warning: skipped " << skipped << " malformed feature(s)\n";
      print_summary(out, {{"command", poi ? "ingest-poi" : "ingest-parking"},
                          {poi ? "pois" : "lots", n},
                          {"skipped", skipped},
                          {"output", dst.string()}});
      return 0;
    }

    if (match->parsed()) {
      require_positive(proximity_m, "proximity-m");
      const auto pois = parse_poi_collection(
          read_required(pois_path.empty() ? od / "pois.geojson" : fs::path(pois_path))).items;
      const auto lots = load_lots(parking_path.empty() ? od / "parking.geojson" : fs::path(parking_path));
      const auto index = build_spatial_index(lots);
      std::string records;
      std::map<std::string, ParkingLot> matched;
      for (const auto& poi : pois) {
        auto m = match_poi_to_lot(poi, index, proximity_m);
        if (!m) continue;
        const auto& lot = *std::find_if(lots.begin(), lots.end(),
                                        [&](const ParkingLot& l) { return l.id == m->lot_id; });
        records += match_record_json(*m, lot) + "\n";
        matched.emplace(lot.id, lot);
      }
      const fs::path dir = out_dir(c);
      write_file_atomic(dir / "matches.ndjson", records);
      std::vector<ParkingLot> lot_list;
      for (auto& [id, l] : matched) lot_list.push_back(l);
      write_file_atomic(dir / "lots.geojson", serialize_parking_collection(lot_list));
      const std::size_t n_matched = static_cast<std::size_t>(
          std::count(records.begin(), records.end(), '\n'));
      print_summary(out, {{"command", "match"},
                          {"pois", pois.size()},
                          {"matched", n_matched},
                          {"lots", lot_list.size()},
                          {"output", (dir / "matches.ndjson").string()}});
      return 0;
    }

    if (qc->parsed()) {
      require_positive(tv, "tv");
      require(bins >= 1, "bins must be positive");
      const auto by_id = lots_by_id(load_lots(lots_path(lots_flag, c)));
      ChipStore store(c.store);
      QcOptions opt;
      opt.tv_threshold = tv;
      opt.bins = bins;
      std::string records;
      std::size_t kept = 0, rejected = 0;
      for (const auto& lot : store.lots()) {
        auto it = by_id.find(lot);
        if (it == by_id.end()) {
          err << "warning: lot " << lot << " has no polygon; skipped\n";
          continue;
        }
        const auto res = qc_pipeline(store.read_stack(lot), it->second.geometry, opt);
        if (res.brightness_skipped) err << "note: " << lot << ": brightness stage skipped\n";
        for (const auto& d : res.decisions) {
          records += qc_record_json(lot, d) + "\n";
          (d.kept ? kept : rejected)++;
        }
      }
      const fs::path dst = out_dir(c) / "qc.ndjson";
      write_file_atomic(dst, records);
      print_summary(out, {{"command", "qc"}, {"kept", kept}, {"rejected", rejected},
                          {"output", dst.string()}});
      return 0;
    }

    if (pairs_cmd->parsed()) {
      require(window == "same" || window == "cross", "--window must be same or cross");
      std::map<std::string, std::vector<Date>> kept;
      if (!qc_path.empty()) {
        kept = kept_from_qc(read_required(qc_path));
      } else {
        ChipStore store(c.store);
        require(fs::is_directory(c.store), "chip store not found: " + c.store);
        for (const auto& lot : store.lots()) kept[lot] = store.dates(lot);
      }
      const auto wp = enumerate_weekend_pairs(
          kept, window == "same" ? PairingWindow::kSameWeekend : PairingWindow::kCrossWeekend);
      const auto lp = make_labeled_pairs(wp, !single_order);
      const fs::path dst = out_dir(c) / "pairs.ndjson";
      write_file_atomic(dst, pairs_to_ndjson(lp));
      print_summary(out, {{"command", "pairs"}, {"weekends", wp.size()}, {"pairs", lp.size()},
                          {"output", dst.string()}});
      return 0;
    }

    if (split_cmd->parsed()) {
      require(ratio > 0.0 && ratio < 1.0, "ratio must be in (0, 1)");
      const auto lots = load_lots(lots_path(lots_flag, c));
      const auto s = split_lots(lot_refs(lots), ratio, c.seed);
      for (const auto& w : s.warnings) err << "warning: " << w << "\n";
      const fs::path dst = out_dir(c) / "split.json";
      write_file_atomic(dst, split_to_json(s));
      ojson counts = ojson::object();
      for (SizeClass k : kReportOrder) {
        auto it = s.classes.find(k);
        if (it == s.classes.end()) continue;
        counts[std::string(to_string(k))] = {{"train", it->second.train.size()},
                                             {"test", it->second.test.size()}};
      }
      print_summary(out, {{"command", "split"}, {"seed", c.seed}, {"classes", counts},
                          {"output", dst.string()}});
      return 0;
    }

    if (train_cmd->parsed()) {
      require_positive(tcfg.learning_rate, "lr");
      require(tcfg.epochs >= 1 && tcfg.batch_size >= 1, "epochs and batch-size must be >= 1");
      require(ratio > 0.0 && ratio < 1.0, "ratio must be in (0, 1)");
      ecfg.channels = parse_int_list(channels);
      const auto lots = load_lots(lots_path(lots_flag, c));
      const auto by_id = lots_by_id(lots);
      const auto pairs = pairs_from_ndjson(
          read_required(pairs_path.empty() ? od / "pairs.ndjson" : fs::path(pairs_path)));
      fs::create_directories(od);
      const SplitSpec split = load_or_make_split(split_path, lots, ratio, c, err);
      const auto train_pairs = filter_pairs(pairs, split, false);
      require(!train_pairs.empty(), "no training pairs after applying the split");
      ChipStore store(c.store);
      const auto chips = referenced_chips(train_pairs);
      ecfg.bands = store.read(chips.front().first, chips.front().second).chip.bands;
      const BandStats stats = footprint_band_stats(store, by_id, chips);
      const InputCache inputs = build_inputs(store, by_id, chips, stats, ecfg.side);
      const auto examples = make_examples(train_pairs, inputs);

      PairNetParams<float> params(ecfg);
      init_kaiming(params, c.seed);
      tcfg.seed = c.seed;
      tcfg.threads = threads > 0 ? threads : std::max(1u, std::thread::hardware_concurrency());
      std::string log;
      err << "training on " << examples.size() << " pairs, " << inputs.size() << " chips\n";
      const auto history = train(params, std::span<const PairExample<float>>(examples), tcfg,
                                 [&](const EpochRecord& r) {
                                   err << "epoch " << r.epoch << " loss " << r.mean_loss << " ("
                                       << static_cast<long>(r.wall_ms) << " ms)\n";
                                   log += epoch_record_json(r) + "\n";
                                 });
      save_checkpoint(params, {c.seed, stats}, od);
      write_file_atomic(od / "train_log.ndjson", log);
      print_summary(out, {{"command", "train"},
                          {"pairs", examples.size()},
                          {"epochs", history.epochs.size()},
                          {"final_loss", history.epochs.back().mean_loss},
                          {"model", (od / "model.json").string()}});
      return 0;
    }

    if (eval_cmd->parsed()) {
      const ExportFormat fmt = export_format_from_string(format);
      const auto lots = load_lots(lots_path(lots_flag, c));
      const auto by_id = lots_by_id(lots);
      const fs::path mdir = model_path.empty() ? od : fs::path(model_path);
      require_file(mdir / "model.json");
      const Checkpoint ck = load_checkpoint(mdir);
      const auto pairs = pairs_from_ndjson(
          read_required(pairs_path.empty() ? od / "pairs.ndjson" : fs::path(pairs_path)));
      fs::create_directories(od);
      const SplitSpec split = load_or_make_split(split_path, lots, ratio, c, err);
      auto test_pairs = filter_pairs(pairs, split, true);
      require(!test_pairs.empty(), "no held-out pairs after applying the split");
      if (!truth_path.empty()) {
        test_pairs = relabel_from_truth(test_pairs, manifest_from_json(read_required(truth_path)));
      }
      ChipStore store(c.store);
      const InputCache inputs = build_inputs(store, by_id, referenced_chips(test_pairs),
                                             ck.meta.normalization, ck.params.config().side);
      const EvalReport report = evaluate_split(ck.params, group_by_class(test_pairs, by_id),
                                               inputs.provider(), score_threshold);
      for (const auto& w : report.warnings) err << "warning: " << w << "\n";
      write_file_atomic(od / "eval.json", report_to_json(report));
      const fs::path dst = od / (fmt == ExportFormat::kCsv ? "eval.csv" : "eval.svg");
      export_report(report, dst, fmt);
      print_summary(out, {{"command", "eval"},
                          {"labels", truth_path.empty() ? "weak" : "truth"},
                          {"report", report_json(report)},
                          {"output", dst.string()}});
      return 0;
    }

    if (rank_cmd->parsed()) {
      const ExportFormat fmt = export_format_from_string(format);
      const auto by_id = lots_by_id(load_lots(lots_path(lots_flag, c)));
      const fs::path mdir = model_path.empty() ? od : fs::path(model_path);
      require_file(mdir / "model.json");
      const Checkpoint ck = load_checkpoint(mdir);
      ChipStore store(c.store);
      const auto dates = store.dates(lot_id);
      require(dates.size() >= 2, "lot " + lot_id + " needs at least two stored dates");

      std::map<Date, std::string> tags;
      if (!truth_path.empty()) {
        const auto m = manifest_from_json(read_required(truth_path));
        for (const auto& l : m.lots) {
          if (l.lot_id != lot_id) continue;
          for (const auto& ch : l.chips) tags[ch.date] = ch.period_tag;
        }
      }
      for (const auto& t : tag_args) {
        const auto eq = t.find('=');
        require(eq != std::string::npos, "--tag expects DATE=TAG, got " + t);
        tags[Date::parse(t.substr(0, eq))] = t.substr(eq + 1);
      }
      std::vector<LotDate> keys;
      for (const auto& d : dates) keys.emplace_back(lot_id, d);
      const InputCache inputs =
          build_inputs(store, by_id, keys, ck.meta.normalization, ck.params.config().side);
      std::vector<DatedInput> dated;
      for (const auto& d : dates) {
        auto it = tags.find(d);
        dated.push_back({d, it == tags.end() ? "" : it->second, inputs.get(lot_id, d)});
      }
      const auto ranking = rank_dates(ck.params, dated);
      fs::create_directories(od);
      const fs::path dst = od / (fmt == ExportFormat::kCsv ? "ranking.csv" : "ranking.svg");
      export_ranking(ranking, dst, fmt);
      ojson top = ojson::array();
      for (const auto& r : ranking) {
        top.push_back({{"date", r.date.str()}, {"tag", r.period_tag}, {"win_fraction", r.win_fraction}});
      }
      print_summary(out, {{"command", "rank"}, {"lot_id", lot_id}, {"ranking", top},
                          {"output", dst.string()}});
      return 0;
    }

    if (synth->parsed()) {
      require(bopt.lots_per_class >= 1 && bopt.n_weekends >= 1, "lots and weekends must be >= 1");
      require(bopt.epsilon >= 0.0 && bopt.epsilon < 0.5, "epsilon must be in [0, 0.5)");
      bopt.seed = c.seed;
      const auto m = gen_benchmark(bopt, c.store);
      std::size_t chips = 0, flipped = 0;
      for (const auto& l : m.lots) {
        chips += l.chips.size();
        for (const auto& w : l.weekends) flipped += w.flipped ? 1 : 0;
      }
      print_summary(out, {{"command", "synth-gen"},
                          {"lots", m.lots.size()},
                          {"chips", chips},
                          {"flipped_weekends", flipped},
                          {"store", c.store},
                          {"manifest", (fs::path(c.store) / "synth_manifest.json").string()}});
      return 0;
    }

    if (plot->parsed()) {
      require(ranking_csv.empty() != report_csv.empty(), "give exactly one of --ranking / --report");
      const fs::path src = ranking_csv.empty() ? fs::path(report_csv) : fs::path(ranking_csv);
      const std::string text = read_required(src);
      const fs::path dst = plot_out.empty() ? out_dir(c) / (src.stem().string() + ".svg") : fs::path(plot_out);
      if (!ranking_csv.empty()) {
        export_ranking(ranking_from_csv(text), dst, ExportFormat::kSvgBars);
      } else {
        export_report(report_from_csv(text), dst, ExportFormat::kSvgBars);
      }
      print_summary(out, {{"command", "plot"}, {"output", dst.string()}});
      return 0;
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const nlohmann::json::exception& e) {
    err << "error: malformed input: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return 1;
  }
  err << app.help();
  return 2;
}

}  // namespace weakpark
