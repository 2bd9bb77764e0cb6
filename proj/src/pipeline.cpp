#include "weakpark/pipeline.hpp"

#include <algorithm>
#include <set>

#include "weakpark/error.hpp"

namespace weakpark {

namespace {

const ParkingLot& lot_or_throw(const std::map<std::string, ParkingLot>& lots,
                               const std::string& id) {
  auto it = lots.find(id);
  if (it == lots.end()) {
    throw Error(ErrorKind::kValidation, "lot '" + id + "' has no polygon in the parking file");
  }
  return it->second;
}

}  // namespace

std::map<std::string, ParkingLot> lots_by_id(const std::vector<ParkingLot>& lots) {
  std::map<std::string, ParkingLot> out;
  for (const auto& l : lots) out.emplace(l.id, l);
  return out;
}

std::span<const float> InputCache::get(const std::string& lot_id, const Date& date) const {
  auto it = tensors_.find({lot_id, date});
  if (it == tensors_.end()) {
    throw Error(ErrorKind::kValidation, "no prepared input for " + lot_id + " on " + date.str());
  }
  return it->second;
}

void InputCache::put(const std::string& lot_id, const Date& date, std::vector<float> tensor) {
  tensors_[{lot_id, date}] = std::move(tensor);
}

bool InputCache::contains(const std::string& lot_id, const Date& date) const {
  return tensors_.contains({lot_id, date});
}

std::vector<LotDate> referenced_chips(const std::vector<LabeledPair>& pairs) {
  std::set<LotDate> keys;
  for (const auto& p : pairs) {
    keys.emplace(p.lot_id, p.date_a);
    keys.emplace(p.lot_id, p.date_b);
  }
  return {keys.begin(), keys.end()};
}

BandStats footprint_band_stats(const ChipStore& store,
                               const std::map<std::string, ParkingLot>& lots,
                               const std::vector<LotDate>& chips) {
  require(!chips.empty(), "band statistics need at least one chip");
  std::optional<BandStatsAccumulator> acc;
  for (const auto& [lot_id, date] : chips) {
    const ParkingLot& lot = lot_or_throw(lots, lot_id);
    const ChipEntry e = store.read(lot_id, date);
    if (!acc) acc.emplace(e.chip.bands);
    const Footprint fp =
        rasterize_footprint(lot.geometry, e.chip.geotransform, e.chip.height, e.chip.width);
    acc->add(e.chip, fp);
  }
  return acc->finish();
}

InputCache build_inputs(const ChipStore& store, const std::map<std::string, ParkingLot>& lots,
                        const std::vector<LotDate>& chips, const BandStats& stats, int side) {
  InputCache cache;
  for (const auto& [lot_id, date] : chips) {
    const ParkingLot& lot = lot_or_throw(lots, lot_id);
    const ChipEntry e = store.read(lot_id, date);
    const Footprint fp =
        rasterize_footprint(lot.geometry, e.chip.geotransform, e.chip.height, e.chip.width);
    const std::vector<float> norm = normalize_chip(e.chip, stats);
    cache.put(lot_id, date, prepare_input(norm, e.chip.bands, fp, side));
  }
  return cache;
}

std::vector<PairExample<float>> make_examples(const std::vector<LabeledPair>& pairs,
                                              const InputCache& inputs) {
  std::vector<PairExample<float>> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) {
    out.push_back({inputs.get(p.lot_id, p.date_a), inputs.get(p.lot_id, p.date_b), p.label});
  }
  return out;
}

std::vector<LabeledPair> filter_pairs(const std::vector<LabeledPair>& pairs, const SplitSpec& split,
                                      bool test_side) {
  std::set<std::string> side;
  for (const auto& [cls, s] : split.classes) {
    const auto& ids = test_side ? s.test : s.train;
    side.insert(ids.begin(), ids.end());
  }
  std::vector<LabeledPair> out;
  for (const auto& p : pairs) {
    if (side.contains(p.lot_id)) out.push_back(p);
  }
  return out;
}

std::map<SizeClass, std::vector<LabeledPair>> group_by_class(
    const std::vector<LabeledPair>& pairs, const std::map<std::string, ParkingLot>& lots) {
  std::map<SizeClass, std::vector<LabeledPair>> out;
  for (const auto& p : pairs) out[lot_or_throw(lots, p.lot_id).size_class].push_back(p);
  return out;
}

std::vector<LabeledPair> relabel_from_truth(const std::vector<LabeledPair>& pairs,
                                            const BenchmarkManifest& manifest) {
  std::vector<LabeledPair> out = pairs;
  for (auto& p : out) {
    p.label = manifest.rho(p.lot_id, p.date_a) > manifest.rho(p.lot_id, p.date_b) ? 1 : 0;
  }
  return out;
}

std::vector<LotRef> lot_refs(const std::vector<ParkingLot>& lots) {
  std::vector<LotRef> out;
  for (const auto& l : lots) out.push_back({l.id, l.size_class});
  return out;
}

}  // namespace weakpark
