#ifndef WEAKPARK_PIPELINE_HPP_
#define WEAKPARK_PIPELINE_HPP_

#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "weakpark/evalrank.hpp"
#include "weakpark/geodata.hpp"
#include "weakpark/imaging.hpp"
#include "weakpark/pairnet.hpp"
#include "weakpark/synthscene.hpp"
#include "weakpark/weakpairs.hpp"

namespace weakpark {

using LotDate = std::pair<std::string, Date>;

std::map<std::string, ParkingLot> lots_by_id(const std::vector<ParkingLot>& lots);

/// Prepared model inputs keyed by (lot, date).
class InputCache {
 public:
  std::span<const float> get(const std::string& lot_id, const Date& date) const;
  void put(const std::string& lot_id, const Date& date, std::vector<float> tensor);
  bool contains(const std::string& lot_id, const Date& date) const;
  std::size_t size() const { return tensors_.size(); }

  InputProvider provider() const {
    return [this](const std::string& l, const Date& d) { return get(l, d); };
  }

 private:
  std::map<LotDate, std::vector<float>> tensors_;
};

/// Distinct (lot, date) keys referenced by a pair list, sorted.
std::vector<LotDate> referenced_chips(const std::vector<LabeledPair>& pairs);

/// Per-band mean / std over the footprint pixels of the given chips.
BandStats footprint_band_stats(const ChipStore& store,
                               const std::map<std::string, ParkingLot>& lots,
                               const std::vector<LotDate>& chips);

/// Normalize + crop + resample every requested chip.
InputCache build_inputs(const ChipStore& store, const std::map<std::string, ParkingLot>& lots,
                        const std::vector<LotDate>& chips, const BandStats& stats, int side);

std::vector<PairExample<float>> make_examples(const std::vector<LabeledPair>& pairs,
                                              const InputCache& inputs);

/// Keeps pairs whose lot is on the requested side of the split.
std::vector<LabeledPair> filter_pairs(const std::vector<LabeledPair>& pairs, const SplitSpec& split,
                                      bool test_side);

std::map<SizeClass, std::vector<LabeledPair>> group_by_class(
    const std::vector<LabeledPair>& pairs, const std::map<std::string, ParkingLot>& lots);

/// Replaces weak labels with ground truth: 1 iff rho(date_a) > rho(date_b).
std::vector<LabeledPair> relabel_from_truth(const std::vector<LabeledPair>& pairs,
                                            const BenchmarkManifest& manifest);

std::vector<LotRef> lot_refs(const std::vector<ParkingLot>& lots);

}  // namespace weakpark

#endif  // WEAKPARK_PIPELINE_HPP_
