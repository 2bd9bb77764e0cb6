#ifndef WEAKPARK_IMAGING_HPP_
#define WEAKPARK_IMAGING_HPP_

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "weakpark/date.hpp"
#include "weakpark/geodata.hpp"

namespace weakpark {

/// Degree-space placement of a chip: centre of pixel (0,0) plus per-pixel
/// steps (dlat is negative for north-up imagery).
struct GeoTransform {
  double origin_lon = 0.0;
  double origin_lat = 0.0;
  double dlon = 0.0;
  double dlat = 0.0;

  double pixel_lon(double col) const { return origin_lon + col * dlon; }
  double pixel_lat(double row) const { return origin_lat + row * dlat; }
  friend bool operator==(const GeoTransform&, const GeoTransform&) = default;
};

/// Band-planar, row-major reflectance raster in [0, 1].
struct ImageChip {
  std::string lot_id;
  std::optional<Date> capture_date;
  int bands = 4;
  int height = 0;
  int width = 0;
  double gsd_m = 3.0;
  GeoTransform geotransform;
  double scale_applied = 1.0;  // provider integer scale divided out at import
  std::vector<float> pixels;   // bands * height * width

  ImageChip() = default;
  ImageChip(std::string lot, std::optional<Date> date, int b, int h, int w,
            double gsd = 3.0, GeoTransform gt = {});

  std::size_t plane() const { return static_cast<std::size_t>(height) * width; }
  float& at(int b, int r, int c) { return pixels[b * plane() + r * width + c]; }
  float at(int b, int r, int c) const { return pixels[b * plane() + r * width + c]; }

  /// Throws if the invariants (band count, finite values, sizes) fail.
  void validate() const;
};

enum class MaskClass : std::uint8_t {
  kClear = 0,
  kSnow = 1,
  kShadow = 2,
  kLightHaze = 3,
  kHeavyHaze = 4,
  kCloud = 5,
  kNoData = 255,
};

struct UsableMask {
  int height = 0;
  int width = 0;
  std::vector<MaskClass> classes;

  UsableMask() = default;
  UsableMask(int h, int w, MaskClass fill = MaskClass::kClear)
      : height(h), width(w), classes(static_cast<std::size_t>(h) * w, fill) {}

  MaskClass& at(int r, int c) { return classes[static_cast<std::size_t>(r) * width + c]; }
  MaskClass at(int r, int c) const { return classes[static_cast<std::size_t>(r) * width + c]; }
};

struct Footprint {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> inside;

  bool at(int r, int c) const { return inside[static_cast<std::size_t>(r) * width + c] != 0; }
  std::size_t count() const;

  struct Box {
    int row0, col0, rows, cols;
  };
  /// Tight bounding box of the true pixels.
  Box bounding_box() const;
};

inline constexpr int kDefaultHistogramBins = 64;
inline constexpr double kDefaultTvThreshold = 0.2;

struct Histogram {
  std::vector<double> p;
  int bins() const { return static_cast<int>(p.size()); }
};

struct ChipEntry {
  ImageChip chip;
  UsableMask mask;
};

/// All chips of one lot, sorted by capture date (strictly increasing).
struct LotImageStack {
  std::string lot_id;
  std::vector<ChipEntry> entries;

  void sort_and_validate();
};

Footprint rasterize_footprint(const PolygonGeom& polygon, const GeoTransform& gt, int height,
                              int width);

bool coverage_ok(const ImageChip& chip, const UsableMask& mask, const Footprint& footprint);

inline constexpr std::array<MaskClass, 3> kDefaultCloudClasses = {
    MaskClass::kCloud, MaskClass::kHeavyHaze, MaskClass::kShadow};

bool cloud_free(const ImageChip& chip, const UsableMask& mask, const Footprint& footprint,
                std::span<const MaskClass> reject = kDefaultCloudClasses);

/// Per-pixel, per-band median across chips; needs at least three chips.
ImageChip median_image(std::span<const ImageChip* const> chips);
ImageChip median_image(const std::vector<ImageChip>& chips);

/// Luminance (band mean) histogram over footprint pixels, K equal-width bins
/// on [0, 1]; values at or above 1 go to the top bin.
Histogram luminance_histogram(const ImageChip& chip, const Footprint& footprint,
                              int bins = kDefaultHistogramBins);

/// Total variation distance, 0.5 * sum |p - q|.
double histogram_distance(const Histogram& a, const Histogram& b);

enum class RejectReason { kCoverage, kCloud, kBrightness };
std::string_view to_string(RejectReason r);

struct QcDecision {
  Date date;
  bool kept = true;
  std::optional<RejectReason> reason;
  std::optional<double> tv_distance;  // set when the brightness stage ran
};

struct QcResult {
  LotImageStack kept;
  std::vector<QcDecision> decisions;  // one per input chip, date order
  bool brightness_skipped = false;
};

struct QcOptions {
  double tv_threshold = kDefaultTvThreshold;
  int bins = kDefaultHistogramBins;
  std::vector<MaskClass> cloud_classes{kDefaultCloudClasses.begin(),
                                       kDefaultCloudClasses.end()};
};

/// Coverage, then cloud, then brightness-vs-median. Each rejected chip
/// carries the first stage it failed.
QcResult qc_pipeline(const LotImageStack& stack, const PolygonGeom& polygon,
                     const QcOptions& options = {});

/// One NDJSON line {lot_id, date, kept, reason}.
std::string qc_record_json(const std::string& lot_id, const QcDecision& d);

struct BandStats {
  std::vector<double> mean;
  std::vector<double> stddev;
};

std::vector<float> normalize_chip(const ImageChip& chip, const BandStats& stats);

/// Accumulates per-band mean / population std over footprint pixels.
class BandStatsAccumulator {
 public:
  explicit BandStatsAccumulator(int bands) : sum_(bands, 0.0), sum2_(bands, 0.0) {}
  void add(const ImageChip& chip, const Footprint& footprint);
  BandStats finish() const;

 private:
  std::vector<double> sum_;
  std::vector<double> sum2_;
  std::size_t n_ = 0;
};

// ---------------------------------------------------------------------------
// Chip store: chips/<lot>/<YYYY-MM-DD>.{img,json,msk}

class ChipStore {
 public:
  explicit ChipStore(std::filesystem::path root) : root_(std::move(root)) {}

  const std::filesystem::path& root() const { return root_; }

  void write(const ImageChip& chip, const UsableMask& mask) const;
  ChipEntry read(std::string_view lot_id, const Date& date) const;

  /// Lot ids present on disk, sorted.
  std::vector<std::string> lots() const;
  /// Capture dates present for a lot, ascending.
  std::vector<Date> dates(std::string_view lot_id) const;

  LotImageStack read_stack(std::string_view lot_id) const;

  std::filesystem::path lot_dir(std::string_view lot_id) const;

 private:
  std::filesystem::path root_;
};

/// Directory name for a lot id ('/' is not allowed in path components).
std::string lot_dirname(std::string_view lot_id);

}  // namespace weakpark

#endif  // WEAKPARK_IMAGING_HPP_
