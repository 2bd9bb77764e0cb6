#ifndef WEAKPARK_SYNTHSCENE_HPP_
#define WEAKPARK_SYNTHSCENE_HPP_

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "weakpark/date.hpp"
#include "weakpark/geodata.hpp"
#include "weakpark/imaging.hpp"

namespace weakpark {

inline constexpr double kSlotWidthM = 3.0;
inline constexpr double kSlotDepthM = 6.0;
inline constexpr double kCarWidthM = 2.0;
inline constexpr double kCarLengthM = 5.0;
inline constexpr double kNativeGsdM = 0.5;
inline constexpr double kOutputGsdM = 3.0;
inline constexpr int kDownsample = 6;  // output / native GSD

struct CarMixture {
  double p_dark = 0.7;
  double dark_lo = 0.08, dark_hi = 0.18;
  double bright_lo = 0.45, bright_hi = 0.7;  // drawn per band ("coloured")
};

struct SceneConfig {
  double width_m = 60.0;   // multiple of the 3 m slot width
  double height_m = 60.0;  // multiple of the 6 m slot depth
  double occupancy = 0.0;
  double asphalt = 0.35;
  double surround = 0.22;
  CarMixture cars;
  double noise_sigma = 0.02;
  double jitter_lo = 0.95;
  double jitter_hi = 1.05;
  int bands = 4;
  int margin_px = 2;
  double origin_lon = 10.0;  // north-west lot corner
  double origin_lat = 51.0;
  std::uint64_t seed = 0;

  void validate() const;
  int lot_cols_px() const;
  int lot_rows_px() const;
  int slot_cols() const;
  int slot_rows() const;
  int n_slots() const { return slot_cols() * slot_rows(); }
};

struct NativeScene {
  int bands = 0, height = 0, width = 0;  // native pixels (0.5 m)
  std::vector<double> values;             // band-planar
  int n_cars = 0;
  std::vector<int> occupied_slots;  // slot indices, ascending
};

struct RenderedLot {
  ImageChip chip;
  PolygonGeom polygon;
  double occupancy = 0.0;
  int n_slots = 0;
  int n_cars = 0;
};

/// Lays out cars on the 0.5 m native grid before any radiometric effects.
NativeScene render_native(const SceneConfig& config);

/// Mean over non-overlapping factor x factor blocks (band-planar input).
std::vector<double> box_downsample(const std::vector<double>& native, int bands, int height,
                                   int width, int factor);

/// Slots on a 3 m x 6 m grid, round(rho * n_slots) filled uniformly without
/// replacement, rendered at 0.5 m, box-averaged to 3 m, then brightness
/// jitter, additive Gaussian noise and clamping to [0, 1].
RenderedLot render_lot(const SceneConfig& config, const std::string& lot_id,
                       std::optional<Date> date = std::nullopt);

/// Lot polygon and chip geotransform implied by a config.
PolygonGeom scene_polygon(const SceneConfig& config);
GeoTransform scene_geotransform(const SceneConfig& config);

/// Mean |v - asphalt| over footprint pixels and bands, hi minus lo.
double occupancy_contrast(const ImageChip& chip_lo, const ImageChip& chip_hi,
                          const Footprint& footprint, double asphalt = 0.35);

struct LotGeometry {
  SizeClass size_class = SizeClass::kSmall;
  double width_m = 0.0;
  double height_m = 0.0;
};

/// Rectangle dimensions on the slot grid whose area falls inside the class
/// band (small 1500-4700, medium 5400-9400, large 11000-36000 sqm).
LotGeometry sample_lot_geometry(SizeClass size_class, std::uint64_t seed);

struct SeriesChip {
  Date date;
  double rho_true = 0.0;
  int n_cars = 0;
  ImageChip chip;
  std::string period_tag;
};

struct WeekendFlag {
  Date sat;
  Date sun;
  bool flipped = false;
};

struct SyntheticSeries {
  std::string lot_id;
  LotGeometry geometry;
  PolygonGeom polygon;
  int n_slots = 0;
  double epsilon = 0.0;
  std::vector<SeriesChip> chips;  // date order
  std::vector<WeekendFlag> weekends;
};

struct SeriesOptions {
  double sat_lo = 0.6, sat_hi = 0.95;
  double sun_lo = 0.0, sun_hi = 0.25;
  SceneConfig base;  // radiometry / placement; geometry and occupancy overridden
};

/// First weekend of every generated series (a Saturday).
Date synthetic_epoch();

/// Per weekend: draw rho_sat, rho_sun; with probability epsilon swap them
/// (flag set); render both chips. Weekends start at synthetic_epoch().
SyntheticSeries gen_weekend_series(const std::string& lot_id, const LotGeometry& geometry,
                                   int n_weekends, double epsilon, std::uint64_t seed,
                                   const SeriesOptions& options = {});

/// High-occupancy "pre" dates followed by low-occupancy "post" dates.
SyntheticSeries gen_period_series(const std::string& lot_id, const LotGeometry& geometry,
                                  const std::vector<Date>& pre_dates,
                                  const std::vector<Date>& post_dates, std::uint64_t seed,
                                  const SeriesOptions& options = {});

struct BenchmarkOptions {
  int lots_per_class = 20;
  int n_weekends = 8;
  double epsilon = 0.05;
  std::uint64_t seed = 7;
  double cloud_chip_prob = 0.0;  // QC testing only: stamps a cloud into the footprint
  bool period_lot = false;       // also write a pre/post ranking lot
  SeriesOptions series;
};

struct BenchmarkLot {
  std::string lot_id;
  LotGeometry geometry;
  PolygonGeom polygon;
  int n_slots = 0;
  std::vector<SeriesChip> chips;  // pixels dropped after writing
  std::vector<WeekendFlag> weekends;
};

struct BenchmarkManifest {
  std::uint64_t seed = 0;
  double epsilon = 0.0;
  int n_weekends = 0;
  std::vector<BenchmarkLot> lots;

  /// Ground-truth occupancy of (lot, date); throws when absent.
  double rho(const std::string& lot_id, const Date& date) const;
};

/// Writes chips/, lots.geojson and synth_manifest.json under out_dir.
BenchmarkManifest gen_benchmark(const BenchmarkOptions& options,
                                const std::filesystem::path& out_dir);

std::string manifest_to_json(const BenchmarkManifest& m);
BenchmarkManifest manifest_from_json(std::string_view text);

inline constexpr const char* kPeriodLotId = "synth-period-00";

}  // namespace weakpark

#endif  // WEAKPARK_SYNTHSCENE_HPP_
