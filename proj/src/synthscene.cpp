#include "weakpark/synthscene.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <json.hpp>

#include "weakpark/error.hpp"
#include "weakpark/io.hpp"
#include "weakpark/rng.hpp"

namespace weakpark {

namespace {
using nlohmann::json;
using ojson = nlohmann::ordered_json;

constexpr int kNativePerSlotCol = 6;   // 3 m / 0.5 m
constexpr int kNativePerSlotRow = 12;  // 6 m / 0.5 m
constexpr int kCarNativeW = 4;         // 2 m
constexpr int kCarNativeL = 10;        // 5 m

bool is_multiple(double v, double step) {
  const double k = v / step;
  return std::abs(k - std::round(k)) < 1e-9 && k >= 1.0;
}

struct ClassBand {
  double lo, hi;
};

ClassBand area_band(SizeClass c) {
  switch (c) {
    case SizeClass::kSmall:
      return {1500.0, 4700.0};
    case SizeClass::kMedium:
      return {5400.0, 9400.0};
    case SizeClass::kLarge:
      return {11000.0, 36000.0};
  }
  return {1500.0, 4700.0};
}

SceneConfig scene_for(const LotGeometry& g, const SeriesOptions& opt, double rho,
                      std::uint64_t seed) {
  SceneConfig c = opt.base;
  c.width_m = g.width_m;
  c.height_m = g.height_m;
  c.occupancy = rho;
  c.seed = seed;
  return c;
}

ojson polygon_json(const PolygonGeom& p) {
  ojson ring = ojson::array();
  for (const auto& v : p.exterior) ring.push_back({v.lon, v.lat});
  return ring;
}

}  // namespace

void SceneConfig::validate() const {
  require(is_multiple(width_m, kSlotWidthM), "lot width must be a positive multiple of 3 m");
  require(is_multiple(height_m, kSlotDepthM), "lot height must be a positive multiple of 6 m");
  require(occupancy >= 0.0 && occupancy <= 1.0, "occupancy must lie in [0, 1]");
  require(asphalt >= 0.0 && asphalt <= 1.0 && surround >= 0.0 && surround <= 1.0,
          "reflectances must lie in [0, 1]");
  require(cars.dark_lo >= 0.0 && cars.dark_hi <= 1.0 && cars.bright_lo >= 0.0 &&
              cars.bright_hi <= 1.0 && cars.p_dark >= 0.0 && cars.p_dark <= 1.0,
          "car reflectance mixture out of range");
  require(noise_sigma >= 0.0, "noise sigma must be non-negative");
  require(jitter_lo > 0.0 && jitter_lo <= jitter_hi, "brightness jitter range invalid");
  require(bands == 4 || bands == 8, "synthetic chips have 4 or 8 bands");
  require(margin_px >= 0, "margin must be non-negative");
}

int SceneConfig::lot_cols_px() const { return static_cast<int>(std::lround(width_m / kOutputGsdM)); }
int SceneConfig::lot_rows_px() const { return static_cast<int>(std::lround(height_m / kOutputGsdM)); }
int SceneConfig::slot_cols() const { return static_cast<int>(std::lround(width_m / kSlotWidthM)); }
int SceneConfig::slot_rows() const { return static_cast<int>(std::lround(height_m / kSlotDepthM)); }

NativeScene render_native(const SceneConfig& config) {
  config.validate();
  NativeScene s;
  s.bands = config.bands;
  s.height = (config.lot_rows_px() + 2 * config.margin_px) * kDownsample;
  s.width = (config.lot_cols_px() + 2 * config.margin_px) * kDownsample;
  const std::size_t plane = static_cast<std::size_t>(s.height) * s.width;
  s.values.assign(static_cast<std::size_t>(s.bands) * plane, config.surround);
  const int y_lot = config.margin_px * kDownsample;
  const int x_lot = config.margin_px * kDownsample;
  const int lot_h = config.lot_rows_px() * kDownsample;
  const int lot_w = config.lot_cols_px() * kDownsample;
  for (int b = 0; b < s.bands; ++b) {
    for (int y = y_lot; y < y_lot + lot_h; ++y) {
      double* row = s.values.data() + b * plane + static_cast<std::size_t>(y) * s.width;
      std::fill(row + x_lot, row + x_lot + lot_w, config.asphalt);
    }
  }

  SplitMix64 rng(config.seed);
  const int n = config.n_slots();
  s.n_cars = static_cast<int>(std::lround(config.occupancy * n));
  std::vector<int> slots(static_cast<std::size_t>(n));
  std::iota(slots.begin(), slots.end(), 0);
  fisher_yates(slots, rng);
  s.occupied_slots.assign(slots.begin(), slots.begin() + s.n_cars);
  std::sort(s.occupied_slots.begin(), s.occupied_slots.end());

  std::vector<double> colour(static_cast<std::size_t>(s.bands));
  for (int slot : s.occupied_slots) {
    if (rng.bernoulli(config.cars.p_dark)) {
      std::fill(colour.begin(), colour.end(), rng.uniform(config.cars.dark_lo, config.cars.dark_hi));
    } else {
      for (auto& v : colour) v = rng.uniform(config.cars.bright_lo, config.cars.bright_hi);
    }
    const int sr = slot / config.slot_cols();
    const int sc = slot % config.slot_cols();
    const int y0 = y_lot + sr * kNativePerSlotRow + 1;
    const int x0 = x_lot + sc * kNativePerSlotCol + 1;
    for (int b = 0; b < s.bands; ++b) {
      for (int y = y0; y < y0 + kCarNativeL; ++y) {
        double* row = s.values.data() + b * plane + static_cast<std::size_t>(y) * s.width;
        std::fill(row + x0, row + x0 + kCarNativeW, colour[b]);
      }
    }
  }
  return s;
}

std::vector<double> box_downsample(const std::vector<double>& native, int bands, int height,
                                   int width, int factor) {
  require(factor > 0 && height % factor == 0 && width % factor == 0,
          "native raster is not divisible by the downsampling factor", ErrorKind::kShape);
  require(native.size() == static_cast<std::size_t>(bands) * height * width,
          "native raster size mismatch", ErrorKind::kShape);
  const int oh = height / factor, ow = width / factor;
  std::vector<double> out(static_cast<std::size_t>(bands) * oh * ow, 0.0);
  const double inv = 1.0 / (factor * factor);
  for (int b = 0; b < bands; ++b) {
    const double* src = native.data() + static_cast<std::size_t>(b) * height * width;
    double* dst = out.data() + static_cast<std::size_t>(b) * oh * ow;
    for (int r = 0; r < oh; ++r) {
      for (int c = 0; c < ow; ++c) {
        double acc = 0.0;
        for (int y = 0; y < factor; ++y) {
          const double* row = src + static_cast<std::size_t>(r * factor + y) * width + c * factor;
          for (int x = 0; x < factor; ++x) acc += row[x];
        }
        dst[static_cast<std::size_t>(r) * ow + c] = acc * inv;
      }
    }
  }
  return out;
}

GeoTransform scene_geotransform(const SceneConfig& config) {
  const double dlon = kOutputGsdM / meters_per_degree_lon(config.origin_lat);
  const double dlat = -kOutputGsdM / meters_per_degree_lat(config.origin_lat);
  // Pixel (0,0) centre sits margin - 0.5 pixels before the lot corner.
  const double off = -static_cast<double>(config.margin_px) + 0.5;
  return {config.origin_lon + off * dlon, config.origin_lat + off * dlat, dlon, dlat};
}

PolygonGeom scene_polygon(const SceneConfig& config) {
  const GeoTransform gt = scene_geotransform(config);
  const double c0 = config.margin_px - 0.5;
  const double r0 = config.margin_px - 0.5;
  const double c1 = c0 + config.lot_cols_px();
  const double r1 = r0 + config.lot_rows_px();
  PolygonGeom p;
  p.exterior = {{gt.pixel_lon(c0), gt.pixel_lat(r0)},
                {gt.pixel_lon(c1), gt.pixel_lat(r0)},
                {gt.pixel_lon(c1), gt.pixel_lat(r1)},
                {gt.pixel_lon(c0), gt.pixel_lat(r1)}};
  return p;
}

RenderedLot render_lot(const SceneConfig& config, const std::string& lot_id,
                       std::optional<Date> date) {
  const NativeScene native = render_native(config);
  const std::vector<double> coarse =
      box_downsample(native.values, native.bands, native.height, native.width, kDownsample);
  const int h = native.height / kDownsample;
  const int w = native.width / kDownsample;
  RenderedLot out;
  out.chip = ImageChip(lot_id, date, config.bands, h, w, kOutputGsdM, scene_geotransform(config));
  out.polygon = scene_polygon(config);
  out.occupancy = config.occupancy;
  out.n_slots = config.n_slots();
  out.n_cars = native.n_cars;

  SplitMix64 rng(mix_seed(config.seed, 1));
  const double jitter = rng.uniform(config.jitter_lo, config.jitter_hi);
  for (std::size_t i = 0; i < coarse.size(); ++i) {
    double v = coarse[i] * jitter;
    if (config.noise_sigma > 0.0) v += config.noise_sigma * rng.normal();
    out.chip.pixels[i] = static_cast<float>(std::clamp(v, 0.0, 1.0));
  }
  return out;
}

double occupancy_contrast(const ImageChip& chip_lo, const ImageChip& chip_hi,
                          const Footprint& footprint, double asphalt) {
  auto mad = [&](const ImageChip& chip) {
    require(chip.height == footprint.height && chip.width == footprint.width,
            "footprint shape differs from chip", ErrorKind::kShape);
    double acc = 0.0;
    std::size_t n = 0;
    for (int r = 0; r < chip.height; ++r) {
      for (int c = 0; c < chip.width; ++c) {
        if (!footprint.at(r, c)) continue;
        for (int b = 0; b < chip.bands; ++b) acc += std::abs(chip.at(b, r, c) - asphalt);
        n += static_cast<std::size_t>(chip.bands);
      }
    }
    require(n > 0, "empty footprint");
    return acc / static_cast<double>(n);
  };
  return mad(chip_hi) - mad(chip_lo);
}

LotGeometry sample_lot_geometry(SizeClass size_class, std::uint64_t seed) {
  const ClassBand band = area_band(size_class);
  SplitMix64 rng(seed);
  for (int attempt = 0; attempt < 10000; ++attempt) {
    const double area = rng.uniform(band.lo, band.hi);
    const double aspect = rng.uniform(0.6, 1.6);  // width / height
    const double w = std::round(std::sqrt(area * aspect) / kSlotWidthM) * kSlotWidthM;
    const double h = std::round(std::sqrt(area / aspect) / kSlotDepthM) * kSlotDepthM;
    if (w < kSlotWidthM || h < kSlotDepthM) continue;
    const double a = w * h;
    if (a >= band.lo && a <= band.hi) return {size_class, w, h};
  }
  throw Error(ErrorKind::kValidation, "could not sample lot geometry");
}

Date synthetic_epoch() { return Date(2019, 4, 6); }

SyntheticSeries gen_weekend_series(const std::string& lot_id, const LotGeometry& geometry,
                                   int n_weekends, double epsilon, std::uint64_t seed,
                                   const SeriesOptions& options) {
  require(n_weekends >= 1, "need at least one weekend");
  require(epsilon >= 0.0 && epsilon < 0.5, "label-noise rate must lie in [0, 0.5)");
  SyntheticSeries s;
  s.lot_id = lot_id;
  s.geometry = geometry;
  s.epsilon = epsilon;
  s.polygon = scene_polygon(scene_for(geometry, options, 0.0, seed));
  s.n_slots = scene_for(geometry, options, 0.0, seed).n_slots();
  SplitMix64 rng(mix_seed(seed, 0));
  const Date epoch = synthetic_epoch();
  for (int k = 0; k < n_weekends; ++k) {
    double rho_sat = rng.uniform(options.sat_lo, options.sat_hi);
    double rho_sun = rng.uniform(options.sun_lo, options.sun_hi);
    const bool flip = rng.bernoulli(epsilon);
    if (flip) std::swap(rho_sat, rho_sun);
    const Date sat = epoch.plus_days(7 * k);
    const Date sun = sat.plus_days(1);
    s.weekends.push_back({sat, sun, flip});
    const auto k64 = static_cast<std::uint64_t>(k);
    for (auto [date, rho, idx] : {std::tuple{sat, rho_sat, 2 * k64}, std::tuple{sun, rho_sun, 2 * k64 + 1}}) {
      RenderedLot r = render_lot(scene_for(geometry, options, rho, mix_seed(seed, 1000 + idx)), lot_id, date);
      s.chips.push_back({date, rho, r.n_cars, std::move(r.chip), ""});
    }
  }
  return s;
}

SyntheticSeries gen_period_series(const std::string& lot_id, const LotGeometry& geometry,
                                  const std::vector<Date>& pre_dates,
                                  const std::vector<Date>& post_dates, std::uint64_t seed,
                                  const SeriesOptions& options) {
  SyntheticSeries s;
  s.lot_id = lot_id;
  s.geometry = geometry;
  s.polygon = scene_polygon(scene_for(geometry, options, 0.0, seed));
  s.n_slots = scene_for(geometry, options, 0.0, seed).n_slots();
  SplitMix64 rng(mix_seed(seed, 0));
  std::uint64_t idx = 0;
  auto emit = [&](const std::vector<Date>& dates, double lo, double hi, const char* tag) {
    for (const Date& d : dates) {
      const double rho = rng.uniform(lo, hi);
      RenderedLot r = render_lot(scene_for(geometry, options, rho, mix_seed(seed, 1000 + idx++)), lot_id, d);
      s.chips.push_back({d, rho, r.n_cars, std::move(r.chip), tag});
    }
  };
  emit(pre_dates, options.sat_lo, options.sat_hi, "pre");
  emit(post_dates, options.sun_lo, options.sun_hi, "post");
  std::sort(s.chips.begin(), s.chips.end(),
            [](const SeriesChip& a, const SeriesChip& b) { return a.date < b.date; });
  return s;
}

double BenchmarkManifest::rho(const std::string& lot_id, const Date& date) const {
  for (const auto& l : lots) {
    if (l.lot_id != lot_id) continue;
    for (const auto& c : l.chips) {
      if (c.date == date) return c.rho_true;
    }
  }
  throw Error(ErrorKind::kValidation,
              "no ground truth for " + lot_id + " on " + date.str() + " in the manifest");
}

BenchmarkManifest gen_benchmark(const BenchmarkOptions& options,
                                const std::filesystem::path& out_dir) {
  require(options.lots_per_class >= 1, "need at least one lot per class");
  require(options.cloud_chip_prob >= 0.0 && options.cloud_chip_prob <= 1.0,
          "cloud probability must lie in [0, 1]");
  const ChipStore store(out_dir);
  BenchmarkManifest m{options.seed, options.epsilon, options.n_weekends, {}};
  std::vector<ParkingLot> parking;
  std::uint64_t lot_index = 0;

  auto write_series = [&](SyntheticSeries&& s) {
    SplitMix64 cloud_rng(mix_seed(options.seed, 0xC10D + lot_index));
    const Footprint fp = rasterize_footprint(s.polygon, s.chips.front().chip.geotransform,
                                             s.chips.front().chip.height, s.chips.front().chip.width);
    const Footprint::Box box = fp.bounding_box();
    for (auto& c : s.chips) {
      UsableMask mask(c.chip.height, c.chip.width);
      if (options.cloud_chip_prob > 0.0 && cloud_rng.bernoulli(options.cloud_chip_prob)) {
        const int r0 = box.row0 + box.rows / 2, c0 = box.col0 + box.cols / 2;
        for (int r = r0; r < std::min(r0 + 2, c.chip.height); ++r) {
          for (int cc = c0; cc < std::min(c0 + 2, c.chip.width); ++cc) {
            mask.at(r, cc) = MaskClass::kCloud;
            for (int b = 0; b < c.chip.bands; ++b) c.chip.at(b, r, cc) = 0.9f;
          }
        }
      }
      store.write(c.chip, mask);
      c.chip.pixels.clear();
      c.chip.pixels.shrink_to_fit();
    }
    parking.push_back(make_lot(s.lot_id, s.polygon,
                               {{"amenity", "parking"}, {"parking", "surface"}, {"name", s.lot_id}}));
    m.lots.push_back({s.lot_id, s.geometry, s.polygon, s.n_slots, std::move(s.chips),
                      std::move(s.weekends)});
    ++lot_index;
  };

  for (SizeClass cls : kReportOrder) {
    for (int i = 0; i < options.lots_per_class; ++i) {
      const std::uint64_t lot_seed = mix_seed(options.seed, lot_index);
      char id[64];
      std::snprintf(id, sizeof(id), "synth-%s-%02d", std::string(to_string(cls)).c_str(), i);
      SeriesOptions so = options.series;
      so.base.origin_lon = 8.0 + 0.01 * static_cast<double>(lot_index);
      so.base.origin_lat = 50.0 + 0.5 * static_cast<double>(static_cast<int>(cls));
      const LotGeometry g = sample_lot_geometry(cls, mix_seed(lot_seed, 7));
      write_series(gen_weekend_series(id, g, options.n_weekends, options.epsilon, lot_seed, so));
    }
  }
  if (options.period_lot) {
    const std::uint64_t lot_seed = mix_seed(options.seed, lot_index);
    SeriesOptions so = options.series;
    so.base.origin_lon = 32.5;
    so.base.origin_lat = 15.6;
    std::vector<Date> pre, post;
    for (int d = 0; d < 4; ++d) {
      pre.push_back(Date(2023, 4, 1).plus_days(d));
      post.push_back(Date(2023, 4, 15).plus_days(d));
    }
    const LotGeometry g = sample_lot_geometry(SizeClass::kLarge, mix_seed(lot_seed, 7));
    write_series(gen_period_series(kPeriodLotId, g, pre, post, lot_seed, so));
  }

  write_file_atomic(out_dir / "lots.geojson", serialize_parking_collection(parking));
  write_file_atomic(out_dir / "synth_manifest.json", manifest_to_json(m));
  return m;
}

std::string manifest_to_json(const BenchmarkManifest& m) {
  ojson lots = ojson::array();
  for (const auto& l : m.lots) {
    ojson chips = ojson::array();
    for (const auto& c : l.chips) {
      ojson cj = {{"date", c.date.str()}, {"rho_true", c.rho_true}, {"n_cars", c.n_cars}};
      if (!c.period_tag.empty()) cj["period_tag"] = c.period_tag;
      chips.push_back(cj);
    }
    ojson weekends = ojson::array();
    for (const auto& w : l.weekends) {
      weekends.push_back({{"sat", w.sat.str()}, {"sun", w.sun.str()}, {"flipped", w.flipped}});
    }
    lots.push_back({{"lot_id", l.lot_id},
                    {"size_class", std::string(to_string(l.geometry.size_class))},
                    {"width_m", l.geometry.width_m},
                    {"height_m", l.geometry.height_m},
                    {"n_slots", l.n_slots},
                    {"polygon", polygon_json(l.polygon)},
                    {"chips", chips},
                    {"weekends", weekends}});
  }
  ojson doc = {{"seed", m.seed}, {"epsilon", m.epsilon}, {"n_weekends", m.n_weekends}, {"lots", lots}};
  return doc.dump(2) + "\n";
}

BenchmarkManifest manifest_from_json(std::string_view text) {
  BenchmarkManifest m;
  try {
    json doc = json::parse(text);
    m.seed = doc.at("seed").get<std::uint64_t>();
    m.epsilon = doc.at("epsilon").get<double>();
    m.n_weekends = doc.at("n_weekends").get<int>();
    for (const auto& lj : doc.at("lots")) {
      BenchmarkLot l;
      l.lot_id = lj.at("lot_id").get<std::string>();
      l.geometry = {size_class_from_string(lj.at("size_class").get<std::string>()),
                    lj.at("width_m").get<double>(), lj.at("height_m").get<double>()};
      l.n_slots = lj.at("n_slots").get<int>();
      for (const auto& v : lj.at("polygon")) {
        l.polygon.exterior.push_back({v.at(0).get<double>(), v.at(1).get<double>()});
      }
      for (const auto& cj : lj.at("chips")) {
        SeriesChip c;
        c.date = Date::parse(cj.at("date").get<std::string>());
        c.rho_true = cj.at("rho_true").get<double>();
        c.n_cars = cj.at("n_cars").get<int>();
        c.period_tag = cj.value("period_tag", "");
        l.chips.push_back(std::move(c));
      }
      for (const auto& wj : lj.at("weekends")) {
        l.weekends.push_back({Date::parse(wj.at("sat").get<std::string>()),
                              Date::parse(wj.at("sun").get<std::string>()),
                              wj.at("flipped").get<bool>()});
      }
      m.lots.push_back(std::move(l));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kParse, std::string("bad synthetic manifest: ") + e.what());
  }
  return m;
}

}  // namespace weakpark
