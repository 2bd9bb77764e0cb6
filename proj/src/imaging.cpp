#include "weakpark/imaging.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include <json.hpp>

#include "weakpark/error.hpp"
#include "weakpark/io.hpp"

namespace weakpark {

namespace {
using ojson = nlohmann::ordered_json;
using nlohmann::json;

void require_same_shape(const ImageChip& chip, const UsableMask& mask, const Footprint& fp) {
  if (chip.height != mask.height || chip.width != mask.width || chip.height != fp.height ||
      chip.width != fp.width) {
    throw Error(ErrorKind::kShape, "chip, mask and footprint shapes disagree for lot '" +
                                       chip.lot_id + "'");
  }
}

bool any_footprint_pixel_in(const UsableMask& mask, const Footprint& fp,
                            std::span<const MaskClass> classes) {
  for (int r = 0; r < fp.height; ++r) {
    for (int c = 0; c < fp.width; ++c) {
      if (!fp.at(r, c)) continue;
      if (std::find(classes.begin(), classes.end(), mask.at(r, c)) != classes.end()) {
        return true;
      }
    }
  }
  return false;
}

bool valid_mask_code(std::uint8_t v) { return v <= 5 || v == 255; }

}  // namespace

ImageChip::ImageChip(std::string lot, std::optional<Date> date, int b, int h, int w,
                     double gsd, GeoTransform gt)
    : lot_id(std::move(lot)),
      capture_date(date),
      bands(b),
      height(h),
      width(w),
      gsd_m(gsd),
      geotransform(gt),
      pixels(static_cast<std::size_t>(b) * h * w, 0.0f) {}

void ImageChip::validate() const {
  require(bands == 4 || bands == 8, "chip band count must be 4 or 8", ErrorKind::kShape);
  require(height > 0 && width > 0, "chip dimensions must be positive", ErrorKind::kShape);
  require(gsd_m > 0.0, "chip gsd must be positive");
  require(pixels.size() == static_cast<std::size_t>(bands) * plane(),
          "chip pixel buffer has wrong length", ErrorKind::kShape);
  for (float v : pixels) require(std::isfinite(v), "chip contains non-finite pixel values");
}

std::size_t Footprint::count() const {
  return static_cast<std::size_t>(std::count(inside.begin(), inside.end(), 1));
}

Footprint::Box Footprint::bounding_box() const {
  int r0 = height, r1 = -1, c0 = width, c1 = -1;
  for (int r = 0; r < height; ++r) {
    for (int c = 0; c < width; ++c) {
      if (!at(r, c)) continue;
      r0 = std::min(r0, r);
      r1 = std::max(r1, r);
      c0 = std::min(c0, c);
      c1 = std::max(c1, c);
    }
  }
  require(r1 >= 0, "footprint is empty");
  return {r0, c0, r1 - r0 + 1, c1 - c0 + 1};
}

void LotImageStack::sort_and_validate() {
  std::sort(entries.begin(), entries.end(), [](const ChipEntry& a, const ChipEntry& b) {
    return a.chip.capture_date < b.chip.capture_date;
  });
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const ImageChip& c = entries[i].chip;
    require(c.capture_date.has_value(), "stack chip without capture date");
    if (i > 0) {
      const ImageChip& p = entries[i - 1].chip;
      require(*p.capture_date < *c.capture_date,
              "duplicate capture date " + c.capture_date->str() + " in lot " + lot_id);
      require(p.bands == c.bands && p.height == c.height && p.width == c.width &&
                  p.gsd_m == c.gsd_m,
              "chips of lot " + lot_id + " differ in shape", ErrorKind::kShape);
    }
  }
}

Footprint rasterize_footprint(const PolygonGeom& polygon, const GeoTransform& gt, int height,
                              int width) {
  Footprint fp{height, width, std::vector<std::uint8_t>(static_cast<std::size_t>(height) * width)};
  for (int r = 0; r < height; ++r) {
    const double lat = gt.pixel_lat(r);
    for (int c = 0; c < width; ++c) {
      fp.inside[static_cast<std::size_t>(r) * width + c] =
          polygon_contains(polygon, gt.pixel_lon(c), lat) ? 1 : 0;
    }
  }
  require(fp.count() > 0, "polygon does not overlap the chip extent");
  return fp;
}

bool coverage_ok(const ImageChip& chip, const UsableMask& mask, const Footprint& footprint) {
  require_same_shape(chip, mask, footprint);
  const MaskClass nodata[] = {MaskClass::kNoData};
  return !any_footprint_pixel_in(mask, footprint, nodata);
}

bool cloud_free(const ImageChip& chip, const UsableMask& mask, const Footprint& footprint,
                std::span<const MaskClass> reject) {
  require_same_shape(chip, mask, footprint);
  return !any_footprint_pixel_in(mask, footprint, reject);
}

ImageChip median_image(std::span<const ImageChip* const> chips) {
  require(chips.size() >= 3, "median image needs at least 3 chips");
  const ImageChip& first = *chips.front();
  for (const ImageChip* c : chips) {
    require(c->bands == first.bands && c->height == first.height && c->width == first.width,
            "median image over chips of different shapes", ErrorKind::kShape);
  }
  ImageChip out(first.lot_id, std::nullopt, first.bands, first.height, first.width,
                first.gsd_m, first.geotransform);
  out.scale_applied = first.scale_applied;
  std::vector<float> values(chips.size());
  const std::size_t n = chips.size();
  for (std::size_t i = 0; i < out.pixels.size(); ++i) {
    for (std::size_t k = 0; k < n; ++k) values[k] = chips[k]->pixels[i];
    std::sort(values.begin(), values.end());
    if (n % 2 == 1) {
      out.pixels[i] = values[n / 2];
    } else {
      out.pixels[i] = static_cast<float>(
          0.5 * (static_cast<double>(values[n / 2 - 1]) + static_cast<double>(values[n / 2])));
    }
  }
  return out;
}

ImageChip median_image(const std::vector<ImageChip>& chips) {
  std::vector<const ImageChip*> ptrs;
  for (const auto& c : chips) ptrs.push_back(&c);
  return median_image(std::span<const ImageChip* const>(ptrs));
}

Histogram luminance_histogram(const ImageChip& chip, const Footprint& footprint, int bins) {
  require(bins > 0, "histogram needs at least one bin");
  require(chip.height == footprint.height && chip.width == footprint.width,
          "footprint shape differs from chip", ErrorKind::kShape);
  Histogram h{std::vector<double>(static_cast<std::size_t>(bins), 0.0)};
  std::size_t n = 0;
  for (int r = 0; r < chip.height; ++r) {
    for (int c = 0; c < chip.width; ++c) {
      if (!footprint.at(r, c)) continue;
      double lum = 0.0;
      for (int b = 0; b < chip.bands; ++b) lum += chip.at(b, r, c);
      lum /= chip.bands;
      int bin = static_cast<int>(std::floor(lum * bins));
      bin = std::clamp(bin, 0, bins - 1);
      h.p[static_cast<std::size_t>(bin)] += 1.0;
      ++n;
    }
  }
  require(n > 0, "histogram over an empty footprint");
  for (double& v : h.p) v /= static_cast<double>(n);
  return h;
}

double histogram_distance(const Histogram& a, const Histogram& b) {
  require(a.p.size() == b.p.size(), "histograms have different bin counts", ErrorKind::kShape);
  double acc = 0.0;
  for (std::size_t i = 0; i < a.p.size(); ++i) acc += std::abs(a.p[i] - b.p[i]);
  return std::min(1.0, 0.5 * acc);
}

std::string_view to_string(RejectReason r) {
  switch (r) {
    case RejectReason::kCoverage:
      return "coverage";
    case RejectReason::kCloud:
      return "cloud";
    case RejectReason::kBrightness:
      return "brightness";
  }
  return "coverage";
}

QcResult qc_pipeline(const LotImageStack& input, const PolygonGeom& polygon,
                     const QcOptions& options) {
  require(!input.entries.empty(), "qc on an empty stack");
  LotImageStack stack = input;
  stack.sort_and_validate();

  QcResult result;
  result.kept.lot_id = stack.lot_id;
  std::vector<QcDecision> decisions;
  std::vector<std::optional<Footprint>> footprints;
  std::vector<std::size_t> survivors;

  for (std::size_t i = 0; i < stack.entries.size(); ++i) {
    const auto& [chip, mask] = stack.entries[i];
    QcDecision d{*chip.capture_date, true, std::nullopt, std::nullopt};
    std::optional<Footprint> fp;
    try {
      fp = rasterize_footprint(polygon, chip.geotransform, chip.height, chip.width);
    } catch (const Error&) {
      fp.reset();
    }
    if (!fp || !coverage_ok(chip, mask, *fp)) {
      d.kept = false;
      d.reason = RejectReason::kCoverage;
    } else if (!cloud_free(chip, mask, *fp, options.cloud_classes)) {
      d.kept = false;
      d.reason = RejectReason::kCloud;
    } else {
      survivors.push_back(i);
    }
    decisions.push_back(d);
    footprints.push_back(std::move(fp));
  }

  if (survivors.size() < 3) {
    result.brightness_skipped = true;
  } else {
    std::vector<const ImageChip*> ptrs;
    for (std::size_t i : survivors) ptrs.push_back(&stack.entries[i].chip);
    const ImageChip median = median_image(std::span<const ImageChip* const>(ptrs));
    const Footprint& ref_fp = *footprints[survivors.front()];
    const Histogram ref = luminance_histogram(median, ref_fp, options.bins);
    for (std::size_t i : survivors) {
      const Histogram h = luminance_histogram(stack.entries[i].chip, *footprints[i], options.bins);
      const double tv = histogram_distance(h, ref);
      decisions[i].tv_distance = tv;
      if (tv > options.tv_threshold) {
        decisions[i].kept = false;
        decisions[i].reason = RejectReason::kBrightness;
      }
    }
  }

  for (std::size_t i = 0; i < stack.entries.size(); ++i) {
    if (decisions[i].kept) result.kept.entries.push_back(stack.entries[i]);
  }
  result.decisions = std::move(decisions);
  return result;
}

std::string qc_record_json(const std::string& lot_id, const QcDecision& d) {
  ojson rec = {{"lot_id", lot_id}, {"date", d.date.str()}, {"kept", d.kept}};
  rec["reason"] = d.reason ? ojson(std::string(to_string(*d.reason))) : ojson(nullptr);
  return rec.dump();
}

std::vector<float> normalize_chip(const ImageChip& chip, const BandStats& stats) {
  require(stats.mean.size() == static_cast<std::size_t>(chip.bands) &&
              stats.stddev.size() == static_cast<std::size_t>(chip.bands),
          "band statistics do not match the chip band count", ErrorKind::kShape);
  for (double s : stats.stddev) require(s > 0.0, "band std must be positive");
  std::vector<float> out(chip.pixels.size());
  const std::size_t plane = chip.plane();
  for (int b = 0; b < chip.bands; ++b) {
    const double m = stats.mean[b];
    const double s = stats.stddev[b];
    for (std::size_t i = 0; i < plane; ++i) {
      const std::size_t k = b * plane + i;
      out[k] = static_cast<float>((static_cast<double>(chip.pixels[k]) - m) / s);
    }
  }
  return out;
}

void BandStatsAccumulator::add(const ImageChip& chip, const Footprint& footprint) {
  require(static_cast<std::size_t>(chip.bands) == sum_.size(), "band count mismatch",
          ErrorKind::kShape);
  for (int r = 0; r < chip.height; ++r) {
    for (int c = 0; c < chip.width; ++c) {
      if (!footprint.at(r, c)) continue;
      for (int b = 0; b < chip.bands; ++b) {
        const double v = chip.at(b, r, c);
        sum_[b] += v;
        sum2_[b] += v * v;
      }
      ++n_;
    }
  }
}

BandStats BandStatsAccumulator::finish() const {
  require(n_ > 0, "no footprint pixels accumulated");
  BandStats s;
  for (std::size_t b = 0; b < sum_.size(); ++b) {
    const double m = sum_[b] / static_cast<double>(n_);
    const double var = std::max(0.0, sum2_[b] / static_cast<double>(n_) - m * m);
    s.mean.push_back(m);
    s.stddev.push_back(std::max(std::sqrt(var), 1e-6));
  }
  return s;
}

// ---------------------------------------------------------------------------

std::string lot_dirname(std::string_view lot_id) {
  require(!lot_id.empty() && lot_id != "." && lot_id != "..", "invalid lot id for chip store");
  std::string out(lot_id);
  std::replace(out.begin(), out.end(), '/', '_');
  return out;
}

std::filesystem::path ChipStore::lot_dir(std::string_view lot_id) const {
  return root_ / "chips" / lot_dirname(lot_id);
}

void ChipStore::write(const ImageChip& chip, const UsableMask& mask) const {
  chip.validate();
  require(chip.capture_date.has_value(), "cannot store a chip without a capture date");
  require(mask.height == chip.height && mask.width == chip.width,
          "mask shape differs from chip", ErrorKind::kShape);
  const auto dir = lot_dir(chip.lot_id);
  const std::string stem = chip.capture_date->str();
  ojson side = {{"lot_id", chip.lot_id},
                {"date", stem},
                {"bands", chip.bands},
                {"height", chip.height},
                {"width", chip.width},
                {"gsd_m", chip.gsd_m},
                {"geotransform",
                 {chip.geotransform.origin_lon, chip.geotransform.origin_lat,
                  chip.geotransform.dlon, chip.geotransform.dlat}},
                {"scale_applied", chip.scale_applied}};
  std::string msk(mask.classes.size(), '\0');
  for (std::size_t i = 0; i < mask.classes.size(); ++i) {
    msk[i] = static_cast<char>(static_cast<std::uint8_t>(mask.classes[i]));
  }
  write_file_atomic(dir / (stem + ".img"), encode_f32_le(chip.pixels));
  write_file_atomic(dir / (stem + ".msk"), msk);
  write_file_atomic(dir / (stem + ".json"), side.dump(2) + "\n");
}

ChipEntry ChipStore::read(std::string_view lot_id, const Date& date) const {
  const auto dir = lot_dir(lot_id);
  const std::string stem = date.str();
  json side;
  try {
    side = json::parse(read_file(dir / (stem + ".json")));
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kParse, "bad sidecar for " + std::string(lot_id) + "/" + stem +
                                       ": " + e.what());
  }
  ChipEntry e;
  ImageChip& chip = e.chip;
  try {
    chip.lot_id = side.at("lot_id").get<std::string>();
    chip.capture_date = Date::parse(side.at("date").get<std::string>());
    chip.bands = side.at("bands").get<int>();
    chip.height = side.at("height").get<int>();
    chip.width = side.at("width").get<int>();
    chip.gsd_m = side.at("gsd_m").get<double>();
    const auto& gt = side.at("geotransform");
    require(gt.is_array() && gt.size() == 4, "geotransform must have 4 numbers",
            ErrorKind::kParse);
    chip.geotransform = {gt[0].get<double>(), gt[1].get<double>(), gt[2].get<double>(),
                         gt[3].get<double>()};
    chip.scale_applied = side.value("scale_applied", 1.0);
  } catch (const json::exception& ex) {
    throw Error(ErrorKind::kParse, "bad sidecar for " + std::string(lot_id) + "/" + stem +
                                       ": " + ex.what());
  }
  chip.pixels = decode_f32_le(read_file(dir / (stem + ".img")));
  if (chip.pixels.size() != static_cast<std::size_t>(chip.bands) * chip.plane()) {
    throw Error(ErrorKind::kIntegrity, "pixel file size mismatch for " + std::string(lot_id) +
                                           "/" + stem);
  }
  chip.validate();
  const std::string msk = read_file(dir / (stem + ".msk"));
  if (msk.size() != chip.plane()) {
    throw Error(ErrorKind::kIntegrity, "mask file size mismatch for " + std::string(lot_id) +
                                           "/" + stem);
  }
  e.mask = UsableMask(chip.height, chip.width);
  for (std::size_t i = 0; i < msk.size(); ++i) {
    const auto v = static_cast<std::uint8_t>(msk[i]);
    require(valid_mask_code(v), "unknown mask class code " + std::to_string(v),
            ErrorKind::kIntegrity);
    e.mask.classes[i] = static_cast<MaskClass>(v);
  }
  return e;
}

std::vector<std::string> ChipStore::lots() const {
  std::vector<std::string> out;
  const auto dir = root_ / "chips";
  if (!std::filesystem::is_directory(dir)) return out;
  for (const auto& ent : std::filesystem::directory_iterator(dir)) {
    if (!ent.is_directory()) continue;
    // The sidecar carries the real id; directory names may be sanitized.
    for (const auto& f : std::filesystem::directory_iterator(ent.path())) {
      if (f.path().extension() == ".json") {
        json side = json::parse(read_file(f.path()));
        out.push_back(side.at("lot_id").get<std::string>());
        break;
      }
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<Date> ChipStore::dates(std::string_view lot_id) const {
  std::vector<Date> out;
  const auto dir = lot_dir(lot_id);
  if (!std::filesystem::is_directory(dir)) return out;
  for (const auto& f : std::filesystem::directory_iterator(dir)) {
    if (f.path().extension() == ".img") out.push_back(Date::parse(f.path().stem().string()));
  }
  std::sort(out.begin(), out.end());
  return out;
}

LotImageStack ChipStore::read_stack(std::string_view lot_id) const {
  LotImageStack s{std::string(lot_id), {}};
  for (const Date& d : dates(lot_id)) s.entries.push_back(read(lot_id, d));
  s.sort_and_validate();
  return s;
}

}  // namespace weakpark
