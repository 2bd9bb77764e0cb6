#include "weakpark/imaging.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numbers>

#include "qc_fixtures.hpp"
#include "test_util.hpp"
#include "weakpark/error.hpp"
#include "weakpark/io.hpp"
#include "weakpark/rng.hpp"

namespace weakpark {
namespace {

using fixtures::kSide;

bool oracle_inside(const std::vector<GeoPoint>& ring, double x, double y) {
  bool in = false;
  for (std::size_t i = 0, j = ring.size() - 1; i < ring.size(); j = i++) {
    const double xi = ring[i].lon, yi = ring[i].lat, xj = ring[j].lon, yj = ring[j].lat;
    if ((yi > y) != (yj > y) && x < (xj - xi) * (y - yi) / (yj - yi) + xi) in = !in;
  }
  return in;
}

ImageChip constant_chip(float v, int h = 8, int w = 8, int bands = 4) {
  ImageChip c("lot", Date::parse("2020-01-04"), bands, h, w, 3.0, fixtures::chip_transform());
  std::fill(c.pixels.begin(), c.pixels.end(), v);
  return c;
}

Footprint full_footprint(int h, int w) {
  Footprint f{h, w, std::vector<std::uint8_t>(static_cast<std::size_t>(h) * w, 1)};
  return f;
}

TEST(Rasterize, WholeChip) {
  auto fp = rasterize_footprint(fixtures::whole_chip(), fixtures::chip_transform(), kSide, kSide);
  EXPECT_EQ(fp.count(), static_cast<std::size_t>(kSide * kSide));
}

TEST(Rasterize, LeftHalf) {
  auto fp = rasterize_footprint(fixtures::pixel_rect(0, 0, kSide, kSide / 2),
                                fixtures::chip_transform(), kSide, kSide);
  for (int r = 0; r < kSide; ++r) {
    for (int c = 0; c < kSide; ++c) EXPECT_EQ(fp.at(r, c), c < kSide / 2) << r << "," << c;
  }
}

TEST(Rasterize, RotatedRectangleMatchesOracle) {
  const GeoTransform gt = fixtures::chip_transform();
  SplitMix64 rng(5);
  for (int t = 0; t < 20; ++t) {
    const double cx = gt.pixel_lon(rng.uniform(5, 15)), cy = gt.pixel_lat(rng.uniform(5, 15));
    const double ang = rng.uniform(0, std::numbers::pi);
    const double hw = rng.uniform(2, 8) * gt.dlon, hh = rng.uniform(2, 8) * gt.dlon;
    PolygonGeom p;
    for (auto [sx, sy] : {std::pair{-1, -1}, {1, -1}, {1, 1}, {-1, 1}}) {
      p.exterior.push_back({cx + sx * hw * std::cos(ang) - sy * hh * std::sin(ang),
                            cy + sx * hw * std::sin(ang) + sy * hh * std::cos(ang)});
    }
    auto fp = rasterize_footprint(p, gt, kSide, kSide);
    std::size_t expected = 0;
    for (int r = 0; r < kSide; ++r) {
      for (int c = 0; c < kSide; ++c) {
        const bool in = oracle_inside(p.exterior, gt.pixel_lon(c), gt.pixel_lat(r));
        expected += in;
        EXPECT_EQ(fp.at(r, c), in);
      }
    }
    EXPECT_EQ(fp.count(), expected);
  }
}

TEST(Rasterize, DisjointPolygonThrows) {
  EXPECT_THROW(rasterize_footprint(fixtures::pixel_rect(100, 100, 110, 110),
                                   fixtures::chip_transform(), kSide, kSide),
               Error);
}

TEST(Coverage, FootprintScoped) {
  auto chip = constant_chip(0.3f, kSide, kSide);
  auto fp = rasterize_footprint(fixtures::pixel_rect(5, 5, 15, 15), fixtures::chip_transform(), kSide, kSide);
  UsableMask m(kSide, kSide);
  EXPECT_TRUE(coverage_ok(chip, m, fp));
  m.at(0, 0) = MaskClass::kNoData;
  EXPECT_TRUE(coverage_ok(chip, m, fp));
  m.at(10, 10) = MaskClass::kNoData;
  EXPECT_FALSE(coverage_ok(chip, m, fp));
}

TEST(CloudFree, DefaultRejectSet) {
  auto chip = constant_chip(0.3f, kSide, kSide);
  auto fp = rasterize_footprint(fixtures::pixel_rect(5, 5, 15, 15), fixtures::chip_transform(), kSide, kSide);
  UsableMask m(kSide, kSide);
  m.at(7, 7) = MaskClass::kLightHaze;
  m.at(7, 8) = MaskClass::kSnow;
  EXPECT_TRUE(cloud_free(chip, m, fp));
  m.at(0, 19) = MaskClass::kCloud;
  EXPECT_TRUE(cloud_free(chip, m, fp));
  for (MaskClass bad : {MaskClass::kCloud, MaskClass::kHeavyHaze, MaskClass::kShadow}) {
    UsableMask m2 = m;
    m2.at(12, 9) = bad;
    EXPECT_FALSE(cloud_free(chip, m2, fp));
  }
  const std::array<MaskClass, 1> custom{MaskClass::kLightHaze};
  EXPECT_FALSE(cloud_free(chip, m, fp, custom));
}

TEST(Median, Robustness) {
  std::vector<ImageChip> cs = {constant_chip(0.01f), constant_chip(0.02f), constant_chip(1.0f)};
  auto m = median_image(cs);
  for (float v : m.pixels) EXPECT_FLOAT_EQ(v, 0.02f);
  EXPECT_FALSE(m.capture_date.has_value());
}

TEST(Median, EvenCountAveragesMiddle) {
  std::vector<ImageChip> cs = {constant_chip(0.4f), constant_chip(0.1f), constant_chip(0.3f),
                               constant_chip(0.2f)};
  auto m = median_image(cs);
  for (float v : m.pixels) EXPECT_FLOAT_EQ(v, 0.25f);
}

TEST(Median, IdenticalStackIsIdempotent) {
  SplitMix64 rng(1);
  ImageChip c = constant_chip(0.0f);
  for (auto& v : c.pixels) v = static_cast<float>(rng.uniform());
  auto m = median_image(std::vector<ImageChip>{c, c, c});
  EXPECT_EQ(m.pixels, c.pixels);
}

TEST(Median, NeedsThree) {
  EXPECT_THROW(median_image(std::vector<ImageChip>{constant_chip(0.1f), constant_chip(0.2f)}), Error);
}

TEST(Median, PermutationInvariantAndBounded) {
  SplitMix64 rng(9);
  std::vector<ImageChip> cs(5, constant_chip(0.0f));
  for (auto& c : cs) {
    for (auto& v : c.pixels) v = static_cast<float>(rng.uniform());
  }
  const auto m = median_image(cs);
  std::vector<ImageChip> perm = cs;
  fisher_yates(perm, rng);
  EXPECT_EQ(median_image(perm).pixels, m.pixels);
  for (std::size_t i = 0; i < m.pixels.size(); ++i) {
    float lo = 1, hi = 0;
    for (const auto& c : cs) {
      lo = std::min(lo, c.pixels[i]);
      hi = std::max(hi, c.pixels[i]);
    }
    EXPECT_GE(m.pixels[i], lo);
    EXPECT_LE(m.pixels[i], hi);
  }
}

TEST(Histogram, ConstantIsOneHot) {
  auto h = luminance_histogram(constant_chip(0.5f), full_footprint(8, 8));
  ASSERT_EQ(h.bins(), 64);
  for (int i = 0; i < 64; ++i) EXPECT_EQ(h.p[i], i == 32 ? 1.0 : 0.0);
}

TEST(Histogram, TwoValues) {
  auto chip = constant_chip(0.1f);
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 8; ++c) {
      for (int b = 0; b < 4; ++b) chip.at(b, r, c) = 0.9f;
    }
  }
  auto h = luminance_histogram(chip, full_footprint(8, 8));
  EXPECT_DOUBLE_EQ(h.p[6], 0.5);
  EXPECT_DOUBLE_EQ(h.p[57], 0.5);
}

TEST(Histogram, TopValueClampsToLastBin) {
  auto h = luminance_histogram(constant_chip(1.0f), full_footprint(8, 8));
  EXPECT_EQ(h.p[63], 1.0);
}

TEST(Histogram, MatchesBinningOracle) {
  SplitMix64 rng(77);
  for (int t = 0; t < 20; ++t) {
    auto chip = constant_chip(0.0f, 12, 12);
    for (auto& v : chip.pixels) v = static_cast<float>(rng.uniform());
    auto fp = rasterize_footprint(fixtures::pixel_rect(1, 2, 10, 11), fixtures::chip_transform(), 12, 12);
    auto h = luminance_histogram(chip, fp);
    double sum = 0;
    for (double p : h.p) sum += p;
    EXPECT_NEAR(sum, 1.0, 1e-9);
    // Against a chip of zeros: TV = 1 - p(bin 0) for both implementations.
    auto zero = constant_chip(0.0f, 12, 12);
    EXPECT_NEAR(histogram_distance(h, luminance_histogram(zero, fp)), fixtures::oracle_tv(chip, zero, fp), 1e-12);
  }
}

TEST(HistogramDistance, Examples) {
  Histogram a{std::vector<double>(64, 0.0)}, b{std::vector<double>(64, 0.0)};
  a.p[0] = 1;
  b.p[5] = 1;
  EXPECT_EQ(histogram_distance(a, a), 0.0);
  EXPECT_EQ(histogram_distance(a, b), 1.0);
  Histogram c{std::vector<double>(64, 0.0)}, d{std::vector<double>(64, 0.0)};
  c.p[0] = c.p[1] = 0.5;
  d.p[1] = d.p[2] = 0.5;
  EXPECT_DOUBLE_EQ(histogram_distance(c, d), 0.5);
  Histogram short_h{std::vector<double>(8, 0.125)};
  EXPECT_THROW(histogram_distance(a, short_h), Error);
}

TEST(HistogramDistance, IsAMetric) {
  SplitMix64 rng(4);
  auto random_hist = [&] {
    Histogram h{std::vector<double>(64)};
    double s = 0;
    for (auto& p : h.p) s += (p = rng.uniform());
    for (auto& p : h.p) p /= s;
    return h;
  };
  for (int t = 0; t < 200; ++t) {
    auto x = random_hist(), y = random_hist(), z = random_hist();
    const double xy = histogram_distance(x, y);
    EXPECT_EQ(xy, histogram_distance(y, x));
    EXPECT_EQ(histogram_distance(x, x), 0.0);
    EXPECT_GT(xy, 0.0);
    EXPECT_LE(xy, histogram_distance(x, z) + histogram_distance(z, y) + 1e-12);
    EXPECT_LE(xy, 1.0);
  }
}

LotImageStack clean_stack(int n) {
  LotImageStack s;
  s.lot_id = "qc-lot";
  for (int i = 0; i < n; ++i) {
    s.entries.push_back({fixtures::banded_chip(Date::parse("2021-06-05").plus_days(7 * i), 0),
                         UsableMask(kSide, kSide)});
  }
  return s;
}

TEST(QcPipeline, CleanChipsAllKept) {
  auto res = qc_pipeline(clean_stack(5), fixtures::whole_chip());
  EXPECT_EQ(res.kept.entries.size(), 5u);
  for (const auto& d : res.decisions) EXPECT_TRUE(d.kept);
  EXPECT_FALSE(res.brightness_skipped);
}

TEST(QcPipeline, NoDataRejectedForCoverage) {
  auto s = clean_stack(5);
  s.entries[2].mask.at(3, 3) = MaskClass::kNoData;
  s.entries[2].mask.at(4, 4) = MaskClass::kCloud;
  auto res = qc_pipeline(s, fixtures::whole_chip());
  EXPECT_EQ(res.kept.entries.size(), 4u);
  EXPECT_FALSE(res.decisions[2].kept);
  EXPECT_EQ(res.decisions[2].reason, RejectReason::kCoverage);
}

TEST(QcPipeline, CloudInsideRejectedOutsideKept) {
  auto s = clean_stack(5);
  s.entries[1].mask.at(10, 10) = MaskClass::kCloud;
  auto res = qc_pipeline(s, fixtures::pixel_rect(5, 5, 15, 15));
  EXPECT_EQ(res.decisions[1].reason, RejectReason::kCloud);
  auto s2 = clean_stack(5);
  s2.entries[1].mask.at(0, 0) = MaskClass::kCloud;
  EXPECT_TRUE(qc_pipeline(s2, fixtures::pixel_rect(5, 5, 15, 15)).decisions[1].kept);
}

TEST(QcPipeline, BrightnessFixture) {
  const auto stack = fixtures::brightness_stack();
  const auto fp = rasterize_footprint(fixtures::whole_chip(), fixtures::chip_transform(), kSide, kSide);
  const auto& base = stack.entries[0].chip;
  EXPECT_NEAR(fixtures::oracle_tv(stack.entries[1].chip, base, fp), 0.3, 1e-12);
  EXPECT_NEAR(fixtures::oracle_tv(stack.entries[3].chip, base, fp), 0.15, 1e-12);
  auto res = qc_pipeline(stack, fixtures::whole_chip());
  EXPECT_FALSE(res.decisions[1].kept);
  EXPECT_EQ(res.decisions[1].reason, RejectReason::kBrightness);
  EXPECT_NEAR(res.decisions[1].tv_distance.value(), 0.3, 1e-12);
  EXPECT_TRUE(res.decisions[3].kept);
  EXPECT_NEAR(res.decisions[3].tv_distance.value(), 0.15, 1e-12);
  EXPECT_EQ(res.kept.entries.size(), 4u);
}

TEST(QcPipeline, FewerThanThreeSkipsBrightness) {
  auto s = fixtures::brightness_stack();
  s.entries.resize(2);
  auto res = qc_pipeline(s, fixtures::whole_chip());
  EXPECT_TRUE(res.brightness_skipped);
  EXPECT_EQ(res.kept.entries.size(), 2u);
}

TEST(QcPipeline, InputOrderIndependent) {
  auto s = fixtures::brightness_stack();
  s.entries[4].mask.at(1, 1) = MaskClass::kShadow;
  auto a = qc_pipeline(s, fixtures::whole_chip());
  std::reverse(s.entries.begin(), s.entries.end());
  auto b = qc_pipeline(s, fixtures::whole_chip());
  ASSERT_EQ(a.decisions.size(), b.decisions.size());
  for (std::size_t i = 0; i < a.decisions.size(); ++i) {
    EXPECT_EQ(a.decisions[i].date, b.decisions[i].date);
    EXPECT_EQ(a.decisions[i].kept, b.decisions[i].kept);
    EXPECT_EQ(a.decisions[i].reason, b.decisions[i].reason);
  }
}

TEST(QcPipeline, DuplicateDatesRejected) {
  auto s = clean_stack(3);
  s.entries[1].chip.capture_date = s.entries[0].chip.capture_date;
  EXPECT_THROW(qc_pipeline(s, fixtures::whole_chip()), Error);
}

TEST(Normalize, Examples) {
  auto chip = constant_chip(0.0f, 4, 4);
  SplitMix64 rng(8);
  for (auto& v : chip.pixels) v = static_cast<float>(rng.uniform());
  BandStats id{{0, 0, 0, 0}, {1, 1, 1, 1}};
  auto n = normalize_chip(chip, id);
  for (std::size_t i = 0; i < n.size(); ++i) EXPECT_EQ(n[i], chip.pixels[i]);

  BandStats st{{0.1, 0.2, 0.3, 0.4}, {0.5, 0.25, 2.0, 1.5}};
  n = normalize_chip(chip, st);
  for (int b = 0; b < 4; ++b) {
    for (int r = 0; r < 4; ++r) {
      for (int c = 0; c < 4; ++c) {
        EXPECT_NEAR(n[b * 16 + r * 4 + c], (chip.at(b, r, c) - st.mean[b]) / st.stddev[b], 1e-6);
      }
    }
  }
  auto means = constant_chip(0.0f, 4, 4);
  for (int b = 0; b < 4; ++b) {
    for (int i = 0; i < 16; ++i) means.pixels[b * 16 + i] = static_cast<float>(st.mean[b]);
  }
  for (float v : normalize_chip(means, st)) EXPECT_NEAR(v, 0.0f, 1e-7);
  EXPECT_THROW(normalize_chip(chip, BandStats{{0, 0, 0, 0}, {1, 0, 1, 1}}), Error);
}

TEST(BandStats, MatchesDirectComputation) {
  SplitMix64 rng(12);
  auto chip = constant_chip(0.0f, kSide, kSide);
  for (auto& v : chip.pixels) v = static_cast<float>(rng.uniform());
  auto fp = rasterize_footprint(fixtures::pixel_rect(2, 3, 9, 17), fixtures::chip_transform(), kSide, kSide);
  BandStatsAccumulator acc(4);
  acc.add(chip, fp);
  const auto st = acc.finish();
  for (int b = 0; b < 4; ++b) {
    double s = 0, s2 = 0, n = 0;
    for (int r = 0; r < kSide; ++r) {
      for (int c = 0; c < kSide; ++c) {
        if (!fp.at(r, c)) continue;
        s += chip.at(b, r, c);
        n += 1;
      }
    }
    const double mean = s / n;
    for (int r = 0; r < kSide; ++r) {
      for (int c = 0; c < kSide; ++c) {
        if (fp.at(r, c)) s2 += (chip.at(b, r, c) - mean) * (chip.at(b, r, c) - mean);
      }
    }
    EXPECT_NEAR(st.mean[b], mean, 1e-12);
    EXPECT_NEAR(st.stddev[b], std::sqrt(s2 / n), 1e-9);
  }
}

TEST(ChipValidation, Invariants) {
  auto c = constant_chip(0.5f);
  EXPECT_NO_THROW(c.validate());
  c.pixels[3] = std::nanf("");
  EXPECT_THROW(c.validate(), Error);
  auto c3 = constant_chip(0.5f, 4, 4, 3);
  EXPECT_THROW(c3.validate(), Error);
  EXPECT_NO_THROW(constant_chip(0.5f, 4, 4, 8).validate());
}

TEST(ChipStore, RoundTripIsBitwise) {
  const auto dir = fresh_temp_dir("chipstore");
  ChipStore store(dir);
  SplitMix64 rng(21);
  auto chip = constant_chip(0.0f, 9, 7);
  chip.lot_id = "way/123";
  for (auto& v : chip.pixels) v = static_cast<float>(rng.uniform());
  chip.pixels[0] = std::nextafter(0.0f, 1.0f);
  UsableMask m(9, 7);
  m.at(2, 3) = MaskClass::kHeavyHaze;
  m.at(8, 6) = MaskClass::kNoData;
  store.write(chip, m);
  auto e = store.read("way/123", *chip.capture_date);
  EXPECT_EQ(std::memcmp(e.chip.pixels.data(), chip.pixels.data(), chip.pixels.size() * 4), 0);
  EXPECT_EQ(e.mask.classes, m.classes);
  EXPECT_EQ(e.chip.geotransform, chip.geotransform);
  EXPECT_EQ(e.chip.gsd_m, chip.gsd_m);
  EXPECT_EQ(store.lots(), std::vector<std::string>{"way/123"});
  EXPECT_EQ(store.dates("way/123"), std::vector<Date>{*chip.capture_date});
  EXPECT_THROW(store.read("way/123", Date::parse("1999-01-01")), Error);
}

TEST(ChipStore, TruncatedRasterIsIntegrityError) {
  const auto dir = fresh_temp_dir("chipstore_trunc");
  ChipStore store(dir);
  auto chip = constant_chip(0.25f, 4, 4);
  store.write(chip, UsableMask(4, 4));
  const auto img = store.lot_dir("lot") / "2020-01-04.img";
  ASSERT_TRUE(std::filesystem::exists(img));
  std::filesystem::resize_file(img, 10);
  try {
    store.read("lot", *chip.capture_date);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kIntegrity);
  }
}

}  // namespace
}  // namespace weakpark
