#include "weakpark/pairnet.hpp"

#include <gtest/gtest.h>
#include <json.hpp>

#include <cmath>
#include <set>

#include "net_oracles.hpp"
#include "test_util.hpp"
#include "weakpark/error.hpp"
#include "weakpark/io.hpp"
#include "weakpark/pipeline.hpp"
#include "weakpark/rng.hpp"
#include "weakpark/synthscene.hpp"

namespace weakpark {
namespace {

using oracle::random_input;
using oracle::small_config;

template <typename T>
PairNetParams<T> random_params(const EncoderConfig& cfg, std::uint64_t seed) {
  PairNetParams<T> p(cfg);
  init_kaiming(p, seed);
  SplitMix64 rng(seed ^ 0xb1a5);
  for (const auto& s : p.layout()) {
    if (s.shape.size() != 1) continue;
    for (auto& v : p.tensor(s.name)) v = static_cast<T>(0.1 * rng.normal());
  }
  return p;
}

std::vector<float> to_float(const std::vector<double>& x) { return {x.begin(), x.end()}; }

TEST(Layout, ManifestOrderAndSharedEncoder) {
  const auto layout = parameter_layout(EncoderConfig{});
  std::vector<std::string> names;
  for (const auto& s : layout) names.push_back(s.name);
  EXPECT_EQ(names, (std::vector<std::string>{
                       "encoder.conv0.weight", "encoder.conv0.bias", "encoder.conv1.weight",
                       "encoder.conv1.bias", "encoder.conv2.weight", "encoder.conv2.bias",
                       "encoder.conv3.weight", "encoder.conv3.bias", "encoder.proj.weight",
                       "encoder.proj.bias", "head.fc1.weight", "head.fc1.bias",
                       "head.fc2.weight", "head.fc2.bias"}));
  EXPECT_EQ(layout[0].shape, (std::vector<int>{16, 4, 3, 3}));
  EXPECT_EQ(layout[8].shape, (std::vector<int>{128, 128}));
  EXPECT_EQ(layout[10].shape, (std::vector<int>{64, 128}));
  EXPECT_EQ(layout[12].shape, (std::vector<int>{1, 64}));
  std::size_t off = 0;
  for (const auto& s : layout) {
    EXPECT_EQ(s.offset, off);
    off += s.size;
  }
}

TEST(Config, Validation) {
  EncoderConfig c;
  c.embedding_dim = 64;
  EXPECT_THROW(c.validate(), Error);
  EncoderConfig d;
  d.side = 8;
  EXPECT_THROW(d.validate(), Error);
  d.side = 16;
  EXPECT_NO_THROW(d.validate());
}

TEST(Init, KaimingScaleAndZeroBias) {
  PairNetParams<double> p;
  init_kaiming(p, 3);
  for (const auto& s : p.layout()) {
    auto t = p.tensor(s.name);
    if (s.shape.size() == 1) {
      for (double v : t) EXPECT_EQ(v, 0.0);
      continue;
    }
    std::size_t fan_in = s.size / static_cast<std::size_t>(s.shape[0]);
    double ss = 0;
    for (double v : t) ss += v * v;
    const double sd = std::sqrt(ss / t.size());
    if (t.size() >= 1000) EXPECT_NEAR(sd, std::sqrt(2.0 / fan_in), 0.1 * std::sqrt(2.0 / fan_in)) << s.name;
  }
  PairNetParams<double> q;
  init_kaiming(q, 3);
  EXPECT_TRUE(p == q);
}

TEST(Forward, MatchesNaiveOracleDefaultConfig) {
  const EncoderConfig cfg;
  auto p = random_params<double>(cfg, 17);
  SplitMix64 rng(2);
  for (int t = 0; t < 3; ++t) {
    const auto x = random_input(cfg, rng);
    const auto fast = encode(p, std::span<const double>(x));
    const auto slow = oracle::naive_encode(p, std::span<const double>(x));
    for (std::size_t i = 0; i < fast.size(); ++i) {
      EXPECT_NEAR(fast[i], slow[i], 1e-6 * std::max(1.0, std::abs(slow[i])));
    }
  }
}

TEST(Forward, FloatMatchesNaiveOracle) {
  const EncoderConfig cfg;
  auto p = random_params<float>(cfg, 19);
  SplitMix64 rng(3);
  const auto x = to_float(random_input(cfg, rng));
  const auto fast = encode(p, std::span<const float>(x));
  const auto slow = oracle::naive_encode(p, std::span<const float>(x));
  for (std::size_t i = 0; i < fast.size(); ++i) {
    EXPECT_NEAR(fast[i], slow[i], 1e-4 * std::max(1.0, std::abs(slow[i])));
  }
}

TEST(Forward, DeterministicAndShapeChecked) {
  const auto cfg = small_config();
  auto p = random_params<float>(cfg, 5);
  SplitMix64 rng(4);
  const auto x = to_float(random_input(cfg, rng));
  EXPECT_EQ(encode(p, std::span<const float>(x)), encode(p, std::span<const float>(x)));
  std::vector<float> wrong(10);
  EXPECT_THROW(encode(p, std::span<const float>(wrong)), Error);
}

TEST(Forward, ZeroConvGivesProjectionBias) {
  const auto cfg = small_config();
  auto p = random_params<double>(cfg, 8);
  for (const auto& s : p.layout()) {
    if (s.name.rfind("encoder.conv", 0) == 0) {
      for (auto& v : p.tensor(s.name)) v = 0.0;
    }
  }
  SplitMix64 rng(1);
  const auto x = random_input(cfg, rng);
  const auto e = encode(p, std::span<const double>(x));
  const auto bias = p.tensor("encoder.proj.bias");
  for (std::size_t i = 0; i < e.size(); ++i) EXPECT_EQ(e[i], bias[i]);
}

TEST(Score, MatchesNaiveOracle) {
  const auto cfg = small_config();
  auto p = random_params<double>(cfg, 23);
  SplitMix64 rng(6);
  for (int t = 0; t < 10; ++t) {
    const auto a = random_input(cfg, rng), b = random_input(cfg, rng);
    EXPECT_NEAR(score_pair(p, std::span<const double>(a), std::span<const double>(b)),
                oracle::naive_score(p, std::span<const double>(a), std::span<const double>(b)), 1e-6);
  }
}

TEST(Score, DiagonalConstancy) {
  const auto cfg = small_config();
  auto p = random_params<float>(cfg, 29);
  std::vector<double> zero(cfg.embedding_dim, 0.0);
  const double expect = 1.0 / (1.0 + std::exp(-std::clamp(oracle::naive_head(p, zero), -30.0, 30.0)));
  SplitMix64 rng(7);
  for (int t = 0; t < 50; ++t) {
    const auto x = to_float(random_input(cfg, rng));
    EXPECT_NEAR(score_pair(p, std::span<const float>(x), std::span<const float>(x)), expect, 1e-6);
  }
}

TEST(Score, ZeroHeadIsHalf) {
  const auto cfg = small_config();
  auto p = random_params<float>(cfg, 31);
  for (const auto& s : p.layout()) {
    if (s.name.rfind("head.", 0) == 0) {
      for (auto& v : p.tensor(s.name)) v = 0.0f;
    }
  }
  SplitMix64 rng(8);
  for (int t = 0; t < 10; ++t) {
    const auto a = to_float(random_input(cfg, rng)), b = to_float(random_input(cfg, rng));
    EXPECT_EQ(score_pair(p, std::span<const float>(a), std::span<const float>(b)), 0.5);
  }
}

TEST(Score, SymmetrizedIdentities) {
  const auto cfg = small_config();
  auto p = random_params<float>(cfg, 37);
  SplitMix64 rng(9);
  for (int t = 0; t < 20; ++t) {
    const auto a = to_float(random_input(cfg, rng)), b = to_float(random_input(cfg, rng));
    std::span<const float> sa(a), sb(b);
    const double ab = symmetrized_score(p, sa, sb), ba = symmetrized_score(p, sb, sa);
    EXPECT_NEAR(ab + ba, 1.0, 1e-12);
    EXPECT_DOUBLE_EQ(ab, 0.5 * (score_pair(p, sa, sb) + 1.0 - score_pair(p, sb, sa)));
    EXPECT_NEAR(symmetrized_score(p, sa, sa), 0.5, 1e-15);
  }
}

TEST(Score, WeightSharingIsStructural) {
  const auto cfg = small_config();
  auto p = random_params<double>(cfg, 41);
  SplitMix64 rng(10);
  const auto a = random_input(cfg, rng), b = random_input(cfg, rng);
  std::span<const double> sa(a), sb(b);
  // Both branches read the one encoder: head(e(a)-e(b)) == -head-symmetric recomputation.
  const auto ea = encode(p, sa), eb = encode(p, sb);
  std::vector<double> d(ea.size());
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = ea[i] - eb[i];
  EXPECT_NEAR(pair_logit(p, sa, sb), oracle::naive_head(p, d), 1e-9);
  p.tensor("encoder.conv1.weight")[3] += 0.5;
  const auto ea2 = encode(p, sa);
  EXPECT_NE(ea2, ea);
  std::vector<double> d2(ea.size());
  const auto eb2 = encode(p, sb);
  for (std::size_t i = 0; i < d2.size(); ++i) d2[i] = ea2[i] - eb2[i];
  EXPECT_NEAR(pair_logit(p, sa, sb), oracle::naive_head(p, d2), 1e-9);
}

TEST(Loss, Examples) {
  EXPECT_NEAR(bce_loss(0.5, 0), std::log(2.0), 1e-12);
  EXPECT_NEAR(bce_loss(0.5, 1), 0.693147, 1e-6);
  EXPECT_NEAR(bce_loss(0.9, 0), 2.302585, 1e-6);
  double prev = 1e9;
  for (double z = 0; z <= 40; z += 1) {
    const double l = bce_from_logit(clamp_logit(z), 1);
    EXPECT_GE(l, 0.0);
    EXPECT_LE(l, prev);
    prev = l;
  }
  EXPECT_LT(prev, 1e-12);
  EXPECT_TRUE(std::isfinite(bce_from_logit(clamp_logit(-1e6), 1)));
}

TEST(PredictLabel, StrictThreshold) {
  EXPECT_EQ(predict_label(0.7), 1);
  EXPECT_EQ(predict_label(0.3), 0);
  EXPECT_EQ(predict_label(0.5), 0);
  EXPECT_EQ(predict_label(std::nextafter(0.5, 1.0)), 1);
}

std::vector<PairExample<double>> make_batch(const std::vector<std::vector<double>>& xs) {
  std::vector<PairExample<double>> batch;
  for (std::size_t i = 0; i + 1 < xs.size(); i += 2) {
    batch.push_back({xs[i], xs[i + 1], static_cast<int>((i / 2) % 2)});
  }
  return batch;
}

TEST(Gradient, ZeroHeadBiasClosedForm) {
  const auto cfg = small_config();
  auto p = random_params<double>(cfg, 43);
  for (const auto& s : p.layout()) {
    if (s.name.rfind("head.", 0) == 0) {
      for (auto& v : p.tensor(s.name)) v = 0.0;
    }
  }
  SplitMix64 rng(11);
  std::vector<std::vector<double>> xs;
  for (int i = 0; i < 6; ++i) xs.push_back(random_input(cfg, rng));
  std::vector<PairExample<double>> batch = {{xs[0], xs[1], 1}, {xs[2], xs[3], 1}, {xs[4], xs[5], 0}};
  auto lg = batch_loss_and_grad(p, std::span<const PairExample<double>>(batch));
  const double expect = (-0.5 - 0.5 + 0.5) / 3.0;
  EXPECT_NEAR(lg.grad[p.layout().back().offset], expect, 1e-15);
  EXPECT_NEAR(lg.loss, std::log(2.0), 1e-12);
}

TEST(Gradient, DuplicatedPairSameAsSingle) {
  const auto cfg = small_config();
  auto p = random_params<double>(cfg, 47);
  SplitMix64 rng(12);
  const auto a = random_input(cfg, rng), b = random_input(cfg, rng);
  std::vector<PairExample<double>> one = {{a, b, 1}}, two = {{a, b, 1}, {a, b, 1}};
  auto g1 = batch_loss_and_grad(p, std::span<const PairExample<double>>(one));
  auto g2 = batch_loss_and_grad(p, std::span<const PairExample<double>>(two));
  for (std::size_t i = 0; i < g1.grad.size(); ++i) EXPECT_NEAR(g1.grad[i], g2.grad[i], 1e-15);
}

void expect_gradients_match(std::uint64_t seed, double input_scale, double step) {
  const auto cfg = small_config();
  auto p = random_params<double>(cfg, seed);
  SplitMix64 rng(seed + 1);
  std::vector<std::vector<double>> xs;
  for (int i = 0; i < 8; ++i) xs.push_back(random_input(cfg, rng, input_scale));
  const auto batch = make_batch(xs);
  const auto r = oracle::gradient_check(p, std::span<const PairExample<double>>(batch), step,
                                        oracle::kGradCheckFloor);
  EXPECT_EQ(r.n_checked, p.size());
  EXPECT_LT(r.max_rel_error, 1e-4) << r.worst_tensor << "[" << r.worst_index << "] bp=" << r.worst_backprop
                                   << " fd=" << r.worst_fd;
}

TEST(Gradient, FiniteDifferenceEveryParameter) {
  for (std::uint64_t seed : {53, 54, 55}) expect_gradients_match(seed, oracle::kGradCheckInputScale, 1e-3);
}

TEST(Gradient, FiniteDifferenceUnitScaleInputs) {
  expect_gradients_match(56, 1.0, 1e-4);
}

TEST(Gradient, ThreadCountDoesNotChangeBits) {
  const auto cfg = small_config();
  auto p = random_params<float>(cfg, 59);
  SplitMix64 rng(14);
  std::vector<std::vector<float>> xs;
  for (int i = 0; i < 14; ++i) xs.push_back(to_float(random_input(cfg, rng)));
  std::vector<PairExample<float>> batch;
  for (int i = 0; i < 14; i += 2) batch.push_back({xs[i], xs[i + 1], i % 4 == 0});
  auto g1 = batch_loss_and_grad(p, std::span<const PairExample<float>>(batch), 1);
  auto g3 = batch_loss_and_grad(p, std::span<const PairExample<float>>(batch), 3);
  EXPECT_EQ(g1.grad, g3.grad);
  EXPECT_EQ(g1.loss, g3.loss);
}

struct SynthData {
  std::vector<std::vector<float>> inputs;
  std::vector<PairExample<float>> examples;
};

// 25 small lots x 4 weekends x both orders = 200 pairs at side 16.
SynthData synth_pairs() {
  SynthData d;
  std::vector<std::tuple<std::size_t, std::size_t, int>> idx;
  for (int lot = 0; lot < 25; ++lot) {
    const auto geom = sample_lot_geometry(SizeClass::kSmall, 100 + lot);
    const auto s = gen_weekend_series("L" + std::to_string(lot), geom, 4, 0.0, 500 + lot);
    const auto fp = rasterize_footprint(s.polygon, s.chips[0].chip.geotransform, s.chips[0].chip.height,
                                        s.chips[0].chip.width);
    const BandStats st{{0.3, 0.3, 0.3, 0.3}, {0.1, 0.1, 0.1, 0.1}};
    const std::size_t base = d.inputs.size();
    for (const auto& c : s.chips) {
      d.inputs.push_back(prepare_input(normalize_chip(c.chip, st), 4, fp, 16));
    }
    for (std::size_t w = 0; w < s.chips.size(); w += 2) {
      idx.emplace_back(base + w, base + w + 1, 1);
      idx.emplace_back(base + w + 1, base + w, 0);
    }
  }
  for (auto [a, b, y] : idx) d.examples.push_back({d.inputs[a], d.inputs[b], y});
  return d;
}

TEST(Train, ZeroEpochsLeavesParams) {
  const auto data = synth_pairs();
  auto p = random_params<float>(small_config(), 61);
  const auto before = p;
  TrainConfig tc;
  tc.epochs = 0;
  auto h = train(p, std::span<const PairExample<float>>(data.examples), tc);
  EXPECT_TRUE(h.epochs.empty());
  EXPECT_TRUE(p == before);
}

TEST(Train, DeterministicAndLossDecreases) {
  const auto data = synth_pairs();
  ASSERT_EQ(data.examples.size(), 200u);
  TrainConfig tc;
  tc.epochs = 10;
  tc.seed = 3;
  PairNetParams<float> p1(small_config()), p2(small_config());
  init_kaiming(p1, 3);
  init_kaiming(p2, 3);
  const double initial = mean_loss(p1, std::span<const PairExample<float>>(data.examples));
  auto h1 = train(p1, std::span<const PairExample<float>>(data.examples), tc);
  tc.threads = 2;
  auto h2 = train(p2, std::span<const PairExample<float>>(data.examples), tc);
  EXPECT_TRUE(p1 == p2);
  ASSERT_EQ(h1.epochs.size(), 10u);
  for (std::size_t i = 0; i < h1.epochs.size(); ++i) EXPECT_EQ(h1.epochs[i].mean_loss, h2.epochs[i].mean_loss);
  EXPECT_LT(mean_loss(p1, std::span<const PairExample<float>>(data.examples)), initial);
  EXPECT_LT(h1.epochs.back().mean_loss, h1.epochs.front().mean_loss);
}

TEST(Train, RejectsEmptyData) {
  auto p = random_params<float>(small_config(), 1);
  std::vector<PairExample<float>> none;
  EXPECT_THROW(train(p, std::span<const PairExample<float>>(none), TrainConfig{}), Error);
}

Footprint box_footprint(int h, int w, int r0, int c0, int rows, int cols) {
  Footprint f{h, w, std::vector<std::uint8_t>(static_cast<std::size_t>(h) * w, 0)};
  for (int r = r0; r < r0 + rows; ++r) {
    for (int c = c0; c < c0 + cols; ++c) f.inside[static_cast<std::size_t>(r) * w + c] = 1;
  }
  return f;
}

TEST(PrepareInput, IdentityWhenBoxIsTarget) {
  SplitMix64 rng(15);
  const int H = 20, W = 20, S = 8;
  std::vector<float> chip(2 * H * W);
  for (auto& v : chip) v = static_cast<float>(rng.normal());
  auto fp = box_footprint(H, W, 3, 5, S, S);
  fp.inside[static_cast<std::size_t>(4) * W + 6] = 0;  // a hole is zeroed but keeps the box
  const auto out = prepare_input(chip, 2, fp, S);
  for (int b = 0; b < 2; ++b) {
    for (int r = 0; r < S; ++r) {
      for (int c = 0; c < S; ++c) {
        const float expect = (r == 1 && c == 1) ? 0.0f : chip[b * H * W + (r + 3) * W + (c + 5)];
        EXPECT_EQ(out[b * S * S + r * S + c], expect);
      }
    }
  }
}

TEST(PrepareInput, DownsampleMatchesBilinearOracle) {
  SplitMix64 rng(16);
  const int S = 6, H = 2 * S + 4, W = 2 * S + 3;
  std::vector<float> chip(3 * H * W);
  for (auto& v : chip) v = static_cast<float>(rng.uniform(-2, 2));
  auto fp = box_footprint(H, W, 1, 2, 2 * S, 2 * S);
  const auto out = prepare_input(chip, 3, fp, S);
  for (int b = 0; b < 3; ++b) {
    std::vector<double> crop(4 * S * S);
    for (int r = 0; r < 2 * S; ++r) {
      for (int c = 0; c < 2 * S; ++c) crop[r * 2 * S + c] = chip[b * H * W + (r + 1) * W + (c + 2)];
    }
    for (int i = 0; i < S; ++i) {
      for (int j = 0; j < S; ++j) {
        const double y = (i + 0.5) * 2 - 0.5, x = (j + 0.5) * 2 - 0.5;
        EXPECT_NEAR(out[b * S * S + i * S + j], oracle::bilinear(crop, 2 * S, 2 * S, y, x), 1e-6);
      }
    }
  }
}

TEST(PrepareInput, ZeroChipAndPadding) {
  const int H = 12, W = 12;
  std::vector<float> zero(4 * H * W, 0.0f);
  for (float v : prepare_input(zero, 4, box_footprint(H, W, 0, 0, 5, 9), 16)) EXPECT_EQ(v, 0.0f);
  // A 2x6 box padded to 6x6: the top and bottom two rows are padding.
  std::vector<float> ones(H * W, 1.0f);
  const auto out = prepare_input(ones, 1, box_footprint(H, W, 4, 3, 2, 6), 6);
  for (int c = 0; c < 6; ++c) {
    EXPECT_EQ(out[0 * 6 + c], 0.0f);
    EXPECT_EQ(out[2 * 6 + c], 1.0f);
    EXPECT_EQ(out[3 * 6 + c], 1.0f);
    EXPECT_EQ(out[5 * 6 + c], 0.0f);
  }
}

TEST(Checkpoint, SaveLoadSaveIsByteIdentical) {
  const auto dir = fresh_temp_dir("ckpt");
  auto p = random_params<float>(EncoderConfig{}, 71);
  CheckpointMeta meta{71, {{0.1, 0.2, 0.3, 0.4}, {1.5, 2.5, 3.5, 4.5}}};
  save_checkpoint(p, meta, dir / "a");
  const auto ck = load_checkpoint(dir / "a");
  EXPECT_TRUE(ck.params == p);
  EXPECT_EQ(ck.meta.seed, 71u);
  EXPECT_EQ(ck.meta.normalization.mean, meta.normalization.mean);
  EXPECT_EQ(ck.meta.normalization.stddev, meta.normalization.stddev);
  save_checkpoint(ck.params, ck.meta, dir / "b");
  EXPECT_EQ(read_file(dir / "a" / "model.bin"), read_file(dir / "b" / "model.bin"));
  EXPECT_EQ(read_file(dir / "a" / "model.json"), read_file(dir / "b" / "model.json"));
  EXPECT_EQ(read_file(dir / "a" / "model.bin").size(), p.size() * 4);
}

TEST(Checkpoint, TruncatedIsIntegrityError) {
  const auto dir = fresh_temp_dir("ckpt_trunc");
  save_checkpoint(random_params<float>(small_config(), 73), {}, dir);
  std::filesystem::resize_file(dir / "model.bin", 4 * 100);
  try {
    load_checkpoint(dir);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kIntegrity);
  }
}

TEST(Checkpoint, CorruptedBytesFailChecksum) {
  const auto dir = fresh_temp_dir("ckpt_flip");
  save_checkpoint(random_params<float>(small_config(), 74), {}, dir);
  std::string bin = read_file(dir / "model.bin");
  bin[17] = static_cast<char>(bin[17] ^ 0x40);
  write_file_atomic(dir / "model.bin", bin);
  try {
    load_checkpoint(dir);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kIntegrity);
  }
}

TEST(Checkpoint, ShapeMismatchNamesLayer) {
  const auto dir = fresh_temp_dir("ckpt_shape");
  save_checkpoint(random_params<float>(small_config(), 75), {}, dir);
  auto j = nlohmann::ordered_json::parse(read_file(dir / "model.json"));
  for (auto& t : j["tensors"]) {
    if (t["name"] == "encoder.conv2.weight") t["shape"][3] = 4;
  }
  write_file_atomic(dir / "model.json", j.dump(2));
  try {
    load_checkpoint(dir);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kShape);
    EXPECT_NE(std::string(e.what()).find("encoder.conv2.weight"), std::string::npos) << e.what();
  }
}

TEST(EpochLog, JsonFields) {
  const auto s = epoch_record_json({3, 0.25, 12.5});
  auto j = nlohmann::json::parse(s);
  EXPECT_EQ(j["epoch"], 3);
  EXPECT_EQ(j["mean_loss"], 0.25);
  EXPECT_EQ(j["wall_ms"], 12.5);
}

}  // namespace
}  // namespace weakpark
