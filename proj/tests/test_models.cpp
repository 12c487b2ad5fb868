#include "oracles.hpp"
#include "test_support.hpp"

#include <cmath>

using namespace weaktag;
using weaktag::testing::TempDir;

namespace {

Grid<double> grid(std::size_t rows, std::size_t cols, std::vector<double> v) {
  Grid<double> g(rows, cols);
  g.values = std::move(v);
  return g;
}

Grid<double> random_grid(std::size_t rows, std::size_t cols, Rng& rng, double lo = 0.0, double hi = 1.0) {
  Grid<double> g(rows, cols);
  for (auto& v : g.values) v = rng.uniform(lo, hi);
  return g;
}

ClipLabel label(std::vector<std::uint8_t> t) { return ClipLabel{std::move(t)}; }

ModelSpec small_spec(ModelKind kind, std::size_t tags = 3) {
  ModelSpec s;
  s.kind = kind;
  s.block_len = 3;
  s.mel_bins = 4;
  s.hidden_units = 6;
  s.num_tags = tags;
  return s;
}

TagVocabulary letters(std::size_t k) {
  std::vector<std::string> v;
  for (std::size_t i = 0; i < k; ++i) v.emplace_back(1, static_cast<char>('a' + i));
  return TagVocabulary(v);
}

BlockSequence random_blocks(std::size_t frames, std::size_t bins, std::size_t len, Rng& rng) {
  FeatureMatrix f{Grid<float>(frames, bins)};
  for (auto& v : f.grid.values) v = static_cast<float>(rng.normal());
  return make_blocks(std::move(f), len, 1);
}

}  // namespace

// ---------------------------------------------------------------------------
// Detector normalization and pooling

TEST(NormalizeDetector, Examples) {
  const auto u = normalize_detector(grid(1, 4, {0.5, 0.5, 0.5, 0.5}));
  for (double v : u.values) EXPECT_NEAR(v, 0.25, 1e-7);
  const auto r = normalize_detector(grid(1, 2, {0.2, 0.6}));
  EXPECT_NEAR(r(0, 0), 0.25, 1e-7);
  EXPECT_NEAR(r(0, 1), 0.75, 1e-7);
  EXPECT_NEAR(normalize_detector(grid(1, 1, {0.3}))(0, 0), 1.0, 1e-7);
}

TEST(NormalizeDetector, TinyAndZeroRows) {
  const auto tiny = normalize_detector(grid(2, 2, {1e-6, 3e-6, 0.0, 0.0}));
  EXPECT_NEAR(tiny(0, 0), 0.25, 1e-12);
  EXPECT_NEAR(tiny(0, 1), 0.75, 1e-12);
  EXPECT_EQ(tiny(1, 0), 0.0);
  EXPECT_EQ(tiny(1, 1), 0.0);
}

TEST(NormalizeDetector, RowsSumToOne) {
  Rng rng(1);
  for (int trial = 0; trial < 500; ++trial) {
    const auto w = random_grid(1 + rng.below(8), 1 + rng.below(60), rng, 1e-3, 1.0);
    const auto n = normalize_detector(w);
    for (std::size_t k = 0; k < n.rows; ++k) {
      const auto row = n.row(k);
      EXPECT_NEAR(std::accumulate(row.begin(), row.end(), 0.0), 1.0, 1e-6);
    }
  }
}

TEST(NormalizeDetector, ScaleInvariant) {
  Rng rng(2);
  for (int trial = 0; trial < 500; ++trial) {
    const auto w = random_grid(2, 1 + rng.below(50), rng, 1e-2, 1.0);
    auto scaled = w;
    const double c = rng.uniform(0.05, 20.0);
    for (std::size_t m = 0; m < w.cols; ++m) scaled(0, m) *= c;
    const auto a = normalize_detector(w), b = normalize_detector(scaled);
    for (std::size_t i = 0; i < a.values.size(); ++i) EXPECT_NEAR(a.values[i], b.values[i], 1e-6);
  }
}

TEST(JdcPool, Examples) {
  const auto y = grid(1, 2, {0.2, 0.6});
  EXPECT_NEAR(jdc_pool(grid(1, 2, {0.25, 0.75}), y).p[0], 0.5, 1e-12);
  EXPECT_NEAR(jdc_pool(grid(1, 2, {0.0, 1.0}), y).p[0], 0.6, 1e-12);
  EXPECT_NEAR(jdc_pool(grid(1, 2, {0.5, 0.5}), y).p[0], 0.4, 1e-12);
  EXPECT_ERRC(jdc_pool(grid(1, 3, {0.2, 0.3, 0.5}), y), Errc::shape_mismatch);
}

TEST(JdcPool, UniformWeightsReduceToBob) {
  Rng rng(3);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t k = 1 + rng.below(8), m = 1 + rng.below(60);
    const auto y = random_grid(k, m, rng);
    const auto w = normalize_detector(Grid<double>(k, m, rng.uniform(0.01, 1.0)));
    const auto a = jdc_pool(w, y), b = bob_predict(y);
    for (std::size_t i = 0; i < k; ++i) EXPECT_NEAR(a.p[i], b.p[i], 1e-6);
  }
}

TEST(BobPredict, Examples) {
  EXPECT_NEAR(bob_predict(Grid<double>(2, 5, 0.3)).p[1], 0.3, 1e-12);
  EXPECT_NEAR(bob_predict(grid(1, 2, {1e-9, 1.0 - 1e-9})).p[0], 0.5, 1e-12);
  EXPECT_ERRC(bob_predict(Grid<double>(2, 0)), Errc::invalid_argument);
}

TEST(BobPredict, MatchesDirectSum) {
  Rng rng(4);
  const auto y = random_grid(5, 17, rng);
  const auto p = bob_predict(y);
  for (std::size_t k = 0; k < 5; ++k) {
    double acc = 0;
    for (std::size_t m = 0; m < 17; ++m) acc += y(k, m);
    EXPECT_NEAR(p.p[k], acc / 17.0, 1e-6);
  }
}

// ---------------------------------------------------------------------------
// Losses

TEST(Bce, Examples) {
  EXPECT_NEAR(bce(0.5, true), std::log(2.0), 1e-12);
  EXPECT_NEAR(bce(0.5, true), 0.6931, 1e-4);
  EXPECT_LE(bce(1.0, true), 1.2e-7);
  EXPECT_NEAR(bce(0.9, false), -std::log(0.1), 1e-12);
  EXPECT_NEAR(bce(0.9, false), 2.3026, 1e-4);
  EXPECT_TRUE(std::isfinite(bce(0.0, true)));
  EXPECT_TRUE(std::isfinite(bce(1.0, false)));
  EXPECT_EQ(bce_grad(0.0, true), 0.0);
  EXPECT_EQ(bce_grad(1.0, false), 0.0);
}

TEST(BobLoss, Examples) {
  EXPECT_NEAR(bob_loss(grid(1, 2, {0.5, 0.5}), label({1})), std::log(2.0), 1e-12);
  EXPECT_LE(bob_loss(grid(2, 3, {1, 1, 1, 0, 0, 0}), label({1, 0})), 1e-6);
  EXPECT_ERRC(bob_loss(Grid<double>(1, 0), label({1})), Errc::invalid_argument);
  EXPECT_ERRC(bob_loss(Grid<double>(2, 1, 0.5), label({1})), Errc::tag_count_mismatch);
}

TEST(BobLoss, MatchesDoubleLoop) {
  Rng rng(5);
  const auto y = random_grid(4, 9, rng, 0.01, 0.99);
  const auto t = label({1, 0, 0, 1});
  double acc = 0;
  for (std::size_t k = 0; k < 4; ++k)
    for (std::size_t m = 0; m < 9; ++m)
      acc += t[k] ? -std::log(y(k, m)) : -std::log(1 - y(k, m));
  EXPECT_NEAR(bob_loss(y, t), acc / 9.0, 1e-9);
}

TEST(JdcLoss, Examples) {
  EXPECT_NEAR(jdc_loss(ClipPrediction{{0.5}}, label({1})), std::log(2.0), 1e-12);
  EXPECT_NEAR(jdc_loss(ClipPrediction{{0.5, 0.5}}, label({1, 0})), 2 * std::log(2.0), 1e-12);
  EXPECT_LE(jdc_loss(ClipPrediction{{1.0, 0.0}}, label({1, 0})), 1e-6);
  EXPECT_ERRC(jdc_loss(ClipPrediction{{0.5}}, label({1, 0})), Errc::tag_count_mismatch);
}

// ---------------------------------------------------------------------------
// Networks

TEST(Tagger, LayoutOfFullModel) {
  ModelSpec spec;
  const auto p = Tagger::layout(spec);
  EXPECT_EQ(spec.input_size(), 440U);
  EXPECT_EQ(p.at("classifier.hidden1.weight").shape(), (Shape{440, 500}));
  EXPECT_EQ(p.at("classifier.hidden3.weight").shape(), (Shape{500, 500}));
  EXPECT_EQ(p.at("classifier.output.weight").shape(), (Shape{500, 8}));
  EXPECT_EQ(p.at("detector.weight").shape(), (Shape{40, 8}));
  spec.kind = ModelKind::bob;
  EXPECT_EQ(Tagger::layout(spec).find("detector.weight"), nullptr);
}

TEST(Tagger, ZeroParametersGiveOneHalf) {
  Rng rng(6);
  Tagger model(small_spec(ModelKind::jdc), letters(3), {}, Tagger::layout(small_spec(ModelKind::jdc)));
  const auto blocks = random_blocks(8, 4, 3, rng);
  for (float v : model.classifier_forward(blocks.block(0), Mode::eval, rng)) EXPECT_EQ(v, 0.5F);
  for (float v : model.detector_forward(blocks.block(2))) EXPECT_EQ(v, 0.5F);
  for (double p : model.predict(blocks).p) EXPECT_NEAR(p, 0.5, 1e-7);
}

TEST(Tagger, EvalIsDeterministicAndTrainReplaysWithSeed) {
  Rng rng(7);
  const auto spec = small_spec(ModelKind::jdc);
  const auto model = Tagger::initialize(spec, letters(3), 11);
  const auto blocks = random_blocks(8, 4, 3, rng);
  Rng r1(1), r2(2);
  EXPECT_EQ(model.classifier_forward(blocks.block(1), Mode::eval, r1),
            model.classifier_forward(blocks.block(1), Mode::eval, r2));
  Rng s1(5), s2(5);
  const auto a = model.forward(blocks, Mode::train, s1);
  const auto b = model.forward(blocks, Mode::train, s2);
  EXPECT_EQ(a.y, b.y);
  Rng s3(6);
  EXPECT_NE(model.forward(blocks, Mode::train, s3).y, a.y);
}

TEST(Tagger, DetectorSeesOnlyTimeMeans) {
  const auto spec = small_spec(ModelKind::jdc);
  const auto model = Tagger::initialize(spec, letters(3), 12);
  // Two 3x4 blocks with equal per-bin means but different frames.
  std::vector<float> a = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12};
  std::vector<float> b = {9, 6, 3, 12, 1, 2, 11, 8, 5, 10, 7, 4};
  EXPECT_EQ(model.detector_forward(a), model.detector_forward(b));
}

TEST(Tagger, DetectorMatchesOpComposition) {
  Rng rng(8);
  const auto spec = small_spec(ModelKind::jdc);
  Standardizer st;
  for (int b = 0; b < 4; ++b) {
    st.mean.push_back(static_cast<float>(rng.normal()));
    st.scale.push_back(static_cast<float>(rng.uniform(0.5, 2.0)));
  }
  auto model = Tagger::initialize(spec, letters(3), 13, st);
  auto& bias = model.params().at("detector.bias");
  for (auto& v : bias.data()) v = static_cast<float>(rng.normal());
  std::vector<float> block(12);
  for (auto& v : block) v = static_cast<float>(rng.normal());
  // standardize -> mean over frames -> dense -> sigmoid, each by hand
  std::vector<double> pooled(4, 0.0);
  for (int t = 0; t < 3; ++t)
    for (int b = 0; b < 4; ++b) pooled[b] += (block[t * 4 + b] - st.mean[b]) * st.scale[b] / 3.0;
  const auto& w = model.params().at("detector.weight");
  const auto out = model.detector_forward(block);
  for (std::size_t k = 0; k < 3; ++k) {
    double z = bias[k];
    for (std::size_t b = 0; b < 4; ++b) z += pooled[b] * w(b, k);
    EXPECT_NEAR(out[k], 1.0 / (1.0 + std::exp(-z)), 1e-6);
  }
}

TEST(Tagger, BobHasNoDetector) {
  Rng rng(9);
  const auto model = Tagger::initialize(small_spec(ModelKind::bob), letters(3), 1);
  const auto blocks = random_blocks(6, 4, 3, rng);
  EXPECT_ERRC(model.detector_forward(blocks.block(0)), Errc::model_kind_mismatch);
  const auto maps = model.forward(blocks, Mode::eval, rng).score_maps();
  EXPECT_FALSE(maps.has_detector());
  EXPECT_EQ(maps.y.rows, 3U);
  EXPECT_EQ(maps.y.cols, 4U);
}

TEST(Tagger, ForwardAgreesWithPoolingFunctions) {
  Rng rng(10);
  for (auto kind : {ModelKind::jdc, ModelKind::bob}) {
    const auto model = Tagger::initialize(small_spec(kind), letters(3), 2);
    const auto blocks = random_blocks(12, 4, 3, rng);
    const auto fwd = model.forward(blocks, Mode::eval, rng);
    const auto maps = fwd.score_maps();
    const auto t = label({1, 0, 1});
    if (kind == ModelKind::jdc) {
      const auto w_norm = normalize_detector(maps.w);
      const auto p = jdc_pool(w_norm, maps.y);
      for (std::size_t k = 0; k < 3; ++k) EXPECT_NEAR(fwd.prediction.p[k], p.p[k], 1e-6);
      EXPECT_NEAR(model.loss(fwd, t), jdc_loss(p, t), 1e-5);
    } else {
      const auto p = bob_predict(maps.y);
      for (std::size_t k = 0; k < 3; ++k) EXPECT_NEAR(fwd.prediction.p[k], p.p[k], 1e-6);
      EXPECT_NEAR(model.loss(fwd, t), bob_loss(maps.y, t), 1e-5);
    }
  }
}

TEST(Tagger, ShapeErrors) {
  Rng rng(11);
  const auto model = Tagger::initialize(small_spec(ModelKind::jdc), letters(3), 3);
  EXPECT_ERRC(model.classifier_forward(std::vector<float>(5), Mode::eval, rng), Errc::shape_mismatch);
  EXPECT_ERRC(model.forward(random_blocks(8, 5, 3, rng), Mode::eval, rng), Errc::shape_mismatch);
  EXPECT_ERRC(Tagger(small_spec(ModelKind::jdc), letters(2), {}, Tagger::layout(small_spec(ModelKind::jdc))),
              Errc::tag_count_mismatch);
  EXPECT_ERRC(Tagger(small_spec(ModelKind::jdc), letters(3), {}, Tagger::layout(small_spec(ModelKind::bob))),
              Errc::shape_mismatch);
  const auto fwd = model.forward(random_blocks(8, 4, 3, rng), Mode::eval, rng);
  EXPECT_ERRC(model.loss(fwd, label({1, 0})), Errc::tag_count_mismatch);
}

TEST(Tagger, NonFinitePredictionIsNamed) {
  Rng rng(12);
  auto model = Tagger::initialize(small_spec(ModelKind::jdc), letters(3), 4);
  model.params().at("classifier.output.bias")[0] = std::nanf("");
  EXPECT_ERRC(model.predict(random_blocks(8, 4, 3, rng)), Errc::non_finite);
}

// ---------------------------------------------------------------------------
// Gradients

TEST(Gradients, MatchFiniteDifferencesOnRandomSmallModels) {
  for (auto kind : {ModelKind::jdc, ModelKind::bob})
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const auto c = oracle::random_case(kind, 1000 + seed);
      Rng unused(0);
      const auto grads = c.model.backward(c.model.forward(c.blocks, Mode::eval, unused), c.label);
      const auto cmp = oracle::check_gradients(c.model, c.blocks, c.label, grads);
      EXPECT_LT(cmp.max_rel_error, 1e-4) << to_string(kind) << " seed " << seed << ": " << cmp.worst;
      EXPECT_GT(cmp.checked, 0U);
    }
}

TEST(Gradients, FullSizeJdcOnASubsample) {
  Rng rng(13);
  ModelSpec spec;
  spec.num_tags = 3;
  auto model = BasicTagger<double>::initialize(spec, letters(3), 5);
  for (auto& e : model.params())
    if (e.value.rank() == 1)
      for (auto& v : e.value.data()) v = 0.1 * rng.normal();
  const auto blocks = random_blocks(14, 40, 11, rng);
  const auto t = label({1, 0, 1});
  Rng unused(0);
  const auto grads = model.backward(model.forward(blocks, Mode::eval, unused), t);
  const auto cmp = oracle::check_gradients(model, blocks, t, grads, 1e-3, 1e-2, 997, 3);
  EXPECT_LT(cmp.max_rel_error, 1e-4) << cmp.worst;
  EXPECT_GT(cmp.checked, 500U);
}

TEST(Gradients, DropoutMasksAreReplayed) {
  // With a fixed mask the train-mode loss is smooth in the parameters; the
  // analytic gradient must match differences taken under the same mask.
  auto c = oracle::random_case(ModelKind::jdc, 77);
  auto spec = c.model.spec();
  spec.dropout = 0.3F;
  BasicTagger<double> model(spec, c.model.vocabulary(), c.model.standardizer(), c.model.params());
  Rng r(9);
  const auto fwd = model.forward(c.blocks, Mode::train, r);
  const auto grads = model.backward(fwd, c.label);
  const double eps = 1e-4;
  auto& w = model.params().at("classifier.output.weight");
  const auto& g = grads.at("classifier.output.weight");
  for (std::size_t i = 0; i < w.size(); ++i) {
    const double orig = w[i];
    w[i] = orig + eps;
    Rng rp(9);
    const double lp = model.loss(model.forward(c.blocks, Mode::train, rp), c.label);
    w[i] = orig - eps;
    Rng rm(9);
    const double lm = model.loss(model.forward(c.blocks, Mode::train, rm), c.label);
    w[i] = orig;
    EXPECT_LT(oracle::relative_error(g[i], (lp - lm) / (2 * eps), 1e-2), 1e-4);
  }
}

// ---------------------------------------------------------------------------
// Checkpoints

TEST(Checkpoint, RoundTripIsBitExact) {
  TempDir dir;
  Rng rng(14);
  for (auto kind : {ModelKind::jdc, ModelKind::bob}) {
    Standardizer st;
    for (int b = 0; b < 4; ++b) {
      st.mean.push_back(static_cast<float>(rng.normal()));
      st.scale.push_back(static_cast<float>(rng.uniform(0.1, 3.0)));
    }
    auto spec = small_spec(kind);
    spec.dropout = 0.25F;
    const auto model = Tagger::initialize(spec, letters(3), 99, st);
    save_checkpoint(dir / "m.wtck", model);
    const auto back = load_checkpoint(dir / "m.wtck");
    EXPECT_EQ(back.spec().kind, kind);
    EXPECT_EQ(back.spec().hidden_units, 6U);
    EXPECT_EQ(back.spec().dropout, 0.25F);
    EXPECT_EQ(back.vocabulary().tags(), model.vocabulary().tags());
    EXPECT_EQ(back.standardizer().mean, st.mean);
    EXPECT_EQ(back.standardizer().scale, st.scale);
    EXPECT_EQ(back.params(), model.params());
    EXPECT_EQ(encode_checkpoint(back), io::read_file(dir / "m.wtck"));
  }
}

TEST(Checkpoint, RejectsCorruptFiles) {
  TempDir dir;
  const auto model = Tagger::initialize(small_spec(ModelKind::jdc), letters(3), 1);
  const auto bytes = encode_checkpoint(model);
  EXPECT_ERRC(load_checkpoint(dir / "none.wtck"), Errc::file_not_found);
  auto bad = bytes;
  bad[1] = 'X';
  EXPECT_ERRC(decode_checkpoint(bad, "magic"), Errc::checkpoint_format);
  auto truncated = bytes;
  truncated.resize(bytes.size() - 3);
  EXPECT_ERRC(decode_checkpoint(truncated, "short"), Errc::checkpoint_format);
  auto version = bytes;
  version[4] = 9;
  EXPECT_ERRC(decode_checkpoint(version, "version"), Errc::checkpoint_format);
}
