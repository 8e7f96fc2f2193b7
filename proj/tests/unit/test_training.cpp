#include <cmath>
#include <fstream>
#include <sstream>

#include "finecount/errors.hpp"
#include "finecount/training.hpp"
#include "support.hpp"

using namespace finecount;

namespace {

TrainConfig small_config(int steps) {
  TrainConfig c;
  c.steps = steps;
  c.crop = 16;
  c.widths = {4, 4, 4, 4};
  c.iterations = 1;
  c.seed = 11;
  c.learning_rate = 1e-3;
  return c;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream s;
  s << is.rdbuf();
  return s.str();
}

}  // namespace

TEST(Training, ConfigValidation) {
  TrainConfig c;
  EXPECT_NO_THROW(c.validate());
  c.steps = 0;
  EXPECT_THROW(c.validate(), UsageError);
  c = {};
  c.learning_rate = 0;
  EXPECT_THROW(c.validate(), UsageError);
  c = {};
  c.crop = 30;
  EXPECT_THROW(c.validate(), UsageError);
  c = {};
  c.lambda = -0.1;
  EXPECT_THROW(c.validate(), UsageError);
}

TEST(Training, ConfigJsonRoundTrip) {
  TrainConfig c = small_config(7);
  c.propagation = Propagation::gcn;
  c.attention = Attention::naive;
  c.model = ModelKind::twonets;
  c.kernel.mode = KernelMode::adaptive;
  c.lambda = 0.35;
  TrainConfig back = TrainConfig::from_json(c.to_json());
  EXPECT_EQ(back.to_json(), c.to_json());
  TrainConfig partial = TrainConfig::from_json(nlohmann::json{{"steps", 3}}, c);
  EXPECT_EQ(partial.steps, 3);
  EXPECT_EQ(partial.lambda, 0.35);
  EXPECT_THROW(TrainConfig::from_json(nlohmann::json{{"steps", "many"}}), UsageError);
  EXPECT_THROW(TrainConfig::from_json(nlohmann::json{{"propagation", "magic"}}), UsageError);
}

TEST(Training, AdamMatchesHandOracle) {
  ModelParams m(ArchConfig{}, 0);
  m.add_conv("x", 1, 1, 1);
  auto& p = m.at("x.weight");
  p.value[0] = 0.5;
  p.grad = Tensor(1, 1, 1, 2.0);
  AdamState st;
  adam_update(m, st, 0.01);
  // First step: bias-corrected moments are g and g^2, so the step is lr * g / (|g| + eps).
  EXPECT_NEAR(p.value[0], 0.5 - 0.01 * 2.0 / (2.0 + 1e-8), 1e-15);
  p.grad = Tensor(1, 1, 1, -1.0);
  adam_update(m, st, 0.01);
  double m2 = 0.9 * 0.2 + 0.1 * -1.0, v2 = 0.999 * 0.004 + 0.001 * 1.0;
  double mh = m2 / (1 - 0.81), vh = v2 / (1 - 0.999 * 0.999);
  EXPECT_NEAR(p.value[0], 0.5 - 0.01 * 2.0 / (2.0 + 1e-8) - 0.01 * mh / (std::sqrt(vh) + 1e-8), 1e-15);
  EXPECT_EQ(st.step, 2);
}

TEST(Training, SingleStepWritesOneLogRow) {
  auto dir = fc_test::scratch_dir();
  auto man = fc_test::write_random_manifest(dir / "data", 2, 20, 20, 2, 1);
  auto res = train(man, small_config(1), {dir / "run", {}});
  ASSERT_EQ(res.log.size(), 1u);
  EXPECT_EQ(res.log[0].step, 1);
  EXPECT_TRUE(std::filesystem::exists(dir / "run" / "checkpoint.ckpt"));
  std::ifstream csv(dir / "run" / "train_log.csv");
  std::string header, row, extra;
  std::getline(csv, header);
  std::getline(csv, row);
  EXPECT_EQ(header, "step,lc,ls,lf,total");
  EXPECT_EQ(row.substr(0, 2), "1,");
  EXPECT_FALSE(std::getline(csv, extra) && !extra.empty());
}

TEST(Training, IntermediateCheckpoints) {
  auto dir = fc_test::scratch_dir();
  auto man = fc_test::write_random_manifest(dir / "data", 1, 16, 16, 1, 2);
  TrainConfig c = small_config(4);
  c.checkpoint_every = 2;
  auto res = train(man, c, {dir / "run", {}});
  EXPECT_TRUE(std::filesystem::exists(dir / "run" / "checkpoint_step000002.ckpt"));
  EXPECT_FALSE(std::filesystem::exists(dir / "run" / "checkpoint_step000004.ckpt"));
  EXPECT_EQ(load_checkpoint(dir / "run" / "checkpoint_step000002.ckpt").step, 2);
}

TEST(Training, DeterministicCheckpoints) {
  auto dir = fc_test::scratch_dir();
  auto man = fc_test::write_random_manifest(dir / "data", 3, 24, 24, 2, 3);
  train(man, small_config(3), {dir / "a", {}});
  train(man, small_config(3), {dir / "b", {}});
  EXPECT_EQ(slurp(dir / "a" / "checkpoint.ckpt"), slurp(dir / "b" / "checkpoint.ckpt"));
  EXPECT_EQ(slurp(dir / "a" / "train_log.csv"), slurp(dir / "b" / "train_log.csv"));
  TrainConfig other = small_config(3);
  other.seed = 12;
  train(man, other, {dir / "c", {}});
  EXPECT_NE(slurp(dir / "a" / "checkpoint.ckpt"), slurp(dir / "c" / "checkpoint.ckpt"));
}

TEST(Training, CheckpointRoundTripPreservesEvaluation) {
  auto dir = fc_test::scratch_dir();
  auto man = fc_test::write_random_manifest(dir / "data", 2, 20, 20, 2, 4);
  auto res = train(man, small_config(2), {dir / "run", {}});
  Checkpoint back = load_checkpoint(dir / "run" / "checkpoint.ckpt");
  EXPECT_TRUE(back.params == res.checkpoint.params);
  EXPECT_TRUE(back.optimizer == res.checkpoint.optimizer);
  EXPECT_EQ(back.step, 2);
  EXPECT_EQ(back.config.to_json(), res.checkpoint.config.to_json());
  EXPECT_EQ(evaluate(back, man).to_json().dump(), evaluate(res.checkpoint, man).to_json().dump());
  // Evaluation is read-only and repeatable.
  EXPECT_EQ(evaluate(back, man).to_json().dump(), evaluate(back, man).to_json().dump());
}

TEST(Training, SmallStepDecreasesLossOnFixedBatch) {
  TrainConfig c = small_config(1);
  ModelParams m = build_model(c.arch(2, 1), 5);
  std::mt19937_64 rng(6);
  Tensor img = fc_test::random_tensor(1, 16, 16, rng, 0, 1);
  DotAnnotation ann{{{4, 4, 1}, {12, 11, 2}, {9, 3, 1}}, 16, 16, 2};
  Tensor dens = render_density_maps(ann, c.kernel);
  GroundTruth gt = make_ground_truth(dens, 4);
  double before = evaluate_loss(m, c, img, dens).total;
  m.zero_grad();
  {
    ad::Graph g;
    ParamBinder b(g, m, true);
    auto fwd = forward(b, img, c.propagation_settings());
    auto l = build_loss(fwd, gt);
    EXPECT_NEAR(l.breakdown.total, before, 1e-9 * before);
    g.backward(l.total);
  }
  AdamState st;
  adam_update(m, st, 1e-6);
  EXPECT_LT(evaluate_loss(m, c, img, dens).total, before);
}

TEST(Training, EmptyManifestAndMismatchedK) {
  auto dir = fc_test::scratch_dir();
  DatasetManifest empty;
  empty.k = 2;
  EXPECT_THROW(train(empty, small_config(1)), DataError);
  auto man2 = fc_test::write_random_manifest(dir / "k2", 1, 16, 16, 2, 7);
  auto man3 = fc_test::write_random_manifest(dir / "k3", 1, 16, 16, 3, 8);
  auto res = train(man2, small_config(1));
  EXPECT_THROW(evaluate(res.checkpoint, empty), DataError);
  try {
    evaluate(res.checkpoint, man3);
    FAIL() << "expected a K mismatch";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("K=2"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("K=3"), std::string::npos);
  }
}

TEST(Training, DivergenceRaisesNumericError) {
  auto dir = fc_test::scratch_dir();
  auto man = fc_test::write_random_manifest(dir / "data", 1, 16, 16, 1, 9, 8);
  TrainConfig c = small_config(20);
  c.learning_rate = 1e300;
  try {
    train(man, c);
    FAIL() << "expected divergence";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("loss at step"), std::string::npos);
  }
}

TEST(Training, RgbManifestBuildsRgbModel) {
  auto dir = fc_test::scratch_dir();
  auto man = fc_test::write_random_manifest(dir / "data", 1, 16, 16, 1, 10);
  std::mt19937_64 rng(1);
  write_png(dir / "data" / "img" / "s0.png", fc_test::random_tensor(3, 16, 16, rng, 0, 1));
  auto res = train(man, small_config(1));
  EXPECT_EQ(res.checkpoint.params.arch().in_channels, 3);
  Prediction p = predict(res.checkpoint.params, res.checkpoint.config, fc_test::random_tensor(3, 16, 16, rng, 0, 1));
  EXPECT_EQ(p.fine_grained.channels(), 1);
  EXPECT_EQ(p.segmentation.channels(), 2);
}

TEST(Training, BaselinePredictionsCarrySegmentation) {
  auto dir = fc_test::scratch_dir();
  auto man = fc_test::write_random_manifest(dir / "data", 1, 16, 16, 2, 11);
  for (auto kind : {ModelKind::onenet, ModelKind::twonets, ModelKind::segment}) {
    TrainConfig c = small_config(1);
    c.model = kind;
    auto res = train(man, c);
    auto rep = evaluate(res.checkpoint, man);
    EXPECT_EQ(rep.mae_per_category.size(), 2u);
    EXPECT_TRUE(std::isfinite(rep.cmae));
  }
}
