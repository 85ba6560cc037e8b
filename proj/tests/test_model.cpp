#include "chidek/checkpoint.hpp"
#include "chidek/config_io.hpp"
#include "chidek/errors.hpp"
#include "chidek/model.hpp"
#include "chidek/synth.hpp"
#include "chidek/train.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace chidek;
using chidek::testing::randn;
using chidek::testing::random_rotation;

namespace {

std::vector<LabeledMolecule> rs_set(int count, std::uint64_t seed) {
  SyntheticSpec spec;
  spec.count = count;
  spec.spectators_max = 3;
  spec.seed = seed;
  return gen_rs(spec);
}

ModelConfig tiny(std::uint64_t seed = 0) {
  ModelConfig c = ModelConfig::tiny();
  c.seed = seed;
  return c;
}

TrainConfig quick(int epochs = 1, int batch = 8) {
  TrainConfig t;
  t.epochs = epochs;
  t.batch_size = batch;
  t.lr = 3e-3;
  return t;
}

std::filesystem::path scratch(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "chidek_model_tests";
  std::filesystem::create_directories(dir);
  return dir / name;
}

CheckpointError::Kind load_error(const std::string& bytes) {
  try {
    deserialize_checkpoint(bytes);
  } catch (const CheckpointError& e) {
    return e.kind();
  }
  ADD_FAILURE() << "checkpoint unexpectedly loaded";
  return CheckpointError::Kind::Io;
}

}  // namespace

TEST(Forward, ZeroPredictorGivesZeroLogits) {
  ModelConfig cfg = tiny(3);
  ModelParams p = init_params(cfg);
  p.predictor = Mlp::zeros(cfg.h, cfg.h, cfg.n_classes);
  for (const auto& s : rs_set(4, 3)) EXPECT_TRUE(forward(cfg, p, s.mol).isZero(0.0));
}

TEST(Forward, RotationInvariantLogits) {
  std::mt19937_64 rng(60);
  Model model = Model::create(tiny(60));
  const auto data = rs_set(16, 60);
  // Check at initialization and again after some optimizer steps.
  for (int stage = 0; stage < 2; ++stage) {
    for (const auto& s : data) {
      const Molecule moved = transform(s.mol, random_rotation(rng), randn(rng, 3, 1, 10.0));
      const Eigen::VectorXd a = forward(model.config, model.params, s.mol);
      const Eigen::VectorXd b = forward(model.config, model.params, moved);
      ASSERT_LT((a - b).cwiseAbs().maxCoeff(), 1e-9) << "stage " << stage;
    }
    train(model, data, {}, quick(2, 4));
  }
}

TEST(Forward, DeterministicAndShapes) {
  const ModelConfig cfg = tiny(4);
  const ModelParams p = init_params(cfg), q = init_params(cfg);
  const Molecule mol = rs_set(1, 4).front().mol;
  const Eigen::VectorXd a = forward(cfg, p, mol), b = forward(cfg, q, mol);
  EXPECT_EQ(a.size(), cfg.n_classes);
  EXPECT_EQ(a, b);
  EXPECT_EQ(embed(cfg, p, mol).size(), cfg.h);
}

TEST(Config, Validation) {
  ModelConfig c = tiny();
  c.H = 3;
  EXPECT_THROW(c.validate(), ArgumentError);
  c = tiny();
  c.L = 0;
  EXPECT_THROW(c.validate(), ArgumentError);
  c = tiny();
  c.d_p = 2;
  EXPECT_THROW(c.validate(), ArgumentError);
  TrainConfig t;
  t.lr = 0;
  EXPECT_THROW(t.validate(), ArgumentError);
  t = {};
  t.epochs = 0;
  EXPECT_THROW(t.validate(), ArgumentError);
  t = {};
  t.reg_weight = -1;
  EXPECT_THROW(t.validate(), ArgumentError);
}

TEST(Loss, ClassifyExamples) {
  EXPECT_NEAR(loss_classify(Eigen::Vector2d(0.3, 0.3), 1), std::log(2.0), 1e-15);
  EXPECT_LT(loss_classify(Eigen::Vector2d(20, 0), 0), 1e-8);
  EXPECT_GE(loss_classify(Eigen::Vector2d(-3, 4), 1), 0.0);
}

TEST(Loss, ClassifyMatchesLogSumExp) {
  std::mt19937_64 rng(53);
  for (int t = 0; t < 20; ++t) {
    const Eigen::VectorXd z = randn(rng, 5, 1, 3.0);
    const int label = t % 5;
    double lse = 0;
    for (int i = 0; i < 5; ++i) lse += std::exp(z(i));
    Eigen::VectorXd d;
    EXPECT_NEAR(loss_classify(z, label, &d), std::log(lse) - z(label), 1e-12);
    Eigen::VectorXd expect(5);
    for (int i = 0; i < 5; ++i) expect(i) = std::exp(z(i)) / lse - (i == label ? 1.0 : 0.0);
    EXPECT_LT((d - expect).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Loss, MarginRankExamples) {
  EXPECT_EQ(loss_margin_rank(2.5, 1.0, 0.5), 0.0);
  EXPECT_DOUBLE_EQ(loss_margin_rank(0.7, 0.7, 0.5), 0.5);
  double hi = 0, lo = 0;
  EXPECT_NEAR(loss_margin_rank(0.2, 0.9, 0.3, &hi, &lo), 1.0, 1e-15);
  EXPECT_EQ(hi, -1.0);
  EXPECT_EQ(lo, 1.0);
  loss_margin_rank(3.0, 0.0, 0.3, &hi, &lo);
  EXPECT_EQ(hi, 0.0);
  EXPECT_EQ(lo, 0.0);
}

TEST(Loss, MeanSquaredError) {
  Eigen::VectorXd d;
  EXPECT_DOUBLE_EQ(loss_mse(Eigen::Vector2d(1, 3), Eigen::Vector2d(0, 1), &d), 2.5);
  EXPECT_EQ(d, Eigen::Vector2d(1, 2));
}

TEST(Schedule, CosineEndpoints) {
  EXPECT_DOUBLE_EQ(cosine_lr(1e-3, 0.1, 0, 100), 1e-3);
  EXPECT_NEAR(cosine_lr(1e-3, 0.1, 99, 100), 1e-4, 1e-12 * 1e-3);
  // a one-step schedule is all final step
  EXPECT_DOUBLE_EQ(cosine_lr(1e-3, 0.1, 0, 1), 1e-4);
  double prev = 1.0;
  for (long s = 0; s < 50; ++s) {
    const double lr = cosine_lr(1e-3, 0.1, s, 50);
    EXPECT_LE(lr, prev);
    prev = lr;
  }
}

TEST(Train, FinalStepRunsAtTenthOfInitialRate) {
  Model model = Model::create(tiny(5));
  TrainConfig cfg = quick(1, 4);
  const TrainReport r = train(model, rs_set(20, 5), {}, cfg);
  ASSERT_EQ(r.step_lr.size(), 5u);
  EXPECT_DOUBLE_EQ(r.step_lr.front(), cfg.lr);
  EXPECT_NEAR(r.step_lr.back(), 0.1 * cfg.lr, 1e-12);
  EXPECT_EQ(model.adam.step, 5);
}

TEST(Train, IdenticalSeedsGiveIdenticalCurves) {
  const auto data = rs_set(24, 6);
  Model a = Model::create(tiny(6)), b = Model::create(tiny(6));
  const TrainReport ra = train(a, data, data, quick(2));
  const TrainReport rb = train(b, data, data, quick(2));
  EXPECT_EQ(ra.step_loss, rb.step_loss);
  const Molecule& probe = data.front().mol;
  EXPECT_EQ(forward(a.config, a.params, probe), forward(b.config, b.params, probe));
}

TEST(Train, RegularizerDecreasesOnFrozenBatch) {
  ModelConfig cfg = tiny(7);
  cfg.rank_strategy = RankStrategy::Regularize;
  Model model = Model::create(cfg);
  std::mt19937_64 rng(7);
  for (auto& w : model.params.encoder.kernels.w) w += randn(rng, w.rows(), 3, 0.3);
  TrainConfig t = quick(50, 4);
  t.reg_weight = 1.0;
  t.lr = 1e-3;
  t.min_lr_factor = 1.0;
  double prev = regularization_loss(model.params.encoder.kernels);
  ASSERT_GT(prev, 0.1);
  const TrainReport r = train(model, rs_set(4, 7), {}, t);
  ASSERT_EQ(r.step_l_reg.size(), 50u);
  for (std::size_t s = 0; s < r.step_l_reg.size(); ++s) {
    EXPECT_LT(r.step_l_reg[s], prev) << "step " << s;
    prev = r.step_l_reg[s];
  }
}

TEST(Train, RetractionKeepsSlicesOrthonormal) {
  Model model = Model::create(tiny(8));
  TrainConfig t = quick(1, 4);
  t.lr = 1e-2;
  const auto data = rs_set(16, 8);
  for (int step = 0; step < 10; ++step) {
    train(model, data, {}, t, nullptr, 1);
    ASSERT_EQ(model.adam.step, step + 1);
    for (const auto& w : model.params.encoder.kernels.w) {
      ASSERT_LT((w.transpose() * w - Eigen::Matrix3d::Identity()).norm(), 1e-8) << "step " << step;
    }
  }
}

TEST(Train, MetricsRecordFormat) {
  std::ostringstream out;
  write_metrics(out, {3, 0.25, 0.5, 0.75, 1e-3, 0.0});
  const std::string line = out.str();
  for (const char* key : {"epoch=3", "train_loss=", "train_acc=", "val_acc=", "lr=", "l_reg="}) {
    EXPECT_NE(line.find(key), std::string::npos) << key;
  }
  EXPECT_EQ(line.back(), '\n');
}

TEST(Train, RankTaskLearnsPairOrder) {
  ModelConfig cfg = tiny(9);
  cfg.n_classes = 1;
  Model model = Model::create(cfg);
  TrainConfig t = quick(8, 8);
  t.task = Task::Rank;
  const auto data = rs_set(64, 9);
  const double before = evaluate(model, data, Task::Rank);
  train(model, data, {}, t);
  const double after = evaluate(model, data, Task::Rank);
  EXPECT_GE(after, before);
  EXPECT_GE(after, 0.9);
}

TEST(Train, DivergenceNamesStep) {
  Model model = Model::create(tiny(10));
  for (auto& t : model.params.tensors()) {
    if (t.name.rfind("predictor.w2", 0) == 0) t.map().setConstant(std::numeric_limits<double>::quiet_NaN());
  }
  try {
    train(model, rs_set(8, 10), {}, quick(1, 4));
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("step"), std::string::npos) << e.what();
  }
}

TEST(Checkpoint, RoundTripIsBitExact) {
  Model model = Model::create(tiny(11));
  const auto data = rs_set(8, 11);
  train(model, data, {}, quick(1, 4));
  const auto path = scratch("roundtrip.ckpt");
  save_checkpoint(model, path);
  const Model back = load_checkpoint(path, model.config);
  EXPECT_EQ(back.config, model.config);
  EXPECT_EQ(back.adam.step, model.adam.step);
  for (const auto& s : data) {
    const Eigen::VectorXd a = forward(model.config, model.params, s.mol);
    const Eigen::VectorXd b = forward(back.config, back.params, s.mol);
    EXPECT_EQ(std::memcmp(a.data(), b.data(), sizeof(double) * a.size()), 0);
  }
  EXPECT_EQ(serialize_checkpoint(back), serialize_checkpoint(model));
}

TEST(Checkpoint, CorruptPayloadFailsChecksum) {
  const std::string bytes = serialize_checkpoint(Model::create(tiny(12)));
  std::string bad = bytes;
  bad[bytes.size() / 2] = static_cast<char>(bad[bytes.size() / 2] ^ 0x10);
  EXPECT_EQ(load_error(bad), CheckpointError::Kind::Checksum);
}

TEST(Checkpoint, TruncationAndVersionAreDistinct) {
  const std::string bytes = serialize_checkpoint(Model::create(tiny(13)));
  EXPECT_EQ(load_error(bytes.substr(0, bytes.size() - 9)), CheckpointError::Kind::Truncated);
  EXPECT_EQ(load_error(bytes.substr(0, bytes.size() / 3)), CheckpointError::Kind::Truncated);
  std::string v2 = bytes;
  v2.replace(v2.find("version=1"), 9, "version=2");
  EXPECT_EQ(load_error(v2), CheckpointError::Kind::Version);
  EXPECT_EQ(load_error("not a checkpoint\n"), CheckpointError::Kind::Format);
  EXPECT_EQ(load_error(bytes + "x"), CheckpointError::Kind::Format);
}

TEST(Checkpoint, MismatchedWidthNamesTensor) {
  const Model model = Model::create(tiny(14));
  const auto path = scratch("width.ckpt");
  save_checkpoint(model, path);
  ModelConfig wider = model.config;
  wider.h = 16;
  try {
    load_checkpoint(path, wider);
    FAIL() << "expected shape error";
  } catch (const CheckpointError& e) {
    EXPECT_EQ(e.kind(), CheckpointError::Kind::Shape);
    EXPECT_NE(std::string(e.what()).find("encoder."), std::string::npos) << e.what();
  }
}

TEST(Checkpoint, MissingFileIsIoError) {
  try {
    load_checkpoint(scratch("does-not-exist.ckpt"));
    FAIL();
  } catch (const CheckpointError& e) {
    EXPECT_EQ(e.kind(), CheckpointError::Kind::Io);
  }
}

TEST(ConfigFile, ParsesKnownKeys) {
  std::istringstream in("# desk run\nh=16\nd_p=8\n\nrank_strategy=reg\nlr=0.002\ntask=rank\nseed=42\n");
  const RunConfig c = parse_config(in);
  EXPECT_EQ(c.model.h, 16);
  EXPECT_EQ(c.model.d_p, 8);
  EXPECT_EQ(c.model.rank_strategy, RankStrategy::Regularize);
  EXPECT_EQ(c.model.seed, 42u);
  EXPECT_DOUBLE_EQ(c.train.lr, 0.002);
  EXPECT_EQ(c.train.task, Task::Rank);
}

TEST(ConfigFile, RejectsUnknownKeysWithLine) {
  std::istringstream in("h=16\nwidth=3\n");
  try {
    parse_config(in);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
  std::istringstream bad("lr=fast\n");
  EXPECT_THROW(parse_config(bad), ParseError);
}

TEST(ConfigFile, WriteThenParseRoundTrips) {
  RunConfig c;
  c.model = tiny(99);
  c.model.rank_strategy = RankStrategy::None;
  c.train.lr = 1.0 / 3.0;
  c.train.margin = 0.7;
  std::ostringstream out;
  write_model_config(out, c.model);
  write_train_config(out, c.train);
  std::istringstream in(out.str());
  const RunConfig back = parse_config(in);
  EXPECT_EQ(back.model, c.model);
  EXPECT_EQ(back.train.lr, c.train.lr);
  EXPECT_EQ(back.train.margin, c.train.margin);
}
