#include <gtest/gtest.h>

#include <fstream>
#include <set>
#include <sstream>

#include "ratfm/cli.hpp"
#include "ratfm/config.hpp"
#include "ratfm/tensor_io.hpp"
#include "test_util.hpp"

namespace ratfm {
namespace {

using testing::bit_equal;
using testing::TempDir;

const std::vector<std::string> kTinyGrid{
    "--set", "coarse_h=2", "--set", "coarse_w=2", "--set", "scale=4", "--set", "days=3", "--set", "train_days=1",
    "--set", "val_days=1", "--set", "test_days=1", "--set", "intervals_per_day=24", "--set", "n_arterial=2",
    "--set", "n_secondary=2", "--set", "channels=4"};

struct CliRun {
  int code = 0;
  std::string out, err;
};

CliRun cli(std::vector<std::string> args, const std::vector<std::string>& extra = {}) {
  args.insert(args.end(), extra.begin(), extra.end());
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

std::string read_text(const std::filesystem::path& p) {
  std::ifstream in(p);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    data_ = (dir_.path() / "data").string();
    const CliRun r = cli({"generate", "--data", data_}, kTinyGrid);
    ASSERT_EQ(r.code, kExitOk) << r.err;
  }

  CliRun train(const std::string& ckpt, std::vector<std::string> extra = {}) {
    std::vector<std::string> args{"train",     "--data",  data_, "--checkpoint", ckpt, "--set",
                                  "epochs=2",  "--set",   "steps_per_epoch=2",   "--set", "batch_size=4"};
    args.insert(args.end(), extra.begin(), extra.end());
    return cli(args, kTinyGrid);
  }

  TempDir dir_{"cli"};
  std::string data_;
};

TEST(RunConfigKeys, SetParseAndReject) {
  RunConfig c;
  c.set("variant", "Short+Road");
  c.set("seed", "7");
  c.set("lr", "0.0002");
  EXPECT_EQ(c.model.variant, Variant::short_road);
  EXPECT_EQ(c.seed, 7u);
  EXPECT_EQ(c.model.seed, 7u);
  EXPECT_EQ(c.learning_rate, 2e-4);
  EXPECT_THROW(c.set("colour", "red"), std::invalid_argument);
  EXPECT_THROW(c.set("epochs", "many"), std::invalid_argument);
  RunConfig d;
  d.apply(c.to_keyvalues());
  EXPECT_EQ(d.to_keyvalues().serialize(), c.to_keyvalues().serialize());
}

TEST(RunConfigKeys, ValidationRules) {
  RunConfig c;
  c.model.channels = 10;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = RunConfig{};
  c.learning_rate = 0.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = RunConfig{};
  c.use_paper_scale();
  EXPECT_EQ(c.model.channels, 128u);
  EXPECT_EQ(c.model.radius, 4u);
  EXPECT_NO_THROW(c.validate());
}

TEST(RunConfigKeys, FileWithCommentsAndErrors) {
  TempDir dir("cfg");
  std::ofstream(dir.path() / "ok.txt") << "# desk run\nvariant = Full\n\nepochs=4\n";
  const RunConfig c = load_run_config(dir.path() / "ok.txt");
  EXPECT_EQ(c.epochs, 4u);
  EXPECT_TRUE(c.explicit_keys.count("epochs"));
  std::ofstream(dir.path() / "bad.txt") << "variant Full\n";
  EXPECT_THROW(load_run_config(dir.path() / "bad.txt"), std::invalid_argument);
}

TEST(KeyValueText, RoundTripsDoubles) {
  KeyValues kv;
  kv.set("a", 0.1);
  kv.set("b", 1e-300);
  kv.set("c", std::string("text with spaces"));
  const KeyValues back = KeyValues::parse(kv.serialize());
  EXPECT_EQ(back.get_double("a"), 0.1);
  EXPECT_EQ(back.get_double("b"), 1e-300);
  EXPECT_EQ(back.get("c"), "text with spaces");
  EXPECT_THROW(back.get("missing"), std::out_of_range);
}

TEST(CliUsage, ExitCodes) {
  EXPECT_EQ(cli({}).code, kExitUsage);
  EXPECT_EQ(cli({"fly"}).code, kExitUsage);
  EXPECT_EQ(cli({"train", "--bogus"}).code, kExitUsage);
  EXPECT_EQ(cli({"infer", "--coarse", "x.rtfm"}).code, kExitUsage);
  EXPECT_EQ(cli({"--help"}).code, kExitOk);
  EXPECT_EQ(cli({"train", "--variant", "Huge"}).code, kExitValidation);
  EXPECT_EQ(cli({"train", "--set", "channels=6"}).code, kExitValidation);
  EXPECT_EQ(cli({"eval", "--baseline", "mean"}).code, kExitUsage);
}

TEST(CliUsage, MissingDatasetIsValidationError) {
  TempDir dir("nodata");
  const CliRun r = cli({"train", "--data", (dir.path() / "nothing").string()});
  EXPECT_EQ(r.code, kExitValidation);
  EXPECT_FALSE(r.err.empty());
}

TEST_F(CliTest, GenerateIsDeterministic) {
  const std::string again = (dir_.path() / "again").string();
  ASSERT_EQ(cli({"generate", "--data", again}, kTinyGrid).code, kExitOk);
  for (const char* f : {"road.rtfm", "external.rtfm", "fine/0.rtfm", "coarse/71.rtfm", "manifest.txt"}) {
    EXPECT_EQ(read_text(std::filesystem::path(data_) / f), read_text(std::filesystem::path(again) / f)) << f;
  }
}

TEST_F(CliTest, CorruptMagicIsRejected) {
  {
    std::fstream f(std::filesystem::path(data_) / "coarse" / "3.rtfm", std::ios::in | std::ios::out | std::ios::binary);
    f.put('Z');
  }
  const CliRun r = train((dir_.path() / "ck").string());
  EXPECT_EQ(r.code, kExitValidation);
  EXPECT_NE(r.err.find("3.rtfm"), std::string::npos) << r.err;
}

TEST_F(CliTest, TrainTwiceIsBitIdentical) {
  const auto a = dir_.path() / "a", b = dir_.path() / "b";
  ASSERT_EQ(train(a.string(), {"--seed", "5"}).code, kExitOk);
  ASSERT_EQ(train(b.string(), {"--seed", "5"}).code, kExitOk);
  EXPECT_EQ(read_text(a / "losses.txt"), read_text(b / "losses.txt"));
  EXPECT_FALSE(read_text(a / "losses.txt").empty());
  std::size_t files = 0;
  for (const auto& entry : std::filesystem::directory_iterator(a)) {
    EXPECT_EQ(read_text(entry.path()), read_text(b / entry.path().filename())) << entry.path();
    ++files;
  }
  EXPECT_GT(files, 10u);
}

TEST_F(CliTest, CheckpointReloadReproducesValidationMape) {
  const auto ck = dir_.path() / "ck";
  ASSERT_EQ(train(ck.string()).code, kExitOk);
  const KeyValues manifest = KeyValues::read(ck / "manifest.txt");
  const double best = manifest.get_double("best_val_mape");
  RunConfig config;
  config.data_dir = data_;
  const Dataset data = read_dataset(data_);
  Checkpoint loaded = load_checkpoint(ck);
  const Tensor road = read_rtfm(ck / "road_input.rtfm");
  const auto idx = indices_of(data.val);
  const FlowScaling scaling{manifest.get_double("normalization"), manifest.get_double("target_normalization")};
  const auto preds = predict(loaded.model, road, scaling, data, idx);
  EXPECT_EQ(mape_citywide(preds, data.fine_maps(data.val)), best);
}

TEST_F(CliTest, FlowScalingMatchesTrainingSplit) {
  const Dataset data = read_dataset(data_);
  const FlowScaling scaling = flow_scaling(data);
  double peak = 0.0, total = 0.0, count = 0.0;
  for (std::size_t i = data.train.begin; i < data.train.end; ++i) {
    const Tensor coarse = data.samples[i].coarse;
    const Tensor fine = data.samples[i].fine;
    for (double v : coarse.data()) peak = std::max(peak, v);
    for (double v : fine.data()) total += v / scaling.target;
    count += static_cast<double>(fine.size());
  }
  EXPECT_EQ(scaling.input, peak);
  EXPECT_NEAR(total / count, 1.0, 1e-12);

  const auto ck = dir_.path() / "ck";
  ASSERT_EQ(train(ck.string()).code, kExitOk);
  const KeyValues manifest = KeyValues::read(ck / "manifest.txt");
  EXPECT_EQ(manifest.get_double("normalization"), scaling.input);
  EXPECT_EQ(manifest.get_double("target_normalization"), scaling.target);
}

TEST_F(CliTest, EvalWritesReportAndIsRepeatable) {
  const auto ck = dir_.path() / "ck";
  ASSERT_EQ(train(ck.string()).code, kExitOk);
  const auto out1 = dir_.path() / "r1", out2 = dir_.path() / "r2";
  ASSERT_EQ(cli({"eval", "--data", data_, "--checkpoint", ck.string(), "--out", out1.string()}).code, kExitOk);
  ASSERT_EQ(cli({"eval", "--data", data_, "--checkpoint", ck.string(), "--out", out2.string()}).code, kExitOk);
  const std::string report = read_text(out1 / "report.txt");
  EXPECT_EQ(report, read_text(out2 / "report.txt"));
  for (const char* key : {"all.mape", "heavy.mape", "weekday.", "weekend.", "day.mape", "night.mape", "rush."}) {
    EXPECT_NE(report.find(key), std::string::npos) << key;
  }
  EXPECT_EQ(read_rtfm(out1 / "residuals.rtfm").shape(), (Shape{24, 8, 8, 2}));
  EXPECT_EQ(read_rtfm(out1 / "mean_abs_residual.rtfm").shape(), (Shape{8, 8, 2}));
}

TEST_F(CliTest, HistoricalAverageNeedsNoCheckpoint) {
  const auto out = dir_.path() / "ha";
  const CliRun r = cli({"eval", "--baseline", "ha", "--data", data_, "--checkpoint", (dir_.path() / "none").string(),
                     "--out", out.string()});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_NE(read_text(out / "report.txt").find("all.mape"), std::string::npos);
}

TEST_F(CliTest, EvalRejectsConflictingVariant) {
  const auto ck = dir_.path() / "ck";
  ASSERT_EQ(train(ck.string()).code, kExitOk);
  const CliRun r = cli({"eval", "--data", data_, "--checkpoint", ck.string(), "--out", (dir_.path() / "o").string(),
                     "--variant", "Short-Net"});
  EXPECT_EQ(r.code, kExitValidation);
}

TEST_F(CliTest, ToggledModelsTrain) {
  for (const std::vector<std::string>& toggle :
       {std::vector<std::string>{"--road-conv", "square2d"}, {"--road-weighting", "common"}, {"--query", "positional"},
        {"--variant", "Short-Net"}, {"--variant", "Short+Road"}, {"--variant", "Short+Long+Road"}}) {
    const auto ck = dir_.path() / ("ck_" + toggle[1]);
    const CliRun r = train(ck.string(), toggle);
    EXPECT_EQ(r.code, kExitOk) << toggle[0] << " " << toggle[1] << ": " << r.err;
    const KeyValues manifest = KeyValues::read(ck / "manifest.txt");
    EXPECT_TRUE(manifest.contains("variant"));
  }
}

TEST_F(CliTest, NonFiniteTrainingExitsWithNumericCode) {
  const CliRun r = train((dir_.path() / "nan").string(), {"--set", "lr=1e300"});
  EXPECT_EQ(r.code, kExitNumeric) << r.err;
}

TEST_F(CliTest, InferShapesClampAndDeterminism) {
  const auto ck = dir_.path() / "ck";
  ASSERT_EQ(train(ck.string()).code, kExitOk);
  const auto coarse = dir_.path() / "coarse.rtfm", ext = dir_.path() / "ext.rtfm";
  write_rtfm(coarse, Tensor::from({2, 2, 2}, {40, 3, 0, 12, 5, 5, 90, 1}));
  write_rtfm(ext, Tensor::from({5}, {2, 0.5, 0.25, 3, 17}));
  const auto o1 = dir_.path() / "o1.rtfm", o2 = dir_.path() / "o2.rtfm", o3 = dir_.path() / "o3.rtfm";
  const std::vector<std::string> base{"infer",     "--checkpoint", ck.string(),  "--coarse",
                                      coarse.string(), "--external", ext.string(), "--output"};
  auto with = [&](const std::filesystem::path& o, std::vector<std::string> extra = {}) {
    std::vector<std::string> a = base;
    a.push_back(o.string());
    a.insert(a.end(), extra.begin(), extra.end());
    return cli(a);
  };
  ASSERT_EQ(with(o1).code, kExitOk);
  ASSERT_EQ(with(o2).code, kExitOk);
  ASSERT_EQ(with(o3, {"--clamp-nonneg"}).code, kExitOk);
  const Tensor y1 = read_rtfm(o1);
  EXPECT_EQ(y1.shape(), (Shape{8, 8, 2}));
  EXPECT_TRUE(bit_equal(y1, read_rtfm(o2)));
  const Tensor clamped = read_rtfm(o3);
  for (double v : clamped.data()) EXPECT_GE(v, 0.0);
  write_rtfm(coarse, Tensor::zeros({3, 2, 2}));
  EXPECT_EQ(with(o1).code, kExitValidation);
}

TEST(CliGradcheck, FaultInjectionFailsOnlyThatComponent) {
  GradcheckOptions options;
  options.corrupt_component = "softmax";
  std::ostringstream log;
  const auto entries = cmd_gradcheck(options, log);
  std::size_t failures = 0;
  for (const auto& e : entries) {
    if (!e.passed) {
      EXPECT_EQ(e.component, "softmax");
      ++failures;
    }
  }
  EXPECT_EQ(failures, 1u);
  std::vector<std::string> names;
  for (const auto& e : entries) names.push_back(e.component);
  EXPECT_EQ(names, gradcheck_components());
}

TEST(CliGradcheck, UnknownFaultTargetRejected) {
  EXPECT_EQ(cli({"gradcheck", "--inject-fault", "warp_drive"}).code, kExitValidation);
}

}  // namespace
}  // namespace ratfm
