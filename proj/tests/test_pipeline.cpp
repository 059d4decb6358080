#include <gtest/gtest.h>

#include <cstring>
#include <fstream>
#include <iterator>

#include "pipeline.hpp"
#include "support.hpp"

using namespace mdlrs;
using namespace testing_support;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

MultimodalDataset small_synth(std::uint64_t seed = 5) {
  SynthSpec spec;
  spec.train_per_class = 20;
  spec.test_per_class = 10;
  spec.bands1 = 3;
  spec.bands2 = 2;
  Prng rng(seed);
  return synth_generate(spec, rng);
}

TrainConfig quick_config() {
  TrainConfig c;
  c.max_epochs = 3;
  c.batch_size = 16;
  c.seed = 7;
  return c;
}

}  // namespace

TEST(RunConfig, DefaultsAndOverrides) {
  const RunConfig d = parse_run_config("{}");
  EXPECT_EQ(d.train.base_lr, 0.001);
  EXPECT_EQ(d.train.power, 0.5);
  EXPECT_EQ(d.train.lr_update_interval_epochs, 30);
  EXPECT_EQ(d.train.batch_size, 64u);
  EXPECT_EQ(d.train.l2_coeff, 1e-4);
  EXPECT_EQ(d.train.recon_weight, 0.1);
  EXPECT_EQ(d.train.patience, 20);
  EXPECT_EQ(d.train.val_fraction, 0.2);
  EXPECT_EQ(d.seeds, (std::vector<std::uint64_t>{0}));
  EXPECT_EQ(d.protocol, Protocol::MML);

  const RunConfig c = parse_run_config(
      R"({"flavor": "cnn", "fusion": "cross", "batch_size": 256, "seeds": [1, 2, 3],
          "protocol": "cml1", "dataset": "data/houston", "max_epochs": 50})");
  EXPECT_EQ(c.flavor, Flavor::CNN);
  EXPECT_EQ(c.arch, Architecture::Cross);
  EXPECT_EQ(c.train.batch_size, 256u);
  EXPECT_EQ(c.seeds, (std::vector<std::uint64_t>{1, 2, 3}));
  EXPECT_EQ(c.protocol, Protocol::CML1);
  EXPECT_EQ(c.dataset, "data/houston");
  EXPECT_EQ(c.train.max_epochs, 50);
  EXPECT_EQ(parse_run_config(R"({"seed": 9})").seeds, (std::vector<std::uint64_t>{9}));
}

TEST(RunConfig, RejectsBadInput) {
  for (const char* text : {R"({"learning_rate": 0.1})", R"({"seed": 1, "seeds": [2]})",
                           R"({"seeds": []})", R"({"batch_size": "big"})", R"({"flavor": "rnn"})",
                           R"({"fusion": "deep"})", R"({"protocol": "cml3"})", "[]", "{",
                           R"({"val_fraction": 1.5})", R"({"base_lr": -1})"})
    EXPECT_EQ(error_kind([&] { parse_run_config(text); }), ErrorKind::Config) << text;
}

TEST(RunConfig, SingleModalityProtocolRestriction) {
  EXPECT_EQ(error_kind([] { check_protocol(Architecture::Single1, Protocol::CML2); }),
            ErrorKind::Validation);
  EXPECT_EQ(error_kind([] { check_protocol(Architecture::Single2, Protocol::CML1); }),
            ErrorKind::Validation);
  EXPECT_FALSE(error_kind([] { check_protocol(Architecture::Single1, Protocol::CML1); }));
  EXPECT_FALSE(error_kind([] { check_protocol(Architecture::Cross, Protocol::CML2); }));
  EXPECT_EQ(error_kind([] { parse_run_config(R"({"fusion": "single2", "protocol": "cml1"})"); }),
            ErrorKind::Validation);
}

TEST(Checkpoint, RoundTripIsBitIdentical) {
  const auto ds = small_synth();
  for (auto flavor : {Flavor::FC, Flavor::CNN})
    for (auto arch : {Architecture::Single2, Architecture::EnDe, Architecture::Cross}) {
      TrainConfig c = quick_config();
      c.max_epochs = 1;
      TrainedRun run = train_classifier(ds, flavor, arch, c);
      TempDir dir("ckpt");
      save_checkpoint(run.classifier, dir / "a");
      Classifier back = load_checkpoint(dir / "a");
      EXPECT_EQ(back.spec().arch, arch);
      EXPECT_EQ(back.spec().flavor, flavor);
      EXPECT_EQ(back.scaling[0].min, run.classifier.scaling[0].min);
      save_checkpoint(back, dir / "b");
      EXPECT_EQ(slurp(dir / "a" / "params.bin"), slurp(dir / "b" / "params.bin"));
      EXPECT_EQ(slurp(dir / "a" / "manifest.json"), slurp(dir / "b" / "manifest.json"));
      EXPECT_EQ(slurp(dir / "a" / "params.bin").size(), 4 * expected_parameter_count(back.spec()));
      EXPECT_EQ(predict_scene(run.classifier, ds, Protocol::MML),
                predict_scene(back, ds, Protocol::MML));
    }
}

TEST(Checkpoint, CorruptFilesAreRejected) {
  const auto ds = small_synth();
  TrainedRun run = train_classifier(ds, Flavor::FC, Architecture::Middle, quick_config());
  TempDir dir("corrupt");
  save_checkpoint(run.classifier, dir.path());
  const std::string params = slurp(dir / "params.bin");
  const std::string manifest = slurp(dir / "manifest.json");

  std::ofstream(dir / "params.bin", std::ios::binary) << params.substr(0, params.size() - 4);
  EXPECT_EQ(error_kind([&] { load_checkpoint(dir.path()); }), ErrorKind::Format);
  std::ofstream(dir / "params.bin", std::ios::binary) << params;
  EXPECT_FALSE(error_kind([&] { load_checkpoint(dir.path()); }));

  auto with = [&](const std::string& from, const std::string& to) {
    std::string m = manifest;
    const auto at = m.find(from);
    EXPECT_NE(at, std::string::npos) << from;
    m.replace(at, from.size(), to);
    std::ofstream(dir / "manifest.json") << m;
  };
  with("\"version\": 1", "\"version\": 2");
  EXPECT_EQ(error_kind([&] { load_checkpoint(dir.path()); }), ErrorKind::Format);
  with("\"fusion\": \"middle\"", "\"fusion\": \"late\"");
  EXPECT_EQ(error_kind([&] { load_checkpoint(dir.path()); }), ErrorKind::Format);
  with("\"fusion\": \"middle\"", "\"fusion\": \"sideways\"");
  EXPECT_EQ(error_kind([&] { load_checkpoint(dir.path()); }), ErrorKind::Format);
  std::filesystem::remove(dir / "manifest.json");
  EXPECT_EQ(error_kind([&] { load_checkpoint(dir.path()); }), ErrorKind::Io);
}

TEST(Pipeline, TrainingIsDeterministic) {
  const auto ds = small_synth();
  TempDir dir("det");
  for (int k = 0; k < 2; ++k) {
    TrainedRun run = train_classifier(ds, Flavor::CNN, Architecture::Late, quick_config());
    save_checkpoint(run.classifier, dir / std::to_string(k));
  }
  EXPECT_EQ(slurp(dir / "0" / "params.bin"), slurp(dir / "1" / "params.bin"));
}

TEST(Pipeline, EvaluateCoversTestPixels) {
  const auto ds = small_synth();
  TrainedRun run = train_classifier(ds, Flavor::FC, Architecture::Early, quick_config());
  EXPECT_EQ(run.history.size(), 3u);
  const ConfusionMatrix m = evaluate(run.classifier, ds, Protocol::CML1);
  EXPECT_EQ(m.total(), ds.test_pixels().size());
  const auto scene = predict_scene(run.classifier, ds, Protocol::MML);
  ASSERT_EQ(scene.size(), ds.pixels());
  for (auto v : scene) {
    EXPECT_GE(v, 1);
    EXPECT_LE(v, 4);
  }
}

TEST(Pipeline, MismatchedDatasetIsDimensionError) {
  const auto ds = small_synth();
  TrainedRun run = train_classifier(ds, Flavor::FC, Architecture::Middle, quick_config());
  SynthSpec other;
  other.train_per_class = 5;
  other.test_per_class = 5;
  other.bands1 = 4;
  other.bands2 = 2;
  Prng rng(1);
  const auto wrong = synth_generate(other, rng);
  EXPECT_EQ(error_kind([&] { evaluate(run.classifier, wrong, Protocol::MML); }),
            ErrorKind::Dimension);
  EXPECT_EQ(error_kind([&] { evaluate(run.classifier, ds, Protocol::CML2); }), std::nullopt);
}

TEST(Export, ClassRasterAndColorMap) {
  TempDir dir("export");
  const std::vector<std::int32_t> classes = {0, 1, 2, 17, 16, 3};
  write_class_raster(classes, dir / "c.i32");
  const std::string raw = slurp(dir / "c.i32");
  ASSERT_EQ(raw.size(), 24u);
  std::vector<std::int32_t> back(6);
  std::memcpy(back.data(), raw.data(), 24);
  EXPECT_EQ(back, classes);

  write_color_map(classes, 2, 3, dir / "m.ppm");
  const std::string ppm = slurp(dir / "m.ppm");
  const std::string header = "P6\n3 2\n255\n";
  ASSERT_EQ(ppm.size(), header.size() + 18);
  EXPECT_EQ(ppm.substr(0, header.size()), header);
  auto px = [&](std::size_t i) {
    const auto* p = reinterpret_cast<const unsigned char*>(ppm.data() + header.size() + 3 * i);
    return std::array<std::uint8_t, 3>{p[0], p[1], p[2]};
  };
  EXPECT_EQ(px(0), (std::array<std::uint8_t, 3>{0, 0, 0}));
  EXPECT_EQ(px(1), kPalette[0]);
  EXPECT_EQ(px(2), kPalette[1]);
  EXPECT_EQ(px(3), kPalette[0]);  // 17 wraps around
  EXPECT_EQ(px(4), kPalette[15]);
  EXPECT_EQ(error_kind([&] { write_color_map(classes, 2, 2, dir / "x.ppm"); }),
            ErrorKind::Dimension);
}

TEST(Export, HistoryCsv) {
  const std::vector<EpochRecord> h = {{1, 0.001, 1.5, 1.25, 0.5}, {2, 0.001, 1.0, 0.75, 0.625}};
  EXPECT_EQ(history_csv(h),
            "epoch,lr,train_loss,val_loss,val_oa\n1,0.001,1.5,1.25,0.500000\n2,0.001,1,0.75,0.625000\n");
}
