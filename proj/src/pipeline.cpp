#include "pipeline.hpp"

#include <algorithm>
#include <fstream>

#include <fmt/format.h>
#include <json.hpp>

#include "errors.hpp"

namespace mdlrs {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::size_t kInferenceBatch = 512;

}  // namespace

RunConfig parse_run_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    fail(ErrorKind::Config, std::string("config is not valid JSON: ") + e.what());
  }
  require(j.is_object(), ErrorKind::Config, "config must be a JSON object");
  RunConfig rc;
  TrainConfig& t = rc.train;
  bool have_seed = false, have_seeds = false;
  for (const auto& [key, v] : j.items()) {
    try {
      if (key == "base_lr") t.base_lr = v.get<double>();
      else if (key == "power") t.power = v.get<double>();
      else if (key == "lr_update_interval_epochs") t.lr_update_interval_epochs = v.get<int>();
      else if (key == "beta1") t.beta1 = v.get<double>();
      else if (key == "beta2") t.beta2 = v.get<double>();
      else if (key == "adam_eps") t.adam_eps = v.get<double>();
      else if (key == "batch_size") t.batch_size = v.get<std::size_t>();
      else if (key == "l2_coeff") t.l2_coeff = v.get<double>();
      else if (key == "recon_weight") t.recon_weight = v.get<double>();
      else if (key == "max_epochs") t.max_epochs = v.get<int>();
      else if (key == "patience") t.patience = v.get<int>();
      else if (key == "val_fraction") t.val_fraction = v.get<double>();
      else if (key == "seed") {
        rc.seeds = {v.get<std::uint64_t>()};
        have_seed = true;
      } else if (key == "seeds") {
        rc.seeds = v.get<std::vector<std::uint64_t>>();
        have_seeds = true;
      } else if (key == "flavor") {
        const auto f = parse_flavor(v.get<std::string>());
        if (!f) fail(ErrorKind::Config, "flavor must be fc or cnn");
        rc.flavor = *f;
      } else if (key == "fusion") {
        const auto a = parse_architecture(v.get<std::string>());
        if (!a)
          fail(ErrorKind::Config,
               "fusion must be one of single1, single2, early, middle, late, ende, cross");
        rc.arch = *a;
      } else if (key == "dataset") rc.dataset = v.get<std::string>();
      else if (key == "output") rc.output = v.get<std::string>();
      else if (key == "protocol") {
        const auto p = parse_protocol(v.get<std::string>());
        if (!p) fail(ErrorKind::Config, "protocol must be mml, cml1 or cml2");
        rc.protocol = *p;
      } else {
        fail(ErrorKind::Config, "unknown config key '" + key + "'");
      }
    } catch (const json::exception& e) {
      fail(ErrorKind::Config, "bad value for '" + key + "': " + e.what());
    }
  }
  require(!(have_seed && have_seeds), ErrorKind::Config, "give either 'seed' or 'seeds', not both");
  require(!rc.seeds.empty(), ErrorKind::Config, "'seeds' must not be empty");
  validate(t);
  check_protocol(rc.arch, rc.protocol);
  return rc;
}

void check_protocol(Architecture arch, Protocol protocol) {
  if ((arch == Architecture::Single1 && protocol == Protocol::CML2) ||
      (arch == Architecture::Single2 && protocol == Protocol::CML1))
    fail(ErrorKind::Validation, fmt::format("protocol {} zeroes the only modality of a {} model",
                                        to_string(protocol), to_string(arch)));
}

TrainedRun train_classifier(const MultimodalDataset& raw, Flavor flavor, Architecture arch,
                            const TrainConfig& config) {
  validate(config);
  const MultimodalDataset ds = scale_bands(raw, raw.scaling);
  const auto pixels = ds.train_pixels();
  require(!pixels.empty(), ErrorKind::Validation, "dataset has no training pixels");
  const PatchBatch batch = make_batch(ds, pixels, flavor, true);

  ModelSpec spec{flavor, arch, ds.modalities[0].bands, ds.modalities[1].bands, ds.num_classes};
  TrainResult<float> r =
      train(Model<float>(spec, config.seed), to_labeled_set(batch, ds.num_classes), config);
  TrainedRun run;
  run.classifier.model = std::move(r.model);
  run.classifier.scaling = raw.scaling;
  run.history = std::move(r.history);
  run.best_epoch = r.best_epoch;
  run.val_oa = r.best_val_oa;
  return run;
}

std::vector<std::int32_t> predict_pixels(Classifier& clf, const MultimodalDataset& raw,
                                         std::span<const std::size_t> pixels, Protocol protocol) {
  const ModelSpec& spec = clf.spec();
  check_protocol(spec.arch, protocol);
  require(raw.modalities.size() == 2 && raw.modalities[0].bands == spec.d1 &&
              raw.modalities[1].bands == spec.d2,
          ErrorKind::Dimension,
          fmt::format("model expects {}+{} bands, dataset has {}+{}", spec.d1, spec.d2,
                      raw.modalities[0].bands, raw.modalities[1].bands));
  require(raw.num_classes == spec.num_classes, ErrorKind::Dimension,
          fmt::format("model has {} classes, dataset {}", spec.num_classes, raw.num_classes));
  const MultimodalDataset ds = scale_bands(raw, clf.scaling);
  const std::size_t c = spec.num_classes;

  std::vector<std::int32_t> out;
  out.reserve(pixels.size());
  for (std::size_t begin = 0; begin < pixels.size(); begin += kInferenceBatch) {
    const std::size_t end = std::min(pixels.size(), begin + kInferenceBatch);
    PatchBatch b = apply_protocol(
        make_batch(ds, pixels.subspan(begin, end - begin), spec.flavor, false), protocol);
    const Tensor probs = clf.model.predict(ModelInput<float>{std::move(b.x1), std::move(b.x2)});
    for (std::size_t i = 0; i < end - begin; ++i) {
      const float* row = probs.ptr() + i * c;
      out.push_back(static_cast<std::int32_t>(std::max_element(row, row + c) - row) + 1);
    }
  }
  return out;
}

ConfusionMatrix evaluate(Classifier& clf, const MultimodalDataset& raw, Protocol protocol) {
  const auto pixels = raw.test_pixels();
  require(!pixels.empty(), ErrorKind::Validation, "dataset has no test pixels");
  const auto pred = predict_pixels(clf, raw, pixels, protocol);
  ConfusionMatrix m(raw.num_classes);
  for (std::size_t i = 0; i < pixels.size(); ++i) m.add(raw.labels[pixels[i]], pred[i]);
  return m;
}

std::vector<std::int32_t> predict_scene(Classifier& clf, const MultimodalDataset& raw,
                                        Protocol protocol) {
  std::vector<std::size_t> all(raw.pixels());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  return predict_pixels(clf, raw, all, protocol);
}

std::string history_csv(const std::vector<EpochRecord>& history) {
  std::string out = "epoch,lr,train_loss,val_loss,val_oa\n";
  for (const auto& r : history)
    out += fmt::format("{},{:.9g},{:.9g},{:.9g},{:.6f}\n", r.epoch, r.lr, r.train_loss, r.val_loss,
                       r.val_oa);
  return out;
}

const std::array<std::array<std::uint8_t, 3>, 16> kPalette = {{
    {230, 25, 75},   {60, 180, 75},   {255, 225, 25},  {0, 130, 200},
    {245, 130, 48},  {145, 30, 180},  {70, 240, 240},  {240, 50, 230},
    {210, 245, 60},  {250, 190, 190}, {0, 128, 128},   {230, 190, 255},
    {170, 110, 40},  {255, 250, 200}, {128, 0, 0},     {170, 255, 195},
}};

void write_class_raster(const std::vector<std::int32_t>& classes, const fs::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::Io, "cannot create '" + path.string() + "'");
  for (std::int32_t v : classes) {
    const auto u = static_cast<std::uint32_t>(v);
    const char le[4] = {static_cast<char>(u & 0xff), static_cast<char>((u >> 8) & 0xff),
                        static_cast<char>((u >> 16) & 0xff), static_cast<char>((u >> 24) & 0xff)};
    out.write(le, 4);
  }
  if (!out) fail(ErrorKind::Io, "write failed for '" + path.string() + "'");
}

void write_color_map(const std::vector<std::int32_t>& classes, std::size_t height,
                     std::size_t width, const fs::path& path) {
  require(classes.size() == height * width, ErrorKind::Dimension,
          fmt::format("{} classes for a {}x{} map", classes.size(), height, width));
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::Io, "cannot create '" + path.string() + "'");
  out << "P6\n" << width << ' ' << height << "\n255\n";
  for (std::int32_t v : classes) {
    std::array<std::uint8_t, 3> rgb = {0, 0, 0};
    if (v > 0) rgb = kPalette[static_cast<std::size_t>(v - 1) % kPalette.size()];
    out.write(reinterpret_cast<const char*>(rgb.data()), 3);
  }
  if (!out) fail(ErrorKind::Io, "write failed for '" + path.string() + "'");
}

}  // namespace mdlrs
