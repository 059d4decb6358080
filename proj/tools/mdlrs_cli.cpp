// Command-line front end over the C API: synth, train, eval, predict.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mdlrs/mdlrs.h"

namespace fs = std::filesystem;

namespace {

struct Failure {
  mdlrs_status status;
  std::string message;
};

void check(mdlrs_status s, const std::string& context = {}) {
  if (s == MDLRS_OK) return;
  std::string msg = context.empty() ? "" : context + ": ";
  throw Failure{s, msg + mdlrs_last_error()};
}

template <class T, void (*Free)(T*)>
struct Deleter {
  void operator()(T* p) const { Free(p); }
};
using Dataset = std::unique_ptr<mdlrs_dataset, Deleter<mdlrs_dataset, mdlrs_dataset_free>>;
using Config = std::unique_ptr<mdlrs_config, Deleter<mdlrs_config, mdlrs_config_free>>;
using Model = std::unique_ptr<mdlrs_model, Deleter<mdlrs_model, mdlrs_model_free>>;
using History = std::unique_ptr<mdlrs_history, Deleter<mdlrs_history, mdlrs_history_free>>;
using Report = std::unique_ptr<mdlrs_report, Deleter<mdlrs_report, mdlrs_report_free>>;

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Failure{MDLRS_ERR_IO, "cannot open '" + path + "'"};
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
  if (!out) throw Failure{MDLRS_ERR_IO, "cannot write '" + path.string() + "'"};
}

void make_dirs(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Failure{MDLRS_ERR_IO, "cannot create '" + dir.string() + "': " + ec.message()};
}

Dataset load_dataset(const std::string& dir) {
  mdlrs_dataset* ds = nullptr;
  check(mdlrs_dataset_load(dir.c_str(), &ds), "loading dataset");
  return Dataset(ds);
}

Model load_model(const std::string& dir) {
  mdlrs_model* m = nullptr;
  check(mdlrs_model_load(dir.c_str(), &m), "loading checkpoint");
  return Model(m);
}

mdlrs_protocol parse_protocol(const std::string& name) {
  if (name == "mml") return MDLRS_MML;
  if (name == "cml1") return MDLRS_CML1;
  if (name == "cml2") return MDLRS_CML2;
  throw Failure{MDLRS_ERR_USAGE, "protocol must be mml, cml1 or cml2"};
}

const char* protocol_name(mdlrs_protocol p) {
  switch (p) {
    case MDLRS_MML: return "mml";
    case MDLRS_CML1: return "cml1";
    case MDLRS_CML2: return "cml2";
  }
  return "mml";
}

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string checkpoint;
  std::string dataset;
  std::string protocol;
};

int cmd_synth(const Options& o) {
  if (o.out.empty()) throw Failure{MDLRS_ERR_USAGE, "synth needs --out"};
  const std::string spec = o.config.empty() ? "{}" : read_file(o.config);
  mdlrs_dataset* raw = nullptr;
  check(mdlrs_dataset_synthesize(spec.c_str(), o.seed.has_value(), o.seed.value_or(0), &raw),
        "synthesizing dataset");
  Dataset ds(raw);
  check(mdlrs_dataset_save(ds.get(), o.out.c_str()), "writing dataset");
  mdlrs_dataset_info info{};
  check(mdlrs_dataset_get_info(ds.get(), &info));
  std::vector<size_t> train(info.num_classes), test(info.num_classes);
  check(mdlrs_dataset_class_counts(ds.get(), train.data(), test.data()));
  std::printf("wrote %zux%zu scene, bands %zu + %zu, to %s\n", info.height, info.width,
              info.bands1, info.bands2, o.out.c_str());
  std::printf("class  train  test\n");
  for (size_t k = 0; k < info.num_classes; ++k)
    std::printf("%5zu  %5zu  %4zu\n", k + 1, train[k], test[k]);
  return 0;
}

int cmd_train(const Options& o) {
  if (o.config.empty()) throw Failure{MDLRS_ERR_USAGE, "train needs --config"};
  mdlrs_config* raw_cfg = nullptr;
  check(mdlrs_config_load(o.config.c_str(), &raw_cfg), "reading config");
  Config cfg(raw_cfg);
  if (o.seed) check(mdlrs_config_set_seeds(cfg.get(), &*o.seed, 1));
  if (!o.out.empty()) check(mdlrs_config_set_output(cfg.get(), o.out.c_str()));
  const std::string dataset = o.dataset.empty() ? mdlrs_config_dataset(cfg.get()) : o.dataset;
  if (dataset.empty()) throw Failure{MDLRS_ERR_USAGE, "no dataset: set it in the config or pass --dataset"};
  const fs::path out_dir = mdlrs_config_output(cfg.get());
  Dataset ds = load_dataset(dataset);
  make_dirs(out_dir);

  std::vector<double> oas;
  for (size_t i = 0; i < mdlrs_config_seed_count(cfg.get()); ++i) {
    const std::uint64_t seed = mdlrs_config_seed(cfg.get(), i);
    mdlrs_model* m = nullptr;
    mdlrs_history* h = nullptr;
    check(mdlrs_train(ds.get(), cfg.get(), seed, &m, &h), "seed " + std::to_string(seed));
    Model model(m);
    History history(h);
    const std::string tag = "seed" + std::to_string(seed);
    check(mdlrs_model_save(model.get(), (out_dir / ("model_" + tag + ".ckpt")).string().c_str()));
    check(mdlrs_history_write_csv(history.get(),
                                  (out_dir / ("history_" + tag + ".csv")).string().c_str()));
    const double oa = 100.0 * mdlrs_history_best_val_oa(history.get());
    oas.push_back(oa);
    std::printf("seed %llu: %zu epochs, best epoch %d, validation OA %.2f\n",
                static_cast<unsigned long long>(seed), mdlrs_history_length(history.get()),
                mdlrs_history_best_epoch(history.get()), oa);
    std::fflush(stdout);
  }
  double mean = 0.0, var = 0.0;
  for (double v : oas) mean += v;
  mean /= static_cast<double>(oas.size());
  for (double v : oas) var += (v - mean) * (v - mean);
  const double sd = oas.size() > 1 ? std::sqrt(var / static_cast<double>(oas.size() - 1)) : 0.0;
  std::printf("validation OA over %zu seed(s): %.2f +- %.2f\n", oas.size(), mean, sd);
  return 0;
}

// Resolves dataset and protocol from flags, falling back to an optional config.
std::pair<std::string, mdlrs_protocol> eval_inputs(const Options& o) {
  std::string dataset = o.dataset;
  mdlrs_protocol protocol = MDLRS_MML;
  if (!o.config.empty()) {
    mdlrs_config* raw = nullptr;
    check(mdlrs_config_load(o.config.c_str(), &raw), "reading config");
    Config cfg(raw);
    if (dataset.empty()) dataset = mdlrs_config_dataset(cfg.get());
    protocol = mdlrs_config_protocol(cfg.get());
  }
  if (!o.protocol.empty()) protocol = parse_protocol(o.protocol);
  if (dataset.empty()) throw Failure{MDLRS_ERR_USAGE, "no dataset: pass --dataset"};
  if (o.checkpoint.empty()) throw Failure{MDLRS_ERR_USAGE, "missing --checkpoint"};
  return {dataset, protocol};
}

int cmd_eval(const Options& o) {
  const auto [dataset, protocol] = eval_inputs(o);
  Dataset ds = load_dataset(dataset);
  Model model = load_model(o.checkpoint);
  mdlrs_report* raw = nullptr;
  check(mdlrs_evaluate(model.get(), ds.get(), protocol, &raw), "evaluating");
  Report report(raw);
  std::printf("%s %s, protocol %s\n", mdlrs_model_flavor(model.get()),
              mdlrs_model_fusion(model.get()), protocol_name(protocol));
  std::fputs(mdlrs_report_text(report.get()), stdout);
  if (!o.out.empty()) {
    make_dirs(o.out);
    write_file(fs::path(o.out) / (std::string("report_") + protocol_name(protocol) + ".csv"),
               mdlrs_report_csv(report.get()));
  }
  return 0;
}

int cmd_predict(const Options& o) {
  const auto [dataset, protocol] = eval_inputs(o);
  if (o.out.empty()) throw Failure{MDLRS_ERR_USAGE, "predict needs --out"};
  Dataset ds = load_dataset(dataset);
  Model model = load_model(o.checkpoint);
  mdlrs_dataset_info info{};
  check(mdlrs_dataset_get_info(ds.get(), &info));
  std::vector<int32_t> classes(info.height * info.width);
  check(mdlrs_predict(model.get(), ds.get(), protocol, classes.data(), classes.size()),
        "predicting");
  make_dirs(o.out);
  const std::string raster = (fs::path(o.out) / "classes.i32").string();
  const std::string image = (fs::path(o.out) / "classmap.ppm").string();
  check(mdlrs_write_class_map(classes.data(), info.height, info.width, raster.c_str(),
                              image.c_str()),
        "writing map");
  std::printf("wrote %s and %s (%zux%zu)\n", raster.c_str(), image.c_str(), info.height,
              info.width);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multimodal remote-sensing pixel classifier"};
  app.require_subcommand(1);
  Options o;
  std::uint64_t seed = 0;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "JSON config (synth: generator spec)");
    sub->add_option("--seed", seed, "seed override");
    sub->add_option("--out", o.out, "output directory");
  };
  auto* synth = app.add_subcommand("synth", "write a synthetic two-modality dataset");
  common(synth);
  auto* train = app.add_subcommand("train", "train one model per seed");
  common(train);
  train->add_option("--dataset", o.dataset, "dataset directory (overrides the config)");
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on the test pixels");
  auto* predict = app.add_subcommand("predict", "classify every pixel and write a map");
  for (auto* sub : {eval, predict}) {
    common(sub);
    sub->add_option("--checkpoint", o.checkpoint, "checkpoint directory");
    sub->add_option("--dataset", o.dataset, "dataset directory");
    sub->add_option("--protocol", o.protocol, "mml, cml1 (modality 1 only) or cml2");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }
  for (auto* sub : {synth, train, eval, predict})
    if (sub->count("--seed")) o.seed = seed;

  try {
    if (*synth) return cmd_synth(o);
    if (*train) return cmd_train(o);
    if (*eval) return cmd_eval(o);
    return cmd_predict(o);
  } catch (const Failure& f) {
    std::fprintf(stderr, "mdlrs: %s: %s\n", mdlrs_status_name(f.status), f.message.c_str());
    return mdlrs_exit_code(f.status);
  }
}
