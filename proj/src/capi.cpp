#include "mdlrs/mdlrs.h"

#include <cmath>
#include <fstream>
#include <limits>
#include <new>
#include <sstream>
#include <string>

#include "errors.hpp"
#include "pipeline.hpp"

using namespace mdlrs;

struct mdlrs_dataset {
  MultimodalDataset ds;
};

struct mdlrs_config {
  RunConfig rc;
};

struct mdlrs_model {
  Classifier clf;
  std::string fusion;
  std::string flavor;
};

struct mdlrs_history {
  std::vector<EpochRecord> records;
  int best_epoch = 0;
  double best_val_oa = 0.0;
};

struct mdlrs_report {
  ConfusionMatrix cm{1};
  MetricsReport report;
  std::string text;
  std::string csv;
};

namespace {

thread_local std::string g_last_error;

mdlrs_status status_of(ErrorKind k) {
  switch (k) {
    case ErrorKind::Usage: return MDLRS_ERR_USAGE;
    case ErrorKind::Config: return MDLRS_ERR_CONFIG;
    case ErrorKind::Io: return MDLRS_ERR_IO;
    case ErrorKind::Format: return MDLRS_ERR_FORMAT;
    case ErrorKind::Training: return MDLRS_ERR_TRAINING;
    case ErrorKind::State: return MDLRS_ERR_STATE;
    case ErrorKind::UndefinedValue: return MDLRS_ERR_UNDEFINED;
    case ErrorKind::Dimension: return MDLRS_ERR_DIMENSION;
    case ErrorKind::Argument: return MDLRS_ERR_ARGUMENT;
    case ErrorKind::Validation: return MDLRS_ERR_VALIDATION;
  }
  return MDLRS_ERR_INTERNAL;
}

mdlrs_status set_error(mdlrs_status s, std::string msg) {
  g_last_error = std::move(msg);
  return s;
}

template <class F>
mdlrs_status guarded(F&& f) {
  try {
    f();
    return MDLRS_OK;
  } catch (const Error& e) {
    return set_error(status_of(e.kind()), e.what());
  } catch (const std::bad_alloc&) {
    return set_error(MDLRS_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return set_error(MDLRS_ERR_INTERNAL, e.what());
  } catch (...) {
    return set_error(MDLRS_ERR_INTERNAL, "unknown failure");
  }
}

void need(const void* p, const char* what) {
  if (!p) fail(ErrorKind::Argument, std::string(what) + " must not be null");
}

Protocol to_protocol(mdlrs_protocol p) {
  switch (p) {
    case MDLRS_MML: return Protocol::MML;
    case MDLRS_CML1: return Protocol::CML1;
    case MDLRS_CML2: return Protocol::CML2;
  }
  fail(ErrorKind::Argument, "unknown protocol " + std::to_string(static_cast<int>(p)));
}

std::string slurp(const char* path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, std::string("cannot open '") + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

extern "C" {

const char* mdlrs_last_error(void) { return g_last_error.c_str(); }

const char* mdlrs_status_name(mdlrs_status s) {
  switch (s) {
    case MDLRS_OK: return "ok";
    case MDLRS_ERR_USAGE: return "usage error";
    case MDLRS_ERR_CONFIG: return "config error";
    case MDLRS_ERR_IO: return "I/O error";
    case MDLRS_ERR_FORMAT: return "format error";
    case MDLRS_ERR_TRAINING: return "training error";
    case MDLRS_ERR_STATE: return "state error";
    case MDLRS_ERR_UNDEFINED: return "undefined value";
    case MDLRS_ERR_DIMENSION: return "dimension error";
    case MDLRS_ERR_ARGUMENT: return "argument error";
    case MDLRS_ERR_VALIDATION: return "validation error";
    case MDLRS_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

int mdlrs_exit_code(mdlrs_status s) {
  switch (s) {
    case MDLRS_OK: return 0;
    case MDLRS_ERR_USAGE:
    case MDLRS_ERR_CONFIG: return 1;
    case MDLRS_ERR_IO:
    case MDLRS_ERR_FORMAT: return 2;
    case MDLRS_ERR_TRAINING:
    case MDLRS_ERR_STATE:
    case MDLRS_ERR_UNDEFINED:
    case MDLRS_ERR_INTERNAL: return 3;
    case MDLRS_ERR_DIMENSION:
    case MDLRS_ERR_ARGUMENT:
    case MDLRS_ERR_VALIDATION: return 4;
  }
  return 3;
}

mdlrs_status mdlrs_dataset_load(const char* dir, mdlrs_dataset** out) {
  return guarded([&] {
    need(dir, "dir");
    need(out, "out");
    *out = new mdlrs_dataset{load_dataset(dir)};
  });
}

mdlrs_status mdlrs_dataset_save(const mdlrs_dataset* ds, const char* dir) {
  return guarded([&] {
    need(ds, "dataset");
    need(dir, "dir");
    save_dataset(ds->ds, dir);
  });
}

mdlrs_status mdlrs_dataset_synthesize(const char* spec_json, int override_seed, uint64_t seed,
                                      mdlrs_dataset** out) {
  return guarded([&] {
    need(out, "out");
    SynthSpec spec = parse_synth_spec(spec_json ? spec_json : "{}");
    if (override_seed) spec.seed = seed;
    Prng prng(spec.seed);
    *out = new mdlrs_dataset{synth_generate(spec, prng)};
  });
}

mdlrs_status mdlrs_dataset_get_info(const mdlrs_dataset* ds, mdlrs_dataset_info* out) {
  return guarded([&] {
    need(ds, "dataset");
    need(out, "out");
    const auto& d = ds->ds;
    *out = mdlrs_dataset_info{d.height,
                              d.width,
                              d.num_classes,
                              d.modalities[0].bands,
                              d.modalities[1].bands,
                              d.train_pixels().size(),
                              d.test_pixels().size()};
  });
}

mdlrs_status mdlrs_dataset_class_counts(const mdlrs_dataset* ds, size_t* train_counts,
                                        size_t* test_counts) {
  return guarded([&] {
    need(ds, "dataset");
    const auto& d = ds->ds;
    if (train_counts) std::fill(train_counts, train_counts + d.num_classes, 0);
    if (test_counts) std::fill(test_counts, test_counts + d.num_classes, 0);
    for (std::size_t i = 0; i < d.pixels(); ++i) {
      if (d.labels[i] == 0) continue;
      const auto k = static_cast<std::size_t>(d.labels[i] - 1);
      if (train_counts && d.train_mask[i]) ++train_counts[k];
      if (test_counts && d.test_mask[i]) ++test_counts[k];
    }
  });
}

void mdlrs_dataset_free(mdlrs_dataset* ds) { delete ds; }

mdlrs_status mdlrs_config_parse(const char* json, mdlrs_config** out) {
  return guarded([&] {
    need(json, "json");
    need(out, "out");
    *out = new mdlrs_config{parse_run_config(json)};
  });
}

mdlrs_status mdlrs_config_load(const char* path, mdlrs_config** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    *out = new mdlrs_config{parse_run_config(slurp(path))};
  });
}

void mdlrs_config_free(mdlrs_config* cfg) { delete cfg; }

size_t mdlrs_config_seed_count(const mdlrs_config* cfg) { return cfg ? cfg->rc.seeds.size() : 0; }

uint64_t mdlrs_config_seed(const mdlrs_config* cfg, size_t index) {
  return cfg && index < cfg->rc.seeds.size() ? cfg->rc.seeds[index] : 0;
}

mdlrs_status mdlrs_config_set_seeds(mdlrs_config* cfg, const uint64_t* seeds, size_t n) {
  return guarded([&] {
    need(cfg, "config");
    need(seeds, "seeds");
    require(n > 0, ErrorKind::Argument, "seed list must not be empty");
    cfg->rc.seeds.assign(seeds, seeds + n);
  });
}

const char* mdlrs_config_dataset(const mdlrs_config* cfg) {
  return cfg ? cfg->rc.dataset.c_str() : "";
}

const char* mdlrs_config_output(const mdlrs_config* cfg) {
  return cfg ? cfg->rc.output.c_str() : "";
}

mdlrs_status mdlrs_config_set_output(mdlrs_config* cfg, const char* dir) {
  return guarded([&] {
    need(cfg, "config");
    need(dir, "dir");
    cfg->rc.output = dir;
  });
}

mdlrs_protocol mdlrs_config_protocol(const mdlrs_config* cfg) {
  if (!cfg) return MDLRS_MML;
  switch (cfg->rc.protocol) {
    case Protocol::MML: return MDLRS_MML;
    case Protocol::CML1: return MDLRS_CML1;
    case Protocol::CML2: return MDLRS_CML2;
  }
  return MDLRS_MML;
}

mdlrs_status mdlrs_train(const mdlrs_dataset* ds, const mdlrs_config* cfg, uint64_t seed,
                         mdlrs_model** model, mdlrs_history** history) {
  return guarded([&] {
    need(ds, "dataset");
    need(cfg, "config");
    need(model, "model");
    need(history, "history");
    TrainConfig tc = cfg->rc.train;
    tc.seed = seed;
    TrainedRun run = train_classifier(ds->ds, cfg->rc.flavor, cfg->rc.arch, tc);
    auto* m = new mdlrs_model{std::move(run.classifier), to_string(cfg->rc.arch),
                              to_string(cfg->rc.flavor)};
    *history = new mdlrs_history{std::move(run.history), run.best_epoch, run.val_oa};
    *model = m;
  });
}

size_t mdlrs_history_length(const mdlrs_history* h) { return h ? h->records.size() : 0; }

mdlrs_status mdlrs_history_get(const mdlrs_history* h, size_t index, mdlrs_epoch_record* out) {
  return guarded([&] {
    need(h, "history");
    need(out, "out");
    require(index < h->records.size(), ErrorKind::Argument, "history index out of range");
    const auto& r = h->records[index];
    *out = mdlrs_epoch_record{r.epoch, r.lr, r.train_loss, r.val_loss, r.val_oa};
  });
}

int mdlrs_history_best_epoch(const mdlrs_history* h) { return h ? h->best_epoch : 0; }

double mdlrs_history_best_val_oa(const mdlrs_history* h) { return h ? h->best_val_oa : 0.0; }

mdlrs_status mdlrs_history_write_csv(const mdlrs_history* h, const char* path) {
  return guarded([&] {
    need(h, "history");
    need(path, "path");
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorKind::Io, std::string("cannot create '") + path + "'");
    out << history_csv(h->records);
    if (!out) fail(ErrorKind::Io, std::string("write failed for '") + path + "'");
  });
}

void mdlrs_history_free(mdlrs_history* h) { delete h; }

mdlrs_status mdlrs_model_save(const mdlrs_model* model, const char* dir) {
  return guarded([&] {
    need(model, "model");
    need(dir, "dir");
    save_checkpoint(model->clf, dir);
  });
}

mdlrs_status mdlrs_model_load(const char* dir, mdlrs_model** out) {
  return guarded([&] {
    need(dir, "dir");
    need(out, "out");
    Classifier clf = load_checkpoint(dir);
    const ModelSpec spec = clf.spec();
    *out = new mdlrs_model{std::move(clf), to_string(spec.arch), to_string(spec.flavor)};
  });
}

size_t mdlrs_model_parameter_count(const mdlrs_model* model) {
  return model ? model->clf.model.parameter_count() : 0;
}

const char* mdlrs_model_fusion(const mdlrs_model* model) {
  return model ? model->fusion.c_str() : "";
}

const char* mdlrs_model_flavor(const mdlrs_model* model) {
  return model ? model->flavor.c_str() : "";
}

void mdlrs_model_free(mdlrs_model* model) { delete model; }

mdlrs_status mdlrs_evaluate(mdlrs_model* model, const mdlrs_dataset* ds, mdlrs_protocol protocol,
                            mdlrs_report** out) {
  return guarded([&] {
    need(model, "model");
    need(ds, "dataset");
    need(out, "out");
    auto* r = new mdlrs_report{evaluate(model->clf, ds->ds, to_protocol(protocol)), {}, {}, {}};
    try {
      r->report = make_report(r->cm);
      r->text = format_report_text(r->report);
      r->csv = format_report_csv(r->report);
    } catch (...) {
      delete r;
      throw;
    }
    *out = r;
  });
}

mdlrs_status mdlrs_predict(mdlrs_model* model, const mdlrs_dataset* ds, mdlrs_protocol protocol,
                           int32_t* classes, size_t capacity) {
  return guarded([&] {
    need(model, "model");
    need(ds, "dataset");
    need(classes, "classes");
    require(capacity >= ds->ds.pixels(), ErrorKind::Argument,
            "class buffer holds " + std::to_string(capacity) + " entries, scene has " +
                std::to_string(ds->ds.pixels()));
    const auto map = predict_scene(model->clf, ds->ds, to_protocol(protocol));
    std::copy(map.begin(), map.end(), classes);
  });
}

mdlrs_status mdlrs_write_class_map(const int32_t* classes, size_t height, size_t width,
                                   const char* raster_path, const char* image_path) {
  return guarded([&] {
    need(classes, "classes");
    std::vector<std::int32_t> v(classes, classes + height * width);
    if (raster_path) write_class_raster(v, raster_path);
    if (image_path) write_color_map(v, height, width, image_path);
  });
}

double mdlrs_report_oa(const mdlrs_report* r) { return r ? r->report.oa : 0.0; }
double mdlrs_report_aa(const mdlrs_report* r) { return r ? r->report.aa : 0.0; }

double mdlrs_report_kappa(const mdlrs_report* r) {
  if (!r || !r->report.kappa) return std::numeric_limits<double>::quiet_NaN();
  return *r->report.kappa;
}

size_t mdlrs_report_num_classes(const mdlrs_report* r) { return r ? r->report.num_classes : 0; }

double mdlrs_report_class_accuracy(const mdlrs_report* r, size_t cls, int* present) {
  const bool ok = r && cls >= 1 && cls <= r->report.per_class.size() &&
                  r->report.per_class[cls - 1].has_value();
  if (present) *present = ok ? 1 : 0;
  return ok ? *r->report.per_class[cls - 1] : 0.0;
}

uint64_t mdlrs_report_confusion(const mdlrs_report* r, size_t truth, size_t predicted) {
  if (!r || truth < 1 || predicted < 1 || truth > r->cm.num_classes() ||
      predicted > r->cm.num_classes())
    return 0;
  return r->cm.at(static_cast<int>(truth), static_cast<int>(predicted));
}

const char* mdlrs_report_text(const mdlrs_report* r) { return r ? r->text.c_str() : ""; }
const char* mdlrs_report_csv(const mdlrs_report* r) { return r ? r->csv.c_str() : ""; }

void mdlrs_report_free(mdlrs_report* r) { delete r; }

}  // extern "C"
