#pragma once

// Application layer shared by the C API and the command line: run
// configuration, training on a dataset, evaluation and scene prediction.

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "checkpoint.hpp"
#include "dataio.hpp"
#include "metrics.hpp"
#include "training.hpp"

namespace mdlrs {

struct RunConfig {
  TrainConfig train;
  Flavor flavor = Flavor::FC;
  Architecture arch = Architecture::Middle;
  std::string dataset;
  std::string output = ".";
  std::vector<std::uint64_t> seeds = {0};
  Protocol protocol = Protocol::MML;
};

// Flat JSON object; unknown keys and malformed values are config errors.
// "seed" (one value) and "seeds" (list) are mutually exclusive.
RunConfig parse_run_config(const std::string& json_text);

// Single-modality models cannot be evaluated with their only modality zeroed.
void check_protocol(Architecture arch, Protocol protocol);

struct TrainedRun {
  Classifier classifier;
  std::vector<EpochRecord> history;
  int best_epoch = 0;
  double val_oa = 0.0;
};

// Scales with the dataset's training-pixel statistics, splits the training
// pixels, and trains; config.seed drives initialization, split and shuffling.
TrainedRun train_classifier(const MultimodalDataset& raw, Flavor flavor, Architecture arch,
                            const TrainConfig& config);

// Predicted class (1..C) for each requested pixel.
std::vector<std::int32_t> predict_pixels(Classifier& clf, const MultimodalDataset& raw,
                                         std::span<const std::size_t> pixels, Protocol protocol);

// Confusion matrix over the test-mask pixels.
ConfusionMatrix evaluate(Classifier& clf, const MultimodalDataset& raw, Protocol protocol);

// Class map over every pixel, row-major.
std::vector<std::int32_t> predict_scene(Classifier& clf, const MultimodalDataset& raw,
                                        Protocol protocol);

std::string history_csv(const std::vector<EpochRecord>& history);

// Map colors: class i uses entry (i - 1) mod 16, unlabeled/0 is black.
extern const std::array<std::array<std::uint8_t, 3>, 16> kPalette;

void write_class_raster(const std::vector<std::int32_t>& classes,
                        const std::filesystem::path& path);
// Binary PPM (P6).
void write_color_map(const std::vector<std::int32_t>& classes, std::size_t height,
                     std::size_t width, const std::filesystem::path& path);

}  // namespace mdlrs
