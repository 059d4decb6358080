#pragma once

// Multimodal raster datasets on disk, band scaling, patch extraction and
// the synthetic two-modality generator.

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "funet.hpp"
#include "training.hpp"

namespace mdlrs {

struct BandScaling {
  std::vector<float> min;
  std::vector<float> max;

  std::size_t bands() const noexcept { return min.size(); }
  bool constant(std::size_t band) const { return !(min[band] < max[band]); }
};

struct Modality {
  std::string name;
  std::size_t bands = 0;
  std::string file;
  std::vector<float> raster;  // band, then row, then column
};

struct MultimodalDataset {
  std::string name;
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t num_classes = 0;
  std::vector<Modality> modalities;
  std::vector<std::int32_t> labels;      // 0 = unlabeled
  std::vector<std::int32_t> train_mask;  // 0/1
  std::vector<std::int32_t> test_mask;
  std::array<BandScaling, 2> scaling;  // from training pixels

  std::size_t pixels() const noexcept { return height * width; }
  float value(std::size_t s, std::size_t band, std::size_t r, std::size_t c) const {
    return modalities[s].raster[(band * height + r) * width + c];
  }
  std::vector<std::size_t> train_pixels() const;
  std::vector<std::size_t> test_pixels() const;
};

// Checks sizes, label range, mask values, disjoint masks and that every
// masked pixel is labeled.
void validate(const MultimodalDataset& ds);

// Per-band min/max over training-mask pixels.
std::array<BandScaling, 2> compute_scaling(const MultimodalDataset& ds);

MultimodalDataset load_dataset(const std::filesystem::path& dir);
void save_dataset(const MultimodalDataset& ds, const std::filesystem::path& dir);

// (x - min) / (max - min) clamped to [0,1]; constant bands map to 0.
MultimodalDataset scale_bands(const MultimodalDataset& ds,
                              const std::array<BandScaling, 2>& scaling);
MultimodalDataset scale_bands(const MultimodalDataset& ds);

// size x size x d window centred at (r,c) with replicate padding:
// patch[i][j] = image[clamp(r - h + i)][clamp(c - h + j)], h = size / 2.
Tensor extract_patch(const MultimodalDataset& ds, std::size_t r, std::size_t c, std::size_t size,
                     std::size_t s);

std::vector<float> one_hot(int label, std::size_t num_classes);

struct PatchBatch {
  Tensor x1;      // [b,d1] or [b,7,7,d1]
  Tensor x2;
  Tensor onehot;  // [b,C]; empty when built without labels
  std::vector<int> labels;
  std::vector<std::pair<std::size_t, std::size_t>> coords;
};

// Inputs for the given pixel indices (row-major). FC uses the pixel
// spectrum, CNN a 7x7 patch.
PatchBatch make_batch(const MultimodalDataset& ds, std::span<const std::size_t> pixels,
                      Flavor flavor, bool with_labels);

// Replaces modality s (1 or 2) with zeros.
PatchBatch zero_modality(PatchBatch batch, int s);

enum class Protocol { MML, CML1, CML2 };

const char* to_string(Protocol p);
std::optional<Protocol> parse_protocol(std::string_view name);

// cml1 keeps only modality 1 (zeroes modality 2); cml2 keeps only modality 2.
PatchBatch apply_protocol(PatchBatch batch, Protocol p);

LabeledSet<float> to_labeled_set(const PatchBatch& batch, std::size_t num_classes);

struct SynthSpec {
  std::string name = "synthetic";
  std::size_t num_classes = 4;
  std::size_t bands1 = 8;
  std::size_t bands2 = 8;
  std::size_t train_per_class = 500;
  std::size_t test_per_class = 500;
  double noise = 0.15;
  double separation = 1.0;
  std::size_t height = 0;  // 0 picks a near-square scene
  std::size_t width = 0;
  std::uint64_t seed = 42;
};

// Reads a flat JSON object; unknown keys are config errors.
SynthSpec parse_synth_spec(const std::string& json_text);
void validate(const SynthSpec& spec);

// Gaussian blobs. Modality 1 class means differ only between {1,2} and
// {3,4}; modality 2 only between {1,3} and {2,4}.
MultimodalDataset synth_generate(const SynthSpec& spec, Prng& prng);

}  // namespace mdlrs
