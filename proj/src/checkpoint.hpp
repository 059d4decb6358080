#pragma once

#include <array>
#include <filesystem>

#include "dataio.hpp"
#include "funet.hpp"

namespace mdlrs {

// A trained model together with the band scaling it was trained under.
struct Classifier {
  Model<float> model;
  std::array<BandScaling, 2> scaling;

  const ModelSpec& spec() const { return model.spec(); }
};

// Serialized scalar count of a topology, from block widths alone:
// sum over blocks of k*k*in*out + out, plus 4*out per batch-norm block.
std::size_t expected_parameter_count(const ModelSpec& spec);

// Writes <dir>/manifest.json and <dir>/params.bin.
void save_checkpoint(const Classifier& clf, const std::filesystem::path& dir);
Classifier load_checkpoint(const std::filesystem::path& dir);

}  // namespace mdlrs
