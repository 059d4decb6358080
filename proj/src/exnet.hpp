#pragma once

// Network topology and the per-modality extraction streams (Blocks 1-4).

#include <cstddef>
#include <span>
#include <vector>

#include "layers.hpp"

namespace mdlrs {

enum class Flavor { FC, CNN };

inline constexpr std::size_t kPatchSize = 7;

// Widths of the four extraction blocks and the three fusion-network blocks.
inline constexpr std::size_t kExWidths[4] = {16, 32, 64, 128};
inline constexpr std::size_t kFuHiddenWidths[2] = {128, 64};

struct NetworkTopology {
  Flavor flavor = Flavor::FC;
  std::size_t p = 4;  // last extraction block
  std::size_t q = 7;  // last fusion block
  std::vector<BlockSpec> ex_blocks;
  std::vector<BlockSpec> fu_blocks;
  std::size_t num_classes = 0;
  std::size_t d1 = 0;
  std::size_t d2 = 0;
  std::size_t patch_size = 1;
};

// Blocks 1-4 for one stream consuming in_width bands.
std::vector<BlockSpec> exnet_specs(Flavor flavor, std::size_t in_width);

// Blocks 5-7 (or a suffix of them, starting at first_block) consuming
// in_width features.
std::vector<BlockSpec> funet_specs(Flavor flavor, std::size_t in_width, std::size_t num_classes,
                                   std::size_t first_block = 5);

// Standard two-stream topology: Ex-Net specs are built for d1 (stream 2
// uses the same layout with d2), Fu-Net specs for the concatenated
// 256-wide Block-4 output.
NetworkTopology make_topology(Flavor flavor, std::size_t d1, std::size_t d2,
                              std::size_t num_classes);

// A block together with its training state.
template <class T>
struct Block {
  BlockSpec spec;
  LayerParams<T> params;
  LayerParams<T> grads;
  BlockCache<T> cache;

  void zero_grad();
};

template <class T>
struct StreamState {
  int id = 0;  // 1 and 2 for the modalities, 0 for the fusion stream
  std::vector<Block<T>> blocks;
};

template <class T>
std::vector<Block<T>> build_blocks(const std::vector<BlockSpec>& specs, Prng& prng);

template <class T>
std::pair<StreamState<T>, StreamState<T>> build_exnet(const NetworkTopology& topology, Prng& prng);

// Runs blocks in order, keeping caches in train mode.
template <class T>
BasicTensor<T> run_blocks(std::vector<Block<T>>& blocks, const BasicTensor<T>& x, Mode mode);

// Reverse of run_blocks; accumulates parameter gradients and returns the
// gradient with respect to the first block's input.
template <class T>
BasicTensor<T> backprop_blocks(std::span<Block<T>> blocks, BasicTensor<T> d_out);

template <class T>
BasicTensor<T> exnet_forward(StreamState<T>& stream, const BasicTensor<T>& batch, Mode mode);

}  // namespace mdlrs
