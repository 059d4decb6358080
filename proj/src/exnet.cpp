#include "exnet.hpp"

#include "errors.hpp"

namespace mdlrs {

std::vector<BlockSpec> exnet_specs(Flavor flavor, std::size_t in_width) {
  require(in_width >= 1, ErrorKind::Argument, "stream input width must be at least 1");
  std::vector<BlockSpec> specs;
  std::size_t width = in_width;
  for (std::size_t i = 0; i < 4; ++i) {
    BlockSpec s;
    s.in_width = width;
    s.out_width = kExWidths[i];
    s.has_bn = true;
    s.activation = Activation::ReLU;
    if (flavor == Flavor::FC) {
      s.kind = BlockKind::FC;
    } else {
      // 3x3 on Blocks 1 and 3, 1x1 + max pooling on Blocks 2 and 4.
      const bool odd = i % 2 == 0;
      s.kind = odd ? BlockKind::Conv3x3 : BlockKind::Conv1x1;
      s.pool = odd ? Pooling::None : Pooling::Max2;
    }
    specs.push_back(s);
    width = s.out_width;
  }
  return specs;
}

std::vector<BlockSpec> funet_specs(Flavor flavor, std::size_t in_width, std::size_t num_classes,
                                   std::size_t first_block) {
  require(first_block >= 5 && first_block <= 7, ErrorKind::Argument,
          "fusion blocks are numbered 5 to 7");
  require(num_classes >= 1, ErrorKind::Argument, "need at least one class");
  const BlockKind kind = flavor == Flavor::FC ? BlockKind::FC : BlockKind::Conv1x1;
  std::vector<BlockSpec> specs;
  std::size_t width = in_width;
  for (std::size_t block = first_block; block <= 7; ++block) {
    BlockSpec s;
    s.kind = kind;
    s.in_width = width;
    if (block == 7) {
      s.out_width = num_classes;
      s.has_bn = false;
      s.activation = Activation::Softmax;
    } else {
      s.out_width = kFuHiddenWidths[block - 5];
      s.has_bn = true;
      s.activation = Activation::ReLU;
      if (block == 6 && flavor == Flavor::CNN) s.pool = Pooling::Avg2;
    }
    specs.push_back(s);
    width = s.out_width;
  }
  return specs;
}

NetworkTopology make_topology(Flavor flavor, std::size_t d1, std::size_t d2,
                              std::size_t num_classes) {
  NetworkTopology t;
  t.flavor = flavor;
  t.d1 = d1;
  t.d2 = d2;
  t.num_classes = num_classes;
  t.patch_size = flavor == Flavor::CNN ? kPatchSize : 1;
  t.ex_blocks = exnet_specs(flavor, d1);
  t.fu_blocks = funet_specs(flavor, 2 * kExWidths[3], num_classes);
  return t;
}

template <class T>
void Block<T>::zero_grad() {
  auto zero_like = [](BasicTensor<T>& g, const BasicTensor<T>& p) {
    g = p.empty() ? BasicTensor<T>() : BasicTensor<T>(p.shape());
  };
  zero_like(grads.W, params.W);
  zero_like(grads.b, params.b);
  zero_like(grads.gamma, params.gamma);
  zero_like(grads.beta, params.beta);
}

template <class T>
std::vector<Block<T>> build_blocks(const std::vector<BlockSpec>& specs, Prng& prng) {
  std::vector<Block<T>> blocks;
  for (const auto& spec : specs) {
    Block<T> b;
    b.spec = spec;
    b.params = init_block_params<T>(spec, prng);
    b.zero_grad();
    blocks.push_back(std::move(b));
  }
  return blocks;
}

template <class T>
std::pair<StreamState<T>, StreamState<T>> build_exnet(const NetworkTopology& topology, Prng& prng) {
  require(topology.d1 >= 1 && topology.d2 >= 1, ErrorKind::Argument,
          "modality band counts must be at least 1");
  StreamState<T> s1, s2;
  s1.id = 1;
  s2.id = 2;
  Prng p1 = prng.child(1), p2 = prng.child(2);
  s1.blocks = build_blocks<T>(exnet_specs(topology.flavor, topology.d1), p1);
  s2.blocks = build_blocks<T>(exnet_specs(topology.flavor, topology.d2), p2);
  return {std::move(s1), std::move(s2)};
}

template <class T>
BasicTensor<T> run_blocks(std::vector<Block<T>>& blocks, const BasicTensor<T>& x, Mode mode) {
  BasicTensor<T> h = x;
  for (auto& b : blocks)
    h = block_forward(h, b.spec, b.params, mode, mode == Mode::Train ? &b.cache : nullptr);
  return h;
}

template <class T>
BasicTensor<T> backprop_blocks(std::span<Block<T>> blocks, BasicTensor<T> d_out) {
  for (auto it = blocks.rbegin(); it != blocks.rend(); ++it) {
    GradientBundle<T> g = block_backward(it->spec, it->params, it->cache, d_out);
    add_inplace(it->grads.W, g.d_params.W);
    add_inplace(it->grads.b, g.d_params.b);
    if (it->spec.has_bn) {
      add_inplace(it->grads.gamma, g.d_params.gamma);
      add_inplace(it->grads.beta, g.d_params.beta);
    }
    d_out = std::move(g.d_input);
  }
  return d_out;
}

template <class T>
BasicTensor<T> exnet_forward(StreamState<T>& stream, const BasicTensor<T>& batch, Mode mode) {
  require(!stream.blocks.empty(), ErrorKind::State, "stream has no blocks");
  const bool conv = stream.blocks.front().spec.is_conv();
  require(batch.rank() == (conv ? 4u : 2u), ErrorKind::Dimension,
          std::string("extraction stream expects ") + (conv ? "[b,7,7,d]" : "[b,d]") +
              " input, got " + shape_string(batch.shape()));
  return run_blocks(stream.blocks, batch, mode);
}

#define MDLRS_INSTANTIATE_EXNET(T)                                                               \
  template struct Block<T>;                                                                      \
  template std::vector<Block<T>> build_blocks<T>(const std::vector<BlockSpec>&, Prng&);          \
  template std::pair<StreamState<T>, StreamState<T>> build_exnet<T>(const NetworkTopology&,      \
                                                                    Prng&);                      \
  template BasicTensor<T> run_blocks(std::vector<Block<T>>&, const BasicTensor<T>&, Mode);       \
  template BasicTensor<T> backprop_blocks(std::span<Block<T>>, BasicTensor<T>);               \
  template BasicTensor<T> exnet_forward(StreamState<T>&, const BasicTensor<T>&, Mode);

MDLRS_INSTANTIATE_EXNET(float)
MDLRS_INSTANTIATE_EXNET(double)

#undef MDLRS_INSTANTIATE_EXNET

}  // namespace mdlrs
