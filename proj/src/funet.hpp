#pragma once

// Fusion network: the five fusion modules, Blocks 5-7, and the complete
// two-stream classifier with its loss and reverse pass.

#include <cstdint>
#include <optional>
#include <string_view>
#include <utility>
#include <vector>

#include "exnet.hpp"
#include "losses.hpp"

namespace mdlrs {

enum class FusionKind { Early, Middle, Late, EnDe, Cross };

// Model architectures: the single-modality baselines plus every fusion kind.
enum class Architecture { Single1, Single2, Early, Middle, Late, EnDe, Cross };

const char* to_string(Architecture arch);
const char* to_string(Flavor flavor);
std::optional<Architecture> parse_architecture(std::string_view name);
std::optional<Flavor> parse_flavor(std::string_view name);

struct ModelSpec {
  Flavor flavor = Flavor::FC;
  Architecture arch = Architecture::Middle;
  std::size_t d1 = 0;
  std::size_t d2 = 0;
  std::size_t num_classes = 0;

  friend bool operator==(const ModelSpec&, const ModelSpec&) = default;
};

template <class T>
struct ModelInput {
  BasicTensor<T> x1;  // [b,d1] or [b,7,7,d1]
  BasicTensor<T> x2;
};

template <class T>
struct FusedRepresentation {
  std::vector<BasicTensor<T>> rows;
  std::optional<std::pair<BasicTensor<T>, BasicTensor<T>>> recon;
};

template <class T>
struct CrossBlocks {
  std::vector<Block<T>>& w1;
  std::vector<Block<T>>& w2;
  std::vector<Block<T>>& w0;
};

template <class T>
struct FunetOutput {
  BasicTensor<T> probs;      // [b,C]; mean over rows for cross fusion
  BasicTensor<T> row_probs;  // [rows*b, C], rows stacked along the batch axis
};

// Raw-input concatenation along the band axis.
template <class T>
BasicTensor<T> fuse_early(const BasicTensor<T>& x1, const BasicTensor<T>& x2);

template <class T>
FusedRepresentation<T> fuse_middle(const BasicTensor<T>& a1, const BasicTensor<T>& a2);

// Each stream runs its own Blocks 5-6 before the concatenation.
template <class T>
FusedRepresentation<T> fuse_late(const BasicTensor<T>& a1, const BasicTensor<T>& a2,
                                 std::vector<Block<T>>& head1, std::vector<Block<T>>& head2,
                                 Mode mode);

// Middle-fusion row plus per-modality reconstructions from the decoders.
template <class T>
FusedRepresentation<T> fuse_ende(const BasicTensor<T>& a1, const BasicTensor<T>& a2,
                                 std::vector<Block<T>>& decoder1,
                                 std::vector<Block<T>>& decoder2, Mode mode);

// Three rows sharing W0/W1/W2:
//   a1' = f1(a1) + f1(a2),  a2' = f2(a2) + f2(a1)
//   row1 = [f0(a1'), f0(a2')], row2 = [f1(a1), f2(a1)], row3 = [f1(a2), f2(a2)]
// Each shared block is applied once to the two inputs stacked along the
// batch axis, so both share one set of batch-norm statistics.
template <class T>
FusedRepresentation<T> fuse_cross(const BasicTensor<T>& a1, const BasicTensor<T>& a2,
                                  CrossBlocks<T> blocks, Mode mode);

template <class T>
FunetOutput<T> funet_forward(const FusedRepresentation<T>& fused, std::vector<Block<T>>& fu_blocks,
                             Mode mode);

// Decoder input for one stream: FC features as is, CNN feature maps
// averaged over their spatial extent.
template <class T>
BasicTensor<T> decoder_input(const BasicTensor<T>& features);

// Reconstruction target: the pixel spectrum (FC) or the patch centre (CNN).
template <class T>
BasicTensor<T> reconstruction_target(const BasicTensor<T>& x);

struct LossWeights {
  double l2_coeff = 0.0;
  double recon_weight = 0.0;
};

struct LossBreakdown {
  double classification = 0.0;
  double reconstruction = 0.0;  // unweighted
  double l2 = 0.0;              // already multiplied by l2_coeff
  double recon_weight = 0.0;

  double total() const { return classification + recon_weight * reconstruction + l2; }
};

// Where a block sits in the parameter layout.
struct BlockSlot {
  int stream;       // 1, 2 or 0 (fusion stream)
  bool decoder;     // reconstruction decoder (En-De only)
};

template <class T>
class Model {
 public:
  Model() = default;
  Model(const ModelSpec& spec, std::uint64_t seed);

  const ModelSpec& spec() const noexcept { return spec_; }

  struct Forward {
    BasicTensor<T> probs;
    BasicTensor<T> row_probs;
    std::size_t num_rows = 1;
    std::optional<std::pair<BasicTensor<T>, BasicTensor<T>>> recon;
  };

  Forward forward(const ModelInput<T>& input, Mode mode, bool with_recon);

  // Class probabilities in inference mode.
  BasicTensor<T> predict(const ModelInput<T>& input);

  // Loss without touching gradients. Train mode uses batch statistics (and
  // updates the running estimates as a side effect).
  LossBreakdown loss(const ModelInput<T>& input, const BasicTensor<T>& onehot,
                     const LossWeights& weights, Mode mode);

  // Train-mode loss; leaves d(total)/d(param) in every block's grads.
  LossBreakdown loss_and_gradients(const ModelInput<T>& input, const BasicTensor<T>& onehot,
                                   const LossWeights& weights);

  bool reconstruction_active(const LossWeights& weights) const {
    return spec_.arch == Architecture::EnDe && weights.recon_weight > 0.0;
  }

  // Visits blocks in parameter-layout order: stream 1, stream 2, stream 0.
  template <class F>
  void for_each_block(F&& f) {
    visit(*this, std::forward<F>(f));
  }
  template <class F>
  void for_each_block(F&& f) const {
    visit(*this, std::forward<F>(f));
  }

  // Scalars stored per model: weights, biases, scale, shift, running stats.
  std::size_t parameter_count() const;

  void zero_grad();

  template <class U>
  Model<U> cast() const;

 private:
  template <class U>
  friend class Model;

  template <class Self, class F>
  static void visit(Self& self, F&& f) {
    auto each = [&](auto& blocks, int stream, bool decoder) {
      for (auto& b : blocks) f(b, BlockSlot{stream, decoder});
    };
    each(self.ex1_, 1, false);
    each(self.head1_, 1, false);
    each(self.cross1_, 1, false);
    each(self.dec1_, 1, true);
    each(self.ex2_, 2, false);
    each(self.head2_, 2, false);
    each(self.cross2_, 2, false);
    each(self.dec2_, 2, true);
    each(self.cross0_, 0, false);
    each(self.fu_, 0, false);
  }

  void check_input(const ModelInput<T>& input) const;
  void backward(const BasicTensor<T>& d_logits, const ModelInput<T>& input,
                const std::optional<std::pair<BasicTensor<T>, BasicTensor<T>>>& d_recon);

  ModelSpec spec_;
  std::vector<Block<T>> ex1_, ex2_, head1_, head2_, cross1_, cross2_, cross0_, dec1_, dec2_, fu_;
  // Extraction outputs of the last train-mode forward, for the reverse pass.
  BasicTensor<T> a1_, a2_;
  std::size_t rows_ = 1;
};

// Decoder block specs for one modality: 128 -> 64 -> 32 -> 16 -> d,
// Sigmoid activations and no batch norm.
std::vector<BlockSpec> decoder_specs(std::size_t out_width);

}  // namespace mdlrs
