#include "funet.hpp"

#include "errors.hpp"

namespace mdlrs {

const char* to_string(Architecture arch) {
  switch (arch) {
    case Architecture::Single1: return "single1";
    case Architecture::Single2: return "single2";
    case Architecture::Early: return "early";
    case Architecture::Middle: return "middle";
    case Architecture::Late: return "late";
    case Architecture::EnDe: return "ende";
    case Architecture::Cross: return "cross";
  }
  return "?";
}

const char* to_string(Flavor flavor) {
  return flavor == Flavor::FC ? "fc" : "cnn";
}

std::optional<Architecture> parse_architecture(std::string_view name) {
  for (auto a : {Architecture::Single1, Architecture::Single2, Architecture::Early,
                 Architecture::Middle, Architecture::Late, Architecture::EnDe,
                 Architecture::Cross})
    if (name == to_string(a)) return a;
  return std::nullopt;
}

std::optional<Flavor> parse_flavor(std::string_view name) {
  if (name == "fc") return Flavor::FC;
  if (name == "cnn") return Flavor::CNN;
  return std::nullopt;
}

std::vector<BlockSpec> decoder_specs(std::size_t out_width) {
  require(out_width >= 1, ErrorKind::Config, "decoder output width must be at least 1");
  const std::size_t widths[4] = {kExWidths[2], kExWidths[1], kExWidths[0], out_width};
  std::vector<BlockSpec> specs;
  std::size_t in = kExWidths[3];
  for (std::size_t w : widths) {
    BlockSpec s;
    s.kind = BlockKind::FC;
    s.in_width = in;
    s.out_width = w;
    s.has_bn = false;
    s.activation = Activation::Sigmoid;
    specs.push_back(s);
    in = w;
  }
  return specs;
}

namespace {

BlockSpec cross_block_spec(Flavor flavor) {
  BlockSpec s;
  s.kind = flavor == Flavor::FC ? BlockKind::FC : BlockKind::Conv1x1;
  s.in_width = kExWidths[3];
  s.out_width = kFuHiddenWidths[0];
  s.has_bn = true;
  s.activation = Activation::ReLU;
  return s;
}

template <class T>
void accumulate(Block<T>& block, const GradientBundle<T>& g) {
  add_inplace(block.grads.W, g.d_params.W);
  add_inplace(block.grads.b, g.d_params.b);
  if (block.spec.has_bn) {
    add_inplace(block.grads.gamma, g.d_params.gamma);
    add_inplace(block.grads.beta, g.d_params.beta);
  }
}

template <class T>
BasicTensor<T> tile_rows(const BasicTensor<T>& t, std::size_t times) {
  if (times == 1) return t;
  std::vector<BasicTensor<T>> parts(times, t);
  return concat_batch<T>(parts);
}

// Spreads a [b,c] gradient of a spatial mean back over a [b,h,w,c] map.
template <class T>
BasicTensor<T> spatial_mean_backward(const BasicTensor<T>& d_mean, const Shape& shape) {
  if (shape.size() == 2) return d_mean;
  BasicTensor<T> d(shape);
  const std::size_t nb = shape[0], hw = shape[1] * shape[2], c = shape[3];
  const T scale = T{1} / static_cast<T>(hw);
  for (std::size_t n = 0; n < nb; ++n)
    for (std::size_t p = 0; p < hw; ++p)
      for (std::size_t j = 0; j < c; ++j) d[(n * hw + p) * c + j] = d_mean[n * c + j] * scale;
  return d;
}

}  // namespace

template <class T>
BasicTensor<T> fuse_early(const BasicTensor<T>& x1, const BasicTensor<T>& x2) {
  require(x1.batch() == x2.batch(), ErrorKind::Dimension,
          "early fusion batch mismatch: " + shape_string(x1.shape()) + " vs " +
              shape_string(x2.shape()));
  return concat_channels(x1, x2);
}

template <class T>
FusedRepresentation<T> fuse_middle(const BasicTensor<T>& a1, const BasicTensor<T>& a2) {
  FusedRepresentation<T> f;
  f.rows.push_back(concat_channels(a1, a2));
  return f;
}

template <class T>
FusedRepresentation<T> fuse_late(const BasicTensor<T>& a1, const BasicTensor<T>& a2,
                                 std::vector<Block<T>>& head1, std::vector<Block<T>>& head2,
                                 Mode mode) {
  require(a1.shape() == a2.shape(), ErrorKind::Dimension,
          "late fusion stream shapes differ: " + shape_string(a1.shape()) + " vs " +
              shape_string(a2.shape()));
  FusedRepresentation<T> f;
  f.rows.push_back(concat_channels(run_blocks(head1, a1, mode), run_blocks(head2, a2, mode)));
  return f;
}

template <class T>
BasicTensor<T> decoder_input(const BasicTensor<T>& features) {
  if (features.rank() == 2) return features;
  require(features.rank() == 4, ErrorKind::Dimension,
          "decoder input must be [b,c] or [b,h,w,c], got " + shape_string(features.shape()));
  const std::size_t nb = features.dim(0), hw = features.dim(1) * features.dim(2),
                    c = features.dim(3);
  BasicTensor<T> out({nb, c});
  for (std::size_t n = 0; n < nb; ++n)
    for (std::size_t p = 0; p < hw; ++p)
      for (std::size_t j = 0; j < c; ++j) out[n * c + j] += features[(n * hw + p) * c + j];
  const T scale = T{1} / static_cast<T>(hw);
  for (auto& v : out.data()) v *= scale;
  return out;
}

template <class T>
BasicTensor<T> reconstruction_target(const BasicTensor<T>& x) {
  if (x.rank() == 2) return x;
  require(x.rank() == 4, ErrorKind::Dimension,
          "reconstruction target must be [b,d] or [b,h,w,d], got " + shape_string(x.shape()));
  const std::size_t nb = x.dim(0), h = x.dim(1), w = x.dim(2), d = x.dim(3);
  BasicTensor<T> out({nb, d});
  for (std::size_t n = 0; n < nb; ++n)
    for (std::size_t j = 0; j < d; ++j)
      out[n * d + j] = x[((n * h + h / 2) * w + w / 2) * d + j];
  return out;
}

template <class T>
FusedRepresentation<T> fuse_ende(const BasicTensor<T>& a1, const BasicTensor<T>& a2,
                                 std::vector<Block<T>>& decoder1,
                                 std::vector<Block<T>>& decoder2, Mode mode) {
  require(!decoder1.empty() && !decoder2.empty(), ErrorKind::Config,
          "encoder-decoder fusion needs a decoder per modality");
  require(decoder1.front().spec.in_width == a1.channels() &&
              decoder2.front().spec.in_width == a2.channels(),
          ErrorKind::Config, "decoder input width does not match the extraction output");
  FusedRepresentation<T> f = fuse_middle(a1, a2);
  f.recon.emplace(run_blocks(decoder1, decoder_input(a1), mode),
                  run_blocks(decoder2, decoder_input(a2), mode));
  return f;
}

template <class T>
FusedRepresentation<T> fuse_cross(const BasicTensor<T>& a1, const BasicTensor<T>& a2,
                                  CrossBlocks<T> blocks, Mode mode) {
  require(a1.shape() == a2.shape(), ErrorKind::Dimension,
          "cross fusion stream shapes differ: " + shape_string(a1.shape()) + " vs " +
              shape_string(a2.shape()));
  const BasicTensor<T> stacked[2] = {a1, a2};
  const BasicTensor<T> both = concat_batch<T>(stacked);
  auto u1 = split_batch(run_blocks(blocks.w1, both, mode), 2);  // f1(a1), f1(a2)
  auto u2 = split_batch(run_blocks(blocks.w2, both, mode), 2);  // f2(a1), f2(a2)
  const BasicTensor<T> summed[2] = {add(u1[0], u1[1]), add(u2[1], u2[0])};
  auto q = split_batch(run_blocks(blocks.w0, concat_batch<T>(summed), mode), 2);

  FusedRepresentation<T> f;
  f.rows.push_back(concat_channels(q[0], q[1]));
  f.rows.push_back(concat_channels(u1[0], u2[0]));
  f.rows.push_back(concat_channels(u1[1], u2[1]));
  return f;
}

template <class T>
FunetOutput<T> funet_forward(const FusedRepresentation<T>& fused, std::vector<Block<T>>& fu_blocks,
                             Mode mode) {
  require(!fused.rows.empty(), ErrorKind::Dimension, "fused representation has no rows");
  for (const auto& r : fused.rows)
    require(r.shape() == fused.rows.front().shape(), ErrorKind::Dimension,
            "fused rows must share one shape");
  const std::size_t nrows = fused.rows.size();
  const BasicTensor<T> input =
      nrows == 1 ? fused.rows.front() : concat_batch<T>(fused.rows);
  BasicTensor<T> out = run_blocks(fu_blocks, input, mode);
  const std::size_t c = out.channels();

  FunetOutput<T> res;
  res.row_probs = out.reshaped({out.size() / c, c});
  if (nrows == 1) {
    res.probs = res.row_probs;
  } else {
    auto parts = split_batch(res.row_probs, nrows);
    res.probs = BasicTensor<T>(parts.front().shape());
    for (const auto& p : parts) add_inplace(res.probs, p);
    const T scale = T{1} / static_cast<T>(nrows);
    for (auto& v : res.probs.data()) v *= scale;
  }
  return res;
}

template <class T>
Model<T>::Model(const ModelSpec& spec, std::uint64_t seed) : spec_(spec) {
  require(spec.d1 >= 1 && spec.d2 >= 1, ErrorKind::Argument,
          "modality band counts must be at least 1");
  require(spec.num_classes >= 2, ErrorKind::Argument, "need at least two classes");
  const Prng root(seed);
  const Flavor fl = spec.flavor;
  const std::size_t c = spec.num_classes;
  const std::size_t feat = kExWidths[3];
  // Each block group draws from its own child generator, so groups shared
  // between architectures (e.g. middle and en-de) initialize identically.
  auto build = [&](const std::vector<BlockSpec>& specs, std::uint64_t tag) {
    Prng p = root.child(tag);
    return build_blocks<T>(specs, p);
  };

  switch (spec.arch) {
    case Architecture::Single1:
      ex1_ = build(exnet_specs(fl, spec.d1), 1);
      fu_ = build(funet_specs(fl, feat, c), 3);
      break;
    case Architecture::Single2:
      ex2_ = build(exnet_specs(fl, spec.d2), 2);
      fu_ = build(funet_specs(fl, feat, c), 3);
      break;
    case Architecture::Early:
      ex1_ = build(exnet_specs(fl, spec.d1 + spec.d2), 1);
      fu_ = build(funet_specs(fl, feat, c), 3);
      break;
    case Architecture::Middle:
    case Architecture::EnDe:
      ex1_ = build(exnet_specs(fl, spec.d1), 1);
      ex2_ = build(exnet_specs(fl, spec.d2), 2);
      fu_ = build(funet_specs(fl, 2 * feat, c), 3);
      if (spec.arch == Architecture::EnDe) {
        dec1_ = build(decoder_specs(spec.d1), 5);
        dec2_ = build(decoder_specs(spec.d2), 6);
      }
      break;
    case Architecture::Late: {
      ex1_ = build(exnet_specs(fl, spec.d1), 1);
      ex2_ = build(exnet_specs(fl, spec.d2), 2);
      auto head = funet_specs(fl, feat, c, 5);
      head.pop_back();
      head1_ = build(head, 7);
      head2_ = build(head, 8);
      fu_ = build(funet_specs(fl, 2 * head.back().out_width, c, 7), 3);
      break;
    }
    case Architecture::Cross:
      ex1_ = build(exnet_specs(fl, spec.d1), 1);
      ex2_ = build(exnet_specs(fl, spec.d2), 2);
      cross1_ = build({cross_block_spec(fl)}, 9);
      cross2_ = build({cross_block_spec(fl)}, 10);
      cross0_ = build({cross_block_spec(fl)}, 11);
      fu_ = build(funet_specs(fl, 2 * kFuHiddenWidths[0], c), 3);
      break;
  }
}

template <class T>
void Model<T>::check_input(const ModelInput<T>& input) const {
  const std::size_t rank = spec_.flavor == Flavor::FC ? 2 : 4;
  auto check = [&](const BasicTensor<T>& x, std::size_t bands, const char* name) {
    bool ok = x.rank() == rank && x.channels() == bands;
    if (ok && rank == 4) ok = x.dim(1) == kPatchSize && x.dim(2) == kPatchSize;
    require(ok, ErrorKind::Dimension,
            std::string(name) + " has shape " + shape_string(x.shape()) + ", expected " +
                (rank == 2 ? "[b," : "[b,7,7,") + std::to_string(bands) + "]");
  };
  const bool uses1 = spec_.arch != Architecture::Single2;
  const bool uses2 = spec_.arch != Architecture::Single1;
  if (uses1) check(input.x1, spec_.d1, "modality 1");
  if (uses2) check(input.x2, spec_.d2, "modality 2");
  if (uses1 && uses2)
    require(input.x1.batch() == input.x2.batch(), ErrorKind::Dimension,
            "modality batch sizes differ");
}

template <class T>
typename Model<T>::Forward Model<T>::forward(const ModelInput<T>& input, Mode mode,
                                             bool with_recon) {
  check_input(input);
  FusedRepresentation<T> fused;
  switch (spec_.arch) {
    case Architecture::Single1:
      fused.rows.push_back(run_blocks(ex1_, input.x1, mode));
      break;
    case Architecture::Single2:
      fused.rows.push_back(run_blocks(ex2_, input.x2, mode));
      break;
    case Architecture::Early:
      fused.rows.push_back(run_blocks(ex1_, fuse_early(input.x1, input.x2), mode));
      break;
    default: {
      BasicTensor<T> a1 = run_blocks(ex1_, input.x1, mode);
      BasicTensor<T> a2 = run_blocks(ex2_, input.x2, mode);
      switch (spec_.arch) {
        case Architecture::Late:
          fused = fuse_late(a1, a2, head1_, head2_, mode);
          break;
        case Architecture::EnDe:
          fused = with_recon ? fuse_ende(a1, a2, dec1_, dec2_, mode) : fuse_middle(a1, a2);
          break;
        case Architecture::Cross:
          fused = fuse_cross(a1, a2, CrossBlocks<T>{cross1_, cross2_, cross0_}, mode);
          break;
        default:
          fused = fuse_middle(a1, a2);
          break;
      }
      if (mode == Mode::Train) {
        a1_ = std::move(a1);
        a2_ = std::move(a2);
      }
    }
  }
  FunetOutput<T> out = funet_forward(fused, fu_, mode);
  if (mode == Mode::Train) rows_ = fused.rows.size();
  Forward f;
  f.probs = std::move(out.probs);
  f.row_probs = std::move(out.row_probs);
  f.num_rows = fused.rows.size();
  f.recon = std::move(fused.recon);
  return f;
}

template <class T>
BasicTensor<T> Model<T>::predict(const ModelInput<T>& input) {
  return forward(input, Mode::Infer, false).probs;
}

template <class T>
LossBreakdown Model<T>::loss(const ModelInput<T>& input, const BasicTensor<T>& onehot,
                             const LossWeights& weights, Mode mode) {
  const bool recon = reconstruction_active(weights);
  Forward f = forward(input, mode, recon);
  LossBreakdown lb;
  lb.classification = cross_entropy_loss(f.row_probs, tile_rows(onehot, f.num_rows));
  if (recon) {
    lb.recon_weight = weights.recon_weight;
    lb.reconstruction =
        reconstruction_loss(reconstruction_target(input.x1), reconstruction_target(input.x2),
                            f.recon->first, f.recon->second);
  }
  std::vector<const BasicTensor<T>*> ws;
  for_each_block([&](const Block<T>& b, BlockSlot slot) {
    if (!slot.decoder || recon) ws.push_back(&b.params.W);
  });
  lb.l2 = l2_penalty(ws, weights.l2_coeff);
  return lb;
}

template <class T>
LossBreakdown Model<T>::loss_and_gradients(const ModelInput<T>& input,
                                           const BasicTensor<T>& onehot,
                                           const LossWeights& weights) {
  zero_grad();
  const bool recon = reconstruction_active(weights);
  Forward f = forward(input, Mode::Train, recon);
  const BasicTensor<T> labels = tile_rows(onehot, f.num_rows);

  LossBreakdown lb;
  lb.classification = cross_entropy_loss(f.row_probs, labels);
  std::optional<std::pair<BasicTensor<T>, BasicTensor<T>>> d_recon;
  if (recon) {
    lb.recon_weight = weights.recon_weight;
    const BasicTensor<T> t1 = reconstruction_target(input.x1);
    const BasicTensor<T> t2 = reconstruction_target(input.x2);
    lb.reconstruction = reconstruction_loss(t1, t2, f.recon->first, f.recon->second);
    d_recon.emplace(reconstruction_grad(t1, f.recon->first, weights.recon_weight),
                    reconstruction_grad(t2, f.recon->second, weights.recon_weight));
  }

  backward(softmax_cross_entropy_grad(f.row_probs, labels), input, d_recon);

  std::vector<const BasicTensor<T>*> ws;
  for_each_block([&](Block<T>& b, BlockSlot slot) {
    if (slot.decoder && !recon) return;
    ws.push_back(&b.params.W);
    add_l2_gradient(b.grads.W, b.params.W, weights.l2_coeff);
  });
  lb.l2 = l2_penalty(ws, weights.l2_coeff);
  return lb;
}

template <class T>
void Model<T>::backward(const BasicTensor<T>& d_logits, const ModelInput<T>& input,
                        const std::optional<std::pair<BasicTensor<T>, BasicTensor<T>>>& d_recon) {
  (void)input;
  Block<T>& out = fu_.back();
  GradientBundle<T> g = block_backward_from_preactivation(
      out.spec, out.params, out.cache, d_logits.reshaped(out.cache.pre_activation.shape()));
  accumulate(out, g);
  BasicTensor<T> d_fused =
      backprop_blocks(std::span<Block<T>>(fu_).first(fu_.size() - 1), std::move(g.d_input));
  auto d_rows = split_batch(d_fused, rows_);

  switch (spec_.arch) {
    case Architecture::Single1:
    case Architecture::Early:
      backprop_blocks<T>(ex1_, d_rows[0]);
      return;
    case Architecture::Single2:
      backprop_blocks<T>(ex2_, d_rows[0]);
      return;
    case Architecture::Middle:
    case Architecture::EnDe: {
      auto [da1, da2] = split_channels(d_rows[0], a1_.channels());
      if (d_recon) {
        add_inplace(da1, spatial_mean_backward(backprop_blocks<T>(dec1_, d_recon->first),
                                               a1_.shape()));
        add_inplace(da2, spatial_mean_backward(backprop_blocks<T>(dec2_, d_recon->second),
                                               a2_.shape()));
      }
      backprop_blocks<T>(ex1_, std::move(da1));
      backprop_blocks<T>(ex2_, std::move(da2));
      return;
    }
    case Architecture::Late: {
      auto [dh1, dh2] = split_channels(d_rows[0], head1_.back().spec.out_width);
      backprop_blocks<T>(ex1_, backprop_blocks<T>(head1_, std::move(dh1)));
      backprop_blocks<T>(ex2_, backprop_blocks<T>(head2_, std::move(dh2)));
      return;
    }
    case Architecture::Cross: {
      const std::size_t w = cross0_.front().spec.out_width;
      auto [dq1, dq2] = split_channels(d_rows[0], w);
      auto [du11, du21] = split_channels(d_rows[1], w);
      auto [du12, du22] = split_channels(d_rows[2], w);
      const BasicTensor<T> dq[2] = {dq1, dq2};
      auto d_sum = split_batch(backprop_blocks<T>(cross0_, concat_batch<T>(dq)), 2);
      // a1' = u11 + u12, a2' = u22 + u21
      add_inplace(du11, d_sum[0]);
      add_inplace(du12, d_sum[0]);
      add_inplace(du22, d_sum[1]);
      add_inplace(du21, d_sum[1]);
      const BasicTensor<T> du1[2] = {du11, du12};
      const BasicTensor<T> du2[2] = {du21, du22};
      BasicTensor<T> d_both = backprop_blocks<T>(cross1_, concat_batch<T>(du1));
      add_inplace(d_both, backprop_blocks<T>(cross2_, concat_batch<T>(du2)));
      auto da = split_batch(d_both, 2);
      backprop_blocks<T>(ex1_, std::move(da[0]));
      backprop_blocks<T>(ex2_, std::move(da[1]));
      return;
    }
  }
}

template <class T>
std::size_t Model<T>::parameter_count() const {
  std::size_t n = 0;
  for_each_block([&](const Block<T>& b, BlockSlot) {
    const auto& p = b.params;
    n += p.W.size() + p.b.size() + p.gamma.size() + p.beta.size() + p.running_mean.size() +
         p.running_var.size();
  });
  return n;
}

template <class T>
void Model<T>::zero_grad() {
  for_each_block([](Block<T>& b, BlockSlot) { b.zero_grad(); });
}

template <class T>
template <class U>
Model<U> Model<T>::cast() const {
  Model<U> m;
  m.spec_ = spec_;
  auto copy = [](const std::vector<Block<T>>& src, std::vector<Block<U>>& dst) {
    dst.clear();
    for (const auto& b : src) {
      Block<U> nb;
      nb.spec = b.spec;
      nb.params = b.params.template cast<U>();
      nb.zero_grad();
      dst.push_back(std::move(nb));
    }
  };
  copy(ex1_, m.ex1_);
  copy(ex2_, m.ex2_);
  copy(head1_, m.head1_);
  copy(head2_, m.head2_);
  copy(cross1_, m.cross1_);
  copy(cross2_, m.cross2_);
  copy(cross0_, m.cross0_);
  copy(dec1_, m.dec1_);
  copy(dec2_, m.dec2_);
  copy(fu_, m.fu_);
  return m;
}

#define MDLRS_INSTANTIATE_FUNET(T)                                                               \
  template BasicTensor<T> fuse_early(const BasicTensor<T>&, const BasicTensor<T>&);              \
  template FusedRepresentation<T> fuse_middle(const BasicTensor<T>&, const BasicTensor<T>&);     \
  template FusedRepresentation<T> fuse_late(const BasicTensor<T>&, const BasicTensor<T>&,       \
                                            std::vector<Block<T>>&, std::vector<Block<T>>&,      \
                                            Mode);                                               \
  template FusedRepresentation<T> fuse_ende(const BasicTensor<T>&, const BasicTensor<T>&,       \
                                            std::vector<Block<T>>&, std::vector<Block<T>>&,      \
                                            Mode);                                               \
  template FusedRepresentation<T> fuse_cross(const BasicTensor<T>&, const BasicTensor<T>&,      \
                                             CrossBlocks<T>, Mode);                              \
  template FunetOutput<T> funet_forward(const FusedRepresentation<T>&, std::vector<Block<T>>&,  \
                                        Mode);                                                   \
  template BasicTensor<T> decoder_input(const BasicTensor<T>&);                                  \
  template BasicTensor<T> reconstruction_target(const BasicTensor<T>&);                          \
  template class Model<T>;

MDLRS_INSTANTIATE_FUNET(float)
MDLRS_INSTANTIATE_FUNET(double)

template Model<double> Model<float>::cast<double>() const;
template Model<float> Model<double>::cast<float>() const;
template Model<float> Model<float>::cast<float>() const;
template Model<double> Model<double>::cast<double>() const;

#undef MDLRS_INSTANTIATE_FUNET

}  // namespace mdlrs
