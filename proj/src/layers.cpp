#include "layers.hpp"

#include <algorithm>
#include <cmath>

#include "errors.hpp"

namespace mdlrs {

template <class T>
LayerParams<T> init_block_params(const BlockSpec& spec, Prng& prng) {
  require(spec.in_width > 0 && spec.out_width > 0, ErrorKind::Argument,
          "block widths must be positive");
  LayerParams<T> p;
  const std::size_t k = spec.kernel_extent();
  const std::size_t fan_in = spec.is_conv() ? k * k * spec.in_width : spec.in_width;
  const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
  Shape wshape = spec.is_conv() ? Shape{k, k, spec.in_width, spec.out_width}
                                : Shape{spec.in_width, spec.out_width};
  p.W = prng.normal_tensor<T>(std::move(wshape), 0.0, stddev);
  p.b = BasicTensor<T>({spec.out_width});
  if (spec.has_bn) {
    p.gamma = BasicTensor<T>({spec.out_width}, T{1});
    p.beta = BasicTensor<T>({spec.out_width});
    p.running_mean = BasicTensor<T>({spec.out_width});
    p.running_var = BasicTensor<T>({spec.out_width}, T{1});
  }
  return p;
}

template <class T>
BasicTensor<T> linear_forward(const BasicTensor<T>& x, const BlockSpec& spec,
                              const LayerParams<T>& params) {
  if (spec.is_conv()) return conv2d_same(x, params.W, params.b);
  require(x.rank() == 2, ErrorKind::Dimension,
          "fully connected input must be [b,d], got " + shape_string(x.shape()));
  BasicTensor<T> z = matmul(x, params.W);
  const std::size_t n = z.dim(1);
  require(params.b.size() == n, ErrorKind::Dimension, "fully connected bias length mismatch");
  for (std::size_t r = 0; r < z.dim(0); ++r)
    for (std::size_t c = 0; c < n; ++c) z[r * n + c] += params.b[c];
  return z;
}

template <class T>
BasicTensor<T> batchnorm_forward(const BasicTensor<T>& z, LayerParams<T>& params, Mode mode,
                                 BatchNormCache<T>* cache) {
  const std::size_t c = z.channels();
  const std::size_t rows = z.rows();
  require(params.gamma.size() == c && params.beta.size() == c, ErrorKind::Dimension,
          "batch norm parameters do not match " + std::to_string(c) + " channels");
  const T eps = static_cast<T>(kBatchNormEpsilon);

  std::vector<T> mean(c, T{0}), var(c, T{0});
  if (mode == Mode::Train) {
    require(z.batch() >= 2, ErrorKind::Training,
            "batch norm in train mode needs a batch of at least 2, got " +
                std::to_string(z.batch()));
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t j = 0; j < c; ++j) mean[j] += z[r * c + j];
    for (auto& m : mean) m /= static_cast<T>(rows);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t j = 0; j < c; ++j) {
        const T d = z[r * c + j] - mean[j];
        var[j] += d * d;
      }
    for (auto& v : var) v /= static_cast<T>(rows);

    const T momentum = static_cast<T>(kBatchNormMomentum);
    const T unbias = static_cast<T>(rows) / static_cast<T>(rows - 1);
    for (std::size_t j = 0; j < c; ++j) {
      params.running_mean[j] = momentum * params.running_mean[j] + (T{1} - momentum) * mean[j];
      params.running_var[j] =
          momentum * params.running_var[j] + (T{1} - momentum) * var[j] * unbias;
    }
  } else {
    for (std::size_t j = 0; j < c; ++j) {
      mean[j] = params.running_mean[j];
      var[j] = std::max(params.running_var[j], T{0});
    }
  }

  std::vector<T> inv_std(c);
  for (std::size_t j = 0; j < c; ++j) inv_std[j] = T{1} / std::sqrt(var[j] + eps);

  BasicTensor<T> normalized(z.shape());
  BasicTensor<T> out(z.shape());
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < c; ++j) {
      const std::size_t i = r * c + j;
      normalized[i] = (z[i] - mean[j]) * inv_std[j];
      out[i] = params.gamma[j] * normalized[i] + params.beta[j];
    }
  if (cache) {
    cache->normalized = std::move(normalized);
    cache->inv_std = std::move(inv_std);
  }
  return out;
}

template <class T>
BasicTensor<T> batchnorm_backward(const BatchNormCache<T>& cache, const BasicTensor<T>& gamma,
                                  const BasicTensor<T>& d_out, BasicTensor<T>& d_gamma,
                                  BasicTensor<T>& d_beta) {
  const BasicTensor<T>& xhat = cache.normalized;
  require(xhat.shape() == d_out.shape(), ErrorKind::Dimension,
          "batch norm gradient shape mismatch");
  const std::size_t c = d_out.channels();
  const std::size_t rows = d_out.rows();
  d_gamma = BasicTensor<T>({c});
  d_beta = BasicTensor<T>({c});
  std::vector<T> sum_dxhat(c, T{0}), sum_dxhat_xhat(c, T{0});
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < c; ++j) {
      const std::size_t i = r * c + j;
      d_gamma[j] += d_out[i] * xhat[i];
      d_beta[j] += d_out[i];
      const T dxhat = d_out[i] * gamma[j];
      sum_dxhat[j] += dxhat;
      sum_dxhat_xhat[j] += dxhat * xhat[i];
    }
  BasicTensor<T> dz(d_out.shape());
  const T n = static_cast<T>(rows);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < c; ++j) {
      const std::size_t i = r * c + j;
      const T dxhat = d_out[i] * gamma[j];
      dz[i] = cache.inv_std[j] / n * (n * dxhat - sum_dxhat[j] - xhat[i] * sum_dxhat_xhat[j]);
    }
  return dz;
}

template <class T>
BasicTensor<T> activation_forward(const BasicTensor<T>& z, Activation kind) {
  BasicTensor<T> out = z;
  switch (kind) {
    case Activation::None:
      break;
    case Activation::ReLU:
      for (auto& v : out.data()) v = v < T{0} ? T{0} : v;  // NaN passes through
      break;
    case Activation::Sigmoid:
      for (auto& v : out.data()) v = T{1} / (T{1} + std::exp(-v));
      break;
    case Activation::Softmax: {
      const std::size_t c = z.channels();
      for (std::size_t r = 0; r < z.rows(); ++r) {
        T* row = out.ptr() + r * c;
        const T mx = *std::max_element(row, row + c);
        T sum{0};
        for (std::size_t j = 0; j < c; ++j) {
          row[j] = std::exp(row[j] - mx);
          sum += row[j];
        }
        for (std::size_t j = 0; j < c; ++j) row[j] /= sum;
      }
      break;
    }
  }
  return out;
}

template <class T>
BasicTensor<T> activation_backward(const BasicTensor<T>& pre, const BasicTensor<T>& out,
                                   Activation kind, const BasicTensor<T>& d_out) {
  BasicTensor<T> d(d_out.shape());
  switch (kind) {
    case Activation::None:
      return d_out;
    case Activation::ReLU:
      for (std::size_t i = 0; i < d.size(); ++i) d[i] = pre[i] > T{0} ? d_out[i] : T{0};
      break;
    case Activation::Sigmoid:
      for (std::size_t i = 0; i < d.size(); ++i) d[i] = d_out[i] * out[i] * (T{1} - out[i]);
      break;
    case Activation::Softmax: {
      const std::size_t c = out.channels();
      for (std::size_t r = 0; r < out.rows(); ++r) {
        T dot{0};
        for (std::size_t j = 0; j < c; ++j) dot += d_out[r * c + j] * out[r * c + j];
        for (std::size_t j = 0; j < c; ++j)
          d[r * c + j] = out[r * c + j] * (d_out[r * c + j] - dot);
      }
      break;
    }
  }
  return d;
}

template <class T>
BasicTensor<T> block_forward(const BasicTensor<T>& x, const BlockSpec& spec,
                             LayerParams<T>& params, Mode mode, BlockCache<T>* cache) {
  require(x.channels() == spec.in_width, ErrorKind::Dimension,
          "block expects " + std::to_string(spec.in_width) + " input channels, got " +
              shape_string(x.shape()));
  BasicTensor<T> z = linear_forward(x, spec, params);
  BasicTensor<T> pre =
      spec.has_bn ? batchnorm_forward(z, params, mode, cache ? &cache->bn : nullptr) : std::move(z);
  BasicTensor<T> act = activation_forward(pre, spec.activation);

  BasicTensor<T> out;
  std::vector<std::size_t> argmax;
  if (spec.pool != Pooling::None) {
    auto pooled = pool2d(act, spec.pool == Pooling::Max2 ? PoolKind::Max : PoolKind::Avg);
    out = std::move(pooled.output);
    argmax = std::move(pooled.argmax);
  } else {
    out = act;
  }

  if (cache) {
    cache->mode = mode;
    cache->input = x;
    cache->pool_input_shape = act.shape();
    cache->pre_activation = std::move(pre);
    cache->activated = std::move(act);
    cache->argmax = std::move(argmax);
  }
  return out;
}

template <class T>
GradientBundle<T> block_backward_from_preactivation(const BlockSpec& spec,
                                                    const LayerParams<T>& params,
                                                    const BlockCache<T>& cache,
                                                    const BasicTensor<T>& d_pre) {
  require(cache.mode == Mode::Train, ErrorKind::State,
          "block backward needs a cache from a train-mode forward pass");
  GradientBundle<T> g;
  BasicTensor<T> dz = spec.has_bn ? batchnorm_backward(cache.bn, params.gamma, d_pre,
                                                       g.d_params.gamma, g.d_params.beta)
                                  : d_pre;
  if (spec.is_conv()) {
    auto cg = conv2d_same_backward(cache.input, params.W, dz);
    g.d_input = std::move(cg.d_input);
    g.d_params.W = std::move(cg.d_kernels);
    g.d_params.b = std::move(cg.d_bias);
  } else {
    g.d_params.W = matmul(cache.input, dz, true, false);
    g.d_input = matmul(dz, params.W, false, true);
    const std::size_t n = dz.dim(1);
    g.d_params.b = BasicTensor<T>({n});
    for (std::size_t r = 0; r < dz.dim(0); ++r)
      for (std::size_t c = 0; c < n; ++c) g.d_params.b[c] += dz[r * n + c];
  }
  return g;
}

template <class T>
GradientBundle<T> block_backward(const BlockSpec& spec, const LayerParams<T>& params,
                                 const BlockCache<T>& cache, const BasicTensor<T>& d_output) {
  require(cache.mode == Mode::Train, ErrorKind::State,
          "block backward needs a cache from a train-mode forward pass");
  BasicTensor<T> d_act =
      spec.pool != Pooling::None
          ? pool2d_backward(cache.pool_input_shape,
                            spec.pool == Pooling::Max2 ? PoolKind::Max : PoolKind::Avg,
                            cache.argmax, d_output)
          : d_output;
  BasicTensor<T> d_pre =
      activation_backward(cache.pre_activation, cache.activated, spec.activation, d_act);
  return block_backward_from_preactivation(spec, params, cache, d_pre);
}

Shape block_output_shape(const BlockSpec& spec, const Shape& input) {
  Shape out = input;
  require(!out.empty(), ErrorKind::Dimension, "block input shape is empty");
  require(out.back() == spec.in_width, ErrorKind::Dimension,
          "block expects " + std::to_string(spec.in_width) + " input features, got " +
              shape_string(input));
  require(out.size() == (spec.is_conv() ? 4u : 2u), ErrorKind::Dimension,
          std::string(spec.is_conv() ? "convolution" : "fully connected") +
              " block got input " + shape_string(input));
  out.back() = spec.out_width;
  if (spec.pool != Pooling::None) {
    require(out.size() == 4, ErrorKind::Dimension, "pooling needs a [b,h,w,c] input");
    out[1] = (out[1] + 1) / 2;
    out[2] = (out[2] + 1) / 2;
  }
  return out;
}

#define MDLRS_INSTANTIATE_LAYERS(T)                                                              \
  template LayerParams<T> init_block_params<T>(const BlockSpec&, Prng&);                         \
  template BasicTensor<T> linear_forward(const BasicTensor<T>&, const BlockSpec&,               \
                                         const LayerParams<T>&);                                 \
  template BasicTensor<T> batchnorm_forward(const BasicTensor<T>&, LayerParams<T>&, Mode,       \
                                            BatchNormCache<T>*);                                 \
  template BasicTensor<T> batchnorm_backward(const BatchNormCache<T>&, const BasicTensor<T>&,   \
                                             const BasicTensor<T>&, BasicTensor<T>&,             \
                                             BasicTensor<T>&);                                   \
  template BasicTensor<T> activation_forward(const BasicTensor<T>&, Activation);                 \
  template BasicTensor<T> activation_backward(const BasicTensor<T>&, const BasicTensor<T>&,     \
                                              Activation, const BasicTensor<T>&);                \
  template BasicTensor<T> block_forward(const BasicTensor<T>&, const BlockSpec&,                \
                                        LayerParams<T>&, Mode, BlockCache<T>*);                  \
  template GradientBundle<T> block_backward(const BlockSpec&, const LayerParams<T>&,            \
                                            const BlockCache<T>&, const BasicTensor<T>&);        \
  template GradientBundle<T> block_backward_from_preactivation(                                  \
      const BlockSpec&, const LayerParams<T>&, const BlockCache<T>&, const BasicTensor<T>&);

MDLRS_INSTANTIATE_LAYERS(float)
MDLRS_INSTANTIATE_LAYERS(double)

#undef MDLRS_INSTANTIATE_LAYERS

}  // namespace mdlrs
