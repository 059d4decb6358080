#include "tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>

#include "errors.hpp"

namespace mdlrs {

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

template <class T>
BasicTensor<T>::BasicTensor(Shape shape, T fill)
    : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {}

template <class T>
BasicTensor<T>::BasicTensor(Shape shape, std::vector<T> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  require(shape_numel(shape_) == data_.size(), ErrorKind::Dimension,
          "tensor data length " + std::to_string(data_.size()) + " does not match shape " +
              shape_string(shape_));
}

template <class T>
BasicTensor<T> BasicTensor<T>::reshaped(Shape shape) const {
  require(shape_numel(shape) == data_.size(), ErrorKind::Dimension,
          "cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
  return BasicTensor(std::move(shape), data_);
}

template <class T>
void BasicTensor<T>::fill(T value) {
  std::fill(data_.begin(), data_.end(), value);
}

template <class T>
BasicTensor<T> matmul(const BasicTensor<T>& a, const BasicTensor<T>& b, bool transpose_a,
                      bool transpose_b) {
  require(a.rank() == 2 && b.rank() == 2, ErrorKind::Dimension,
          "matmul needs rank-2 operands, got " + shape_string(a.shape()) + " and " +
              shape_string(b.shape()));
  const std::size_t m = transpose_a ? a.dim(1) : a.dim(0);
  const std::size_t k = transpose_a ? a.dim(0) : a.dim(1);
  const std::size_t kb = transpose_b ? b.dim(1) : b.dim(0);
  const std::size_t n = transpose_b ? b.dim(0) : b.dim(1);
  require(k == kb, ErrorKind::Dimension,
          "matmul inner extents differ: " + shape_string(a.shape()) + " and " +
              shape_string(b.shape()));

  BasicTensor<T> c({m, n});
  const T* pa = a.ptr();
  const T* pb = b.ptr();
  T* pc = c.ptr();
  const std::size_t lda = a.dim(1);
  const std::size_t ldb = b.dim(1);

  if (!transpose_b) {
    // i-t-j order keeps the inner loop contiguous in b and c.
    for (std::size_t i = 0; i < m; ++i) {
      T* crow = pc + i * n;
      for (std::size_t t = 0; t < k; ++t) {
        const T av = transpose_a ? pa[t * lda + i] : pa[i * lda + t];
        if (av == T{0}) continue;
        const T* brow = pb + t * ldb;
        for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    }
  } else {
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        const T* brow = pb + j * ldb;
        T acc{0};
        if (transpose_a) {
          for (std::size_t t = 0; t < k; ++t) acc += pa[t * lda + i] * brow[t];
        } else {
          const T* arow = pa + i * lda;
          for (std::size_t t = 0; t < k; ++t) acc += arow[t] * brow[t];
        }
        pc[i * n + j] = acc;
      }
    }
  }
  return c;
}

namespace {

struct ConvGeometry {
  std::size_t batch, height, width, cin, kh, kw, cout;
};

template <class T>
ConvGeometry conv_geometry(const BasicTensor<T>& input, const BasicTensor<T>& kernels) {
  require(input.rank() == 4, ErrorKind::Dimension,
          "conv2d input must be [b,h,w,c], got " + shape_string(input.shape()));
  require(kernels.rank() == 4, ErrorKind::Dimension,
          "conv2d kernels must be [kh,kw,cin,cout], got " + shape_string(kernels.shape()));
  require(kernels.dim(2) == input.dim(3), ErrorKind::Dimension,
          "conv2d channel mismatch: input " + shape_string(input.shape()) + ", kernels " +
              shape_string(kernels.shape()));
  require(kernels.dim(0) % 2 == 1 && kernels.dim(1) % 2 == 1, ErrorKind::Dimension,
          "conv2d kernel extents must be odd, got " + shape_string(kernels.shape()));
  return {input.dim(0), input.dim(1), input.dim(2), input.dim(3),
          kernels.dim(0), kernels.dim(1), kernels.dim(3)};
}

// Patch matrix [b*h*w, kh*kw*cin] with zero padding; column order matches
// the row-major kernel layout, so the kernel tensor is used as a matrix as is.
template <class T>
BasicTensor<T> im2col(const BasicTensor<T>& input, const ConvGeometry& g) {
  const std::size_t cols = g.kh * g.kw * g.cin;
  BasicTensor<T> out({g.batch * g.height * g.width, cols});
  const std::ptrdiff_t ph = static_cast<std::ptrdiff_t>(g.kh / 2);
  const std::ptrdiff_t pw = static_cast<std::ptrdiff_t>(g.kw / 2);
  const T* in = input.ptr();
  T* o = out.ptr();
  for (std::size_t n = 0; n < g.batch; ++n) {
    for (std::size_t y = 0; y < g.height; ++y) {
      for (std::size_t x = 0; x < g.width; ++x) {
        T* row = o + ((n * g.height + y) * g.width + x) * cols;
        for (std::size_t i = 0; i < g.kh; ++i) {
          const std::ptrdiff_t sy = static_cast<std::ptrdiff_t>(y + i) - ph;
          for (std::size_t j = 0; j < g.kw; ++j) {
            const std::ptrdiff_t sx = static_cast<std::ptrdiff_t>(x + j) - pw;
            T* dst = row + (i * g.kw + j) * g.cin;
            if (sy < 0 || sx < 0 || sy >= static_cast<std::ptrdiff_t>(g.height) ||
                sx >= static_cast<std::ptrdiff_t>(g.width))
              continue;
            const T* src = in + ((n * g.height + static_cast<std::size_t>(sy)) * g.width +
                                 static_cast<std::size_t>(sx)) *
                                    g.cin;
            std::copy(src, src + g.cin, dst);
          }
        }
      }
    }
  }
  return out;
}

template <class T>
BasicTensor<T> col2im(const BasicTensor<T>& cols, const ConvGeometry& g) {
  BasicTensor<T> out({g.batch, g.height, g.width, g.cin});
  const std::size_t ncols = g.kh * g.kw * g.cin;
  const std::ptrdiff_t ph = static_cast<std::ptrdiff_t>(g.kh / 2);
  const std::ptrdiff_t pw = static_cast<std::ptrdiff_t>(g.kw / 2);
  const T* c = cols.ptr();
  T* o = out.ptr();
  for (std::size_t n = 0; n < g.batch; ++n) {
    for (std::size_t y = 0; y < g.height; ++y) {
      for (std::size_t x = 0; x < g.width; ++x) {
        const T* row = c + ((n * g.height + y) * g.width + x) * ncols;
        for (std::size_t i = 0; i < g.kh; ++i) {
          const std::ptrdiff_t sy = static_cast<std::ptrdiff_t>(y + i) - ph;
          if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(g.height)) continue;
          for (std::size_t j = 0; j < g.kw; ++j) {
            const std::ptrdiff_t sx = static_cast<std::ptrdiff_t>(x + j) - pw;
            if (sx < 0 || sx >= static_cast<std::ptrdiff_t>(g.width)) continue;
            const T* src = row + (i * g.kw + j) * g.cin;
            T* dst = o + ((n * g.height + static_cast<std::size_t>(sy)) * g.width +
                          static_cast<std::size_t>(sx)) *
                             g.cin;
            for (std::size_t ch = 0; ch < g.cin; ++ch) dst[ch] += src[ch];
          }
        }
      }
    }
  }
  return out;
}

}  // namespace

template <class T>
BasicTensor<T> conv2d_same(const BasicTensor<T>& input, const BasicTensor<T>& kernels,
                           const BasicTensor<T>& bias) {
  const ConvGeometry g = conv_geometry(input, kernels);
  require(bias.empty() || bias.size() == g.cout, ErrorKind::Dimension,
          "conv2d bias length " + std::to_string(bias.size()) + " does not match " +
              std::to_string(g.cout) + " output channels");
  const BasicTensor<T> w = kernels.reshaped({g.kh * g.kw * g.cin, g.cout});
  BasicTensor<T> out;
  if (g.kh == 1 && g.kw == 1) {
    out = matmul(input.reshaped({g.batch * g.height * g.width, g.cin}), w);
  } else {
    out = matmul(im2col(input, g), w);
  }
  if (!bias.empty()) {
    T* o = out.ptr();
    for (std::size_t r = 0; r < out.dim(0); ++r)
      for (std::size_t c = 0; c < g.cout; ++c) o[r * g.cout + c] += bias[c];
  }
  return out.reshaped({g.batch, g.height, g.width, g.cout});
}

template <class T>
Conv2dGrads<T> conv2d_same_backward(const BasicTensor<T>& input, const BasicTensor<T>& kernels,
                                    const BasicTensor<T>& d_output) {
  const ConvGeometry g = conv_geometry(input, kernels);
  const Shape expected{g.batch, g.height, g.width, g.cout};
  require(d_output.shape() == expected, ErrorKind::Dimension,
          "conv2d gradient shape " + shape_string(d_output.shape()) + " != " +
              shape_string(expected));
  const std::size_t pixels = g.batch * g.height * g.width;
  const BasicTensor<T> dz = d_output.reshaped({pixels, g.cout});
  const BasicTensor<T> w = kernels.reshaped({g.kh * g.kw * g.cin, g.cout});

  Conv2dGrads<T> grads;
  grads.d_bias = BasicTensor<T>({g.cout});
  for (std::size_t r = 0; r < pixels; ++r)
    for (std::size_t c = 0; c < g.cout; ++c) grads.d_bias[c] += dz[r * g.cout + c];

  if (g.kh == 1 && g.kw == 1) {
    const BasicTensor<T> x = input.reshaped({pixels, g.cin});
    grads.d_kernels = matmul(x, dz, true, false).reshaped(kernels.shape());
    grads.d_input = matmul(dz, w, false, true).reshaped(input.shape());
  } else {
    const BasicTensor<T> cols = im2col(input, g);
    grads.d_kernels = matmul(cols, dz, true, false).reshaped(kernels.shape());
    grads.d_input = col2im(matmul(dz, w, false, true), g);
  }
  return grads;
}

template <class T>
PoolResult<T> pool2d(const BasicTensor<T>& input, PoolKind kind) {
  require(input.rank() == 4, ErrorKind::Dimension,
          "pool2d input must be [b,h,w,c], got " + shape_string(input.shape()));
  const std::size_t nb = input.dim(0), h = input.dim(1), w = input.dim(2), c = input.dim(3);
  require(h >= 1 && w >= 1, ErrorKind::Dimension, "pool2d needs non-empty spatial extent");
  const std::size_t oh = (h + 1) / 2, ow = (w + 1) / 2;

  PoolResult<T> res;
  res.output = BasicTensor<T>({nb, oh, ow, c});
  if (kind == PoolKind::Max) res.argmax.resize(res.output.size());
  const T* in = input.ptr();
  T* out = res.output.ptr();
  for (std::size_t n = 0; n < nb; ++n) {
    for (std::size_t oy = 0; oy < oh; ++oy) {
      const std::size_t y0 = 2 * oy, y1 = std::min(y0 + 2, h);
      for (std::size_t ox = 0; ox < ow; ++ox) {
        const std::size_t x0 = 2 * ox, x1 = std::min(x0 + 2, w);
        for (std::size_t ch = 0; ch < c; ++ch) {
          const std::size_t oi = ((n * oh + oy) * ow + ox) * c + ch;
          if (kind == PoolKind::Max) {
            std::size_t best = ((n * h + y0) * w + x0) * c + ch;
            for (std::size_t y = y0; y < y1; ++y)
              for (std::size_t x = x0; x < x1; ++x) {
                const std::size_t ii = ((n * h + y) * w + x) * c + ch;
                if (in[ii] > in[best] || std::isnan(in[ii])) best = ii;
              }
            out[oi] = in[best];
            res.argmax[oi] = best;
          } else {
            T acc{0};
            for (std::size_t y = y0; y < y1; ++y)
              for (std::size_t x = x0; x < x1; ++x) acc += in[((n * h + y) * w + x) * c + ch];
            out[oi] = acc / static_cast<T>((y1 - y0) * (x1 - x0));
          }
        }
      }
    }
  }
  return res;
}

template <class T>
BasicTensor<T> pool2d_backward(const Shape& input_shape, PoolKind kind,
                               const std::vector<std::size_t>& argmax,
                               const BasicTensor<T>& d_output) {
  BasicTensor<T> d_input(input_shape);
  const std::size_t nb = input_shape.at(0), h = input_shape.at(1), w = input_shape.at(2),
                    c = input_shape.at(3);
  const std::size_t oh = (h + 1) / 2, ow = (w + 1) / 2;
  const Shape expected{nb, oh, ow, c};
  require(d_output.shape() == expected, ErrorKind::Dimension,
          "pool2d gradient shape " + shape_string(d_output.shape()) + " != " +
              shape_string(expected));
  if (kind == PoolKind::Max) {
    require(argmax.size() == d_output.size(), ErrorKind::State,
            "max-pool backward needs the argmax recorded by a forward pass");
    for (std::size_t i = 0; i < d_output.size(); ++i) d_input[argmax[i]] += d_output[i];
    return d_input;
  }
  for (std::size_t n = 0; n < nb; ++n)
    for (std::size_t oy = 0; oy < oh; ++oy) {
      const std::size_t y0 = 2 * oy, y1 = std::min(y0 + 2, h);
      for (std::size_t ox = 0; ox < ow; ++ox) {
        const std::size_t x0 = 2 * ox, x1 = std::min(x0 + 2, w);
        const T scale = T{1} / static_cast<T>((y1 - y0) * (x1 - x0));
        for (std::size_t ch = 0; ch < c; ++ch) {
          const T g = d_output[((n * oh + oy) * ow + ox) * c + ch] * scale;
          for (std::size_t y = y0; y < y1; ++y)
            for (std::size_t x = x0; x < x1; ++x) d_input[((n * h + y) * w + x) * c + ch] += g;
        }
      }
    }
  return d_input;
}

template <class T>
BasicTensor<T> concat_channels(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  require(a.rank() == b.rank() && a.rank() >= 1, ErrorKind::Dimension,
          "cannot concatenate " + shape_string(a.shape()) + " and " + shape_string(b.shape()));
  for (std::size_t i = 0; i + 1 < a.rank(); ++i)
    require(a.dim(i) == b.dim(i), ErrorKind::Dimension,
            "cannot concatenate " + shape_string(a.shape()) + " and " + shape_string(b.shape()));
  Shape shape = a.shape();
  const std::size_t ca = a.channels(), cb = b.channels();
  shape.back() = ca + cb;
  BasicTensor<T> out(shape);
  const std::size_t rows = a.rows();
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(a.ptr() + r * ca, ca, out.ptr() + r * (ca + cb));
    std::copy_n(b.ptr() + r * cb, cb, out.ptr() + r * (ca + cb) + ca);
  }
  return out;
}

template <class T>
std::pair<BasicTensor<T>, BasicTensor<T>> split_channels(const BasicTensor<T>& t,
                                                         std::size_t first_width) {
  const std::size_t c = t.channels();
  require(first_width <= c, ErrorKind::Dimension,
          "split width " + std::to_string(first_width) + " exceeds " + shape_string(t.shape()));
  Shape sa = t.shape(), sb = t.shape();
  sa.back() = first_width;
  sb.back() = c - first_width;
  BasicTensor<T> a(sa), b(sb);
  const std::size_t rows = t.rows();
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(t.ptr() + r * c, first_width, a.ptr() + r * first_width);
    std::copy_n(t.ptr() + r * c + first_width, c - first_width, b.ptr() + r * (c - first_width));
  }
  return {std::move(a), std::move(b)};
}

template <class T>
BasicTensor<T> concat_batch(std::span<const BasicTensor<T>> parts) {
  require(!parts.empty(), ErrorKind::Dimension, "concat_batch needs at least one tensor");
  Shape shape = parts.front().shape();
  std::size_t total = 0;
  for (const auto& p : parts) {
    require(p.rank() == shape.size() && std::equal(shape.begin() + 1, shape.end(),
                                                   p.shape().begin() + 1),
            ErrorKind::Dimension,
            "concat_batch shape mismatch: " + shape_string(shape) + " vs " +
                shape_string(p.shape()));
    total += p.dim(0);
  }
  shape.front() = total;
  std::vector<T> data;
  data.reserve(shape_numel(shape));
  for (const auto& p : parts) data.insert(data.end(), p.data().begin(), p.data().end());
  return BasicTensor<T>(shape, std::move(data));
}

template <class T>
std::vector<BasicTensor<T>> split_batch(const BasicTensor<T>& t, std::size_t parts) {
  require(parts > 0 && t.batch() % parts == 0, ErrorKind::Dimension,
          "cannot split batch of " + shape_string(t.shape()) + " into " + std::to_string(parts));
  Shape shape = t.shape();
  shape.front() /= parts;
  const std::size_t chunk = shape_numel(shape);
  std::vector<BasicTensor<T>> out;
  for (std::size_t i = 0; i < parts; ++i) {
    auto first = t.data().begin() + static_cast<std::ptrdiff_t>(i * chunk);
    out.emplace_back(shape, std::vector<T>(first, first + static_cast<std::ptrdiff_t>(chunk)));
  }
  return out;
}

template <class T>
BasicTensor<T> gather_batch(const BasicTensor<T>& t, std::span<const std::size_t> indices) {
  Shape shape = t.shape();
  const std::size_t chunk = t.size() / std::max<std::size_t>(t.batch(), 1);
  shape.front() = indices.size();
  BasicTensor<T> out(shape);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    require(indices[i] < t.batch(), ErrorKind::Argument, "gather index out of range");
    std::copy_n(t.ptr() + indices[i] * chunk, chunk, out.ptr() + i * chunk);
  }
  return out;
}

template <class T>
void add_inplace(BasicTensor<T>& acc, const BasicTensor<T>& x) {
  if (acc.empty() && !x.empty()) {
    acc = x;
    return;
  }
  require(acc.shape() == x.shape(), ErrorKind::Dimension,
          "cannot add " + shape_string(x.shape()) + " to " + shape_string(acc.shape()));
  for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += x[i];
}

template <class T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  BasicTensor<T> out = a;
  add_inplace(out, b);
  return out;
}

#define MDLRS_INSTANTIATE_TENSOR(T)                                                              \
  template class BasicTensor<T>;                                                                 \
  template BasicTensor<T> matmul(const BasicTensor<T>&, const BasicTensor<T>&, bool, bool);      \
  template BasicTensor<T> conv2d_same(const BasicTensor<T>&, const BasicTensor<T>&,             \
                                      const BasicTensor<T>&);                                    \
  template Conv2dGrads<T> conv2d_same_backward(const BasicTensor<T>&, const BasicTensor<T>&,    \
                                               const BasicTensor<T>&);                           \
  template PoolResult<T> pool2d(const BasicTensor<T>&, PoolKind);                                \
  template BasicTensor<T> pool2d_backward(const Shape&, PoolKind,                                \
                                          const std::vector<std::size_t>&,                       \
                                          const BasicTensor<T>&);                                \
  template BasicTensor<T> concat_channels(const BasicTensor<T>&, const BasicTensor<T>&);         \
  template std::pair<BasicTensor<T>, BasicTensor<T>> split_channels(const BasicTensor<T>&,      \
                                                                    std::size_t);                \
  template BasicTensor<T> concat_batch(std::span<const BasicTensor<T>>);                         \
  template std::vector<BasicTensor<T>> split_batch(const BasicTensor<T>&, std::size_t);          \
  template BasicTensor<T> gather_batch(const BasicTensor<T>&, std::span<const std::size_t>);     \
  template void add_inplace(BasicTensor<T>&, const BasicTensor<T>&);                             \
  template BasicTensor<T> add(const BasicTensor<T>&, const BasicTensor<T>&);

MDLRS_INSTANTIATE_TENSOR(float)
MDLRS_INSTANTIATE_TENSOR(double)

#undef MDLRS_INSTANTIATE_TENSOR

}  // namespace mdlrs
