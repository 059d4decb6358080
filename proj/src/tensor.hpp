#pragma once

// Dense row-major tensors and the numeric kernels the network layers are
// built from. Layout is batch-major and channels-last: FC activations are
// [batch, features], CNN activations are [batch, height, width, channels].
// Every kernel is instantiated for float (training) and double (gradient
// checks).

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace mdlrs {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

template <class T>
class BasicTensor {
 public:
  using value_type = T;

  BasicTensor() = default;
  explicit BasicTensor(Shape shape, T fill = T{});
  BasicTensor(Shape shape, std::vector<T> data);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  // Extent of the leading (batch) axis.
  std::size_t batch() const { return shape_.empty() ? 0 : shape_.front(); }
  // Extent of the trailing feature/channel axis.
  std::size_t channels() const { return shape_.empty() ? 0 : shape_.back(); }
  // Number of feature vectors: product of every axis except the last.
  std::size_t rows() const { return channels() == 0 ? 0 : size() / channels(); }

  std::span<T> data() noexcept { return data_; }
  std::span<const T> data() const noexcept { return data_; }
  T* ptr() noexcept { return data_.data(); }
  const T* ptr() const noexcept { return data_.data(); }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  // Same data under a new shape with equal element count.
  BasicTensor reshaped(Shape shape) const;

  void fill(T value);

  template <class U>
  BasicTensor<U> cast() const {
    if (shape_.empty()) return {};
    std::vector<U> out(data_.begin(), data_.end());
    return BasicTensor<U>(shape_, std::move(out));
  }

  friend bool operator==(const BasicTensor&, const BasicTensor&) = default;

 private:
  Shape shape_;
  std::vector<T> data_;
};

using Tensor = BasicTensor<float>;
using Tensor64 = BasicTensor<double>;

// c = op(a) * op(b) for rank-2 operands; transpose flags select op.
template <class T>
BasicTensor<T> matmul(const BasicTensor<T>& a, const BasicTensor<T>& b, bool transpose_a = false,
                      bool transpose_b = false);

// 'Same' zero-padded, stride-1 cross-correlation.
// input [b,h,w,cin], kernels [kh,kw,cin,cout], bias [cout] (may be empty).
template <class T>
BasicTensor<T> conv2d_same(const BasicTensor<T>& input, const BasicTensor<T>& kernels,
                           const BasicTensor<T>& bias);

template <class T>
struct Conv2dGrads {
  BasicTensor<T> d_input;
  BasicTensor<T> d_kernels;
  BasicTensor<T> d_bias;
};

template <class T>
Conv2dGrads<T> conv2d_same_backward(const BasicTensor<T>& input, const BasicTensor<T>& kernels,
                                    const BasicTensor<T>& d_output);

enum class PoolKind { Max, Avg };

template <class T>
struct PoolResult {
  BasicTensor<T> output;
  // Flat input index of the selected element, one per output element (max only).
  std::vector<std::size_t> argmax;
};

// 2x2 window, stride 2, ceil mode. Boundary windows shrink to the valid
// region and average pooling divides by the actual window size.
template <class T>
PoolResult<T> pool2d(const BasicTensor<T>& input, PoolKind kind);

template <class T>
BasicTensor<T> pool2d_backward(const Shape& input_shape, PoolKind kind,
                               const std::vector<std::size_t>& argmax,
                               const BasicTensor<T>& d_output);

// Concatenation and splitting along the trailing feature/channel axis.
template <class T>
BasicTensor<T> concat_channels(const BasicTensor<T>& a, const BasicTensor<T>& b);

template <class T>
std::pair<BasicTensor<T>, BasicTensor<T>> split_channels(const BasicTensor<T>& t,
                                                         std::size_t first_width);

// Concatenation and splitting along the leading batch axis.
template <class T>
BasicTensor<T> concat_batch(std::span<const BasicTensor<T>> parts);

template <class T>
std::vector<BasicTensor<T>> split_batch(const BasicTensor<T>& t, std::size_t parts);

// Rows of t selected by batch index.
template <class T>
BasicTensor<T> gather_batch(const BasicTensor<T>& t, std::span<const std::size_t> indices);

template <class T>
void add_inplace(BasicTensor<T>& acc, const BasicTensor<T>& x);

template <class T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b);

}  // namespace mdlrs
