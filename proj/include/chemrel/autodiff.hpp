#pragma once

// Minimal reverse-mode differentiation over dense row-major float64 tensors.
//
// A Tensor is a cheap handle; copies alias the same storage. Operations take a
// Tape and record a backward closure whenever any input requires a gradient.
// After Tape::backward(y) every requires_grad tensor reachable from y holds
// dy/d(tensor) in grad(). Parameters are ordinary leaf tensors; detach()
// yields a grad-free view over the same values for inference.

#include <cstddef>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

namespace chemrel::ad {

using Shape = std::vector<std::size_t>;

namespace detail {
struct TensorData;
}

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const noexcept { return data_ != nullptr; }

  const Shape& shape() const;
  std::size_t size() const;
  /// Rank-2 view: rank-1 tensors are one row, scalars are 1x1.
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const double> values() const;
  /// Mutable access for optimizers and initializers. Never mutate a tensor
  /// that a live tape still references.
  std::span<double> mutable_values();
  double item() const;
  double at(std::size_t r, std::size_t c) const;

  bool requires_grad() const;
  void set_requires_grad(bool flag);

  bool has_grad() const;
  /// Gradient buffer; all zeros if nothing was accumulated yet.
  std::span<const double> grad() const;
  /// Lazily allocates a zeroed gradient buffer.
  std::span<double> grad_buffer() const;
  void zero_grad() const;

  /// Same values, no gradient tracking, no shared grad buffer.
  Tensor detach() const;

  /// True when both handles refer to the same tensor node.
  bool same_node(const Tensor& other) const noexcept { return data_ == other.data_; }

 private:
  explicit Tensor(std::shared_ptr<detail::TensorData> data) : data_(std::move(data)) {}

  std::shared_ptr<detail::TensorData> data_;
};

/// Ordered record of the operations of one forward sweep.
class Tape {
 public:
  using Backward = std::function<void()>;

  void record(Backward fn);

  /// Seeds d(output)/d(output) = 1 and runs every recorded rule in reverse.
  /// Throws StaleTapeError when called a second time.
  void backward(const Tensor& output);

  std::size_t size() const noexcept { return ops_.size(); }
  bool consumed() const noexcept { return consumed_; }

 private:
  std::vector<Backward> ops_;
  bool consumed_ = false;
};

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b);
/// a * b^T without materializing the transpose.
Tensor matmul_transposed(Tape& tape, const Tensor& a, const Tensor& b);
Tensor transpose(Tape& tape, const Tensor& x);
Tensor add(Tape& tape, const Tensor& a, const Tensor& b);
/// x[m x n] + bias[1 x n] broadcast over rows.
Tensor add_row(Tape& tape, const Tensor& x, const Tensor& bias);
Tensor mul(Tape& tape, const Tensor& a, const Tensor& b);
Tensor scale(Tape& tape, const Tensor& x, double factor);
Tensor sum(Tape& tape, const Tensor& x);
Tensor relu(Tape& tape, const Tensor& x);

/// Row-wise softmax with max subtraction. Keys whose mask entry is true are
/// excluded (probability exactly 0, equivalent to a -inf score).
Tensor softmax_rows(Tape& tape, const Tensor& x, std::span<const bool> masked_keys = {});

/// Row-wise normalization over the last dimension followed by gain/bias.
Tensor layer_norm(Tape& tape, const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps = 1e-5);

/// Scalar Huber loss between a 1x1 prediction and a constant target.
Tensor huber_loss(Tape& tape, const Tensor& pred, double target, double delta = 1.0);

/// Rows of `table` selected by `ids`, in order.
Tensor gather_rows(Tape& tape, const Tensor& table, std::span<const std::size_t> ids);
Tensor select_row(Tape& tape, const Tensor& x, std::size_t row);
Tensor slice_cols(Tape& tape, const Tensor& x, std::size_t begin, std::size_t count);
Tensor concat_cols(Tape& tape, std::span<const Tensor> parts);

/// Plain value of Huber loss, shared by the op and by callers that only
/// need the number.
double huber_value(double pred, double target, double delta);

}  // namespace chemrel::ad
