#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace lagrobust {

using Shape = std::vector<std::size_t>;

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Raised when a forward result contains NaN or Inf.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class AutogradError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {
struct TensorImpl;
}

/// Dense row-major float32 tensor. Copies are shallow handles onto the same
/// storage; use clone() for an independent buffer.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, float value, bool requires_grad = false);
  static Tensor from_data(Shape shape, std::vector<float> data, bool requires_grad = false);
  static Tensor scalar(float value, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const float> data() const;
  // Writable view of the storage. Only legal on tensors that are not part of
  // a live tape (leaves, parameters between SGD steps).
  std::span<float> mutable_data();
  float item() const;

  bool requires_grad() const;
  void set_requires_grad(bool on);

  bool has_grad() const;
  std::span<const float> grad() const;
  // Allocates a zero gradient buffer on first use.
  std::span<float> grad_buffer() const;
  void zero_grad();

  // Shares storage, drops gradient state and tape linkage.
  Tensor detach() const;
  Tensor clone() const;

  bool same_storage(const Tensor& other) const;

 private:
  explicit Tensor(std::shared_ptr<detail::TensorImpl> impl) : impl_(std::move(impl)) {}
  std::shared_ptr<detail::TensorImpl> impl_;
  friend class Tape;
};

/// Ordered record of differentiable operations executed on this thread.
///
/// Constructing a Tape makes it the active tape of the calling thread until it
/// is destroyed; tapes nest. Ops record onto the active tape whenever one of
/// their operands requires a gradient. Without an active tape nothing is
/// recorded and results never require gradients.
class Tape {
 public:
  // Propagates the output gradient into the operands' gradient buffers.
  using BackwardFn = std::function<void(std::span<const float> grad_out)>;

  Tape();
  ~Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  static Tape* active();

  // True when an op with these operands must be recorded.
  static bool should_record(std::initializer_list<const Tensor*> operands);

  // Marks `output` as produced by this tape. The output becomes a
  // requires_grad tensor. Operands must already be recorded or leaves.
  void record(Tensor& output, BackwardFn backward);

  std::size_t size() const { return records_.size(); }

  // True when `t` is the live result of one of this tape's records.
  bool produced(const Tensor& t) const;

  // Fills d(loss)/d(t) into every requires_grad tensor reachable from loss.
  // Leaf gradients accumulate across calls; intermediate gradients are reset.
  void backward(const Tensor& loss);

 private:
  struct Record {
    std::shared_ptr<detail::TensorImpl> output;
    BackwardFn backward;
  };
  std::uint64_t id_;
  std::vector<Record> records_;
};

// Runs backward on the tape that produced `loss`.
void backward(const Tensor& loss);

// Throws NumericError naming `op` if any element is not finite.
void check_finite(const Tensor& t, const char* op);

}  // namespace lagrobust
