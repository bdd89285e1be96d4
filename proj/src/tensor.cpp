#include "lagrobust/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <sstream>

namespace lagrobust {

namespace detail {

struct TensorImpl {
  Shape shape;
  std::shared_ptr<std::vector<float>> data;
  std::vector<float> grad;
  bool requires_grad = false;
  std::uint64_t tape_id = 0;  // 0: leaf / not recorded
  std::size_t record = 0;
};

}  // namespace detail

namespace {

constexpr std::uint64_t kNoTape = 0;
std::atomic<std::uint64_t> g_next_tape_id{1};
thread_local std::vector<Tape*> t_tape_stack;

std::shared_ptr<detail::TensorImpl> make_impl(Shape shape, std::vector<float> data, bool requires_grad) {
  for (auto d : shape) {
    if (d == 0) throw ShapeError("tensor dimensions must be positive, got " + shape_str(shape));
  }
  if (shape.empty()) throw ShapeError("tensor needs at least one dimension");
  if (shape_numel(shape) != data.size()) {
    throw ShapeError("shape " + shape_str(shape) + " does not match data length " + std::to_string(data.size()));
  }
  auto impl = std::make_shared<detail::TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::make_shared<std::vector<float>>(std::move(data));
  impl->requires_grad = requires_grad;
  return impl;
}

}  // namespace

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  auto n = shape_numel(shape);
  return Tensor(make_impl(std::move(shape), std::vector<float>(n, 0.0f), requires_grad));
}

Tensor Tensor::full(Shape shape, float value, bool requires_grad) {
  auto n = shape_numel(shape);
  return Tensor(make_impl(std::move(shape), std::vector<float>(n, value), requires_grad));
}

Tensor Tensor::from_data(Shape shape, std::vector<float> data, bool requires_grad) {
  return Tensor(make_impl(std::move(shape), std::move(data), requires_grad));
}

Tensor Tensor::scalar(float value, bool requires_grad) { return from_data({1}, {value}, requires_grad); }

const Shape& Tensor::shape() const {
  if (!impl_) throw AutogradError("use of undefined tensor");
  return impl_->shape;
}

std::size_t Tensor::dim(std::size_t axis) const {
  const auto& s = shape();
  if (axis >= s.size()) throw ShapeError("axis " + std::to_string(axis) + " out of range for " + shape_str(s));
  return s[axis];
}

std::size_t Tensor::numel() const { return impl_ ? impl_->data->size() : 0; }

std::span<const float> Tensor::data() const {
  if (!impl_) throw AutogradError("use of undefined tensor");
  return {impl_->data->data(), impl_->data->size()};
}

std::span<float> Tensor::mutable_data() {
  if (!impl_) throw AutogradError("use of undefined tensor");
  return {impl_->data->data(), impl_->data->size()};
}

float Tensor::item() const {
  if (numel() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape()));
  return (*impl_->data)[0];
}

bool Tensor::requires_grad() const { return impl_ && impl_->requires_grad; }

void Tensor::set_requires_grad(bool on) {
  if (!impl_) throw AutogradError("use of undefined tensor");
  impl_->requires_grad = on;
}

bool Tensor::has_grad() const { return impl_ && !impl_->grad.empty(); }

std::span<const float> Tensor::grad() const {
  if (!has_grad()) return {};
  return {impl_->grad.data(), impl_->grad.size()};
}

std::span<float> Tensor::grad_buffer() const {
  if (!impl_) throw AutogradError("use of undefined tensor");
  if (impl_->grad.empty()) impl_->grad.assign(impl_->data->size(), 0.0f);
  return {impl_->grad.data(), impl_->grad.size()};
}

void Tensor::zero_grad() {
  if (impl_ && !impl_->grad.empty()) std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0f);
}

Tensor Tensor::detach() const {
  if (!impl_) return {};
  auto impl = std::make_shared<detail::TensorImpl>();
  impl->shape = impl_->shape;
  impl->data = impl_->data;
  return Tensor(std::move(impl));
}

Tensor Tensor::clone() const {
  if (!impl_) return {};
  return Tensor(make_impl(impl_->shape, *impl_->data, impl_->requires_grad));
}

bool Tensor::same_storage(const Tensor& other) const {
  return impl_ && other.impl_ && impl_->data == other.impl_->data;
}

Tape::Tape() : id_(g_next_tape_id.fetch_add(1)) { t_tape_stack.push_back(this); }

Tape::~Tape() {
  auto it = std::find(t_tape_stack.begin(), t_tape_stack.end(), this);
  if (it != t_tape_stack.end()) t_tape_stack.erase(it);
  // Results outlive the tape as plain tensors.
  for (auto& r : records_) r.output->tape_id = kNoTape;
}

Tape* Tape::active() { return t_tape_stack.empty() ? nullptr : t_tape_stack.back(); }

bool Tape::should_record(std::initializer_list<const Tensor*> operands) {
  if (!active()) return false;
  return std::any_of(operands.begin(), operands.end(), [](const Tensor* t) { return t && t->requires_grad(); });
}

void Tape::record(Tensor& output, BackwardFn backward) {
  auto& impl = output.impl_;
  if (!impl) throw AutogradError("recording an undefined tensor");
  impl->requires_grad = true;
  impl->tape_id = id_;
  impl->record = records_.size();
  records_.push_back({impl, std::move(backward)});
}

bool Tape::produced(const Tensor& t) const {
  const auto& impl = t.impl_;
  return impl && impl->tape_id == id_ && impl->record < records_.size() && records_[impl->record].output == impl;
}

void Tape::backward(const Tensor& loss) {
  if (!loss.defined()) throw AutogradError("backward on undefined tensor");
  if (loss.numel() != 1) throw AutogradError("backward needs a scalar loss, got shape " + shape_str(loss.shape()));
  const auto& impl = loss.impl_;
  if (!produced(loss)) {
    throw AutogradError("backward on a tensor that was not recorded on this tape");
  }
  const std::size_t last = impl->record;
  for (std::size_t r = 0; r <= last; ++r) records_[r].output->grad.clear();
  impl->grad.assign(1, 1.0f);
  for (std::size_t r = last + 1; r-- > 0;) {
    auto& rec = records_[r];
    if (rec.output->grad.empty()) continue;  // not reachable from loss
    rec.backward({rec.output->grad.data(), rec.output->grad.size()});
  }
}

void backward(const Tensor& loss) {
  if (!loss.defined()) throw AutogradError("backward on undefined tensor");
  if (!loss.requires_grad()) throw AutogradError("backward on a detached tensor");
  for (auto it = t_tape_stack.rbegin(); it != t_tape_stack.rend(); ++it) {
    if ((*it)->produced(loss)) {
      (*it)->backward(loss);
      return;
    }
  }
  throw AutogradError("backward on a detached tensor (no live tape recorded it)");
}

void check_finite(const Tensor& t, const char* op) {
  for (float v : t.data()) {
    if (!std::isfinite(v)) throw NumericError(std::string("non-finite value produced by ") + op);
  }
}

}  // namespace lagrobust
