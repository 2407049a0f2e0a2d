#pragma once

#include <cstdint>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace translution {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Live-element accounting. Buffers created while a scope is active register
/// their element counts with every meter on the stack; peak is the maximum
/// number of simultaneously live elements allocated inside the scope.
struct MeterState {
  long long current = 0;
  long long peak = 0;
  void add(long long n) {
    current += n;
    if (current > peak) peak = current;
  }
  void sub(long long n) { current -= n; }
};

namespace detail {
std::vector<std::shared_ptr<MeterState>>& meter_stack();
}

class MeterScope {
 public:
  MeterScope() : state_(std::make_shared<MeterState>()) {
    detail::meter_stack().push_back(state_);
  }
  ~MeterScope() { detail::meter_stack().pop_back(); }
  MeterScope(const MeterScope&) = delete;
  MeterScope& operator=(const MeterScope&) = delete;

  long long peak() const { return state_->peak; }
  long long current() const { return state_->current; }

 private:
  std::shared_ptr<MeterState> state_;
};

namespace detail {

template <typename T>
class Buffer {
 public:
  explicit Buffer(std::size_t n) : data_(n), meters_(meter_stack()) {
    for (auto& m : meters_) m->add(static_cast<long long>(n));
  }
  ~Buffer() {
    for (auto& m : meters_) m->sub(static_cast<long long>(data_.size()));
  }
  Buffer(const Buffer&) = delete;
  Buffer& operator=(const Buffer&) = delete;

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::size_t size() const { return data_.size(); }

 private:
  std::vector<T> data_;
  std::vector<std::shared_ptr<MeterState>> meters_;
};

inline std::size_t shape_product(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t e : shape) n *= e;
  return n;
}

}  // namespace detail

template <typename T>
struct Node;

/// Dense row-major tensor. The flat buffer is shared between copies; shapes
/// are immutable after construction. A tensor may carry an autodiff node when
/// it was produced by a recorded op.
template <typename T>
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(std::vector<std::size_t> shape)
      : shape_(std::move(shape)),
        size_(detail::shape_product(shape_)),
        buf_(std::make_shared<detail::Buffer<T>>(size_)) {}

  static Tensor zeros(std::vector<std::size_t> shape) { return Tensor(std::move(shape)); }

  static Tensor full(std::vector<std::size_t> shape, T v) {
    Tensor t(std::move(shape));
    T* p = t.data();
    for (std::size_t i = 0; i < t.size(); ++i) p[i] = v;
    return t;
  }

  static Tensor scalar(T v) { return full({}, v); }

  static Tensor from_vector(std::vector<std::size_t> shape, const std::vector<T>& values) {
    Tensor t(std::move(shape));
    if (values.size() != t.size())
      throw ShapeError("from_vector: " + std::to_string(values.size()) + " values for shape " +
                       t.shape_str());
    std::copy(values.begin(), values.end(), t.data());
    return t;
  }

  bool defined() const { return buf_ != nullptr; }
  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return size_; }
  std::size_t extent(std::size_t axis) const { return shape_.at(axis); }

  T* data() { return buf_->data(); }
  const T* data() const { return buf_->data(); }

  T item() const {
    if (size_ != 1) throw ShapeError("item() requires a single-element tensor, shape " + shape_str());
    return data()[0];
  }

  /// Same buffer under a new shape with equal element count.
  Tensor reshaped(std::vector<std::size_t> shape) const {
    if (detail::shape_product(shape) != size_)
      throw ShapeError("reshape " + shape_str() + " -> incompatible element count");
    Tensor t;
    t.shape_ = std::move(shape);
    t.size_ = size_;
    t.buf_ = buf_;
    t.node = node;
    return t;
  }

  Tensor clone() const {
    Tensor t(shape_);
    std::copy(data(), data() + size_, t.data());
    return t;
  }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  std::string shape_str() const {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape_.size(); ++i) os << (i ? "," : "") << shape_[i];
    os << ']';
    return os.str();
  }

  std::shared_ptr<Node<T>> node;

 private:
  std::vector<std::size_t> shape_;
  std::size_t size_ = 0;
  std::shared_ptr<detail::Buffer<T>> buf_;
};

inline std::string shapes_msg(const std::string& op, const std::string& a, const std::string& b) {
  return op + ": shape mismatch " + a + " vs " + b;
}

}  // namespace translution
