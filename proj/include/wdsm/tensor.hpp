#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <new>
#include <span>
#include <string>
#include <vector>

namespace wdsm {

using Shape = std::vector<std::size_t>;

// Allocator for buffers handed to Eigen. Vectorized kernels peel leading
// elements up to the first aligned address, so a fixed alignment keeps their
// summation order, and therefore every result bit, independent of the heap.
template <typename T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::size_t alignment = 64;

  AlignedAllocator() = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) {
    return static_cast<T*>(::operator new(n * sizeof(T), std::align_val_t(alignment)));
  }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, std::align_val_t(alignment)); }

  template <typename U>
  bool operator==(const AlignedAllocator<U>&) const noexcept {
    return true;
  }
};

template <typename T>
using AlignedVector = std::vector<T, AlignedAllocator<T>>;

std::size_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

enum class Precision { single, dual };

template <typename T>
constexpr Precision precision_of();
template <>
constexpr Precision precision_of<float>() { return Precision::single; }
template <>
constexpr Precision precision_of<double>() { return Precision::dual; }

// A handle to an n-dimensional row-major array. Copies share storage, the
// way a node handle does in most reverse-mode systems: an op output captured
// by a backward closure is the same buffer the caller holds.
//
// Rank-0 tensors (empty shape) are scalars. The gradient buffer exists iff
// requires_grad() is true.
template <typename T>
class Tensor {
 public:
  Tensor();
  Tensor(Shape shape, std::vector<T> values, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, T value, bool requires_grad = false);
  static Tensor scalar(T value, bool requires_grad = false);

  const Shape& shape() const { return storage_->shape; }
  std::size_t rank() const { return storage_->shape.size(); }
  std::size_t dim(std::size_t axis) const { return storage_->shape.at(axis); }
  std::size_t numel() const { return storage_->data.size(); }

  std::span<const T> data() const { return storage_->data; }
  // Handle-const: storage is shared, so these stay callable on const handles.
  // Only leaf tensors (parameters, inputs being probed) should be written.
  std::span<T> mutable_data() const { return storage_->data; }

  bool requires_grad() const { return storage_->requires_grad; }
  std::span<const T> grad() const { return storage_->grad; }
  std::span<T> mutable_grad() const { return storage_->grad; }
  void zero_grad() const;

  // Value of a one-element tensor.
  T item() const;

  // Deep copy; the clone never shares a gradient buffer with *this.
  Tensor clone(bool requires_grad) const;

  bool same_storage(const Tensor& other) const { return storage_ == other.storage_; }

 private:
  struct Storage {
    Shape shape;
    AlignedVector<T> data;
    AlignedVector<T> grad;
    bool requires_grad = false;
  };

  std::shared_ptr<Storage> storage_;
};

// Ordered record of backward closures. Ops push one closure per executed
// differentiable node; backward() replays them in reverse registration order,
// which is a valid topological order because every op's inputs were produced
// before it was recorded.
template <typename T>
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) noexcept = default;
  Tape& operator=(Tape&&) noexcept = default;

  void record(std::function<void()> backward) { entries_.push_back(std::move(backward)); }

  // Seeds d(loss)/d(loss) = 1 and replays the tape. Gradients accumulate into
  // existing buffers; call zero_grad() on leaves between steps.
  void backward(const Tensor<T>& loss);

  std::size_t size() const { return entries_.size(); }
  void clear() { entries_.clear(); }

 private:
  std::vector<std::function<void()>> entries_;
};

extern template class Tensor<float>;
extern template class Tensor<double>;
extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace wdsm
