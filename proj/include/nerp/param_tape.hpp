#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace nerp {

// Storage with a fixed 64-byte base alignment, so vectorized loops over it
// split the same way on every run.
using AlignedBuffer = std::vector<double, Eigen::aligned_allocator<double>>;

struct TensorSlot {
  std::string name;
  std::string group;
  std::size_t offset = 0;
  std::vector<int> shape;
  std::size_t size = 0;
};

// Contiguous run of tensors that share a group name.
struct Segment {
  std::string name;
  std::size_t offset = 0;
  std::size_t size = 0;
};

// Flat learnable-parameter store with a gradient slot per value. Tensors are
// appended group by group so every group occupies one contiguous segment.
class ParamTape {
 public:
  // Returns the slot index. Appending to a group that is not the most recent
  // one throws, which keeps segments contiguous.
  std::size_t add(const std::string& group, const std::string& name, std::vector<int> shape);

  std::size_t size() const { return values_.size(); }
  const std::vector<TensorSlot>& slots() const { return slots_; }
  std::vector<Segment> segments() const;
  Segment segment(const std::string& name) const;

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }
  std::span<double> grads() { return grads_; }
  std::span<const double> grads() const { return grads_; }

  std::span<double> value(std::size_t slot) { return values().subspan(slots_[slot].offset, slots_[slot].size); }
  std::span<const double> value(std::size_t slot) const {
    return values().subspan(slots_[slot].offset, slots_[slot].size);
  }
  std::span<double> grad(std::size_t slot) { return grads().subspan(slots_[slot].offset, slots_[slot].size); }

  void zero_grads();
  bool same_layout(const ParamTape& other) const;

 private:
  AlignedBuffer values_;
  AlignedBuffer grads_;
  std::vector<TensorSlot> slots_;
};

}  // namespace nerp
