#include "nerp/param_tape.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace nerp {

std::size_t ParamTape::add(const std::string& group, const std::string& name, std::vector<int> shape) {
  if (!slots_.empty() && slots_.back().group != group) {
    for (const auto& s : slots_) {
      if (s.group == group) throw std::logic_error("parameter group '" + group + "' is not contiguous");
    }
  }
  TensorSlot slot;
  slot.name = name;
  slot.group = group;
  slot.offset = values_.size();
  slot.size = std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                              [](std::size_t a, int b) { return a * static_cast<std::size_t>(b); });
  slot.shape = std::move(shape);
  values_.resize(values_.size() + slot.size, 0.0);
  grads_.resize(values_.size(), 0.0);
  slots_.push_back(std::move(slot));
  return slots_.size() - 1;
}

std::vector<Segment> ParamTape::segments() const {
  std::vector<Segment> out;
  for (const auto& s : slots_) {
    if (out.empty() || out.back().name != s.group) out.push_back(Segment{s.group, s.offset, 0});
    out.back().size += s.size;
  }
  return out;
}

Segment ParamTape::segment(const std::string& name) const {
  for (const auto& s : segments()) {
    if (s.name == name) return s;
  }
  throw std::out_of_range("unknown parameter segment '" + name + "'");
}

void ParamTape::zero_grads() { std::fill(grads_.begin(), grads_.end(), 0.0); }

bool ParamTape::same_layout(const ParamTape& other) const {
  if (slots_.size() != other.slots_.size()) return false;
  for (std::size_t i = 0; i < slots_.size(); ++i) {
    const auto& a = slots_[i];
    const auto& b = other.slots_[i];
    if (a.name != b.name || a.group != b.group || a.offset != b.offset || a.shape != b.shape) return false;
  }
  return true;
}

}  // namespace nerp
