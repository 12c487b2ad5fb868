#pragma once

#include <algorithm>
#include <string>
#include <utility>
#include <vector>

#include "weaktag/error.hpp"
#include "weaktag/tensor.hpp"

namespace weaktag {

/// Named tensors in insertion order. Serialization and optimizer state rely on
/// the order being stable, so lookups never reorder.
template <class T>
class BasicParamSet {
 public:
  struct Entry {
    std::string name;
    BasicTensor<T> value;
    friend bool operator==(const Entry&, const Entry&) = default;
  };

  BasicTensor<T>& add(std::string name, BasicTensor<T> value) {
    require(find(name) == nullptr, Errc::invalid_argument, "duplicate parameter " + name);
    entries_.push_back({std::move(name), std::move(value)});
    return entries_.back().value;
  }

  BasicTensor<T>* find(const std::string& name) {
    auto it = std::find_if(entries_.begin(), entries_.end(),
                           [&](const Entry& e) { return e.name == name; });
    return it == entries_.end() ? nullptr : &it->value;
  }
  const BasicTensor<T>* find(const std::string& name) const {
    return const_cast<BasicParamSet*>(this)->find(name);
  }

  BasicTensor<T>& at(const std::string& name) {
    auto* t = find(name);
    if (!t) fail(Errc::invalid_argument, "no parameter named " + name);
    return *t;
  }
  const BasicTensor<T>& at(const std::string& name) const {
    return const_cast<BasicParamSet*>(this)->at(name);
  }

  std::size_t size() const { return entries_.size(); }
  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }
  Entry& operator[](std::size_t i) { return entries_[i]; }
  const Entry& operator[](std::size_t i) const { return entries_[i]; }

  std::size_t total_size() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += e.value.size();
    return n;
  }

  /// Same names and shapes, all zeros.
  BasicParamSet zeros_like() const {
    BasicParamSet out;
    for (const auto& e : entries_) out.add(e.name, BasicTensor<T>(e.value.shape()));
    return out;
  }

  bool same_layout(const BasicParamSet& other) const {
    if (other.size() != size()) return false;
    for (std::size_t i = 0; i < size(); ++i)
      if (entries_[i].name != other[i].name || entries_[i].value.shape() != other[i].value.shape())
        return false;
    return true;
  }

  void add_scaled(const BasicParamSet& other, T scale) {
    require(same_layout(other), Errc::shape_mismatch, "parameter sets differ in layout");
    for (std::size_t i = 0; i < size(); ++i) {
      auto dst = entries_[i].value.data();
      auto src = other[i].value.data();
      for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += scale * src[j];
    }
  }

  template <class U>
  BasicParamSet<U> cast() const {
    BasicParamSet<U> out;
    for (const auto& e : entries_) out.add(e.name, e.value.template cast<U>());
    return out;
  }

  friend bool operator==(const BasicParamSet&, const BasicParamSet&) = default;

 private:
  std::vector<Entry> entries_;
};

using ParamSet = BasicParamSet<float>;

}  // namespace weaktag
