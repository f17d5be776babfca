#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "sempt/errors.hpp"
#include "sempt/hashing.hpp"
#include "sempt/tensor.hpp"

namespace sempt {

// Named trainable buffers. Parameters live outside any tape; each training
// step binds them as fresh leaves and reads the grads back after backward.
template <typename T>
class ParamStore {
 public:
  struct Entry {
    Shape shape;
    std::vector<T> value;
  };

  void add(const std::string& name, Shape shape, std::vector<T> value) {
    if (items_.count(name)) throw ContractError("parameter already registered: " + name);
    if (numel(shape) != static_cast<int64_t>(value.size()))
      throw ShapeError("parameter " + name + ": payload does not match " + shape_str(shape));
    items_.emplace(name, Entry{std::move(shape), std::move(value)});
  }

  bool has(const std::string& name) const { return items_.count(name) != 0; }

  Entry& at(const std::string& name) {
    auto it = items_.find(name);
    if (it == items_.end()) throw LookupError("unknown parameter: " + name);
    return it->second;
  }
  const Entry& at(const std::string& name) const {
    auto it = items_.find(name);
    if (it == items_.end()) throw LookupError("unknown parameter: " + name);
    return it->second;
  }

  // Sorted by name (std::map), so iteration order is stable.
  const std::map<std::string, Entry>& items() const { return items_; }
  std::map<std::string, Entry>& items() { return items_; }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    out.reserve(items_.size());
    for (const auto& [k, v] : items_) out.push_back(k);
    return out;
  }

  uint64_t checksum() const {
    uint64_t h = kFnvOffset;
    for (const auto& [k, v] : items_) {
      h = fnv1a64(k, h);
      h = fnv1a64(v.value.data(), v.value.size() * sizeof(T), h);
    }
    return h;
  }

  template <typename U>
  ParamStore<U> cast() const {
    ParamStore<U> out;
    for (const auto& [k, v] : items_) {
      std::vector<U> vals(v.value.begin(), v.value.end());
      out.add(k, v.shape, std::move(vals));
    }
    return out;
  }

 private:
  std::map<std::string, Entry> items_;
};

// A parameter bound to the current tape as a trainable leaf.
template <typename T>
struct BoundParam {
  std::string name;
  Tensor<T> leaf;
};

template <typename T>
BoundParam<T> bind_param(Tape<T>& tape, const ParamStore<T>& store, const std::string& name) {
  const auto& e = store.at(name);
  return BoundParam<T>{name, tape.leaf(e.shape, e.value, true)};
}

// Adam with bias correction. State buffers are keyed by parameter name and
// sized lazily on first step.
template <typename T>
struct AdamConfig {
  T learning_rate = T(1e-3);
  T beta1 = T(0.9);
  T beta2 = T(0.999);
  T epsilon = T(1e-8);
};

template <typename T>
class Adam {
 public:
  explicit Adam(AdamConfig<T> cfg = {}) : cfg_(cfg) {
    if (!(cfg_.learning_rate > T(0))) throw ParamError("Adam: learning rate must be positive");
  }

  int64_t step_count() const { return step_; }
  const AdamConfig<T>& config() const { return cfg_; }

  // Applies one update to every (name, grad) pair. Grad spans must match the
  // stored parameter shapes.
  void step(ParamStore<T>& params,
            const std::vector<std::pair<std::string, std::span<const T>>>& grads) {
    ++step_;
    const T bc1 = T(1) - std::pow(cfg_.beta1, static_cast<T>(step_));
    const T bc2 = T(1) - std::pow(cfg_.beta2, static_cast<T>(step_));
    for (const auto& [name, grad] : grads) {
      auto& entry = params.at(name);
      if (grad.size() != entry.value.size())
        throw ShapeError("Adam: grad size mismatch for " + name);
      auto& st = state_[name];
      if (st.m.empty()) {
        st.m.assign(entry.value.size(), T(0));
        st.v.assign(entry.value.size(), T(0));
      }
      for (size_t i = 0; i < entry.value.size(); ++i) {
        st.m[i] = cfg_.beta1 * st.m[i] + (T(1) - cfg_.beta1) * grad[i];
        st.v[i] = cfg_.beta2 * st.v[i] + (T(1) - cfg_.beta2) * grad[i] * grad[i];
        const T mhat = st.m[i] / bc1;
        const T vhat = st.v[i] / bc2;
        entry.value[i] -= cfg_.learning_rate * mhat / (std::sqrt(vhat) + cfg_.epsilon);
      }
    }
  }

 private:
  struct State {
    std::vector<T> m, v;
  };
  AdamConfig<T> cfg_;
  std::map<std::string, State> state_;
  int64_t step_ = 0;
};

}  // namespace sempt
