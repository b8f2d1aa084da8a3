#include "ffr/params.hpp"

#include <cmath>
#include <stdexcept>

namespace ffr {

ArrayD& ParamStore::create(const std::string& name, ArrayD init) {
  if (has(name)) throw std::invalid_argument("params: '" + name + "' already exists");
  Entry e;
  e.grad = ArrayD(init.shape());
  e.value = std::move(init);
  auto [it, ok] = entries_.emplace(name, std::move(e));
  (void)ok;
  return it->second.value;
}

ArrayD& ParamStore::value(const std::string& name) {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw std::invalid_argument("params: no entry '" + name + "'");
  return it->second.value;
}

const ArrayD& ParamStore::value(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw std::invalid_argument("params: no entry '" + name + "'");
  return it->second.value;
}

ArrayD& ParamStore::grad(const std::string& name) {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw std::invalid_argument("params: no entry '" + name + "'");
  return it->second.grad;
}

void ParamStore::zero_grads() {
  for (auto& [name, e] : entries_) e.grad.fill(0.0);
}

Index ParamStore::num_params() const {
  Index n = 0;
  for (const auto& [name, e] : entries_) n += e.value.size();
  return n;
}

Index ParamStore::num_params(const std::string& prefix) const {
  Index n = 0;
  for (const auto& [name, e] : entries_)
    if (name.rfind(prefix, 0) == 0) n += e.value.size();
  return n;
}

void ParamStore::for_each(const std::function<void(const std::string&, Entry&)>& fn) {
  for (auto& [name, e] : entries_) fn(name, e);
}

void ParamStore::save(const std::string& path, const std::string& meta) const {
  std::vector<NamedArray> arrays;
  arrays.reserve(entries_.size());
  for (const auto& [name, e] : entries_) arrays.push_back({name, e.value});
  save_container(path, arrays, meta);
}

void ParamStore::load(const std::string& path) {
  Container c = load_container(path);
  for (const auto& a : c.arrays) {
    const ArrayD& v = std::get<ArrayD>(a.value);
    if (has(a.name)) {
      ArrayD& dst = value(a.name);
      if (dst.shape() != v.shape())
        throw std::runtime_error("params: checkpoint shape mismatch for '" + a.name + "': " +
                                 shape_str(v.shape()) + " vs " + shape_str(dst.shape()));
      dst = v;
    } else {
      create(a.name, v);
    }
  }
}

void optimizer_step(ParamStore& store, OptimConfig& cfg) {
  for (auto& [name, e] : store.entries()) {
    for (Index i = 0; i < e.grad.size(); ++i)
      if (!std::isfinite(e.grad[i]))
        throw std::runtime_error("optimizer: non-finite gradient in '" + name +
                                 "', step refused");
  }
  cfg.step += 1;
  for (auto& [name, e] : store.entries()) {
    if (e.m.empty()) e.m = ArrayD(e.value.shape());
    if (cfg.rule == OptimRule::SgdMomentum) {
      // v <- mu*v + g ; p <- p - lr*v
      for (Index i = 0; i < e.value.size(); ++i) {
        e.m[i] = cfg.momentum * e.m[i] + e.grad[i];
        e.value[i] -= cfg.lr * e.m[i];
      }
    } else {
      if (e.v.empty()) e.v = ArrayD(e.value.shape());
      const double b1 = cfg.beta1, b2 = cfg.beta2;
      const double c1 = 1.0 - std::pow(b1, static_cast<double>(cfg.step));
      const double c2 = 1.0 - std::pow(b2, static_cast<double>(cfg.step));
      for (Index i = 0; i < e.value.size(); ++i) {
        double g = e.grad[i];
        e.m[i] = b1 * e.m[i] + (1 - b1) * g;
        e.v[i] = b2 * e.v[i] + (1 - b2) * g * g;
        e.value[i] -= cfg.lr * (e.m[i] / c1) / (std::sqrt(e.v[i] / c2) + cfg.eps);
      }
    }
    e.grad.fill(0.0);
  }
}

ArrayD init_conv_weight(const Shape& shape, Index fan_in, Rng& rng) {
  double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  return random_uniform(shape, rng, -bound, bound);
}

}  // namespace ffr
