#pragma once

#include <functional>
#include <map>
#include <string>

#include "ffr/container.hpp"
#include "ffr/ndarray.hpp"
#include "ffr/rng.hpp"

namespace ffr {

/// Named parameter arrays with matching gradient slots and optimizer state.
class ParamStore {
 public:
  struct Entry {
    ArrayD value;
    ArrayD grad;
    ArrayD m;  // momentum / first moment, allocated on first optimizer use
    ArrayD v;  // second moment (adaptive rule)
  };

  ArrayD& create(const std::string& name, ArrayD init);
  bool has(const std::string& name) const { return entries_.count(name) != 0; }
  ArrayD& value(const std::string& name);
  const ArrayD& value(const std::string& name) const;
  ArrayD& grad(const std::string& name);

  void zero_grads();
  Index num_params() const;
  /// Parameter count restricted to names starting with `prefix`.
  Index num_params(const std::string& prefix) const;

  void for_each(const std::function<void(const std::string&, Entry&)>& fn);

  /// Checkpointing via the container format (values only).
  void save(const std::string& path, const std::string& meta = "") const;
  void load(const std::string& path);

  std::map<std::string, Entry>& entries() { return entries_; }
  const std::map<std::string, Entry>& entries() const { return entries_; }

 private:
  std::map<std::string, Entry> entries_;
};

enum class OptimRule { SgdMomentum, AdaptiveMoments };

struct OptimConfig {
  OptimRule rule = OptimRule::AdaptiveMoments;
  double lr = 1e-3;
  double momentum = 0.9;  // sgd-momentum
  double beta1 = 0.9;     // adaptive-moments
  double beta2 = 0.999;
  double eps = 1e-8;
  long long step = 0;  // adaptive bias-correction counter, advanced by optimizer_step
};

/// Applies one update to every parameter, then zeroes the gradients.
/// Refuses the step (throws, params untouched) if any gradient is non-finite.
void optimizer_step(ParamStore& store, OptimConfig& cfg);

/// Kaiming-style uniform init for a conv/linear weight with the given fan-in.
ArrayD init_conv_weight(const Shape& shape, Index fan_in, Rng& rng);

}  // namespace ffr
