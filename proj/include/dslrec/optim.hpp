#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace dslrec {

struct AdamConfig {
  double learning_rate = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.0;  // decoupled: p <- p (1 - lr wd) before the moment step
};

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::uint64_t steps = 0;
};

class Adam {
 public:
  explicit Adam(AdamConfig config) : config_(config) {}

  const AdamConfig& config() const { return config_; }

  /// One dense update of `params` in place. `state` is sized lazily.
  void step(std::span<double> params, std::span<const double> grad, AdamState& state) const;

 private:
  AdamConfig config_;
};

}  // namespace dslrec
