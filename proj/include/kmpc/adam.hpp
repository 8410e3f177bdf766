#pragma once

#include <iosfwd>
#include <vector>

#include "kmpc/tensor.hpp"

namespace kmpc {

struct AdamConfig {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam with bias correction. Moment slots are allocated on the first step
/// and must keep the same layout afterwards.
class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  void step(const std::vector<Tensor*>& params, const std::vector<Tensor>& grads);

  const AdamConfig& config() const { return cfg_; }
  void set_lr(double lr) { cfg_.lr = lr; }
  std::uint64_t steps_taken() const { return t_; }

  void save(std::ostream& os) const;
  void load(std::istream& is);

 private:
  AdamConfig cfg_;
  std::uint64_t t_ = 0;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
};

}  // namespace kmpc
