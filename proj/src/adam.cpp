#include "kmpc/adam.hpp"

#include <cmath>
#include <stdexcept>

#include "kmpc/serialize.hpp"

namespace kmpc {

void Adam::step(const std::vector<Tensor*>& params, const std::vector<Tensor>& grads) {
  if (params.size() != grads.size()) {
    throw std::invalid_argument("Adam::step: " + std::to_string(params.size()) + " params vs " +
                                std::to_string(grads.size()) + " grads");
  }
  if (m_.empty()) {
    m_.reserve(params.size());
    v_.reserve(params.size());
    for (const Tensor* p : params) {
      m_.push_back(Tensor::zeros(p->shape));
      v_.push_back(Tensor::zeros(p->shape));
    }
  }
  if (params.size() != m_.size()) {
    throw std::logic_error("Adam::step: parameter count changed after first step");
  }

  ++t_;
  double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = *params[i];
    const Tensor& g = grads[i];
    if (!p.same_shape(g) || !p.same_shape(m_[i])) {
      throw std::invalid_argument("Adam::step: shape mismatch at parameter " + std::to_string(i));
    }
    for (std::size_t j = 0; j < p.size(); ++j) {
      m_[i][j] = cfg_.beta1 * m_[i][j] + (1.0 - cfg_.beta1) * g[j];
      v_[i][j] = cfg_.beta2 * v_[i][j] + (1.0 - cfg_.beta2) * g[j] * g[j];
      double mhat = m_[i][j] / bc1;
      double vhat = v_[i][j] / bc2;
      p[j] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
  }
}

void Adam::save(std::ostream& os) const {
  write_f64(os, cfg_.lr);
  write_f64(os, cfg_.beta1);
  write_f64(os, cfg_.beta2);
  write_f64(os, cfg_.eps);
  write_u64(os, t_);
  write_u64(os, m_.size());
  for (std::size_t i = 0; i < m_.size(); ++i) {
    write_tensor(os, m_[i]);
    write_tensor(os, v_[i]);
  }
}

void Adam::load(std::istream& is) {
  cfg_.lr = read_f64(is);
  cfg_.beta1 = read_f64(is);
  cfg_.beta2 = read_f64(is);
  cfg_.eps = read_f64(is);
  t_ = read_u64(is);
  std::uint64_t n = read_u64(is);
  m_.clear();
  v_.clear();
  m_.reserve(n);
  v_.reserve(n);
  for (std::uint64_t i = 0; i < n; ++i) {
    m_.push_back(read_tensor(is));
    v_.push_back(read_tensor(is));
  }
}

}  // namespace kmpc
