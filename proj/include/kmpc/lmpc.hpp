#pragma once

#include <cstddef>

#include "kmpc/koopman.hpp"
#include "kmpc/latent_model.hpp"
#include "kmpc/tensor.hpp"

namespace kmpc {

struct PlanConfig {
  std::size_t horizon = 15;
  double r_tilde = 0.01;  // diagonal penalty on action increments
  Tensor a_min;           // {m}
  Tensor a_max;           // {m}
  double tol = 1e-8;
  std::size_t max_iter = 2000;
};

/// Dense box-constrained QP over the stacked future actions v = (a_1..a_H):
/// minimize 1/2 v^T h v + g^T v + c0 subject to lower <= v <= upper.
struct CondensedQP {
  Tensor h;
  Tensor g;
  double c0 = 0.0;
  Tensor lower;
  Tensor upper;
  std::size_t horizon = 0;
  std::size_t act_dim = 0;

  double objective(const Tensor& v) const;
  Tensor gradient(const Tensor& v) const;
};

/// Eliminates the latent states from the horizon-H planning objective
///   sum_{k=1..H} (row . s_k)^2 + a_k^T r a_k  +  sum_{k=0..H-1} da_k^T R~ da_k
/// with s_{k+1} = Lambda s_k + b0 da_k and da_k = a_{k+1} - a_k, leaving a
/// dense QP in the actions alone. Work grows linearly with the latent size:
/// the operator enters only through H transposed applications to the row.
CondensedQP condense(const KoopmanOperator& op, const Tensor& s0, const Tensor& a0,
                     const Tensor& row, const Tensor& b0, const Tensor& action_cost,
                     const PlanConfig& cfg);

struct QpResult {
  Tensor v;
  double objective = 0.0;
  double residual = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
};

/// Largest-magnitude coordinate of v - clamp(v - gradient, bounds); zero at
/// a box-constrained stationary point.
double kkt_residual(const CondensedQP& qp, const Tensor& v);

/// Accelerated projected gradient descent with a power-iteration step size
/// and function-value restarts. Every iterate satisfies the bounds exactly.
QpResult solve_box_qp(const CondensedQP& qp, const Tensor& v0, double tol,
                      std::size_t max_iter);

/// One planning call: encode the current observation, extract the pricing row
/// and action sensitivity, condense, solve. Returns the first increment
/// da_0 = a_1* - a0.
Tensor plan(const LatentModel& model, const KoopmanOperator& op, const Tensor& o,
            const Tensor& a0, const PlanConfig& cfg);

/// plan() plus a warm start carried between calls: the previous solution is
/// shifted one step forward and reused as the initial iterate.
class Planner {
 public:
  explicit Planner(PlanConfig cfg);

  Tensor plan(const LatentModel& model, const KoopmanOperator& op, const Tensor& o,
              const Tensor& a0);

  /// Drops the warm start (call at episode boundaries).
  void reset() { has_warm_ = false; }

  const QpResult& last_result() const { return last_; }
  const PlanConfig& config() const { return cfg_; }

 private:
  PlanConfig cfg_;
  bool has_warm_ = false;
  Tensor warm_;
  QpResult last_;
};

}  // namespace kmpc
