#include "kmpc/lmpc.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace kmpc {

namespace {

double dot(const Tensor& a, const Tensor& b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

double clamp(double v, double lo, double hi) { return std::min(std::max(v, lo), hi); }

void check_plan_config(const PlanConfig& cfg, std::size_t m) {
  if (cfg.horizon == 0) throw std::invalid_argument("plan: horizon must be positive");
  if (cfg.a_min.size() != m || cfg.a_max.size() != m) {
    throw std::invalid_argument("plan: bounds sized " + std::to_string(cfg.a_min.size()) + "/" +
                                std::to_string(cfg.a_max.size()) + " for " + std::to_string(m) +
                                " action coordinates");
  }
  for (std::size_t i = 0; i < m; ++i) {
    if (!(cfg.a_min[i] <= cfg.a_max[i])) {
      throw std::invalid_argument("plan: empty bound interval at coordinate " + std::to_string(i));
    }
  }
  if (!(cfg.r_tilde > 0.0)) throw std::invalid_argument("plan: r_tilde must be positive");
}

/// Largest eigenvalue of a symmetric PSD matrix by power iteration with a
/// fixed start vector.
double largest_eigenvalue(const Tensor& h) {
  std::size_t n = h.rows();
  Tensor x = Tensor::full({n}, 1.0 / std::sqrt(static_cast<double>(n)));
  double lambda = 0.0;
  for (int iter = 0; iter < 200; ++iter) {
    Tensor y = Tensor::zeros({n});
    for (std::size_t i = 0; i < n; ++i) {
      double acc = 0.0;
      for (std::size_t j = 0; j < n; ++j) acc += h[i * n + j] * x[j];
      y[i] = acc;
    }
    double rayleigh = dot(x, y);
    double norm = std::sqrt(dot(y, y));
    if (norm == 0.0) return 0.0;
    for (std::size_t i = 0; i < n; ++i) x[i] = y[i] / norm;
    if (iter > 2 && std::fabs(rayleigh - lambda) <= 1e-12 * std::max(1.0, std::fabs(rayleigh))) {
      lambda = rayleigh;
      break;
    }
    lambda = rayleigh;
  }
  return lambda;
}

Tensor tile_action(const Tensor& a0, std::size_t horizon) {
  std::size_t m = a0.size();
  Tensor v = Tensor::zeros({horizon * m});
  for (std::size_t k = 0; k < horizon; ++k) {
    for (std::size_t i = 0; i < m; ++i) v[k * m + i] = a0[i];
  }
  return v;
}

}  // namespace

double CondensedQP::objective(const Tensor& v) const {
  std::size_t n = g.size();
  if (v.size() != n) {
    throw std::invalid_argument("CondensedQP::objective: point " + v.shape_str() + " for " +
                                std::to_string(n) + " variables");
  }
  double quad = 0.0, lin = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < n; ++j) acc += h[i * n + j] * v[j];
    quad += v[i] * acc;
    lin += g[i] * v[i];
  }
  return 0.5 * quad + lin + c0;
}

Tensor CondensedQP::gradient(const Tensor& v) const {
  std::size_t n = g.size();
  if (v.size() != n) {
    throw std::invalid_argument("CondensedQP::gradient: point " + v.shape_str() + " for " +
                                std::to_string(n) + " variables");
  }
  Tensor out = Tensor::zeros({n});
  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < n; ++j) acc += h[i * n + j] * v[j];
    out[i] = acc + g[i];
  }
  return out;
}

CondensedQP condense(const KoopmanOperator& op, const Tensor& s0, const Tensor& a0,
                     const Tensor& row, const Tensor& b0, const Tensor& action_cost,
                     const PlanConfig& cfg) {
  std::size_t latent = s0.size();
  std::size_t m = a0.size();
  std::size_t horizon = cfg.horizon;
  check_plan_config(cfg, m);
  if (2 * op.pairs() != latent || row.size() != latent) {
    throw std::invalid_argument("condense: operator with " + std::to_string(op.pairs()) +
                                " pairs, state " + s0.shape_str() + ", row " + row.shape_str());
  }
  if (b0.ndim() != 2 || b0.rows() != latent || b0.cols() != m) {
    throw std::invalid_argument("condense: sensitivity " + b0.shape_str() + " for latent " +
                                std::to_string(latent) + " and " + std::to_string(m) +
                                " actions");
  }
  if (action_cost.ndim() != 2 || action_cost.rows() != m || action_cost.cols() != m) {
    throw std::invalid_argument("condense: action cost " + action_cost.shape_str());
  }

  // Push the pricing row backwards through the dynamics once; everything
  // else works in the m-dimensional action space.
  std::vector<Tensor> u(horizon);
  std::vector<double> priced_free(horizon + 1);  // (Lambda^T)^i row . s0
  Tensor q = row;
  priced_free[0] = dot(q, s0);
  for (std::size_t i = 0; i < horizon; ++i) {
    Tensor ui = Tensor::zeros({m});
    for (std::size_t c = 0; c < m; ++c) {
      double acc = 0.0;
      for (std::size_t r = 0; r < latent; ++r) acc += b0.at(r, c) * q[r];
      ui[c] = acc;
    }
    u[i] = std::move(ui);
    q = op.apply_transpose(q);
    priced_free[i + 1] = dot(q, s0);
  }

  std::size_t n = horizon * m;
  CondensedQP qp;
  qp.h = Tensor::zeros({n, n});
  qp.g = Tensor::zeros({n});
  qp.c0 = 0.0;
  qp.horizon = horizon;
  qp.act_dim = m;

  std::vector<double> rho(n, 0.0);
  for (std::size_t k = 1; k <= horizon; ++k) {
    std::size_t active = k * m;
    for (std::size_t i = 1; i <= k; ++i) {
      for (std::size_t c = 0; c < m; ++c) {
        double val = u[k - i][c];
        if (i + 1 <= k) val -= u[k - 1 - i][c];
        rho[(i - 1) * m + c] = val;
      }
    }
    double d_k = priced_free[k] - dot(u[k - 1], a0);
    for (std::size_t i = 0; i < active; ++i) {
      qp.g[i] += 2.0 * d_k * rho[i];
      for (std::size_t j = 0; j < active; ++j) qp.h[i * n + j] += 2.0 * rho[i] * rho[j];
    }
    qp.c0 += d_k * d_k;
  }

  for (std::size_t k = 0; k < horizon; ++k) {
    for (std::size_t r = 0; r < m; ++r) {
      for (std::size_t c = 0; c < m; ++c) {
        qp.h[(k * m + r) * n + (k * m + c)] += 2.0 * action_cost.at(r, c);
      }
    }
  }

  double rt = cfg.r_tilde;
  for (std::size_t c = 0; c < m; ++c) {
    qp.h[c * n + c] += 2.0 * rt;
    qp.g[c] -= 2.0 * rt * a0[c];
    qp.c0 += rt * a0[c] * a0[c];
  }
  for (std::size_t k = 1; k < horizon; ++k) {
    std::size_t b1 = (k - 1) * m, b2 = k * m;
    for (std::size_t c = 0; c < m; ++c) {
      qp.h[(b1 + c) * n + (b1 + c)] += 2.0 * rt;
      qp.h[(b2 + c) * n + (b2 + c)] += 2.0 * rt;
      qp.h[(b1 + c) * n + (b2 + c)] -= 2.0 * rt;
      qp.h[(b2 + c) * n + (b1 + c)] -= 2.0 * rt;
    }
  }

  qp.lower = Tensor::zeros({n});
  qp.upper = Tensor::zeros({n});
  for (std::size_t k = 0; k < horizon; ++k) {
    for (std::size_t c = 0; c < m; ++c) {
      qp.lower[k * m + c] = cfg.a_min[c];
      qp.upper[k * m + c] = cfg.a_max[c];
    }
  }
  return qp;
}

double kkt_residual(const CondensedQP& qp, const Tensor& v) {
  Tensor grad = qp.gradient(v);
  double res = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    double stepped = clamp(v[i] - grad[i], qp.lower[i], qp.upper[i]);
    res = std::max(res, std::fabs(v[i] - stepped));
  }
  return res;
}

QpResult solve_box_qp(const CondensedQP& qp, const Tensor& v0, double tol,
                      std::size_t max_iter) {
  std::size_t n = qp.g.size();
  if (v0.size() != n) {
    throw std::invalid_argument("solve_box_qp: start " + v0.shape_str() + " for " +
                                std::to_string(n) + " variables");
  }

  double lmax = largest_eigenvalue(qp.h);
  double step = lmax > 0.0 ? 1.0 / (lmax * 1.01) : 1.0;

  Tensor x = v0;
  for (std::size_t i = 0; i < n; ++i) x[i] = clamp(x[i], qp.lower[i], qp.upper[i]);
  double fx = qp.objective(x);

  QpResult best;
  best.v = x;
  best.objective = fx;
  best.residual = kkt_residual(qp, x);
  if (best.residual <= tol) {
    best.converged = true;
    return best;
  }

  Tensor y = x;
  double t = 1.0;
  for (std::size_t it = 0; it < max_iter; ++it) {
    Tensor grad = qp.gradient(y);
    Tensor x_new = Tensor::zeros({n});
    for (std::size_t i = 0; i < n; ++i) {
      x_new[i] = clamp(y[i] - step * grad[i], qp.lower[i], qp.upper[i]);
    }
    double f_new = qp.objective(x_new);
    double res = kkt_residual(qp, x_new);
    if (f_new < best.objective) {
      best.v = x_new;
      best.objective = f_new;
    }
    best.iterations = it + 1;
    if (res <= tol) {
      best.v = x_new;
      best.objective = f_new;
      best.residual = res;
      best.converged = true;
      return best;
    }

    if (f_new > fx) {
      t = 1.0;
      y = x_new;
    } else {
      double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
      double momentum = (t - 1.0) / t_next;
      Tensor y_next = Tensor::zeros({n});
      for (std::size_t i = 0; i < n; ++i) {
        y_next[i] = x_new[i] + momentum * (x_new[i] - x[i]);
      }
      y = std::move(y_next);
      t = t_next;
    }
    x = std::move(x_new);
    fx = f_new;
  }

  best.residual = kkt_residual(qp, best.v);
  best.converged = best.residual <= tol;
  return best;
}

namespace {

QpResult run_plan(const LatentModel& model, const KoopmanOperator& op, const Tensor& o,
                  const Tensor& a0, const PlanConfig& cfg, const Tensor& v0) {
  if (op.pairs() != model.pairs()) {
    throw std::invalid_argument("plan: operator with " + std::to_string(op.pairs()) +
                                " pairs for a model with " + std::to_string(model.pairs()));
  }
  Graph g;
  BoundModel bm(g, model);
  Encoded e = bm.encode(o, a0);
  NodeId row_id = bm.cost_row(e.s);
  std::vector<NodeId> cols = bm.action_tangents(e.s, e.a_leaf);

  const Tensor& s0 = g.value(e.s);
  const Tensor& row = g.value(row_id);
  Tensor b0 = Tensor::zeros({model.latent_dim(), model.act_dim()});
  for (std::size_t c = 0; c < cols.size(); ++c) {
    const Tensor& col = g.value(cols[c]);
    for (std::size_t r = 0; r < col.size(); ++r) b0.at(r, c) = col[r];
  }

  CondensedQP qp = condense(op, s0, a0, row, b0, model.action_cost, cfg);
  return solve_box_qp(qp, v0, cfg.tol, cfg.max_iter);
}

Tensor first_increment(const QpResult& res, const Tensor& a0) {
  Tensor da = Tensor::zeros({a0.size()});
  for (std::size_t i = 0; i < a0.size(); ++i) da[i] = res.v[i] - a0[i];
  return da;
}

}  // namespace

Tensor plan(const LatentModel& model, const KoopmanOperator& op, const Tensor& o,
            const Tensor& a0, const PlanConfig& cfg) {
  check_plan_config(cfg, a0.size());
  QpResult res = run_plan(model, op, o, a0, cfg, tile_action(a0, cfg.horizon));
  return first_increment(res, a0);
}

Planner::Planner(PlanConfig cfg) : cfg_(std::move(cfg)) {}

Tensor Planner::plan(const LatentModel& model, const KoopmanOperator& op, const Tensor& o,
                     const Tensor& a0) {
  std::size_t m = a0.size();
  check_plan_config(cfg_, m);
  std::size_t n = cfg_.horizon * m;

  Tensor v0;
  if (has_warm_ && warm_.size() == n) {
    v0 = Tensor::zeros({n});
    for (std::size_t k = 0; k + 1 < cfg_.horizon; ++k) {
      for (std::size_t i = 0; i < m; ++i) v0[k * m + i] = warm_[(k + 1) * m + i];
    }
    for (std::size_t i = 0; i < m; ++i) v0[(cfg_.horizon - 1) * m + i] = warm_[n - m + i];
  } else {
    v0 = tile_action(a0, cfg_.horizon);
  }

  last_ = run_plan(model, op, o, a0, cfg_, v0);
  warm_ = last_.v;
  has_warm_ = true;
  return first_increment(last_, a0);
}

}  // namespace kmpc
