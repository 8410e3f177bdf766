#include "kmpc/envs.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace kmpc {

namespace {

constexpr double kDt = 0.05;

// Pendulum: unit mass and length, gravity 10.
constexpr double kGravity = 10.0;
constexpr double kMaxSpeed = 8.0;
constexpr double kMaxTorque = 2.0;

// Manipulator: unit link masses concentrated at the tips, half-metre links,
// viscous damping 0.1 per joint.
constexpr double kL1 = 0.5;
constexpr double kL2 = 0.5;
constexpr double kM1 = 1.0;
constexpr double kM2 = 1.0;
constexpr double kDamping = 0.1;
constexpr double kArmTorque = 1.0;

// Replica excitation: first-order smoothed noise on the torque.
constexpr double kOuDecay = 0.9;
constexpr double kOuSigmaFrac = 0.5;

double clamp(double v, double lo, double hi) { return std::min(std::max(v, lo), hi); }

}  // namespace

double wrap_angle(double th) {
  double w = std::fmod(th + M_PI, 2.0 * M_PI);
  if (w < 0.0) w += 2.0 * M_PI;
  return w - M_PI;
}

Env::Env(Task task, Mode mode, std::uint64_t env_seed) : task_(task), mode_(mode) {
  blocks_ = mode == Mode::Distractor ? 5 : 1;
  slot_of_block_.resize(blocks_);
  for (std::size_t b = 0; b < blocks_; ++b) slot_of_block_[b] = b;
  if (blocks_ > 1) {
    Rng rng(Rng::derive(env_seed, {0x736c6f74ULL}));
    for (std::size_t i = blocks_; i > 1; --i) {
      std::size_t j = rng.uniform_int(i);
      std::swap(slot_of_block_[i - 1], slot_of_block_[j]);
    }
  }
  states_.resize(blocks_);
  ou_.resize(blocks_);
}

std::size_t Env::block_obs_dim() const { return task_ == Task::Pendulum ? 3 : 10; }

std::size_t Env::state_dim() const { return task_ == Task::Pendulum ? 2 : 7; }

std::size_t Env::obs_dim() const { return blocks_ * block_obs_dim(); }

std::size_t Env::act_dim() const { return task_ == Task::Pendulum ? 1 : 2; }

Tensor Env::action_min() const {
  double lim = task_ == Task::Pendulum ? kMaxTorque : kArmTorque;
  return Tensor::full({act_dim()}, -lim);
}

Tensor Env::action_max() const {
  double lim = task_ == Task::Pendulum ? kMaxTorque : kArmTorque;
  return Tensor::full({act_dim()}, lim);
}

std::vector<std::size_t> Env::relevant_indices() const {
  std::size_t width = block_obs_dim();
  std::size_t base = slot_of_block_[0] * width;
  std::vector<std::size_t> idx(width);
  for (std::size_t i = 0; i < width; ++i) idx[i] = base + i;
  return idx;
}

void Env::reset_block(std::vector<double>& st, Rng& rng) const {
  st.assign(state_dim(), 0.0);
  if (task_ == Task::Pendulum) {
    st[0] = rng.uniform(-M_PI, M_PI);
    st[1] = rng.uniform(-1.0, 1.0);
  } else {
    st[0] = rng.uniform(-0.5, 0.5);
    st[1] = rng.uniform(-0.5, 0.5);
    st[2] = rng.uniform(-0.1, 0.1);
    st[3] = rng.uniform(-0.1, 0.1);
    st[4] = rng.uniform(-M_PI, M_PI);   // target angle
    st[5] = rng.uniform(-0.5, 0.5);     // target angular velocity
    st[6] = rng.uniform(0.4, 1.0);      // target radius
  }
}

Tensor Env::reset(std::uint64_t episode_seed) {
  for (std::size_t b = 0; b < blocks_; ++b) {
    Rng rng(Rng::derive(episode_seed, {0x696e6974ULL, b}));
    reset_block(states_[b], rng);
    ou_[b].assign(act_dim(), 0.0);
  }
  replica_rng_.clear();
  for (std::size_t b = 1; b < blocks_; ++b) {
    replica_rng_.emplace_back(Rng::derive(episode_seed, {0x64726976ULL, b}));
  }
  ready_ = true;
  return observe();
}

void Env::observe_block(const std::vector<double>& st, double* out) const {
  if (task_ == Task::Pendulum) {
    out[0] = std::cos(st[0]);
    out[1] = std::sin(st[0]);
    out[2] = st[1];
    return;
  }
  double q1 = st[0], q2 = st[1];
  out[0] = std::cos(q1);
  out[1] = std::sin(q1);
  out[2] = std::cos(q2);
  out[3] = std::sin(q2);
  out[4] = st[2];
  out[5] = st[3];
  out[6] = st[6] * std::cos(st[4]);
  out[7] = st[6] * std::sin(st[4]);
  out[8] = kL1 * std::cos(q1) + kL2 * std::cos(q1 + q2);
  out[9] = kL1 * std::sin(q1) + kL2 * std::sin(q1 + q2);
}

Tensor Env::observe() const {
  std::size_t width = block_obs_dim();
  Tensor obs = Tensor::zeros({obs_dim()});
  std::vector<double> block(width);
  for (std::size_t b = 0; b < blocks_; ++b) {
    observe_block(states_[b], block.data());
    std::size_t base = slot_of_block_[b] * width;
    for (std::size_t i = 0; i < width; ++i) obs[base + i] = block[i];
  }
  return obs;
}

double Env::block_cost(const std::vector<double>& st, const double* torque) const {
  if (task_ == Task::Pendulum) {
    double th = wrap_angle(st[0]);
    return th * th + 0.1 * st[1] * st[1] + 0.001 * torque[0] * torque[0];
  }
  double ex = kL1 * std::cos(st[0]) + kL2 * std::cos(st[0] + st[1]);
  double ey = kL1 * std::sin(st[0]) + kL2 * std::sin(st[0] + st[1]);
  double tx = st[6] * std::cos(st[4]);
  double ty = st[6] * std::sin(st[4]);
  double dist = std::sqrt((ex - tx) * (ex - tx) + (ey - ty) * (ey - ty));
  return dist + 0.001 * (torque[0] * torque[0] + torque[1] * torque[1]);
}

void Env::advance_block(std::vector<double>& st, const double* torque) const {
  if (task_ == Task::Pendulum) {
    double th = st[0], thdot = st[1];
    double acc = 3.0 * kGravity / 2.0 * std::sin(th) + 3.0 * torque[0];
    thdot = clamp(thdot + acc * kDt, -kMaxSpeed, kMaxSpeed);
    st[0] = th + thdot * kDt;
    st[1] = thdot;
    return;
  }

  double q2 = st[1], qd1 = st[2], qd2 = st[3];
  double c2 = std::cos(q2);
  double m11 = (kM1 + kM2) * kL1 * kL1 + kM2 * kL2 * kL2 + 2.0 * kM2 * kL1 * kL2 * c2;
  double m12 = kM2 * kL2 * kL2 + kM2 * kL1 * kL2 * c2;
  double m22 = kM2 * kL2 * kL2;
  double h = kM2 * kL1 * kL2 * std::sin(q2);
  double bias1 = -h * qd2 * qd2 - 2.0 * h * qd1 * qd2;
  double bias2 = h * qd1 * qd1;

  double rhs1 = torque[0] - bias1 - kDamping * qd1;
  double rhs2 = torque[1] - bias2 - kDamping * qd2;
  double det = m11 * m22 - m12 * m12;
  double qdd1 = (m22 * rhs1 - m12 * rhs2) / det;
  double qdd2 = (m11 * rhs2 - m12 * rhs1) / det;

  st[2] = qd1 + qdd1 * kDt;
  st[3] = qd2 + qdd2 * kDt;
  st[0] += st[2] * kDt;
  st[1] += st[3] * kDt;
  st[4] += st[5] * kDt;
}

void Env::require_ready(const char* who) const {
  if (!ready_) throw std::logic_error(std::string(who) + ": reset() has not been called");
}

StepResult Env::step(const Tensor& action) {
  require_ready("Env::step");
  if (action.size() != act_dim()) {
    throw std::invalid_argument("Env::step: action " + action.shape_str() + " for " +
                                std::to_string(act_dim()) + " torques");
  }
  double lim = task_ == Task::Pendulum ? kMaxTorque : kArmTorque;
  std::vector<double> torque(act_dim());
  for (std::size_t i = 0; i < torque.size(); ++i) torque[i] = clamp(action[i], -lim, lim);

  StepResult out;
  out.cost = block_cost(states_[0], torque.data());
  advance_block(states_[0], torque.data());

  double sigma = kOuSigmaFrac * lim;
  double kick = std::sqrt(1.0 - kOuDecay * kOuDecay);
  for (std::size_t b = 1; b < blocks_; ++b) {
    std::vector<double>& e = ou_[b];
    std::vector<double> rep_torque(act_dim());
    for (std::size_t i = 0; i < e.size(); ++i) {
      e[i] = kOuDecay * e[i] + kick * replica_rng_[b - 1].normal(0.0, sigma);
      rep_torque[i] = clamp(e[i], -lim, lim);
    }
    advance_block(states_[b], rep_torque.data());
  }

  out.obs = observe();
  return out;
}

double Env::upright_angle() const {
  require_ready("Env::upright_angle");
  if (task_ != Task::Pendulum) {
    throw std::logic_error("Env::upright_angle: not a pendulum task");
  }
  return wrap_angle(states_[0][0]);
}

double Env::target_distance() const {
  require_ready("Env::target_distance");
  if (task_ != Task::Manipulator) {
    throw std::logic_error("Env::target_distance: not a manipulator task");
  }
  const std::vector<double>& st = states_[0];
  double ex = kL1 * std::cos(st[0]) + kL2 * std::cos(st[0] + st[1]);
  double ey = kL1 * std::sin(st[0]) + kL2 * std::sin(st[0] + st[1]);
  double tx = st[6] * std::cos(st[4]);
  double ty = st[6] * std::sin(st[4]);
  return std::sqrt((ex - tx) * (ex - tx) + (ey - ty) * (ey - ty));
}

}  // namespace kmpc
