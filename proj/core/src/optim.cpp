#include "weatherseg/optim.hpp"

#include <cmath>

#include "weatherseg/error.hpp"

namespace weatherseg::train {

std::string_view to_string(OptimizerKind k) { return k == OptimizerKind::kAdamW ? "adamw" : "sgd"; }

OptimizerKind optimizer_from_string(std::string_view s) {
  if (s == "adamw") return OptimizerKind::kAdamW;
  if (s == "sgd") return OptimizerKind::kSgd;
  throw InvalidInput("unknown optimizer '" + std::string(s) + "' (expected adamw or sgd)");
}

template <class T>
Optimizer<T>::Optimizer(const ParamList<T>& params, const OptimizerConfig& config)
    : params_(params), config_(config) {
  for (const auto* p : params_) {
    m_.push_back(Mat<T>::Zero(p->value.rows(), p->value.cols()));
    v_.push_back(config_.kind == OptimizerKind::kAdamW ? Mat<T>::Zero(p->value.rows(), p->value.cols())
                                                        : Mat<T>());
    const std::string& n = p->name;
    decay_.push_back(n.size() >= 7 && n.compare(n.size() - 7, 7, ".weight") == 0);
  }
}

template <class T>
void Optimizer<T>::step(double lr) {
  ++t_;
  const T a = static_cast<T>(lr);
  if (config_.kind == OptimizerKind::kSgd) {
    const T mu = static_cast<T>(config_.momentum);
    for (std::size_t i = 0; i < params_.size(); ++i) {
      auto* p = params_[i];
      Mat<T> g = p->grad;
      if (decay_[i]) g += static_cast<T>(config_.weight_decay) * p->value;
      m_[i] = mu * m_[i] + g;
      p->value -= a * m_[i];
    }
    return;
  }
  const double b1 = config_.beta1, b2 = config_.beta2;
  const T c1 = static_cast<T>(1.0 / (1.0 - std::pow(b1, static_cast<double>(t_))));
  const T c2 = static_cast<T>(1.0 / (1.0 - std::pow(b2, static_cast<double>(t_))));
  const T tb1 = static_cast<T>(b1), tb2 = static_cast<T>(b2), eps = static_cast<T>(config_.eps);
  const T wd = static_cast<T>(lr * config_.weight_decay);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto* p = params_[i];
    m_[i] = tb1 * m_[i] + (T(1) - tb1) * p->grad;
    v_[i] = tb2 * v_[i] + (T(1) - tb2) * p->grad.cwiseProduct(p->grad);
    if (decay_[i]) p->value -= wd * p->value;
    p->value.array() -= a * (m_[i].array() * c1) / ((v_[i].array() * c2).sqrt() + eps);
  }
}

template class Optimizer<float>;
template class Optimizer<double>;

}  // namespace weatherseg::train
