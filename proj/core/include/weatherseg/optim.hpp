#pragma once

#include <string_view>
#include <vector>

#include "weatherseg/layers.hpp"

namespace weatherseg::train {

using nn::Mat;
using nn::ParamList;

enum class OptimizerKind { kAdamW, kSgd };
std::string_view to_string(OptimizerKind k);
OptimizerKind optimizer_from_string(std::string_view s);

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::kAdamW;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;  // decoupled; applied to ".weight" tensors only
  double momentum = 0.9;       // SGD
};

// AdamW or SGD with momentum over a fixed parameter list. Moment buffers are
// indexed like the list passed to the constructor.
template <class T>
class Optimizer {
 public:
  Optimizer(const ParamList<T>& params, const OptimizerConfig& config);

  // Applies one update from the current gradients.
  void step(double lr);
  long long steps() const { return t_; }
  const OptimizerConfig& config() const { return config_; }

  // State access for checkpointing.
  std::vector<Mat<T>>& first_moments() { return m_; }
  std::vector<Mat<T>>& second_moments() { return v_; }
  void set_steps(long long t) { t_ = t; }

 private:
  ParamList<T> params_;
  OptimizerConfig config_;
  std::vector<Mat<T>> m_, v_;
  std::vector<bool> decay_;
  long long t_ = 0;
};

}  // namespace weatherseg::train
