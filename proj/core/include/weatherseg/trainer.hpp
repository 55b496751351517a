#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "weatherseg/config.hpp"
#include "weatherseg/guidance.hpp"
#include "weatherseg/optim.hpp"
#include "weatherseg/segnet.hpp"

namespace weatherseg::train {

using nn::Feature;

enum class Schedule { kConstant, kPoly };

struct TrainConfig {
  int epochs = 10;
  long long max_steps = 0;  // micro-steps; overrides epochs when > 0
  int batch_size = 8;
  int accum = 2;            // micro-steps per parameter update
  double lr = 6e-5;
  Schedule schedule = Schedule::kPoly;
  double poly_power = 0.9;
  double min_lr = 0.0;
  OptimizerConfig optimizer;
  double aux_weight = 0.4;
  std::uint64_t seed = 0;
  bool train_on_clear = false;
  int crop = 0;             // square random crop side; 0 = full image
  double val_fraction = 0.1;
  long long val_every = 0;  // micro-steps; 0 = end of every epoch
  // Paired clear/degraded consistency term; not implemented, must stay off.
  bool consistency_loss = false;

  void validate() const;
};

TrainConfig parse_train_config(const config::Node& node);
config::Json to_json(const TrainConfig& c);

struct LossReport {
  double main = 0.0;
  double aux = 0.0;
  double total = 0.0;
};

// Pixel-averaged cross-entropy on the upsampled main and aux logits;
// total = main + aux_weight * aux. When the gradient outputs are given they
// receive d(scale * total)/d(logits). Label ids >= C are rejected.
template <class T>
LossReport seg_loss(const seg::Logits<T>& logits, const LabelMap& labels, double aux_weight,
                    Feature<T>* grad_main_up = nullptr, Feature<T>* grad_aux_up = nullptr,
                    double scale = 1.0);

// One training image with everything the network consumes.
template <class T>
struct Example {
  std::string id;
  Feature<T> input;
  LabelMap labels;
  guide::GuidanceInput<T> guidance;
};

struct StepRecord {
  long long step = 0;  // 0-based micro-step index
  LossReport loss;
  double lr = 0.0;
  double grad_norm = 0.0;  // norm of the accumulated gradient after this micro-step
  bool updated = false;
};

config::Json to_json(const StepRecord& r);

template <class T>
class Trainer {
 public:
  Trainer(seg::SegNet<T>& net, const TrainConfig& config);

  // Forward/backward over `batch`, gradients scaled by 1/(|batch| * accum).
  // Parameters are updated on every accum-th call. NumericError when the loss
  // or the gradient is not finite.
  StepRecord train_step(const std::vector<const Example<T>*>& batch, double lr);

  long long step() const { return step_; }
  void set_step(long long s) { step_ = s; }
  Optimizer<T>& optimizer() { return optimizer_; }
  seg::SegNet<T>& net() { return net_; }

 private:
  seg::SegNet<T>& net_;
  TrainConfig config_;
  nn::ParamList<T> params_;
  Optimizer<T> optimizer_;
  long long step_ = 0;
};

// Learning rate for a micro-step under the configured schedule.
double learning_rate(const TrainConfig& c, long long step, long long total_steps);

// Argmax prediction at full resolution.
template <class T>
LabelMap predict(const seg::SegNet<T>& net, const Example<T>& ex);

// mIoU over `examples` with global accumulation.
template <class T>
double evaluate_miou(const seg::SegNet<T>& net, const std::vector<Example<T>>& examples);

struct FitOptions {
  std::filesystem::path out_dir;  // last.ckpt, best.ckpt, train_log.jsonl
  std::optional<std::filesystem::path> resume;
  config::Json meta = config::Json::object();  // echoed into checkpoints
  std::function<void(const StepRecord&)> on_step;
  bool write_files = true;
};

struct FitResult {
  std::vector<StepRecord> log;
  long long total_steps = 0;
  double best_val_miou = -1.0;
  long long best_step = -1;
  double final_val_miou = -1.0;
};

// Trains for the configured number of micro-steps. The data order for step s
// depends only on (seed, s), so a resumed run replays exactly the remaining
// steps of an uninterrupted one. Empty `train` is rejected.
template <class T>
FitResult fit(seg::SegNet<T>& net, const TrainConfig& config, const std::vector<Example<T>>& train,
              const std::vector<Example<T>>& val, const FitOptions& options);

struct GradCheckResult {
  std::vector<std::pair<std::string, double>> groups;  // max relative error per group
  double max_rel_error = 0.0;
};

// Central differences against analytic gradients. `loss` evaluates the
// scalar; `analytic` zeroes and fills Param::grad. Relative error is
// |a - n| / max(|a|, |n|, floor). At most `max_entries` coordinates per
// tensor are probed (evenly spaced).
GradCheckResult grad_check(const std::function<double()>& loss,
                           const std::function<void()>& analytic,
                           const nn::ParamList<double>& params, double eps = 1e-5,
                           double floor = 1e-7, int max_entries = 24);

}  // namespace weatherseg::train
