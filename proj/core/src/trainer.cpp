#include "weatherseg/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "weatherseg/checkpoint.hpp"
#include "weatherseg/error.hpp"
#include "weatherseg/evalkit.hpp"
#include "weatherseg/rng.hpp"

namespace weatherseg::train {

void TrainConfig::validate() const {
  if (epochs < 1 && max_steps < 1) throw ConfigError("training.epochs", "must be >= 1");
  if (max_steps < 0) throw ConfigError("training.max_steps", "must be >= 0");
  if (batch_size < 1) throw ConfigError("training.batch_size", "must be >= 1");
  if (accum < 1) throw ConfigError("training.accum", "must be >= 1");
  if (!(lr >= 0) || !std::isfinite(lr)) throw ConfigError("training.lr", "must be finite and >= 0");
  if (!(min_lr >= 0) || min_lr > lr) throw ConfigError("training.min_lr", "must be in [0, lr]");
  if (!(poly_power > 0)) throw ConfigError("training.poly_power", "must be > 0");
  if (!(aux_weight >= 0)) throw ConfigError("training.aux_weight", "must be >= 0");
  if (crop < 0) throw ConfigError("training.crop", "must be >= 0");
  if (!(val_fraction >= 0 && val_fraction < 1))
    throw ConfigError("training.val_fraction", "must be in [0, 1)");
  if (val_every < 0) throw ConfigError("training.val_every", "must be >= 0");
  if (!(optimizer.weight_decay >= 0)) throw ConfigError("training.weight_decay", "must be >= 0");
  if (consistency_loss)
    throw ConfigError("training.consistency_loss", "the consistency term is not implemented");
}

TrainConfig parse_train_config(const config::Node& n) {
  n.allow_only({"epochs", "max_steps", "batch_size", "accum", "lr", "schedule", "poly_power",
                "min_lr", "optimizer", "weight_decay", "momentum", "aux_weight", "seed",
                "train_on_clear", "crop", "val_fraction", "val_every", "consistency_loss"});
  TrainConfig c;
  c.epochs = static_cast<int>(n.integer("epochs", c.epochs));
  c.max_steps = n.integer("max_steps", c.max_steps);
  c.batch_size = static_cast<int>(n.integer("batch_size", c.batch_size));
  c.accum = static_cast<int>(n.integer("accum", c.accum));
  c.lr = n.number("lr", c.lr);
  const std::string sched = n.string("schedule", "poly");
  if (sched == "poly") {
    c.schedule = Schedule::kPoly;
  } else if (sched == "constant") {
    c.schedule = Schedule::kConstant;
  } else {
    throw ConfigError(n.key_path("schedule"), "expected poly or constant, got '" + sched + "'");
  }
  c.poly_power = n.number("poly_power", c.poly_power);
  c.min_lr = n.number("min_lr", c.min_lr);
  try {
    c.optimizer.kind = optimizer_from_string(n.string("optimizer", "adamw"));
  } catch (const InvalidInput& e) {
    throw ConfigError(n.key_path("optimizer"), e.what());
  }
  c.optimizer.weight_decay = n.number("weight_decay", c.optimizer.weight_decay);
  c.optimizer.momentum = n.number("momentum", c.optimizer.momentum);
  c.aux_weight = n.number("aux_weight", c.aux_weight);
  const long long seed = n.integer("seed", 0);
  if (seed < 0) throw ConfigError(n.key_path("seed"), "must be >= 0");
  c.seed = static_cast<std::uint64_t>(seed);
  c.train_on_clear = n.boolean("train_on_clear", c.train_on_clear);
  c.crop = static_cast<int>(n.integer("crop", c.crop));
  c.val_fraction = n.number("val_fraction", c.val_fraction);
  c.val_every = n.integer("val_every", c.val_every);
  c.consistency_loss = n.boolean("consistency_loss", false);
  c.validate();
  return c;
}

config::Json to_json(const TrainConfig& c) {
  return {{"epochs", c.epochs},
          {"max_steps", c.max_steps},
          {"batch_size", c.batch_size},
          {"accum", c.accum},
          {"lr", c.lr},
          {"schedule", c.schedule == Schedule::kPoly ? "poly" : "constant"},
          {"poly_power", c.poly_power},
          {"min_lr", c.min_lr},
          {"optimizer", std::string(to_string(c.optimizer.kind))},
          {"weight_decay", c.optimizer.weight_decay},
          {"momentum", c.optimizer.momentum},
          {"aux_weight", c.aux_weight},
          {"seed", c.seed},
          {"train_on_clear", c.train_on_clear},
          {"crop", c.crop},
          {"val_fraction", c.val_fraction},
          {"val_every", c.val_every},
          {"consistency_loss", c.consistency_loss}};
}

namespace {

template <class T>
double cross_entropy(const Feature<T>& logits, const LabelMap& labels, Feature<T>* grad, double scale) {
  const int C = logits.channels;
  const int P = logits.pixels();
  const auto ids = labels.data();
  if (grad) *grad = Feature<T>(C, logits.height, logits.width);
  const double inv = scale / P;
  double sum = 0.0;
  std::vector<double> e(C);
  for (int p = 0; p < P; ++p) {
    double m = -INFINITY;
    for (int c = 0; c < C; ++c) m = std::max(m, static_cast<double>(logits.data(c, p)));
    double z = 0.0;
    for (int c = 0; c < C; ++c) {
      e[c] = std::exp(static_cast<double>(logits.data(c, p)) - m);
      z += e[c];
    }
    const int y = ids[p];
    sum += m + std::log(z) - static_cast<double>(logits.data(y, p));
    if (grad) {
      for (int c = 0; c < C; ++c)
        grad->data(c, p) = static_cast<T>((e[c] / z - (c == y ? 1.0 : 0.0)) * inv);
    }
  }
  return sum / P;
}

}  // namespace

template <class T>
LossReport seg_loss(const seg::Logits<T>& logits, const LabelMap& labels, double aux_weight,
                    Feature<T>* grad_main_up, Feature<T>* grad_aux_up, double scale) {
  const Feature<T>& m = logits.main_up;
  if (labels.height() != m.height || labels.width() != m.width)
    throw InvalidInput("seg_loss: labels " + std::to_string(labels.height()) + "x" +
                       std::to_string(labels.width()) + " vs logits " + std::to_string(m.height) +
                       "x" + std::to_string(m.width));
  if (labels.max_id() >= m.channels)
    throw InvalidInput("seg_loss: label id " + std::to_string(labels.max_id()) + " >= class count " +
                       std::to_string(m.channels));
  LossReport r;
  r.main = cross_entropy(m, labels, grad_main_up, scale);
  r.aux = cross_entropy(logits.aux_up, labels, grad_aux_up, scale * aux_weight);
  r.total = r.main + aux_weight * r.aux;
  return r;
}

config::Json to_json(const StepRecord& r) {
  return {{"step", r.step},
          {"loss_main", r.loss.main},
          {"loss_aux", r.loss.aux},
          {"loss_total", r.loss.total},
          {"lr", r.lr},
          {"grad_norm", r.grad_norm},
          {"updated", r.updated}};
}

template <class T>
Trainer<T>::Trainer(seg::SegNet<T>& net, const TrainConfig& config)
    : net_(net), config_(config), params_(net.params()), optimizer_(params_, config.optimizer) {
  nn::zero_grads(params_);
}

template <class T>
StepRecord Trainer<T>::train_step(const std::vector<const Example<T>*>& batch, double lr) {
  if (batch.empty()) throw InvalidInput("train_step: empty batch");
  const double scale = 1.0 / (static_cast<double>(batch.size()) * config_.accum);
  StepRecord rec;
  rec.step = step_;
  rec.lr = lr;
  const bool guided = net_.has_guidance();
  for (const Example<T>* ex : batch) {
    typename seg::SegNet<T>::Cache cache;
    const auto logits = net_.forward(ex->input, guided ? &ex->guidance : nullptr, &cache);
    Feature<T> gm, ga;
    const LossReport l = seg_loss(logits, ex->labels, config_.aux_weight, &gm, &ga, scale);
    rec.loss.main += l.main / batch.size();
    rec.loss.aux += l.aux / batch.size();
    rec.loss.total += l.total / batch.size();
    net_.backward(gm, ga, cache);
  }
  double sq = 0.0;
  for (const auto* p : params_) sq += static_cast<double>(p->grad.squaredNorm());
  rec.grad_norm = std::sqrt(sq);
  if (!std::isfinite(rec.loss.total) || !std::isfinite(rec.grad_norm)) {
    std::ostringstream os;
    os << "non-finite training state at step " << step_ << ": loss " << rec.loss.total << ", lr "
       << lr << ", grad norm " << rec.grad_norm;
    throw NumericError(os.str());
  }
  ++step_;
  if (step_ % config_.accum == 0) {
    optimizer_.step(lr);
    nn::zero_grads(params_);
    rec.updated = true;
  }
  return rec;
}

double learning_rate(const TrainConfig& c, long long step, long long total_steps) {
  if (c.schedule == Schedule::kConstant || total_steps <= 0) return c.lr;
  const double frac = std::min(1.0, static_cast<double>(step) / static_cast<double>(total_steps));
  return (c.lr - c.min_lr) * std::pow(1.0 - frac, c.poly_power) + c.min_lr;
}

template <class T>
LabelMap predict(const seg::SegNet<T>& net, const Example<T>& ex) {
  const auto logits = net.forward(ex.input, net.has_guidance() ? &ex.guidance : nullptr, nullptr);
  return seg::argmax_labels(logits.main_up);
}

template <class T>
double evaluate_miou(const seg::SegNet<T>& net, const std::vector<Example<T>>& examples) {
  eval::ConfusionAccumulator acc(net.config().classes);
  for (const Example<T>& ex : examples) acc.update(predict(net, ex), ex.labels);
  return acc.miou();
}

namespace {

template <class T>
Example<T> crop_example(const Example<T>& ex, int side, Rng& rng) {
  Example<T> out;
  out.id = ex.id;
  out.guidance = ex.guidance;
  const int y0 = static_cast<int>(rng.below(static_cast<std::uint64_t>(ex.input.height - side) + 1));
  const int x0 = static_cast<int>(rng.below(static_cast<std::uint64_t>(ex.input.width - side) + 1));
  out.input = Feature<T>(ex.input.channels, side, side);
  out.labels = LabelMap(side, side);
  for (int y = 0; y < side; ++y) {
    for (int x = 0; x < side; ++x) {
      const int src = (y0 + y) * ex.input.width + x0 + x;
      out.input.data.col(y * side + x) = ex.input.data.col(src);
      out.labels.at(y, x) = ex.labels.at(y0 + y, x0 + x);
    }
  }
  return out;
}

long long round_up(long long v, long long m) { return (v + m - 1) / m * m; }

}  // namespace

template <class T>
FitResult fit(seg::SegNet<T>& net, const TrainConfig& config, const std::vector<Example<T>>& train,
              const std::vector<Example<T>>& val, const FitOptions& options) {
  config.validate();
  if (train.empty()) throw InvalidInput("fit: the training set is empty");
  const long long n = static_cast<long long>(train.size());
  const long long B = config.batch_size;
  const long long per_epoch = (n + B - 1) / B;
  FitResult result;
  result.total_steps = round_up(config.max_steps > 0 ? config.max_steps : config.epochs * per_epoch,
                                config.accum);
  const long long val_every = round_up(config.val_every > 0 ? config.val_every : per_epoch, config.accum);
  const bool use_crop = config.crop > 0 && config.crop < train.front().input.height;
  if (use_crop) net.check_input_size(config.crop, config.crop);

  Trainer<T> trainer(net, config);
  long long start = 0;
  if (options.resume) {
    const config::Json meta = ckpt::load(*options.resume, net, &trainer.optimizer());
    start = meta.value("step", 0LL);
    result.best_val_miou = meta.value("best_val_miou", -1.0);
    result.best_step = meta.value("best_step", -1LL);
    if (start % config.accum != 0)
      throw DataError("", "checkpoint step " + std::to_string(start) + " is not an update boundary");
    trainer.set_step(start);
  }

  std::ofstream log;
  const auto log_path = options.out_dir / "train_log.jsonl";
  if (options.write_files) {
    std::filesystem::create_directories(options.out_dir);
    std::vector<std::string> keep;
    if (start > 0) {
      std::ifstream old(log_path);
      std::string line;
      while (std::getline(old, line)) {
        if (line.empty()) continue;
        if (config::Json::parse(line).value("step", 0LL) < start) keep.push_back(line);
      }
    }
    log.open(log_path, std::ios::trunc);
    for (const auto& l : keep) log << l << '\n';
  }

  auto checkpoint_meta = [&](long long step) {
    config::Json m = options.meta;
    m["step"] = step;
    m["total_steps"] = result.total_steps;
    m["best_val_miou"] = result.best_val_miou;
    m["best_step"] = result.best_step;
    m["train"] = to_json(config);
    return m;
  };

  const std::uint64_t order_seed = derive_seed(config.seed, "order");
  const std::uint64_t crop_seed = derive_seed(config.seed, "crop");
  long long perm_epoch = -1;
  std::vector<std::size_t> perm(train.size());
  for (long long s = start; s < result.total_steps; ++s) {
    const long long epoch = s / per_epoch;
    if (epoch != perm_epoch) {
      std::iota(perm.begin(), perm.end(), std::size_t{0});
      Rng r(derive_seed(order_seed, static_cast<std::uint64_t>(epoch)));
      for (std::size_t i = perm.size(); i > 1; --i) std::swap(perm[i - 1], perm[r.below(i)]);
      perm_epoch = epoch;
    }
    const long long first = (s % per_epoch) * B;
    const long long last = std::min(n, first + B);
    std::vector<Example<T>> cropped;
    std::vector<const Example<T>*> batch;
    if (use_crop) {
      Rng r(derive_seed(crop_seed, static_cast<std::uint64_t>(s)));
      for (long long i = first; i < last; ++i) cropped.push_back(crop_example(train[perm[i]], config.crop, r));
      for (const auto& e : cropped) batch.push_back(&e);
    } else {
      for (long long i = first; i < last; ++i) batch.push_back(&train[perm[i]]);
    }
    const double lr = learning_rate(config, s / config.accum, result.total_steps / config.accum);
    StepRecord rec = trainer.train_step(batch, lr);
    result.log.push_back(rec);
    if (log.is_open()) log << to_json(rec).dump() << '\n' << std::flush;
    if (options.on_step) options.on_step(rec);

    const long long done = s + 1;
    if (done % val_every == 0 || done == result.total_steps) {
      if (!val.empty()) {
        result.final_val_miou = evaluate_miou(net, val);
        if (result.final_val_miou > result.best_val_miou) {
          result.best_val_miou = result.final_val_miou;
          result.best_step = done;
          if (options.write_files)
            ckpt::save(options.out_dir / "best.ckpt", net, &trainer.optimizer(), checkpoint_meta(done));
        }
      }
      if (options.write_files)
        ckpt::save(options.out_dir / "last.ckpt", net, &trainer.optimizer(), checkpoint_meta(done));
    }
  }
  return result;
}

GradCheckResult grad_check(const std::function<double()>& loss, const std::function<void()>& analytic,
                           const nn::ParamList<double>& params, double eps, double floor,
                           int max_entries) {
  analytic();
  std::vector<nn::Mat<double>> grads;
  for (const auto* p : params) grads.push_back(p->grad);
  std::map<std::string, double> per_group;
  std::vector<std::string> order;
  GradCheckResult res;
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto* p = params[k];
    const Eigen::Index size = p->size();
    const Eigen::Index probes = std::min<Eigen::Index>(size, max_entries);
    if (!per_group.count(p->group)) {
      per_group[p->group] = 0.0;
      order.push_back(p->group);
    }
    for (Eigen::Index j = 0; j < probes; ++j) {
      const Eigen::Index idx = probes == size ? j : j * size / probes;
      double& x = p->value.data()[idx];
      const double orig = x;
      x = orig + eps;
      const double lp = loss();
      x = orig - eps;
      const double lm = loss();
      x = orig;
      const double num = (lp - lm) / (2 * eps);
      const double ana = grads[k].data()[idx];
      const double rel = std::abs(ana - num) / std::max({std::abs(ana), std::abs(num), floor});
      per_group[p->group] = std::max(per_group[p->group], rel);
      res.max_rel_error = std::max(res.max_rel_error, rel);
    }
  }
  for (const auto& g : order) res.groups.emplace_back(g, per_group[g]);
  return res;
}

#define WS_INSTANTIATE(T)                                                                      \
  template LossReport seg_loss<T>(const seg::Logits<T>&, const LabelMap&, double, Feature<T>*, \
                                  Feature<T>*, double);                                        \
  template class Trainer<T>;                                                                   \
  template LabelMap predict<T>(const seg::SegNet<T>&, const Example<T>&);                      \
  template double evaluate_miou<T>(const seg::SegNet<T>&, const std::vector<Example<T>>&);     \
  template FitResult fit<T>(seg::SegNet<T>&, const TrainConfig&, const std::vector<Example<T>>&, \
                            const std::vector<Example<T>>&, const FitOptions&);

WS_INSTANTIATE(float)
WS_INSTANTIATE(double)
#undef WS_INSTANTIATE

}  // namespace weatherseg::train
