#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "weatherseg/config.hpp"
#include "weatherseg/image.hpp"
#include "weatherseg/scenegen.hpp"

// Segmentation metrics with global accumulation: intersections and unions are
// summed over the whole evaluated set before dividing.
namespace weatherseg::eval {

class ConfusionAccumulator {
 public:
  ConfusionAccumulator() = default;
  explicit ConfusionAccumulator(int classes);

  int classes() const noexcept { return classes_; }
  // Rejects shape mismatches and ids >= classes().
  void update(const LabelMap& pred, const LabelMap& gt);

  std::uint64_t count(int gt, int pred) const { return conf_[gt * classes_ + pred]; }
  std::uint64_t intersection(int c) const { return count(c, c); }
  std::uint64_t union_count(int c) const;
  std::uint64_t pixels() const;
  bool empty() const { return pixels() == 0; }

  // nullopt for classes with an empty union.
  std::vector<std::optional<double>> iou_per_class() const;
  // Mean over classes with a nonempty union; UndefinedResult when none.
  double miou() const;

  ConfusionAccumulator& merge(const ConfusionAccumulator& other);
  bool operator==(const ConfusionAccumulator&) const = default;

  const std::vector<std::uint64_t>& confusion() const { return conf_; }
  static ConfusionAccumulator from_confusion(int classes, std::vector<std::uint64_t> counts);

 private:
  int classes_ = 0;
  std::vector<std::uint64_t> conf_;  // row = gt, column = pred
};

ConfusionAccumulator merge(const ConfusionAccumulator& a, const ConfusionAccumulator& b);

// Metrics over one set of images.
struct Report {
  std::vector<std::string> sample_ids;  // sorted, unique
  std::size_t images = 0;
  ConfusionAccumulator acc;
};

struct Gap {
  std::vector<std::optional<double>> per_class;  // clear - degraded
  double miou = 0.0;
};

// Requires identical class counts and sample sets.
Gap paired_gap(const Report& clear, const Report& degraded);

struct Stratum {
  std::string name;  // "all", "single", "multi"
  Report clear;      // clear images of the scenes in this stratum
  Report degraded;
  Gap gap;
};

struct EvalReport {
  std::string split;
  std::vector<std::string> class_names;
  std::vector<Stratum> strata;  // "all" first; empty strata are omitted
  config::Json config;
  std::string config_hash;

  const Stratum* find(const std::string& name) const;
};

using Predictor = std::function<LabelMap(const Image&)>;

// Predicts every clear image and every degraded variant of `samples` once and
// accumulates them into the overall, single-effect and multi-effect strata.
EvalReport stratified_eval(const Predictor& predict, const std::vector<scene::PairedSample>& samples,
                           const std::vector<std::string>& class_names);

config::Json to_json(const Report& r, const std::vector<std::string>& class_names);
config::Json to_json(const EvalReport& r);
Report report_from_json(const config::Json& j, int classes);
EvalReport eval_report_from_json(const config::Json& j);

// Aligned-column summary, one row per stratum.
std::string to_table(const EvalReport& r);

}  // namespace weatherseg::eval
