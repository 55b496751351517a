#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "weatherseg/config.hpp"
#include "weatherseg/embedder.hpp"
#include "weatherseg/evalkit.hpp"
#include "weatherseg/guidance.hpp"
#include "weatherseg/scenegen.hpp"
#include "weatherseg/segnet.hpp"
#include "weatherseg/trainer.hpp"

// One experiment config tying data generation, the frozen embedder, the
// network, training and evaluation together, plus the helpers that turn a
// dataset into network inputs.
namespace weatherseg::exp {

struct EmbedderConfig {
  std::string backend = "mock";  // mock | weights
  int dim = 512;
  std::uint64_t seed = 0x5eedc11bULL;
  std::string weights_path;
};

struct GuidanceConfig {
  guide::Mode mode = guide::Mode::kBlended;
  guide::Normalization normalization = guide::Normalization::kSoftmax;
  std::string concepts = "default";  // default | four, ignored when bank_path is set
  std::string bank_path;
  int n = 0;  // expected bank size; 0 = whatever the bank holds
};

struct EvalConfig {
  std::string split = "test";
};

inline const std::vector<std::string>& all_variants() {
  static const std::vector<std::string> v{"baseline",     "guided",     "multiclip",
                                          "four_concept", "attributes", "extra_params"};
  return v;
}

struct AblateConfig {
  std::vector<std::string> variants = all_variants();
};

struct ExperimentConfig {
  config::Json raw;  // normalized tree after overrides
  std::string hash;
  scene::DatasetConfig data;
  EmbedderConfig embedder;
  GuidanceConfig guidance;
  seg::NetworkConfig network;
  train::TrainConfig training;
  EvalConfig eval;
  AblateConfig ablate;
  std::string precision = "float32";  // float32 | float64
  std::string output_dir = "runs";
};

// Validates everything; ConfigError names the offending dotted key.
ExperimentConfig parse_experiment(const config::Json& root);
ExperimentConfig load_experiment(const std::filesystem::path& path,
                                 const std::vector<std::pair<std::string, std::string>>& overrides = {});

// Copy of `cfg` reconfigured as one of the ablation variants.
ExperimentConfig variant_config(const ExperimentConfig& cfg, const std::string& variant);

struct Runtime {
  std::unique_ptr<embed::Backend> backend;
  embed::ConceptBank bank;
};

Runtime make_runtime(const ExperimentConfig& cfg);

template <class T>
std::unique_ptr<seg::SegNet<T>> build_network(const ExperimentConfig& cfg, const Runtime& rt);

template <class T>
guide::GuidanceInput<T> guidance_input(const Image& image, const Runtime& rt);

template <class T>
train::Example<T> make_example(const std::string& id, const Image& image, const LabelMap& labels,
                               const Runtime& rt);

template <class T>
struct TrainingData {
  std::vector<train::Example<T>> train;
  std::vector<train::Example<T>> val;
};

// Held-out scenes (training.val_fraction) become the validation set; training
// uses every degraded variant of the remaining scenes, plus their clear
// images when training.train_on_clear is set.
template <class T>
TrainingData<T> make_training_data(const ExperimentConfig& cfg, const std::vector<scene::PairedSample>& samples,
                                   const Runtime& rt);

template <class T>
eval::EvalReport evaluate(const ExperimentConfig& cfg, const seg::SegNet<T>& net, const Runtime& rt,
                          const std::vector<scene::PairedSample>& samples,
                          const std::vector<std::string>& class_names);

// Weather category of each concept (embed::Category as int, -1 when no
// keyword matches).
std::vector<int> concept_categories(const std::vector<std::string>& texts);

// Proxy loss for composition recovery: -log of the total weight v assigns to
// concepts of `category`. With `accumulate` the gradient is added to the
// head's parameters.
template <class T>
double composition_loss(guide::GuidanceHead<T>& head, const nn::Mat<T>& image_embedding, int category,
                        const std::vector<int>& categories, bool accumulate);

// Category of the concept with the largest weight.
template <class T>
int predicted_category(const guide::GuidanceHead<T>& head, const nn::Mat<T>& image_embedding,
                       const std::vector<int>& categories);

}  // namespace weatherseg::exp
