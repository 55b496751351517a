#include "weatherseg/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "weatherseg/error.hpp"
#include "weatherseg/rng.hpp"

namespace weatherseg::exp {

namespace {

EmbedderConfig parse_embedder(const config::Node& n) {
  n.allow_only({"backend", "dim", "seed", "weights_path"});
  EmbedderConfig c;
  c.backend = n.string("backend", c.backend);
  if (c.backend != "mock" && c.backend != "weights")
    throw ConfigError(n.key_path("backend"), "expected mock or weights, got '" + c.backend + "'");
  c.dim = static_cast<int>(n.integer("dim", c.dim));
  if (c.dim < 2) throw ConfigError(n.key_path("dim"), "must be >= 2");
  const long long seed = n.integer("seed", static_cast<long long>(c.seed));
  if (seed < 0) throw ConfigError(n.key_path("seed"), "must be >= 0");
  c.seed = static_cast<std::uint64_t>(seed);
  c.weights_path = n.string("weights_path", "");
  if (c.backend == "weights" && c.weights_path.empty())
    throw ConfigError(n.key_path("weights_path"), "required for the weights backend");
  return c;
}

GuidanceConfig parse_guidance(const config::Node& n, int embed_dim) {
  n.allow_only({"mode", "normalization", "concepts", "bank_path", "N", "D"});
  GuidanceConfig c;
  try {
    c.mode = guide::mode_from_string(n.string("mode", "blended"));
  } catch (const InvalidInput& e) {
    throw ConfigError(n.key_path("mode"), e.what());
  }
  try {
    c.normalization = guide::normalization_from_string(n.string("normalization", "softmax"));
  } catch (const InvalidInput& e) {
    throw ConfigError(n.key_path("normalization"), e.what());
  }
  c.concepts = n.string("concepts", c.concepts);
  if (c.concepts != "default" && c.concepts != "four")
    throw ConfigError(n.key_path("concepts"), "expected default or four, got '" + c.concepts + "'");
  c.bank_path = n.string("bank_path", "");
  c.n = static_cast<int>(n.integer("N", 0));
  if (c.n < 0 || c.n == 1) throw ConfigError(n.key_path("N"), "must be 0 (any) or >= 2");
  if (n.has("D") && n.integer("D") != embed_dim)
    throw ConfigError(n.key_path("D"), "must equal embedder.dim (" + std::to_string(embed_dim) + ")");
  return c;
}

}  // namespace

ExperimentConfig parse_experiment(const config::Json& root_json) {
  if (!root_json.is_object()) throw ConfigError("<root>", "expected a mapping at the top level");
  const config::Node root(&root_json, "");
  root.allow_only({"seed", "output_dir", "precision", "scene", "weather", "dataset", "embedder",
                   "guidance", "network", "training", "eval", "ablate"});
  ExperimentConfig c;
  c.raw = root_json;
  c.hash = config::hash_hex(root_json);
  c.data = scene::parse_dataset_config(root);
  c.data.scene.validate();
  c.data.weather.validate();
  c.output_dir = root.string("output_dir", c.output_dir);
  c.precision = root.string("precision", c.precision);
  if (c.precision != "float32" && c.precision != "float64")
    throw ConfigError("precision", "expected float32 or float64, got '" + c.precision + "'");
  c.embedder = parse_embedder(root.child("embedder"));
  c.guidance = parse_guidance(root.child("guidance"), c.embedder.dim);

  const config::Node net = root.child("network");
  c.network = seg::parse_network_config(net);
  if (net.has("classes") && c.network.classes != c.data.scene.num_classes())
    throw ConfigError(net.key_path("classes"),
                      "must equal the scene class count (" + std::to_string(c.data.scene.num_classes()) + ")");
  c.network.classes = c.data.scene.num_classes();
  c.network.guidance = c.network.self_attention_control ? guide::Mode::kNone : c.guidance.mode;
  c.network.normalization = c.guidance.normalization;
  c.network.validate();
  const int f = c.network.downsample();
  if (c.data.scene.height % f != 0 || c.data.scene.width % f != 0)
    throw ConfigError("scene.height", "image size must be a multiple of " + std::to_string(f) +
                                          " for this network");

  const config::Node tr = root.child("training");
  c.training = train::parse_train_config(tr);
  if (!tr.has("seed")) c.training.seed = c.data.global_seed;
  if (c.training.crop > 0 && c.training.crop % f != 0)
    throw ConfigError(tr.key_path("crop"), "must be a multiple of " + std::to_string(f));

  const config::Node ev = root.child("eval");
  ev.allow_only({"split"});
  c.eval.split = ev.string("split", c.eval.split);
  if (c.eval.split != "train" && c.eval.split != "test")
    throw ConfigError(ev.key_path("split"), "expected train or test");

  const config::Node ab = root.child("ablate");
  ab.allow_only({"variants"});
  if (ab.has("variants")) {
    c.ablate.variants = ab.strings("variants");
    for (const auto& v : c.ablate.variants) {
      const auto& all = all_variants();
      if (std::find(all.begin(), all.end(), v) == all.end())
        throw ConfigError(ab.key_path("variants"), "unknown variant '" + v + "'");
    }
    if (c.ablate.variants.empty()) throw ConfigError(ab.key_path("variants"), "must not be empty");
  }
  return c;
}

ExperimentConfig load_experiment(const std::filesystem::path& path,
                                 const std::vector<std::pair<std::string, std::string>>& overrides) {
  config::Json root = config::load_file(path);
  for (const auto& [k, v] : overrides) config::apply_override(root, k, v);
  return parse_experiment(root);
}

ExperimentConfig variant_config(const ExperimentConfig& cfg, const std::string& variant) {
  config::Json j = cfg.raw;
  auto& g = j["guidance"];
  if (!g.is_object()) g = config::Json::object();
  auto& n = j["network"];
  if (!n.is_object()) n = config::Json::object();
  n.erase("self_attention_control");
  g.erase("bank_path");
  g.erase("N");
  if (variant == "baseline") {
    g["mode"] = "none";
  } else if (variant == "guided") {
    g["mode"] = "blended";
    g["concepts"] = "default";
  } else if (variant == "multiclip") {
    g["mode"] = "multiclip";
    g["concepts"] = "default";
  } else if (variant == "four_concept") {
    g["mode"] = "blended";
    g["concepts"] = "four";
  } else if (variant == "attributes") {
    g["mode"] = "attributes";
  } else if (variant == "extra_params") {
    g["mode"] = "none";
    g["concepts"] = "default";
    n["self_attention_control"] = true;
  } else {
    throw ConfigError("ablate.variants", "unknown variant '" + variant + "'");
  }
  return parse_experiment(j);
}

Runtime make_runtime(const ExperimentConfig& cfg) {
  Runtime rt;
  if (cfg.embedder.backend == "weights") {
    rt.backend = embed::real_encoder_adapter(cfg.embedder.weights_path);
  } else {
    rt.backend = std::make_unique<embed::MockBackend>(cfg.embedder.dim, cfg.embedder.seed);
  }
  std::vector<std::string> texts;
  if (!cfg.guidance.bank_path.empty()) {
    try {
      texts = embed::load_concept_file(cfg.guidance.bank_path);
    } catch (const Error& e) {
      throw ConfigError("guidance.bank_path", e.what());
    }
  } else {
    texts = cfg.guidance.concepts == "four" ? embed::four_concepts() : embed::default_concepts();
  }
  if (cfg.guidance.n > 0 && static_cast<int>(texts.size()) != cfg.guidance.n)
    throw ConfigError("guidance.N", "bank holds " + std::to_string(texts.size()) + " concepts, expected " +
                                        std::to_string(cfg.guidance.n));
  rt.bank = embed::build_concept_bank(texts, *rt.backend);
  return rt;
}

template <class T>
std::unique_ptr<seg::SegNet<T>> build_network(const ExperimentConfig& cfg, const Runtime& rt) {
  const nn::Mat<T> bank = rt.bank.embeddings.cast<T>();
  return std::make_unique<seg::SegNet<T>>(cfg.network, bank, derive_seed(cfg.training.seed, "model"));
}

template <class T>
guide::GuidanceInput<T> guidance_input(const Image& image, const Runtime& rt) {
  guide::GuidanceInput<T> g;
  const embed::Embedding e = rt.backend->embed_image(image);
  g.image_embedding = e.transpose().cast<T>();
  const embed::FeatureProbe probe = embed::feature_probe(image);
  g.attributes.resize(1, embed::kProbeFeatures);
  for (int i = 0; i < embed::kProbeFeatures; ++i) g.attributes(0, i) = static_cast<T>(probe[i]);
  return g;
}

template <class T>
train::Example<T> make_example(const std::string& id, const Image& image, const LabelMap& labels,
                               const Runtime& rt) {
  train::Example<T> ex;
  ex.id = id;
  ex.input = seg::image_to_feature<T>(image);
  ex.labels = labels;
  ex.guidance = guidance_input<T>(image, rt);
  return ex;
}

template <class T>
TrainingData<T> make_training_data(const ExperimentConfig& cfg, const std::vector<scene::PairedSample>& samples,
                                   const Runtime& rt) {
  const std::size_t n = samples.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng r(derive_seed(cfg.training.seed, "val"));
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[r.below(i)]);
  std::size_t n_val = static_cast<std::size_t>(std::lround(cfg.training.val_fraction * static_cast<double>(n)));
  if (cfg.training.val_fraction > 0 && n >= 2) n_val = std::clamp<std::size_t>(n_val, 1, n - 1);
  std::vector<bool> is_val(n, false);
  for (std::size_t i = 0; i < n_val; ++i) is_val[order[i]] = true;

  TrainingData<T> d;
  for (std::size_t i = 0; i < n; ++i) {
    const scene::PairedSample& s = samples[i];
    auto& dst = is_val[i] ? d.val : d.train;
    if (!is_val[i] && cfg.training.train_on_clear)
      dst.push_back(make_example<T>(s.id + "/clear", s.clear, s.labels, rt));
    for (std::size_t k = 0; k < s.degraded.size(); ++k)
      dst.push_back(make_example<T>(s.id + "/" + std::to_string(k), s.degraded[k].image, s.labels, rt));
  }
  return d;
}

template <class T>
eval::EvalReport evaluate(const ExperimentConfig& cfg, const seg::SegNet<T>& net, const Runtime& rt,
                          const std::vector<scene::PairedSample>& samples,
                          const std::vector<std::string>& class_names) {
  const bool guided = net.has_guidance();
  auto predictor = [&](const Image& image) {
    const auto input = seg::image_to_feature<T>(image);
    guide::GuidanceInput<T> g;
    if (guided) g = guidance_input<T>(image, rt);
    return seg::argmax_labels(net.forward(input, guided ? &g : nullptr, nullptr).main_up);
  };
  eval::EvalReport r = eval::stratified_eval(predictor, samples, class_names);
  r.config = cfg.raw;
  r.config_hash = cfg.hash;
  r.split = cfg.eval.split;
  return r;
}

std::vector<int> concept_categories(const std::vector<std::string>& texts) {
  std::vector<int> out;
  for (const auto& t : texts) {
    const auto c = embed::concept_category(t);
    out.push_back(c ? static_cast<int>(*c) : -1);
  }
  return out;
}

template <class T>
double composition_loss(guide::GuidanceHead<T>& head, const nn::Mat<T>& image_embedding, int category,
                        const std::vector<int>& categories, bool accumulate) {
  if (static_cast<int>(categories.size()) != head.concepts())
    throw InvalidInput("composition_loss: one category per concept is required");
  typename guide::GuidanceHead<T>::Cache cache;
  const nn::Mat<T> v = head.weights(image_embedding, &cache);
  double mass = 0.0;
  for (int n = 0; n < v.cols(); ++n)
    if (categories[n] == category) mass += static_cast<double>(v(0, n));
  if (mass <= 0.0) throw InvalidInput("composition_loss: no concept of the target category");
  if (accumulate) {
    nn::Mat<T> dv = nn::Mat<T>::Zero(1, v.cols());
    for (int n = 0; n < v.cols(); ++n)
      if (categories[n] == category) dv(0, n) = static_cast<T>(-1.0 / mass);
    head.backward_weights(dv, cache);
  }
  return -std::log(mass);
}

template <class T>
int predicted_category(const guide::GuidanceHead<T>& head, const nn::Mat<T>& image_embedding,
                       const std::vector<int>& categories) {
  Eigen::Index best = 0;
  head.weights(image_embedding, nullptr).row(0).maxCoeff(&best);
  return categories.at(static_cast<std::size_t>(best));
}

#define WS_INSTANTIATE(T)                                                                          \
  template std::unique_ptr<seg::SegNet<T>> build_network<T>(const ExperimentConfig&, const Runtime&); \
  template guide::GuidanceInput<T> guidance_input<T>(const Image&, const Runtime&);                 \
  template train::Example<T> make_example<T>(const std::string&, const Image&, const LabelMap&,      \
                                             const Runtime&);                                        \
  template TrainingData<T> make_training_data<T>(const ExperimentConfig&,                           \
                                                 const std::vector<scene::PairedSample>&, const Runtime&); \
  template eval::EvalReport evaluate<T>(const ExperimentConfig&, const seg::SegNet<T>&, const Runtime&, \
                                        const std::vector<scene::PairedSample>&,                     \
                                        const std::vector<std::string>&);     \
  template double composition_loss<T>(guide::GuidanceHead<T>&, const nn::Mat<T>&, int,            \
                                      const std::vector<int>&, bool);                              \
  template int predicted_category<T>(const guide::GuidanceHead<T>&, const nn::Mat<T>&,            \
                                     const std::vector<int>&);

WS_INSTANTIATE(float)
WS_INSTANTIATE(double)
#undef WS_INSTANTIATE

}  // namespace weatherseg::exp
