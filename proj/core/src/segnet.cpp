#include "weatherseg/segnet.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "weatherseg/error.hpp"
#include "weatherseg/rng.hpp"

namespace weatherseg::seg {

void NetworkConfig::validate() const {
  if (channels.empty()) throw ConfigError("network.channels", "need at least one stage");
  for (int c : channels)
    if (c < 1) throw ConfigError("network.channels", "channel counts must be >= 1");
  std::set<int> seen;
  for (int s : inject_after) {
    if (s < 1 || s > stages())
      throw ConfigError("network.inject_after",
                        "stage " + std::to_string(s) + " outside 1.." + std::to_string(stages()));
    if (!seen.insert(s).second) throw ConfigError("network.inject_after", "duplicate stage");
  }
  if (heads < 1) throw ConfigError("network.heads", "must be >= 1");
  if (head_dim < 1) throw ConfigError("network.head_dim", "must be >= 1");
  if (decoder_channels < 1) throw ConfigError("network.decoder_channels", "must be >= 1");
  if (classes < 2 || classes > 255) throw ConfigError("network.classes", "must be in 2..255");
  if (aux_stage < 1 || aux_stage > stages())
    throw ConfigError("network.aux_stage", "outside 1.." + std::to_string(stages()));
  if (self_attention_control && guidance != guide::Mode::kNone)
    throw ConfigError("network.self_attention_control", "cannot be combined with guidance");
}

NetworkConfig parse_network_config(const config::Node& n) {
  n.allow_only({"channels", "inject_after", "heads", "head_dim", "decoder_channels", "classes",
                "aux_stage", "self_attention_control"});
  NetworkConfig c;
  auto ints = [](const std::vector<long long>& v) { return std::vector<int>(v.begin(), v.end()); };
  if (n.has("channels")) c.channels = ints(n.integers("channels"));
  if (n.has("inject_after")) {
    c.inject_after = ints(n.integers("inject_after"));
  } else {
    c.inject_after.clear();
    for (int s = 1; s < c.stages(); ++s) c.inject_after.push_back(s);
  }
  c.heads = static_cast<int>(n.integer("heads", c.heads));
  c.head_dim = static_cast<int>(n.integer("head_dim", c.head_dim));
  c.decoder_channels = static_cast<int>(n.integer("decoder_channels", c.decoder_channels));
  c.classes = static_cast<int>(n.integer("classes", c.classes));
  c.aux_stage = static_cast<int>(n.integer("aux_stage", std::min(3, c.stages())));
  c.self_attention_control = n.boolean("self_attention_control", false);
  return c;
}

config::Json to_json(const NetworkConfig& c) {
  return {{"channels", c.channels},
          {"inject_after", c.inject_after},
          {"heads", c.heads},
          {"head_dim", c.head_dim},
          {"decoder_channels", c.decoder_channels},
          {"classes", c.classes},
          {"aux_stage", c.aux_stage},
          {"guidance", std::string(guide::to_string(c.guidance))},
          {"normalization", std::string(guide::to_string(c.normalization))},
          {"self_attention_control", c.self_attention_control}};
}

template <class T>
Feature<T> image_to_feature(const Image& image) {
  Feature<T> f(Image::kChannels, image.height(), image.width());
  const auto px = image.data();
  const std::size_t n = image.pixel_count();
  for (int c = 0; c < Image::kChannels; ++c) {
    T* row = f.data.row(c).data();
    for (std::size_t i = 0; i < n; ++i) row[i] = static_cast<T>((px[i * Image::kChannels + c] - 0.5) * 4.0);
  }
  return f;
}

template <class T>
LabelMap argmax_labels(const Feature<T>& logits) {
  LabelMap out(logits.height, logits.width);
  auto ids = out.data();
  for (int p = 0; p < logits.pixels(); ++p) {
    Eigen::Index best = 0;
    logits.data.col(p).maxCoeff(&best);
    ids[p] = static_cast<std::uint8_t>(best);
  }
  return out;
}

namespace {

long long blended_extra_params(const NetworkConfig& c, int concepts, int embed_dim) {
  long long n = 0;
  for (int s : c.inject_after)
    n += nn::Attention<double>::param_count(c.channels[s - 1], 2 * embed_dim, c.heads, c.head_dim, false);
  const long long hidden = std::max(1, embed_dim / 2);
  n += embed_dim * hidden + hidden + hidden * concepts + concepts;
  return n;
}

}  // namespace

int matched_control_head_dim(const NetworkConfig& c, int concepts, int embed_dim) {
  const long long target = blended_extra_params(c, concepts, embed_dim);
  // Per layer: 3C + I (4C + 3) with I = heads * head_dim.
  long long fixed = 0, per_inner = 0;
  for (int s : c.inject_after) {
    fixed += 3LL * c.channels[s - 1];
    per_inner += 4LL * c.channels[s - 1] + 3;
  }
  if (per_inner == 0) return c.head_dim;
  const double inner = static_cast<double>(target - fixed) / static_cast<double>(per_inner);
  return std::max(1, static_cast<int>(std::lround(inner / c.heads)));
}

template <class T>
SegNet<T>::SegNet(const NetworkConfig& config, const Mat<T>& bank, std::uint64_t seed)
    : config_(config) {
  config_.validate();
  const int S = config_.stages();
  const auto& ch = config_.channels;
  stem = nn::Conv2d<T>("stem", "backbone", 3, ch[0], 4, 4, 0);
  for (int s = 0; s < S; ++s) {
    const std::string p = "stage" + std::to_string(s + 1);
    conv_a.emplace_back(p + ".conv_a", "backbone", s == 0 ? ch[0] : ch[s - 1], ch[s], 3,
                        s == 0 ? 1 : 2, 1);
    conv_b.emplace_back(p + ".conv_b", "backbone", ch[s], ch[s], 3, 1, 1);
  }
  int total = 0;
  for (int c : ch) total += c;
  fuse = nn::Conv2d<T>("decoder.fuse", "decoder", total, config_.decoder_channels, 1, 1, 0);
  refine = nn::Conv2d<T>("decoder.refine", "decoder", config_.decoder_channels,
                         config_.decoder_channels, 3, 1, 1);
  cls = nn::Conv2d<T>("decoder.cls", "decoder", config_.decoder_channels, config_.classes, 1, 1, 0);
  aux = nn::Conv2d<T>("aux.cls", "aux", ch[config_.aux_stage - 1], config_.classes, 1, 1, 0);

  Rng backbone(derive_seed(seed, "backbone"));
  stem.init(backbone);
  for (int s = 0; s < S; ++s) {
    conv_a[s].init(backbone);
    conv_b[s].init(backbone);
  }
  fuse.init(backbone);
  refine.init(backbone);
  cls.init(backbone);
  aux.init(backbone);

  inject_.resize(S);
  if (!config_.injects()) return;
  int context_dim = 0;
  if (config_.guidance != guide::Mode::kNone) {
    guidance_.emplace(config_.guidance, bank, config_.normalization);
    Rng g(derive_seed(seed, "guidance"));
    guidance_->init(g);
    context_dim = guidance_->context_dim();
  } else {
    control_head_dim_ = matched_control_head_dim(config_, static_cast<int>(bank.rows()),
                                                 static_cast<int>(bank.cols()));
  }
  Rng ri(derive_seed(seed, "inject"));
  for (int s : config_.inject_after) {
    const std::string name = "inject" + std::to_string(s);
    if (config_.self_attention_control) {
      inject_[s - 1].emplace(name, "inject", ch[s - 1], 0, config_.heads, control_head_dim_, true);
    } else {
      inject_[s - 1].emplace(name, "inject", ch[s - 1], context_dim, config_.heads,
                             config_.head_dim, false);
    }
    inject_[s - 1]->init(ri);
  }
}

template <class T>
void SegNet<T>::check_input_size(int height, int width) const {
  const int f = config_.downsample();
  if (height < f || width < f || height % f != 0 || width % f != 0)
    throw InvalidInput("input " + std::to_string(height) + "x" + std::to_string(width) +
                       " not accepted: height and width must be positive multiples of " +
                       std::to_string(f));
}

template <class T>
Logits<T> SegNet<T>::forward(const Feature<T>& image, const guide::GuidanceInput<T>* g,
                             Cache* cache) const {
  check_input_size(image.height, image.width);
  if (image.channels != 3) throw InvalidInput("SegNet: expected a 3-channel input");
  Cache local;
  Cache& c = cache ? *cache : local;
  const int S = config_.stages();
  c.height = image.height;
  c.width = image.width;
  c.guided = guidance_.has_value() && g != nullptr;
  if (c.guided) {
    c.context = guidance_->forward(*g, &c.guidance);
  } else {
    c.context.resize(0, 0);
  }
  const bool inject = c.guided || config_.self_attention_control;

  c.stem_out = stem.forward(image, &c.stem);
  nn::relu_inplace(c.stem_out);
  c.stages.resize(S);
  for (int s = 0; s < S; ++s) {
    StageCache& sc = c.stages[s];
    const Feature<T>& in = s == 0 ? c.stem_out : c.stages[s - 1].out;
    sc.act_a = conv_a[s].forward(in, &sc.conv_a);
    nn::relu_inplace(sc.act_a);
    sc.act_b = conv_b[s].forward(sc.act_a, &sc.conv_b);
    nn::relu_inplace(sc.act_b);
    if (inject && inject_[s]) {
      sc.out = inject_[s]->forward(sc.act_b, c.guided ? &c.context : nullptr, &sc.attn);
    } else {
      sc.out = sc.act_b;
    }
  }

  const int qh = image.height / 4, qw = image.width / 4;
  int total = 0;
  for (int s = 0; s < S; ++s) total += config_.channels[s];
  Feature<T> cat(total, qh, qw);
  int row = 0;
  for (int s = 0; s < S; ++s) {
    const Feature<T>& o = c.stages[s].out;
    nn::Resize<T> up(o.height, o.width, qh, qw);
    cat.data.middleRows(row, o.channels) = up.forward(o).data;
    row += o.channels;
  }
  c.fused = fuse.forward(cat, &c.fuse);
  nn::relu_inplace(c.fused);
  c.refined = refine.forward(c.fused, &c.refine);
  nn::relu_inplace(c.refined);

  Logits<T> out;
  out.main = cls.forward(c.refined, &c.cls);
  out.aux = aux.forward(c.stages[config_.aux_stage - 1].out, &c.aux);
  out.main_up = nn::Resize<T>(qh, qw, image.height, image.width).forward(out.main);
  out.aux_up =
      nn::Resize<T>(out.aux.height, out.aux.width, image.height, image.width).forward(out.aux);
  return out;
}

template <class T>
void SegNet<T>::backward(const Feature<T>& grad_main_up, const Feature<T>& grad_aux_up,
                         const Cache& c) {
  const int S = config_.stages();
  const int qh = c.height / 4, qw = c.width / 4;
  const Feature<T>& aux_in = c.stages[config_.aux_stage - 1].out;

  Feature<T> g_main = nn::Resize<T>(qh, qw, c.height, c.width).backward(grad_main_up);
  Feature<T> g_aux =
      nn::Resize<T>(aux_in.height, aux_in.width, c.height, c.width).backward(grad_aux_up);
  g_aux.height = aux_in.height;
  g_aux.width = aux_in.width;

  Feature<T> g = cls.backward(g_main, c.cls);
  nn::relu_backward(g, c.refined);
  g = refine.backward(g, c.refine);
  nn::relu_backward(g, c.fused);
  Feature<T> g_cat = fuse.backward(g, c.fuse);

  std::vector<Feature<T>> g_out(S);
  int row = 0;
  for (int s = 0; s < S; ++s) {
    const Feature<T>& o = c.stages[s].out;
    Feature<T> part(o.channels, qh, qw);
    part.data = g_cat.data.middleRows(row, o.channels);
    row += o.channels;
    g_out[s] = nn::Resize<T>(o.height, o.width, qh, qw).backward(part);
  }
  g_out[config_.aux_stage - 1].data += aux.backward(g_aux, c.aux).data;

  Mat<T> g_context;
  const bool inject = c.guided || config_.self_attention_control;
  Feature<T> g_stem;
  for (int s = S - 1; s >= 0; --s) {
    const StageCache& sc = c.stages[s];
    Feature<T> gs = std::move(g_out[s]);
    if (inject && inject_[s]) gs = inject_[s]->backward(gs, sc.attn, c.guided ? &g_context : nullptr);
    nn::relu_backward(gs, sc.act_b);
    gs = conv_b[s].backward(gs, sc.conv_b);
    nn::relu_backward(gs, sc.act_a);
    gs = conv_a[s].backward(gs, sc.conv_a);
    if (s > 0) {
      g_out[s - 1].data += gs.data;
    } else {
      g_stem = std::move(gs);
    }
  }
  nn::relu_backward(g_stem, c.stem_out);
  stem.backward(g_stem, c.stem, false);
  if (c.guided && g_context.size() > 0) guidance_->backward(g_context, c.guidance);
}

template <class T>
ParamList<T> SegNet<T>::params() {
  ParamList<T> out;
  stem.collect(out);
  for (int s = 0; s < config_.stages(); ++s) {
    conv_a[s].collect(out);
    conv_b[s].collect(out);
  }
  fuse.collect(out);
  refine.collect(out);
  cls.collect(out);
  aux.collect(out);
  for (auto& a : inject_)
    if (a) a->collect(out);
  if (guidance_) guidance_->collect(out);
  return out;
}

template <class T>
long long SegNet<T>::param_count() const {
  long long n = 0;
  for (const auto* p : const_cast<SegNet*>(this)->params()) n += p->size();
  return n;
}

template <class T>
long long SegNet<T>::injection_param_count() const {
  long long n = 0;
  for (const auto* p : const_cast<SegNet*>(this)->params())
    if (p->group == "inject" || p->group == "guidance") n += p->size();
  return n;
}

template Feature<float> image_to_feature<float>(const Image&);
template Feature<double> image_to_feature<double>(const Image&);
template LabelMap argmax_labels<float>(const Feature<float>&);
template LabelMap argmax_labels<double>(const Feature<double>&);
template class SegNet<float>;
template class SegNet<double>;

}  // namespace weatherseg::seg
