#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "weatherseg/config.hpp"
#include "weatherseg/guidance.hpp"
#include "weatherseg/image.hpp"
#include "weatherseg/layers.hpp"

namespace weatherseg::seg {

using nn::Feature;
using nn::Mat;
using nn::ParamList;

struct NetworkConfig {
  std::vector<int> channels{32, 64, 128, 256};  // one entry per stage
  std::vector<int> inject_after{1, 2, 3};        // 1-based stage indices
  int heads = 4;
  int head_dim = 64;
  int decoder_channels = 64;
  int classes = 6;
  int aux_stage = 3;  // 1-based
  guide::Mode guidance = guide::Mode::kNone;
  guide::Normalization normalization = guide::Normalization::kSoftmax;
  // Self-attention at the injection points instead of guidance; the inner
  // width is chosen so the model matches the blended guided model's size.
  bool self_attention_control = false;

  int stages() const { return static_cast<int>(channels.size()); }
  // Stem /4, then /2 at the start of every stage after the first.
  int downsample() const { return 4 << (stages() - 1); }
  bool injects() const { return guidance != guide::Mode::kNone || self_attention_control; }
  void validate() const;
};

NetworkConfig parse_network_config(const config::Node& node);
config::Json to_json(const NetworkConfig& c);

template <class T>
struct Logits {
  Feature<T> main;     // C at H/4 x W/4
  Feature<T> aux;      // C at the aux stage resolution
  Feature<T> main_up;  // C at H x W
  Feature<T> aux_up;   // C at H x W
};

// Image in [0,1] -> 3 x HW feature, centered and scaled to roughly unit range.
template <class T>
Feature<T> image_to_feature(const Image& image);

// Per-pixel argmax over channels.
template <class T>
LabelMap argmax_labels(const Feature<T>& logits);

// Plain convolutional encoder with optional attention after selected stages,
// an upsample-and-concatenate decoder and an auxiliary 1x1 head.
template <class T>
class SegNet {
 public:
  struct StageCache {
    typename nn::Conv2d<T>::Cache conv_a, conv_b;
    Feature<T> act_a, act_b, out;
    typename nn::Attention<T>::Cache attn;
  };
  struct Cache {
    typename nn::Conv2d<T>::Cache stem;
    Feature<T> stem_out;
    std::vector<StageCache> stages;
    typename nn::Conv2d<T>::Cache fuse, refine, cls, aux;
    Feature<T> fused, refined;
    typename guide::GuidanceHead<T>::Cache guidance;
    Mat<T> context;
    bool guided = false;
    int height = 0, width = 0;
  };

  // `bank` (N x D) is the frozen concept bank; it is used by the guidance
  // head and, for the self-attention control, to size the matched layers.
  // Streams derived from `seed` are split so that the backbone weights do not
  // depend on the guidance configuration.
  SegNet(const NetworkConfig& config, const Mat<T>& bank, std::uint64_t seed);
  SegNet(const SegNet&) = delete;
  SegNet& operator=(const SegNet&) = delete;

  const NetworkConfig& config() const { return config_; }
  void check_input_size(int height, int width) const;

  // `g` may be null; injection layers are then skipped (pure baseline path).
  // The self-attention control ignores `g`.
  Logits<T> forward(const Feature<T>& image, const guide::GuidanceInput<T>* g,
                    Cache* cache) const;
  // Accumulates parameter gradients from upsampled-logit gradients.
  void backward(const Feature<T>& grad_main_up, const Feature<T>& grad_aux_up, const Cache& cache);

  ParamList<T> params();
  long long param_count() const;
  // Trainable scalars in the injection layers plus the guidance head.
  long long injection_param_count() const;

  bool has_guidance() const { return guidance_.has_value(); }
  guide::GuidanceHead<T>* guidance() { return guidance_ ? &*guidance_ : nullptr; }
  const guide::GuidanceHead<T>* guidance() const { return guidance_ ? &*guidance_ : nullptr; }
  std::vector<std::optional<nn::Attention<T>>>& injections() { return inject_; }
  int control_head_dim() const { return control_head_dim_; }

  nn::Conv2d<T> stem;
  std::vector<nn::Conv2d<T>> conv_a, conv_b;
  nn::Conv2d<T> fuse, refine, cls, aux;

 private:
  NetworkConfig config_;
  std::vector<std::optional<nn::Attention<T>>> inject_;
  std::optional<guide::GuidanceHead<T>> guidance_;
  int control_head_dim_ = 0;
};

// Head width for a self-attention control whose total size matches the
// blended guided model built from the same config and a bank of N x D.
int matched_control_head_dim(const NetworkConfig& config, int concepts, int embed_dim);

}  // namespace weatherseg::seg
