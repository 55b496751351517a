#pragma once

#include <string>
#include <string_view>

#include "weatherseg/layers.hpp"

// Weather guidance: a composition vector over a frozen concept bank, the
// blended concept embedding, and the token matrix fed to the injection layers.
namespace weatherseg::guide {

using nn::Linear;
using nn::Mat;
using nn::ParamList;

enum class Mode { kNone, kBlended, kMultiClip, kAttributes };
std::string_view to_string(Mode m);
Mode mode_from_string(std::string_view s);

enum class Normalization { kSoftmax, kSigmoid };
std::string_view to_string(Normalization n);
Normalization normalization_from_string(std::string_view s);

inline constexpr int kAttributeFeatures = 40;
inline constexpr int kAttributeWidth = 256;

// Row-vector primitives. Shapes are checked; mismatches throw InvalidInput.

// C = v C_T for v (1 x N) and C_T (N x D).
template <class T>
Mat<T> blend_concepts(const Mat<T>& bank, const Mat<T>& v);
// [C ; C_I] as a single 1 x 2D token.
template <class T>
Mat<T> build_guidance(const Mat<T>& blended, const Mat<T>& image_embedding);
// Row n = [row n of C_T ; C_I], N x 2D.
template <class T>
Mat<T> build_guidance_multiclip(const Mat<T>& bank, const Mat<T>& image_embedding);
// 1 x 40 attributes through a 40 -> 256 projection.
template <class T>
Mat<T> build_guidance_attributes(const Mat<T>& attributes, const Linear<T>& projection);

template <class T>
struct GuidanceInput {
  Mat<T> image_embedding;  // 1 x D
  Mat<T> attributes;       // 1 x 40 (attributes mode only)
};

template <class T>
class GuidanceHead {
 public:
  struct Cache {
    Mat<T> input;
    Mat<T> hidden;  // after tanh
    Mat<T> v;
    Mat<T> blended;
  };

  GuidanceHead() = default;
  // `bank` is N x D (unused in attributes mode); it is copied and never
  // modified.
  GuidanceHead(Mode mode, Mat<T> bank, Normalization norm = Normalization::kSoftmax);

  void init(Rng& rng);
  Mode mode() const { return mode_; }
  Normalization normalization() const { return norm_; }
  int concepts() const { return static_cast<int>(bank_.rows()); }
  int embed_dim() const { return embed_dim_; }
  // Width and count of the key/value tokens produced by `forward`.
  int context_dim() const;
  int tokens() const;
  const Mat<T>& bank() const { return bank_; }

  // v = normalize(f(C_I)), 1 x N. Blended mode only.
  Mat<T> weights(const Mat<T>& image_embedding, Cache* cache) const;
  Mat<T> forward(const GuidanceInput<T>& in, Cache* cache) const;

  // Backpropagates dL/dv through the normalization and the MLP.
  void backward_weights(const Mat<T>& grad_v, const Cache& cache);
  void backward(const Mat<T>& grad_context, const Cache& cache);
  void collect(ParamList<T>& out);
  long long param_count() const;

  Linear<T> fc1, fc2;  // D -> D/2 -> N
  Linear<T> attr;      // 40 -> 256

 private:
  Mode mode_ = Mode::kNone;
  Normalization norm_ = Normalization::kSoftmax;
  Mat<T> bank_;
  int embed_dim_ = 0;
};

}  // namespace weatherseg::guide
