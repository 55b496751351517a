#include "weatherseg/guidance.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>

#include "weatherseg/error.hpp"

namespace weatherseg::guide {

std::string_view to_string(Mode m) {
  switch (m) {
    case Mode::kNone: return "none";
    case Mode::kBlended: return "blended";
    case Mode::kMultiClip: return "multiclip";
    case Mode::kAttributes: return "attributes";
  }
  return "?";
}

Mode mode_from_string(std::string_view s) {
  if (s == "none") return Mode::kNone;
  if (s == "blended") return Mode::kBlended;
  if (s == "multiclip") return Mode::kMultiClip;
  if (s == "attributes") return Mode::kAttributes;
  throw InvalidInput("unknown guidance mode '" + std::string(s) +
                     "' (expected none, blended, multiclip or attributes)");
}

std::string_view to_string(Normalization n) {
  return n == Normalization::kSoftmax ? "softmax" : "sigmoid";
}

Normalization normalization_from_string(std::string_view s) {
  if (s == "softmax") return Normalization::kSoftmax;
  if (s == "sigmoid") return Normalization::kSigmoid;
  throw InvalidInput("unknown normalization '" + std::string(s) + "' (expected softmax or sigmoid)");
}

namespace {

template <class T>
void require_row(const Mat<T>& m, Eigen::Index cols, const char* what) {
  if (m.rows() != 1 || (cols >= 0 && m.cols() != cols))
    throw InvalidInput(std::string(what) + ": expected 1 x " + std::to_string(cols) + ", got " +
                       std::to_string(m.rows()) + " x " + std::to_string(m.cols()));
}

}  // namespace

template <class T>
Mat<T> blend_concepts(const Mat<T>& bank, const Mat<T>& v) {
  require_row(v, bank.rows(), "blend_concepts weights");
  return v * bank;
}

template <class T>
Mat<T> build_guidance(const Mat<T>& blended, const Mat<T>& image_embedding) {
  require_row(blended, -1, "build_guidance blended embedding");
  require_row(image_embedding, blended.cols(), "build_guidance image embedding");
  Mat<T> out(1, 2 * blended.cols());
  out << blended, image_embedding;
  return out;
}

template <class T>
Mat<T> build_guidance_multiclip(const Mat<T>& bank, const Mat<T>& image_embedding) {
  require_row(image_embedding, bank.cols(), "build_guidance_multiclip image embedding");
  if (bank.rows() < 1) throw InvalidInput("build_guidance_multiclip: empty concept bank");
  Mat<T> out(bank.rows(), 2 * bank.cols());
  out.leftCols(bank.cols()) = bank;
  out.rightCols(bank.cols()) = image_embedding.replicate(bank.rows(), 1);
  return out;
}

template <class T>
Mat<T> build_guidance_attributes(const Mat<T>& attributes, const Linear<T>& projection) {
  require_row(attributes, kAttributeFeatures, "build_guidance_attributes input");
  return projection.forward(attributes);
}

template <class T>
GuidanceHead<T>::GuidanceHead(Mode mode, Mat<T> bank, Normalization norm)
    : mode_(mode), norm_(norm), bank_(std::move(bank)) {
  if (mode_ == Mode::kNone) throw InvalidInput("GuidanceHead: mode none has no head");
  if (mode_ != Mode::kAttributes) {
    if (bank_.rows() < 2 || bank_.cols() < 2)
      throw InvalidInput("GuidanceHead: concept bank must be at least 2 x 2");
    embed_dim_ = static_cast<int>(bank_.cols());
  }
  if (mode_ == Mode::kBlended) {
    const int hidden = std::max(1, embed_dim_ / 2);
    fc1 = Linear<T>("guidance.fc1", "guidance", embed_dim_, hidden);
    fc2 = Linear<T>("guidance.fc2", "guidance", hidden, static_cast<int>(bank_.rows()));
  } else if (mode_ == Mode::kAttributes) {
    attr = Linear<T>("guidance.attr", "guidance", kAttributeFeatures, kAttributeWidth);
  }
}

template <class T>
void GuidanceHead<T>::init(Rng& rng) {
  if (mode_ == Mode::kBlended) {
    fc1.init_xavier(rng);
    fc2.init_xavier(rng);
  } else if (mode_ == Mode::kAttributes) {
    attr.init_xavier(rng);
  }
}

template <class T>
int GuidanceHead<T>::context_dim() const {
  return mode_ == Mode::kAttributes ? kAttributeWidth : 2 * embed_dim_;
}

template <class T>
int GuidanceHead<T>::tokens() const {
  return mode_ == Mode::kMultiClip ? concepts() : 1;
}

template <class T>
Mat<T> GuidanceHead<T>::weights(const Mat<T>& image_embedding, Cache* cache) const {
  if (mode_ != Mode::kBlended) throw InvalidInput("GuidanceHead: weights need blended mode");
  require_row(image_embedding, embed_dim_, "estimate_weights image embedding");
  Mat<T> hidden = fc1.forward(image_embedding).array().tanh().matrix();
  Mat<T> z = fc2.forward(hidden);
  Mat<T> v(1, z.cols());
  if (norm_ == Normalization::kSoftmax) {
    const T m = z.maxCoeff();
    v = (z.array() - m).exp().matrix();
    v /= v.sum();
    assert(std::abs(static_cast<double>(v.sum()) - 1.0) < 1e-4);
  } else {
    v = (T(1) / (T(1) + (-z.array()).exp())).matrix();
  }
  if (cache) {
    cache->input = image_embedding;
    cache->hidden = std::move(hidden);
    cache->v = v;
  }
  return v;
}

template <class T>
Mat<T> GuidanceHead<T>::forward(const GuidanceInput<T>& in, Cache* cache) const {
  switch (mode_) {
    case Mode::kBlended: {
      Cache local;
      Cache& c = cache ? *cache : local;
      Mat<T> v = weights(in.image_embedding, &c);
      c.blended = blend_concepts(bank_, v);
      return build_guidance(c.blended, in.image_embedding);
    }
    case Mode::kMultiClip:
      return build_guidance_multiclip(bank_, in.image_embedding);
    case Mode::kAttributes:
      if (cache) cache->input = in.attributes;
      return build_guidance_attributes(in.attributes, attr);
    case Mode::kNone: break;
  }
  throw InvalidInput("GuidanceHead: no guidance in mode none");
}

template <class T>
void GuidanceHead<T>::backward_weights(const Mat<T>& grad_v, const Cache& c) {
  Mat<T> dz;
  if (norm_ == Normalization::kSoftmax) {
    const T dot = (grad_v.array() * c.v.array()).sum();
    dz = (c.v.array() * (grad_v.array() - dot)).matrix();
  } else {
    dz = (grad_v.array() * c.v.array() * (T(1) - c.v.array())).matrix();
  }
  Mat<T> dh = fc2.backward(dz, c.hidden);
  dh = (dh.array() * (T(1) - c.hidden.array().square())).matrix();
  fc1.backward(dh, c.input, false);
}

template <class T>
void GuidanceHead<T>::backward(const Mat<T>& grad_context, const Cache& c) {
  if (mode_ == Mode::kBlended) {
    // Only the blended half depends on parameters; C_I is frozen.
    const Mat<T> dblend = grad_context.leftCols(embed_dim_);
    backward_weights(dblend * bank_.transpose(), c);
  } else if (mode_ == Mode::kAttributes) {
    attr.backward(grad_context, c.input, false);
  }
}

template <class T>
void GuidanceHead<T>::collect(ParamList<T>& out) {
  if (mode_ == Mode::kBlended) {
    fc1.collect(out);
    fc2.collect(out);
  } else if (mode_ == Mode::kAttributes) {
    attr.collect(out);
  }
}

template <class T>
long long GuidanceHead<T>::param_count() const {
  auto linear = [](const Linear<T>& l) {
    return static_cast<long long>(l.weight.size() + l.bias.size());
  };
  if (mode_ == Mode::kBlended) return linear(fc1) + linear(fc2);
  if (mode_ == Mode::kAttributes) return linear(attr);
  return 0;
}

#define WS_INSTANTIATE(T)                                                             \
  template Mat<T> blend_concepts<T>(const Mat<T>&, const Mat<T>&);                    \
  template Mat<T> build_guidance<T>(const Mat<T>&, const Mat<T>&);                    \
  template Mat<T> build_guidance_multiclip<T>(const Mat<T>&, const Mat<T>&);          \
  template Mat<T> build_guidance_attributes<T>(const Mat<T>&, const Linear<T>&);      \
  template class GuidanceHead<T>;

WS_INSTANTIATE(float)
WS_INSTANTIATE(double)
#undef WS_INSTANTIATE

}  // namespace weatherseg::guide
