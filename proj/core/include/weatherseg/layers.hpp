#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "weatherseg/rng.hpp"

// Minimal layers with explicit forward/backward passes. Forward functions are
// const and write what backward needs into a caller-owned cache, so one
// parameter snapshot can serve several concurrent forward passes. Backward
// functions accumulate into Param::grad.
namespace weatherseg::nn {

template <class T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;

template <class T>
struct Param {
  std::string name;
  std::string group;
  Mat<T> value;
  Mat<T> grad;

  Param() = default;
  Param(std::string n, std::string g, Eigen::Index rows, Eigen::Index cols)
      : name(std::move(n)), group(std::move(g)), value(Mat<T>::Zero(rows, cols)),
        grad(Mat<T>::Zero(rows, cols)) {}
  Eigen::Index size() const { return value.size(); }
  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

template <class T>
using ParamList = std::vector<Param<T>*>;

template <class T>
void zero_grads(const ParamList<T>& params) {
  for (auto* p : params) p->zero_grad();
}

// C x (H*W), row-major.
template <class T>
struct Feature {
  int channels = 0;
  int height = 0;
  int width = 0;
  Mat<T> data;

  Feature() = default;
  Feature(int c, int h, int w) : channels(c), height(h), width(w), data(Mat<T>::Zero(c, h * w)) {}
  int pixels() const { return height * width; }
};

template <class T>
void init_normal(Param<T>& p, Rng& rng, double stddev) {
  for (Eigen::Index i = 0; i < p.value.size(); ++i) p.value.data()[i] = static_cast<T>(rng.normal() * stddev);
}

template <class T>
class Conv2d {
 public:
  struct Cache {
    Mat<T> cols;  // (in*k*k) x (out_h*out_w)
    int in_h = 0;
    int in_w = 0;
  };

  Conv2d() = default;
  Conv2d(const std::string& name, const std::string& group, int in, int out, int kernel,
         int stride, int pad);

  void init(Rng& rng);
  int out_size(int in) const { return (in + 2 * pad_ - kernel_) / stride_ + 1; }
  Feature<T> forward(const Feature<T>& x, Cache* cache) const;
  // Returns the input gradient (empty when `want_input_grad` is false).
  Feature<T> backward(const Feature<T>& grad_out, const Cache& cache, bool want_input_grad = true);
  void collect(ParamList<T>& out) { out.push_back(&weight); out.push_back(&bias); }
  int in_channels() const { return in_; }
  int out_channels() const { return out_; }

  Param<T> weight;  // out x (in*k*k)
  Param<T> bias;    // out x 1

 private:
  int in_ = 0, out_ = 0, kernel_ = 1, stride_ = 1, pad_ = 0;
};

template <class T>
void relu_inplace(Feature<T>& x);
// grad *= (activation > 0)
template <class T>
void relu_backward(Feature<T>& grad, const Feature<T>& activation);

// Bilinear resize with half-pixel centers (align_corners = false).
template <class T>
class Resize {
 public:
  Resize() = default;
  Resize(int in_h, int in_w, int out_h, int out_w);
  Feature<T> forward(const Feature<T>& x) const;
  Feature<T> backward(const Feature<T>& grad_out) const;
  int out_h() const { return out_h_; }
  int out_w() const { return out_w_; }

 private:
  struct Tap {
    int i0, i1;
    T w0, w1;
  };
  static std::vector<Tap> taps(int in, int out);
  int in_h_ = 0, in_w_ = 0, out_h_ = 0, out_w_ = 0;
  std::vector<Tap> ty_, tx_;
};

// Y = X W + b on row tokens. W is in x out.
template <class T>
class Linear {
 public:
  Linear() = default;
  Linear(const std::string& name, const std::string& group, int in, int out);
  void init_xavier(Rng& rng);
  Mat<T> forward(const Mat<T>& x) const;
  // Accumulates parameter gradients given the forward input; returns dX.
  Mat<T> backward(const Mat<T>& grad_out, const Mat<T>& input, bool want_input_grad = true);
  void collect(ParamList<T>& out) { out.push_back(&weight); out.push_back(&bias); }
  int in_dim() const { return static_cast<int>(weight.value.rows()); }
  int out_dim() const { return static_cast<int>(weight.value.cols()); }

  Param<T> weight;  // in x out
  Param<T> bias;    // 1 x out
};

// Normalizes each row over its columns, then scales and shifts.
template <class T>
class LayerNorm {
 public:
  struct Cache {
    Mat<T> xhat;
    Vec<T> inv_std;
  };
  LayerNorm() = default;
  LayerNorm(const std::string& name, const std::string& group, int dim);
  Mat<T> forward(const Mat<T>& x, Cache* cache) const;
  Mat<T> backward(const Mat<T>& grad_out, const Cache& cache);
  void collect(ParamList<T>& out) { out.push_back(&gamma); out.push_back(&beta); }

  Param<T> gamma;  // 1 x dim
  Param<T> beta;   // 1 x dim
  static constexpr double kEps = 1e-5;
};

// Multi-head attention applied residually to a feature map. Queries come from
// the (layer-normalized) latent tokens; keys and values from a separate
// context (cross-attention) or from the latent itself (self-attention).
template <class T>
class Attention {
 public:
  struct Cache {
    Mat<T> tokens;  // T x C (input latent, transposed)
    typename LayerNorm<T>::Cache q_norm;
    typename LayerNorm<T>::Cache c_norm;
    Mat<T> xn;      // normalized latent tokens
    Mat<T> cn;      // normalized context tokens
    Mat<T> q, k, v; // projections
    std::vector<Mat<T>> attn;  // per head, T x M
    Mat<T> o;       // concatenated head outputs, T x I
  };

  Attention() = default;
  // context_dim is ignored for self-attention.
  Attention(const std::string& name, const std::string& group, int latent_dim, int context_dim,
            int heads, int head_dim, bool self_attention);

  // Projections Xavier-initialized; the output projection is zero so that a
  // fresh layer is an exact identity.
  void init(Rng& rng);
  Feature<T> forward(const Feature<T>& latent, const Mat<T>* context, Cache* cache) const;
  Feature<T> backward(const Feature<T>& grad_out, const Cache& cache, Mat<T>* context_grad);
  void collect(ParamList<T>& out);

  bool self_attention() const { return self_; }
  int context_dim() const { return context_dim_; }
  int inner_dim() const { return heads_ * head_dim_; }

  // Number of trainable scalars for a layer with these dimensions.
  static long long param_count(int latent_dim, int context_dim, int heads, int head_dim,
                               bool self_attention);

  LayerNorm<T> norm_q;
  LayerNorm<T> norm_c;  // unused for self-attention
  Linear<T> wq, wk, wv, wo;

 private:
  int latent_dim_ = 0, context_dim_ = 0, heads_ = 1, head_dim_ = 1;
  bool self_ = false;
};

}  // namespace weatherseg::nn
