#include "weatherseg/layers.hpp"

#include <algorithm>
#include <cmath>

#include "weatherseg/error.hpp"

namespace weatherseg::nn {

template <class T>
Conv2d<T>::Conv2d(const std::string& name, const std::string& group, int in, int out,
                  int kernel, int stride, int pad)
    : weight(name + ".weight", group, out, static_cast<Eigen::Index>(in) * kernel * kernel),
      bias(name + ".bias", group, out, 1),
      in_(in), out_(out), kernel_(kernel), stride_(stride), pad_(pad) {}

template <class T>
void Conv2d<T>::init(Rng& rng) {
  init_normal(weight, rng, std::sqrt(2.0 / (static_cast<double>(in_) * kernel_ * kernel_)));
  bias.value.setZero();
}

template <class T>
Feature<T> Conv2d<T>::forward(const Feature<T>& x, Cache* cache) const {
  if (x.channels != in_) throw InvalidInput("Conv2d: input channel mismatch at " + weight.name);
  const int oh = out_size(x.height);
  const int ow = out_size(x.width);
  if (oh <= 0 || ow <= 0) throw InvalidInput("Conv2d: input too small at " + weight.name);
  Mat<T> local;
  Mat<T>& cols = cache ? cache->cols : local;
  if (kernel_ == 1 && stride_ == 1 && pad_ == 0) {
    cols = x.data;
  } else {
    const int k = kernel_;
    cols.setZero(static_cast<Eigen::Index>(in_) * k * k, static_cast<Eigen::Index>(oh) * ow);
    for (int ci = 0; ci < in_; ++ci) {
      const T* src = x.data.row(ci).data();
      for (int ky = 0; ky < k; ++ky) {
        for (int kx = 0; kx < k; ++kx) {
          T* dst = cols.row((static_cast<Eigen::Index>(ci) * k + ky) * k + kx).data();
          for (int oy = 0; oy < oh; ++oy) {
            const int iy = oy * stride_ - pad_ + ky;
            if (iy < 0 || iy >= x.height) continue;
            for (int ox = 0; ox < ow; ++ox) {
              const int ix = ox * stride_ - pad_ + kx;
              if (ix < 0 || ix >= x.width) continue;
              dst[oy * ow + ox] = src[iy * x.width + ix];
            }
          }
        }
      }
    }
  }
  if (cache) {
    cache->in_h = x.height;
    cache->in_w = x.width;
  }
  Feature<T> y;
  y.channels = out_;
  y.height = oh;
  y.width = ow;
  y.data.noalias() = weight.value * cols;
  y.data.colwise() += bias.value.col(0);
  return y;
}

template <class T>
Feature<T> Conv2d<T>::backward(const Feature<T>& g, const Cache& cache, bool want_input_grad) {
  weight.grad.noalias() += g.data * cache.cols.transpose();
  bias.grad.col(0) += g.data.rowwise().sum().transpose();
  if (!want_input_grad) return {};
  Mat<T> dcols = weight.value.transpose() * g.data;
  Feature<T> dx(in_, cache.in_h, cache.in_w);
  if (kernel_ == 1 && stride_ == 1 && pad_ == 0) {
    dx.data = std::move(dcols);
    return dx;
  }
  const int k = kernel_;
  const int oh = g.height;
  const int ow = g.width;
  for (int ci = 0; ci < in_; ++ci) {
    T* dst = dx.data.row(ci).data();
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const T* src = dcols.row((static_cast<Eigen::Index>(ci) * k + ky) * k + kx).data();
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * stride_ - pad_ + ky;
          if (iy < 0 || iy >= cache.in_h) continue;
          for (int ox = 0; ox < ow; ++ox) {
            const int ix = ox * stride_ - pad_ + kx;
            if (ix < 0 || ix >= cache.in_w) continue;
            dst[iy * cache.in_w + ix] += src[oy * ow + ox];
          }
        }
      }
    }
  }
  return dx;
}

template <class T>
void relu_inplace(Feature<T>& x) {
  x.data = x.data.cwiseMax(T(0));
}

template <class T>
void relu_backward(Feature<T>& grad, const Feature<T>& activation) {
  grad.data = (activation.data.array() > T(0)).select(grad.data, T(0));
}

template <class T>
std::vector<typename Resize<T>::Tap> Resize<T>::taps(int in, int out) {
  std::vector<Tap> t(out);
  const double scale = static_cast<double>(in) / out;
  for (int o = 0; o < out; ++o) {
    double src = (o + 0.5) * scale - 0.5;
    if (src < 0) src = 0;
    int i0 = static_cast<int>(src);
    if (i0 > in - 1) i0 = in - 1;
    const int i1 = std::min(i0 + 1, in - 1);
    const double l = src - i0;
    t[o] = Tap{i0, i1, static_cast<T>(1.0 - l), static_cast<T>(l)};
  }
  return t;
}

template <class T>
Resize<T>::Resize(int in_h, int in_w, int out_h, int out_w)
    : in_h_(in_h), in_w_(in_w), out_h_(out_h), out_w_(out_w),
      ty_(taps(in_h, out_h)), tx_(taps(in_w, out_w)) {}

template <class T>
Feature<T> Resize<T>::forward(const Feature<T>& x) const {
  if (x.height != in_h_ || x.width != in_w_) throw InvalidInput("Resize: input size mismatch");
  Feature<T> y(x.channels, out_h_, out_w_);
  if (in_h_ == out_h_ && in_w_ == out_w_) {
    y.data = x.data;
    return y;
  }
  for (int c = 0; c < x.channels; ++c) {
    const T* src = x.data.row(c).data();
    T* dst = y.data.row(c).data();
    for (int oy = 0; oy < out_h_; ++oy) {
      const Tap& a = ty_[oy];
      const T* r0 = src + a.i0 * in_w_;
      const T* r1 = src + a.i1 * in_w_;
      for (int ox = 0; ox < out_w_; ++ox) {
        const Tap& b = tx_[ox];
        dst[oy * out_w_ + ox] = a.w0 * (b.w0 * r0[b.i0] + b.w1 * r0[b.i1]) +
                                a.w1 * (b.w0 * r1[b.i0] + b.w1 * r1[b.i1]);
      }
    }
  }
  return y;
}

template <class T>
Feature<T> Resize<T>::backward(const Feature<T>& g) const {
  Feature<T> dx(g.channels, in_h_, in_w_);
  if (in_h_ == out_h_ && in_w_ == out_w_) {
    dx.data = g.data;
    return dx;
  }
  for (int c = 0; c < g.channels; ++c) {
    const T* src = g.data.row(c).data();
    T* dst = dx.data.row(c).data();
    for (int oy = 0; oy < out_h_; ++oy) {
      const Tap& a = ty_[oy];
      T* r0 = dst + a.i0 * in_w_;
      T* r1 = dst + a.i1 * in_w_;
      for (int ox = 0; ox < out_w_; ++ox) {
        const Tap& b = tx_[ox];
        const T v = src[oy * out_w_ + ox];
        r0[b.i0] += a.w0 * b.w0 * v;
        r0[b.i1] += a.w0 * b.w1 * v;
        r1[b.i0] += a.w1 * b.w0 * v;
        r1[b.i1] += a.w1 * b.w1 * v;
      }
    }
  }
  return dx;
}

template <class T>
Linear<T>::Linear(const std::string& name, const std::string& group, int in, int out)
    : weight(name + ".weight", group, in, out), bias(name + ".bias", group, 1, out) {}

template <class T>
void Linear<T>::init_xavier(Rng& rng) {
  const double fan = static_cast<double>(weight.value.rows() + weight.value.cols());
  init_normal(weight, rng, std::sqrt(2.0 / fan));
  bias.value.setZero();
}

template <class T>
Mat<T> Linear<T>::forward(const Mat<T>& x) const {
  if (x.cols() != weight.value.rows()) throw InvalidInput("Linear: width mismatch at " + weight.name);
  Mat<T> y = x * weight.value;
  y.rowwise() += bias.value.row(0);
  return y;
}

template <class T>
Mat<T> Linear<T>::backward(const Mat<T>& g, const Mat<T>& input, bool want_input_grad) {
  weight.grad.noalias() += input.transpose() * g;
  bias.grad.row(0) += g.colwise().sum();
  if (!want_input_grad) return {};
  return g * weight.value.transpose();
}

template <class T>
LayerNorm<T>::LayerNorm(const std::string& name, const std::string& group, int dim)
    : gamma(name + ".gamma", group, 1, dim), beta(name + ".beta", group, 1, dim) {
  gamma.value.setOnes();
}

template <class T>
Mat<T> LayerNorm<T>::forward(const Mat<T>& x, Cache* cache) const {
  const Eigen::Index n = x.rows();
  const Eigen::Index d = x.cols();
  if (d != gamma.value.cols()) throw InvalidInput("LayerNorm: width mismatch at " + gamma.name);
  Mat<T> xhat(n, d);
  Vec<T> inv_std(n);
  for (Eigen::Index r = 0; r < n; ++r) {
    const T mean = x.row(r).mean();
    const T var = (x.row(r).array() - mean).square().mean();
    inv_std(r) = T(1) / std::sqrt(var + static_cast<T>(kEps));
    xhat.row(r) = (x.row(r).array() - mean) * inv_std(r);
  }
  Mat<T> y = (xhat.array().rowwise() * gamma.value.row(0).array()).matrix();
  y.rowwise() += beta.value.row(0);
  if (cache) {
    cache->xhat = std::move(xhat);
    cache->inv_std = std::move(inv_std);
  }
  return y;
}

template <class T>
Mat<T> LayerNorm<T>::backward(const Mat<T>& g, const Cache& cache) {
  const Eigen::Index n = g.rows();
  const T d = static_cast<T>(g.cols());
  gamma.grad.row(0) += (g.array() * cache.xhat.array()).matrix().colwise().sum();
  beta.grad.row(0) += g.colwise().sum();
  Mat<T> dxhat = (g.array().rowwise() * gamma.value.row(0).array()).matrix();
  Mat<T> dx(n, g.cols());
  for (Eigen::Index r = 0; r < n; ++r) {
    const T s1 = dxhat.row(r).sum();
    const T s2 = (dxhat.row(r).array() * cache.xhat.row(r).array()).sum();
    dx.row(r) = (cache.inv_std(r) / d) *
                (d * dxhat.row(r).array() - s1 - cache.xhat.row(r).array() * s2);
  }
  return dx;
}

template <class T>
Attention<T>::Attention(const std::string& name, const std::string& group, int latent_dim,
                        int context_dim, int heads, int head_dim, bool self_attention)
    : norm_q(name + ".norm_q", group, latent_dim),
      norm_c(name + ".norm_c", group, self_attention ? 0 : context_dim),
      wq(name + ".q", group, latent_dim, heads * head_dim),
      wk(name + ".k", group, self_attention ? latent_dim : context_dim, heads * head_dim),
      wv(name + ".v", group, self_attention ? latent_dim : context_dim, heads * head_dim),
      wo(name + ".out", group, heads * head_dim, latent_dim),
      latent_dim_(latent_dim), context_dim_(self_attention ? latent_dim : context_dim),
      heads_(heads), head_dim_(head_dim), self_(self_attention) {
  if (heads < 1 || head_dim < 1) throw InvalidInput("Attention: heads and head_dim must be >= 1");
}

template <class T>
void Attention<T>::init(Rng& rng) {
  wq.init_xavier(rng);
  wk.init_xavier(rng);
  wv.init_xavier(rng);
  wo.weight.value.setZero();
  wo.bias.value.setZero();
}

template <class T>
void Attention<T>::collect(ParamList<T>& out) {
  norm_q.collect(out);
  if (!self_) norm_c.collect(out);
  wq.collect(out);
  wk.collect(out);
  wv.collect(out);
  wo.collect(out);
}

template <class T>
long long Attention<T>::param_count(int latent_dim, int context_dim, int heads, int head_dim,
                                    bool self_attention) {
  const long long inner = static_cast<long long>(heads) * head_dim;
  const long long kv_in = self_attention ? latent_dim : context_dim;
  long long n = 2LL * latent_dim;                // norm_q
  if (!self_attention) n += 2LL * context_dim;   // norm_c
  n += latent_dim * inner + inner;               // q
  n += 2 * (kv_in * inner + inner);              // k, v
  n += inner * latent_dim + latent_dim;          // out
  return n;
}

template <class T>
Feature<T> Attention<T>::forward(const Feature<T>& latent, const Mat<T>* context,
                                 Cache* cache) const {
  if (latent.channels != latent_dim_)
    throw InvalidInput("Attention: latent width mismatch at " + wq.weight.name);
  if (!self_) {
    if (!context) throw InvalidInput("Attention: cross-attention needs a context");
    if (context->cols() != context_dim_)
      throw InvalidInput("Attention: guidance width " + std::to_string(context->cols()) +
                         " does not match configured width " + std::to_string(context_dim_));
  }
  Cache local;
  Cache& c = cache ? *cache : local;
  c.tokens = latent.data.transpose();
  c.xn = norm_q.forward(c.tokens, &c.q_norm);
  if (self_) {
    c.cn.resize(0, 0);
  } else {
    c.cn = norm_c.forward(*context, &c.c_norm);
  }
  const Mat<T>& kv_in = self_ ? c.xn : c.cn;
  c.q = wq.forward(c.xn);
  c.k = wk.forward(kv_in);
  c.v = wv.forward(kv_in);
  const Eigen::Index ntok = c.q.rows();
  const Eigen::Index nctx = c.k.rows();
  const T scale = T(1) / std::sqrt(static_cast<T>(head_dim_));
  c.attn.assign(heads_, Mat<T>());
  c.o.resize(ntok, inner_dim());
  for (int h = 0; h < heads_; ++h) {
    const Eigen::Index off = static_cast<Eigen::Index>(h) * head_dim_;
    Mat<T> s = (c.q.middleCols(off, head_dim_) * c.k.middleCols(off, head_dim_).transpose()) * scale;
    for (Eigen::Index r = 0; r < ntok; ++r) {
      const T m = s.row(r).maxCoeff();
      s.row(r) = (s.row(r).array() - m).exp();
      s.row(r) /= s.row(r).sum();
    }
    c.o.middleCols(off, head_dim_).noalias() = s * c.v.middleCols(off, head_dim_);
    c.attn[h] = std::move(s);
  }
  (void)nctx;
  Mat<T> y = wo.forward(c.o);
  Feature<T> out(latent.channels, latent.height, latent.width);
  out.data = latent.data + y.transpose();
  return out;
}

template <class T>
Feature<T> Attention<T>::backward(const Feature<T>& grad_out, const Cache& c,
                                  Mat<T>* context_grad) {
  const Mat<T> dy = grad_out.data.transpose();  // T x C
  const Mat<T> d_o = wo.backward(dy, c.o);
  const T scale = T(1) / std::sqrt(static_cast<T>(head_dim_));
  Mat<T> dq(c.q.rows(), c.q.cols());
  Mat<T> dk(c.k.rows(), c.k.cols());
  Mat<T> dv(c.v.rows(), c.v.cols());
  for (int h = 0; h < heads_; ++h) {
    const Eigen::Index off = static_cast<Eigen::Index>(h) * head_dim_;
    const Mat<T>& a = c.attn[h];
    const auto doh = d_o.middleCols(off, head_dim_);
    Mat<T> da = doh * c.v.middleCols(off, head_dim_).transpose();
    dv.middleCols(off, head_dim_).noalias() = a.transpose() * doh;
    const Vec<T> rowdot = (da.array() * a.array()).rowwise().sum();
    Mat<T> ds = (a.array() * (da.array().colwise() - rowdot.array())).matrix() * scale;
    dq.middleCols(off, head_dim_).noalias() = ds * c.k.middleCols(off, head_dim_);
    dk.middleCols(off, head_dim_).noalias() = ds.transpose() * c.q.middleCols(off, head_dim_);
  }
  Mat<T> dxn = wq.backward(dq, c.xn);
  const Mat<T>& kv_in = self_ ? c.xn : c.cn;
  Mat<T> dkv = wk.backward(dk, kv_in);
  dkv += wv.backward(dv, kv_in);
  if (self_) {
    dxn += dkv;
  } else {
    Mat<T> dctx = norm_c.backward(dkv, c.c_norm);
    if (context_grad) {
      if (context_grad->size() == 0) context_grad->setZero(dctx.rows(), dctx.cols());
      *context_grad += dctx;
    }
  }
  Mat<T> dx = dy + norm_q.backward(dxn, c.q_norm);
  Feature<T> out(grad_out.channels, grad_out.height, grad_out.width);
  out.data = dx.transpose();
  return out;
}

template class Conv2d<float>;
template class Conv2d<double>;
template void relu_inplace<float>(Feature<float>&);
template void relu_inplace<double>(Feature<double>&);
template void relu_backward<float>(Feature<float>&, const Feature<float>&);
template void relu_backward<double>(Feature<double>&, const Feature<double>&);
template class Resize<float>;
template class Resize<double>;
template class Linear<float>;
template class Linear<double>;
template class LayerNorm<float>;
template class LayerNorm<double>;
template class Attention<float>;
template class Attention<double>;

}  // namespace weatherseg::nn
