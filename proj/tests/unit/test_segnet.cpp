#include <gtest/gtest.h>

#include "weatherseg/error.hpp"
#include "weatherseg/rng.hpp"
#include "weatherseg/segnet.hpp"
#include "weatherseg/trainer.hpp"

namespace ws = weatherseg;
using namespace weatherseg::seg;
using ws::guide::GuidanceInput;
using ws::guide::Mode;

namespace {

template <class T>
Mat<T> random_mat(ws::Rng& rng, int r, int c, double s = 1.0) {
  Mat<T> m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<T>(rng.normal() * s);
  return m;
}

ws::Image random_image(ws::Rng& rng, int h, int w) {
  ws::Image im(h, w);
  for (double& v : im.data()) v = rng.uniform();
  return im;
}

NetworkConfig small_config(Mode mode = Mode::kNone) {
  NetworkConfig c;
  c.channels = {8, 12, 16};
  c.inject_after = {1, 2};
  c.heads = 2;
  c.head_dim = 4;
  c.decoder_channels = 8;
  c.classes = 5;
  c.aux_stage = 2;
  c.guidance = mode;
  return c;
}

}  // namespace

TEST(SegNet, BaselineShapes) {
  ws::Rng rng(1);
  NetworkConfig c;  // default widths
  SegNet<float> net(c, random_mat<float>(rng, 20, 64), 3);
  const auto out = net.forward(image_to_feature<float>(random_image(rng, 64, 64)), nullptr, nullptr);
  EXPECT_EQ(out.main.channels, 6);
  EXPECT_EQ(out.main.height, 16);
  EXPECT_EQ(out.main.width, 16);
  EXPECT_EQ(out.main_up.channels, 6);
  EXPECT_EQ(out.main_up.height, 64);
  EXPECT_EQ(out.main_up.width, 64);
  EXPECT_EQ(out.aux_up.height, 64);
}

TEST(SegNet, IndivisibleSizeRejected) {
  ws::Rng rng(2);
  SegNet<float> net(small_config(), random_mat<float>(rng, 4, 8), 3);
  try {
    net.forward(image_to_feature<float>(random_image(rng, 40, 36)), nullptr, nullptr);
    FAIL() << "expected InvalidInput";
  } catch (const ws::InvalidInput& e) {
    EXPECT_NE(std::string(e.what()).find("multiples of 16"), std::string::npos) << e.what();
  }
}

TEST(SegNet, GuidedEqualsBaselineAtInit) {
  ws::Rng rng(3);
  const Mat<float> bank = random_mat<float>(rng, 6, 8);
  SegNet<float> base(small_config(), bank, 11), guided(small_config(Mode::kBlended), bank, 11);
  for (int i = 0; i < 3; ++i) {
    const auto x = image_to_feature<float>(random_image(rng, 32, 32));
    const GuidanceInput<float> g{random_mat<float>(rng, 1, 8), Mat<float>()};
    EXPECT_EQ(guided.forward(x, &g, nullptr).main_up.data, base.forward(x, nullptr, nullptr).main_up.data);
  }
}

TEST(SegNet, InjectionIsIdentityAtInit) {
  ws::Rng rng(4);
  ws::nn::Attention<double> attn("a", "inject", 6, 10, 2, 3, false);
  attn.init(rng);
  ws::nn::Feature<double> x(6, 3, 5);
  x.data = random_mat<double>(rng, 6, 15);
  const Mat<double> ctx = random_mat<double>(rng, 2, 10);
  EXPECT_EQ(attn.forward(x, &ctx, nullptr).data, x.data);
  ws::nn::Attention<double> self("s", "inject", 6, 0, 2, 3, true);
  self.init(rng);
  const auto y = self.forward(x, nullptr, nullptr);
  EXPECT_EQ(y.data, x.data);
  EXPECT_EQ(y.height, 3);
  EXPECT_EQ(y.width, 5);
}

TEST(SegNet, InjectionGradientMatchesFiniteDifferences) {
  ws::Rng rng(5);
  ws::nn::Attention<double> attn("a", "inject", 4, 6, 2, 3, false);
  attn.init(rng);
  attn.wo.weight.value = random_mat<double>(rng, 6, 4, 0.3);
  ws::nn::Feature<double> x(4, 2, 3);
  x.data = random_mat<double>(rng, 4, 6);
  const Mat<double> ctx = random_mat<double>(rng, 3, 6), w = random_mat<double>(rng, 4, 6);
  ws::nn::ParamList<double> p;
  attn.collect(p);
  const auto r = ws::train::grad_check(
      [&] { return (attn.forward(x, &ctx, nullptr).data.array() * w.array()).sum(); },
      [&] {
        ws::nn::zero_grads(p);
        ws::nn::Attention<double>::Cache c;
        attn.forward(x, &ctx, &c);
        ws::nn::Feature<double> g(4, 2, 3);
        g.data = w;
        Mat<double> dctx;
        attn.backward(g, c, &dctx);
      },
      p, 1e-5, 1e-6, 1000);
  // The key bias gradient is exactly zero (softmax is shift invariant), so its
  // finite difference is pure roundoff; the 1e-6 floor absorbs that.
  EXPECT_LT(r.max_rel_error, 1e-4);
}

TEST(SegNet, ClassPermutationPermutesLogits) {
  ws::Rng rng(6);
  SegNet<double> net(small_config(), random_mat<double>(rng, 4, 8), 7);
  const auto x = image_to_feature<double>(random_image(rng, 32, 32));
  const auto before = net.forward(x, nullptr, nullptr);
  const std::vector<int> perm{3, 0, 4, 1, 2};
  const auto w = net.cls.weight.value;
  const auto b = net.cls.bias.value;
  for (int k = 0; k < 5; ++k) {
    net.cls.weight.value.row(k) = w.row(perm[k]);
    net.cls.bias.value.row(k) = b.row(perm[k]);
  }
  const auto after = net.forward(x, nullptr, nullptr);
  for (int k = 0; k < 5; ++k) EXPECT_EQ(after.main_up.data.row(k), before.main_up.data.row(perm[k]));
}

TEST(ParamCount, SingleConv) {
  ws::nn::Conv2d<float> conv("c", "g", 7, 5, 3, 1, 1);
  ws::nn::ParamList<float> p;
  conv.collect(p);
  long long n = 0;
  for (auto* q : p) n += q->size();
  EXPECT_EQ(n, 3 * 3 * 7 * 5 + 5);
}

TEST(ParamCount, GuidedAddsExactlyInjection) {
  ws::Rng rng(7);
  const Mat<float> bank = random_mat<float>(rng, 6, 8);
  SegNet<float> base(small_config(), bank, 1), guided(small_config(Mode::kBlended), bank, 1);
  EXPECT_EQ(base.injection_param_count(), 0);
  const auto c = small_config();
  long long expected = 0;
  for (int s : c.inject_after)
    expected += ws::nn::Attention<double>::param_count(c.channels[s - 1], 16, c.heads, c.head_dim, false);
  expected += guided.guidance()->param_count();
  EXPECT_EQ(guided.injection_param_count(), expected);
  EXPECT_EQ(guided.param_count() - base.param_count(), expected);
  long long counted = 0;
  for (auto* p : guided.params()) counted += p->size();
  EXPECT_EQ(counted, guided.param_count());
}

TEST(ParamCount, DefaultGuidedRegression) {
  ws::Rng rng(8);
  NetworkConfig c;
  c.guidance = Mode::kBlended;
  SegNet<float> net(c, random_mat<float>(rng, 20, 512), 1);
  EXPECT_EQ(net.param_count(), 3084192LL);
}

TEST(ParamCount, ControlMatchesGuided) {
  ws::Rng rng(9);
  for (int d : {64, 512}) {
    const Mat<float> bank = random_mat<float>(rng, 20, d);
    NetworkConfig g;
    g.guidance = Mode::kBlended;
    NetworkConfig s;
    s.self_attention_control = true;
    SegNet<float> guided(g, bank, 1), control(s, bank, 1);
    const double ratio = static_cast<double>(control.param_count()) / static_cast<double>(guided.param_count());
    EXPECT_GE(ratio, 0.95) << "D=" << d;
    EXPECT_LE(ratio, 1.05) << "D=" << d;
    EXPECT_FALSE(control.has_guidance());
  }
}

TEST(SegNet, ControlIsIdentityAtInit) {
  ws::Rng rng(10);
  const Mat<float> bank = random_mat<float>(rng, 6, 8);
  auto sc = small_config();
  sc.self_attention_control = true;
  SegNet<float> base(small_config(), bank, 2), control(sc, bank, 2);
  const auto x = image_to_feature<float>(random_image(rng, 32, 32));
  EXPECT_EQ(control.forward(x, nullptr, nullptr).main_up.data, base.forward(x, nullptr, nullptr).main_up.data);
}

TEST(SegNet, GuidanceIsConsumedOnceTrained) {
  ws::Rng rng(11);
  SegNet<double> net(small_config(Mode::kBlended), random_mat<double>(rng, 6, 8), 3);
  for (auto& a : net.injections())
    if (a) a->wo.weight.value = random_mat<double>(rng, a->wo.weight.value.rows(), a->wo.weight.value.cols(), 0.2);
  const auto x = image_to_feature<double>(random_image(rng, 32, 32));
  const GuidanceInput<double> g1{random_mat<double>(rng, 1, 8), Mat<double>()};
  const GuidanceInput<double> g2{random_mat<double>(rng, 1, 8), Mat<double>()};
  const auto a = net.forward(x, &g1, nullptr), b = net.forward(x, &g2, nullptr);
  EXPECT_GT((a.main_up.data - b.main_up.data).cwiseAbs().mean(), 0.0);
}

TEST(SegNet, DeterministicForward) {
  ws::Rng rng(12);
  SegNet<float> net(small_config(), random_mat<float>(rng, 4, 8), 9);
  const auto x = image_to_feature<float>(random_image(rng, 16, 16));
  EXPECT_EQ(net.forward(x, nullptr, nullptr).main_up.data, net.forward(x, nullptr, nullptr).main_up.data);
}

TEST(Config, ValidationNamesKey) {
  NetworkConfig c = small_config();
  c.aux_stage = 7;
  try {
    c.validate();
    FAIL();
  } catch (const ws::ConfigError& e) {
    EXPECT_EQ(e.key(), "network.aux_stage");
  }
}
