#include <gtest/gtest.h>

#include <numeric>

#include "weatherseg/error.hpp"
#include "weatherseg/guidance.hpp"
#include "weatherseg/rng.hpp"
#include "weatherseg/trainer.hpp"

namespace ws = weatherseg;
using namespace weatherseg::guide;
using M = ws::nn::Mat<double>;

namespace {

M random_mat(ws::Rng& rng, int r, int c, double s = 1.0) {
  M m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal() * s;
  return m;
}

GuidanceHead<double> make_head(ws::Rng& rng, int n, int d, Mode mode = Mode::kBlended,
                               Normalization norm = Normalization::kSoftmax) {
  GuidanceHead<double> h(mode, random_mat(rng, n, d), norm);
  h.init(rng);
  return h;
}

}  // namespace

TEST(Weights, EqualLogitsGiveUniform) {
  ws::Rng rng(1);
  auto h = make_head(rng, 5, 8);
  h.fc2.weight.value.setZero();
  h.fc2.bias.value.setConstant(0.3);
  const M v = h.weights(random_mat(rng, 1, 8), nullptr);
  for (int n = 0; n < 5; ++n) EXPECT_NEAR(v(0, n), 0.2, 1e-15);
}

TEST(Weights, OnSimplex) {
  ws::Rng rng(2);
  for (int t = 0; t < 50; ++t) {
    auto h = make_head(rng, 20, 16);
    h.fc2.weight.value = random_mat(rng, 8, 20, 5.0);
    const M v = h.weights(random_mat(rng, 1, 16), nullptr);
    EXPECT_NEAR(v.sum(), 1.0, 1e-6);
    EXPECT_GE(v.minCoeff(), 0.0);
  }
}

TEST(Weights, SigmoidInUnitInterval) {
  ws::Rng rng(3);
  auto h = make_head(rng, 6, 8, Mode::kBlended, Normalization::kSigmoid);
  const M v = h.weights(random_mat(rng, 1, 8), nullptr);
  EXPECT_GE(v.minCoeff(), 0.0);
  EXPECT_LE(v.maxCoeff(), 1.0);
}

TEST(Weights, GradientMatchesFiniteDifferences) {
  ws::Rng rng(4);
  auto h = make_head(rng, 5, 8);
  const M emb = random_mat(rng, 1, 8), w = random_mat(rng, 1, 5);
  ws::nn::ParamList<double> p;
  h.collect(p);
  const auto r = ws::train::grad_check(
      [&] { return (h.weights(emb, nullptr).array() * w.array()).sum(); },
      [&] {
        ws::nn::zero_grads(p);
        GuidanceHead<double>::Cache c;
        h.weights(emb, &c);
        h.backward_weights(w, c);
      },
      p, 1e-5, 1e-7, 1000);
  EXPECT_LT(r.max_rel_error, 1e-4);
}

TEST(Weights, PermutationEquivariant) {
  // The head sees the bank only through blending, so permuting bank rows and
  // the output layer columns together leaves the blended token unchanged.
  ws::Rng rng(5);
  const M emb = random_mat(rng, 1, 6);
  const std::vector<int> perm{2, 0, 3, 1};
  M bank(4, 6);
  const M orig_bank = random_mat(rng, 4, 6);
  GuidanceHead<double> a(Mode::kBlended, orig_bank);
  a.init(rng);
  for (int i = 0; i < 4; ++i) bank.row(i) = orig_bank.row(perm[i]);
  GuidanceHead<double> b(Mode::kBlended, bank);
  b.fc1 = a.fc1;
  b.fc2 = a.fc2;
  for (int i = 0; i < 4; ++i) {
    b.fc2.weight.value.col(i) = a.fc2.weight.value.col(perm[i]);
    b.fc2.bias.value(0, i) = a.fc2.bias.value(0, perm[i]);
  }
  const M va = a.weights(emb, nullptr), vb = b.weights(emb, nullptr);
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(vb(0, i), va(0, perm[i]), 1e-15);
  const GuidanceInput<double> in{emb, M()};
  EXPECT_LT((a.forward(in, nullptr) - b.forward(in, nullptr)).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(Blend, OneHotSelectsRow) {
  ws::Rng rng(6);
  const M bank = random_mat(rng, 5, 7);
  M v = M::Zero(1, 5);
  v(0, 3) = 1.0;
  EXPECT_EQ(blend_concepts(bank, v), M(bank.row(3)));
}

TEST(Blend, HandExample) {
  M bank(2, 2);
  bank << 1, 0, 0, 1;
  M v(1, 2);
  v << 0.5, 0.5;
  const M c = blend_concepts(bank, v);
  EXPECT_DOUBLE_EQ(c(0, 0), 0.5);
  EXPECT_DOUBLE_EQ(c(0, 1), 0.5);
}

TEST(Blend, Linear) {
  ws::Rng rng(7);
  const M bank = random_mat(rng, 6, 5), v1 = random_mat(rng, 1, 6), v2 = random_mat(rng, 1, 6);
  const double a = 0.3;
  const M lhs = blend_concepts<double>(bank, a * v1 + (1 - a) * v2);
  const M rhs = a * blend_concepts(bank, v1) + (1 - a) * blend_concepts(bank, v2);
  EXPECT_LT((lhs - rhs).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(Blend, ShapeMismatchRejected) {
  EXPECT_THROW(blend_concepts<double>(M::Zero(3, 4), M::Zero(1, 2)), ws::InvalidInput);
}

TEST(Concat, HandExample) {
  M c(1, 2), ci(1, 2);
  c << 1, 2;
  ci << 3, 4;
  M expect(1, 4);
  expect << 1, 2, 3, 4;
  EXPECT_EQ(build_guidance(c, ci), expect);
  EXPECT_THROW(build_guidance<double>(c, M::Zero(1, 3)), ws::InvalidInput);
}

TEST(Concat, WidthIsTwiceEmbedding) {
  for (int d : {64, 512}) EXPECT_EQ(build_guidance<double>(M::Zero(1, d), M::Zero(1, d)).cols(), 2 * d);
}

TEST(Concat, BothHalvesCarryGradient) {
  // Downstream scalar = <w, token>; the concept half reaches the MLP, the
  // image half is frozen and has no parameters behind it.
  ws::Rng rng(8);
  auto h = make_head(rng, 5, 6);
  const GuidanceInput<double> in{random_mat(rng, 1, 6), M()};
  const M w = random_mat(rng, 1, 12);
  ws::nn::ParamList<double> p;
  h.collect(p);
  const auto r = ws::train::grad_check(
      [&] { return (h.forward(in, nullptr).array() * w.array()).sum(); },
      [&] {
        ws::nn::zero_grads(p);
        GuidanceHead<double>::Cache c;
        h.forward(in, &c);
        h.backward(w, c);
      },
      p, 1e-5, 1e-7, 1000);
  EXPECT_LT(r.max_rel_error, 1e-4);
  double total = 0;
  for (auto* q : p) total += q->grad.cwiseAbs().sum();
  EXPECT_GT(total, 0.0);
  // The image half passes through unchanged.
  EXPECT_EQ(M(h.forward(in, nullptr).rightCols(6)), in.image_embedding);
}

TEST(MultiClip, Construction) {
  ws::Rng rng(9);
  const M bank = random_mat(rng, 20, 512), ci = random_mat(rng, 1, 512);
  const M g = build_guidance_multiclip(bank, ci);
  ASSERT_EQ(g.rows(), 20);
  ASSERT_EQ(g.cols(), 1024);
  EXPECT_EQ(M(g.leftCols(512)), bank);
  for (int n = 0; n < 20; ++n) EXPECT_EQ(M(g.row(n).rightCols(512)), ci);
  EXPECT_THROW(build_guidance_multiclip<double>(bank, M::Zero(1, 3)), ws::InvalidInput);
}

TEST(Attributes, ZeroInZeroOut) {
  ws::nn::Linear<double> proj("attr", "guidance", kAttributeFeatures, kAttributeWidth);
  ws::Rng rng(10);
  proj.init_xavier(rng);
  proj.bias.value.setZero();
  const M out = build_guidance_attributes<double>(M::Zero(1, 40), proj);
  EXPECT_EQ(out.cols(), 256);
  EXPECT_EQ(out.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Attributes, IdentityProjectionCopies) {
  ws::nn::Linear<double> proj("attr", "guidance", kAttributeFeatures, kAttributeWidth);
  proj.weight.value.setZero();
  proj.bias.value.setZero();
  for (int i = 0; i < 40; ++i) proj.weight.value(i, i) = 1.0;
  ws::Rng rng(11);
  const M a = random_mat(rng, 1, 40);
  const M out = build_guidance_attributes(a, proj);
  EXPECT_EQ(M(out.leftCols(40)), a);
  EXPECT_EQ(out.rightCols(216).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_THROW(build_guidance_attributes<double>(M::Zero(1, 39), proj), ws::InvalidInput);
}

TEST(Attributes, GradientMatchesFiniteDifferences) {
  ws::Rng rng(12);
  GuidanceHead<double> h(Mode::kAttributes, random_mat(rng, 4, 8));
  h.init(rng);
  const GuidanceInput<double> in{random_mat(rng, 1, 8), random_mat(rng, 1, 40)};
  const M w = random_mat(rng, 1, 256);
  ws::nn::ParamList<double> p;
  h.collect(p);
  ASSERT_EQ(h.context_dim(), 256);
  const auto r = ws::train::grad_check(
      [&] { return (h.forward(in, nullptr).array() * w.array()).sum(); },
      [&] {
        ws::nn::zero_grads(p);
        GuidanceHead<double>::Cache c;
        h.forward(in, &c);
        h.backward(w, c);
      },
      p, 1e-5, 1e-7, 1000);
  EXPECT_LT(r.max_rel_error, 1e-4);
}

TEST(Head, TokenShapesPerMode) {
  ws::Rng rng(13);
  const M bank = random_mat(rng, 20, 16);
  EXPECT_EQ(GuidanceHead<double>(Mode::kBlended, bank).tokens(), 1);
  EXPECT_EQ(GuidanceHead<double>(Mode::kBlended, bank).context_dim(), 32);
  EXPECT_EQ(GuidanceHead<double>(Mode::kMultiClip, bank).tokens(), 20);
  EXPECT_EQ(GuidanceHead<double>(Mode::kMultiClip, bank).param_count(), 0);
  EXPECT_EQ(GuidanceHead<double>(Mode::kBlended, bank).param_count(), (16 * 8 + 8) + (8 * 20 + 20));
}

TEST(Head, BankIsNotMutated) {
  ws::Rng rng(14);
  const M bank = random_mat(rng, 5, 8);
  auto h = GuidanceHead<double>(Mode::kBlended, bank);
  h.init(rng);
  const GuidanceInput<double> in{random_mat(rng, 1, 8), M()};
  const M before = in.image_embedding;
  GuidanceHead<double>::Cache c;
  h.forward(in, &c);
  h.backward(M::Ones(1, 16), c);
  EXPECT_EQ(in.image_embedding, before);
  const M again = h.forward(in, nullptr);
  EXPECT_EQ(M(again.leftCols(8)), blend_concepts(bank, h.weights(in.image_embedding, nullptr)));
}
