#include "oracles.hpp"

#include <stpd/autodiff.hpp>

#include <gtest/gtest.h>

using namespace stpd;
using namespace stpd::ad;

namespace {

double inner_product(TensorD const &a, TensorD const &b) { return oracle::dot(a.data(), b.data()); }

} // namespace

TEST(Conv3d, ForwardMatchesOracle)
{
  for (Shape ws : {Shape{2, 3, 3, 3, 3}, Shape{2, 3, 1, 3, 3}, Shape{4, 3, 3, 1, 5}}) {
    auto const x = oracle::random_tensor({2, 3, 4, 5, 6}, 1);
    auto const w = oracle::random_tensor(ws, 2);
    auto const b = oracle::random_tensor({ws[0]}, 3);
    Graph<double> g;
    auto const y = conv3d(g, g.constant(x), g.constant(w), g.constant(b));
    auto const ref = oracle::conv3d(x, w, b);
    ASSERT_EQ(g.value(y).shape(), ref.shape());
    for (std::size_t i = 0; i < ref.size(); ++i) { EXPECT_NEAR(g.value(y)[i], ref[i], 1e-12); }
    auto const lib_ref = conv3d_reference(x, w, b);
    for (std::size_t i = 0; i < ref.size(); ++i) { EXPECT_NEAR(lib_ref[i], ref[i], 1e-12); }
  }
}

TEST(Conv3d, GradientsAreTheAdjointMaps)
{
  // <conv(x, w, b), u> is linear in each argument separately, so the gradient
  // g_x satisfies <conv(dx, w, 0), u> = <dx, g_x>, and likewise for w; the
  // bias gradient is the per-channel sum of u.
  auto const x = oracle::random_tensor({2, 3, 4, 5, 6}, 4);
  auto const u = oracle::random_tensor({2, 2, 4, 5, 6}, 5);
  Parameter<double> px("x", x), pw("w", oracle::random_tensor({2, 3, 3, 3, 3}, 6)),
    pb("b", oracle::random_tensor({2}, 7));
  Graph<double> g;
  auto const out = conv3d(g, g.parameter(px), g.parameter(pw), g.parameter(pb));
  g.backward(inner(g, out, u));

  auto const zero_b = TensorD({2});
  auto const dx = oracle::random_tensor(x.shape(), 8);
  EXPECT_NEAR(inner_product(oracle::conv3d(dx, pw.value, zero_b), u), inner_product(dx, px.grad), 1e-10);
  auto const dw = oracle::random_tensor(pw.value.shape(), 9);
  EXPECT_NEAR(inner_product(oracle::conv3d(x, dw, zero_b), u), inner_product(dw, pw.grad), 1e-10);
  for (std::size_t o = 0; o < 2; ++o) {
    double s = 0;
    for (std::size_t n = 0; n < 2; ++n) {
      for (std::size_t i = 0; i < 120; ++i) { s += u[(n * 2 + o) * 120 + i]; }
    }
    EXPECT_NEAR(pb.grad[o], s, 1e-12);
  }
}

TEST(Conv3d, RejectsBadShapes)
{
  Graph<double> g;
  auto const x = g.constant(TensorD({1, 2, 3, 4, 4}));
  EXPECT_THROW(conv3d(g, x, g.constant(TensorD({1, 3, 3, 3, 3})), g.constant(TensorD({1}))), ParameterError);
  EXPECT_THROW(conv3d(g, x, g.constant(TensorD({1, 2, 2, 3, 3})), g.constant(TensorD({1}))), ParameterError);
  EXPECT_THROW(conv3d(g, x, g.constant(TensorD({1, 2, 3, 3, 3})), g.constant(TensorD({2}))), ParameterError);
}

TEST(BatchNorm, TrainModeNormalisesAndTracksStatistics)
{
  auto const x = oracle::random_tensor({2, 3, 2, 3, 4}, 11, -2, 5);
  BatchNormState<double> bn("bn", 3);
  bn.gamma.value = TensorD({3}, {1.0, 2.0, 0.5});
  bn.beta.value = TensorD({3}, {0.0, -1.0, 3.0});
  Graph<double> g;
  auto const y = batch_norm(g, g.constant(x), bn);
  std::size_t const per = 2 * 3 * 4;
  for (std::size_t c = 0; c < 3; ++c) {
    std::vector<double> v;
    for (std::size_t n = 0; n < 2; ++n) {
      for (std::size_t i = 0; i < per; ++i) { v.push_back(x[(n * 3 + c) * per + i]); }
    }
    double mean = 0, var = 0;
    for (double a : v) { mean += a; }
    mean /= double(v.size());
    for (double a : v) { var += (a - mean) * (a - mean); }
    double const biased = var / double(v.size()), unbiased = var / double(v.size() - 1);
    for (std::size_t n = 0; n < 2; ++n) {
      for (std::size_t i = 0; i < per; ++i) {
        std::size_t const k = (n * 3 + c) * per + i;
        double const ref = bn.gamma.value[c] * (x[k] - mean) / std::sqrt(biased + 1e-5) + bn.beta.value[c];
        EXPECT_NEAR(g.value(y)[k], ref, 1e-12);
      }
    }
    EXPECT_NEAR(bn.running_mean[c], 0.1 * mean, 1e-12);
    EXPECT_NEAR(bn.running_var[c], 0.9 + 0.1 * unbiased, 1e-12);
  }
  EXPECT_EQ(bn.batches_tracked, 1u);
}

TEST(BatchNorm, EvalModeUsesRunningStatistics)
{
  BatchNormState<double> bn("bn", 2);
  bn.mode = BnMode::Eval;
  Graph<double> g;
  auto const xin = g.constant(oracle::random_tensor({1, 2, 1, 2, 2}, 3));
  EXPECT_THROW(batch_norm(g, xin, bn), ParameterError);

  bn.batches_tracked = 1;
  bn.running_mean = TensorD({2}, {0.5, -1.0});
  bn.running_var = TensorD({2}, {4.0, 0.25});
  bn.gamma.value = TensorD({2}, {2.0, 1.0});
  bn.beta.value = TensorD({2}, {0.1, 0.0});
  auto const y = batch_norm(g, xin, bn);
  auto const &x = g.value(xin);
  for (std::size_t c = 0; c < 2; ++c) {
    for (std::size_t i = 0; i < 4; ++i) {
      double const ref =
        bn.gamma.value[c] * (x[c * 4 + i] - bn.running_mean[c]) / std::sqrt(bn.running_var[c] + 1e-5) +
        bn.beta.value[c];
      EXPECT_NEAR(g.value(y)[c * 4 + i], ref, 1e-12);
    }
  }
  EXPECT_EQ(bn.batches_tracked, 1u);
}

TEST(Elementwise, ReluAddConcatSlice)
{
  TensorD a({1, 2, 1, 1, 2}, {-1, 2, 3, -4}), b({1, 1, 1, 1, 2}, {5, 6});
  Parameter<double> pa("a", a), pb("b", b);
  Graph<double> g;
  auto const va = g.parameter(pa), vb = g.parameter(pb);
  auto const r = relu(g, va);
  EXPECT_EQ(g.value(r).vector(), (std::vector<double>{0, 2, 3, 0}));
  auto const cat = concat_channels(g, {r, vb});
  EXPECT_EQ(g.value(cat).shape(), (Shape{1, 3, 1, 1, 2}));
  EXPECT_EQ(g.value(cat).vector(), (std::vector<double>{0, 2, 3, 0, 5, 6}));
  auto const s = channel_slice(g, cat, 1);
  EXPECT_EQ(g.value(s).vector(), (std::vector<double>{3, 0}));
  auto const sum = add(g, s, vb);
  EXPECT_EQ(g.value(sum).vector(), (std::vector<double>{8, 6}));
  g.backward(inner(g, sum, TensorD({1, 1, 1, 1, 2}, {10, 20})));
  // d/da: only channel 1 of relu(a) reaches the output, and relu kills a[3]
  EXPECT_EQ(pa.grad.vector(), (std::vector<double>{0, 0, 10, 0}));
  EXPECT_EQ(pb.grad.vector(), (std::vector<double>{10, 20}));
  EXPECT_THROW(add(g, va, vb), ParameterError);
  EXPECT_THROW(channel_slice(g, va, 2), ParameterError);
}

TEST(LinearOperator, BackwardAppliesTheOtherDirection)
{
  ProjectorGeometry const geo(6, 10, 8);
  Projector const p(geo);
  Parameter<double> x("x", oracle::random_tensor({1, 1, 2, 8, 8}, 1));
  auto const u = oracle::random_tensor({1, 1, 2, 6, 10}, 2);
  Graph<double> g;
  auto const y = linear_operator(g, g.parameter(x), p, Direction::Forward);
  EXPECT_EQ(g.value(y), forward_project(p, x.value));
  g.backward(inner(g, y, u));
  EXPECT_EQ(x.grad, back_project(p, u));

  Parameter<double> h("h", u);
  Graph<double> g2;
  auto const z = linear_operator(g2, g2.parameter(h), p, Direction::Adjoint);
  g2.backward(inner(g2, z, x.value));
  EXPECT_EQ(h.grad, forward_project(p, x.value));
}

TEST(MseLoss, ValueAndGradient)
{
  Parameter<double> p("p", TensorD({1, 1, 1, 2, 2}, {1, 2, 3, 4}));
  TensorD const t({1, 1, 1, 2, 2}, {0, 2, 5, 4});
  Graph<double> g;
  auto const l = mse_loss(g, g.parameter(p), t);
  EXPECT_DOUBLE_EQ(g.value(l)[0], (1.0 + 0 + 4 + 0) / 4.0);
  g.backward(l);
  EXPECT_EQ(p.grad.vector(), (std::vector<double>{0.5, 0, -1, 0}));
}

TEST(Graph, SharedInputsAccumulate)
{
  Parameter<double> p("p", TensorD({1, 1, 1, 1, 3}, {1, -2, 3}));
  Graph<double> g;
  auto const v = g.parameter(p);
  auto const twice = add(g, v, v);
  g.backward(inner(g, add(g, twice, v), TensorD({1, 1, 1, 1, 3}, 1.0)));
  EXPECT_EQ(p.grad.vector(), (std::vector<double>{3, 3, 3}));
}

TEST(GradCheck, FlagsAWrongBackward)
{
  Parameter<double> p("p", oracle::random_tensor({4}, 3));
  auto build = [&](Graph<double> &g) {
    auto const v = g.parameter(p);
    // square with a deliberately halved derivative
    TensorD sq = g.value(v);
    for (auto &e : sq.data()) { e *= e; }
    auto const node = g.record(sq, {v}, [v](Graph<double> &gr, std::size_t self) {
      auto const &x = gr.value(v);
      auto const up = gr.grad(Var{self});
      auto &gx = gr.grad(v);
      for (std::size_t i = 0; i < x.size(); ++i) { gx[i] += x[i] * up[i]; }
    });
    return inner(g, node, TensorD({4}, 1.0));
  };
  auto const report = grad_check(build, {&p});
  EXPECT_GT(report.max_rel_error, 0.3);
  EXPECT_EQ(report.checked, 4u);
}

TEST(GradCheck, NetworkOfPrimitivesPasses)
{
  Parameter<double> w("w", oracle::random_tensor({3, 2, 3, 3, 3}, 1, -0.3, 0.3));
  Parameter<double> b("b", oracle::random_tensor({3}, 2));
  BatchNormState<double> bn("bn", 3);
  bn.gamma.value = oracle::random_tensor({3}, 3, 0.8, 1.2);
  bn.beta.value = oracle::random_tensor({3}, 4);
  auto const x = oracle::random_tensor({2, 2, 3, 4, 4}, 5);
  auto const target = oracle::random_tensor({2, 3, 3, 4, 4}, 6);
  auto build = [&](Graph<double> &g) {
    auto h = conv3d(g, g.constant(x), g.parameter(w), g.parameter(b));
    h = relu(g, batch_norm(g, h, bn));
    return mse_loss(g, h, target);
  };
  auto const report = grad_check(build, {&w, &b, &bn.gamma, &bn.beta});
  EXPECT_LT(report.max_rel_error, 1e-4) << report.worst_parameter << "[" << report.worst_index << "]";
}

TEST(Adam, HandComputedTrajectory)
{
  // independent evaluation of the bias-corrected update, beta1 0.9,
  // beta2 0.999, eps 1e-8, with learning rates 0.1, 0.05, 0.02
  std::vector<double> p{1.0, -2.0};
  AdamState<double> st;
  std::vector<std::vector<double>> const grads{{0.5, 1e-3}, {-0.2, 1e-3}, {0.3, -4.0}};
  std::vector<double> const lrs{0.1, 0.05, 0.02};
  std::vector<std::vector<double>> const expect{{0.9000000019999999, -2.09999900001},
                                                {0.8827197100582552, -2.1499985000149997},
                                                {0.8718309031711842, -2.1372276907355543}};
  for (std::size_t k = 0; k < 3; ++k) {
    adam_step<double>(p, grads[k], st, lrs[k]);
    EXPECT_NEAR(p[0], expect[k][0], 1e-14);
    EXPECT_NEAR(p[1], expect[k][1], 1e-14);
  }
  EXPECT_EQ(st.step, 3u);
}

TEST(Adam, NonFiniteGradientLeavesEverythingUntouched)
{
  Parameter<float> a("a", TensorF({2}, 1.0f)), b("b", TensorF({1}, 2.0f));
  Adam<float> opt({&a, &b});
  a.grad.fill(0.5f);
  b.grad.fill(0.5f);
  opt.step(0.1);
  auto const a_before = a.value, b_before = b.value;
  auto const states = opt.states();
  a.grad.fill(0.1f);
  b.grad[0] = std::numeric_limits<float>::quiet_NaN();
  try {
    opt.step(0.1);
    FAIL();
  } catch (std::exception const &e) {
    EXPECT_NE(std::string(e.what()).find("diverged gradient in b"), std::string::npos);
  }
  EXPECT_EQ(a.value, a_before);
  EXPECT_EQ(b.value, b_before);
  EXPECT_EQ(opt.states()[0].m, states[0].m);
  EXPECT_EQ(opt.steps(), 1u);
}
