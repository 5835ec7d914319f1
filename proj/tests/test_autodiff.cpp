#include <gtest/gtest.h>

#include "caseforge/nn/modules.hpp"
#include "caseforge/nn/ops.hpp"
#include "gradcheck.hpp"

using namespace caseforge;
namespace O = caseforge::ops;

namespace {

Var<double> leaf(Tensor<double> t) { return make_leaf(std::move(t), true); }

}  // namespace

TEST(Autodiff, ElementwiseOps) {
  Rng rng(11);
  auto a = leaf(random_tensor({4, 5}, rng));
  auto b = leaf(random_tensor({4, 5}, rng));

  auto res = check_gradients({a, b}, [&] {
    auto x = O::add(a, b);
    x = O::affine(x, 1.7, -0.3);
    x = O::leaky_relu(x, 0.2);
    x = O::tanh01(x);
    return O::mean_all(x);
  }, rng, 8);
  EXPECT_LT(res.max_rel_err, 1e-6) << "checked " << res.checked;
}

TEST(Autodiff, SubLogSigmoid) {
  Rng rng(12);
  auto a = leaf(random_tensor({3, 3}, rng, 0.5));
  auto b = leaf(random_tensor({3, 3}, rng, 0.5));

  auto res = check_gradients({a, b}, [&] {
    auto p = O::sigmoid_clamped(O::sub(a, b), 1e-7);
    auto q = O::affine(p, -1.0, 1.0);  // 1 - p
    return O::mean_all(O::add(O::log_elem(p), O::log_elem(q)));
  }, rng, 9);
  EXPECT_LT(res.max_rel_err, 1e-6);
}

TEST(Autodiff, SigmoidClampBounds) {
  auto big = leaf(Tensor<double>({2}, {50.0, -50.0}));
  auto p = O::sigmoid_clamped(big, 1e-7);
  EXPECT_DOUBLE_EQ(p->value[0], 1.0 - 1e-7);
  EXPECT_DOUBLE_EQ(p->value[1], 1e-7);
  // clamped region has zero gradient
  backward(O::mean_all(O::log_elem(p)));
  EXPECT_EQ(big->grad[0], 0.0);
  EXPECT_EQ(big->grad[1], 0.0);
}

TEST(Autodiff, StructuralOps) {
  Rng rng(13);
  auto a = leaf(random_tensor({2, 3, 4, 4}, rng));
  auto b = leaf(random_tensor({2, 2, 4, 4}, rng));
  auto v = leaf(random_tensor({2, 3}, rng));

  auto res = check_gradients({a, b, v}, [&] {
    auto c = O::concat_channels(a, b);
    auto m = O::broadcast_to_map(v, 4, 4);
    auto s = O::concat_channels(c, m);
    auto u = O::upsample_nearest2(s);
    auto g = O::global_avg_pool(u);
    auto r = O::reshape(g, {2 * 8});
    return O::mean_all(O::leaky_relu(r, 0.2));
  }, rng, 6);
  EXPECT_LT(res.max_rel_err, 1e-6);
}

TEST(Autodiff, GatherAndRowDistance) {
  Rng rng(14);
  auto f = leaf(random_tensor({6, 4}, rng));

  auto res = check_gradients({f}, [&] {
    auto fp = O::gather_rows(f, {1, 2, 0});
    auto fa = O::gather_rows(f, {3, 4, 5});
    auto d = O::row_l2_dist(fa, fp);
    return O::mean_all(O::relu(O::affine(d, 1.0, -0.5)));
  }, rng, 12);
  EXPECT_LT(res.max_rel_err, 1e-5);
}

TEST(Autodiff, RowDistanceZeroIsSafe) {
  auto a = leaf(Tensor<double>({1, 3}, {1.0, 2.0, 3.0}));
  auto b = leaf(Tensor<double>({1, 3}, {1.0, 2.0, 3.0}));
  auto d = O::row_l2_dist(a, b);
  EXPECT_EQ(d->value[0], 0.0);
  backward(O::mean_all(d));
  // subgradient convention at the kink: nothing propagates
  EXPECT_TRUE(a->grad.numel() == 0 || a->grad[0] == 0.0);
}

TEST(Autodiff, Linear) {
  Rng rng(15);
  auto x = leaf(random_tensor({3, 7}, rng));
  auto w = leaf(random_tensor({4, 7}, rng, 0.4));
  auto b = leaf(random_tensor({4}, rng, 0.1));

  auto res = check_gradients({x, w, b}, [&] {
    return O::mean_all(O::tanh01(O::linear(x, w, b)));
  }, rng, 10);
  EXPECT_LT(res.max_rel_err, 1e-6);
}

TEST(Autodiff, ConvStride1AndStride2) {
  Rng rng(16);
  auto x = leaf(random_tensor({2, 3, 6, 5}, rng));
  auto w1 = leaf(random_tensor({4, 3, 3, 3}, rng, 0.3));
  auto b1 = leaf(random_tensor({4}, rng, 0.1));
  auto w2 = leaf(random_tensor({2, 4, 3, 3}, rng, 0.3));
  auto b2 = leaf(random_tensor({2}, rng, 0.1));

  auto y = O::conv2d(x, w1, b1, 1, 1);
  EXPECT_EQ(y->value.shape(), Shape({2, 4, 6, 5}));
  auto z = O::conv2d(y, w2, b2, 2, 1);
  EXPECT_EQ(z->value.shape(), Shape({2, 2, 3, 3}));

  auto res = check_gradients({x, w1, b1, w2, b2}, [&] {
    auto h = O::conv2d(x, w1, b1, 1, 1);
    h = O::leaky_relu(h, 0.2);
    h = O::conv2d(h, w2, b2, 2, 1);
    return O::mean_all(O::tanh01(h));
  }, rng, 8);
  EXPECT_LT(res.max_rel_err, 1e-5);
}

TEST(Autodiff, InstanceNorm) {
  Rng rng(17);
  auto x = leaf(random_tensor({2, 3, 4, 5}, rng));
  auto g = leaf(random_tensor({3}, rng, 0.5));
  auto b = leaf(random_tensor({3}, rng, 0.5));

  auto res = check_gradients({x, g, b}, [&] {
    return O::mean_all(O::tanh01(O::instance_norm(x, g, b)));
  }, rng, 10);
  EXPECT_LT(res.max_rel_err, 1e-5);
}

TEST(Autodiff, SoftmaxNll) {
  Rng rng(18);
  auto z = leaf(random_tensor({5, 7}, rng));
  std::vector<int> labels = {0, 3, 6, 2, 2};

  auto res = check_gradients({z}, [&] { return O::softmax_nll(z, labels); }, rng, 14);
  EXPECT_LT(res.max_rel_err, 1e-6);

  EXPECT_THROW(O::softmax_nll(z, std::vector<int>{0, 1, 2, 3, 9}), Error);
}

TEST(Autodiff, L1Mean) {
  Rng rng(19);
  auto a = leaf(random_tensor({3, 4}, rng));
  auto b = leaf(random_tensor({3, 4}, rng));

  auto res = check_gradients({a, b}, [&] { return O::l1_mean(a, b); }, rng, 8);
  EXPECT_LT(res.max_rel_err, 1e-6);
  EXPECT_EQ(O::l1_mean(a, a)->value[0], 0.0);
}

TEST(Autodiff, ResidualBlockEndToEnd) {
  Rng rng(20);
  Rng init(99);
  nn::ResBlock<double> block(3, init);
  auto x = leaf(random_tensor({2, 3, 4, 4}, rng, 0.7));

  std::vector<Var<double>> params{x};
  nn::ParamList<double> plist;
  block.collect(plist, "res");
  EXPECT_EQ(plist.size(), 8u);
  for (auto& p : plist) params.push_back(p.var);

  auto res = check_gradients(params, [&] {
    return O::mean_all(O::tanh01(block.forward(x)));
  }, rng, 5);
  EXPECT_LT(res.max_rel_err, 1e-5);
}

TEST(Autodiff, DetachStopsGradient) {
  Rng rng(21);
  auto a = leaf(random_tensor({2, 2}, rng));
  auto d = detach(a);
  EXPECT_FALSE(d->requires_grad);
  auto loss = O::mean_all(O::add(d, d));
  backward(loss);
  EXPECT_EQ(a->grad.numel(), 0);
}

TEST(Autodiff, GradAccumulatesAcrossSharedUse) {
  auto a = leaf(Tensor<double>({1}, {2.0}));
  auto loss = O::mean_all(O::add(a, a));  // d/da (2a) = 2
  backward(loss);
  EXPECT_DOUBLE_EQ(a->grad[0], 2.0);
}

TEST(Autodiff, ShapeErrorsNameDims) {
  auto a = leaf(Tensor<double>({2, 3}));
  auto b = leaf(Tensor<double>({3, 2}));
  try {
    O::add(a, b);
    FAIL() << "expected shape error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::shape_mismatch);
    EXPECT_NE(std::string(e.what()).find("(2, 3)"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("(3, 2)"), std::string::npos);
  }
}
