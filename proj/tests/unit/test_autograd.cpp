#include <cmath>
#include <functional>

#include "finecount/autograd.hpp"
#include "support.hpp"

using namespace finecount;
using namespace finecount::ad;

namespace {

using Builder = std::function<Var(Graph&, const std::vector<Var>&)>;

// Central-difference check of d(scalar)/d(inputs) for every input entry.
void check_gradients(const std::vector<Tensor>& inputs, const Builder& build, double tol = 1e-6, double h = 1e-5) {
  Graph g;
  std::vector<Var> leaves;
  for (const auto& t : inputs) leaves.push_back(g.leaf(t));
  Var out = build(g, leaves);
  ASSERT_EQ(out.value().size(), 1u);
  g.backward(out);
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    Tensor analytic = g.grad(leaves[k]);
    for (std::size_t i = 0; i < inputs[k].size(); ++i) {
      auto eval = [&](double delta) {
        std::vector<Tensor> in = inputs;
        in[k][i] += delta;
        Graph g2;
        std::vector<Var> l2;
        for (const auto& t : in) l2.push_back(g2.leaf(t));
        return build(g2, l2).value()[0];
      };
      double fd = (eval(h) - eval(-h)) / (2 * h);
      double scale = std::max({1.0, std::abs(fd), std::abs(analytic[i])});
      EXPECT_NEAR(analytic[i], fd, tol * scale) << "input " << k << " entry " << i;
    }
  }
}

Tensor rnd(int c, int h, int w, std::uint64_t seed, double lo = -1, double hi = 1) {
  std::mt19937_64 rng(seed);
  return fc_test::random_tensor(c, h, w, rng, lo, hi);
}

Var loss_against(Var out, std::uint64_t seed) {
  const Tensor& v = out.value();
  return squared_error(out, rnd(v.channels(), v.height(), v.width(), seed));
}

}  // namespace

TEST(Autograd, Conv2dMatchesDirectSum) {
  Tensor x = rnd(2, 5, 6, 1), w = rnd(3, 2, 9, 2), b = rnd(3, 1, 1, 3);
  Graph g;
  Tensor y = conv2d(g.constant(x), g.constant(w), g.constant(b), 3).value();
  ASSERT_EQ(y.channels(), 3);
  ASSERT_EQ(y.height(), 5);
  ASSERT_EQ(y.width(), 6);
  for (int o = 0; o < 3; ++o)
    for (int yy = 0; yy < 5; ++yy)
      for (int xx = 0; xx < 6; ++xx) {
        double s = b(o, 0, 0);
        for (int c = 0; c < 2; ++c)
          for (int ky = 0; ky < 3; ++ky)
            for (int kx = 0; kx < 3; ++kx) {
              int sy = yy + ky - 1, sx = xx + kx - 1;
              if (sy >= 0 && sy < 5 && sx >= 0 && sx < 6) s += w(o, c, ky * 3 + kx) * x(c, sy, sx);
            }
        EXPECT_NEAR(y(o, yy, xx), s, 1e-12);
      }
}

TEST(Autograd, Conv2dGradient) {
  for (int k : {1, 3, 5})
    check_gradients({rnd(2, 4, 5, 10 + k), rnd(3, 2, k * k, 20 + k), rnd(3, 1, 1, 30 + k)},
                    [k](Graph&, const std::vector<Var>& v) { return loss_against(conv2d(v[0], v[1], v[2], k), 99); });
}

TEST(Autograd, LeakyReluGradient) {
  check_gradients({rnd(2, 3, 3, 4)},
                  [](Graph&, const std::vector<Var>& v) { return loss_against(leaky_relu(v[0], 0.1), 5); });
}

TEST(Autograd, MaxPoolGradient) {
  check_gradients({rnd(2, 4, 6, 6)}, [](Graph&, const std::vector<Var>& v) { return loss_against(max_pool2(v[0]), 7); });
}

TEST(Autograd, AvgPoolCeilModeGradient) {
  Graph g;
  Tensor one(1, 3, 3, 1.0);
  Tensor p = avg_pool2(g.constant(one)).value();
  ASSERT_EQ(p.height(), 2);
  EXPECT_DOUBLE_EQ(p(0, 0, 0), 1.0);
  EXPECT_DOUBLE_EQ(p(0, 1, 1), 0.25);  // zero padded, still divided by 4
  check_gradients({rnd(2, 5, 3, 8)}, [](Graph&, const std::vector<Var>& v) { return loss_against(avg_pool2(v[0]), 9); });
}

TEST(Autograd, UpsampleGradient) {
  check_gradients({rnd(2, 2, 3, 10)},
                  [](Graph&, const std::vector<Var>& v) { return loss_against(upsample_nearest(v[0], 3, 5), 11); });
}

TEST(Autograd, StructuralOpsGradient) {
  check_gradients({rnd(2, 3, 3, 12), rnd(1, 3, 3, 13)}, [](Graph&, const std::vector<Var>& v) {
    Var c = concat({v[0], v[1]});
    Var s = slice_channels(c, 1, 2);
    Var a = add(s, affine(s, -2.0, 0.5));
    return loss_against(sum_channels(a), 14);
  });
}

TEST(Autograd, BroadcastMultiplyGradient) {
  check_gradients({rnd(3, 3, 4, 15), rnd(1, 3, 4, 16)},
                  [](Graph&, const std::vector<Var>& v) { return loss_against(mul_broadcast(v[0], v[1]), 17); });
  Tensor mask = rnd(1, 3, 4, 18);
  check_gradients({rnd(3, 3, 4, 19)},
                  [&](Graph&, const std::vector<Var>& v) { return loss_against(scale_by(v[0], mask), 20); });
}

TEST(Autograd, SoftmaxGradientAndSimplex) {
  Graph g;
  Tensor s = softmax_channels(g.constant(rnd(4, 3, 3, 21, -30, 30))).value();
  for (std::size_t i = 0; i < s.plane(); ++i) {
    double t = 0;
    for (int c = 0; c < 4; ++c) t += s.channel(c)[i];
    EXPECT_NEAR(t, 1.0, 1e-12);
  }
  Tensor target = rnd(3, 2, 2, 22, 0, 1);
  check_gradients({rnd(3, 2, 2, 23)}, [&](Graph&, const std::vector<Var>& v) {
    return soft_cross_entropy(softmax_channels(v[0]), target, 1e-12);
  });
}

TEST(Autograd, SoftCrossEntropyFloorBlocksGradient) {
  Graph g;
  Tensor p(1, 1, 2);
  p[0] = 0.0;
  p[1] = 0.5;
  Tensor t(1, 1, 2, 1.0);
  Var x = g.leaf(p);
  Var l = soft_cross_entropy(x, t, 1e-12);
  EXPECT_NEAR(l.value()[0], -std::log(1e-12) - std::log(0.5), 1e-9);
  g.backward(l);
  EXPECT_EQ(g.grad(x)[0], 0.0);
  EXPECT_NEAR(g.grad(x)[1], -2.0, 1e-12);
}

TEST(Autograd, WeightedSumAndDetach) {
  check_gradients({rnd(1, 2, 2, 24), rnd(1, 2, 2, 25)}, [](Graph&, const std::vector<Var>& v) {
    Var a = squared_error(v[0], Tensor(1, 2, 2));
    Var b = squared_error(add(v[1], v[0]), Tensor(1, 2, 2));
    return weighted_sum({{a, 2.0}, {b, 0.5}});
  });
  // Through a detached copy only the direct path contributes: d/dx of
  // 2 x^2 + 0.5 (y + stop(x))^2 is 4x.
  Tensor x0 = rnd(1, 2, 2, 26), y0 = rnd(1, 2, 2, 27);
  Graph g;
  Var x = g.leaf(x0), y = g.leaf(y0);
  Var l = weighted_sum({{squared_error(x, Tensor(1, 2, 2)), 2.0},
                        {squared_error(add(y, detach(x)), Tensor(1, 2, 2)), 0.5}});
  g.backward(l);
  for (std::size_t i = 0; i < x0.size(); ++i) {
    EXPECT_NEAR(g.grad(x)[i], 4 * x0[i], 1e-12);
    EXPECT_NEAR(g.grad(y)[i], y0[i] + x0[i], 1e-12);
  }
}

TEST(Autograd, LocalCosineAggregateGradient) {
  for (int r : {1, 2})
    check_gradients({rnd(3, 4, 5, 26 + r)},
                    [r](Graph&, const std::vector<Var>& v) { return loss_against(local_cosine_aggregate(v[0], r), 28); });
}

TEST(Autograd, LocalCosineAggregateOfConstantField) {
  // Identical feature vectors everywhere: every output equals the input.
  Tensor h(2, 5, 5);
  for (std::size_t i = 0; i < h.plane(); ++i) {
    h.channel(0)[i] = 0.7;
    h.channel(1)[i] = -0.2;
  }
  Graph g;
  Tensor o = local_cosine_aggregate(g.constant(h), 3).value();
  for (std::size_t i = 0; i < o.size(); ++i) EXPECT_NEAR(o[i], h[i], 1e-12);
}

TEST(Autograd, ParameterGradientsAccumulate) {
  Parameter p{rnd(1, 2, 2, 29), {}};
  for (int pass = 0; pass < 2; ++pass) {
    Graph g;
    Var x = g.param(p);
    g.backward(squared_error(x, Tensor(1, 2, 2)));
  }
  for (std::size_t i = 0; i < p.value.size(); ++i) EXPECT_NEAR(p.grad[i], 4 * p.value[i], 1e-12);
}

TEST(Autograd, ConstantsReceiveNoGradient) {
  Graph g;
  Var c = g.constant(rnd(1, 2, 2, 30));
  Var l = g.leaf(rnd(1, 2, 2, 31));
  g.backward(squared_error(add(c, l), Tensor(1, 2, 2)));
  EXPECT_EQ(g.grad(c).sum(), 0.0);
  EXPECT_NE(g.grad(l).sum(), 0.0);
}
