#include <doctest.h>

#include <cmath>
#include <functional>

#include "snm/autodiff.hpp"
#include "snm/kspace.hpp"
#include "snm/rng.hpp"

using namespace snm;
using G = Graph<double>;

namespace {

Tensor<double> random_tensor(const Shape& dims, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor<double> t(dims);
  for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

// values bounded away from zero (for relu / magnitude kink avoidance)
Tensor<double> random_offzero(const Shape& dims, Rng& rng) {
  Tensor<double> t(dims);
  for (std::int64_t i = 0; i < t.numel(); ++i) {
    const double mag = rng.uniform(0.2, 1.0);
    t[i] = rng.coin() ? mag : -mag;
  }
  return t;
}

// Central finite differences against the analytic gradient of `build`,
// a scalar-valued function of several leaf tensors.
void check_gradients(const std::vector<Tensor<double>>& inputs,
                     const std::function<G::Id(G&, const std::vector<G::Id>&)>& build,
                     double eps = 1e-5, double tol = 1e-6) {
  std::vector<Tensor<double>> work = inputs;
  auto eval = [&](std::vector<std::vector<double>>* grads) {
    G g;
    std::vector<G::Id> ids;
    for (const auto& t : work) ids.push_back(g.leaf(t, true));
    const G::Id loss = build(g, ids);
    if (grads) {
      g.backward(loss);
      grads->clear();
      for (auto id : ids) grads->push_back(g.grad(id));
    }
    return g.scalar(loss);
  };

  std::vector<std::vector<double>> analytic;
  eval(&analytic);

  for (std::size_t t = 0; t < work.size(); ++t) {
    for (std::int64_t i = 0; i < work[t].numel(); ++i) {
      const double saved = work[t][i];
      work[t][i] = saved + eps;
      const double lp = eval(nullptr);
      work[t][i] = saved - eps;
      const double lm = eval(nullptr);
      work[t][i] = saved;
      const double fd = (lp - lm) / (2.0 * eps);
      const double got = analytic[t][static_cast<std::size_t>(i)];
      const double err = std::abs(fd - got) / std::max({std::abs(fd), std::abs(got), 1.0});
      if (err > tol) {
        CAPTURE(t);
        CAPTURE(i);
        CAPTURE(fd);
        CAPTURE(got);
      }
      REQUIRE(err <= tol);
    }
  }
}

}  // namespace

TEST_CASE("gradients: add, sub, scale, sum_sq") {
  Rng rng(1);
  check_gradients({random_tensor({2, 3}, rng), random_tensor({2, 3}, rng)},
                  [](G& g, const std::vector<G::Id>& in) {
                    return g.sum_sq(g.add(in[0], g.scale(g.sub(in[0], in[1]), 0.7)));
                  });
}

TEST_CASE("gradients: relu") {
  Rng rng(2);
  check_gradients({random_offzero({1, 2, 4, 4}, rng)}, [](G& g, const std::vector<G::Id>& in) {
    return g.sum_sq(g.relu(in[0]));
  });
}

TEST_CASE("gradients: magnitude") {
  Rng rng(3);
  check_gradients({random_offzero({2, 2, 3, 3}, rng)}, [](G& g, const std::vector<G::Id>& in) {
    return g.sum_sq(g.magnitude(in[0]));
  });
}

TEST_CASE("gradients: concat and softmax over channels") {
  Rng rng(4);
  check_gradients({random_tensor({1, 2, 3, 3}, rng), random_tensor({1, 3, 3, 3}, rng)},
                  [](G& g, const std::vector<G::Id>& in) {
                    auto cat = g.concat_channels({in[0], in[1]});
                    auto sm = g.softmax_channels(cat);
                    // weigh the channels so softmax gradients do not cancel
                    auto w = g.leaf(Tensor<double>::from({1, 5, 3, 3},
                                                         [] {
                                                           std::vector<double> v(45);
                                                           for (std::size_t i = 0; i < v.size(); ++i)
                                                             v[i] = 0.1 * static_cast<double>(i % 7) - 0.2;
                                                           return v;
                                                         }()),
                                    false);
                    return g.sum_sq(g.sub(sm, w));
                  });
}

TEST_CASE("gradients: conv2d w.r.t. input, weight and bias") {
  Rng rng(5);
  check_gradients({random_tensor({2, 3, 5, 5}, rng), random_tensor({4, 3, 3, 3}, rng),
                   random_tensor({4}, rng)},
                  [](G& g, const std::vector<G::Id>& in) {
                    return g.sum_sq(g.conv2d(in[0], in[1], in[2]));
                  });
}

TEST_CASE("gradients: 1x1 conv2d") {
  Rng rng(6);
  check_gradients({random_tensor({1, 4, 3, 3}, rng), random_tensor({2, 4, 1, 1}, rng),
                   random_tensor({2}, rng)},
                  [](G& g, const std::vector<G::Id>& in) {
                    return g.sum_sq(g.conv2d(in[0], in[1], in[2]));
                  });
}

TEST_CASE("gradients: conv_transpose2d") {
  Rng rng(7);
  check_gradients({random_tensor({2, 3, 3, 3}, rng), random_tensor({3, 2, 2, 2}, rng),
                   random_tensor({2}, rng)},
                  [](G& g, const std::vector<G::Id>& in) {
                    return g.sum_sq(g.conv_transpose2d(in[0], in[1], in[2]));
                  });
}

TEST_CASE("conv_transpose2d doubles the spatial dims") {
  Rng rng(8);
  G g;
  auto x = g.leaf(random_tensor({1, 2, 3, 5}, rng), false);
  auto w = g.leaf(random_tensor({2, 4, 2, 2}, rng), false);
  auto b = g.leaf(Tensor<double>({4}), false);
  auto y = g.conv_transpose2d(x, w, b);
  CHECK(g.shape(y) == Shape{1, 4, 6, 10});
}

TEST_CASE("gradients: maxpool2x2") {
  Rng rng(9);
  check_gradients({random_tensor({2, 2, 4, 4}, rng)}, [](G& g, const std::vector<G::Id>& in) {
    return g.sum_sq(g.maxpool2x2(in[0]));
  });
}

TEST_CASE("gradients: batchnorm in training mode") {
  Rng rng(10);
  std::vector<double> rmean(3, 0.0), rvar(3, 1.0);
  check_gradients(
      {random_tensor({2, 3, 4, 4}, rng), random_tensor({3}, rng, 0.5, 1.5),
       random_tensor({3}, rng)},
      [&](G& g, const std::vector<G::Id>& in) {
        auto y = g.batchnorm(in[0], in[1], in[2], rmean.data(), rvar.data(), true, 0.99, 1e-5);
        // an asymmetric functional so mean/var gradients are exercised
        auto s = g.relu(y);
        return g.sum_sq(s);
      },
      1e-5, 1e-5);
}

TEST_CASE("gradients: batchnorm in inference mode uses stored statistics") {
  Rng rng(11);
  std::vector<double> rmean = {0.1, -0.2, 0.3};
  std::vector<double> rvar = {1.5, 0.7, 2.0};
  const auto rmean_before = rmean;
  check_gradients({random_tensor({2, 3, 4, 4}, rng), random_tensor({3}, rng, 0.5, 1.5),
                   random_tensor({3}, rng)},
                  [&](G& g, const std::vector<G::Id>& in) {
                    auto y = g.batchnorm(in[0], in[1], in[2], rmean.data(), rvar.data(), false,
                                         0.99, 1e-5);
                    return g.sum_sq(y);
                  });
  CHECK(rmean == rmean_before);  // inference mode must not touch running stats
}

TEST_CASE("batchnorm updates running statistics in training mode") {
  Rng rng(12);
  std::vector<double> rmean(2, 0.0), rvar(2, 1.0);
  G g;
  auto x = g.leaf(random_tensor({2, 2, 4, 4}, rng, 1.0, 2.0), false);
  auto gamma = g.leaf(Tensor<double>({2}, 1.0), false);
  auto beta = g.leaf(Tensor<double>({2}, 0.0), false);
  g.batchnorm(x, gamma, beta, rmean.data(), rvar.data(), true, 0.99, 1e-5);
  CHECK(rmean[0] > 0.0);  // moved toward the batch mean (~1.5)
  CHECK(rvar[0] < 1.0);   // moved toward the batch variance (< 1)
}

TEST_CASE("gradients: data_fidelity with hard replacement and finite weight") {
  Rng rng(13);
  const auto mask = make_cartesian_mask(4, 4, 0.5, 0.25, 1);
  std::vector<Tensor<std::complex<double>>> ys;
  for (int i = 0; i < 2; ++i) {
    Tensor<std::complex<double>> y({4, 4});
    for (std::int64_t j = 0; j < 16; ++j)
      y[j] = mask.mask[j] ? std::complex<double>(rng.uniform(-1, 1), rng.uniform(-1, 1)) : 0.0;
    ys.push_back(std::move(y));
  }
  for (const double weight : {kHardReplacement, 2.5}) {
    check_gradients({random_tensor({2, 2, 4, 4}, rng)},
                    [&](G& g, const std::vector<G::Id>& in) {
                      return g.sum_sq(g.data_fidelity(in[0], ys, mask.mask, weight));
                    });
  }
}

TEST_CASE("gradients: cross_entropy_sum through softmax") {
  Rng rng(14);
  Tensor<std::uint8_t> labels({2, 3, 3});
  for (std::int64_t i = 0; i < labels.numel(); ++i)
    labels[i] = static_cast<std::uint8_t>(rng.below(4));
  check_gradients({random_tensor({2, 4, 3, 3}, rng)}, [&](G& g, const std::vector<G::Id>& in) {
    auto probs = g.softmax_channels(in[0]);
    return g.cross_entropy_sum(probs, labels, 1e-8);
  });
}

TEST_CASE("cross_entropy_sum rejects out-of-range labels") {
  G g;
  auto p = g.leaf(Tensor<double>({1, 2, 2, 2}, 0.5), false);
  Tensor<std::uint8_t> labels({1, 2, 2}, 3);  // only 2 classes
  CHECK_THROWS_AS(g.cross_entropy_sum(p, labels, 1e-8), label_error);
}

TEST_CASE("gradients: lincomb") {
  Rng rng(15);
  check_gradients({random_tensor({3, 3}, rng), random_tensor({3, 3}, rng)},
                  [](G& g, const std::vector<G::Id>& in) {
                    auto a = g.sum_sq(in[0]);
                    auto b = g.sum_sq(in[1]);
                    return g.lincomb({a, b}, {0.25, -1.5});
                  });
}

TEST_CASE("gradients: a parameter used twice accumulates both contributions") {
  Rng rng(16);
  check_gradients({random_tensor({1, 2, 4, 4}, rng), random_tensor({2, 2, 3, 3}, rng),
                   random_tensor({2}, rng)},
                  [](G& g, const std::vector<G::Id>& in) {
                    auto y1 = g.conv2d(in[0], in[1], in[2]);
                    auto y2 = g.conv2d(g.relu(in[0]), in[1], in[2]);  // shared weights
                    return g.sum_sq(g.add(y1, y2));
                  });
}

TEST_CASE("backward can run repeatedly with consistent results") {
  Rng rng(17);
  G g;
  auto x = g.leaf(random_tensor({2, 2}, rng), true);
  auto loss = g.sum_sq(x);
  g.backward(loss);
  const auto g1 = g.grad(x);
  g.backward(loss);
  const auto g2 = g.grad(x);
  CHECK(g1 == g2);  // grads reset between calls, not accumulated
}

TEST_CASE("shape violations raise dimension errors") {
  G g;
  auto a = g.leaf(Tensor<double>({2, 2}, 1.0), false);
  auto b = g.leaf(Tensor<double>({2, 3}, 1.0), false);
  CHECK_THROWS_AS(g.add(a, b), dimension_error);
  auto x = g.leaf(Tensor<double>({1, 3, 4, 4}, 1.0), false);
  auto w = g.leaf(Tensor<double>({2, 4, 3, 3}, 1.0), false);  // in-channel mismatch
  auto bias = g.leaf(Tensor<double>({2}, 0.0), false);
  CHECK_THROWS_AS(g.conv2d(x, w, bias), dimension_error);
  auto odd = g.leaf(Tensor<double>({1, 1, 5, 4}, 1.0), false);
  CHECK_THROWS_AS(g.maxpool2x2(odd), dimension_error);
}
