#include <doctest.h>

#include <cmath>

#include "snm/losses.hpp"
#include "snm/rng.hpp"

using namespace snm;
using G = Graph<double>;

namespace {

Tensor<double> random_tensor(const Shape& dims, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor<double> t(dims);
  for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

Tensor<std::uint8_t> random_labels(const Shape& dims, Rng& rng, int classes = 4) {
  Tensor<std::uint8_t> t(dims);
  for (std::int64_t i = 0; i < t.numel(); ++i)
    t[i] = static_cast<std::uint8_t>(rng.below(static_cast<std::uint64_t>(classes)));
  return t;
}

Tensor<double> softmax_of(const Tensor<double>& logits) {
  const std::int64_t n = logits.dim(0), c = logits.dim(1), hw = logits.dim(2) * logits.dim(3);
  Tensor<double> p(logits.dims());
  for (std::int64_t i = 0; i < n; ++i)
    for (std::int64_t j = 0; j < hw; ++j) {
      double mx = -1e300, s = 0.0;
      for (std::int64_t k = 0; k < c; ++k) mx = std::max(mx, logits[(i * c + k) * hw + j]);
      for (std::int64_t k = 0; k < c; ++k) s += std::exp(logits[(i * c + k) * hw + j] - mx);
      for (std::int64_t k = 0; k < c; ++k)
        p[(i * c + k) * hw + j] = std::exp(logits[(i * c + k) * hw + j] - mx) / s;
    }
  return p;
}

}  // namespace

TEST_CASE("mrn_loss: zero for identical batches; constant offset arithmetic") {
  Rng rng(1);
  const auto x = random_tensor({3, 2, 8, 8}, rng);
  CHECK(mrn_loss(x, x).scalar == 0.0);

  // one 64x64 single-channel image offset by 0.1: 0.01 * 4096 = 40.96
  Tensor<double> a({1, 1, 64, 64}, 0.5), b({1, 1, 64, 64}, 0.6);
  CHECK(mrn_loss(a, b).scalar == doctest::Approx(40.96).epsilon(1e-12));

  // batch mean: duplicating the image across a batch keeps the value
  Tensor<double> a4({4, 1, 64, 64}, 0.5), b4({4, 1, 64, 64}, 0.6);
  CHECK(mrn_loss(a4, b4).scalar == doctest::Approx(40.96).epsilon(1e-12));

  CHECK_THROWS_AS(mrn_loss(a, Tensor<double>({1, 1, 64, 32}, 0.0)), dimension_error);
}

TEST_CASE("mrn_loss gradient equals 2(x - t)/L, verified by finite differences") {
  Rng rng(2);
  const auto x0 = random_tensor({2, 1, 4, 4}, rng);
  const auto t0 = random_tensor({2, 1, 4, 4}, rng);

  G g;
  auto x = g.leaf(x0, true);
  auto loss = mrn_loss_op(g, x, g.leaf(t0, false));
  g.backward(loss);
  const auto& grad = g.grad(x);

  const double eps = 1e-6;
  auto xp = x0;
  for (std::int64_t i = 0; i < x0.numel(); ++i) {
    // closed form
    CHECK(grad[static_cast<std::size_t>(i)] ==
          doctest::Approx(2.0 * (x0[i] - t0[i]) / 2.0).epsilon(1e-10));
    // central finite differences
    const double saved = xp[i];
    xp[i] = saved + eps;
    const double lp = mrn_loss(xp, t0).scalar;
    xp[i] = saved - eps;
    const double lm = mrn_loss(xp, t0).scalar;
    xp[i] = saved;
    const double fd = (lp - lm) / (2.0 * eps);
    const double err =
        std::abs(fd - grad[static_cast<std::size_t>(i)]) /
        std::max({std::abs(fd), std::abs(grad[static_cast<std::size_t>(i)]), 1.0});
    CHECK(err <= 1e-4);
  }
}

TEST_CASE("msn_loss: one-hot correct predictions approach zero loss") {
  Tensor<std::uint8_t> labels({1, 4, 4}, 2);
  Tensor<double> probs({1, 4, 4, 4}, 1e-9);
  const std::int64_t hw = 16;
  for (std::int64_t j = 0; j < hw; ++j) probs[2 * hw + j] = 1.0 - 3e-9;
  CHECK(msn_loss(probs, labels).scalar == doctest::Approx(0.0).epsilon(1e-6));
}

TEST_CASE("msn_loss: uniform prediction costs ln 4 per pixel") {
  Tensor<std::uint8_t> labels({2, 8, 8});
  Rng rng(3);
  for (std::int64_t i = 0; i < labels.numel(); ++i)
    labels[i] = static_cast<std::uint8_t>(rng.below(4));
  Tensor<double> probs({2, 4, 8, 8}, 0.25);
  const double per_pixel = msn_loss(probs, labels).scalar / 64.0;
  CHECK(per_pixel == doctest::Approx(std::log(4.0)).epsilon(1e-12));
}

TEST_CASE("msn_loss: invalid class ids are rejected") {
  Tensor<std::uint8_t> labels({1, 2, 2}, 9);
  Tensor<double> probs({1, 4, 2, 2}, 0.25);
  CHECK_THROWS_AS(msn_loss(probs, labels), label_error);
}

TEST_CASE("msn_loss gradient w.r.t. logits equals softmax minus one-hot") {
  Rng rng(4);
  const auto logits0 = random_tensor({1, 4, 4, 4}, rng);
  const auto labels = random_labels({1, 4, 4}, rng);

  G g;
  auto logits = g.leaf(logits0, true);
  auto loss = msn_loss_op(g, g.softmax_channels(logits), labels);
  g.backward(loss);
  const auto& grad = g.grad(logits);

  const auto p = softmax_of(logits0);
  const std::int64_t hw = 16;
  for (std::int64_t c = 0; c < 4; ++c)
    for (std::int64_t j = 0; j < hw; ++j) {
      const double onehot = labels[j] == c ? 1.0 : 0.0;
      CHECK(grad[static_cast<std::size_t>(c * hw + j)] ==
            doctest::Approx(p[c * hw + j] - onehot).epsilon(1e-8));
    }

  // finite differences on a subset of coordinates
  const double eps = 1e-6;
  auto work = logits0;
  for (std::int64_t i = 0; i < work.numel(); i += 7) {
    const double saved = work[i];
    auto eval = [&] {
      G g2;
      auto l2 = g2.leaf(work, false);
      auto v = msn_loss_op(g2, g2.softmax_channels(l2), labels);
      return g2.scalar(v);
    };
    work[i] = saved + eps;
    const double lp = eval();
    work[i] = saved - eps;
    const double lm = eval();
    work[i] = saved;
    const double fd = (lp - lm) / (2.0 * eps);
    const double got = grad[static_cast<std::size_t>(i)];
    CHECK(std::abs(fd - got) / std::max({std::abs(fd), std::abs(got), 1.0}) <= 1e-4);
  }
}

TEST_CASE("omsn_loss: N=1 with identical maps equals the msn loss of that map") {
  Rng rng(5);
  const auto labels = random_labels({1, 4, 4}, rng);
  const auto probs = softmax_of(random_tensor({1, 4, 4, 4}, rng));
  const auto omsn = omsn_loss(probs, {probs}, labels);
  const auto msn = msn_loss(probs, labels);
  CHECK(omsn.scalar == doctest::Approx(msn.scalar).epsilon(1e-12));
}

TEST_CASE("omsn_loss: six-term average for N=5") {
  Rng rng(6);
  const auto labels = random_labels({1, 4, 4}, rng);
  const auto merged = softmax_of(random_tensor({1, 4, 4, 4}, rng));
  std::vector<Tensor<double>> blocks;
  double hand = msn_loss(merged, labels).scalar;
  for (int i = 0; i < 5; ++i) {
    blocks.push_back(softmax_of(random_tensor({1, 4, 4, 4}, rng)));
    hand += msn_loss(blocks.back(), labels).scalar;
  }
  const auto v = omsn_loss(merged, blocks, labels);
  CHECK(v.scalar == doctest::Approx(hand / 6.0).epsilon(1e-12));
  CHECK(v.components.size() == 6);
}

TEST_CASE("omsn_loss: permutation-invariant in the block list") {
  Rng rng(7);
  const auto labels = random_labels({1, 4, 4}, rng);
  const auto merged = softmax_of(random_tensor({1, 4, 4, 4}, rng));
  std::vector<Tensor<double>> blocks;
  for (int i = 0; i < 3; ++i) blocks.push_back(softmax_of(random_tensor({1, 4, 4, 4}, rng)));
  const double a = omsn_loss(merged, blocks, labels).scalar;
  std::swap(blocks[0], blocks[2]);
  const double b = omsn_loss(merged, blocks, labels).scalar;
  CHECK(a == doctest::Approx(b).epsilon(1e-14));
}

TEST_CASE("omsn_loss: empty block list is rejected; perfect predictions cost nothing") {
  Rng rng(8);
  const auto labels = random_labels({1, 4, 4}, rng);
  const auto merged = softmax_of(random_tensor({1, 4, 4, 4}, rng));
  CHECK_THROWS_AS(omsn_loss(merged, {}, labels), parameter_error);

  Tensor<double> perfect({1, 4, 4, 4}, 1e-9);
  const std::int64_t hw = 16;
  for (std::int64_t j = 0; j < hw; ++j)
    perfect[static_cast<std::int64_t>(labels[j]) * hw + j] = 1.0;
  CHECK(omsn_loss(perfect, {perfect, perfect}, labels).scalar ==
        doctest::Approx(0.0).epsilon(1e-6));
}

TEST_CASE("segnetmri_loss: lambda=0 reduces to the reconstruction loss") {
  Rng rng(9);
  const auto labels = random_labels({2, 4, 4}, rng);
  const auto recon = random_tensor({2, 2, 4, 4}, rng);
  const auto target = random_tensor({2, 2, 4, 4}, rng);
  const auto merged = softmax_of(random_tensor({2, 4, 4, 4}, rng));
  std::vector<Tensor<double>> blocks = {softmax_of(random_tensor({2, 4, 4, 4}, rng))};

  const auto v0 = segnetmri_loss(recon, target, merged, blocks, labels, 0.0);
  CHECK(v0.scalar == doctest::Approx(mrn_loss(recon, target).scalar).epsilon(1e-12));

  // the paper's operating point and the component identity
  const auto v = segnetmri_loss(recon, target, merged, blocks, labels, kDefaultLambda);
  const double recombined = v.components.at("mrn") + kDefaultLambda * v.components.at("omsn");
  CHECK(std::abs(v.scalar - recombined) <= 1e-6 * std::max(1.0, std::abs(v.scalar)));

  // both sub-losses zero -> zero
  Tensor<double> perfect({2, 4, 4, 4}, 1e-9);
  const std::int64_t hw = 16;
  for (std::int64_t i = 0; i < 2; ++i)
    for (std::int64_t j = 0; j < hw; ++j)
      perfect[(i * 4 + labels[i * hw + j]) * hw + j] = 1.0;
  const auto z = segnetmri_loss(recon, recon, perfect, {perfect}, labels, kDefaultLambda);
  CHECK(z.scalar == doctest::Approx(0.0).epsilon(1e-6));

  CHECK_THROWS_AS(segnetmri_loss(recon, target, merged, blocks, labels, -0.5), parameter_error);
}

TEST_CASE("losses are nonnegative on random inputs") {
  Rng rng(10);
  for (int t = 0; t < 5; ++t) {
    const auto labels = random_labels({1, 4, 4}, rng);
    const auto probs = softmax_of(random_tensor({1, 4, 4, 4}, rng));
    CHECK(msn_loss(probs, labels).scalar >= 0.0);
    const auto a = random_tensor({1, 2, 4, 4}, rng);
    const auto b = random_tensor({1, 2, 4, 4}, rng);
    CHECK(mrn_loss(a, b).scalar >= 0.0);
  }
}
