#include <algorithm>
#include <set>

#include "doctest.h"
#include "common/rng.hpp"
#include "ndgrad/grad_check.hpp"
#include "ndgrad/tape.hpp"
#include "vq/vq.hpp"

using namespace rosmm;
using namespace rosmm::ndgrad;
using namespace rosmm::vq;

namespace {

Codebook<double> two_word_book() {
  auto cb = make_codebook<double>(2, 2);
  cb.entries->data = {0.0, 0.0, 1.0, 1.0};
  return cb;
}

}  // namespace

TEST_CASE("quantize_nearest: picks the closer codeword") {
  auto cb = two_word_book();
  auto z = make_tensor<double>({1, 2});
  z->data = {0.9, 0.8};
  auto qg = quantize_nearest(z, cb);
  CHECK(qg.indices[0] == 1);  // d^2 = 1.45 vs 0.05
  CHECK(qg.quantized->data[0] == 1.0);
  CHECK(cb.usage[1] == 1);
  CHECK(cb.usage[0] == 0);
}

TEST_CASE("quantize_nearest: exact codeword gives distance zero") {
  auto cb = two_word_book();
  auto z = make_tensor<double>({1, 2});
  z->data = {1.0, 1.0};
  auto qg = quantize_nearest(z, cb);
  CHECK(qg.indices[0] == 1);
  CHECK(qg.distances[0] == 0.0);
}

TEST_CASE("quantize_nearest: equidistant latent breaks the tie to the lowest index") {
  auto cb = two_word_book();
  auto z = make_tensor<double>({1, 2});
  z->data = {0.5, 0.5};
  auto qg = quantize_nearest(z, cb);
  CHECK(qg.indices[0] == 0);
}

TEST_CASE("quantize_nearest: rejects dimension mismatch, counts usage per row") {
  auto cb = two_word_book();
  auto bad = make_tensor<double>({1, 3});
  CHECK_THROWS_AS(quantize_nearest(bad, cb), std::invalid_argument);

  auto z = make_tensor<double>({4, 2});
  z->data = {0.0, 0.1, 0.9, 0.9, 0.2, 0.0, 1.2, 1.1};
  quantize_nearest(z, cb);
  CHECK(cb.usage[0] + cb.usage[1] == 4);
}

TEST_CASE("quantization is idempotent and never increases distance") {
  Rng rng(21);
  auto cb = make_codebook<double>(16, 4);
  for (auto& v : cb.entries->data) v = rng.normal();
  auto z = make_tensor<double>({32, 4});
  for (auto& v : z->data) v = rng.normal();
  auto qg = quantize_nearest(z, cb);
  auto qg2 = quantize_nearest(qg.quantized, cb);
  CHECK(qg2.indices == qg.indices);
  for (int i = 0; i < 32; ++i) {
    for (int c = 0; c < 16; ++c) {
      double acc = 0;
      for (int j = 0; j < 4; ++j) {
        double diff = z->data[i * 4 + j] - cb.entries->data[c * 4 + j];
        acc += diff * diff;
      }
      CHECK(qg.distances[i] <= std::sqrt(acc) + 1e-12);
    }
  }
}

TEST_CASE("straight_through: value is the quantized side, gradient is identity to latents") {
  auto z = make_tensor<double>({2, 2});
  z->requires_grad = true;
  z->data = {0.3, -0.4, 2.0, 1.0};
  auto q = make_tensor<double>({2, 2});
  q->requires_grad = true;
  q->data = {1.0, 2.0, 3.0, 4.0};

  Tape<double> tape;
  auto st = straight_through(&tape, z, q);
  for (int i = 0; i < 4; ++i) CHECK(st->data[i] == q->data[i]);
  auto loss = sum(&tape, st);
  tape.backward(loss);
  for (int i = 0; i < 4; ++i) CHECK(z->grad[i] == 1.0);
  CHECK(q->grad.empty());  // no gradient reaches the codebook through this path
}

TEST_CASE("vq_losses: scalar example embeds 1.0 / commits 1.0 on disjoint parameters") {
  auto cb = make_codebook<double>(1, 1);
  cb.entries->data = {0.0};
  cb.entries->requires_grad = true;
  auto z = make_tensor<double>({1, 1});
  z->requires_grad = true;
  z->data = {1.0};

  Tape<double> tape;
  auto [embedding, commitment] = vq_losses(&tape, z, cb, {0});
  CHECK(embedding->data[0] == doctest::Approx(1.0));
  CHECK(commitment->data[0] == doctest::Approx(1.0));

  auto total = add(&tape, embedding, commitment);
  tape.backward(total);
  // embedding term pulls the codeword toward the latent, not the reverse
  CHECK(cb.entries->grad[0] == doctest::Approx(-2.0));
  CHECK(z->grad[0] == doctest::Approx(2.0));
}

TEST_CASE("vq_losses: zero when latents equal codewords; beta scales only commitment") {
  auto cb = make_codebook<double>(2, 2);
  cb.entries->data = {0.5, -0.5, 1.0, 2.0};
  auto z = make_tensor<double>({2, 2});
  z->data = {0.5, -0.5, 1.0, 2.0};
  Tape<double> tape;
  auto [e, c] = vq_losses(&tape, z, cb, {0, 1});
  CHECK(e->data[0] == 0.0);
  CHECK(c->data[0] == 0.0);

  auto z2 = make_tensor<double>({1, 2});
  z2->data = {1.5, 2.5};
  auto [e2, c2] = vq_losses<double>(nullptr, z2, cb, {1});
  const double total1 = e2->data[0] + 0.25 * c2->data[0];
  const double total2 = e2->data[0] + 0.5 * c2->data[0];
  CHECK(total2 - total1 == doctest::Approx(0.25 * c2->data[0]));
}

TEST_CASE("straight-through composite: decoder gradient equals identity-quantization gradient") {
  Rng rng(22);
  auto z = make_tensor<double>({3, 2});
  for (auto& v : z->data) v = rng.normal();
  auto w = make_tensor<double>({2, 2});
  for (auto& v : w->data) v = rng.normal();
  auto b = make_tensor<double>({2});
  auto t = make_tensor<double>({3, 2});
  for (auto& v : t->data) v = rng.normal();

  // frozen quantization: q == z values, so the straight-through path must
  // reproduce the gradient of the identity-quantization composite
  auto fn = [&w, &b, &t](Tape<double>* tape, const std::vector<TensorPtr<double>>& in) {
    auto q = detach(in[0]);
    auto st = straight_through(tape, in[0], q);
    return mse_loss(tape, linear(tape, st, w, b), t);
  };
  auto rep = grad_check(fn, {z}, 1e-5);
  CHECK(rep.max_rel_err < 1e-4);
}

TEST_CASE("init_codebook_kmeans: K == N distinct samples is a permutation with zero inertia") {
  std::vector<double> samples = {0.0, 0.0, 10.0, 0.0, 0.0, 10.0, 10.0, 10.0};
  auto cb = init_codebook_kmeans<double>(samples, 4, 2, 4, 5, 7);
  std::set<std::pair<double, double>> got, want;
  for (int c = 0; c < 4; ++c) got.insert({cb.entries->data[c * 2], cb.entries->data[c * 2 + 1]});
  for (int i = 0; i < 4; ++i) want.insert({samples[i * 2], samples[i * 2 + 1]});
  CHECK(got == want);
}

TEST_CASE("init_codebook_kmeans: two separated clouds recover cloud means") {
  Rng rng(23);
  std::vector<double> samples;
  double mean_a[2] = {0, 0}, mean_b[2] = {0, 0};
  for (int i = 0; i < 50; ++i) {
    double x = -5.0 + 0.01 * rng.normal(), y = 0.0 + 0.01 * rng.normal();
    samples.push_back(x);
    samples.push_back(y);
    mean_a[0] += x / 50;
    mean_a[1] += y / 50;
  }
  for (int i = 0; i < 50; ++i) {
    double x = 5.0 + 0.01 * rng.normal(), y = 1.0 + 0.01 * rng.normal();
    samples.push_back(x);
    samples.push_back(y);
    mean_b[0] += x / 50;
    mean_b[1] += y / 50;
  }
  auto cb = init_codebook_kmeans<double>(samples, 100, 2, 2, 20, 9);
  // order-insensitive match
  double c0x = cb.entries->data[0], c0y = cb.entries->data[1];
  double c1x = cb.entries->data[2], c1y = cb.entries->data[3];
  if (c0x > c1x) {
    std::swap(c0x, c1x);
    std::swap(c0y, c1y);
  }
  CHECK(c0x == doctest::Approx(mean_a[0]).epsilon(1e-6));
  CHECK(c0y == doctest::Approx(mean_a[1]).epsilon(1e-6));
  CHECK(c1x == doctest::Approx(mean_b[0]).epsilon(1e-6));
  CHECK(c1y == doctest::Approx(mean_b[1]).epsilon(1e-6));
}

TEST_CASE("init_codebook_kmeans: deterministic given seed, rejects N < K") {
  Rng rng(24);
  std::vector<double> samples(60);
  for (auto& v : samples) v = rng.normal();
  auto a = init_codebook_kmeans<double>(samples, 20, 3, 5, 8, 77);
  auto b = init_codebook_kmeans<double>(samples, 20, 3, 5, 8, 77);
  CHECK(a.entries->data == b.entries->data);
  CHECK_THROWS_AS(init_codebook_kmeans<double>(samples, 4, 3, 5, 8, 77), std::invalid_argument);
}

TEST_CASE("reseed_dead_codes: replaces only dead rows and resets usage") {
  auto cb = make_codebook<double>(3, 2);
  cb.entries->data = {1, 1, 2, 2, 3, 3};
  cb.usage = {5, 0, 7};
  std::vector<double> recent = {9.0, 9.5, -4.0, -4.5};

  SUBCASE("all codes above threshold: unchanged") {
    cb.usage = {5, 3, 7};
    auto before = cb.entries->data;
    CHECK(reseed_dead_codes(cb, recent, 2, 0, 42) == 0);
    CHECK(cb.entries->data == before);
  }

  SUBCASE("one dead code: exactly that row replaced") {
    auto before = cb.entries->data;
    CHECK(reseed_dead_codes(cb, recent, 2, 0, 42) == 1);
    CHECK(cb.entries->data[0] == before[0]);
    CHECK(cb.entries->data[1] == before[1]);
    CHECK(cb.entries->data[4] == before[4]);
    CHECK(cb.entries->data[5] == before[5]);
    const bool from_recent = (cb.entries->data[2] == 9.0 && cb.entries->data[3] == 9.5) ||
                             (cb.entries->data[2] == -4.0 && cb.entries->data[3] == -4.5);
    CHECK(from_recent);
    CHECK(cb.usage == std::vector<uint64_t>{0, 0, 0});

    // quantizing the donor latent now lands on the reseeded code exactly
    auto donor = make_tensor<double>({1, 2});
    donor->data = {cb.entries->data[2], cb.entries->data[3]};
    auto qg = quantize_nearest(donor, cb);
    CHECK(qg.indices[0] == 1);
    CHECK(qg.distances[0] == 0.0);
  }

  SUBCASE("no recent latents: warning no-op") {
    auto before = cb.entries->data;
    CHECK(reseed_dead_codes(cb, {}, 0, 0, 42) == -1);
    CHECK(cb.entries->data == before);
  }
}
