#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "doctest.h"
#include "wsr/error.hpp"
#include "wsr/gradcheck.hpp"
#include "wsr/ops.hpp"
#include "wsr/optim.hpp"
#include "wsr/rng.hpp"
#include "wsr/tensor.hpp"

using namespace wsr;
using namespace wsr::ag;

namespace {

Tensor<double> vec(std::vector<double> v, bool grad = false) {
  const std::size_t n = v.size();
  return Tensor<double>({n}, std::move(v), grad);
}

}  // namespace

TEST_CASE("tensor shape and storage") {
  Tensor<float> t({2, 3});
  CHECK(t.numel() == 6);
  CHECK(t.rank() == 2);
  CHECK(std::all_of(t.data().begin(), t.data().end(), [](float v) { return v == 0.0f; }));
  CHECK_THROWS_AS(Tensor<float>({2, 2}, std::vector<float>(3)), ShapeError);

  Tensor<float> alias = t;
  alias.data()[0] = 5.0f;
  CHECK(t.data()[0] == 5.0f);
  CHECK(alias.same_storage(t));
  Tensor<float> deep = t.clone();
  deep.data()[0] = 1.0f;
  CHECK(t.data()[0] == 5.0f);

  Tensor<float> leaf({3}, true);
  CHECK(leaf.has_grad());
  CHECK(leaf.grad().size() == 3);
  CHECK_FALSE(Tensor<float>({3}).has_grad());
}

TEST_CASE("conv1d hand values") {
  // k=1, one channel, weight 2: [1,2,3] -> [2,4,6]
  Tensor<float> x({1, 1, 3}, {1, 2, 3});
  Tensor<float> w({1, 1, 1}, std::vector<float>{2});
  Tensor<float> b({1}, std::vector<float>{0});
  auto y = conv1d<float>(nullptr, x, w, b, Padding::Same);
  CHECK(std::vector<float>(y.data().begin(), y.data().end()) == std::vector<float>{2, 4, 6});

  // Same padding with k=3 on [1,2,3], kernel [1,1,1]: zero-padded window sums.
  Tensor<float> w3({1, 1, 3}, {1, 1, 1});
  auto s = conv1d<float>(nullptr, x, w3, b, Padding::Same);
  CHECK(std::vector<float>(s.data().begin(), s.data().end()) == std::vector<float>{3, 6, 5});
  auto v = conv1d<float>(nullptr, x, w3, b, Padding::Valid);
  CHECK(v.shape() == Shape{1, 1, 1});
  CHECK(v.data()[0] == 6.0f);
}

TEST_CASE("conv1d shapes and zero kernel") {
  Tensor<float> x({1, 2, 128});
  for (float& v : x.data()) v = 0.7f;
  Tensor<float> w({32, 2, 1});
  Tensor<float> b({32});
  for (std::size_t c = 0; c < 32; ++c) b.data()[c] = static_cast<float>(c) - 3.0f;
  auto y = conv1d<float>(nullptr, x, w, b, Padding::Same);
  CHECK(y.shape() == Shape{1, 32, 128});
  for (std::size_t c = 0; c < 32; ++c)
    for (std::size_t l = 0; l < 128; ++l) CHECK(y.data()[c * 128 + l] == b.data()[c]);

  Tensor<float> bad({4, 3, 3});
  CHECK_THROWS_AS(conv1d<float>(nullptr, x, bad, Tensor<float>({4}), Padding::Same), ShapeError);
  Tensor<float> wide({1, 2, 200});
  CHECK_THROWS_AS(conv1d<float>(nullptr, x, wide, Tensor<float>({1}), Padding::Valid), ShapeError);
}

TEST_CASE("conv1d matches a direct reference") {
  Rng rng(3);
  Tensor<double> x({3, 5, 17});
  Tensor<double> w({6, 5, 3});
  Tensor<double> b({6});
  for (auto* t : {&x, &w, &b})
    for (double& v : t->data()) v = rng.uniform(-1, 1);
  auto y = conv1d<double>(nullptr, x, w, b, Padding::Same);
  for (std::size_t n = 0; n < 3; ++n)
    for (std::size_t co = 0; co < 6; ++co)
      for (std::size_t l = 0; l < 17; ++l) {
        double ref = b.data()[co];
        for (std::size_t ci = 0; ci < 5; ++ci)
          for (std::size_t t = 0; t < 3; ++t) {
            const long src = static_cast<long>(l + t) - 1;
            if (src < 0 || src >= 17) continue;
            ref += w.data()[(co * 5 + ci) * 3 + t] * x.data()[(n * 5 + ci) * 17 + src];
          }
        CHECK(y.data()[(n * 6 + co) * 17 + l] == doctest::Approx(ref).epsilon(1e-12));
      }
}

TEST_CASE("linear hand values") {
  Tensor<float> x({1, 2}, {1, 1});
  Tensor<float> w({1, 2}, {1, 1});
  Tensor<float> b({1}, std::vector<float>{0.5f});
  CHECK(linear<float>(nullptr, x, w, b).item() == doctest::Approx(2.5));

  Tensor<float> id({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  Tensor<float> in({2, 3}, {1, -2, 3, 4, 5, -6});
  auto out = linear<float>(nullptr, in, id, Tensor<float>({3}));
  CHECK(std::equal(out.data().begin(), out.data().end(), in.data().begin()));

  auto empty = linear<float>(nullptr, Tensor<float>({0, 3}), id, Tensor<float>({3}));
  CHECK(empty.shape() == Shape{0, 3});
  CHECK_THROWS_AS(linear<float>(nullptr, Tensor<float>({1, 4}), id, Tensor<float>({3})),
                  ShapeError);
}

TEST_CASE("pointwise and pooling values") {
  Tensor<float> z({1}, std::vector<float>{0});
  CHECK(sigmoid<float>(nullptr, z).item() == 0.5f);
  Tensor<float> big({2}, {-1000, 1000});
  auto s = sigmoid<float>(nullptr, big);
  CHECK(s.data()[0] == 0.0f);
  CHECK(s.data()[1] == 1.0f);

  Tensor<float> g({1, 1, 4}, {1, 2, 3, 4});
  CHECK(gap<float>(nullptr, g).item() == 2.5f);

  Tensor<float> p({1, 1, 4}, {3, 1, 4, 1});
  auto m = maxpool1d<float>(nullptr, p);
  CHECK(m.shape() == Shape{1, 1, 2});
  CHECK(m.data()[0] == 3.0f);
  CHECK(m.data()[1] == 4.0f);

  Tensor<float> odd({1, 1, 5}, {1, 2, 3, 4, 9});
  CHECK(maxpool1d<float>(nullptr, odd).shape() == Shape{1, 1, 2});
  CHECK_THROWS_AS(gap<float>(nullptr, Tensor<float>({1, 1, 0})), ShapeError);

  Tensor<float> r({4}, {-1, 0, 2, -3});
  auto rr = relu<float>(nullptr, r);
  CHECK(std::vector<float>(rr.data().begin(), rr.data().end()) == std::vector<float>{0, 0, 2, 0});
  auto aa = abs<float>(nullptr, r);
  CHECK(std::vector<float>(aa.data().begin(), aa.data().end()) == std::vector<float>{1, 0, 2, 3});
}

TEST_CASE("maxpool routes ties to the lower index") {
  Tensor<double> x({1, 1, 4}, {2, 2, 5, 5}, true);
  Tape<double> tape;
  auto y = sum(&tape, maxpool1d(&tape, x));
  tape.backward(y);
  CHECK(std::vector<double>(x.grad().begin(), x.grad().end()) ==
        std::vector<double>{1, 0, 1, 0});
}

TEST_CASE("softmax and cross-entropy") {
  Tensor<double> logits({1, 2}, {0, 0});
  Tensor<double> target({1, 2}, {1, 0});
  CHECK(softmax_cross_entropy<double>(nullptr, logits, target).item() ==
        doctest::Approx(std::log(2.0)).epsilon(1e-12));

  auto u = softmax<double>(nullptr, Tensor<double>({1, 3}, {0, 0, 0}));
  for (double v : u.data()) CHECK(v == doctest::Approx(1.0 / 3.0));

  // Logits that reproduce the target exactly: loss equals the target entropy.
  Tensor<double> t({1, 3}, {0.2, 0.3, 0.5});
  Tensor<double> lz({1, 3}, {std::log(0.2), std::log(0.3), std::log(0.5)});
  const double entropy = -(0.2 * std::log(0.2) + 0.3 * std::log(0.3) + 0.5 * std::log(0.5));
  CHECK(softmax_cross_entropy<double>(nullptr, lz, t).item() ==
        doctest::Approx(entropy).epsilon(1e-12));

  Tensor<double> sharp({1, 2}, {50, -50});
  CHECK(softmax_cross_entropy<double>(nullptr, sharp, target).item() < 1e-40);

  CHECK_THROWS_AS(
      softmax_cross_entropy<double>(nullptr, logits, Tensor<double>({1, 2}, {0.6, 0.6})),
      InvalidArgument);
  CHECK_THROWS_AS(softmax_cross_entropy<double>(
                      nullptr, Tensor<double>({1, 2}, {NAN, 0}), target),
                  NonFiniteError);
  CHECK_THROWS(softmax_cross_entropy<double>(nullptr, Tensor<double>({1, 1}, std::vector<double>{0}),
                                             Tensor<double>({1, 1}, std::vector<double>{1})));
}

TEST_CASE("softmax rows are on the simplex") {
  Rng rng(11);
  Tensor<float> z({16, 7});
  for (float& v : z.data()) v = static_cast<float>(rng.uniform(-30, 30));
  auto p = softmax<float>(nullptr, z);
  for (std::size_t r = 0; r < 16; ++r) {
    double total = 0;
    for (std::size_t c = 0; c < 7; ++c) {
      const float v = p.data()[r * 7 + c];
      CHECK(v >= 0.0f);
      CHECK(v <= 1.0f);
      total += v;
    }
    CHECK(std::abs(total - 1.0) < 1e-6);
  }
}

TEST_CASE("gap is invariant under spatial permutation") {
  Rng rng(5);
  Tensor<double> x({2, 3, 16});
  for (double& v : x.data()) v = rng.uniform(-1, 1);
  Tensor<double> y = x.clone();
  std::vector<std::size_t> perm(16);
  std::iota(perm.begin(), perm.end(), 0);
  rng.shuffle(std::span<std::size_t>(perm));
  for (std::size_t row = 0; row < 6; ++row)
    for (std::size_t l = 0; l < 16; ++l) y.data()[row * 16 + l] = x.data()[row * 16 + perm[l]];
  auto a = gap<double>(nullptr, abs<double>(nullptr, x));
  auto b = gap<double>(nullptr, abs<double>(nullptr, y));
  for (std::size_t i = 0; i < a.numel(); ++i) {
    CHECK(a.data()[i] == doctest::Approx(b.data()[i]).epsilon(1e-15));
    CHECK(a.data()[i] >= 0.0);
  }
}

TEST_CASE("backward basics") {
  SUBCASE("sum gives ones") {
    Tensor<double> x({2, 3}, true);
    Tape<double> tape;
    tape.backward(sum(&tape, x));
    for (double g : x.grad()) CHECK(g == 1.0);
  }
  SUBCASE("sum of squares at 3 gives 6") {
    auto x = vec({3}, true);
    Tape<double> tape;
    tape.backward(sum(&tape, square(&tape, x)));
    CHECK(x.grad()[0] == 6.0);
  }
  SUBCASE("detached input gets no gradient") {
    auto x = vec({1, 2}, true);
    auto c = x.detach();
    Tape<double> tape;
    auto loss = sum(&tape, mul(&tape, x, c));
    tape.backward(loss);
    CHECK_FALSE(c.has_grad());
    CHECK(x.grad()[1] == 2.0);
  }
  SUBCASE("non-participating leaves keep their grad") {
    auto x = vec({1}, true);
    auto other = vec({4}, true);
    other.grad()[0] = 7.0;
    Tape<double> tape;
    tape.backward(sum(&tape, square(&tape, x)));
    CHECK(other.grad()[0] == 7.0);
  }
  SUBCASE("second backward and non-scalar loss are errors") {
    auto x = vec({1, 2}, true);
    Tape<double> tape;
    auto y = square(&tape, x);
    CHECK_THROWS_AS(tape.backward(y), ShapeError);
    auto loss = sum(&tape, y);
    tape.backward(loss);
    CHECK(tape.empty());
    CHECK_THROWS_AS(tape.backward(loss), TapeError);
  }
  SUBCASE("fan-out accumulates") {
    auto x = vec({2}, true);
    Tape<double> tape;
    auto y = add(&tape, x, x);
    tape.backward(sum(&tape, mul(&tape, y, x)));  // 2x^2 -> 4x
    CHECK(x.grad()[0] == 8.0);
  }
}

TEST_CASE("backward is bit-identical across runs") {
  Rng rng(9);
  Tensor<float> x0({2, 3, 16});
  Tensor<float> w0({4, 3, 3});
  for (float& v : x0.data()) v = static_cast<float>(rng.uniform(-1, 1));
  for (float& v : w0.data()) v = static_cast<float>(rng.uniform(-1, 1));
  auto run = [&] {
    Tensor<float> w = w0.clone();
    w.set_requires_grad(true);
    Tape<float> tape;
    auto y = conv1d(&tape, x0, w, Tensor<float>({4}), Padding::Same);
    tape.backward(sum(&tape, square(&tape, relu(&tape, y))));
    return std::vector<float>(w.grad().begin(), w.grad().end());
  };
  CHECK(run() == run());
}

TEST_CASE("finite difference checker") {
  Rng rng(2);
  Tensor<double> x({6});
  for (double& v : x.data()) v = rng.uniform(-2, 2);
  ScalarFn f = [](Tape<double>* t, const Tensor<double>& v) { return sum(t, square(t, v)); };
  CHECK(finite_diff_check(f, x).max_rel_error < 1e-6);

  ScalarFn constant = [](Tape<double>*, const Tensor<double>&) { return Tensor<double>::scalar(3.0); };
  auto r = finite_diff_check(constant, x);
  CHECK(r.max_rel_error == 0.0);

  ScalarFn wrong = [](Tape<double>* t, const Tensor<double>& v) { return square(t, v); };
  CHECK_THROWS_AS(finite_diff_check(wrong, x), ShapeError);
  CHECK_THROWS_AS(finite_diff_check(f, x, 1e-2), InvalidArgument);
}

TEST_CASE("adam") {
  SUBCASE("first step moves by about lr") {
    Tensor<double> p({3}, {1, -2, 0.5}, true);
    std::fill(p.grad().begin(), p.grad().end(), 1.0);
    AdamState<double> st;
    std::vector<Tensor<double>> params{p};
    adam_step<double>(params, st);
    CHECK(st.step_count == 1);
    // m_hat = g, v_hat = g^2: step = lr * g / (|g| + eps)
    const double step = 1e-3 * 1.0 / (1.0 + 1e-8);
    CHECK(p.data()[0] == doctest::Approx(1 - step).epsilon(1e-14));
    CHECK(p.data()[1] == doctest::Approx(-2 - step).epsilon(1e-14));
  }
  SUBCASE("scaled gradient gives the same first step") {
    Tensor<double> a({1}, {0}, true);
    Tensor<double> b({1}, {0}, true);
    a.grad()[0] = 0.3;
    b.grad()[0] = 3.0;
    AdamState<double> sa;
    AdamState<double> sb;
    std::vector<Tensor<double>> pa{a};
    std::vector<Tensor<double>> pb{b};
    adam_step<double>(pa, sa);
    adam_step<double>(pb, sb);
    CHECK(a.data()[0] == doctest::Approx(b.data()[0]).epsilon(1e-6));
  }
  SUBCASE("zero gradient leaves parameters unchanged") {
    Tensor<float> p({2}, {4, 5}, true);
    AdamState<float> st;
    std::vector<Tensor<float>> params{p};
    adam_step<float>(params, st);
    CHECK(p.data()[0] == 4.0f);
    CHECK(p.data()[1] == 5.0f);
  }
  SUBCASE("shape drift is rejected") {
    AdamState<float> st;
    std::vector<Tensor<float>> first{Tensor<float>({2}, true)};
    adam_step<float>(first, st);
    std::vector<Tensor<float>> second{Tensor<float>({3}, true)};
    CHECK_THROWS_AS(adam_step<float>(second, st), ShapeError);
  }
}
