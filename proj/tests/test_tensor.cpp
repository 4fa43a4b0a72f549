#include <catch2/catch_amalgamated.hpp>

#include "edgenav/gradcheck.hpp"
#include "edgenav/nn.hpp"
#include "edgenav/ops.hpp"
#include "oracles.hpp"

using namespace edgenav;

namespace {

Tensor random_tensor(Shape shape, Rng& rng, bool rg = true, double lo = -1.0,
                     double hi = 1.0) {
  Tensor t = Tensor::zeros(std::move(shape), rg);
  for (auto& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

// Builds the loss, runs backward, and compares every leaf's analytic gradient
// against central finite differences.
template <class F>
void expect_gradcheck(F&& make_loss, std::vector<Tensor> leaves, double tol = 1e-6) {
  for (auto& l : leaves) l.zero_grad();
  Tensor loss = make_loss();
  backward(loss);
  for (auto& l : leaves) {
    Tensor fd = finite_diff_grad([&](const Tensor&) { return make_loss().item(); }, l);
    double err = grad_max_rel_err(l.grad(), fd.data());
    INFO("leaf shape " << shape_str(l.shape()) << " rel err " << err);
    REQUIRE(err < tol);
  }
}

}  // namespace

TEST_CASE("conv2d hand examples", "[tensor][conv]") {
  Tensor x = Tensor::full({1, 1, 3, 3}, 1.0);
  Tensor k = Tensor::full({1, 1, 3, 3}, 1.0);
  Tensor y = conv2d(x, k, Tensor(), 1, 0, 1);
  REQUIRE(y.shape() == Shape{1, 1, 1, 1});
  REQUIRE(y.item() == Catch::Approx(9.0));

  Rng rng(7);
  Tensor img = random_tensor({2, 3, 5, 5}, rng, false);
  Tensor id = Tensor::full({3, 1, 1, 1}, 1.0);
  Tensor same = conv2d(img, id, Tensor(), 1, 0, 3);  // identity 1x1 depthwise
  auto a = img.data();
  auto b = same.data();
  for (size_t i = 0; i < a.size(); ++i) REQUIRE(b[i] == Catch::Approx(a[i]));
}

TEST_CASE("conv2d matches quadruple-loop oracle", "[tensor][conv]") {
  Rng rng(11);
  struct Case {
    Shape x, w;
    int64_t stride, pad, groups;
  };
  const Case cases[] = {
      {{1, 2, 5, 5}, {2, 1, 3, 3}, 1, 0, 2},
      {{2, 4, 6, 7}, {6, 4, 3, 3}, 1, 1, 1},
      {{1, 4, 8, 8}, {4, 1, 3, 3}, 1, 1, 4},
      {{2, 3, 9, 9}, {5, 3, 4, 4}, 2, 1, 1},
      {{1, 6, 6, 6}, {4, 3, 1, 1}, 1, 0, 2},
      {{2, 3, 8, 8}, {8, 3, 4, 4}, 4, 0, 1},
  };
  for (const auto& c : cases) {
    Tensor x = random_tensor(c.x, rng, false);
    Tensor w = random_tensor(c.w, rng, false);
    Tensor bias = random_tensor({c.w[0]}, rng, false);
    Tensor got = conv2d(x, w, bias, c.stride, c.pad, c.groups);
    Tensor want = oracles::conv2d_naive(x, w, bias, c.stride, c.pad, c.groups);
    REQUIRE(got.shape() == want.shape());
    auto g = got.data();
    auto e = want.data();
    for (size_t i = 0; i < g.size(); ++i)
      REQUIRE(g[i] == Catch::Approx(e[i]).margin(1e-12));
  }
}

TEST_CASE("conv2d groups=C equals per-channel convolutions", "[tensor][conv]") {
  Rng rng(13);
  const int64_t c = 4;
  Tensor x = random_tensor({2, c, 6, 6}, rng, false);
  Tensor w = random_tensor({c, 1, 3, 3}, rng, false);
  Tensor full = conv2d(x, w, Tensor(), 1, 1, c);
  for (int64_t ch = 0; ch < c; ++ch) {
    Tensor xs = narrow_channels(x, ch, 1);
    Tensor ws = Tensor::from_data({1, 1, 3, 3},
                                  {w.data().begin() + ch * 9, w.data().begin() + (ch + 1) * 9});
    Tensor ys = conv2d(xs, ws, Tensor(), 1, 1, 1);
    Tensor ref = narrow_channels(full, ch, 1);
    auto yd = ys.data();
    auto rd = ref.data();
    for (size_t i = 0; i < yd.size(); ++i)
      REQUIRE(yd[i] == Catch::Approx(rd[i]).margin(1e-14));
  }
}

TEST_CASE("conv2d shape errors name the offending axes", "[tensor][conv]") {
  Tensor x = Tensor::zeros({1, 3, 5, 5});
  Tensor w = Tensor::zeros({4, 2, 3, 3});
  REQUIRE_THROWS_AS(conv2d(x, w, Tensor(), 1, 0, 1), DimensionError);
  try {
    conv2d(x, w, Tensor(), 1, 0, 1);
  } catch (const DimensionError& e) {
    std::string msg = e.what();
    REQUIRE(msg.find("axis 1") != std::string::npos);
  }
  REQUIRE_THROWS_AS(conv2d(x, Tensor::zeros({4, 3, 3, 3}), Tensor(), 1, 0, 2),
                    DimensionError);
}

TEST_CASE("channel_shuffle permutation semantics", "[tensor][shuffle]") {
  Rng rng(3);
  Tensor x = random_tensor({1, 4, 2, 2}, rng, false);
  Tensor same = channel_shuffle(x, 1);
  for (size_t i = 0; i < x.data().size(); ++i) REQUIRE(same.data()[i] == x.data()[i]);

  // C=4, groups=2: [c0,c1,c2,c3] -> [c0,c2,c1,c3]
  Tensor marks = Tensor::zeros({1, 4, 1, 1});
  for (int i = 0; i < 4; ++i) marks.data()[i] = i;
  Tensor shuffled = channel_shuffle(marks, 2);
  REQUIRE(shuffled.data()[0] == 0.0);
  REQUIRE(shuffled.data()[1] == 2.0);
  REQUIRE(shuffled.data()[2] == 1.0);
  REQUIRE(shuffled.data()[3] == 3.0);

  // inverse: shuffle(shuffle(x, 2), C/2) == x for C=8
  Tensor big = random_tensor({2, 8, 3, 3}, rng, false);
  Tensor round = channel_shuffle(channel_shuffle(big, 2), 4);
  for (size_t i = 0; i < big.data().size(); ++i)
    REQUIRE(round.data()[i] == big.data()[i]);

  // permutation preserves the multiset of channel slices
  Tensor once = channel_shuffle(big, 4);
  std::vector<std::vector<double>> in_slices, out_slices;
  for (int64_t c = 0; c < 8; ++c) {
    auto bd = big.data(), od = once.data();
    in_slices.emplace_back(bd.begin() + c * 9, bd.begin() + (c + 1) * 9);
    out_slices.emplace_back(od.begin() + c * 9, od.begin() + (c + 1) * 9);
  }
  std::sort(in_slices.begin(), in_slices.end());
  std::sort(out_slices.begin(), out_slices.end());
  REQUIRE(in_slices == out_slices);

  REQUIRE_THROWS_AS(channel_shuffle(Tensor::zeros({1, 5, 2, 2}), 2), DimensionError);
}

TEST_CASE("backward basics", "[tensor][autodiff]") {
  Rng rng(5);
  SECTION("loss = sum(x) gives all-ones gradient") {
    Tensor x = random_tensor({2, 3}, rng);
    backward(sum(x));
    for (double g : x.grad()) REQUIRE(g == 1.0);
  }
  SECTION("loss = sum(x*x) gives 2x") {
    Tensor x = random_tensor({7}, rng);
    backward(sum(mul(x, x)));
    for (size_t i = 0; i < x.data().size(); ++i)
      REQUIRE(x.grad()[i] == Catch::Approx(2.0 * x.data()[i]));
  }
  SECTION("fan-out accumulates: sum(x)+sum(x) gives 2") {
    Tensor x = random_tensor({4}, rng);
    backward(add(sum(x), sum(x)));
    for (double g : x.grad()) REQUIRE(g == 2.0);
  }
  SECTION("non-scalar loss refused") {
    Tensor x = random_tensor({3}, rng);
    REQUIRE_THROWS_AS(backward(x), ContractError);
  }
}

TEST_CASE("finite_diff_grad trivials", "[tensor][gradcheck]") {
  Rng rng(17);
  Tensor x = random_tensor({5}, rng, false);
  Tensor g = finite_diff_grad([](const Tensor& t) {
    double acc = 0;
    for (double v : t.data()) acc += v;
    return acc;
  }, x);
  for (double v : g.data()) REQUIRE(v == Catch::Approx(1.0).margin(1e-9));

  Tensor x2 = Tensor::from_data({2}, {1.0, 2.0});
  Tensor g2 = finite_diff_grad([](const Tensor& t) {
    double acc = 0;
    for (double v : t.data()) acc += v * v;
    return acc;
  }, x2);
  REQUIRE(g2.data()[0] == Catch::Approx(2.0).margin(1e-6));
  REQUIRE(g2.data()[1] == Catch::Approx(4.0).margin(1e-6));
}

TEST_CASE("analytic gradients match finite differences per op", "[tensor][gradcheck]") {
  Rng rng(23);
  SECTION("elementwise arithmetic") {
    Tensor a = random_tensor({3, 4}, rng);
    Tensor b = random_tensor({3, 4}, rng, true, 0.5, 1.5);
    expect_gradcheck([&] { return sum(mul(add(a, b), sub(a, b))); }, {a, b});
    expect_gradcheck([&] { return sum(div(a, b)); }, {a, b});
    expect_gradcheck([&] { return mean(mul(scale(a, 3.0), add_scalar(b, -0.25))); },
                     {a, b});
  }
  SECTION("unary functions") {
    Tensor a = random_tensor({2, 5}, rng);
    expect_gradcheck([&] { return sum(exp(a)); }, {a});
    expect_gradcheck([&] { return sum(silu(a)); }, {a});
    expect_gradcheck([&] { return sum(sigmoid(a)); }, {a});
    expect_gradcheck([&] { return sum(softplus(a)); }, {a});
    expect_gradcheck([&] { return sum(tanh(a)); }, {a});
    Tensor pos = random_tensor({6}, rng, true, 0.5, 2.0);
    expect_gradcheck([&] { return sum(log(pos)); }, {pos});
    expect_gradcheck([&] { return sum(abs(a)); }, {a});
  }
  SECTION("min/max") {
    Tensor a = random_tensor({8}, rng);
    Tensor b = random_tensor({8}, rng);
    expect_gradcheck([&] { return sum(maximum(a, b)); }, {a, b});
    expect_gradcheck([&] { return sum(minimum(a, b)); }, {a, b});
  }
  SECTION("matmul / linear / transpose") {
    Tensor a = random_tensor({3, 4}, rng);
    Tensor b = random_tensor({4, 2}, rng);
    expect_gradcheck([&] { return sum(matmul(a, b)); }, {a, b});
    Tensor w = random_tensor({5, 4}, rng);
    Tensor bias = random_tensor({5}, rng);
    expect_gradcheck([&] { return sum(mul(linear(a, w, bias), linear(a, w, bias))); },
                     {a, w, bias});
    expect_gradcheck([&] { return sum(mul(transpose2d(a), transpose2d(a))); }, {a});
  }
  SECTION("channel_matmul") {
    Tensor x = random_tensor({2, 3, 5}, rng);
    Tensor w = random_tensor({4, 3}, rng);
    Tensor bias = random_tensor({4}, rng);
    expect_gradcheck([&] {
      auto y = channel_matmul(x, w, bias);
      return sum(mul(y, y));
    }, {x, w, bias});
  }
  SECTION("conv2d") {
    Tensor x = random_tensor({2, 4, 5, 5}, rng);
    Tensor w = random_tensor({6, 2, 3, 3}, rng);
    Tensor bias = random_tensor({6}, rng);
    expect_gradcheck([&] {
      auto y = conv2d(x, w, bias, 2, 1, 2);
      return sum(mul(y, y));
    }, {x, w, bias}, 1e-5);
    Tensor dw = random_tensor({4, 1, 3, 3}, rng);
    expect_gradcheck([&] {
      auto y = conv2d(x, dw, Tensor(), 1, 1, 4);
      return sum(mul(y, y));
    }, {x, dw}, 1e-5);
  }
  SECTION("softmax family") {
    Tensor a = random_tensor({4, 3}, rng);
    Tensor weights = random_tensor({4, 3}, rng, false);
    expect_gradcheck([&] { return sum(mul(softmax_lastdim(a), weights)); }, {a});
    expect_gradcheck([&] { return sum(mul(log_softmax_lastdim(a), weights)); }, {a});
  }
  SECTION("layer norm") {
    Tensor x = random_tensor({2, 5, 3, 3}, rng);
    Tensor gamma = random_tensor({5}, rng, true, 0.5, 1.5);
    Tensor beta = random_tensor({5}, rng);
    Tensor weights = random_tensor({2, 5, 3, 3}, rng, false);
    expect_gradcheck([&] {
      return sum(mul(layer_norm_channels(x, gamma, beta), weights));
    }, {x, gamma, beta}, 1e-5);
  }
  SECTION("structure ops") {
    Tensor x = random_tensor({2, 4, 4, 4}, rng);
    Tensor y = random_tensor({2, 2, 4, 4}, rng);
    expect_gradcheck([&] {
      auto cat = concat_channels<double>({x, y});
      auto sh = channel_shuffle(cat, 3);
      return sum(mul(sh, sh));
    }, {x, y});
    expect_gradcheck([&] {
      auto s = space_to_depth2(x);
      return sum(mul(s, s));
    }, {x});
    expect_gradcheck([&] {
      auto nr = narrow_channels(x, 1, 2);
      return sum(mul(nr, nr));
    }, {x});
    expect_gradcheck([&] {
      auto p = reduce_mean_pool(x);
      return sum(mul(p, p));
    }, {x});
    std::vector<int64_t> idx = {3, 0, 2, 1, 7, 5, 6, 4, 12, 9, 10, 11, 8, 13, 15, 14};
    expect_gradcheck([&] {
      auto r = reshape(x, {2, 4, 16});
      auto p = permute_last(r, idx);
      return sum(mul(p, p));
    }, {x});
  }
}

TEST_CASE("reduce_mean_pool values", "[tensor]") {
  Tensor c = Tensor::full({2, 3, 4, 4}, 2.5);
  Tensor p = reduce_mean_pool(c);
  for (double v : p.data()) REQUIRE(v == 2.5);

  Tensor x = Tensor::from_data({1, 1, 2, 2}, {1, 2, 3, 4});
  REQUIRE(reduce_mean_pool(x).item() == 2.5);

  Rng rng(31);
  Tensor r = random_tensor({2, 5, 3, 7}, rng, false);
  Tensor got = reduce_mean_pool(r);
  for (int64_t n = 0; n < 2; ++n)
    for (int64_t ch = 0; ch < 5; ++ch) {
      double acc = 0;
      for (int64_t s = 0; s < 21; ++s) acc += r.data()[(n * 5 + ch) * 21 + s];
      REQUIRE(got.data()[n * 5 + ch] == Catch::Approx(acc / 21.0).margin(1e-12));
    }
}

TEST_CASE("no-grad mode records nothing", "[tensor][autodiff]") {
  Rng rng(41);
  Tensor x = random_tensor({3}, rng);
  {
    NoGradGuard ng;
    Tensor y = mul(x, x);
    REQUIRE_FALSE(y.requires_grad());
    REQUIRE(y.node()->parents.empty());
  }
}

TEST_CASE("adam performs a descent step", "[nn]") {
  Rng rng(43);
  Tensor w = random_tensor({4}, rng);
  ParamMap<double> pm;
  pm.add("w", w);
  Adam<double> opt(pm, 0.1);
  double before = sum(mul(w, w)).item();
  for (int i = 0; i < 20; ++i) {
    opt.zero_grad();
    backward(sum(mul(w, w)));
    opt.step();
  }
  double after = sum(mul(w, w)).item();
  REQUIRE(after < before);
}
