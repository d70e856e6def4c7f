// Copyright 2026 The taskaug Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <cmath>
#include <limits>
#include <sstream>

#include "doctest.h"
#include "gradcheck.hpp"
#include "taskaug/autodiff.hpp"
#include "taskaug/error.hpp"
#include "taskaug/params.hpp"

using namespace taskaug;
using taskaug::testing::check_gradients;
using taskaug::testing::random_tensor;

TEST_CASE("relu clamps negatives") {
  ad::Graph g;
  auto y = ad::relu(g.constant(Tensor::vector({-1, 0, 2})));
  CHECK(y.value() == Tensor::vector({0, 0, 2}));
}

TEST_CASE("mse of a tensor with itself is zero") {
  std::mt19937_64 rng(1);
  ad::Graph g;
  auto x = g.constant(random_tensor({3, 7}, rng));
  CHECK(ad::mse(x, x).value().item() == 0.0f);
}

TEST_CASE("conv2d 5x5 ones with 3x3 ones, stride 1, pad 1") {
  ad::Graph g;
  auto x = g.constant(Tensor({1, 1, 5, 5}, 1.0f));
  auto w = g.constant(Tensor({1, 1, 3, 3}, 1.0f));
  auto y = ad::conv2d(x, w, std::nullopt, {.stride = 1, .pad = 1});
  REQUIRE(y.shape() == Shape{1, 1, 5, 5});
  CHECK(y.value()[12] == 9.0f);
  CHECK(y.value()[0] == 4.0f);  // corner sees a 2x2 window
  CHECK(y.value()[2] == 6.0f);
}

TEST_CASE("conv2d asymmetric padding keeps the 6x6 upsampled chain closed") {
  ad::Graph g;
  auto x = g.constant(Tensor({1, 2, 8, 8}, 1.0f));
  auto w = g.constant(Tensor({3, 2, 6, 6}, 1.0f));
  auto y = ad::conv2d(x, w, std::nullopt, {.stride = 1, .pad = 2, .pad_end = 3});
  CHECK(y.shape() == Shape{1, 3, 8, 8});
}

TEST_CASE("backward of sum(x*x) is 2x") {
  ad::Graph g;
  auto x = g.param(Tensor::vector({1, 2, 3}));
  g.backward(ad::sum(ad::mul(x, x)));
  CHECK(g.grad(x) == Tensor::vector({2, 4, 6}));
}

TEST_CASE("mse gradient vanishes at its minimum") {
  std::mt19937_64 rng(2);
  Tensor c = random_tensor({4, 5}, rng);
  ad::Graph g;
  auto x = g.param(c);
  g.backward(ad::mse(x, g.constant(c)));
  CHECK(g.grad(x) == Tensor({4, 5}, 0.0f));
}

TEST_CASE("two-layer MLP gradients agree with central differences") {
  std::mt19937_64 rng(3);
  auto build = [](ad::Graph&, const std::vector<ad::Var>& v) {
    auto h = ad::relu(ad::add(ad::matmul(v[0], v[1]), v[2]));
    return ad::mse(ad::add(ad::matmul(h, v[3]), v[4]), v[5]);
  };
  for (int trial = 0; trial < 5; ++trial) {
    auto res = check_gradients(build,
                               {random_tensor({4, 6}, rng), random_tensor({6, 8}, rng),
                                random_tensor({8}, rng), random_tensor({8, 3}, rng),
                                random_tensor({3}, rng), random_tensor({4, 3}, rng)},
                               rng);
    CHECK(res.ok());
  }
}

TEST_CASE("per-op gradient check, 20 random trials each") {
  std::mt19937_64 rng(4);
  // Inputs away from the relu kink so the central stencil stays on one side.
  auto away_from_zero = [&](Shape s) {
    Tensor t = random_tensor(std::move(s), rng);
    for (float& v : t.data()) v = v >= 0 ? v + 0.05f : v - 0.05f;
    return t;
  };
  struct Case {
    const char* name;
    testing::BuildFn fn;
    std::function<std::vector<Tensor>()> inputs;
  };
  std::vector<Case> cases = {
      {"matmul", [](ad::Graph&, auto& v) { return ad::matmul(v[0], v[1]); },
       [&] { return std::vector{random_tensor({3, 4}, rng), random_tensor({4, 2}, rng)}; }},
      {"add", [](ad::Graph&, auto& v) { return ad::add(v[0], v[1]); },
       [&] { return std::vector{random_tensor({3, 4}, rng), random_tensor({3, 4}, rng)}; }},
      {"add-bias", [](ad::Graph&, auto& v) { return ad::add(v[0], v[1]); },
       [&] { return std::vector{random_tensor({3, 4}, rng), random_tensor({4}, rng)}; }},
      {"mul", [](ad::Graph&, auto& v) { return ad::mul(v[0], v[1]); },
       [&] { return std::vector{random_tensor({5}, rng), random_tensor({5}, rng)}; }},
      {"relu", [](ad::Graph&, auto& v) { return ad::relu(v[0]); },
       [&] { return std::vector{away_from_zero({6})}; }},
      {"sigmoid", [](ad::Graph&, auto& v) { return ad::sigmoid(v[0]); },
       [&] { return std::vector{random_tensor({6}, rng, -3, 3)}; }},
      {"tanh", [](ad::Graph&, auto& v) { return ad::tanh(v[0]); },
       [&] { return std::vector{random_tensor({6}, rng, -2, 2)}; }},
      {"exp", [](ad::Graph&, auto& v) { return ad::exp(v[0]); },
       [&] { return std::vector{random_tensor({6}, rng)}; }},
      {"affine", [](ad::Graph&, auto& v) { return ad::affine(v[0], -2.5f, 0.3f); },
       [&] { return std::vector{random_tensor({6}, rng)}; }},
      {"conv2d", [](ad::Graph&, auto& v) {
         return ad::conv2d(v[0], v[1], v[2], {.stride = 2, .pad = 1});
       },
       [&] {
         return std::vector{random_tensor({2, 2, 6, 5}, rng), random_tensor({3, 2, 3, 3}, rng),
                            random_tensor({3}, rng)};
       }},
      {"conv2d-asym", [](ad::Graph&, auto& v) {
         return ad::conv2d(v[0], v[1], std::nullopt, {.stride = 1, .pad = 2, .pad_end = 3});
       },
       [&] { return std::vector{random_tensor({1, 1, 4, 4}, rng), random_tensor({2, 1, 6, 6}, rng)}; }},
      {"conv_transpose2d", [](ad::Graph&, auto& v) { return ad::conv_transpose2d(v[0], v[1], v[2], 2, 2); },
       [&] {
         return std::vector{random_tensor({2, 2, 3, 4}, rng), random_tensor({2, 3, 6, 6}, rng),
                            random_tensor({3}, rng)};
       }},
      {"upsample2x", [](ad::Graph&, auto& v) { return ad::upsample2x(v[0]); },
       [&] { return std::vector{random_tensor({1, 2, 3, 2}, rng)}; }},
      {"reshape", [](ad::Graph&, auto& v) { return ad::reshape(v[0], {6, 2}); },
       [&] { return std::vector{random_tensor({3, 4}, rng)}; }},
      {"slice", [](ad::Graph&, auto& v) { return ad::slice(v[0], 1, 1, 3); },
       [&] { return std::vector{random_tensor({3, 4, 2}, rng)}; }},
      {"sum", [](ad::Graph&, auto& v) { return ad::sum(v[0]); },
       [&] { return std::vector{random_tensor({3, 4}, rng)}; }},
      {"mse", [](ad::Graph&, auto& v) { return ad::mse(v[0], v[1]); },
       [&] { return std::vector{random_tensor({7}, rng), random_tensor({7}, rng)}; }},
      {"l2sq", [](ad::Graph&, auto& v) { return ad::l2sq(v[0]); },
       [&] { return std::vector{random_tensor({7}, rng)}; }},
  };
  for (auto& c : cases) {
    CAPTURE(c.name);
    int passed = 0;
    for (int trial = 0; trial < 20; ++trial) passed += check_gradients(c.fn, c.inputs(), rng).ok();
    CHECK(passed == 20);
  }
}

TEST_CASE("injected unit cotangent equals backward on a scalar") {
  auto run = [](bool inject) {
    ad::Graph g;
    auto x = g.param(Tensor::vector({0.3f, -1.2f, 2.0f}));
    auto y = ad::l2sq(ad::tanh(x));
    if (inject)
      ad::inject_external_gradient(g, y, Tensor::scalar(1.0f));
    else
      g.backward(y);
    return g.grad(x);
  };
  CHECK(run(true) == run(false));
}

TEST_CASE("injected zero cotangent gives zero upstream gradients") {
  std::mt19937_64 rng(5);
  ad::Graph g;
  auto w = g.param(random_tensor({3, 4}, rng));
  auto y = ad::matmul(g.constant(random_tensor({2, 3}, rng)), w);
  ad::inject_external_gradient(g, y, Tensor({2, 4}, 0.0f));
  CHECK(g.grad(w) == Tensor({3, 4}, 0.0f));
}

TEST_CASE("backward is linear in the loss") {
  std::mt19937_64 rng(6);
  Tensor x0 = random_tensor({5}, rng);
  auto grad_of = [&](float a, float b) {
    ad::Graph g;
    auto x = g.param(x0);
    auto l1 = ad::l2sq(ad::sigmoid(x));
    auto l2 = ad::sum(ad::exp(x));
    g.backward(ad::add(ad::affine(l1, a), ad::affine(l2, b)));
    return g.grad(x);
  };
  Tensor g1 = grad_of(1, 0), g2 = grad_of(0, 1), gab = grad_of(2.0f, -3.0f);
  for (std::size_t i = 0; i < x0.size(); ++i) CHECK(gab[i] == doctest::Approx(2 * g1[i] - 3 * g2[i]).epsilon(1e-6));
}

TEST_CASE("errors: shape mismatch names the op and both shapes") {
  ad::Graph g;
  auto a = g.constant(Tensor({2, 3}));
  auto b = g.constant(Tensor({2, 3}));
  try {
    ad::matmul(a, b);
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("matmul") != std::string::npos);
    CHECK(msg.find("[2,3]") != std::string::npos);
  }
  CHECK_THROWS_AS(ad::mul(a, g.constant(Tensor({3, 2}))), ShapeError);
  CHECK_THROWS_AS(ad::inject_external_gradient(g, a, Tensor({3})), ShapeError);
}

TEST_CASE("errors: non-finite inputs, non-scalar loss, double backward") {
  ad::Graph g;
  CHECK_THROWS_AS(g.constant(Tensor::vector({1.0f, std::numeric_limits<float>::quiet_NaN()})),
                  NumericError);
  auto x = g.param(Tensor::vector({1, 2}));
  CHECK_THROWS_AS(g.backward(x), ShapeError);
  auto l = ad::l2sq(x);
  g.backward(l);
  CHECK_THROWS_AS(g.backward(l), std::logic_error);
  CHECK_THROWS_AS(ad::exp(g.constant(Tensor::scalar(200.0f))), NumericError);
}

TEST_CASE("forward and backward are bit-identical across reruns") {
  auto run = [] {
    std::mt19937_64 rng(7);
    ad::Graph g;
    auto x = g.param(random_tensor({2, 1, 8, 8}, rng));
    auto w = g.param(random_tensor({4, 1, 3, 3}, rng));
    auto y = ad::sum(ad::relu(ad::conv2d(x, w, std::nullopt, {.stride = 2, .pad = 1})));
    g.backward(y);
    return std::pair{g.grad(x), g.grad(w)};
  };
  CHECK(run() == run());
}

TEST_CASE("ADVW checkpoint round trip and failure modes") {
  std::mt19937_64 rng(8);
  ParamStore p;
  p.add("enc.conv1.w", random_tensor({4, 1, 3, 3}, rng));
  p.add("enc.fc.b", random_tensor({20}, rng));
  std::stringstream ss;
  write_checkpoint(ss, p);
  const std::string bytes = ss.str();
  CHECK(bytes.substr(0, 4) == "ADVW");
  std::stringstream in(bytes);
  ParamStore q = read_checkpoint(in);
  CHECK(q == p);
  CHECK(q.checksum() == p.checksum());

  std::stringstream trunc(bytes.substr(0, bytes.size() - 3));
  try {
    read_checkpoint(trunc);
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("byte offset") != std::string::npos);
  }
  std::string bad = bytes;
  bad[4] = 9;
  std::stringstream badv(bad);
  CHECK_THROWS_AS(read_checkpoint(badv), DataError);
}

TEST_CASE("Adam descends a quadratic") {
  ParamStore p;
  p.add("x", Tensor::vector({3.0f, -2.0f}));
  Adam opt(p, {.lr = 0.1});
  for (int i = 0; i < 300; ++i) {
    ad::Graph g;
    auto vars = p.bind(g, true);
    g.backward(ad::l2sq(vars.at("x")));
    opt.step(p, {{"x", g.grad(vars.at("x"))}});
  }
  CHECK(std::abs(p.at("x")[0]) < 0.05f);
  CHECK(std::abs(p.at("x")[1]) < 0.05f);
}

TEST_CASE("transposed convolution matches direct scattering") {
  std::mt19937_64 rng(77);
  const Tensor x = random_tensor({2, 3, 4, 5}, rng);
  const Tensor w = random_tensor({3, 2, 6, 6}, rng);
  const Tensor b = random_tensor({2}, rng);
  ad::Graph g;
  const Tensor& y = ad::conv_transpose2d(g.constant(x), g.constant(w), g.constant(b), 2, 2).value();
  REQUIRE(y.shape() == Shape{2, 2, 8, 10});
  std::vector<double> ref(y.size(), 0.0);
  for (int n = 0; n < 2; ++n)
    for (int o = 0; o < 2; ++o)
      for (int i = 0; i < 8; ++i)
        for (int j = 0; j < 10; ++j) ref[static_cast<std::size_t>(((n * 2 + o) * 8 + i) * 10 + j)] = b[static_cast<std::size_t>(o)];
  for (int n = 0; n < 2; ++n)
    for (int c = 0; c < 3; ++c)
      for (int h = 0; h < 4; ++h)
        for (int ww = 0; ww < 5; ++ww)
          for (int o = 0; o < 2; ++o)
            for (int kh = 0; kh < 6; ++kh)
              for (int kw = 0; kw < 6; ++kw) {
                const int i = h * 2 + kh - 2, j = ww * 2 + kw - 2;
                if (i < 0 || i >= 8 || j < 0 || j >= 10) continue;
                ref[static_cast<std::size_t>(((n * 2 + o) * 8 + i) * 10 + j)] +=
                    x[static_cast<std::size_t>(((n * 3 + c) * 4 + h) * 5 + ww)] *
                    w[static_cast<std::size_t>(((c * 2 + o) * 6 + kh) * 6 + kw)];
              }
  for (std::size_t k = 0; k < y.size(); ++k) CHECK(y[k] == doctest::Approx(ref[k]).epsilon(1e-5));
}
