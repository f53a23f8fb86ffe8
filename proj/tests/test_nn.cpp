#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "isoface/gradcheck.hpp"
#include "isoface/nn.hpp"

using namespace isoface;

namespace {

Tensor random_tensor(std::vector<std::size_t> shape, std::uint64_t seed,
                     double lo = -1.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(lo, hi);
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = dist(rng);
  return t;
}

double dot(const Tensor& a, const Tensor& b) {
  double acc = 0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

}  // namespace

TEST_CASE("conv: pointwise depthwise identity") {
  std::mt19937_64 rng(1);
  Conv2d<double> conv("c", 3, 3, 1, 3, rng);
  conv.weight().value.fill(1.0);
  conv.bias().value.fill(0.0);
  Tensor x = random_tensor({3, 5, 5}, 2);
  Tensor y = conv.infer(x);
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(y[i] == x[i]);
}

TEST_CASE("conv: group independence") {
  std::mt19937_64 rng(2);
  Conv2d<double> conv("c", 4, 4, 3, 2, rng);
  Tensor x = random_tensor({4, 6, 6}, 3);
  Tensor y0 = conv.infer(x);
  conv.weight().value(0, 0, 0, 0) += 10.0;  // group 1 weight
  Tensor y1 = conv.infer(x);
  for (std::size_t c = 2; c < 4; ++c)  // group 2 outputs untouched
    for (std::size_t i = 0; i < 6; ++i)
      for (std::size_t j = 0; j < 6; ++j) CHECK(y0(c, i, j) == y1(c, i, j));
  bool changed = false;
  for (std::size_t i = 0; i < 6 && !changed; ++i)
    for (std::size_t j = 0; j < 6; ++j)
      if (y0(0, i, j) != y1(0, i, j)) {
        changed = true;
        break;
      }
  CHECK(changed);
}

TEST_CASE("conv: grouped equals independent per-slice convs") {
  std::mt19937_64 rng(4);
  Conv2d<double> grouped("g", 4, 6, 3, 2, rng);
  Tensor x = random_tensor({4, 5, 5}, 5);
  Tensor y = grouped.infer(x);

  for (std::size_t g = 0; g < 2; ++g) {
    std::mt19937_64 rng2(99);
    Conv2d<double> solo("s", 2, 3, 3, 1, rng2);
    for (std::size_t oc = 0; oc < 3; ++oc) {
      solo.bias().value[oc] = grouped.bias().value[g * 3 + oc];
      for (std::size_t ic = 0; ic < 2; ++ic)
        for (std::size_t a = 0; a < 3; ++a)
          for (std::size_t b = 0; b < 3; ++b)
            solo.weight().value(oc, ic, a, b) =
                grouped.weight().value(g * 3 + oc, ic, a, b);
    }
    Tensor xs({2, 5, 5});
    for (std::size_t c = 0; c < 2; ++c)
      for (std::size_t i = 0; i < 5; ++i)
        for (std::size_t j = 0; j < 5; ++j) xs(c, i, j) = x(g * 2 + c, i, j);
    Tensor ys = solo.infer(xs);
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t i = 0; i < 5; ++i)
        for (std::size_t j = 0; j < 5; ++j)
          CHECK(ys(c, i, j) == y(g * 3 + c, i, j));
  }
}

TEST_CASE("conv: analytic gradients match finite differences") {
  std::mt19937_64 rng(6);
  Conv2d<double> conv("c", 2, 4, 3, 2, rng);
  Tensor x = random_tensor({2, 6, 6}, 7);
  Tensor cot = random_tensor({4, 6, 6}, 8);

  conv.begin_sequence();
  conv.forward(x);
  zero_grad(ParamRefs<double>{&conv.weight(), &conv.bias()});
  Tensor dx = conv.backward(cot);

  auto f_of_x = [&](const Tensor& xx) { return dot(conv.infer(xx), cot); };
  CHECK(max_relative_error(dx, finite_diff_grad(f_of_x, x, 1e-5)) < 1e-4);

  Tensor w0 = conv.weight().value;
  auto f_of_w = [&](const Tensor& ww) {
    conv.weight().value = ww;
    double v = dot(conv.infer(x), cot);
    conv.weight().value = w0;
    return v;
  };
  CHECK(max_relative_error(conv.weight().grad,
                           finite_diff_grad(f_of_w, w0, 1e-5)) < 1e-4);

  Tensor b0 = conv.bias().value;
  auto f_of_b = [&](const Tensor& bb) {
    conv.bias().value = bb;
    double v = dot(conv.infer(x), cot);
    conv.bias().value = b0;
    return v;
  };
  CHECK(max_relative_error(conv.bias().grad,
                           finite_diff_grad(f_of_b, b0, 1e-5)) < 1e-4);
}

TEST_CASE("conv: rejects indivisible group counts") {
  std::mt19937_64 rng(1);
  CHECK_THROWS_AS(Conv2d<double>("c", 3, 4, 3, 2, rng), std::invalid_argument);
  CHECK_THROWS_AS(Conv2d<double>("c", 4, 3, 3, 2, rng), std::invalid_argument);
}

TEST_CASE("global average pool") {
  GlobalAvgPool<double> gap;
  Tensor c({3, 4, 4});
  for (std::size_t ch = 0; ch < 3; ++ch)
    for (std::size_t i = 0; i < 16; ++i) c.data()[ch * 16 + i] = double(ch);
  Tensor y = gap.infer(c);
  for (std::size_t ch = 0; ch < 3; ++ch) CHECK(y[ch] == double(ch));

  Tensor onehot({1, 4, 4});
  onehot(0, 2, 1) = 1.0;
  CHECK(gap.infer(onehot)[0] == doctest::Approx(1.0 / 16));

  Tensor x = random_tensor({2, 3, 5}, 11);
  Tensor cot = random_tensor({2}, 12);
  gap.begin_sequence();
  gap.forward(x);
  Tensor dx = gap.backward(cot);
  auto f = [&](const Tensor& xx) { return dot(gap.infer(xx), cot); };
  CHECK(max_relative_error(dx, finite_diff_grad(f, x, 1e-5)) < 1e-6);
}

TEST_CASE("dropout: identity cases, expectation, determinism") {
  Tensor x = random_tensor({4, 8, 8}, 13, 0.5, 1.5);

  Dropout<double> d0(0.0, 1);
  d0.begin_sequence();
  Tensor y0 = d0.forward(x, true);
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(y0[i] == x[i]);

  Dropout<double> dev(0.5, 1);
  dev.begin_sequence();
  Tensor ye = dev.forward(x, false);
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(ye[i] == x[i]);

  CHECK_THROWS_AS(Dropout<double>(1.0, 1), std::invalid_argument);

  // expectation over seeded draws
  Dropout<double> d(0.2, 77);
  Tensor acc(x.shape());
  const int n = 1000;
  for (int it = 0; it < n; ++it) {
    d.begin_sequence();
    acc += d.forward(x, true);
  }
  double num = 0, den = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    num += acc[i] / n;
    den += x[i];
  }
  CHECK(num / den == doctest::Approx(1.0).epsilon(0.02));

  // same seed, same masks
  Dropout<double> da(0.3, 5), db(0.3, 5);
  da.begin_sequence();
  db.begin_sequence();
  Tensor ya = da.forward(x, true), yb = db.forward(x, true);
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(ya[i] == yb[i]);
}

TEST_CASE("lstm: zero weights give zero final hidden") {
  std::mt19937_64 rng(20);
  LstmCell<double> cell("l", 3, 4, rng);
  cell.wx().value.fill(0.0);
  cell.wh().value.fill(0.0);
  cell.b().value.fill(0.0);
  std::vector<Tensor> xs = {random_tensor({3}, 1), random_tensor({3}, 2)};
  Tensor h = cell.sequence_forward(xs);
  for (auto v : h.data()) CHECK(v == 0.0);
}

TEST_CASE("lstm: length-1 sequence equals one step from zero state") {
  std::mt19937_64 rng(21);
  LstmCell<double> cell("l", 3, 5, rng);
  Tensor x = random_tensor({3}, 30);
  Tensor h_seq = cell.sequence_forward({x});
  Tensor h({5}), c({5});
  cell.step(x, h, c);
  for (std::size_t i = 0; i < 5; ++i) CHECK(h[i] == h_seq[i]);
  CHECK_THROWS_AS(cell.sequence_forward({}), std::invalid_argument);
}

TEST_CASE("lstm: BPTT gradients match finite differences") {
  std::mt19937_64 rng(22);
  LstmCell<double> cell("l", 3, 4, rng);
  std::vector<Tensor> xs = {random_tensor({3}, 1), random_tensor({3}, 2),
                            random_tensor({3}, 3)};
  Tensor cot = random_tensor({4}, 4);

  ParamRefs<double> params;
  cell.collect_params(params);
  zero_grad(params);
  cell.sequence_forward(xs);
  std::vector<Tensor> dxs = cell.sequence_backward(cot);

  auto run = [&]() { return dot(cell.sequence_forward(xs), cot); };
  for (Param<double>* p : params) {
    Tensor v0 = p->value;
    auto f = [&](const Tensor& vv) {
      p->value = vv;
      double r = run();
      p->value = v0;
      return r;
    };
    CHECK(max_relative_error(p->grad, finite_diff_grad(f, v0, 1e-5)) < 1e-4);
  }
  for (std::size_t t = 0; t < xs.size(); ++t) {
    auto f = [&](const Tensor& xx) {
      auto copy = xs;
      copy[t] = xx;
      return dot(cell.sequence_forward(copy), cot);
    };
    CHECK(max_relative_error(dxs[t], finite_diff_grad(f, xs[t], 1e-5)) < 1e-4);
  }
}

TEST_CASE("bidirectional: palindrome symmetry with tied weights") {
  std::mt19937_64 rng(23);
  BiLstm<double> bi("b", 3, 4, RnnFusion::kSum, rng);
  // tie the two streams
  bi.backward_cell().wx().value = bi.forward_cell().wx().value;
  bi.backward_cell().wh().value = bi.forward_cell().wh().value;
  bi.backward_cell().b().value = bi.forward_cell().b().value;
  Tensor a = random_tensor({3}, 1), b = random_tensor({3}, 2);
  std::vector<Tensor> pal = {a, b, a};  // palindrome
  Tensor fused = bi.forward(pal);
  Tensor one = bi.forward_cell().sequence_forward(pal);
  for (std::size_t i = 0; i < 4; ++i)
    CHECK(fused[i] == doctest::Approx(2.0 * one[i]).epsilon(1e-12));
}

TEST_CASE("bidirectional: cat dimension and gradient check") {
  std::mt19937_64 rng(24);
  BiLstm<double> bi("b", 3, 4, RnnFusion::kCat, rng);
  std::vector<Tensor> xs = {random_tensor({3}, 1), random_tensor({3}, 2),
                            random_tensor({3}, 3)};
  Tensor out = bi.forward(xs);
  CHECK(out.size() == 8);
  CHECK_THROWS_AS(bi.forward({}), std::invalid_argument);

  Tensor cot = random_tensor({8}, 9);
  ParamRefs<double> params;
  bi.collect_params(params);
  zero_grad(params);
  bi.forward(xs);
  std::vector<Tensor> dxs = bi.backward(cot);
  for (Param<double>* p : params) {
    Tensor v0 = p->value;
    auto f = [&](const Tensor& vv) {
      p->value = vv;
      double r = dot(bi.forward(xs), cot);
      p->value = v0;
      return r;
    };
    CHECK(max_relative_error(p->grad, finite_diff_grad(f, v0, 1e-5)) < 1e-4);
  }
  for (std::size_t t = 0; t < xs.size(); ++t) {
    auto f = [&](const Tensor& xx) {
      auto copy = xs;
      copy[t] = xx;
      return dot(bi.forward(copy), cot);
    };
    CHECK(max_relative_error(dxs[t], finite_diff_grad(f, xs[t], 1e-5)) < 1e-4);
  }
}

TEST_CASE("adam: no-op on zero gradient, first-step size, frozen params") {
  Param<double> p("p", {3});
  p.value.fill(1.0);
  Adam<double> opt(0.9, 0.999, 1e-8, 0.0);
  opt.step({&p}, 1e-2);
  for (auto v : p.value.data()) CHECK(v == 1.0);

  Param<double> q("q", {1});
  q.value[0] = 0.0;
  q.grad[0] = 3.7;  // constant gradient, any magnitude
  Adam<double> opt2;
  opt2.step({&q}, 1e-2);
  CHECK(q.value[0] == doctest::Approx(-1e-2).epsilon(1e-6));

  Param<double> frozen("f", {2});
  frozen.value.fill(0.5);
  frozen.grad.fill(1.0);
  frozen.lr_scale = 0.0;
  Adam<double> opt3(0.9, 0.999, 1e-8, 1e-2);
  opt3.step({&frozen}, 1e-2);
  CHECK(frozen.value[0] == 0.5);
  CHECK(frozen.value[1] == 0.5);

  CHECK_THROWS_AS(opt3.step({&frozen}, 0.0), std::invalid_argument);
}

TEST_CASE("adam: quadratic bowl converges") {
  Param<double> w("w", {1});
  w.value[0] = 1.0;
  Adam<double> opt;
  for (int it = 0; it < 200; ++it) {
    w.grad[0] = 2.0 * w.value[0];  // d/dw w^2
    opt.step({&w}, 1e-2);
  }
  // reference-implementation value at step 200 (torch.optim.Adam, lr 1e-2)
  CHECK(std::abs(w.value[0]) == doctest::Approx(0.0155725).epsilon(1e-4));
  for (int it = 0; it < 300; ++it) {
    w.grad[0] = 2.0 * w.value[0];
    opt.step({&w}, 1e-2);
  }
  CHECK(std::abs(w.value[0]) < 1e-3);
}

TEST_CASE("plateau scheduler") {
  std::vector<double> decreasing;
  for (int i = 0; i < 200; ++i) decreasing.push_back(1.0 - i * 1e-3);
  CHECK(plateau_scheduler(decreasing, 1e-3) == 1e-3);

  std::vector<double> flat(51, 1.0);
  CHECK(plateau_scheduler(flat, 1e-3) == doctest::Approx(1e-4));

  // two plateaus separated by an improvement
  std::vector<double> hist;
  hist.push_back(1.0);
  for (int i = 0; i < 50; ++i) hist.push_back(1.0);   // plateau 1 -> drop
  hist.push_back(0.5);                                 // new minimum
  for (int i = 0; i < 50; ++i) hist.push_back(0.6);   // plateau 2 -> drop
  CHECK(plateau_drops(hist) == 2);
  CHECK(plateau_scheduler(hist, 1e-3) == doctest::Approx(1e-5));

  // max_drops cap
  std::vector<double> forever(1000, 1.0);
  CHECK(plateau_drops(forever) == 3);
}
