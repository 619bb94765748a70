// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <functional>

#include "doctest.h"
#include "segattn/gradcheck.hpp"
#include "segattn/layers.hpp"
#include "segattn/optim.hpp"

using namespace segattn;

namespace {

using DT = BasicTensor<double>;

DT random_dt(Shape shape, Rng& rng, double bound = 1.0) {
  DT t(std::move(shape));
  for (auto& v : t.values()) v = rng.uniform(-bound, bound);
  return t;
}

// Central differences computed here rather than through grad_check, so the
// layer tests do not lean on the code they help verify.
std::vector<double> numeric_grad(const std::function<double()>& f, std::span<double> x, double delta = 1e-3) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + delta;
    const double up = f();
    x[i] = keep - delta;
    const double down = f();
    x[i] = keep;
    g[i] = (up - down) / (2 * delta);
  }
  return g;
}

double max_rel(std::span<const double> a, std::span<const double> n) {
  double worst = 0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, relative_error(a[i], n[i], 1e-6));
  return worst;
}

double weighted_sum(std::span<const double> v, std::span<const double> r) {
  double s = 0;
  for (std::size_t i = 0; i < v.size(); ++i) s += v[i] * r[i];
  return s;
}

}  // namespace

TEST_CASE("rng is reproducible and forks independently") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
  Rng c(42);
  Rng child = c.fork();
  CHECK(child.next_u64() != Rng(42).next_u64());
  Rng d(3);
  for (int i = 0; i < 1000; ++i) {
    const double u = d.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    CHECK(d.below(7) < 7);
  }
}

TEST_CASE("tensor rejects zero extents and mismatched data") {
  CHECK_THROWS_AS(Tensor({0, 3}), DimensionError);
  CHECK_THROWS_AS(Tensor({2, 2}, std::vector<float>{1, 2, 3}), DimensionError);
  Tensor t({2, 3});
  CHECK_FALSE(t.has_grad());
  t.enable_grad();
  CHECK(t.has_grad());
  CHECK_THROWS_AS(t.reshape({4}), DimensionError);
}

TEST_CASE("affine examples") {
  const Tensor x({1, 2}, std::vector<float>{1, 2});
  const Tensor w({2, 1}, std::vector<float>{1, 0});
  const Tensor b({1}, std::vector<float>{0});
  CHECK(affine(x, w, b)(0, 0) == 1.0f);

  const Tensor zero({1, 2}, std::vector<float>{0, 0});
  const Tensor w2({2, 1}, std::vector<float>{7, -4});
  const Tensor b3({1}, std::vector<float>{3});
  CHECK(affine(zero, w2, b3)(0, 0) == 3.0f);

  CHECK_THROWS_AS(affine(Tensor({1, 3}), w, b), DimensionError);
}

TEST_CASE("affine matches a triple-loop oracle") {
  Rng rng(5);
  const DT x = random_dt({3, 4}, rng), w = random_dt({4, 2}, rng), b = random_dt({2}, rng);
  const DT y = affine(x, w, b);
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 2; ++j) {
      double acc = b[j];
      for (std::size_t k = 0; k < 4; ++k) acc += x(i, k) * w(k, j);
      CHECK(y(i, j) == doctest::Approx(acc).epsilon(1e-12));
    }
  }
}

TEST_CASE("affine backward matches finite differences") {
  Rng rng(6);
  DT x = random_dt({3, 4}, rng), w = random_dt({4, 2}, rng), b = random_dt({2}, rng);
  const DT r = random_dt({3, 2}, rng);
  auto f = [&] { return weighted_sum(affine(x, w, b).values(), r.values()); };
  x.enable_grad();
  w.enable_grad();
  b.enable_grad();
  affine_backward(r, x, w, b);
  CHECK(max_rel(x.grad(), numeric_grad(f, x.values())) < 1e-6);
  CHECK(max_rel(w.grad(), numeric_grad(f, w.values())) < 1e-6);
  CHECK(max_rel(b.grad(), numeric_grad(f, b.values())) < 1e-6);
}

TEST_CASE("activation fixed points and softmax") {
  CHECK(apply_scalar(Activation::kTanh, 0.0) == 0.0);
  CHECK(apply_scalar(Activation::kSigmoid, 0.0) == 0.5);
  CHECK(apply_scalar(Activation::kRelu, -1.0) == 0.0);
  const auto half = activation(Activation::kSoftmax, DT::vector({0, 0}));
  CHECK(half[0] == doctest::Approx(0.5));
  CHECK(half[1] == doctest::Approx(0.5));
  const auto s = activation(Activation::kSoftmax, DT::vector({1, 2, 3}));
  // exp-normalize evaluated by hand
  const double z = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
  CHECK(s[0] == doctest::Approx(std::exp(1.0) / z).epsilon(1e-12));
  CHECK(std::abs(s[0] - 0.09003) < 1e-5);
  CHECK(std::abs(s[1] - 0.24473) < 1e-5);
  CHECK(std::abs(s[2] - 0.66524) < 1e-5);
  CHECK_THROWS_AS(parse_activation("gelu"), ConfigError);
  CHECK(parse_activation("relu") == Activation::kRelu);
}

TEST_CASE("softmax rows sum to one") {
  Rng rng(8);
  const DT x = random_dt({20, 5}, rng, 30.0);
  const DT y = activation(Activation::kSoftmax, x);
  for (std::size_t r = 0; r < 20; ++r) {
    double s = 0;
    for (double v : y.row(r)) {
      CHECK(v > 0.0);
      CHECK(v < 1.0);
      s += v;
    }
    CHECK(std::abs(s - 1.0) < 1e-6);
  }
}

TEST_CASE("activation backward matches finite differences") {
  Rng rng(9);
  for (auto kind : {Activation::kTanh, Activation::kSigmoid, Activation::kRelu, Activation::kSoftmax}) {
    DT x = random_dt({3, 4}, rng);
    const DT r = random_dt({3, 4}, rng);
    auto f = [&] { return weighted_sum(activation(kind, x).values(), r.values()); };
    x.enable_grad();
    activation_backward(kind, activation(kind, x), r, x);
    CHECK(max_rel(x.grad(), numeric_grad(f, x.values())) < 1e-3);
  }
}

TEST_CASE("conv_rows examples") {
  // identity filter on dimension 0
  ConvFilters<double> id{1, DT({1, 1, 2}, std::vector<double>{1, 0}), DT({1})};
  const DT x({3, 2}, std::vector<double>{0.5, 9, 1.5, -9, 2.5, 4});
  const DT y = conv_rows(x, id, Activation::kRelu);
  CHECK(y(0, 0) == 0.5);
  CHECK(y(1, 0) == 1.5);
  CHECK(y(2, 0) == 2.5);

  ConvFilters<double> bias_only{3, DT({2, 3, 2}), DT({2}, 0.5)};
  const DT zeros({4, 2});
  const DT biased = conv_rows(zeros, bias_only, Activation::kRelu);
  for (double v : biased.values()) CHECK(v == 0.5);

  ConvFilters<double> tall{6, DT({1, 6, 2}), DT({1})};
  CHECK_THROWS_AS(conv_rows(zeros, tall, Activation::kRelu), ConfigError);
}

TEST_CASE("conv_rows matches a sliding-window oracle") {
  Rng rng(10);
  for (std::size_t h : {2u, 3u, 4u}) {
    const DT x = random_dt({5, 2}, rng);
    ConvFilters<double> f{h, random_dt({2, h, 2}, rng), random_dt({2}, rng)};
    const DT y = conv_rows(x, f, Activation::kIdentity);
    const long lo = static_cast<long>(h / 2);
    for (long k = 0; k < 5; ++k) {
      for (std::size_t l = 0; l < 2; ++l) {
        double acc = f.bias[l];
        for (long j = 0; j < static_cast<long>(h); ++j) {
          const long row = k - lo + j;
          if (row < 0 || row >= 5) continue;
          for (std::size_t c = 0; c < 2; ++c) acc += f.weight[(l * h + j) * 2 + c] * x(row, c);
        }
        CHECK(y(k, l) == doctest::Approx(acc).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("conv_rows backward matches finite differences") {
  Rng rng(11);
  DT x = random_dt({5, 3}, rng);
  ConvFilters<double> f{3, random_dt({2, 3, 3}, rng), random_dt({2}, rng)};
  const DT r = random_dt({5, 2}, rng);
  auto fn = [&] { return weighted_sum(conv_rows(x, f, Activation::kTanh).values(), r.values()); };
  x.enable_grad();
  f.weight.enable_grad();
  f.bias.enable_grad();
  conv_rows_backward(r, conv_rows(x, f, Activation::kTanh), x, f, Activation::kTanh);
  CHECK(max_rel(x.grad(), numeric_grad(fn, x.values())) < 1e-3);
  CHECK(max_rel(f.weight.grad(), numeric_grad(fn, f.weight.values())) < 1e-3);
  CHECK(max_rel(f.bias.grad(), numeric_grad(fn, f.bias.values())) < 1e-3);
}

TEST_CASE("max_over_rows") {
  const DT f({2, 2}, std::vector<double>{1, 5, 3, 2});
  const auto m = max_over_rows(f);
  CHECK(m.values[0] == 3);
  CHECK(m.values[1] == 5);
  const DT c({3, 4}, 2.5);
  const auto flat = max_over_rows(c);
  for (double v : flat.values.values()) CHECK(v == 2.5);

  // ties go to the first row, and each column gets exactly one gradient entry
  DT tie({3, 4}, 2.5);
  tie.enable_grad();
  max_over_rows_backward(DT({4}, 1.0), max_over_rows(tie), tie);
  for (std::size_t col = 0; col < 4; ++col) {
    CHECK(tie.grad()[col] == 1.0);
    CHECK(tie.grad()[4 + col] == 0.0);
    CHECK(tie.grad()[8 + col] == 0.0);
  }

  Rng rng(12);
  DT x = random_dt({6, 3}, rng);
  auto sum = [&] {
    double s = 0;
    const auto pooled = max_over_rows(x);
    for (double v : pooled.values.values()) s += v;
    return s;
  };
  x.enable_grad();
  max_over_rows_backward(DT({3}, 1.0), max_over_rows(x), x);
  CHECK(max_rel(x.grad(), numeric_grad(sum, x.values())) < 1e-3);
}

TEST_CASE("dropout") {
  Rng rng(13);
  const Tensor x({10000}, 1.0f);
  CHECK(dropout(x, 0.0, Mode::kTrain, rng).out == x);
  CHECK(dropout(x, 0.5, Mode::kInfer, rng).out == x);
  const auto d = dropout(x, 0.25, Mode::kTrain, rng);
  std::size_t survivors = 0;
  for (float v : d.out.values()) {
    if (v != 0.0f) {
      ++survivors;
      CHECK(v == doctest::Approx(1.0 / 0.75));
    }
  }
  const double frac = static_cast<double>(survivors) / 10000.0;
  CHECK(frac >= 0.72);
  CHECK(frac <= 0.78);
  CHECK_THROWS_AS(dropout(x, 1.0, Mode::kTrain, rng), ConfigError);
  CHECK_THROWS_AS(dropout(x, -0.1, Mode::kTrain, rng), ConfigError);
}

TEST_CASE("lstm_step fixed points") {
  Rng rng(14);
  auto p = LstmCellParams<double>::init(3, 4, rng);
  p.w_input.fill(0);
  p.w_recurrent.fill(0);
  p.bias.fill(0);
  const std::vector<double> x{0.3, -0.2, 0.9}, h0(4, 0.0), c0(4, 0.0);
  const auto zero = lstm_step<double>(x, h0, c0, p);
  for (double v : zero.h) CHECK(v == 0.0);
  for (double v : zero.c) CHECK(v == 0.0);

  // forget gate saturated open, input gate shut: the cell just remembers
  for (std::size_t j = 0; j < 4; ++j) {
    p.bias[4 + j] = 20.0;
    p.bias[j] = -20.0;
  }
  const std::vector<double> c_prev{0.7, -1.2, 0.1, 2.0};
  const auto mem = lstm_step<double>(x, h0, c_prev, p);
  for (std::size_t j = 0; j < 4; ++j) CHECK(mem.c[j] == doctest::Approx(c_prev[j]).epsilon(1e-6));
}

TEST_CASE("lstm_step backward matches finite differences") {
  Rng rng(15);
  auto p = LstmCellParams<double>::init(3, 4, rng);
  for (auto* t : {&p.w_input, &p.w_recurrent, &p.bias}) {
    for (auto& v : t->values()) v = rng.uniform(-0.5, 0.5);
  }
  DT x = random_dt({3}, rng), h = random_dt({4}, rng), c = random_dt({4}, rng);
  const DT rh = random_dt({4}, rng), rc = random_dt({4}, rng);
  auto f = [&] {
    const auto s = lstm_step<double>(x.values(), h.values(), c.values(), p);
    return weighted_sum(s.h, rh.values()) + weighted_sum(s.c, rc.values());
  };
  p.w_input.enable_grad();
  p.w_recurrent.enable_grad();
  p.bias.enable_grad();
  std::vector<double> dx(3), dh(4), dc(4);
  lstm_step_backward<double>(lstm_step<double>(x.values(), h.values(), c.values(), p), p, rh.values(), rc.values(),
                             dx, dh, dc);
  CHECK(max_rel(p.w_input.grad(), numeric_grad(f, p.w_input.values())) < 1e-3);
  CHECK(max_rel(p.w_recurrent.grad(), numeric_grad(f, p.w_recurrent.values())) < 1e-3);
  CHECK(max_rel(p.bias.grad(), numeric_grad(f, p.bias.values())) < 1e-3);
  CHECK(max_rel(dx, numeric_grad(f, x.values())) < 1e-3);
  CHECK(max_rel(dh, numeric_grad(f, h.values())) < 1e-3);
  CHECK(max_rel(dc, numeric_grad(f, c.values())) < 1e-3);
}

TEST_CASE("bilstm shape, length-one and palindrome symmetry") {
  Rng rng(16);
  BiLstmParams<double> p{LstmCellParams<double>::init(3, 4, rng), LstmCellParams<double>::init(3, 4, rng)};
  const RecurrentDropout none;
  for (std::size_t k : {1u, 2u, 5u}) {
    const auto tr = bilstm_run(random_dt({k, 3}, rng), p, none, rng);
    CHECK(tr.output.shape() == Shape{k, 8});
  }

  const DT one = random_dt({1, 3}, rng);
  const auto tr1 = bilstm_run(one, p, none, rng);
  const std::vector<double> zero(4, 0.0);
  const auto f = lstm_step<double>(one.row(0), zero, zero, p.forward);
  const auto b = lstm_step<double>(one.row(0), zero, zero, p.backward);
  for (std::size_t j = 0; j < 4; ++j) {
    CHECK(tr1.output(0, j) == f.h[j]);
    CHECK(tr1.output(0, 4 + j) == b.h[j]);
  }

  BiLstmParams<double> same{p.forward, p.forward};
  DT pal({5, 3});
  const DT half = random_dt({3, 3}, rng);
  for (std::size_t t = 0; t < 3; ++t) {
    for (std::size_t c = 0; c < 3; ++c) {
      pal(t, c) = half(t, c);
      pal(4 - t, c) = half(t, c);
    }
  }
  const auto trp = bilstm_run(pal, same, none, rng);
  for (std::size_t t = 0; t < 5; ++t) {
    for (std::size_t j = 0; j < 4; ++j) CHECK(trp.output(t, j) == doctest::Approx(trp.output(4 - t, 4 + j)));
  }

  CHECK_THROWS_AS(bilstm_run(DT({2, 5}), p, none, rng), DimensionError);
}

TEST_CASE("bilstm backward matches finite differences") {
  Rng rng(17);
  BiLstmParams<double> p{LstmCellParams<double>::init(3, 4, rng), LstmCellParams<double>::init(3, 4, rng)};
  for (auto* cell : {&p.forward, &p.backward}) {
    for (auto* t : {&cell->w_input, &cell->w_recurrent, &cell->bias}) {
      for (auto& v : t->values()) v = rng.uniform(-0.5, 0.5);
      t->enable_grad();
    }
  }
  DT seq = random_dt({4, 3}, rng);
  const DT r = random_dt({4, 8}, rng);
  const RecurrentDropout none;
  auto f = [&] { return weighted_sum(bilstm_run(seq, p, none, rng).output.values(), r.values()); };
  const DT dseq = bilstm_backward(bilstm_run(seq, p, none, rng), p, r);
  CHECK(max_rel(dseq.values(), numeric_grad(f, seq.values())) < 1e-3);
  for (auto* cell : {&p.forward, &p.backward}) {
    CHECK(max_rel(cell->w_input.grad(), numeric_grad(f, cell->w_input.values())) < 1e-3);
    CHECK(max_rel(cell->w_recurrent.grad(), numeric_grad(f, cell->w_recurrent.values())) < 1e-3);
    CHECK(max_rel(cell->bias.grad(), numeric_grad(f, cell->bias.values())) < 1e-3);
  }
}

TEST_CASE("bilstm train-mode dropout masks are fixed within a run") {
  Rng rng(18);
  BiLstmParams<double> p{LstmCellParams<double>::init(3, 4, rng), LstmCellParams<double>::init(3, 4, rng)};
  const DT seq = random_dt({4, 3}, rng);
  const RecurrentDropout drop{0.25, 0.25, Mode::kTrain};
  Rng a(99), b(99);
  const auto ta = bilstm_run(seq, p, drop, a);
  const auto tb = bilstm_run(seq, p, drop, b);
  CHECK(ta.output == tb.output);
  CHECK(ta.fwd.input_mask.size() == 3);
  CHECK(ta.fwd.state_mask.size() == 4);
}

TEST_CASE("adadelta") {
  AdaDeltaState<float> st(1, 0.95, 1e-6);
  Tensor p({1}, 2.0f);
  const std::vector<float> one{1.0f};
  adadelta_step<float>(p, one, st, "w");
  const double expected = -std::sqrt(1e-6) / std::sqrt(0.05 + 1e-6);
  CHECK(std::abs(expected - (-0.004472)) < 1e-6);
  CHECK(p[0] - 2.0f == doctest::Approx(expected).epsilon(1e-4));

  // zero gradient: parameter fixed, accumulators decay by rho
  const float eg = st.mean_sq_grad[0], ed = st.mean_sq_update[0], before = p[0];
  const std::vector<float> zero{0.0f};
  adadelta_step<float>(p, zero, st, "w");
  CHECK(p[0] == before);
  CHECK(st.mean_sq_grad[0] == doctest::Approx(0.95 * eg));
  CHECK(st.mean_sq_update[0] == doctest::Approx(0.95 * ed));

  // updates oppose the gradient sign
  Rng rng(19);
  AdaDeltaState<float> s2(50, 0.95, 1e-6);
  Tensor q({50});
  std::vector<float> g(50);
  for (auto& v : g) v = static_cast<float>(rng.uniform(-2, 2));
  const Tensor q0 = q;
  adadelta_step<float>(q, g, s2, "q");
  for (std::size_t i = 0; i < 50; ++i) {
    if (g[i] > 0) CHECK(q[i] < q0[i]);
    if (g[i] < 0) CHECK(q[i] > q0[i]);
  }

  const std::vector<float> bad{NAN};
  try {
    adadelta_step<float>(p, bad, st, "head.out.weight");
    FAIL("expected TrainingError");
  } catch (const TrainingError& e) {
    CHECK(std::string(e.what()).find("head.out.weight") != std::string::npos);
  }
}

TEST_CASE("grad_check on known functions") {
  std::vector<double> theta{0.3, -1.2, 2.0, 0.05};
  auto quad = [&] {
    double s = 0;
    for (double v : theta) s += 0.5 * v * v;
    return s;
  };
  const std::vector<double> analytic = theta;
  CHECK(grad_check(quad, theta, analytic).max_relative_error < 1e-6);

  // affine + softmax + cross-entropy toy
  Rng rng(20);
  DT x = random_dt({1, 3}, rng), w = random_dt({3, 2}, rng), b = random_dt({2}, rng);
  auto ce = [&] { return -std::log(activation(Activation::kSoftmax, affine(x, w, b))[1]); };
  const DT probs = activation(Activation::kSoftmax, affine(x, w, b));
  const DT dz({1, 2}, std::vector<double>{probs[0], probs[1] - 1.0});
  w.enable_grad();
  b.enable_grad();
  affine_backward(dz, x, w, b);
  const std::vector<double> gw(w.grad().begin(), w.grad().end());
  CHECK(grad_check(ce, w.values(), gw).max_relative_error < 1e-3);

  // a wrong gradient is reported at its coordinate
  std::vector<double> wrong = analytic;
  wrong[2] += 1.0;
  const auto r = grad_check(quad, theta, wrong);
  CHECK(r.worst_index == 2);
  CHECK(r.max_relative_error > 0.1);
}
