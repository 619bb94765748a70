// SPDX-License-Identifier: Apache-2.0
#include "segattn/gradcheck_suite.hpp"

#include <algorithm>
#include <cstdio>
#include <functional>
#include <ostream>

#include "segattn/gradcheck.hpp"
#include "segattn/training.hpp"

namespace segattn {

namespace {

using D = double;
using DTensor = BasicTensor<D>;

// One checked input: where its values live and the analytic gradient that
// the backward pass produced for it.
struct Target {
  std::span<D> values;
  std::vector<D> analytic;
};

template <typename Container>
std::vector<D> copy_of(const Container& c) {
  return std::vector<D>(c.begin(), c.end());
}

DTensor random_tensor(Shape shape, Rng& rng, double bound) {
  DTensor t(std::move(shape));
  for (auto& v : t.values()) v = rng.uniform(-bound, bound);
  return t;
}

void randomize(DTensor& t, Rng& rng, double bound) {
  for (auto& v : t.values()) v = rng.uniform(-bound, bound);
}

D dot(std::span<const D> a, std::span<const D> b) {
  D s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

class Checker {
 public:
  explicit Checker(const GradSuiteOptions& o) : opts_(o) { report_.threshold = o.threshold; }

  void add(const std::string& name, std::vector<Target> targets, const std::function<D()>& loss) {
    if (name == opts_.corrupt) {
      // Shift every analytic value so the mismatch cannot hide behind zeros.
      for (auto& t : targets) {
        for (auto& g : t.analytic) g = g * 1.5 + 0.01;
      }
    }
    GradCheckOptions gc;
    gc.delta = opts_.delta;
    GradSuiteRow row;
    row.name = name;
    for (auto& t : targets) {
      const GradCheckResult r = grad_check(loss, t.values, t.analytic, gc);
      row.max_relative_error = std::max(row.max_relative_error, r.max_relative_error);
      row.coordinates += r.checked;
    }
    row.passed = row.max_relative_error < opts_.threshold;
    report_.rows.push_back(std::move(row));
  }

  GradSuiteReport take() { return std::move(report_); }

 private:
  GradSuiteOptions opts_;
  GradSuiteReport report_;
};

void check_conv(Checker& checker, Rng& rng) {
  DTensor x = random_tensor({5, 8}, rng, 1.0);
  std::vector<ConvFilters<D>> banks;
  for (std::size_t h : {2u, 3u}) {
    banks.push_back(ConvFilters<D>{h, random_tensor({4, h, 8}, rng, 0.5), random_tensor({4}, rng, 0.2)});
  }
  const DTensor r = random_tensor({5, 4}, rng, 1.0);
  auto loss = [&] {
    D s = 0;
    for (const auto& b : banks) s += dot(conv_rows(x, b, Activation::kRelu).values(), r.values());
    return s;
  };
  x.enable_grad();
  for (auto& b : banks) {
    b.weight.enable_grad();
    b.bias.enable_grad();
    conv_rows_backward(r, conv_rows(x, b, Activation::kRelu), x, b, Activation::kRelu);
  }
  std::vector<Target> targets{{x.values(), copy_of(x.grad())}};
  for (auto& b : banks) {
    targets.push_back({b.weight.values(), copy_of(b.weight.grad())});
    targets.push_back({b.bias.values(), copy_of(b.bias.grad())});
  }
  checker.add("conv", std::move(targets), loss);
}

void check_pool(Checker& checker, Rng& rng) {
  DTensor f = random_tensor({6, 4}, rng, 1.0);
  const DTensor r = random_tensor({4}, rng, 1.0);
  auto loss = [&] { return dot(max_over_rows(f).values.values(), r.values()); };
  f.enable_grad();
  max_over_rows_backward(r, max_over_rows(f), f);
  checker.add("pool", {{f.values(), copy_of(f.grad())}}, loss);
}

void check_lstm_cell(Checker& checker, Rng& rng) {
  auto p = LstmCellParams<D>::init(5, 6, rng);
  randomize(p.w_input, rng, 0.5);
  randomize(p.w_recurrent, rng, 0.5);
  randomize(p.bias, rng, 0.5);
  DTensor x = random_tensor({5}, rng, 1.0), h = random_tensor({6}, rng, 1.0), c = random_tensor({6}, rng, 1.0);
  const DTensor rh = random_tensor({6}, rng, 1.0), rc = random_tensor({6}, rng, 1.0);
  auto loss = [&] {
    const auto step = lstm_step<D>(x.values(), h.values(), c.values(), p);
    return dot(step.h, rh.values()) + dot(step.c, rc.values());
  };
  p.w_input.enable_grad();
  p.w_recurrent.enable_grad();
  p.bias.enable_grad();
  const auto step = lstm_step<D>(x.values(), h.values(), c.values(), p);
  std::vector<D> dx(5), dh(6), dc(6);
  lstm_step_backward<D>(step, p, rh.values(), rc.values(), dx, dh, dc);
  checker.add("lstm_cell",
              {{p.w_input.values(), copy_of(p.w_input.grad())},
               {p.w_recurrent.values(), copy_of(p.w_recurrent.grad())},
               {p.bias.values(), copy_of(p.bias.grad())},
               {x.values(), dx},
               {h.values(), dh},
               {c.values(), dc}},
              loss);
}

std::vector<LstmCellParams<D>*> cells(BiLstmParams<D>& p) { return {&p.forward, &p.backward}; }

void check_stacked_bilstm(Checker& checker, Rng& rng) {
  BiLstmParams<D> lower{LstmCellParams<D>::init(8, 6, rng), LstmCellParams<D>::init(8, 6, rng)};
  BiLstmParams<D> upper{LstmCellParams<D>::init(12, 6, rng), LstmCellParams<D>::init(12, 6, rng)};
  for (auto* layer : {&lower, &upper}) {
    for (auto* cell : cells(*layer)) {
      randomize(cell->w_input, rng, 0.4);
      randomize(cell->w_recurrent, rng, 0.4);
      randomize(cell->bias, rng, 0.4);
    }
  }
  DTensor seq = random_tensor({3, 8}, rng, 1.0);
  const DTensor r = random_tensor({3, 12}, rng, 1.0);
  const RecurrentDropout none;
  auto loss = [&] {
    Rng unused(0);
    const auto t1 = bilstm_run(seq, lower, none, unused);
    const auto t2 = bilstm_run(t1.output, upper, none, unused);
    return dot(t2.output.values(), r.values());
  };
  std::vector<Target> targets;
  for (auto* layer : {&lower, &upper}) {
    for (auto* cell : cells(*layer)) {
      cell->w_input.enable_grad();
      cell->w_recurrent.enable_grad();
      cell->bias.enable_grad();
    }
  }
  Rng unused(0);
  const auto t1 = bilstm_run(seq, lower, none, unused);
  const auto t2 = bilstm_run(t1.output, upper, none, unused);
  const DTensor d1 = bilstm_backward(t2, upper, r);
  const DTensor d0 = bilstm_backward(t1, lower, d1);
  for (auto* layer : {&lower, &upper}) {
    for (auto* cell : cells(*layer)) {
      targets.push_back({cell->w_input.values(), copy_of(cell->w_input.grad())});
      targets.push_back({cell->w_recurrent.values(), copy_of(cell->w_recurrent.grad())});
      targets.push_back({cell->bias.values(), copy_of(cell->bias.grad())});
    }
  }
  targets.push_back({seq.values(), copy_of(d0.values())});
  checker.add("stacked_bilstm", std::move(targets), loss);
}

void check_attention(Checker& checker, Rng& rng) {
  DTensor h = random_tensor({3, 12}, rng, 1.0);
  AttentionParams<D> p{random_tensor({12, 1}, rng, 0.5), random_tensor({3}, rng, 0.5), random_tensor({1}, rng, 1.0)};
  const DTensor r = random_tensor({12}, rng, 1.0);
  auto loss = [&] { return dot(attend(h, p).context.values(), r.values()); };
  p.w.enable_grad();
  p.b.enable_grad();
  p.z.enable_grad();
  DTensor dh(h.shape());
  dh.enable_grad();
  attend_backward<D>(attend(h, p), h, p, r.values(), dh);
  checker.add("attention",
              {{p.w.values(), copy_of(p.w.grad())},
               {p.b.values(), copy_of(p.b.grad())},
               {p.z.values(), copy_of(p.z.grad())},
               {h.values(), copy_of(dh.values())}},
              loss);
}

void check_dense_head(Checker& checker, Rng& rng) {
  DTensor x = random_tensor({32}, rng, 1.0);
  ClassifierParams<D> p{random_tensor({32, 8}, rng, 0.3), random_tensor({8}, rng, 0.2), random_tensor({8, 2}, rng, 0.5),
                        random_tensor({2}, rng, 0.2)};
  const DTensor r = random_tensor({2}, rng, 1.0);
  auto loss = [&] {
    const DTensor hid = activation(Activation::kRelu, affine(x, p.dense_w, p.dense_b));
    return dot(activation(Activation::kSoftmax, affine(hid, p.out_w, p.out_b)).values(), r.values());
  };
  for (auto* t : {&x, &p.dense_w, &p.dense_b, &p.out_w, &p.out_b}) t->enable_grad();
  DTensor pre = affine(x, p.dense_w, p.dense_b);
  DTensor hid = activation(Activation::kRelu, pre);
  DTensor logits = affine(hid, p.out_w, p.out_b);
  const DTensor probs = activation(Activation::kSoftmax, logits);
  logits.enable_grad();
  activation_backward(Activation::kSoftmax, probs, r, logits);
  hid.enable_grad();
  affine_backward(DTensor(logits.shape(), copy_of(logits.grad())), hid, p.out_w, p.out_b);
  pre.enable_grad();
  activation_backward(Activation::kRelu, hid, DTensor(hid.shape(), copy_of(hid.grad())), pre);
  affine_backward(DTensor(pre.shape(), copy_of(pre.grad())), x, p.dense_w, p.dense_b);
  checker.add("dense_head",
              {{p.dense_w.values(), copy_of(p.dense_w.grad())},
               {p.dense_b.values(), copy_of(p.dense_b.grad())},
               {p.out_w.values(), copy_of(p.out_w.grad())},
               {p.out_b.values(), copy_of(p.out_b.grad())},
               {x.values(), copy_of(x.grad())}},
              loss);
}

void check_weighted_loss(Checker& checker, Rng& rng) {
  DTensor z0 = random_tensor({2}, rng, 1.0), z1 = random_tensor({2}, rng, 1.0);
  const double w = 0.3;
  auto loss_of = [w](const DTensor& z, int t) {
    return weighted_bce(activation(Activation::kSoftmax, z)[1], t, w).loss;
  };
  auto loss = [&] { return loss_of(z0, 0) + loss_of(z1, 1); };
  const auto g0 = weighted_bce(activation(Activation::kSoftmax, z0)[1], 0, w).d_logits;
  const auto g1 = weighted_bce(activation(Activation::kSoftmax, z1)[1], 1, w).d_logits;
  checker.add("weighted_loss", {{z0.values(), copy_of(g0)}, {z1.values(), copy_of(g1)}}, loss);
}

SentenceIds ids_of(std::vector<TokenId> ids) {
  std::size_t real = 0;
  while (real < ids.size() && ids[real] != kPadId) ++real;
  return SentenceIds{std::move(ids), real};
}

void check_full_model(Checker& checker, Rng& rng) {
  const ModelConfig cfg = gradcheck_model_config();
  const std::size_t vocab = 12;
  DTensor table = random_tensor({vocab, cfg.embedding_width}, rng, 0.5);
  for (auto& v : table.row(0)) v = 0;
  ModelParams<D> params = init_model<D>(cfg, std::move(table), rng);
  // Larger weights than the training initialization keep every gradient well
  // above finite-difference noise.
  for (auto& p : params.parameters()) {
    if (p.name != "embedding") randomize(*p.tensor, rng, 0.4);
  }

  // Two samples, one per class, with partial and all-PAD sentences.
  ContextSample a;
  a.left = {padding_sentence(cfg.sentence_length), ids_of({2, 3, 4, 0, 0})};
  a.mid = ids_of({5, 6, 7, 8, 9});
  a.right = {ids_of({10, 11, 2, 3, 0}), ids_of({4, 1, 0, 0, 0})};
  a.label = 1;
  ContextSample b;
  b.left = {ids_of({9, 8, 7, 0, 0}), ids_of({6, 5, 4, 3, 2})};
  b.mid = ids_of({11, 10, 1, 0, 0});
  b.right = {ids_of({3, 7, 0, 0, 0}), padding_sentence(cfg.sentence_length)};
  b.label = 0;
  const std::vector<ContextSample> samples{a, b};
  const double w = 0.4;

  auto loss = [&] {
    D total = 0;
    for (const auto& s : samples) {
      Rng unused(0);
      const auto tr = forward(s, params, Mode::kInfer, unused);
      total += weighted_bce(tr.probs[1], s.label, w).loss;
    }
    return total;
  };

  params.enable_grads();
  params.zero_grads();
  for (const auto& s : samples) {
    Rng unused(0);
    const auto tr = forward(s, params, Mode::kInfer, unused);
    const auto g = weighted_bce(tr.probs[1], s.label, w).d_logits;
    backward<D>(tr, params, g);
  }
  for (auto& p : params.parameters()) {
    checker.add("model:" + p.name, {{p.tensor->values(), copy_of(p.tensor->grad())}}, loss);
  }
}

}  // namespace

bool GradSuiteReport::passed() const {
  return !rows.empty() && std::all_of(rows.begin(), rows.end(), [](const auto& r) { return r.passed; });
}

std::vector<std::string> GradSuiteReport::failures() const {
  std::vector<std::string> out;
  for (const auto& r : rows) {
    if (!r.passed) out.push_back(r.name);
  }
  return out;
}

ModelConfig gradcheck_model_config() {
  ModelConfig cfg;
  cfg.context_size = 2;
  cfg.sentence_length = 5;
  cfg.embedding_width = 8;
  cfg.filter_sizes = {2, 3};
  cfg.filters_per_size = 4;
  cfg.hidden = 6;
  cfg.dense_hidden = 8;
  cfg.train_embeddings = true;
  return cfg;
}

const std::vector<std::string>& gradcheck_layer_names() {
  static const std::vector<std::string> names = {"conv",      "pool",       "lstm_cell",    "stacked_bilstm",
                                                 "attention", "dense_head", "weighted_loss"};
  return names;
}

GradSuiteReport run_gradcheck_suite(const GradSuiteOptions& options) {
  Checker checker(options);
  Rng rng(options.seed);
  check_conv(checker, rng);
  check_pool(checker, rng);
  check_lstm_cell(checker, rng);
  check_stacked_bilstm(checker, rng);
  check_attention(checker, rng);
  check_dense_head(checker, rng);
  check_weighted_loss(checker, rng);
  check_full_model(checker, rng);
  return checker.take();
}

void write_gradcheck_report(std::ostream& out, const GradSuiteReport& report) {
  char buf[64];
  out << "check\tmaxRelError\tcoordinates\tstatus\n";
  for (const auto& r : report.rows) {
    std::snprintf(buf, sizeof buf, "%.3e", r.max_relative_error);
    out << r.name << '\t' << buf << '\t' << r.coordinates << '\t' << (r.passed ? "PASS" : "FAIL") << '\n';
  }
  std::snprintf(buf, sizeof buf, "%.0e", report.threshold);
  out << "# threshold " << buf << ": " << (report.passed() ? "PASS" : "FAIL") << '\n';
}

}  // namespace segattn
