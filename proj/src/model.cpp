// SPDX-License-Identifier: Apache-2.0
#include "segattn/model.hpp"

#include <algorithm>
#include <cmath>

#include "segattn/errors.hpp"

namespace segattn {

EncoderKind parse_encoder(std::string_view name) {
  if (name == "cnn") return EncoderKind::kCnn;
  if (name == "meanbow") return EncoderKind::kMeanBow;
  throw ConfigError("unknown encoder '" + std::string(name) + "' (expected cnn or meanbow)");
}

std::string_view to_string(EncoderKind kind) { return kind == EncoderKind::kCnn ? "cnn" : "meanbow"; }

void ModelConfig::validate() const {
  auto positive = [](std::size_t v, const char* what) {
    if (v == 0) throw ConfigError(std::string(what) + " must be positive");
  };
  positive(context_size, "K");
  positive(sentence_length, "L");
  positive(embedding_width, "d");
  positive(hidden, "hidden");
  positive(dense_hidden, "denseHidden");
  if (encoder == EncoderKind::kCnn) {
    positive(filters_per_size, "filtersPerSize");
    if (filter_sizes.empty()) throw ConfigError("filterSizes must not be empty");
    for (std::size_t h : filter_sizes) {
      if (h == 0 || h > sentence_length) {
        throw ConfigError("filter size " + std::to_string(h) + " must be in [1, L=" + std::to_string(sentence_length) +
                          "]");
      }
    }
  }
  for (double rate : {recurrent_input_dropout, recurrent_state_dropout, dense_dropout}) check_dropout_rate(rate);
}

std::size_t ModelConfig::sentence_width() const {
  return encoder == EncoderKind::kCnn ? filter_sizes.size() * filters_per_size : embedding_width;
}

template <typename T>
std::size_t CnnEncoderParams<T>::width() const {
  std::size_t w = 0;
  for (const auto& b : banks) w += b.count();
  return w;
}

// ---------------------------------------------------------------------------
// parameter bookkeeping

namespace {

template <typename T>
void list_cnn(std::vector<NamedTensor<T>>& out, const std::string& prefix, CnnEncoderParams<T>& p) {
  for (auto& bank : p.banks) {
    const std::string base = prefix + ".h" + std::to_string(bank.height);
    out.push_back({base + ".weight", &bank.weight});
    out.push_back({base + ".bias", &bank.bias});
  }
}

template <typename T>
void list_cell(std::vector<NamedTensor<T>>& out, const std::string& prefix, LstmCellParams<T>& c) {
  out.push_back({prefix + ".w_input", &c.w_input});
  out.push_back({prefix + ".w_recurrent", &c.w_recurrent});
  out.push_back({prefix + ".bias", &c.bias});
}

template <typename T>
void list_context(std::vector<NamedTensor<T>>& out, const std::string& prefix, ContextEncoderParams<T>& p) {
  list_cell(out, prefix + ".lower.fwd", p.lower.forward);
  list_cell(out, prefix + ".lower.bwd", p.lower.backward);
  list_cell(out, prefix + ".upper.fwd", p.upper.forward);
  list_cell(out, prefix + ".upper.bwd", p.upper.backward);
  out.push_back({prefix + ".attention.w", &p.attention.w});
  out.push_back({prefix + ".attention.b", &p.attention.b});
  out.push_back({prefix + ".attention.z", &p.attention.z});
}

template <typename T>
void fill_uniform(BasicTensor<T>& t, Rng& rng, double bound) {
  for (auto& v : t.values()) v = static_cast<T>(rng.uniform(-bound, bound));
}

constexpr double kInitRange = 0.08;

template <typename T>
CnnEncoderParams<T> init_cnn(const ModelConfig& cfg, Rng& rng) {
  CnnEncoderParams<T> p;
  if (cfg.encoder != EncoderKind::kCnn) return p;
  for (std::size_t h : cfg.filter_sizes) {
    ConvFilters<T> bank;
    bank.height = h;
    bank.weight = BasicTensor<T>({cfg.filters_per_size, h, cfg.embedding_width});
    bank.bias = BasicTensor<T>({cfg.filters_per_size});
    fill_uniform(bank.weight, rng, kInitRange);
    p.banks.push_back(std::move(bank));
  }
  return p;
}

template <typename T>
ContextEncoderParams<T> init_context(const ModelConfig& cfg, Rng& rng) {
  ContextEncoderParams<T> p;
  const std::size_t in = cfg.sentence_width(), hid = cfg.hidden, sz = cfg.context_width();
  p.lower.forward = LstmCellParams<T>::init(in, hid, rng);
  p.lower.backward = LstmCellParams<T>::init(in, hid, rng);
  p.upper.forward = LstmCellParams<T>::init(sz, hid, rng);
  p.upper.backward = LstmCellParams<T>::init(sz, hid, rng);
  p.attention.w = BasicTensor<T>({sz, 1});
  p.attention.b = BasicTensor<T>({cfg.context_size});
  p.attention.z = BasicTensor<T>({1});
  fill_uniform(p.attention.w, rng, kInitRange);
  fill_uniform(p.attention.z, rng, kInitRange);
  return p;
}

}  // namespace

template <typename T>
std::vector<NamedTensor<T>> ModelParams<T>::parameters() {
  std::vector<NamedTensor<T>> out;
  if (config.train_embeddings) out.push_back({"embedding", &embedding});
  list_cnn(out, "mid_cnn", mid_cnn);
  list_cnn(out, "context_cnn", context_cnn);
  list_context(out, right ? "left_context" : "context", left);
  if (right) list_context(out, "right_context", *right);
  out.push_back({"head.dense.weight", &head.dense_w});
  out.push_back({"head.dense.bias", &head.dense_b});
  out.push_back({"head.out.weight", &head.out_w});
  out.push_back({"head.out.bias", &head.out_b});
  return out;
}

template <typename T>
std::vector<NamedTensor<T>> ModelParams<T>::tensors() {
  auto out = parameters();
  if (!config.train_embeddings) out.insert(out.begin(), NamedTensor<T>{"embedding", &embedding});
  return out;
}

template <typename T>
void ModelParams<T>::enable_grads() {
  for (auto& p : parameters()) p.tensor->enable_grad();
}

template <typename T>
void ModelParams<T>::zero_grads() {
  for (auto& p : parameters()) p.tensor->zero_grad();
}

template <typename T>
template <typename U>
ModelParams<U> ModelParams<T>::cast() const {
  Rng scratch(0);
  ModelParams<U> out = init_model<U>(config, embedding.template cast<U>(), scratch);
  ModelParams<T> copy = *this;
  auto src = copy.tensors();
  auto dst = out.tensors();
  for (std::size_t i = 0; i < src.size(); ++i) *dst[i].tensor = src[i].tensor->template cast<U>();
  return out;
}

template <typename T>
ModelParams<T> init_model(const ModelConfig& config, BasicTensor<T> embedding, Rng& rng) {
  config.validate();
  if (embedding.rank() != 2 || embedding.cols() != config.embedding_width) {
    throw ConfigError("embedding table " + embedding.shape_str() + " does not have width d=" +
                      std::to_string(config.embedding_width));
  }
  ModelParams<T> p;
  p.config = config;
  p.embedding = std::move(embedding);
  p.mid_cnn = init_cnn<T>(config, rng);
  p.context_cnn = init_cnn<T>(config, rng);
  p.left = init_context<T>(config, rng);
  if (!config.tie_contexts) p.right = init_context<T>(config, rng);
  const std::size_t merged = config.merged_width();
  p.head.dense_w = BasicTensor<T>({merged, config.dense_hidden});
  p.head.dense_b = BasicTensor<T>({config.dense_hidden});
  p.head.out_w = BasicTensor<T>({config.dense_hidden, 2});
  p.head.out_b = BasicTensor<T>({2});
  fill_uniform(p.head.dense_w, rng, kInitRange);
  fill_uniform(p.head.out_w, rng, kInitRange);
  return p;
}

// ---------------------------------------------------------------------------
// sentence encoders

template <typename T>
SentenceTrace<T> encode_sentence_cnn(const BasicTensor<T>& embedded, const CnnEncoderParams<T>& p) {
  SentenceTrace<T> tr;
  tr.encoding = BasicTensor<T>({p.width()});
  std::size_t offset = 0;
  for (const auto& bank : p.banks) {
    tr.feature_maps.push_back(conv_rows(embedded, bank, Activation::kRelu));
    tr.pooled.push_back(max_over_rows(tr.feature_maps.back()));
    const auto& v = tr.pooled.back().values;
    std::copy(v.data(), v.data() + v.size(), tr.encoding.data() + offset);
    offset += v.size();
  }
  return tr;
}

template <typename T>
BasicTensor<T> encode_sentence_meanbow(const BasicTensor<T>& embedded, std::size_t real_length) {
  const std::size_t width = embedded.cols();
  BasicTensor<T> out({width});
  const std::size_t n = std::min(real_length, embedded.rows());
  if (n == 0) return out;
  for (std::size_t r = 0; r < n; ++r) {
    auto row = embedded.row(r);
    for (std::size_t c = 0; c < width; ++c) out[c] += row[c];
  }
  for (auto& v : out.values()) v /= static_cast<T>(n);
  return out;
}

namespace {

template <typename T>
SentenceTrace<T> encode_with(const SentenceIds& ids, const ModelParams<T>& params, const CnnEncoderParams<T>& cnn) {
  BasicTensor<T> embedded = embed_sentence(ids, params.embedding);
  SentenceTrace<T> tr;
  if (params.config.encoder == EncoderKind::kCnn) {
    tr = encode_sentence_cnn(embedded, cnn);
  } else {
    tr.encoding = encode_sentence_meanbow(embedded, ids.real_length);
  }
  tr.ids = &ids;
  tr.input = std::move(embedded);
  return tr;
}

// Gradient of an encoding back to its filters and, for a trainable table, the
// embedding rows it was looked up from.
template <typename T>
void encode_backward(const SentenceTrace<T>& tr, ModelParams<T>& params, CnnEncoderParams<T>& cnn,
                     std::span<const T> d_encoding) {
  const bool to_table = params.config.train_embeddings && params.embedding.has_grad();
  BasicTensor<T> input = tr.input;
  if (to_table) input.enable_grad();
  if (params.config.encoder == EncoderKind::kCnn) {
    std::size_t offset = 0;
    for (std::size_t b = 0; b < cnn.banks.size(); ++b) {
      const auto& fmap = tr.feature_maps[b];
      const std::size_t count = cnn.banks[b].count();
      BasicTensor<T> holder(fmap.shape());
      holder.enable_grad();
      max_over_rows_backward(BasicTensor<T>::vector({d_encoding.begin() + static_cast<std::ptrdiff_t>(offset),
                                                     d_encoding.begin() + static_cast<std::ptrdiff_t>(offset + count)}),
                             tr.pooled[b], holder);
      BasicTensor<T> dmap(fmap.shape(), std::vector<T>(holder.grad().begin(), holder.grad().end()));
      conv_rows_backward(dmap, fmap, input, cnn.banks[b], Activation::kRelu);
      offset += count;
    }
  } else if (to_table) {
    const std::size_t n = std::min(tr.ids->real_length, input.rows());
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t c = 0; c < input.cols(); ++c) input.grad()[r * input.cols() + c] = d_encoding[c] / static_cast<T>(n);
    }
  }
  if (!to_table) return;
  const std::size_t width = params.embedding.cols();
  auto table_grad = params.embedding.grad();
  for (std::size_t r = 0; r < tr.ids->ids.size(); ++r) {
    const TokenId id = tr.ids->ids[r];
    if (id == kPadId) continue;
    const T* src = input.grad().data() + r * width;
    T* dst = table_grad.data() + static_cast<std::size_t>(id) * width;
    for (std::size_t c = 0; c < width; ++c) dst[c] += src[c];
  }
}

template <typename T>
void require_finite(const BasicTensor<T>& t, const char* stage) {
  if (!t.all_finite()) throw NumericError(std::string("non-finite activation in ") + stage);
}

}  // namespace

// ---------------------------------------------------------------------------
// attention

template <typename T>
AttentionTrace<T> attend(const BasicTensor<T>& h, const AttentionParams<T>& p) {
  const std::size_t k = h.rows(), sz = h.cols();
  if (p.w.size() != sz || p.b.size() != k || p.z.size() != 1) {
    throw DimensionError("attend: H " + h.shape_str() + " incompatible with W " + p.w.shape_str() + ", b " +
                         p.b.shape_str());
  }
  AttentionTrace<T> tr;
  tr.scores.resize(k);
  tr.squashed.resize(k);
  tr.alpha.resize(k);
  const T z = p.z[0];
  for (std::size_t j = 0; j < k; ++j) {
    T e = p.b[j];
    auto row = h.row(j);
    for (std::size_t c = 0; c < sz; ++c) e += row[c] * p.w[c];
    tr.scores[j] = e;
    tr.squashed[j] = std::tanh(e * z);
  }
  // squashed values lie in [-1, 1], so exp cannot overflow
  T total = 0;
  for (std::size_t j = 0; j < k; ++j) total += (tr.alpha[j] = std::exp(tr.squashed[j]));
  for (auto& a : tr.alpha) a /= total;
  tr.context = BasicTensor<T>({sz});
  for (std::size_t j = 0; j < k; ++j) {
    auto row = h.row(j);
    for (std::size_t c = 0; c < sz; ++c) tr.context[c] += tr.alpha[j] * row[c];
  }
  return tr;
}

template <typename T>
void attend_backward(const AttentionTrace<T>& tr, const BasicTensor<T>& h, AttentionParams<T>& p,
                     std::span<const T> dv, BasicTensor<T>& dh) {
  const std::size_t k = h.rows(), sz = h.cols();
  std::vector<T> dalpha(k);
  T weighted = 0;
  for (std::size_t j = 0; j < k; ++j) {
    auto row = h.row(j);
    auto drow = dh.row(j);
    T acc = 0;
    for (std::size_t c = 0; c < sz; ++c) {
      acc += dv[c] * row[c];
      drow[c] += tr.alpha[j] * dv[c];
    }
    dalpha[j] = acc;
    weighted += tr.alpha[j] * acc;
  }
  const T z = p.z[0];
  T dz = 0;
  for (std::size_t j = 0; j < k; ++j) {
    const T ds = tr.alpha[j] * (dalpha[j] - weighted);
    const T dpre = ds * (T(1) - tr.squashed[j] * tr.squashed[j]);
    dz += dpre * tr.scores[j];
    const T de = dpre * z;
    if (p.b.has_grad()) p.b.grad()[j] += de;
    auto row = h.row(j);
    auto drow = dh.row(j);
    for (std::size_t c = 0; c < sz; ++c) {
      drow[c] += de * p.w[c];
      if (p.w.has_grad()) p.w.grad()[c] += de * row[c];
    }
  }
  if (p.z.has_grad()) p.z.grad()[0] += dz;
}

// ---------------------------------------------------------------------------
// context encoder

template <typename T>
ContextTrace<T> encode_context(const BasicTensor<T>& sequence, const ContextEncoderParams<T>& p, bool use_attention,
                               const RecurrentDropout& drop, Rng& rng) {
  if (sequence.rank() != 2 || sequence.rows() != p.attention.b.size()) {
    throw ConfigError("context of " + std::to_string(sequence.rows()) + " sentences given to an encoder built for K=" +
                      std::to_string(p.attention.b.size()));
  }
  ContextTrace<T> tr;
  tr.sequence = sequence;
  tr.lower = bilstm_run(sequence, p.lower, drop, rng);
  tr.upper = bilstm_run(tr.lower.output, p.upper, drop, rng);
  const auto& h = tr.upper.output;
  if (use_attention) {
    tr.attention = attend(h, p.attention);
    tr.context = tr.attention->context;
  } else {
    auto last = h.row(h.rows() - 1);
    tr.context = BasicTensor<T>::vector({last.begin(), last.end()});
  }
  return tr;
}

template <typename T>
BasicTensor<T> encode_context_backward(const ContextTrace<T>& tr, ContextEncoderParams<T>& p,
                                       std::span<const T> dv) {
  const auto& h = tr.upper.output;
  BasicTensor<T> dh(h.shape());
  if (tr.attention) {
    attend_backward(*tr.attention, h, p.attention, dv, dh);
  } else {
    auto last = dh.row(h.rows() - 1);
    std::copy(dv.begin(), dv.end(), last.begin());
  }
  BasicTensor<T> d_lower = bilstm_backward(tr.upper, p.upper, dh);
  return bilstm_backward(tr.lower, p.lower, d_lower);
}

// ---------------------------------------------------------------------------
// full model

namespace {

template <typename T>
BasicTensor<T> stack_rows(const std::vector<const BasicTensor<T>*>& rows) {
  const std::size_t width = rows.front()->size();
  BasicTensor<T> out({rows.size(), width});
  for (std::size_t r = 0; r < rows.size(); ++r) std::copy(rows[r]->data(), rows[r]->data() + width, out.row(r).begin());
  return out;
}

template <typename T>
RecurrentDropout recurrent_dropout(const ModelConfig& cfg, Mode mode) {
  return RecurrentDropout{cfg.recurrent_input_dropout, cfg.recurrent_state_dropout, mode};
}

// Everything after the sentence encodings: tr.left.sequence, tr.right.sequence
// and tr.mid.encoding must be set.
template <typename T>
void forward_from_encodings(ForwardTrace<T>& tr, const ModelParams<T>& params, Mode mode, Rng& rng) {
  const auto& cfg = params.config;
  const auto drop = recurrent_dropout<T>(cfg, mode);
  tr.mode = mode;
  tr.left = encode_context(tr.left.sequence, params.left, cfg.attention, drop, rng);
  require_finite(tr.left.context, "left context encoder");
  tr.right = encode_context(tr.right.sequence, params.right_encoder(), cfg.attention, drop, rng);
  require_finite(tr.right.context, "right context encoder");

  const std::size_t sz = cfg.context_width(), zw = tr.mid.encoding.size();
  tr.merged = BasicTensor<T>({2 * sz + zw});
  std::copy(tr.left.context.data(), tr.left.context.data() + sz, tr.merged.data());
  std::copy(tr.mid.encoding.data(), tr.mid.encoding.data() + zw, tr.merged.data() + sz);
  std::copy(tr.right.context.data(), tr.right.context.data() + sz, tr.merged.data() + sz + zw);

  tr.hidden = activation(Activation::kRelu, affine(tr.merged, params.head.dense_w, params.head.dense_b));
  require_finite(tr.hidden, "dense layer");
  tr.hidden_dropped = dropout(tr.hidden, cfg.dense_dropout, mode, rng);
  tr.logits = affine(tr.hidden_dropped.out, params.head.out_w, params.head.out_b);
  tr.probs = activation(Activation::kSoftmax, tr.logits);
  require_finite(tr.probs, "output layer");
}

}  // namespace

template <typename T>
ForwardTrace<T> forward(const ContextSample& sample, const ModelParams<T>& params, Mode mode, Rng& rng) {
  const auto& cfg = params.config;
  if (sample.left.size() != cfg.context_size || sample.right.size() != cfg.context_size) {
    throw ConfigError("sample has contexts of " + std::to_string(sample.left.size()) + "/" +
                      std::to_string(sample.right.size()) + " sentences, model expects K=" +
                      std::to_string(cfg.context_size));
  }
  ForwardTrace<T> tr;
  std::vector<const BasicTensor<T>*> rows;
  for (const auto& s : sample.left) tr.left_sentences.push_back(encode_with(s, params, params.context_cnn));
  for (const auto& s : sample.right) tr.right_sentences.push_back(encode_with(s, params, params.context_cnn));
  tr.mid = encode_with(sample.mid, params, params.mid_cnn);
  require_finite(tr.mid.encoding, "mid-sentence encoder");
  for (const auto& s : tr.left_sentences) rows.push_back(&s.encoding);
  tr.left.sequence = stack_rows(rows);
  rows.clear();
  for (const auto& s : tr.right_sentences) rows.push_back(&s.encoding);
  tr.right.sequence = stack_rows(rows);
  forward_from_encodings(tr, params, mode, rng);
  return tr;
}

template <typename T>
void backward(const ForwardTrace<T>& tr, ModelParams<T>& params, std::span<const T> d_logits) {
  const auto& cfg = params.config;
  // output layer
  BasicTensor<T> dropped = tr.hidden_dropped.out;
  dropped.enable_grad();
  affine_backward(BasicTensor<T>::vector({d_logits.begin(), d_logits.end()}), dropped, params.head.out_w,
                  params.head.out_b);
  std::vector<T> d_hidden(dropped.grad().begin(), dropped.grad().end());
  apply_mask<T>(d_hidden, tr.hidden_dropped.mask);
  for (std::size_t i = 0; i < d_hidden.size(); ++i) d_hidden[i] *= tr.hidden[i] > T(0) ? T(1) : T(0);

  // dense layer
  BasicTensor<T> merged = tr.merged;
  merged.enable_grad();
  affine_backward(BasicTensor<T>::vector(std::move(d_hidden)), merged, params.head.dense_w, params.head.dense_b);
  const std::span<const T> dm = merged.grad();
  const std::size_t sz = cfg.context_width(), zw = tr.mid.encoding.size();

  // contexts
  BasicTensor<T> d_left = encode_context_backward(tr.left, params.left, dm.subspan(0, sz));
  BasicTensor<T> d_right = encode_context_backward(tr.right, params.right_encoder(), dm.subspan(sz + zw, sz));
  for (std::size_t j = 0; j < tr.left_sentences.size(); ++j) {
    encode_backward<T>(tr.left_sentences[j], params, params.context_cnn, d_left.row(j));
  }
  for (std::size_t j = 0; j < tr.right_sentences.size(); ++j) {
    encode_backward<T>(tr.right_sentences[j], params, params.context_cnn, d_right.row(j));
  }
  encode_backward<T>(tr.mid, params, params.mid_cnn, dm.subspan(sz, zw));
  if (params.config.train_embeddings && params.embedding.has_grad()) {
    auto pad = params.embedding.grad().subspan(0, params.embedding.cols());
    std::fill(pad.begin(), pad.end(), T(0));
  }
}

template <typename T>
BasicTensor<T> predict_proba(const ContextSample& sample, const ModelParams<T>& params) {
  Rng unused(0);
  return forward(sample, params, Mode::kInfer, unused).probs;
}

template <typename T>
Segmentation predict_document(const EncodedDocument& doc, const ModelParams<T>& params) {
  const std::size_t n = doc.size();
  Segmentation out(std::vector<std::uint8_t>(n, 0));
  if (n == 0) return out;
  out.boundaries[0] = 1;
  if (n == 1) return out;
  const auto& cfg = params.config;
  const auto k = static_cast<std::ptrdiff_t>(cfg.context_size);
  const SentenceIds pad = padding_sentence(cfg.sentence_length);
  const BasicTensor<T> pad_encoding = encode_with(pad, params, params.context_cnn).encoding;
  std::vector<BasicTensor<T>> context_enc, mid_enc;
  context_enc.reserve(n);
  mid_enc.reserve(n);
  for (const auto& s : doc.sentences) {
    context_enc.push_back(encode_with(s, params, params.context_cnn).encoding);
    mid_enc.push_back(encode_with(s, params, params.mid_cnn).encoding);
  }
  auto context_at = [&](std::ptrdiff_t j) -> const BasicTensor<T>* {
    return j >= 0 && j < static_cast<std::ptrdiff_t>(n) ? &context_enc[static_cast<std::size_t>(j)] : &pad_encoding;
  };
  Rng unused(0);
  std::vector<const BasicTensor<T>*> rows;
  for (std::size_t idx = 1; idx < n; ++idx) {
    const auto i = static_cast<std::ptrdiff_t>(idx);
    ForwardTrace<T> tr;
    rows.clear();
    for (std::ptrdiff_t j = i - k; j < i; ++j) rows.push_back(context_at(j));
    tr.left.sequence = stack_rows(rows);
    rows.clear();
    for (std::ptrdiff_t j = i + k; j > i; --j) rows.push_back(context_at(j));
    tr.right.sequence = stack_rows(rows);
    tr.mid.encoding = mid_enc[idx];
    forward_from_encodings(tr, params, Mode::kInfer, unused);
    out.boundaries[idx] = tr.probs[1] > tr.probs[0] ? 1 : 0;
  }
  return out;
}

// ---------------------------------------------------------------------------

#define SEGATTN_INSTANTIATE(T)                                                                                     \
  template struct CnnEncoderParams<T>;                                                                             \
  template struct ModelParams<T>;                                                                                  \
  template ModelParams<T> init_model<T>(const ModelConfig&, BasicTensor<T>, Rng&);                                 \
  template SentenceTrace<T> encode_sentence_cnn<T>(const BasicTensor<T>&, const CnnEncoderParams<T>&);             \
  template BasicTensor<T> encode_sentence_meanbow<T>(const BasicTensor<T>&, std::size_t);                          \
  template AttentionTrace<T> attend<T>(const BasicTensor<T>&, const AttentionParams<T>&);                          \
  template void attend_backward<T>(const AttentionTrace<T>&, const BasicTensor<T>&, AttentionParams<T>&,           \
                                   std::span<const T>, BasicTensor<T>&);                                           \
  template ContextTrace<T> encode_context<T>(const BasicTensor<T>&, const ContextEncoderParams<T>&, bool,          \
                                             const RecurrentDropout&, Rng&);                                       \
  template BasicTensor<T> encode_context_backward<T>(const ContextTrace<T>&, ContextEncoderParams<T>&,             \
                                                     std::span<const T>);                                          \
  template ForwardTrace<T> forward<T>(const ContextSample&, const ModelParams<T>&, Mode, Rng&);                    \
  template void backward<T>(const ForwardTrace<T>&, ModelParams<T>&, std::span<const T>);                          \
  template BasicTensor<T> predict_proba<T>(const ContextSample&, const ModelParams<T>&);                           \
  template Segmentation predict_document<T>(const EncodedDocument&, const ModelParams<T>&);

SEGATTN_INSTANTIATE(float)
SEGATTN_INSTANTIATE(double)

#undef SEGATTN_INSTANTIATE

template ModelParams<double> ModelParams<float>::cast<double>() const;
template ModelParams<float> ModelParams<double>::cast<float>() const;

}  // namespace segattn
