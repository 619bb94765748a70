// SPDX-License-Identifier: Apache-2.0
//
// Boundary classifier: CNN (or mean-of-words) sentence encodings, stacked
// BiLSTM context encoders with soft attention for the left and right
// contexts, and a dense softmax head over [v_left ; f_mid ; v_right].
#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "segattn/layers.hpp"
#include "segattn/metrics.hpp"
#include "segattn/text.hpp"

namespace segattn {

enum class EncoderKind { kCnn, kMeanBow };

EncoderKind parse_encoder(std::string_view name);
std::string_view to_string(EncoderKind kind);

struct ModelConfig {
  std::size_t context_size = 10;  // K
  std::size_t sentence_length = 40;  // L
  std::size_t embedding_width = 300;  // d
  std::vector<std::size_t> filter_sizes{2, 3, 4, 5};
  std::size_t filters_per_size = 200;
  std::size_t hidden = 600;
  std::size_t dense_hidden = 256;
  EncoderKind encoder = EncoderKind::kCnn;
  bool attention = true;
  bool tie_contexts = true;
  bool train_embeddings = false;
  double recurrent_input_dropout = 0.25;
  double recurrent_state_dropout = 0.25;
  double dense_dropout = 0.3;

  /// Throws ConfigError on any inconsistent value.
  void validate() const;

  /// Width of one sentence encoding: filters * sizes for CNN, d for mean-of-words.
  std::size_t sentence_width() const;
  /// sz, the per-position output width of the top BiLSTM.
  std::size_t context_width() const { return 2 * hidden; }
  std::size_t merged_width() const { return 2 * context_width() + sentence_width(); }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

template <typename T>
struct CnnEncoderParams {
  std::vector<ConvFilters<T>> banks;

  std::size_t width() const;
};

template <typename T>
struct AttentionParams {
  BasicTensor<T> w;  // [sz x 1]
  BasicTensor<T> b;  // [K], one bias per context position
  BasicTensor<T> z;  // [1]
};

template <typename T>
struct ContextEncoderParams {
  BiLstmParams<T> lower;
  BiLstmParams<T> upper;
  AttentionParams<T> attention;
};

template <typename T>
struct ClassifierParams {
  BasicTensor<T> dense_w;  // [merged x D_h]
  BasicTensor<T> dense_b;
  BasicTensor<T> out_w;    // [D_h x 2]
  BasicTensor<T> out_b;
};

template <typename T>
struct NamedTensor {
  std::string name;
  BasicTensor<T>* tensor;
};

template <typename T>
struct ModelParams {
  ModelConfig config;
  BasicTensor<T> embedding;  // [V x d]
  CnnEncoderParams<T> mid_cnn;
  CnnEncoderParams<T> context_cnn;  // shared by left and right contexts
  ContextEncoderParams<T> left;
  std::optional<ContextEncoderParams<T>> right;  // set only when contexts are untied
  ClassifierParams<T> head;

  ContextEncoderParams<T>& right_encoder() { return right ? *right : left; }
  const ContextEncoderParams<T>& right_encoder() const { return right ? *right : left; }

  /// Every trainable tensor in a fixed order. The embedding table is listed
  /// only when config.train_embeddings is set.
  std::vector<NamedTensor<T>> parameters();
  /// Every stored tensor, including a frozen embedding table.
  std::vector<NamedTensor<T>> tensors();

  void enable_grads();
  void zero_grads();

  template <typename U>
  ModelParams<U> cast() const;
};

/// Fresh parameters: weights uniform in [-0.08, 0.08], biases zero except
/// LSTM forget gates (1.0). `embedding` becomes the [V x d] table.
template <typename T>
ModelParams<T> init_model(const ModelConfig& config, BasicTensor<T> embedding, Rng& rng);

// ---------------------------------------------------------------------------
// sentence encoders

template <typename T>
struct SentenceTrace {
  const SentenceIds* ids = nullptr;
  BasicTensor<T> input;                     // [L x d]
  std::vector<BasicTensor<T>> feature_maps;  // per bank, [L x count]
  std::vector<RowMax<T>> pooled;
  BasicTensor<T> encoding;                  // [width]
};

/// conv_rows with ReLU then max over rows, per bank, concatenated.
template <typename T>
SentenceTrace<T> encode_sentence_cnn(const BasicTensor<T>& embedded, const CnnEncoderParams<T>& p);

/// Mean over the first `real_length` rows; zero when the sentence is all PAD.
template <typename T>
BasicTensor<T> encode_sentence_meanbow(const BasicTensor<T>& embedded, std::size_t real_length);

// ---------------------------------------------------------------------------
// attention

template <typename T>
struct AttentionTrace {
  std::vector<T> scores;    // e = H W + b
  std::vector<T> squashed;  // tanh(e * z)
  std::vector<T> alpha;
  BasicTensor<T> context;   // v
};

/// e = H W + b, a_j = exp(tanh(e_j z)), alpha = a / sum(a), v = sum_j alpha_j h_j.
template <typename T>
AttentionTrace<T> attend(const BasicTensor<T>& h, const AttentionParams<T>& p);

/// Accumulates parameter gradients and adds dL/dH into `dh`.
template <typename T>
void attend_backward(const AttentionTrace<T>& trace, const BasicTensor<T>& h, AttentionParams<T>& p,
                     std::span<const T> dv, BasicTensor<T>& dh);

// ---------------------------------------------------------------------------
// context encoder

template <typename T>
struct ContextTrace {
  BasicTensor<T> sequence;  // [K x sentence width]
  BiLstmTrace<T> lower;
  BiLstmTrace<T> upper;
  std::optional<AttentionTrace<T>> attention;
  BasicTensor<T> context;  // [sz]
};

/// Two stacked BiLSTM passes over `sequence`; H is the upper layer output.
template <typename T>
ContextTrace<T> encode_context(const BasicTensor<T>& sequence, const ContextEncoderParams<T>& p, bool use_attention,
                               const RecurrentDropout& drop, Rng& rng);

/// Returns dL/dsequence.
template <typename T>
BasicTensor<T> encode_context_backward(const ContextTrace<T>& trace, ContextEncoderParams<T>& p,
                                       std::span<const T> dv);

// ---------------------------------------------------------------------------
// full forward / backward

template <typename T>
struct ForwardTrace {
  Mode mode = Mode::kInfer;
  std::vector<SentenceTrace<T>> left_sentences;
  SentenceTrace<T> mid;
  std::vector<SentenceTrace<T>> right_sentences;
  ContextTrace<T> left;
  ContextTrace<T> right;
  BasicTensor<T> merged;
  BasicTensor<T> hidden;  // after ReLU
  Dropped<T> hidden_dropped;
  BasicTensor<T> logits;
  BasicTensor<T> probs;
};

/// P(y | sample) as a 2-vector. Throws NumericError naming the stage that
/// produced a non-finite value.
template <typename T>
ForwardTrace<T> forward(const ContextSample& sample, const ModelParams<T>& params, Mode mode, Rng& rng);

/// Accumulates dL/dtheta for dL/dlogits into the parameters' grad buffers.
template <typename T>
void backward(const ForwardTrace<T>& trace, ModelParams<T>& params, std::span<const T> d_logits);

/// Infer-mode probabilities for one sample.
template <typename T>
BasicTensor<T> predict_proba(const ContextSample& sample, const ModelParams<T>& params);

/// boundary[i] = argmax P(y | s_i) for i >= 1, boundary[0] = 1. Sentence
/// encodings are computed once per document.
template <typename T>
Segmentation predict_document(const EncodedDocument& doc, const ModelParams<T>& params);

}  // namespace segattn
