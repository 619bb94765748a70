// SPDX-License-Identifier: Apache-2.0
//
// Layer primitives with hand-written backward passes. Every function is a
// template over the scalar type; float is used for training and double for
// gradient checking. Backward functions add into the gradient buffers of the
// tensors they are given (see BasicTensor::enable_grad) and leave tensors
// without a buffer untouched.
#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "segattn/rng.hpp"
#include "segattn/tensor.hpp"

namespace segattn {

enum class Mode { kTrain, kInfer };

enum class Activation { kIdentity, kTanh, kSigmoid, kRelu, kSoftmax };

/// Accepts "identity", "tanh", "sigmoid", "relu", "softmax".
Activation parse_activation(std::string_view name);

// ---------------------------------------------------------------------------
// affine

/// y = x W + b for x of shape [n x p] (or [p], giving [q]).
template <typename T>
BasicTensor<T> affine(const BasicTensor<T>& x, const BasicTensor<T>& w, const BasicTensor<T>& b);

template <typename T>
void affine_backward(const BasicTensor<T>& dy, BasicTensor<T>& x, BasicTensor<T>& w, BasicTensor<T>& b);

// ---------------------------------------------------------------------------
// activations

/// Elementwise activation; softmax normalizes over the last axis.
template <typename T>
BasicTensor<T> activation(Activation kind, const BasicTensor<T>& x);

/// Backward from the activation's output `y`.
template <typename T>
void activation_backward(Activation kind, const BasicTensor<T>& y, const BasicTensor<T>& dy,
                         BasicTensor<T>& x);

template <typename T>
T apply_scalar(Activation kind, T v);

/// d activation / d input, written in terms of the output value.
template <typename T>
T derivative_from_output(Activation kind, T y);

// ---------------------------------------------------------------------------
// convolution over the rows of a sentence matrix

/// A bank of filters sharing one height. weight is [count x height x width].
template <typename T>
struct ConvFilters {
  std::size_t height = 0;
  BasicTensor<T> weight;
  BasicTensor<T> bias;

  std::size_t count() const { return bias.size(); }
  std::size_t width() const { return weight.cols(); }
};

/// Same-padded convolution: output row k sees input rows
/// [k - floor(h/2), k + ceil(h/2) - 1]; rows outside the input read as zero.
/// Returns [L x count].
template <typename T>
BasicTensor<T> conv_rows(const BasicTensor<T>& x, const ConvFilters<T>& filters, Activation act);

template <typename T>
void conv_rows_backward(const BasicTensor<T>& dy, const BasicTensor<T>& y, BasicTensor<T>& x,
                        ConvFilters<T>& filters, Activation act);

// ---------------------------------------------------------------------------
// max over rows

template <typename T>
struct RowMax {
  BasicTensor<T> values;             // [cols]
  std::vector<std::size_t> argmax;  // first maximal row per column
};

template <typename T>
RowMax<T> max_over_rows(const BasicTensor<T>& f);

template <typename T>
void max_over_rows_backward(const BasicTensor<T>& dout, const RowMax<T>& pooled, BasicTensor<T>& f);

// ---------------------------------------------------------------------------
// inverted dropout

/// Per-element multipliers (0 or 1/(1-rate)). Empty means identity, which is
/// what infer mode and rate 0 produce.
template <typename T>
std::vector<T> dropout_mask(std::size_t n, double rate, Mode mode, Rng& rng);

template <typename T>
struct Dropped {
  BasicTensor<T> out;
  std::vector<T> mask;
};

template <typename T>
Dropped<T> dropout(const BasicTensor<T>& x, double rate, Mode mode, Rng& rng);

template <typename T>
void apply_mask(std::span<T> values, std::span<const T> mask) {
  if (mask.empty()) return;
  for (std::size_t i = 0; i < values.size(); ++i) values[i] *= mask[i];
}

void check_dropout_rate(double rate);

// ---------------------------------------------------------------------------
// LSTM

/// Four-gate cell. Gate blocks within the 4*hidden axis are ordered
/// input, forget, output, candidate.
template <typename T>
struct LstmCellParams {
  std::size_t input_size = 0;
  std::size_t hidden_size = 0;
  BasicTensor<T> w_input;      // [input x 4*hidden]
  BasicTensor<T> w_recurrent;  // [hidden x 4*hidden]
  BasicTensor<T> bias;         // [4*hidden]

  /// Uniform [-0.08, 0.08] weights, zero biases except forget = 1.
  static LstmCellParams init(std::size_t input_size, std::size_t hidden_size, Rng& rng);
};

template <typename T>
struct LstmStep {
  std::vector<T> x;       // input after dropout
  std::vector<T> h_prev;  // previous hidden after dropout
  std::vector<T> c_prev;
  std::vector<T> gates;   // activated i, f, o, g
  std::vector<T> c;
  std::vector<T> tanh_c;
  std::vector<T> h;
};

template <typename T>
LstmStep<T> lstm_step(std::span<const T> x, std::span<const T> h_prev, std::span<const T> c_prev,
                      const LstmCellParams<T>& p);

/// Given gradients on this step's h and c, accumulates parameter gradients and
/// writes the gradients of x, h_prev and c_prev (pre-dropout values are the
/// caller's concern).
template <typename T>
void lstm_step_backward(const LstmStep<T>& step, LstmCellParams<T>& p, std::span<const T> dh,
                        std::span<const T> dc, std::span<T> dx, std::span<T> dh_prev,
                        std::span<T> dc_prev);

template <typename T>
struct BiLstmParams {
  LstmCellParams<T> forward;
  LstmCellParams<T> backward;

  std::size_t output_size() const { return forward.hidden_size + backward.hidden_size; }
};

struct RecurrentDropout {
  double input_rate = 0.0;
  double state_rate = 0.0;
  Mode mode = Mode::kInfer;
};

template <typename T>
struct Direction {
  std::vector<LstmStep<T>> steps;  // in processing order
  std::vector<T> input_mask;
  std::vector<T> state_mask;
};

template <typename T>
struct BiLstmTrace {
  Direction<T> fwd;
  Direction<T> bwd;
  BasicTensor<T> output;  // [steps x 2*hidden], row t = [h_fwd(t) ; h_bwd(t)]
};

/// Runs both directions over the rows of `seq` ([steps x input]) from zero
/// initial states. Dropout masks are drawn once per direction per call.
template <typename T>
BiLstmTrace<T> bilstm_run(const BasicTensor<T>& seq, const BiLstmParams<T>& p, const RecurrentDropout& drop,
                          Rng& rng);

/// Returns the gradient with respect to `seq`.
template <typename T>
BasicTensor<T> bilstm_backward(const BiLstmTrace<T>& trace, BiLstmParams<T>& p, const BasicTensor<T>& d_output);

}  // namespace segattn
