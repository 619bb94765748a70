// SPDX-License-Identifier: Apache-2.0
#include "segattn/layers.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace segattn {

Activation parse_activation(std::string_view name) {
  if (name == "identity") return Activation::kIdentity;
  if (name == "tanh") return Activation::kTanh;
  if (name == "sigmoid") return Activation::kSigmoid;
  if (name == "relu") return Activation::kRelu;
  if (name == "softmax") return Activation::kSoftmax;
  throw ConfigError("unknown activation '" + std::string(name) + "'");
}

void check_dropout_rate(double rate) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw ConfigError("dropout rate must be in [0, 1), got " + std::to_string(rate));
  }
}

namespace {

template <typename T>
T sigmoid(T v) {
  if (v >= T(0)) return T(1) / (T(1) + std::exp(-v));
  const T e = std::exp(v);
  return e / (T(1) + e);
}

// Fixed-order dot product with eight interleaved partial sums. The split lets
// the compiler vectorize without -ffast-math while keeping results bitwise
// reproducible from run to run.
template <typename T>
T dot(const T* a, const T* b, std::size_t n) {
  T lane[8] = {};
  std::size_t j = 0;
  for (; j + 8 <= n; j += 8) {
    for (std::size_t u = 0; u < 8; ++u) lane[u] += a[j + u] * b[j + u];
  }
  T acc = ((lane[0] + lane[4]) + (lane[1] + lane[5])) + ((lane[2] + lane[6]) + (lane[3] + lane[7]));
  for (; j < n; ++j) acc += a[j] * b[j];
  return acc;
}

// Row view of a tensor as [rows x cols], vectors being a single row.
template <typename T>
std::size_t row_count(const BasicTensor<T>& t) {
  return t.rank() >= 2 ? t.size() / t.cols() : 1;
}

template <typename T>
void softmax_row(std::span<const T> in, std::span<T> out) {
  const T peak = *std::max_element(in.begin(), in.end());
  T sum = 0;
  for (std::size_t i = 0; i < in.size(); ++i) {
    out[i] = std::exp(in[i] - peak);
    sum += out[i];
  }
  for (auto& v : out) v /= sum;
}

}  // namespace

template <typename T>
T apply_scalar(Activation kind, T v) {
  switch (kind) {
    case Activation::kIdentity: return v;
    case Activation::kTanh: return std::tanh(v);
    case Activation::kSigmoid: return sigmoid(v);
    case Activation::kRelu: return v < T(0) ? T(0) : v;  // NaN passes through
    case Activation::kSoftmax: break;
  }
  throw ConfigError("softmax is not an elementwise activation");
}

template <typename T>
T derivative_from_output(Activation kind, T y) {
  switch (kind) {
    case Activation::kIdentity: return T(1);
    case Activation::kTanh: return T(1) - y * y;
    case Activation::kSigmoid: return y * (T(1) - y);
    case Activation::kRelu: return y > T(0) ? T(1) : T(0);
    case Activation::kSoftmax: break;
  }
  throw ConfigError("softmax is not an elementwise activation");
}

// ---------------------------------------------------------------------------

template <typename T>
BasicTensor<T> affine(const BasicTensor<T>& x, const BasicTensor<T>& w, const BasicTensor<T>& b) {
  const std::size_t n = row_count(x);
  const std::size_t p = x.cols();
  if (w.rank() != 2 || w.dim(0) != p || b.size() != w.dim(1) || x.rank() > 2) {
    throw DimensionError("affine: x " + x.shape_str() + " incompatible with W " + w.shape_str() + " and b " +
                         b.shape_str());
  }
  const std::size_t q = w.dim(1);
  BasicTensor<T> y(x.rank() == 1 ? Shape{q} : Shape{n, q});
  for (std::size_t r = 0; r < n; ++r) {
    T* out = y.data() + r * q;
    std::copy(b.data(), b.data() + q, out);
    const T* in = x.data() + r * p;
    for (std::size_t k = 0; k < p; ++k) {
      const T xv = in[k];
      const T* wrow = w.data() + k * q;
      for (std::size_t j = 0; j < q; ++j) out[j] += xv * wrow[j];
    }
  }
  return y;
}

template <typename T>
void affine_backward(const BasicTensor<T>& dy, BasicTensor<T>& x, BasicTensor<T>& w, BasicTensor<T>& b) {
  const std::size_t n = row_count(x);
  const std::size_t p = x.cols();
  const std::size_t q = w.dim(1);
  if (dy.size() != n * q) {
    throw DimensionError("affine_backward: dy " + dy.shape_str() + " does not match output of x " +
                         x.shape_str() + " and W " + w.shape_str());
  }
  const bool gx = x.has_grad(), gw = w.has_grad(), gb = b.has_grad();
  for (std::size_t r = 0; r < n; ++r) {
    const T* d = dy.data() + r * q;
    const T* in = x.data() + r * p;
    if (gb) {
      auto bg = b.grad();
      for (std::size_t j = 0; j < q; ++j) bg[j] += d[j];
    }
    for (std::size_t k = 0; k < p; ++k) {
      const T* wrow = w.data() + k * q;
      if (gw) {
        T* wg = w.grad().data() + k * q;
        const T xv = in[k];
        for (std::size_t j = 0; j < q; ++j) wg[j] += xv * d[j];
      }
      if (gx) {
        T acc = 0;
        for (std::size_t j = 0; j < q; ++j) acc += wrow[j] * d[j];
        x.grad()[r * p + k] += acc;
      }
    }
  }
}

// ---------------------------------------------------------------------------

template <typename T>
BasicTensor<T> activation(Activation kind, const BasicTensor<T>& x) {
  BasicTensor<T> y(x.shape());
  if (kind == Activation::kSoftmax) {
    const std::size_t n = row_count(x), c = x.cols();
    for (std::size_t r = 0; r < n; ++r) {
      softmax_row<T>(x.values().subspan(r * c, c), y.values().subspan(r * c, c));
    }
    return y;
  }
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = apply_scalar(kind, x[i]);
  return y;
}

template <typename T>
void activation_backward(Activation kind, const BasicTensor<T>& y, const BasicTensor<T>& dy, BasicTensor<T>& x) {
  if (!x.has_grad()) return;
  auto g = x.grad();
  if (kind == Activation::kSoftmax) {
    const std::size_t n = row_count(y), c = y.cols();
    for (std::size_t r = 0; r < n; ++r) {
      T dot = 0;
      for (std::size_t j = 0; j < c; ++j) dot += y[r * c + j] * dy[r * c + j];
      for (std::size_t j = 0; j < c; ++j) g[r * c + j] += y[r * c + j] * (dy[r * c + j] - dot);
    }
    return;
  }
  for (std::size_t i = 0; i < y.size(); ++i) g[i] += dy[i] * derivative_from_output(kind, y[i]);
}

// ---------------------------------------------------------------------------

template <typename T>
BasicTensor<T> conv_rows(const BasicTensor<T>& x, const ConvFilters<T>& filters, Activation act) {
  if (x.rank() != 2) throw DimensionError("conv_rows: input must be a matrix, got " + x.shape_str());
  const std::size_t rows = x.dim(0), width = x.dim(1), h = filters.height;
  if (filters.weight.rank() != 3 || filters.weight.dim(1) != h || filters.weight.dim(2) != width ||
      filters.weight.dim(0) != filters.count()) {
    throw DimensionError("conv_rows: filters " + filters.weight.shape_str() + " incompatible with input " +
                         x.shape_str());
  }
  if (h > rows) {
    throw ConfigError("conv_rows: filter height " + std::to_string(h) + " exceeds input length " +
                      std::to_string(rows));
  }
  const std::size_t n = filters.count();
  const std::ptrdiff_t lead = static_cast<std::ptrdiff_t>(h / 2);
  BasicTensor<T> y({rows, n});
  for (std::size_t k = 0; k < rows; ++k) {
    const std::ptrdiff_t start = static_cast<std::ptrdiff_t>(k) - lead;
    const std::size_t r0 = start < 0 ? static_cast<std::size_t>(-start) : 0;
    const std::size_t r1 = std::min(h, static_cast<std::size_t>(static_cast<std::ptrdiff_t>(rows) - start));
    const std::size_t src0 = static_cast<std::size_t>(start + static_cast<std::ptrdiff_t>(r0));
    for (std::size_t l = 0; l < n; ++l) {
      T acc = filters.bias[l];
      // the in-range filter rows and input rows are both contiguous
      acc += dot(filters.weight.data() + (l * h + r0) * width, x.data() + src0 * width, (r1 - r0) * width);
      y(k, l) = apply_scalar(act, acc);
    }
  }
  return y;
}

template <typename T>
void conv_rows_backward(const BasicTensor<T>& dy, const BasicTensor<T>& y, BasicTensor<T>& x,
                        ConvFilters<T>& filters, Activation act) {
  const std::size_t rows = x.dim(0), width = x.dim(1), h = filters.height, n = filters.count();
  const std::ptrdiff_t lead = static_cast<std::ptrdiff_t>(h / 2);
  const bool gx = x.has_grad(), gw = filters.weight.has_grad(), gb = filters.bias.has_grad();
  for (std::size_t k = 0; k < rows; ++k) {
    for (std::size_t l = 0; l < n; ++l) {
      const T dpre = dy(k, l) * derivative_from_output(act, y(k, l));
      if (dpre == T(0)) continue;
      if (gb) filters.bias.grad()[l] += dpre;
      for (std::size_t r = 0; r < h; ++r) {
        const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(k) - lead + static_cast<std::ptrdiff_t>(r);
        if (src < 0 || src >= static_cast<std::ptrdiff_t>(rows)) continue;
        const std::size_t s = static_cast<std::size_t>(src);
        const T* wv = filters.weight.data() + (l * h + r) * width;
        const T* xv = x.data() + s * width;
        if (gw) {
          T* wg = filters.weight.grad().data() + (l * h + r) * width;
          for (std::size_t c = 0; c < width; ++c) wg[c] += dpre * xv[c];
        }
        if (gx) {
          T* xg = x.grad().data() + s * width;
          for (std::size_t c = 0; c < width; ++c) xg[c] += dpre * wv[c];
        }
      }
    }
  }
}

// ---------------------------------------------------------------------------

template <typename T>
RowMax<T> max_over_rows(const BasicTensor<T>& f) {
  if (f.empty()) throw DimensionError("max_over_rows: empty input");
  const std::size_t rows = row_count(f), cols = f.cols();
  RowMax<T> out{BasicTensor<T>({cols}), std::vector<std::size_t>(cols, 0)};
  for (std::size_t c = 0; c < cols; ++c) out.values[c] = f[c];
  for (std::size_t r = 1; r < rows; ++r) {
    const T* row = f.data() + r * cols;
    for (std::size_t c = 0; c < cols; ++c) {
      if (row[c] > out.values[c]) {
        out.values[c] = row[c];
        out.argmax[c] = r;
      }
    }
  }
  return out;
}

template <typename T>
void max_over_rows_backward(const BasicTensor<T>& dout, const RowMax<T>& pooled, BasicTensor<T>& f) {
  if (!f.has_grad()) return;
  const std::size_t cols = f.cols();
  for (std::size_t c = 0; c < cols; ++c) f.grad()[pooled.argmax[c] * cols + c] += dout[c];
}

// ---------------------------------------------------------------------------

template <typename T>
std::vector<T> dropout_mask(std::size_t n, double rate, Mode mode, Rng& rng) {
  check_dropout_rate(rate);
  if (mode == Mode::kInfer || rate == 0.0) return {};
  const T keep_scale = static_cast<T>(1.0 / (1.0 - rate));
  std::vector<T> mask(n);
  for (auto& m : mask) m = rng.uniform() < rate ? T(0) : keep_scale;
  return mask;
}

template <typename T>
Dropped<T> dropout(const BasicTensor<T>& x, double rate, Mode mode, Rng& rng) {
  Dropped<T> out{x, dropout_mask<T>(x.size(), rate, mode, rng)};
  out.out.drop_grad();
  apply_mask<T>(out.out.values(), out.mask);
  return out;
}

// ---------------------------------------------------------------------------

template <typename T>
LstmCellParams<T> LstmCellParams<T>::init(std::size_t input_size, std::size_t hidden_size, Rng& rng) {
  LstmCellParams p;
  p.input_size = input_size;
  p.hidden_size = hidden_size;
  p.w_input = BasicTensor<T>({input_size, 4 * hidden_size});
  p.w_recurrent = BasicTensor<T>({hidden_size, 4 * hidden_size});
  p.bias = BasicTensor<T>({4 * hidden_size});
  for (auto& v : p.w_input.values()) v = static_cast<T>(rng.uniform(-0.08, 0.08));
  for (auto& v : p.w_recurrent.values()) v = static_cast<T>(rng.uniform(-0.08, 0.08));
  for (std::size_t j = hidden_size; j < 2 * hidden_size; ++j) p.bias[j] = T(1);
  return p;
}

template <typename T>
LstmStep<T> lstm_step(std::span<const T> x, std::span<const T> h_prev, std::span<const T> c_prev,
                      const LstmCellParams<T>& p) {
  const std::size_t in = p.input_size, hid = p.hidden_size, g4 = 4 * hid;
  if (x.size() != in || h_prev.size() != hid || c_prev.size() != hid) {
    throw DimensionError("lstm_step: x[" + std::to_string(x.size()) + "], h[" + std::to_string(h_prev.size()) +
                         "], c[" + std::to_string(c_prev.size()) + "] for cell [" + std::to_string(in) + " -> " +
                         std::to_string(hid) + "]");
  }
  LstmStep<T> s;
  s.x.assign(x.begin(), x.end());
  s.h_prev.assign(h_prev.begin(), h_prev.end());
  s.c_prev.assign(c_prev.begin(), c_prev.end());
  s.gates.assign(p.bias.data(), p.bias.data() + g4);
  T* z = s.gates.data();
  for (std::size_t k = 0; k < in; ++k) {
    const T xv = x[k];
    if (xv == T(0)) continue;
    const T* w = p.w_input.data() + k * g4;
    for (std::size_t j = 0; j < g4; ++j) z[j] += xv * w[j];
  }
  for (std::size_t k = 0; k < hid; ++k) {
    const T hv = h_prev[k];
    if (hv == T(0)) continue;
    const T* w = p.w_recurrent.data() + k * g4;
    for (std::size_t j = 0; j < g4; ++j) z[j] += hv * w[j];
  }
  for (std::size_t j = 0; j < 3 * hid; ++j) z[j] = sigmoid(z[j]);
  for (std::size_t j = 3 * hid; j < g4; ++j) z[j] = std::tanh(z[j]);
  s.c.resize(hid);
  s.tanh_c.resize(hid);
  s.h.resize(hid);
  for (std::size_t j = 0; j < hid; ++j) {
    const T i = z[j], f = z[hid + j], o = z[2 * hid + j], g = z[3 * hid + j];
    s.c[j] = f * c_prev[j] + i * g;
    s.tanh_c[j] = std::tanh(s.c[j]);
    s.h[j] = o * s.tanh_c[j];
  }
  return s;
}

template <typename T>
void lstm_step_backward(const LstmStep<T>& s, LstmCellParams<T>& p, std::span<const T> dh, std::span<const T> dc,
                        std::span<T> dx, std::span<T> dh_prev, std::span<T> dc_prev) {
  const std::size_t in = p.input_size, hid = p.hidden_size, g4 = 4 * hid;
  std::vector<T> dz(g4);
  const T* z = s.gates.data();
  for (std::size_t j = 0; j < hid; ++j) {
    const T i = z[j], f = z[hid + j], o = z[2 * hid + j], g = z[3 * hid + j];
    const T tc = s.tanh_c[j];
    const T dct = dc[j] + dh[j] * o * (T(1) - tc * tc);
    dz[j] = dct * g * i * (T(1) - i);
    dz[hid + j] = dct * s.c_prev[j] * f * (T(1) - f);
    dz[2 * hid + j] = dh[j] * tc * o * (T(1) - o);
    dz[3 * hid + j] = dct * i * (T(1) - g * g);
    dc_prev[j] = dct * f;
  }
  if (p.bias.has_grad()) {
    auto bg = p.bias.grad();
    for (std::size_t j = 0; j < g4; ++j) bg[j] += dz[j];
  }
  const bool gwx = p.w_input.has_grad(), gwh = p.w_recurrent.has_grad();
  for (std::size_t k = 0; k < in; ++k) {
    const T* w = p.w_input.data() + k * g4;
    dx[k] = dot(w, dz.data(), g4);
    if (gwx && s.x[k] != T(0)) {
      T* wg = p.w_input.grad().data() + k * g4;
      const T xv = s.x[k];
      for (std::size_t j = 0; j < g4; ++j) wg[j] += xv * dz[j];
    }
  }
  for (std::size_t k = 0; k < hid; ++k) {
    const T* w = p.w_recurrent.data() + k * g4;
    dh_prev[k] = dot(w, dz.data(), g4);
    if (gwh && s.h_prev[k] != T(0)) {
      T* wg = p.w_recurrent.grad().data() + k * g4;
      const T hv = s.h_prev[k];
      for (std::size_t j = 0; j < g4; ++j) wg[j] += hv * dz[j];
    }
  }
}

// ---------------------------------------------------------------------------

namespace {

template <typename T>
Direction<T> run_direction(const BasicTensor<T>& seq, const LstmCellParams<T>& cell, bool reverse,
                           const RecurrentDropout& drop, Rng& rng) {
  const std::size_t steps = seq.dim(0), in = seq.dim(1), hid = cell.hidden_size;
  Direction<T> dir;
  dir.input_mask = dropout_mask<T>(in, drop.input_rate, drop.mode, rng);
  dir.state_mask = dropout_mask<T>(hid, drop.state_rate, drop.mode, rng);
  dir.steps.reserve(steps);
  std::vector<T> x(in), h(hid, T(0)), c(hid, T(0));
  for (std::size_t n = 0; n < steps; ++n) {
    const std::size_t t = reverse ? steps - 1 - n : n;
    auto src = seq.row(t);
    std::copy(src.begin(), src.end(), x.begin());
    apply_mask<T>(x, dir.input_mask);
    apply_mask<T>(h, dir.state_mask);
    dir.steps.push_back(lstm_step<T>(x, h, c, cell));
    h = dir.steps.back().h;
    c = dir.steps.back().c;
  }
  return dir;
}

template <typename T>
void backprop_direction(const Direction<T>& dir, LstmCellParams<T>& cell, bool reverse, std::size_t column_offset,
                        const BasicTensor<T>& d_output, BasicTensor<T>& d_seq) {
  const std::size_t steps = dir.steps.size(), in = cell.input_size, hid = cell.hidden_size;
  std::vector<T> dh(hid, T(0)), dc(hid, T(0)), dx(in), dh_prev(hid), dc_prev(hid);
  for (std::size_t n = steps; n-- > 0;) {
    const std::size_t t = reverse ? steps - 1 - n : n;
    const T* dout = d_output.data() + t * d_output.cols() + column_offset;
    for (std::size_t j = 0; j < hid; ++j) dh[j] += dout[j];
    lstm_step_backward<T>(dir.steps[n], cell, dh, dc, dx, dh_prev, dc_prev);
    apply_mask<T>(dx, dir.input_mask);
    apply_mask<T>(dh_prev, dir.state_mask);
    T* dseq = d_seq.data() + t * in;
    for (std::size_t k = 0; k < in; ++k) dseq[k] += dx[k];
    dh = dh_prev;
    dc = dc_prev;
  }
}

}  // namespace

template <typename T>
BiLstmTrace<T> bilstm_run(const BasicTensor<T>& seq, const BiLstmParams<T>& p, const RecurrentDropout& drop,
                          Rng& rng) {
  if (seq.rank() != 2) throw DimensionError("bilstm_run: sequence must be [steps x input], got " + seq.shape_str());
  if (seq.dim(1) != p.forward.input_size || seq.dim(1) != p.backward.input_size) {
    throw DimensionError("bilstm_run: sequence " + seq.shape_str() + " does not match cell input size " +
                         std::to_string(p.forward.input_size));
  }
  BiLstmTrace<T> trace;
  trace.fwd = run_direction(seq, p.forward, false, drop, rng);
  trace.bwd = run_direction(seq, p.backward, true, drop, rng);
  const std::size_t steps = seq.dim(0), hf = p.forward.hidden_size, hb = p.backward.hidden_size;
  trace.output = BasicTensor<T>({steps, hf + hb});
  for (std::size_t t = 0; t < steps; ++t) {
    auto row = trace.output.row(t);
    const auto& f = trace.fwd.steps[t].h;
    const auto& b = trace.bwd.steps[steps - 1 - t].h;
    std::copy(f.begin(), f.end(), row.begin());
    std::copy(b.begin(), b.end(), row.begin() + static_cast<std::ptrdiff_t>(hf));
  }
  return trace;
}

template <typename T>
BasicTensor<T> bilstm_backward(const BiLstmTrace<T>& trace, BiLstmParams<T>& p, const BasicTensor<T>& d_output) {
  if (d_output.shape() != trace.output.shape()) {
    throw DimensionError("bilstm_backward: gradient " + d_output.shape_str() + " vs output " +
                         trace.output.shape_str());
  }
  BasicTensor<T> d_seq({trace.output.dim(0), p.forward.input_size});
  backprop_direction(trace.fwd, p.forward, false, 0, d_output, d_seq);
  backprop_direction(trace.bwd, p.backward, true, p.forward.hidden_size, d_output, d_seq);
  return d_seq;
}

// ---------------------------------------------------------------------------

#define SEGATTN_INSTANTIATE(T)                                                                                   \
  template T apply_scalar<T>(Activation, T);                                                                     \
  template T derivative_from_output<T>(Activation, T);                                                           \
  template BasicTensor<T> affine<T>(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&);        \
  template void affine_backward<T>(const BasicTensor<T>&, BasicTensor<T>&, BasicTensor<T>&, BasicTensor<T>&);    \
  template BasicTensor<T> activation<T>(Activation, const BasicTensor<T>&);                                      \
  template void activation_backward<T>(Activation, const BasicTensor<T>&, const BasicTensor<T>&,                 \
                                       BasicTensor<T>&);                                                         \
  template BasicTensor<T> conv_rows<T>(const BasicTensor<T>&, const ConvFilters<T>&, Activation);                \
  template void conv_rows_backward<T>(const BasicTensor<T>&, const BasicTensor<T>&, BasicTensor<T>&,             \
                                      ConvFilters<T>&, Activation);                                              \
  template RowMax<T> max_over_rows<T>(const BasicTensor<T>&);                                                    \
  template void max_over_rows_backward<T>(const BasicTensor<T>&, const RowMax<T>&, BasicTensor<T>&);             \
  template std::vector<T> dropout_mask<T>(std::size_t, double, Mode, Rng&);                                      \
  template Dropped<T> dropout<T>(const BasicTensor<T>&, double, Mode, Rng&);                                     \
  template struct LstmCellParams<T>;                                                                             \
  template LstmStep<T> lstm_step<T>(std::span<const T>, std::span<const T>, std::span<const T>,                  \
                                    const LstmCellParams<T>&);                                                   \
  template void lstm_step_backward<T>(const LstmStep<T>&, LstmCellParams<T>&, std::span<const T>,                \
                                      std::span<const T>, std::span<T>, std::span<T>, std::span<T>);             \
  template BiLstmTrace<T> bilstm_run<T>(const BasicTensor<T>&, const BiLstmParams<T>&, const RecurrentDropout&,  \
                                        Rng&);                                                                   \
  template BasicTensor<T> bilstm_backward<T>(const BiLstmTrace<T>&, BiLstmParams<T>&, const BasicTensor<T>&);

SEGATTN_INSTANTIATE(float)
SEGATTN_INSTANTIATE(double)

#undef SEGATTN_INSTANTIATE

}  // namespace segattn
