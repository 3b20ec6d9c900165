#include "stpd/autodiff.hpp"

#include "stpd/parallel.hpp"

#include <algorithm>
#include <cmath>

namespace stpd::ad {

// ---------------------------------------------------------------------------
// Graph

template <typename Real>
Var Graph<Real>::constant(Tensor<Real> value)
{
  nodes_.push_back(Node{std::move(value), {}, {}, {}, nullptr, false});
  return {nodes_.size() - 1};
}

template <typename Real>
Var Graph<Real>::parameter(Parameter<Real> &p)
{
  nodes_.push_back(Node{p.value, {}, {}, {}, &p, true});
  return {nodes_.size() - 1};
}

template <typename Real>
Var Graph<Real>::record(Tensor<Real> value, std::vector<Var> inputs, BackwardFn fn)
{
  bool needs = false;
  for (auto v : inputs) {
    if (!v.valid() || v.id >= nodes_.size()) { throw ParameterError("graph: input refers to an unknown node"); }
    needs = needs || nodes_[v.id].requires_grad;
  }
  nodes_.push_back(Node{std::move(value), {}, std::move(inputs), needs ? std::move(fn) : BackwardFn{}, nullptr, needs});
  return {nodes_.size() - 1};
}

template <typename Real>
Tensor<Real> &Graph<Real>::grad(Var v)
{
  auto &n = nodes_.at(v.id);
  if (n.grad.empty()) { n.grad = Tensor<Real>(n.value.shape()); }
  return n.grad;
}

template <typename Real>
void Graph<Real>::backward(Var loss)
{
  if (value(loss).size() != 1) { throw ParameterError("backward: loss must have exactly one element"); }
  grad(loss).fill(Real(1));
  for (std::size_t id = loss.id + 1; id-- > 0;) {
    auto &n = nodes_[id];
    if (!n.requires_grad || n.grad.empty()) { continue; }
    if (n.param) {
      auto dst = n.param->grad.data();
      auto const src = n.grad.data();
      for (std::size_t i = 0; i < dst.size(); ++i) { dst[i] += src[i]; }
    } else if (n.backward) {
      n.backward(*this, id);
    }
  }
}

template class Graph<float>;
template class Graph<double>;

namespace {

template <typename Real>
void accumulate(Tensor<Real> &dst, Tensor<Real> const &src)
{
  auto d = dst.data();
  auto const s = src.data();
  for (std::size_t i = 0; i < d.size(); ++i) { d[i] += s[i]; }
}

// ---------------------------------------------------------------------------
// conv3d kernels

struct ConvDims
{
  std::size_t N, Ci, Co, T, H, W, KT, KH, KW;
  std::size_t plane() const { return H * W; }
};

// out[n, co] (+)= sum_ci w[co, ci] * in[n, ci] (cross-correlation, same padding).
// `wfetch(co, ci, kt, kh, kw)` supplies the weight so the input-gradient pass
// can reuse this with a flipped, channel-transposed kernel.
template <typename Real, typename WFetch>
void correlate(ConvDims const &d, Real const *in, Real *out, WFetch const &wfetch)
{
  long const pt = static_cast<long>(d.KT / 2), ph = static_cast<long>(d.KH / 2), pw = static_cast<long>(d.KW / 2);
  long const T = static_cast<long>(d.T), H = static_cast<long>(d.H), W = static_cast<long>(d.W);
  auto const plane = d.plane();
  parallel_for(d.N * d.Co, [&](std::size_t job) {
    std::size_t const n = job / d.Co, co = job % d.Co;
    for (long t = 0; t < T; ++t) {
      Real *o = out + ((n * d.Co + co) * d.T + static_cast<std::size_t>(t)) * plane;
      for (std::size_t ci = 0; ci < d.Ci; ++ci) {
        for (std::size_t kt = 0; kt < d.KT; ++kt) {
          long const ti = t + static_cast<long>(kt) - pt;
          if (ti < 0 || ti >= T) { continue; }
          Real const *ip = in + ((n * d.Ci + ci) * d.T + static_cast<std::size_t>(ti)) * plane;
          for (std::size_t kh = 0; kh < d.KH; ++kh) {
            long const dh = static_cast<long>(kh) - ph;
            long const h0 = std::max(0L, -dh), h1 = std::min(H, H - dh);
            if (d.KW == 3 && W >= 2) {
              Real const a = wfetch(co, ci, kt, kh, 0);
              Real const b = wfetch(co, ci, kt, kh, 1);
              Real const c = wfetch(co, ci, kt, kh, 2);
              for (long h = h0; h < h1; ++h) {
                Real *orow = o + h * W;
                Real const *irow = ip + (h + dh) * W;
                orow[0] += b * irow[0] + c * irow[1];
#pragma omp simd
                for (long w = 1; w < W - 1; ++w) { orow[w] += a * irow[w - 1] + b * irow[w] + c * irow[w + 1]; }
                orow[W - 1] += a * irow[W - 2] + b * irow[W - 1];
              }
              continue;
            }
            for (std::size_t kw = 0; kw < d.KW; ++kw) {
              long const dw = static_cast<long>(kw) - pw;
              long const w0 = std::max(0L, -dw), w1 = std::min(W, W - dw);
              Real const wv = wfetch(co, ci, kt, kh, kw);
              for (long h = h0; h < h1; ++h) {
                Real *orow = o + h * W;
                Real const *irow = ip + (h + dh) * W + dw;
#pragma omp simd
                for (long w = w0; w < w1; ++w) { orow[w] += wv * irow[w]; }
              }
            }
          }
        }
      }
    }
  });
}

template <typename Real>
void conv_weight_grad(ConvDims const &d, Real const *in, Real const *gout, Real *gw, Real *gb)
{
  long const pt = static_cast<long>(d.KT / 2), ph = static_cast<long>(d.KH / 2), pw = static_cast<long>(d.KW / 2);
  long const T = static_cast<long>(d.T), H = static_cast<long>(d.H), W = static_cast<long>(d.W);
  auto const plane = d.plane();
  std::size_t const taps = d.KT * d.KH * d.KW;
  parallel_for(d.Co, [&](std::size_t co) {
    if (gb) {
      double s = 0;
      for (std::size_t n = 0; n < d.N; ++n) {
        Real const *g = gout + (n * d.Co + co) * d.T * plane;
        Real part = 0;
#pragma omp simd reduction(+ : part)
        for (std::size_t i = 0; i < d.T * plane; ++i) { part += g[i]; }
        s += part;
      }
      gb[co] += static_cast<Real>(s);
    }
    std::vector<double> acc(taps);
    for (std::size_t ci = 0; ci < d.Ci; ++ci) {
      std::fill(acc.begin(), acc.end(), 0.0);
      for (std::size_t n = 0; n < d.N; ++n) {
        for (long t = 0; t < T; ++t) {
          Real const *g = gout + ((n * d.Co + co) * d.T + static_cast<std::size_t>(t)) * plane;
          for (std::size_t kt = 0; kt < d.KT; ++kt) {
            long const ti = t + static_cast<long>(kt) - pt;
            if (ti < 0 || ti >= T) { continue; }
            Real const *ip = in + ((n * d.Ci + ci) * d.T + static_cast<std::size_t>(ti)) * plane;
            for (std::size_t kh = 0; kh < d.KH; ++kh) {
              long const dh = static_cast<long>(kh) - ph;
              long const h0 = std::max(0L, -dh), h1 = std::min(H, H - dh);
              for (std::size_t kw = 0; kw < d.KW; ++kw) {
                long const dw = static_cast<long>(kw) - pw;
                long const w0 = std::max(0L, -dw), w1 = std::min(W, W - dw);
                Real part = 0;
                for (long h = h0; h < h1; ++h) {
                  Real const *grow = g + h * W;
                  Real const *irow = ip + (h + dh) * W + dw;
#pragma omp simd reduction(+ : part)
                  for (long w = w0; w < w1; ++w) { part += grow[w] * irow[w]; }
                }
                acc[(kt * d.KH + kh) * d.KW + kw] += part;
              }
            }
          }
        }
      }
      Real *dst = gw + (co * d.Ci + ci) * taps;
      for (std::size_t k = 0; k < taps; ++k) { dst[k] += static_cast<Real>(acc[k]); }
    }
  });
}

} // namespace

template <typename Real>
Var conv3d(Graph<Real> &g, Var input, Var weight, Var bias)
{
  auto const &x = g.value(input);
  auto const &w = g.value(weight);
  auto const &b = g.value(bias);
  if (x.rank() != 5) { throw ParameterError("conv3d: input must be N x C x T x H x W, got " + shape_string(x.shape())); }
  if (w.rank() != 5) { throw ParameterError("conv3d: weight must be rank 5, got " + shape_string(w.shape())); }
  if (w.dim(1) != x.dim(1)) {
    throw ParameterError("conv3d: channel mismatch, input has " + std::to_string(x.dim(1)) + ", weight expects " +
                         std::to_string(w.dim(1)));
  }
  for (std::size_t a = 2; a < 5; ++a) {
    if (w.dim(a) % 2 == 0) { throw ParameterError("conv3d: kernel extents must be odd"); }
  }
  if (b.rank() != 1 || b.dim(0) != w.dim(0)) { throw ParameterError("conv3d: bias must have C_out elements"); }

  ConvDims const d{x.dim(0), x.dim(1), w.dim(0), x.dim(2), x.dim(3), x.dim(4), w.dim(2), w.dim(3), w.dim(4)};
  Tensor<Real> out({d.N, d.Co, d.T, d.H, d.W});
  auto const plane = d.plane();
  for (std::size_t n = 0; n < d.N; ++n) {
    for (std::size_t co = 0; co < d.Co; ++co) {
      std::fill_n(out.data().data() + (n * d.Co + co) * d.T * plane, d.T * plane, b[co]);
    }
  }
  std::size_t const taps = d.KT * d.KH * d.KW;
  Real const *wp = w.data().data();
  correlate<Real>(d, x.data().data(), out.data().data(),
                  [&](std::size_t co, std::size_t ci, std::size_t kt, std::size_t kh, std::size_t kw) {
                    return wp[(co * d.Ci + ci) * taps + (kt * d.KH + kh) * d.KW + kw];
                  });

  return g.record(std::move(out), {input, weight, bias}, [d, input, weight, bias](Graph<Real> &gr, std::size_t self) {
    auto const &gout = gr.grad(Var{self});
    std::size_t const taps = d.KT * d.KH * d.KW;
    if (gr.requires_grad(input)) {
      auto &gin = gr.grad(input);
      Real const *wp = gr.value(weight).data().data();
      // input gradient = correlation of gout with the flipped kernel, channels swapped
      ConvDims const t{d.N, d.Co, d.Ci, d.T, d.H, d.W, d.KT, d.KH, d.KW};
      correlate<Real>(t, gout.data().data(), gin.data().data(),
                      [&](std::size_t ci, std::size_t co, std::size_t kt, std::size_t kh, std::size_t kw) {
                        return wp[(co * d.Ci + ci) * taps + ((d.KT - 1 - kt) * d.KH + (d.KH - 1 - kh)) * d.KW +
                                  (d.KW - 1 - kw)];
                      });
    }
    bool const need_w = gr.requires_grad(weight), need_b = gr.requires_grad(bias);
    if (need_w || need_b) {
      Tensor<Real> gw(gr.value(weight).shape());
      Tensor<Real> gb(gr.value(bias).shape());
      conv_weight_grad<Real>(d, gr.value(input).data().data(), gout.data().data(), gw.data().data(),
                             gb.data().data());
      if (need_w) { accumulate(gr.grad(weight), gw); }
      if (need_b) { accumulate(gr.grad(bias), gb); }
    }
  });
}

template <typename Real>
Tensor<Real> conv3d_reference(Tensor<Real> const &input, Tensor<Real> const &weight, Tensor<Real> const &bias)
{
  auto const N = input.dim(0), Ci = input.dim(1), T = input.dim(2), H = input.dim(3), W = input.dim(4);
  auto const Co = weight.dim(0), KT = weight.dim(2), KH = weight.dim(3), KW = weight.dim(4);
  if (weight.dim(1) != Ci) { throw ParameterError("conv3d_reference: channel mismatch"); }
  Tensor<Real> out({N, Co, T, H, W});
  auto in_at = [&](std::size_t n, std::size_t c, long t, long h, long w) -> double {
    if (t < 0 || h < 0 || w < 0 || t >= static_cast<long>(T) || h >= static_cast<long>(H) ||
        w >= static_cast<long>(W)) {
      return 0.0;
    }
    return input[(((n * Ci + c) * T + static_cast<std::size_t>(t)) * H + static_cast<std::size_t>(h)) * W +
                 static_cast<std::size_t>(w)];
  };
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t co = 0; co < Co; ++co)
      for (std::size_t t = 0; t < T; ++t)
        for (std::size_t h = 0; h < H; ++h)
          for (std::size_t w = 0; w < W; ++w) {
            double s = bias[co];
            for (std::size_t ci = 0; ci < Ci; ++ci)
              for (std::size_t a = 0; a < KT; ++a)
                for (std::size_t b = 0; b < KH; ++b)
                  for (std::size_t c = 0; c < KW; ++c) {
                    double const wv = weight[(((co * Ci + ci) * KT + a) * KH + b) * KW + c];
                    s += wv * in_at(n, ci, static_cast<long>(t + a) - static_cast<long>(KT / 2),
                                    static_cast<long>(h + b) - static_cast<long>(KH / 2),
                                    static_cast<long>(w + c) - static_cast<long>(KW / 2));
                  }
            out[(((n * Co + co) * T + t) * H + h) * W + w] = static_cast<Real>(s);
          }
  return out;
}

// ---------------------------------------------------------------------------
// batch norm

template <typename Real>
BatchNormState<Real>::BatchNormState(std::string const &name, std::size_t channels)
  : gamma(name + ".gamma", Tensor<Real>({channels}, Real(1)))
  , beta(name + ".beta", Tensor<Real>({channels}, Real(0)))
  , running_mean({channels}, Real(0))
  , running_var({channels}, Real(1))
{
}

template <typename Real>
Var batch_norm(Graph<Real> &g, Var input, BatchNormState<Real> &state)
{
  // created first: adding nodes may move earlier node values
  Var gamma = g.parameter(state.gamma);
  Var beta = g.parameter(state.beta);
  auto const &x = g.value(input);
  if (x.rank() < 2 || x.dim(1) != state.channels()) {
    throw ParameterError("batch_norm: expected " + std::to_string(state.channels()) + " channels, got " +
                         shape_string(x.shape()));
  }
  auto const N = x.dim(0), C = x.dim(1);
  auto const S = x.size() / (N * C);
  auto const M = static_cast<double>(N * S);
  bool const train = state.mode == BnMode::Train;
  if (!train && state.batches_tracked == 0) { throw ParameterError("batch_norm: uninitialized running statistics"); }

  std::vector<double> mean(C), inv_std(C);
  for (std::size_t c = 0; c < C; ++c) {
    if (train) {
      double s = 0;
      for (std::size_t n = 0; n < N; ++n) {
        Real const *p = x.data().data() + (n * C + c) * S;
        for (std::size_t i = 0; i < S; ++i) { s += p[i]; }
      }
      double const mu = s / M;
      double v = 0;
      for (std::size_t n = 0; n < N; ++n) {
        Real const *p = x.data().data() + (n * C + c) * S;
        for (std::size_t i = 0; i < S; ++i) {
          double const d = p[i] - mu;
          v += d * d;
        }
      }
      double const var = v / M;
      mean[c] = mu;
      inv_std[c] = 1.0 / std::sqrt(var + state.eps);
      double const unbiased = M > 1 ? v / (M - 1) : var;
      state.running_mean[c] =
        static_cast<Real>((1.0 - state.momentum) * state.running_mean[c] + state.momentum * mu);
      state.running_var[c] =
        static_cast<Real>((1.0 - state.momentum) * state.running_var[c] + state.momentum * unbiased);
    } else {
      mean[c] = state.running_mean[c];
      inv_std[c] = 1.0 / std::sqrt(static_cast<double>(state.running_var[c]) + state.eps);
    }
  }
  if (train) { ++state.batches_tracked; }

  auto const &gm = g.value(gamma);
  auto const &bt = g.value(beta);

  Tensor<Real> xhat(x.shape());
  Tensor<Real> out(x.shape());
  for (std::size_t n = 0; n < N; ++n) {
    for (std::size_t c = 0; c < C; ++c) {
      std::size_t const off = (n * C + c) * S;
      auto const mu = static_cast<Real>(mean[c]);
      auto const is = static_cast<Real>(inv_std[c]);
      for (std::size_t i = 0; i < S; ++i) {
        Real const h = (x[off + i] - mu) * is;
        xhat[off + i] = h;
        out[off + i] = gm[c] * h + bt[c];
      }
    }
  }

  return g.record(std::move(out), {input, gamma, beta},
                  [N, C, S, M, train, inv_std, input, gamma, beta, xhat = std::move(xhat)](Graph<Real> &gr,
                                                                                            std::size_t self) {
                    auto const &gy = gr.grad(Var{self});
                    std::vector<double> sum_g(C, 0.0), sum_gx(C, 0.0);
                    for (std::size_t n = 0; n < N; ++n) {
                      for (std::size_t c = 0; c < C; ++c) {
                        std::size_t const off = (n * C + c) * S;
                        for (std::size_t i = 0; i < S; ++i) {
                          sum_g[c] += gy[off + i];
                          sum_gx[c] += static_cast<double>(gy[off + i]) * xhat[off + i];
                        }
                      }
                    }
                    if (gr.requires_grad(gamma)) {
                      auto &gg = gr.grad(gamma);
                      for (std::size_t c = 0; c < C; ++c) { gg[c] += static_cast<Real>(sum_gx[c]); }
                    }
                    if (gr.requires_grad(beta)) {
                      auto &gb = gr.grad(beta);
                      for (std::size_t c = 0; c < C; ++c) { gb[c] += static_cast<Real>(sum_g[c]); }
                    }
                    if (gr.requires_grad(input)) {
                      auto const &gm = gr.value(gamma);
                      auto &gx = gr.grad(input);
                      for (std::size_t n = 0; n < N; ++n) {
                        for (std::size_t c = 0; c < C; ++c) {
                          std::size_t const off = (n * C + c) * S;
                          double const k = static_cast<double>(gm[c]) * inv_std[c];
                          if (train) {
                            double const mg = sum_g[c] / M, mgx = sum_gx[c] / M;
                            for (std::size_t i = 0; i < S; ++i) {
                              gx[off + i] += static_cast<Real>(k * (gy[off + i] - mg - xhat[off + i] * mgx));
                            }
                          } else {
                            for (std::size_t i = 0; i < S; ++i) { gx[off + i] += static_cast<Real>(k * gy[off + i]); }
                          }
                        }
                      }
                    }
                  });
}

// ---------------------------------------------------------------------------
// elementwise and structural

template <typename Real>
Var relu(Graph<Real> &g, Var input)
{
  Tensor<Real> out = g.value(input);
  if (g.tracking_activation_pattern()) {
    auto &pat = g.activation_pattern();
    for (auto v : out.data()) { pat.push_back(v > Real(0) ? 1 : 0); }
  }
  for (auto &v : out.data()) { v = v > Real(0) ? v : Real(0); }
  return g.record(std::move(out), {input}, [input](Graph<Real> &gr, std::size_t self) {
    auto const &x = gr.value(input);
    auto const &gy = gr.grad(Var{self});
    auto &gx = gr.grad(input);
    for (std::size_t i = 0; i < gx.size(); ++i) {
      if (x[i] > Real(0)) { gx[i] += gy[i]; }
    }
  });
}

template <typename Real>
Var add(Graph<Real> &g, Var a, Var b)
{
  if (g.value(a).shape() != g.value(b).shape()) {
    throw ParameterError("add: shape mismatch " + shape_string(g.value(a).shape()) + " vs " +
                         shape_string(g.value(b).shape()));
  }
  Tensor<Real> out = g.value(a);
  accumulate(out, g.value(b));
  return g.record(std::move(out), {a, b}, [a, b](Graph<Real> &gr, std::size_t self) {
    auto const &gy = gr.grad(Var{self});
    if (gr.requires_grad(a)) { accumulate(gr.grad(a), gy); }
    if (gr.requires_grad(b)) { accumulate(gr.grad(b), gy); }
  });
}

template <typename Real>
Var concat_channels(Graph<Real> &g, std::vector<Var> const &parts)
{
  if (parts.empty()) { throw ParameterError("concat_channels: nothing to concatenate"); }
  Shape shape = g.value(parts[0]).shape();
  if (shape.size() < 2) { throw ParameterError("concat_channels: inputs need a channel axis"); }
  std::size_t channels = 0;
  std::vector<std::size_t> widths;
  for (auto v : parts) {
    Shape s = g.value(v).shape();
    if (s.size() != shape.size()) { throw ParameterError("concat_channels: rank mismatch"); }
    widths.push_back(s[1]);
    channels += s[1];
    s[1] = shape[1];
    if (s != shape) { throw ParameterError("concat_channels: shapes differ outside the channel axis"); }
  }
  auto const N = shape[0];
  auto const S = numel(shape) / (shape[0] * shape[1]);
  shape[1] = channels;
  Tensor<Real> out(shape);
  std::size_t c0 = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    auto const &src = g.value(parts[k]);
    for (std::size_t n = 0; n < N; ++n) {
      std::copy_n(src.data().data() + n * widths[k] * S, widths[k] * S,
                  out.data().data() + (n * channels + c0) * S);
    }
    c0 += widths[k];
  }
  return g.record(std::move(out), parts, [parts, widths, N, S, channels](Graph<Real> &gr, std::size_t self) {
    auto const &gy = gr.grad(Var{self});
    std::size_t c0 = 0;
    for (std::size_t k = 0; k < parts.size(); ++k) {
      if (gr.requires_grad(parts[k])) {
        auto &gx = gr.grad(parts[k]);
        for (std::size_t n = 0; n < N; ++n) {
          Real const *src = gy.data().data() + (n * channels + c0) * S;
          Real *dst = gx.data().data() + n * widths[k] * S;
          for (std::size_t i = 0; i < widths[k] * S; ++i) { dst[i] += src[i]; }
        }
      }
      c0 += widths[k];
    }
  });
}

template <typename Real>
Var channel_slice(Graph<Real> &g, Var input, std::size_t c)
{
  auto const &x = g.value(input);
  if (x.rank() < 2 || c >= x.dim(1)) {
    throw ParameterError("channel_slice: channel " + std::to_string(c) + " out of range for " +
                         shape_string(x.shape()));
  }
  auto const N = x.dim(0), C = x.dim(1);
  auto const S = x.size() / (N * C);
  Shape shape = x.shape();
  shape[1] = 1;
  Tensor<Real> out(shape);
  for (std::size_t n = 0; n < N; ++n) {
    std::copy_n(x.data().data() + (n * C + c) * S, S, out.data().data() + n * S);
  }
  return g.record(std::move(out), {input}, [input, c, N, C, S](Graph<Real> &gr, std::size_t self) {
    auto const &gy = gr.grad(Var{self});
    auto &gx = gr.grad(input);
    for (std::size_t n = 0; n < N; ++n) {
      for (std::size_t i = 0; i < S; ++i) { gx[(n * C + c) * S + i] += gy[n * S + i]; }
    }
  });
}

template <typename Real>
Var linear_operator(Graph<Real> &g, Var input, Projector const &projector, Direction direction)
{
  Tensor<Real> out = direction == Direction::Forward ? forward_project(projector, g.value(input))
                                                     : back_project(projector, g.value(input));
  return g.record(std::move(out), {input}, [input, &projector, direction](Graph<Real> &gr, std::size_t self) {
    auto const &gy = gr.grad(Var{self});
    accumulate(gr.grad(input),
               direction == Direction::Forward ? back_project(projector, gy) : forward_project(projector, gy));
  });
}

template <typename Real>
Var mse_loss(Graph<Real> &g, Var pred, Tensor<Real> const &target)
{
  auto const &p = g.value(pred);
  if (p.shape() != target.shape()) {
    throw ParameterError("mse_loss: shape mismatch " + shape_string(p.shape()) + " vs " +
                         shape_string(target.shape()));
  }
  double s = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    double const d = static_cast<double>(p[i]) - target[i];
    s += d * d;
  }
  auto const n = static_cast<double>(p.size());
  Tensor<Real> out({1}, static_cast<Real>(s / n));
  return g.record(std::move(out), {pred}, [pred, target, n](Graph<Real> &gr, std::size_t self) {
    double const up = gr.grad(Var{self})[0];
    auto const &p = gr.value(pred);
    auto &gp = gr.grad(pred);
    for (std::size_t i = 0; i < gp.size(); ++i) {
      gp[i] += static_cast<Real>(up * 2.0 * (static_cast<double>(p[i]) - target[i]) / n);
    }
  });
}

template <typename Real>
Var inner(Graph<Real> &g, Var input, Tensor<Real> const &u)
{
  auto const &x = g.value(input);
  if (x.shape() != u.shape()) { throw ParameterError("inner: shape mismatch"); }
  double s = 0;
  for (std::size_t i = 0; i < x.size(); ++i) { s += static_cast<double>(x[i]) * u[i]; }
  return g.record(Tensor<Real>({1}, static_cast<Real>(s)), {input}, [input, u](Graph<Real> &gr, std::size_t self) {
    Real const up = gr.grad(Var{self})[0];
    auto &gx = gr.grad(input);
    for (std::size_t i = 0; i < gx.size(); ++i) { gx[i] += up * u[i]; }
  });
}

#define STPD_INSTANTIATE_AD(Real)                                                                                \
  template Var conv3d(Graph<Real> &, Var, Var, Var);                                                             \
  template Tensor<Real> conv3d_reference(Tensor<Real> const &, Tensor<Real> const &, Tensor<Real> const &);      \
  template struct BatchNormState<Real>;                                                                          \
  template Var batch_norm(Graph<Real> &, Var, BatchNormState<Real> &);                                           \
  template Var relu(Graph<Real> &, Var);                                                                         \
  template Var add(Graph<Real> &, Var, Var);                                                                     \
  template Var concat_channels(Graph<Real> &, std::vector<Var> const &);                                         \
  template Var channel_slice(Graph<Real> &, Var, std::size_t);                                                   \
  template Var linear_operator(Graph<Real> &, Var, Projector const &, Direction);                                \
  template Var mse_loss(Graph<Real> &, Var, Tensor<Real> const &);                                               \
  template Var inner(Graph<Real> &, Var, Tensor<Real> const &);

STPD_INSTANTIATE_AD(float)
STPD_INSTANTIATE_AD(double)

#undef STPD_INSTANTIATE_AD

} // namespace stpd::ad
