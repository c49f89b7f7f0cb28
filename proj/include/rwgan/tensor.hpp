#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <string>
#include <unordered_set>
#include <vector>

#include "rwgan/errors.hpp"

namespace rwgan {

// Reverse-mode autodiff over dense (N,C,H,W) float tensors, with exactly the
// operator set the two GAN architectures need. Scalar type is a template
// parameter: float for training, double for tight-tolerance gradient checks.

using Shape = std::vector<int64_t>;

inline int64_t numel_of(const Shape& s) {
  int64_t n = 1;
  for (auto d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::string out = "(";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + ")";
}

template <class S>
struct TensorNode {
  Shape shape;
  std::vector<S> value;
  std::vector<S> grad; // allocated lazily during backward
  bool requires_grad = false;
  bool needs_grad = false; // requires_grad or any input needs it
  std::vector<std::shared_ptr<TensorNode>> inputs;
  std::function<void()> backward_fn; // pushes this->grad into inputs' grads

  int64_t numel() const { return int64_t(value.size()); }
  bool is_leaf() const { return inputs.empty(); }

  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), S(0));
  }
};

template <class S>
class TensorT {
public:
  TensorT() = default;
  explicit TensorT(std::shared_ptr<TensorNode<S>> n) : node_(std::move(n)) {}

  static TensorT zeros(Shape shape, bool requires_grad = false) {
    return filled(std::move(shape), S(0), requires_grad);
  }

  static TensorT filled(Shape shape, S v, bool requires_grad = false) {
    auto n = std::make_shared<TensorNode<S>>();
    n->value.assign(size_t(numel_of(shape)), v);
    n->shape = std::move(shape);
    n->requires_grad = requires_grad;
    n->needs_grad = requires_grad;
    return TensorT(std::move(n));
  }

  static TensorT from_values(Shape shape, std::vector<S> values,
                             bool requires_grad = false) {
    if (int64_t(values.size()) != numel_of(shape))
      throw ShapeError("tensor: value count " + std::to_string(values.size()) +
                       " does not match shape " + shape_str(shape));
    auto n = std::make_shared<TensorNode<S>>();
    n->shape = std::move(shape);
    n->value = std::move(values);
    n->requires_grad = requires_grad;
    n->needs_grad = requires_grad;
    return TensorT(std::move(n));
  }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  int64_t numel() const { return node_->numel(); }
  std::vector<S>& values() { return node_->value; }
  const std::vector<S>& values() const { return node_->value; }
  std::vector<S>& grad() { return node_->grad; }
  const std::vector<S>& grad() const { return node_->grad; }
  bool requires_grad() const { return node_->requires_grad; }

  S item() const {
    if (numel() != 1)
      throw ShapeError("tensor: item() on non-scalar " + shape_str(shape()));
    return node_->value[0];
  }

  // Same values, no history; never requires grad.
  TensorT detach() const {
    auto n = std::make_shared<TensorNode<S>>();
    n->shape = node_->shape;
    n->value = node_->value;
    return TensorT(std::move(n));
  }

  void zero_grad() { node_->grad.assign(node_->value.size(), S(0)); }

  std::shared_ptr<TensorNode<S>> node() const { return node_; }
  TensorNode<S>* raw() const { return node_.get(); }

private:
  std::shared_ptr<TensorNode<S>> node_;
};

using Tensor = TensorT<float>;

namespace detail {

template <class S>
std::shared_ptr<TensorNode<S>> make_op_node(
    Shape shape, std::vector<std::shared_ptr<TensorNode<S>>> inputs) {
  auto n = std::make_shared<TensorNode<S>>();
  n->value.assign(size_t(numel_of(shape)), S(0));
  n->shape = std::move(shape);
  n->inputs = std::move(inputs);
  for (auto& in : n->inputs)
    if (in->needs_grad) n->needs_grad = true;
  return n;
}

// Sliding-window bookkeeping shared by conv2d / conv_transpose2d. `cols` is
// laid out [Cin*K*K][OH*OW]; accumulation over the k axis always runs in
// increasing (ci, ky, kx) order so the direct and im2col paths add the same
// numbers in the same order and agree bit-wise.
template <class S>
void im2col(const S* x, int64_t C, int64_t H, int64_t W, int64_t K,
            int64_t stride, int64_t pad, int64_t OH, int64_t OW, S* cols) {
  for (int64_t ci = 0; ci < C; ++ci) {
    const S* xc = x + ci * H * W;
    for (int64_t ky = 0; ky < K; ++ky) {
      for (int64_t kx = 0; kx < K; ++kx) {
        S* row = cols + ((ci * K + ky) * K + kx) * OH * OW;
        for (int64_t oy = 0; oy < OH; ++oy) {
          int64_t iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= H) {
            std::fill(row + oy * OW, row + (oy + 1) * OW, S(0));
            continue;
          }
          for (int64_t ox = 0; ox < OW; ++ox) {
            int64_t ix = ox * stride - pad + kx;
            row[oy * OW + ox] = (ix >= 0 && ix < W) ? xc[iy * W + ix] : S(0);
          }
        }
      }
    }
  }
}

template <class S>
void col2im_accum(const S* cols, int64_t C, int64_t H, int64_t W, int64_t K,
                  int64_t stride, int64_t pad, int64_t OH, int64_t OW, S* x) {
  for (int64_t ci = 0; ci < C; ++ci) {
    S* xc = x + ci * H * W;
    for (int64_t ky = 0; ky < K; ++ky) {
      for (int64_t kx = 0; kx < K; ++kx) {
        const S* row = cols + ((ci * K + ky) * K + kx) * OH * OW;
        for (int64_t oy = 0; oy < OH; ++oy) {
          int64_t iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= H) continue;
          for (int64_t ox = 0; ox < OW; ++ox) {
            int64_t ix = ox * stride - pad + kx;
            if (ix >= 0 && ix < W) xc[iy * W + ix] += row[oy * OW + ox];
          }
        }
      }
    }
  }
}

// out[m][o] (+)= sum_k a[m][k] * b[k][o], accumulating k in increasing order.
template <class S>
void matmul_accum(const S* a, const S* b, S* out, int64_t M, int64_t Kdim,
                  int64_t O, bool zero_first) {
  for (int64_t m = 0; m < M; ++m) {
    S* orow = out + m * O;
    if (zero_first) std::fill(orow, orow + O, S(0));
    const S* arow = a + m * Kdim;
    for (int64_t k = 0; k < Kdim; ++k) {
      const S av = arow[k];
      if (av == S(0)) continue;
      const S* brow = b + k * O;
      for (int64_t o = 0; o < O; ++o) orow[o] += av * brow[o];
    }
  }
}

} // namespace detail

enum class ConvPath { im2col, direct };

// 2-D cross-correlation with zero padding. x:(N,Cin,H,W) w:(Cout,Cin,K,K)
// b:(Cout). Differentiable w.r.t. x, w and b.
template <class S>
TensorT<S> conv2d(const TensorT<S>& x, const TensorT<S>& w, const TensorT<S>& b,
                  int64_t stride, int64_t pad,
                  ConvPath path = ConvPath::im2col) {
  if (x.shape().size() != 4 || w.shape().size() != 4)
    throw ShapeError("conv2d: expected rank-4 input and weight");
  if (stride < 1 || pad < 0) throw ShapeError("conv2d: bad stride/pad");
  const int64_t N = x.shape()[0], Cin = x.shape()[1], H = x.shape()[2],
                W = x.shape()[3];
  const int64_t Cout = w.shape()[0], K = w.shape()[2];
  if (w.shape()[1] != Cin)
    throw ShapeError("conv2d: weight expects " + std::to_string(w.shape()[1]) +
                     " input channels, got " + std::to_string(Cin));
  if (w.shape()[3] != K) throw ShapeError("conv2d: kernel must be square");
  if (b.shape() != Shape{Cout}) throw ShapeError("conv2d: bias must be (Cout)");
  const int64_t OH = (H + 2 * pad - K) / stride + 1;
  const int64_t OW = (W + 2 * pad - K) / stride + 1;
  if (H + 2 * pad - K < 0 || OH < 1 || OW < 1)
    throw ShapeError("conv2d: non-positive output size");

  auto node = detail::make_op_node<S>({N, Cout, OH, OW},
                                      {x.node(), w.node(), b.node()});
  const int64_t KD = Cin * K * K, OS = OH * OW;
  auto cols = std::make_shared<std::vector<S>>(); // cached for backward
  cols->resize(size_t(N * KD * OS));
  for (int64_t n = 0; n < N; ++n)
    detail::im2col(x.values().data() + n * Cin * H * W, Cin, H, W, K, stride,
                   pad, OH, OW, cols->data() + n * KD * OS);

  if (path == ConvPath::im2col) {
    for (int64_t n = 0; n < N; ++n) {
      S* out = node->value.data() + n * Cout * OS;
      for (int64_t co = 0; co < Cout; ++co)
        std::fill(out + co * OS, out + (co + 1) * OS, b.values()[size_t(co)]);
      detail::matmul_accum(w.values().data(), cols->data() + n * KD * OS, out,
                           Cout, KD, OS, false);
    }
  } else {
    const S* xv = x.values().data();
    const S* wv = w.values().data();
    for (int64_t n = 0; n < N; ++n)
      for (int64_t co = 0; co < Cout; ++co)
        for (int64_t oy = 0; oy < OH; ++oy)
          for (int64_t ox = 0; ox < OW; ++ox) {
            S acc = b.values()[size_t(co)];
            for (int64_t ci = 0; ci < Cin; ++ci)
              for (int64_t ky = 0; ky < K; ++ky)
                for (int64_t kx = 0; kx < K; ++kx) {
                  int64_t iy = oy * stride - pad + ky;
                  int64_t ix = ox * stride - pad + kx;
                  S xe = (iy >= 0 && iy < H && ix >= 0 && ix < W)
                             ? xv[((n * Cin + ci) * H + iy) * W + ix]
                             : S(0);
                  acc += wv[((co * Cin + ci) * K + ky) * K + kx] * xe;
                }
            node->value[size_t(((n * Cout + co) * OH + oy) * OW + ox)] = acc;
          }
  }

  if (node->needs_grad) {
    auto xn = x.node(), wn = w.node(), bn = b.node();
    TensorNode<S>* self = node.get();
    node->backward_fn = [=]() {
      const S* dy = self->grad.data();
      if (bn->needs_grad) {
        bn->ensure_grad();
        for (int64_t n = 0; n < N; ++n)
          for (int64_t co = 0; co < Cout; ++co) {
            S acc = S(0);
            const S* row = dy + (n * Cout + co) * OS;
            for (int64_t o = 0; o < OS; ++o) acc += row[o];
            bn->grad[size_t(co)] += acc;
          }
      }
      if (wn->needs_grad) {
        wn->ensure_grad();
        // dw[co][k] += sum_o dy[co][o] * cols[k][o]
        for (int64_t n = 0; n < N; ++n) {
          const S* dyn = dy + n * Cout * OS;
          const S* cn = cols->data() + n * KD * OS;
          for (int64_t co = 0; co < Cout; ++co)
            for (int64_t k = 0; k < KD; ++k) {
              S acc = S(0);
              const S* dr = dyn + co * OS;
              const S* cr = cn + k * OS;
              for (int64_t o = 0; o < OS; ++o) acc += dr[o] * cr[o];
              wn->grad[size_t(co * KD + k)] += acc;
            }
        }
      }
      if (xn->needs_grad) {
        xn->ensure_grad();
        std::vector<S> dcols(size_t(KD * OS));
        for (int64_t n = 0; n < N; ++n) {
          // dcols[k][o] = sum_co w[co][k] * dy[co][o]
          std::fill(dcols.begin(), dcols.end(), S(0));
          const S* dyn = dy + n * Cout * OS;
          const S* wv = wn->value.data();
          for (int64_t k = 0; k < KD; ++k) {
            S* drow = dcols.data() + k * OS;
            for (int64_t co = 0; co < Cout; ++co) {
              const S wv_k = wv[co * KD + k];
              if (wv_k == S(0)) continue;
              const S* dr = dyn + co * OS;
              for (int64_t o = 0; o < OS; ++o) drow[o] += wv_k * dr[o];
            }
          }
          detail::col2im_accum(dcols.data(), Cin, H, W, K, stride, pad, OH, OW,
                               xn->grad.data() + n * Cin * H * W);
        }
      }
    };
  }
  return TensorT<S>(std::move(node));
}

// Transposed convolution (gradient-of-convolution semantics).
// x:(N,Cin,H,W) w:(Cin,Cout,K,K) b:(Cout); OH = (H-1)*stride - 2*pad + K.
template <class S>
TensorT<S> conv_transpose2d(const TensorT<S>& x, const TensorT<S>& w,
                            const TensorT<S>& b, int64_t stride, int64_t pad) {
  if (x.shape().size() != 4 || w.shape().size() != 4)
    throw ShapeError("conv_transpose2d: expected rank-4 input and weight");
  if (stride < 1 || pad < 0) throw ShapeError("conv_transpose2d: bad stride/pad");
  const int64_t N = x.shape()[0], Cin = x.shape()[1], H = x.shape()[2],
                W = x.shape()[3];
  if (w.shape()[0] != Cin)
    throw ShapeError("conv_transpose2d: weight expects " +
                     std::to_string(w.shape()[0]) + " input channels, got " +
                     std::to_string(Cin));
  const int64_t Cout = w.shape()[1], K = w.shape()[2];
  if (w.shape()[3] != K) throw ShapeError("conv_transpose2d: kernel must be square");
  if (b.shape() != Shape{Cout})
    throw ShapeError("conv_transpose2d: bias must be (Cout)");
  const int64_t OH = (H - 1) * stride - 2 * pad + K;
  const int64_t OW = (W - 1) * stride - 2 * pad + K;
  if (OH < 1 || OW < 1)
    throw ShapeError("conv_transpose2d: non-positive output size");

  auto node = detail::make_op_node<S>({N, Cout, OH, OW},
                                      {x.node(), w.node(), b.node()});
  const int64_t KD = Cout * K * K, IS = H * W;
  // m[(co,ky,kx)][i] = sum_ci w[ci][(co,ky,kx)] * x[ci][i], then scatter.
  {
    std::vector<S> m(size_t(KD * IS));
    for (int64_t n = 0; n < N; ++n) {
      std::fill(m.begin(), m.end(), S(0));
      const S* xv = x.values().data() + n * Cin * IS;
      const S* wv = w.values().data();
      for (int64_t k = 0; k < KD; ++k) {
        S* mrow = m.data() + k * IS;
        for (int64_t ci = 0; ci < Cin; ++ci) {
          const S wk = wv[ci * KD + k];
          if (wk == S(0)) continue;
          const S* xr = xv + ci * IS;
          for (int64_t i = 0; i < IS; ++i) mrow[i] += wk * xr[i];
        }
      }
      S* out = node->value.data() + n * Cout * OH * OW;
      for (int64_t co = 0; co < Cout; ++co)
        std::fill(out + co * OH * OW, out + (co + 1) * OH * OW,
                  b.values()[size_t(co)]);
      detail::col2im_accum(m.data(), Cout, OH, OW, K, stride, pad, H, W, out);
    }
  }

  if (node->needs_grad) {
    auto xn = x.node(), wn = w.node(), bn = b.node();
    TensorNode<S>* self = node.get();
    node->backward_fn = [=]() {
      const S* dy = self->grad.data();
      const int64_t OS = OH * OW;
      if (bn->needs_grad) {
        bn->ensure_grad();
        for (int64_t n = 0; n < N; ++n)
          for (int64_t co = 0; co < Cout; ++co) {
            S acc = S(0);
            const S* row = dy + (n * Cout + co) * OS;
            for (int64_t o = 0; o < OS; ++o) acc += row[o];
            bn->grad[size_t(co)] += acc;
          }
      }
      std::vector<S> dycols(size_t(KD * IS));
      for (int64_t n = 0; n < N; ++n) {
        detail::im2col(dy + n * Cout * OS, Cout, OH, OW, K, stride, pad, H, W,
                       dycols.data());
        if (xn->needs_grad) {
          xn->ensure_grad();
          // dx[ci][i] = sum_k w[ci][k] * dycols[k][i]
          detail::matmul_accum(wn->value.data(), dycols.data(),
                               xn->grad.data() + n * Cin * IS, Cin, KD, IS,
                               false);
        }
        if (wn->needs_grad) {
          wn->ensure_grad();
          const S* xv = xn->value.data() + n * Cin * IS;
          for (int64_t ci = 0; ci < Cin; ++ci)
            for (int64_t k = 0; k < KD; ++k) {
              S acc = S(0);
              const S* xr = xv + ci * IS;
              const S* dr = dycols.data() + k * IS;
              for (int64_t i = 0; i < IS; ++i) acc += xr[i] * dr[i];
              wn->grad[size_t(ci * KD + k)] += acc;
            }
        }
      }
    };
  }
  return TensorT<S>(std::move(node));
}

// Per-(sample, channel) standardization over H*W followed by affine.
template <class S>
TensorT<S> instance_norm(const TensorT<S>& x, const TensorT<S>& gamma,
                         const TensorT<S>& beta, S eps = S(1e-5)) {
  if (x.shape().size() != 4) throw ShapeError("instance_norm: expected rank-4 input");
  const int64_t N = x.shape()[0], C = x.shape()[1], H = x.shape()[2],
                W = x.shape()[3];
  const int64_t HW = H * W;
  if (HW <= 1)
    throw DataError("instance_norm: degenerate normalization over a single spatial element");
  if (gamma.shape() != Shape{C} || beta.shape() != Shape{C})
    throw ShapeError("instance_norm: gamma/beta must be (C)");

  auto node = detail::make_op_node<S>(x.shape(),
                                      {x.node(), gamma.node(), beta.node()});
  auto xhat = std::make_shared<std::vector<S>>(x.values().size());
  auto inv_std = std::make_shared<std::vector<S>>(size_t(N * C));
  for (int64_t nc = 0; nc < N * C; ++nc) {
    const S* xr = x.values().data() + nc * HW;
    S mean = S(0);
    for (int64_t i = 0; i < HW; ++i) mean += xr[i];
    mean /= S(HW);
    S var = S(0);
    for (int64_t i = 0; i < HW; ++i) var += (xr[i] - mean) * (xr[i] - mean);
    var /= S(HW);
    const S inv = S(1) / std::sqrt(var + eps);
    (*inv_std)[size_t(nc)] = inv;
    const S g = gamma.values()[size_t(nc % C)];
    const S bv = beta.values()[size_t(nc % C)];
    S* xh = xhat->data() + nc * HW;
    S* out = node->value.data() + nc * HW;
    for (int64_t i = 0; i < HW; ++i) {
      xh[i] = (xr[i] - mean) * inv;
      out[i] = g * xh[i] + bv;
    }
  }

  if (node->needs_grad) {
    auto xn = x.node(), gn = gamma.node(), bn = beta.node();
    TensorNode<S>* self = node.get();
    node->backward_fn = [=]() {
      const S* dy = self->grad.data();
      for (int64_t nc = 0; nc < N * C; ++nc) {
        const S* dyr = dy + nc * HW;
        const S* xh = xhat->data() + nc * HW;
        const int64_t c = nc % C;
        if (gn->needs_grad) {
          gn->ensure_grad();
          S acc = S(0);
          for (int64_t i = 0; i < HW; ++i) acc += dyr[i] * xh[i];
          gn->grad[size_t(c)] += acc;
        }
        if (bn->needs_grad) {
          bn->ensure_grad();
          S acc = S(0);
          for (int64_t i = 0; i < HW; ++i) acc += dyr[i];
          bn->grad[size_t(c)] += acc;
        }
        if (xn->needs_grad) {
          xn->ensure_grad();
          const S g = gn->value[size_t(c)];
          const S inv = (*inv_std)[size_t(nc)];
          S sum_d = S(0), sum_dx = S(0);
          for (int64_t i = 0; i < HW; ++i) {
            sum_d += dyr[i] * g;
            sum_dx += dyr[i] * g * xh[i];
          }
          const S mean_d = sum_d / S(HW);
          const S mean_dx = sum_dx / S(HW);
          S* dx = xn->grad.data() + nc * HW;
          for (int64_t i = 0; i < HW; ++i)
            dx[i] += inv * (dyr[i] * g - mean_d - xh[i] * mean_dx);
        }
      }
    };
  }
  return TensorT<S>(std::move(node));
}

enum class Activation { relu, leaky_relu, tanh, sigmoid };

template <class S>
TensorT<S> activation(const TensorT<S>& x, Activation kind) {
  auto node = detail::make_op_node<S>(x.shape(), {x.node()});
  const S* xv = x.values().data();
  S* out = node->value.data();
  const int64_t n = x.numel();
  const S slope = S(0.2); // fixed leaky slope
  switch (kind) {
    case Activation::relu:
      for (int64_t i = 0; i < n; ++i) out[i] = xv[i] > S(0) ? xv[i] : S(0);
      break;
    case Activation::leaky_relu:
      for (int64_t i = 0; i < n; ++i) out[i] = xv[i] > S(0) ? xv[i] : slope * xv[i];
      break;
    case Activation::tanh:
      for (int64_t i = 0; i < n; ++i) out[i] = std::tanh(xv[i]);
      break;
    case Activation::sigmoid:
      for (int64_t i = 0; i < n; ++i)
        out[i] = xv[i] >= S(0) ? S(1) / (S(1) + std::exp(-xv[i]))
                               : std::exp(xv[i]) / (S(1) + std::exp(xv[i]));
      break;
  }
  if (node->needs_grad) {
    auto xn = x.node();
    TensorNode<S>* self = node.get();
    node->backward_fn = [=]() {
      xn->ensure_grad();
      const S* dy = self->grad.data();
      const S* y = self->value.data();
      const S* xvv = xn->value.data();
      S* dx = xn->grad.data();
      switch (kind) {
        case Activation::relu:
          for (int64_t i = 0; i < self->numel(); ++i)
            dx[i] += xvv[i] > S(0) ? dy[i] : S(0);
          break;
        case Activation::leaky_relu:
          for (int64_t i = 0; i < self->numel(); ++i)
            dx[i] += xvv[i] > S(0) ? dy[i] : slope * dy[i];
          break;
        case Activation::tanh:
          for (int64_t i = 0; i < self->numel(); ++i)
            dx[i] += dy[i] * (S(1) - y[i] * y[i]);
          break;
        case Activation::sigmoid:
          for (int64_t i = 0; i < self->numel(); ++i)
            dx[i] += dy[i] * y[i] * (S(1) - y[i]);
          break;
      }
    };
  }
  return TensorT<S>(std::move(node));
}

// Concatenates along the channel axis; gradient splits back exactly.
template <class S>
TensorT<S> concat_channels(const TensorT<S>& a, const TensorT<S>& b) {
  if (a.shape().size() != 4 || b.shape().size() != 4)
    throw ShapeError("concat_channels: expected rank-4 inputs");
  if (a.shape()[0] != b.shape()[0] || a.shape()[2] != b.shape()[2] ||
      a.shape()[3] != b.shape()[3])
    throw ShapeError("concat_channels: spatial/batch mismatch " +
                     shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  const int64_t N = a.shape()[0], Ca = a.shape()[1], Cb = b.shape()[1],
                HW = a.shape()[2] * a.shape()[3];
  auto node = detail::make_op_node<S>({N, Ca + Cb, a.shape()[2], a.shape()[3]},
                                      {a.node(), b.node()});
  for (int64_t n = 0; n < N; ++n) {
    std::copy_n(a.values().data() + n * Ca * HW, Ca * HW,
                node->value.data() + n * (Ca + Cb) * HW);
    std::copy_n(b.values().data() + n * Cb * HW, Cb * HW,
                node->value.data() + (n * (Ca + Cb) + Ca) * HW);
  }
  if (node->needs_grad) {
    auto an = a.node(), bn = b.node();
    TensorNode<S>* self = node.get();
    node->backward_fn = [=]() {
      const S* dy = self->grad.data();
      for (int64_t n = 0; n < N; ++n) {
        if (an->needs_grad) {
          an->ensure_grad();
          const S* src = dy + n * (Ca + Cb) * HW;
          S* dst = an->grad.data() + n * Ca * HW;
          for (int64_t i = 0; i < Ca * HW; ++i) dst[i] += src[i];
        }
        if (bn->needs_grad) {
          bn->ensure_grad();
          const S* src = dy + (n * (Ca + Cb) + Ca) * HW;
          S* dst = bn->grad.data() + n * Cb * HW;
          for (int64_t i = 0; i < Cb * HW; ++i) dst[i] += src[i];
        }
      }
    };
  }
  return TensorT<S>(std::move(node));
}

enum class LossKind { l1, mse, bce_logits };

// Mean-reduced loss; bce_logits uses the log-sum-exp form and stays finite
// for logits in at least [-88, 88].
template <class S>
TensorT<S> loss(const TensorT<S>& pred, const TensorT<S>& target, LossKind kind) {
  if (pred.shape() != target.shape())
    throw ShapeError("loss: shape mismatch " + shape_str(pred.shape()) +
                     " vs " + shape_str(target.shape()));
  auto node = detail::make_op_node<S>(Shape{1}, {pred.node(), target.node()});
  const int64_t n = pred.numel();
  const S* p = pred.values().data();
  const S* t = target.values().data();
  S acc = S(0);
  switch (kind) {
    case LossKind::l1:
      for (int64_t i = 0; i < n; ++i) acc += std::fabs(p[i] - t[i]);
      break;
    case LossKind::mse:
      for (int64_t i = 0; i < n; ++i) acc += (p[i] - t[i]) * (p[i] - t[i]);
      break;
    case LossKind::bce_logits:
      for (int64_t i = 0; i < n; ++i) {
        const S z = p[i];
        acc += std::max(z, S(0)) - z * t[i] + std::log1p(std::exp(-std::fabs(z)));
      }
      break;
  }
  node->value[0] = acc / S(n);

  if (node->needs_grad) {
    auto pn = pred.node(), tn = target.node();
    TensorNode<S>* self = node.get();
    node->backward_fn = [=]() {
      const S dy = self->grad[0];
      const S inv_n = S(1) / S(n);
      const S* pv = pn->value.data();
      const S* tv = tn->value.data();
      if (pn->needs_grad) {
        pn->ensure_grad();
        S* dp = pn->grad.data();
        switch (kind) {
          case LossKind::l1:
            for (int64_t i = 0; i < n; ++i) {
              const S d = pv[i] - tv[i];
              dp[i] += dy * inv_n * (d > S(0) ? S(1) : (d < S(0) ? S(-1) : S(0)));
            }
            break;
          case LossKind::mse:
            for (int64_t i = 0; i < n; ++i)
              dp[i] += dy * inv_n * S(2) * (pv[i] - tv[i]);
            break;
          case LossKind::bce_logits:
            for (int64_t i = 0; i < n; ++i) {
              const S z = pv[i];
              const S sig = z >= S(0) ? S(1) / (S(1) + std::exp(-z))
                                      : std::exp(z) / (S(1) + std::exp(z));
              dp[i] += dy * inv_n * (sig - tv[i]);
            }
            break;
        }
      }
      if (tn->needs_grad) {
        tn->ensure_grad();
        S* dt = tn->grad.data();
        switch (kind) {
          case LossKind::l1:
            for (int64_t i = 0; i < n; ++i) {
              const S d = pv[i] - tv[i];
              dt[i] -= dy * inv_n * (d > S(0) ? S(1) : (d < S(0) ? S(-1) : S(0)));
            }
            break;
          case LossKind::mse:
            for (int64_t i = 0; i < n; ++i)
              dt[i] -= dy * inv_n * S(2) * (pv[i] - tv[i]);
            break;
          case LossKind::bce_logits:
            for (int64_t i = 0; i < n; ++i) dt[i] -= dy * inv_n * pv[i];
            break;
        }
      }
    };
  }
  return TensorT<S>(std::move(node));
}

template <class S>
TensorT<S> add(const TensorT<S>& a, const TensorT<S>& b) {
  if (a.shape() != b.shape())
    throw ShapeError("add: shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  auto node = detail::make_op_node<S>(a.shape(), {a.node(), b.node()});
  for (int64_t i = 0; i < a.numel(); ++i)
    node->value[size_t(i)] = a.values()[size_t(i)] + b.values()[size_t(i)];
  if (node->needs_grad) {
    auto an = a.node(), bn = b.node();
    TensorNode<S>* self = node.get();
    node->backward_fn = [=]() {
      for (auto* in : {an.get(), bn.get()}) {
        if (!in->needs_grad) continue;
        in->ensure_grad();
        for (int64_t i = 0; i < self->numel(); ++i)
          in->grad[size_t(i)] += self->grad[size_t(i)];
      }
    };
  }
  return TensorT<S>(std::move(node));
}

template <class S>
TensorT<S> scale(const TensorT<S>& a, S factor) {
  auto node = detail::make_op_node<S>(a.shape(), {a.node()});
  for (int64_t i = 0; i < a.numel(); ++i)
    node->value[size_t(i)] = a.values()[size_t(i)] * factor;
  if (node->needs_grad) {
    auto an = a.node();
    TensorNode<S>* self = node.get();
    node->backward_fn = [=]() {
      an->ensure_grad();
      for (int64_t i = 0; i < self->numel(); ++i)
        an->grad[size_t(i)] += factor * self->grad[size_t(i)];
    };
  }
  return TensorT<S>(std::move(node));
}

// Populates grad buffers of every requires_grad leaf reachable from `root`.
// Interior gradients are reset per call; leaf gradients accumulate until the
// caller clears them.
template <class S>
void backward(const TensorT<S>& root) {
  if (root.numel() != 1)
    throw ShapeError("backward: root must be scalar, got " +
                     shape_str(root.shape()));
  // iterative post-order DFS over the needs-grad subgraph
  std::vector<TensorNode<S>*> topo;
  std::unordered_set<TensorNode<S>*> visited;
  std::vector<std::pair<TensorNode<S>*, size_t>> stack;
  if (root.raw()->needs_grad) stack.push_back({root.raw(), 0});
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx == 0 && visited.count(node)) {
      stack.pop_back();
      continue;
    }
    bool descended = false;
    while (idx < node->inputs.size()) {
      TensorNode<S>* in = node->inputs[idx++].get();
      if (in->needs_grad && !visited.count(in)) {
        stack.push_back({in, 0});
        descended = true;
        break;
      }
    }
    if (!descended && idx >= node->inputs.size()) {
      visited.insert(node);
      topo.push_back(node);
      stack.pop_back();
    }
  }
  for (auto* n : topo) {
    if (n->is_leaf()) {
      n->ensure_grad(); // keep accumulated values
    } else {
      n->grad.assign(n->value.size(), S(0));
    }
  }
  if (root.raw()->needs_grad) {
    root.raw()->ensure_grad();
    root.raw()->grad[0] += S(1);
  }
  for (auto it = topo.rbegin(); it != topo.rend(); ++it)
    if ((*it)->backward_fn) (*it)->backward_fn();
}

template <class S>
struct AdamStateT {
  double lr = 0.0002;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-8;
  int64_t step_count = 0;
  std::vector<std::vector<S>> m, v;
};

using AdamState = AdamStateT<float>;

// Bias-corrected Adam. Gradients are left untouched; the caller clears them.
template <class S>
void adam_step(std::vector<TensorT<S>>& params, AdamStateT<S>& state) {
  if (state.m.empty()) {
    state.m.resize(params.size());
    state.v.resize(params.size());
    for (size_t i = 0; i < params.size(); ++i) {
      state.m[i].assign(params[i].values().size(), S(0));
      state.v[i].assign(params[i].values().size(), S(0));
    }
  }
  if (state.m.size() != params.size())
    throw DataError("adam: state sized for a different parameter list");
  ++state.step_count;
  const S bc1 = S(1.0 - std::pow(state.beta1, double(state.step_count)));
  const S bc2 = S(1.0 - std::pow(state.beta2, double(state.step_count)));
  const S lr = S(state.lr), b1 = S(state.beta1), b2 = S(state.beta2),
          eps = S(state.eps);
  for (size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    if (p.grad().size() != p.values().size())
      throw DataError("adam: parameter " + std::to_string(i) + " has no gradient");
    S* pv = p.values().data();
    const S* g = p.grad().data();
    S* m = state.m[i].data();
    S* v = state.v[i].data();
    const size_t n = p.values().size();
    for (size_t j = 0; j < n; ++j) {
      m[j] = b1 * m[j] + (S(1) - b1) * g[j];
      v[j] = b2 * v[j] + (S(1) - b2) * g[j] * g[j];
      const S mhat = m[j] / bc1;
      const S vhat = v[j] / bc2;
      pv[j] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
}

struct GradCheckReport {
  double max_rel_error = 0.0;
  bool pass = false;
  int64_t checked = 0;
};

// Compares analytic gradients with central finite differences for the scalar
// produced by `build`. Relative error uses a unit floor in the denominator so
// near-zero gradients are judged on absolute error.
template <class S>
GradCheckReport grad_check(
    const std::function<TensorT<S>(std::vector<TensorT<S>>&)>& build,
    std::vector<TensorT<S>>& inputs, double h, double tol) {
  for (auto& in : inputs) in.zero_grad();
  TensorT<S> out = build(inputs);
  backward(out);
  std::vector<std::vector<S>> analytic;
  analytic.reserve(inputs.size());
  for (auto& in : inputs) {
    in.raw()->ensure_grad();
    analytic.push_back(in.grad());
  }

  GradCheckReport report;
  for (size_t i = 0; i < inputs.size(); ++i) {
    auto& vals = inputs[i].values();
    for (size_t j = 0; j < vals.size(); ++j) {
      const S orig = vals[j];
      vals[j] = orig + S(h);
      const double f_plus = double(build(inputs).item());
      vals[j] = orig - S(h);
      const double f_minus = double(build(inputs).item());
      vals[j] = orig;
      const double numeric = (f_plus - f_minus) / (2.0 * h);
      const double a = double(analytic[i][j]);
      const double denom = std::max({1.0, std::fabs(a), std::fabs(numeric)});
      report.max_rel_error =
          std::max(report.max_rel_error, std::fabs(a - numeric) / denom);
      ++report.checked;
    }
  }
  report.pass = report.max_rel_error < tol;
  return report;
}

} // namespace rwgan
