#pragma once

// Minimal reverse-mode differentiation engine. A Tape records every
// operation executed on tensors that require gradients; backward() replays
// the records in reverse, accumulating adjoints into each operand. Tapes are
// rebuilt per forward pass, which suits models whose computation graph
// changes with every input.
//
// Everything is double precision. A tape and its tensors belong to a single
// thread; independent tapes may run concurrently.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace dggn {

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

inline std::string shape_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

struct TensorData {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // same length as value when requires_grad
  bool requires_grad = false;
};

// Shared-payload handle. Copying a Tensor aliases the underlying storage.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<TensorData> d) : d_(std::move(d)) {}

  bool defined() const { return d_ != nullptr; }
  const Shape& shape() const { return d_->shape; }
  std::size_t size() const { return d_->value.size(); }
  bool requires_grad() const { return d_ && d_->requires_grad; }

  // A Tensor is a handle; const-ness of the handle does not freeze the
  // shared payload, which backward passes mutate through captured copies.
  std::span<const double> value() const { return d_->value; }
  std::span<double> value_mut() const { return d_->value; }
  std::span<const double> grad() const { return d_->grad; }
  std::span<double> grad_mut() const { return d_->grad; }

  double scalar() const {
    if (size() != 1) throw std::invalid_argument("scalar() on tensor of shape " + shape_string(shape()));
    return d_->value[0];
  }

  void zero_grad() const {
    for (double& g : d_->grad) g = 0.0;
  }

  const std::shared_ptr<TensorData>& payload() const { return d_; }

 private:
  std::shared_ptr<TensorData> d_;
};

inline Tensor make_tensor(Shape shape, std::vector<double> values, bool requires_grad = false) {
  if (numel(shape) != values.size())
    throw std::invalid_argument("tensor shape " + shape_string(shape) + " does not hold " +
                                std::to_string(values.size()) + " values");
  auto d = std::make_shared<TensorData>();
  d->shape = std::move(shape);
  d->value = std::move(values);
  d->requires_grad = requires_grad;
  if (requires_grad) d->grad.assign(d->value.size(), 0.0);
  return Tensor(std::move(d));
}

inline Tensor make_zeros(Shape shape, bool requires_grad = false) {
  std::vector<double> v(numel(shape), 0.0);
  return make_tensor(std::move(shape), std::move(v), requires_grad);
}

inline Tensor make_scalar(double v, bool requires_grad = false) {
  return make_tensor({1}, {v}, requires_grad);
}

// Constant copy: same values, cut off from any gradient flow.
inline Tensor detached(const Tensor& t) {
  return make_tensor(t.shape(), std::vector<double>(t.value().begin(), t.value().end()), false);
}

inline double sigmoid_scalar(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// Probability clamp used by the cross-entropy loss.
inline constexpr double kProbClamp = 1e-7;

class Tape {
 public:
  // Recording can be switched off for pure evaluation (e.g. finite
  // differences); values are still computed, gradients are not.
  void set_recording(bool on) { recording_ = on; }
  bool recording() const { return recording_; }
  std::size_t node_count() const { return nodes_.size(); }

  void clear() { nodes_.clear(); }

  // --- elementwise operations -------------------------------------------

  Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape("add", a, b);
    auto out = fresh(a.shape(), a.requires_grad() || b.requires_grad());
    const auto av = a.value(), bv = b.value();
    auto ov = out.value_mut();
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] + bv[i];
    record(out, [a, b, out]() {
      const auto g = out.grad();
      if (a.requires_grad()) {
        auto ga = a.grad_mut();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      if (b.requires_grad()) {
        auto gb = b.grad_mut();
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
      }
    });
    return out;
  }

  Tensor hadamard(const Tensor& a, const Tensor& b) {
    require_same_shape("hadamard", a, b);
    auto out = fresh(a.shape(), a.requires_grad() || b.requires_grad());
    const auto av = a.value(), bv = b.value();
    auto ov = out.value_mut();
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] * bv[i];
    record(out, [a, b, out]() {
      const auto g = out.grad();
      const auto av = a.value(), bv = b.value();
      if (a.requires_grad()) {
        auto ga = a.grad_mut();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
      }
      if (b.requires_grad()) {
        auto gb = b.grad_mut();
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
      }
    });
    return out;
  }

  Tensor sigmoid(const Tensor& x) {
    auto out = fresh(x.shape(), x.requires_grad());
    const auto xv = x.value();
    auto ov = out.value_mut();
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = sigmoid_scalar(xv[i]);
    record(out, [x, out]() {
      const auto g = out.grad();
      const auto s = out.value();
      auto gx = x.grad_mut();
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * s[i] * (1.0 - s[i]);
    });
    return out;
  }

  Tensor tanh(const Tensor& x) {
    auto out = fresh(x.shape(), x.requires_grad());
    const auto xv = x.value();
    auto ov = out.value_mut();
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = std::tanh(xv[i]);
    record(out, [x, out]() {
      const auto g = out.grad();
      const auto t = out.value();
      auto gx = x.grad_mut();
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * (1.0 - t[i] * t[i]);
    });
    return out;
  }

  Tensor scale(const Tensor& x, double c) {
    auto out = fresh(x.shape(), x.requires_grad());
    const auto xv = x.value();
    auto ov = out.value_mut();
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = c * xv[i];
    record(out, [x, out, c]() {
      const auto g = out.grad();
      auto gx = x.grad_mut();
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += c * g[i];
    });
    return out;
  }

  // 1 - x, elementwise.
  Tensor one_minus(const Tensor& x) {
    auto out = fresh(x.shape(), x.requires_grad());
    const auto xv = x.value();
    auto ov = out.value_mut();
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = 1.0 - xv[i];
    record(out, [x, out]() {
      const auto g = out.grad();
      auto gx = x.grad_mut();
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] -= g[i];
    });
    return out;
  }

  // s * x where s is a 1-element tensor.
  Tensor smul(const Tensor& s, const Tensor& x) {
    if (s.size() != 1) throw std::invalid_argument("smul: scaling tensor has shape " + shape_string(s.shape()));
    auto out = fresh(x.shape(), s.requires_grad() || x.requires_grad());
    const double sv = s.value()[0];
    const auto xv = x.value();
    auto ov = out.value_mut();
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = sv * xv[i];
    record(out, [s, x, out]() {
      const auto g = out.grad();
      const auto xv = x.value();
      if (s.requires_grad()) {
        double acc = 0.0;
        for (std::size_t i = 0; i < g.size(); ++i) acc += g[i] * xv[i];
        s.grad_mut()[0] += acc;
      }
      if (x.requires_grad()) {
        const double sv = s.value()[0];
        auto gx = x.grad_mut();
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += sv * g[i];
      }
    });
    return out;
  }

  // --- linear algebra -----------------------------------------------------

  // W: [p, q] row-major, x: [q]  ->  [p]
  Tensor matvec(const Tensor& w, const Tensor& x) {
    if (w.shape().size() != 2 || x.shape().size() != 1 || w.shape()[1] != x.shape()[0])
      throw std::invalid_argument("matvec: incompatible shapes " + shape_string(w.shape()) + " and " +
                                  shape_string(x.shape()));
    const std::size_t p = w.shape()[0], q = w.shape()[1];
    auto out = fresh({p}, w.requires_grad() || x.requires_grad());
    const double* wv = w.value().data();
    const double* xv = x.value().data();
    auto ov = out.value_mut();
    for (std::size_t i = 0; i < p; ++i) {
      const double* row = wv + i * q;
      double acc = 0.0;
      for (std::size_t j = 0; j < q; ++j) acc += row[j] * xv[j];
      ov[i] = acc;
    }
    record(out, [w, x, out, p, q]() {
      const auto g = out.grad();
      const double* xv = x.value().data();
      const double* wv = w.value().data();
      if (w.requires_grad()) {
        double* gw = w.grad_mut().data();
        for (std::size_t i = 0; i < p; ++i) {
          const double gi = g[i];
          double* grow = gw + i * q;
          for (std::size_t j = 0; j < q; ++j) grow[j] += gi * xv[j];
        }
      }
      if (x.requires_grad()) {
        double* gx = x.grad_mut().data();
        for (std::size_t i = 0; i < p; ++i) {
          const double gi = g[i];
          const double* row = wv + i * q;
          for (std::size_t j = 0; j < q; ++j) gx[j] += gi * row[j];
        }
      }
    });
    return out;
  }

  // --- shape / reduction ----------------------------------------------------

  Tensor reshape(const Tensor& x, Shape shape) {
    if (numel(shape) != x.size())
      throw std::invalid_argument("reshape: " + shape_string(x.shape()) + " to " + shape_string(shape));
    auto out = fresh(std::move(shape), x.requires_grad());
    auto ov = out.value_mut();
    const auto xv = x.value();
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = xv[i];
    record(out, [x, out]() {
      const auto g = out.grad();
      auto gx = x.grad_mut();
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    });
    return out;
  }

  Tensor sum(const Tensor& x) {
    auto out = fresh({1}, x.requires_grad());
    double acc = 0.0;
    for (double v : x.value()) acc += v;
    out.value_mut()[0] = acc;
    record(out, [x, out]() {
      const double g = out.grad()[0];
      auto gx = x.grad_mut();
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g;
    });
    return out;
  }

  // --- convolution ----------------------------------------------------------

  // Cross-correlation with stride 1 and zero padding that preserves the
  // spatial size, followed by 2x2/stride-2 max pooling (odd sizes round
  // down). input: [C, H, W], kernels: [K, C, kh, kw] with kh == kw odd,
  // bias: [K]. Output: [K, H/2, W/2].
  Tensor conv2d_maxpool(const Tensor& input, const Tensor& kernels, const Tensor& bias) {
    const Shape& is = input.shape();
    const Shape& ks = kernels.shape();
    if (is.size() != 3 || ks.size() != 4)
      throw std::invalid_argument("conv2d_maxpool: need input [C,H,W] and kernels [K,C,kh,kw], got " +
                                  shape_string(is) + " and " + shape_string(ks));
    if (ks[1] != is[0])
      throw std::invalid_argument("conv2d_maxpool: input channels " + shape_string(is) +
                                  " do not match kernel channels " + shape_string(ks));
    const std::size_t C = is[0], H = is[1], W = is[2];
    const std::size_t K = ks[0], kh = ks[2], kw = ks[3];
    if (kh != kw || kh % 2 == 0) throw std::invalid_argument("conv2d_maxpool: kernels must be square with odd size");
    if (kh > H || kw > W)
      throw std::invalid_argument("conv2d_maxpool: kernel " + shape_string(ks) + " larger than input " +
                                  shape_string(is));
    if (bias.shape().size() != 1 || bias.shape()[0] != K)
      throw std::invalid_argument("conv2d_maxpool: bias shape " + shape_string(bias.shape()) + " does not match " +
                                  std::to_string(K) + " kernels");
    const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(kh / 2);
    const std::size_t Ho = H / 2, Wo = W / 2;

    const bool needs_grad = input.requires_grad() || kernels.requires_grad() || bias.requires_grad();
    auto out = fresh({K, Ho, Wo}, needs_grad);
    // argmax of each pooling window, as flat (y * W + x) into the pre-pool map
    auto argmax = std::make_shared<std::vector<std::uint32_t>>(K * Ho * Wo);

    std::vector<double> pre(H * W);
    const double* in = input.value().data();
    const double* ker = kernels.value().data();
    const double* bs = bias.value().data();
    double* ov = out.value_mut().data();
    std::uint32_t* am = argmax->data();

    for (std::size_t k = 0; k < K; ++k) {
      for (double& v : pre) v = bs[k];
      for (std::size_t c = 0; c < C; ++c) {
        const double* plane = in + c * H * W;
        const double* kplane = ker + (k * C + c) * kh * kw;
        for (std::size_t dy = 0; dy < kh; ++dy) {
          for (std::size_t dx = 0; dx < kw; ++dx) {
            const double wgt = kplane[dy * kw + dx];
            if (wgt == 0.0) continue;
            const std::ptrdiff_t oy = static_cast<std::ptrdiff_t>(dy) - pad;
            const std::ptrdiff_t ox = static_cast<std::ptrdiff_t>(dx) - pad;
            const std::size_t y0 = oy < 0 ? static_cast<std::size_t>(-oy) : 0;
            const std::size_t y1 = oy > 0 ? H - static_cast<std::size_t>(oy) : H;
            const std::size_t x0 = ox < 0 ? static_cast<std::size_t>(-ox) : 0;
            const std::size_t x1 = ox > 0 ? W - static_cast<std::size_t>(ox) : W;
            for (std::size_t y = y0; y < y1; ++y) {
              double* prow = pre.data() + y * W;
              const double* irow = plane + (y + oy) * W + ox;
              for (std::size_t x = x0; x < x1; ++x) prow[x] += wgt * irow[x];
            }
          }
        }
      }
      // 2x2/2 max pool with winner bookkeeping
      for (std::size_t yo = 0; yo < Ho; ++yo) {
        for (std::size_t xo = 0; xo < Wo; ++xo) {
          const std::size_t y = 2 * yo, x = 2 * xo;
          std::size_t best = y * W + x;
          double bv = pre[best];
          const std::size_t cand[3] = {y * W + x + 1, (y + 1) * W + x, (y + 1) * W + x + 1};
          for (std::size_t idx : cand) {
            if (pre[idx] > bv) {
              bv = pre[idx];
              best = idx;
            }
          }
          ov[(k * Ho + yo) * Wo + xo] = bv;
          am[(k * Ho + yo) * Wo + xo] = static_cast<std::uint32_t>(best);
        }
      }
    }

    record(out, [input, kernels, bias, out, argmax, C, H, W, K, kh, kw, pad, Ho, Wo]() {
      const double* g = out.grad().data();
      const std::uint32_t* am = argmax->data();
      const double* in = input.value().data();
      const double* ker = kernels.value().data();
      double* gin = input.requires_grad() ? input.grad_mut().data() : nullptr;
      double* gker = kernels.requires_grad() ? kernels.grad_mut().data() : nullptr;
      double* gbias = bias.requires_grad() ? bias.grad_mut().data() : nullptr;
      // Gradient reaches only the pooling winners. Collect them once per
      // output channel, then accumulate kernel adjoints in local registers
      // while scattering into the input adjoint.
      struct Winner {
        double go;
        std::int32_t wy, wx;
      };
      std::vector<Winner> winners;
      winners.reserve(Ho * Wo);
      std::vector<double> acc(kh * kw);
      for (std::size_t k = 0; k < K; ++k) {
        winners.clear();
        double gb = 0.0;
        for (std::size_t o = 0; o < Ho * Wo; ++o) {
          const double go = g[k * Ho * Wo + o];
          gb += go;
          if (go == 0.0) continue;
          const std::uint32_t win = am[k * Ho * Wo + o];
          winners.push_back({go, static_cast<std::int32_t>(win / W), static_cast<std::int32_t>(win % W)});
        }
        if (gbias) gbias[k] += gb;
        if (!gker && !gin) continue;
        for (std::size_t c = 0; c < C; ++c) {
          const double* plane = in + c * H * W;
          double* gplane = gin ? gin + c * H * W : nullptr;
          const double* krow = ker + (k * C + c) * kh * kw;
          std::fill(acc.begin(), acc.end(), 0.0);
          if (kh == 3) {
            // 3x3 fast path: fully unrolled interior windows
            double a0 = 0, a1 = 0, a2 = 0, a3 = 0, a4 = 0, a5 = 0, a6 = 0, a7 = 0, a8 = 0;
            for (const Winner& win : winners) {
              const std::ptrdiff_t y0 = win.wy - pad, x0 = win.wx - pad;
              if (y0 >= 0 && x0 >= 0 && y0 + 3 <= static_cast<std::ptrdiff_t>(H) &&
                  x0 + 3 <= static_cast<std::ptrdiff_t>(W)) {
                const double* r0 = plane + y0 * W + x0;
                const double* r1 = r0 + W;
                const double* r2 = r1 + W;
                const double go = win.go;
                a0 += go * r0[0]; a1 += go * r0[1]; a2 += go * r0[2];
                a3 += go * r1[0]; a4 += go * r1[1]; a5 += go * r1[2];
                a6 += go * r2[0]; a7 += go * r2[1]; a8 += go * r2[2];
                if (gplane) {
                  double* q0 = gplane + y0 * W + x0;
                  double* q1 = q0 + W;
                  double* q2 = q1 + W;
                  q0[0] += go * krow[0]; q0[1] += go * krow[1]; q0[2] += go * krow[2];
                  q1[0] += go * krow[3]; q1[1] += go * krow[4]; q1[2] += go * krow[5];
                  q2[0] += go * krow[6]; q2[1] += go * krow[7]; q2[2] += go * krow[8];
                }
              } else {
                for (std::size_t dy = 0; dy < 3; ++dy) {
                  const std::ptrdiff_t iy = y0 + static_cast<std::ptrdiff_t>(dy);
                  if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(H)) continue;
                  for (std::size_t dx = 0; dx < 3; ++dx) {
                    const std::ptrdiff_t ix = x0 + static_cast<std::ptrdiff_t>(dx);
                    if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(W)) continue;
                    const std::size_t flat = static_cast<std::size_t>(iy) * W + static_cast<std::size_t>(ix);
                    acc[dy * 3 + dx] += win.go * plane[flat];
                    if (gplane) gplane[flat] += win.go * krow[dy * 3 + dx];
                  }
                }
              }
            }
            acc[0] += a0; acc[1] += a1; acc[2] += a2;
            acc[3] += a3; acc[4] += a4; acc[5] += a5;
            acc[6] += a6; acc[7] += a7; acc[8] += a8;
            if (gker) {
              double* gk = gker + (k * C + c) * 9;
              for (std::size_t t = 0; t < 9; ++t) gk[t] += acc[t];
            }
            continue;
          }
          for (const Winner& win : winners) {
            const std::ptrdiff_t y0 = win.wy - pad, x0 = win.wx - pad;
            if (y0 >= 0 && x0 >= 0 && y0 + static_cast<std::ptrdiff_t>(kh) <= static_cast<std::ptrdiff_t>(H) &&
                x0 + static_cast<std::ptrdiff_t>(kw) <= static_cast<std::ptrdiff_t>(W)) {
              const double* base = plane + y0 * W + x0;
              double* gbase = gplane ? gplane + y0 * W + x0 : nullptr;
              std::size_t t = 0;
              for (std::size_t dy = 0; dy < kh; ++dy) {
                const std::size_t row = dy * W;
                for (std::size_t dx = 0; dx < kw; ++dx, ++t) {
                  acc[t] += win.go * base[row + dx];
                  if (gbase) gbase[row + dx] += win.go * krow[t];
                }
              }
            } else {
              for (std::size_t dy = 0; dy < kh; ++dy) {
                const std::ptrdiff_t iy = y0 + static_cast<std::ptrdiff_t>(dy);
                if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(H)) continue;
                for (std::size_t dx = 0; dx < kw; ++dx) {
                  const std::ptrdiff_t ix = x0 + static_cast<std::ptrdiff_t>(dx);
                  if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(W)) continue;
                  const std::size_t flat = static_cast<std::size_t>(iy) * W + static_cast<std::size_t>(ix);
                  acc[dy * kw + dx] += win.go * plane[flat];
                  if (gplane) gplane[flat] += win.go * krow[dy * kw + dx];
                }
              }
            }
          }
          if (gker) {
            double* gk = gker + (k * C + c) * kh * kw;
            for (std::size_t t = 0; t < kh * kw; ++t) gk[t] += acc[t];
          }
        }
      }
    });
    return out;
  }

  // --- loss -------------------------------------------------------------------

  // -[y ln p + (1-y) ln(1-p)] with p clamped away from {0, 1}. The gradient
  // is zero in the clamped region, matching the clamped forward value.
  Tensor binary_cross_entropy(const Tensor& p, double label) {
    if (p.size() != 1)
      throw std::invalid_argument("binary_cross_entropy: probability has shape " + shape_string(p.shape()));
    auto out = fresh({1}, p.requires_grad());
    const double raw = p.value()[0];
    const double pc = raw < kProbClamp ? kProbClamp : (raw > 1.0 - kProbClamp ? 1.0 - kProbClamp : raw);
    out.value_mut()[0] = -(label * std::log(pc) + (1.0 - label) * std::log(1.0 - pc));
    record(out, [p, out, label]() {
      const double raw = p.value()[0];
      if (raw < kProbClamp || raw > 1.0 - kProbClamp) return;  // flat region
      const double g = out.grad()[0];
      p.grad_mut()[0] += g * (-label / raw + (1.0 - label) / (1.0 - raw));
    });
    return out;
  }

  // --- backward ----------------------------------------------------------------

  // Seeds d(loss)/d(loss) = 1 and walks the tape in reverse. Each recorded
  // node runs exactly once; forward values are never modified.
  void backward(const Tensor& loss) {
    if (loss.size() != 1) throw std::invalid_argument("backward: loss must be a scalar");
    if (!loss.requires_grad())
      throw std::invalid_argument("backward: loss does not depend on any gradient-tracked tensor");
    loss.grad_mut()[0] += 1.0;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
  }

 private:
  Tensor fresh(Shape shape, bool requires_grad) {
    return make_zeros(std::move(shape), requires_grad && recording_);
  }

  void record(const Tensor& result, std::function<void()> back) {
    if (recording_ && result.requires_grad()) nodes_.push_back(std::move(back));
  }

  void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape())
      throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                                  shape_string(b.shape()));
  }

  std::vector<std::function<void()>> nodes_;
  bool recording_ = true;
};

}  // namespace dggn
