#include "introdistill/ops.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>

namespace introdistill {

namespace {

void check_same_shape(const Var& a, const Var& b, const char* op) {
  if (!a.value().same_shape(b.value())) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                shape_str(a.value().shape()) + " vs " +
                                shape_str(b.value().shape()));
  }
}

void check_matrix(const Var& x, const char* op) {
  if (x.value().rank() != 2) {
    throw std::invalid_argument(std::string(op) + ": expected rank-2, got " +
                                shape_str(x.value().shape()));
  }
}

void check_finite_input(const Var& x, const char* op) {
  if (checked_mode() && !x.value().all_finite()) {
    throw std::domain_error(std::string(op) + ": non-finite input");
  }
}

void check_rows_normalized(const NdArray& rows, const char* op,
                           const char* which) {
  const std::size_t b = rows.dim(0), c = rows.dim(1);
  for (std::size_t i = 0; i < b; ++i) {
    double s = 0.0;
    for (std::size_t k = 0; k < c; ++k) s += rows[i * c + k];
    if (std::abs(s - 1.0) > 1e-6) {
      throw std::invalid_argument(std::string(op) + ": " + which + " row " +
                                  std::to_string(i) +
                                  " not normalized (sum=" + std::to_string(s) +
                                  ")");
    }
  }
}

}  // namespace

Var add(Tape& tape, const Var& a, const Var& b) {
  check_same_shape(a, b, "add");
  const NdArray& av = a.value();
  const NdArray& bv = b.value();
  std::vector<double> out(av.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  const std::size_t ia = a.index(), ib = b.index();
  const bool rg = a.requires_grad() || b.requires_grad();
  return tape.record(
      NdArray(av.shape(), std::move(out)), rg,
      [ia, ib](Tape& t, const NdArray& g) {
        if (t.requires_grad(ia)) {
          NdArray& ga = t.grad_buffer(ia);
          for (std::size_t i = 0; i < g.numel(); ++i) ga[i] += g[i];
        }
        if (t.requires_grad(ib)) {
          NdArray& gb = t.grad_buffer(ib);
          for (std::size_t i = 0; i < g.numel(); ++i) gb[i] += g[i];
        }
      });
}

Var sub(Tape& tape, const Var& a, const Var& b) {
  check_same_shape(a, b, "sub");
  const NdArray& av = a.value();
  const NdArray& bv = b.value();
  std::vector<double> out(av.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
  const std::size_t ia = a.index(), ib = b.index();
  const bool rg = a.requires_grad() || b.requires_grad();
  return tape.record(
      NdArray(av.shape(), std::move(out)), rg,
      [ia, ib](Tape& t, const NdArray& g) {
        if (t.requires_grad(ia)) {
          NdArray& ga = t.grad_buffer(ia);
          for (std::size_t i = 0; i < g.numel(); ++i) ga[i] += g[i];
        }
        if (t.requires_grad(ib)) {
          NdArray& gb = t.grad_buffer(ib);
          for (std::size_t i = 0; i < g.numel(); ++i) gb[i] -= g[i];
        }
      });
}

Var mul(Tape& tape, const Var& a, const Var& b) {
  check_same_shape(a, b, "mul");
  const NdArray& av = a.value();
  const NdArray& bv = b.value();
  std::vector<double> out(av.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  const std::size_t ia = a.index(), ib = b.index();
  const bool rg = a.requires_grad() || b.requires_grad();
  return tape.record(
      NdArray(av.shape(), std::move(out)), rg,
      [ia, ib](Tape& t, const NdArray& g) {
        const NdArray& av = t.value(ia);
        const NdArray& bv = t.value(ib);
        if (t.requires_grad(ia)) {
          NdArray& ga = t.grad_buffer(ia);
          for (std::size_t i = 0; i < g.numel(); ++i) ga[i] += g[i] * bv[i];
        }
        if (t.requires_grad(ib)) {
          NdArray& gb = t.grad_buffer(ib);
          for (std::size_t i = 0; i < g.numel(); ++i) gb[i] += g[i] * av[i];
        }
      });
}

Var scale(Tape& tape, const Var& a, double c) {
  const NdArray& av = a.value();
  std::vector<double> out(av.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * c;
  const std::size_t ia = a.index();
  return tape.record(NdArray(av.shape(), std::move(out)), a.requires_grad(),
                     [ia, c](Tape& t, const NdArray& g) {
                       if (!t.requires_grad(ia)) return;
                       NdArray& ga = t.grad_buffer(ia);
                       for (std::size_t i = 0; i < g.numel(); ++i)
                         ga[i] += g[i] * c;
                     });
}

Var add_const(Tape& tape, const Var& a, double c) {
  const NdArray& av = a.value();
  std::vector<double> out(av.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + c;
  const std::size_t ia = a.index();
  return tape.record(NdArray(av.shape(), std::move(out)), a.requires_grad(),
                     [ia](Tape& t, const NdArray& g) {
                       if (!t.requires_grad(ia)) return;
                       NdArray& ga = t.grad_buffer(ia);
                       for (std::size_t i = 0; i < g.numel(); ++i)
                         ga[i] += g[i];
                     });
}

Var add_bias(Tape& tape, const Var& x, const Var& bias) {
  check_matrix(x, "add_bias");
  const NdArray& xv = x.value();
  const NdArray& bv = bias.value();
  const std::size_t m = xv.dim(0), n = xv.dim(1);
  if (bv.rank() != 1 || bv.dim(0) != n) {
    throw std::invalid_argument("add_bias: bias shape " +
                                shape_str(bv.shape()) + " does not match " +
                                shape_str(xv.shape()));
  }
  std::vector<double> out(xv.numel());
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = xv[i * n + j] + bv[j];
  const std::size_t ix = x.index(), ib = bias.index();
  const bool rg = x.requires_grad() || bias.requires_grad();
  return tape.record(
      NdArray(xv.shape(), std::move(out)), rg,
      [ix, ib, m, n](Tape& t, const NdArray& g) {
        if (t.requires_grad(ix)) {
          NdArray& gx = t.grad_buffer(ix);
          for (std::size_t i = 0; i < g.numel(); ++i) gx[i] += g[i];
        }
        if (t.requires_grad(ib)) {
          NdArray& gb = t.grad_buffer(ib);
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) gb[j] += g[i * n + j];
        }
      });
}

Var matmul(Tape& tape, const Var& a, const Var& b) {
  check_matrix(a, "matmul");
  check_matrix(b, "matmul");
  const NdArray& av = a.value();
  const NdArray& bv = b.value();
  const std::size_t m = av.dim(0), k = av.dim(1), n = bv.dim(1);
  if (bv.dim(0) != k) {
    throw std::invalid_argument("matmul: inner dimensions disagree " +
                                shape_str(av.shape()) + " vs " +
                                shape_str(bv.shape()));
  }
  std::vector<double> out(m * n, 0.0);
  {
    const double* A = av.data();
    const double* B = bv.data();
    double* C = out.data();
    for (std::size_t i = 0; i < m; ++i) {
      double* ci = C + i * n;
      const double* ai = A + i * k;
      for (std::size_t l = 0; l < k; ++l) {
        const double alv = ai[l];
        const double* bl = B + l * n;
        for (std::size_t j = 0; j < n; ++j) ci[j] += alv * bl[j];
      }
    }
  }
  const std::size_t ia = a.index(), ib = b.index();
  const bool rg = a.requires_grad() || b.requires_grad();
  return tape.record(
      NdArray({m, n}, std::move(out)), rg,
      [ia, ib, m, k, n](Tape& t, const NdArray& g) {
        const double* G = g.data();
        if (t.requires_grad(ia)) {
          // gA = g * B^T
          const double* B = t.value(ib).data();
          double* GA = t.grad_buffer(ia).data();
          for (std::size_t i = 0; i < m; ++i) {
            const double* gi = G + i * n;
            double* gai = GA + i * k;
            for (std::size_t j = 0; j < n; ++j) {
              const double gv = gi[j];
              const double* bj = B + j;  // column j, stride n
              for (std::size_t l = 0; l < k; ++l) gai[l] += gv * bj[l * n];
            }
          }
        }
        if (t.requires_grad(ib)) {
          // gB = A^T * g
          const double* A = t.value(ia).data();
          double* GB = t.grad_buffer(ib).data();
          for (std::size_t i = 0; i < m; ++i) {
            const double* ai = A + i * k;
            const double* gi = G + i * n;
            for (std::size_t l = 0; l < k; ++l) {
              const double alv = ai[l];
              double* gbl = GB + l * n;
              for (std::size_t j = 0; j < n; ++j) gbl[j] += alv * gi[j];
            }
          }
        }
      });
}

Var relu(Tape& tape, const Var& x) {
  const NdArray& xv = x.value();
  std::vector<double> out(xv.numel());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = xv[i] > 0.0 ? xv[i] : 0.0;
  const std::size_t ix = x.index();
  return tape.record(NdArray(xv.shape(), std::move(out)), x.requires_grad(),
                     [ix](Tape& t, const NdArray& g) {
                       if (!t.requires_grad(ix)) return;
                       const NdArray& xv = t.value(ix);
                       NdArray& gx = t.grad_buffer(ix);
                       for (std::size_t i = 0; i < g.numel(); ++i)
                         if (xv[i] > 0.0) gx[i] += g[i];
                     });
}

namespace {

struct ConvDims {
  std::size_t b, ic, h, w, oc, kh, kw, oh, ow, stride, pad;
};

ConvDims conv_dims(const NdArray& x, const NdArray& weight,
                   const NdArray& bias, std::size_t stride, std::size_t pad) {
  if (x.rank() != 4 || weight.rank() != 4 || bias.rank() != 1) {
    throw std::invalid_argument("conv2d: expected x[B,C,H,W], w[OC,IC,KH,KW], "
                                "b[OC]");
  }
  ConvDims d;
  d.b = x.dim(0);
  d.ic = x.dim(1);
  d.h = x.dim(2);
  d.w = x.dim(3);
  d.oc = weight.dim(0);
  d.kh = weight.dim(2);
  d.kw = weight.dim(3);
  d.stride = stride;
  d.pad = pad;
  if (weight.dim(1) != d.ic) {
    throw std::invalid_argument("conv2d: channel mismatch, input has " +
                                std::to_string(d.ic) + ", kernel expects " +
                                std::to_string(weight.dim(1)));
  }
  if (bias.dim(0) != d.oc) {
    throw std::invalid_argument("conv2d: bias length mismatch");
  }
  if (stride == 0 || d.h + 2 * pad < d.kh || d.w + 2 * pad < d.kw) {
    throw std::invalid_argument("conv2d: kernel does not fit input");
  }
  d.oh = (d.h + 2 * pad - d.kh) / stride + 1;
  d.ow = (d.w + 2 * pad - d.kw) / stride + 1;
  return d;
}

// Output rows `oh` for which ih = oh*stride + kh - pad lies in [0, h).
inline void oh_range(std::size_t kh, const ConvDims& d, std::size_t& lo,
                     std::size_t& hi) {
  // lo: smallest oh with oh*stride >= pad - kh
  lo = (d.pad > kh) ? (d.pad - kh + d.stride - 1) / d.stride : 0;
  // hi: one past largest oh with oh*stride <= h - 1 + pad - kh
  const std::size_t top = d.h - 1 + d.pad - kh;
  hi = std::min(d.oh, top / d.stride + 1);
}

}  // namespace

namespace {

// Patch matrix for one batch item, laid out [K = ic*kh*kw][S = oh*ow] so the
// heavy loops run contiguously along S.
void im2col_item(const double* x_item, const ConvDims& d, double* patches) {
  const std::size_t S = d.oh * d.ow;
  const std::size_t xplane = d.h * d.w;
  std::size_t k = 0;
  for (std::size_t ic = 0; ic < d.ic; ++ic) {
    const double* xp = x_item + ic * xplane;
    for (std::size_t kh = 0; kh < d.kh; ++kh) {
      std::size_t lo, hi;
      oh_range(kh, d, lo, hi);
      for (std::size_t kw = 0; kw < d.kw; ++kw, ++k) {
        double* row = patches + k * S;
        std::fill(row, row + S, 0.0);
        std::size_t wlo, whi;
        {
          ConvDims dw = d;
          dw.h = d.w;
          dw.oh = d.ow;
          oh_range(kw, dw, wlo, whi);
        }
        for (std::size_t oh = lo; oh < hi; ++oh) {
          const double* xr = xp + (oh * d.stride + kh - d.pad) * d.w;
          double* dst = row + oh * d.ow;
          for (std::size_t ow = wlo; ow < whi; ++ow) {
            dst[ow] = xr[ow * d.stride + kw - d.pad];
          }
        }
      }
    }
  }
}

// Scatter-add of a patch-gradient matrix back onto the input gradient.
void col2im_add_item(const double* gpatches, const ConvDims& d,
                     double* gx_item) {
  const std::size_t S = d.oh * d.ow;
  const std::size_t xplane = d.h * d.w;
  std::size_t k = 0;
  for (std::size_t ic = 0; ic < d.ic; ++ic) {
    double* gxp = gx_item + ic * xplane;
    for (std::size_t kh = 0; kh < d.kh; ++kh) {
      std::size_t lo, hi;
      oh_range(kh, d, lo, hi);
      for (std::size_t kw = 0; kw < d.kw; ++kw, ++k) {
        const double* row = gpatches + k * S;
        std::size_t wlo, whi;
        {
          ConvDims dw = d;
          dw.h = d.w;
          dw.oh = d.ow;
          oh_range(kw, dw, wlo, whi);
        }
        for (std::size_t oh = lo; oh < hi; ++oh) {
          double* gxr = gxp + (oh * d.stride + kh - d.pad) * d.w;
          const double* src = row + oh * d.ow;
          for (std::size_t ow = wlo; ow < whi; ++ow) {
            gxr[ow * d.stride + kw - d.pad] += src[ow];
          }
        }
      }
    }
  }
}

}  // namespace

Var conv2d(Tape& tape, const Var& x, const Var& weight, const Var& bias,
           std::size_t stride, std::size_t pad) {
  const NdArray& xv = x.value();
  const NdArray& wv = weight.value();
  const NdArray& bv = bias.value();
  const ConvDims d = conv_dims(xv, wv, bv, stride, pad);
  const std::size_t K = d.ic * d.kh * d.kw;
  const std::size_t S = d.oh * d.ow;

  std::vector<double> out(d.b * d.oc * S);
  {
    const double* X = xv.data();
    const double* W = wv.data();
    const double* B = bv.data();
    std::vector<double> patches(K * S);
    for (std::size_t b = 0; b < d.b; ++b) {
      im2col_item(X + b * d.ic * d.h * d.w, d, patches.data());
      double* ob = out.data() + b * d.oc * S;
      for (std::size_t oc = 0; oc < d.oc; ++oc) {
        double* orow = ob + oc * S;
        std::fill(orow, orow + S, B[oc]);
        const double* wrow = W + oc * K;
        for (std::size_t k = 0; k < K; ++k) {
          const double wval = wrow[k];
          const double* prow = patches.data() + k * S;
          for (std::size_t s = 0; s < S; ++s) orow[s] += wval * prow[s];
        }
      }
    }
  }

  const std::size_t ix = x.index(), iw = weight.index(), ib = bias.index();
  const bool rg =
      x.requires_grad() || weight.requires_grad() || bias.requires_grad();
  return tape.record(
      NdArray({d.b, d.oc, d.oh, d.ow}, std::move(out)), rg,
      [ix, iw, ib, d, K, S](Tape& t, const NdArray& g) {
        const double* G = g.data();
        const bool need_x = t.requires_grad(ix);
        const bool need_w = t.requires_grad(iw);
        const bool need_b = t.requires_grad(ib);
        const double* X = t.value(ix).data();
        const double* W = t.value(iw).data();

        if (need_b) {
          double* GB = t.grad_buffer(ib).data();
          for (std::size_t b = 0; b < d.b; ++b)
            for (std::size_t oc = 0; oc < d.oc; ++oc) {
              const double* gp = G + (b * d.oc + oc) * S;
              double acc = 0.0;
              for (std::size_t s = 0; s < S; ++s) acc += gp[s];
              GB[oc] += acc;
            }
        }
        if (!need_x && !need_w) return;
        double* GX = need_x ? t.grad_buffer(ix).data() : nullptr;
        double* GW = need_w ? t.grad_buffer(iw).data() : nullptr;
        std::vector<double> patches(need_w ? K * S : 0);
        std::vector<double> gpatches(need_x ? K * S : 0);
        for (std::size_t b = 0; b < d.b; ++b) {
          const double* gb = G + b * d.oc * S;
          if (need_w) {
            im2col_item(X + b * d.ic * d.h * d.w, d, patches.data());
            for (std::size_t oc = 0; oc < d.oc; ++oc) {
              const double* grow = gb + oc * S;
              double* gwrow = GW + oc * K;
              for (std::size_t k = 0; k < K; ++k) {
                const double* prow = patches.data() + k * S;
                double acc = 0.0;
                for (std::size_t s = 0; s < S; ++s) acc += grow[s] * prow[s];
                gwrow[k] += acc;
              }
            }
          }
          if (need_x) {
            std::fill(gpatches.begin(), gpatches.end(), 0.0);
            for (std::size_t oc = 0; oc < d.oc; ++oc) {
              const double* grow = gb + oc * S;
              const double* wrow = W + oc * K;
              for (std::size_t k = 0; k < K; ++k) {
                const double wval = wrow[k];
                double* gprow = gpatches.data() + k * S;
                for (std::size_t s = 0; s < S; ++s) gprow[s] += wval * grow[s];
              }
            }
            col2im_add_item(gpatches.data(), d, GX + b * d.ic * d.h * d.w);
          }
        }
      });
}

Var reshape(Tape& tape, const Var& x, Shape shape) {
  NdArray out = x.value().reshaped(shape);
  const std::size_t ix = x.index();
  return tape.record(std::move(out), x.requires_grad(),
                     [ix](Tape& t, const NdArray& g) {
                       if (!t.requires_grad(ix)) return;
                       NdArray& gx = t.grad_buffer(ix);
                       for (std::size_t i = 0; i < g.numel(); ++i)
                         gx[i] += g[i];
                     });
}

Var sum_all(Tape& tape, const Var& x) {
  const NdArray& xv = x.value();
  double s = 0.0;
  for (std::size_t i = 0; i < xv.numel(); ++i) s += xv[i];
  const std::size_t ix = x.index();
  return tape.record(NdArray::scalar(s), x.requires_grad(),
                     [ix](Tape& t, const NdArray& g) {
                       if (!t.requires_grad(ix)) return;
                       NdArray& gx = t.grad_buffer(ix);
                       const double gv = g[0];
                       for (std::size_t i = 0; i < gx.numel(); ++i)
                         gx[i] += gv;
                     });
}

Var mean_all(Tape& tape, const Var& x) {
  const NdArray& xv = x.value();
  if (xv.numel() == 0) throw std::invalid_argument("mean_all: empty array");
  double s = 0.0;
  for (std::size_t i = 0; i < xv.numel(); ++i) s += xv[i];
  const double inv = 1.0 / static_cast<double>(xv.numel());
  const std::size_t ix = x.index();
  return tape.record(NdArray::scalar(s * inv), x.requires_grad(),
                     [ix, inv](Tape& t, const NdArray& g) {
                       if (!t.requires_grad(ix)) return;
                       NdArray& gx = t.grad_buffer(ix);
                       const double gv = g[0] * inv;
                       for (std::size_t i = 0; i < gx.numel(); ++i)
                         gx[i] += gv;
                     });
}

Var weighted_mean(Tape& tape, const Var& x,
                  const std::vector<double>& weights) {
  const NdArray& xv = x.value();
  if (xv.rank() != 1 || xv.numel() != weights.size()) {
    throw std::invalid_argument("weighted_mean: expected [b] with matching "
                                "weight count");
  }
  double s = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) s += weights[i] * xv[i];
  const double inv = 1.0 / static_cast<double>(weights.size());
  const std::size_t ix = x.index();
  return tape.record(NdArray::scalar(s * inv), x.requires_grad(),
                     [ix, inv, weights](Tape& t, const NdArray& g) {
                       if (!t.requires_grad(ix)) return;
                       NdArray& gx = t.grad_buffer(ix);
                       const double gv = g[0] * inv;
                       for (std::size_t i = 0; i < gx.numel(); ++i)
                         gx[i] += gv * weights[i];
                     });
}

Var softmax_temperature(Tape& tape, const Var& logits, double tau) {
  if (!(tau > 0.0)) {
    throw std::invalid_argument("softmax_temperature: tau must be > 0, got " +
                                std::to_string(tau));
  }
  check_matrix(logits, "softmax_temperature");
  check_finite_input(logits, "softmax_temperature");
  const NdArray& xv = logits.value();
  const std::size_t b = xv.dim(0), c = xv.dim(1);
  std::vector<double> out(b * c);
  for (std::size_t i = 0; i < b; ++i) {
    const double* row = xv.data() + i * c;
    double m = row[0];
    for (std::size_t k = 1; k < c; ++k) m = std::max(m, row[k]);
    double z = 0.0;
    double* orow = out.data() + i * c;
    for (std::size_t k = 0; k < c; ++k) {
      orow[k] = std::exp((row[k] - m) / tau);
      z += orow[k];
    }
    const double invz = 1.0 / z;
    for (std::size_t k = 0; k < c; ++k) orow[k] *= invz;
  }
  const std::size_t ix = logits.index();
  std::vector<double> y = out;  // cached for backward
  return tape.record(
      NdArray({b, c}, std::move(out)), logits.requires_grad(),
      [ix, b, c, tau, y = std::move(y)](Tape& t, const NdArray& g) {
        if (!t.requires_grad(ix)) return;
        // gx_j = (y_j / tau) * (g_j - sum_k g_k y_k)
        NdArray& gx = t.grad_buffer(ix);
        const double invtau = 1.0 / tau;
        for (std::size_t i = 0; i < b; ++i) {
          const double* yr = y.data() + i * c;
          const double* gr = g.data() + i * c;
          double dot = 0.0;
          for (std::size_t k = 0; k < c; ++k) dot += gr[k] * yr[k];
          double* grow = gx.data() + i * c;
          for (std::size_t k = 0; k < c; ++k)
            grow[k] += yr[k] * invtau * (gr[k] - dot);
        }
      });
}

Var cross_entropy(Tape& tape, const Var& logits,
                  const std::vector<int>& labels) {
  check_matrix(logits, "cross_entropy");
  check_finite_input(logits, "cross_entropy");
  const NdArray& xv = logits.value();
  const std::size_t b = xv.dim(0), c = xv.dim(1);
  if (labels.size() != b) {
    throw std::invalid_argument("cross_entropy: label count mismatch");
  }
  for (std::size_t i = 0; i < b; ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= c) {
      throw std::out_of_range("cross_entropy: label " +
                              std::to_string(labels[i]) + " out of range [0," +
                              std::to_string(c) + ")");
    }
  }
  std::vector<double> out(b);
  std::vector<double> probs(b * c);  // cached for backward
  for (std::size_t i = 0; i < b; ++i) {
    const double* row = xv.data() + i * c;
    double m = row[0];
    for (std::size_t k = 1; k < c; ++k) m = std::max(m, row[k]);
    double z = 0.0;
    double* prow = probs.data() + i * c;
    for (std::size_t k = 0; k < c; ++k) {
      prow[k] = std::exp(row[k] - m);
      z += prow[k];
    }
    const double lse = m + std::log(z);
    out[i] = lse - row[labels[i]];
    const double invz = 1.0 / z;
    for (std::size_t k = 0; k < c; ++k) prow[k] *= invz;
  }
  const std::size_t ix = logits.index();
  return tape.record(
      NdArray({b}, std::move(out)), logits.requires_grad(),
      [ix, b, c, labels, probs = std::move(probs)](Tape& t, const NdArray& g) {
        if (!t.requires_grad(ix)) return;
        NdArray& gx = t.grad_buffer(ix);
        for (std::size_t i = 0; i < b; ++i) {
          const double gv = g[i];
          const double* prow = probs.data() + i * c;
          double* grow = gx.data() + i * c;
          for (std::size_t k = 0; k < c; ++k) grow[k] += gv * prow[k];
          grow[labels[i]] -= gv;
        }
      });
}

Var kl_divergence(Tape& tape, const Var& q, const Var& p) {
  check_same_shape(q, p, "kl_divergence");
  check_matrix(q, "kl_divergence");
  const NdArray& qv = q.value();
  const NdArray& pv = p.value();
  check_rows_normalized(qv, "kl_divergence", "q");
  check_rows_normalized(pv, "kl_divergence", "p");
  const std::size_t b = qv.dim(0), c = qv.dim(1);
  std::vector<double> out(b, 0.0);
  for (std::size_t i = 0; i < b; ++i) {
    const double* qr = qv.data() + i * c;
    const double* pr = pv.data() + i * c;
    double s = 0.0;
    for (std::size_t k = 0; k < c; ++k) {
      const double pk = pr[k];
      if (pk > 0.0) {
        s += pk * (std::log(std::max(pk, kProbFloor)) -
                   std::log(std::max(qr[k], kProbFloor)));
      }
    }
    out[i] = s;
  }
  const std::size_t iq = q.index(), ip = p.index();
  const bool rg = q.requires_grad() || p.requires_grad();
  return tape.record(
      NdArray({b}, std::move(out)), rg,
      [iq, ip, b, c](Tape& t, const NdArray& g) {
        const NdArray& qv = t.value(iq);
        const NdArray& pv = t.value(ip);
        if (t.requires_grad(iq)) {
          NdArray& gq = t.grad_buffer(iq);
          for (std::size_t i = 0; i < b; ++i) {
            const double gv = g[i];
            const double* qr = qv.data() + i * c;
            const double* pr = pv.data() + i * c;
            double* grow = gq.data() + i * c;
            for (std::size_t k = 0; k < c; ++k) {
              if (qr[k] > kProbFloor && pr[k] > 0.0) {
                grow[k] -= gv * pr[k] / qr[k];
              }
            }
          }
        }
        if (t.requires_grad(ip)) {
          NdArray& gp = t.grad_buffer(ip);
          for (std::size_t i = 0; i < b; ++i) {
            const double gv = g[i];
            const double* qr = qv.data() + i * c;
            const double* pr = pv.data() + i * c;
            double* grow = gp.data() + i * c;
            for (std::size_t k = 0; k < c; ++k) {
              const double diff = std::log(std::max(pr[k], kProbFloor)) -
                                  std::log(std::max(qr[k], kProbFloor));
              grow[k] += gv * (diff + (pr[k] > kProbFloor ? 1.0 : 0.0));
            }
          }
        }
      });
}

NdArray softmax_rows(const NdArray& logits, double tau) {
  if (!(tau > 0.0)) {
    throw std::invalid_argument("softmax_rows: tau must be > 0");
  }
  if (logits.rank() != 2) {
    throw std::invalid_argument("softmax_rows: expected rank-2");
  }
  const std::size_t b = logits.dim(0), c = logits.dim(1);
  std::vector<double> out(b * c);
  for (std::size_t i = 0; i < b; ++i) {
    const double* row = logits.data() + i * c;
    double m = row[0];
    for (std::size_t k = 1; k < c; ++k) m = std::max(m, row[k]);
    double z = 0.0;
    double* orow = out.data() + i * c;
    for (std::size_t k = 0; k < c; ++k) {
      orow[k] = std::exp((row[k] - m) / tau);
      z += orow[k];
    }
    const double invz = 1.0 / z;
    for (std::size_t k = 0; k < c; ++k) orow[k] *= invz;
  }
  return NdArray({b, c}, std::move(out));
}

std::vector<int> argmax_rows(const NdArray& rows) {
  if (rows.rank() != 2) {
    throw std::invalid_argument("argmax_rows: expected rank-2");
  }
  const std::size_t b = rows.dim(0), c = rows.dim(1);
  std::vector<int> out(b);
  for (std::size_t i = 0; i < b; ++i) {
    const double* row = rows.data() + i * c;
    std::size_t best = 0;
    for (std::size_t k = 1; k < c; ++k)
      if (row[k] > row[best]) best = k;
    out[i] = static_cast<int>(best);
  }
  return out;
}

double accuracy(const NdArray& logits, const std::vector<int>& labels) {
  const std::vector<int> pred = argmax_rows(logits);
  if (pred.size() != labels.size()) {
    throw std::invalid_argument("accuracy: label count mismatch");
  }
  if (pred.empty()) throw std::invalid_argument("accuracy: empty batch");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < pred.size(); ++i)
    if (pred[i] == labels[i]) ++hits;
  return static_cast<double>(hits) / static_cast<double>(pred.size());
}

}  // namespace introdistill
