#include <algorithm>
#include <cstring>
#include <vector>

#include "octevo/errors.hpp"
#include "octevo/tensor.hpp"
#include "gemm.hpp"

// conv2d / conv_transpose2d run as im2col + GEMM, processed in output-row
// strips so the scratch column buffer stays bounded at full-scale sizes.
// Strip boundaries are a fixed function of the shapes, so results are
// reproducible run to run.

namespace octevo {

using detail::Node;
using detail::Tr;

namespace {

constexpr int64_t kColBudgetBytes = 64ll << 20;

struct ConvDims {
  int64_t ci, h, w, co, k, ho, wo;
  int stride, pad;
};

ConvDims conv_dims(const Tensor& input, const Tensor& kernel,
                   const Tensor& bias, int stride, int padding) {
  check_dim(input.ndim() == 3, "conv2d: input must be [C,H,W], got " +
                                   shape_str(input.shape()));
  check_dim(kernel.ndim() == 4 && kernel.dim(2) == kernel.dim(3),
            "conv2d: kernel must be [C_out,C_in,k,k], got " +
                shape_str(kernel.shape()));
  check_dim(kernel.dim(1) == input.dim(0),
            "conv2d: kernel expects " + std::to_string(kernel.dim(1)) +
                " input channels, image has " + std::to_string(input.dim(0)));
  check_dim(bias.ndim() == 1 && bias.dim(0) == kernel.dim(0),
            "conv2d: bias must have one entry per output channel");
  check_arg(stride >= 1, "conv2d: stride must be >= 1");
  check_arg(padding >= 0, "conv2d: padding must be >= 0");
  ConvDims d;
  d.ci = input.dim(0);
  d.h = input.dim(1);
  d.w = input.dim(2);
  d.co = kernel.dim(0);
  d.k = kernel.dim(2);
  d.stride = stride;
  d.pad = padding;
  const int64_t eh = d.h + 2 * padding - d.k, ew = d.w + 2 * padding - d.k;
  check_dim(eh >= 0 && ew >= 0, "conv2d: kernel larger than padded input");
  check_dim(eh % stride == 0 && ew % stride == 0,
            "conv2d: stride does not tile the padded input");
  d.ho = eh / stride + 1;
  d.wo = ew / stride + 1;
  return d;
}

// Fill col[(ci*k*k) x (rows*wo)] for output rows [r0, r0+rows).
void im2col(const Real* in, const ConvDims& d, int64_t r0, int64_t rows,
            Real* col) {
  const int64_t patch = d.ci * d.k * d.k;
  const int64_t ncols = rows * d.wo;
  for (int64_t c = 0; c < d.ci; ++c) {
    for (int64_t ky = 0; ky < d.k; ++ky) {
      for (int64_t kx = 0; kx < d.k; ++kx) {
        Real* dst = col + ((c * d.k + ky) * d.k + kx) * ncols;
        for (int64_t y = 0; y < rows; ++y) {
          const int64_t iy = (r0 + y) * d.stride + ky - d.pad;
          for (int64_t x = 0; x < d.wo; ++x) {
            const int64_t ix = x * d.stride + kx - d.pad;
            dst[y * d.wo + x] =
                (iy >= 0 && iy < d.h && ix >= 0 && ix < d.w)
                    ? in[(c * d.h + iy) * d.w + ix]
                    : Real(0);
          }
        }
      }
    }
  }
  (void)patch;
}

// Scatter-add the column representation back into image gradients.
void col2im_acc(const Real* col, const ConvDims& d, int64_t r0, int64_t rows,
                Real* gin) {
  const int64_t ncols = rows * d.wo;
  for (int64_t c = 0; c < d.ci; ++c) {
    for (int64_t ky = 0; ky < d.k; ++ky) {
      for (int64_t kx = 0; kx < d.k; ++kx) {
        const Real* src = col + ((c * d.k + ky) * d.k + kx) * ncols;
        for (int64_t y = 0; y < rows; ++y) {
          const int64_t iy = (r0 + y) * d.stride + ky - d.pad;
          if (iy < 0 || iy >= d.h) continue;
          for (int64_t x = 0; x < d.wo; ++x) {
            const int64_t ix = x * d.stride + kx - d.pad;
            if (ix < 0 || ix >= d.w) continue;
            gin[(c * d.h + iy) * d.w + ix] += src[y * d.wo + x];
          }
        }
      }
    }
  }
}

int64_t strip_rows(int64_t patch, int64_t wo, int64_t ho) {
  int64_t rows = kColBudgetBytes / int64_t(sizeof(Real)) / (patch * wo);
  rows = std::clamp<int64_t>(rows, 1, ho);
  return rows;
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias,
              int stride, int padding) {
  const ConvDims d = conv_dims(input, kernel, bias, stride, padding);
  Tensor out = Tensor::raw({d.co, d.ho, d.wo});
  const int64_t patch = d.ci * d.k * d.k;
  const int64_t rows = strip_rows(patch, d.wo, d.ho);
  std::vector<Real> col(patch * rows * d.wo);
  for (int64_t r0 = 0; r0 < d.ho; r0 += rows) {
    const int64_t r = std::min(rows, d.ho - r0);
    im2col(input.data(), d, r0, r, col.data());
    // out[:, r0*wo : ...] = K(co, patch) * col(patch, r*wo)
    detail::gemm(Tr::N, Tr::N, d.co, r * d.wo, patch, kernel.data(), patch,
                 col.data(), r * d.wo, out.data() + r0 * d.wo, d.ho * d.wo,
                 false);
  }
  for (int64_t o = 0; o < d.co; ++o) {
    const Real b = bias.data()[o];
    Real* row = out.data() + o * d.ho * d.wo;
    for (int64_t i = 0; i < d.ho * d.wo; ++i) row[i] += b;
  }
  attach_backprop(out, {input, kernel, bias},
                  [in = input.node(), kn = kernel.node(), bn = bias.node(),
                   d](Node& self) {
    const int64_t patch = d.ci * d.k * d.k;
    const int64_t rows = strip_rows(patch, d.wo, d.ho);
    std::vector<Real> col(patch * rows * d.wo);
    std::vector<Real> gcol;
    if (in->requires_grad) {
      detail::ensure_grad(in.get());
      gcol.resize(col.size());
    }
    if (kn->requires_grad) detail::ensure_grad(kn.get());
    for (int64_t r0 = 0; r0 < d.ho; r0 += rows) {
      const int64_t r = std::min(rows, d.ho - r0);
      const Real* gout = self.grad.data() + r0 * d.wo;  // ld = ho*wo
      if (kn->requires_grad || in->requires_grad)
        im2col(in->values.data(), d, r0, r, col.data());
      if (kn->requires_grad) {
        // gK += gOut_strip(co, r*wo) * col^T(r*wo, patch)
        detail::gemm(Tr::N, Tr::T, d.co, patch, r * d.wo, gout, d.ho * d.wo,
                     col.data(), r * d.wo, kn->grad.data(), patch, true);
      }
      if (in->requires_grad) {
        // gcol = K^T(patch, co) * gOut_strip(co, r*wo)
        detail::gemm(Tr::T, Tr::N, patch, r * d.wo, d.co, kn->values.data(),
                     patch, gout, d.ho * d.wo, gcol.data(), r * d.wo, false);
        col2im_acc(gcol.data(), d, r0, r, in->grad.data());
      }
    }
    if (bn->requires_grad) {
      detail::ensure_grad(bn.get());
      for (int64_t o = 0; o < d.co; ++o) {
        Real acc = 0;
        const Real* row = self.grad.data() + o * d.ho * d.wo;
        for (int64_t i = 0; i < d.ho * d.wo; ++i) acc += row[i];
        bn->grad[o] += acc;
      }
    }
  });
  return out;
}

namespace {

struct DeconvDims {
  int64_t ci, h, w, co, k, ho, wo;
  int stride, pad;
};

DeconvDims deconv_dims(const Tensor& input, const Tensor& kernel,
                       const Tensor& bias, int stride) {
  check_dim(input.ndim() == 3, "conv_transpose2d: input must be [C,H,W]");
  check_dim(kernel.ndim() == 4 && kernel.dim(2) == kernel.dim(3),
            "conv_transpose2d: kernel must be [C_in,C_out,k,k], got " +
                shape_str(kernel.shape()));
  check_dim(kernel.dim(0) == input.dim(0),
            "conv_transpose2d: kernel expects " +
                std::to_string(kernel.dim(0)) + " input channels, image has " +
                std::to_string(input.dim(0)));
  check_dim(bias.ndim() == 1 && bias.dim(0) == kernel.dim(1),
            "conv_transpose2d: bias must have one entry per output channel");
  check_arg(stride >= 1, "conv_transpose2d: stride must be >= 1");
  DeconvDims d;
  d.ci = input.dim(0);
  d.h = input.dim(1);
  d.w = input.dim(2);
  d.co = kernel.dim(1);
  d.k = kernel.dim(2);
  d.stride = stride;
  check_arg(d.k >= stride && (d.k - stride) % 2 == 0,
            "conv_transpose2d: kernel/stride pair cannot preserve "
            "stride-times-input geometry");
  d.pad = static_cast<int>((d.k - stride) / 2);
  d.ho = int64_t(stride) * d.h;
  d.wo = int64_t(stride) * d.w;
  return d;
}

// gathered[(co*k*k) x (rows*w)]: entry ((o,ky,kx),(yi,xi)) =
// out_grad[o, yi*s+ky-p, xi*s+kx-p], zero out of range.
void gather_out(const Real* src, const DeconvDims& d, int64_t r0, int64_t rows,
                Real* g) {
  const int64_t ncols = rows * d.w;
  for (int64_t o = 0; o < d.co; ++o) {
    for (int64_t ky = 0; ky < d.k; ++ky) {
      for (int64_t kx = 0; kx < d.k; ++kx) {
        Real* dst = g + ((o * d.k + ky) * d.k + kx) * ncols;
        for (int64_t y = 0; y < rows; ++y) {
          const int64_t yo = (r0 + y) * d.stride + ky - d.pad;
          for (int64_t x = 0; x < d.w; ++x) {
            const int64_t xo = x * d.stride + kx - d.pad;
            dst[y * d.w + x] = (yo >= 0 && yo < d.ho && xo >= 0 && xo < d.wo)
                                   ? src[(o * d.ho + yo) * d.wo + xo]
                                   : Real(0);
          }
        }
      }
    }
  }
}

void scatter_out_acc(const Real* m, const DeconvDims& d, int64_t r0,
                     int64_t rows, Real* out) {
  const int64_t ncols = rows * d.w;
  for (int64_t o = 0; o < d.co; ++o) {
    for (int64_t ky = 0; ky < d.k; ++ky) {
      for (int64_t kx = 0; kx < d.k; ++kx) {
        const Real* src = m + ((o * d.k + ky) * d.k + kx) * ncols;
        for (int64_t y = 0; y < rows; ++y) {
          const int64_t yo = (r0 + y) * d.stride + ky - d.pad;
          if (yo < 0 || yo >= d.ho) continue;
          for (int64_t x = 0; x < d.w; ++x) {
            const int64_t xo = x * d.stride + kx - d.pad;
            if (xo < 0 || xo >= d.wo) continue;
            out[(o * d.ho + yo) * d.wo + xo] += src[y * d.w + x];
          }
        }
      }
    }
  }
}

}  // namespace

Tensor conv_transpose2d(const Tensor& input, const Tensor& kernel,
                        const Tensor& bias, int stride) {
  const DeconvDims d = deconv_dims(input, kernel, bias, stride);
  Tensor out = Tensor::raw({d.co, d.ho, d.wo});
  const int64_t patch = d.co * d.k * d.k;
  const int64_t rows = strip_rows(patch, d.w, d.h);  // strips of input rows
  std::vector<Real> m(patch * rows * d.w);
  for (int64_t o = 0; o < d.co; ++o)
    std::fill_n(out.data() + o * d.ho * d.wo, d.ho * d.wo, bias.data()[o]);
  for (int64_t r0 = 0; r0 < d.h; r0 += rows) {
    const int64_t r = std::min(rows, d.h - r0);
    // m(patch, r*w) = K^T(patch, ci) * in_strip(ci, r*w)
    detail::gemm(Tr::T, Tr::N, patch, r * d.w, d.ci, kernel.data(), patch,
                 input.data() + r0 * d.w, d.h * d.w, m.data(), r * d.w, false);
    scatter_out_acc(m.data(), d, r0, r, out.data());
  }
  attach_backprop(out, {input, kernel, bias},
                  [in = input.node(), kn = kernel.node(), bn = bias.node(),
                   d](Node& self) {
    const int64_t patch = d.co * d.k * d.k;
    const int64_t rows = strip_rows(patch, d.w, d.h);
    std::vector<Real> gm(patch * rows * d.w);
    if (in->requires_grad) detail::ensure_grad(in.get());
    if (kn->requires_grad) detail::ensure_grad(kn.get());
    for (int64_t r0 = 0; r0 < d.h; r0 += rows) {
      const int64_t r = std::min(rows, d.h - r0);
      gather_out(self.grad.data(), d, r0, r, gm.data());
      if (in->requires_grad) {
        // gIn_strip(ci, r*w) = K(ci, patch) * gm(patch, r*w)
        detail::gemm(Tr::N, Tr::N, d.ci, r * d.w, patch, kn->values.data(),
                     patch, gm.data(), r * d.w, in->grad.data() + r0 * d.w,
                     d.h * d.w, true);
      }
      if (kn->requires_grad) {
        // gK(ci, patch) += in_strip(ci, r*w) * gm^T(r*w, patch)
        detail::gemm(Tr::N, Tr::T, d.ci, patch, r * d.w,
                     in->values.data() + r0 * d.w, d.h * d.w, gm.data(),
                     r * d.w, kn->grad.data(), patch, true);
      }
    }
    if (bn->requires_grad) {
      detail::ensure_grad(bn.get());
      for (int64_t o = 0; o < d.co; ++o) {
        Real acc = 0;
        const Real* row = self.grad.data() + o * d.ho * d.wo;
        for (int64_t i = 0; i < d.ho * d.wo; ++i) acc += row[i];
        bn->grad[o] += acc;
      }
    }
  });
  return out;
}

Tensor maxpool2d(const Tensor& input, int window) {
  check_dim(input.ndim() == 3, "maxpool2d: input must be [C,H,W]");
  check_arg(window >= 1, "maxpool2d: window must be >= 1");
  const int64_t c = input.dim(0), h = input.dim(1), w = input.dim(2);
  check_dim(h % window == 0 && w % window == 0,
            "maxpool2d: window " + std::to_string(window) +
                " does not tile input " + shape_str(input.shape()));
  const int64_t ho = h / window, wo = w / window;
  Tensor out = Tensor::raw({c, ho, wo});
  auto idx = std::make_shared<std::vector<int64_t>>(c * ho * wo);
  const Real* iv = input.data();
  for (int64_t ch = 0; ch < c; ++ch) {
    for (int64_t y = 0; y < ho; ++y) {
      for (int64_t x = 0; x < wo; ++x) {
        int64_t best = (ch * h + y * window) * w + x * window;
        Real bv = iv[best];
        for (int64_t ky = 0; ky < window; ++ky) {
          for (int64_t kx = 0; kx < window; ++kx) {
            const int64_t p =
                (ch * h + y * window + ky) * w + x * window + kx;
            if (iv[p] > bv) {  // strict: first occurrence wins ties
              bv = iv[p];
              best = p;
            }
          }
        }
        out.data()[(ch * ho + y) * wo + x] = bv;
        (*idx)[(ch * ho + y) * wo + x] = best;
      }
    }
  }
  attach_backprop(out, {input}, [in = input.node(), idx](Node& self) {
    detail::ensure_grad(in.get());
    const int64_t n = static_cast<int64_t>(self.values.size());
    for (int64_t i = 0; i < n; ++i) in->grad[(*idx)[i]] += self.grad[i];
  });
  return out;
}

Tensor global_avg_pool(const Tensor& input) {
  check_dim(input.ndim() == 3, "global_avg_pool: input must be [C,H,W]");
  const int64_t c = input.dim(0), hw = input.dim(1) * input.dim(2);
  Tensor out = Tensor::raw({c});
  for (int64_t ch = 0; ch < c; ++ch) {
    Real acc = 0;
    for (int64_t i = 0; i < hw; ++i) acc += input.data()[ch * hw + i];
    out.data()[ch] = acc / Real(hw);
  }
  attach_backprop(out, {input}, [in = input.node(), c, hw](Node& self) {
    detail::ensure_grad(in.get());
    for (int64_t ch = 0; ch < c; ++ch) {
      const Real g = self.grad[ch] / Real(hw);
      for (int64_t i = 0; i < hw; ++i) in->grad[ch * hw + i] += g;
    }
  });
  return out;
}

namespace {

Tensor linear_impl(const Tensor& input, const Tensor& weight,
                   const Tensor* bias) {
  check_dim(input.ndim() >= 1, "linear: input must have at least one axis");
  check_dim(weight.ndim() == 2, "linear: weight must be [d_out,d_in]");
  const int64_t din = input.dim(input.ndim() - 1);
  check_dim(weight.dim(1) == din,
            "linear: weight expects " + std::to_string(weight.dim(1)) +
                " input features, got " + std::to_string(din));
  const int64_t dout = weight.dim(0);
  if (bias)
    check_dim(bias->ndim() == 1 && bias->dim(0) == dout,
              "linear: bias must be [d_out]");
  const int64_t rows = input.numel() / din;
  Shape os(input.shape());
  os.back() = dout;
  Tensor out = Tensor::raw(std::move(os));
  // out(rows,dout) = X(rows,din) * W^T(din,dout)
  detail::gemm(Tr::N, Tr::T, rows, dout, din, input.data(), din, weight.data(),
               din, out.data(), dout, false);
  if (bias) {
    for (int64_t r = 0; r < rows; ++r)
      for (int64_t j = 0; j < dout; ++j)
        out.data()[r * dout + j] += bias->data()[j];
  }
  std::vector<Tensor> parents = {input, weight};
  if (bias) parents.push_back(*bias);
  auto bnode = bias ? bias->node() : nullptr;
  attach_backprop(out, std::move(parents),
                  [in = input.node(), wn = weight.node(), bnode, rows, din,
                   dout](Node& self) {
    if (in->requires_grad) {
      detail::ensure_grad(in.get());
      // gX += gY(rows,dout) * W(dout,din)
      detail::gemm(Tr::N, Tr::N, rows, din, dout, self.grad.data(), dout,
                   wn->values.data(), din, in->grad.data(), din, true);
    }
    if (wn->requires_grad) {
      detail::ensure_grad(wn.get());
      // gW += gY^T(dout,rows) * X(rows,din)
      detail::gemm(Tr::T, Tr::N, dout, din, rows, self.grad.data(), dout,
                   in->values.data(), din, wn->grad.data(), din, true);
    }
    if (bnode && bnode->requires_grad) {
      detail::ensure_grad(bnode.get());
      for (int64_t r = 0; r < rows; ++r)
        for (int64_t j = 0; j < dout; ++j)
          bnode->grad[j] += self.grad[r * dout + j];
    }
  });
  return out;
}

}  // namespace

Tensor linear(const Tensor& input, const Tensor& weight) {
  return linear_impl(input, weight, nullptr);
}

Tensor linear(const Tensor& input, const Tensor& weight, const Tensor& bias) {
  return linear_impl(input, weight, &bias);
}

}  // namespace octevo
