#include "snm/autodiff.hpp"

#define EIGEN_DONT_PARALLELIZE
#include <Eigen/Core>

#include <cmath>
#include <limits>
#include <memory>

#include "snm/fft.hpp"
#include "snm/kspace.hpp"

namespace snm {

namespace {

template <typename T>
using MatMap = Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
template <typename T>
using ConstMatMap =
    Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

void expect_4d(const Shape& s, const char* what) {
  if (s.size() != 4) throw dimension_error(std::string(what) + ": expected a (N,C,H,W) tensor, got " + shape_str(s));
}

// col (IC*KH*KW, H*W) from one (IC,H,W) sample, zero padded, stride 1.
template <typename T>
void im2col(const T* x, std::int64_t ic, std::int64_t h, std::int64_t w, std::int64_t kh,
            std::int64_t kw, T* col) {
  const std::int64_t ph = kh / 2, pw = kw / 2, hw = h * w;
  std::int64_t row = 0;
  for (std::int64_t c = 0; c < ic; ++c) {
    const T* xc = x + c * hw;
    for (std::int64_t ki = 0; ki < kh; ++ki) {
      for (std::int64_t kj = 0; kj < kw; ++kj, ++row) {
        T* dst = col + row * hw;
        const std::int64_t di = ki - ph, dj = kj - pw;
        for (std::int64_t i = 0; i < h; ++i) {
          const std::int64_t si = i + di;
          if (si < 0 || si >= h) {
            std::fill(dst + i * w, dst + (i + 1) * w, T(0));
            continue;
          }
          const T* src_row = xc + si * w;
          T* dst_row = dst + i * w;
          for (std::int64_t j = 0; j < w; ++j) {
            const std::int64_t sj = j + dj;
            dst_row[j] = (sj >= 0 && sj < w) ? src_row[sj] : T(0);
          }
        }
      }
    }
  }
}

// scatter-add of col layout back onto one (IC,H,W) gradient slice.
template <typename T>
void col2im_add(const T* col, std::int64_t ic, std::int64_t h, std::int64_t w, std::int64_t kh,
                std::int64_t kw, T* gx) {
  const std::int64_t ph = kh / 2, pw = kw / 2, hw = h * w;
  std::int64_t row = 0;
  for (std::int64_t c = 0; c < ic; ++c) {
    T* gc = gx + c * hw;
    for (std::int64_t ki = 0; ki < kh; ++ki) {
      for (std::int64_t kj = 0; kj < kw; ++kj, ++row) {
        const T* src = col + row * hw;
        const std::int64_t di = ki - ph, dj = kj - pw;
        for (std::int64_t i = 0; i < h; ++i) {
          const std::int64_t si = i + di;
          if (si < 0 || si >= h) continue;
          const T* src_row = src + i * w;
          T* g_row = gc + si * w;
          for (std::int64_t j = 0; j < w; ++j) {
            const std::int64_t sj = j + dj;
            if (sj >= 0 && sj < w) g_row[sj] += src_row[j];
          }
        }
      }
    }
  }
}

}  // namespace

template <typename T>
typename Graph<T>::Id Graph<T>::push(Shape shape, std::vector<T> val, bool needs) {
  Node n;
  n.shape = std::move(shape);
  n.val = std::move(val);
  n.needs = needs;
  nodes_.push_back(std::move(n));
  return static_cast<Id>(nodes_.size() - 1);
}

template <typename T>
std::vector<T>& Graph<T>::grad_buf(Id id) {
  Node& n = node(id);
  if (n.grad.empty()) n.grad.assign(n.val.size(), T(0));
  return n.grad;
}

template <typename T>
typename Graph<T>::Id Graph<T>::leaf(const Tensor<T>& value, bool needs_grad) {
  return push(value.dims(), value.vec(), needs_grad);
}

template <typename T>
T Graph<T>::scalar(Id id) const {
  if (node(id).val.size() != 1) throw dimension_error("scalar() on a non-scalar node");
  return node(id).val[0];
}

template <typename T>
const std::vector<T>& Graph<T>::grad(Id id) {
  return grad_buf(id);
}

template <typename T>
void Graph<T>::backward(Id root) {
  if (node(root).val.size() != 1) throw parameter_error("backward root must be scalar");
  for (auto& n : nodes_) std::fill(n.grad.begin(), n.grad.end(), T(0));
  grad_buf(root)[0] = T(1);
  for (Id id = root; id >= 0; --id) {
    Node& n = node(id);
    if (n.back && !n.grad.empty()) n.back(*this);
  }
}

template <typename T>
typename Graph<T>::Id Graph<T>::add(Id a, Id b) {
  if (shape(a) != shape(b)) throw dimension_error("add: shape mismatch");
  const auto& va = val(a);
  const auto& vb = val(b);
  std::vector<T> out(va.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = va[i] + vb[i];
  const bool needs = node(a).needs || node(b).needs;
  Id id = push(shape(a), std::move(out), needs);
  if (needs)
    node(id).back = [id, a, b](Graph& g) {
      const auto& go = g.node(id).grad;
      if (g.node(a).needs) {
        auto& ga = g.grad_buf(a);
        for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i];
      }
      if (g.node(b).needs) {
        auto& gb = g.grad_buf(b);
        for (std::size_t i = 0; i < go.size(); ++i) gb[i] += go[i];
      }
    };
  return id;
}

template <typename T>
typename Graph<T>::Id Graph<T>::sub(Id a, Id b) {
  if (shape(a) != shape(b)) throw dimension_error("sub: shape mismatch");
  const auto& va = val(a);
  const auto& vb = val(b);
  std::vector<T> out(va.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = va[i] - vb[i];
  const bool needs = node(a).needs || node(b).needs;
  Id id = push(shape(a), std::move(out), needs);
  if (needs)
    node(id).back = [id, a, b](Graph& g) {
      const auto& go = g.node(id).grad;
      if (g.node(a).needs) {
        auto& ga = g.grad_buf(a);
        for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i];
      }
      if (g.node(b).needs) {
        auto& gb = g.grad_buf(b);
        for (std::size_t i = 0; i < go.size(); ++i) gb[i] -= go[i];
      }
    };
  return id;
}

template <typename T>
typename Graph<T>::Id Graph<T>::scale(Id a, T factor) {
  const auto& va = val(a);
  std::vector<T> out(va.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = factor * va[i];
  const bool needs = node(a).needs;
  Id id = push(shape(a), std::move(out), needs);
  if (needs)
    node(id).back = [id, a, factor](Graph& g) {
      const auto& go = g.node(id).grad;
      auto& ga = g.grad_buf(a);
      for (std::size_t i = 0; i < go.size(); ++i) ga[i] += factor * go[i];
    };
  return id;
}

template <typename T>
typename Graph<T>::Id Graph<T>::relu(Id x) {
  const auto& vx = val(x);
  std::vector<T> out(vx.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = vx[i] > T(0) ? vx[i] : T(0);
  const bool needs = node(x).needs;
  Id id = push(shape(x), std::move(out), needs);
  if (needs)
    node(id).back = [id, x](Graph& g) {
      const auto& go = g.node(id).grad;
      const auto& vo = g.node(id).val;
      auto& gx = g.grad_buf(x);
      for (std::size_t i = 0; i < go.size(); ++i)
        if (vo[i] > T(0)) gx[i] += go[i];
    };
  return id;
}

template <typename T>
typename Graph<T>::Id Graph<T>::magnitude(Id x) {
  expect_4d(shape(x), "magnitude");
  const Shape& s = shape(x);
  if (s[1] != 2) throw dimension_error("magnitude expects 2 channels (re, im)");
  const std::int64_t n = s[0], hw = s[2] * s[3];
  const auto& vx = val(x);
  std::vector<T> out(static_cast<std::size_t>(n * hw));
  for (std::int64_t i = 0; i < n; ++i) {
    const T* re = vx.data() + i * 2 * hw;
    const T* im = re + hw;
    T* o = out.data() + i * hw;
    for (std::int64_t j = 0; j < hw; ++j) o[j] = std::sqrt(re[j] * re[j] + im[j] * im[j]);
  }
  const bool needs = node(x).needs;
  Id id = push({s[0], 1, s[2], s[3]}, std::move(out), needs);
  if (needs)
    node(id).back = [id, x, n, hw](Graph& g) {
      const auto& go = g.node(id).grad;
      const auto& vo = g.node(id).val;
      const auto& vx2 = g.node(x).val;
      auto& gx = g.grad_buf(x);
      for (std::int64_t i = 0; i < n; ++i) {
        const T* re = vx2.data() + i * 2 * hw;
        const T* im = re + hw;
        T* gre = gx.data() + i * 2 * hw;
        T* gim = gre + hw;
        const T* gv = go.data() + i * hw;
        const T* m = vo.data() + i * hw;
        for (std::int64_t j = 0; j < hw; ++j) {
          if (m[j] > T(0)) {
            gre[j] += gv[j] * re[j] / m[j];
            gim[j] += gv[j] * im[j] / m[j];
          }
        }
      }
    };
  return id;
}

template <typename T>
typename Graph<T>::Id Graph<T>::concat_channels(const std::vector<Id>& parts) {
  if (parts.empty()) throw parameter_error("concat_channels: empty part list");
  const Shape& s0 = shape(parts[0]);
  expect_4d(s0, "concat_channels");
  std::int64_t total_c = 0;
  bool needs = false;
  for (Id p : parts) {
    const Shape& sp = shape(p);
    expect_4d(sp, "concat_channels");
    if (sp[0] != s0[0] || sp[2] != s0[2] || sp[3] != s0[3])
      throw dimension_error("concat_channels: incompatible shapes");
    total_c += sp[1];
    needs = needs || node(p).needs;
  }
  const std::int64_t n = s0[0], hw = s0[2] * s0[3];
  std::vector<T> out(static_cast<std::size_t>(n * total_c * hw));
  for (std::int64_t i = 0; i < n; ++i) {
    std::int64_t coff = 0;
    for (Id p : parts) {
      const std::int64_t pc = shape(p)[1];
      const T* src = val(p).data() + i * pc * hw;
      std::copy(src, src + pc * hw, out.data() + (i * total_c + coff) * hw);
      coff += pc;
    }
  }
  Id id = push({n, total_c, s0[2], s0[3]}, std::move(out), needs);
  if (needs)
    node(id).back = [id, parts, n, total_c, hw](Graph& g) {
      const auto& go = g.node(id).grad;
      for (std::int64_t i = 0; i < n; ++i) {
        std::int64_t coff = 0;
        for (Id p : parts) {
          const std::int64_t pc = g.shape(p)[1];
          if (g.node(p).needs) {
            auto& gp = g.grad_buf(p);
            const T* src = go.data() + (i * total_c + coff) * hw;
            T* dst = gp.data() + i * pc * hw;
            for (std::int64_t k = 0; k < pc * hw; ++k) dst[k] += src[k];
          }
          coff += pc;
        }
      }
    };
  return id;
}

template <typename T>
typename Graph<T>::Id Graph<T>::softmax_channels(Id x) {
  expect_4d(shape(x), "softmax_channels");
  const Shape s = shape(x);
  const std::int64_t n = s[0], c = s[1], hw = s[2] * s[3];
  const auto& vx = val(x);
  std::vector<T> out(vx.size());
  for (std::int64_t i = 0; i < n; ++i) {
    const T* xs = vx.data() + i * c * hw;
    T* os = out.data() + i * c * hw;
    for (std::int64_t j = 0; j < hw; ++j) {
      T mx = xs[j];
      for (std::int64_t k = 1; k < c; ++k) mx = std::max(mx, xs[k * hw + j]);
      T sum = T(0);
      for (std::int64_t k = 0; k < c; ++k) {
        const T e = std::exp(xs[k * hw + j] - mx);
        os[k * hw + j] = e;
        sum += e;
      }
      for (std::int64_t k = 0; k < c; ++k) os[k * hw + j] /= sum;
    }
  }
  const bool needs = node(x).needs;
  Id id = push(s, std::move(out), needs);
  if (needs)
    node(id).back = [id, x, n, c, hw](Graph& g) {
      const auto& go = g.node(id).grad;
      const auto& p = g.node(id).val;
      auto& gx = g.grad_buf(x);
      for (std::int64_t i = 0; i < n; ++i) {
        const T* ps = p.data() + i * c * hw;
        const T* gs = go.data() + i * c * hw;
        T* gxs = gx.data() + i * c * hw;
        for (std::int64_t j = 0; j < hw; ++j) {
          T dot = T(0);
          for (std::int64_t k = 0; k < c; ++k) dot += gs[k * hw + j] * ps[k * hw + j];
          for (std::int64_t k = 0; k < c; ++k)
            gxs[k * hw + j] += ps[k * hw + j] * (gs[k * hw + j] - dot);
        }
      }
    };
  return id;
}

template <typename T>
typename Graph<T>::Id Graph<T>::conv2d(Id x, Id w, Id b) {
  expect_4d(shape(x), "conv2d input");
  expect_4d(shape(w), "conv2d weight");
  const Shape sx = shape(x), sw = shape(w);
  const std::int64_t n = sx[0], ic = sx[1], h = sx[2], ww = sx[3];
  const std::int64_t oc = sw[0], kh = sw[2], kw = sw[3];
  if (sw[1] != ic) throw dimension_error("conv2d: weight in-channels mismatch");
  if (kh % 2 == 0 || kw % 2 == 0) throw dimension_error("conv2d: kernels must be odd");
  if (shape(b) != Shape{oc}) throw dimension_error("conv2d: bias shape mismatch");
  const std::int64_t hw = h * ww, ick = ic * kh * kw;

  std::vector<T> out(static_cast<std::size_t>(n * oc * hw));
  const auto& vx = val(x);
  const auto& vw = val(w);
  const auto& vb = val(b);
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i) {
    std::vector<T> col(static_cast<std::size_t>(ick * hw));
    im2col(vx.data() + i * ic * hw, ic, h, ww, kh, kw, col.data());
    ConstMatMap<T> wm(vw.data(), oc, ick);
    ConstMatMap<T> cm(col.data(), ick, hw);
    MatMap<T> ym(out.data() + i * oc * hw, oc, hw);
    ym.noalias() = wm * cm;
    for (std::int64_t o = 0; o < oc; ++o) ym.row(o).array() += vb[static_cast<std::size_t>(o)];
  }

  const bool needs = node(x).needs || node(w).needs || node(b).needs;
  Id id = push({n, oc, h, ww}, std::move(out), needs);
  if (needs)
    node(id).back = [id, x, w, b, n, ic, oc, h, ww, kh, kw](Graph& g) {
      const std::int64_t hw = h * ww, ick = ic * kh * kw;
      const auto& go = g.node(id).grad;
      const auto& vx2 = g.node(x).val;
      const auto& vw2 = g.node(w).val;
      const bool need_x = g.node(x).needs, need_w = g.node(w).needs, need_b = g.node(b).needs;

      if (need_b) {
        auto& gb = g.grad_buf(b);
        for (std::int64_t i = 0; i < n; ++i)
          for (std::int64_t o = 0; o < oc; ++o) {
            const T* src = go.data() + (i * oc + o) * hw;
            T acc = T(0);
            for (std::int64_t j = 0; j < hw; ++j) acc += src[j];
            gb[static_cast<std::size_t>(o)] += acc;
          }
      }

      std::vector<std::vector<T>> dw_slabs;
      if (need_w) dw_slabs.assign(static_cast<std::size_t>(n), {});
      std::vector<T>* gx = need_x ? &g.grad_buf(x) : nullptr;

#pragma omp parallel for schedule(static)
      for (std::int64_t i = 0; i < n; ++i) {
        ConstMatMap<T> gym(go.data() + i * oc * hw, oc, hw);
        if (need_w) {
          std::vector<T> col(static_cast<std::size_t>(ick * hw));
          im2col(vx2.data() + i * ic * hw, ic, h, ww, kh, kw, col.data());
          ConstMatMap<T> cm(col.data(), ick, hw);
          auto& slab = dw_slabs[static_cast<std::size_t>(i)];
          slab.assign(static_cast<std::size_t>(oc * ick), T(0));
          MatMap<T> dwm(slab.data(), oc, ick);
          dwm.noalias() = gym * cm.transpose();
        }
        if (need_x) {
          std::vector<T> dcol(static_cast<std::size_t>(ick * hw));
          ConstMatMap<T> wm(vw2.data(), oc, ick);
          MatMap<T> dcm(dcol.data(), ick, hw);
          dcm.noalias() = wm.transpose() * gym;
          col2im_add(dcol.data(), ic, h, ww, kh, kw, gx->data() + i * ic * hw);
        }
      }

      if (need_w) {
        auto& gw = g.grad_buf(w);
        for (std::int64_t i = 0; i < n; ++i) {
          const auto& slab = dw_slabs[static_cast<std::size_t>(i)];
          for (std::size_t k = 0; k < slab.size(); ++k) gw[k] += slab[k];
        }
      }
    };
  return id;
}

template <typename T>
typename Graph<T>::Id Graph<T>::conv_transpose2d(Id x, Id w, Id b) {
  expect_4d(shape(x), "conv_transpose2d input");
  expect_4d(shape(w), "conv_transpose2d weight");
  const Shape sx = shape(x), sw = shape(w);
  const std::int64_t n = sx[0], ic = sx[1], h = sx[2], ww = sx[3];
  const std::int64_t oc = sw[1];
  if (sw[0] != ic || sw[2] != 2 || sw[3] != 2)
    throw dimension_error("conv_transpose2d: weight must be (IC,OC,2,2)");
  if (shape(b) != Shape{oc}) throw dimension_error("conv_transpose2d: bias shape mismatch");
  const std::int64_t hw = h * ww, oh = 2 * h, ow = 2 * ww;

  std::vector<T> out(static_cast<std::size_t>(n * oc * oh * ow));
  const auto& vx = val(x);
  const auto& vw = val(w);
  const auto& vb = val(b);
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i) {
    std::vector<T> cols(static_cast<std::size_t>(oc * 4 * hw));
    ConstMatMap<T> wm(vw.data(), ic, oc * 4);
    ConstMatMap<T> xm(vx.data() + i * ic * hw, ic, hw);
    MatMap<T> cm(cols.data(), oc * 4, hw);
    cm.noalias() = wm.transpose() * xm;
    T* os = out.data() + i * oc * oh * ow;
    for (std::int64_t o = 0; o < oc; ++o) {
      for (std::int64_t di = 0; di < 2; ++di)
        for (std::int64_t dj = 0; dj < 2; ++dj) {
          const T* src = cols.data() + ((o * 2 + di) * 2 + dj) * hw;
          for (std::int64_t r = 0; r < h; ++r) {
            T* dst = os + o * oh * ow + (2 * r + di) * ow + dj;
            const T* sr = src + r * ww;
            for (std::int64_t cix = 0; cix < ww; ++cix) dst[2 * cix] = sr[cix] + vb[static_cast<std::size_t>(o)];
          }
        }
    }
  }

  const bool needs = node(x).needs || node(w).needs || node(b).needs;
  Id id = push({n, oc, oh, ow}, std::move(out), needs);
  if (needs)
    node(id).back = [id, x, w, b, n, ic, oc, h, ww](Graph& g) {
      const std::int64_t hw = h * ww, oh = 2 * h, ow = 2 * ww;
      const auto& go = g.node(id).grad;
      const auto& vx2 = g.node(x).val;
      const auto& vw2 = g.node(w).val;
      const bool need_x = g.node(x).needs, need_w = g.node(w).needs, need_b = g.node(b).needs;

      if (need_b) {
        auto& gb = g.grad_buf(b);
        for (std::int64_t i = 0; i < n; ++i)
          for (std::int64_t o = 0; o < oc; ++o) {
            const T* src = go.data() + (i * oc + o) * oh * ow;
            T acc = T(0);
            for (std::int64_t j = 0; j < oh * ow; ++j) acc += src[j];
            gb[static_cast<std::size_t>(o)] += acc;
          }
      }

      std::vector<std::vector<T>> dw_slabs;
      if (need_w) dw_slabs.assign(static_cast<std::size_t>(n), {});
      std::vector<T>* gx = need_x ? &g.grad_buf(x) : nullptr;

#pragma omp parallel for schedule(static)
      for (std::int64_t i = 0; i < n; ++i) {
        // gather dcols from the strided output gradient
        std::vector<T> dcols(static_cast<std::size_t>(oc * 4 * hw));
        const T* gos = go.data() + i * oc * oh * ow;
        for (std::int64_t o = 0; o < oc; ++o)
          for (std::int64_t di = 0; di < 2; ++di)
            for (std::int64_t dj = 0; dj < 2; ++dj) {
              T* dst = dcols.data() + ((o * 2 + di) * 2 + dj) * hw;
              for (std::int64_t r = 0; r < h; ++r) {
                const T* src = gos + o * oh * ow + (2 * r + di) * ow + dj;
                T* dr = dst + r * ww;
                for (std::int64_t cix = 0; cix < ww; ++cix) dr[cix] = src[2 * cix];
              }
            }
        ConstMatMap<T> dcm(dcols.data(), oc * 4, hw);
        if (need_x) {
          ConstMatMap<T> wm(vw2.data(), ic, oc * 4);
          MatMap<T> gxm(gx->data() + i * ic * hw, ic, hw);
          gxm.noalias() += wm * dcm;
        }
        if (need_w) {
          ConstMatMap<T> xm(vx2.data() + i * ic * hw, ic, hw);
          auto& slab = dw_slabs[static_cast<std::size_t>(i)];
          slab.assign(static_cast<std::size_t>(ic * oc * 4), T(0));
          MatMap<T> dwm(slab.data(), ic, oc * 4);
          dwm.noalias() = xm * dcm.transpose();
        }
      }

      if (need_w) {
        auto& gw = g.grad_buf(w);
        for (std::int64_t i = 0; i < n; ++i) {
          const auto& slab = dw_slabs[static_cast<std::size_t>(i)];
          for (std::size_t k = 0; k < slab.size(); ++k) gw[k] += slab[k];
        }
      }
    };
  return id;
}

template <typename T>
typename Graph<T>::Id Graph<T>::maxpool2x2(Id x) {
  expect_4d(shape(x), "maxpool2x2");
  const Shape s = shape(x);
  const std::int64_t n = s[0], c = s[1], h = s[2], w = s[3];
  if (h % 2 != 0 || w % 2 != 0) throw dimension_error("maxpool2x2: spatial dims must be even");
  const std::int64_t oh = h / 2, ow = w / 2;
  const auto& vx = val(x);
  std::vector<T> out(static_cast<std::size_t>(n * c * oh * ow));
  auto arg = std::make_shared<std::vector<std::uint8_t>>(out.size());
  for (std::int64_t i = 0; i < n * c; ++i) {
    const T* xs = vx.data() + i * h * w;
    T* os = out.data() + i * oh * ow;
    std::uint8_t* as = arg->data() + i * oh * ow;
    for (std::int64_t r = 0; r < oh; ++r)
      for (std::int64_t cc = 0; cc < ow; ++cc) {
        const T v00 = xs[(2 * r) * w + 2 * cc], v01 = xs[(2 * r) * w + 2 * cc + 1];
        const T v10 = xs[(2 * r + 1) * w + 2 * cc], v11 = xs[(2 * r + 1) * w + 2 * cc + 1];
        T best = v00;
        std::uint8_t bi = 0;
        if (v01 > best) { best = v01; bi = 1; }
        if (v10 > best) { best = v10; bi = 2; }
        if (v11 > best) { best = v11; bi = 3; }
        os[r * ow + cc] = best;
        as[r * ow + cc] = bi;
      }
  }
  const bool needs = node(x).needs;
  Id id = push({n, c, oh, ow}, std::move(out), needs);
  if (needs)
    node(id).back = [id, x, n, c, h, w, arg](Graph& g) {
      const std::int64_t oh = h / 2, ow = w / 2;
      const auto& go = g.node(id).grad;
      auto& gx = g.grad_buf(x);
      for (std::int64_t i = 0; i < n * c; ++i) {
        const T* gs = go.data() + i * oh * ow;
        const std::uint8_t* as = arg->data() + i * oh * ow;
        T* gxs = gx.data() + i * h * w;
        for (std::int64_t r = 0; r < oh; ++r)
          for (std::int64_t cc = 0; cc < ow; ++cc) {
            const std::uint8_t bi = as[r * ow + cc];
            const std::int64_t rr = 2 * r + (bi >> 1), jc = 2 * cc + (bi & 1);
            gxs[rr * w + jc] += gs[r * ow + cc];
          }
      }
    };
  return id;
}

template <typename T>
typename Graph<T>::Id Graph<T>::batchnorm(Id x, Id gamma, Id beta, T* running_mean, T* running_var,
                                          bool training, T momentum, T eps) {
  expect_4d(shape(x), "batchnorm");
  const Shape s = shape(x);
  const std::int64_t n = s[0], c = s[1], hw = s[2] * s[3];
  if (shape(gamma) != Shape{c} || shape(beta) != Shape{c})
    throw dimension_error("batchnorm: gamma/beta shape mismatch");
  const auto& vx = val(x);
  const auto& vg = val(gamma);
  const auto& vbt = val(beta);

  auto mu = std::make_shared<std::vector<T>>(static_cast<std::size_t>(c), T(0));
  auto invstd = std::make_shared<std::vector<T>>(static_cast<std::size_t>(c), T(0));
  const std::int64_t m = n * hw;

  if (training) {
    for (std::int64_t k = 0; k < c; ++k) {
      T acc = T(0);
      for (std::int64_t i = 0; i < n; ++i) {
        const T* xs = vx.data() + (i * c + k) * hw;
        for (std::int64_t j = 0; j < hw; ++j) acc += xs[j];
      }
      const T mean = acc / static_cast<T>(m);
      T vacc = T(0);
      for (std::int64_t i = 0; i < n; ++i) {
        const T* xs = vx.data() + (i * c + k) * hw;
        for (std::int64_t j = 0; j < hw; ++j) {
          const T d = xs[j] - mean;
          vacc += d * d;
        }
      }
      const T var = vacc / static_cast<T>(m);
      (*mu)[static_cast<std::size_t>(k)] = mean;
      (*invstd)[static_cast<std::size_t>(k)] = T(1) / std::sqrt(var + eps);
      running_mean[k] = momentum * running_mean[k] + (T(1) - momentum) * mean;
      running_var[k] = momentum * running_var[k] + (T(1) - momentum) * var;
    }
  } else {
    for (std::int64_t k = 0; k < c; ++k) {
      (*mu)[static_cast<std::size_t>(k)] = running_mean[k];
      (*invstd)[static_cast<std::size_t>(k)] = T(1) / std::sqrt(running_var[k] + eps);
    }
  }

  std::vector<T> out(vx.size());
  for (std::int64_t i = 0; i < n; ++i)
    for (std::int64_t k = 0; k < c; ++k) {
      const T* xs = vx.data() + (i * c + k) * hw;
      T* os = out.data() + (i * c + k) * hw;
      const T mk = (*mu)[static_cast<std::size_t>(k)], ik = (*invstd)[static_cast<std::size_t>(k)];
      const T gk = vg[static_cast<std::size_t>(k)], bk = vbt[static_cast<std::size_t>(k)];
      for (std::int64_t j = 0; j < hw; ++j) os[j] = gk * (xs[j] - mk) * ik + bk;
    }

  const bool needs = node(x).needs || node(gamma).needs || node(beta).needs;
  Id id = push(s, std::move(out), needs);
  if (needs)
    node(id).back = [id, x, gamma, beta, n, c, hw, mu, invstd, training](Graph& g) {
      const std::int64_t m = n * hw;
      const auto& go = g.node(id).grad;
      const auto& vx2 = g.node(x).val;
      const auto& vg2 = g.node(gamma).val;
      const bool need_x = g.node(x).needs;
      const bool need_g = g.node(gamma).needs, need_b = g.node(beta).needs;

      for (std::int64_t k = 0; k < c; ++k) {
        const T mk = (*mu)[static_cast<std::size_t>(k)], ik = (*invstd)[static_cast<std::size_t>(k)];
        // per-channel reductions
        T sum_g = T(0), sum_gx = T(0);
        for (std::int64_t i = 0; i < n; ++i) {
          const T* gs = go.data() + (i * c + k) * hw;
          const T* xs = vx2.data() + (i * c + k) * hw;
          for (std::int64_t j = 0; j < hw; ++j) {
            sum_g += gs[j];
            sum_gx += gs[j] * (xs[j] - mk) * ik;
          }
        }
        if (need_b) g.grad_buf(beta)[static_cast<std::size_t>(k)] += sum_g;
        if (need_g) g.grad_buf(gamma)[static_cast<std::size_t>(k)] += sum_gx;
        if (need_x) {
          auto& gx = g.grad_buf(x);
          const T gk = vg2[static_cast<std::size_t>(k)];
          if (training) {
            const T inv_m = T(1) / static_cast<T>(m);
            for (std::int64_t i = 0; i < n; ++i) {
              const T* gs = go.data() + (i * c + k) * hw;
              const T* xs = vx2.data() + (i * c + k) * hw;
              T* gxs = gx.data() + (i * c + k) * hw;
              for (std::int64_t j = 0; j < hw; ++j) {
                const T xhat = (xs[j] - mk) * ik;
                gxs[j] += gk * ik * (gs[j] - inv_m * sum_g - xhat * inv_m * sum_gx);
              }
            }
          } else {
            for (std::int64_t i = 0; i < n; ++i) {
              const T* gs = go.data() + (i * c + k) * hw;
              T* gxs = gx.data() + (i * c + k) * hw;
              for (std::int64_t j = 0; j < hw; ++j) gxs[j] += gk * ik * gs[j];
            }
          }
        }
      }
    };
  return id;
}

template <typename T>
typename Graph<T>::Id Graph<T>::data_fidelity(Id x, const std::vector<Tensor<std::complex<T>>>& ys,
                                              const Tensor<std::uint8_t>& mask,
                                              double noise_weight) {
  expect_4d(shape(x), "data_fidelity");
  if (noise_weight < 0.0) throw parameter_error("noise_weight must be nonnegative");
  const Shape s = shape(x);
  if (s[1] != 2) throw dimension_error("data_fidelity expects 2 channels (re, im)");
  const std::int64_t n = s[0], h = s[2], w = s[3], hw = h * w;
  if (static_cast<std::int64_t>(ys.size()) != n)
    throw dimension_error("data_fidelity: one measurement per batch sample required");
  if (mask.dims() != Shape{h, w}) throw dimension_error("data_fidelity: mask shape mismatch");
  for (const auto& y : ys)
    if (y.dims() != Shape{h, w}) throw dimension_error("data_fidelity: measurement shape mismatch");

  auto ys_ref = std::make_shared<std::vector<Tensor<std::complex<T>>>>(ys);
  auto mask_ref = std::make_shared<Tensor<std::uint8_t>>(mask);

  const auto& vx = val(x);
  std::vector<T> out(vx.size());
  std::vector<std::complex<T>> grid(static_cast<std::size_t>(hw));
  for (std::int64_t i = 0; i < n; ++i) {
    const T* re = vx.data() + i * 2 * hw;
    const T* im = re + hw;
    for (std::int64_t j = 0; j < hw; ++j) grid[static_cast<std::size_t>(j)] = {re[j], im[j]};
    fft2_centered(grid.data(), grid.data(), h, w, false);
    correct_kspace(grid.data(), (*ys_ref)[static_cast<std::size_t>(i)].data(), mask_ref->data(), hw,
                   noise_weight);
    fft2_centered(grid.data(), grid.data(), h, w, true);
    T* ore = out.data() + i * 2 * hw;
    T* oim = ore + hw;
    for (std::int64_t j = 0; j < hw; ++j) {
      ore[j] = grid[static_cast<std::size_t>(j)].real();
      oim[j] = grid[static_cast<std::size_t>(j)].imag();
    }
  }

  const bool needs = node(x).needs;
  Id id = push(s, std::move(out), needs);
  if (needs)
    node(id).back = [id, x, n, h, w, mask_ref, noise_weight](Graph& g) {
      const std::int64_t hw = h * w;
      const auto& go = g.node(id).grad;
      auto& gx = g.grad_buf(x);
      std::vector<std::complex<T>> grid(static_cast<std::size_t>(hw));
      const std::vector<std::complex<T>> zero_y(static_cast<std::size_t>(hw), std::complex<T>(0));
      for (std::int64_t i = 0; i < n; ++i) {
        const T* re = go.data() + i * 2 * hw;
        const T* im = re + hw;
        for (std::int64_t j = 0; j < hw; ++j) grid[static_cast<std::size_t>(j)] = {re[j], im[j]};
        fft2_centered(grid.data(), grid.data(), h, w, false);
        correct_kspace(grid.data(), zero_y.data(), mask_ref->data(), hw, noise_weight);
        fft2_centered(grid.data(), grid.data(), h, w, true);
        T* gre = gx.data() + i * 2 * hw;
        T* gim = gre + hw;
        for (std::int64_t j = 0; j < hw; ++j) {
          gre[j] += grid[static_cast<std::size_t>(j)].real();
          gim[j] += grid[static_cast<std::size_t>(j)].imag();
        }
      }
    };
  return id;
}

template <typename T>
typename Graph<T>::Id Graph<T>::sum_sq(Id x) {
  const auto& vx = val(x);
  T acc = T(0);
  for (std::size_t i = 0; i < vx.size(); ++i) acc += vx[i] * vx[i];
  const bool needs = node(x).needs;
  Id id = push({}, {acc}, needs);
  if (needs)
    node(id).back = [id, x](Graph& g) {
      const T g0 = g.node(id).grad[0];
      const auto& vx2 = g.node(x).val;
      auto& gx = g.grad_buf(x);
      for (std::size_t i = 0; i < vx2.size(); ++i) gx[i] += T(2) * vx2[i] * g0;
    };
  return id;
}

template <typename T>
typename Graph<T>::Id Graph<T>::cross_entropy_sum(Id probs, const Tensor<std::uint8_t>& labels,
                                                  T eps) {
  expect_4d(shape(probs), "cross_entropy_sum");
  const Shape s = shape(probs);
  const std::int64_t n = s[0], c = s[1], hw = s[2] * s[3];
  if (labels.dims() != Shape{n, s[2], s[3]})
    throw dimension_error("cross_entropy_sum: label shape mismatch");
  for (std::int64_t i = 0; i < labels.numel(); ++i)
    if (labels[i] >= c) throw label_error("cross_entropy_sum: class id out of range");

  auto lab = std::make_shared<Tensor<std::uint8_t>>(labels);
  const auto& vp = val(probs);
  T acc = T(0);
  for (std::int64_t i = 0; i < n; ++i) {
    const T* ps = vp.data() + i * c * hw;
    const std::uint8_t* ls = lab->data() + i * hw;
    for (std::int64_t j = 0; j < hw; ++j)
      acc -= std::log(std::max(ps[static_cast<std::int64_t>(ls[j]) * hw + j], eps));
  }
  const bool needs = node(probs).needs;
  Id id = push({}, {acc}, needs);
  if (needs)
    node(id).back = [id, probs, lab, n, c, hw, eps](Graph& g) {
      const T g0 = g.node(id).grad[0];
      const auto& vp2 = g.node(probs).val;
      auto& gp = g.grad_buf(probs);
      for (std::int64_t i = 0; i < n; ++i) {
        const T* ps = vp2.data() + i * c * hw;
        T* gs = gp.data() + i * c * hw;
        const std::uint8_t* ls = lab->data() + i * hw;
        for (std::int64_t j = 0; j < hw; ++j) {
          const std::int64_t k = static_cast<std::int64_t>(ls[j]) * hw + j;
          if (ps[k] > eps) gs[k] -= g0 / ps[k];
        }
      }
    };
  return id;
}

template <typename T>
typename Graph<T>::Id Graph<T>::lincomb(const std::vector<Id>& scalars,
                                        const std::vector<T>& weights) {
  if (scalars.empty() || scalars.size() != weights.size())
    throw parameter_error("lincomb: empty or mismatched term list");
  T acc = T(0);
  bool needs = false;
  for (std::size_t i = 0; i < scalars.size(); ++i) {
    if (node(scalars[i]).val.size() != 1) throw dimension_error("lincomb: non-scalar term");
    acc += weights[i] * node(scalars[i]).val[0];
    needs = needs || node(scalars[i]).needs;
  }
  Id id = push({}, {acc}, needs);
  if (needs)
    node(id).back = [id, scalars, weights](Graph& g) {
      const T g0 = g.node(id).grad[0];
      for (std::size_t i = 0; i < scalars.size(); ++i)
        if (g.node(scalars[i]).needs) g.grad_buf(scalars[i])[0] += weights[i] * g0;
    };
  return id;
}

template class Graph<float>;
template class Graph<double>;

}  // namespace snm
