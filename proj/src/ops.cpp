#include "tsrcan/ops.hpp"

#include <Eigen/Core>
#include <cmath>
#include <limits>

namespace tsr {
namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMapMat = Eigen::Map<const RowMat<T>>;

void require(bool ok, const std::string& msg) {
  if (!ok) throw DimensionError(msg);
}

void require_rank(const Shape& s, std::size_t rank, const char* op) {
  require(s.size() == rank, std::string(op) + ": expected rank " + std::to_string(rank) +
                                " tensor, got " + shape_str(s));
}

struct Geometry {
  std::size_t channels, height, width;  // source plane
  std::size_t kh, kw;
  std::size_t stride, pad;
  std::size_t out_h, out_w;  // sliding-window grid
};

// cols[(c*kh + i)*kw + j][oy*out_w + ox] = src[c][oy*stride - pad + i][ox*stride - pad + j]
template <typename T>
void im2col(const T* src, const Geometry& g, T* cols) {
  const std::size_t plane = g.out_h * g.out_w;
  const auto h = static_cast<std::ptrdiff_t>(g.height);
  const auto w = static_cast<std::ptrdiff_t>(g.width);
  for (std::size_t c = 0; c < g.channels; ++c) {
    const T* sc = src + c * g.height * g.width;
    for (std::size_t i = 0; i < g.kh; ++i) {
      for (std::size_t j = 0; j < g.kw; ++j) {
        T* row = cols + ((c * g.kh + i) * g.kw + j) * plane;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const auto y = static_cast<std::ptrdiff_t>(oy * g.stride + i) -
                         static_cast<std::ptrdiff_t>(g.pad);
          T* r = row + oy * g.out_w;
          if (y < 0 || y >= h) {
            std::fill(r, r + g.out_w, T(0));
            continue;
          }
          const T* sr = sc + y * w;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const auto x = static_cast<std::ptrdiff_t>(ox * g.stride + j) -
                           static_cast<std::ptrdiff_t>(g.pad);
            r[ox] = (x >= 0 && x < w) ? sr[x] : T(0);
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatter-add columns back onto the source plane.
template <typename T>
void col2im(const T* cols, const Geometry& g, T* dst) {
  const std::size_t plane = g.out_h * g.out_w;
  const auto h = static_cast<std::ptrdiff_t>(g.height);
  const auto w = static_cast<std::ptrdiff_t>(g.width);
  for (std::size_t c = 0; c < g.channels; ++c) {
    T* dc = dst + c * g.height * g.width;
    for (std::size_t i = 0; i < g.kh; ++i) {
      for (std::size_t j = 0; j < g.kw; ++j) {
        const T* row = cols + ((c * g.kh + i) * g.kw + j) * plane;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const auto y = static_cast<std::ptrdiff_t>(oy * g.stride + i) -
                         static_cast<std::ptrdiff_t>(g.pad);
          if (y < 0 || y >= h) continue;
          const T* r = row + oy * g.out_w;
          T* dr = dc + y * w;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const auto x = static_cast<std::ptrdiff_t>(ox * g.stride + j) -
                           static_cast<std::ptrdiff_t>(g.pad);
            if (x >= 0 && x < w) dr[x] += r[ox];
          }
        }
      }
    }
  }
}

template <typename T>
void check_bias(const BasicTensor<T>& b, std::size_t cout, const char* op) {
  require(b.ndim() == 1 && b.dim(0) == cout,
          std::string(op) + ": bias must be [" + std::to_string(cout) + "], got " +
              shape_str(b.shape()));
}

}  // namespace

template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& x, const BasicTensor<T>& w, const BasicTensor<T>& b,
                      int stride, int pad) {
  require_rank(x.shape(), 4, "conv2d");
  require_rank(w.shape(), 4, "conv2d weight");
  require(stride >= 1 && pad >= 0, "conv2d: stride must be >= 1 and pad >= 0");
  const std::size_t n = x.dim(0), cin = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const std::size_t cout = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  require(w.dim(1) == cin, "conv2d: input has " + std::to_string(cin) +
                               " channels but weight expects " + std::to_string(w.dim(1)));
  check_bias(b, cout, "conv2d");
  const std::size_t ph = h + 2 * static_cast<std::size_t>(pad);
  const std::size_t pw = wd + 2 * static_cast<std::size_t>(pad);
  require(kh >= 1 && kw >= 1 && kh <= ph && kw <= pw,
          "conv2d: kernel " + shape_str(w.shape()) + " larger than padded input " +
              shape_str(x.shape()));

  Geometry g{cin, h, wd, kh, kw, static_cast<std::size_t>(stride), static_cast<std::size_t>(pad),
             (ph - kh) / stride + 1, (pw - kw) / stride + 1};
  const std::size_t k = cin * kh * kw;
  const std::size_t plane = g.out_h * g.out_w;

  std::vector<T> out(n * cout * plane);
  std::vector<T> cols(k * plane);
  ConstMapMat<T> wm(w.data().data(), cout, k);
  for (std::size_t i = 0; i < n; ++i) {
    im2col(x.data().data() + i * cin * h * wd, g, cols.data());
    MapMat<T> om(out.data() + i * cout * plane, cout, plane);
    om.noalias() = wm * ConstMapMat<T>(cols.data(), k, plane);
    for (std::size_t c = 0; c < cout; ++c) om.row(c).array() += b[c];
  }

  return BasicTensor<T>::make_result(
      {n, cout, g.out_h, g.out_w}, std::move(out), "conv2d", {x, w, b},
      [x, w, g, n, cout, k, plane](const std::vector<T>&, std::span<const T> gout,
                                   std::vector<std::vector<T>*>& gin) {
        const std::size_t in_plane = g.channels * g.height * g.width;
        ConstMapMat<T> wm(w.data().data(), cout, k);
        std::vector<T> cols(k * plane);
        for (std::size_t i = 0; i < n; ++i) {
          ConstMapMat<T> go(gout.data() + i * cout * plane, cout, plane);
          if (gin[1]) {
            im2col(x.data().data() + i * in_plane, g, cols.data());
            MapMat<T>(gin[1]->data(), cout, k).noalias() +=
                go * ConstMapMat<T>(cols.data(), k, plane).transpose();
          }
          if (gin[0]) {
            MapMat<T>(cols.data(), k, plane).noalias() = wm.transpose() * go;
            col2im(cols.data(), g, gin[0]->data() + i * in_plane);
          }
          if (gin[2]) {
            for (std::size_t c = 0; c < cout; ++c) (*gin[2])[c] += go.row(c).sum();
          }
        }
      });
}

template <typename T>
BasicTensor<T> conv_transpose2d(const BasicTensor<T>& x, const BasicTensor<T>& w,
                                const BasicTensor<T>& b, int stride, int pad) {
  require_rank(x.shape(), 4, "conv_transpose2d");
  require_rank(w.shape(), 4, "conv_transpose2d weight");
  require(stride >= 1 && pad >= 0, "conv_transpose2d: stride must be >= 1 and pad >= 0");
  const std::size_t n = x.dim(0), cin = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const std::size_t cout = w.dim(1), kh = w.dim(2), kw = w.dim(3);
  require(w.dim(0) == cin, "conv_transpose2d: input has " + std::to_string(cin) +
                               " channels but weight expects " + std::to_string(w.dim(0)));
  check_bias(b, cout, "conv_transpose2d");
  const auto out_h = (static_cast<std::ptrdiff_t>(h) - 1) * stride - 2 * pad +
                     static_cast<std::ptrdiff_t>(kh);
  const auto out_w = (static_cast<std::ptrdiff_t>(wd) - 1) * stride - 2 * pad +
                     static_cast<std::ptrdiff_t>(kw);
  require(h >= 1 && wd >= 1 && out_h > 0 && out_w > 0,
          "conv_transpose2d: computed output size is not positive");

  // The output plane plays the role of a conv2d input whose sliding grid is x's plane.
  Geometry g{cout, static_cast<std::size_t>(out_h), static_cast<std::size_t>(out_w), kh, kw,
             static_cast<std::size_t>(stride), static_cast<std::size_t>(pad), h, wd};
  const std::size_t k = cout * kh * kw;
  const std::size_t plane = h * wd;
  const std::size_t out_plane = g.height * g.width;

  std::vector<T> out(n * cout * out_plane, T(0));
  std::vector<T> cols(k * plane);
  ConstMapMat<T> wm(w.data().data(), cin, k);
  for (std::size_t i = 0; i < n; ++i) {
    MapMat<T>(cols.data(), k, plane).noalias() =
        wm.transpose() * ConstMapMat<T>(x.data().data() + i * cin * plane, cin, plane);
    T* o = out.data() + i * cout * out_plane;
    col2im(cols.data(), g, o);
    for (std::size_t c = 0; c < cout; ++c) {
      for (std::size_t p = 0; p < out_plane; ++p) o[c * out_plane + p] += b[c];
    }
  }

  return BasicTensor<T>::make_result(
      {n, cout, g.height, g.width}, std::move(out), "conv_transpose2d", {x, w, b},
      [x, w, g, n, cin, cout, k, plane, out_plane](const std::vector<T>&, std::span<const T> gout,
                                                   std::vector<std::vector<T>*>& gin) {
        ConstMapMat<T> wm(w.data().data(), cin, k);
        std::vector<T> cols(k * plane);
        for (std::size_t i = 0; i < n; ++i) {
          const T* go = gout.data() + i * cout * out_plane;
          if (gin[0] || gin[1]) im2col(go, g, cols.data());
          ConstMapMat<T> cm(cols.data(), k, plane);
          if (gin[0]) {
            MapMat<T>(gin[0]->data() + i * cin * plane, cin, plane).noalias() += wm * cm;
          }
          if (gin[1]) {
            MapMat<T>(gin[1]->data(), cin, k).noalias() +=
                ConstMapMat<T>(x.data().data() + i * cin * plane, cin, plane) * cm.transpose();
          }
          if (gin[2]) {
            for (std::size_t c = 0; c < cout; ++c) {
              T s = 0;
              for (std::size_t p = 0; p < out_plane; ++p) s += go[c * out_plane + p];
              (*gin[2])[c] += s;
            }
          }
        }
      });
}

template <typename T>
BasicTensor<T> maxpool2d(const BasicTensor<T>& x, int size, int stride, int pad) {
  require_rank(x.shape(), 4, "maxpool2d");
  require(size >= 1 && stride >= 1 && pad >= 0 && pad < size,
          "maxpool2d: need size >= 1, stride >= 1, 0 <= pad < size");
  const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const auto sz = static_cast<std::size_t>(size);
  require(sz <= h + 2 * pad && sz <= w + 2 * pad, "maxpool2d: window larger than input");
  const std::size_t oh = (h + 2 * pad - sz) / stride + 1;
  const std::size_t ow = (w + 2 * pad - sz) / stride + 1;

  std::vector<T> out(n * c * oh * ow);
  std::vector<std::size_t> argmax(out.size());
  const T* src = x.data().data();
  for (std::size_t p = 0; p < n * c; ++p) {
    const T* plane = src + p * h * w;
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        T best = -std::numeric_limits<T>::infinity();
        std::size_t best_idx = 0;
        bool found = false;
        for (std::size_t i = 0; i < sz; ++i) {
          const auto y = static_cast<std::ptrdiff_t>(oy * stride + i) - pad;
          if (y < 0 || y >= static_cast<std::ptrdiff_t>(h)) continue;
          for (std::size_t j = 0; j < sz; ++j) {
            const auto xx = static_cast<std::ptrdiff_t>(ox * stride + j) - pad;
            if (xx < 0 || xx >= static_cast<std::ptrdiff_t>(w)) continue;
            const std::size_t idx = static_cast<std::size_t>(y) * w + static_cast<std::size_t>(xx);
            if (!found || plane[idx] > best) {
              best = plane[idx];
              best_idx = idx;
              found = true;
            }
          }
        }
        const std::size_t o = (p * oh + oy) * ow + ox;
        out[o] = best;
        argmax[o] = p * h * w + best_idx;
      }
    }
  }
  return BasicTensor<T>::make_result(
      {n, c, oh, ow}, std::move(out), "maxpool2d", {x},
      [argmax = std::move(argmax)](const std::vector<T>&, std::span<const T> gout,
                                   std::vector<std::vector<T>*>& gin) {
        if (!gin[0]) return;
        for (std::size_t o = 0; o < gout.size(); ++o) (*gin[0])[argmax[o]] += gout[o];
      });
}

template <typename T>
BasicTensor<T> batchnorm2d(const BasicTensor<T>& x, const BasicTensor<T>& gamma,
                           const BasicTensor<T>& beta, BasicTensor<T>& running_mean,
                           BasicTensor<T>& running_var, NormMode mode) {
  require_rank(x.shape(), 4, "batchnorm2d");
  const std::size_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  const std::size_t m = n * hw;
  require(m >= 1, "batchnorm2d: empty batch");
  for (const BasicTensor<T>* t : std::initializer_list<const BasicTensor<T>*>{&gamma, &beta, &running_mean, &running_var}) {
    require(t->ndim() == 1 && t->dim(0) == c,
            "batchnorm2d: per-channel tensors must be [" + std::to_string(c) + "]");
  }

  std::vector<T> mean(c), invstd(c);
  const T* src = x.data().data();
  if (mode == NormMode::Train) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      double s = 0, s2 = 0;
      for (std::size_t i = 0; i < n; ++i) {
        const T* p = src + (i * c + ch) * hw;
        for (std::size_t q = 0; q < hw; ++q) s += p[q];
      }
      const double mu = s / static_cast<double>(m);
      for (std::size_t i = 0; i < n; ++i) {
        const T* p = src + (i * c + ch) * hw;
        for (std::size_t q = 0; q < hw; ++q) s2 += (p[q] - mu) * (p[q] - mu);
      }
      const double var = s2 / static_cast<double>(m);
      mean[ch] = static_cast<T>(mu);
      invstd[ch] = static_cast<T>(1.0 / std::sqrt(var + kBatchNormEps));
      const double unbiased = m > 1 ? var * static_cast<double>(m) / static_cast<double>(m - 1) : var;
      running_mean[ch] = static_cast<T>((1 - kBatchNormMomentum) * running_mean[ch] +
                                        kBatchNormMomentum * mu);
      running_var[ch] = static_cast<T>((1 - kBatchNormMomentum) * running_var[ch] +
                                       kBatchNormMomentum * unbiased);
    }
  } else {
    for (std::size_t ch = 0; ch < c; ++ch) {
      mean[ch] = running_mean[ch];
      invstd[ch] = static_cast<T>(1.0 / std::sqrt(static_cast<double>(running_var[ch]) + kBatchNormEps));
    }
  }

  std::vector<T> out(x.numel());
  std::vector<T> xhat(x.numel());
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      const std::size_t base = (i * c + ch) * hw;
      for (std::size_t q = 0; q < hw; ++q) {
        xhat[base + q] = (src[base + q] - mean[ch]) * invstd[ch];
        out[base + q] = gamma[ch] * xhat[base + q] + beta[ch];
      }
    }
  }

  const bool train = mode == NormMode::Train;
  return BasicTensor<T>::make_result(
      x.shape(), std::move(out), "batchnorm2d", {x, gamma, beta},
      [gamma, xhat = std::move(xhat), invstd, n, c, hw, m, train](
          const std::vector<T>&, std::span<const T> gout, std::vector<std::vector<T>*>& gin) {
        for (std::size_t ch = 0; ch < c; ++ch) {
          double sum_dy = 0, sum_dy_xhat = 0;
          for (std::size_t i = 0; i < n; ++i) {
            const std::size_t base = (i * c + ch) * hw;
            for (std::size_t q = 0; q < hw; ++q) {
              sum_dy += gout[base + q];
              sum_dy_xhat += gout[base + q] * xhat[base + q];
            }
          }
          if (gin[1]) (*gin[1])[ch] += static_cast<T>(sum_dy_xhat);
          if (gin[2]) (*gin[2])[ch] += static_cast<T>(sum_dy);
          if (!gin[0]) continue;
          const double scale = static_cast<double>(gamma[ch]) * invstd[ch];
          const double md = static_cast<double>(m);
          for (std::size_t i = 0; i < n; ++i) {
            const std::size_t base = (i * c + ch) * hw;
            for (std::size_t q = 0; q < hw; ++q) {
              const double dy = gout[base + q];
              const double dx = train ? scale * (dy - sum_dy / md - xhat[base + q] * sum_dy_xhat / md)
                                      : scale * dy;
              (*gin[0])[base + q] += static_cast<T>(dx);
            }
          }
        }
      });
}

template <typename T>
BasicTensor<T> relu(const BasicTensor<T>& x) {
  std::vector<T> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] > T(0) ? x[i] : T(0);
  return BasicTensor<T>::make_result(
      x.shape(), std::move(out), "relu", {x},
      [x](const std::vector<T>&, std::span<const T> gout, std::vector<std::vector<T>*>& gin) {
        if (!gin[0]) return;
        for (std::size_t i = 0; i < gout.size(); ++i) {
          if (x[i] > T(0)) (*gin[0])[i] += gout[i];
        }
      });
}

template <typename T>
BasicTensor<T> sigmoid(const BasicTensor<T>& x) {
  std::vector<T> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = T(1) / (T(1) + std::exp(-x[i]));
  return BasicTensor<T>::make_result(
      x.shape(), std::move(out), "sigmoid", {x},
      [](const std::vector<T>& y, std::span<const T> gout, std::vector<std::vector<T>*>& gin) {
        if (!gin[0]) return;
        for (std::size_t i = 0; i < gout.size(); ++i) (*gin[0])[i] += gout[i] * y[i] * (T(1) - y[i]);
      });
}

template <typename T>
BasicTensor<T> add(const BasicTensor<T>& x, const BasicTensor<T>& y) {
  require(x.shape() == y.shape(),
          "add: shape " + shape_str(x.shape()) + " vs " + shape_str(y.shape()));
  std::vector<T> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + y[i];
  return BasicTensor<T>::make_result(
      x.shape(), std::move(out), "add", {x, y},
      [](const std::vector<T>&, std::span<const T> gout, std::vector<std::vector<T>*>& gin) {
        for (auto* g : gin) {
          if (!g) continue;
          for (std::size_t i = 0; i < gout.size(); ++i) (*g)[i] += gout[i];
        }
      });
}

template <typename T>
BasicTensor<T> mul(const BasicTensor<T>& x, const BasicTensor<T>& y) {
  require(x.shape() == y.shape(),
          "mul: shape " + shape_str(x.shape()) + " vs " + shape_str(y.shape()));
  std::vector<T> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * y[i];
  return BasicTensor<T>::make_result(
      x.shape(), std::move(out), "mul", {x, y},
      [x, y](const std::vector<T>&, std::span<const T> gout, std::vector<std::vector<T>*>& gin) {
        if (gin[0]) {
          for (std::size_t i = 0; i < gout.size(); ++i) (*gin[0])[i] += gout[i] * y[i];
        }
        if (gin[1]) {
          for (std::size_t i = 0; i < gout.size(); ++i) (*gin[1])[i] += gout[i] * x[i];
        }
      });
}

template <typename T>
BasicTensor<T> scale_channels(const BasicTensor<T>& x, const BasicTensor<T>& s) {
  require_rank(x.shape(), 4, "scale_channels");
  require(s.shape() == Shape{x.dim(0), x.dim(1), 1, 1},
          "scale_channels: scale must be [N,C,1,1] matching " + shape_str(x.shape()) + ", got " +
              shape_str(s.shape()));
  const std::size_t nc = x.dim(0) * x.dim(1), hw = x.dim(2) * x.dim(3);
  std::vector<T> out(x.numel());
  for (std::size_t p = 0; p < nc; ++p) {
    for (std::size_t q = 0; q < hw; ++q) out[p * hw + q] = x[p * hw + q] * s[p];
  }
  return BasicTensor<T>::make_result(
      x.shape(), std::move(out), "scale_channels", {x, s},
      [x, s, nc, hw](const std::vector<T>&, std::span<const T> gout,
                     std::vector<std::vector<T>*>& gin) {
        for (std::size_t p = 0; p < nc; ++p) {
          T acc = 0;
          for (std::size_t q = 0; q < hw; ++q) {
            const std::size_t i = p * hw + q;
            if (gin[0]) (*gin[0])[i] += gout[i] * s[p];
            acc += gout[i] * x[i];
          }
          if (gin[1]) (*gin[1])[p] += acc;
        }
      });
}

template <typename T>
BasicTensor<T> global_avg_pool(const BasicTensor<T>& x) {
  require_rank(x.shape(), 4, "global_avg_pool");
  const std::size_t nc = x.dim(0) * x.dim(1), hw = x.dim(2) * x.dim(3);
  require(hw >= 1, "global_avg_pool: empty spatial extent");
  std::vector<T> out(nc);
  for (std::size_t p = 0; p < nc; ++p) {
    double s = 0;
    for (std::size_t q = 0; q < hw; ++q) s += x[p * hw + q];
    out[p] = static_cast<T>(s / static_cast<double>(hw));
  }
  return BasicTensor<T>::make_result(
      {x.dim(0), x.dim(1), 1, 1}, std::move(out), "global_avg_pool", {x},
      [nc, hw](const std::vector<T>&, std::span<const T> gout, std::vector<std::vector<T>*>& gin) {
        if (!gin[0]) return;
        const T inv = T(1) / static_cast<T>(hw);
        for (std::size_t p = 0; p < nc; ++p) {
          for (std::size_t q = 0; q < hw; ++q) (*gin[0])[p * hw + q] += gout[p] * inv;
        }
      });
}

template <typename T>
BasicTensor<T> concat_channels(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  require_rank(a.shape(), 4, "concat_channels");
  require_rank(b.shape(), 4, "concat_channels");
  require(a.dim(0) == b.dim(0) && a.dim(2) == b.dim(2) && a.dim(3) == b.dim(3),
          "concat_channels: " + shape_str(a.shape()) + " and " + shape_str(b.shape()) +
              " differ outside the channel axis");
  const std::size_t n = a.dim(0), ca = a.dim(1), cb = b.dim(1), hw = a.dim(2) * a.dim(3);
  std::vector<T> out(n * (ca + cb) * hw);
  for (std::size_t i = 0; i < n; ++i) {
    std::copy_n(a.data().data() + i * ca * hw, ca * hw, out.data() + i * (ca + cb) * hw);
    std::copy_n(b.data().data() + i * cb * hw, cb * hw, out.data() + (i * (ca + cb) + ca) * hw);
  }
  return BasicTensor<T>::make_result(
      {n, ca + cb, a.dim(2), a.dim(3)}, std::move(out), "concat_channels", {a, b},
      [n, ca, cb, hw](const std::vector<T>&, std::span<const T> gout,
                      std::vector<std::vector<T>*>& gin) {
        for (std::size_t i = 0; i < n; ++i) {
          const T* g = gout.data() + i * (ca + cb) * hw;
          if (gin[0]) {
            T* d = gin[0]->data() + i * ca * hw;
            for (std::size_t q = 0; q < ca * hw; ++q) d[q] += g[q];
          }
          if (gin[1]) {
            T* d = gin[1]->data() + i * cb * hw;
            for (std::size_t q = 0; q < cb * hw; ++q) d[q] += g[ca * hw + q];
          }
        }
      });
}

template <typename T>
BasicTensor<T> slice_channels(const BasicTensor<T>& x, std::size_t begin, std::size_t end) {
  require_rank(x.shape(), 4, "slice_channels");
  require(begin <= end && end <= x.dim(1), "slice_channels: range out of bounds");
  const std::size_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3), len = end - begin;
  std::vector<T> out(n * len * hw);
  for (std::size_t i = 0; i < n; ++i) {
    std::copy_n(x.data().data() + (i * c + begin) * hw, len * hw, out.data() + i * len * hw);
  }
  return BasicTensor<T>::make_result(
      {n, len, x.dim(2), x.dim(3)}, std::move(out), "slice_channels", {x},
      [n, c, hw, begin, len](const std::vector<T>&, std::span<const T> gout,
                             std::vector<std::vector<T>*>& gin) {
        if (!gin[0]) return;
        for (std::size_t i = 0; i < n; ++i) {
          T* d = gin[0]->data() + (i * c + begin) * hw;
          const T* g = gout.data() + i * len * hw;
          for (std::size_t q = 0; q < len * hw; ++q) d[q] += g[q];
        }
      });
}

template <typename T>
BasicTensor<T> depth_to_space(const BasicTensor<T>& x, int factor) {
  require_rank(x.shape(), 4, "depth_to_space");
  require(factor >= 1, "depth_to_space: factor must be >= 1");
  const auto f = static_cast<std::size_t>(factor);
  const std::size_t n = x.dim(0), cin = x.dim(1), h = x.dim(2), w = x.dim(3);
  require(cin % (f * f) == 0, "depth_to_space: channels not divisible by factor^2");
  const std::size_t c = cin / (f * f), oh = h * f, ow = w * f;

  // out[n][c][y*f + i][x*f + j] = in[n][c*f*f + i*f + j][y][x]
  std::vector<std::size_t> src_of(n * c * oh * ow);
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t oy = 0; oy < oh; ++oy)
        for (std::size_t ox = 0; ox < ow; ++ox) {
          const std::size_t ic = ch * f * f + (oy % f) * f + (ox % f);
          src_of[((b * c + ch) * oh + oy) * ow + ox] = ((b * cin + ic) * h + oy / f) * w + ox / f;
        }
  std::vector<T> out(src_of.size());
  for (std::size_t o = 0; o < out.size(); ++o) out[o] = x[src_of[o]];
  return BasicTensor<T>::make_result(
      {n, c, oh, ow}, std::move(out), "depth_to_space", {x},
      [src_of = std::move(src_of)](const std::vector<T>&, std::span<const T> gout,
                                   std::vector<std::vector<T>*>& gin) {
        if (!gin[0]) return;
        for (std::size_t o = 0; o < gout.size(); ++o) (*gin[0])[src_of[o]] += gout[o];
      });
}

template <typename T>
BasicTensor<T> sum(const BasicTensor<T>& x) {
  double s = 0;
  for (T v : x.data()) s += v;
  return BasicTensor<T>::make_result(
      {1}, {static_cast<T>(s)}, "sum", {x},
      [](const std::vector<T>&, std::span<const T> gout, std::vector<std::vector<T>*>& gin) {
        if (!gin[0]) return;
        for (auto& g : *gin[0]) g += gout[0];
      });
}

template <typename T>
BasicTensor<T> smooth_l1(const BasicTensor<T>& pred, const BasicTensor<T>& target) {
  require(pred.shape() == target.shape(),
          "smooth_l1: shape " + shape_str(pred.shape()) + " vs " + shape_str(target.shape()));
  require(pred.numel() >= 1, "smooth_l1: empty input");
  double s = 0;
  for (std::size_t i = 0; i < pred.numel(); ++i) {
    const double d = static_cast<double>(pred[i]) - static_cast<double>(target[i]);
    const double a = std::abs(d);
    s += a < 1.0 ? 0.5 * d * d : a - 0.5;
  }
  const double count = static_cast<double>(pred.numel());
  return BasicTensor<T>::make_result(
      {1}, {static_cast<T>(s / count)}, "smooth_l1", {pred, target},
      [pred, target, count](const std::vector<T>&, std::span<const T> gout,
                            std::vector<std::vector<T>*>& gin) {
        const double scale = static_cast<double>(gout[0]) / count;
        for (std::size_t i = 0; i < pred.numel(); ++i) {
          const double d = static_cast<double>(pred[i]) - static_cast<double>(target[i]);
          const double g = (std::abs(d) < 1.0 ? d : (d > 0 ? 1.0 : -1.0)) * scale;
          if (gin[0]) (*gin[0])[i] += static_cast<T>(g);
          if (gin[1]) (*gin[1])[i] -= static_cast<T>(g);
        }
      });
}

#define TSR_INSTANTIATE(T)                                                                       \
  template BasicTensor<T> conv2d(const BasicTensor<T>&, const BasicTensor<T>&,                   \
                                 const BasicTensor<T>&, int, int);                               \
  template BasicTensor<T> conv_transpose2d(const BasicTensor<T>&, const BasicTensor<T>&,         \
                                           const BasicTensor<T>&, int, int);                     \
  template BasicTensor<T> maxpool2d(const BasicTensor<T>&, int, int, int);                       \
  template BasicTensor<T> batchnorm2d(const BasicTensor<T>&, const BasicTensor<T>&,              \
                                      const BasicTensor<T>&, BasicTensor<T>&, BasicTensor<T>&,   \
                                      NormMode);                                                 \
  template BasicTensor<T> relu(const BasicTensor<T>&);                                           \
  template BasicTensor<T> sigmoid(const BasicTensor<T>&);                                        \
  template BasicTensor<T> add(const BasicTensor<T>&, const BasicTensor<T>&);                     \
  template BasicTensor<T> mul(const BasicTensor<T>&, const BasicTensor<T>&);                     \
  template BasicTensor<T> scale_channels(const BasicTensor<T>&, const BasicTensor<T>&);          \
  template BasicTensor<T> global_avg_pool(const BasicTensor<T>&);                                \
  template BasicTensor<T> concat_channels(const BasicTensor<T>&, const BasicTensor<T>&);         \
  template BasicTensor<T> slice_channels(const BasicTensor<T>&, std::size_t, std::size_t);       \
  template BasicTensor<T> depth_to_space(const BasicTensor<T>&, int);                            \
  template BasicTensor<T> sum(const BasicTensor<T>&);                                            \
  template BasicTensor<T> smooth_l1(const BasicTensor<T>&, const BasicTensor<T>&);

TSR_INSTANTIATE(float)
TSR_INSTANTIATE(double)

#undef TSR_INSTANTIATE

}  // namespace tsr
