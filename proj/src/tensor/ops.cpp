#include "stereoadapt/tensor/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <memory>
#include <string>

namespace stereoadapt::tensor {
namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

struct ConvGeometry {
  int cin, h, w, cout, k, stride, dilation;
  int out_h, out_w, pad_top, pad_left;

  int patch() const { return cin * k * k; }
  int pixels() const { return out_h * out_w; }
  bool pointwise() const { return k == 1 && stride == 1; }
};

int same_padding(int in, int out, int k, int stride, int dilation) {
  const int needed = (out - 1) * stride + dilation * (k - 1) + 1 - in;
  return std::max(needed, 0) / 2;
}

template <typename T>
void im2col(const ConvGeometry& g, const T* x, T* col) {
  const int n = g.pixels();
  for (int c = 0; c < g.cin; ++c) {
    for (int ky = 0; ky < g.k; ++ky) {
      for (int kx = 0; kx < g.k; ++kx) {
        T* row = col + static_cast<std::size_t>((c * g.k + ky) * g.k + kx) * n;
        for (int oy = 0; oy < g.out_h; ++oy) {
          const int iy = oy * g.stride - g.pad_top + ky * g.dilation;
          T* dst = row + oy * g.out_w;
          if (iy < 0 || iy >= g.h) {
            std::fill(dst, dst + g.out_w, T(0));
            continue;
          }
          const T* src = x + (static_cast<std::size_t>(c) * g.h + iy) * g.w;
          for (int ox = 0; ox < g.out_w; ++ox) {
            const int ix = ox * g.stride - g.pad_left + kx * g.dilation;
            dst[ox] = (ix >= 0 && ix < g.w) ? src[ix] : T(0);
          }
        }
      }
    }
  }
}

template <typename T>
void col2im(const ConvGeometry& g, const T* col, T* dx) {
  const int n = g.pixels();
  for (int c = 0; c < g.cin; ++c) {
    for (int ky = 0; ky < g.k; ++ky) {
      for (int kx = 0; kx < g.k; ++kx) {
        const T* row = col + static_cast<std::size_t>((c * g.k + ky) * g.k + kx) * n;
        for (int oy = 0; oy < g.out_h; ++oy) {
          const int iy = oy * g.stride - g.pad_top + ky * g.dilation;
          if (iy < 0 || iy >= g.h) continue;
          const T* src = row + oy * g.out_w;
          T* dst = dx + (static_cast<std::size_t>(c) * g.h + iy) * g.w;
          for (int ox = 0; ox < g.out_w; ++ox) {
            const int ix = ox * g.stride - g.pad_left + kx * g.dilation;
            if (ix >= 0 && ix < g.w) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

bool valid_dilation(int d) { return d == 1 || d == 2 || d == 4 || d == 8 || d == 16; }

// Linear interpolation taps for one axis of an align-corners=false resize.
struct Taps {
  std::vector<int> lo, hi;
  std::vector<double> frac;
};

Taps resize_taps(int in, int factor) {
  Taps t;
  const int out = in * factor;
  t.lo.resize(static_cast<std::size_t>(out));
  t.hi.resize(static_cast<std::size_t>(out));
  t.frac.resize(static_cast<std::size_t>(out));
  for (int o = 0; o < out; ++o) {
    double s = (o + 0.5) / factor - 0.5;
    s = std::clamp(s, 0.0, static_cast<double>(in - 1));
    const int lo = std::min(static_cast<int>(std::floor(s)), in - 1);
    const auto uo = static_cast<std::size_t>(o);
    t.lo[uo] = lo;
    t.hi[uo] = std::min(lo + 1, in - 1);
    t.frac[uo] = s - lo;
  }
  return t;
}

template <typename T>
void require_chw(const Var<T>& v, const char* what) {
  require_rank(v.shape(), 3, what);
}

}  // namespace

template <typename T>
Var<T> conv2d(Var<T> input, Var<T> weights, Var<T> bias, int stride, int dilation) {
  const Tensor<T>& x = input.value();
  const Tensor<T>& wt = weights.value();
  require_chw(input, "conv2d input");
  require_rank(wt.shape(), 4, "conv2d weights");
  require_rank(bias.shape(), 1, "conv2d bias");
  if (wt.shape()[2] != wt.shape()[3] || wt.shape()[2] % 2 == 0) {
    throw Error(ErrorCode::kInvalidArgument, "conv2d kernel must be square and odd, got " + wt.shape().str());
  }
  if (stride != 1 && stride != 2) throw Error(ErrorCode::kInvalidArgument, "conv2d stride must be 1 or 2");
  if (!valid_dilation(dilation)) throw Error(ErrorCode::kInvalidArgument, "conv2d dilation must be 1,2,4,8 or 16");
  if (wt.shape()[1] != x.channels()) {
    throw Error(ErrorCode::kShapeMismatch, "conv2d weights expect " + std::to_string(wt.shape()[1]) +
                                               " input channels, input has " + std::to_string(x.channels()));
  }
  if (bias.shape()[0] != wt.shape()[0]) throw Error(ErrorCode::kShapeMismatch, "conv2d bias length");

  ConvGeometry g{};
  g.cin = x.channels();
  g.h = x.height();
  g.w = x.width();
  g.cout = wt.shape()[0];
  g.k = wt.shape()[2];
  g.stride = stride;
  g.dilation = dilation;
  g.out_h = (g.h + stride - 1) / stride;
  g.out_w = (g.w + stride - 1) / stride;
  g.pad_top = same_padding(g.h, g.out_h, g.k, stride, dilation);
  g.pad_left = same_padding(g.w, g.out_w, g.k, stride, dilation);

  Tensor<T> out = Tensor<T>::chw(g.cout, g.out_h, g.out_w);
  {
    AlignedVector<T> col;
    const T* colp = x.data();
    if (!g.pointwise()) {
      col.resize(static_cast<std::size_t>(g.patch()) * g.pixels());
      im2col(g, x.data(), col.data());
      colp = col.data();
    }
    ConstMatMap<T> wm(wt.data(), g.cout, g.patch());
    ConstMatMap<T> cm(colp, g.patch(), g.pixels());
    MatMap<T> om(out.data(), g.cout, g.pixels());
    om.noalias() = wm * cm;
    const T* b = bias.value().data();
    for (int o = 0; o < g.cout; ++o) om.row(o).array() += b[o];
  }

  return input.tape().record(
      "conv2d", std::move(out), {input, weights, bias}, [g](const BackwardArgs<T>& a) {
        ConstMatMap<T> dout(a.grad.data(), g.cout, g.pixels());
        const Tensor<T>& x = *a.inputs[0];
        const Tensor<T>& wt = *a.inputs[1];
        if (Tensor<T>* dx = a.input_grads[0]) {
          ConstMatMap<T> wm(wt.data(), g.cout, g.patch());
          if (g.pointwise()) {
            MatMap<T> dxm(dx->data(), g.cin, g.pixels());
            dxm.noalias() += wm.transpose() * dout;
          } else {
            RowMat<T> dcol = wm.transpose() * dout;
            col2im(g, dcol.data(), dx->data());
          }
        }
        if (Tensor<T>* dw = a.input_grads[1]) {
          MatMap<T> dwm(dw->data(), g.cout, g.patch());
          if (g.pointwise()) {
            ConstMatMap<T> cm(x.data(), g.patch(), g.pixels());
            dwm.noalias() += dout * cm.transpose();
          } else {
            AlignedVector<T> col(static_cast<std::size_t>(g.patch()) * g.pixels());
            im2col(g, x.data(), col.data());
            ConstMatMap<T> cm(col.data(), g.patch(), g.pixels());
            dwm.noalias() += dout * cm.transpose();
          }
        }
        if (Tensor<T>* db = a.input_grads[2]) {
          for (int o = 0; o < g.cout; ++o) (*db)[static_cast<std::size_t>(o)] += dout.row(o).sum();
        }
      });
}

template <typename T>
Var<T> leaky_relu(Var<T> x, T slope) {
  if (!(slope >= T(0) && slope < T(1))) throw Error(ErrorCode::kInvalidArgument, "leaky_relu slope must be in [0,1)");
  Tensor<T> out = x.value();
  for (auto& v : out.values()) v = v > T(0) ? v : slope * v;
  return x.tape().record("leaky_relu", std::move(out), {x}, [slope](const BackwardArgs<T>& a) {
    const Tensor<T>& in = *a.inputs[0];
    Tensor<T>& dx = *a.input_grads[0];
    for (std::size_t i = 0; i < in.size(); ++i) dx[i] += a.grad[i] * (in[i] > T(0) ? T(1) : slope);
  });
}

template <typename T>
Var<T> relu(Var<T> x) {
  Tensor<T> out = x.value();
  for (auto& v : out.values()) v = v > T(0) ? v : T(0);
  return x.tape().record("relu", std::move(out), {x}, [](const BackwardArgs<T>& a) {
    const Tensor<T>& in = *a.inputs[0];
    Tensor<T>& dx = *a.input_grads[0];
    for (std::size_t i = 0; i < in.size(); ++i) {
      if (in[i] > T(0)) dx[i] += a.grad[i];
    }
  });
}

template <typename T>
Var<T> correlation(Var<T> left, Var<T> right, int max_disp) {
  require_chw(left, "correlation left");
  require_same(left.shape(), right.shape(), "correlation");
  if (max_disp < 0) throw Error(ErrorCode::kInvalidArgument, "correlation max_disp must be >= 0");
  const Tensor<T>& l = left.value();
  const Tensor<T>& r = right.value();
  const int c = l.channels(), h = l.height(), w = l.width();
  const int shifts = 2 * max_disp + 1;
  const T inv_c = T(1) / static_cast<T>(c);

  Tensor<T> out = Tensor<T>::chw(shifts, h, w);
  for (int s = -max_disp; s <= max_disp; ++s) {
    const int x_begin = std::max(0, -s), x_end = std::min(w, w - s);
    for (int ch = 0; ch < c; ++ch) {
      for (int y = 0; y < h; ++y) {
        const T* lr = &l.at(ch, y, 0);
        const T* rr = &r.at(ch, y, 0);
        T* o = &out.at(s + max_disp, y, 0);
        for (int x = x_begin; x < x_end; ++x) o[x] += lr[x] * rr[x + s];
      }
    }
  }
  for (auto& v : out.values()) v *= inv_c;

  return left.tape().record(
      "correlation", std::move(out), {left, right}, [max_disp, c, h, w, inv_c](const BackwardArgs<T>& a) {
        const Tensor<T>& l = *a.inputs[0];
        const Tensor<T>& r = *a.inputs[1];
        Tensor<T>* dl = a.input_grads[0];
        Tensor<T>* dr = a.input_grads[1];
        for (int s = -max_disp; s <= max_disp; ++s) {
          const int x_begin = std::max(0, -s), x_end = std::min(w, w - s);
          for (int ch = 0; ch < c; ++ch) {
            for (int y = 0; y < h; ++y) {
              const T* g = &a.grad.at(s + max_disp, y, 0);
              if (dl) {
                const T* rr = &r.at(ch, y, 0);
                T* d = &dl->at(ch, y, 0);
                for (int x = x_begin; x < x_end; ++x) d[x] += g[x] * rr[x + s] * inv_c;
              }
              if (dr) {
                const T* lr = &l.at(ch, y, 0);
                T* d = &dr->at(ch, y, 0);
                for (int x = x_begin; x < x_end; ++x) d[x + s] += g[x] * lr[x] * inv_c;
              }
            }
          }
        }
      });
}

template <typename T>
Var<T> warp(Var<T> source, Var<T> disparity) {
  require_chw(source, "warp source");
  require_chw(disparity, "warp disparity");
  const Tensor<T>& src = source.value();
  const Tensor<T>& disp = disparity.value();
  if (disp.channels() != 1 || disp.height() != src.height() || disp.width() != src.width()) {
    throw Error(ErrorCode::kShapeMismatch, "warp disparity " + disp.shape().str() + " vs source " + src.shape().str());
  }
  const int c = src.channels(), h = src.height(), w = src.width();

  // Per-pixel taps shared by forward and backward.
  struct Tap {
    int x0, x1;
    T frac;
    bool clamped;
  };
  auto taps = std::make_shared<std::vector<Tap>>(static_cast<std::size_t>(h) * w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const T xs_raw = static_cast<T>(x) - disp.at(0, y, x);
      const bool clamped = !(xs_raw >= T(0) && xs_raw <= static_cast<T>(w - 1));
      // NaN fails both comparisons; park it on the left border.
      const T xs = clamped ? (xs_raw > static_cast<T>(w - 1) ? static_cast<T>(w - 1) : T(0)) : xs_raw;
      const int x0 = std::min(static_cast<int>(std::floor(xs)), w - 1);
      (*taps)[static_cast<std::size_t>(y) * w + x] = Tap{x0, std::min(x0 + 1, w - 1), xs - static_cast<T>(x0), clamped};
    }
  }

  Tensor<T> out = Tensor<T>::chw(c, h, w);
  for (int ch = 0; ch < c; ++ch) {
    for (int y = 0; y < h; ++y) {
      const T* row = &src.at(ch, y, 0);
      T* o = &out.at(ch, y, 0);
      for (int x = 0; x < w; ++x) {
        const Tap& t = (*taps)[static_cast<std::size_t>(y) * w + x];
        o[x] = (T(1) - t.frac) * row[t.x0] + t.frac * row[t.x1];
      }
    }
  }

  return source.tape().record("warp", std::move(out), {source, disparity}, [taps, c, h, w](const BackwardArgs<T>& a) {
    const Tensor<T>& src = *a.inputs[0];
    Tensor<T>* dsrc = a.input_grads[0];
    Tensor<T>* ddisp = a.input_grads[1];
    for (int ch = 0; ch < c; ++ch) {
      for (int y = 0; y < h; ++y) {
        const T* row = &src.at(ch, y, 0);
        const T* g = &a.grad.at(ch, y, 0);
        for (int x = 0; x < w; ++x) {
          const Tap& t = (*taps)[static_cast<std::size_t>(y) * w + x];
          if (dsrc) {
            T* d = &dsrc->at(ch, y, 0);
            d[t.x0] += (T(1) - t.frac) * g[x];
            d[t.x1] += t.frac * g[x];
          }
          if (ddisp && !t.clamped) ddisp->at(0, y, x) -= g[x] * (row[t.x1] - row[t.x0]);
        }
      }
    }
  });
}

template <typename T>
Var<T> upsample_bilinear(Var<T> x, int factor, bool scale_values) {
  require_chw(x, "upsample input");
  if (factor < 1) throw Error(ErrorCode::kInvalidArgument, "upsample factor must be >= 1");
  const Tensor<T>& in = x.value();
  const int c = in.channels(), h = in.height(), w = in.width();
  const int oh = h * factor, ow = w * factor;
  auto ty = std::make_shared<Taps>(resize_taps(h, factor));
  auto tx = std::make_shared<Taps>(resize_taps(w, factor));
  const T gain = scale_values ? static_cast<T>(factor) : T(1);

  Tensor<T> out = Tensor<T>::chw(c, oh, ow);
  for (int ch = 0; ch < c; ++ch) {
    for (int oy = 0; oy < oh; ++oy) {
      const auto uy = static_cast<std::size_t>(oy);
      const T fy = static_cast<T>(ty->frac[uy]);
      const T* r0 = &in.at(ch, ty->lo[uy], 0);
      const T* r1 = &in.at(ch, ty->hi[uy], 0);
      T* o = &out.at(ch, oy, 0);
      for (int ox = 0; ox < ow; ++ox) {
        const auto ux = static_cast<std::size_t>(ox);
        const T fx = static_cast<T>(tx->frac[ux]);
        const int x0 = tx->lo[ux], x1 = tx->hi[ux];
        const T top = (T(1) - fx) * r0[x0] + fx * r0[x1];
        const T bot = (T(1) - fx) * r1[x0] + fx * r1[x1];
        o[ox] = gain * ((T(1) - fy) * top + fy * bot);
      }
    }
  }

  return x.tape().record("upsample_bilinear", std::move(out), {x}, [ty, tx, c, oh, ow, gain](const BackwardArgs<T>& a) {
    Tensor<T>& dx = *a.input_grads[0];
    for (int ch = 0; ch < c; ++ch) {
      for (int oy = 0; oy < oh; ++oy) {
        const auto uy = static_cast<std::size_t>(oy);
        const T fy = static_cast<T>(ty->frac[uy]);
        T* r0 = &dx.at(ch, ty->lo[uy], 0);
        T* r1 = &dx.at(ch, ty->hi[uy], 0);
        const T* g = &a.grad.at(ch, oy, 0);
        for (int ox = 0; ox < ow; ++ox) {
          const auto ux = static_cast<std::size_t>(ox);
          const T fx = static_cast<T>(tx->frac[ux]);
          const int x0 = tx->lo[ux], x1 = tx->hi[ux];
          const T gv = gain * g[ox];
          r0[x0] += (T(1) - fy) * (T(1) - fx) * gv;
          r0[x1] += (T(1) - fy) * fx * gv;
          r1[x0] += fy * (T(1) - fx) * gv;
          r1[x1] += fy * fx * gv;
        }
      }
    }
  });
}

template <typename T>
Var<T> concat(const std::vector<Var<T>>& parts) {
  if (parts.empty()) throw Error(ErrorCode::kInvalidArgument, "concat of nothing");
  const int h = parts[0].value().height(), w = parts[0].value().width();
  int c = 0;
  std::vector<int> offsets;
  for (const auto& p : parts) {
    require_chw(p, "concat part");
    if (p.value().height() != h || p.value().width() != w) {
      throw Error(ErrorCode::kShapeMismatch, "concat spatial extents differ: " + p.shape().str());
    }
    offsets.push_back(c);
    c += p.value().channels();
  }
  Tensor<T> out = Tensor<T>::chw(c, h, w);
  for (std::size_t i = 0; i < parts.size(); ++i) {
    const Tensor<T>& v = parts[i].value();
    std::copy(v.data(), v.data() + v.size(), &out.at(offsets[i], 0, 0));
  }
  return parts[0].tape().record("concat", std::move(out), parts, [offsets, h, w](const BackwardArgs<T>& a) {
    for (std::size_t i = 0; i < a.inputs.size(); ++i) {
      Tensor<T>* d = a.input_grads[i];
      if (!d) continue;
      const T* g = &a.grad.at(offsets[i], 0, 0);
      for (std::size_t j = 0; j < d->size(); ++j) (*d)[j] += g[j];
    }
  });
}

template <typename T>
Var<T> detach(Var<T> x) {
  return x.tape().constant(x.value());
}

namespace {

template <typename T, typename Fwd, typename Bwd>
Var<T> binary(const char* name, Var<T> a, Var<T> b, Fwd fwd, Bwd bwd) {
  require_same(a.shape(), b.shape(), name);
  const Tensor<T>& av = a.value();
  const Tensor<T>& bv = b.value();
  Tensor<T> out(av.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(av[i], bv[i]);
  return a.tape().record(name, std::move(out), {a, b}, [bwd](const BackwardArgs<T>& args) {
    const Tensor<T>& av = *args.inputs[0];
    const Tensor<T>& bv = *args.inputs[1];
    Tensor<T>* da = args.input_grads[0];
    Tensor<T>* db = args.input_grads[1];
    for (std::size_t i = 0; i < av.size(); ++i) {
      T ga = 0, gb = 0;
      bwd(av[i], bv[i], args.grad[i], ga, gb);
      if (da) (*da)[i] += ga;
      if (db) (*db)[i] += gb;
    }
  });
}

}  // namespace

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
  return binary<T>(
      "add", a, b, [](T x, T y) { return x + y; },
      [](T, T, T g, T& ga, T& gb) {
        ga = g;
        gb = g;
      });
}

template <typename T>
Var<T> sub(Var<T> a, Var<T> b) {
  return binary<T>(
      "sub", a, b, [](T x, T y) { return x - y; },
      [](T, T, T g, T& ga, T& gb) {
        ga = g;
        gb = -g;
      });
}

template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
  return binary<T>(
      "mul", a, b, [](T x, T y) { return x * y; },
      [](T x, T y, T g, T& ga, T& gb) {
        ga = g * y;
        gb = g * x;
      });
}

template <typename T>
Var<T> div(Var<T> a, Var<T> b) {
  return binary<T>(
      "div", a, b, [](T x, T y) { return x / y; },
      [](T x, T y, T g, T& ga, T& gb) {
        ga = g / y;
        gb = -g * x / (y * y);
      });
}

template <typename T>
Var<T> scale(Var<T> x, T factor) {
  Tensor<T> out = x.value();
  for (auto& v : out.values()) v *= factor;
  return x.tape().record("scale", std::move(out), {x}, [factor](const BackwardArgs<T>& a) {
    Tensor<T>& dx = *a.input_grads[0];
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += factor * a.grad[i];
  });
}

template <typename T>
Var<T> add_scalar(Var<T> x, T offset) {
  Tensor<T> out = x.value();
  for (auto& v : out.values()) v += offset;
  return x.tape().record("add_scalar", std::move(out), {x}, [](const BackwardArgs<T>& a) {
    Tensor<T>& dx = *a.input_grads[0];
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += a.grad[i];
  });
}

template <typename T>
Var<T> abs(Var<T> x) {
  Tensor<T> out = x.value();
  for (auto& v : out.values()) v = std::abs(v);
  return x.tape().record("abs", std::move(out), {x}, [](const BackwardArgs<T>& a) {
    const Tensor<T>& in = *a.inputs[0];
    Tensor<T>& dx = *a.input_grads[0];
    for (std::size_t i = 0; i < dx.size(); ++i) {
      if (in[i] > T(0)) {
        dx[i] += a.grad[i];
      } else if (in[i] < T(0)) {
        dx[i] -= a.grad[i];
      }
    }
  });
}

template <typename T>
Var<T> box_filter(Var<T> x, int window) {
  require_chw(x, "box_filter input");
  if (window < 1 || window % 2 == 0) throw Error(ErrorCode::kInvalidArgument, "box_filter window must be odd");
  const Tensor<T>& in = x.value();
  const int c = in.channels(), h = in.height(), w = in.width(), r = window / 2;
  const T norm = T(1) / static_cast<T>(window * window);
  Tensor<T> out = Tensor<T>::chw(c, h, w);
  for (int ch = 0; ch < c; ++ch) {
    for (int y = 0; y < h; ++y) {
      for (int xx = 0; xx < w; ++xx) {
        T acc = 0;
        for (int dy = -r; dy <= r; ++dy) {
          const int yy = std::clamp(y + dy, 0, h - 1);
          for (int dx = -r; dx <= r; ++dx) acc += in.at(ch, yy, std::clamp(xx + dx, 0, w - 1));
        }
        out.at(ch, y, xx) = acc * norm;
      }
    }
  }
  return x.tape().record("box_filter", std::move(out), {x}, [c, h, w, r, norm](const BackwardArgs<T>& a) {
    Tensor<T>& dx = *a.input_grads[0];
    for (int ch = 0; ch < c; ++ch) {
      for (int y = 0; y < h; ++y) {
        for (int xx = 0; xx < w; ++xx) {
          const T g = a.grad.at(ch, y, xx) * norm;
          for (int dy = -r; dy <= r; ++dy) {
            const int yy = std::clamp(y + dy, 0, h - 1);
            for (int ddx = -r; ddx <= r; ++ddx) dx.at(ch, yy, std::clamp(xx + ddx, 0, w - 1)) += g;
          }
        }
      }
    }
  });
}

template <typename T>
Var<T> channel_mean(Var<T> x) {
  require_chw(x, "channel_mean input");
  const Tensor<T>& in = x.value();
  const int c = in.channels(), h = in.height(), w = in.width();
  const T inv = T(1) / static_cast<T>(c);
  Tensor<T> out = Tensor<T>::chw(1, h, w);
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  for (int ch = 0; ch < c; ++ch) {
    for (std::size_t i = 0; i < plane; ++i) out[i] += in[ch * plane + i];
  }
  for (auto& v : out.values()) v *= inv;
  return x.tape().record("channel_mean", std::move(out), {x}, [c, plane, inv](const BackwardArgs<T>& a) {
    Tensor<T>& dx = *a.input_grads[0];
    for (int ch = 0; ch < c; ++ch) {
      for (std::size_t i = 0; i < plane; ++i) dx[ch * plane + i] += a.grad[i] * inv;
    }
  });
}

template <typename T>
Var<T> sum(Var<T> x) {
  T acc = 0;
  for (T v : x.value().values()) acc += v;
  return x.tape().record("sum", Tensor<T>::scalar(acc), {x}, [](const BackwardArgs<T>& a) {
    Tensor<T>& dx = *a.input_grads[0];
    const T g = a.grad[0];
    for (auto& v : dx.values()) v += g;
  });
}

template <typename T>
Var<T> mean(Var<T> x) {
  const std::size_t n = x.value().size();
  if (n == 0) throw Error(ErrorCode::kInvalidArgument, "mean of empty tensor");
  T acc = 0;
  for (T v : x.value().values()) acc += v;
  const T inv = T(1) / static_cast<T>(n);
  return x.tape().record("mean", Tensor<T>::scalar(acc * inv), {x}, [inv](const BackwardArgs<T>& a) {
    Tensor<T>& dx = *a.input_grads[0];
    const T g = a.grad[0] * inv;
    for (auto& v : dx.values()) v += g;
  });
}

template <typename T>
Var<T> masked_mean(Var<T> x, const Tensor<T>& mask) {
  require_same(x.shape(), mask.shape(), "masked_mean");
  T count = 0, acc = 0;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i] != T(0)) {
      count += T(1);
      acc += x.value()[i];
    }
  }
  const T inv = count > T(0) ? T(1) / count : T(0);
  auto m = std::make_shared<Tensor<T>>(mask);
  return x.tape().record("masked_mean", Tensor<T>::scalar(acc * inv), {x}, [m, inv](const BackwardArgs<T>& a) {
    Tensor<T>& dx = *a.input_grads[0];
    const T g = a.grad[0] * inv;
    for (std::size_t i = 0; i < dx.size(); ++i) {
      if ((*m)[i] != T(0)) dx[i] += g;
    }
  });
}

template <typename T>
Var<T> weighted_sum(const std::vector<Var<T>>& terms, const std::vector<T>& weights) {
  if (terms.empty() || terms.size() != weights.size()) {
    throw Error(ErrorCode::kInvalidArgument, "weighted_sum needs one weight per term");
  }
  T acc = 0;
  for (std::size_t i = 0; i < terms.size(); ++i) acc += weights[i] * terms[i].value().item();
  return terms[0].tape().record("weighted_sum", Tensor<T>::scalar(acc), terms, [weights](const BackwardArgs<T>& a) {
    for (std::size_t i = 0; i < weights.size(); ++i) {
      if (Tensor<T>* d = a.input_grads[i]) (*d)[0] += weights[i] * a.grad[0];
    }
  });
}

#define STEREOADAPT_INSTANTIATE_OPS(T)                                               \
  template Var<T> conv2d<T>(Var<T>, Var<T>, Var<T>, int, int);                       \
  template Var<T> leaky_relu<T>(Var<T>, T);                                          \
  template Var<T> relu<T>(Var<T>);                                                   \
  template Var<T> correlation<T>(Var<T>, Var<T>, int);                               \
  template Var<T> warp<T>(Var<T>, Var<T>);                                           \
  template Var<T> upsample_bilinear<T>(Var<T>, int, bool);                           \
  template Var<T> concat<T>(const std::vector<Var<T>>&);                             \
  template Var<T> detach<T>(Var<T>);                                                 \
  template Var<T> add<T>(Var<T>, Var<T>);                                            \
  template Var<T> sub<T>(Var<T>, Var<T>);                                            \
  template Var<T> mul<T>(Var<T>, Var<T>);                                            \
  template Var<T> div<T>(Var<T>, Var<T>);                                            \
  template Var<T> scale<T>(Var<T>, T);                                               \
  template Var<T> add_scalar<T>(Var<T>, T);                                          \
  template Var<T> abs<T>(Var<T>);                                                    \
  template Var<T> box_filter<T>(Var<T>, int);                                        \
  template Var<T> channel_mean<T>(Var<T>);                                           \
  template Var<T> sum<T>(Var<T>);                                                    \
  template Var<T> mean<T>(Var<T>);                                                   \
  template Var<T> masked_mean<T>(Var<T>, const Tensor<T>&);                          \
  template Var<T> weighted_sum<T>(const std::vector<Var<T>>&, const std::vector<T>&);

STEREOADAPT_INSTANTIATE_OPS(float)
STEREOADAPT_INSTANTIATE_OPS(double)

}  // namespace stereoadapt::tensor
