#include "vseg/ops.hpp"

#include <Eigen/Dense>
#include <cmath>

namespace vseg {

namespace {

using EMat = Eigen::Matrix<real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using EMap = Eigen::Map<EMat>;
using ECMap = Eigen::Map<const EMat>;

void accumulate(Node& parent, const Tensor& g) {
    Tensor& pg = parent.ensure_grad();
    const int64_t n = pg.numel();
    for (int64_t i = 0; i < n; ++i) pg[i] += g[i];
}

// Unary op whose derivative is a function of the input value.
Var unary_from_x(const Var& a, real (*f)(real), real (*df)(real)) {
    Tensor y(a->value.shape());
    const int64_t n = y.numel();
    for (int64_t i = 0; i < n; ++i) y[i] = f(a->value[i]);
    return make_op(std::move(y), {a}, [df](Node& self) {
        Node& p = *self.parents[0];
        if (!p.requires_grad) return;
        Tensor& pg = p.ensure_grad();
        const int64_t n = pg.numel();
        for (int64_t i = 0; i < n; ++i) pg[i] += self.grad[i] * df(p.value[i]);
    });
}

real sigmoid_r(real x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

Var add(const Var& a, const Var& b) {
    check_shape(a->value.same_shape(b->value), "add: shape mismatch " + a->value.shape_str() +
                                                   " vs " + b->value.shape_str());
    Tensor y(a->value.shape());
    const int64_t n = y.numel();
    for (int64_t i = 0; i < n; ++i) y[i] = a->value[i] + b->value[i];
    return make_op(std::move(y), {a, b}, [](Node& self) {
        for (int k = 0; k < 2; ++k) {
            Node& p = *self.parents[static_cast<size_t>(k)];
            if (p.requires_grad) accumulate(p, self.grad);
        }
    });
}

Var sub(const Var& a, const Var& b) {
    check_shape(a->value.same_shape(b->value), "sub: shape mismatch " + a->value.shape_str() +
                                                   " vs " + b->value.shape_str());
    Tensor y(a->value.shape());
    const int64_t n = y.numel();
    for (int64_t i = 0; i < n; ++i) y[i] = a->value[i] - b->value[i];
    return make_op(std::move(y), {a, b}, [](Node& self) {
        Node& pa = *self.parents[0];
        Node& pb = *self.parents[1];
        const int64_t n = self.grad.numel();
        if (pa.requires_grad) accumulate(pa, self.grad);
        if (pb.requires_grad) {
            Tensor& g = pb.ensure_grad();
            for (int64_t i = 0; i < n; ++i) g[i] -= self.grad[i];
        }
    });
}

Var mul(const Var& a, const Var& b) {
    check_shape(a->value.same_shape(b->value), "mul: shape mismatch " + a->value.shape_str() +
                                                   " vs " + b->value.shape_str());
    Tensor y(a->value.shape());
    const int64_t n = y.numel();
    for (int64_t i = 0; i < n; ++i) y[i] = a->value[i] * b->value[i];
    return make_op(std::move(y), {a, b}, [](Node& self) {
        Node& pa = *self.parents[0];
        Node& pb = *self.parents[1];
        const int64_t n = self.grad.numel();
        if (pa.requires_grad) {
            Tensor& g = pa.ensure_grad();
            for (int64_t i = 0; i < n; ++i) g[i] += self.grad[i] * pb.value[i];
        }
        if (pb.requires_grad) {
            Tensor& g = pb.ensure_grad();
            for (int64_t i = 0; i < n; ++i) g[i] += self.grad[i] * pa.value[i];
        }
    });
}

Var mul_const(const Var& a, const Tensor& c) {
    check_shape(a->value.same_shape(c), "mul_const: shape mismatch");
    Tensor y(a->value.shape());
    const int64_t n = y.numel();
    for (int64_t i = 0; i < n; ++i) y[i] = a->value[i] * c[i];
    return make_op(std::move(y), {a}, [c](Node& self) {
        Node& p = *self.parents[0];
        if (!p.requires_grad) return;
        Tensor& g = p.ensure_grad();
        const int64_t n = g.numel();
        for (int64_t i = 0; i < n; ++i) g[i] += self.grad[i] * c[i];
    });
}

Var scale(const Var& a, real s) {
    Tensor y(a->value.shape());
    const int64_t n = y.numel();
    for (int64_t i = 0; i < n; ++i) y[i] = a->value[i] * s;
    return make_op(std::move(y), {a}, [s](Node& self) {
        Node& p = *self.parents[0];
        if (!p.requires_grad) return;
        Tensor& g = p.ensure_grad();
        const int64_t n = g.numel();
        for (int64_t i = 0; i < n; ++i) g[i] += self.grad[i] * s;
    });
}

Var add_scalar(const Var& a, real s) {
    Tensor y(a->value.shape());
    const int64_t n = y.numel();
    for (int64_t i = 0; i < n; ++i) y[i] = a->value[i] + s;
    return make_op(std::move(y), {a}, [](Node& self) {
        Node& p = *self.parents[0];
        if (p.requires_grad) accumulate(p, self.grad);
    });
}

Var relu(const Var& a) {
    return unary_from_x(
        a, [](real x) { return x > 0 ? x : 0.0; }, [](real x) { return x > 0 ? 1.0 : 0.0; });
}

Var leaky_relu(const Var& a, real slope) {
    Tensor y(a->value.shape());
    const int64_t n = y.numel();
    for (int64_t i = 0; i < n; ++i) {
        const real x = a->value[i];
        y[i] = x > 0 ? x : slope * x;
    }
    return make_op(std::move(y), {a}, [slope](Node& self) {
        Node& p = *self.parents[0];
        if (!p.requires_grad) return;
        Tensor& g = p.ensure_grad();
        const int64_t n = g.numel();
        for (int64_t i = 0; i < n; ++i)
            g[i] += self.grad[i] * (p.value[i] > 0 ? 1.0 : slope);
    });
}

Var swish(const Var& a) {
    return unary_from_x(
        a, [](real x) { return x * sigmoid_r(x); },
        [](real x) {
            const real s = sigmoid_r(x);
            return s * (1.0 + x * (1.0 - s));
        });
}

Var tanh_op(const Var& a) {
    Tensor y(a->value.shape());
    const int64_t n = y.numel();
    for (int64_t i = 0; i < n; ++i) y[i] = std::tanh(a->value[i]);
    return make_op(std::move(y), {a}, [](Node& self) {
        Node& p = *self.parents[0];
        if (!p.requires_grad) return;
        Tensor& g = p.ensure_grad();
        const int64_t n = g.numel();
        for (int64_t i = 0; i < n; ++i) {
            const real t = self.value[i];
            g[i] += self.grad[i] * (1.0 - t * t);
        }
    });
}

Var sigmoid_op(const Var& a) {
    Tensor y(a->value.shape());
    const int64_t n = y.numel();
    for (int64_t i = 0; i < n; ++i) y[i] = sigmoid_r(a->value[i]);
    return make_op(std::move(y), {a}, [](Node& self) {
        Node& p = *self.parents[0];
        if (!p.requires_grad) return;
        Tensor& g = p.ensure_grad();
        const int64_t n = g.numel();
        for (int64_t i = 0; i < n; ++i) {
            const real s = self.value[i];
            g[i] += self.grad[i] * s * (1.0 - s);
        }
    });
}

Var abs_op(const Var& a) {
    return unary_from_x(
        a, [](real x) { return std::fabs(x); },
        [](real x) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); });
}

Var square_op(const Var& a) {
    return unary_from_x(
        a, [](real x) { return x * x; }, [](real x) { return 2.0 * x; });
}

Var log_op(const Var& a) {
    return unary_from_x(
        a, [](real x) { return std::log(x); }, [](real x) { return 1.0 / x; });
}

Var clamp_op(const Var& a, real lo, real hi) {
    Tensor y(a->value.shape());
    const int64_t n = y.numel();
    for (int64_t i = 0; i < n; ++i) {
        const real x = a->value[i];
        y[i] = x < lo ? lo : (x > hi ? hi : x);
    }
    return make_op(std::move(y), {a}, [lo, hi](Node& self) {
        Node& p = *self.parents[0];
        if (!p.requires_grad) return;
        Tensor& g = p.ensure_grad();
        const int64_t n = g.numel();
        for (int64_t i = 0; i < n; ++i) {
            const real x = p.value[i];
            if (x >= lo && x <= hi) g[i] += self.grad[i];
        }
    });
}

Var scale_add_noise(const Var& x, const std::vector<real>& a, const Tensor& noise,
                    const std::vector<real>& b) {
    check_shape(x->value.ndim() == 4, "scale_add_noise: expected NCHW input");
    check_shape(x->value.same_shape(noise), "scale_add_noise: noise shape mismatch");
    const int N = x->value.dim(0);
    check(static_cast<int>(a.size()) == N && static_cast<int>(b.size()) == N,
          "scale_add_noise: coefficient count must equal batch size");
    const int64_t per = x->value.numel() / N;
    Tensor y(x->value.shape());
    for (int n = 0; n < N; ++n) {
        const int64_t off = n * per;
        for (int64_t i = 0; i < per; ++i)
            y[off + i] = a[static_cast<size_t>(n)] * x->value[off + i] +
                         b[static_cast<size_t>(n)] * noise[off + i];
    }
    return make_op(std::move(y), {x}, [a, per, N](Node& self) {
        Node& p = *self.parents[0];
        if (!p.requires_grad) return;
        Tensor& g = p.ensure_grad();
        for (int n = 0; n < N; ++n) {
            const int64_t off = n * per;
            for (int64_t i = 0; i < per; ++i)
                g[off + i] += self.grad[off + i] * a[static_cast<size_t>(n)];
        }
    });
}

Var mean_all(const Var& a) {
    const int64_t n = a->value.numel();
    check(n > 0, "mean_all: empty tensor");
    Tensor y = Tensor::scalar(a->value.sum() / static_cast<real>(n));
    return make_op(std::move(y), {a}, [n](Node& self) {
        Node& p = *self.parents[0];
        if (!p.requires_grad) return;
        Tensor& g = p.ensure_grad();
        const real dy = self.grad[0] / static_cast<real>(n);
        for (int64_t i = 0; i < n; ++i) g[i] += dy;
    });
}

namespace {

struct ConvDims {
    int N, Cin, H, W, Cout, k, stride, pad, Ho, Wo;
};

ConvDims conv_dims(const Tensor& x, const Tensor& w, int stride, int pad) {
    check_shape(x.ndim() == 4, "conv2d: input must be NCHW, got " + x.shape_str());
    check_shape(w.ndim() == 4, "conv2d: weight must be [Cout,Cin,k,k], got " + w.shape_str());
    check_shape(w.dim(2) == w.dim(3), "conv2d: only square kernels supported");
    check_shape(w.dim(1) == x.dim(1), "conv2d: channel mismatch, input " + x.shape_str() +
                                          " weight " + w.shape_str());
    ConvDims d;
    d.N = x.dim(0);
    d.Cin = x.dim(1);
    d.H = x.dim(2);
    d.W = x.dim(3);
    d.Cout = w.dim(0);
    d.k = w.dim(2);
    d.stride = stride;
    d.pad = pad;
    check(stride >= 1 && pad >= 0, "conv2d: bad stride or pad");
    const int eh = d.H + 2 * pad - d.k;
    const int ew = d.W + 2 * pad - d.k;
    check_shape(eh >= 0 && ew >= 0, "conv2d: kernel larger than padded input");
    d.Ho = eh / stride + 1;
    d.Wo = ew / stride + 1;
    return d;
}

// col is (Cin*k*k) x (Ho*Wo), row index (c*k + ki)*k + kj.
void im2col(const Tensor& x, int n, const ConvDims& d, real* col) {
    const int64_t plane = static_cast<int64_t>(d.H) * d.W;
    const real* xn = x.data() + static_cast<int64_t>(n) * d.Cin * plane;
    int64_t r = 0;
    for (int c = 0; c < d.Cin; ++c) {
        const real* xc = xn + c * plane;
        for (int ki = 0; ki < d.k; ++ki) {
            for (int kj = 0; kj < d.k; ++kj, ++r) {
                real* row = col + r * (static_cast<int64_t>(d.Ho) * d.Wo);
                for (int oh = 0; oh < d.Ho; ++oh) {
                    const int ih = oh * d.stride - d.pad + ki;
                    real* out = row + static_cast<int64_t>(oh) * d.Wo;
                    if (ih < 0 || ih >= d.H) {
                        for (int ow = 0; ow < d.Wo; ++ow) out[ow] = 0.0;
                        continue;
                    }
                    const real* xr = xc + static_cast<int64_t>(ih) * d.W;
                    for (int ow = 0; ow < d.Wo; ++ow) {
                        const int iw = ow * d.stride - d.pad + kj;
                        out[ow] = (iw >= 0 && iw < d.W) ? xr[iw] : 0.0;
                    }
                }
            }
        }
    }
}

void col2im_acc(const real* col, int n, const ConvDims& d, Tensor& dx) {
    const int64_t plane = static_cast<int64_t>(d.H) * d.W;
    real* xn = dx.data() + static_cast<int64_t>(n) * d.Cin * plane;
    int64_t r = 0;
    for (int c = 0; c < d.Cin; ++c) {
        real* xc = xn + c * plane;
        for (int ki = 0; ki < d.k; ++ki) {
            for (int kj = 0; kj < d.k; ++kj, ++r) {
                const real* row = col + r * (static_cast<int64_t>(d.Ho) * d.Wo);
                for (int oh = 0; oh < d.Ho; ++oh) {
                    const int ih = oh * d.stride - d.pad + ki;
                    if (ih < 0 || ih >= d.H) continue;
                    real* xr = xc + static_cast<int64_t>(ih) * d.W;
                    const real* in = row + static_cast<int64_t>(oh) * d.Wo;
                    for (int ow = 0; ow < d.Wo; ++ow) {
                        const int iw = ow * d.stride - d.pad + kj;
                        if (iw >= 0 && iw < d.W) xr[iw] += in[ow];
                    }
                }
            }
        }
    }
}

}  // namespace

Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad) {
    const ConvDims d = conv_dims(x->value, w->value, stride, pad);
    check_shape(b->value.ndim() == 1 && b->value.dim(0) == d.Cout,
                "conv2d: bias must be [Cout]");
    const int64_t ckk = static_cast<int64_t>(d.Cin) * d.k * d.k;
    const int64_t L = static_cast<int64_t>(d.Ho) * d.Wo;

    Tensor y({d.N, d.Cout, d.Ho, d.Wo});
    RealVec col(static_cast<size_t>(ckk * L));
    ECMap W(w->value.data(), d.Cout, ckk);
    for (int n = 0; n < d.N; ++n) {
        im2col(x->value, n, d, col.data());
        ECMap C(col.data(), ckk, L);
        EMap Y(y.data() + static_cast<int64_t>(n) * d.Cout * L, d.Cout, L);
        Y.noalias() = W * C;
        for (int co = 0; co < d.Cout; ++co) Y.row(co).array() += b->value[co];
    }

    return make_op(std::move(y), {x, w, b}, [d, ckk, L](Node& self) {
        Node& px = *self.parents[0];
        Node& pw = *self.parents[1];
        Node& pb = *self.parents[2];
        const bool need_x = px.requires_grad;
        const bool need_w = pw.requires_grad;
        const bool need_b = pb.requires_grad;

        if (need_b) {
            Tensor& gb = pb.ensure_grad();
            for (int n = 0; n < d.N; ++n) {
                const real* dy = self.grad.data() + static_cast<int64_t>(n) * d.Cout * L;
                for (int co = 0; co < d.Cout; ++co) {
                    real s = 0.0;
                    const real* row = dy + co * L;
                    for (int64_t i = 0; i < L; ++i) s += row[i];
                    gb[co] += s;
                }
            }
        }
        if (!need_x && !need_w) return;

        RealVec col(static_cast<size_t>(ckk * L));
        RealVec dcol(need_x ? static_cast<size_t>(ckk * L) : 0);
        ECMap W(pw.value.data(), d.Cout, ckk);
        if (need_x) px.ensure_grad();
        if (need_w) pw.ensure_grad();
        for (int n = 0; n < d.N; ++n) {
            ECMap dY(self.grad.data() + static_cast<int64_t>(n) * d.Cout * L, d.Cout, L);
            if (need_w) {
                im2col(px.value, n, d, col.data());
                ECMap C(col.data(), ckk, L);
                EMap gW(pw.grad.data(), d.Cout, ckk);
                gW.noalias() += dY * C.transpose();
            }
            if (need_x) {
                EMap dC(dcol.data(), ckk, L);
                dC.noalias() = W.transpose() * dY;
                col2im_acc(dcol.data(), n, d, px.grad);
            }
        }
    });
}

Var linear(const Var& x, const Var& w, const Var& b) {
    check_shape(x->value.ndim() == 2, "linear: input must be [N,D]");
    check_shape(w->value.ndim() == 2, "linear: weight must be [Dout,D]");
    const int N = x->value.dim(0);
    const int D = x->value.dim(1);
    const int Dout = w->value.dim(0);
    check_shape(w->value.dim(1) == D, "linear: dimension mismatch, input " +
                                          x->value.shape_str() + " weight " +
                                          w->value.shape_str());
    check_shape(b->value.ndim() == 1 && b->value.dim(0) == Dout, "linear: bias must be [Dout]");

    Tensor y({N, Dout});
    {
        ECMap X(x->value.data(), N, D);
        ECMap W(w->value.data(), Dout, D);
        EMap Y(y.data(), N, Dout);
        Y.noalias() = X * W.transpose();
        for (int n = 0; n < N; ++n)
            for (int j = 0; j < Dout; ++j) Y(n, j) += b->value[j];
    }
    return make_op(std::move(y), {x, w, b}, [N, D, Dout](Node& self) {
        Node& px = *self.parents[0];
        Node& pw = *self.parents[1];
        Node& pb = *self.parents[2];
        ECMap dY(self.grad.data(), N, Dout);
        if (px.requires_grad) {
            ECMap W(pw.value.data(), Dout, D);
            EMap gX(px.ensure_grad().data(), N, D);
            gX.noalias() += dY * W;
        }
        if (pw.requires_grad) {
            ECMap X(px.value.data(), N, D);
            EMap gW(pw.ensure_grad().data(), Dout, D);
            gW.noalias() += dY.transpose() * X;
        }
        if (pb.requires_grad) {
            Tensor& gb = pb.ensure_grad();
            for (int n = 0; n < N; ++n)
                for (int j = 0; j < Dout; ++j) gb[j] += dY(n, j);
        }
    });
}

Var upsample_nearest2(const Var& x) {
    check_shape(x->value.ndim() == 4, "upsample_nearest2: expected NCHW");
    const int N = x->value.dim(0), C = x->value.dim(1), H = x->value.dim(2), W = x->value.dim(3);
    Tensor y({N, C, 2 * H, 2 * W});
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c)
            for (int h = 0; h < 2 * H; ++h)
                for (int w = 0; w < 2 * W; ++w)
                    y.at4(n, c, h, w) = x->value.at4(n, c, h / 2, w / 2);
    return make_op(std::move(y), {x}, [N, C, H, W](Node& self) {
        Node& p = *self.parents[0];
        if (!p.requires_grad) return;
        Tensor& g = p.ensure_grad();
        for (int n = 0; n < N; ++n)
            for (int c = 0; c < C; ++c)
                for (int h = 0; h < 2 * H; ++h)
                    for (int w = 0; w < 2 * W; ++w)
                        g.at4(n, c, h / 2, w / 2) += self.grad.at4(n, c, h, w);
    });
}

Var concat_ch(const Var& a, const Var& b) {
    check_shape(a->value.ndim() == 4 && b->value.ndim() == 4, "concat_ch: expected NCHW");
    check_shape(a->value.dim(0) == b->value.dim(0) && a->value.dim(2) == b->value.dim(2) &&
                    a->value.dim(3) == b->value.dim(3),
                "concat_ch: shape mismatch " + a->value.shape_str() + " vs " +
                    b->value.shape_str());
    const int N = a->value.dim(0), Ca = a->value.dim(1), Cb = b->value.dim(1);
    const int H = a->value.dim(2), W = a->value.dim(3);
    const int64_t plane = static_cast<int64_t>(H) * W;
    Tensor y({N, Ca + Cb, H, W});
    for (int n = 0; n < N; ++n) {
        std::copy(a->value.data() + n * Ca * plane, a->value.data() + (n + 1) * Ca * plane,
                  y.data() + n * (Ca + Cb) * plane);
        std::copy(b->value.data() + n * Cb * plane, b->value.data() + (n + 1) * Cb * plane,
                  y.data() + n * (Ca + Cb) * plane + Ca * plane);
    }
    return make_op(std::move(y), {a, b}, [N, Ca, Cb, plane](Node& self) {
        Node& pa = *self.parents[0];
        Node& pb = *self.parents[1];
        for (int n = 0; n < N; ++n) {
            const real* dy = self.grad.data() + n * (Ca + Cb) * plane;
            if (pa.requires_grad) {
                real* g = pa.ensure_grad().data() + n * Ca * plane;
                for (int64_t i = 0; i < Ca * plane; ++i) g[i] += dy[i];
            }
            if (pb.requires_grad) {
                real* g = pb.ensure_grad().data() + n * Cb * plane;
                for (int64_t i = 0; i < Cb * plane; ++i) g[i] += dy[Ca * plane + i];
            }
        }
    });
}

Var slice_ch(const Var& x, int from, int to) {
    check_shape(x->value.ndim() == 4, "slice_ch: expected NCHW");
    const int N = x->value.dim(0), C = x->value.dim(1), H = x->value.dim(2), W = x->value.dim(3);
    check_shape(0 <= from && from < to && to <= C, "slice_ch: bad channel range");
    const int Cs = to - from;
    const int64_t plane = static_cast<int64_t>(H) * W;
    Tensor y({N, Cs, H, W});
    for (int n = 0; n < N; ++n)
        std::copy(x->value.data() + (n * C + from) * plane,
                  x->value.data() + (n * C + to) * plane, y.data() + n * Cs * plane);
    return make_op(std::move(y), {x}, [N, C, from, Cs, plane](Node& self) {
        Node& p = *self.parents[0];
        if (!p.requires_grad) return;
        Tensor& g = p.ensure_grad();
        for (int n = 0; n < N; ++n) {
            real* gp = g.data() + (static_cast<int64_t>(n) * C + from) * plane;
            const real* dy = self.grad.data() + static_cast<int64_t>(n) * Cs * plane;
            for (int64_t i = 0; i < Cs * plane; ++i) gp[i] += dy[i];
        }
    });
}

Var group_standardize(const Var& x, int groups, real eps) {
    check_shape(x->value.ndim() == 4, "group_standardize: expected NCHW");
    const int N = x->value.dim(0), C = x->value.dim(1), H = x->value.dim(2), W = x->value.dim(3);
    check_shape(groups >= 1 && C % groups == 0,
                "group_standardize: groups must divide channels");
    const int64_t gsize = static_cast<int64_t>(C / groups) * H * W;
    Tensor y(x->value.shape());
    RealVec rstd(static_cast<size_t>(N) * groups);
    for (int n = 0; n < N; ++n) {
        for (int g = 0; g < groups; ++g) {
            const int64_t off = (static_cast<int64_t>(n) * groups + g) * gsize;
            real mean = 0.0;
            for (int64_t i = 0; i < gsize; ++i) mean += x->value[off + i];
            mean /= static_cast<real>(gsize);
            real var = 0.0;
            for (int64_t i = 0; i < gsize; ++i) {
                const real d = x->value[off + i] - mean;
                var += d * d;
            }
            var /= static_cast<real>(gsize);
            const real rs = 1.0 / std::sqrt(var + eps);
            rstd[static_cast<size_t>(n) * groups + g] = rs;
            for (int64_t i = 0; i < gsize; ++i) y[off + i] = (x->value[off + i] - mean) * rs;
        }
    }
    return make_op(std::move(y), {x}, [N, groups, gsize, rstd](Node& self) {
        Node& p = *self.parents[0];
        if (!p.requires_grad) return;
        Tensor& g = p.ensure_grad();
        for (int n = 0; n < N; ++n) {
            for (int gi = 0; gi < groups; ++gi) {
                const int64_t off = (static_cast<int64_t>(n) * groups + gi) * gsize;
                real m1 = 0.0, m2 = 0.0;
                for (int64_t i = 0; i < gsize; ++i) {
                    m1 += self.grad[off + i];
                    m2 += self.grad[off + i] * self.value[off + i];
                }
                m1 /= static_cast<real>(gsize);
                m2 /= static_cast<real>(gsize);
                const real rs = rstd[static_cast<size_t>(n) * groups + gi];
                for (int64_t i = 0; i < gsize; ++i)
                    g[off + i] +=
                        rs * (self.grad[off + i] - m1 - self.value[off + i] * m2);
            }
        }
    });
}

Var channel_affine(const Var& x, const Var& gamma, const Var& beta) {
    check_shape(x->value.ndim() == 4, "channel_affine: expected NCHW");
    const int N = x->value.dim(0), C = x->value.dim(1), H = x->value.dim(2), W = x->value.dim(3);
    check_shape(gamma->value.ndim() == 1 && gamma->value.dim(0) == C &&
                    beta->value.ndim() == 1 && beta->value.dim(0) == C,
                "channel_affine: gamma/beta must be [C]");
    const int64_t plane = static_cast<int64_t>(H) * W;
    Tensor y(x->value.shape());
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) {
            const int64_t off = (static_cast<int64_t>(n) * C + c) * plane;
            const real gm = gamma->value[c], bt = beta->value[c];
            for (int64_t i = 0; i < plane; ++i) y[off + i] = x->value[off + i] * gm + bt;
        }
    return make_op(std::move(y), {x, gamma, beta}, [N, C, plane](Node& self) {
        Node& px = *self.parents[0];
        Node& pg = *self.parents[1];
        Node& pbta = *self.parents[2];
        for (int n = 0; n < N; ++n)
            for (int c = 0; c < C; ++c) {
                const int64_t off = (static_cast<int64_t>(n) * C + c) * plane;
                if (px.requires_grad) {
                    Tensor& g = px.ensure_grad();
                    const real gm = pg.value[c];
                    for (int64_t i = 0; i < plane; ++i) g[off + i] += self.grad[off + i] * gm;
                }
                if (pg.requires_grad) {
                    real s = 0.0;
                    for (int64_t i = 0; i < plane; ++i)
                        s += self.grad[off + i] * px.value[off + i];
                    pg.ensure_grad()[c] += s;
                }
                if (pbta.requires_grad) {
                    real s = 0.0;
                    for (int64_t i = 0; i < plane; ++i) s += self.grad[off + i];
                    pbta.ensure_grad()[c] += s;
                }
            }
    });
}

Var add_rowvec(const Var& x, const Var& v) {
    check_shape(x->value.ndim() == 4, "add_rowvec: expected NCHW");
    const int N = x->value.dim(0), C = x->value.dim(1), H = x->value.dim(2), W = x->value.dim(3);
    check_shape(v->value.ndim() == 2 && v->value.dim(0) == N && v->value.dim(1) == C,
                "add_rowvec: vector must be [N,C], got " + v->value.shape_str());
    const int64_t plane = static_cast<int64_t>(H) * W;
    Tensor y(x->value.shape());
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) {
            const int64_t off = (static_cast<int64_t>(n) * C + c) * plane;
            const real b = v->value[static_cast<int64_t>(n) * C + c];
            for (int64_t i = 0; i < plane; ++i) y[off + i] = x->value[off + i] + b;
        }
    return make_op(std::move(y), {x, v}, [N, C, plane](Node& self) {
        Node& px = *self.parents[0];
        Node& pv = *self.parents[1];
        if (px.requires_grad) accumulate(px, self.grad);
        if (pv.requires_grad) {
            Tensor& g = pv.ensure_grad();
            for (int n = 0; n < N; ++n)
                for (int c = 0; c < C; ++c) {
                    const int64_t off = (static_cast<int64_t>(n) * C + c) * plane;
                    real s = 0.0;
                    for (int64_t i = 0; i < plane; ++i) s += self.grad[off + i];
                    g[static_cast<int64_t>(n) * C + c] += s;
                }
        }
    });
}

Var attention_single_head(const Var& q, const Var& k, const Var& v) {
    check_shape(q->value.ndim() == 4, "attention: expected NCHW");
    check_shape(q->value.same_shape(k->value) && q->value.same_shape(v->value),
                "attention: q/k/v shape mismatch");
    const int N = q->value.dim(0), C = q->value.dim(1);
    const int64_t L = static_cast<int64_t>(q->value.dim(2)) * q->value.dim(3);
    const real sc = 1.0 / std::sqrt(static_cast<real>(C));

    Tensor y(q->value.shape());
    RealVec attn(static_cast<size_t>(N) * L * L);
    for (int n = 0; n < N; ++n) {
        const int64_t off = static_cast<int64_t>(n) * C * L;
        ECMap Q(q->value.data() + off, C, L);
        ECMap K(k->value.data() + off, C, L);
        ECMap V(v->value.data() + off, C, L);
        EMap A(attn.data() + static_cast<int64_t>(n) * L * L, L, L);
        A.noalias() = (Q.transpose() * K) * sc;
        for (int64_t i = 0; i < L; ++i) {
            const real mx = A.row(i).maxCoeff();
            A.row(i) = (A.row(i).array() - mx).exp();
            A.row(i) /= A.row(i).sum();
        }
        EMap Y(y.data() + off, C, L);
        Y.noalias() = V * A.transpose();
    }
    return make_op(std::move(y), {q, k, v}, [N, C, L, sc, attn](Node& self) {
        Node& pq = *self.parents[0];
        Node& pk = *self.parents[1];
        Node& pv = *self.parents[2];
        EMat dA(L, L), dS(L, L);
        for (int n = 0; n < N; ++n) {
            const int64_t off = static_cast<int64_t>(n) * C * L;
            ECMap dY(self.grad.data() + off, C, L);
            ECMap A(attn.data() + static_cast<int64_t>(n) * L * L, L, L);
            ECMap Q(pq.value.data() + off, C, L);
            ECMap K(pk.value.data() + off, C, L);
            ECMap V(pv.value.data() + off, C, L);
            if (pv.requires_grad) {
                EMap gV(pv.ensure_grad().data() + off, C, L);
                gV.noalias() += dY * A;
            }
            if (!pq.requires_grad && !pk.requires_grad) continue;
            dA.noalias() = dY.transpose() * V;
            for (int64_t i = 0; i < L; ++i) {
                const real dot = (dA.row(i).array() * A.row(i).array()).sum();
                dS.row(i) = A.row(i).array() * (dA.row(i).array() - dot);
            }
            if (pq.requires_grad) {
                EMap gQ(pq.ensure_grad().data() + off, C, L);
                gQ.noalias() += (K * dS.transpose()) * sc;
            }
            if (pk.requires_grad) {
                EMap gK(pk.ensure_grad().data() + off, C, L);
                gK.noalias() += (Q * dS) * sc;
            }
        }
    });
}

}  // namespace vseg
