#include "kcascade/ops.hpp"

#include <cblas.h>

#include <cstring>

namespace kcascade {

namespace {

struct ConvDims {
    int b, ci, co;
    int X, Y, T;     // spatial (T = 1 in 2D mode)
    int kx, ky, kt;  // kernel
    std::int64_t P() const { return static_cast<std::int64_t>(X) * Y * T; }
    std::int64_t Ck() const { return static_cast<std::int64_t>(ci) * kx * ky * kt; }
};

ConvDims conv_dims(const Tensor& input, const Tensor& kernel, const Tensor& bias) {
    const int nd = input.ndim();
    if (nd != 4 && nd != 5)
        throw std::invalid_argument("conv: input must be 4D or 5D, got " +
                                    input.shape_str());
    if (kernel.ndim() != nd)
        throw std::invalid_argument("conv: kernel rank " + kernel.shape_str() +
                                    " does not match input " + input.shape_str());
    ConvDims d;
    d.b = input.dim(0);
    d.ci = input.dim(1);
    d.X = input.dim(2);
    d.Y = input.dim(3);
    d.T = nd == 5 ? input.dim(4) : 1;
    d.co = kernel.dim(0);
    d.kx = kernel.dim(2);
    d.ky = kernel.dim(3);
    d.kt = nd == 5 ? kernel.dim(4) : 1;
    if (kernel.dim(1) != d.ci)
        throw std::invalid_argument("conv: kernel expects " +
                                    std::to_string(kernel.dim(1)) +
                                    " input channels, input has " +
                                    std::to_string(d.ci));
    if (d.kx % 2 == 0 || d.ky % 2 == 0 || d.kt % 2 == 0)
        throw std::invalid_argument("conv: kernel dims must be odd, got " +
                                    kernel.shape_str());
    if (bias.ndim() != 1 || bias.dim(0) != d.co)
        throw std::invalid_argument("conv: bias must be [" + std::to_string(d.co) +
                                    "], got " + bias.shape_str());
    return d;
}

// col is [Ck x P], P-major rows; position p = (x*Y + y)*T + t.
void im2col(const ConvDims& d, const real_t* in, real_t* col) {
    const int ox = d.kx / 2, oy = d.ky / 2, ot = d.kt / 2;
    const std::int64_t P = d.P();
    for (int ci = 0; ci < d.ci; ++ci) {
        const real_t* src_c = in + static_cast<std::int64_t>(ci) * P;
        for (int dx = 0; dx < d.kx; ++dx)
            for (int dy = 0; dy < d.ky; ++dy)
                for (int dt = 0; dt < d.kt; ++dt) {
                    real_t* row =
                        col + ((static_cast<std::int64_t>(ci) * d.kx + dx) * d.ky + dy) *
                                  d.kt * P +
                        static_cast<std::int64_t>(dt) * P;
                    const int sx = dx - ox, sy = dy - oy, st = dt - ot;
                    for (int x = 0; x < d.X; ++x) {
                        const int xs = x + sx;
                        real_t* rx = row + static_cast<std::int64_t>(x) * d.Y * d.T;
                        if (xs < 0 || xs >= d.X) {
                            std::memset(rx, 0, sizeof(real_t) * d.Y * d.T);
                            continue;
                        }
                        for (int y = 0; y < d.Y; ++y) {
                            const int ys = y + sy;
                            real_t* rt = rx + static_cast<std::int64_t>(y) * d.T;
                            if (ys < 0 || ys >= d.Y) {
                                std::memset(rt, 0, sizeof(real_t) * d.T);
                                continue;
                            }
                            const real_t* s =
                                src_c + (static_cast<std::int64_t>(xs) * d.Y + ys) * d.T;
                            const int t0 = std::max(0, -st);
                            const int t1 = std::min(d.T, d.T - st);
                            if (t0 > 0) std::memset(rt, 0, sizeof(real_t) * t0);
                            if (t1 > t0)
                                std::memcpy(rt + t0, s + t0 + st,
                                            sizeof(real_t) * (t1 - t0));
                            if (t1 < d.T)
                                std::memset(rt + t1, 0, sizeof(real_t) * (d.T - t1));
                        }
                    }
                }
    }
}

// Adjoint of im2col: scatter-add col back into the input layout.
void col2im(const ConvDims& d, const real_t* col, real_t* in) {
    const int ox = d.kx / 2, oy = d.ky / 2, ot = d.kt / 2;
    const std::int64_t P = d.P();
    for (int ci = 0; ci < d.ci; ++ci) {
        real_t* dst_c = in + static_cast<std::int64_t>(ci) * P;
        for (int dx = 0; dx < d.kx; ++dx)
            for (int dy = 0; dy < d.ky; ++dy)
                for (int dt = 0; dt < d.kt; ++dt) {
                    const real_t* row =
                        col + ((static_cast<std::int64_t>(ci) * d.kx + dx) * d.ky + dy) *
                                  d.kt * P +
                        static_cast<std::int64_t>(dt) * P;
                    const int sx = dx - ox, sy = dy - oy, st = dt - ot;
                    for (int x = 0; x < d.X; ++x) {
                        const int xs = x + sx;
                        if (xs < 0 || xs >= d.X) continue;
                        const real_t* rx = row + static_cast<std::int64_t>(x) * d.Y * d.T;
                        for (int y = 0; y < d.Y; ++y) {
                            const int ys = y + sy;
                            if (ys < 0 || ys >= d.Y) continue;
                            const real_t* rt = rx + static_cast<std::int64_t>(y) * d.T;
                            real_t* s =
                                dst_c + (static_cast<std::int64_t>(xs) * d.Y + ys) * d.T;
                            const int t0 = std::max(0, -st);
                            const int t1 = std::min(d.T, d.T - st);
                            for (int t = t0; t < t1; ++t) s[t + st] += rt[t];
                        }
                    }
                }
    }
}

void gemm(bool ta, bool tb, int m, int n, int k, const real_t* A, int lda,
          const real_t* B, int ldb, real_t beta, real_t* C, int ldc) {
    cblas_dgemm(CblasRowMajor, ta ? CblasTrans : CblasNoTrans,
                tb ? CblasTrans : CblasNoTrans, m, n, k, 1.0, A, lda, B, ldb, beta,
                C, ldc);
}

}  // namespace

Tensor conv_value(const Tensor& input, const Tensor& kernel, const Tensor& bias) {
    const ConvDims d = conv_dims(input, kernel, bias);
    Tensor out(input.ndim() == 5
                   ? std::vector<int>{d.b, d.co, d.X, d.Y, d.T}
                   : std::vector<int>{d.b, d.co, d.X, d.Y});
    const std::int64_t P = d.P(), Ck = d.Ck();
    std::vector<real_t> col(static_cast<std::size_t>(Ck * P));
    for (int b = 0; b < d.b; ++b) {
        const real_t* in = input.data() + static_cast<std::int64_t>(b) * d.ci * P;
        real_t* o = out.data() + static_cast<std::int64_t>(b) * d.co * P;
        im2col(d, in, col.data());
        gemm(false, false, d.co, static_cast<int>(P), static_cast<int>(Ck),
             kernel.data(), static_cast<int>(Ck), col.data(), static_cast<int>(P),
             0.0, o, static_cast<int>(P));
        for (int c = 0; c < d.co; ++c) {
            const real_t bv = bias[c];
            real_t* oc = o + static_cast<std::int64_t>(c) * P;
            for (std::int64_t p = 0; p < P; ++p) oc[p] += bv;
        }
    }
    return out;
}

Var conv(Tape& tape, Var input, Var kernel, Var bias) {
    Tensor out = conv_value(tape.value(input), tape.value(kernel), tape.value(bias));
    const int in_id = input.id, k_id = kernel.id, b_id = bias.id;
    return tape.record(
        std::move(out), {in_id, k_id, b_id}, [=](Tape& t, int node) {
            const Tensor& g_out = t.grad(Var{node});
            const Tensor& in = t.value(Var{in_id});
            const Tensor& w = t.value(Var{k_id});
            const Tensor& bv = t.value(Var{b_id});
            const ConvDims d = conv_dims(in, w, bv);
            const std::int64_t P = d.P(), Ck = d.Ck();
            const bool want_in = t.needs_grad(Var{in_id});
            const bool want_w = t.needs_grad(Var{k_id});
            const bool want_b = t.needs_grad(Var{b_id});
            Tensor g_in(in.shape()), g_w(w.shape()), g_b(bv.shape());
            std::vector<real_t> col(static_cast<std::size_t>(Ck * P));
            std::vector<real_t> colg;
            if (want_in) colg.resize(static_cast<std::size_t>(Ck * P));
            for (int b = 0; b < d.b; ++b) {
                const real_t* go =
                    g_out.data() + static_cast<std::int64_t>(b) * d.co * P;
                if (want_w) {
                    im2col(d, in.data() + static_cast<std::int64_t>(b) * d.ci * P,
                           col.data());
                    gemm(false, true, d.co, static_cast<int>(Ck), static_cast<int>(P),
                         go, static_cast<int>(P), col.data(), static_cast<int>(P),
                         1.0, g_w.data(), static_cast<int>(Ck));
                }
                if (want_b) {
                    for (int c = 0; c < d.co; ++c) {
                        const real_t* gc = go + static_cast<std::int64_t>(c) * P;
                        real_t s = 0;
                        for (std::int64_t p = 0; p < P; ++p) s += gc[p];
                        g_b[c] += s;
                    }
                }
                if (want_in) {
                    gemm(true, false, static_cast<int>(Ck), static_cast<int>(P), d.co,
                         w.data(), static_cast<int>(Ck), go, static_cast<int>(P),
                         0.0, colg.data(), static_cast<int>(P));
                    col2im(d, colg.data(),
                           g_in.data() + static_cast<std::int64_t>(b) * d.ci * P);
                }
            }
            if (want_in) t.accumulate(in_id, g_in);
            if (want_w) t.accumulate(k_id, g_w);
            if (want_b) t.accumulate(b_id, g_b);
        });
}

Var relu(Tape& tape, Var input) {
    const Tensor& in = tape.value(input);
    Tensor out(in.shape());
    for (std::int64_t i = 0; i < in.size(); ++i) out[i] = in[i] > 0 ? in[i] : 0;
    const int in_id = input.id;
    return tape.record(std::move(out), {in_id}, [=](Tape& t, int node) {
        const Tensor& g = t.grad(Var{node});
        const Tensor& x = t.value(Var{in_id});
        Tensor gx(x.shape());
        // subgradient at 0 is 0
        for (std::int64_t i = 0; i < x.size(); ++i) gx[i] = x[i] > 0 ? g[i] : 0;
        t.accumulate(in_id, gx);
    });
}

Var add(Tape& tape, Var a, Var b) {
    const Tensor& ta = tape.value(a);
    const Tensor& tb = tape.value(b);
    check_same_shape(ta, tb, "add");
    Tensor out(ta.shape());
    for (std::int64_t i = 0; i < ta.size(); ++i) out[i] = ta[i] + tb[i];
    const int a_id = a.id, b_id = b.id;
    return tape.record(std::move(out), {a_id, b_id}, [=](Tape& t, int node) {
        const Tensor& g = t.grad(Var{node});
        if (t.needs_grad(Var{a_id})) t.accumulate(a_id, g);
        if (t.needs_grad(Var{b_id})) t.accumulate(b_id, g);
    });
}

namespace {

std::int64_t channel_stride(const Tensor& t) {
    std::int64_t s = 1;
    for (int i = 2; i < t.ndim(); ++i) s *= t.dim(i);
    return s;
}

}  // namespace

Var slice_channels(Tape& tape, Var v, int c0, int c1) {
    const Tensor& in = tape.value(v);
    if (in.ndim() < 2 || c0 < 0 || c1 > in.dim(1) || c0 >= c1)
        throw std::invalid_argument("slice_channels: bad range for " + in.shape_str());
    std::vector<int> oshape = in.shape();
    oshape[1] = c1 - c0;
    Tensor out(oshape);
    const std::int64_t cs = channel_stride(in);
    const int B = in.dim(0), C = in.dim(1);
    for (int b = 0; b < B; ++b)
        for (int c = c0; c < c1; ++c)
            std::memcpy(out.data() + ((static_cast<std::int64_t>(b) * (c1 - c0)) + c - c0) * cs,
                        in.data() + ((static_cast<std::int64_t>(b) * C) + c) * cs,
                        sizeof(real_t) * static_cast<std::size_t>(cs));
    const int in_id = v.id;
    return tape.record(std::move(out), {in_id}, [=](Tape& t, int node) {
        const Tensor& g = t.grad(Var{node});
        const Tensor& x = t.value(Var{in_id});
        Tensor gx(x.shape());
        const std::int64_t s = channel_stride(x);
        const int nb = x.dim(0), nc = x.dim(1);
        for (int b = 0; b < nb; ++b)
            for (int c = c0; c < c1; ++c)
                std::memcpy(gx.data() + ((static_cast<std::int64_t>(b) * nc) + c) * s,
                            g.data() + ((static_cast<std::int64_t>(b) * (c1 - c0)) + c - c0) * s,
                            sizeof(real_t) * static_cast<std::size_t>(s));
        t.accumulate(in_id, gx);
    });
}

Var concat_channels(Tape& tape, const std::vector<Var>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_channels: no inputs");
    const Tensor& first = tape.value(parts[0]);
    std::vector<int> oshape = first.shape();
    int ctot = 0;
    for (Var p : parts) {
        const Tensor& t = tape.value(p);
        if (t.ndim() != first.ndim() || t.dim(0) != first.dim(0))
            throw std::invalid_argument("concat_channels: rank/batch mismatch");
        for (int i = 2; i < t.ndim(); ++i)
            if (t.dim(i) != first.dim(i))
                throw std::invalid_argument("concat_channels: spatial mismatch");
        ctot += t.dim(1);
    }
    oshape[1] = ctot;
    Tensor out(oshape);
    const std::int64_t cs = channel_stride(first);
    const int B = first.dim(0);
    std::vector<int> ids;
    std::vector<int> offsets;
    int off = 0;
    for (Var p : parts) {
        const Tensor& t = tape.value(p);
        for (int b = 0; b < B; ++b)
            std::memcpy(out.data() + ((static_cast<std::int64_t>(b) * ctot) + off) * cs,
                        t.data() + static_cast<std::int64_t>(b) * t.dim(1) * cs,
                        sizeof(real_t) * static_cast<std::size_t>(t.dim(1) * cs));
        ids.push_back(p.id);
        offsets.push_back(off);
        off += t.dim(1);
    }
    return tape.record(std::move(out), ids, [=](Tape& t, int node) {
        const Tensor& g = t.grad(Var{node});
        for (std::size_t i = 0; i < ids.size(); ++i) {
            if (!t.needs_grad(Var{ids[i]})) continue;
            const Tensor& x = t.value(Var{ids[i]});
            Tensor gx(x.shape());
            const std::int64_t s = channel_stride(x);
            for (int b = 0; b < B; ++b)
                std::memcpy(gx.data() + static_cast<std::int64_t>(b) * x.dim(1) * s,
                            g.data() + ((static_cast<std::int64_t>(b) * ctot) + offsets[i]) * s,
                            sizeof(real_t) * static_cast<std::size_t>(x.dim(1) * s));
            t.accumulate(ids[i], gx);
        }
    });
}

Var sum(Tape& tape, Var v) {
    const Tensor& in = tape.value(v);
    real_t s = 0;
    for (real_t x : in.values()) s += x;
    const int in_id = v.id;
    return tape.record(Tensor::scalar(s), {in_id}, [=](Tape& t, int node) {
        const real_t g = t.grad(Var{node})[0];
        Tensor gx(t.value(Var{in_id}).shape(), g);
        t.accumulate(in_id, gx);
    });
}

Var mse_loss(Tape& tape, Var pred, Var target, Reduction red) {
    const Tensor& p = tape.value(pred);
    const Tensor& tg = tape.value(target);
    check_same_shape(p, tg, "mse_loss");
    real_t s = 0;
    for (std::int64_t i = 0; i < p.size(); ++i) {
        const real_t d = p[i] - tg[i];
        s += d * d;
    }
    const real_t denom = red == Reduction::Mean ? static_cast<real_t>(p.size()) : 1.0;
    const int p_id = pred.id, t_id = target.id;
    return tape.record(Tensor::scalar(s / denom), {p_id, t_id},
                       [=](Tape& t, int node) {
                           const real_t g = t.grad(Var{node})[0];
                           const Tensor& pv = t.value(Var{p_id});
                           const Tensor& tv = t.value(Var{t_id});
                           Tensor gp(pv.shape());
                           for (std::int64_t i = 0; i < pv.size(); ++i)
                               gp[i] = g * 2.0 * (pv[i] - tv[i]) / denom;
                           if (t.needs_grad(Var{p_id})) t.accumulate(p_id, gp);
                           if (t.needs_grad(Var{t_id})) {
                               for (std::int64_t i = 0; i < gp.size(); ++i)
                                   gp[i] = -gp[i];
                               t.accumulate(t_id, gp);
                           }
                       });
}

Var scale(Tape& tape, Var v, real_t c) {
    const Tensor& in = tape.value(v);
    Tensor out(in.shape());
    for (std::int64_t i = 0; i < in.size(); ++i) out[i] = c * in[i];
    const int in_id = v.id;
    return tape.record(std::move(out), {in_id}, [=](Tape& t, int node) {
        const Tensor& g = t.grad(Var{node});
        Tensor gx(g.shape());
        for (std::int64_t i = 0; i < g.size(); ++i) gx[i] = c * g[i];
        t.accumulate(in_id, gx);
    });
}

}  // namespace kcascade
