#include "kcascade/layers.hpp"

#include <cmath>

namespace kcascade {

namespace {

struct SeqDims {
    int b, nx, ny, nt;
};

SeqDims image_dims(const Tensor& t) {
    if (t.ndim() == 5 && t.dim(1) == 2)
        return {t.dim(0), t.dim(2), t.dim(3), t.dim(4)};
    if (t.ndim() == 4 && t.dim(0) == 2) return {1, t.dim(1), t.dim(2), t.dim(3)};
    throw std::invalid_argument("expected [b,2,nx,ny,nt] or [2,nx,ny,nt], got " +
                                t.shape_str());
}

// Index into a [b,2,nx,ny,nt] tensor.
inline std::int64_t at(const SeqDims& d, int b, int c, int x, int y, int t) {
    return ((((static_cast<std::int64_t>(b) * 2) + c) * d.nx + x) * d.ny + y) *
               d.nt +
           t;
}

std::vector<int> window_frames(int t, int n_adj, int n_t, DsBoundary boundary) {
    std::vector<int> out;
    out.reserve(static_cast<std::size_t>(2 * n_adj + 1));
    for (int dt = -n_adj; dt <= n_adj; ++dt) {
        int f = t + dt;
        if (boundary == DsBoundary::Clamp) {
            if (f < 0 || f >= n_t) continue;
        } else {
            while (f < 0 || f >= n_t) {
                if (f < 0) f = -f - 1;
                if (f >= n_t) f = 2 * n_t - 1 - f;
            }
        }
        out.push_back(f);
    }
    return out;
}

void check_mask(const SeqDims& d, const SamplingMask& mask) {
    if (mask.n_y != d.ny || mask.n_t != d.nt)
        throw std::invalid_argument("mask dims (" + std::to_string(mask.n_y) +
                                    "," + std::to_string(mask.n_t) +
                                    ") do not match sequence");
}

// Soft DC applied in place to k-space s (5D), with s0 broadcast over batch.
void apply_dc_kspace(Tensor& s, const Tensor& s0, const SamplingMask& mask,
                     DcMode mode, real_t lambda) {
    const SeqDims d = image_dims(s);
    const SeqDims d0 = image_dims(s0);
    const real_t lam_frac = lambda / (1.0 + lambda);
    const real_t lam_inv = 1.0 / (1.0 + lambda);
    for (int b = 0; b < d.b; ++b)
        for (int t = 0; t < d.nt; ++t)
            for (int ky = 0; ky < d.ny; ++ky) {
                if (!mask.acquired(ky, t)) continue;
                for (int c = 0; c < 2; ++c)
                    for (int kx = 0; kx < d.nx; ++kx) {
                        real_t& v = s[at(d, b, c, kx, ky, t)];
                        const real_t m = s0[at(d0, 0, c, kx, ky, t)];
                        v = mode == DcMode::Hard ? m : lam_inv * v + lam_frac * m;
                    }
            }
}

}  // namespace

void CnnBlock::init_he(std::mt19937_64& rng) {
    if (n_d < 2) throw std::invalid_argument("CnnBlock: n_d must be >= 2");
    weights.clear();
    biases.clear();
    for (int i = 0; i < n_d; ++i) {
        const int ci = i == 0 ? in_channels : n_f;
        const int co = i == n_d - 1 ? 2 : n_f;
        const int fan_in = ci * k * k * k_t;
        weights.push_back(Tensor::randn(
            {co, ci, k, k, k_t}, rng, std::sqrt(2.0 / static_cast<real_t>(fan_in))));
        biases.push_back(Tensor({co}));
        weights.back().requires_grad = true;
        biases.back().requires_grad = true;
    }
}

std::int64_t CnnBlock::param_count() const {
    std::int64_t n = 0;
    for (int i = 0; i < n_d; ++i) {
        const int ci = i == 0 ? in_channels : n_f;
        const int co = i == n_d - 1 ? 2 : n_f;
        n += (static_cast<std::int64_t>(ci) * k * k * k_t + 1) * co;
    }
    return n;
}

CnnBlockVars bind_block(Tape& tape, CnnBlock& block) {
    CnnBlockVars vars;
    for (int i = 0; i < block.n_d; ++i) {
        vars.weights.push_back(tape.leaf(block.weights[static_cast<std::size_t>(i)]));
        vars.biases.push_back(tape.leaf(block.biases[static_cast<std::size_t>(i)]));
    }
    return vars;
}

Var cnn_forward(Tape& tape, const CnnBlock& block, const CnnBlockVars& vars,
                Var x_in) {
    const Tensor& xv = tape.value(x_in);
    if (xv.dim(1) != block.in_channels)
        throw std::invalid_argument("cnn_forward: expected " +
                                    std::to_string(block.in_channels) +
                                    " input channels, got " + xv.shape_str());
    Var h = x_in;
    for (int i = 0; i < block.n_d - 1; ++i)
        h = relu(tape, conv(tape, h, vars.weights[static_cast<std::size_t>(i)],
                            vars.biases[static_cast<std::size_t>(i)]));
    Var out = conv(tape, h, vars.weights.back(), vars.biases.back());
    Var res = block.in_channels == 2 ? x_in : slice_channels(tape, x_in, 0, 2);
    return add(tape, out, res);
}

Var dc_layer(Tape& tape, Var x, const Tensor& s0, const SamplingMask& mask,
             DcMode mode, Var lambda) {
    const SeqDims d = image_dims(tape.value(x));
    check_mask(d, mask);
    if (mode == DcMode::Soft && !lambda.valid())
        throw std::invalid_argument("dc_layer: soft mode needs a lambda node");
    real_t lam = 0;
    if (mode == DcMode::Soft) {
        lam = tape.value(lambda)[0];
        if (lam < 0) throw std::invalid_argument("dc_layer: negative lambda");
    }

    Tensor s = dft2_tensor(tape.value(x), false);
    apply_dc_kspace(s, s0, mask, mode, lam);
    Tensor out = dft2_tensor(s, true);

    const int x_id = x.id, lam_id = lambda.id;
    std::vector<int> inputs{x_id};
    if (mode == DcMode::Soft) inputs.push_back(lam_id);
    SamplingMask mask_copy = mask;
    Tensor s0_copy = s0;
    return tape.record(
        std::move(out), std::move(inputs),
        [=, mask = std::move(mask_copy), s0 = std::move(s0_copy)](Tape& t, int node) {
            const Tensor& g_out = t.grad(Var{node});
            Tensor gs = dft2_tensor(g_out, false);
            const SeqDims gd = image_dims(gs);
            // lambda gradient needs the unattenuated upstream in k-space
            if (mode == DcMode::Soft && lam_id >= 0 && t.needs_grad(Var{lam_id})) {
                Tensor s_cnn = dft2_tensor(t.value(Var{x_id}), false);
                const SeqDims d0 = image_dims(s0);
                const real_t denom = (1.0 + lam) * (1.0 + lam);
                real_t acc = 0;
                for (int b = 0; b < gd.b; ++b)
                    for (int tt = 0; tt < gd.nt; ++tt)
                        for (int ky = 0; ky < gd.ny; ++ky) {
                            if (!mask.acquired(ky, tt)) continue;
                            for (int c = 0; c < 2; ++c)
                                for (int kx = 0; kx < gd.nx; ++kx)
                                    acc += gs[at(gd, b, c, kx, ky, tt)] *
                                           (s0[at(d0, 0, c, kx, ky, tt)] -
                                            s_cnn[at(gd, b, c, kx, ky, tt)]) /
                                           denom;
                        }
                t.accumulate(lam_id, Tensor({1}, acc));
            }
            if (t.needs_grad(Var{x_id})) {
                const real_t lam_inv =
                    mode == DcMode::Hard ? 0.0 : 1.0 / (1.0 + lam);
                for (int b = 0; b < gd.b; ++b)
                    for (int tt = 0; tt < gd.nt; ++tt)
                        for (int ky = 0; ky < gd.ny; ++ky) {
                            if (!mask.acquired(ky, tt)) continue;
                            for (int c = 0; c < 2; ++c)
                                for (int kx = 0; kx < gd.nx; ++kx)
                                    gs[at(gd, b, c, kx, ky, tt)] *= lam_inv;
                        }
                t.accumulate(x_id, dft2_tensor(gs, true));
            }
        });
}

ComplexSequence dc_forward(const ComplexSequence& x, const ComplexSequence& s0,
                           const SamplingMask& mask,
                           std::optional<real_t> lambda) {
    if (lambda && *lambda < 0)
        throw std::invalid_argument("dc_forward: negative lambda");
    check_mask({1, x.n_x, x.n_y, x.n_t}, mask);
    Tensor s = dft2_tensor(x.values, false);
    apply_dc_kspace(s, s0.values, mask, lambda ? DcMode::Soft : DcMode::Hard,
                    lambda.value_or(0));
    return ComplexSequence(dft2_tensor(s, true));
}

ComplexSequence dc_backward(const ComplexSequence& upstream,
                            const SamplingMask& mask,
                            std::optional<real_t> lambda) {
    Tensor gs = dft2_tensor(upstream.values, false);
    const SeqDims d = image_dims(gs);
    check_mask(d, mask);
    const real_t lam_inv = lambda ? 1.0 / (1.0 + *lambda) : 0.0;
    for (int t = 0; t < d.nt; ++t)
        for (int ky = 0; ky < d.ny; ++ky) {
            if (!mask.acquired(ky, t)) continue;
            for (int c = 0; c < 2; ++c)
                for (int kx = 0; kx < d.nx; ++kx)
                    gs[at(d, 0, c, kx, ky, t)] *= lam_inv;
        }
    return ComplexSequence(dft2_tensor(gs, true));
}

real_t dc_lambda_grad(const ComplexSequence& s_cnn, const ComplexSequence& s0,
                      const SamplingMask& mask, real_t lambda,
                      const ComplexSequence& upstream) {
    if (lambda < 0) throw std::invalid_argument("dc_lambda_grad: negative lambda");
    Tensor gs = dft2_tensor(upstream.values, false);
    const SeqDims d = image_dims(gs);
    check_mask(d, mask);
    const real_t denom = (1.0 + lambda) * (1.0 + lambda);
    real_t acc = 0;
    for (int t = 0; t < d.nt; ++t)
        for (int ky = 0; ky < d.ny; ++ky) {
            if (!mask.acquired(ky, t)) continue;
            for (int c = 0; c < 2; ++c)
                for (int kx = 0; kx < d.nx; ++kx) {
                    const auto i = at(d, 0, c, kx, ky, t);
                    acc += gs[i] * (s0.values[i] - s_cnn.values[i]) / denom;
                }
        }
    return acc;
}

ComplexSequence data_share(const ComplexSequence& s, const SamplingMask& mask,
                           int n_adj, DsBoundary boundary) {
    if (n_adj < 0 || n_adj > 5)
        throw std::invalid_argument("data_share: n_adj must be in [0,5]");
    check_mask({1, s.n_x, s.n_y, s.n_t}, mask);
    ComplexSequence out = s;
    if (n_adj == 0 || s.n_t == 1) return out;
    for (int t = 0; t < s.n_t; ++t) {
        const std::vector<int> win = window_frames(t, n_adj, s.n_t, boundary);
        for (int ky = 0; ky < s.n_y; ++ky) {
            if (mask.acquired(ky, t)) continue;
            int count = 0;
            for (int f : win) count += mask.acquired(ky, f) ? 1 : 0;
            if (count == 0) continue;
            for (int kx = 0; kx < s.n_x; ++kx) {
                real_t ar = 0, ai = 0;
                for (int f : win) {
                    if (!mask.acquired(ky, f)) continue;
                    ar += s.re(kx, ky, f);
                    ai += s.im(kx, ky, f);
                }
                out.re(kx, ky, t) = ar / count;
                out.im(kx, ky, t) = ai / count;
            }
        }
    }
    return out;
}

namespace {

// Later-stage sharing: average all window entries, written off Omega only.
void share_all(const Tensor& s, const SamplingMask& mask, int n_adj,
               DsBoundary boundary, Tensor& out) {
    const SeqDims d = image_dims(s);
    out = s;
    if (n_adj == 0) return;
    for (int b = 0; b < d.b; ++b)
        for (int t = 0; t < d.nt; ++t) {
            const std::vector<int> win = window_frames(t, n_adj, d.nt, boundary);
            const real_t inv = 1.0 / static_cast<real_t>(win.size());
            for (int ky = 0; ky < d.ny; ++ky) {
                if (mask.acquired(ky, t)) continue;
                for (int c = 0; c < 2; ++c)
                    for (int kx = 0; kx < d.nx; ++kx) {
                        real_t acc = 0;
                        for (int f : win) acc += s[at(d, b, c, kx, ky, f)];
                        out[at(d, b, c, kx, ky, t)] = acc * inv;
                    }
            }
        }
}

// Adjoint of share_all.
void share_all_adjoint(const Tensor& g, const SamplingMask& mask, int n_adj,
                       DsBoundary boundary, Tensor& gs) {
    const SeqDims d = image_dims(g);
    if (n_adj == 0) {
        for (std::int64_t i = 0; i < g.size(); ++i) gs[i] += g[i];
        return;
    }
    for (int b = 0; b < d.b; ++b)
        for (int t = 0; t < d.nt; ++t) {
            const std::vector<int> win = window_frames(t, n_adj, d.nt, boundary);
            const real_t inv = 1.0 / static_cast<real_t>(win.size());
            for (int ky = 0; ky < d.ny; ++ky) {
                const bool acq = mask.acquired(ky, t);
                for (int c = 0; c < 2; ++c)
                    for (int kx = 0; kx < d.nx; ++kx) {
                        const real_t gv = g[at(d, b, c, kx, ky, t)];
                        if (acq) {
                            gs[at(d, b, c, kx, ky, t)] += gv;
                        } else {
                            for (int f : win)
                                gs[at(d, b, c, kx, ky, f)] += gv * inv;
                        }
                    }
            }
        }
}

constexpr int kDsImages = 6;  // n_adj = 0..5

}  // namespace

Tensor ds_layer_value(const Tensor& x_img, const Tensor& s0,
                      const SamplingMask& mask, DsStage stage,
                      DsBoundary boundary) {
    const SeqDims d = image_dims(x_img);
    check_mask(d, mask);
    Tensor out({d.b, 2 * kDsImages, d.nx, d.ny, d.nt});
    const std::int64_t plane = static_cast<std::int64_t>(2) * d.nx * d.ny * d.nt;

    auto write_pair = [&](int b, int m, const real_t* src) {
        std::copy_n(src, plane,
                    out.data() + (static_cast<std::int64_t>(b) * kDsImages + m) * plane);
    };

    if (stage == DsStage::First) {
        ComplexSequence s0_seq(s0);
        for (int b = 0; b < d.b; ++b)
            write_pair(b, 0, x_img.data() + static_cast<std::int64_t>(b) * plane);
        for (int m = 1; m < kDsImages; ++m) {
            ComplexSequence img = idft2(data_share(s0_seq, mask, m, boundary));
            for (int b = 0; b < d.b; ++b) write_pair(b, m, img.values.data());
        }
    } else {
        Tensor s = dft2_tensor(x_img, false);
        Tensor shared;
        for (int m = 0; m < kDsImages; ++m) {
            share_all(s, mask, m, boundary, shared);
            Tensor img = dft2_tensor(shared, true);
            for (int b = 0; b < d.b; ++b)
                write_pair(b, m, img.data() + static_cast<std::int64_t>(b) * plane);
        }
    }
    return out;
}

Var ds_layer(Tape& tape, Var x, const Tensor& s0, const SamplingMask& mask,
             DsStage stage, DsBoundary boundary) {
    Tensor out = ds_layer_value(tape.value(x), s0, mask, stage, boundary);
    const int x_id = x.id;
    SamplingMask mask_copy = mask;
    return tape.record(
        std::move(out), {x_id},
        [=, mask = std::move(mask_copy)](Tape& t, int node) {
            const Tensor& g = t.grad(Var{node});
            const Tensor& xv = t.value(Var{x_id});
            const SeqDims d = image_dims(xv);
            const std::int64_t plane =
                static_cast<std::int64_t>(2) * d.nx * d.ny * d.nt;
            if (stage == DsStage::First) {
                // only the n_adj=0 slice depends on x
                Tensor gx(xv.shape());
                for (int b = 0; b < d.b; ++b)
                    std::copy_n(g.data() +
                                    static_cast<std::int64_t>(b) * kDsImages * plane,
                                plane,
                                gx.data() + static_cast<std::int64_t>(b) * plane);
                t.accumulate(x_id, gx);
                return;
            }
            Tensor gs_total({d.b, 2, d.nx, d.ny, d.nt});
            Tensor gm({d.b, 2, d.nx, d.ny, d.nt});
            for (int m = 0; m < kDsImages; ++m) {
                for (int b = 0; b < d.b; ++b)
                    std::copy_n(g.data() +
                                    (static_cast<std::int64_t>(b) * kDsImages + m) * plane,
                                plane,
                                gm.data() + static_cast<std::int64_t>(b) * plane);
                Tensor gk = dft2_tensor(gm, false);
                share_all_adjoint(gk, mask, m, boundary, gs_total);
            }
            t.accumulate(x_id, dft2_tensor(gs_total, true));
        });
}

}  // namespace kcascade
