#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "kcascade/layers.hpp"
#include "oracles.hpp"

using namespace kcascade;
using kcascade::testing::max_rel_fd_error;

namespace {

ComplexSequence random_seq(int nx, int ny, int nt, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    return ComplexSequence(Tensor::randn({2, nx, ny, nt}, rng));
}

double rel_err(const Tensor& a, const Tensor& b) {
    double num = 0, den = 0;
    for (std::int64_t i = 0; i < a.size(); ++i) {
        num += (a[i] - b[i]) * (a[i] - b[i]);
        den += b[i] * b[i];
    }
    return std::sqrt(num / std::max(den, 1e-300));
}

SamplingMask random_mask(int ny, int nt, std::uint64_t seed, double p = 0.4) {
    std::mt19937_64 rng(seed);
    std::bernoulli_distribution coin(p);
    SamplingMask m(ny, nt);
    for (int t = 0; t < nt; ++t)
        for (int ky = 0; ky < ny; ++ky) m.set(ky, t, coin(rng));
    return m;
}

Tensor as_batched(const Tensor& t) {
    std::vector<int> s = t.shape();
    s.insert(s.begin(), 1);
    Tensor out(s);
    std::copy_n(t.data(), t.size(), out.data());
    return out;
}

}  // namespace

TEST_CASE("cnn_forward: zero weights reduce to the residual identity") {
    CnnBlock block;
    block.n_d = 3;
    block.n_f = 8;
    std::mt19937_64 rng(1);
    block.init_he(rng);
    for (auto& w : block.weights) w = Tensor(w.shape());  // zero out

    Tape tape;
    Var x = tape.leaf(Tensor::randn({1, 2, 6, 6, 3}, rng));
    Var y = cnn_forward(tape, block, bind_block(tape, block), x);
    CHECK(rel_err(tape.value(y), tape.value(x)) == 0.0);
}

TEST_CASE("cnn_forward: channel mismatch rejected") {
    CnnBlock block;
    block.n_d = 2;
    block.n_f = 4;
    std::mt19937_64 rng(2);
    block.init_he(rng);
    Tape tape;
    Var x = tape.leaf(Tensor::randn({1, 3, 4, 4, 1}, rng));
    CHECK_THROWS_AS(cnn_forward(tape, block, bind_block(tape, block), x),
                    std::invalid_argument);
}

TEST_CASE("cnn_forward: matches layer-by-layer replay oracle") {
    CnnBlock block;
    block.n_d = 3;
    block.n_f = 5;
    block.k_t = 3;
    std::mt19937_64 rng(3);
    block.init_he(rng);
    Tensor x = Tensor::randn({1, 2, 5, 6, 4}, rng);

    Tape tape;
    Var xv = tape.leaf(x);
    Var y = cnn_forward(tape, block, bind_block(tape, block), xv);

    Tensor h = x;
    for (int i = 0; i < block.n_d - 1; ++i) {
        h = kcascade::testing::brute_conv(h, block.weights[i], block.biases[i]);
        for (auto& v : h.values()) v = v > 0 ? v : 0;
    }
    Tensor o = kcascade::testing::brute_conv(h, block.weights.back(),
                                             block.biases.back());
    for (std::int64_t i = 0; i < o.size(); ++i) o[i] += x[i];
    CHECK(rel_err(tape.value(y), o) < 1e-12);
}

TEST_CASE("cnn_forward: 12-channel input takes residual from the first pair") {
    CnnBlock block;
    block.n_d = 2;
    block.n_f = 4;
    block.in_channels = 12;
    std::mt19937_64 rng(4);
    block.init_he(rng);
    for (auto& w : block.weights) w = Tensor(w.shape());

    Tape tape;
    Tensor x = Tensor::randn({1, 12, 4, 4, 2}, rng);
    Var y = cnn_forward(tape, block, bind_block(tape, block), tape.leaf(x));
    const Tensor& yv = tape.value(y);
    const std::int64_t plane = 4 * 4 * 2;
    for (std::int64_t i = 0; i < 2 * plane; ++i) CHECK(yv[i] == x[i]);
}

TEST_CASE("dc_forward: pointwise branches of the closed form") {
    ComplexSequence x = random_seq(8, 8, 2, 10);
    ComplexSequence truth = random_seq(8, 8, 2, 11);
    SamplingMask m = random_mask(8, 2, 12);
    ComplexSequence s0 = undersample(truth, m);
    ComplexSequence s_cnn = dft2(x);

    SUBCASE("off Omega the CNN coefficient passes through") {
        ComplexSequence out = dc_forward(x, s0, m, 3.7);
        ComplexSequence so = dft2(out);
        for (int t = 0; t < 2; ++t)
            for (int ky = 0; ky < 8; ++ky)
                if (!m.acquired(ky, t))
                    for (int kx = 0; kx < 8; ++kx) {
                        CHECK(so.re(kx, ky, t) ==
                              doctest::Approx(s_cnn.re(kx, ky, t)).epsilon(1e-10));
                        CHECK(so.im(kx, ky, t) ==
                              doctest::Approx(s_cnn.im(kx, ky, t)).epsilon(1e-10));
                    }
    }
    SUBCASE("hard mode replaces acquired coefficients exactly") {
        ComplexSequence out = dc_forward(x, s0, m, std::nullopt);
        ComplexSequence so = dft2(out);
        for (int t = 0; t < 2; ++t)
            for (int ky = 0; ky < 8; ++ky)
                if (m.acquired(ky, t))
                    for (int kx = 0; kx < 8; ++kx) {
                        CHECK(std::abs(so.re(kx, ky, t) - s0.re(kx, ky, t)) < 1e-12);
                        CHECK(std::abs(so.im(kx, ky, t) - s0.im(kx, ky, t)) < 1e-12);
                    }
    }
    SUBCASE("lambda = 1 averages the two coefficients") {
        ComplexSequence out = dc_forward(x, s0, m, 1.0);
        ComplexSequence so = dft2(out);
        for (int t = 0; t < 2; ++t)
            for (int ky = 0; ky < 8; ++ky)
                if (m.acquired(ky, t))
                    for (int kx = 0; kx < 8; ++kx)
                        CHECK(so.re(kx, ky, t) ==
                              doctest::Approx((s_cnn.re(kx, ky, t) +
                                               s0.re(kx, ky, t)) / 2)
                                  .epsilon(1e-10));
    }
    SUBCASE("negative lambda rejected") {
        CHECK_THROWS_AS(dc_forward(x, s0, m, -0.1), std::invalid_argument);
    }
}

TEST_CASE("dc_backward: projection limits and identity") {
    SamplingMask m = random_mask(8, 2, 20);
    ComplexSequence g = random_seq(8, 8, 2, 21);

    ComplexSequence hard = dc_backward(g, m, std::nullopt);
    ComplexSequence gh = dft2(hard);
    ComplexSequence gk = dft2(g);
    for (int t = 0; t < 2; ++t)
        for (int ky = 0; ky < 8; ++ky)
            for (int kx = 0; kx < 8; ++kx) {
                if (m.acquired(ky, t)) {
                    CHECK(std::abs(gh.re(kx, ky, t)) < 1e-12);
                } else {
                    CHECK(gh.re(kx, ky, t) ==
                          doctest::Approx(gk.re(kx, ky, t)).epsilon(1e-10));
                }
            }

    ComplexSequence ident = dc_backward(g, m, 0.0);
    CHECK(rel_err(ident.values, g.values) < 1e-10);
}

TEST_CASE("dc_backward: matches finite differences of dc_forward") {
    ComplexSequence truth = random_seq(6, 6, 2, 30);
    SamplingMask m = random_mask(6, 2, 31);
    ComplexSequence s0 = undersample(truth, m);
    const real_t lam = 0.8;
    ComplexSequence x = random_seq(6, 6, 2, 32);
    ComplexSequence up = random_seq(6, 6, 2, 33);

    // loss = <up, dc_forward(x)>; gradient w.r.t. x is dc_backward(up).
    auto loss = [&] {
        return dot(dc_forward(x, s0, m, lam).values, up.values);
    };
    ComplexSequence analytic = dc_backward(up, m, lam);
    CHECK(max_rel_fd_error(x.values, loss, analytic.values, 1e-3, 1e-4) < 1e-6);
}

TEST_CASE("dc_lambda_grad: vanishing cases and finite differences") {
    ComplexSequence truth = random_seq(6, 6, 1, 40);
    SamplingMask m = random_mask(6, 1, 41);
    ComplexSequence s0 = undersample(truth, m);
    ComplexSequence up = random_seq(6, 6, 1, 42);

    SUBCASE("zero when s_cnn equals s_0 on Omega") {
        ComplexSequence x = zero_filled(s0);
        CHECK(std::abs(dc_lambda_grad(dft2(x), s0, m, 0.5, up)) < 1e-12);
    }
    SUBCASE("vanishes as lambda grows") {
        ComplexSequence x = random_seq(6, 6, 1, 43);
        CHECK(std::abs(dc_lambda_grad(dft2(x), s0, m, 1e8, up)) < 1e-12);
    }
    SUBCASE("matches central differences of the loss") {
        ComplexSequence x = random_seq(6, 6, 1, 44);
        Tensor lam = Tensor::scalar(0.7);
        auto loss = [&] { return dot(dc_forward(x, s0, m, lam[0]).values, up.values); };
        Tensor analytic = Tensor::scalar(dc_lambda_grad(dft2(x), s0, m, lam[0], up));
        CHECK(max_rel_fd_error(lam, loss, analytic, 1e-4, 1e-6) < 1e-5);
    }
}

TEST_CASE("dc: idempotence, contraction, self-adjointness, non-expansiveness") {
    ComplexSequence truth = random_seq(12, 12, 3, 50);
    SamplingMask m = random_mask(12, 3, 51);
    ComplexSequence s0 = undersample(truth, m);
    ComplexSequence x = random_seq(12, 12, 3, 52);

    SUBCASE("hard idempotence is exact") {
        ComplexSequence once = dc_forward(x, s0, m, std::nullopt);
        ComplexSequence twice = dc_forward(once, s0, m, std::nullopt);
        CHECK(rel_err(twice.values, once.values) < 1e-12);
    }
    SUBCASE("soft on-Omega residual contracts by 1/(1+lambda)") {
        const real_t lam = 2.5;
        auto on_omega_residual = [&](const ComplexSequence& v) {
            ComplexSequence s = dft2(v);
            double acc = 0;
            for (int t = 0; t < 3; ++t)
                for (int ky = 0; ky < 12; ++ky)
                    if (m.acquired(ky, t))
                        for (int kx = 0; kx < 12; ++kx) {
                            const double dr = s.re(kx, ky, t) - s0.re(kx, ky, t);
                            const double di = s.im(kx, ky, t) - s0.im(kx, ky, t);
                            acc += dr * dr + di * di;
                        }
            return std::sqrt(acc);
        };
        ComplexSequence once = dc_forward(x, s0, m, lam);
        const double r0 = on_omega_residual(x);
        const double r1 = on_omega_residual(once);
        CHECK(r1 / r0 == doctest::Approx(1.0 / (1.0 + lam)).epsilon(1e-10));
    }
    SUBCASE("self-adjoint") {
        ComplexSequence u = random_seq(12, 12, 3, 53);
        ComplexSequence v = random_seq(12, 12, 3, 54);
        const real_t lam = 1.3;
        const double lhs = dot(dc_backward(u, m, lam).values, v.values);
        const double rhs = dot(u.values, dc_backward(v, m, lam).values);
        CHECK(std::abs(lhs - rhs) / std::abs(lhs) < 1e-10);
    }
    SUBCASE("non-expansive") {
        std::mt19937_64 rng(55);
        for (int trial = 0; trial < 50; ++trial) {
            ComplexSequence g(Tensor::randn({2, 12, 12, 3}, rng));
            CHECK(norm2(dc_backward(g, m, 0.9).values) <=
                  norm2(g.values) * (1 + 1e-12));
        }
    }
}

TEST_CASE("data_share: identities") {
    ComplexSequence s = random_seq(8, 8, 4, 60);
    SamplingMask m = random_mask(8, 4, 61);
    CHECK(rel_err(data_share(s, m, 0).values, s.values) == 0.0);

    ComplexSequence s1 = random_seq(8, 8, 1, 62);
    SamplingMask m1 = random_mask(8, 1, 63);
    for (int n = 0; n <= 5; ++n)
        CHECK(rel_err(data_share(s1, m1, n).values, s1.values) == 0.0);
}

TEST_CASE("data_share: two-frame union and average oracle") {
    const int nx = 4, ny = 8, nt = 2;
    ComplexSequence s(nx, ny, nt);
    std::mt19937_64 rng(64);
    SamplingMask m(ny, nt);
    // frame 0 acquires even lines, frame 1 odd lines, line 2 in both
    for (int ky = 0; ky < ny; ++ky) {
        m.set(ky, 0, ky % 2 == 0);
        m.set(ky, 1, ky % 2 == 1 || ky == 2);
    }
    std::normal_distribution<real_t> dist;
    for (int t = 0; t < nt; ++t)
        for (int ky = 0; ky < ny; ++ky)
            if (m.acquired(ky, t))
                for (int kx = 0; kx < nx; ++kx) {
                    s.re(kx, ky, t) = dist(rng);
                    s.im(kx, ky, t) = dist(rng);
                }
    ComplexSequence out = data_share(s, m, 1);
    for (int kx = 0; kx < nx; ++kx)
        for (int ky = 0; ky < ny; ++ky)
            for (int t = 0; t < nt; ++t) {
                const int o = 1 - t;
                real_t expect_re;
                if (m.acquired(ky, t)) {
                    expect_re = s.re(kx, ky, t);
                } else if (m.acquired(ky, o)) {
                    expect_re = s.re(kx, ky, o);  // single source, no averaging
                } else {
                    expect_re = 0;
                }
                CHECK(out.re(kx, ky, t) == doctest::Approx(expect_re).epsilon(1e-12));
            }
    // line 2 is acquired in both frames; each frame keeps its own sample
    CHECK(out.re(0, 2, 0) == s.re(0, 2, 0));
    CHECK(out.re(0, 2, 1) == s.re(0, 2, 1));
}

TEST_CASE("data_share: averages when a line is acquired in several frames") {
    const int nx = 2, ny = 8, nt = 3;
    ComplexSequence s(nx, ny, nt);
    SamplingMask m(ny, nt);
    m.set(4, 0, true);
    m.set(4, 2, true);
    s.re(0, 4, 0) = 2.0;
    s.re(0, 4, 2) = 6.0;
    ComplexSequence out = data_share(s, m, 1);
    CHECK(out.re(0, 4, 1) == doctest::Approx(4.0));  // mean of the neighbours
}

TEST_CASE("ds_layer: first channel pair equals the input image") {
    ComplexSequence truth = random_seq(8, 8, 4, 70);
    SamplingMask m = random_mask(8, 4, 71);
    ComplexSequence s0 = undersample(truth, m);
    Tensor x = as_batched(zero_filled(s0).values);
    for (DsStage stage : {DsStage::First, DsStage::Later}) {
        Tensor out = ds_layer_value(x, s0.values, m, stage);
        const std::int64_t plane = 2LL * 8 * 8 * 4;
        for (std::int64_t i = 0; i < plane; ++i)
            CHECK(out[i] == doctest::Approx(x[i]).epsilon(1e-10));
    }
}

TEST_CASE("ds_layer: static sequence with a static mask gives six identical images") {
    // all frames identical and the same mask per frame
    ComplexSequence frame = random_seq(8, 8, 1, 72);
    const int nt = 4;
    ComplexSequence x(8, 8, nt);
    for (int t = 0; t < nt; ++t)
        for (int kx = 0; kx < 8; ++kx)
            for (int ky = 0; ky < 8; ++ky) {
                x.re(kx, ky, t) = frame.re(kx, ky, 0);
                x.im(kx, ky, t) = frame.im(kx, ky, 0);
            }
    SamplingMask line_mask = random_mask(8, 1, 73);
    SamplingMask m(8, nt);
    for (int t = 0; t < nt; ++t)
        for (int ky = 0; ky < 8; ++ky) m.set(ky, t, line_mask.acquired(ky, 0));
    ComplexSequence s0 = undersample(x, m);
    Tensor xu = as_batched(zero_filled(s0).values);
    for (DsStage stage : {DsStage::First, DsStage::Later}) {
        Tensor out = ds_layer_value(xu, s0.values, m, stage);
        const std::int64_t plane = 2LL * 8 * 8 * nt;
        for (int mch = 1; mch < 6; ++mch)
            for (std::int64_t i = 0; i < plane; ++i)
                CHECK(out[mch * plane + i] ==
                      doctest::Approx(out[i]).epsilon(1e-9));
    }
}

TEST_CASE("ds_layer: first stage matches an independent merge-then-idft oracle") {
    const int nx = 6, ny = 8, nt = 5;
    ComplexSequence truth = random_seq(nx, ny, nt, 74);
    SamplingMask m = random_mask(ny, nt, 75, 0.3);
    ComplexSequence s0 = undersample(truth, m);
    Tensor x = as_batched(zero_filled(s0).values);
    const int n_adj = 2;
    Tensor out = ds_layer_value(x, s0.values, m, DsStage::First);

    // oracle: merge k-space by hand, then inverse transform
    ComplexSequence merged(nx, ny, nt);
    for (int t = 0; t < nt; ++t)
        for (int ky = 0; ky < ny; ++ky) {
            if (m.acquired(ky, t)) {
                for (int kx = 0; kx < nx; ++kx) {
                    merged.re(kx, ky, t) = s0.re(kx, ky, t);
                    merged.im(kx, ky, t) = s0.im(kx, ky, t);
                }
                continue;
            }
            int cnt = 0;
            for (int f = std::max(0, t - n_adj); f <= std::min(nt - 1, t + n_adj); ++f)
                cnt += m.acquired(ky, f) ? 1 : 0;
            if (cnt == 0) continue;
            for (int kx = 0; kx < nx; ++kx) {
                real_t ar = 0, ai = 0;
                for (int f = std::max(0, t - n_adj); f <= std::min(nt - 1, t + n_adj); ++f)
                    if (m.acquired(ky, f)) {
                        ar += s0.re(kx, ky, f);
                        ai += s0.im(kx, ky, f);
                    }
                merged.re(kx, ky, t) = ar / cnt;
                merged.im(kx, ky, t) = ai / cnt;
            }
        }
    ComplexSequence oracle = idft2(merged);
    const std::int64_t plane = 2LL * nx * ny * nt;
    for (std::int64_t i = 0; i < plane; ++i)
        CHECK(out[n_adj * plane + i] ==
              doctest::Approx(oracle.values[i]).epsilon(1e-10));
}

TEST_CASE("ds invariant: acquired entries are never modified") {
    ComplexSequence truth = random_seq(8, 8, 5, 80);
    SamplingMask m = random_mask(8, 5, 81);
    ComplexSequence s0 = undersample(truth, m);
    ComplexSequence x = random_seq(8, 8, 5, 82);
    Tensor xb = as_batched(x.values);
    for (DsStage stage : {DsStage::First, DsStage::Later}) {
        Tensor out = ds_layer_value(xb, s0.values, m, stage);
        const std::int64_t plane = 2LL * 8 * 8 * 5;
        for (int mch = 0; mch < 6; ++mch) {
            Tensor img({2, 8, 8, 5});
            std::copy_n(out.data() + mch * plane, plane, img.data());
            ComplexSequence sk = dft2(ComplexSequence(std::move(img)));
            ComplexSequence ref = stage == DsStage::First && mch > 0
                                      ? s0
                                      : dft2(x);
            for (int t = 0; t < 5; ++t)
                for (int ky = 0; ky < 8; ++ky)
                    if (m.acquired(ky, t))
                        for (int kx = 0; kx < 8; ++kx) {
                            CHECK(sk.re(kx, ky, t) ==
                                  doctest::Approx(ref.re(kx, ky, t)).epsilon(1e-9));
                            CHECK(sk.im(kx, ky, t) ==
                                  doctest::Approx(ref.im(kx, ky, t)).epsilon(1e-9));
                        }
        }
    }
}

TEST_CASE("tape dc_layer: gradients match finite differences") {
    ComplexSequence truth = random_seq(6, 6, 2, 90);
    SamplingMask m = random_mask(6, 2, 91);
    ComplexSequence s0 = undersample(truth, m);
    Tensor x = as_batched(random_seq(6, 6, 2, 92).values);
    Tensor target = as_batched(random_seq(6, 6, 2, 93).values);
    Tensor lam = Tensor::scalar(0.6);
    x.requires_grad = true;
    lam.requires_grad = true;

    auto build = [&](Tape& t) {
        Var xv = t.leaf(x);
        Var lv = t.leaf(lam);
        Var y = dc_layer(t, xv, s0.values, m, DcMode::Soft, lv);
        Var loss = mse_loss(t, y, t.leaf(target));
        return std::tuple{xv, lv, loss};
    };
    Tape tape;
    auto [xv, lv, loss] = build(tape);
    tape.backward(loss);
    auto eval = [&] {
        Tape t;
        auto [a, b, l] = build(t);
        return t.value(l)[0];
    };
    CHECK(max_rel_fd_error(x, eval, tape.grad(xv), 1e-3, 1e-4) < 1e-6);
    CHECK(max_rel_fd_error(lam, eval, tape.grad(lv), 1e-4, 1e-6) < 1e-5);
}

TEST_CASE("tape ds_layer: later-stage gradient matches finite differences") {
    ComplexSequence truth = random_seq(6, 6, 3, 94);
    SamplingMask m = random_mask(6, 3, 95);
    ComplexSequence s0 = undersample(truth, m);
    Tensor x = as_batched(random_seq(6, 6, 3, 96).values);
    Tensor target({1, 12, 6, 6, 3});
    {
        std::mt19937_64 rng(97);
        target = Tensor::randn(target.shape(), rng);
    }
    x.requires_grad = true;

    for (DsStage stage : {DsStage::Later, DsStage::First}) {
        auto build = [&](Tape& t) {
            Var xv = t.leaf(x);
            Var y = ds_layer(t, xv, s0.values, m, stage);
            return std::pair{xv, mse_loss(t, y, t.leaf(target))};
        };
        Tape tape;
        auto [xv, loss] = build(tape);
        tape.backward(loss);
        auto eval = [&] {
            Tape t;
            return t.value(build(t).second)[0];
        };
        CHECK(max_rel_fd_error(x, eval, tape.grad(xv), 1e-3, 1e-4) < 1e-6);
    }
}
