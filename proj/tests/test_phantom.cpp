#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "kcascade/cascade.hpp"
#include "kcascade/phantom.hpp"

using namespace kcascade;

TEST_CASE("generate: zero motion makes all frames identical") {
    PhantomSpec spec = default_phantom(32, 32, 8, 1);
    spec.pulse_amp = 0;
    spec.drift_px = 0;
    ComplexSequence x = generate(spec);
    for (int t = 1; t < 8; ++t)
        for (int xi = 0; xi < 32; ++xi)
            for (int yi = 0; yi < 32; ++yi) {
                CHECK(x.re(xi, yi, t) == x.re(xi, yi, 0));
                CHECK(x.im(xi, yi, t) == x.im(xi, yi, 0));
            }
}

TEST_CASE("generate: fixed seed gives bit-identical output") {
    PhantomSpec spec = default_phantom(32, 32, 8, 5);
    ComplexSequence a = generate(spec);
    ComplexSequence b = generate(spec);
    for (std::int64_t i = 0; i < a.values.size(); ++i)
        CHECK(a.values[i] == b.values[i]);
}

TEST_CASE("generate: pulsation with period P repeats exactly") {
    PhantomSpec spec = default_phantom(32, 32, 8, 7);
    spec.pulse_period = 4;
    ComplexSequence x = generate(spec);
    for (int t = 0; t < 4; ++t)
        for (int xi = 0; xi < 32; ++xi)
            for (int yi = 0; yi < 32; ++yi) {
                CHECK(x.re(xi, yi, t) == x.re(xi, yi, t + 4));
                CHECK(x.im(xi, yi, t) == x.im(xi, yi, t + 4));
            }
}

TEST_CASE("generate: magnitude normalized to unit peak, genuinely complex") {
    ComplexSequence x = generate(default_phantom(64, 64, 12, 3));
    real_t peak = 0, imag_energy = 0;
    for (int xi = 0; xi < 64; ++xi)
        for (int yi = 0; yi < 64; ++yi)
            for (int t = 0; t < 12; ++t) {
                peak = std::max(peak, std::hypot(x.re(xi, yi, t), x.im(xi, yi, t)));
                imag_energy += x.im(xi, yi, t) * x.im(xi, yi, t);
            }
    CHECK(peak == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(imag_energy > 1.0);
}

TEST_CASE("generate: degenerate ellipse rejected") {
    PhantomSpec spec = default_phantom(32, 32, 4, 1);
    spec.pulsating.ax = 0;
    CHECK_THROWS_AS(generate(spec), std::invalid_argument);
}

TEST_CASE("temporal variance is concentrated in the dynamic region") {
    PhantomSpec spec = default_phantom(64, 64, 12, 9);
    ComplexSequence x = generate(spec);
    auto [x0, x1, y0, y1] = dynamic_bounds(spec);
    real_t inside = 0, outside = 0;
    for (int xi = 0; xi < 64; ++xi)
        for (int yi = 0; yi < 64; ++yi) {
            real_t mean_r = 0, mean_i = 0;
            for (int t = 0; t < 12; ++t) {
                mean_r += x.re(xi, yi, t);
                mean_i += x.im(xi, yi, t);
            }
            mean_r /= 12;
            mean_i /= 12;
            real_t var = 0;
            for (int t = 0; t < 12; ++t) {
                const real_t dr = x.re(xi, yi, t) - mean_r;
                const real_t di = x.im(xi, yi, t) - mean_i;
                var += dr * dr + di * di;
            }
            const bool in = xi >= x0 && xi <= x1 && yi >= y0 && yi <= y1;
            (in ? inside : outside) += var;
        }
    CHECK(inside > 0);
    CHECK(outside <= 1e-12 * inside);
}

TEST_CASE("phantom ground truth is exactly recoverable under full sampling") {
    ComplexSequence truth = generate(default_phantom(32, 32, 4, 11));
    SamplingMask full(32, 4, true);
    ComplexSequence s0 = undersample(truth, full);
    ModelConfig mc;
    mc.n_c = 2;
    mc.n_d = 2;
    mc.n_f = 4;
    mc.dynamic = true;
    CascadeModel m = build_model(mc, 12);
    ComplexSequence out = reconstruct(m, s0, full);
    real_t max_err = 0;
    for (std::int64_t i = 0; i < truth.values.size(); ++i)
        max_err = std::max(max_err, std::abs(out.values[i] - truth.values[i]));
    CHECK(max_err < 1e-12);
}

TEST_CASE("make_dataset: counts, split, and determinism") {
    PhantomSpec tmpl = default_phantom(32, 32, 4, 20);
    Dataset one = make_dataset(tmpl, 1, 1);
    CHECK(one.train.size() == 1);
    CHECK(one.test.empty());

    Dataset ten = make_dataset(tmpl, 10, 2);
    CHECK(ten.train.size() == 7);
    CHECK(ten.test.size() == 3);

    Dataset again = make_dataset(tmpl, 10, 2);
    for (std::size_t s = 0; s < ten.train.size(); ++s)
        for (std::int64_t i = 0; i < ten.train[s].values.size(); ++i)
            CHECK(ten.train[s].values[i] == again.train[s].values[i]);

    // different jitter draws actually vary the geometry
    real_t diff = 0;
    for (std::int64_t i = 0; i < ten.train[0].values.size(); ++i)
        diff += std::abs(ten.train[0].values[i] - ten.train[1].values[i]);
    CHECK(diff > 1.0);

    CHECK_THROWS_AS(make_dataset(tmpl, 0, 1), std::invalid_argument);
}
