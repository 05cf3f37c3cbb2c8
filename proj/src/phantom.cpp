#include "kcascade/phantom.hpp"

#include <algorithm>
#include <cmath>

namespace kcascade {

namespace {

void check_ellipse(const Ellipse& e) {
    if (e.ax <= 0 || e.ay <= 0)
        throw std::invalid_argument("phantom: degenerate ellipse axes");
    if (e.intensity < 0 || e.intensity > 1)
        throw std::invalid_argument("phantom: ellipse intensity outside [0,1]");
}

/// 4x4 supersampled coverage of one ellipse, added into `img` [nx*ny].
void rasterize(std::vector<real_t>& img, int nx, int ny, const Ellipse& e,
               real_t scale, real_t dx, real_t dy) {
    const real_t ca = std::cos(e.angle), sa = std::sin(e.angle);
    const real_t ax = e.ax * scale, ay = e.ay * scale;
    const real_t cx = e.cx + dx, cy = e.cy + dy;
    const int x0 = std::max(0, static_cast<int>(std::floor(cx - ax - ay - 1)));
    const int x1 = std::min(nx - 1, static_cast<int>(std::ceil(cx + ax + ay + 1)));
    const int y0 = std::max(0, static_cast<int>(std::floor(cy - ax - ay - 1)));
    const int y1 = std::min(ny - 1, static_cast<int>(std::ceil(cy + ax + ay + 1)));
    constexpr int ss = 4;
    for (int xi = x0; xi <= x1; ++xi)
        for (int yi = y0; yi <= y1; ++yi) {
            int inside = 0;
            for (int sx = 0; sx < ss; ++sx)
                for (int sy = 0; sy < ss; ++sy) {
                    const real_t px = xi + (sx + 0.5) / ss - 0.5 - cx;
                    const real_t py = yi + (sy + 0.5) / ss - 0.5 - cy;
                    const real_t u = (ca * px + sa * py) / ax;
                    const real_t v = (-sa * px + ca * py) / ay;
                    if (u * u + v * v <= 1.0) ++inside;
                }
            img[static_cast<std::size_t>(xi) * ny + yi] +=
                e.intensity * inside / static_cast<real_t>(ss * ss);
        }
}

}  // namespace

PhantomSpec default_phantom(int n_x, int n_y, int n_t, std::uint64_t seed) {
    if (n_x < 8 || n_y < 8 || n_t < 1)
        throw std::invalid_argument("default_phantom: dims too small");
    PhantomSpec s;
    s.n_x = n_x;
    s.n_y = n_y;
    s.n_t = n_t;
    s.pulse_period = n_t;
    s.seed = seed;

    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<real_t> j(0.9, 1.1);
    auto E = [&](real_t cx, real_t cy, real_t ax, real_t ay, real_t intensity,
                 real_t angle) {
        Ellipse e;
        e.cx = cx * n_x * j(rng);
        e.cy = cy * n_y * j(rng);
        e.ax = std::max<real_t>(1.0, ax * n_x * j(rng));
        e.ay = std::max<real_t>(1.0, ay * n_y * j(rng));
        e.intensity = std::clamp<real_t>(intensity * j(rng), 0.0, 1.0);
        e.angle = angle;
        return e;
    };
    s.background.push_back(E(0.5, 0.5, 0.42, 0.44, 0.45, 0.0));
    s.background.push_back(E(0.68, 0.32, 0.1, 0.08, 0.3, 0.5));
    s.background.push_back(E(0.62, 0.72, 0.07, 0.09, 0.25, -0.3));
    s.pulsating = E(0.36, 0.55, 0.12, 0.1, 0.5, 0.2);
    s.pulse_amp = 0.15 * j(rng);
    s.drift_px = 0.02 * n_x * j(rng);
    s.phase_strength = 0.5 * j(rng);
    return s;
}

ComplexSequence generate(const PhantomSpec& spec) {
    if (spec.n_x < 1 || spec.n_y < 1 || spec.n_t < 1 || spec.pulse_period < 1)
        throw std::invalid_argument("generate: bad phantom dims");
    for (const auto& e : spec.background) check_ellipse(e);
    check_ellipse(spec.pulsating);

    const int nx = spec.n_x, ny = spec.n_y;
    const std::size_t npix = static_cast<std::size_t>(nx) * ny;

    std::vector<real_t> bg(npix, 0.0);
    for (const auto& e : spec.background) rasterize(bg, nx, ny, e, 1.0, 0, 0);

    // one magnitude image per residue class of the cycle, so periodicity
    // is exact by construction
    const int phases = std::min(spec.n_t, spec.pulse_period);
    std::vector<std::vector<real_t>> frames(static_cast<std::size_t>(phases));
    real_t peak = 0;
    for (int r = 0; r < phases; ++r) {
        const real_t theta = 2.0 * M_PI * r / spec.pulse_period;
        std::vector<real_t> img = bg;
        rasterize(img, nx, ny, spec.pulsating,
                  1.0 + spec.pulse_amp * std::sin(theta),
                  spec.drift_px * std::sin(theta),
                  spec.drift_px * std::cos(theta) - spec.drift_px);
        for (real_t v : img) peak = std::max(peak, v);
        frames[static_cast<std::size_t>(r)] = std::move(img);
    }
    if (peak <= 0) throw std::invalid_argument("generate: empty phantom");

    // smooth low-frequency spatial phase so the data are genuinely complex
    std::mt19937_64 rng(spec.seed);
    std::uniform_int_distribution<int> uf(1, 2);
    std::uniform_real_distribution<real_t> uphi(0.0, 2.0 * M_PI);
    const int fx = uf(rng), fy = uf(rng);
    const real_t phi0 = uphi(rng);

    ComplexSequence out(nx, ny, spec.n_t);
    for (int xi = 0; xi < nx; ++xi)
        for (int yi = 0; yi < ny; ++yi) {
            const real_t phi =
                spec.phase_strength *
                std::sin(2.0 * M_PI *
                             (static_cast<real_t>(fx) * xi / nx +
                              static_cast<real_t>(fy) * yi / ny) +
                         phi0);
            const real_t c = std::cos(phi), si = std::sin(phi);
            for (int t = 0; t < spec.n_t; ++t) {
                const real_t m =
                    frames[static_cast<std::size_t>(t % phases)]
                          [static_cast<std::size_t>(xi) * ny + yi] /
                    peak;
                out.re(xi, yi, t) = m * c;
                out.im(xi, yi, t) = m * si;
            }
        }
    return out;
}

Dataset make_dataset(const PhantomSpec& tmpl, int count, std::uint64_t seed) {
    if (count < 1) throw std::invalid_argument("make_dataset: count must be >= 1");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<real_t> j(0.9, 1.1);
    std::uniform_real_distribution<real_t> shift(-0.04, 0.04);

    Dataset data;
    const int n_test = count * 3 / 10;
    for (int i = 0; i < count; ++i) {
        PhantomSpec s = tmpl;
        auto jitter = [&](Ellipse& e) {
            e.cx += shift(rng) * s.n_x;
            e.cy += shift(rng) * s.n_y;
            e.ax = std::max<real_t>(1.0, e.ax * j(rng));
            e.ay = std::max<real_t>(1.0, e.ay * j(rng));
            e.intensity = std::clamp<real_t>(e.intensity * j(rng), 0.0, 1.0);
        };
        for (auto& e : s.background) jitter(e);
        jitter(s.pulsating);
        s.pulse_amp *= j(rng);
        s.drift_px *= j(rng);
        s.seed = rng();
        ComplexSequence x = generate(s);
        if (i < count - n_test)
            data.train.push_back(std::move(x));
        else
            data.test.push_back(std::move(x));
    }
    return data;
}

std::array<int, 4> dynamic_bounds(const PhantomSpec& spec) {
    const Ellipse& e = spec.pulsating;
    const real_t grow = 1.0 + std::abs(spec.pulse_amp);
    const real_t r = (e.ax + e.ay) * grow + 2.0 * std::abs(spec.drift_px) + 1.0;
    return {std::max(0, static_cast<int>(std::floor(e.cx - r))),
            std::min(spec.n_x - 1, static_cast<int>(std::ceil(e.cx + r))),
            std::max(0, static_cast<int>(std::floor(e.cy - r))),
            std::min(spec.n_y - 1, static_cast<int>(std::ceil(e.cy + r)))};
}

}  // namespace kcascade
