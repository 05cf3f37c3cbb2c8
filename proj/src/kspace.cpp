#include "kcascade/kspace.hpp"

#include <algorithm>
#include <cmath>

namespace kcascade {

namespace {

// Indices of the 8 centermost k_y lines in the centered layout.
std::pair<int, int> central_band(int n_y) {
    const int c0 = n_y / 2 - 4;
    return {c0, c0 + 8};
}

}  // namespace

SamplingMask generate_mask(int n_y, int n_t, real_t acc, std::uint64_t seed,
                           const MaskDensity& density) {
    if (n_y < 16) throw std::invalid_argument("generate_mask: n_y must be >= 16");
    if (n_y % 4 != 0)
        throw std::invalid_argument(
            "generate_mask: n_y must be divisible by 4 so the central band "
            "aligns with phase-encode pairs");
    if (n_t < 1) throw std::invalid_argument("generate_mask: n_t must be >= 1");
    if (!(acc > 1.0))
        throw std::invalid_argument("generate_mask: acc must exceed 1");
    if (acc > static_cast<real_t>(n_y) / 8.0)
        throw std::invalid_argument("generate_mask: acc infeasible, exceeds n_y/8");

    int target = static_cast<int>(std::ceil(static_cast<real_t>(n_y) / acc));
    target = std::min(target, n_y);

    SamplingMask mask(n_y, n_t);
    const auto [c0, c1] = central_band(n_y);
    if (target >= n_y) {
        std::fill(mask.lines.begin(), mask.lines.end(), 1);
        return mask;
    }

    // Pair (2k, 2k+1); density evaluated at the pair center, offset so
    // the floor equals min_peak_frac of the peak.
    const int npairs = n_y / 2;
    const int pc0 = c0 / 2, pc1 = c1 / 2;  // central pairs, always on
    std::vector<real_t> weight(static_cast<std::size_t>(npairs));
    const real_t sigma = density.std_frac * static_cast<real_t>(n_y);
    real_t gmax = 0, gmin = 1e300;
    for (int p = 0; p < npairs; ++p) {
        const real_t center = 2.0 * p + 0.5 - static_cast<real_t>(n_y) / 2.0;
        const real_t g = std::exp(-center * center / (2.0 * sigma * sigma));
        weight[static_cast<std::size_t>(p)] = g;
        gmax = std::max(gmax, g);
        gmin = std::min(gmin, g);
    }
    real_t offset = 0;
    if (gmin < density.min_peak_frac * gmax)
        offset = (density.min_peak_frac * gmax - gmin) /
                 (1.0 - density.min_peak_frac);
    for (auto& w : weight) w += offset;

    int extra = target - 8;
    if (extra < 0) extra = 0;
    if (extra % 2 != 0) ++extra;  // keep pair parity
    const int extra_pairs = std::min(extra / 2, npairs - (pc1 - pc0));

    std::mt19937_64 rng(seed);
    for (int t = 0; t < n_t; ++t) {
        for (int ky = c0; ky < c1; ++ky) mask.set(ky, t, true);
        std::vector<real_t> w = weight;
        for (int p = pc0; p < pc1; ++p) w[static_cast<std::size_t>(p)] = 0;
        for (int drawn = 0; drawn < extra_pairs; ++drawn) {
            std::discrete_distribution<int> dist(w.begin(), w.end());
            const int p = dist(rng);
            mask.set(2 * p, t, true);
            mask.set(2 * p + 1, t, true);
            w[static_cast<std::size_t>(p)] = 0;
        }
    }
    return mask;
}

ComplexSequence undersample(const ComplexSequence& x, const SamplingMask& mask,
                            const NoiseSpec& noise) {
    if (mask.n_y != x.n_y || mask.n_t != x.n_t)
        throw std::invalid_argument("undersample: mask dims do not match sequence");
    ComplexSequence s = dft2(x);
    ComplexSequence s0(x.n_x, x.n_y, x.n_t);
    std::mt19937_64 rng(noise.seed);
    std::normal_distribution<real_t> comp(0.0, std::sqrt(noise.sigma2 / 2.0));
    const bool noisy = noise.sigma2 > 0;
    for (int t = 0; t < x.n_t; ++t)
        for (int ky = 0; ky < x.n_y; ++ky) {
            if (!mask.acquired(ky, t)) continue;
            for (int kx = 0; kx < x.n_x; ++kx) {
                real_t er = 0, ei = 0;
                if (noisy) {
                    er = comp(rng);
                    ei = comp(rng);
                }
                s0.re(kx, ky, t) = s.re(kx, ky, t) + er;
                s0.im(kx, ky, t) = s.im(kx, ky, t) + ei;
            }
        }
    return s0;
}

ComplexSequence zero_filled(const ComplexSequence& s0) { return idft2(s0); }

}  // namespace kcascade
