#pragma once

#include <cstdint>

#include "kcascade/tensor.hpp"

namespace kcascade {

/// Complex-valued image or k-space volume stored as two real channels:
/// values is [2, n_x, n_y, n_t], channel 0 real and channel 1 imaginary.
/// n_t = 1 encodes the 2D case.
struct ComplexSequence {
    int n_x = 0, n_y = 0, n_t = 0;
    Tensor values;

    ComplexSequence() = default;
    ComplexSequence(int nx, int ny, int nt)
        : n_x(nx), n_y(ny), n_t(nt), values(Tensor({2, nx, ny, nt})) {}

    explicit ComplexSequence(Tensor t) {
        if (t.ndim() != 4 || t.dim(0) != 2)
            throw std::invalid_argument("ComplexSequence: expected [2,nx,ny,nt], got " +
                                        t.shape_str());
        n_x = t.dim(1);
        n_y = t.dim(2);
        n_t = t.dim(3);
        values = std::move(t);
    }

    std::int64_t idx(int x, int y, int t) const {
        return (static_cast<std::int64_t>(x) * n_y + y) * n_t + t;
    }
    std::int64_t pixels() const {
        return static_cast<std::int64_t>(n_x) * n_y * n_t;
    }
    real_t& re(int x, int y, int t) { return values[idx(x, y, t)]; }
    real_t& im(int x, int y, int t) { return values[pixels() + idx(x, y, t)]; }
    real_t re(int x, int y, int t) const { return values[idx(x, y, t)]; }
    real_t im(int x, int y, int t) const { return values[pixels() + idx(x, y, t)]; }
};

/// Per-frame selection of acquired k_y lines (k_x fully sampled).
struct SamplingMask {
    int n_y = 0, n_t = 0;
    std::vector<std::uint8_t> lines;  // [n_y][n_t], row-major

    SamplingMask() = default;
    SamplingMask(int ny, int nt, bool fill = false)
        : n_y(ny), n_t(nt),
          lines(static_cast<std::size_t>(ny) * nt, fill ? 1 : 0) {}

    bool acquired(int ky, int t) const {
        return lines[static_cast<std::size_t>(ky) * n_t + t] != 0;
    }
    void set(int ky, int t, bool v) {
        lines[static_cast<std::size_t>(ky) * n_t + t] = v ? 1 : 0;
    }
    int acquired_count(int t) const {
        int n = 0;
        for (int ky = 0; ky < n_y; ++ky) n += acquired(ky, t);
        return n;
    }
};

/// AWG noise in k-space: per-entry power sigma2, i.e. each real/imag
/// component has standard deviation sigma/sqrt(2).
struct NoiseSpec {
    real_t sigma2 = 0.0;
    std::uint64_t seed = 0;
};

/// Variable-density knobs; the Gaussian std and the offset floor are
/// stand-ins for an external reference and kept configurable.
struct MaskDensity {
    real_t std_frac = 1.0 / 6.0;      // Gaussian std as fraction of n_y
    real_t min_peak_frac = 0.1;       // density floor relative to the peak
};

// Unitary per-frame 2D DFT with zero frequency at the array center.
ComplexSequence dft2(const ComplexSequence& seq);
ComplexSequence idft2(const ComplexSequence& seq);

// Tensor-level variants used by the differentiable layers.
// Accepts [2,nx,ny,nt] or [b,2,nx,ny,nt].
Tensor dft2_tensor(const Tensor& t, bool inverse);

/// Cartesian variable-density mask: 8 central lines per frame plus
/// adjacent line-pairs drawn from an offset Gaussian density until
/// ceil(n_y/acc) lines (rounded up to pair parity) are acquired.
SamplingMask generate_mask(int n_y, int n_t, real_t acc, std::uint64_t seed,
                           const MaskDensity& density = {});

/// Zero-filled k-space s_0 = mask .* (dft2(x) + e).
ComplexSequence undersample(const ComplexSequence& x, const SamplingMask& mask,
                            const NoiseSpec& noise = {});

/// x_u = idft2(s_0).
ComplexSequence zero_filled(const ComplexSequence& s0);

}  // namespace kcascade
