#include <fftw3.h>

#include <cmath>
#include <map>
#include <mutex>

#include "kcascade/kspace.hpp"

namespace kcascade {

namespace {

struct PlanSlot {
    fftw_plan plan = nullptr;
    fftw_complex* buf = nullptr;
};

// FFTW planning is not thread-safe; execution on the cached buffer is
// serialized by the same mutex.
std::mutex g_fft_mutex;
std::map<std::tuple<int, int, int>, PlanSlot> g_plans;

PlanSlot& get_plan(int nx, int ny, int sign) {
    auto key = std::make_tuple(nx, ny, sign);
    auto it = g_plans.find(key);
    if (it != g_plans.end()) return it->second;
    PlanSlot slot;
    slot.buf = fftw_alloc_complex(static_cast<std::size_t>(nx) * ny);
    slot.plan = fftw_plan_dft_2d(nx, ny, slot.buf, slot.buf, sign, FFTW_ESTIMATE);
    return g_plans.emplace(key, slot).first->second;
}

// Standard index of the centered index c: zero frequency sits at
// floor(n/2) in the centered layout and at 0 in FFTW's.
inline int to_std(int c, int n) { return (c + (n + 1) / 2) % n; }

}  // namespace

Tensor dft2_tensor(const Tensor& t, bool inverse) {
    if (t.ndim() == 5) {
        Tensor out(t.shape());
        const std::int64_t per = t.size() / t.dim(0);
        for (int b = 0; b < t.dim(0); ++b) {
            Tensor slice({t.dim(1), t.dim(2), t.dim(3), t.dim(4)});
            std::copy_n(t.data() + b * per, per, slice.data());
            Tensor r = dft2_tensor(slice, inverse);
            std::copy_n(r.data(), per, out.data() + b * per);
        }
        return out;
    }
    if (t.ndim() != 4 || t.dim(0) != 2)
        throw std::invalid_argument("dft2: expected [2,nx,ny,nt], got " +
                                    t.shape_str());
    const int nx = t.dim(1), ny = t.dim(2), nt = t.dim(3);
    const std::int64_t plane = static_cast<std::int64_t>(nx) * ny * nt;
    const real_t scale = 1.0 / std::sqrt(static_cast<real_t>(nx) * ny);
    Tensor out(t.shape());
    const real_t* re = t.data();
    const real_t* im = t.data() + plane;
    real_t* ore = out.data();
    real_t* oim = out.data() + plane;

    std::lock_guard<std::mutex> lock(g_fft_mutex);
    PlanSlot& slot = get_plan(nx, ny, inverse ? FFTW_BACKWARD : FFTW_FORWARD);
    for (int f = 0; f < nt; ++f) {
        if (!inverse) {
            for (int x = 0; x < nx; ++x)
                for (int y = 0; y < ny; ++y) {
                    const std::int64_t src = (static_cast<std::int64_t>(x) * ny + y) * nt + f;
                    fftw_complex& c = slot.buf[static_cast<std::int64_t>(x) * ny + y];
                    c[0] = re[src];
                    c[1] = im[src];
                }
            fftw_execute(slot.plan);
            for (int cx = 0; cx < nx; ++cx)
                for (int cy = 0; cy < ny; ++cy) {
                    const fftw_complex& c =
                        slot.buf[static_cast<std::int64_t>(to_std(cx, nx)) * ny + to_std(cy, ny)];
                    const std::int64_t dst = (static_cast<std::int64_t>(cx) * ny + cy) * nt + f;
                    ore[dst] = c[0] * scale;
                    oim[dst] = c[1] * scale;
                }
        } else {
            for (int cx = 0; cx < nx; ++cx)
                for (int cy = 0; cy < ny; ++cy) {
                    const std::int64_t src = (static_cast<std::int64_t>(cx) * ny + cy) * nt + f;
                    fftw_complex& c =
                        slot.buf[static_cast<std::int64_t>(to_std(cx, nx)) * ny + to_std(cy, ny)];
                    c[0] = re[src];
                    c[1] = im[src];
                }
            fftw_execute(slot.plan);
            for (int x = 0; x < nx; ++x)
                for (int y = 0; y < ny; ++y) {
                    const fftw_complex& c = slot.buf[static_cast<std::int64_t>(x) * ny + y];
                    const std::int64_t dst = (static_cast<std::int64_t>(x) * ny + y) * nt + f;
                    ore[dst] = c[0] * scale;
                    oim[dst] = c[1] * scale;
                }
        }
    }
    return out;
}

ComplexSequence dft2(const ComplexSequence& seq) {
    return ComplexSequence(dft2_tensor(seq.values, false));
}

ComplexSequence idft2(const ComplexSequence& seq) {
    return ComplexSequence(dft2_tensor(seq.values, true));
}

}  // namespace kcascade
