#pragma once

#include <array>

#include "kcascade/training.hpp"

namespace kcascade {

/// Axis-aligned-by-default ellipse in pixel coordinates; intensity adds
/// into the magnitude image, phase into the spatial phase map.
struct Ellipse {
    real_t cx = 0, cy = 0;  // center, pixels
    real_t ax = 1, ay = 1;  // semi-axes, pixels
    real_t angle = 0;
    real_t intensity = 0.5;  // in [0,1]
};

struct PhantomSpec {
    int n_x = 64, n_y = 64, n_t = 12;
    std::vector<Ellipse> background;  // static structures
    Ellipse pulsating;                // cardiac-like dynamic region
    real_t pulse_amp = 0.15;          // relative semi-axis modulation
    int pulse_period = 12;            // frames per cycle
    real_t drift_px = 1.0;            // periodic center translation
    real_t phase_strength = 0.5;      // smooth phase map amplitude, radians
    std::uint64_t seed = 0;
};

/// Spec with a plausible default geometry scaled to the given dims.
/// 64x64x12 is the desk scale, 32x32x8 the toy scale.
PhantomSpec default_phantom(int n_x, int n_y, int n_t, std::uint64_t seed);

/// Deterministic complex-valued sequence; magnitude normalized so that
/// the maximum over all frames is 1.
ComplexSequence generate(const PhantomSpec& spec);

/// `count` sequences with jittered geometry, split 7/3 into train/test
/// by index.
Dataset make_dataset(const PhantomSpec& tmpl, int count, std::uint64_t seed);

/// Bounding box (x0,x1,y0,y1) that contains the pulsating ellipse over
/// the whole cycle, with a one-pixel margin.
std::array<int, 4> dynamic_bounds(const PhantomSpec& spec);

}  // namespace kcascade
