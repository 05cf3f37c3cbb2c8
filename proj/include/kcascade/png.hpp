#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "kcascade/tensor.hpp"

namespace kcascade {

/// 8-bit grayscale PNG; pix is row-major [height][width].
void write_png_gray(const std::string& path,
                    const std::vector<std::uint8_t>& pix, int width,
                    int height);

/// Min-max normalize to 0..255; returns the (lo, hi) bounds used so
/// renders can be compared. A constant image maps to mid-gray.
std::pair<real_t, real_t> gray_normalize(const std::vector<real_t>& values,
                                         std::vector<std::uint8_t>& out);

}  // namespace kcascade
