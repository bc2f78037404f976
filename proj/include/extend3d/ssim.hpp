#pragma once

#include <span>

#include "extend3d/priors.hpp"

namespace extend3d {

inline constexpr double kSsimC1 = 0.01 * 0.01;
inline constexpr double kSsimC2 = 0.03 * 0.03;
inline constexpr int kSsimWindow = 8;

/// Mean SSIM over all 8x8 sliding windows (stride 1, clamped to the image
/// size) and the three channels, population statistics, unit dynamic range.
double ssim(const Image& a, const Image& b);

/// Same value; also writes dSSIM/da into grad_a (size a.rgb.size()).
/// Window statistics come from integral images and the gradient is gathered
/// per pixel, so rows are processed in parallel without shared writes.
double ssim(const Image& a, const Image& b, std::span<double> grad_a);

}  // namespace extend3d
