#include "extend3d/ssim.hpp"

#include <algorithm>
#include <vector>

#include "extend3d/errors.hpp"

namespace extend3d {

namespace {

// (H + 1) x (W + 1) summed-area table of one channel of f(a, b).
template <typename F>
std::vector<double> integral(const Image& a, const Image& b, int c, F f) {
    const int H = a.height, W = a.width;
    std::vector<double> s(static_cast<std::size_t>(H + 1) * (W + 1), 0.0);
    for (int r = 0; r < H; ++r) {
        double row = 0.0;
        for (int q = 0; q < W; ++q) {
            row += f(a.at(r, q, c), b.at(r, q, c));
            s[static_cast<std::size_t>(r + 1) * (W + 1) + q + 1] = s[static_cast<std::size_t>(r) * (W + 1) + q + 1] + row;
        }
    }
    return s;
}

double box(const std::vector<double>& s, int stride, int r0, int c0, int r1, int c1) {
    // Sum over rows [r0, r1) and columns [c0, c1).
    return s[static_cast<std::size_t>(r1) * stride + c1] - s[static_cast<std::size_t>(r0) * stride + c1] -
           s[static_cast<std::size_t>(r1) * stride + c0] + s[static_cast<std::size_t>(r0) * stride + c0];
}

double ssim_impl(const Image& a, const Image& b, double* grad) {
    if (a.height != b.height || a.width != b.width) throw DimensionError("ssim: image shapes differ");
    if (a.height < 1 || a.width < 1) throw DimensionError("ssim: empty image");
    const int H = a.height, W = a.width;
    const int wh = std::min(kSsimWindow, H), ww = std::min(kSsimWindow, W);
    const int rows = H - wh + 1, cols = W - ww + 1;
    const double n = static_cast<double>(wh) * ww;
    const double windows = static_cast<double>(rows) * cols * 3.0;
    const int stride = W + 1;

    std::vector<double> row_sums(static_cast<std::size_t>(rows) * 3, 0.0);
    for (int c = 0; c < 3; ++c) {
        const auto sa = integral(a, b, c, [](double x, double) { return x; });
        const auto sb = integral(a, b, c, [](double, double y) { return y; });
        const auto saa = integral(a, b, c, [](double x, double) { return x * x; });
        const auto sbb = integral(a, b, c, [](double, double y) { return y * y; });
        const auto sab = integral(a, b, c, [](double x, double y) { return x * y; });

        // Per-window gradient coefficients: dS_w/dA_k = P0 + A_k P1 + B_k P2.
        std::vector<double> p0, p1, p2;
        if (grad) {
            p0.assign(static_cast<std::size_t>(rows) * cols, 0.0);
            p1.assign(p0.size(), 0.0);
            p2.assign(p0.size(), 0.0);
        }

#pragma omp parallel for schedule(static)
        for (int r = 0; r < rows; ++r) {
            double acc = 0.0;
            for (int q = 0; q < cols; ++q) {
                const double mu_a = box(sa, stride, r, q, r + wh, q + ww) / n;
                const double mu_b = box(sb, stride, r, q, r + wh, q + ww) / n;
                const double var_a = box(saa, stride, r, q, r + wh, q + ww) / n - mu_a * mu_a;
                const double var_b = box(sbb, stride, r, q, r + wh, q + ww) / n - mu_b * mu_b;
                const double cov = box(sab, stride, r, q, r + wh, q + ww) / n - mu_a * mu_b;
                const double n1 = 2.0 * mu_a * mu_b + kSsimC1;
                const double n2 = 2.0 * cov + kSsimC2;
                const double d1 = mu_a * mu_a + mu_b * mu_b + kSsimC1;
                const double d2 = var_a + var_b + kSsimC2;
                const double s = n1 * n2 / (d1 * d2);
                acc += s;
                if (grad) {
                    const std::size_t k = static_cast<std::size_t>(r) * cols + q;
                    p0[k] = (2.0 * mu_b * (n2 - n1) / (d1 * d2) - 2.0 * s * mu_a / d1 + 2.0 * s * mu_a / d2) / n;
                    p1[k] = -2.0 * s / (d2 * n);
                    p2[k] = 2.0 * n1 / (d1 * d2 * n);
                }
            }
            row_sums[static_cast<std::size_t>(c) * rows + r] = acc;
        }

        if (!grad) continue;
        // Gather: pixel (r, q) is covered by windows with top-left in
        // [r - wh + 1, r] x [q - ww + 1, q], clipped to the valid range.
        auto table = [&](const std::vector<double>& p) {
            std::vector<double> s(static_cast<std::size_t>(rows + 1) * (cols + 1), 0.0);
            for (int r = 0; r < rows; ++r) {
                double row = 0.0;
                for (int q = 0; q < cols; ++q) {
                    row += p[static_cast<std::size_t>(r) * cols + q];
                    s[static_cast<std::size_t>(r + 1) * (cols + 1) + q + 1] =
                        s[static_cast<std::size_t>(r) * (cols + 1) + q + 1] + row;
                }
            }
            return s;
        };
        const auto t0 = table(p0), t1 = table(p1), t2 = table(p2);
#pragma omp parallel for schedule(static)
        for (int r = 0; r < H; ++r) {
            const int r0 = std::max(0, r - wh + 1), r1 = std::min(rows - 1, r) + 1;
            for (int q = 0; q < W; ++q) {
                const int c0 = std::max(0, q - ww + 1), c1 = std::min(cols - 1, q) + 1;
                const double g = box(t0, cols + 1, r0, c0, r1, c1) + a.at(r, q, c) * box(t1, cols + 1, r0, c0, r1, c1) +
                                 b.at(r, q, c) * box(t2, cols + 1, r0, c0, r1, c1);
                grad[(static_cast<std::size_t>(r) * W + q) * 3 + c] = g / windows;
            }
        }
    }
    double total = 0.0;
    for (double v : row_sums) total += v;
    return total / windows;
}

}  // namespace

double ssim(const Image& a, const Image& b) { return ssim_impl(a, b, nullptr); }

double ssim(const Image& a, const Image& b, std::span<double> grad_a) {
    if (grad_a.size() != a.rgb.size()) throw DimensionError("ssim: gradient buffer has the wrong size");
    return ssim_impl(a, b, grad_a.data());
}

}  // namespace extend3d
