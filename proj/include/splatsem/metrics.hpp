// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cmath>
#include <vector>

#include "splatsem/dense_map.hpp"
#include "splatsem/errors.hpp"

namespace splatsem {

inline constexpr double kPsnrCap = 99.0;

/// Peak signal-to-noise ratio for [0,1]-range images, capped at 99 dB.
inline double psnr(const DenseMap& a, const DenseMap& b) {
    if (!a.same_shape(b)) throw ShapeMismatch("psnr expects maps of equal shape");
    double mse = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        double d = a.data[i] - b.data[i];
        mse += d * d;
    }
    mse /= static_cast<double>(a.data.size());
    if (mse <= 0.0) return kPsnrCap;
    return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

namespace detail {

inline std::array<double, 121> ssim_window() {
    std::array<double, 121> w{};
    double sigma = 1.5, sum = 0.0;
    for (int i = 0; i < 11; ++i)
        for (int j = 0; j < 11; ++j) {
            double dy = i - 5.0, dx = j - 5.0;
            w[i * 11 + j] = std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
            sum += w[i * 11 + j];
        }
    for (double& v : w) v /= sum;
    return w;
}

}  // namespace detail

/// Structural similarity with the standard 11x11 Gaussian window (sigma 1.5),
/// valid-mode (windows fully inside the image), averaged over channels.
inline double ssim(const DenseMap& a, const DenseMap& b) {
    if (!a.same_shape(b)) throw ShapeMismatch("ssim expects maps of equal shape");
    if (a.height < 11 || a.width < 11)
        throw ShapeMismatch("ssim requires images at least 11x11");
    static const std::array<double, 121> win = detail::ssim_window();
    const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;

    double total = 0.0;
    long n_windows = 0;
    for (int ch = 0; ch < a.channels; ++ch) {
        for (int y = 0; y + 11 <= a.height; ++y) {
            for (int x = 0; x + 11 <= a.width; ++x) {
                double mx = 0, my = 0, sxx = 0, syy = 0, sxy = 0;
                for (int i = 0; i < 11; ++i) {
                    for (int j = 0; j < 11; ++j) {
                        double w = win[i * 11 + j];
                        double va = a.at(y + i, x + j, ch);
                        double vb = b.at(y + i, x + j, ch);
                        mx += w * va;
                        my += w * vb;
                        sxx += w * va * va;
                        syy += w * vb * vb;
                        sxy += w * va * vb;
                    }
                }
                sxx -= mx * mx;
                syy -= my * my;
                sxy -= mx * my;
                total += ((2 * mx * my + c1) * (2 * sxy + c2)) /
                         ((mx * mx + my * my + c1) * (sxx + syy + c2));
                ++n_windows;
            }
        }
    }
    return total / n_windows;
}

/// Mean intersection-over-union over the classes present in gt. Pixels whose
/// gt label falls outside [0, n_classes) are ignored; an out-of-range
/// prediction at a kept pixel counts as a miss for the gt class.
inline double miou(const std::vector<int>& pred, const std::vector<int>& gt, int n_classes) {
    if (pred.size() != gt.size()) throw ShapeMismatch("miou expects equal-length label grids");
    if (n_classes <= 0) throw ConfigError("n_classes must be positive");
    std::vector<long> tp(n_classes, 0), fp(n_classes, 0), fn(n_classes, 0);
    for (std::size_t i = 0; i < gt.size(); ++i) {
        int g = gt[i];
        if (g < 0 || g >= n_classes) continue;
        int p = pred[i];
        if (p == g) {
            ++tp[g];
        } else {
            ++fn[g];
            if (p >= 0 && p < n_classes) ++fp[p];
        }
    }
    double sum = 0.0;
    int present = 0;
    for (int c = 0; c < n_classes; ++c) {
        if (tp[c] + fn[c] == 0) continue;
        ++present;
        sum += static_cast<double>(tp[c]) / static_cast<double>(tp[c] + fp[c] + fn[c]);
    }
    return present ? sum / present : 0.0;
}

/// Label-grid convenience over single-channel maps (values rounded to int).
inline double miou(const DenseMap& pred, const DenseMap& gt, int n_classes) {
    if (!pred.same_shape(gt) || pred.channels != 1)
        throw ShapeMismatch("miou expects two single-channel maps of equal size");
    std::vector<int> p(pred.data.size()), g(gt.data.size());
    for (std::size_t i = 0; i < p.size(); ++i) {
        p[i] = static_cast<int>(std::llround(pred.data[i]));
        g[i] = static_cast<int>(std::llround(gt.data[i]));
    }
    return miou(p, g, n_classes);
}

}  // namespace splatsem
