#include "auginv/augment.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "auginv/errors.hpp"
#include "auginv/util.hpp"

namespace auginv {

namespace {
constexpr double kDegToRad = std::numbers::pi / 180.0;

double clamp01(double v) { return std::min(1.0, std::max(0.0, v)); }
int clampi(int v, int lo, int hi) { return std::min(hi, std::max(lo, v)); }
}  // namespace

void AugmentScheme::validate() const {
    auto nonneg = [](double v, const char* name) {
        if (!(v >= 0.0)) throw ConfigError(strf("augmentation range %s must be non-negative", name));
    };
    nonneg(rotation_deg, "rotation_deg");
    nonneg(translate_frac, "translate_frac");
    nonneg(scale_delta, "scale_delta");
    nonneg(shear_deg, "shear_deg");
    nonneg(contrast_delta, "contrast_delta");
    nonneg(brightness_delta, "brightness_delta");
    if (!(flip_prob >= 0.0 && flip_prob <= 1.0)) throw ConfigError("flip_prob must be in [0,1]");
    if (!(1.0 - scale_delta > 0.0)) throw ConfigError("scale_delta must keep 1-s > 0");
    if (!(1.0 - contrast_delta > 0.0)) throw ConfigError("contrast_delta must keep 1-c > 0");
    if (!(shear_deg < 89.0)) throw ConfigError("shear_deg must stay below 89 degrees");
}

bool AugmentParams::is_identity() const {
    return !flip && rotation_deg == 0.0 && translate_x == 0.0 && translate_y == 0.0 && scale == 1.0 &&
           shear_deg == 0.0 && contrast == 1.0 && brightness == 0.0;
}

AugmentParams sample_train_params(RngStream& rng, const AugmentScheme& s) {
    AugmentParams p;
    p.flip = rng.bernoulli(s.flip_prob);
    p.rotation_deg = rng.uniform(-s.rotation_deg, s.rotation_deg);
    p.translate_x = rng.uniform(-s.translate_frac, s.translate_frac);
    p.translate_y = rng.uniform(-s.translate_frac, s.translate_frac);
    p.scale = rng.uniform(1.0 - s.scale_delta, 1.0 + s.scale_delta);
    p.shear_deg = rng.uniform(-s.shear_deg, s.shear_deg);
    p.contrast = rng.uniform(1.0 - s.contrast_delta, 1.0 + s.contrast_delta);
    p.brightness = rng.uniform(-s.brightness_delta, s.brightness_delta);
    return p;
}

AugmentParams sample_eval_extreme_params(RngStream& rng, const AugmentScheme& s) {
    auto sign = [&rng]() { return rng.uniform01() < 0.5 ? -1.0 : 1.0; };
    AugmentParams p;
    p.flip = rng.bernoulli(s.flip_prob);
    p.rotation_deg = sign() * (s.rotation_deg / 2.0);
    p.translate_x = sign() * (s.translate_frac / 2.0);
    p.translate_y = sign() * (s.translate_frac / 2.0);
    p.scale = 1.0 + sign() * (s.scale_delta / 2.0);
    p.shear_deg = sign() * (s.shear_deg / 2.0);
    p.contrast = 1.0 + sign() * (s.contrast_delta / 2.0);
    p.brightness = sign() * (s.brightness_delta / 2.0);
    return p;
}

std::array<double, 9> forward_affine_matrix(const AugmentParams& p, int width, int height) {
    double theta = p.rotation_deg * kDegToRad;
    double cos_t = std::cos(theta), sin_t = std::sin(theta);
    double shear = std::tan(p.shear_deg * kDegToRad);
    double fx = p.flip ? -1.0 : 1.0;

    // A = Rotate * Scale * Shear * Flip, applied to centered coordinates.
    // Shear*Flip = [[fx, shear], [0, 1]]; Scale multiplies by s.
    double a00 = p.scale * fx, a01 = p.scale * shear;
    double a10 = 0.0, a11 = p.scale;
    double m00 = cos_t * a00 - sin_t * a10;
    double m01 = cos_t * a01 - sin_t * a11;
    double m10 = sin_t * a00 + cos_t * a10;
    double m11 = sin_t * a01 + cos_t * a11;

    double cx = (width - 1) / 2.0, cy = (height - 1) / 2.0;
    double tx = p.translate_x * width, ty = p.translate_y * height;
    return {m00, m01, cx + tx - m00 * cx - m01 * cy,
            m10, m11, cy + ty - m10 * cx - m11 * cy,
            0.0, 0.0, 1.0};
}

void apply_augmentation(const float* src, float* dst, int channels, int height, int width,
                        const AugmentParams& p) {
    const std::array<double, 9> m = forward_affine_matrix(p, width, height);
    double det = m[0] * m[4] - m[1] * m[3];
    if (det == 0.0) throw ContractError("apply_augmentation: singular affine map");
    // Inverse of the 2x2 part; the warp samples source coordinates per
    // destination pixel (inverse mapping).
    double i00 = m[4] / det, i01 = -m[1] / det;
    double i10 = -m[3] / det, i11 = m[0] / det;

    const int plane = height * width;
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            // m[2]/m[5] fold center and translation into the offset.
            double dx = static_cast<double>(x) - m[2], dy = static_cast<double>(y) - m[5];
            double sx = i00 * dx + i01 * dy;
            double sy = i10 * dx + i11 * dy;
            int x0 = static_cast<int>(std::floor(sx)), y0 = static_cast<int>(std::floor(sy));
            double fx = sx - x0, fy = sy - y0;
            int x0c = clampi(x0, 0, width - 1), x1c = clampi(x0 + 1, 0, width - 1);
            int y0c = clampi(y0, 0, height - 1), y1c = clampi(y0 + 1, 0, height - 1);
            for (int c = 0; c < channels; ++c) {
                const float* pl = src + c * plane;
                double v00 = pl[y0c * width + x0c], v01 = pl[y0c * width + x1c];
                double v10 = pl[y1c * width + x0c], v11 = pl[y1c * width + x1c];
                double top = v00 + fx * (v01 - v00);
                double bot = v10 + fx * (v11 - v10);
                dst[c * plane + y * width + x] = static_cast<float>(top + fy * (bot - top));
            }
        }
    }

    if (p.contrast != 1.0 || p.brightness != 0.0) {
        float contrast = static_cast<float>(p.contrast);
        float brightness = static_cast<float>(p.brightness);
        for (int k = 0; k < channels * plane; ++k) {
            double v = (dst[k] - 0.5f) * contrast + 0.5f + brightness;
            dst[k] = static_cast<float>(clamp01(v));
        }
    }
}

}  // namespace auginv
