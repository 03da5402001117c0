#pragma once

#include <array>

#include "auginv/rng.hpp"

namespace auginv {

// The "heavier" identity-preserving transformation family: random affine
// (flip, rotation, translation, scale, shear) plus contrast and brightness.
// All ranges are symmetric around the identity.
struct AugmentScheme {
    double flip_prob = 0.5;         // horizontal flip probability
    double rotation_deg = 20.0;     // rotation in [-r, +r] degrees
    double translate_frac = 0.15;   // translation in [-t, +t] * image size, per axis
    double scale_delta = 0.2;       // scale in [1-s, 1+s]
    double shear_deg = 15.0;        // x-shear in [-h, +h] degrees
    double contrast_delta = 0.35;   // contrast in [1-c, 1+c]
    double brightness_delta = 0.25; // brightness offset in [-b, +b], [0,1] pixel units

    void validate() const;  // throws ConfigError

    static AugmentScheme none() {
        return AugmentScheme{0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0};
    }
};

// One concrete draw of the scheme.
struct AugmentParams {
    bool flip = false;
    double rotation_deg = 0.0;
    double translate_x = 0.0;  // fraction of width; positive moves content right
    double translate_y = 0.0;  // fraction of height; positive moves content down
    double scale = 1.0;
    double shear_deg = 0.0;
    double contrast = 1.0;
    double brightness = 0.0;

    bool is_identity() const;
};

// Uniform draw from the full ranges. Stream consumption order is fixed:
// flip, rotation, tx, ty, scale, shear, contrast, brightness (one draw each).
AugmentParams sample_train_params(RngStream& rng, const AugmentScheme& scheme);

// Evaluation-mode draw: every continuous parameter takes an endpoint of its
// HALVED range, sign chosen uniformly; the flip stays Bernoulli(flip_prob)
// (a flip has no magnitude to halve). Same stream order and draw count as
// sample_train_params.
AugmentParams sample_eval_extreme_params(RngStream& rng, const AugmentScheme& scheme);

// Forward affine map of the geometric part, as a row-major 3x3 matrix acting
// on pixel coordinates (x=column, y=row). Component order: flip, then shear,
// then scale, then rotation, then translation, all about the image center.
std::array<double, 9> forward_affine_matrix(const AugmentParams& params, int width, int height);

// Applies one parameter draw to a CHW image with pixels in [0,1]:
// inverse-mapped affine warp with bilinear interpolation (out-of-bounds reads
// clamp to the nearest edge pixel), then contrast about 0.5, then brightness,
// then a single clamp back to [0,1]. Identity params reproduce the input
// bit-exactly. src and dst must not alias.
void apply_augmentation(const float* src_chw, float* dst_chw, int channels, int height, int width,
                        const AugmentParams& params);

}  // namespace auginv
