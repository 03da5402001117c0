#include "naive_net.hpp"

namespace testsupport {

std::vector<double> naive_conv_layer(const auginv::ConvSpec& spec, const auginv::AlignedVec<double>& weights,
                                     const auginv::AlignedVec<double>& biases, const std::vector<double>& image,
                                     int in_h, int in_w) {
    const int out_h = (in_h + 2 * spec.pad - spec.ksize) / spec.stride + 1;
    const int out_w = (in_w + 2 * spec.pad - spec.ksize) / spec.stride + 1;
    std::vector<double> out(static_cast<size_t>(spec.out_ch) * out_h * out_w, 0.0);
    for (int oc = 0; oc < spec.out_ch; ++oc) {
        for (int oy = 0; oy < out_h; ++oy) {
            for (int ox = 0; ox < out_w; ++ox) {
                double acc = biases[static_cast<size_t>(oc)];
                for (int ic = 0; ic < spec.in_ch; ++ic) {
                    for (int ky = 0; ky < spec.ksize; ++ky) {
                        for (int kx = 0; kx < spec.ksize; ++kx) {
                            const int y = oy * spec.stride - spec.pad + ky;
                            const int x = ox * spec.stride - spec.pad + kx;
                            if (y < 0 || y >= in_h || x < 0 || x >= in_w) continue;
                            const double w =
                                weights[static_cast<size_t>(((oc * spec.in_ch + ic) * spec.ksize + ky) * spec.ksize +
                                                            kx)];
                            acc += w * image[static_cast<size_t>((ic * in_h + y) * in_w + x)];
                        }
                    }
                }
                if (spec.relu && acc < 0.0) acc = 0.0;
                out[static_cast<size_t>((oc * out_h + oy) * out_w + ox)] = acc;
            }
        }
    }
    return out;
}

std::vector<double> naive_logits(const auginv::Architecture& arch, const auginv::NetParams<double>& params,
                                 const std::vector<double>& batch, int batch_size) {
    const int classes = arch.num_classes();
    std::vector<double> logits(static_cast<size_t>(batch_size) * classes, 0.0);
    const auto in_dims = arch.dims(0);
    for (int b = 0; b < batch_size; ++b) {
        std::vector<double> cur(batch.begin() + b * in_dims.flat(), batch.begin() + (b + 1) * in_dims.flat());
        int h = arch.in_h, w = arch.in_w;
        for (int l = 0; l < arch.num_layers(); ++l) {
            const auginv::ConvSpec& spec = arch.layers[static_cast<size_t>(l)];
            cur = naive_conv_layer(spec, params.layers[static_cast<size_t>(l)].weights,
                                   params.layers[static_cast<size_t>(l)].biases, cur, h, w);
            h = (h + 2 * spec.pad - spec.ksize) / spec.stride + 1;
            w = (w + 2 * spec.pad - spec.ksize) / spec.stride + 1;
        }
        for (int c = 0; c < classes; ++c) {
            double sum = 0.0;
            for (int p = 0; p < h * w; ++p) sum += cur[static_cast<size_t>(c * h * w + p)];
            logits[static_cast<size_t>(b * classes + c)] = sum / (h * w);
        }
    }
    return logits;
}

}  // namespace testsupport
