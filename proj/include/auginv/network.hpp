#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>

#include "auginv/aligned.hpp"
#include <string>
#include <utility>
#include <vector>

namespace auginv {

struct ConvSpec {
    std::string name;
    int out_ch = 0;
    int in_ch = 0;
    int ksize = 1;
    int stride = 1;
    int pad = 0;
    bool relu = true;
    bool operator==(const ConvSpec&) const = default;
};

struct LayerDims {
    int ch = 0, h = 0, w = 0;
    std::int64_t flat() const { return static_cast<std::int64_t>(ch) * h * w; }
};

// Convolution stack topology. The classifier is always global average
// pooling over the last layer's map; the last layer's channel count is the
// class count.
struct Architecture {
    int in_ch = 3, in_h = 32, in_w = 32;
    std::vector<ConvSpec> layers;

    // All-CNN-C without dropout/weight decay: 3x3/96 x3 (third stride 2),
    // 3x3/192 x3 (third stride 2), 3x3/192, 1x1/192, 1x1/10; ReLU after all
    // but the last. All 3x3 convolutions use same-padding (pad 1).
    // width_mult scales the two channel widths (the class count stays 10).
    static Architecture all_cnn_c(double width_mult = 1.0);

    int num_layers() const { return static_cast<int>(layers.size()); }
    int num_classes() const { return layers.back().out_ch; }
    LayerDims dims(int layer) const;  // output dims of layer 1..L; 0 = input
    std::int64_t param_count() const;
    void validate() const;
    bool operator==(const Architecture&) const = default;
};

template <typename S>
struct NetParams {
    struct Layer {
        AlignedVec<S> weights;  // out_ch x in_ch x kh x kw, row-major
        AlignedVec<S> biases;   // out_ch
    };
    std::vector<Layer> layers;

    static NetParams zeros(const Architecture& arch);
    std::int64_t count() const;
    bool all_finite() const;
    void set_zero();
};

using ModelParams = NetParams<float>;

// Activations captured by a forward pass. Post-ReLU maps double as the
// activation taps (the last layer's tap is its pre-pooling conv output) and
// as the inputs backward needs; layer 0 is the normalized input batch.
template <typename S>
struct ForwardState {
    int batch = 0;
    std::vector<std::int64_t> flat;      // flat[l] = per-image tap length, l = 0..L
    AlignedVec<S> input;                 // batch * flat[0]
    std::vector<AlignedVec<S>> act;      // act[l-1]: batch * flat[l]
    AlignedVec<S> logits;                // batch * classes

    const S* layer_data(int layer) const { return layer == 0 ? input.data() : act[layer - 1].data(); }
    std::span<const S> tap(int layer, int image) const {
        return {layer_data(layer) + image * flat[layer], static_cast<size_t>(flat[layer])};
    }
};

template <typename S>
struct BackwardScratch {
    AlignedVec<S> grad_a, grad_b;
};

template <typename S>
class Network {
public:
    explicit Network(Architecture arch);

    const Architecture& arch() const { return arch_; }
    NetParams<S>& params() { return params_; }
    const NetParams<S>& params() const { return params_; }

    // He fan-in scaled Gaussian weights, zero biases; fully determined by the
    // seed (per-layer derived streams).
    void init_params(std::uint64_t seed);

    // Deterministic forward over a batch in CHW layout; retains every layer's
    // map in `state` and fills logits (global average pool of the last map).
    // Throws NumericError naming the first layer with a non-finite value.
    void forward(const S* batch_chw, int batch, ForwardState<S>& state) const;

    // Exact gradients of a scalar loss: `logit_grads` is d(loss)/d(logits)
    // (batch x classes); `tap_grads` maps layer index (1..L) to
    // d(loss)/d(tap) buffers (batch x flat[l]) that accumulate additively
    // with the backpropagated signal. `grads` is zeroed then filled.
    void backward(const ForwardState<S>& state, const S* logit_grads,
                  const std::map<int, const S*>& tap_grads, NetParams<S>& grads,
                  BackwardScratch<S>& scratch) const;

    int threads = 0;  // 0 = all hardware threads; fixed per run

private:
    Architecture arch_;
    NetParams<S> params_;
};

// Portable checkpoint: text header (format version, layer shapes, byte
// order), then raw little-endian 32-bit floats, weights then biases per
// layer. Round-trips bit-exactly.
void save_checkpoint(const Architecture& arch, const ModelParams& params, const std::filesystem::path& file);
std::pair<Architecture, ModelParams> load_checkpoint(const std::filesystem::path& file);

}  // namespace auginv
