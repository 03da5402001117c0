#include "auginv/network.hpp"

#include <omp.h>

#include <Eigen/Dense>
#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "auginv/errors.hpp"
#include "auginv/rng.hpp"
#include "auginv/util.hpp"

static_assert(std::endian::native == std::endian::little, "checkpoint format assumes a little-endian host");

namespace auginv {

namespace {

template <typename S>
using MatrixRM = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename S>
using MatrixCM = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::ColMajor>;
template <typename S>
using VectorX = Eigen::Matrix<S, Eigen::Dynamic, 1>;

int conv_out(int in, int k, int stride, int pad) { return (in + 2 * pad - k) / stride + 1; }

int resolve_threads(int requested) {
    return requested > 0 ? requested : omp_get_max_threads();
}

// Patch matrix of one image for one conv layer: K x P column-major with
// K = in_ch*k*k rows and P = out_h*out_w columns; zero padding.
template <typename S>
void im2col(const S* img, int in_ch, int in_h, int in_w, const ConvSpec& spec, int out_h, int out_w, S* cols) {
    const int k = spec.ksize;
    const int patch = in_ch * k * k;
    for (int oy = 0; oy < out_h; ++oy) {
        for (int ox = 0; ox < out_w; ++ox) {
            S* col = cols + (static_cast<std::int64_t>(oy) * out_w + ox) * patch;
            const int iy0 = oy * spec.stride - spec.pad;
            const int ix0 = ox * spec.stride - spec.pad;
            int idx = 0;
            for (int c = 0; c < in_ch; ++c) {
                const S* plane = img + static_cast<std::int64_t>(c) * in_h * in_w;
                for (int ky = 0; ky < k; ++ky) {
                    const int y = iy0 + ky;
                    for (int kx = 0; kx < k; ++kx, ++idx) {
                        const int x = ix0 + kx;
                        col[idx] = (y >= 0 && y < in_h && x >= 0 && x < in_w)
                                       ? plane[static_cast<std::int64_t>(y) * in_w + x]
                                       : S(0);
                    }
                }
            }
        }
    }
}

// Scatter-add of a patch-gradient matrix back onto one image.
template <typename S>
void col2im_add(const S* cols, int in_ch, int in_h, int in_w, const ConvSpec& spec, int out_h, int out_w, S* img) {
    const int k = spec.ksize;
    const int patch = in_ch * k * k;
    for (int oy = 0; oy < out_h; ++oy) {
        for (int ox = 0; ox < out_w; ++ox) {
            const S* col = cols + (static_cast<std::int64_t>(oy) * out_w + ox) * patch;
            const int iy0 = oy * spec.stride - spec.pad;
            const int ix0 = ox * spec.stride - spec.pad;
            int idx = 0;
            for (int c = 0; c < in_ch; ++c) {
                S* plane = img + static_cast<std::int64_t>(c) * in_h * in_w;
                for (int ky = 0; ky < k; ++ky) {
                    const int y = iy0 + ky;
                    for (int kx = 0; kx < k; ++kx, ++idx) {
                        const int x = ix0 + kx;
                        if (y >= 0 && y < in_h && x >= 0 && x < in_w)
                            plane[static_cast<std::int64_t>(y) * in_w + x] += col[idx];
                    }
                }
            }
        }
    }
}

}  // namespace

Architecture Architecture::all_cnn_c(double width_mult) {
    if (!(width_mult > 0.0)) throw ContractError("all_cnn_c: width_mult must be positive");
    auto scaled = [width_mult](int ch) { return std::max(1, static_cast<int>(std::lround(ch * width_mult))); };
    const int c1 = scaled(96), c2 = scaled(192);
    Architecture a;
    a.layers = {
        {"conv1", c1, 3, 3, 1, 1, true},  {"conv2", c1, c1, 3, 1, 1, true}, {"conv3", c1, c1, 3, 2, 1, true},
        {"conv4", c2, c1, 3, 1, 1, true}, {"conv5", c2, c2, 3, 1, 1, true}, {"conv6", c2, c2, 3, 2, 1, true},
        {"conv7", c2, c2, 3, 1, 1, true}, {"conv8", c2, c2, 1, 1, 0, true}, {"conv9", 10, c2, 1, 1, 0, false},
    };
    a.validate();
    return a;
}

LayerDims Architecture::dims(int layer) const {
    LayerDims d{in_ch, in_h, in_w};
    for (int l = 1; l <= layer; ++l) {
        const ConvSpec& spec = layers[static_cast<size_t>(l - 1)];
        d = {spec.out_ch, conv_out(d.h, spec.ksize, spec.stride, spec.pad),
             conv_out(d.w, spec.ksize, spec.stride, spec.pad)};
    }
    return d;
}

std::int64_t Architecture::param_count() const {
    std::int64_t n = 0;
    for (const ConvSpec& spec : layers)
        n += static_cast<std::int64_t>(spec.out_ch) * spec.in_ch * spec.ksize * spec.ksize + spec.out_ch;
    return n;
}

void Architecture::validate() const {
    if (layers.empty()) throw ContractError("architecture has no layers");
    int ch = in_ch;
    LayerDims d{in_ch, in_h, in_w};
    for (const ConvSpec& spec : layers) {
        if (spec.in_ch != ch) throw ContractError("architecture channel mismatch at " + spec.name);
        if (spec.ksize < 1 || spec.stride < 1 || spec.pad < 0 || spec.out_ch < 1)
            throw ContractError("invalid conv spec at " + spec.name);
        d = {spec.out_ch, conv_out(d.h, spec.ksize, spec.stride, spec.pad),
             conv_out(d.w, spec.ksize, spec.stride, spec.pad)};
        if (d.h < 1 || d.w < 1) throw ContractError("spatial size collapses at " + spec.name);
        ch = spec.out_ch;
    }
}

template <typename S>
NetParams<S> NetParams<S>::zeros(const Architecture& arch) {
    NetParams<S> p;
    p.layers.resize(arch.layers.size());
    for (size_t l = 0; l < arch.layers.size(); ++l) {
        const ConvSpec& spec = arch.layers[l];
        p.layers[l].weights.assign(
            static_cast<size_t>(spec.out_ch) * spec.in_ch * spec.ksize * spec.ksize, S(0));
        p.layers[l].biases.assign(static_cast<size_t>(spec.out_ch), S(0));
    }
    return p;
}

template <typename S>
std::int64_t NetParams<S>::count() const {
    std::int64_t n = 0;
    for (const Layer& l : layers) n += static_cast<std::int64_t>(l.weights.size() + l.biases.size());
    return n;
}

template <typename S>
bool NetParams<S>::all_finite() const {
    for (const Layer& l : layers) {
        for (S v : l.weights)
            if (!std::isfinite(v)) return false;
        for (S v : l.biases)
            if (!std::isfinite(v)) return false;
    }
    return true;
}

template <typename S>
void NetParams<S>::set_zero() {
    for (Layer& l : layers) {
        std::fill(l.weights.begin(), l.weights.end(), S(0));
        std::fill(l.biases.begin(), l.biases.end(), S(0));
    }
}

template <typename S>
Network<S>::Network(Architecture arch) : arch_(std::move(arch)) {
    arch_.validate();
    params_ = NetParams<S>::zeros(arch_);
}

template <typename S>
void Network<S>::init_params(std::uint64_t seed) {
    for (size_t l = 0; l < params_.layers.size(); ++l) {
        const ConvSpec& spec = arch_.layers[l];
        const double fan_in = static_cast<double>(spec.in_ch) * spec.ksize * spec.ksize;
        const double stddev = std::sqrt(2.0 / fan_in);
        RngStream rng = RngStream::derive(seed, {stream::kInit, static_cast<std::uint64_t>(l)});
        for (S& w : params_.layers[l].weights) w = static_cast<S>(stddev * rng.normal());
        std::fill(params_.layers[l].biases.begin(), params_.layers[l].biases.end(), S(0));
    }
}

template <typename S>
void Network<S>::forward(const S* batch_chw, int batch, ForwardState<S>& state) const {
    const int L = arch_.num_layers();
    state.batch = batch;
    state.flat.resize(static_cast<size_t>(L) + 1);
    for (int l = 0; l <= L; ++l) state.flat[static_cast<size_t>(l)] = arch_.dims(l).flat();
    state.input.assign(batch_chw, batch_chw + batch * state.flat[0]);
    state.act.resize(static_cast<size_t>(L));
    state.logits.assign(static_cast<size_t>(batch) * arch_.num_classes(), S(0));

    const int nt = resolve_threads(threads);
    std::int64_t max_patch = 0;
    for (int l = 1; l <= L; ++l) {
        const ConvSpec& spec = arch_.layers[static_cast<size_t>(l - 1)];
        LayerDims out = arch_.dims(l);
        max_patch = std::max(max_patch,
                             static_cast<std::int64_t>(spec.in_ch) * spec.ksize * spec.ksize * out.h * out.w);
    }
    std::vector<AlignedVec<S>> cols(static_cast<size_t>(nt));
    for (auto& c : cols) c.resize(static_cast<size_t>(max_patch));

    for (int l = 1; l <= L; ++l) {
        const ConvSpec& spec = arch_.layers[static_cast<size_t>(l - 1)];
        const LayerDims in = arch_.dims(l - 1), out = arch_.dims(l);
        const int patch = spec.in_ch * spec.ksize * spec.ksize;
        const int pixels = out.h * out.w;
        auto& act = state.act[static_cast<size_t>(l - 1)];
        act.resize(static_cast<size_t>(batch) * state.flat[static_cast<size_t>(l)]);
        const S* in_data = state.layer_data(l - 1);
        Eigen::Map<const MatrixRM<S>> weights(params_.layers[static_cast<size_t>(l - 1)].weights.data(),
                                              spec.out_ch, patch);
        Eigen::Map<const VectorX<S>> bias(params_.layers[static_cast<size_t>(l - 1)].biases.data(), spec.out_ch);

#pragma omp parallel for schedule(static) num_threads(nt)
        for (int b = 0; b < batch; ++b) {
            S* col_buf = cols[static_cast<size_t>(omp_get_thread_num())].data();
            im2col(in_data + b * in.flat(), spec.in_ch, in.h, in.w, spec, out.h, out.w, col_buf);
            Eigen::Map<const MatrixCM<S>> col_map(col_buf, patch, pixels);
            Eigen::Map<MatrixRM<S>> out_map(act.data() + b * out.flat(), spec.out_ch, pixels);
            out_map.noalias() = weights * col_map;
            out_map.colwise() += bias;
            if (spec.relu) out_map = out_map.cwiseMax(S(0));
        }

        Eigen::Map<const MatrixRM<S>> check(act.data(), batch, state.flat[static_cast<size_t>(l)]);
        if (!check.allFinite())
            throw NumericError(strf("non-finite activation at layer %s", spec.name.c_str()));
    }

    // Global average pooling over the last map.
    const LayerDims last = arch_.dims(L);
    const int pixels = last.h * last.w;
    const S inv_pixels = S(1) / static_cast<S>(pixels);
    const auto& top = state.act[static_cast<size_t>(L - 1)];
    for (int b = 0; b < batch; ++b) {
        for (int c = 0; c < last.ch; ++c) {
            const S* plane = top.data() + b * last.flat() + static_cast<std::int64_t>(c) * pixels;
            S sum = S(0);
            for (int p = 0; p < pixels; ++p) sum += plane[p];
            state.logits[static_cast<size_t>(b) * last.ch + static_cast<size_t>(c)] = sum * inv_pixels;
        }
    }
}

template <typename S>
void Network<S>::backward(const ForwardState<S>& state, const S* logit_grads,
                          const std::map<int, const S*>& tap_grads, NetParams<S>& grads,
                          BackwardScratch<S>& scratch) const {
    const int L = arch_.num_layers();
    const int batch = state.batch;
    if (batch < 1 || state.act.size() != static_cast<size_t>(L))
        throw ContractError("backward: forward state does not match the architecture");
    for (const auto& [layer, ptr] : tap_grads) {
        if (layer < 1 || layer > L) throw ContractError(strf("backward: tap gradient for invalid layer %d", layer));
        if (ptr == nullptr) throw ContractError("backward: null tap gradient");
    }

    if (grads.layers.size() != static_cast<size_t>(L)) grads = NetParams<S>::zeros(arch_);
    grads.set_zero();

    const int nt = resolve_threads(threads);
    std::int64_t max_flat = state.flat[0];
    std::int64_t max_patch = 0, max_wsize = 0;
    for (int l = 1; l <= L; ++l) {
        const ConvSpec& spec = arch_.layers[static_cast<size_t>(l - 1)];
        const LayerDims out = arch_.dims(l);
        max_flat = std::max(max_flat, state.flat[static_cast<size_t>(l)]);
        max_patch = std::max(max_patch,
                             static_cast<std::int64_t>(spec.in_ch) * spec.ksize * spec.ksize * out.h * out.w);
        max_wsize = std::max(max_wsize, static_cast<std::int64_t>(params_.layers[static_cast<size_t>(l - 1)].weights.size()) +
                                            spec.out_ch);
    }
    scratch.grad_a.assign(static_cast<size_t>(batch * max_flat), S(0));
    scratch.grad_b.resize(static_cast<size_t>(batch * max_flat));
    S* cur = scratch.grad_a.data();   // d(loss)/d(act_l), current layer
    S* next = scratch.grad_b.data();  // d(loss)/d(act_{l-1}) being built

    // Per-thread scratch: one patch buffer (forward's and the gradient's) and
    // one weight/bias accumulator, reduced in thread order for determinism.
    std::vector<AlignedVec<S>> cols(static_cast<size_t>(nt)), dcols(static_cast<size_t>(nt)),
        wacc(static_cast<size_t>(nt));
    for (int t = 0; t < nt; ++t) {
        cols[static_cast<size_t>(t)].resize(static_cast<size_t>(max_patch));
        dcols[static_cast<size_t>(t)].resize(static_cast<size_t>(max_patch));
        wacc[static_cast<size_t>(t)].resize(static_cast<size_t>(max_wsize));
    }

    // Seed the top gradient: GAP backprop plus the top tap gradient.
    {
        const LayerDims last = arch_.dims(L);
        const int pixels = last.h * last.w;
        const S inv_pixels = S(1) / static_cast<S>(pixels);
        for (int b = 0; b < batch; ++b) {
            S* dst = cur + b * last.flat();
            for (int c = 0; c < last.ch; ++c) {
                const S g = logit_grads[static_cast<size_t>(b) * last.ch + static_cast<size_t>(c)] * inv_pixels;
                S* plane = dst + static_cast<std::int64_t>(c) * pixels;
                for (int p = 0; p < pixels; ++p) plane[p] = g;
            }
        }
        if (auto it = tap_grads.find(L); it != tap_grads.end()) {
            const S* tg = it->second;
            const std::int64_t n = static_cast<std::int64_t>(batch) * last.flat();
            for (std::int64_t i = 0; i < n; ++i) cur[i] += tg[i];
        }
    }

    for (int l = L; l >= 1; --l) {
        const ConvSpec& spec = arch_.layers[static_cast<size_t>(l - 1)];
        const LayerDims in = arch_.dims(l - 1), out = arch_.dims(l);
        const int patch = spec.in_ch * spec.ksize * spec.ksize;
        const int pixels = out.h * out.w;
        const std::int64_t wsize = static_cast<std::int64_t>(grads.layers[static_cast<size_t>(l - 1)].weights.size());
        const S* in_data = state.layer_data(l - 1);
        const S* act = state.act[static_cast<size_t>(l - 1)].data();
        Eigen::Map<const MatrixRM<S>> weights(params_.layers[static_cast<size_t>(l - 1)].weights.data(),
                                              spec.out_ch, patch);
        const bool need_input_grad = l > 1;

        for (int t = 0; t < nt; ++t)
            std::fill(wacc[static_cast<size_t>(t)].begin(),
                      wacc[static_cast<size_t>(t)].begin() + wsize + spec.out_ch, S(0));

#pragma omp parallel for schedule(static) num_threads(nt)
        for (int b = 0; b < batch; ++b) {
            const int t = omp_get_thread_num();
            S* col_buf = cols[static_cast<size_t>(t)].data();
            S* dcol_buf = dcols[static_cast<size_t>(t)].data();
            S* dpre = cur + b * out.flat();

            if (spec.relu) {
                const S* a = act + b * out.flat();
                for (std::int64_t i = 0; i < out.flat(); ++i)
                    if (a[i] <= S(0)) dpre[i] = S(0);
            }

            im2col(in_data + b * in.flat(), spec.in_ch, in.h, in.w, spec, out.h, out.w, col_buf);
            Eigen::Map<const MatrixCM<S>> col_map(col_buf, patch, pixels);
            Eigen::Map<const MatrixRM<S>> dpre_map(dpre, spec.out_ch, pixels);

            Eigen::Map<MatrixRM<S>> wgrad(wacc[static_cast<size_t>(t)].data(), spec.out_ch, patch);
            wgrad.noalias() += dpre_map * col_map.transpose();
            Eigen::Map<VectorX<S>> bgrad(wacc[static_cast<size_t>(t)].data() + wsize, spec.out_ch);
            bgrad.noalias() += dpre_map.rowwise().sum();

            if (need_input_grad) {
                Eigen::Map<MatrixCM<S>> dcol_map(dcol_buf, patch, pixels);
                dcol_map.noalias() = weights.transpose() * dpre_map;
                S* dst = next + b * in.flat();
                std::fill(dst, dst + in.flat(), S(0));
                col2im_add(dcol_buf, spec.in_ch, in.h, in.w, spec, out.h, out.w, dst);
            }
        }

        auto& glayer = grads.layers[static_cast<size_t>(l - 1)];
        for (int t = 0; t < nt; ++t) {
            const S* acc = wacc[static_cast<size_t>(t)].data();
            for (std::int64_t i = 0; i < wsize; ++i) glayer.weights[static_cast<size_t>(i)] += acc[i];
            for (int c = 0; c < spec.out_ch; ++c) glayer.biases[static_cast<size_t>(c)] += acc[wsize + c];
        }

        if (need_input_grad) {
            if (auto it = tap_grads.find(l - 1); it != tap_grads.end()) {
                const S* tg = it->second;
                const std::int64_t n = static_cast<std::int64_t>(batch) * in.flat();
                for (std::int64_t i = 0; i < n; ++i) next[i] += tg[i];
            }
            std::swap(cur, next);
        }
    }
}

namespace {
constexpr char kCkptMagic[] = "AUGINV-CKPT";
constexpr int kCkptVersion = 1;
}  // namespace

void save_checkpoint(const Architecture& arch, const ModelParams& params, const std::filesystem::path& file) {
    if (params.count() != arch.param_count()) throw ContractError("save_checkpoint: params do not match architecture");
    std::ofstream out(file, std::ios::binary);
    if (!out) throw CheckpointError("cannot open checkpoint for writing: " + file.string());
    out << kCkptMagic << " " << kCkptVersion << "\n";
    out << "input " << arch.in_ch << " " << arch.in_h << " " << arch.in_w << "\n";
    out << "layers " << arch.num_layers() << "\n";
    for (const ConvSpec& spec : arch.layers)
        out << "layer " << spec.name << " " << spec.out_ch << " " << spec.in_ch << " " << spec.ksize << " "
            << spec.stride << " " << spec.pad << " " << (spec.relu ? 1 : 0) << "\n";
    out << "dtype float32 little-endian\n";
    out << "param_count " << arch.param_count() << "\n";
    out << "DATA\n";
    for (const auto& layer : params.layers) {
        out.write(reinterpret_cast<const char*>(layer.weights.data()),
                  static_cast<std::streamsize>(layer.weights.size() * sizeof(float)));
        out.write(reinterpret_cast<const char*>(layer.biases.data()),
                  static_cast<std::streamsize>(layer.biases.size() * sizeof(float)));
    }
    if (!out) throw CheckpointError("checkpoint write failed: " + file.string());
}

std::pair<Architecture, ModelParams> load_checkpoint(const std::filesystem::path& file) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw CheckpointError("cannot open checkpoint: " + file.string());
    std::string line;
    auto next_line = [&]() {
        if (!std::getline(in, line)) throw CheckpointError("checkpoint header truncated: " + file.string());
        return line;
    };

    std::istringstream head(next_line());
    std::string magic;
    int version = 0;
    head >> magic >> version;
    if (magic != kCkptMagic) throw CheckpointError("not a checkpoint file: " + file.string());
    if (version != kCkptVersion) throw CheckpointError(strf("unsupported checkpoint version %d", version));

    Architecture arch;
    std::int64_t declared_count = -1;
    int declared_layers = -1;
    while (next_line() != "DATA") {
        std::istringstream ls(line);
        std::string key;
        ls >> key;
        if (key == "input") {
            ls >> arch.in_ch >> arch.in_h >> arch.in_w;
        } else if (key == "layers") {
            ls >> declared_layers;
        } else if (key == "layer") {
            ConvSpec spec;
            int relu = 0;
            ls >> spec.name >> spec.out_ch >> spec.in_ch >> spec.ksize >> spec.stride >> spec.pad >> relu;
            spec.relu = relu != 0;
            if (!ls) throw CheckpointError("malformed layer line in checkpoint: " + line);
            arch.layers.push_back(spec);
        } else if (key == "param_count") {
            ls >> declared_count;
        } else if (key == "dtype") {
            // informative; format is fixed to float32 little-endian in v1
        } else {
            throw CheckpointError("unknown checkpoint header line: " + line);
        }
    }
    if (declared_layers != arch.num_layers())
        throw CheckpointError("checkpoint header layer count mismatch");
    try {
        arch.validate();
    } catch (const ContractError& e) {
        throw CheckpointError(std::string("checkpoint architecture invalid: ") + e.what());
    }
    if (declared_count != arch.param_count())
        throw CheckpointError(strf("checkpoint parameter count mismatch: header says %lld, shapes give %lld",
                                   static_cast<long long>(declared_count),
                                   static_cast<long long>(arch.param_count())));

    ModelParams params = ModelParams::zeros(arch);
    for (auto& layer : params.layers) {
        in.read(reinterpret_cast<char*>(layer.weights.data()),
                static_cast<std::streamsize>(layer.weights.size() * sizeof(float)));
        in.read(reinterpret_cast<char*>(layer.biases.data()),
                static_cast<std::streamsize>(layer.biases.size() * sizeof(float)));
        if (!in) throw CheckpointError("checkpoint payload truncated: " + file.string());
    }
    char extra;
    if (in.read(&extra, 1)) throw CheckpointError("checkpoint has trailing bytes: " + file.string());
    if (!params.all_finite()) throw CheckpointError("checkpoint contains non-finite parameters");
    return {arch, std::move(params)};
}

template struct NetParams<float>;
template struct NetParams<double>;
template struct ForwardState<float>;
template struct ForwardState<double>;
template class Network<float>;
template class Network<double>;

}  // namespace auginv
