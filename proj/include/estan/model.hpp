#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "estan/arch.hpp"
#include "estan/layers.hpp"
#include "estan/rng.hpp"
#include "estan/tensor.hpp"

namespace estan::model {

/// All learnable kernels, keyed by stable layer name. `order` fixes the
/// canonical sequence (initialization draws, optimizer slots, checkpoints).
template <typename T>
struct ModelParams {
    arch::ArchSpec spec;
    std::vector<std::string> order;
    std::map<std::string, nn::ConvKernel<T>> kernels;
};

template <typename T>
const nn::ConvKernel<T>& kernel(const ModelParams<T>& p, const std::string& name) {
    auto it = p.kernels.find(name);
    if (it == p.kernels.end())
        throw LookupError("no kernel named '" + name + "'");
    return it->second;
}

/// He-normal weights (fan-in of the kernel window), zero biases, drawn in
/// canonical layer order so a seed fully determines every parameter.
template <typename T>
ModelParams<T> init_params(const arch::ArchSpec& spec, uint64_t seed) {
    ModelParams<T> p;
    p.spec = spec;
    SeededRng rng(seed ^ rng_streams::kInitStream);
    for (const arch::ParamShape& s : arch::param_shapes(spec)) {
        nn::ConvKernel<T> k = nn::conv_kernel_zeros<T>(s.out_c, s.in_c, s.kh, s.kw);
        k.weights = he_normal_init<T>(k.weights.dims(), s.in_c * s.kh * s.kw, rng);
        p.order.push_back(s.name);
        p.kernels.emplace(s.name, std::move(k));
    }
    return p;
}

template <typename T>
int64_t param_count(const ModelParams<T>& p) {
    int64_t total = 0;
    for (const auto& [name, k] : p.kernels)
        total += static_cast<int64_t>(k.out_channels()) * k.in_channels() * k.kh() *
                     k.kw() +
                 k.out_channels();
    return total;
}

/// Checks that the stored kernels are exactly the set and shapes the
/// architecture tables dictate; names the first offending layer.
template <typename T>
void validate_against_spec(const ModelParams<T>& p) {
    auto expected = arch::param_shapes(p.spec);
    if (p.order.size() != expected.size())
        throw ShapeError("parameter set has " + std::to_string(p.order.size()) +
                         " layers, spec dictates " + std::to_string(expected.size()));
    for (size_t i = 0; i < expected.size(); ++i) {
        const arch::ParamShape& s = expected[i];
        if (p.order[i] != s.name)
            throw ShapeError("layer order mismatch at position " + std::to_string(i) +
                             ": have '" + p.order[i] + "', expected '" + s.name + "'");
        const nn::ConvKernel<T>& k = kernel(p, s.name);
        if (k.weights.dims() != Shape4{s.out_c, s.in_c, s.kh, s.kw})
            throw ShapeError("shape mismatch for '" + s.name + "': have " +
                             k.weights.dims().str() + ", expected " +
                             Shape4{s.out_c, s.in_c, s.kh, s.kw}.str());
    }
}

// ---------------------------------------------------------------------------
// Forward pass

template <typename T>
struct BasicEncoderOut {
    std::array<Tensor4<T>, 5> act1, act2;  // post-ReLU conv outputs (skip taps)
    std::array<Tensor4<T>, 4> pooled;
    std::array<nn::PoolIndices, 4> idx;

    const Tensor4<T>& block_out(int j) const {
        return j == 5 ? act2[4] : pooled[j - 1];
    }
};

template <typename T>
BasicEncoderOut<T> basic_encoder_forward(const Tensor4<T>& x, const ModelParams<T>& p) {
    if (x.c() != 1)
        throw ShapeError("encoder expects a single-channel image, got " + x.dims().str());
    if (x.h() != p.spec.input_hw || x.w() != p.spec.input_hw)
        throw ShapeError("input is " + x.dims().str() + ", spec wants " +
                         std::to_string(p.spec.input_hw) + " square");
    BasicEncoderOut<T> out;
    for (int j = 1; j <= 5; ++j) {
        const std::string b = "basic.b" + std::to_string(j);
        const Tensor4<T>& in = (j == 1) ? x : out.pooled[j - 2];
        out.act1[j - 1] = nn::relu(nn::conv2d_forward(in, kernel(p, b + ".conv1")));
        out.act2[j - 1] =
            nn::relu(nn::conv2d_forward(out.act1[j - 1], kernel(p, b + ".conv2")));
        if (j < 5) {
            auto [pooled, idx] = nn::maxpool2x2_forward(out.act2[j - 1]);
            out.pooled[j - 1] = std::move(pooled);
            out.idx[j - 1] = std::move(idx);
        }
    }
    return out;
}

template <typename T>
struct EstanBlockCache {
    Tensor4<T> sq1, sq2, sq3;    // square branch, post-ReLU; sq3 is the skip tap
    Tensor4<T> row, col, rc3;    // row/column branch, post-ReLU
    Tensor4<T> sum;              // branch sum (block output before pooling)
    Tensor4<T> pooled;           // blocks 1-4 only
    nn::PoolIndices idx;
};

/// One parallel-branch encoder block: a three-conv square chain and a
/// row/column chain from the same input, summed elementwise, then pooled
/// (final block unpooled). Returns the block output; fills *cache if given.
template <typename T>
Tensor4<T> estan_block_forward(const Tensor4<T>& x, const ModelParams<T>& p, int j,
                               EstanBlockCache<T>* cache = nullptr) {
    if (j < 1 || j > 5) throw ValueError("encoder block index must be in 1..5");
    const std::string e = "estan.e" + std::to_string(j);
    EstanBlockCache<T> local;
    EstanBlockCache<T>& c = cache ? *cache : local;
    c.sq1 = nn::relu(nn::conv2d_forward(x, kernel(p, e + ".sq.conv1")));
    c.sq2 = nn::relu(nn::conv2d_forward(c.sq1, kernel(p, e + ".sq.conv2")));
    c.sq3 = nn::relu(nn::conv2d_forward(c.sq2, kernel(p, e + ".sq.conv3")));
    c.row = nn::relu(nn::conv2d_forward(x, kernel(p, e + ".rowcol.row")));
    c.col = nn::relu(nn::conv2d_forward(c.row, kernel(p, e + ".rowcol.col")));
    c.rc3 = nn::relu(nn::conv2d_forward(c.col, kernel(p, e + ".rowcol.conv")));
    c.sum = c.sq3;
    add_into(c.sum, c.rc3);
    if (j == 5) return c.sum;
    auto [pooled, idx] = nn::maxpool2x2_forward(c.sum);
    c.pooled = std::move(pooled);
    c.idx = std::move(idx);
    return c.pooled;
}

/// Skip tensors the decoder consumes, indexed by encoder level (1-based;
/// levels 1..4 must be present, level 5 feeds only the bottleneck).
template <typename T>
struct SkipTaps {
    std::array<const Tensor4<T>*, 5> tap1{};  // basic first-conv activation
    std::array<const Tensor4<T>*, 5> tap2{};  // basic second-conv activation
    std::array<const Tensor4<T>*, 5> etap{};  // square-branch tap
};

template <typename T>
struct DecoderCache {
    std::array<Tensor4<T>, 4> up, cat1, act1, cat2, act2, act3;
    Tensor4<T> logits;
};

/// Decoder: upsample, merge the level's three skip sources across two
/// concats, refine with three convs; 1x1 head produces logits (no ReLU).
template <typename T>
Tensor4<T> decoder_forward(const Tensor4<T>& bottleneck, const SkipTaps<T>& skips,
                           const ModelParams<T>& p, DecoderCache<T>* cache = nullptr) {
    DecoderCache<T> local;
    DecoderCache<T>& c = cache ? *cache : local;
    const Tensor4<T>* prev = &bottleneck;
    for (int j = 1; j <= 4; ++j) {
        const int level = 5 - j;
        const std::string u = "dec.u" + std::to_string(j);
        if (!skips.tap1[level - 1] || !skips.tap2[level - 1] || !skips.etap[level - 1])
            throw ShapeError("decoder block " + std::to_string(j) +
                             " is missing a skip tensor for level " +
                             std::to_string(level));
        c.up[j - 1] = nn::upsample_nearest2x(*prev);
        c.cat1[j - 1] = nn::concat_channels(
            nn::concat_channels(c.up[j - 1], *skips.tap1[level - 1]),
            *skips.etap[level - 1]);
        c.act1[j - 1] =
            nn::relu(nn::conv2d_forward(c.cat1[j - 1], kernel(p, u + ".conv1")));
        c.cat2[j - 1] = nn::concat_channels(c.act1[j - 1], *skips.tap2[level - 1]);
        c.act2[j - 1] =
            nn::relu(nn::conv2d_forward(c.cat2[j - 1], kernel(p, u + ".conv2")));
        c.act3[j - 1] =
            nn::relu(nn::conv2d_forward(c.act2[j - 1], kernel(p, u + ".conv3")));
        prev = &c.act3[j - 1];
    }
    c.logits = nn::conv2d_forward(*prev, kernel(p, "head.conv"));
    return c.logits;
}

/// Everything the backward pass needs from one forward evaluation.
template <typename T>
struct ForwardCache {
    Tensor4<T> input;
    BasicEncoderOut<T> basic;
    std::array<EstanBlockCache<T>, 5> estan;
    Tensor4<T> bottleneck;
    DecoderCache<T> dec;
    Tensor4<T> prob;
};

/// Full network forward: both encoders, bottleneck concat, decoder, sigmoid.
template <typename T>
Tensor4<T> estan_forward_cached(const Tensor4<T>& x, const ModelParams<T>& p,
                                ForwardCache<T>& cache) {
    cache.input = x;
    cache.basic = basic_encoder_forward(x, p);
    const Tensor4<T>* in = &x;
    for (int j = 1; j <= 5; ++j) {
        estan_block_forward(*in, p, j, &cache.estan[j - 1]);
        in = &cache.estan[j - 1].pooled;
    }
    cache.bottleneck =
        nn::concat_channels(cache.basic.act2[4], cache.estan[4].sum);
    SkipTaps<T> skips;
    for (int level = 1; level <= 4; ++level) {
        skips.tap1[level - 1] = &cache.basic.act1[level - 1];
        skips.tap2[level - 1] = &cache.basic.act2[level - 1];
        skips.etap[level - 1] = &cache.estan[level - 1].sq3;
    }
    decoder_forward(cache.bottleneck, skips, p, &cache.dec);
    cache.prob = nn::sigmoid(cache.dec.logits);
    return cache.prob;
}

template <typename T>
Tensor4<T> estan_forward(const Tensor4<T>& x, const ModelParams<T>& p) {
    ForwardCache<T> cache;
    return estan_forward_cached(x, p, cache);
}

// ---------------------------------------------------------------------------
// Backward pass

template <typename T>
struct KernelGrads {
    Tensor4<T> weights;
    std::vector<T> bias;
};

template <typename T>
struct ModelGrads {
    std::map<std::string, KernelGrads<T>> by_name;
};

namespace detail {

template <typename T>
void store(ModelGrads<T>& g, const std::string& name, nn::ConvGrads<T>&& cg) {
    g.by_name[name] = KernelGrads<T>{std::move(cg.grad_weights), std::move(cg.grad_bias)};
}

}  // namespace detail

/// Analytic gradient of every parameter given dLoss/dProbability, replaying
/// the forward graph in reverse. Each skip tap's gradient joins the main
/// encoder path at the layer that produced the tap.
template <typename T>
ModelGrads<T> estan_backward(const ModelParams<T>& p, const ForwardCache<T>& cache,
                             const Tensor4<T>& grad_prob) {
    if (grad_prob.dims() != cache.prob.dims())
        throw ShapeError("estan_backward: grad dims " + grad_prob.dims().str() +
                         " do not match probability map " + cache.prob.dims().str());
    const arch::ArchSpec& spec = p.spec;
    const int c5 = spec.enc_channels[4];
    ModelGrads<T> grads;

    // Head: sigmoid then the 1x1 conv.
    Tensor4<T> g_logits = nn::sigmoid_backward(cache.prob, grad_prob);
    auto hg = nn::conv2d_backward(cache.dec.act3[3], kernel(p, "head.conv"), g_logits);
    Tensor4<T> g = std::move(hg.grad_x);
    detail::store(grads, "head.conv", std::move(hg));

    // Decoder blocks in reverse; splits peel the skip gradients off the
    // concat gradients in the same channel order the forward laid down.
    std::array<Tensor4<T>, 5> g_tap1, g_tap2, g_etap;
    for (int j = 4; j >= 1; --j) {
        const int level = 5 - j;
        const std::string u = "dec.u" + std::to_string(j);
        const int up_c = (j == 1) ? 2 * c5 : spec.dec_channels[j - 2];
        const int skip_c = spec.enc_channels[level - 1];

        Tensor4<T> gz = nn::relu_backward(cache.dec.act3[j - 1], g);
        auto c3 = nn::conv2d_backward(cache.dec.act2[j - 1], kernel(p, u + ".conv3"), gz);
        gz = nn::relu_backward(cache.dec.act2[j - 1], c3.grad_x);
        detail::store(grads, u + ".conv3", std::move(c3));

        auto c2 = nn::conv2d_backward(cache.dec.cat2[j - 1], kernel(p, u + ".conv2"), gz);
        auto [g_act1, g_t2] = nn::split_channels(c2.grad_x, spec.dec_channels[j - 1]);
        detail::store(grads, u + ".conv2", std::move(c2));
        g_tap2[level - 1] = std::move(g_t2);

        gz = nn::relu_backward(cache.dec.act1[j - 1], g_act1);
        auto c1 = nn::conv2d_backward(cache.dec.cat1[j - 1], kernel(p, u + ".conv1"), gz);
        auto [g_up, g_skips] = nn::split_channels(c1.grad_x, up_c);
        detail::store(grads, u + ".conv1", std::move(c1));
        auto [g_t1, g_et] = nn::split_channels(g_skips, skip_c);
        g_tap1[level - 1] = std::move(g_t1);
        g_etap[level - 1] = std::move(g_et);
        g = nn::upsample_nearest2x_backward(g_up);
    }

    // Bottleneck splits into the two block-5 outputs.
    auto [g_b5, g_e5] = nn::split_channels(g, c5);

    // Basic encoder in reverse. g_in carries the gradient w.r.t. the
    // current block's input down to the previous block's pooling stage.
    Tensor4<T> g_in;
    for (int j = 5; j >= 1; --j) {
        const std::string b = "basic.b" + std::to_string(j);
        Tensor4<T> g_act2;
        if (j == 5) {
            g_act2 = std::move(g_b5);
        } else {
            g_act2 = nn::maxpool2x2_backward(cache.basic.idx[j - 1], g_in,
                                             cache.basic.act2[j - 1].dims());
            add_into(g_act2, g_tap2[j - 1]);
        }
        Tensor4<T> gz = nn::relu_backward(cache.basic.act2[j - 1], g_act2);
        auto c2 = nn::conv2d_backward(cache.basic.act1[j - 1], kernel(p, b + ".conv2"), gz);
        Tensor4<T> g_act1 = std::move(c2.grad_x);
        detail::store(grads, b + ".conv2", std::move(c2));
        if (j <= 4) add_into(g_act1, g_tap1[j - 1]);
        gz = nn::relu_backward(cache.basic.act1[j - 1], g_act1);
        const Tensor4<T>& in = (j == 1) ? cache.input : cache.basic.pooled[j - 2];
        auto c1 = nn::conv2d_backward(in, kernel(p, b + ".conv1"), gz, j > 1);
        g_in = std::move(c1.grad_x);
        detail::store(grads, b + ".conv1", std::move(c1));
    }

    // Parallel-branch encoder in reverse; both branches receive the block
    // sum's gradient, and the square tap adds its skip gradient on top.
    for (int j = 5; j >= 1; --j) {
        const std::string e = "estan.e" + std::to_string(j);
        const EstanBlockCache<T>& bc = cache.estan[j - 1];
        Tensor4<T> g_sum;
        if (j == 5) {
            g_sum = std::move(g_e5);
        } else {
            g_sum = nn::maxpool2x2_backward(bc.idx, g_in, bc.sum.dims());
        }
        const Tensor4<T>& in = (j == 1) ? cache.input : cache.estan[j - 2].pooled;

        Tensor4<T> g_sq3 = g_sum;
        if (j <= 4) add_into(g_sq3, g_etap[j - 1]);
        Tensor4<T> gz = nn::relu_backward(bc.sq3, g_sq3);
        auto s3 = nn::conv2d_backward(bc.sq2, kernel(p, e + ".sq.conv3"), gz);
        gz = nn::relu_backward(bc.sq2, s3.grad_x);
        detail::store(grads, e + ".sq.conv3", std::move(s3));
        auto s2 = nn::conv2d_backward(bc.sq1, kernel(p, e + ".sq.conv2"), gz);
        gz = nn::relu_backward(bc.sq1, s2.grad_x);
        detail::store(grads, e + ".sq.conv2", std::move(s2));
        auto s1 = nn::conv2d_backward(in, kernel(p, e + ".sq.conv1"), gz, j > 1);
        Tensor4<T> g_next = std::move(s1.grad_x);
        detail::store(grads, e + ".sq.conv1", std::move(s1));

        gz = nn::relu_backward(bc.rc3, g_sum);
        auto r3 = nn::conv2d_backward(bc.col, kernel(p, e + ".rowcol.conv"), gz);
        gz = nn::relu_backward(bc.col, r3.grad_x);
        detail::store(grads, e + ".rowcol.conv", std::move(r3));
        auto r2 = nn::conv2d_backward(bc.row, kernel(p, e + ".rowcol.col"), gz);
        gz = nn::relu_backward(bc.row, r2.grad_x);
        detail::store(grads, e + ".rowcol.col", std::move(r2));
        auto r1 = nn::conv2d_backward(in, kernel(p, e + ".rowcol.row"), gz, j > 1);
        if (j > 1) add_into(g_next, r1.grad_x);
        detail::store(grads, e + ".rowcol.row", std::move(r1));
        g_in = std::move(g_next);
    }
    return grads;
}

// ---------------------------------------------------------------------------
// Optimizer plumbing: name-aligned flat views over parameters and gradients.

template <typename T>
std::vector<nn::NamedSpan<T>> param_spans(ModelParams<T>& p) {
    std::vector<nn::NamedSpan<T>> out;
    out.reserve(p.order.size() * 2);
    for (const std::string& name : p.order) {
        nn::ConvKernel<T>& k = p.kernels.at(name);
        out.push_back({name + ".weights", std::span<T>(k.weights.data(), k.weights.size())});
        out.push_back({name + ".bias", std::span<T>(k.bias.data(), k.bias.size())});
    }
    return out;
}

template <typename T>
std::vector<nn::NamedConstSpan<T>> grad_spans(const ModelGrads<T>& g,
                                              const std::vector<std::string>& order) {
    std::vector<nn::NamedConstSpan<T>> out;
    out.reserve(order.size() * 2);
    for (const std::string& name : order) {
        auto it = g.by_name.find(name);
        if (it == g.by_name.end())
            throw LookupError("gradient set is missing layer '" + name + "'");
        const KernelGrads<T>& kg = it->second;
        out.push_back({name + ".weights",
                       std::span<const T>(kg.weights.data(), kg.weights.size())});
        out.push_back({name + ".bias", std::span<const T>(kg.bias.data(), kg.bias.size())});
    }
    return out;
}

}  // namespace estan::model
