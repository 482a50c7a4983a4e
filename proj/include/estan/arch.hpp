#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "estan/error.hpp"

namespace estan::arch {

/// Structural hyperparameters of the network. Both encoders share one
/// per-block channel ladder (the decoder's skip arithmetic depends on the
/// two encoders agreeing), so a single table serves both.
struct ArchSpec {
    int input_hw = 256;
    std::array<int, 5> enc_channels{32, 64, 128, 256, 512};  // encoder block width
    std::array<int, 4> dec_channels{256, 128, 64, 32};       // decoder block width
    std::array<int, 5> axial_extent{15, 13, 11, 9, 7};       // row/column kernel length
    std::array<int, 5> branch_mid_extent{1, 5, 1, 1, 5};     // third square conv, branch 1
    std::array<int, 4> dec_mid_extent{1, 1, 1, 5};           // middle decoder conv
    // All remaining convolutions are 3x3; the head is 1x1.

    static ArchSpec defaults() { return ArchSpec{}; }

    /// Channel tables scaled down for fast tests; extents unchanged.
    static ArchSpec tiny(int input_hw = 16) {
        ArchSpec s;
        s.input_hw = input_hw;
        s.enc_channels = {2, 4, 8, 16, 32};
        s.dec_channels = {16, 8, 4, 2};
        return s;
    }

    void validate() const {
        if (input_hw < 16 || input_hw % 16 != 0)
            throw ValueError("input_hw must be a positive multiple of 16, got " +
                             std::to_string(input_hw));
        for (int c : enc_channels)
            if (c < 1) throw ValueError("encoder channel counts must be positive");
        for (int c : dec_channels)
            if (c < 1) throw ValueError("decoder channel counts must be positive");
        for (size_t j = 1; j < axial_extent.size(); ++j)
            if (axial_extent[j] >= axial_extent[j - 1])
                throw ValueError("axial kernel extents must strictly decrease per block");
        auto odd = [](int k) { return k == 1 || (k > 0 && k % 2 == 1); };
        for (int k : axial_extent)
            if (!odd(k)) throw ValueError("axial extents must be odd");
        for (int k : branch_mid_extent)
            if (!odd(k)) throw ValueError("branch mid extents must be odd or 1");
        for (int k : dec_mid_extent)
            if (!odd(k)) throw ValueError("decoder mid extents must be odd or 1");
    }
};

enum class LayerKind { conv, pool, upsample, concat, add, sigmoid };

inline const char* kind_str(LayerKind k) {
    switch (k) {
        case LayerKind::conv: return "conv";
        case LayerKind::pool: return "pool";
        case LayerKind::upsample: return "upsample";
        case LayerKind::concat: return "concat";
        case LayerKind::add: return "add";
        case LayerKind::sigmoid: return "sigmoid";
    }
    return "?";
}

/// One node of the network graph, in evaluation order. `inputs` name
/// predecessor nodes ("input" is the image itself). Convolutions carry
/// their kernel geometry; other kinds leave it zero.
struct LayerNode {
    std::string name;
    LayerKind kind{};
    std::vector<std::string> inputs;
    int in_c = 0;
    int out_c = 0;
    int out_h = 0;
    int out_w = 0;
    int kh = 0;
    int kw = 0;
};

/// Builds the full evaluation-ordered node list for a spec: basic encoder,
/// parallel-branch encoder, bottleneck fusion, decoder, head.
inline std::vector<LayerNode> layer_plan(const ArchSpec& spec) {
    spec.validate();
    std::vector<LayerNode> plan;
    auto conv = [&](std::string name, std::string in, int ic, int oc, int kh, int kw,
                    int hw) {
        plan.push_back({std::move(name), LayerKind::conv, {std::move(in)}, ic, oc, hw,
                        hw, kh, kw});
    };
    auto node = [&](std::string name, LayerKind kind, std::vector<std::string> ins,
                    int oc, int hw) {
        plan.push_back({std::move(name), kind, std::move(ins), 0, oc, hw, hw, 0, 0});
    };

    // Basic encoder: two 3x3 convs per block, pooled except in block 5.
    int hw = spec.input_hw;
    for (int j = 1; j <= 5; ++j) {
        const std::string b = "basic.b" + std::to_string(j);
        const int in_c = (j == 1) ? 1 : spec.enc_channels[j - 2];
        const int out_c = spec.enc_channels[j - 1];
        const std::string in = (j == 1) ? "input" : "basic.b" + std::to_string(j - 1) + ".pool";
        conv(b + ".conv1", in, in_c, out_c, 3, 3, hw);
        conv(b + ".conv2", b + ".conv1", out_c, out_c, 3, 3, hw);
        if (j < 5) {
            node(b + ".pool", LayerKind::pool, {b + ".conv2"}, out_c, hw / 2);
            hw /= 2;
        }
    }

    // Parallel-branch encoder: square chain plus row/column chain, summed.
    // The block-output node is named estan.e{j}; blocks 1-4 pool afterwards.
    hw = spec.input_hw;
    for (int j = 1; j <= 5; ++j) {
        const std::string e = "estan.e" + std::to_string(j);
        const int in_c = (j == 1) ? 1 : spec.enc_channels[j - 2];
        const int out_c = spec.enc_channels[j - 1];
        const int a3 = spec.axial_extent[j - 1];
        const int a5 = spec.branch_mid_extent[j - 1];
        const std::string in = (j == 1) ? "input" : "estan.e" + std::to_string(j - 1) + ".pool";
        conv(e + ".sq.conv1", in, in_c, out_c, 3, 3, hw);
        conv(e + ".sq.conv2", e + ".sq.conv1", out_c, out_c, 3, 3, hw);
        conv(e + ".sq.conv3", e + ".sq.conv2", out_c, out_c, a5, a5, hw);
        conv(e + ".rowcol.row", in, in_c, out_c, a3, 1, hw);
        conv(e + ".rowcol.col", e + ".rowcol.row", out_c, out_c, 1, a3, hw);
        conv(e + ".rowcol.conv", e + ".rowcol.col", out_c, out_c, 3, 3, hw);
        node(e, LayerKind::add, {e + ".sq.conv3", e + ".rowcol.conv"}, out_c, hw);
        if (j < 5) {
            node(e + ".pool", LayerKind::pool, {e}, out_c, hw / 2);
            hw /= 2;
        }
    }

    // Bottleneck: the two block-5 outputs side by side.
    const int c5 = spec.enc_channels[4];
    node("bottleneck.concat", LayerKind::concat, {"basic.b5.conv2", "estan.e5"},
         2 * c5, hw);

    // Decoder block j pairs with encoder level 5-j and receives three skip
    // sources: the level's first basic activation and square-branch tap at
    // the first concat, the second basic activation at the second concat.
    std::string prev = "bottleneck.concat";
    int prev_c = 2 * c5;
    for (int j = 1; j <= 4; ++j) {
        const std::string u = "dec.u" + std::to_string(j);
        const int level = 5 - j;
        const int skip_c = spec.enc_channels[level - 1];
        const int y = spec.dec_channels[j - 1];
        const std::string lb = "basic.b" + std::to_string(level);
        const std::string le = "estan.e" + std::to_string(level);
        hw *= 2;
        node(u + ".up", LayerKind::upsample, {prev}, prev_c, hw);
        node(u + ".concat1", LayerKind::concat,
             {u + ".up", lb + ".conv1", le + ".sq.conv3"}, prev_c + 2 * skip_c, hw);
        conv(u + ".conv1", u + ".concat1", prev_c + 2 * skip_c, y, 3, 3, hw);
        node(u + ".concat2", LayerKind::concat, {u + ".conv1", lb + ".conv2"},
             y + skip_c, hw);
        const int m2 = spec.dec_mid_extent[j - 1];
        conv(u + ".conv2", u + ".concat2", y + skip_c, y, m2, m2, hw);
        conv(u + ".conv3", u + ".conv2", y, y, 3, 3, hw);
        prev = u + ".conv3";
        prev_c = y;
    }

    conv("head.conv", prev, prev_c, 1, 1, 1, hw);
    node("head.sigmoid", LayerKind::sigmoid, {"head.conv"}, 1, hw);
    return plan;
}

/// Per-axis receptive field and stride product at a node's output.
struct RfEntry {
    int64_t rf_h = 1, rf_w = 1;
    int64_t jump_h = 1, jump_w = 1;
};

/// Folds the composition rule r += (k-1)*j, j *= stride over the plan,
/// per axis. Fusion nodes take the per-axis max and require equal jumps.
inline std::map<std::string, RfEntry> receptive_fields(const ArchSpec& spec) {
    std::map<std::string, RfEntry> rf;
    rf["input"] = RfEntry{};
    for (const LayerNode& node : layer_plan(spec)) {
        RfEntry e;
        switch (node.kind) {
            case LayerKind::conv: {
                const RfEntry& in = rf.at(node.inputs[0]);
                e = in;
                e.rf_h += static_cast<int64_t>(node.kh - 1) * in.jump_h;
                e.rf_w += static_cast<int64_t>(node.kw - 1) * in.jump_w;
                break;
            }
            case LayerKind::pool: {
                const RfEntry& in = rf.at(node.inputs[0]);
                e = in;
                e.rf_h += in.jump_h;
                e.rf_w += in.jump_w;
                e.jump_h *= 2;
                e.jump_w *= 2;
                break;
            }
            case LayerKind::upsample: {
                const RfEntry& in = rf.at(node.inputs[0]);
                e = in;
                if (e.jump_h % 2 != 0 || e.jump_w % 2 != 0)
                    throw Error("receptive_fields: upsample at " + node.name +
                                " with odd stride product");
                e.jump_h /= 2;
                e.jump_w /= 2;
                break;
            }
            case LayerKind::concat:
            case LayerKind::add: {
                e = rf.at(node.inputs[0]);
                for (size_t i = 1; i < node.inputs.size(); ++i) {
                    const RfEntry& in = rf.at(node.inputs[i]);
                    if (in.jump_h != e.jump_h || in.jump_w != e.jump_w)
                        throw Error("receptive_fields: unequal stride products at " +
                                    node.name);
                    e.rf_h = std::max(e.rf_h, in.rf_h);
                    e.rf_w = std::max(e.rf_w, in.rf_w);
                }
                break;
            }
            case LayerKind::sigmoid:
                e = rf.at(node.inputs[0]);
                break;
        }
        rf[node.name] = e;
    }
    return rf;
}

inline std::pair<int64_t, int64_t> receptive_field(const ArchSpec& spec,
                                                   const std::string& layer_name) {
    auto rf = receptive_fields(spec);
    auto it = rf.find(layer_name);
    if (it == rf.end())
        throw LookupError("receptive_field: unknown layer '" + layer_name + "'");
    return {it->second.rf_h, it->second.rf_w};
}

/// One row of the architectural trace: a layer and its output geometry,
/// annotated with the per-axis receptive field at that point.
struct TraceRow {
    std::string name;
    std::string kind;
    int out_c = 0;
    int out_h = 0;
    int out_w = 0;
    int64_t rf_h = 0;
    int64_t rf_w = 0;
};

inline std::vector<TraceRow> shape_trace(const ArchSpec& spec) {
    auto plan = layer_plan(spec);
    auto rf = receptive_fields(spec);
    std::vector<TraceRow> rows;
    rows.reserve(plan.size());
    for (const LayerNode& n : plan) {
        const RfEntry& e = rf.at(n.name);
        rows.push_back({n.name, kind_str(n.kind), n.out_c, n.out_h, n.out_w, e.rf_h,
                        e.rf_w});
    }
    return rows;
}

inline std::string trace_csv(const ArchSpec& spec) {
    std::ostringstream out;
    out << "name,kind,out_c,out_h,out_w,rf_h,rf_w\n";
    for (const TraceRow& r : shape_trace(spec))
        out << r.name << ',' << r.kind << ',' << r.out_c << ',' << r.out_h << ','
            << r.out_w << ',' << r.rf_h << ',' << r.rf_w << '\n';
    return out.str();
}

/// Geometry of one learnable convolution, in parameter order.
struct ParamShape {
    std::string name;
    int out_c = 0;
    int in_c = 0;
    int kh = 0;
    int kw = 0;

    int64_t count() const {
        return static_cast<int64_t>(out_c) * in_c * kh * kw + out_c;
    }
};

inline std::vector<ParamShape> param_shapes(const ArchSpec& spec) {
    std::vector<ParamShape> shapes;
    for (const LayerNode& n : layer_plan(spec))
        if (n.kind == LayerKind::conv)
            shapes.push_back({n.name, n.out_c, n.in_c, n.kh, n.kw});
    return shapes;
}

inline int64_t spec_param_count(const ArchSpec& spec) {
    int64_t total = 0;
    for (const ParamShape& s : param_shapes(spec)) total += s.count();
    return total;
}

inline std::string params_csv(const ArchSpec& spec) {
    std::ostringstream out;
    out << "name,out_c,in_c,kh,kw,param_count\n";
    for (const ParamShape& s : param_shapes(spec))
        out << s.name << ',' << s.out_c << ',' << s.in_c << ',' << s.kh << ',' << s.kw
            << ',' << s.count() << '\n';
    return out.str();
}

}  // namespace estan::arch
