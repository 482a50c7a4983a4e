#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "estan/model.hpp"
#include "estan/rng.hpp"
#include "estan/tensor.hpp"

namespace estan::train {

struct TrainConfig {
    double learning_rate = 1e-4;
    int batch_size = 4;
    int max_epochs = 50;
    uint64_t seed = 0;
    bool shift_augment = false;
    double max_shift_fraction = 0.1;
    int input_hw = 256;
    int checkpoint_every = 0;     // epochs between checkpoints; 0 = final only
    bool dice_per_image = false;  // per-image loss normalization variant

    void validate() const {
        if (batch_size < 1) throw ValueError("batch_size must be >= 1");
        if (max_epochs < 1) throw ValueError("max_epochs must be >= 1");
        if (!(max_shift_fraction >= 0.0 && max_shift_fraction < 0.5))
            throw ValueError("max_shift_fraction must lie in [0, 0.5)");
        if (learning_rate < 0.0) throw ValueError("learning_rate must be >= 0");
        if (checkpoint_every < 0) throw ValueError("checkpoint_every must be >= 0");
    }
};

struct EpochStats {
    int epoch = 0;
    double mean_loss = 0.0;
    bool has_val = false;
    double val_dsc = 0.0;
};

struct TrainHistory {
    std::vector<EpochStats> epochs;
    std::string csv() const;
};

/// One training record: image and binary mask, each (1, 1, hw, hw).
struct TrainSample {
    std::string id;
    Tensor4<float> image;
    Tensor4<float> mask;
};

/// Translates every plane by (dx, dy): out(y, x) = in(y - dy, x - dx),
/// zero where the source falls off-grid.
template <typename T>
Tensor4<T> shift_tensor(const Tensor4<T>& t, int dx, int dy) {
    Tensor4<T> out(t.dims(), T(0));
    for (int n = 0; n < t.n(); ++n)
        for (int c = 0; c < t.c(); ++c)
            for (int y = 0; y < t.h(); ++y) {
                const int sy = y - dy;
                if (sy < 0 || sy >= t.h()) continue;
                const T* src = t.row(n, c, sy);
                T* dst = out.row(n, c, y);
                for (int x = 0; x < t.w(); ++x) {
                    const int sx = x - dx;
                    if (sx >= 0 && sx < t.w()) dst[x] = src[sx];
                }
            }
    return out;
}

/// Random width/height shift applied identically to image and mask. Offsets
/// are integers drawn uniformly from +-floor(max_fraction * extent); the
/// width offset is drawn first.
template <typename T>
std::pair<Tensor4<T>, Tensor4<T>> augment_shift(const Tensor4<T>& image,
                                                const Tensor4<T>& mask, SeededRng& rng,
                                                double max_fraction) {
    if (image.h() != mask.h() || image.w() != mask.w())
        throw ShapeError("augment_shift: image and mask spatial dims differ");
    if (!(max_fraction >= 0.0 && max_fraction < 0.5))
        throw ValueError("augment_shift: max_fraction must lie in [0, 0.5)");
    const int mx = static_cast<int>(max_fraction * image.w());
    const int my = static_cast<int>(max_fraction * image.h());
    const int dx = static_cast<int>(rng.next_below(2 * mx + 1)) - mx;
    const int dy = static_cast<int>(rng.next_below(2 * my + 1)) - my;
    return {shift_tensor(image, dx, dy), shift_tensor(mask, dx, dy)};
}

/// Serializes named kernels: magic "ESTANCKPT", version u16, entry count
/// u32, then per entry a length-prefixed name, four u32 dims (out, in, kh,
/// kw), and weight/bias payloads as little-endian IEEE f32.
void save_checkpoint(const model::ModelParams<float>& params, const std::string& path);

/// Reads a checkpoint and validates it against the expected architecture;
/// a mismatch names the first offending layer.
model::ModelParams<float> load_checkpoint(const std::string& path,
                                          const arch::ArchSpec& spec);

/// Epochs of seeded-shuffle mini-batches: forward, Dice loss, backward,
/// Adam. Mutates params in place; writes checkpoints under out_dir when
/// given; scores mean validation DSC per epoch when val_set is given.
TrainHistory train(const TrainConfig& cfg, const std::vector<TrainSample>& data,
                   model::ModelParams<float>& params, const std::string& out_dir = "",
                   const std::vector<TrainSample>* val_set = nullptr);

}  // namespace estan::train
