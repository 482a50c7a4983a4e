#include <cmath>
#include <cstdio>
#include <string>
#include <utility>
#include <vector>

#include "estan/layers.hpp"
#include "estan/loss.hpp"
#include "estan/train.hpp"

namespace estan::train {

namespace {

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

void copy_into_batch(Tensor4<float>& batch, int slot, const Tensor4<float>& sample) {
    const size_t hw = static_cast<size_t>(sample.h()) * sample.w();
    std::copy_n(sample.plane(0, 0), hw, batch.plane(slot, 0));
}

/// Per-image Dice coefficient of the thresholded prediction; both-empty
/// counts as perfect.
double dice_score(const Tensor4<float>& prob, const Tensor4<float>& mask) {
    size_t inter = 0, a = 0, g = 0;
    const float* pv = prob.data();
    const float* gv = mask.data();
    for (size_t i = 0; i < prob.size(); ++i) {
        const bool pi = pv[i] >= 0.5f;
        const bool gi = gv[i] != 0.0f;
        a += pi;
        g += gi;
        inter += pi && gi;
    }
    if (a + g == 0) return 1.0;
    return 2.0 * static_cast<double>(inter) / static_cast<double>(a + g);
}

}  // namespace

std::string TrainHistory::csv() const {
    std::string out = "epoch,mean_loss,val_dsc\n";
    for (const EpochStats& e : epochs) {
        out += std::to_string(e.epoch);
        out += ',';
        out += fmt_double(e.mean_loss);
        out += ',';
        if (e.has_val) out += fmt_double(e.val_dsc);
        out += '\n';
    }
    return out;
}

TrainHistory train(const TrainConfig& cfg, const std::vector<TrainSample>& data,
                   model::ModelParams<float>& params, const std::string& out_dir,
                   const std::vector<TrainSample>* val_set) {
    cfg.validate();
    if (data.empty()) throw ValueError("training set is empty");
    if (params.spec.input_hw != cfg.input_hw)
        throw ShapeError("config input_hw " + std::to_string(cfg.input_hw) +
                         " does not match model input_hw " +
                         std::to_string(params.spec.input_hw));
    const Shape4 want{1, 1, cfg.input_hw, cfg.input_hw};
    for (const TrainSample& s : data)
        if (s.image.dims() != want || s.mask.dims() != want)
            throw ShapeError("sample '" + s.id + "' is not " + want.str());

    SeededRng rng(cfg.seed ^ rng_streams::kTrainStream);
    nn::AdamState<float> adam;
    adam.lr = cfg.learning_rate;
    auto pspans = model::param_spans(params);

    std::vector<size_t> order(data.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;

    TrainHistory history;
    for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        // Fisher-Yates over the sample order, driven by the run seed.
        for (size_t i = order.size() - 1; i > 0; --i) {
            const size_t j = rng.next_below(i + 1);
            std::swap(order[i], order[j]);
        }

        double loss_sum = 0.0;
        int steps = 0;
        for (size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const int b = static_cast<int>(
                std::min<size_t>(cfg.batch_size, order.size() - start));
            Tensor4<float> x({b, 1, cfg.input_hw, cfg.input_hw}, 0.0f);
            Tensor4<float> g({b, 1, cfg.input_hw, cfg.input_hw}, 0.0f);
            for (int i = 0; i < b; ++i) {
                const TrainSample& s = data[order[start + i]];
                if (cfg.shift_augment) {
                    auto [img, msk] =
                        augment_shift(s.image, s.mask, rng, cfg.max_shift_fraction);
                    copy_into_batch(x, i, img);
                    copy_into_batch(g, i, msk);
                } else {
                    copy_into_batch(x, i, s.image);
                    copy_into_batch(g, i, s.mask);
                }
            }

            model::ForwardCache<float> cache;
            const Tensor4<float>& prob = model::estan_forward_cached(x, params, cache);
            const double batch_loss = loss::dice_loss(prob, g, cfg.dice_per_image);
            if (!std::isfinite(batch_loss))
                throw NumericError("non-finite training loss at epoch " +
                                   std::to_string(epoch) + ", step " +
                                   std::to_string(steps + 1));
            Tensor4<float> grad_prob =
                loss::dice_loss_backward(prob, g, cfg.dice_per_image);
            model::ModelGrads<float> grads = model::estan_backward(params, cache, grad_prob);
            auto gspans = model::grad_spans(grads, params.order);
            nn::adam_step(pspans, gspans, adam);
            loss_sum += batch_loss;
            ++steps;
        }

        EpochStats stats;
        stats.epoch = epoch;
        stats.mean_loss = loss_sum / steps;
        if (val_set && !val_set->empty()) {
            double dsc_sum = 0.0;
            for (const TrainSample& s : *val_set)
                dsc_sum += dice_score(model::estan_forward(s.image, params), s.mask);
            stats.has_val = true;
            stats.val_dsc = dsc_sum / static_cast<double>(val_set->size());
        }
        history.epochs.push_back(stats);

        if (!out_dir.empty() && cfg.checkpoint_every > 0 &&
            epoch % cfg.checkpoint_every == 0)
            save_checkpoint(params,
                            out_dir + "/checkpoint_epoch_" + std::to_string(epoch) + ".bin");
    }
    if (!out_dir.empty()) save_checkpoint(params, out_dir + "/checkpoint_final.bin");
    return history;
}

}  // namespace estan::train
