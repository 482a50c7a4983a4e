#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <limits>
#include <string>
#include <vector>

#include "estan/data_io.hpp"
#include "estan/train.hpp"
#include "oracles.hpp"

using namespace estan;
using arch::ArchSpec;

namespace {

bool params_equal(const model::ModelParams<float>& a, const model::ModelParams<float>& b) {
    if (a.order != b.order) return false;
    for (const std::string& name : a.order) {
        const auto& ka = model::kernel(a, name);
        const auto& kb = model::kernel(b, name);
        for (size_t i = 0; i < ka.weights.size(); ++i)
            if (ka.weights.data()[i] != kb.weights.data()[i]) return false;
        if (ka.bias != kb.bias) return false;
    }
    return true;
}

/// Synthetic corpus converted to training samples, all at the working size.
std::vector<train::TrainSample> synth_samples(int count, int hw, uint64_t seed,
                                              const std::string& dir) {
    const io::DatasetManifest m = io::synth_generate(count, hw, seed, dir);
    std::vector<train::TrainSample> out;
    for (io::Sample& s : io::load_all_samples(m, hw))
        out.push_back({s.id, std::move(s.image), std::move(s.mask)});
    return out;
}

}  // namespace

TEST_CASE("shift_tensor translates with zero fill") {
    Tensor4<float> t({1, 1, 2, 2}, 0.0f);
    t.data()[0] = 1;
    t.data()[1] = 2;
    t.data()[2] = 3;
    t.data()[3] = 4;

    SUBCASE("one step right") {
        const Tensor4<float> s = train::shift_tensor(t, 1, 0);
        CHECK(s.data()[0] == 0);
        CHECK(s.data()[1] == 1);
        CHECK(s.data()[2] == 0);
        CHECK(s.data()[3] == 3);
    }
    SUBCASE("one step down") {
        const Tensor4<float> s = train::shift_tensor(t, 0, 1);
        CHECK(s.data()[0] == 0);
        CHECK(s.data()[1] == 0);
        CHECK(s.data()[2] == 1);
        CHECK(s.data()[3] == 2);
    }
    SUBCASE("one step left pulls from the right") {
        const Tensor4<float> s = train::shift_tensor(t, -1, 0);
        CHECK(s.data()[0] == 2);
        CHECK(s.data()[1] == 0);
        CHECK(s.data()[2] == 4);
        CHECK(s.data()[3] == 0);
    }
    SUBCASE("zero shift is the identity") {
        const Tensor4<float> s = train::shift_tensor(t, 0, 0);
        for (size_t i = 0; i < t.size(); ++i) CHECK(s.data()[i] == t.data()[i]);
    }
    SUBCASE("4x4 shifted one step right: column 0 clears, the rest slide") {
        Tensor4<float> wide({1, 1, 4, 4}, 0.0f);
        for (int i = 0; i < 16; ++i) wide.data()[i] = static_cast<float>(i + 1);
        const Tensor4<float> s = train::shift_tensor(wide, 1, 0);
        for (int y = 0; y < 4; ++y) {
            CHECK(s.data()[y * 4] == 0.0f);
            for (int x = 1; x < 4; ++x)
                CHECK(s.data()[y * 4 + x] == wide.data()[y * 4 + x - 1]);
        }
    }
    SUBCASE("shifting can only lose mask pixels") {
        Tensor4<float> m({1, 1, 6, 6}, 0.0f);
        oracle::Lcg g(3);
        for (size_t i = 0; i < m.size(); ++i) m.data()[i] = g.unit() < 0.5 ? 1.0f : 0.0f;
        auto count = [](const Tensor4<float>& t) {
            size_t n = 0;
            for (size_t i = 0; i < t.size(); ++i) n += t.data()[i] != 0.0f;
            return n;
        };
        for (int dx = -2; dx <= 2; ++dx)
            for (int dy = -2; dy <= 2; ++dy)
                CHECK(count(train::shift_tensor(m, dx, dy)) <= count(m));
    }
    SUBCASE("opposite shifts recover the interior") {
        Tensor4<float> big({1, 1, 8, 8}, 0.0f);
        oracle::Lcg g(12);
        for (size_t i = 0; i < big.size(); ++i)
            big.data()[i] = static_cast<float>(1.0 + g.unit());  // nonzero everywhere
        const Tensor4<float> there = train::shift_tensor(big, 2, -1);
        const Tensor4<float> back = train::shift_tensor(there, -2, 1);
        for (int y = 0; y < 8; ++y)
            for (int x = 0; x < 8; ++x) {
                const float got = back.data()[y * 8 + x];
                if (y >= 1 && x <= 5)
                    CHECK(got == big.data()[y * 8 + x]);
                else
                    CHECK(got == 0.0f);  // fill from either leg of the trip
            }
    }
}

TEST_CASE("shift augmentation") {
    Tensor4<float> img({1, 1, 10, 10}, 0.0f), msk({1, 1, 10, 10}, 0.0f);
    oracle::Lcg g(77);
    for (size_t i = 0; i < img.size(); ++i) {
        img.data()[i] = static_cast<float>(g.unit());
        msk.data()[i] = g.unit() < 0.3 ? 1.0f : 0.0f;
    }

    SUBCASE("image and mask move together, by the replayed offsets") {
        SeededRng rng(5);
        const auto [ai, am] = train::augment_shift(img, msk, rng, 0.2);

        SeededRng replay(5);
        const int mx = 2, my = 2;  // floor(0.2 * 10)
        const int dx = static_cast<int>(replay.next_below(2 * mx + 1)) - mx;
        const int dy = static_cast<int>(replay.next_below(2 * my + 1)) - my;
        const Tensor4<float> wi = train::shift_tensor(img, dx, dy);
        const Tensor4<float> wm = train::shift_tensor(msk, dx, dy);
        for (size_t i = 0; i < wi.size(); ++i) {
            CHECK(ai.data()[i] == wi.data()[i]);
            CHECK(am.data()[i] == wm.data()[i]);
        }
    }
    SUBCASE("offsets stay within the configured fraction") {
        SeededRng rng(6);
        for (int trial = 0; trial < 50; ++trial) {
            const auto [ai, am] = train::augment_shift(img, msk, rng, 0.2);
            // Any shift of at most 2 leaves the central 6x6 window covered by
            // original pixels; nonzero pixels there must come from the image.
            (void)am;
            int nonzero = 0;
            for (int y = 3; y < 7; ++y)
                for (int x = 3; x < 7; ++x)
                    nonzero += ai.data()[y * 10 + x] != 0.0f;
            CHECK(nonzero > 0);
        }
    }
    SUBCASE("zero fraction is a no-op") {
        SeededRng rng(7);
        const auto [ai, am] = train::augment_shift(img, msk, rng, 0.0);
        for (size_t i = 0; i < img.size(); ++i) {
            CHECK(ai.data()[i] == img.data()[i]);
            CHECK(am.data()[i] == msk.data()[i]);
        }
    }
    SUBCASE("invalid input") {
        SeededRng rng(8);
        Tensor4<float> small({1, 1, 8, 10}, 0.0f);
        CHECK_THROWS_AS(train::augment_shift(img, small, rng, 0.1), ShapeError);
        CHECK_THROWS_AS(train::augment_shift(img, msk, rng, 0.5), ValueError);
        CHECK_THROWS_AS(train::augment_shift(img, msk, rng, -0.1), ValueError);
    }
}

TEST_CASE("checkpoint round-trip") {
    oracle::TempDir td("ckpt_roundtrip");
    const ArchSpec spec = ArchSpec::tiny(16);
    const auto params = model::init_params<float>(spec, 3);
    const std::string path = td.sub("w.bin");
    train::save_checkpoint(params, path);

    SUBCASE("load restores every value bitwise") {
        const auto back = train::load_checkpoint(path, spec);
        CHECK(params_equal(params, back));

        // And a second save of the loaded set is byte-identical.
        train::save_checkpoint(back, td.sub("w2.bin"));
        CHECK(oracle::read_file(path) == oracle::read_file(td.sub("w2.bin")));
    }
    SUBCASE("file leads with the magic and version") {
        const std::string bytes = oracle::read_file(path);
        REQUIRE(bytes.size() > 11);
        CHECK(bytes.substr(0, 9) == "ESTANCKPT");
        CHECK(bytes[9] == 1);   // version, little-endian u16
        CHECK(bytes[10] == 0);
    }
    SUBCASE("truncated file") {
        const std::string bytes = oracle::read_file(path);
        oracle::write_file(td.sub("cut.bin"), bytes.substr(0, 5));
        CHECK_THROWS_WITH_AS(train::load_checkpoint(td.sub("cut.bin"), spec),
                             doctest::Contains("truncated"), FormatError);
        oracle::write_file(td.sub("half.bin"), bytes.substr(0, bytes.size() / 2));
        CHECK_THROWS_AS(train::load_checkpoint(td.sub("half.bin"), spec), FormatError);
    }
    SUBCASE("corrupted magic") {
        std::string bytes = oracle::read_file(path);
        bytes[0] = 'X';
        oracle::write_file(td.sub("bad.bin"), bytes);
        CHECK_THROWS_WITH_AS(train::load_checkpoint(td.sub("bad.bin"), spec),
                             doctest::Contains("bad magic"), FormatError);
    }
    SUBCASE("unsupported version") {
        std::string bytes = oracle::read_file(path);
        bytes[9] = 2;
        oracle::write_file(td.sub("v2.bin"), bytes);
        CHECK_THROWS_WITH_AS(train::load_checkpoint(td.sub("v2.bin"), spec),
                             doctest::Contains("unsupported version"), FormatError);
    }
    SUBCASE("trailing bytes") {
        oracle::write_file(td.sub("fat.bin"), oracle::read_file(path) + "xx");
        CHECK_THROWS_WITH_AS(train::load_checkpoint(td.sub("fat.bin"), spec),
                             doctest::Contains("trailing"), FormatError);
    }
    SUBCASE("shape mismatch against another spec names the layer") {
        try {
            train::load_checkpoint(path, ArchSpec::defaults());
            FAIL("expected a ShapeError");
        } catch (const ShapeError& e) {
            CHECK(std::string(e.what()).find("basic.b1.conv1") != std::string::npos);
        }
    }
    SUBCASE("missing file") {
        CHECK_THROWS_AS(train::load_checkpoint(td.sub("gone.bin"), spec), IoError);
    }
}

TEST_CASE("training configuration validation") {
    train::TrainConfig cfg;
    CHECK_NOTHROW(cfg.validate());
    SUBCASE("batch") { cfg.batch_size = 0; CHECK_THROWS_AS(cfg.validate(), ValueError); }
    SUBCASE("epochs") { cfg.max_epochs = 0; CHECK_THROWS_AS(cfg.validate(), ValueError); }
    SUBCASE("lr") { cfg.learning_rate = -1; CHECK_THROWS_AS(cfg.validate(), ValueError); }
    SUBCASE("shift") {
        cfg.max_shift_fraction = 0.5;
        CHECK_THROWS_AS(cfg.validate(), ValueError);
    }
    SUBCASE("cadence") {
        cfg.checkpoint_every = -1;
        CHECK_THROWS_AS(cfg.validate(), ValueError);
    }
}

TEST_CASE("training loop") {
    oracle::TempDir td("train_loop");
    const ArchSpec spec = ArchSpec::tiny(16);
    const std::vector<train::TrainSample> data = synth_samples(4, 16, 21, td.sub("data"));
    REQUIRE(data.size() == 4);

    train::TrainConfig cfg;
    cfg.input_hw = 16;
    cfg.batch_size = 2;
    cfg.max_epochs = 3;
    cfg.learning_rate = 1e-3;
    cfg.seed = 11;

    SUBCASE("identical runs from identical seeds are byte-identical") {
        auto p1 = model::init_params<float>(spec, cfg.seed);
        auto p2 = model::init_params<float>(spec, cfg.seed);
        std::filesystem::create_directories(td.sub("r1"));
        std::filesystem::create_directories(td.sub("r2"));
        const train::TrainHistory h1 = train::train(cfg, data, p1, td.sub("r1"));
        const train::TrainHistory h2 = train::train(cfg, data, p2, td.sub("r2"));

        CHECK(h1.csv() == h2.csv());
        CHECK(params_equal(p1, p2));
        CHECK(oracle::read_file(td.sub("r1/checkpoint_final.bin")) ==
              oracle::read_file(td.sub("r2/checkpoint_final.bin")));

        // A different run seed drives a different trajectory.
        train::TrainConfig other = cfg;
        other.seed = 12;
        auto p3 = model::init_params<float>(spec, other.seed);
        const train::TrainHistory h3 = train::train(other, data, p3);
        CHECK(h1.csv() != h3.csv());
    }
    SUBCASE("zero learning rate leaves parameters untouched") {
        train::TrainConfig frozen = cfg;
        frozen.learning_rate = 0.0;
        auto p = model::init_params<float>(spec, 4);
        const auto before = p;
        train::train(frozen, data, p);
        CHECK(params_equal(before, p));
    }
    SUBCASE("loss falls over a few optimizer steps") {
        auto p = model::init_params<float>(spec, cfg.seed);
        train::TrainConfig longer = cfg;
        longer.max_epochs = 6;
        const train::TrainHistory h = train::train(longer, data, p);
        REQUIRE(h.epochs.size() == 6);
        CHECK(h.epochs.back().mean_loss < h.epochs.front().mean_loss);
        for (const train::EpochStats& e : h.epochs) CHECK(std::isfinite(e.mean_loss));
    }
    SUBCASE("history csv is parse-exact and tracks validation when given") {
        auto p = model::init_params<float>(spec, cfg.seed);
        const train::TrainHistory h = train::train(cfg, data, p, "", &data);
        const std::string csv = h.csv();
        CHECK(csv.rfind("epoch,mean_loss,val_dsc\n", 0) == 0);

        // %.17g survives a strtod round-trip exactly.
        const size_t line1 = csv.find('\n') + 1;
        const size_t comma = csv.find(',', line1);
        const std::string loss_text =
            csv.substr(comma + 1, csv.find(',', comma + 1) - comma - 1);
        CHECK(std::strtod(loss_text.c_str(), nullptr) == h.epochs[0].mean_loss);

        for (const train::EpochStats& e : h.epochs) {
            CHECK(e.has_val);
            CHECK(e.val_dsc >= 0.0);
            CHECK(e.val_dsc <= 1.0);
        }

        // Without a validation set the third field is empty.
        auto q = model::init_params<float>(spec, cfg.seed);
        const train::TrainHistory bare = train::train(cfg, data, q);
        CHECK(bare.csv().find(",\n") != std::string::npos);
        CHECK_FALSE(bare.epochs[0].has_val);
    }
    SUBCASE("periodic checkpoints") {
        train::TrainConfig cadence = cfg;
        cadence.checkpoint_every = 1;
        cadence.max_epochs = 2;
        auto p = model::init_params<float>(spec, 2);
        std::filesystem::create_directories(td.sub("ck"));
        train::train(cadence, data, p, td.sub("ck"));
        CHECK(std::filesystem::exists(td.sub("ck/checkpoint_epoch_1.bin")));
        CHECK(std::filesystem::exists(td.sub("ck/checkpoint_epoch_2.bin")));
        // The final snapshot is taken after the last epoch: same bytes.
        CHECK(oracle::read_file(td.sub("ck/checkpoint_epoch_2.bin")) ==
              oracle::read_file(td.sub("ck/checkpoint_final.bin")));
    }
    SUBCASE("one tiny optimizer step strictly decreases the loss") {
        // Double precision so the decrease is resolvable at lr = 1e-6.
        const ArchSpec small = ArchSpec::tiny(16);
        auto p = model::init_params<double>(small, 31);
        Tensor4<double> x({4, 1, 16, 16}, 0.0), g({4, 1, 16, 16}, 0.0);
        for (int i = 0; i < 4; ++i)
            for (size_t j = 0; j < data[i].image.size(); ++j) {
                x.data()[i * data[i].image.size() + j] = data[i].image.data()[j];
                g.data()[i * data[i].mask.size() + j] = data[i].mask.data()[j];
            }

        model::ForwardCache<double> cache;
        const Tensor4<double> prob = model::estan_forward_cached(x, p, cache);
        const double before = loss::dice_loss(prob, g);
        const Tensor4<double> grad_prob = loss::dice_loss_backward(prob, g);
        const model::ModelGrads<double> grads = model::estan_backward(p, cache, grad_prob);

        nn::AdamState<double> adam;
        adam.lr = 1e-6;
        auto pspans = model::param_spans(p);
        const auto gspans = model::grad_spans(grads, p.order);
        nn::adam_step(pspans, gspans, adam);

        const double after = loss::dice_loss(model::estan_forward(x, p), g);
        CHECK(after < before);
    }
    SUBCASE("poisoned parameters surface as a numeric error") {
        auto p = model::init_params<float>(spec, 5);
        p.kernels.at("basic.b1.conv1").weights.data()[0] =
            std::numeric_limits<float>::quiet_NaN();
        CHECK_THROWS_AS(train::train(cfg, data, p), NumericError);
    }
    SUBCASE("input validation") {
        auto p = model::init_params<float>(spec, 6);
        CHECK_THROWS_WITH_AS(train::train(cfg, {}, p),
                             doctest::Contains("training set is empty"), ValueError);

        train::TrainConfig wrong = cfg;
        wrong.input_hw = 32;
        CHECK_THROWS_AS(train::train(wrong, data, p), ShapeError);

        std::vector<train::TrainSample> bad = {
            {"odd", Tensor4<float>({1, 1, 8, 8}, 0.0f), Tensor4<float>({1, 1, 8, 8}, 0.0f)}};
        CHECK_THROWS_WITH_AS(train::train(cfg, bad, p), doctest::Contains("odd"),
                             ShapeError);
    }
}
