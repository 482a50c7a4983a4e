#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "estan/arch.hpp"
#include "estan/data_io.hpp"
#include "estan/metrics.hpp"
#include "estan/model.hpp"
#include "estan/train.hpp"

namespace fs = std::filesystem;
using namespace estan;

namespace {

/// Every tunable of a run: training hyperparameters, architecture scale,
/// and paths. Config-file values fill it first, command-line flags win.
struct RunConfig {
    double lr = 1e-4;
    int batch = 4;
    int epochs = 50;
    uint64_t seed = 0;
    bool shift_augment = false;
    double max_shift_fraction = 0.1;
    int checkpoint_every = 0;
    bool dice_per_image = false;
    int input_hw = 256;
    bool tiny = false;
    std::string manifest;
    std::string checkpoint;
    int fold = -1;  // -1 trains on every record
    int kfolds = 5;
    std::string out = ".";
    bool include_normal = false;
    bool write_prob = false;

    bool operator==(const RunConfig&) const = default;
};

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t");
    return s.substr(a, b - a + 1);
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ValueError("config key '" + key + "': expected a boolean, got '" + v + "'");
}

double parse_double(const std::string& key, const std::string& v) {
    size_t used = 0;
    double d = 0;
    try {
        d = std::stod(v, &used);
    } catch (const std::exception&) {
        used = std::string::npos;
    }
    if (used != v.size())
        throw ValueError("config key '" + key + "': expected a number, got '" + v + "'");
    return d;
}

int64_t parse_int(const std::string& key, const std::string& v) {
    size_t used = 0;
    int64_t i = 0;
    try {
        i = std::stoll(v, &used);
    } catch (const std::exception&) {
        used = std::string::npos;
    }
    if (used != v.size())
        throw ValueError("config key '" + key + "': expected an integer, got '" + v + "'");
    return i;
}

uint64_t parse_uint(const std::string& key, const std::string& v) {
    size_t used = 0;
    uint64_t i = 0;
    try {
        i = std::stoull(v, &used);
    } catch (const std::exception&) {
        used = std::string::npos;
    }
    if (used != v.size())
        throw ValueError("config key '" + key + "': expected an unsigned integer, got '" +
                         v + "'");
    return i;
}

void apply_config_entry(RunConfig& cfg, const std::string& key, const std::string& val) {
    if (key == "lr") cfg.lr = parse_double(key, val);
    else if (key == "batch") cfg.batch = static_cast<int>(parse_int(key, val));
    else if (key == "epochs") cfg.epochs = static_cast<int>(parse_int(key, val));
    else if (key == "seed") cfg.seed = parse_uint(key, val);
    else if (key == "shift_augment") cfg.shift_augment = parse_bool(key, val);
    else if (key == "max_shift_fraction") cfg.max_shift_fraction = parse_double(key, val);
    else if (key == "checkpoint_every")
        cfg.checkpoint_every = static_cast<int>(parse_int(key, val));
    else if (key == "dice_per_image") cfg.dice_per_image = parse_bool(key, val);
    else if (key == "input_hw") cfg.input_hw = static_cast<int>(parse_int(key, val));
    else if (key == "tiny") cfg.tiny = parse_bool(key, val);
    else if (key == "manifest") cfg.manifest = val;
    else if (key == "checkpoint") cfg.checkpoint = val;
    else if (key == "fold") cfg.fold = static_cast<int>(parse_int(key, val));
    else if (key == "kfolds") cfg.kfolds = static_cast<int>(parse_int(key, val));
    else if (key == "out") cfg.out = val;
    else if (key == "include_normal") cfg.include_normal = parse_bool(key, val);
    else if (key == "write_prob") cfg.write_prob = parse_bool(key, val);
    else
        throw ValueError("unknown config key '" + key + "'");
}

void load_config_file(RunConfig& cfg, const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file: " + path);
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const size_t hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty()) continue;
        const size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ValueError(path + ":" + std::to_string(lineno) +
                             ": expected key=value, got '" + line + "'");
        apply_config_entry(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
}

std::string render_config(const RunConfig& c) {
    std::string out;
    out += "batch=" + std::to_string(c.batch) + "\n";
    out += "checkpoint=" + c.checkpoint + "\n";
    out += "checkpoint_every=" + std::to_string(c.checkpoint_every) + "\n";
    out += "dice_per_image=" + std::string(c.dice_per_image ? "true" : "false") + "\n";
    out += "epochs=" + std::to_string(c.epochs) + "\n";
    out += "fold=" + std::to_string(c.fold) + "\n";
    out += "include_normal=" + std::string(c.include_normal ? "true" : "false") + "\n";
    out += "input_hw=" + std::to_string(c.input_hw) + "\n";
    out += "kfolds=" + std::to_string(c.kfolds) + "\n";
    out += "lr=" + fmt_double(c.lr) + "\n";
    out += "manifest=" + c.manifest + "\n";
    out += "max_shift_fraction=" + fmt_double(c.max_shift_fraction) + "\n";
    out += "out=" + c.out + "\n";
    out += "seed=" + std::to_string(c.seed) + "\n";
    out += "shift_augment=" + std::string(c.shift_augment ? "true" : "false") + "\n";
    out += "tiny=" + std::string(c.tiny ? "true" : "false") + "\n";
    out += "write_prob=" + std::string(c.write_prob ? "true" : "false") + "\n";
    return out;
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::trunc | std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + path);
    out << content;
    if (!out) throw IoError("write failed: " + path);
}

void ensure_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create directory " + dir + ": " + ec.message());
}

void echo_config(const RunConfig& cfg) {
    ensure_dir(cfg.out);
    write_file(cfg.out + "/config_resolved.txt", render_config(cfg));
}

arch::ArchSpec spec_from(const RunConfig& cfg) {
    arch::ArchSpec spec =
        cfg.tiny ? arch::ArchSpec::tiny(cfg.input_hw) : arch::ArchSpec::defaults();
    spec.input_hw = cfg.input_hw;
    spec.validate();
    return spec;
}

int cmd_train(const RunConfig& cfg) {
    if (cfg.manifest.empty()) throw ValueError("train requires a manifest");
    const arch::ArchSpec spec = spec_from(cfg);
    echo_config(cfg);

    const io::DatasetManifest manifest = io::load_manifest(cfg.manifest);
    std::vector<std::string> skipped;
    std::vector<io::Sample> samples =
        io::load_all_samples(manifest, cfg.input_hw, cfg.include_normal, &skipped);
    for (const std::string& id : skipped)
        std::cerr << "note: skipping '" << id << "' (empty mask)\n";
    if (samples.empty()) throw ValueError("no usable training records in manifest");

    std::vector<train::TrainSample> data, val;
    if (cfg.fold >= 0) {
        const io::FoldSplit split = io::kfold_split(samples.size(), cfg.kfolds, cfg.seed);
        for (size_t i : io::train_indices(split, cfg.fold))
            data.push_back({samples[i].id, std::move(samples[i].image),
                            std::move(samples[i].mask)});
        for (size_t i : split.folds[cfg.fold])
            val.push_back({samples[i].id, std::move(samples[i].image),
                           std::move(samples[i].mask)});
    } else {
        for (io::Sample& s : samples)
            data.push_back({s.id, std::move(s.image), std::move(s.mask)});
    }

    train::TrainConfig tc;
    tc.learning_rate = cfg.lr;
    tc.batch_size = cfg.batch;
    tc.max_epochs = cfg.epochs;
    tc.seed = cfg.seed;
    tc.shift_augment = cfg.shift_augment;
    tc.max_shift_fraction = cfg.max_shift_fraction;
    tc.input_hw = cfg.input_hw;
    tc.checkpoint_every = cfg.checkpoint_every;
    tc.dice_per_image = cfg.dice_per_image;

    model::ModelParams<float> params = model::init_params<float>(spec, cfg.seed);
    const train::TrainHistory history =
        train::train(tc, data, params, cfg.out, val.empty() ? nullptr : &val);
    write_file(cfg.out + "/history.csv", history.csv());

    const train::EpochStats& last = history.epochs.back();
    std::cout << "trained " << history.epochs.size() << " epochs on " << data.size()
              << " samples; final mean loss " << last.mean_loss;
    if (last.has_val) std::cout << ", val dsc " << last.val_dsc;
    std::cout << "\ncheckpoint: " << cfg.out << "/checkpoint_final.bin\n";
    return 0;
}

int cmd_predict(const RunConfig& cfg) {
    if (cfg.manifest.empty()) throw ValueError("predict requires a manifest");
    if (cfg.checkpoint.empty()) throw ValueError("predict requires a checkpoint");
    const arch::ArchSpec spec = spec_from(cfg);
    echo_config(cfg);

    const model::ModelParams<float> params = train::load_checkpoint(cfg.checkpoint, spec);
    const io::DatasetManifest manifest = io::load_manifest(cfg.manifest);
    for (const io::ManifestRecord& r : manifest.records) {
        const io::Sample sample = io::load_sample(r, cfg.input_hw);
        const Tensor4<float> prob = model::estan_forward(sample.image, params);
        io::write_gray_png(cfg.out + "/pred_" + r.image_id + ".png",
                           io::mask_to_image(metrics::binarize(prob)));
        if (cfg.write_prob)
            io::write_gray_png(cfg.out + "/prob_" + r.image_id + ".png",
                               io::prob_to_image(prob));
    }
    std::cout << "wrote " << manifest.records.size() << " predictions to " << cfg.out
              << "\n";
    return 0;
}

int cmd_evaluate(const RunConfig& cfg, const std::string& pred_dir) {
    if (cfg.manifest.empty()) throw ValueError("evaluate requires a manifest");
    echo_config(cfg);

    const io::DatasetManifest manifest = io::load_manifest(cfg.manifest);
    std::vector<metrics::MetricsReport> reports;
    std::string csv = "image_id,tpr,fpr,ji,dsc,aer,he,mae,tumor_size,group\n";
    int missing = 0;
    for (const io::ManifestRecord& r : manifest.records) {
        const io::Sample sample = io::load_sample(r, cfg.input_hw);
        if (!cfg.include_normal && sample.original_mask.area() == 0) continue;
        const std::string pred_path = pred_dir + "/pred_" + r.image_id + ".png";
        if (!fs::exists(pred_path)) {
            std::cerr << "missing prediction: " << pred_path << "\n";
            csv += r.image_id + ",,,,,,,,,\n";
            ++missing;
            continue;
        }
        const io::GrayImage pred_img = io::read_gray_png(pred_path);
        metrics::BinaryMask pred(pred_img.h, pred_img.w);
        for (size_t i = 0; i < pred.v.size(); ++i) pred.v[i] = pred_img.v[i] > 0 ? 1 : 0;
        const metrics::BinaryMask gt = io::tensor_to_mask(sample.mask);
        const metrics::MetricsReport report =
            metrics::compute_report(r.image_id, pred, gt, &sample.original_mask);
        const std::string row = metrics::report_csv({report});
        csv += row.substr(row.find('\n') + 1);
        reports.push_back(report);
    }
    write_file(cfg.out + "/metrics.csv", csv);

    std::vector<metrics::MetricsReport> sized;
    for (const metrics::MetricsReport& r : reports)
        if (r.tumor_size) sized.push_back(r);
    const std::string groups = metrics::group_csv(metrics::stratify(sized));
    write_file(cfg.out + "/groups.csv", groups);
    std::cout << groups;
    std::cout << "evaluated " << reports.size() << " images";
    if (missing) std::cout << "; " << missing << " predictions missing";
    std::cout << "\n";
    return missing > 0 ? 2 : 0;
}

int cmd_inspect(const RunConfig& cfg, bool out_given) {
    const arch::ArchSpec spec = spec_from(cfg);
    std::cout << "parameters: " << arch::spec_param_count(spec) << "\n";
    std::cout << arch::trace_csv(spec);
    if (out_given) {
        echo_config(cfg);
        write_file(cfg.out + "/trace.csv", arch::trace_csv(spec));
        write_file(cfg.out + "/params.csv", arch::params_csv(spec));
    }
    return 0;
}

int cmd_synth(const RunConfig& cfg, int count) {
    const io::DatasetManifest m =
        io::synth_generate(count, cfg.input_hw, cfg.seed, cfg.out);
    echo_config(cfg);
    std::cout << "manifest: " << cfg.out << "/manifest.csv (" << m.records.size()
              << " samples)\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"dual-encoder breast-ultrasound tumor segmentation"};
    app.require_subcommand(1);

    std::string config_path;
    RunConfig flags;  // CLI values; merged over file values per-flag below
    app.add_option("--config", config_path, "flat key=value config file");
    auto* opt_manifest = app.add_option("--manifest", flags.manifest, "dataset manifest CSV");
    auto* opt_fold = app.add_option("--fold", flags.fold, "held-out fold index");
    auto* opt_seed = app.add_option("--seed", flags.seed, "run seed");
    auto* opt_lr = app.add_option("--lr", flags.lr, "learning rate");
    auto* opt_batch = app.add_option("--batch", flags.batch, "batch size");
    auto* opt_epochs = app.add_option("--epochs", flags.epochs, "epoch cap");
    auto* opt_hw = app.add_option("--input-hw", flags.input_hw, "working image size");
    auto* opt_out = app.add_option("--out", flags.out, "output directory");
    auto* opt_tiny = app.add_flag("--tiny", flags.tiny, "scaled-down channel tables");

    CLI::App* sub_train = app.add_subcommand("train", "fit the network on a manifest");
    CLI::App* sub_predict = app.add_subcommand("predict", "write binarized masks");
    std::string checkpoint_arg;
    sub_predict->add_option("checkpoint", checkpoint_arg, "trained checkpoint file");
    auto* opt_prob =
        sub_predict->add_flag("--prob", flags.write_prob, "also write probability maps");
    CLI::App* sub_eval = app.add_subcommand("evaluate", "score predictions against masks");
    std::string pred_dir;
    sub_eval->add_option("pred_dir", pred_dir, "directory of pred_<id>.png files")
        ->required();
    CLI::App* sub_inspect = app.add_subcommand("inspect", "architecture report");
    CLI::App* sub_synth = app.add_subcommand("synth", "generate a synthetic dataset");
    int synth_count = 8;
    sub_synth->add_option("--count", synth_count, "number of image/mask pairs");
    for (CLI::App* sub : {sub_train, sub_predict, sub_eval, sub_inspect, sub_synth})
        sub->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        RunConfig cfg;
        if (!config_path.empty()) load_config_file(cfg, config_path);
        if (opt_manifest->count()) cfg.manifest = flags.manifest;
        if (opt_fold->count()) cfg.fold = flags.fold;
        if (opt_seed->count()) cfg.seed = flags.seed;
        if (opt_lr->count()) cfg.lr = flags.lr;
        if (opt_batch->count()) cfg.batch = flags.batch;
        if (opt_epochs->count()) cfg.epochs = flags.epochs;
        if (opt_hw->count()) cfg.input_hw = flags.input_hw;
        if (opt_out->count()) cfg.out = flags.out;
        if (opt_tiny->count()) cfg.tiny = flags.tiny;
        if (opt_prob->count()) cfg.write_prob = flags.write_prob;
        if (!checkpoint_arg.empty()) cfg.checkpoint = checkpoint_arg;

        if (sub_train->parsed()) return cmd_train(cfg);
        if (sub_predict->parsed()) return cmd_predict(cfg);
        if (sub_eval->parsed()) return cmd_evaluate(cfg, pred_dir);
        if (sub_inspect->parsed()) return cmd_inspect(cfg, opt_out->count() > 0);
        if (sub_synth->parsed()) return cmd_synth(cfg, synth_count);
        std::cerr << "error: no command\n";
        return 1;
    } catch (const NumericError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const FormatError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const ShapeError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
