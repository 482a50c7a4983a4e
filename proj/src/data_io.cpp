#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "estan/data_io.hpp"

namespace fs = std::filesystem;

namespace estan::io {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            fields.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur += ch;
        }
    }
    fields.push_back(cur);
    return fields;
}

std::string resolve(const std::string& dir, const std::string& path) {
    if (!path.empty() && path.front() == '/') return path;
    return dir.empty() ? path : dir + "/" + path;
}

/// Path as stored in a manifest at `dir`: relative when the target lies
/// under that directory, absolute otherwise.
std::string manifest_path_form(const std::string& dir, const std::string& path) {
    const fs::path rel = fs::path(path).lexically_relative(dir);
    if (rel.empty() || rel.native().starts_with(".."))
        return path;
    return rel.string();
}

}  // namespace

DatasetManifest load_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open manifest: " + path);
    DatasetManifest m;
    m.dir = fs::path(path).parent_path().string();

    std::string line;
    if (!std::getline(in, line))
        throw FormatError(path + ": empty manifest");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != "image_id,image_path,mask_path")
        throw FormatError(path + ": bad header '" + line + "'");

    std::set<std::string> seen;
    size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line == "\r") continue;
        auto fields = split_csv_line(line);
        if (fields.size() != 3)
            throw FormatError(path + ":" + std::to_string(lineno) +
                              ": expected 3 fields, got " +
                              std::to_string(fields.size()));
        ManifestRecord r;
        r.image_id = fields[0];
        r.image_path = resolve(m.dir, fields[1]);
        r.mask_path = resolve(m.dir, fields[2]);
        if (r.image_id.empty())
            throw FormatError(path + ":" + std::to_string(lineno) + ": empty image_id");
        if (!seen.insert(r.image_id).second)
            throw FormatError(path + ":" + std::to_string(lineno) +
                              ": duplicate image_id '" + r.image_id + "'");
        auto [h, w] = read_png_dims(r.image_path);
        r.original_h = h;
        r.original_w = w;
        read_png_dims(r.mask_path);  // fail now, not at first use
        m.records.push_back(std::move(r));
    }
    return m;
}

void save_manifest(const DatasetManifest& manifest, const std::string& path) {
    const std::string dir = fs::path(path).parent_path().string();
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open manifest for writing: " + path);
    out << "image_id,image_path,mask_path\n";
    for (const ManifestRecord& r : manifest.records)
        out << r.image_id << ',' << manifest_path_form(dir, r.image_path) << ','
            << manifest_path_form(dir, r.mask_path) << '\n';
    if (!out) throw IoError("write failed: " + path);
}

Tensor4<float> resize_bilinear(const Tensor4<float>& src, int out_h, int out_w) {
    if (out_h < 1 || out_w < 1) throw ShapeError("resize target must be positive");
    Tensor4<float> out({src.n(), src.c(), out_h, out_w}, 0.0f);
    const double sy = static_cast<double>(src.h()) / out_h;
    const double sx = static_cast<double>(src.w()) / out_w;
    for (int n = 0; n < src.n(); ++n)
        for (int c = 0; c < src.c(); ++c)
            for (int oy = 0; oy < out_h; ++oy) {
                const double fy = (oy + 0.5) * sy - 0.5;
                const int y0 = static_cast<int>(std::floor(fy));
                const double wy = fy - y0;
                const int y0c = std::clamp(y0, 0, src.h() - 1);
                const int y1c = std::clamp(y0 + 1, 0, src.h() - 1);
                float* dst = out.row(n, c, oy);
                const float* r0 = src.row(n, c, y0c);
                const float* r1 = src.row(n, c, y1c);
                for (int ox = 0; ox < out_w; ++ox) {
                    const double fx = (ox + 0.5) * sx - 0.5;
                    const int x0 = static_cast<int>(std::floor(fx));
                    const double wx = fx - x0;
                    const int x0c = std::clamp(x0, 0, src.w() - 1);
                    const int x1c = std::clamp(x0 + 1, 0, src.w() - 1);
                    const double top = (1.0 - wx) * r0[x0c] + wx * r0[x1c];
                    const double bot = (1.0 - wx) * r1[x0c] + wx * r1[x1c];
                    dst[ox] = static_cast<float>((1.0 - wy) * top + wy * bot);
                }
            }
    return out;
}

metrics::BinaryMask resize_nearest(const metrics::BinaryMask& src, int out_h,
                                   int out_w) {
    metrics::BinaryMask out(out_h, out_w);
    const double sy = static_cast<double>(src.h) / out_h;
    const double sx = static_cast<double>(src.w) / out_w;
    for (int oy = 0; oy < out_h; ++oy) {
        const int iy = std::clamp(static_cast<int>((oy + 0.5) * sy), 0, src.h - 1);
        for (int ox = 0; ox < out_w; ++ox) {
            const int ix = std::clamp(static_cast<int>((ox + 0.5) * sx), 0, src.w - 1);
            out.at(oy, ox) = src.at(iy, ix);
        }
    }
    return out;
}

Tensor4<float> image_to_tensor(const GrayImage& img) {
    Tensor4<float> t({1, 1, img.h, img.w}, 0.0f);
    for (size_t i = 0; i < img.v.size(); ++i)
        t.data()[i] = static_cast<float>(img.v[i]) / 255.0f;
    return t;
}

GrayImage prob_to_image(const Tensor4<float>& prob) {
    if (prob.n() != 1 || prob.c() != 1)
        throw ShapeError("prob_to_image expects (1,1,h,w), got " + prob.dims().str());
    GrayImage img(prob.h(), prob.w());
    for (size_t i = 0; i < img.v.size(); ++i) {
        const double p = std::clamp(static_cast<double>(prob.data()[i]), 0.0, 1.0);
        img.v[i] = static_cast<uint8_t>(std::lround(255.0 * p));
    }
    return img;
}

GrayImage mask_to_image(const metrics::BinaryMask& mask) {
    GrayImage img(mask.h, mask.w);
    for (size_t i = 0; i < img.v.size(); ++i) img.v[i] = mask.v[i] ? 255 : 0;
    return img;
}

metrics::BinaryMask tensor_to_mask(const Tensor4<float>& mask) {
    if (mask.n() != 1 || mask.c() != 1)
        throw ShapeError("tensor_to_mask expects (1,1,h,w), got " + mask.dims().str());
    metrics::BinaryMask out(mask.h(), mask.w());
    for (size_t i = 0; i < out.v.size(); ++i) out.v[i] = mask.data()[i] != 0.0f ? 1 : 0;
    return out;
}

Sample load_sample(const ManifestRecord& record, int input_hw) {
    const GrayImage img = read_gray_png(record.image_path);
    const GrayImage msk = read_gray_png(record.mask_path);
    if (img.h != msk.h || img.w != msk.w)
        throw FormatError("mask dims differ from image for '" + record.image_id +
                          "' (" + record.mask_path + ")");
    if (record.original_h != img.h || record.original_w != img.w)
        throw FormatError("manifest dims are stale for '" + record.image_id + "'");

    Sample s;
    s.id = record.image_id;
    s.original_mask = metrics::BinaryMask(msk.h, msk.w);
    for (size_t i = 0; i < msk.v.size(); ++i)
        s.original_mask.v[i] = msk.v[i] > 0 ? 1 : 0;

    s.image = resize_bilinear(image_to_tensor(img), input_hw, input_hw);
    const metrics::BinaryMask small = resize_nearest(s.original_mask, input_hw, input_hw);
    s.mask = Tensor4<float>({1, 1, input_hw, input_hw}, 0.0f);
    for (size_t i = 0; i < small.v.size(); ++i)
        s.mask.data()[i] = static_cast<float>(small.v[i]);
    return s;
}

std::vector<Sample> load_all_samples(const DatasetManifest& manifest, int input_hw,
                                     bool include_empty,
                                     std::vector<std::string>* skipped) {
    std::vector<Sample> samples;
    samples.reserve(manifest.records.size());
    for (const ManifestRecord& r : manifest.records) {
        Sample s = load_sample(r, input_hw);
        if (!include_empty && s.original_mask.area() == 0) {
            if (skipped) skipped->push_back(s.id);
            continue;
        }
        samples.push_back(std::move(s));
    }
    return samples;
}

FoldSplit kfold_split(size_t n, int k, uint64_t seed) {
    if (k < 1) throw ValueError("fold count must be >= 1");
    if (n < static_cast<size_t>(k))
        throw ValueError("cannot split " + std::to_string(n) + " records into " +
                         std::to_string(k) + " folds");
    std::vector<size_t> order(n);
    for (size_t i = 0; i < n; ++i) order[i] = i;
    SeededRng rng(seed ^ rng_streams::kFoldStream);
    for (size_t i = n - 1; i > 0; --i) {
        const size_t j = rng.next_below(i + 1);
        std::swap(order[i], order[j]);
    }
    FoldSplit split;
    split.k = k;
    split.seed = seed;
    split.folds.resize(k);
    for (size_t i = 0; i < n; ++i) split.folds[i % k].push_back(order[i]);
    return split;
}

std::vector<size_t> train_indices(const FoldSplit& split, int held_out_fold) {
    if (held_out_fold < 0 || held_out_fold >= split.k)
        throw ValueError("fold index " + std::to_string(held_out_fold) +
                         " out of range for k=" + std::to_string(split.k));
    std::vector<size_t> out;
    for (int f = 0; f < split.k; ++f)
        if (f != held_out_fold)
            out.insert(out.end(), split.folds[f].begin(), split.folds[f].end());
    std::sort(out.begin(), out.end());
    return out;
}

DatasetManifest synth_generate(int count, int hw, uint64_t seed,
                               const std::string& out_dir) {
    if (count < 1) throw ValueError("synthetic sample count must be >= 1");
    if (hw < 16 || hw % 16 != 0)
        throw ValueError("synthetic image size must be a positive multiple of 16, got " +
                         std::to_string(hw));
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create output directory " + out_dir + ": " +
                          ec.message());

    SeededRng rng(seed);
    DatasetManifest m;
    m.dir = out_dir;
    for (int i = 0; i < count; ++i) {
        const double bg = kSynthBgLo + rng.next_unit() * (kSynthBgHi - kSynthBgLo);
        const double fg = kSynthFgLo + rng.next_unit() * (kSynthFgHi - kSynthFgLo);
        const double cx =
            (kSynthCenterLo + rng.next_unit() * (kSynthCenterHi - kSynthCenterLo)) * hw;
        const double cy =
            (kSynthCenterLo + rng.next_unit() * (kSynthCenterHi - kSynthCenterLo)) * hw;
        const double ax =
            (kSynthSemiAxisLo + rng.next_unit() * (kSynthSemiAxisHi - kSynthSemiAxisLo)) *
            hw;
        const double ay =
            (kSynthSemiAxisLo + rng.next_unit() * (kSynthSemiAxisHi - kSynthSemiAxisLo)) *
            hw;
        const double theta = rng.next_unit() * 3.14159265358979323846;
        const double ct = std::cos(theta), st = std::sin(theta);

        GrayImage img(hw, hw), msk(hw, hw);
        for (int y = 0; y < hw; ++y)
            for (int x = 0; x < hw; ++x) {
                const double dx = x - cx, dy = y - cy;
                const double u = dx * ct + dy * st;
                const double v = -dx * st + dy * ct;
                const bool inside = (u / ax) * (u / ax) + (v / ay) * (v / ay) <= 1.0;
                const double noise = 1.0 + kSynthSpeckle * (rng.next_unit() - 0.5);
                const double val = std::clamp((inside ? fg : bg) * noise, 0.0, 1.0);
                img.at(y, x) = static_cast<uint8_t>(std::lround(255.0 * val));
                msk.at(y, x) = inside ? 255 : 0;
            }

        char suffix[16];
        std::snprintf(suffix, sizeof suffix, "%04d", i);
        ManifestRecord r;
        r.image_id = std::string("synth_") + suffix;
        r.image_path = out_dir + "/image_" + suffix + ".png";
        r.mask_path = out_dir + "/mask_" + suffix + ".png";
        r.original_h = hw;
        r.original_w = hw;
        write_gray_png(r.image_path, img);
        write_gray_png(r.mask_path, msk);
        m.records.push_back(std::move(r));
    }
    save_manifest(m, out_dir + "/manifest.csv");
    return m;
}

}  // namespace estan::io
