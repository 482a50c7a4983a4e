#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <string>
#include <vector>

#include "estan/metrics.hpp"

namespace estan::metrics {

namespace {

constexpr double kInf = 1e20;

std::string fmt(double v) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

std::string fmt_opt(const std::optional<double>& v) { return v ? fmt(*v) : ""; }

/// One pass of the lower-envelope-of-parabolas distance transform.
void dt1d(const std::vector<double>& f, int n, std::vector<double>& d,
          std::vector<int>& v, std::vector<double>& z) {
    int k = 0;
    v[0] = 0;
    z[0] = -kInf;
    z[1] = kInf;
    for (int q = 1; q < n; ++q) {
        double s;
        while (true) {
            s = ((f[q] + static_cast<double>(q) * q) -
                 (f[v[k]] + static_cast<double>(v[k]) * v[k])) /
                (2.0 * q - 2.0 * v[k]);
            if (s <= z[k] && k > 0)
                --k;
            else
                break;
        }
        ++k;
        v[k] = q;
        z[k] = s;
        z[k + 1] = kInf;
    }
    k = 0;
    for (int q = 0; q < n; ++q) {
        while (z[k + 1] < q) ++k;
        const double dq = q - v[k];
        d[q] = dq * dq + f[v[k]];
    }
}

/// Exact squared Euclidean distance transform over an h*w grid, zero at the
/// given sites.
std::vector<double> edt_squared(const Boundary& sites, int h, int w) {
    std::vector<double> grid(static_cast<size_t>(h) * w, kInf);
    for (auto [y, x] : sites) grid[static_cast<size_t>(y) * w + x] = 0.0;
    const int m = std::max(h, w);
    std::vector<double> f(m), d(m), z(m + 1);
    std::vector<int> v(m);
    for (int x = 0; x < w; ++x) {
        for (int y = 0; y < h; ++y) f[y] = grid[static_cast<size_t>(y) * w + x];
        dt1d(f, h, d, v, z);
        for (int y = 0; y < h; ++y) grid[static_cast<size_t>(y) * w + x] = d[y];
    }
    for (int y = 0; y < h; ++y) {
        double* row = grid.data() + static_cast<size_t>(y) * w;
        for (int x = 0; x < w; ++x) f[x] = row[x];
        dt1d(f, w, d, v, z);
        for (int x = 0; x < w; ++x) row[x] = d[x];
    }
    return grid;
}

void require_boundaries(const Boundary& b1, const Boundary& b2, const char* what) {
    if (b1.empty() || b2.empty())
        throw ValueError(std::string(what) + " is undefined for an empty boundary");
    for (const Boundary* b : {&b1, &b2})
        for (auto [y, x] : *b)
            if (y < 0 || x < 0)
                throw ValueError(std::string(what) + ": negative boundary coordinate");
}

std::pair<int, int> grid_extent(const Boundary& b1, const Boundary& b2) {
    int h = 0, w = 0;
    for (const Boundary* b : {&b1, &b2})
        for (auto [y, x] : *b) {
            h = std::max(h, y + 1);
            w = std::max(w, x + 1);
        }
    return {h, w};
}

/// Distance from every point of `from` to the nearest point of `to`.
std::vector<double> nearest_dists(const Boundary& from, const Boundary& to, int h,
                                  int w) {
    std::vector<double> sq = edt_squared(to, h, w);
    std::vector<double> out;
    out.reserve(from.size());
    for (auto [y, x] : from)
        out.push_back(std::sqrt(sq[static_cast<size_t>(y) * w + x]));
    return out;
}

int64_t cross(const std::pair<int, int>& o, const std::pair<int, int>& a,
              const std::pair<int, int>& b) {
    return static_cast<int64_t>(a.first - o.first) * (b.second - o.second) -
           static_cast<int64_t>(a.second - o.second) * (b.first - o.first);
}

}  // namespace

BinaryMask binarize(const Tensor4<float>& prob, double threshold) {
    if (prob.n() != 1 || prob.c() != 1)
        throw ShapeError("binarize expects a single-image, single-channel map, got " +
                         prob.dims().str());
    BinaryMask m(prob.h(), prob.w());
    const float* p = prob.data();
    for (size_t i = 0; i < m.v.size(); ++i)
        m.v[i] = static_cast<double>(p[i]) >= threshold ? 1 : 0;
    return m;
}

ConfusionAreas confusion(const BinaryMask& pred, const BinaryMask& gt) {
    if (pred.h != gt.h || pred.w != gt.w)
        throw ShapeError("confusion: mask dims differ (" + std::to_string(pred.h) + "x" +
                         std::to_string(pred.w) + " vs " + std::to_string(gt.h) + "x" +
                         std::to_string(gt.w) + ")");
    ConfusionAreas c;
    for (size_t i = 0; i < pred.v.size(); ++i) {
        const bool a = pred.v[i] != 0;
        const bool g = gt.v[i] != 0;
        if (a && g)
            ++c.tp;
        else if (a)
            ++c.fp;
        else if (g)
            ++c.fn;
        else
            ++c.tn;
    }
    return c;
}

AreaMetrics area_metrics(const BinaryMask& pred, const BinaryMask& gt) {
    const ConfusionAreas c = confusion(pred, gt);
    const int64_t gt_area = c.tp + c.fn;
    const int64_t uni = c.tp + c.fp + c.fn;
    AreaMetrics m;
    if (gt_area > 0) {
        m.tpr = static_cast<double>(c.tp) / gt_area;
        m.fpr = static_cast<double>(c.fp) / gt_area;
        // Written as the identity so it holds bitwise, not just algebraically.
        m.aer = *m.fpr + (1.0 - *m.tpr);
    }
    if (uni == 0) {
        m.ji = 1.0;  // both masks empty
        m.dsc = 1.0;
    } else {
        m.ji = static_cast<double>(c.tp) / uni;
        // 2|A∩G|/(|A|+|G|) rearranged through JI; same value, exact identity.
        m.dsc = 2.0 * m.ji / (1.0 + m.ji);
    }
    return m;
}

Boundary boundary_extract(const BinaryMask& mask) {
    Boundary b;
    for (int y = 0; y < mask.h; ++y)
        for (int x = 0; x < mask.w; ++x) {
            if (!mask.at(y, x)) continue;
            const bool up = y > 0 && mask.at(y - 1, x);
            const bool down = y < mask.h - 1 && mask.at(y + 1, x);
            const bool left = x > 0 && mask.at(y, x - 1);
            const bool right = x < mask.w - 1 && mask.at(y, x + 1);
            if (!(up && down && left && right)) b.emplace_back(y, x);
        }
    return b;
}

double hausdorff_error(const Boundary& b1, const Boundary& b2) {
    require_boundaries(b1, b2, "hausdorff error");
    auto [h, w] = grid_extent(b1, b2);
    double worst = 0.0;
    for (double d : nearest_dists(b1, b2, h, w)) worst = std::max(worst, d);
    for (double d : nearest_dists(b2, b1, h, w)) worst = std::max(worst, d);
    return worst;
}

double mean_abs_boundary_error(const Boundary& b1, const Boundary& b2) {
    require_boundaries(b1, b2, "mean boundary error");
    auto [h, w] = grid_extent(b1, b2);
    double sum = 0.0;
    for (double d : nearest_dists(b1, b2, h, w)) sum += d;
    for (double d : nearest_dists(b2, b1, h, w)) sum += d;
    return sum / static_cast<double>(b1.size() + b2.size());
}

double tumor_longest_axis(const BinaryMask& mask) {
    std::vector<std::pair<int, int>> pts;  // (x, y) for hull arithmetic
    for (int y = 0; y < mask.h; ++y)
        for (int x = 0; x < mask.w; ++x)
            if (mask.at(y, x)) pts.emplace_back(x, y);
    if (pts.empty())
        throw ValueError("tumor longest axis is undefined for an empty mask");
    if (pts.size() == 1) return 0.0;

    // Monotone-chain convex hull; the set diameter is attained at hull
    // vertices, which are few, so the pairwise scan afterwards is cheap.
    std::sort(pts.begin(), pts.end());
    std::vector<std::pair<int, int>> hull(2 * pts.size());
    size_t k = 0;
    for (const auto& p : pts) {
        while (k >= 2 && cross(hull[k - 2], hull[k - 1], p) <= 0) --k;
        hull[k++] = p;
    }
    const size_t lower = k + 1;
    for (auto it = pts.rbegin(); it != pts.rend(); ++it) {
        while (k >= lower && cross(hull[k - 2], hull[k - 1], *it) <= 0) --k;
        hull[k++] = *it;
    }
    hull.resize(k - 1);

    int64_t best = 0;
    for (size_t i = 0; i < hull.size(); ++i)
        for (size_t j = i + 1; j < hull.size(); ++j) {
            const int64_t dx = hull[i].first - hull[j].first;
            const int64_t dy = hull[i].second - hull[j].second;
            best = std::max(best, dx * dx + dy * dy);
        }
    return std::sqrt(static_cast<double>(best));
}

int size_group(double tumor_size) {
    if (tumor_size < 100.0) return 0;
    if (tumor_size < 120.0) return 1;
    if (tumor_size < 160.0) return 2;
    return 3;
}

const std::array<const char*, 4> kSizeGroupLabels = {"0-100", "100-120", "120-160",
                                                     "160+"};

MetricsReport compute_report(const std::string& image_id, const BinaryMask& pred,
                             const BinaryMask& gt, const BinaryMask* original_gt) {
    MetricsReport r;
    r.image_id = image_id;
    const AreaMetrics am = area_metrics(pred, gt);
    r.tpr = am.tpr;
    r.fpr = am.fpr;
    r.aer = am.aer;
    r.ji = am.ji;
    r.dsc = am.dsc;
    const Boundary bp = boundary_extract(pred);
    const Boundary bg = boundary_extract(gt);
    if (!bp.empty() && !bg.empty()) {
        r.he = hausdorff_error(bp, bg);
        r.mae = mean_abs_boundary_error(bp, bg);
    }
    if (original_gt && original_gt->area() > 0)
        r.tumor_size = tumor_longest_axis(*original_gt);
    return r;
}

std::array<GroupAggregate, 4> stratify(const std::vector<MetricsReport>& reports) {
    std::array<GroupAggregate, 4> groups;
    struct Sums {
        double v[7] = {};
        int n[7] = {};
    };
    std::array<Sums, 4> sums;
    for (int g = 0; g < 4; ++g) groups[g].label = kSizeGroupLabels[g];
    for (const MetricsReport& r : reports) {
        if (!r.tumor_size)
            throw ValueError("stratify: report '" + r.image_id + "' lacks a tumor size");
        const int g = size_group(*r.tumor_size);
        ++groups[g].count;
        const std::optional<double> vals[7] = {r.tpr, r.fpr, r.ji,  r.dsc,
                                               r.aer, r.he,  r.mae};
        for (int i = 0; i < 7; ++i)
            if (vals[i]) {
                sums[g].v[i] += *vals[i];
                ++sums[g].n[i];
            }
    }
    for (int g = 0; g < 4; ++g) {
        std::optional<double>* outs[7] = {&groups[g].tpr, &groups[g].fpr, &groups[g].ji,
                                          &groups[g].dsc, &groups[g].aer, &groups[g].he,
                                          &groups[g].mae};
        for (int i = 0; i < 7; ++i)
            if (sums[g].n[i] > 0) *outs[i] = sums[g].v[i] / sums[g].n[i];
    }
    return groups;
}

std::string report_csv(const std::vector<MetricsReport>& reports) {
    std::string out = "image_id,tpr,fpr,ji,dsc,aer,he,mae,tumor_size,group\n";
    for (const MetricsReport& r : reports) {
        out += r.image_id;
        out += ',' + fmt_opt(r.tpr) + ',' + fmt_opt(r.fpr) + ',' + fmt(r.ji) + ',' +
               fmt(r.dsc) + ',' + fmt_opt(r.aer) + ',' + fmt_opt(r.he) + ',' +
               fmt_opt(r.mae) + ',' + fmt_opt(r.tumor_size) + ',';
        if (r.tumor_size) out += kSizeGroupLabels[size_group(*r.tumor_size)];
        out += '\n';
    }
    return out;
}

std::string group_csv(const std::array<GroupAggregate, 4>& groups) {
    std::string out = "group,count,tpr,fpr,ji,dsc,aer,he,mae\n";
    for (const GroupAggregate& g : groups) {
        out += g.label;
        out += ',' + std::to_string(g.count) + ',' + fmt_opt(g.tpr) + ',' +
               fmt_opt(g.fpr) + ',' + fmt_opt(g.ji) + ',' + fmt_opt(g.dsc) + ',' +
               fmt_opt(g.aer) + ',' + fmt_opt(g.he) + ',' + fmt_opt(g.mae) + '\n';
    }
    return out;
}

}  // namespace estan::metrics
