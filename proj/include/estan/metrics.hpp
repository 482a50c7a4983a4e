#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "estan/tensor.hpp"

namespace estan::metrics {

struct BinaryMask {
    int h = 0, w = 0;
    std::vector<uint8_t> v;  // row-major, values 0/1

    BinaryMask() = default;
    BinaryMask(int h_, int w_) : h(h_), w(w_), v(static_cast<size_t>(h_) * w_, 0) {
        if (h_ < 1 || w_ < 1) throw ShapeError("mask dims must be positive");
    }
    uint8_t at(int y, int x) const { return v[static_cast<size_t>(y) * w + x]; }
    uint8_t& at(int y, int x) { return v[static_cast<size_t>(y) * w + x]; }
    size_t area() const {
        size_t n = 0;
        for (uint8_t p : v) n += p;
        return n;
    }
    bool operator==(const BinaryMask&) const = default;
};

/// Thresholds a single-image probability map; ties at the threshold are
/// foreground.
BinaryMask binarize(const Tensor4<float>& prob, double threshold = 0.5);

struct ConfusionAreas {
    int64_t tp = 0, fp = 0, fn = 0, tn = 0;
};

ConfusionAreas confusion(const BinaryMask& pred, const BinaryMask& gt);

/// Area-overlap metrics. The ratios normalized by the ground-truth area
/// (tpr, fpr, aer) are absent when the ground truth is empty; ji and dsc
/// fall back to 1 when both masks are empty.
struct AreaMetrics {
    std::optional<double> tpr, fpr, aer;
    double ji = 0.0, dsc = 0.0;
};

AreaMetrics area_metrics(const BinaryMask& pred, const BinaryMask& gt);

/// (y, x) coordinates of foreground pixels with a background or off-grid
/// 4-neighbor, in row-major scan order.
using Boundary = std::vector<std::pair<int, int>>;
Boundary boundary_extract(const BinaryMask& mask);

/// Symmetric Hausdorff distance between two non-empty boundaries.
double hausdorff_error(const Boundary& b1, const Boundary& b2);

/// Mean over all points of both boundaries of the distance to the nearest
/// point on the other boundary.
double mean_abs_boundary_error(const Boundary& b1, const Boundary& b2);

/// Diameter of the foreground pixel-center set (longest tumor axis).
double tumor_longest_axis(const BinaryMask& mask);

/// Size-group index for the stratified evaluation: [0,100) -> 0,
/// [100,120) -> 1, [120,160) -> 2, [160,inf) -> 3.
int size_group(double tumor_size);
extern const std::array<const char*, 4> kSizeGroupLabels;

/// Per-image evaluation record; absent fields mark undefined metrics
/// (empty masks or boundaries) so aggregates are not silently biased.
struct MetricsReport {
    std::string image_id;
    std::optional<double> tpr, fpr, aer;
    double ji = 0.0, dsc = 0.0;
    std::optional<double> he, mae;
    std::optional<double> tumor_size;
};

/// Computes every metric for one prediction; the original-resolution ground
/// truth (when given) supplies the tumor size.
MetricsReport compute_report(const std::string& image_id, const BinaryMask& pred,
                             const BinaryMask& gt,
                             const BinaryMask* original_gt = nullptr);

struct GroupAggregate {
    std::string label;
    int count = 0;
    std::optional<double> tpr, fpr, ji, dsc, aer, he, mae;
};

/// Partitions reports by tumor-size group and averages each metric over
/// the entries where it is defined.
std::array<GroupAggregate, 4> stratify(const std::vector<MetricsReport>& reports);

std::string report_csv(const std::vector<MetricsReport>& reports);
std::string group_csv(const std::array<GroupAggregate, 4>& groups);

}  // namespace estan::metrics
