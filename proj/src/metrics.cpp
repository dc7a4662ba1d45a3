#include "fedaaw/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "fedaaw/errors.hpp"

namespace fedaaw {

VoxelMask::VoxelMask(Dims3 d, std::vector<std::uint8_t> values, Spacing3 s)
    : dims(d), data(std::move(values)), spacing(s) {
    if (dims.count() == 0) throw InvalidInput("VoxelMask: dims must be positive");
    if (data.size() != dims.count()) {
        throw InvalidInput(fmt::format("VoxelMask: {} values for {}x{}x{} grid", data.size(), dims.z, dims.y, dims.x));
    }
    if (!(spacing.z > 0 && spacing.y > 0 && spacing.x > 0)) throw InvalidInput("VoxelMask: spacing must be positive");
    for (auto& v : data) {
        if (v > 1) throw InvalidInput("VoxelMask: values must be 0 or 1");
    }
}

VoxelMask::VoxelMask(Dims3 d, Spacing3 s) : VoxelMask(d, std::vector<std::uint8_t>(d.count(), 0), s) {}

std::size_t VoxelMask::foreground_count() const {
    return static_cast<std::size_t>(std::count(data.begin(), data.end(), std::uint8_t{1}));
}

ConfusionCounts confusion_counts(const VoxelMask& pred, const VoxelMask& truth) {
    if (!(pred.dims == truth.dims)) throw InvalidInput("confusion_counts: mask dims differ");
    ConfusionCounts c;
    for (std::size_t i = 0; i < pred.data.size(); ++i) {
        const bool p = pred.data[i] != 0;
        const bool t = truth.data[i] != 0;
        if (p && t) {
            ++c.tp;
        } else if (p) {
            ++c.fp;
        } else if (t) {
            ++c.fn;
        } else {
            ++c.tn;
        }
    }
    return c;
}

namespace {

double ratio_or_empty(double numer, double denom, bool both_empty) {
    if (denom == 0.0) return both_empty ? 1.0 : 0.0;
    return numer / denom;
}

}  // namespace

double dice(const ConfusionCounts& c) {
    const double tp = static_cast<double>(c.tp);
    return ratio_or_empty(2.0 * tp, 2.0 * tp + c.fp + c.fn, c.tp + c.fp + c.fn == 0);
}

double jaccard(const ConfusionCounts& c) {
    const double tp = static_cast<double>(c.tp);
    return ratio_or_empty(tp, tp + c.fp + c.fn, c.tp + c.fp + c.fn == 0);
}

double precision(const ConfusionCounts& c) {
    // Zero denominator means an empty prediction.
    return ratio_or_empty(static_cast<double>(c.tp), static_cast<double>(c.tp + c.fp), c.fn == 0);
}

double recall(const ConfusionCounts& c) {
    // Zero denominator means an empty truth.
    return ratio_or_empty(static_cast<double>(c.tp), static_cast<double>(c.tp + c.fn), c.fp == 0);
}

std::vector<Voxel> surface_voxels(const VoxelMask& mask) {
    const auto& d = mask.dims;
    std::vector<Voxel> out;
    for (std::size_t z = 0; z < d.z; ++z) {
        for (std::size_t y = 0; y < d.y; ++y) {
            for (std::size_t x = 0; x < d.x; ++x) {
                if (!mask.at(z, y, x)) continue;
                const bool border = z == 0 || y == 0 || x == 0 || z + 1 == d.z || y + 1 == d.y || x + 1 == d.x;
                if (border || !mask.at(z - 1, y, x) || !mask.at(z + 1, y, x) || !mask.at(z, y - 1, x) ||
                    !mask.at(z, y + 1, x) || !mask.at(z, y, x - 1) || !mask.at(z, y, x + 1)) {
                    out.push_back({z, y, x});
                }
            }
        }
    }
    if (out.empty()) throw EmptyMaskError("surface_voxels: mask has no foreground");
    return out;
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// One pass of the lower-envelope-of-parabolas transform (Felzenszwalb and
// Huttenlocher) along a strided line: out[p] = min_q w * (p - q)^2 + f[q].
// Infinite samples contribute no parabola.
void transform_line(double* line, std::size_t n, std::size_t stride, double w, std::vector<double>& f,
                    std::vector<std::size_t>& v, std::vector<double>& boundary) {
    f.resize(n);
    v.resize(n);
    boundary.resize(n + 1);
    for (std::size_t i = 0; i < n; ++i) f[i] = line[i * stride];

    std::size_t k = 0;
    bool any = false;
    for (std::size_t q = 0; q < n; ++q) {
        if (f[q] == kInf) continue;
        if (!any) {
            v[0] = q;
            boundary[0] = -kInf;
            boundary[1] = kInf;
            any = true;
            continue;
        }
        const double fq = f[q] + w * static_cast<double>(q * q);
        auto intersect = [&](std::size_t r) {
            return (fq - (f[r] + w * static_cast<double>(r * r))) / (2.0 * w * static_cast<double>(q - r));
        };
        // boundary[0] is -inf, so this stops at k == 0 at the latest.
        double s = intersect(v[k]);
        while (s <= boundary[k]) {
            --k;
            s = intersect(v[k]);
        }
        ++k;
        v[k] = q;
        boundary[k] = s;
        boundary[k + 1] = kInf;
    }
    if (!any) return;

    k = 0;
    for (std::size_t p = 0; p < n; ++p) {
        while (boundary[k + 1] < static_cast<double>(p)) ++k;
        const double dp = static_cast<double>(p) - static_cast<double>(v[k]);
        line[p * stride] = w * dp * dp + f[v[k]];
    }
}

}  // namespace

std::vector<double> squared_distance_transform(const Dims3& dims,
                                               std::span<const std::uint8_t> sites,
                                               const Spacing3& spacing) {
    if (sites.size() != dims.count()) throw InvalidInput("distance transform: site mask has the wrong size");
    std::vector<double> dt(sites.size());
    for (std::size_t i = 0; i < sites.size(); ++i) dt[i] = sites[i] ? 0.0 : kInf;

    std::vector<double> f;
    std::vector<std::size_t> v;
    std::vector<double> boundary;
    const std::size_t plane = dims.y * dims.x;

    for (std::size_t z = 0; z < dims.z; ++z) {
        for (std::size_t y = 0; y < dims.y; ++y) {
            transform_line(dt.data() + z * plane + y * dims.x, dims.x, 1, spacing.x * spacing.x, f, v, boundary);
        }
    }
    for (std::size_t z = 0; z < dims.z; ++z) {
        for (std::size_t x = 0; x < dims.x; ++x) {
            transform_line(dt.data() + z * plane + x, dims.y, dims.x, spacing.y * spacing.y, f, v, boundary);
        }
    }
    for (std::size_t y = 0; y < dims.y; ++y) {
        for (std::size_t x = 0; x < dims.x; ++x) {
            transform_line(dt.data() + y * dims.x + x, dims.z, plane, spacing.z * spacing.z, f, v, boundary);
        }
    }
    return dt;
}

double percentile_sorted(std::span<const double> sorted, double q) {
    if (sorted.empty()) throw InvalidInput("percentile of an empty sequence");
    if (!(q >= 0.0 && q <= 100.0)) throw InvalidInput(fmt::format("percentile {} outside [0, 100]", q));
    const double pos = q / 100.0 * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return sorted[lo] + (sorted[hi] - sorted[lo]) * frac;
}

SurfaceDistances surface_distances(const VoxelMask& pred, const VoxelMask& truth, DistanceUnits units) {
    if (!(pred.dims == truth.dims)) throw InvalidInput("surface distance: mask dims differ");
    if (!(pred.spacing == truth.spacing)) throw InvalidInput("surface distance: mask spacings differ");

    const auto pred_surface = surface_voxels(pred);
    const auto truth_surface = surface_voxels(truth);
    const Spacing3 spacing = units == DistanceUnits::millimeters ? pred.spacing : Spacing3{};

    auto site_mask = [&](const std::vector<Voxel>& surface) {
        std::vector<std::uint8_t> sites(pred.dims.count(), 0);
        for (const auto& s : surface) sites[pred.index(s.z, s.y, s.x)] = 1;
        return sites;
    };
    const auto to_pred = squared_distance_transform(pred.dims, site_mask(pred_surface), spacing);
    const auto to_truth = squared_distance_transform(pred.dims, site_mask(truth_surface), spacing);

    SurfaceDistances out;
    out.distances.reserve(pred_surface.size() + truth_surface.size());
    for (const auto& s : pred_surface) out.distances.push_back(std::sqrt(to_truth[pred.index(s.z, s.y, s.x)]));
    for (const auto& s : truth_surface) out.distances.push_back(std::sqrt(to_pred[pred.index(s.z, s.y, s.x)]));
    // Sorting first makes every statistic independent of argument order.
    std::sort(out.distances.begin(), out.distances.end());

    double sum = 0.0;
    for (const double d : out.distances) sum += d;
    out.assd = sum / static_cast<double>(out.distances.size());
    out.hd95 = percentile_sorted(out.distances, 95.0);
    out.hausdorff = out.distances.back();
    return out;
}

double hd95(const VoxelMask& pred, const VoxelMask& truth, DistanceUnits units) {
    return surface_distances(pred, truth, units).hd95;
}

double assd(const VoxelMask& pred, const VoxelMask& truth, DistanceUnits units) {
    return surface_distances(pred, truth, units).assd;
}

}  // namespace fedaaw
