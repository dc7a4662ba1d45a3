#pragma once

// Segmentation evaluation metrics on binary 3D voxel masks: overlap scores
// from confusion counts, and symmetric surface distances (HD95, ASSD) in
// physical units.

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace fedaaw {

/// Grid extent in (z, y, x) order.
struct Dims3 {
    std::size_t z = 0, y = 0, x = 0;

    std::size_t count() const { return z * y * x; }
    friend bool operator==(const Dims3&, const Dims3&) = default;
};

/// Voxel size in mm, (z, y, x) order.
struct Spacing3 {
    double z = 1.0, y = 1.0, x = 1.0;

    friend bool operator==(const Spacing3&, const Spacing3&) = default;
};

struct Voxel {
    std::size_t z = 0, y = 0, x = 0;

    friend bool operator==(const Voxel&, const Voxel&) = default;
};

/// Binary mask over a z-major (x fastest) grid.
struct VoxelMask {
    Dims3 dims;
    std::vector<std::uint8_t> data;
    Spacing3 spacing;

    VoxelMask() = default;
    VoxelMask(Dims3 d, std::vector<std::uint8_t> values, Spacing3 s = {});
    /// All-background mask.
    VoxelMask(Dims3 d, Spacing3 s = {});

    std::size_t index(std::size_t z, std::size_t y, std::size_t x) const { return (z * dims.y + y) * dims.x + x; }
    std::uint8_t at(std::size_t z, std::size_t y, std::size_t x) const { return data[index(z, y, x)]; }
    std::size_t foreground_count() const;

    friend bool operator==(const VoxelMask&, const VoxelMask&) = default;
};

struct ConfusionCounts {
    std::size_t tp = 0, fp = 0, fn = 0, tn = 0;

    std::size_t total() const { return tp + fp + fn + tn; }
    friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

ConfusionCounts confusion_counts(const VoxelMask& pred, const VoxelMask& truth);

// Undefined ratios (zero denominator) score 1 when prediction and truth are
// both empty and 0 when exactly one of them is.
double dice(const ConfusionCounts& c);
double jaccard(const ConfusionCounts& c);
double precision(const ConfusionCounts& c);
double recall(const ConfusionCounts& c);

/// Foreground voxels with at least one 6-connected neighbour that is
/// background or outside the grid, in raster order. Throws EmptyMaskError on
/// an empty foreground.
std::vector<Voxel> surface_voxels(const VoxelMask& mask);

enum class DistanceUnits { millimeters, voxels };

/// Summary of the combined multiset of directed nearest-surface distances
/// (pred surface -> truth surface and truth surface -> pred surface).
struct SurfaceDistances {
    double hd95 = 0.0;
    double assd = 0.0;
    double hausdorff = 0.0;
    /// Sorted ascending.
    std::vector<double> distances;
};

SurfaceDistances surface_distances(const VoxelMask& pred,
                                   const VoxelMask& truth,
                                   DistanceUnits units = DistanceUnits::millimeters);

double hd95(const VoxelMask& pred, const VoxelMask& truth, DistanceUnits units = DistanceUnits::millimeters);
double assd(const VoxelMask& pred, const VoxelMask& truth, DistanceUnits units = DistanceUnits::millimeters);

/// Linear-interpolation percentile of an ascending sequence, q in [0, 100].
double percentile_sorted(std::span<const double> sorted, double q);

/// Exact squared Euclidean distance from every voxel to the nearest `true`
/// site, with per-axis spacing. Sites are given as a mask of the grid.
/// Voxels are +inf when there are no sites.
std::vector<double> squared_distance_transform(const Dims3& dims,
                                               std::span<const std::uint8_t> sites,
                                               const Spacing3& spacing);

}  // namespace fedaaw
