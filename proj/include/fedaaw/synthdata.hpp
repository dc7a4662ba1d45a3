#pragma once

// Deterministic synthetic multi-center segmentation data. Each sample holds
// one ellipsoidal foreground blob; centers differ in intensity offset, noise
// level, blob size and shape, and positional spread, which gives controllable
// inter-center domain shift.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fedaaw/dataset.hpp"
#include "fedaaw/metrics.hpp"

namespace fedaaw {

struct CenterSpec {
    std::string name;
    std::int64_t sample_count = 0;
    /// Added to every voxel before noise.
    double intensity_shift = 0.0;
    double noise_sigma = 0.0;
    /// Multiplies the nominal blob radius (a quarter of each grid extent).
    double blob_scale = 1.0;
    /// Ratio of the x radius to the y radius.
    double blob_eccentricity = 1.0;
    /// Blob-center displacement bound, as a fraction of a quarter extent.
    double position_jitter = 0.0;
    std::uint64_t seed = 0;

    friend bool operator==(const CenterSpec&, const CenterSpec&) = default;
};

/// Grid and base intensities shared by all centers of one dataset.
struct VolumeGeometry {
    Dims3 dims{8, 16, 16};
    Spacing3 spacing{2.0, 1.0, 1.0};
    double background_intensity = 0.25;
    double foreground_intensity = 0.6;
};

/// Throws InvalidInput when a spec cannot produce a valid center.
void validate_center_spec(const CenterSpec& spec);

/// spec.sample_count samples; identical output for identical inputs.
std::vector<Sample> generate_center(const CenterSpec& spec, const VolumeGeometry& geometry = {});

/// Seeded shuffle, then contiguous partition [train | validation | test].
///
/// The train+validation pool holds floor(n * (train_frac + val_frac))
/// samples, validation max(1, floor(n * val_frac)), train the remainder of
/// the pool, and test everything outside the pool.
ClientDataset split_dataset(std::vector<Sample> samples, double train_frac, double val_frac, std::uint64_t seed);

/// Shuffled sample indices per split, same rule as split_dataset.
struct SplitIndices {
    std::vector<std::size_t> train, validation, test;
};
SplitIndices split_indices(std::size_t n, double train_frac, double val_frac, std::uint64_t seed);

/// Seven-center roster with per-center T1 sample counts 162, 148, 206, 17,
/// 25, 74, 91 scaled by `scale` (rounded, minimum 5) and a fixed table of
/// domain-shift settings. Center seeds derive from `seed`.
std::vector<CenterSpec> default_seven_centers(double scale, std::uint64_t seed = 0);

/// Same roster with every shift knob neutral (no domain shift).
std::vector<CenterSpec> homogeneous_seven_centers(double scale, std::uint64_t seed = 0);

// Dataset directory export/import. Each sample is one little-endian binary
// file; `manifest.json` records geometry, center specs and split membership.

struct DatasetBundle {
    VolumeGeometry geometry;
    std::vector<CenterSpec> centers;
    std::vector<ClientDataset> clients;
};

void write_sample(const std::filesystem::path& file, const Sample& sample);
Sample read_sample(const std::filesystem::path& file);

nlohmann::json center_spec_to_json(const CenterSpec& spec);
/// Missing knobs keep CenterSpec defaults; name and sample_count are required.
CenterSpec center_spec_from_json(const nlohmann::json& j);

void export_dataset(const std::filesystem::path& dir, const DatasetBundle& bundle);
DatasetBundle load_dataset(const std::filesystem::path& manifest);

}  // namespace fedaaw
