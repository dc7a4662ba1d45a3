#pragma once

#include <string>
#include <vector>

#include "fedaaw/metrics.hpp"

namespace fedaaw {

/// One image volume (intensities, same grid as the mask) and its label mask.
struct Sample {
    std::vector<double> volume;
    VoxelMask mask;

    friend bool operator==(const Sample&, const Sample&) = default;
};

/// One center's private data. `train` is the local training set, `validation`
/// drives the adaptive weights, `test` is only touched by final evaluation.
struct ClientDataset {
    std::string name;
    std::vector<Sample> train;
    std::vector<Sample> validation;
    std::vector<Sample> test;
};

}  // namespace fedaaw
