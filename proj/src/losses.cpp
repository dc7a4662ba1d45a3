#include "fedaaw/losses.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "fedaaw/errors.hpp"

namespace fedaaw {
namespace {

void check_pair(std::span<const std::uint8_t> truth, std::span<const double> pred) {
    if (truth.empty()) throw InvalidInput("loss: empty mask");
    if (truth.size() != pred.size()) {
        throw InvalidInput(fmt::format("loss: truth has {} voxels, prediction {}", truth.size(), pred.size()));
    }
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if (truth[i] > 1) throw InvalidInput(fmt::format("loss: truth voxel {} is not binary", i));
        if (!(pred[i] >= 0.0 && pred[i] <= 1.0)) {
            throw InvalidInput(fmt::format("loss: prediction voxel {} = {} is not a probability", i, pred[i]));
        }
    }
}

struct DiceSums {
    double intersection = 0.0;
    double truth = 0.0;
    double pred = 0.0;
};

DiceSums dice_sums(std::span<const std::uint8_t> truth, std::span<const double> pred) {
    DiceSums s;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        const double y = truth[i];
        s.intersection += y * pred[i];
        s.truth += y;
        s.pred += pred[i];
    }
    return s;
}

double dice_from_sums(const DiceSums& s) {
    return 1.0 - (2.0 * s.intersection + kDiceSmoothing) / (s.truth + s.pred + kDiceSmoothing);
}

double clamp_probability(double p) { return std::clamp(p, kProbabilityEpsilon, 1.0 - kProbabilityEpsilon); }

double bce_unchecked(std::span<const std::uint8_t> truth, std::span<const double> pred) {
    double acc = 0.0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        const double p = clamp_probability(pred[i]);
        acc += truth[i] ? std::log(p) : std::log1p(-p);
    }
    return -acc / static_cast<double>(truth.size());
}

}  // namespace

double dice_loss(std::span<const std::uint8_t> truth, std::span<const double> pred) {
    check_pair(truth, pred);
    return dice_from_sums(dice_sums(truth, pred));
}

double bce_loss(std::span<const std::uint8_t> truth, std::span<const double> pred) {
    check_pair(truth, pred);
    return bce_unchecked(truth, pred);
}

double dice_bce_loss(std::span<const std::uint8_t> truth, std::span<const double> pred) {
    check_pair(truth, pred);
    return dice_from_sums(dice_sums(truth, pred)) + bce_unchecked(truth, pred);
}

double dice_bce_loss_and_grad(std::span<const std::uint8_t> truth,
                              std::span<const double> pred,
                              std::span<double> grad) {
    check_pair(truth, pred);
    if (grad.size() != pred.size()) throw InvalidInput("loss: gradient buffer has the wrong length");

    const DiceSums s = dice_sums(truth, pred);
    const double numer = 2.0 * s.intersection + kDiceSmoothing;
    const double denom = s.truth + s.pred + kDiceSmoothing;
    const double inv_denom_sq = 1.0 / (denom * denom);
    const double n = static_cast<double>(truth.size());

    for (std::size_t i = 0; i < truth.size(); ++i) {
        const double y = truth[i];
        // d/dp_i of -(numer / denom), quotient rule over the global sums.
        double g = -(2.0 * y * denom - numer) * inv_denom_sq;
        const double p = pred[i];
        if (p > kProbabilityEpsilon && p < 1.0 - kProbabilityEpsilon) {
            g += (p - y) / (n * p * (1.0 - p));
        }
        grad[i] = g;
    }
    return dice_from_sums(s) + bce_unchecked(truth, pred);
}

std::vector<double> dice_bce_grad(std::span<const std::uint8_t> truth, std::span<const double> pred) {
    std::vector<double> grad(pred.size());
    dice_bce_loss_and_grad(truth, pred, grad);
    return grad;
}

}  // namespace fedaaw
