#pragma once

// Soft Dice loss, binary cross-entropy, and their sum, with exact
// derivatives with respect to the predicted foreground probabilities.
//
// `truth` holds a binary mask (0/1); `pred` holds probabilities in [0, 1].

#include <cstdint>
#include <span>
#include <vector>

namespace fedaaw {

/// Predictions are clamped to [kProbabilityEpsilon, 1 - kProbabilityEpsilon]
/// before entering the log terms of the cross-entropy.
inline constexpr double kProbabilityEpsilon = 1e-7;

/// Added to both numerator and denominator of the Dice ratio.
inline constexpr double kDiceSmoothing = 1e-6;

double dice_loss(std::span<const std::uint8_t> truth, std::span<const double> pred);
double bce_loss(std::span<const std::uint8_t> truth, std::span<const double> pred);

/// dice_loss + bce_loss.
double dice_bce_loss(std::span<const std::uint8_t> truth, std::span<const double> pred);

/// d(dice_bce_loss)/d(pred[i]) written into `grad` (same length as pred).
/// Returns the loss. Where the clamp on a prediction binds, the cross-entropy
/// contributes zero derivative.
double dice_bce_loss_and_grad(std::span<const std::uint8_t> truth,
                              std::span<const double> pred,
                              std::span<double> grad);

std::vector<double> dice_bce_grad(std::span<const std::uint8_t> truth, std::span<const double> pred);

}  // namespace fedaaw
