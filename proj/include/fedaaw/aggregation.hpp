#pragma once

// Server-side aggregation: sample-proportional initialization, weighted
// parameter averaging, and the adaptive (loss-gap driven) weight update.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "fedaaw/param_vector.hpp"

namespace fedaaw {

/// Tolerance on |sum - 1| accepted for a weight vector on the simplex.
inline constexpr double kSimplexTolerance = 1e-12;

/// Coefficient of the linearly decaying step-size schedule.
inline constexpr double kDefaultStepBase = 0.1;

/// Per-client aggregation weights a_i^t for round `round`.
struct AggregationWeights {
    std::vector<double> values;
    std::size_t round = 0;

    std::size_t size() const { return values.size(); }

    friend bool operator==(const AggregationWeights&, const AggregationWeights&) = default;
};

/// Signed per-client gaps Q_i - P_i between post- and pre-aggregation
/// validation losses.
struct LossGapVector {
    std::vector<double> gaps;

    std::size_t size() const { return gaps.size(); }
};

/// Intermediate and final values of one adaptive update.
struct WeightUpdate {
    /// Clipped but not yet normalized weights.
    std::vector<double> clipped;
    AggregationWeights weights;
    /// True when the update was skipped (zero step or all gaps zero).
    bool skipped = false;
    /// True when every clipped weight was zero and the fallback was used.
    bool used_fallback = false;
};

/// Throws InvalidInput unless every value is in [0, 1] and the sum is within
/// kSimplexTolerance of 1.
void check_simplex(std::span<const double> values);

/// a_i = n_i / sum_j n_j, round 0.
AggregationWeights init_weights(std::span<const std::int64_t> sample_counts);

/// output[d] = sum_i weights[i] * params[i][d], accumulated in client order.
ParamVector aggregate(std::span<const ParamVector> client_params, const AggregationWeights& weights);

/// base * (1 - t / T) for 0 <= t <= T.
double step_size(std::size_t t, std::size_t total_rounds, double base = kDefaultStepBase);

LossGapVector compute_loss_gaps(std::span<const double> pre_aggregation, std::span<const double> post_aggregation);

/// Adaptive weight update: a_i + G_i * s / max|G|, clamp to [0, 1], normalize.
///
/// Returns `a` unchanged (round incremented) when s == 0 or every gap is zero.
/// If every clipped weight is zero the result is `fallback` (normally the
/// sample-proportional initial weights); an empty `fallback` means uniform.
WeightUpdate update_weights_detailed(const AggregationWeights& a,
                                     const LossGapVector& gaps,
                                     double s,
                                     std::span<const double> fallback = {});

AggregationWeights update_weights(const AggregationWeights& a,
                                  const LossGapVector& gaps,
                                  double s,
                                  std::span<const double> fallback = {});

}  // namespace fedaaw
