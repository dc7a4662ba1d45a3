#include "fedaaw/aggregation.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "fedaaw/errors.hpp"

namespace fedaaw {

void check_simplex(std::span<const double> values) {
    if (values.empty()) throw InvalidInput("aggregation weights are empty");
    double sum = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) {
        const double v = values[i];
        if (!(v >= 0.0 && v <= 1.0)) {
            throw InvalidInput(fmt::format("aggregation weight {} = {} is outside [0, 1]", i, v));
        }
        sum += v;
    }
    if (std::abs(sum - 1.0) > kSimplexTolerance) {
        throw InvalidInput(fmt::format("aggregation weights sum to {:.17g}, expected 1", sum));
    }
}

AggregationWeights init_weights(std::span<const std::int64_t> sample_counts) {
    if (sample_counts.empty()) throw InvalidInput("init_weights: no clients");
    double total = 0.0;
    for (std::size_t i = 0; i < sample_counts.size(); ++i) {
        if (sample_counts[i] <= 0) {
            throw InvalidInput(fmt::format("init_weights: client {} has sample count {}", i, sample_counts[i]));
        }
        total += static_cast<double>(sample_counts[i]);
    }
    AggregationWeights w;
    w.values.reserve(sample_counts.size());
    for (const auto n : sample_counts) w.values.push_back(static_cast<double>(n) / total);
    return w;
}

ParamVector aggregate(std::span<const ParamVector> client_params, const AggregationWeights& weights) {
    if (client_params.empty()) throw InvalidInput("aggregate: no client parameters");
    if (client_params.size() != weights.size()) {
        throw InvalidInput(fmt::format("aggregate: {} clients but {} weights", client_params.size(), weights.size()));
    }
    check_simplex(weights.values);

    const auto& first = client_params.front();
    for (std::size_t i = 1; i < client_params.size(); ++i) {
        if (client_params[i].size() != first.size()) {
            throw InvalidInput(fmt::format("aggregate: client {} has {} parameters, client 0 has {}", i,
                                           client_params[i].size(), first.size()));
        }
        if (client_params[i].layout_id != first.layout_id) {
            throw InvalidInput(fmt::format("aggregate: client {} layout '{}' differs from '{}'", i,
                                           client_params[i].layout_id, first.layout_id));
        }
    }

    // Seeding the sum with client 0's term makes a weight of exactly 1 return
    // that client's parameters bit for bit.
    ParamVector out{std::vector<double>(first.size()), first.layout_id};
    const double a0 = weights.values[0];
    for (std::size_t d = 0; d < first.size(); ++d) out.values[d] = a0 * first.values[d];
    for (std::size_t i = 1; i < client_params.size(); ++i) {
        const double a = weights.values[i];
        const auto& src = client_params[i].values;
        for (std::size_t d = 0; d < src.size(); ++d) out.values[d] += a * src[d];
    }
    return out;
}

double step_size(std::size_t t, std::size_t total_rounds, double base) {
    if (total_rounds == 0) throw InvalidInput("step_size: total rounds must be positive");
    if (t > total_rounds) {
        throw InvalidInput(fmt::format("step_size: round {} exceeds total rounds {}", t, total_rounds));
    }
    return base * (1.0 - static_cast<double>(t) / static_cast<double>(total_rounds));
}

LossGapVector compute_loss_gaps(std::span<const double> pre_aggregation, std::span<const double> post_aggregation) {
    if (pre_aggregation.size() != post_aggregation.size()) {
        throw InvalidInput(fmt::format("compute_loss_gaps: {} pre-aggregation losses vs {} post-aggregation",
                                       pre_aggregation.size(), post_aggregation.size()));
    }
    LossGapVector g;
    g.gaps.resize(pre_aggregation.size());
    for (std::size_t i = 0; i < g.gaps.size(); ++i) g.gaps[i] = post_aggregation[i] - pre_aggregation[i];
    return g;
}

WeightUpdate update_weights_detailed(const AggregationWeights& a,
                                     const LossGapVector& gaps,
                                     double s,
                                     std::span<const double> fallback) {
    const std::size_t k = a.size();
    if (gaps.size() != k) {
        throw InvalidInput(fmt::format("update_weights: {} weights but {} gaps", k, gaps.size()));
    }
    if (!(s >= 0.0) || !std::isfinite(s)) throw InvalidInput(fmt::format("update_weights: bad step size {}", s));
    if (!fallback.empty() && fallback.size() != k) {
        throw InvalidInput("update_weights: fallback weights have the wrong length");
    }
    check_simplex(a.values);

    double max_abs = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
        if (std::isnan(gaps.gaps[i])) throw InvalidInput(fmt::format("update_weights: gap {} is NaN", i));
        max_abs = std::max(max_abs, std::abs(gaps.gaps[i]));
    }
    if (!std::isfinite(max_abs)) throw InvalidInput("update_weights: infinite loss gap");

    WeightUpdate out;
    out.weights.round = a.round + 1;
    if (s == 0.0 || max_abs == 0.0) {
        out.clipped = a.values;
        out.weights.values = a.values;
        out.skipped = true;
        return out;
    }

    out.clipped.resize(k);
    double sum = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
        out.clipped[i] = std::clamp(a.values[i] + gaps.gaps[i] * s / max_abs, 0.0, 1.0);
        sum += out.clipped[i];
    }

    if (sum == 0.0) {
        out.used_fallback = true;
        if (fallback.empty()) {
            out.weights.values.assign(k, 1.0 / static_cast<double>(k));
        } else {
            out.weights.values.assign(fallback.begin(), fallback.end());
        }
        return out;
    }

    out.weights.values.resize(k);
    for (std::size_t i = 0; i < k; ++i) out.weights.values[i] = out.clipped[i] / sum;
    return out;
}

AggregationWeights update_weights(const AggregationWeights& a,
                                  const LossGapVector& gaps,
                                  double s,
                                  std::span<const double> fallback) {
    return update_weights_detailed(a, gaps, s, fallback).weights;
}

}  // namespace fedaaw
