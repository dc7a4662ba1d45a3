#pragma once

// Reference local learner: a one-hidden-layer network mapping a flattened
// volume to per-voxel foreground probabilities, trained with mini-batch
// AdamW on the Dice-BCE loss using hand-derived gradients.
//
// Parameter layout (row-major): W1 [H x V], b1 [H], W2 [V x H], b2 [V].

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fedaaw/dataset.hpp"
#include "fedaaw/param_vector.hpp"
#include "fedaaw/random.hpp"

namespace fedaaw {

struct TrainerArchitecture {
    std::size_t input_voxels = 1024;
    std::size_t hidden_units = 32;

    std::size_t parameter_count() const { return 2 * input_voxels * hidden_units + hidden_units + input_voxels; }
    std::string layout_id() const;

    friend bool operator==(const TrainerArchitecture&, const TrainerArchitecture&) = default;
};

struct AdamWConfig {
    double learning_rate = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double weight_decay = 0.01;
};

struct OptimizerState {
    std::vector<double> m;
    std::vector<double> v;
    std::uint64_t step = 0;
    AdamWConfig hyper;

    static OptimizerState zeros(std::size_t parameter_count, const AdamWConfig& hyper);
};

/// Seeded Glorot-uniform weights, zero biases.
ParamVector init_params(const TrainerArchitecture& arch, Rng& rng);

/// Per-voxel probabilities, each strictly inside (0, 1).
std::vector<double> forward(const TrainerArchitecture& arch, const ParamVector& params, std::span<const double> volume);

struct LossAndGrad {
    double loss = 0.0;
    ParamVector grad;
};

/// Batch-mean Dice-BCE loss and its exact gradient with respect to params.
LossAndGrad loss_and_grad(const TrainerArchitecture& arch,
                          const ParamVector& params,
                          std::span<const Sample* const> batch);

LossAndGrad loss_and_grad(const TrainerArchitecture& arch, const ParamVector& params, std::span<const Sample> batch);

/// One AdamW step with bias correction and decoupled weight decay, in place.
void adamw_step(std::span<double> params, std::span<const double> grad, OptimizerState& state);

struct LocalTrainResult {
    ParamVector params;
    /// Sample-weighted mean batch loss over the last epoch; empty when
    /// `epochs` is zero.
    std::optional<double> final_epoch_loss;
};

/// `epochs` passes over `train`, reshuffled each epoch with `rng`; the last
/// partial mini-batch is kept.
LocalTrainResult train_local(const TrainerArchitecture& arch,
                             ParamVector params,
                             std::span<const Sample> train,
                             int epochs,
                             std::size_t batch_size,
                             OptimizerState& state,
                             Rng& rng);

}  // namespace fedaaw
