#pragma once

// Federated training loop: broadcast, local updates, weighted aggregation,
// before/after validation, and adaptive reweighting of clients. Also runs the
// plain FedAvg and isolated (no federation) baselines.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fedaaw/aggregation.hpp"
#include "fedaaw/dataset.hpp"
#include "fedaaw/param_vector.hpp"
#include "fedaaw/random.hpp"
#include "fedaaw/trainer.hpp"

namespace fedaaw {

enum class Strategy { fedavg, fedavg_aaw };

/// Which global model the post-aggregation validation loss Q_i is measured on.
enum class PostAggregationModel {
    /// The freshly aggregated model of this round.
    aggregated,
    /// The model broadcast at the start of this round.
    broadcast,
};

std::string_view to_string(Strategy s);
Strategy strategy_from_string(std::string_view s);
std::string_view to_string(PostAggregationModel m);
PostAggregationModel post_aggregation_model_from_string(std::string_view s);

struct FederationConfig {
    int total_rounds = 300;
    int local_epochs_per_round = 1;
    Strategy strategy = Strategy::fedavg_aaw;
    std::uint64_t seed = 0;
    std::size_t hidden_units = 32;
    std::size_t batch_size = 8;
    AdamWConfig optimizer{};
    /// Coefficient of the step-size schedule; 0 disables adaptation.
    double step_base = kDefaultStepBase;
    PostAggregationModel post_aggregation_model = PostAggregationModel::aggregated;
    /// Train clients of one round on separate threads.
    bool parallel_clients = false;
    /// Keep the global parameters after every round in the result.
    bool record_trajectory = false;

    /// Throws InvalidInput on an unusable configuration.
    void validate() const;
};

struct RoundReport {
    std::size_t round = 0;
    /// Validation loss of each client's local model, before aggregation.
    std::vector<double> pre_aggregation_loss;
    /// Validation loss of the global model on each client's validation set.
    std::vector<double> post_aggregation_loss;
    std::vector<double> loss_gap;
    double step_size = 0.0;
    std::vector<double> weights_before;
    /// Clipped, unnormalized weights (equal to weights_before when no
    /// adaptive update ran).
    std::vector<double> weights_clipped;
    std::vector<double> weights_after;
    std::vector<double> train_loss;
    /// Training-sample-weighted mean training loss of the aggregated model.
    double global_train_objective = 0.0;
    /// Training-sample-weighted mean of post_aggregation_loss.
    double global_validation_loss = 0.0;
    std::chrono::nanoseconds duration{0};
};

struct TrainingResult {
    ParamVector global;
    std::vector<RoundReport> rounds;
    std::vector<ParamVector> local_models;
    /// Global parameters after each round, if requested.
    std::vector<ParamVector> trajectory;
};

/// A simulated participant: its private data plus optimizer state and RNG,
/// which persist across rounds.
class Client {
public:
    Client(const ClientDataset& data, const TrainerArchitecture& arch, const FederationConfig& config, std::size_t index);

    const ClientDataset& data() const { return *data_; }
    const std::string& name() const { return data_->name; }
    std::size_t train_count() const { return data_->train.size(); }

    LocalTrainResult train(const ParamVector& start, int epochs, std::size_t batch_size);

private:
    const ClientDataset* data_;
    TrainerArchitecture arch_;
    OptimizerState optimizer_;
    Rng rng_;
};

struct RoundOutcome {
    ParamVector global;
    AggregationWeights weights;
    RoundReport report;
    std::vector<ParamVector> local_models;
};

/// Seed-deterministic input-layer sizing shared by all clients.
TrainerArchitecture architecture_for(std::span<const ClientDataset> clients, const FederationConfig& config);

/// Mean per-sample Dice-BCE loss over `samples`.
double evaluate_loss(const TrainerArchitecture& arch, const ParamVector& params, std::span<const Sample> samples);

/// One round: every client starts from `global` and trains locally; the local
/// models are aggregated with `weights`; validation losses before and after
/// aggregation are recorded; weights are adapted when the strategy asks for
/// it. `fallback` backs the all-clipped case of the weight update.
RoundOutcome run_round(const TrainerArchitecture& arch,
                       const ParamVector& global,
                       const AggregationWeights& weights,
                       std::span<Client> clients,
                       const FederationConfig& config,
                       std::size_t round,
                       std::span<const double> fallback);

using RoundSink = std::function<void(const RoundReport&)>;

TrainingResult run_federated_training(std::span<const ClientDataset> clients,
                                      const FederationConfig& config,
                                      const RoundSink& sink = {});

/// Each client trains alone for total_rounds * local_epochs_per_round epochs,
/// starting from the same initial parameters as the federated run.
std::vector<TrainingResult> run_local_only(std::span<const ClientDataset> clients, const FederationConfig& config);

// Checkpoints: magic "FAWC", u32 version, u32 layout-id length, layout-id
// bytes, u64 D, u64 round, then D little-endian IEEE-754 doubles.

struct Checkpoint {
    ParamVector params;
    std::uint64_t round = 0;
};

void save_checkpoint(const std::filesystem::path& file, const ParamVector& params, std::uint64_t round);
Checkpoint load_checkpoint(const std::filesystem::path& file);

}  // namespace fedaaw
