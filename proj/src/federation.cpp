#include "fedaaw/federation.hpp"

#include <fstream>
#include <future>

#include <fmt/format.h>

#include "binary_io.hpp"
#include "fedaaw/errors.hpp"
#include "fedaaw/losses.hpp"

namespace fedaaw {
namespace {

constexpr std::uint64_t kInitStream = 0;
constexpr std::uint32_t kCheckpointVersion = 1;

std::uint64_t client_stream(std::size_t index) { return 1 + static_cast<std::uint64_t>(index); }

ParamVector initial_params(const TrainerArchitecture& arch, const FederationConfig& config) {
    Rng rng(mix_seed(config.seed, kInitStream));
    return init_params(arch, rng);
}

void check_clients(std::span<const ClientDataset> clients) {
    if (clients.empty()) throw InvalidInput("federation: no clients");
    for (const auto& c : clients) {
        if (c.train.empty()) throw InvalidInput(fmt::format("federation: client '{}' has no training samples", c.name));
        if (c.validation.empty()) {
            throw InvalidInput(fmt::format("federation: client '{}' has no validation samples", c.name));
        }
    }
}

}  // namespace

std::string_view to_string(Strategy s) { return s == Strategy::fedavg ? "fedavg" : "fedavg_aaw"; }

Strategy strategy_from_string(std::string_view s) {
    if (s == "fedavg") return Strategy::fedavg;
    if (s == "fedavg_aaw") return Strategy::fedavg_aaw;
    throw InvalidInput(fmt::format("unknown strategy '{}'", s));
}

std::string_view to_string(PostAggregationModel m) {
    return m == PostAggregationModel::aggregated ? "aggregated" : "broadcast";
}

PostAggregationModel post_aggregation_model_from_string(std::string_view s) {
    if (s == "aggregated") return PostAggregationModel::aggregated;
    if (s == "broadcast") return PostAggregationModel::broadcast;
    throw InvalidInput(fmt::format("unknown post-aggregation model '{}'", s));
}

void FederationConfig::validate() const {
    if (total_rounds < 1) throw InvalidInput(fmt::format("total_rounds must be >= 1 (got {})", total_rounds));
    if (local_epochs_per_round < 1) {
        throw InvalidInput(fmt::format("local_epochs_per_round must be >= 1 (got {})", local_epochs_per_round));
    }
    if (hidden_units == 0) throw InvalidInput("hidden_units must be positive");
    if (batch_size == 0) throw InvalidInput("batch_size must be positive");
    if (!(optimizer.learning_rate > 0.0)) throw InvalidInput("learning rate must be positive");
    if (!(optimizer.weight_decay >= 0.0)) throw InvalidInput("weight decay must be non-negative");
    if (!(step_base >= 0.0) || !std::isfinite(step_base)) throw InvalidInput("step_base must be finite and >= 0");
}

Client::Client(const ClientDataset& data, const TrainerArchitecture& arch, const FederationConfig& config, std::size_t index)
    : data_(&data),
      arch_(arch),
      optimizer_(OptimizerState::zeros(arch.parameter_count(), config.optimizer)),
      rng_(mix_seed(config.seed, client_stream(index))) {}

LocalTrainResult Client::train(const ParamVector& start, int epochs, std::size_t batch_size) {
    return train_local(arch_, start, data_->train, epochs, batch_size, optimizer_, rng_);
}

TrainerArchitecture architecture_for(std::span<const ClientDataset> clients, const FederationConfig& config) {
    check_clients(clients);
    const std::size_t voxels = clients.front().train.front().volume.size();
    for (const auto& c : clients) {
        for (const auto* split : {&c.train, &c.validation, &c.test}) {
            for (const auto& s : *split) {
                if (s.volume.size() != voxels || s.mask.data.size() != voxels) {
                    throw InvalidInput(fmt::format("client '{}' has a sample with {} voxels, expected {}", c.name,
                                                   s.volume.size(), voxels));
                }
            }
        }
    }
    return TrainerArchitecture{voxels, config.hidden_units};
}

double evaluate_loss(const TrainerArchitecture& arch, const ParamVector& params, std::span<const Sample> samples) {
    if (samples.empty()) throw InvalidInput("evaluate_loss: empty dataset");
    double total = 0.0;
    for (const auto& s : samples) {
        const auto prob = forward(arch, params, s.volume);
        for (const double v : prob) {
            if (!std::isfinite(v)) throw NonFiniteError("evaluate_loss: network output is not finite");
        }
        total += dice_bce_loss(s.mask.data, prob);
    }
    return total / static_cast<double>(samples.size());
}

RoundOutcome run_round(const TrainerArchitecture& arch,
                       const ParamVector& global,
                       const AggregationWeights& weights,
                       std::span<Client> clients,
                       const FederationConfig& config,
                       std::size_t round,
                       std::span<const double> fallback) {
    const auto started = std::chrono::steady_clock::now();
    const std::size_t k = clients.size();
    if (k == 0) throw InvalidInput("run_round: no clients");
    if (weights.size() != k) throw InvalidInput(fmt::format("run_round: {} weights for {} clients", weights.size(), k));
    check_simplex(weights.values);
    if (global.layout_id != arch.layout_id()) {
        throw InvalidInput(fmt::format("run_round: global layout '{}' does not match '{}'", global.layout_id,
                                       arch.layout_id()));
    }

    auto train_one = [&](std::size_t i) {
        try {
            auto result = clients[i].train(global, config.local_epochs_per_round, config.batch_size);
            if (const auto bad = result.params.first_non_finite()) {
                throw NonFiniteError(fmt::format("parameter {} is not finite", *bad));
            }
            return result;
        } catch (const NonFiniteError& e) {
            throw NonFiniteError(fmt::format("round {}: client '{}': {}", round, clients[i].name(), e.what()));
        }
    };

    std::vector<LocalTrainResult> local(k);
    if (config.parallel_clients && k > 1) {
        std::vector<std::future<LocalTrainResult>> jobs;
        jobs.reserve(k);
        for (std::size_t i = 0; i < k; ++i) jobs.push_back(std::async(std::launch::async, train_one, i));
        // Collected in client order; the first failure in that order wins.
        for (std::size_t i = 0; i < k; ++i) local[i] = jobs[i].get();
    } else {
        for (std::size_t i = 0; i < k; ++i) local[i] = train_one(i);
    }

    RoundOutcome out;
    out.local_models.reserve(k);
    for (auto& r : local) out.local_models.push_back(std::move(r.params));
    out.global = aggregate(out.local_models, weights);

    auto& rep = out.report;
    rep.round = round;
    rep.pre_aggregation_loss.resize(k);
    rep.post_aggregation_loss.resize(k);
    rep.train_loss.resize(k);
    const ParamVector& post_model =
        config.post_aggregation_model == PostAggregationModel::aggregated ? out.global : global;
    double train_total = 0.0;
    double objective = 0.0;
    double validation = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
        const auto& data = clients[i].data();
        const double n = static_cast<double>(data.train.size());
        try {
            rep.pre_aggregation_loss[i] = evaluate_loss(arch, out.local_models[i], data.validation);
            rep.post_aggregation_loss[i] = evaluate_loss(arch, post_model, data.validation);
            objective += n * evaluate_loss(arch, out.global, data.train);
        } catch (const NonFiniteError& e) {
            throw NonFiniteError(fmt::format("round {}: client '{}': {}", round, clients[i].name(), e.what()));
        }
        rep.train_loss[i] = local[i].final_epoch_loss.value_or(0.0);
        train_total += n;
        validation += n * rep.post_aggregation_loss[i];
    }
    rep.global_train_objective = objective / train_total;
    rep.global_validation_loss = validation / train_total;

    const auto gaps = compute_loss_gaps(rep.pre_aggregation_loss, rep.post_aggregation_loss);
    rep.loss_gap = gaps.gaps;
    rep.step_size = step_size(round, static_cast<std::size_t>(config.total_rounds), config.step_base);
    rep.weights_before = weights.values;

    if (config.strategy == Strategy::fedavg_aaw) {
        auto update = update_weights_detailed(weights, gaps, rep.step_size, fallback);
        rep.weights_clipped = std::move(update.clipped);
        out.weights = std::move(update.weights);
    } else {
        rep.weights_clipped = weights.values;
        out.weights = AggregationWeights{weights.values, weights.round + 1};
    }
    rep.weights_after = out.weights.values;
    rep.duration = std::chrono::duration_cast<std::chrono::nanoseconds>(std::chrono::steady_clock::now() - started);
    return out;
}

TrainingResult run_federated_training(std::span<const ClientDataset> clients,
                                      const FederationConfig& config,
                                      const RoundSink& sink) {
    config.validate();
    const auto arch = architecture_for(clients, config);

    std::vector<Client> participants;
    participants.reserve(clients.size());
    std::vector<std::int64_t> counts;
    for (std::size_t i = 0; i < clients.size(); ++i) {
        participants.emplace_back(clients[i], arch, config, i);
        counts.push_back(static_cast<std::int64_t>(clients[i].train.size()));
    }
    const AggregationWeights initial = init_weights(counts);

    TrainingResult result;
    result.global = initial_params(arch, config);
    AggregationWeights weights = initial;
    for (int t = 0; t < config.total_rounds; ++t) {
        auto outcome = run_round(arch, result.global, weights, participants, config, static_cast<std::size_t>(t),
                                 initial.values);
        result.global = std::move(outcome.global);
        weights = std::move(outcome.weights);
        if (sink) sink(outcome.report);
        result.rounds.push_back(std::move(outcome.report));
        if (config.record_trajectory) result.trajectory.push_back(result.global);
        if (t + 1 == config.total_rounds) result.local_models = std::move(outcome.local_models);
    }
    return result;
}

std::vector<TrainingResult> run_local_only(std::span<const ClientDataset> clients, const FederationConfig& config) {
    config.validate();
    const auto arch = architecture_for(clients, config);
    const ParamVector start = initial_params(arch, config);

    std::vector<TrainingResult> results;
    results.reserve(clients.size());
    for (std::size_t i = 0; i < clients.size(); ++i) {
        Client client(clients[i], arch, config, i);
        TrainingResult r;
        r.global = start;
        for (int t = 0; t < config.total_rounds; ++t) {
            const auto started = std::chrono::steady_clock::now();
            LocalTrainResult local;
            double val = 0.0;
            double objective = 0.0;
            try {
                local = client.train(r.global, config.local_epochs_per_round, config.batch_size);
                if (const auto bad = local.params.first_non_finite()) {
                    throw NonFiniteError(fmt::format("parameter {} is not finite", *bad));
                }
                val = evaluate_loss(arch, local.params, clients[i].validation);
                objective = evaluate_loss(arch, local.params, clients[i].train);
            } catch (const NonFiniteError& e) {
                throw NonFiniteError(fmt::format("round {}: client '{}': {}", t, clients[i].name, e.what()));
            }
            r.global = std::move(local.params);

            RoundReport rep;
            rep.round = static_cast<std::size_t>(t);
            rep.pre_aggregation_loss = {val};
            rep.post_aggregation_loss = {val};
            rep.loss_gap = {0.0};
            rep.step_size = step_size(rep.round, static_cast<std::size_t>(config.total_rounds), config.step_base);
            rep.weights_before = rep.weights_clipped = rep.weights_after = {1.0};
            rep.train_loss = {local.final_epoch_loss.value_or(0.0)};
            rep.global_train_objective = objective;
            rep.global_validation_loss = val;
            rep.duration =
                std::chrono::duration_cast<std::chrono::nanoseconds>(std::chrono::steady_clock::now() - started);
            r.rounds.push_back(std::move(rep));
            if (config.record_trajectory) r.trajectory.push_back(r.global);
        }
        r.local_models = {r.global};
        results.push_back(std::move(r));
    }
    return results;
}

void save_checkpoint(const std::filesystem::path& file, const ParamVector& params, std::uint64_t round) {
    std::ofstream os(file, std::ios::binary | std::ios::trunc);
    if (!os) throw InvalidInput("cannot write checkpoint " + file.string());
    os.write("FAWC", 4);
    io::write_u32(os, kCheckpointVersion);
    io::write_u32(os, static_cast<std::uint32_t>(params.layout_id.size()));
    os.write(params.layout_id.data(), static_cast<std::streamsize>(params.layout_id.size()));
    io::write_u64(os, params.values.size());
    io::write_u64(os, round);
    for (const double v : params.values) io::write_f64(os, v);
    if (!os) throw InvalidInput("failed writing checkpoint " + file.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& file) {
    std::ifstream is(file, std::ios::binary);
    if (!is) throw InvalidInput("cannot open checkpoint " + file.string());
    io::expect_magic(is, "FAWC", "checkpoint");
    const auto version = io::read_u32(is);
    if (version != kCheckpointVersion) throw InvalidInput(fmt::format("unsupported checkpoint version {}", version));
    const auto id_len = io::read_u32(is);
    if (id_len > 4096) throw InvalidInput("checkpoint layout id is implausibly long");
    std::string layout(id_len, '\0');
    if (!is.read(layout.data(), id_len)) throw InvalidInput("checkpoint truncated");
    const auto count = io::read_u64(is);
    if (count > (std::uint64_t{1} << 32)) throw InvalidInput("checkpoint parameter count is implausibly large");
    Checkpoint cp;
    cp.round = io::read_u64(is);
    cp.params.layout_id = std::move(layout);
    cp.params.values.resize(count);
    for (auto& v : cp.params.values) v = io::read_f64(is);
    return cp;
}

}  // namespace fedaaw
