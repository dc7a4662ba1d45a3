#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <string>

#include "fedaaw/errors.hpp"
#include "fedaaw/federation.hpp"
#include "fedaaw/losses.hpp"
#include "fedaaw/synthdata.hpp"

using namespace fedaaw;
namespace fs = std::filesystem;

namespace {

VolumeGeometry tiny_geometry() {
    VolumeGeometry g;
    g.dims = {4, 6, 6};
    g.spacing = {2.0, 1.0, 1.0};
    return g;
}

std::vector<ClientDataset> tiny_clients(std::size_t k, std::uint64_t seed = 3) {
    std::vector<ClientDataset> out;
    const std::int64_t counts[] = {12, 7, 9, 5};
    const double shifts[] = {0.0, 0.2, -0.15, 0.1};
    for (std::size_t i = 0; i < k; ++i) {
        CenterSpec s;
        s.name = "c" + std::to_string(i);
        s.sample_count = counts[i % 4];
        s.intensity_shift = shifts[i % 4];
        s.noise_sigma = 0.05;
        s.position_jitter = 0.3;
        s.seed = seed * 100 + i;
        auto ds = split_dataset(generate_center(s, tiny_geometry()), 0.6, 0.2, s.seed);
        ds.name = s.name;
        out.push_back(std::move(ds));
    }
    return out;
}

FederationConfig tiny_config(Strategy strategy, std::uint64_t seed = 1) {
    FederationConfig c;
    c.total_rounds = 6;
    c.strategy = strategy;
    c.seed = seed;
    c.hidden_units = 4;
    c.batch_size = 3;
    c.optimizer.learning_rate = 1e-2;
    c.record_trajectory = true;
    return c;
}

void check_same_reports(const std::vector<RoundReport>& a, const std::vector<RoundReport>& b) {
    REQUIRE(a.size() == b.size());
    for (std::size_t t = 0; t < a.size(); ++t) {
        CHECK(a[t].round == b[t].round);
        CHECK(a[t].pre_aggregation_loss == b[t].pre_aggregation_loss);
        CHECK(a[t].post_aggregation_loss == b[t].post_aggregation_loss);
        CHECK(a[t].loss_gap == b[t].loss_gap);
        CHECK(a[t].step_size == b[t].step_size);
        CHECK(a[t].weights_before == b[t].weights_before);
        CHECK(a[t].weights_clipped == b[t].weights_clipped);
        CHECK(a[t].weights_after == b[t].weights_after);
        CHECK(a[t].train_loss == b[t].train_loss);
        CHECK(a[t].global_train_objective == b[t].global_train_objective);
        CHECK(a[t].global_validation_loss == b[t].global_validation_loss);
    }
}

}  // namespace

TEST_CASE("round reports are well formed") {
    const auto clients = tiny_clients(2);
    auto cfg = tiny_config(Strategy::fedavg_aaw);
    cfg.total_rounds = 2;
    const auto r = run_federated_training(clients, cfg);
    REQUIRE(r.rounds.size() == 2);
    CHECK(r.local_models.size() == 2);
    CHECK(r.trajectory.size() == 2);
    CHECK(r.trajectory.back() == r.global);
    for (std::size_t t = 0; t < 2; ++t) {
        const auto& rep = r.rounds[t];
        CHECK(rep.round == t);
        CHECK(rep.pre_aggregation_loss.size() == 2);
        CHECK(rep.post_aggregation_loss.size() == 2);
        CHECK(rep.loss_gap.size() == 2);
        CHECK(rep.train_loss.size() == 2);
        CHECK(rep.step_size == step_size(t, 2));
        check_simplex(rep.weights_before);
        check_simplex(rep.weights_after);
        for (std::size_t i = 0; i < 2; ++i)
            CHECK(rep.loss_gap[i] == rep.post_aggregation_loss[i] - rep.pre_aggregation_loss[i]);
    }
    // Round 0 uses the sample-proportional weights.
    const double n0 = static_cast<double>(clients[0].train.size());
    const double n1 = static_cast<double>(clients[1].train.size());
    CHECK(r.rounds[0].weights_before == std::vector<double>{n0 / (n0 + n1), n1 / (n0 + n1)});
    // Weights carry over between rounds.
    CHECK(r.rounds[1].weights_before == r.rounds[0].weights_after);
}

TEST_CASE("fedavg never adapts its weights") {
    const auto clients = tiny_clients(3);
    const auto r = run_federated_training(clients, tiny_config(Strategy::fedavg));
    for (const auto& rep : r.rounds) {
        CHECK(rep.weights_after == r.rounds[0].weights_before);
        CHECK(rep.weights_before == r.rounds[0].weights_before);
    }
}

TEST_CASE("adaptive weights with zero step reproduce fedavg bit for bit") {
    const auto clients = tiny_clients(3);
    for (std::uint64_t seed : {1, 2, 3}) {
        auto aaw = tiny_config(Strategy::fedavg_aaw, seed);
        aaw.step_base = 0.0;
        const auto a = run_federated_training(clients, aaw);
        const auto b = run_federated_training(clients, tiny_config(Strategy::fedavg, seed));
        CHECK(a.trajectory == b.trajectory);
        CHECK(a.global == b.global);
        for (const auto& rep : a.rounds) CHECK(rep.weights_after == b.rounds[0].weights_before);
    }
}

TEST_CASE("adaptive weights actually move with a positive step") {
    const auto clients = tiny_clients(3);
    const auto r = run_federated_training(clients, tiny_config(Strategy::fedavg_aaw));
    CHECK(r.rounds.back().weights_after != r.rounds.front().weights_before);
    for (const auto& rep : r.rounds) check_simplex(rep.weights_after);
}

TEST_CASE("training is deterministic") {
    const auto clients = tiny_clients(3);
    const auto cfg = tiny_config(Strategy::fedavg_aaw, 9);
    const auto a = run_federated_training(clients, cfg);
    const auto b = run_federated_training(clients, cfg);
    CHECK(a.global == b.global);
    CHECK(a.trajectory == b.trajectory);
    CHECK(a.local_models == b.local_models);
    check_same_reports(a.rounds, b.rounds);

    const auto c = run_federated_training(clients, tiny_config(Strategy::fedavg_aaw, 10));
    CHECK(c.global != a.global);
}

TEST_CASE("parallel client training matches sequential") {
    const auto clients = tiny_clients(4);
    auto seq = tiny_config(Strategy::fedavg_aaw, 4);
    auto par = seq;
    par.parallel_clients = true;
    const auto a = run_federated_training(clients, seq);
    const auto b = run_federated_training(clients, par);
    CHECK(a.trajectory == b.trajectory);
    check_same_reports(a.rounds, b.rounds);
}

TEST_CASE("one client federation equals local-only training") {
    const auto clients = tiny_clients(1);
    for (auto strategy : {Strategy::fedavg, Strategy::fedavg_aaw}) {
        const auto cfg = tiny_config(strategy, 5);
        const auto fl = run_federated_training(clients, cfg);
        const auto local = run_local_only(clients, cfg);
        REQUIRE(local.size() == 1);
        CHECK(fl.trajectory == local[0].trajectory);
        CHECK(fl.global == local[0].global);
        for (const auto& rep : fl.rounds) CHECK(rep.weights_after == std::vector<double>{1.0});
    }
}

TEST_CASE("local-only training is isolated per client") {
    auto clients = tiny_clients(2);
    const auto cfg = tiny_config(Strategy::fedavg, 2);
    const auto a = run_local_only(clients, cfg);
    clients[1] = tiny_clients(2, 77)[1];
    const auto b = run_local_only(clients, cfg);
    CHECK(a[0].trajectory == b[0].trajectory);
    CHECK(a[1].global != b[1].global);
    CHECK(a.size() == 2);
    CHECK(a[0].rounds.size() == static_cast<std::size_t>(cfg.total_rounds));
    CHECK(run_local_only(clients, cfg)[1].global == b[1].global);
}

TEST_CASE("broadcast post-aggregation model evaluates the round's starting model") {
    const auto clients = tiny_clients(2);
    auto cfg = tiny_config(Strategy::fedavg_aaw);
    cfg.post_aggregation_model = PostAggregationModel::broadcast;
    const auto r = run_federated_training(clients, cfg);
    const auto arch = architecture_for(clients, cfg);
    // Q at round t is the loss of the global model after round t-1.
    for (std::size_t t = 1; t < r.rounds.size(); ++t)
        for (std::size_t i = 0; i < 2; ++i)
            CHECK(r.rounds[t].post_aggregation_loss[i] == evaluate_loss(arch, r.trajectory[t - 1], clients[i].validation));

    cfg.post_aggregation_model = PostAggregationModel::aggregated;
    const auto s = run_federated_training(clients, cfg);
    for (std::size_t t = 0; t < s.rounds.size(); ++t)
        for (std::size_t i = 0; i < 2; ++i)
            CHECK(s.rounds[t].post_aggregation_loss[i] == evaluate_loss(arch, s.trajectory[t], clients[i].validation));
}

TEST_CASE("evaluate_loss is the per-sample mean") {
    const auto clients = tiny_clients(1);
    const auto cfg = tiny_config(Strategy::fedavg);
    const auto arch = architecture_for(clients, cfg);
    Rng rng(1);
    const auto p = init_params(arch, rng);
    const auto& s = clients[0].train;
    const double l0 = dice_bce_loss(s[0].mask.data, forward(arch, p, s[0].volume));
    const double l1 = dice_bce_loss(s[1].mask.data, forward(arch, p, s[1].volume));
    CHECK(evaluate_loss(arch, p, std::span<const Sample>(s.data(), 1)) == l0);
    CHECK(evaluate_loss(arch, p, std::span<const Sample>(s.data(), 2)) == doctest::Approx((l0 + l1) / 2).epsilon(1e-15));
    CHECK_THROWS_AS(evaluate_loss(arch, p, std::span<const Sample>{}), InvalidInput);
}

TEST_CASE("configuration errors") {
    const auto clients = tiny_clients(2);
    auto cfg = tiny_config(Strategy::fedavg);
    cfg.total_rounds = 0;
    CHECK_THROWS_AS(run_federated_training(clients, cfg), InvalidInput);
    cfg = tiny_config(Strategy::fedavg);
    cfg.local_epochs_per_round = 0;
    CHECK_THROWS_AS(run_federated_training(clients, cfg), InvalidInput);
    CHECK_THROWS_AS(run_federated_training(std::vector<ClientDataset>{}, tiny_config(Strategy::fedavg)), InvalidInput);

    auto broken = clients;
    broken[1].validation.clear();
    CHECK_THROWS_AS(run_federated_training(broken, tiny_config(Strategy::fedavg)), InvalidInput);
}

TEST_CASE("diverging clients are reported with round and name") {
    const auto clients = tiny_clients(2);
    auto cfg = tiny_config(Strategy::fedavg);
    cfg.optimizer.learning_rate = 1e300;
    cfg.total_rounds = 20;
    try {
        run_federated_training(clients, cfg);
        FAIL("expected divergence");
    } catch (const NonFiniteError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("round ") != std::string::npos);
        CHECK(msg.find("client 'c") != std::string::npos);
    }
}

TEST_CASE("checkpoints round-trip") {
    const auto file = fs::temp_directory_path() / "fedaaw_test.ckpt";
    ParamVector p{{1.5, -0.0, 1e-310, -7e200}, "mlp-v2-h1"};
    save_checkpoint(file, p, 42);
    const auto cp = load_checkpoint(file);
    CHECK(cp.params == p);
    CHECK(std::signbit(cp.params.values[1]));
    CHECK(cp.round == 42);

    fs::resize_file(file, 20);
    CHECK_THROWS(load_checkpoint(file));
    {
        std::ofstream os(file, std::ios::binary | std::ios::trunc);
        os << "NOPE and then some bytes";
    }
    CHECK_THROWS_AS(load_checkpoint(file), InvalidInput);
    fs::remove(file);
}

TEST_CASE("strategy names") {
    CHECK(strategy_from_string(to_string(Strategy::fedavg)) == Strategy::fedavg);
    CHECK(strategy_from_string(to_string(Strategy::fedavg_aaw)) == Strategy::fedavg_aaw);
    CHECK_THROWS_AS(strategy_from_string("fedprox"), InvalidInput);
    CHECK(post_aggregation_model_from_string("broadcast") == PostAggregationModel::broadcast);
}
