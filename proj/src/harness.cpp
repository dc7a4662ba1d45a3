#include "fedaaw/harness.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "fedaaw/errors.hpp"
#include "fedaaw/metrics.hpp"

namespace fedaaw {
namespace {

using nlohmann::json;

constexpr double kBinarizeThreshold = 0.5;

[[noreturn]] void config_error(const std::string& path, const std::string& what) {
    throw InvalidInput(fmt::format("config field '{}': {}", path, what));
}

void reject_unknown(const json& obj, const std::string& path, std::initializer_list<std::string_view> known) {
    if (!obj.is_object()) config_error(path.empty() ? "<root>" : path, "expected an object");
    for (const auto& [key, _] : obj.items()) {
        if (std::find(known.begin(), known.end(), key) == known.end()) {
            config_error(path.empty() ? key : path + "." + key, "unknown field");
        }
    }
}

template <typename T>
void read_field(const json& obj, const std::string& path, const char* key, T& out) {
    const auto it = obj.find(key);
    if (it == obj.end()) return;
    const std::string full = path.empty() ? key : path + "." + key;
    try {
        if constexpr (std::is_same_v<T, double>) {
            if (!it->is_number()) config_error(full, "expected a number");
        } else if constexpr (std::is_integral_v<T> && !std::is_same_v<T, bool>) {
            if (!it->is_number_integer()) config_error(full, "expected an integer");
            if constexpr (std::is_unsigned_v<T>) {
                if (!it->is_number_unsigned() && it->get<std::int64_t>() < 0) config_error(full, "expected a non-negative integer");
            }
        } else if constexpr (std::is_same_v<T, bool>) {
            if (!it->is_boolean()) config_error(full, "expected true or false");
        } else if constexpr (std::is_same_v<T, std::string>) {
            if (!it->is_string()) config_error(full, "expected a string");
        }
        out = it->get<T>();
    } catch (const json::exception& e) {
        config_error(full, e.what());
    }
}

void apply_federation_patch(FederationConfig& f, const json& j, const std::string& path) {
    reject_unknown(j, path,
                   {"rounds", "local_epochs", "hidden_units", "batch_size", "learning_rate", "weight_decay", "beta1",
                    "beta2", "epsilon", "step_base", "post_aggregation_model", "parallel_clients"});
    read_field(j, path, "rounds", f.total_rounds);
    read_field(j, path, "local_epochs", f.local_epochs_per_round);
    read_field(j, path, "hidden_units", f.hidden_units);
    read_field(j, path, "batch_size", f.batch_size);
    read_field(j, path, "learning_rate", f.optimizer.learning_rate);
    read_field(j, path, "weight_decay", f.optimizer.weight_decay);
    read_field(j, path, "beta1", f.optimizer.beta1);
    read_field(j, path, "beta2", f.optimizer.beta2);
    read_field(j, path, "epsilon", f.optimizer.epsilon);
    read_field(j, path, "step_base", f.step_base);
    read_field(j, path, "parallel_clients", f.parallel_clients);
    std::string q;
    read_field(j, path, "post_aggregation_model", q);
    if (!q.empty()) {
        try {
            f.post_aggregation_model = post_aggregation_model_from_string(q);
        } catch (const InvalidInput& e) {
            config_error(path + ".post_aggregation_model", e.what());
        }
    }
}

json federation_to_json(const FederationConfig& f) {
    return {{"rounds", f.total_rounds},
            {"local_epochs", f.local_epochs_per_round},
            {"hidden_units", f.hidden_units},
            {"batch_size", f.batch_size},
            {"learning_rate", f.optimizer.learning_rate},
            {"weight_decay", f.optimizer.weight_decay},
            {"beta1", f.optimizer.beta1},
            {"beta2", f.optimizer.beta2},
            {"epsilon", f.optimizer.epsilon},
            {"step_base", f.step_base},
            {"post_aggregation_model", std::string(to_string(f.post_aggregation_model))},
            {"parallel_clients", f.parallel_clients}};
}

json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::string csv_number(const std::optional<double>& v) { return v ? fmt::format("{}", *v) : "null"; }

json row_to_json(const MetricsRow& r) {
    return {{"seed", r.seed},
            {"center", r.center},
            {"method", r.method},
            {"n_test", r.n_test},
            {"dice", r.dice},
            {"jaccard", r.jaccard},
            {"precision", r.precision},
            {"recall", r.recall},
            {"hd95", optional_number(r.hd95)},
            {"assd", optional_number(r.assd)}};
}

struct Stat {
    std::optional<double> mean;
    std::optional<double> std;
};

Stat mean_std(const std::vector<double>& xs) {
    if (xs.empty()) return {};
    double sum = 0.0;
    for (const double x : xs) sum += x;
    const double mean = sum / static_cast<double>(xs.size());
    double ss = 0.0;
    for (const double x : xs) ss += (x - mean) * (x - mean);
    const double sd = xs.size() > 1 ? std::sqrt(ss / static_cast<double>(xs.size() - 1)) : 0.0;
    return {mean, sd};
}

std::optional<double> diff(const std::optional<double>& a, const std::optional<double>& b) {
    if (a && b) return *a - *b;
    return std::nullopt;
}

}  // namespace

std::string_view to_string(Arm arm) {
    switch (arm) {
        case Arm::no_fl: return "no_fl";
        case Arm::fedavg: return "fedavg";
        case Arm::fedavg_aaw: return "fedavg_aaw";
    }
    return "unknown";
}

Arm arm_from_string(std::string_view s) {
    if (s == "no_fl") return Arm::no_fl;
    if (s == "fedavg") return Arm::fedavg;
    if (s == "fedavg_aaw") return Arm::fedavg_aaw;
    throw InvalidInput(fmt::format("unknown arm '{}' (expected no_fl, fedavg or fedavg_aaw)", s));
}

FederationConfig ExperimentConfig::federation_for(Arm arm, std::uint64_t seed) const {
    FederationConfig f = federation;
    if (const auto it = arm_overrides.find(arm); it != arm_overrides.end()) {
        apply_federation_patch(f, it->second, fmt::format("arm_overrides.{}", to_string(arm)));
    }
    f.seed = seed;
    f.strategy = arm == Arm::fedavg_aaw ? Strategy::fedavg_aaw : Strategy::fedavg;
    return f;
}

void ExperimentConfig::validate() const {
    if (arms.empty()) throw InvalidInput("config: at least one arm is required");
    if (seeds.empty()) throw InvalidInput("config: at least one seed is required");
    if (std::set<Arm>(arms.begin(), arms.end()).size() != arms.size()) throw InvalidInput("config: duplicate arm");
    if (std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() != seeds.size()) {
        throw InvalidInput("config: duplicate seed");
    }
    if (!dataset.manifest && !(dataset.scale > 0.0)) throw InvalidInput("config field 'dataset.scale': must be > 0");
    for (const Arm a : arms) federation_for(a, seeds.front()).validate();
}

ExperimentConfig default_experiment_config() {
    ExperimentConfig c;
    c.federation.total_rounds = 100;
    c.federation.local_epochs_per_round = 1;
    c.federation.optimizer.learning_rate = 1.5e-2;
    c.federation.optimizer.weight_decay = 0.01;
    c.federation.batch_size = 8;
    c.federation.hidden_units = 32;
    return c;
}

ExperimentConfig parse_experiment_config(const json& j) {
    ExperimentConfig c = default_experiment_config();
    reject_unknown(j, "", {"dataset", "federation", "arm_overrides", "arms", "seeds", "output_dir", "record_timing"});

    if (const auto it = j.find("dataset"); it != j.end()) {
        const auto& d = *it;
        reject_unknown(d, "dataset",
                       {"manifest", "centers", "scale", "seed", "dims", "spacing", "background_intensity",
                        "foreground_intensity", "train_frac", "val_frac", "domain_shift"});
        std::string manifest;
        read_field(d, "dataset", "manifest", manifest);
        if (!manifest.empty()) c.dataset.manifest = manifest;
        if (const auto centers = d.find("centers"); centers != d.end()) {
            if (!centers->is_array() || centers->empty()) config_error("dataset.centers", "expected a non-empty list");
            for (std::size_t i = 0; i < centers->size(); ++i) {
                try {
                    c.dataset.centers.push_back(center_spec_from_json((*centers)[i]));
                    validate_center_spec(c.dataset.centers.back());
                } catch (const InvalidInput& e) {
                    config_error(fmt::format("dataset.centers[{}]", i), e.what());
                }
            }
        }
        read_field(d, "dataset", "scale", c.dataset.scale);
        read_field(d, "dataset", "seed", c.dataset.seed);
        read_field(d, "dataset", "background_intensity", c.dataset.geometry.background_intensity);
        read_field(d, "dataset", "foreground_intensity", c.dataset.geometry.foreground_intensity);
        read_field(d, "dataset", "train_frac", c.dataset.train_frac);
        read_field(d, "dataset", "val_frac", c.dataset.val_frac);
        read_field(d, "dataset", "domain_shift", c.dataset.domain_shift);
        if (const auto dims = d.find("dims"); dims != d.end()) {
            if (!dims->is_array() || dims->size() != 3) config_error("dataset.dims", "expected [z, y, x]");
            for (const auto& v : *dims) {
                if (!v.is_number_integer() || v.get<std::int64_t>() <= 0) {
                    config_error("dataset.dims", "expected positive integers");
                }
            }
            c.dataset.geometry.dims = {(*dims)[0].get<std::size_t>(), (*dims)[1].get<std::size_t>(),
                                       (*dims)[2].get<std::size_t>()};
        }
        if (const auto sp = d.find("spacing"); sp != d.end()) {
            if (!sp->is_array() || sp->size() != 3) config_error("dataset.spacing", "expected [z, y, x]");
            for (const auto& v : *sp) {
                if (!v.is_number() || !(v.get<double>() > 0.0)) config_error("dataset.spacing", "expected positive numbers");
            }
            c.dataset.geometry.spacing = {(*sp)[0].get<double>(), (*sp)[1].get<double>(), (*sp)[2].get<double>()};
        }
    }
    if (const auto it = j.find("federation"); it != j.end()) apply_federation_patch(c.federation, *it, "federation");
    if (const auto it = j.find("arm_overrides"); it != j.end()) {
        if (!it->is_object()) config_error("arm_overrides", "expected an object");
        for (const auto& [name, patch] : it->items()) {
            Arm arm;
            try {
                arm = arm_from_string(name);
            } catch (const InvalidInput& e) {
                config_error("arm_overrides." + name, e.what());
            }
            FederationConfig probe;
            apply_federation_patch(probe, patch, "arm_overrides." + name);
            c.arm_overrides[arm] = patch;
        }
    }
    if (const auto it = j.find("arms"); it != j.end()) {
        if (!it->is_array()) config_error("arms", "expected a list");
        c.arms.clear();
        for (const auto& a : *it) {
            if (!a.is_string()) config_error("arms", "expected arm names");
            try {
                c.arms.push_back(arm_from_string(a.get<std::string>()));
            } catch (const InvalidInput& e) {
                config_error("arms", e.what());
            }
        }
    }
    if (const auto it = j.find("seeds"); it != j.end()) {
        if (!it->is_array()) config_error("seeds", "expected a list");
        c.seeds.clear();
        for (const auto& s : *it) {
            if (!s.is_number_integer() || (!s.is_number_unsigned() && s.get<std::int64_t>() < 0)) config_error("seeds", "expected non-negative integers");
            c.seeds.push_back(s.get<std::uint64_t>());
        }
    }
    std::string out;
    read_field(j, "", "output_dir", out);
    if (!out.empty()) c.output_dir = out;
    read_field(j, "", "record_timing", c.record_timing);
    return c;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& file) {
    std::ifstream is(file);
    if (!is) throw InvalidInput("cannot open config " + file.string());
    std::stringstream buf;
    buf << is.rdbuf();
    const std::string text = buf.str();
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        const auto upto = text.substr(0, std::min<std::size_t>(e.byte, text.size()));
        const auto line = 1 + std::count(upto.begin(), upto.end(), '\n');
        throw InvalidInput(fmt::format("{}:{}: JSON syntax error: {}", file.string(), line, e.what()));
    }
    return parse_experiment_config(j);
}

json experiment_config_to_json(const ExperimentConfig& c) {
    const auto& g = c.dataset.geometry;
    json dataset = {{"scale", c.dataset.scale},
                    {"seed", c.dataset.seed},
                    {"dims", {g.dims.z, g.dims.y, g.dims.x}},
                    {"spacing", {g.spacing.z, g.spacing.y, g.spacing.x}},
                    {"background_intensity", g.background_intensity},
                    {"foreground_intensity", g.foreground_intensity},
                    {"train_frac", c.dataset.train_frac},
                    {"val_frac", c.dataset.val_frac},
                    {"domain_shift", c.dataset.domain_shift}};
    if (c.dataset.manifest) dataset["manifest"] = c.dataset.manifest->generic_string();
    if (!c.dataset.centers.empty()) {
        dataset["centers"] = json::array();
        for (const auto& spec : c.dataset.centers) dataset["centers"].push_back(center_spec_to_json(spec));
    }
    json arms = json::array();
    for (const Arm a : c.arms) arms.push_back(std::string(to_string(a)));
    json overrides = json::object();
    for (const auto& [arm, patch] : c.arm_overrides) overrides[std::string(to_string(arm))] = patch;
    return {{"dataset", dataset},
            {"federation", federation_to_json(c.federation)},
            {"arm_overrides", overrides},
            {"arms", arms},
            {"seeds", c.seeds},
            {"output_dir", c.output_dir.generic_string()},
            {"record_timing", c.record_timing}};
}

MetricsRow evaluate_center(const TrainerArchitecture& arch, const ParamVector& params, std::span<const Sample> test) {
    if (test.empty()) throw InvalidInput("evaluate_center: empty test split");
    MetricsRow row;
    row.n_test = test.size();
    double hd_sum = 0.0;
    double assd_sum = 0.0;
    std::size_t with_distance = 0;
    for (const auto& s : test) {
        const auto prob = forward(arch, params, s.volume);
        std::vector<std::uint8_t> bin(prob.size());
        for (std::size_t i = 0; i < prob.size(); ++i) bin[i] = prob[i] >= kBinarizeThreshold ? 1 : 0;
        const VoxelMask pred(s.mask.dims, std::move(bin), s.mask.spacing);
        const auto c = confusion_counts(pred, s.mask);
        row.dice += dice(c);
        row.jaccard += jaccard(c);
        row.precision += precision(c);
        row.recall += recall(c);
        if (pred.foreground_count() > 0 && s.mask.foreground_count() > 0) {
            const auto d = surface_distances(pred, s.mask);
            hd_sum += d.hd95;
            assd_sum += d.assd;
            ++with_distance;
        }
    }
    const double n = static_cast<double>(test.size());
    row.dice /= n;
    row.jaccard /= n;
    row.precision /= n;
    row.recall /= n;
    if (with_distance > 0) {
        row.hd95 = hd_sum / static_cast<double>(with_distance);
        row.assd = assd_sum / static_cast<double>(with_distance);
    }
    return row;
}

MetricsRow weighted_average(std::span<const MetricsRow> rows) {
    if (rows.empty()) throw InvalidInput("weighted_average: no rows");
    MetricsRow avg;
    avg.seed = rows.front().seed;
    avg.method = rows.front().method;
    avg.center = std::string(kAverageCenter);
    double total = 0.0;
    double dist_total = 0.0;
    double hd = 0.0;
    double as = 0.0;
    for (const auto& r : rows) {
        const double w = static_cast<double>(r.n_test);
        total += w;
        avg.n_test += r.n_test;
        avg.dice += w * r.dice;
        avg.jaccard += w * r.jaccard;
        avg.precision += w * r.precision;
        avg.recall += w * r.recall;
        if (r.hd95 && r.assd) {
            dist_total += w;
            hd += w * *r.hd95;
            as += w * *r.assd;
        }
    }
    if (total == 0.0) throw InvalidInput("weighted_average: zero total test count");
    avg.dice /= total;
    avg.jaccard /= total;
    avg.precision /= total;
    avg.recall /= total;
    if (dist_total > 0.0) {
        avg.hd95 = hd / dist_total;
        avg.assd = as / dist_total;
    }
    return avg;
}

DatasetBundle build_dataset(const DatasetConfig& config) {
    if (config.manifest) return load_dataset(*config.manifest);
    DatasetBundle bundle;
    bundle.geometry = config.geometry;
    if (!config.centers.empty()) {
        bundle.centers = config.centers;
    } else {
        bundle.centers = config.domain_shift ? default_seven_centers(config.scale, config.seed)
                                             : homogeneous_seven_centers(config.scale, config.seed);
    }
    for (std::size_t i = 0; i < bundle.centers.size(); ++i) {
        const auto& spec = bundle.centers[i];
        auto client = split_dataset(generate_center(spec, bundle.geometry), config.train_frac, config.val_frac,
                                    mix_seed(spec.seed, 0x5EED));
        client.name = spec.name;
        bundle.clients.push_back(std::move(client));
    }
    return bundle;
}

nlohmann::json round_report_to_json(const RoundReport& r, bool record_timing) {
    json j = {{"round", r.round},
              {"step_size", r.step_size},
              {"pre_aggregation_loss", r.pre_aggregation_loss},
              {"post_aggregation_loss", r.post_aggregation_loss},
              {"loss_gap", r.loss_gap},
              {"weights_before", r.weights_before},
              {"weights_clipped", r.weights_clipped},
              {"weights_after", r.weights_after},
              {"train_loss", r.train_loss},
              {"global_train_objective", r.global_train_objective},
              {"global_validation_loss", r.global_validation_loss}};
    if (record_timing) j["duration_ms"] = std::chrono::duration<double, std::milli>(r.duration).count();
    return j;
}

void JsonlRoundWriter::operator()(const RoundReport& report, std::string_view client) const {
    json j = {{"arm", arm_}, {"seed", seed_}};
    if (!client.empty()) j["client"] = std::string(client);
    j.update(round_report_to_json(report, record_timing_));
    *os_ << j.dump() << '\n';
}

ExperimentReport run_experiment(const ExperimentConfig& config, bool write_outputs) {
    config.validate();
    const DatasetBundle data = build_dataset(config.dataset);
    const std::span<const ClientDataset> clients(data.clients);

    ExperimentReport report;
    for (const auto& c : data.clients) {
        report.centers.push_back(c.name);
        report.test_counts.push_back(c.test.size());
    }
    if (write_outputs) std::filesystem::create_directories(config.output_dir);

    for (const std::uint64_t seed : config.seeds) {
        for (const Arm arm : config.arms) {
            const std::string arm_name(to_string(arm));
            try {
                const FederationConfig fed = config.federation_for(arm, seed);
                const auto arch = architecture_for(clients, fed);
                std::ofstream log;
                if (write_outputs) {
                    log.open(config.output_dir / fmt::format("rounds_{}_{}.jsonl", arm_name, seed), std::ios::trunc);
                    if (!log) throw InvalidInput("cannot write round log in " + config.output_dir.string());
                }
                const JsonlRoundWriter writer(log, arm_name, seed, config.record_timing);

                ArmRun run{arm, seed, {}};
                std::vector<MetricsRow> rows;
                if (arm == Arm::no_fl) {
                    run.results = run_local_only(clients, fed);
                    for (std::size_t i = 0; i < clients.size(); ++i) {
                        if (write_outputs) {
                            for (const auto& r : run.results[i].rounds) writer(r, clients[i].name);
                        }
                        rows.push_back(evaluate_center(arch, run.results[i].global, clients[i].test));
                    }
                } else {
                    RoundSink sink;
                    if (write_outputs) sink = [&](const RoundReport& r) { writer(r); };
                    run.results.push_back(run_federated_training(clients, fed, sink));
                    for (const auto& c : clients) rows.push_back(evaluate_center(arch, run.results.front().global, c.test));
                    if (write_outputs) {
                        save_checkpoint(config.output_dir / fmt::format("global_{}_{}.ckpt", arm_name, seed),
                                        run.results.front().global, static_cast<std::uint64_t>(fed.total_rounds));
                    }
                }
                for (std::size_t i = 0; i < rows.size(); ++i) {
                    rows[i].seed = seed;
                    rows[i].method = arm_name;
                    rows[i].center = clients[i].name;
                }
                rows.push_back(weighted_average(rows));
                report.rows.insert(report.rows.end(), rows.begin(), rows.end());
                report.runs.push_back(std::move(run));
            } catch (const std::exception& e) {
                report.failures.push_back({arm_name, seed, e.what()});
            }
        }
    }
    if (write_outputs) write_report(config, report);
    return report;
}

TableArtifacts emit_table(std::span<const MetricsRow> rows) {
    // Preserve first-appearance order of seeds, centers and methods.
    std::vector<std::uint64_t> seeds;
    std::vector<std::string> centers;
    std::vector<std::string> methods;
    std::map<std::tuple<std::uint64_t, std::string, std::string>, const MetricsRow*> cell;
    auto remember = [](auto& list, const auto& v) {
        if (std::find(list.begin(), list.end(), v) == list.end()) list.push_back(v);
    };
    for (const auto& r : rows) {
        if (r.method == kDeltaMethod) throw InvalidInput("emit_table: delta rows are derived, not inputs");
        remember(seeds, r.seed);
        remember(centers, r.center);
        remember(methods, r.method);
        if (!cell.emplace(std::make_tuple(r.seed, r.center, r.method), &r).second) {
            throw InvalidInput(fmt::format("emit_table: duplicate cell seed={} center={} method={}", r.seed, r.center,
                                           r.method));
        }
    }
    // Every seed must cover the same center x method grid over the methods it
    // reports.
    std::map<std::uint64_t, std::vector<std::string>> seed_methods;
    for (const auto& r : rows) remember(seed_methods[r.seed], r.method);
    for (const auto seed : seeds) {
        for (const auto& m : seed_methods[seed]) {
            for (const auto& c : centers) {
                if (!cell.count({seed, c, m})) {
                    throw InvalidInput(fmt::format("emit_table: missing cell seed={} center={} method={}", seed, c, m));
                }
            }
        }
    }

    const std::string header = "seed,center,method,n_test,dice,jaccard,precision,recall,hd95,assd\n";
    std::string csv = header;
    json jrows = json::array();
    auto emit = [&](const std::string& seed, const MetricsRow& r) {
        csv += fmt::format("{},{},{},{},{},{},{},{},{},{}\n", seed, r.center, r.method, r.n_test, r.dice, r.jaccard,
                           r.precision, r.recall, csv_number(r.hd95), csv_number(r.assd));
    };

    const bool has_delta = std::find(methods.begin(), methods.end(), "fedavg") != methods.end() &&
                           std::find(methods.begin(), methods.end(), "fedavg_aaw") != methods.end();
    for (const auto seed : seeds) {
        const auto seed_text = fmt::format("{}", seed);
        for (const auto& c : centers) {
            for (const auto& m : seed_methods[seed]) {
                const MetricsRow& r = *cell.at({seed, c, m});
                emit(seed_text, r);
                jrows.push_back(row_to_json(r));
            }
            const auto a = cell.find({seed, c, "fedavg_aaw"});
            const auto b = cell.find({seed, c, "fedavg"});
            if (has_delta && a != cell.end() && b != cell.end()) {
                MetricsRow d;
                d.seed = seed;
                d.center = c;
                d.method = std::string(kDeltaMethod);
                d.n_test = a->second->n_test;
                d.dice = a->second->dice - b->second->dice;
                d.jaccard = a->second->jaccard - b->second->jaccard;
                d.precision = a->second->precision - b->second->precision;
                d.recall = a->second->recall - b->second->recall;
                d.hd95 = diff(a->second->hd95, b->second->hd95);
                d.assd = diff(a->second->assd, b->second->assd);
                emit(seed_text, d);
                jrows.push_back(row_to_json(d));
            }
        }
    }

    // Mean and sample standard deviation across seeds per (center, method).
    json summary = json::array();
    std::string summary_csv;
    for (const auto& c : centers) {
        for (const auto& m : methods) {
            std::vector<double> vals[6];
            std::size_t n_test = 0;
            std::size_t present = 0;
            for (const auto seed : seeds) {
                const auto it = cell.find({seed, c, m});
                if (it == cell.end()) continue;
                const MetricsRow& r = *it->second;
                ++present;
                n_test = r.n_test;
                vals[0].push_back(r.dice);
                vals[1].push_back(r.jaccard);
                vals[2].push_back(r.precision);
                vals[3].push_back(r.recall);
                if (r.hd95) vals[4].push_back(*r.hd95);
                if (r.assd) vals[5].push_back(*r.assd);
            }
            if (present == 0) continue;
            Stat st[6];
            for (int k = 0; k < 6; ++k) st[k] = mean_std(vals[k]);
            static constexpr const char* kNames[6] = {"dice", "jaccard", "precision", "recall", "hd95", "assd"};
            json entry = {{"center", c}, {"method", m}, {"n_test", n_test}, {"seeds", present}};
            for (int k = 0; k < 6; ++k) {
                entry[kNames[k]] = {{"mean", optional_number(st[k].mean)}, {"std", optional_number(st[k].std)}};
            }
            summary.push_back(std::move(entry));
            for (const bool is_mean : {true, false}) {
                summary_csv += fmt::format("{},{},{},{}", is_mean ? "mean" : "std", c, m, n_test);
                for (int k = 0; k < 6; ++k) summary_csv += "," + csv_number(is_mean ? st[k].mean : st[k].std);
                summary_csv += '\n';
            }
        }
    }
    csv += summary_csv;

    return {csv, json{{"columns", {"dice", "jaccard", "precision", "recall", "hd95", "assd"}},
                      {"rows", jrows},
                      {"summary", summary}}};
}

std::string plot_weight_trajectories(std::span<const RoundReport> reports,
                                     std::span<const std::string> centers,
                                     Strategy strategy) {
    if (strategy != Strategy::fedavg_aaw) {
        throw InvalidInput("plot_weight_trajectories: only adaptive-weight runs have weight trajectories");
    }
    std::string csv = "round";
    for (const auto& c : centers) csv += "," + c;
    csv += '\n';
    for (const auto& r : reports) {
        if (r.weights_before.size() != centers.size()) {
            throw InvalidInput(fmt::format("plot_weight_trajectories: round {} has {} weights for {} centers", r.round,
                                           r.weights_before.size(), centers.size()));
        }
        csv += fmt::format("{}", r.round);
        for (const double w : r.weights_before) csv += fmt::format(",{}", w);
        csv += '\n';
    }
    return csv;
}

void write_report(const ExperimentConfig& config, const ExperimentReport& report) {
    const auto& dir = config.output_dir;
    std::filesystem::create_directories(dir);
    const auto table = emit_table(report.rows);

    auto write_text = [&](const std::string& name, const std::string& text) {
        std::ofstream os(dir / name, std::ios::trunc | std::ios::binary);
        os << text;
        if (!os) throw InvalidInput("failed writing " + (dir / name).string());
    };
    write_text("report.csv", table.csv);

    json failures = json::array();
    for (const auto& f : report.failures) failures.push_back({{"arm", f.arm}, {"seed", f.seed}, {"error", f.message}});
    json centers = json::array();
    for (std::size_t i = 0; i < report.centers.size(); ++i) {
        centers.push_back({{"name", report.centers[i]}, {"n_test", report.test_counts[i]}});
    }
    json doc = {{"config", experiment_config_to_json(config)},
                {"centers", centers},
                {"table", table.json},
                {"failures", failures}};
    write_text("report.json", doc.dump(2) + "\n");

    for (const auto& run : report.runs) {
        if (run.arm != Arm::fedavg_aaw) continue;
        write_text(fmt::format("weights_{}_{}.csv", to_string(run.arm), run.seed),
                   plot_weight_trajectories(run.results.front().rounds, report.centers, Strategy::fedavg_aaw));
    }
}

}  // namespace fedaaw
