#pragma once

// Experiment orchestration: runs the no-federation, FedAvg and adaptive-weight
// arms over several seeds, scores every center's test split, and writes the
// report, weight-trajectory and round-log artifacts.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "fedaaw/dataset.hpp"
#include "fedaaw/federation.hpp"
#include "fedaaw/synthdata.hpp"

namespace fedaaw {

enum class Arm { no_fl, fedavg, fedavg_aaw };

std::string_view to_string(Arm arm);
Arm arm_from_string(std::string_view s);

inline constexpr std::string_view kAverageCenter = "average";
inline constexpr std::string_view kDeltaMethod = "aaw_minus_fedavg";

struct DatasetConfig {
    /// Load a previously exported dataset instead of generating one.
    std::optional<std::filesystem::path> manifest;
    /// Explicit center roster; when empty the seven-center default is used.
    std::vector<CenterSpec> centers;
    double scale = 0.5;
    std::uint64_t seed = 2025;
    VolumeGeometry geometry{};
    double train_frac = 0.64;
    double val_frac = 0.16;
    bool domain_shift = true;
};

struct ExperimentConfig {
    DatasetConfig dataset;
    FederationConfig federation;
    /// Per-arm JSON patches applied on top of `federation`.
    std::map<Arm, nlohmann::json> arm_overrides;
    std::vector<Arm> arms{Arm::no_fl, Arm::fedavg, Arm::fedavg_aaw};
    std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
    std::filesystem::path output_dir = "fedaaw_out";
    /// Include wall-clock durations in round logs (makes them non-reproducible).
    bool record_timing = false;

    /// Base federation settings with the arm's patch and strategy applied.
    FederationConfig federation_for(Arm arm, std::uint64_t seed) const;
    void validate() const;
};

/// Desk-scale defaults used by the CLI and the acceptance suite.
ExperimentConfig default_experiment_config();

/// Parses a JSON config; unknown keys and type errors raise InvalidInput
/// naming the offending field. Missing keys keep their defaults.
ExperimentConfig parse_experiment_config(const nlohmann::json& j);
ExperimentConfig load_experiment_config(const std::filesystem::path& file);
nlohmann::json experiment_config_to_json(const ExperimentConfig& config);

/// Six evaluation metrics for one (seed, center, method) cell. Distance
/// metrics are empty when no test sample produced a finite distance.
struct MetricsRow {
    std::uint64_t seed = 0;
    std::string center;
    std::string method;
    std::size_t n_test = 0;
    double dice = 0.0;
    double jaccard = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    std::optional<double> hd95;
    std::optional<double> assd;
};

/// Mean per-volume metrics of `params` on `test`, predictions thresholded at
/// 0.5.
MetricsRow evaluate_center(const TrainerArchitecture& arch, const ParamVector& params, std::span<const Sample> test);

/// Test-count-weighted mean of center rows; distance metrics are averaged over
/// the rows that have them.
MetricsRow weighted_average(std::span<const MetricsRow> center_rows);

struct ArmFailure {
    std::string arm;
    std::uint64_t seed = 0;
    std::string message;
};

struct ArmRun {
    Arm arm = Arm::fedavg;
    std::uint64_t seed = 0;
    /// FL arms: one entry. no_fl: one entry per center.
    std::vector<TrainingResult> results;
};

struct ExperimentReport {
    std::vector<std::string> centers;
    std::vector<std::size_t> test_counts;
    /// Center rows followed by the average row, per successful (seed, arm).
    std::vector<MetricsRow> rows;
    std::vector<ArmFailure> failures;
    std::vector<ArmRun> runs;

    bool ok() const { return failures.empty(); }
};

/// Generates or loads the configured dataset.
DatasetBundle build_dataset(const DatasetConfig& config);

/// Runs every configured (arm, seed). When `output_dir` is set, round logs are
/// streamed there while training runs.
ExperimentReport run_experiment(const ExperimentConfig& config, bool write_outputs = true);

struct TableArtifacts {
    std::string csv;
    nlohmann::json json;
};

/// Per-seed rows plus signed AAW-minus-FedAvg delta rows and a mean/std
/// summary across seeds. Throws InvalidInput if some seed does not cover the
/// same center x method grid.
TableArtifacts emit_table(std::span<const MetricsRow> rows);

/// One row per round (weights in force during that round), one column per
/// center. Throws InvalidInput for reports from a non-adaptive arm.
std::string plot_weight_trajectories(std::span<const RoundReport> reports,
                                     std::span<const std::string> centers,
                                     Strategy strategy);

/// One JSON object per line; usable as a RoundSink.
class JsonlRoundWriter {
public:
    JsonlRoundWriter(std::ostream& os, std::string arm, std::uint64_t seed, bool record_timing)
        : os_(&os), arm_(std::move(arm)), seed_(seed), record_timing_(record_timing) {}

    void operator()(const RoundReport& report, std::string_view client = {}) const;

private:
    std::ostream* os_;
    std::string arm_;
    std::uint64_t seed_;
    bool record_timing_;
};

nlohmann::json round_report_to_json(const RoundReport& report, bool record_timing);

/// Writes report.csv, report.json and weights_<arm>_<seed>.csv.
void write_report(const ExperimentConfig& config, const ExperimentReport& report);

}  // namespace fedaaw
