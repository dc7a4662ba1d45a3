#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <nlohmann/json.hpp>

#include "fedaaw/aggregation.hpp"
#include "fedaaw/errors.hpp"
#include "fedaaw/harness.hpp"
#include "fedaaw/losses.hpp"
#include "fedaaw/metrics.hpp"
#include "fedaaw/synthdata.hpp"

namespace py = pybind11;
using namespace fedaaw;

namespace {

using MaskArray = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>;
using SpacingTuple = std::tuple<double, double, double>;

VoxelMask to_mask(const MaskArray& a, const SpacingTuple& spacing) {
    if (a.ndim() != 3) throw InvalidInput("mask must be a 3-d array");
    const Dims3 d{static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1)),
                  static_cast<std::size_t>(a.shape(2))};
    std::vector<std::uint8_t> values(a.data(), a.data() + a.size());
    for (auto& v : values) v = v != 0;
    const auto [sz, sy, sx] = spacing;
    return VoxelMask(d, std::move(values), Spacing3{sz, sy, sx});
}

DistanceUnits to_units(const std::string& s) {
    if (s == "mm") return DistanceUnits::millimeters;
    if (s == "voxels") return DistanceUnits::voxels;
    throw InvalidInput("units must be 'mm' or 'voxels'");
}

nlohmann::json to_json(const py::object& obj) {
    const auto text = py::module_::import("json").attr("dumps")(obj).cast<std::string>();
    return nlohmann::json::parse(text);
}

py::object to_py(const nlohmann::json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

py::dict row_to_dict(const MetricsRow& r) {
    py::dict d;
    d["seed"] = r.seed;
    d["center"] = r.center;
    d["method"] = r.method;
    d["n_test"] = r.n_test;
    d["dice"] = r.dice;
    d["jaccard"] = r.jaccard;
    d["precision"] = r.precision;
    d["recall"] = r.recall;
    d["hd95"] = r.hd95 ? py::object(py::float_(*r.hd95)) : py::object(py::none());
    d["assd"] = r.assd ? py::object(py::float_(*r.assd)) : py::object(py::none());
    return d;
}

py::array_t<double> shaped(const std::vector<double>& v, const Dims3& d) {
    py::array_t<double> out({d.z, d.y, d.x});
    std::copy(v.begin(), v.end(), out.mutable_data());
    return out;
}

py::array_t<std::uint8_t> shaped(const std::vector<std::uint8_t>& v, const Dims3& d) {
    py::array_t<std::uint8_t> out({d.z, d.y, d.x});
    std::copy(v.begin(), v.end(), out.mutable_data());
    return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Core operations of the fedaaw library.";

    py::register_exception<InvalidInput>(m, "InvalidInput", PyExc_ValueError);
    py::register_exception<EmptyMaskError>(m, "EmptyMaskError", PyExc_ValueError);
    py::register_exception<NonFiniteError>(m, "NonFiniteError", PyExc_ArithmeticError);

    // Aggregation.
    m.def(
        "init_weights", [](const std::vector<std::int64_t>& counts) { return init_weights(counts).values; },
        py::arg("sample_counts"), "n_i / sum n_j.");
    m.def(
        "aggregate",
        [](const std::vector<std::vector<double>>& params, const std::vector<double>& weights) {
            std::vector<ParamVector> p;
            p.reserve(params.size());
            for (const auto& v : params) p.push_back(ParamVector{v, "python"});
            return aggregate(p, AggregationWeights{weights, 0}).values;
        },
        py::arg("client_params"), py::arg("weights"), "Weighted sum of equal-length parameter vectors.");
    m.def(
        "step_size", [](std::size_t t, std::size_t total, double base) { return step_size(t, total, base); },
        py::arg("t"), py::arg("total_rounds"), py::arg("base") = kDefaultStepBase);
    m.def(
        "compute_loss_gaps",
        [](const std::vector<double>& pre, const std::vector<double>& post) { return compute_loss_gaps(pre, post).gaps; },
        py::arg("pre_aggregation"), py::arg("post_aggregation"));
    m.def(
        "update_weights",
        [](const std::vector<double>& weights, const std::vector<double>& gaps, double step,
           std::optional<std::vector<double>> fallback) {
            const auto fb = fallback.value_or(std::vector<double>{});
            return update_weights_detailed(AggregationWeights{weights, 0}, LossGapVector{gaps}, step, fb).weights.values;
        },
        py::arg("weights"), py::arg("gaps"), py::arg("step"), py::arg("fallback") = py::none(),
        "One adaptive step: shift by gap * step / max|gap|, clamp to [0, 1], renormalize.");

    // Losses.
    using U8 = std::vector<std::uint8_t>;
    using F64 = std::vector<double>;
    m.def("dice_loss", [](const U8& y, const F64& p) { return dice_loss(y, p); }, py::arg("truth"), py::arg("pred"));
    m.def("bce_loss", [](const U8& y, const F64& p) { return bce_loss(y, p); }, py::arg("truth"), py::arg("pred"));
    m.def("dice_bce_loss", [](const U8& y, const F64& p) { return dice_bce_loss(y, p); }, py::arg("truth"),
          py::arg("pred"));
    m.def("dice_bce_grad", [](const U8& y, const F64& p) { return dice_bce_grad(y, p); }, py::arg("truth"),
          py::arg("pred"));

    // Metrics.
    const SpacingTuple unit{1.0, 1.0, 1.0};
    m.def(
        "confusion_counts",
        [](const MaskArray& pred, const MaskArray& truth) {
            const auto c = confusion_counts(to_mask(pred, {1, 1, 1}), to_mask(truth, {1, 1, 1}));
            return py::make_tuple(c.tp, c.fp, c.fn, c.tn);
        },
        py::arg("pred"), py::arg("truth"), "(tp, fp, fn, tn)");
    m.def(
        "overlap_metrics",
        [](const MaskArray& pred, const MaskArray& truth) {
            const auto c = confusion_counts(to_mask(pred, {1, 1, 1}), to_mask(truth, {1, 1, 1}));
            py::dict d;
            d["dice"] = dice(c);
            d["jaccard"] = jaccard(c);
            d["precision"] = precision(c);
            d["recall"] = recall(c);
            return d;
        },
        py::arg("pred"), py::arg("truth"));
    m.def(
        "surface_distances",
        [](const MaskArray& pred, const MaskArray& truth, const SpacingTuple& spacing, const std::string& units) {
            const auto s = surface_distances(to_mask(pred, spacing), to_mask(truth, spacing), to_units(units));
            py::dict d;
            d["hd95"] = s.hd95;
            d["assd"] = s.assd;
            d["hausdorff"] = s.hausdorff;
            d["distances"] = s.distances;
            return d;
        },
        py::arg("pred"), py::arg("truth"), py::arg("spacing") = unit, py::arg("units") = "mm");
    m.def(
        "hd95",
        [](const MaskArray& pred, const MaskArray& truth, const SpacingTuple& spacing, const std::string& units) {
            return hd95(to_mask(pred, spacing), to_mask(truth, spacing), to_units(units));
        },
        py::arg("pred"), py::arg("truth"), py::arg("spacing") = unit, py::arg("units") = "mm");
    m.def(
        "assd",
        [](const MaskArray& pred, const MaskArray& truth, const SpacingTuple& spacing, const std::string& units) {
            return assd(to_mask(pred, spacing), to_mask(truth, spacing), to_units(units));
        },
        py::arg("pred"), py::arg("truth"), py::arg("spacing") = unit, py::arg("units") = "mm");

    // Synthetic data.
    m.def(
        "generate_center",
        [](const py::dict& spec, std::optional<std::tuple<std::size_t, std::size_t, std::size_t>> dims) {
            VolumeGeometry g;
            if (dims) g.dims = Dims3{std::get<0>(*dims), std::get<1>(*dims), std::get<2>(*dims)};
            const auto samples = generate_center(center_spec_from_json(to_json(spec)), g);
            py::list out;
            for (const auto& s : samples) out.append(py::make_tuple(shaped(s.volume, g.dims), shaped(s.mask.data, g.dims)));
            return out;
        },
        py::arg("spec"), py::arg("dims") = py::none(), "List of (volume, mask) arrays.");
    m.def(
        "split_indices",
        [](std::size_t n, double train_frac, double val_frac, std::uint64_t seed) {
            const auto s = split_indices(n, train_frac, val_frac, seed);
            return py::make_tuple(s.train, s.validation, s.test);
        },
        py::arg("n"), py::arg("train_frac"), py::arg("val_frac"), py::arg("seed"));

    // Experiments.
    m.def(
        "default_experiment_config", [] { return to_py(experiment_config_to_json(default_experiment_config())); },
        "Default configuration as a dict.");
    m.def(
        "run_experiment",
        [](const py::object& config, bool write_outputs) {
            const auto c =
                config.is_none() ? default_experiment_config() : parse_experiment_config(to_json(config));
            ExperimentReport rep;
            {
                py::gil_scoped_release release;
                rep = run_experiment(c, write_outputs);
            }
            py::dict d;
            d["centers"] = rep.centers;
            d["test_counts"] = rep.test_counts;
            py::list rows;
            for (const auto& r : rep.rows) rows.append(row_to_dict(r));
            d["rows"] = rows;
            py::list failures;
            for (const auto& f : rep.failures) failures.append(py::make_tuple(f.arm, f.seed, f.message));
            d["failures"] = failures;
            return d;
        },
        py::arg("config") = py::none(), py::arg("write_outputs") = false,
        "Runs every configured arm and seed; returns metric rows and failures.");
}
