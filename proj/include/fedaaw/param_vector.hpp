#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

namespace fedaaw {

/// Flat model parameters, the unit exchanged between clients and the server.
/// `layout_id` binds the flat ordering to one trainer architecture.
struct ParamVector {
    std::vector<double> values;
    std::string layout_id;

    std::size_t size() const { return values.size(); }

    /// Index of the first NaN/Inf entry, if any.
    std::optional<std::size_t> first_non_finite() const {
        for (std::size_t i = 0; i < values.size(); ++i) {
            if (!std::isfinite(values[i])) return i;
        }
        return std::nullopt;
    }

    friend bool operator==(const ParamVector&, const ParamVector&) = default;
};

}  // namespace fedaaw
