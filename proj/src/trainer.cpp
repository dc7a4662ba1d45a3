#include "fedaaw/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <fmt/format.h>

#include "fedaaw/errors.hpp"
#include "fedaaw/losses.hpp"

namespace fedaaw {
namespace {

// Offsets of the four parameter blocks.
struct Layout {
    std::size_t v, h;
    std::size_t w1, b1, w2, b2, end;

    explicit Layout(const TrainerArchitecture& a) : v(a.input_voxels), h(a.hidden_units) {
        w1 = 0;
        b1 = w1 + h * v;
        w2 = b1 + h;
        b2 = w2 + v * h;
        end = b2 + v;
    }
};

void check_layout(const TrainerArchitecture& arch, const ParamVector& params) {
    if (arch.input_voxels == 0 || arch.hidden_units == 0) throw InvalidInput("trainer: empty architecture");
    if (params.size() != arch.parameter_count() || params.layout_id != arch.layout_id()) {
        throw InvalidInput(fmt::format("trainer: parameters '{}' ({} values) do not match layout '{}' ({} values)",
                                       params.layout_id, params.size(), arch.layout_id(), arch.parameter_count()));
    }
}

double sigmoid(double z) {
    const double p = z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
    // Keep the output in the open interval even where exp saturates.
    return std::clamp(p, std::numeric_limits<double>::min(), std::nextafter(1.0, 0.0));
}

struct Activations {
    std::vector<double> hidden_pre;
    std::vector<double> hidden;
    std::vector<double> prob;
};

void run_forward(const Layout& L, const double* p, std::span<const double> x, Activations& act) {
    act.hidden_pre.assign(L.h, 0.0);
    act.hidden.assign(L.h, 0.0);
    act.prob.assign(L.v, 0.0);
    for (std::size_t j = 0; j < L.h; ++j) {
        const double* row = p + L.w1 + j * L.v;
        double acc = p[L.b1 + j];
        for (std::size_t k = 0; k < L.v; ++k) acc += row[k] * x[k];
        act.hidden_pre[j] = acc;
        act.hidden[j] = acc > 0.0 ? acc : 0.0;
    }
    for (std::size_t i = 0; i < L.v; ++i) {
        const double* row = p + L.w2 + i * L.h;
        double acc = p[L.b2 + i];
        for (std::size_t j = 0; j < L.h; ++j) acc += row[j] * act.hidden[j];
        act.prob[i] = sigmoid(acc);
    }
}

void check_volume(const Layout& L, std::span<const double> volume) {
    if (volume.size() != L.v) {
        throw InvalidInput(fmt::format("trainer: volume has {} voxels, network expects {}", volume.size(), L.v));
    }
    for (const double x : volume) {
        if (!std::isfinite(x)) throw InvalidInput("trainer: volume contains a non-finite value");
    }
}

void check_block(const char* what, const char* name, const double* begin, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
        if (!std::isfinite(begin[i])) {
            throw NonFiniteError(fmt::format("trainer: non-finite {} in parameter block {} at offset {}", what, name, i));
        }
    }
}

void check_blocks(const Layout& L, const char* what, const double* p) {
    check_block(what, "W1", p + L.w1, L.b1 - L.w1);
    check_block(what, "b1", p + L.b1, L.w2 - L.b1);
    check_block(what, "W2", p + L.w2, L.b2 - L.w2);
    check_block(what, "b2", p + L.b2, L.end - L.b2);
}

}  // namespace

std::string TrainerArchitecture::layout_id() const { return fmt::format("mlp-v{}-h{}", input_voxels, hidden_units); }

OptimizerState OptimizerState::zeros(std::size_t parameter_count, const AdamWConfig& hyper) {
    OptimizerState s;
    s.m.assign(parameter_count, 0.0);
    s.v.assign(parameter_count, 0.0);
    s.hyper = hyper;
    return s;
}

ParamVector init_params(const TrainerArchitecture& arch, Rng& rng) {
    const Layout L(arch);
    ParamVector p{std::vector<double>(L.end, 0.0), arch.layout_id()};
    const double r = std::sqrt(6.0 / static_cast<double>(L.v + L.h));
    for (std::size_t i = L.w1; i < L.b1; ++i) p.values[i] = rng.uniform(-r, r);
    for (std::size_t i = L.w2; i < L.b2; ++i) p.values[i] = rng.uniform(-r, r);
    return p;
}

std::vector<double> forward(const TrainerArchitecture& arch, const ParamVector& params, std::span<const double> volume) {
    check_layout(arch, params);
    const Layout L(arch);
    check_volume(L, volume);
    Activations act;
    run_forward(L, params.values.data(), volume, act);
    return std::move(act.prob);
}

LossAndGrad loss_and_grad(const TrainerArchitecture& arch,
                          const ParamVector& params,
                          std::span<const Sample* const> batch) {
    check_layout(arch, params);
    if (batch.empty()) throw InvalidInput("loss_and_grad: empty batch");
    const Layout L(arch);
    const double* p = params.values.data();
    check_blocks(L, "value", p);

    LossAndGrad out{0.0, ParamVector{std::vector<double>(L.end, 0.0), params.layout_id}};
    double* g = out.grad.values.data();
    Activations act;
    std::vector<double> dprob(L.v);
    std::vector<double> dz(L.v);
    std::vector<double> dh(L.h);
    const double inv_batch = 1.0 / static_cast<double>(batch.size());

    for (const Sample* sample : batch) {
        check_volume(L, sample->volume);
        if (sample->mask.data.size() != L.v) throw InvalidInput("loss_and_grad: mask size does not match network");
        run_forward(L, p, sample->volume, act);
        for (const double y : act.prob) {
            if (!std::isfinite(y)) throw NonFiniteError("loss_and_grad: network output is not finite");
        }
        const double loss = dice_bce_loss_and_grad(sample->mask.data, act.prob, dprob);
        if (!std::isfinite(loss)) throw NonFiniteError("loss_and_grad: non-finite loss");
        out.loss += loss * inv_batch;

        for (std::size_t i = 0; i < L.v; ++i) {
            const double y = act.prob[i];
            dz[i] = dprob[i] * y * (1.0 - y) * inv_batch;
        }
        std::fill(dh.begin(), dh.end(), 0.0);
        for (std::size_t i = 0; i < L.v; ++i) {
            const double d = dz[i];
            g[L.b2 + i] += d;
            const double* w_row = p + L.w2 + i * L.h;
            double* g_row = g + L.w2 + i * L.h;
            for (std::size_t j = 0; j < L.h; ++j) {
                g_row[j] += d * act.hidden[j];
                dh[j] += w_row[j] * d;
            }
        }
        for (std::size_t j = 0; j < L.h; ++j) {
            if (act.hidden_pre[j] <= 0.0) continue;
            const double d = dh[j];
            g[L.b1 + j] += d;
            double* g_row = g + L.w1 + j * L.v;
            for (std::size_t k = 0; k < L.v; ++k) g_row[k] += d * sample->volume[k];
        }
    }

    check_blocks(L, "gradient", g);
    return out;
}

LossAndGrad loss_and_grad(const TrainerArchitecture& arch, const ParamVector& params, std::span<const Sample> batch) {
    std::vector<const Sample*> ptrs;
    ptrs.reserve(batch.size());
    for (const auto& s : batch) ptrs.push_back(&s);
    return loss_and_grad(arch, params, std::span<const Sample* const>(ptrs));
}

void adamw_step(std::span<double> params, std::span<const double> grad, OptimizerState& state) {
    if (grad.size() != params.size() || state.m.size() != params.size() || state.v.size() != params.size()) {
        throw InvalidInput(fmt::format("adamw_step: length mismatch (params {}, grad {}, state {}/{})", params.size(),
                                       grad.size(), state.m.size(), state.v.size()));
    }
    const auto& h = state.hyper;
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double bias1 = 1.0 - std::pow(h.beta1, t);
    const double bias2 = 1.0 - std::pow(h.beta2, t);
    const double decay = h.learning_rate * h.weight_decay;

    for (std::size_t i = 0; i < params.size(); ++i) {
        const double gi = grad[i];
        state.m[i] = h.beta1 * state.m[i] + (1.0 - h.beta1) * gi;
        state.v[i] = h.beta2 * state.v[i] + (1.0 - h.beta2) * gi * gi;
        const double m_hat = state.m[i] / bias1;
        const double v_hat = state.v[i] / bias2;
        params[i] = params[i] - h.learning_rate * m_hat / (std::sqrt(v_hat) + h.epsilon) - decay * params[i];
    }
}

LocalTrainResult train_local(const TrainerArchitecture& arch,
                             ParamVector params,
                             std::span<const Sample> train,
                             int epochs,
                             std::size_t batch_size,
                             OptimizerState& state,
                             Rng& rng) {
    if (train.empty()) throw InvalidInput("train_local: empty training split");
    if (epochs < 0) throw InvalidInput("train_local: negative epoch count");
    if (batch_size == 0) throw InvalidInput("train_local: batch size must be positive");
    check_layout(arch, params);

    LocalTrainResult out;
    std::vector<std::size_t> order(train.size());
    std::vector<const Sample*> batch;
    for (int epoch = 0; epoch < epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        rng.shuffle(std::span<std::size_t>(order));
        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < order.size(); start += batch_size) {
            const std::size_t stop = std::min(start + batch_size, order.size());
            batch.clear();
            for (std::size_t i = start; i < stop; ++i) batch.push_back(&train[order[i]]);
            const auto lg = loss_and_grad(arch, params, batch);
            epoch_loss += lg.loss * static_cast<double>(batch.size());
            adamw_step(params.values, lg.grad.values, state);
        }
        out.final_epoch_loss = epoch_loss / static_cast<double>(train.size());
    }
    out.params = std::move(params);
    return out;
}

}  // namespace fedaaw
