#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include "autodiff.hpp"
#include "errors.hpp"
#include "matrix.hpp"
#include "rng.hpp"

namespace infovgae {

struct AdamState {
    double learning_rate = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::size_t step = 0;
    std::vector<DenseMatrix> first_moment;
    std::vector<DenseMatrix> second_moment;

    explicit AdamState(double lr = 0.01, double b1 = 0.9, double b2 = 0.999, double eps = 1e-8)
        : learning_rate(lr), beta1(b1), beta2(b2), epsilon(eps) {
        if (!(b1 > 0.0 && b1 < 1.0) || !(b2 > 0.0 && b2 < 1.0) || !(eps > 0.0))
            throw ContractError("AdamState: invalid hyperparameters");
    }
};

// Bias-corrected Adam update, applied in place to the parameter leaves.
// Gradients are consumed and zeroed afterwards.
inline void adam_step(const std::vector<Var>& params, AdamState& state) {
    if (state.first_moment.empty()) {
        for (const Var& p : params) {
            state.first_moment.emplace_back(p.rows(), p.cols());
            state.second_moment.emplace_back(p.rows(), p.cols());
        }
    }
    if (state.first_moment.size() != params.size())
        throw ContractError("adam_step: parameter count changed");

    state.step += 1;
    double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));

    for (std::size_t i = 0; i < params.size(); ++i) {
        Node& n = params[i].tape->node(params[i].index);
        DenseMatrix& m = state.first_moment[i];
        DenseMatrix& v = state.second_moment[i];
        if (!m.same_shape(n.value)) throw DimensionError("adam_step: moment shape mismatch");
        DenseMatrix& g = n.grad();
        for (std::size_t k = 0; k < n.value.size(); ++k) {
            double gk = g.data[k];
            m.data[k] = state.beta1 * m.data[k] + (1.0 - state.beta1) * gk;
            v.data[k] = state.beta2 * v.data[k] + (1.0 - state.beta2) * gk * gk;
            double mhat = m.data[k] / bc1;
            double vhat = v.data[k] / bc2;
            n.value.data[k] -= state.learning_rate * mhat / (std::sqrt(vhat) + state.epsilon);
        }
        std::fill(g.data.begin(), g.data.end(), 0.0);
        check_finite(n.value, "adam_step");
    }
}

// Central-difference gradient check. `loss_fn` must rebuild the loss graph
// from the current parameter values on each call and be deterministic; the
// tape is reset() around every rebuild, so the parameters must be frozen
// leaves. Returns the max over sampled coordinates of
// |analytic - central| / max(1e-8, |analytic| + |central|).
inline double finite_difference_check(Tape& tape, const std::function<Var()>& loss_fn,
                                      const std::vector<Var>& params, double h,
                                      std::size_t max_coords = 100,
                                      std::uint64_t seed = 0x5eed) {
    if (!(h > 0.0)) throw ContractError("finite_difference_check: h must be positive");

    tape.reset();
    Var loss = loss_fn();
    if (!loss.value().all_finite()) throw NumericError("finite_difference_check: non-finite loss");
    for (const Var& p : params) tape.zero_grad(p);
    tape.backward(loss);

    std::vector<DenseMatrix> analytic;
    analytic.reserve(params.size());
    for (const Var& p : params) analytic.push_back(p.grad());

    std::vector<std::pair<std::size_t, std::size_t>> coords;
    for (std::size_t i = 0; i < params.size(); ++i)
        for (std::size_t k = 0; k < params[i].value().size(); ++k) coords.emplace_back(i, k);

    Rng rng(seed);
    if (coords.size() > max_coords) {
        // partial Fisher-Yates: the first max_coords entries become the sample
        for (std::size_t i = 0; i < max_coords; ++i) {
            std::size_t j = i + rng.index(coords.size() - i);
            std::swap(coords[i], coords[j]);
        }
        coords.resize(max_coords);
    }

    auto eval = [&]() {
        tape.reset();
        double v = loss_fn().value().data[0];
        if (!std::isfinite(v)) throw NumericError("finite_difference_check: non-finite loss");
        return v;
    };

    double worst = 0.0;
    for (auto [pi, k] : coords) {
        double* x = &params[pi].tape->node(params[pi].index).value.data[k];
        double saved = *x;
        *x = saved + h;
        double up = eval();
        *x = saved - h;
        double down = eval();
        *x = saved;
        double central = (up - down) / (2.0 * h);
        double a = analytic[pi].data[k];
        double rel = std::fabs(a - central) / std::max(1e-8, std::fabs(a) + std::fabs(central));
        worst = std::max(worst, rel);
    }
    tape.reset();
    return worst;
}

} // namespace infovgae
