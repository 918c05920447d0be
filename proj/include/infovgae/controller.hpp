#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>

#include "errors.hpp"

namespace infovgae {

// PI controller holding the KL divergence at a setpoint by tuning the KL
// coefficient: beta = kp/(1+exp(e)) - ki * sum(e), e = kl_set - kl. When the
// KL falls below the setpoint the error turns positive and both terms push
// beta down, releasing pressure on the posterior.
struct PiController {
    double kp = 0.01;
    double ki = 1e-4;
    double kl_set = 0.5; // per-node KL target
    double beta_min = 0.0;
    double beta_max = 1.0;
    double integral = 0.0;
    double last_beta = 0.0;

    PiController(double kp_ = 0.01, double ki_ = 1e-4, double kl_set_ = 0.5,
                 double beta_min_ = 0.0, double beta_max_ = 1.0)
        : kp(kp_), ki(ki_), kl_set(kl_set_), beta_min(beta_min_), beta_max(beta_max_) {
        if (!(kp > 0.0) || !(ki > 0.0) || !(kl_set > 0.0))
            throw ConfigError("PiController: gains and setpoint must be positive");
        if (!(beta_min <= beta_max)) throw ConfigError("PiController: empty beta range");
        last_beta = std::clamp(kp / 2.0, beta_min, beta_max);
    }
};

struct ControllerTraceRow {
    std::size_t step;
    double kl_actual;
    double error;
    double beta;
};

// One controller update. The integral is frozen on steps where the output is
// clamped in the direction the error keeps pushing, so it cannot wind up
// against a saturated bound.
inline double update_beta(PiController& c, double kl_actual) {
    if (!std::isfinite(kl_actual) || kl_actual < 0.0)
        throw NumericError("update_beta: kl must be finite and nonnegative");

    double e = c.kl_set - kl_actual;
    double proportional = e >= 0.0 ? c.kp * std::exp(-e) / (1.0 + std::exp(-e))
                                   : c.kp / (1.0 + std::exp(e));
    double candidate_integral = c.integral + e;
    double raw = proportional - c.ki * candidate_integral;
    double beta = std::clamp(raw, c.beta_min, c.beta_max);

    bool winding_low = raw < c.beta_min && e > 0.0;
    bool winding_high = raw > c.beta_max && e < 0.0;
    if (!winding_low && !winding_high) c.integral = candidate_integral;

    c.last_beta = beta;
    return beta;
}

} // namespace infovgae
