#pragma once

#include <cstddef>
#include <vector>

#include "autodiff.hpp"
#include "errors.hpp"
#include "matrix.hpp"
#include "rng.hpp"

namespace infovgae {

// Two affine layers with leaky-relu (slope 0.2) between; the output is a raw
// logit so the density ratio log(phi/(1-phi)) is the logit itself, with no
// cancellation at saturation.
struct DiscriminatorParams {
    DenseMatrix w1; // T x hidden
    DenseMatrix b1; // 1 x hidden
    DenseMatrix w2; // hidden x 1
    DenseMatrix b2; // 1 x 1
};

inline DiscriminatorParams init_discriminator(std::size_t latent_dim, std::size_t hidden,
                                              Rng& rng) {
    DiscriminatorParams d;
    d.w1 = glorot_uniform(latent_dim, hidden, rng);
    d.b1 = DenseMatrix(1, hidden);
    d.w2 = glorot_uniform(hidden, 1, rng);
    d.b2 = DenseMatrix(1, 1);
    return d;
}

struct DiscriminatorVars {
    Var w1, b1, w2, b2;
    std::vector<Var> all() const { return {w1, b1, w2, b2}; }
};

inline DiscriminatorVars attach(Tape& t, const DiscriminatorParams& p) {
    return {t.leaf(p.w1), t.leaf(p.b1), t.leaf(p.w2), t.leaf(p.b2)};
}

inline DiscriminatorParams snapshot(const DiscriminatorVars& v) {
    return {v.w1.value(), v.b1.value(), v.w2.value(), v.b2.value()};
}

// Per-row logits; biases broadcast through a ones-column product so their
// gradients arrive through the ordinary matmul rule.
inline Var discriminator_logit(Var rows, const DiscriminatorVars& d) {
    Tape& t = *rows.tape;
    Var ones = t.constant(DenseMatrix(rows.rows(), 1, 1.0));
    Var h = leaky_relu(add(matmul(rows, d.w1), matmul(ones, d.b1)), 0.2);
    return add(matmul(h, d.w2), matmul(ones, d.b2));
}

// Full-batch pairing of joint rows with their per-column shuffled counterpart.
struct TcBatch {
    DenseMatrix joint;
    DenseMatrix shuffled;
};

inline TcBatch make_tc_batch(const DenseMatrix& z, Rng& rng) {
    if (z.rows < 2) throw ContractError("make_tc_batch: need at least 2 rows");
    TcBatch b{z, DenseMatrix(z.rows, z.cols)};
    for (std::size_t c = 0; c < z.cols; ++c) {
        std::vector<std::size_t> p = rng.permutation(z.rows);
        for (std::size_t i = 0; i < z.rows; ++i) b.shuffled(i, c) = z(p[i], c);
    }
    return b;
}

// Mean logit over rows: the density-ratio estimate of total correlation.
// The discriminator enters as constants, so gradient flows into z only.
inline Var tc_penalty(Var z, const DiscriminatorParams& d) {
    Tape& t = *z.tape;
    DiscriminatorVars cv{t.constant(d.w1), t.constant(d.b1), t.constant(d.w2),
                         t.constant(d.b2)};
    return mean(discriminator_logit(z, cv));
}

// Binary cross-entropy with joint rows labeled 1 and shuffled rows labeled 0.
// The batch holds detached values, so gradient flows into the discriminator
// only.
inline Var discriminator_loss(const TcBatch& batch, const DiscriminatorVars& d) {
    Tape& t = *d.w1.tape;
    Var joint_prob = sigmoid_stable(discriminator_logit(t.constant(batch.joint), d));
    Var shuf_prob = sigmoid_stable(discriminator_logit(t.constant(batch.shuffled), d));
    Var ones = t.constant(DenseMatrix(batch.shuffled.rows, 1, 1.0));
    Var lj = log_clamped(joint_prob);
    Var ls = log_clamped(sub(ones, shuf_prob));
    return scalar_mul(add(mean(lj), mean(ls)), -0.5);
}

} // namespace infovgae
