#pragma once

#include <cmath>
#include <cstddef>
#include <utility>
#include <vector>

#include "autodiff.hpp"
#include "errors.hpp"
#include "graph.hpp"
#include "matrix.hpp"
#include "rng.hpp"

namespace infovgae {

inline constexpr double kLogSigmaMin = -6.0; // log-sigma clamp bounds, applied
inline constexpr double kLogSigmaMax = 6.0;  // before every exponentiation

struct ModelConfig {
    std::size_t latent_dim = 2;
    std::vector<std::size_t> hidden_dims = {64};
    std::size_t relations = 1;
    bool rectified = true;         // sample from the rectified posterior
    bool identity_features = true; // implicit X = I; otherwise features are provided
    std::size_t feature_dim = 0;   // input width when features are provided

    void validate() const {
        if (latent_dim < 2) throw ConfigError("latent_dim must be at least 2");
        if (hidden_dims.empty()) throw ConfigError("hidden_dims must be non-empty");
        if (relations == 0) throw ConfigError("relations must be positive");
        if (!identity_features && feature_dim == 0)
            throw ConfigError("feature_dim required with provided features");
    }
};

// Per-layer, per-relation hidden weights plus the two linear output heads.
// dims = [input width, hidden widths..., latent_dim]; layers[l][r] has shape
// dims[l] x dims[l+1], heads have shape dims[end-2] x dims[end-1].
struct EncoderParams {
    std::vector<std::vector<DenseMatrix>> layers;
    DenseMatrix head_mu;
    DenseMatrix head_sigma;
};

inline EncoderParams init_encoder_params(const ModelConfig& cfg, std::size_t n, Rng& rng) {
    cfg.validate();
    std::vector<std::size_t> dims;
    dims.push_back(cfg.identity_features ? n : cfg.feature_dim);
    for (std::size_t d : cfg.hidden_dims) dims.push_back(d);
    dims.push_back(cfg.latent_dim);

    EncoderParams p;
    for (std::size_t l = 0; l + 2 < dims.size(); ++l) {
        std::vector<DenseMatrix> per_relation;
        for (std::size_t r = 0; r < cfg.relations; ++r)
            per_relation.push_back(glorot_uniform(dims[l], dims[l + 1], rng));
        p.layers.push_back(std::move(per_relation));
    }
    std::size_t h = dims[dims.size() - 2], t = dims.back();
    p.head_mu = glorot_uniform(h, t, rng);
    // Fold the mean head nonnegative so initial locations start inside the
    // active half-space; a broadly negative start rectifies to a dead origin
    // that gradient descent escapes only by sampling luck.
    for (double& v : p.head_mu.data) v = std::fabs(v);
    p.head_sigma = glorot_uniform(h, t, rng);
    // Fold the log-sigma head nonpositive so initial scales sit at or below
    // one; sampling noise above the prior scale drowns the reconstruction
    // signal before any structure can form.
    for (double& v : p.head_sigma.data) v = -std::fabs(v);
    return p;
}

// Parameter leaves on a tape; create before Tape::freeze().
struct EncoderVars {
    std::vector<std::vector<Var>> layers;
    Var head_mu;
    Var head_sigma;

    std::vector<Var> all() const {
        std::vector<Var> out;
        for (const auto& layer : layers)
            for (Var v : layer) out.push_back(v);
        out.push_back(head_mu);
        out.push_back(head_sigma);
        return out;
    }
};

inline EncoderVars attach(Tape& t, const EncoderParams& p) {
    EncoderVars v;
    for (const auto& layer : p.layers) {
        std::vector<Var> lv;
        for (const auto& w : layer) lv.push_back(t.leaf(w));
        v.layers.push_back(std::move(lv));
    }
    v.head_mu = t.leaf(p.head_mu);
    v.head_sigma = t.leaf(p.head_sigma);
    return v;
}

inline EncoderParams snapshot(const EncoderVars& v) {
    EncoderParams p;
    for (const auto& layer : v.layers) {
        std::vector<DenseMatrix> lm;
        for (Var w : layer) lm.push_back(w.value());
        p.layers.push_back(std::move(lm));
    }
    p.head_mu = v.head_mu.value();
    p.head_sigma = v.head_sigma.value();
    return p;
}

// Hidden update G^(l+1) = relu(sum_r A_r G^(l) W_r^(l)); the heads propagate
// the shared hidden state once more through sum_r A_r with no activation.
// features == nullptr means identity input, in which case the first layer's
// product A X W collapses to A W and the first-layer weights are N-row.
inline std::pair<Var, Var> encode(Tape& t, const NormalizedGraph& g,
                                  const DenseMatrix* features, const EncoderVars& w) {
    std::size_t n = g.num_nodes;
    if (w.layers.empty()) throw ContractError("encode: no hidden layers");
    for (const auto& layer : w.layers)
        if (layer.size() != g.adj.size())
            throw ContractError("encode: relation count mismatch");
    if (features && features->rows != n)
        throw ContractError("encode: feature rows must equal node count");
    if (!features && w.layers[0][0].rows() != n)
        throw ContractError("encode: identity features need N-row first-layer weights");

    Var x; // provided feature constant, shared across relations
    if (features) x = t.constant(*features);

    Var h;
    for (std::size_t l = 0; l < w.layers.size(); ++l) {
        Var acc;
        for (std::size_t r = 0; r < g.adj.size(); ++r) {
            Var xw = l > 0        ? matmul(h, w.layers[l][r])
                     : features   ? matmul(x, w.layers[l][r])
                                  : w.layers[l][r];
            Var m = spmm(g.adj[r], xw);
            acc = r == 0 ? m : add(acc, m);
        }
        h = relu(acc);
    }

    Var hm = matmul(h, w.head_mu);
    Var hs = matmul(h, w.head_sigma);
    Var mu, ls;
    for (std::size_t r = 0; r < g.adj.size(); ++r) {
        Var pm = spmm(g.adj[r], hm);
        Var ps = spmm(g.adj[r], hs);
        mu = r == 0 ? pm : add(mu, pm);
        ls = r == 0 ? ps : add(ls, ps);
    }
    return {mu, ls};
}

struct LatentPosterior {
    Var mu;
    Var log_sigma;
    Var z;
    DenseMatrix noise; // the epsilon draw, kept for reproducibility
};

// Reparameterized draw z = mu + exp(log_sigma) . eps, rectified to max(z, 0)
// when requested. Gradients flow through mu and log_sigma; the rectifier uses
// the zero-at-kink subgradient convention.
inline LatentPosterior sample_latent(Var mu, Var log_sigma, Rng& rng, bool rectified) {
    Tape& t = *mu.tape;
    if (!mu.value().same_shape(log_sigma.value()))
        throw DimensionError("sample_latent: shape mismatch");
    DenseMatrix eps(mu.rows(), mu.cols());
    for (double& v : eps.data) v = rng.normal();
    Var sigma = exp(clamp(log_sigma, kLogSigmaMin, kLogSigmaMax));
    Var z = add(mu, elementwise_mul(sigma, t.constant(eps)));
    if (rectified) z = max_with_zero(z);
    return {mu, log_sigma, z, std::move(eps)};
}

// Same sampling path with a caller-supplied noise matrix.
inline LatentPosterior sample_latent_with_noise(Var mu, Var log_sigma, DenseMatrix eps,
                                                bool rectified) {
    Tape& t = *mu.tape;
    if (!mu.value().same_shape(log_sigma.value()) || !mu.value().same_shape(eps))
        throw DimensionError("sample_latent: shape mismatch");
    Var sigma = exp(clamp(log_sigma, kLogSigmaMin, kLogSigmaMax));
    Var z = add(mu, elementwise_mul(sigma, t.constant(eps)));
    if (rectified) z = max_with_zero(z);
    return {mu, log_sigma, z, std::move(eps)};
}

// P = sigmoid(Z Z^T), entrywise edge probabilities. Symmetric bitwise.
inline Var decode_all(Var z) { return sigmoid_stable(matmul(z, transpose(z))); }

// Weighted full-matrix binary cross-entropy against the {0,1} target:
// -norm * mean over all N^2 pairs of [pos_weight*t*log p + (1-t)*log(1-p)].
inline Var reconstruction_loss(Var p, const SparseMatrix& target, double pos_weight,
                               double norm) {
    Tape& t = *p.tape;
    if (p.rows() != target.rows || p.cols() != target.cols)
        throw DimensionError("reconstruction_loss: shape mismatch");
    Var tgt = t.constant(densify(target));
    Var ones = t.constant(DenseMatrix(p.rows(), p.cols(), 1.0));
    Var pos = elementwise_mul(tgt, log_clamped(p));
    Var neg = elementwise_mul(sub(ones, tgt), log_clamped(sub(ones, p)));
    Var weighted = add(scalar_mul(pos, pos_weight), neg);
    return scalar_mul(mean(weighted), -norm);
}

inline double positive_weight(const NormalizedGraph& g) {
    double n2 = static_cast<double>(g.num_nodes) * static_cast<double>(g.num_nodes);
    double m = static_cast<double>(g.positive_count);
    return (n2 - m) / m;
}

// Closed-form KL of the underlying Gaussian posterior against a standard
// normal prior, averaged per node so the controller setpoint does not scale
// with graph size: (1/N) sum_i sum_k 0.5*(mu^2 + sigma^2 - 1 - 2 log sigma).
inline Var kl_divergence(Var mu, Var log_sigma) {
    Tape& t = *mu.tape;
    if (!mu.value().same_shape(log_sigma.value()))
        throw DimensionError("kl_divergence: shape mismatch");
    Var ls = clamp(log_sigma, kLogSigmaMin, kLogSigmaMax);
    Var sigma2 = exp(scalar_mul(ls, 2.0));
    Var mu2 = elementwise_mul(mu, mu);
    Var ones = t.constant(DenseMatrix(mu.rows(), mu.cols(), 1.0));
    Var inner = sub(sub(add(mu2, sigma2), ones), scalar_mul(ls, 2.0));
    return scalar_mul(sum(inner), 0.5 / static_cast<double>(mu.rows()));
}

} // namespace infovgae
