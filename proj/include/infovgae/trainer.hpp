#pragma once

#include <chrono>
#include <cstdint>
#include <limits>
#include <set>
#include <sstream>
#include <vector>

#include "controller.hpp"
#include "errors.hpp"
#include "graph.hpp"
#include "model.hpp"
#include "optim.hpp"
#include "tc.hpp"

namespace infovgae {

struct TrainConfig {
    std::size_t epochs = 500;
    std::uint64_t seed = 0;
    double lr_vae = 0.2;
    double lr_disc = 0.001;
    double lambda_tc = 0.5;
    std::size_t disc_hidden = 64;

    double pi_kp = 0.01;
    double pi_ki = 1e-4;
    double pi_kl_set = 2.5;

    bool no_tc = false;     // drop the total-correlation term and discriminator
    bool no_pi = false;     // fix beta = 1
    bool gaussian = false;  // sample without rectification

    std::size_t log_every = 1;
    double early_stop_delta = 1e-5;
    std::size_t early_stop_patience = 50;

    ModelConfig model;

    void validate() const {
        if (epochs < 1) throw ConfigError("epochs must be at least 1");
        if (!(lambda_tc >= 0.0)) throw ConfigError("lambda_tc must be nonnegative");
        if (!(lr_vae > 0.0) || !(lr_disc > 0.0)) throw ConfigError("learning rates must be positive");
        if (log_every < 1) throw ConfigError("log_every must be at least 1");
        model.validate();
    }
};

struct TrainStepRecord {
    std::size_t step;
    double recon;
    double kl;
    double beta;
    double tc;
    double disc;
    double wall_ms;
};

struct TrainTrace {
    std::vector<TrainStepRecord> rows;
};

struct TrainResult {
    EncoderParams encoder;
    DiscriminatorParams discriminator;
    TrainTrace trace;
    std::vector<ControllerTraceRow> controller_trace;
};

// Model settings with the ablation switches folded in.
inline ModelConfig effective_model(const TrainConfig& cfg) {
    ModelConfig m = cfg.model;
    if (cfg.gaussian) m.rectified = false;
    return m;
}

// Joint loop: per step, one Adam update of the encoder on
// recon + beta*KL + lambda*TC, then one Adam update of the discriminator on
// the detached latent batch, then a controller update fed the EMA-smoothed
// KL. Deterministic given the seed; wall_ms is the only nondeterministic
// trace column.
inline TrainResult train(const NormalizedGraph& g, const TrainConfig& cfg,
                         const DenseMatrix* features = nullptr) {
    cfg.validate();
    Rng rng(cfg.seed);
    EncoderParams ep0 = init_encoder_params(cfg.model, g.num_nodes, rng);
    DiscriminatorParams dp0 = init_discriminator(cfg.model.latent_dim, cfg.disc_hidden, rng);

    Tape tape;
    EncoderVars enc = attach(tape, ep0);
    DiscriminatorVars disc = attach(tape, dp0);
    tape.freeze();

    AdamState opt_vae(cfg.lr_vae), opt_disc(cfg.lr_disc);
    PiController pi(cfg.pi_kp, cfg.pi_ki, cfg.pi_kl_set);
    double beta = cfg.no_pi ? 1.0 : pi.last_beta;
    double ema_kl = 0.0;
    bool ema_started = false;
    double pos_weight = positive_weight(g);
    bool rectified = effective_model(cfg).rectified;

    TrainResult out;
    double best_ema = std::numeric_limits<double>::infinity();
    double best_raw = std::numeric_limits<double>::infinity();
    double ema_recon = 0.0;
    std::size_t stale = 0;
    EncoderParams best_encoder;
    DiscriminatorParams best_disc;

    for (std::size_t step = 0; step < cfg.epochs; ++step) {
        auto started = std::chrono::steady_clock::now();
        double recon_v = 0.0, kl_v = 0.0, tc_v = 0.0, disc_v = 0.0;
        try {
            tape.reset();
            auto [mu, ls] = encode(tape, g, features, enc);
            LatentPosterior lp = sample_latent(mu, ls, rng, rectified);
            Var recon = reconstruction_loss(decode_all(lp.z), g.target, pos_weight, 1.0);
            Var kl = kl_divergence(mu, ls);
            recon_v = recon.value()(0, 0);
            kl_v = kl.value()(0, 0);
            Var loss = add(recon, scalar_mul(kl, beta));
            if (!cfg.no_tc) {
                Var tc = tc_penalty(lp.z, snapshot(disc));
                tc_v = tc.value()(0, 0);
                loss = add(loss, scalar_mul(tc, cfg.lambda_tc));
            }
            DenseMatrix z_detached = lp.z.value();
            tape.backward(loss);
            adam_step(enc.all(), opt_vae);

            if (!cfg.no_tc) {
                tape.reset();
                Var dl = discriminator_loss(make_tc_batch(z_detached, rng), disc);
                disc_v = dl.value()(0, 0);
                tape.backward(dl);
                adam_step(disc.all(), opt_disc);
            }
        } catch (const NumericError& err) {
            std::ostringstream msg;
            msg << "training aborted at step " << step << ": " << err.what()
                << " (recon=" << recon_v << ", kl=" << kl_v << ", beta=" << beta
                << ", tc=" << tc_v << ", disc=" << disc_v << ")";
            throw NumericError(msg.str());
        }

        double beta_used = beta;
        if (!cfg.no_pi) {
            ema_kl = ema_started ? 0.9 * ema_kl + 0.1 * kl_v : kl_v;
            ema_started = true;
            double e = pi.kl_set - ema_kl;
            beta = update_beta(pi, ema_kl);
            out.controller_trace.push_back({step, ema_kl, e, beta});
        }

        // Early stopping watches an EMA of the training reconstruction: the
        // raw per-step value carries sampling noise orders of magnitude above
        // early_stop_delta, so records on it measure luck, not progress. The
        // kept parameters are still the raw-best step, which marks the true
        // optimum while the EMA trails it.
        ema_recon = step == 0 ? recon_v : 0.9 * ema_recon + 0.1 * recon_v;
        double wall_ms = std::chrono::duration<double, std::milli>(
                             std::chrono::steady_clock::now() - started)
                             .count();
        bool last = step + 1 == cfg.epochs;
        bool stopping = false;
        if (recon_v < best_raw) {
            best_raw = recon_v;
            best_encoder = snapshot(enc);
            best_disc = snapshot(disc);
        }
        if (best_ema - ema_recon >= cfg.early_stop_delta) {
            best_ema = ema_recon;
            stale = 0;
        } else if (++stale >= cfg.early_stop_patience) {
            stopping = true;
        }
        if (step % cfg.log_every == 0 || last || stopping)
            out.trace.rows.push_back({step, recon_v, kl_v, beta_used, tc_v, disc_v, wall_ms});
        if (stopping) break;
    }

    // The returned parameters are the raw-best snapshot, not the last
    // iterate, which trails the optimum by up to `patience` steps.
    out.encoder = std::move(best_encoder);
    out.discriminator = std::move(best_disc);
    return out;
}

enum class EmbedMode { mean, sample };

// Downstream embedding: the rectified posterior mean by default, or a single
// seeded draw. Rectification follows the model flag so the gaussian ablation
// reads its own latent space.
inline DenseMatrix embed(const NormalizedGraph& g, const EncoderParams& params,
                         const ModelConfig& model, EmbedMode mode = EmbedMode::mean,
                         std::uint64_t seed = 0, const DenseMatrix* features = nullptr) {
    Tape tape;
    EncoderVars enc;
    for (const auto& layer : params.layers) {
        std::vector<Var> lv;
        for (const auto& w : layer) lv.push_back(tape.constant(w));
        enc.layers.push_back(std::move(lv));
    }
    enc.head_mu = tape.constant(params.head_mu);
    enc.head_sigma = tape.constant(params.head_sigma);

    auto [mu, ls] = encode(tape, g, features, enc);
    if (mode == EmbedMode::sample) {
        Rng rng(seed);
        return sample_latent(mu, ls, rng, model.rectified).z.value();
    }
    DenseMatrix m = mu.value();
    if (model.rectified)
        for (double& v : m.data) v = v > 0.0 ? v : 0.0;
    return m;
}

// Shared-counterpart counts for one side: entry (i, j) is the number of
// distinct opposite-side nodes both i and j interacted with (any relation,
// weight > 0). Zero diagonal.
inline DenseMatrix projection_weights(const Bhin& g, bool users) {
    std::size_t n = users ? g.num_users() : g.num_claims();
    std::vector<std::set<std::size_t>> touched(n);
    for (const auto& e : g.edges) {
        if (e.weight == 0.0) continue;
        if (users)
            touched[e.user].insert(e.claim);
        else
            touched[e.claim].insert(e.user);
    }
    DenseMatrix w(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            std::size_t shared = 0;
            for (std::size_t c : touched[i]) shared += touched[j].count(c);
            w(i, j) = w(j, i) = static_cast<double>(shared);
        }
    return w;
}

// One-mode projection graph over users or claims, normalized the same way as
// the bipartite graph.
inline NormalizedGraph project_side(const Bhin& g, bool users) {
    DenseMatrix w = projection_weights(g, users);
    std::size_t n = w.rows;

    std::vector<SparseMatrix::Entry> adj_trips, tgt_trips;
    for (std::size_t i = 0; i < n; ++i) {
        adj_trips.push_back({i, i, 1.0});
        tgt_trips.push_back({i, i, 1.0});
    }
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            if (w(i, j) == 0.0) continue;
            adj_trips.push_back({i, j, w(i, j)});
            adj_trips.push_back({j, i, w(i, j)});
            tgt_trips.push_back({i, j, 1.0});
            tgt_trips.push_back({j, i, 1.0});
        }

    NormalizedGraph out;
    out.num_nodes = n;
    out.num_users = users ? n : 0;
    SparseMatrix a = SparseMatrix::from_triplets(n, n, std::move(adj_trips));
    std::vector<double> degree(n, 0.0);
    for (const auto& e : a.entries) degree[e.row] += e.value;
    for (auto& e : a.entries) e.value /= std::sqrt(degree[e.row] * degree[e.col]);
    out.adj = {std::move(a)};
    out.target = SparseMatrix::from_triplets(n, n, std::move(tgt_trips));
    out.positive_count = out.target.nnz();
    return out;
}

struct SeparateResult {
    DenseMatrix user_embedding;
    DenseMatrix claim_embedding;
    TrainResult user_run;
    TrainResult claim_run;
};

// Ablation path: train one model per projection instead of one joint model.
inline SeparateResult train_separate(const Bhin& g, const TrainConfig& cfg) {
    NormalizedGraph ug = project_side(g, true);
    NormalizedGraph cg = project_side(g, false);
    ModelConfig model = effective_model(cfg);
    SeparateResult out;
    out.user_run = train(ug, cfg);
    out.claim_run = train(cg, cfg);
    out.user_embedding = embed(ug, out.user_run.encoder, model);
    out.claim_embedding = embed(cg, out.claim_run.encoder, model);
    return out;
}

} // namespace infovgae
