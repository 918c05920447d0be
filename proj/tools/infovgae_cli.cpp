#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "infovgae/infovgae.hpp"

using namespace infovgae;
namespace fs = std::filesystem;

namespace {

struct DatasetBundle {
    Bhin graph;
    LabelSet labels;
    std::vector<double> ideology; // empty when no ideology file is configured
};

// Reconstructs the working dataset from the config alone, so every
// subcommand sees the same graph without intermediate files.
DatasetBundle load_dataset(const RunConfig& cfg) {
    std::vector<InteractionRecord> records;
    std::map<std::string, std::string> user_map, claim_map;
    switch (cfg.dataset) {
    case DatasetKind::edgelist:
        records = load_edgelist(cfg.edgelist_path);
        break;
    case DatasetKind::rollcall: {
        RollcallData rc = load_rollcall(cfg.rollcall_members_path, cfg.rollcall_votes_path);
        records = std::move(rc.records);
        user_map = std::move(rc.user_labels);
        claim_map = std::move(rc.claim_labels);
        break;
    }
    case DatasetKind::synth: {
        SyntheticData sd = generate_synthetic(cfg.synth.users, cfg.synth.claims,
                                              cfg.synth.p_in, cfg.synth.p_out, cfg.seed);
        records = std::move(sd.records);
        user_map = std::move(sd.user_labels);
        claim_map = std::move(sd.claim_labels);
        break;
    }
    }
    if (!cfg.user_labels_path.empty())
        for (const auto& [id, label] : load_labels(cfg.user_labels_path)) user_map[id] = label;
    if (!cfg.claim_labels_path.empty())
        for (const auto& [id, label] : load_labels(cfg.claim_labels_path))
            claim_map[id] = label;

    DatasetBundle out;
    out.graph = build_bhin(records, cfg.min_degree);
    out.labels = make_label_set(out.graph, user_map, claim_map);
    if (!cfg.ideology_path.empty())
        out.ideology = ideology_vector(out.graph, load_ideology(cfg.ideology_path));
    return out;
}

RunConfig load_prepared(const std::string& config_path, DatasetBundle& d) {
    RunConfig cfg = load_run_config(config_path);
    d = load_dataset(cfg);
    cfg.train.model.relations = d.graph.relations.size();
    return cfg;
}

std::string default_checkpoint(const RunConfig& cfg) {
    return (fs::path(cfg.output_dir) / "checkpoint.ckpt").string();
}

DenseMatrix load_embedding(const RunConfig& cfg, const DatasetBundle& d,
                           const std::string& ckpt_path, EmbedMode mode,
                           std::uint64_t sample_seed) {
    EncoderParams enc = encoder_from_checkpoint(load_checkpoint(ckpt_path));
    return embed(normalize(d.graph), enc, effective_model(cfg.train), mode, sample_seed);
}

int cmd_train(const std::string& config_path) {
    DatasetBundle d;
    RunConfig cfg = load_prepared(config_path, d);
    fs::create_directories(cfg.output_dir);

    TrainResult res = train(normalize(d.graph), cfg.train);
    save_checkpoint(default_checkpoint(cfg),
                    make_checkpoint(res.encoder, cfg.train.no_tc ? nullptr : &res.discriminator,
                                    cfg.echo_without_paths()));
    write_trace_csv((fs::path(cfg.output_dir) / "trace.csv").string(), res.trace);
    if (!cfg.train.no_pi)
        write_controller_trace_csv((fs::path(cfg.output_dir) / "controller.csv").string(),
                                   res.controller_trace);

    const TrainStepRecord& last = res.trace.rows.back();
    std::printf("trained %zu nodes (%zu users), stopped after step %zu\n",
                d.graph.num_nodes(), d.graph.num_users(), last.step);
    std::printf("final recon=%.6f kl=%.6f beta=%.4f\n", last.recon, last.kl, last.beta);
    std::printf("wrote %s\n", default_checkpoint(cfg).c_str());
    return 0;
}

int cmd_embed(const std::string& config_path, std::string ckpt_path, const std::string& mode,
              std::int64_t sample_seed, std::string out_path) {
    DatasetBundle d;
    RunConfig cfg = load_prepared(config_path, d);
    if (ckpt_path.empty()) ckpt_path = default_checkpoint(cfg);
    if (out_path.empty()) out_path = (fs::path(cfg.output_dir) / "embedding.csv").string();
    if (mode != "mean" && mode != "sample")
        throw ConfigError("--mode must be mean or sample");
    std::uint64_t seed = sample_seed < 0 ? cfg.seed : static_cast<std::uint64_t>(sample_seed);
    DenseMatrix z = load_embedding(cfg, d, ckpt_path,
                                   mode == "mean" ? EmbedMode::mean : EmbedMode::sample, seed);

    std::string csv = "node_id,node_type";
    for (std::size_t t = 0; t < z.cols; ++t) csv += ",z" + std::to_string(t);
    csv += "\n";
    for (std::size_t i = 0; i < z.rows; ++i) {
        bool user = i < d.graph.num_users();
        csv += (user ? d.graph.user_ids[i] : d.graph.claim_ids[i - d.graph.num_users()]);
        csv += user ? ",user" : ",claim";
        for (std::size_t t = 0; t < z.cols; ++t) csv += "," + detail::g17(z(i, t));
        csv += "\n";
    }
    fs::path parent = fs::path(out_path).parent_path();
    if (!parent.empty()) fs::create_directories(parent);
    write_file_atomic(out_path, csv);
    std::printf("wrote %s (%zu x %zu)\n", out_path.c_str(), z.rows, z.cols);
    return 0;
}

int cmd_evaluate(const std::string& config_path, std::string ckpt_path) {
    DatasetBundle d;
    RunConfig cfg = load_prepared(config_path, d);
    if (ckpt_path.empty()) ckpt_path = default_checkpoint(cfg);
    DenseMatrix z = load_embedding(cfg, d, ckpt_path, EmbedMode::mean, cfg.seed);

    MetricsReport rep = evaluate(z, d.graph.num_users(), d.labels,
                                 d.ideology.empty() ? nullptr : &d.ideology);
    fs::create_directories(cfg.output_dir);
    std::string txt_path = (fs::path(cfg.output_dir) / "metrics.txt").string();
    write_metrics_txt(txt_path, rep);
    write_metrics_json((fs::path(cfg.output_dir) / "metrics.json").string(), rep);
    if (cfg.k_axes >= 2)
        emit_scatter((fs::path(cfg.output_dir) / "scatter.csv").string(),
                     (fs::path(cfg.output_dir) / "scatter.svg").string(), z,
                     select_axes(z, cfg.k_axes), d.graph, d.labels);
    std::fputs(read_file(txt_path).c_str(), stdout);
    return 0;
}

int cmd_rank(const std::string& config_path, std::string ckpt_path, std::size_t axis,
             std::size_t top, const std::string& filter_name) {
    DatasetBundle d;
    RunConfig cfg = load_prepared(config_path, d);
    if (ckpt_path.empty()) ckpt_path = default_checkpoint(cfg);
    if (axis >= cfg.train.model.latent_dim)
        throw ConfigError("--axis must be below latent_dim");
    NodeFilter filter;
    if (filter_name == "users")
        filter = NodeFilter::users;
    else if (filter_name == "claims")
        filter = NodeFilter::claims;
    else if (filter_name == "all")
        filter = NodeFilter::all;
    else
        throw ConfigError("--filter must be users, claims, or all");

    DenseMatrix z = load_embedding(cfg, d, ckpt_path, EmbedMode::mean, cfg.seed);
    std::vector<std::size_t> order = rank_axis(z, axis, d.graph.num_users(), filter);
    std::printf("rank\tnode_id\tnode_type\tcoordinate\n");
    for (std::size_t r = 0; r < order.size() && r < top; ++r) {
        std::size_t i = order[r];
        bool user = i < d.graph.num_users();
        std::printf("%zu\t%s\t%s\t%s\n", r + 1,
                    (user ? d.graph.user_ids[i] : d.graph.claim_ids[i - d.graph.num_users()])
                        .c_str(),
                    user ? "user" : "claim", detail::g17(z(i, axis)).c_str());
    }
    return 0;
}

int cmd_predict(const std::string& config_path, std::string ckpt_path,
                const std::string& user_id, const std::string& claim_id) {
    DatasetBundle d;
    RunConfig cfg = load_prepared(config_path, d);
    if (ckpt_path.empty()) ckpt_path = default_checkpoint(cfg);

    auto uit = std::find(d.graph.user_ids.begin(), d.graph.user_ids.end(), user_id);
    if (uit == d.graph.user_ids.end()) throw DataError("unknown user id: " + user_id);
    auto cit = std::find(d.graph.claim_ids.begin(), d.graph.claim_ids.end(), claim_id);
    if (cit == d.graph.claim_ids.end()) throw DataError("unknown claim id: " + claim_id);

    DenseMatrix z = load_embedding(cfg, d, ckpt_path, EmbedMode::mean, cfg.seed);
    std::size_t u = static_cast<std::size_t>(uit - d.graph.user_ids.begin());
    std::size_t c = static_cast<std::size_t>(cit - d.graph.claim_ids.begin());
    std::printf("%s\n", detail::g17(stance_score(z, u, d.graph.claim_node(c))).c_str());
    return 0;
}

int cmd_synth(std::size_t users, std::size_t claims, double p_in, double p_out,
              std::uint64_t seed, const std::string& out_dir) {
    SyntheticData sd = generate_synthetic(users, claims, p_in, p_out, seed);
    fs::create_directories(out_dir);
    write_edgelist((fs::path(out_dir) / "edgelist.tsv").string(), sd.records);
    write_labels((fs::path(out_dir) / "user_labels.tsv").string(), sd.user_labels);
    write_labels((fs::path(out_dir) / "claim_labels.tsv").string(), sd.claim_labels);
    std::printf("wrote %zu records for %zu users and %zu claims to %s\n", sd.records.size(),
                users, claims, out_dir.c_str());
    return 0;
}

struct AblationRow {
    std::string variant;
    double user_f1;
    double claim_f1;
    double purity;
};

AblationRow joint_variant_row(const std::string& name, const DatasetBundle& d,
                              const TrainConfig& tc) {
    TrainResult res = train(normalize(d.graph), tc);
    DenseMatrix z = embed(normalize(d.graph), res.encoder, effective_model(tc));
    MetricsReport rep = evaluate(z, d.graph.num_users(), d.labels);
    return {name, rep.user_f1, rep.claim_f1, rep.purity};
}

AblationRow separate_variant_row(const DatasetBundle& d, const TrainConfig& tc) {
    SeparateResult sep = train_separate(d.graph, tc);
    std::size_t nu = d.graph.num_users(), nc = d.graph.num_claims();

    LabelSet user_truth, claim_truth; // split truth, same class table on both sides
    user_truth.class_names = claim_truth.class_names = d.labels.class_names;
    user_truth.label.assign(d.labels.label.begin(), d.labels.label.begin() + nu);
    claim_truth.label.assign(d.labels.label.begin() + nu, d.labels.label.end());

    AxisSelection ua = select_axes(sep.user_embedding, 2);
    AxisSelection ca = select_axes(sep.claim_embedding, 2);
    std::vector<std::size_t> uassign = classify(sep.user_embedding, ua);
    std::vector<std::size_t> cassign = classify(sep.claim_embedding, ca);
    Prf1 up = prf1(uassign, ua, user_truth, 0, nu);
    Prf1 cp = prf1(cassign, ca, claim_truth, 0, nc);

    // Pool purity across both runs; claim cluster ids are offset so they
    // cannot collide with user cluster ids.
    std::vector<std::size_t> assign_all = uassign;
    for (std::size_t a : cassign)
        assign_all.push_back(a == kUnaligned ? a : a + sep.user_embedding.cols);
    return {"separate", up.f1, cp.f1, purity(assign_all, d.labels)};
}

int cmd_ablate(const std::string& config_path) {
    DatasetBundle d;
    RunConfig cfg = load_prepared(config_path, d);

    std::vector<AblationRow> rows;
    rows.push_back(joint_variant_row("full", d, cfg.train));
    TrainConfig v = cfg.train;
    v.no_tc = true;
    rows.push_back(joint_variant_row("no_tc", d, v));
    v = cfg.train;
    v.no_pi = true;
    rows.push_back(joint_variant_row("no_pi", d, v));
    v = cfg.train;
    v.gaussian = true;
    rows.push_back(joint_variant_row("gaussian", d, v));
    rows.push_back(separate_variant_row(d, cfg.train));

    std::string csv = "variant,user_f1,claim_f1,purity\n";
    std::printf("%-10s %8s %9s %8s\n", "variant", "user_f1", "claim_f1", "purity");
    for (const AblationRow& r : rows) {
        std::printf("%-10s %8.4f %9.4f %8.4f\n", r.variant.c_str(), r.user_f1, r.claim_f1,
                    r.purity);
        csv += r.variant + "," + detail::g17(r.user_f1) + "," + detail::g17(r.claim_f1) + "," +
               detail::g17(r.purity) + "\n";
    }
    fs::create_directories(cfg.output_dir);
    write_file_atomic((fs::path(cfg.output_dir) / "ablation.csv").string(), csv);
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Rectified graph autoencoder for polarity embedding and stance analysis"};
    app.require_subcommand(1);

    std::string config_path, ckpt_path, out_path, mode = "mean", filter = "all";
    std::string user_id, claim_id;
    std::int64_t sample_seed = -1;
    std::size_t axis = 0, top = 10;
    std::size_t synth_users = 40, synth_claims = 60;
    double p_in = 0.3, p_out = 0.02;
    std::uint64_t synth_seed = 0;
    std::string synth_out;

    CLI::App* train = app.add_subcommand("train", "train a model from a run config");
    train->add_option("--config", config_path, "run config json")->required();

    CLI::App* emb = app.add_subcommand("embed", "export node embeddings from a checkpoint");
    emb->add_option("--config", config_path, "run config json")->required();
    emb->add_option("--checkpoint", ckpt_path, "checkpoint path (default: output_dir)");
    emb->add_option("--mode", mode, "mean or sample");
    emb->add_option("--seed", sample_seed, "sampling seed for --mode sample");
    emb->add_option("--out", out_path, "output csv path");

    CLI::App* eval = app.add_subcommand("evaluate", "write metrics and scatter data");
    eval->add_option("--config", config_path, "run config json")->required();
    eval->add_option("--checkpoint", ckpt_path, "checkpoint path (default: output_dir)");

    CLI::App* rank = app.add_subcommand("rank", "top nodes along one latent axis");
    rank->add_option("--config", config_path, "run config json")->required();
    rank->add_option("--checkpoint", ckpt_path, "checkpoint path (default: output_dir)");
    rank->add_option("--axis", axis, "latent axis")->required();
    rank->add_option("--top", top, "number of rows");
    rank->add_option("--filter", filter, "users, claims, or all");

    CLI::App* pred = app.add_subcommand("predict", "stance probability for a user-claim pair");
    pred->add_option("--config", config_path, "run config json")->required();
    pred->add_option("--checkpoint", ckpt_path, "checkpoint path (default: output_dir)");
    pred->add_option("--user", user_id, "user id")->required();
    pred->add_option("--claim", claim_id, "claim id")->required();

    CLI::App* synth = app.add_subcommand("synth", "write a synthetic two-block dataset");
    synth->add_option("--users", synth_users, "number of users");
    synth->add_option("--claims", synth_claims, "number of claims");
    synth->add_option("--p-in", p_in, "within-block edge probability");
    synth->add_option("--p-out", p_out, "cross-block edge probability");
    synth->add_option("--seed", synth_seed, "generator seed")->required();
    synth->add_option("--out", synth_out, "output directory")->required();

    CLI::App* abl = app.add_subcommand("ablate", "compare the full model with its ablations");
    abl->add_option("--config", config_path, "run config json")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (*train) return cmd_train(config_path);
        if (*emb) return cmd_embed(config_path, ckpt_path, mode, sample_seed, out_path);
        if (*eval) return cmd_evaluate(config_path, ckpt_path);
        if (*rank) return cmd_rank(config_path, ckpt_path, axis, top, filter);
        if (*pred) return cmd_predict(config_path, ckpt_path, user_id, claim_id);
        if (*synth) return cmd_synth(synth_users, synth_claims, p_in, p_out, synth_seed, synth_out);
        if (*abl) return cmd_ablate(config_path);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 1;
    } catch (const IoError& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return 1;
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 3;
    }
    return 2;
}
