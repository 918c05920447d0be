#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "errors.hpp"
#include "matrix.hpp"

namespace infovgae {

enum class Valence { positive, negative };

struct Relation {
    std::string name;
    Valence valence = Valence::positive;
    bool in_target = true; // whether this relation's edges enter the reconstruction target
};

struct InteractionRecord {
    std::string user;
    std::string claim;
    std::string relation;
    double weight = 1.0;
};

// Bipartite user/claim interaction graph. Node indexing is stable for a run:
// users occupy [0, |users|), claims occupy [|users|, N).
struct Bhin {
    std::vector<std::string> user_ids;
    std::vector<std::string> claim_ids;
    std::vector<Relation> relations;

    struct Edge {
        std::size_t user;     // index into user_ids
        std::size_t claim;    // index into claim_ids
        std::size_t relation; // index into relations
        double weight;        // >= 0
    };
    std::vector<Edge> edges;

    std::size_t num_users() const { return user_ids.size(); }
    std::size_t num_claims() const { return claim_ids.size(); }
    std::size_t num_nodes() const { return user_ids.size() + claim_ids.size(); }
    std::size_t claim_node(std::size_t claim) const { return user_ids.size() + claim; }
};

// Deduplicates ids in first-seen order, merges duplicate (user, claim,
// relation) records by summing weights, then repeatedly drops nodes whose
// degree (count of incident merged edges) is below min_degree until the
// filter reaches a fixpoint. Surviving ids keep their relative order.
inline Bhin build_bhin(const std::vector<InteractionRecord>& records,
                       std::size_t min_degree = 1) {
    std::vector<std::string> users, claims;
    std::vector<Relation> relations;
    std::unordered_map<std::string, std::size_t> user_ix, claim_ix, rel_ix;
    std::vector<Bhin::Edge> edges;
    std::map<std::array<std::size_t, 3>, std::size_t> edge_ix;

    auto intern = [](const std::string& id, std::vector<std::string>& list,
                     std::unordered_map<std::string, std::size_t>& ix) {
        auto [it, fresh] = ix.try_emplace(id, list.size());
        if (fresh) list.push_back(id);
        return it->second;
    };

    for (const auto& rec : records) {
        if (rec.user.empty() || rec.claim.empty() || rec.relation.empty())
            throw DataError("interaction record with empty identifier");
        if (!(rec.weight >= 0.0)) throw DataError("negative or non-finite edge weight");
        std::size_t u = intern(rec.user, users, user_ix);
        std::size_t c = intern(rec.claim, claims, claim_ix);
        std::size_t r;
        auto [it, fresh] = rel_ix.try_emplace(rec.relation, relations.size());
        r = it->second;
        if (fresh) relations.push_back(Relation{rec.relation});
        auto [eit, eadd] = edge_ix.try_emplace({u, c, r}, edges.size());
        if (eadd)
            edges.push_back(Bhin::Edge{u, c, r, rec.weight});
        else
            edges[eit->second].weight += rec.weight;
    }

    std::vector<bool> user_alive(users.size(), true), claim_alive(claims.size(), true);
    for (bool changed = true; changed;) {
        changed = false;
        std::vector<std::size_t> udeg(users.size(), 0), cdeg(claims.size(), 0);
        for (const auto& e : edges) {
            if (!user_alive[e.user] || !claim_alive[e.claim]) continue;
            udeg[e.user] += 1;
            cdeg[e.claim] += 1;
        }
        for (std::size_t i = 0; i < users.size(); ++i)
            if (user_alive[i] && udeg[i] < min_degree) {
                user_alive[i] = false;
                changed = true;
            }
        for (std::size_t i = 0; i < claims.size(); ++i)
            if (claim_alive[i] && cdeg[i] < min_degree) {
                claim_alive[i] = false;
                changed = true;
            }
    }

    Bhin g;
    g.relations = std::move(relations);
    std::vector<std::size_t> umap(users.size()), cmap(claims.size());
    for (std::size_t i = 0; i < users.size(); ++i)
        if (user_alive[i]) {
            umap[i] = g.user_ids.size();
            g.user_ids.push_back(users[i]);
        }
    for (std::size_t i = 0; i < claims.size(); ++i)
        if (claim_alive[i]) {
            cmap[i] = g.claim_ids.size();
            g.claim_ids.push_back(claims[i]);
        }
    for (const auto& e : edges)
        if (user_alive[e.user] && claim_alive[e.claim])
            g.edges.push_back(Bhin::Edge{umap[e.user], cmap[e.claim], e.relation, e.weight});

    if (g.user_ids.empty() || g.claim_ids.empty() || g.edges.empty())
        throw DataError("graph is empty after filtering");
    return g;
}

// Symmetrically normalized adjacency per relation plus the binary target the
// decoder is trained against.
struct NormalizedGraph {
    std::size_t num_nodes = 0;
    std::size_t num_users = 0;
    std::vector<SparseMatrix> adj; // one N x N matrix per relation, self-loops included
    SparseMatrix target;           // binary union over in_target relations, diagonal all ones
    std::size_t positive_count = 0; // number of ones in target
};

inline NormalizedGraph normalize(const Bhin& g) {
    std::size_t n = g.num_nodes();
    if (n == 0 || g.edges.empty()) throw DataError("normalize: empty graph");

    NormalizedGraph out;
    out.num_nodes = n;
    out.num_users = g.num_users();

    for (std::size_t r = 0; r < g.relations.size(); ++r) {
        std::vector<SparseMatrix::Entry> trips;
        for (std::size_t i = 0; i < n; ++i) trips.push_back({i, i, 1.0});
        for (const auto& e : g.edges) {
            if (e.relation != r || e.weight == 0.0) continue;
            std::size_t u = e.user, c = g.claim_node(e.claim);
            trips.push_back({u, c, e.weight});
            trips.push_back({c, u, e.weight});
        }
        SparseMatrix a = SparseMatrix::from_triplets(n, n, std::move(trips));
        std::vector<double> degree(n, 0.0);
        for (const auto& e : a.entries) degree[e.row] += e.value;
        for (auto& e : a.entries) e.value /= std::sqrt(degree[e.row] * degree[e.col]);
        out.adj.push_back(std::move(a));
    }

    std::vector<SparseMatrix::Entry> trips;
    for (std::size_t i = 0; i < n; ++i) trips.push_back({i, i, 1.0});
    for (const auto& e : g.edges) {
        if (!g.relations[e.relation].in_target || e.weight == 0.0) continue;
        std::size_t u = e.user, c = g.claim_node(e.claim);
        trips.push_back({u, c, 1.0});
        trips.push_back({c, u, 1.0});
    }
    out.target = SparseMatrix::from_triplets(n, n, std::move(trips));
    for (auto& e : out.target.entries) e.value = 1.0; // re-binarize summed duplicates
    out.positive_count = out.target.nnz();
    return out;
}

} // namespace infovgae
