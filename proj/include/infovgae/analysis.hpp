#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "autodiff.hpp"
#include "errors.hpp"
#include "matrix.hpp"

namespace infovgae {

// Axis subset used for polarity analysis: the k columns of Z with the largest
// accumulated projection (column sum), ties broken toward the lower index.
struct AxisSelection {
    std::vector<std::size_t> selected; // k axis indices, descending mass
    std::vector<double> mass;          // column sums for all T axes
};

inline AxisSelection select_axes(const DenseMatrix& z, std::size_t k) {
    if (k < 1 || k > z.cols)
        throw ContractError("select_axes: k must be in [1, latent dim]");
    AxisSelection out;
    out.mass.assign(z.cols, 0.0);
    for (std::size_t i = 0; i < z.rows; ++i)
        for (std::size_t j = 0; j < z.cols; ++j) out.mass[j] += z(i, j);
    std::vector<std::size_t> order(z.cols);
    for (std::size_t j = 0; j < z.cols; ++j) order[j] = j;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return out.mass[a] > out.mass[b];
    });
    out.selected.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k));
    return out;
}

// Marker for nodes whose coordinates are zero on every selected axis.
inline constexpr std::size_t kUnaligned = std::numeric_limits<std::size_t>::max();

// Per-node polarity: the selected axis with the largest coordinate, ties
// toward the lower axis index; all selected coordinates zero -> kUnaligned.
inline std::vector<std::size_t> classify(const DenseMatrix& z, const AxisSelection& axes) {
    if (axes.selected.empty()) throw ContractError("classify: no axes selected");
    for (std::size_t a : axes.selected)
        if (a >= z.cols) throw ContractError("classify: axis out of range");
    std::vector<std::size_t> out(z.rows, kUnaligned);
    for (std::size_t i = 0; i < z.rows; ++i) {
        bool all_zero = true;
        std::size_t best_axis = 0;
        double best = -std::numeric_limits<double>::infinity();
        for (std::size_t a : axes.selected) {
            double v = z(i, a);
            if (v != 0.0) all_zero = false;
            if (v > best || (v == best && a < best_axis)) {
                best = v;
                best_axis = a;
            }
        }
        if (!all_zero) out[i] = best_axis;
    }
    return out;
}

// Agreement likelihood for a (user, claim) pair; bitwise identical to the
// decoder probability for the same rows.
inline double stance_score(const std::vector<double>& zu, const std::vector<double>& zc) {
    if (zu.size() != zc.size())
        throw DimensionError("stance_score: latent dimensions differ");
    double dot = 0.0;
    for (std::size_t k = 0; k < zu.size(); ++k) dot += zu[k] * zc[k];
    return sigmoid_stable_value(dot);
}

inline double stance_score(const DenseMatrix& z, std::size_t u, std::size_t c) {
    if (u >= z.rows || c >= z.rows) throw ContractError("stance_score: node out of range");
    double dot = 0.0;
    for (std::size_t k = 0; k < z.cols; ++k) dot += z(u, k) * z(c, k);
    return sigmoid_stable_value(dot);
}

enum class NodeFilter { users, claims, all };

// Nodes ordered by descending coordinate on one axis; ties keep node order.
inline std::vector<std::size_t> rank_axis(const DenseMatrix& z, std::size_t axis,
                                          std::size_t num_users, NodeFilter filter) {
    if (axis >= z.cols) throw ContractError("rank_axis: axis out of range");
    if (num_users > z.rows) throw ContractError("rank_axis: num_users exceeds node count");
    std::size_t begin = filter == NodeFilter::claims ? num_users : 0;
    std::size_t end = filter == NodeFilter::users ? num_users : z.rows;
    std::vector<std::size_t> order;
    order.reserve(end - begin);
    for (std::size_t i = begin; i < end; ++i) order.push_back(i);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return z(a, axis) > z(b, axis);
    });
    return order;
}

// Ground-truth class per node; -1 marks unlabeled nodes, which all metrics
// skip. Class indices are positions in class_names.
struct LabelSet {
    std::vector<int> label;
    std::vector<std::string> class_names;

    int num_classes() const { return static_cast<int>(class_names.size()); }
};

struct Prf1 {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    std::size_t positive_axis = kUnaligned; // axis matched to class 1
};

namespace detail {

struct PrCounts {
    std::size_t tp = 0, fp = 0, fn = 0;
};

inline Prf1 prf1_from_counts(const PrCounts& c, std::size_t positive_axis) {
    Prf1 m;
    m.positive_axis = positive_axis;
    m.precision = c.tp + c.fp == 0 ? 0.0
                                   : static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
    m.recall = c.tp + c.fn == 0 ? 0.0
                                : static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
    m.f1 = m.precision + m.recall == 0.0
               ? 0.0
               : 2.0 * m.precision * m.recall / (m.precision + m.recall);
    return m;
}

} // namespace detail

// Precision/recall/F1 of class 1 over nodes in [begin, end). The two
// axis-to-class assignments are both evaluated and the one with the larger F1
// is reported; unaligned nodes are never counted as a positive prediction.
inline Prf1 prf1(const std::vector<std::size_t>& assigned, const AxisSelection& axes,
                 const LabelSet& truth, std::size_t begin, std::size_t end) {
    if (assigned.size() != truth.label.size())
        throw ContractError("prf1: assignment and label sizes differ");
    if (end > assigned.size() || begin > end) throw ContractError("prf1: bad node range");
    if (truth.num_classes() != 2) throw ContractError("prf1: exactly two classes required");
    if (axes.selected.size() != 2) throw ContractError("prf1: exactly two axes required");

    Prf1 best;
    bool any_labeled = false, first = true;
    for (std::size_t which = 0; which < 2; ++which) {
        std::size_t pos_axis = axes.selected[which];
        detail::PrCounts c;
        for (std::size_t i = begin; i < end; ++i) {
            if (truth.label[i] < 0) continue;
            any_labeled = true;
            bool truly_pos = truth.label[i] == 1;
            bool pred_pos = assigned[i] == pos_axis;
            if (pred_pos && truly_pos) ++c.tp;
            else if (pred_pos) ++c.fp;
            else if (truly_pos) ++c.fn;
        }
        Prf1 m = detail::prf1_from_counts(c, pos_axis);
        if (first || m.f1 > best.f1) best = m;
        first = false;
    }
    if (!any_labeled) throw DataError("prf1: no labeled nodes in range");
    return best;
}

// Fraction of labeled nodes sitting in a cluster whose majority class matches
// theirs: (1/N) sum over clusters of the per-cluster majority count.
// Clusters are the selected axes; unaligned nodes count toward N only.
inline double purity(const std::vector<std::size_t>& assigned, const LabelSet& truth) {
    if (assigned.size() != truth.label.size())
        throw ContractError("purity: assignment and label sizes differ");
    std::size_t n = 0;
    std::vector<std::pair<std::size_t, int>> members; // (cluster, class)
    for (std::size_t i = 0; i < assigned.size(); ++i) {
        if (truth.label[i] < 0) continue;
        ++n;
        if (assigned[i] != kUnaligned) members.emplace_back(assigned[i], truth.label[i]);
    }
    if (n == 0) throw DataError("purity: no labeled nodes");

    std::vector<std::size_t> clusters;
    for (const auto& [cl, la] : members) clusters.push_back(cl);
    std::sort(clusters.begin(), clusters.end());
    clusters.erase(std::unique(clusters.begin(), clusters.end()), clusters.end());

    std::size_t credit = 0;
    for (std::size_t cl : clusters) {
        std::vector<std::size_t> per_class(static_cast<std::size_t>(truth.num_classes()), 0);
        for (const auto& [mcl, mla] : members)
            if (mcl == cl) ++per_class[static_cast<std::size_t>(mla)];
        credit += *std::max_element(per_class.begin(), per_class.end());
    }
    return static_cast<double>(credit) / static_cast<double>(n);
}

// Kendall tau-b (tie-corrected) by O(n^2) pair counting.
inline double kendall(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size()) throw ContractError("kendall: length mismatch");
    if (x.size() < 2) throw ContractError("kendall: need at least two points");
    std::size_t n = x.size();
    long long concordant = 0, discordant = 0, ties_x = 0, ties_y = 0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            double dx = x[i] - x[j], dy = y[i] - y[j];
            if (dx == 0.0 && dy == 0.0) {
                ++ties_x;
                ++ties_y;
            } else if (dx == 0.0) {
                ++ties_x;
            } else if (dy == 0.0) {
                ++ties_y;
            } else if ((dx > 0.0) == (dy > 0.0)) {
                ++concordant;
            } else {
                ++discordant;
            }
        }
    long long n0 = static_cast<long long>(n) * static_cast<long long>(n - 1) / 2;
    double denom = std::sqrt(static_cast<double>((n0 - ties_x) * (n0 - ties_y)));
    if (denom == 0.0) return 0.0;
    return static_cast<double>(concordant - discordant) / denom;
}

// Scalar leaning per node: coordinate on the positive-class axis minus the
// coordinate on the other axis; sign is the side, magnitude the strength.
inline std::vector<double> signed_polarity(const DenseMatrix& z, std::size_t axis_pos,
                                           std::size_t axis_neg) {
    if (axis_pos >= z.cols || axis_neg >= z.cols)
        throw ContractError("signed_polarity: axis out of range");
    if (axis_pos == axis_neg) throw ContractError("signed_polarity: axes must differ");
    std::vector<double> out(z.rows);
    for (std::size_t i = 0; i < z.rows; ++i) out[i] = z(i, axis_pos) - z(i, axis_neg);
    return out;
}

inline double cosine_similarity(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size()) throw ContractError("cosine_similarity: length mismatch");
    double dot = 0.0, nx = 0.0, ny = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        dot += x[i] * y[i];
        nx += x[i] * x[i];
        ny += y[i] * y[i];
    }
    if (nx == 0.0 || ny == 0.0) return 0.0;
    return dot / (std::sqrt(nx) * std::sqrt(ny));
}

struct MetricsReport {
    double user_precision = 0.0;
    double user_recall = 0.0;
    double user_f1 = 0.0;
    double claim_precision = 0.0;
    double claim_recall = 0.0;
    double claim_f1 = 0.0;
    double purity = 0.0;
    std::optional<double> kendall_overall;
    std::optional<double> kendall_group_0;
    std::optional<double> kendall_group_1;
    std::optional<double> cosine_similarity;
};

// Full evaluation pipeline over a trained embedding: two dominant axes,
// per-type precision/recall/F1, pooled purity, and (when external ideology
// values are supplied; NaN marks nodes without one) rank and cosine agreement
// of the signed polarity with those values, overall and per class.
inline MetricsReport evaluate(const DenseMatrix& z, std::size_t num_users,
                              const LabelSet& labels,
                              const std::vector<double>* ideology = nullptr) {
    if (labels.label.size() != z.rows) throw ContractError("evaluate: label size mismatch");
    if (num_users > z.rows) throw ContractError("evaluate: num_users exceeds node count");
    if (ideology && ideology->size() != z.rows)
        throw ContractError("evaluate: ideology size mismatch");

    AxisSelection axes = select_axes(z, 2);
    std::vector<std::size_t> assigned = classify(z, axes);

    MetricsReport rep;
    Prf1 user = prf1(assigned, axes, labels, 0, num_users);
    Prf1 claim = prf1(assigned, axes, labels, num_users, z.rows);
    rep.user_precision = user.precision;
    rep.user_recall = user.recall;
    rep.user_f1 = user.f1;
    rep.claim_precision = claim.precision;
    rep.claim_recall = claim.recall;
    rep.claim_f1 = claim.f1;
    rep.purity = purity(assigned, labels);

    if (ideology) {
        std::size_t axis_pos = user.positive_axis;
        std::size_t axis_neg =
            axes.selected[0] == axis_pos ? axes.selected[1] : axes.selected[0];
        std::vector<double> pol = signed_polarity(z, axis_pos, axis_neg);
        std::vector<double> px, ix, g0p, g0i, g1p, g1i;
        for (std::size_t i = 0; i < z.rows; ++i) {
            double v = (*ideology)[i];
            if (std::isnan(v)) continue;
            px.push_back(pol[i]);
            ix.push_back(v);
            if (labels.label[i] == 0) {
                g0p.push_back(pol[i]);
                g0i.push_back(v);
            } else if (labels.label[i] == 1) {
                g1p.push_back(pol[i]);
                g1i.push_back(v);
            }
        }
        if (px.size() >= 2) {
            rep.kendall_overall = kendall(px, ix);
            rep.cosine_similarity = cosine_similarity(px, ix);
        }
        if (g0p.size() >= 2) rep.kendall_group_0 = kendall(g0p, g0i);
        if (g1p.size() >= 2) rep.kendall_group_1 = kendall(g1p, g1i);
    }
    return rep;
}

} // namespace infovgae
