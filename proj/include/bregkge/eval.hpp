#pragma once
// Filtered ranking metrics and the train/test conditional-divergence
// analysis over triple files.

#include <algorithm>
#include <cmath>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "bregkge/common.hpp"
#include "bregkge/data.hpp"
#include "bregkge/models.hpp"

namespace bregkge {

// Known-true answers per query, pooled from train/valid/test splits. Ranking
// ignores these candidates (except the gold answer itself).
struct FilterIndex {
    std::unordered_map<Query, std::unordered_set<EntityId>, QueryHash> known;

    void add(const QuerySet& qs) {
        for (const QueryAnswer& qa : qs.pairs) known[qa.query].insert(qa.answer);
    }

    const std::unordered_set<EntityId>* find(const Query& q) const {
        auto it = known.find(q);
        return it == known.end() ? nullptr : &it->second;
    }
};

// rank = 1 + #better among non-filtered candidates; ties resolved by the
// mean-rank convention (average over tied orderings, rounded half up).
inline int rank_filtered(std::span<const double> scores, EntityId gold,
                         const std::unordered_set<EntityId>* filter) {
    double sg = scores[gold];
    long better = 0, tied = 0;
    for (size_t y = 0; y < scores.size(); ++y) {
        if (static_cast<EntityId>(y) == gold) continue;
        if (filter != nullptr && filter->count(static_cast<EntityId>(y))) continue;
        if (scores[y] > sg)
            ++better;
        else if (scores[y] == sg)
            ++tied;
    }
    return static_cast<int>(std::floor(static_cast<double>(better) + 1.0 +
                                       static_cast<double>(tied) / 2.0 + 0.5));
}

inline int rank_filtered(const ParamStore& st, const Query& q, EntityId gold,
                         const FilterIndex& filter) {
    std::vector<double> scores = score_all(st, q);
    return rank_filtered(scores, gold, filter.find(q));
}

struct RankReport {
    std::vector<int> ranks;
    double mrr = 0.0;
    double hits1 = 0.0;
    double hits3 = 0.0;
    double hits10 = 0.0;

    size_t n() const { return ranks.size(); }
};

inline RankReport metrics(std::vector<int> ranks) {
    if (ranks.empty()) throw domain_error("metrics: empty rank sequence");
    RankReport r;
    r.ranks = std::move(ranks);
    for (int rank : r.ranks) {
        r.mrr += 1.0 / rank;
        r.hits1 += rank <= 1;
        r.hits3 += rank <= 3;
        r.hits10 += rank <= 10;
    }
    double n = static_cast<double>(r.ranks.size());
    r.mrr /= n;
    r.hits1 /= n;
    r.hits3 /= n;
    r.hits10 /= n;
    return r;
}

// Ranks every (query, answer) pair in both directions and pools the results.
inline RankReport evaluate_ranks(const ParamStore& st, const QuerySet& pairs,
                                 const FilterIndex& filter) {
    std::vector<int> ranks;
    ranks.reserve(pairs.size());
    for (const QueryAnswer& qa : pairs.pairs)
        ranks.push_back(rank_filtered(st, qa.query, qa.answer, filter));
    return metrics(std::move(ranks));
}

// ---------------------------------------------------------------------------
// Dataset divergence: KL between the train and test conditionals p(y|x),
// where each conditional is estimated additively from frequencies as
// p(y | r, e) proportional to p(y | r) + p(y | e), renormalized. The test-side
// estimate gets add-eps smoothing before normalization so the divergence is
// defined on the train support. Per-query KL values are averaged within a
// prediction direction and the two directions are summed.

namespace detail {

using Sparse = std::vector<std::pair<EntityId, double>>;

struct CondTables {
    // y given relation, and y given the anchor entity, for one direction.
    std::unordered_map<RelationId, Sparse> by_rel;
    std::unordered_map<EntityId, Sparse> by_ent;
};

inline void normalize_sorted(Sparse& s) {
    double z = 0.0;
    for (auto& [_, c] : s) z += c;
    std::sort(s.begin(), s.end());
    for (auto& [_, c] : s) c /= z;
}

inline CondTables build_cond_tables(const std::vector<Triple>& triples, bool predict_tail) {
    std::unordered_map<RelationId, std::unordered_map<EntityId, double>> rel_counts;
    std::unordered_map<EntityId, std::unordered_map<EntityId, double>> ent_counts;
    for (const Triple& t : triples) {
        EntityId y = predict_tail ? t.tail : t.head;
        EntityId anchor = predict_tail ? t.head : t.tail;
        rel_counts[t.rel][y] += 1.0;
        ent_counts[anchor][y] += 1.0;
    }
    CondTables out;
    for (auto& [r, m] : rel_counts) {
        Sparse s(m.begin(), m.end());
        normalize_sorted(s);
        out.by_rel.emplace(r, std::move(s));
    }
    for (auto& [e, m] : ent_counts) {
        Sparse s(m.begin(), m.end());
        normalize_sorted(s);
        out.by_ent.emplace(e, std::move(s));
    }
    return out;
}

inline const Sparse* find_sparse(const std::unordered_map<RelationId, Sparse>& m, RelationId k) {
    auto it = m.find(k);
    return it == m.end() ? nullptr : &it->second;
}

// Walks the union support of up to four sorted sparse vectors in one pass.
struct SparseCursor {
    const Sparse* s;
    size_t i = 0;

    EntityId key() const { return s != nullptr && i < s->size() ? (*s)[i].first : -1; }
    double take(EntityId y) {
        if (s == nullptr || i >= s->size() || (*s)[i].first != y) return 0.0;
        return (*s)[i++].second;
    }
};

}  // namespace detail

struct KlOptions {
    double eps = 1e-9;  // add-smoothing on the test-side estimate
};

struct KlReport {
    double total = 0.0;
    double tail_direction = 0.0;
    double head_direction = 0.0;
    size_t tail_queries = 0;
    size_t head_queries = 0;
};

inline KlReport kg_kl_divergence(const TripleSet& train, const TripleSet& test, int n_entities,
                                 KlOptions opt = {}) {
    if (train.triples.empty() || test.triples.empty())
        throw data_error("kg_kl_divergence: empty split");
    KlReport report;
    for (bool predict_tail : {true, false}) {
        detail::CondTables P = detail::build_cond_tables(train.triples, predict_tail);
        detail::CondTables Q = detail::build_cond_tables(test.triples, predict_tail);

        // distinct train queries (rel, anchor) for this direction
        std::unordered_set<uint64_t> seen;
        double sum_kl = 0.0;
        size_t n_queries = 0;
        for (const Triple& t : train.triples) {
            EntityId anchor = predict_tail ? t.head : t.tail;
            uint64_t key = (static_cast<uint64_t>(t.rel) << 32) |
                           static_cast<uint64_t>(static_cast<uint32_t>(anchor));
            if (!seen.insert(key).second) continue;
            ++n_queries;

            const detail::Sparse* pa = detail::find_sparse(P.by_rel, t.rel);
            auto pe_it = P.by_ent.find(anchor);
            const detail::Sparse* pb = pe_it == P.by_ent.end() ? nullptr : &pe_it->second;
            double p_mass = (pa ? 1.0 : 0.0) + (pb ? 1.0 : 0.0);

            const detail::Sparse* qa = detail::find_sparse(Q.by_rel, t.rel);
            auto qe_it = Q.by_ent.find(anchor);
            const detail::Sparse* qb = qe_it == Q.by_ent.end() ? nullptr : &qe_it->second;
            double q_mass = (qa ? 1.0 : 0.0) + (qb ? 1.0 : 0.0);
            double q_norm = q_mass + opt.eps * n_entities;

            detail::SparseCursor cp{pa}, cq{pb}, cqa{qa}, cqb{qb};
            double kl = 0.0;
            while (true) {
                EntityId y = -1;
                for (const auto* cur : {&cp, &cq}) {
                    EntityId k = cur->key();
                    if (k >= 0 && (y < 0 || k < y)) y = k;
                }
                if (y < 0) break;
                double p = (cp.take(y) + cq.take(y)) / p_mass;
                // advance the q cursors past skipped keys
                while (cqa.key() >= 0 && cqa.key() < y) cqa.i++;
                while (cqb.key() >= 0 && cqb.key() < y) cqb.i++;
                double q = (cqa.take(y) + cqb.take(y) + opt.eps) / q_norm;
                kl += p * std::log(p / q);
            }
            sum_kl += kl;
        }
        double avg = n_queries == 0 ? 0.0 : sum_kl / static_cast<double>(n_queries);
        if (predict_tail) {
            report.tail_direction = avg;
            report.tail_queries = n_queries;
        } else {
            report.head_direction = avg;
            report.head_queries = n_queries;
        }
    }
    report.total = report.tail_direction + report.head_direction;
    return report;
}

}  // namespace bregkge
