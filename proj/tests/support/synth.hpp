#pragma once
// Test-side fixtures: a deterministic synthetic knowledge graph with
// group-block structure, plus finite-difference helpers used as gradient
// oracles.
//
// Graph construction: entities are partitioned into groups; each relation
// picks a window of groups, pairs them up, and connects each pair as a
// complete bipartite block in both directions (so per-query conditionals are
// uniform over a full group). The dev/test splits hold out whole
// (entity, relation) incidences, which keeps every surviving training
// conditional exact while giving held-out queries group structure that a
// model can generalize to.

#include <functional>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "bregkge/data.hpp"
#include "bregkge/losses.hpp"

namespace synth {

using namespace bregkge;

struct Splits {
    TripleSet train;
    TripleSet valid;
    TripleSet test;
};

struct GraphSpec {
    int n_entities = 200;
    int n_relations = 5;
    int group_size = 5;
    int groups_per_relation = 10;
    double holdout = 0.1;  // fraction of each relation's entities per held split
    uint64_t seed = 7;
};

inline Splits make_synthetic_graph(const GraphSpec& gs = {}) {
    const int n_groups = gs.n_entities / gs.group_size;
    Rng rng(make_stream(gs.seed, 0x5717));

    std::vector<int> perm(gs.n_entities);
    for (int i = 0; i < gs.n_entities; ++i) perm[i] = i;
    for (int i = gs.n_entities; i > 1; --i) std::swap(perm[i - 1], perm[rng.index(i)]);
    auto group_members = [&](int g) {
        std::vector<int> m;
        for (int i = 0; i < gs.group_size; ++i) m.push_back(perm[g * gs.group_size + i]);
        return m;
    };

    // holdout[r][e] = 0 train, 1 dev, 2 test
    std::vector<std::unordered_map<int, int>> holdout(gs.n_relations);
    std::vector<std::vector<std::pair<int, int>>> rel_pairs(gs.n_relations);
    std::vector<std::vector<int>> rel_entities(gs.n_relations);

    for (int r = 0; r < gs.n_relations; ++r) {
        int start = (r * n_groups) / gs.n_relations;
        for (int p = 0; p + 1 < gs.groups_per_relation; p += 2)
            rel_pairs[r].push_back({(start + p) % n_groups, (start + p + 1) % n_groups});
        std::unordered_set<int> ents;
        for (auto [a, b] : rel_pairs[r]) {
            for (int e : group_members(a)) ents.insert(e);
            for (int e : group_members(b)) ents.insert(e);
        }
        rel_entities[r].assign(ents.begin(), ents.end());
        std::sort(rel_entities[r].begin(), rel_entities[r].end());
        Rng hr(make_stream(gs.seed, 0x801D, static_cast<uint64_t>(r)));
        std::vector<int>& re = rel_entities[r];
        for (size_t i = re.size(); i > 1; --i)
            std::swap(re[i - 1], re[hr.index(static_cast<int>(i))]);
        size_t k = static_cast<size_t>(gs.holdout * static_cast<double>(re.size()) + 0.5);
        for (size_t i = 0; i < k && i < re.size(); ++i) holdout[r][re[i]] = 1;
        for (size_t i = k; i < 2 * k && i < re.size(); ++i) holdout[r][re[i]] = 2;
    }

    // guarantee every entity keeps at least one training incidence
    auto held = [&](int r, int e) {
        auto it = holdout[r].find(e);
        return it == holdout[r].end() ? 0 : it->second;
    };
    for (int e = 0; e < gs.n_entities; ++e) {
        bool covered = false;
        int last_rel = -1;
        for (int r = 0; r < gs.n_relations && !covered; ++r) {
            if (std::find(rel_entities[r].begin(), rel_entities[r].end(), e) ==
                rel_entities[r].end())
                continue;
            last_rel = r;
            if (held(r, e) == 0) covered = true;
        }
        if (!covered && last_rel >= 0) holdout[last_rel].erase(e);
    }

    Vocab vocab;
    char buf[16];
    for (int e = 0; e < gs.n_entities; ++e) {
        std::snprintf(buf, sizeof(buf), "e%03d", e);
        vocab.intern_entity(buf);
    }
    for (int r = 0; r < gs.n_relations; ++r) {
        std::snprintf(buf, sizeof(buf), "r%d", r);
        vocab.intern_relation(buf);
    }

    Splits out;
    out.train.vocab = out.valid.vocab = out.test.vocab = vocab;
    for (int r = 0; r < gs.n_relations; ++r) {
        for (auto [ga, gb] : rel_pairs[r]) {
            for (int a : group_members(ga)) {
                for (int b : group_members(gb)) {
                    for (Triple t : {Triple{a, r, b}, Triple{b, r, a}}) {
                        int s = std::max(held(r, t.head), held(r, t.tail));
                        (s == 0 ? out.train : s == 1 ? out.valid : out.test)
                            .triples.push_back(t);
                    }
                }
            }
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Finite differences.

inline double central_diff(const std::function<double(double)>& f, double x, double h = 1e-5) {
    return (f(x + h) - f(x - h)) / (2.0 * h);
}

inline double rel_err(double got, double want) {
    double denom = std::max({std::abs(got), std::abs(want), 1e-8});
    return std::abs(got - want) / denom;
}

}  // namespace synth
