#pragma once
// Triple files, vocabularies, bidirectional queries, and the exact empirical
// distributions derived from them.
//
// Wire format: UTF-8 text, one triple per line, head<TAB>relation<TAB>tail,
// no header. Vocab export: two-column TSV name<TAB>id.

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "bregkge/common.hpp"

namespace bregkge {

using EntityId = int32_t;
using RelationId = int32_t;

struct Triple {
    EntityId head;
    RelationId rel;
    EntityId tail;

    bool operator==(const Triple&) const = default;
};

struct TripleHash {
    size_t operator()(const Triple& t) const {
        return static_cast<size_t>(mix_seed(0x7431, static_cast<uint64_t>(t.head),
                                            static_cast<uint64_t>(t.rel),
                                            static_cast<uint64_t>(t.tail)));
    }
};

// Ids are assigned in first-appearance order of the input file, so reloading
// the same file reproduces the same ids.
struct Vocab {
    std::vector<std::string> entities;
    std::vector<std::string> relations;
    std::unordered_map<std::string, EntityId> entity_ids;
    std::unordered_map<std::string, RelationId> relation_ids;

    EntityId intern_entity(const std::string& name) {
        auto it = entity_ids.find(name);
        if (it != entity_ids.end()) return it->second;
        EntityId id = static_cast<EntityId>(entities.size());
        entities.push_back(name);
        entity_ids.emplace(name, id);
        return id;
    }

    RelationId intern_relation(const std::string& name) {
        auto it = relation_ids.find(name);
        if (it != relation_ids.end()) return it->second;
        RelationId id = static_cast<RelationId>(relations.size());
        relations.push_back(name);
        relation_ids.emplace(name, id);
        return id;
    }

    EntityId entity(const std::string& name) const {
        auto it = entity_ids.find(name);
        if (it == entity_ids.end()) throw data_error("unknown entity name: " + name);
        return it->second;
    }

    RelationId relation(const std::string& name) const {
        auto it = relation_ids.find(name);
        if (it == relation_ids.end()) throw data_error("unknown relation name: " + name);
        return it->second;
    }

    int n_entities() const { return static_cast<int>(entities.size()); }
    int n_relations() const { return static_cast<int>(relations.size()); }
};

struct TripleSet {
    Vocab vocab;
    std::vector<Triple> triples;
    size_t duplicates_dropped = 0;

    size_t size() const { return triples.size(); }
};

namespace detail {

inline bool split_tsv3(const std::string& line, std::string& a, std::string& b, std::string& c) {
    size_t t1 = line.find('\t');
    if (t1 == std::string::npos) return false;
    size_t t2 = line.find('\t', t1 + 1);
    if (t2 == std::string::npos) return false;
    if (line.find('\t', t2 + 1) != std::string::npos) return false;
    a = line.substr(0, t1);
    b = line.substr(t1 + 1, t2 - t1 - 1);
    c = line.substr(t2 + 1);
    if (!c.empty() && c.back() == '\r') c.pop_back();
    return !a.empty() && !b.empty() && !c.empty();
}

template <typename Intern>
TripleSet load_triples_impl(const std::string& path, Intern intern) {
    std::ifstream in(path);
    if (!in) throw data_error("cannot open triple file: " + path);

    TripleSet out;
    std::unordered_set<Triple, TripleHash> seen;
    std::string line, h, r, t;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line == "\r") continue;
        if (!split_tsv3(line, h, r, t))
            throw data_error(path + ":" + std::to_string(lineno) +
                             ": expected head<TAB>relation<TAB>tail");
        Triple tr{intern(out, h, true), intern(out, r, false), intern(out, t, true)};
        if (!seen.insert(tr).second) {
            ++out.duplicates_dropped;
            continue;
        }
        out.triples.push_back(tr);
    }
    return out;
}

}  // namespace detail

// Loads a split and builds the vocabulary on the fly (training splits).
inline TripleSet load_triples(const std::string& path) {
    return detail::load_triples_impl(path, [](TripleSet& ts, const std::string& name, bool ent) {
        return ent ? ts.vocab.intern_entity(name)
                   : static_cast<EntityId>(ts.vocab.intern_relation(name));
    });
}

// Loads a split into a shared growing vocabulary. Used by the dataset-stats
// analyzer, where a test split may mention entities the training split lacks.
inline TripleSet load_triples_into(const std::string& path, Vocab& vocab) {
    TripleSet ts = detail::load_triples_impl(
        path, [&vocab](TripleSet&, const std::string& name, bool ent) {
            return ent ? vocab.intern_entity(name)
                       : static_cast<EntityId>(vocab.intern_relation(name));
        });
    ts.vocab = vocab;
    return ts;
}

// Loads a split against a fixed vocabulary (validation/test splits). Names
// missing from the training vocab are an error: evaluation is transductive.
inline TripleSet load_triples(const std::string& path, const Vocab& vocab) {
    TripleSet ts = detail::load_triples_impl(
        path, [&vocab](TripleSet&, const std::string& name, bool ent) {
            return ent ? vocab.entity(name) : static_cast<EntityId>(vocab.relation(name));
        });
    ts.vocab = vocab;
    return ts;
}

inline void save_triples(const TripleSet& ts, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw data_error("cannot write triple file: " + path);
    for (const Triple& t : ts.triples)
        out << ts.vocab.entities[t.head] << '\t' << ts.vocab.relations[t.rel] << '\t'
            << ts.vocab.entities[t.tail] << '\n';
}

inline void save_vocab(const std::vector<std::string>& names, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw data_error("cannot write vocab file: " + path);
    for (size_t i = 0; i < names.size(); ++i) out << names[i] << '\t' << i << '\n';
}

enum class Direction : uint8_t { TailPredict = 0, HeadPredict = 1 };

// A query (e,r,?) or (?,r,e). The direction is part of the key: tail- and
// head-prediction are distinct even when anchor/relation ids coincide.
struct Query {
    Direction dir;
    EntityId anchor;
    RelationId rel;

    bool operator==(const Query&) const = default;
};

struct QueryHash {
    size_t operator()(const Query& q) const {
        return static_cast<size_t>(mix_seed(0x9157, static_cast<uint64_t>(q.dir),
                                            static_cast<uint64_t>(q.anchor),
                                            static_cast<uint64_t>(q.rel)));
    }
};

struct QueryAnswer {
    Query query;
    EntityId answer;
};

struct QuerySet {
    std::vector<QueryAnswer> pairs;
    int n_entities = 0;
    int n_relations = 0;

    size_t size() const { return pairs.size(); }
};

// Every triple yields exactly two (query, answer) pairs: one per direction.
inline QuerySet to_queries(const TripleSet& ts) {
    QuerySet qs;
    qs.n_entities = ts.vocab.n_entities();
    qs.n_relations = ts.vocab.n_relations();
    qs.pairs.reserve(ts.triples.size() * 2);
    for (const Triple& t : ts.triples) {
        qs.pairs.push_back({{Direction::TailPredict, t.head, t.rel}, t.tail});
        qs.pairs.push_back({{Direction::HeadPredict, t.tail, t.rel}, t.head});
    }
    return qs;
}

// Sparse probability vector over entity ids, sorted by id.
using SparseDist = std::vector<std::pair<EntityId, double>>;

// Exact conditional distribution p(y|x) over a finite label set. Only the
// observed support is stored; unseen queries are absent, not zero-filled.
struct CondDist {
    int support_size = 0;
    std::unordered_map<Query, SparseDist, QueryHash> per_query;

    const SparseDist* find(const Query& q) const {
        auto it = per_query.find(q);
        return it == per_query.end() ? nullptr : &it->second;
    }
};

inline CondDist empirical_conditional(const QuerySet& qs) {
    CondDist cd;
    cd.support_size = qs.n_entities;
    std::unordered_map<Query, std::unordered_map<EntityId, size_t>, QueryHash> counts;
    std::unordered_map<Query, size_t, QueryHash> totals;
    for (const QueryAnswer& qa : qs.pairs) {
        ++counts[qa.query][qa.answer];
        ++totals[qa.query];
    }
    for (auto& [q, cmap] : counts) {
        SparseDist dist;
        dist.reserve(cmap.size());
        double total = static_cast<double>(totals[q]);
        for (auto& [y, c] : cmap) dist.emplace_back(y, static_cast<double>(c) / total);
        std::sort(dist.begin(), dist.end());
        cd.per_query.emplace(q, std::move(dist));
    }
    return cd;
}

// Exact per-query and per-label counts, #x and #y.
struct FreqTable {
    std::unordered_map<Query, size_t, QueryHash> per_query;
    std::vector<size_t> per_label;
    size_t total = 0;

    size_t query_count(const Query& q) const {
        auto it = per_query.find(q);
        return it == per_query.end() ? 0 : it->second;
    }

    size_t label_count(EntityId y) const {
        return y >= 0 && static_cast<size_t>(y) < per_label.size() ? per_label[y] : 0;
    }

    // Unigram noise distribution, #y / sum(#y).
    std::vector<double> unigram() const {
        std::vector<double> u(per_label.size(), 0.0);
        if (total == 0) return u;
        for (size_t i = 0; i < per_label.size(); ++i)
            u[i] = static_cast<double>(per_label[i]) / static_cast<double>(total);
        return u;
    }
};

inline FreqTable frequency_table(const QuerySet& qs) {
    FreqTable ft;
    ft.per_label.assign(static_cast<size_t>(qs.n_entities), 0);
    for (const QueryAnswer& qa : qs.pairs) {
        ++ft.per_query[qa.query];
        ++ft.per_label[qa.answer];
        ++ft.total;
    }
    return ft;
}

}  // namespace bregkge
