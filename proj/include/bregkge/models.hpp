#pragma once
// Score functions f(x,y) with analytic gradients: tabular, TransE, DistMult,
// ComplEx, RESCAL, RotatE. Queries in both directions are answered by one
// model through relation-id doubling: forward relations occupy rows
// [0, |R|), reverse relations rows [|R|, 2|R|), entity rows are shared.
//
// Complex-valued families store rows as [re(0..d-1) | im(0..d-1)]. RESCAL
// relation rows hold the full d*d matrix, row-major.
//
// Checkpoint layout (little endian): magic "BKGE", u32 version, u32 family,
// u32 dim, u32 n_entities, u32 n_relations, u64 seed, then three tables
// (entities, relations, tabular scores), each u64 rows, u64 cols, rows*cols
// f64 values.

#include <array>
#include <cstring>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "bregkge/common.hpp"
#include "bregkge/data.hpp"
#include "bregkge/losses.hpp"

namespace bregkge {

enum class ModelFamily { Tabular, TransE, DistMult, ComplEx, Rescal, RotatE };

inline const char* to_string(ModelFamily f) {
    switch (f) {
        case ModelFamily::Tabular: return "tabular";
        case ModelFamily::TransE: return "transe";
        case ModelFamily::DistMult: return "distmult";
        case ModelFamily::ComplEx: return "complex";
        case ModelFamily::Rescal: return "rescal";
        case ModelFamily::RotatE: return "rotate";
    }
    return "?";
}

enum class InitScheme { XavierNormal, XavierUniform, Normal, Uniform };

struct ModelSpec {
    ModelFamily family = ModelFamily::DistMult;
    int dim = 16;
    InitScheme init = InitScheme::XavierNormal;
    double init_scale = 0.1;  // sigma for normal, half-range for uniform
    uint64_t seed = 1;

    int entity_width() const {
        switch (family) {
            case ModelFamily::Tabular: return 0;
            case ModelFamily::ComplEx:
            case ModelFamily::RotatE: return 2 * dim;
            default: return dim;
        }
    }

    int relation_width() const {
        switch (family) {
            case ModelFamily::Tabular: return 0;
            case ModelFamily::ComplEx:
            case ModelFamily::RotatE: return 2 * dim;
            case ModelFamily::Rescal: return dim * dim;
            default: return dim;
        }
    }
};

struct ParamStore {
    ModelSpec spec;
    int n_entities = 0;
    int n_relations = 0;  // base count; the relation table holds 2x rows
    Matrix entities;      // |E| x entity_width
    Matrix relations;     // 2|R| x relation_width
    Matrix scores;        // tabular only: (2 |R| |E|) x |E|

    int relation_row(const Query& q) const {
        return q.dir == Direction::TailPredict ? q.rel : q.rel + n_relations;
    }

    int tabular_row(const Query& q) const { return relation_row(q) * n_entities + q.anchor; }

    void check_query(const Query& q) const {
        if (q.anchor < 0 || q.anchor >= n_entities || q.rel < 0 || q.rel >= n_relations)
            throw domain_error("query ids out of vocabulary range");
    }
};

namespace detail {

inline void fill_table(Matrix& t, InitScheme scheme, double scale, Rng& rng) {
    if (t.cols == 0 || t.rows == 0) return;
    switch (scheme) {
        case InitScheme::XavierNormal: {
            // fan_in = fan_out = row width, the adopted convention
            double sigma = std::sqrt(1.0 / t.cols);
            for (double& v : t.v) v = sigma * rng.normal();
            break;
        }
        case InitScheme::XavierUniform: {
            double bound = std::sqrt(3.0 / t.cols);  // sqrt(6 / (fan_in + fan_out))
            for (double& v : t.v) v = bound * (2.0 * rng.u01() - 1.0);
            break;
        }
        case InitScheme::Normal:
            for (double& v : t.v) v = scale * rng.normal();
            break;
        case InitScheme::Uniform:
            for (double& v : t.v) v = scale * (2.0 * rng.u01() - 1.0);
            break;
    }
}

}  // namespace detail

inline ParamStore init_params(const ModelSpec& spec, int n_entities, int n_relations) {
    if (spec.dim < 1) throw config_error("model: dim must be >= 1");
    if (n_entities < 1 || n_relations < 1) throw config_error("model: empty vocabulary");
    ParamStore st;
    st.spec = spec;
    st.n_entities = n_entities;
    st.n_relations = n_relations;
    if (spec.family == ModelFamily::Tabular) {
        st.scores = Matrix(2 * n_relations * n_entities, n_entities, 0.0);
        return st;
    }
    st.entities = Matrix(n_entities, spec.entity_width());
    st.relations = Matrix(2 * n_relations, spec.relation_width());
    Rng ent_rng(make_stream(spec.seed, 0xE11));
    Rng rel_rng(make_stream(spec.seed, 0x4e1));
    detail::fill_table(st.entities, spec.init, spec.init_scale, ent_rng);
    if (spec.family == ModelFamily::RotatE) {
        // rotations are unit-modulus; draw phases in [-pi, pi]
        int d = spec.dim;
        for (int r = 0; r < st.relations.rows; ++r) {
            double* row = st.relations.row(r);
            for (int j = 0; j < d; ++j) {
                double phase = (2.0 * rel_rng.u01() - 1.0) * 3.14159265358979323846;
                row[j] = std::cos(phase);
                row[d + j] = std::sin(phase);
            }
        }
    } else {
        detail::fill_table(st.relations, spec.init, spec.init_scale, rel_rng);
    }
    return st;
}

// ---------------------------------------------------------------------------
// Scoring. The anchor/relation rows are passed as pointers so callers can
// substitute dropout-masked copies; candidate rows always come from the store.

inline double score_one(const ParamStore& st, const double* a, const double* r,
                        EntityId candidate, const Query& q) {
    const int d = st.spec.dim;
    switch (st.spec.family) {
        case ModelFamily::Tabular:
            return st.scores.at(st.tabular_row(q), candidate);
        case ModelFamily::TransE: {
            const double* t = st.entities.row(candidate);
            double s = 0.0;
            for (int j = 0; j < d; ++j) {
                double delta = a[j] + r[j] - t[j];
                s += delta * delta;
            }
            return -std::sqrt(s);
        }
        case ModelFamily::DistMult: {
            const double* t = st.entities.row(candidate);
            double s = 0.0;
            for (int j = 0; j < d; ++j) s += a[j] * r[j] * t[j];
            return s;
        }
        case ModelFamily::ComplEx: {
            const double* t = st.entities.row(candidate);
            double s = 0.0;
            for (int j = 0; j < d; ++j) {
                double hr = a[j], hi = a[d + j], rr = r[j], ri = r[d + j];
                s += (hr * rr - hi * ri) * t[j] + (hr * ri + hi * rr) * t[d + j];
            }
            return s;
        }
        case ModelFamily::Rescal: {
            const double* t = st.entities.row(candidate);
            double s = 0.0;
            for (int i = 0; i < d; ++i) {
                double mi = 0.0;
                const double* mrow = r + static_cast<size_t>(i) * d;
                for (int j = 0; j < d; ++j) mi += mrow[j] * t[j];
                s += a[i] * mi;
            }
            return s;
        }
        case ModelFamily::RotatE: {
            const double* t = st.entities.row(candidate);
            double s = 0.0;
            for (int j = 0; j < d; ++j) {
                double vre = a[j] * r[j] - a[d + j] * r[d + j] - t[j];
                double vim = a[j] * r[d + j] + a[d + j] * r[j] - t[d + j];
                s += std::sqrt(vre * vre + vim * vim);
            }
            return -s;
        }
    }
    return 0.0;
}

struct QueryRows {
    const double* anchor = nullptr;
    const double* rel = nullptr;
};

inline QueryRows query_rows(const ParamStore& st, const Query& q) {
    st.check_query(q);
    if (st.spec.family == ModelFamily::Tabular) return {};
    return {st.entities.row(q.anchor), st.relations.row(st.relation_row(q))};
}

// Scores for every entity as candidate answer of q, with explicit
// anchor/relation rows (dropout-masked copies, usually).
inline std::vector<double> score_all_rows(const ParamStore& st, const Query& q, const double* a,
                                          const double* r) {
    std::vector<double> out(static_cast<size_t>(st.n_entities));
    if (st.spec.family == ModelFamily::Tabular) {
        const double* row = st.scores.row(st.tabular_row(q));
        std::copy(row, row + st.n_entities, out.begin());
        return out;
    }
    for (int y = 0; y < st.n_entities; ++y)
        out[static_cast<size_t>(y)] = score_one(st, a, r, y, q);
    return out;
}

// Scores for every entity as candidate answer of q.
inline std::vector<double> score_all(const ParamStore& st, const Query& q) {
    QueryRows rows = query_rows(st, q);
    return score_all_rows(st, q, rows.anchor, rows.rel);
}

inline std::vector<double> score_subset(const ParamStore& st, const Query& q,
                                        std::span<const EntityId> candidates) {
    QueryRows rows = query_rows(st, q);
    std::vector<double> out(candidates.size());
    for (size_t i = 0; i < candidates.size(); ++i) {
        if (candidates[i] < 0 || candidates[i] >= st.n_entities)
            throw domain_error("candidate id out of range");
        out[i] = score_one(st, rows.anchor, rows.rel, candidates[i], q);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Gradients.

struct GradBuffer {
    Matrix entities;
    Matrix relations;
    Matrix scores;
    std::vector<int> touched_entities;
    std::vector<int> touched_relations;
    std::vector<int> touched_scores;
    std::vector<char> ent_flag;
    std::vector<char> rel_flag;
    std::vector<char> sc_flag;

    explicit GradBuffer(const ParamStore& st)
        : entities(st.entities.rows, st.entities.cols),
          relations(st.relations.rows, st.relations.cols),
          scores(st.scores.rows, st.scores.cols),
          ent_flag(static_cast<size_t>(st.entities.rows), 0),
          rel_flag(static_cast<size_t>(st.relations.rows), 0),
          sc_flag(static_cast<size_t>(st.scores.rows), 0) {}

    double* touch_entity(int row) {
        if (!ent_flag[row]) {
            ent_flag[row] = 1;
            touched_entities.push_back(row);
        }
        return entities.row(row);
    }

    double* touch_relation(int row) {
        if (!rel_flag[row]) {
            rel_flag[row] = 1;
            touched_relations.push_back(row);
        }
        return relations.row(row);
    }

    double* touch_score(int row) {
        if (!sc_flag[row]) {
            sc_flag[row] = 1;
            touched_scores.push_back(row);
        }
        return scores.row(row);
    }

    void clear() {
        for (int r : touched_entities)
            std::fill(entities.row(r), entities.row(r) + entities.cols, 0.0);
        for (int r : touched_relations)
            std::fill(relations.row(r), relations.row(r) + relations.cols, 0.0);
        for (int r : touched_scores) std::fill(scores.row(r), scores.row(r) + scores.cols, 0.0);
        for (int r : touched_entities) ent_flag[r] = 0;
        for (int r : touched_relations) rel_flag[r] = 0;
        for (int r : touched_scores) sc_flag[r] = 0;
        touched_entities.clear();
        touched_relations.clear();
        touched_scores.clear();
    }
};

// Adds the gradient of sum_y weights[y] * f(x, y) into `grads`. Pass the same
// a/r pointers that produced the scores; when those were dropout-masked
// copies, pass the multiplier masks too so the anchor/relation contributions
// are routed back through the mask. Candidate rows are never masked.
inline void grad_accumulate(const ParamStore& st, const Query& q, const double* a,
                            const double* r,
                            std::span<const std::pair<EntityId, double>> weights,
                            GradBuffer& grads, std::vector<double>& danchor,
                            std::vector<double>& drel, const double* anchor_mask = nullptr,
                            const double* rel_mask = nullptr) {
    const int d = st.spec.dim;
    danchor.assign(static_cast<size_t>(st.spec.entity_width()), 0.0);
    drel.assign(static_cast<size_t>(st.spec.relation_width()), 0.0);
    switch (st.spec.family) {
        case ModelFamily::Tabular: {
            double* row = grads.touch_score(st.tabular_row(q));
            for (const auto& [y, w] : weights) row[y] += w;
            return;
        }
        case ModelFamily::TransE: {
            for (const auto& [y, w] : weights) {
                if (w == 0.0) continue;
                const double* t = st.entities.row(y);
                double norm = 0.0;
                for (int j = 0; j < d; ++j) {
                    double delta = a[j] + r[j] - t[j];
                    norm += delta * delta;
                }
                norm = std::sqrt(norm);
                if (norm < 1e-12) continue;  // score gradient undefined at 0
                double* dt = grads.touch_entity(y);
                double scale = w / norm;
                for (int j = 0; j < d; ++j) {
                    double delta = a[j] + r[j] - t[j];
                    danchor[j] -= scale * delta;
                    drel[j] -= scale * delta;
                    dt[j] += scale * delta;
                }
            }
            break;
        }
        case ModelFamily::DistMult: {
            for (const auto& [y, w] : weights) {
                if (w == 0.0) continue;
                const double* t = st.entities.row(y);
                double* dt = grads.touch_entity(y);
                for (int j = 0; j < d; ++j) {
                    danchor[j] += w * r[j] * t[j];
                    drel[j] += w * a[j] * t[j];
                    dt[j] += w * a[j] * r[j];
                }
            }
            break;
        }
        case ModelFamily::ComplEx: {
            for (const auto& [y, w] : weights) {
                if (w == 0.0) continue;
                const double* t = st.entities.row(y);
                double* dt = grads.touch_entity(y);
                for (int j = 0; j < d; ++j) {
                    double hr = a[j], hi = a[d + j], rr = r[j], ri = r[d + j];
                    double tr = t[j], ti = t[d + j];
                    danchor[j] += w * (rr * tr + ri * ti);
                    danchor[d + j] += w * (-ri * tr + rr * ti);
                    drel[j] += w * (hr * tr + hi * ti);
                    drel[d + j] += w * (-hi * tr + hr * ti);
                    dt[j] += w * (hr * rr - hi * ri);
                    dt[d + j] += w * (hr * ri + hi * rr);
                }
            }
            break;
        }
        case ModelFamily::Rescal: {
            for (const auto& [y, w] : weights) {
                if (w == 0.0) continue;
                const double* t = st.entities.row(y);
                double* dt = grads.touch_entity(y);
                for (int i = 0; i < d; ++i) {
                    const double* mrow = r + static_cast<size_t>(i) * d;
                    double* dmrow = drel.data() + static_cast<size_t>(i) * d;
                    double mi = 0.0;
                    for (int j = 0; j < d; ++j) {
                        mi += mrow[j] * t[j];
                        dmrow[j] += w * a[i] * t[j];
                        dt[j] += w * a[i] * mrow[j];
                    }
                    danchor[i] += w * mi;
                }
            }
            break;
        }
        case ModelFamily::RotatE: {
            for (const auto& [y, w] : weights) {
                if (w == 0.0) continue;
                const double* t = st.entities.row(y);
                double* dt = grads.touch_entity(y);
                for (int j = 0; j < d; ++j) {
                    double vre = a[j] * r[j] - a[d + j] * r[d + j] - t[j];
                    double vim = a[j] * r[d + j] + a[d + j] * r[j] - t[d + j];
                    double mod = std::sqrt(vre * vre + vim * vim);
                    if (mod < 1e-12) continue;
                    double gre = -w * vre / mod, gim = -w * vim / mod;
                    danchor[j] += gre * r[j] + gim * r[d + j];
                    danchor[d + j] += -gre * r[d + j] + gim * r[j];
                    drel[j] += gre * a[j] + gim * a[d + j];
                    drel[d + j] += -gre * a[d + j] + gim * a[j];
                    dt[j] -= gre;
                    dt[d + j] -= gim;
                }
            }
            break;
        }
    }
    double* da = grads.touch_entity(q.anchor);
    for (size_t j = 0; j < danchor.size(); ++j)
        da[j] += anchor_mask != nullptr ? danchor[j] * anchor_mask[j] : danchor[j];
    double* dr = grads.touch_relation(st.relation_row(q));
    for (size_t j = 0; j < drel.size(); ++j)
        dr[j] += rel_mask != nullptr ? drel[j] * rel_mask[j] : drel[j];
}

// Convenience overload without dropout masking.
inline void grad_accumulate(const ParamStore& st, const Query& q,
                            std::span<const std::pair<EntityId, double>> weights,
                            GradBuffer& grads) {
    QueryRows rows = query_rows(st, q);
    std::vector<double> danchor, drel;
    grad_accumulate(st, q, rows.anchor, rows.rel, weights, grads, danchor, drel);
}

// Projects RotatE relation entries back to unit modulus.
inline void renormalize_rotations(ParamStore& st) {
    if (st.spec.family != ModelFamily::RotatE) return;
    const int d = st.spec.dim;
    for (int r = 0; r < st.relations.rows; ++r) {
        double* row = st.relations.row(r);
        for (int j = 0; j < d; ++j) {
            double mod = std::sqrt(row[j] * row[j] + row[d + j] * row[d + j]);
            if (mod < 1e-12) {
                row[j] = 1.0;
                row[d + j] = 0.0;
            } else {
                row[j] /= mod;
                row[d + j] /= mod;
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Checkpoints.

namespace detail {

constexpr uint32_t kCheckpointMagic = 0x45474b42;  // "BKGE"
constexpr uint32_t kCheckpointVersion = 1;

template <typename T>
void write_pod(std::ostream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    return v;
}

inline void write_table(std::ostream& out, const Matrix& m) {
    write_pod<uint64_t>(out, static_cast<uint64_t>(m.rows));
    write_pod<uint64_t>(out, static_cast<uint64_t>(m.cols));
    out.write(reinterpret_cast<const char*>(m.v.data()),
              static_cast<std::streamsize>(m.v.size() * sizeof(double)));
}

inline Matrix read_table(std::istream& in) {
    auto rows = static_cast<int>(read_pod<uint64_t>(in));
    auto cols = static_cast<int>(read_pod<uint64_t>(in));
    Matrix m(rows, cols);
    in.read(reinterpret_cast<char*>(m.v.data()),
            static_cast<std::streamsize>(m.v.size() * sizeof(double)));
    return m;
}

}  // namespace detail

inline void save_checkpoint(const ParamStore& st, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw data_error("cannot write checkpoint: " + path);
    detail::write_pod<uint32_t>(out, detail::kCheckpointMagic);
    detail::write_pod<uint32_t>(out, detail::kCheckpointVersion);
    detail::write_pod<uint32_t>(out, static_cast<uint32_t>(st.spec.family));
    detail::write_pod<uint32_t>(out, static_cast<uint32_t>(st.spec.dim));
    detail::write_pod<uint32_t>(out, static_cast<uint32_t>(st.n_entities));
    detail::write_pod<uint32_t>(out, static_cast<uint32_t>(st.n_relations));
    detail::write_pod<uint64_t>(out, st.spec.seed);
    detail::write_table(out, st.entities);
    detail::write_table(out, st.relations);
    detail::write_table(out, st.scores);
    if (!out) throw data_error("short write on checkpoint: " + path);
}

inline ParamStore load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw data_error("cannot open checkpoint: " + path);
    if (detail::read_pod<uint32_t>(in) != detail::kCheckpointMagic)
        throw data_error("not a checkpoint file: " + path);
    if (detail::read_pod<uint32_t>(in) != detail::kCheckpointVersion)
        throw data_error("unsupported checkpoint version: " + path);
    ParamStore st;
    st.spec.family = static_cast<ModelFamily>(detail::read_pod<uint32_t>(in));
    st.spec.dim = static_cast<int>(detail::read_pod<uint32_t>(in));
    st.n_entities = static_cast<int>(detail::read_pod<uint32_t>(in));
    st.n_relations = static_cast<int>(detail::read_pod<uint32_t>(in));
    st.spec.seed = detail::read_pod<uint64_t>(in);
    st.entities = detail::read_table(in);
    st.relations = detail::read_table(in);
    st.scores = detail::read_table(in);
    if (!in) throw data_error("truncated checkpoint: " + path);
    return st;
}

}  // namespace bregkge
