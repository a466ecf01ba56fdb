#pragma once
// Full-batch and mini-batch training with SGD / Adagrad / Adam, plateau lr
// decay, patience-based early stopping, and warm starts from checkpoints.
//
// Determinism contract: negative-sample and dropout streams are derived from
// (seed, epoch, batch, position), per-example work is read-only against the
// parameter snapshot, and gradients are reduced in position order. Parallel
// and serial execution therefore produce bit-identical checkpoints.

#include <chrono>
#include <cmath>
#include <ostream>
#include <thread>
#include <vector>

#include "bregkge/common.hpp"
#include "bregkge/data.hpp"
#include "bregkge/eval.hpp"
#include "bregkge/losses.hpp"
#include "bregkge/models.hpp"

namespace bregkge {

enum class OptimKind { Sgd, Adagrad, Adam };

inline const char* to_string(OptimKind k) {
    switch (k) {
        case OptimKind::Sgd: return "sgd";
        case OptimKind::Adagrad: return "adagrad";
        case OptimKind::Adam: return "adam";
    }
    return "?";
}

struct OptimState {
    OptimKind kind = OptimKind::Sgd;
    Matrix m_ent, v_ent, m_rel, v_rel, m_sc, v_sc;  // adagrad uses only m_*
    int64_t step = 0;

    void reset(OptimKind k, const ParamStore& st) {
        kind = k;
        step = 0;
        m_ent = v_ent = m_rel = v_rel = m_sc = v_sc = Matrix();
        if (k == OptimKind::Sgd) return;
        m_ent = Matrix(st.entities.rows, st.entities.cols);
        m_rel = Matrix(st.relations.rows, st.relations.cols);
        m_sc = Matrix(st.scores.rows, st.scores.cols);
        if (k == OptimKind::Adam) {
            v_ent = Matrix(st.entities.rows, st.entities.cols);
            v_rel = Matrix(st.relations.rows, st.relations.cols);
            v_sc = Matrix(st.scores.rows, st.scores.cols);
        }
    }
};

namespace detail {

constexpr double kAdamBeta1 = 0.9;
constexpr double kAdamBeta2 = 0.999;
constexpr double kAdamEps = 1e-8;
constexpr double kAdagradEps = 1e-10;

inline void apply_rows(OptimKind kind, Matrix& param, const Matrix& grad,
                       const std::vector<int>& rows, Matrix& m, Matrix& v, double lr,
                       double bias1, double bias2) {
    for (int r : rows) {
        double* p = param.row(r);
        const double* g = grad.row(r);
        switch (kind) {
            case OptimKind::Sgd:
                for (int j = 0; j < param.cols; ++j) {
                    if (!std::isfinite(g[j])) throw numeric_error("non-finite gradient");
                    p[j] -= lr * g[j];
                }
                break;
            case OptimKind::Adagrad: {
                double* acc = m.row(r);
                for (int j = 0; j < param.cols; ++j) {
                    if (!std::isfinite(g[j])) throw numeric_error("non-finite gradient");
                    acc[j] += g[j] * g[j];
                    p[j] -= lr * g[j] / (std::sqrt(acc[j]) + kAdagradEps);
                }
                break;
            }
            case OptimKind::Adam: {
                double* mm = m.row(r);
                double* vv = v.row(r);
                for (int j = 0; j < param.cols; ++j) {
                    if (!std::isfinite(g[j])) throw numeric_error("non-finite gradient");
                    mm[j] = kAdamBeta1 * mm[j] + (1.0 - kAdamBeta1) * g[j];
                    vv[j] = kAdamBeta2 * vv[j] + (1.0 - kAdamBeta2) * g[j] * g[j];
                    double mhat = mm[j] / bias1;
                    double vhat = vv[j] / bias2;
                    p[j] -= lr * mhat / (std::sqrt(vhat) + kAdamEps);
                }
                break;
            }
        }
    }
}

}  // namespace detail

// One update over the rows touched by `grads`. Adam moments are kept lazily
// per row with a global step counter for bias correction; RotatE rotations
// are re-projected to unit modulus afterwards.
inline void optimizer_step(ParamStore& st, const GradBuffer& grads, OptimState& state,
                           double lr) {
    ++state.step;
    double bias1 = 1.0, bias2 = 1.0;
    if (state.kind == OptimKind::Adam) {
        bias1 = 1.0 - std::pow(detail::kAdamBeta1, static_cast<double>(state.step));
        bias2 = 1.0 - std::pow(detail::kAdamBeta2, static_cast<double>(state.step));
    }
    detail::apply_rows(state.kind, st.entities, grads.entities, grads.touched_entities,
                       state.m_ent, state.v_ent, lr, bias1, bias2);
    detail::apply_rows(state.kind, st.relations, grads.relations, grads.touched_relations,
                       state.m_rel, state.v_rel, lr, bias1, bias2);
    detail::apply_rows(state.kind, st.scores, grads.scores, grads.touched_scores, state.m_sc,
                       state.v_sc, lr, bias1, bias2);
    renormalize_rotations(st);
}

enum class LambdaSchedule { Constant, LinearWarmup };

struct TrainConfig {
    ModelSpec model;
    LossSpec loss;
    OptimKind optim = OptimKind::Adam;
    double lr = 0.05;
    double decay = 1.0;  // multiplicative lr decay on non-improving dev evals
    int patience = 10;   // consecutive non-improving evals before stopping; 0 = off
    int batch_size = 0;  // 0 = full batch
    int max_epochs = 100;
    int eval_every = 5;
    int reg_order = 0;  // 0 = off, else 2 or 3
    double reg_entity = 0.0;
    double reg_relation = 0.0;
    double dropout_entity = 0.0;
    double dropout_relation = 0.0;
    LambdaSchedule lambda_schedule = LambdaSchedule::Constant;
    uint64_t seed = 1;
    int threads = 1;
    bool backtracking = false;  // full-batch sgd only: halve lr on loss increase

    void validate() const {
        loss.validate();
        if (lr <= 0.0) throw config_error("optim: lr must be > 0");
        if (!(decay > 0.0 && decay <= 1.0)) throw config_error("optim: decay must be in (0,1]");
        if (patience < 0) throw config_error("optim: patience must be >= 0");
        if (eval_every < 1) throw config_error("optim: eval-every must be >= 1");
        if (max_epochs < 0) throw config_error("optim: max-epochs must be >= 0");
        if (batch_size < 0) throw config_error("optim: batch-size must be >= 0");
        if (reg_order != 0 && reg_order != 2 && reg_order != 3)
            throw config_error("optim: reg-order must be 2 or 3");
        if (dropout_entity < 0.0 || dropout_entity >= 1.0 || dropout_relation < 0.0 ||
            dropout_relation >= 1.0)
            throw config_error("optim: dropout rates must lie in [0,1)");
        if (threads < 1) throw config_error("optim: threads must be >= 1");
        if (backtracking) {
            if (optim != OptimKind::Sgd || batch_size != 0)
                throw config_error("optim: backtracking needs full-batch sgd");
            if (loss.mode != LossMode::Exact && !loss.is_sce_family())
                throw config_error("optim: backtracking needs a deterministic loss");
            if (dropout_entity > 0.0 || dropout_relation > 0.0 || reg_order != 0)
                throw config_error("optim: backtracking excludes dropout/regularization");
        }
    }
};

struct TrainReport {
    std::vector<double> epoch_loss;
    std::vector<std::pair<int, double>> dev_history;  // (epoch, mrr)
    int best_epoch = 0;
    double best_dev_mrr = 0.0;
    int epochs_run = 0;
    bool early_stopped = false;
    double final_lr = 0.0;
    double wall_seconds = 0.0;  // excluded from the determinism contract
};

// Shared per-dataset context for loss evaluation: frequency weights for
// sce-bc and the noise distributions for the ns family.
struct LossContext {
    FreqTable freq;
    std::vector<double> unigram;
    std::vector<double> uniform;
    SamplingTable unigram_table;

    explicit LossContext(const QuerySet& qs)
        : freq(frequency_table(qs)),
          unigram(freq.unigram()),
          uniform(static_cast<size_t>(qs.n_entities),
                  1.0 / static_cast<double>(std::max(1, qs.n_entities))),
          unigram_table(unigram) {}
};

namespace detail {

struct ExampleWork {
    LossOut loss;
    std::vector<double> masked_anchor, masked_rel;
    std::vector<double> anchor_mask, rel_mask;
    bool has_mask = false;
};

inline void make_mask(std::vector<double>& mask, std::vector<double>& masked, const double* src,
                      int n, double rate, Rng& rng) {
    mask.resize(static_cast<size_t>(n));
    masked.resize(static_cast<size_t>(n));
    double scale = 1.0 / (1.0 - rate);
    for (int j = 0; j < n; ++j) {
        mask[j] = rng.u01() < rate ? 0.0 : scale;
        masked[j] = src[j] * mask[j];
    }
}

inline LossOut eval_loss(const ParamStore& st, const QueryAnswer& qa, const LossSpec& spec,
                         const LossContext& ctx, const double* a, const double* r,
                         Rng* noise_rng) {
    const Query& q = qa.query;
    switch (spec.family) {
        case LossFamily::Sce:
        case LossFamily::SceLs: {
            std::vector<double> scores = score_all_rows(st, q, a, r);
            return sce_loss(scores, qa.answer, spec.lambda);
        }
        case LossFamily::SceBc: {
            std::vector<double> scores = score_all_rows(st, q, a, r);
            return sce_bc_loss(scores, qa.answer, bc_weight(ctx.freq, q, qa.answer), spec);
        }
        case LossFamily::NsUni:
        case LossFamily::NsFreq: {
            if (spec.mode == LossMode::Exact) {
                std::vector<double> scores = score_all_rows(st, q, a, r);
                const auto& p_n = spec.family == LossFamily::NsUni ? ctx.uniform : ctx.unigram;
                return ns_loss_exact(scores, qa.answer, p_n, spec.nu);
            }
            NoiseSource src = spec.family == LossFamily::NsUni ? NoiseSource::Uniform
                                                               : NoiseSource::Unigram;
            std::vector<EntityId> negs =
                sample_noise(src, spec.nu, st.n_entities, *noise_rng, &ctx.unigram_table);
            std::vector<double> neg_scores = score_subset(st, q, negs);
            double pos = score_one(st, a, r, qa.answer, q);
            return ns_loss_sampled(pos, qa.answer, neg_scores, negs);
        }
        case LossFamily::Sans: {
            if (spec.mode == LossMode::Exact) {
                std::vector<double> scores = score_all_rows(st, q, a, r);
                return sans_loss_exact(scores, qa.answer, spec.alpha, spec.nu);
            }
            std::vector<EntityId> negs =
                sample_noise(NoiseSource::Uniform, spec.nu, st.n_entities, *noise_rng, nullptr);
            std::vector<double> neg_scores = score_subset(st, q, negs);
            std::vector<double> w = sans_weights(neg_scores, spec.alpha);
            for (double& wi : w) wi *= static_cast<double>(spec.nu);
            double pos = score_one(st, a, r, qa.answer, q);
            return ns_loss_sampled(pos, qa.answer, neg_scores, negs, w);
        }
    }
    throw config_error("unknown loss family");
}

inline ExampleWork compute_example(const ParamStore& st, const QueryAnswer& qa,
                                   const TrainConfig& cfg, const LossSpec& spec,
                                   const LossContext& ctx, int epoch, int batch, int pos) {
    ExampleWork w;
    QueryRows rows = query_rows(st, qa.query);
    const double* a = rows.anchor;
    const double* r = rows.rel;
    if (st.spec.family != ModelFamily::Tabular &&
        (cfg.dropout_entity > 0.0 || cfg.dropout_relation > 0.0)) {
        Rng drop_rng(make_stream(cfg.seed ^ 0xD120D120ULL, static_cast<uint64_t>(epoch),
                                 static_cast<uint64_t>(batch), static_cast<uint64_t>(pos)));
        w.has_mask = true;
        make_mask(w.anchor_mask, w.masked_anchor, a, st.spec.entity_width(),
                  cfg.dropout_entity, drop_rng);
        make_mask(w.rel_mask, w.masked_rel, r, st.spec.relation_width(), cfg.dropout_relation,
                  drop_rng);
        a = w.masked_anchor.data();
        r = w.masked_rel.data();
    }
    Rng noise_rng(make_stream(cfg.seed ^ 0xA11CE5ULL, static_cast<uint64_t>(epoch),
                              static_cast<uint64_t>(batch), static_cast<uint64_t>(pos)));
    w.loss = eval_loss(st, qa, spec, ctx, a, r, &noise_rng);
    return w;
}

// reg gradient d/d theta of w * sum |theta|^p over one row
inline void add_reg_row(double* g, const double* p, int n, int order, double w) {
    if (order == 2) {
        for (int j = 0; j < n; ++j) g[j] += 2.0 * w * p[j];
    } else {
        for (int j = 0; j < n; ++j) g[j] += 3.0 * w * p[j] * std::abs(p[j]);
    }
}

inline double reg_row_value(const double* p, int n, int order, double w) {
    double s = 0.0;
    if (order == 2)
        for (int j = 0; j < n; ++j) s += p[j] * p[j];
    else
        for (int j = 0; j < n; ++j) s += std::abs(p[j]) * std::abs(p[j]) * std::abs(p[j]);
    return w * s;
}

}  // namespace detail

// Mean per-example loss of `spec` (forced exact-expectation, no dropout)
// over a query set. Used for backtracking and for measuring the distance of
// a trained model from a loss's optimum.
inline double mean_exact_loss(const ParamStore& st, const QuerySet& qs, LossSpec spec,
                              const LossContext& ctx) {
    spec.mode = LossMode::Exact;
    double total = 0.0;
    for (const QueryAnswer& qa : qs.pairs) {
        QueryRows rows = query_rows(st, qa.query);
        total += detail::eval_loss(st, qa, spec, ctx, rows.anchor, rows.rel, nullptr).value;
    }
    return total / static_cast<double>(qs.size());
}

// Loads a checkpoint for warm starting; optimizer state is reset by train().
inline ParamStore warm_start(const ModelSpec& expected, int n_entities, int n_relations,
                             const std::string& path) {
    ParamStore st = load_checkpoint(path);
    std::string mismatch;
    if (st.spec.family != expected.family) mismatch += " family";
    if (st.spec.dim != expected.dim) mismatch += " dim";
    if (st.n_entities != n_entities) mismatch += " n_entities";
    if (st.n_relations != n_relations) mismatch += " n_relations";
    if (!mismatch.empty())
        throw config_error("warm-start checkpoint mismatch on:" + mismatch);
    return st;
}

inline std::pair<ParamStore, TrainReport> train(const TrainConfig& cfg, const QuerySet& train_qs,
                                                const QuerySet& dev_qs,
                                                const FilterIndex* dev_filter = nullptr,
                                                const ParamStore* initial = nullptr,
                                                std::ostream* progress = nullptr) {
    cfg.validate();
    if (train_qs.size() == 0) throw data_error("train: empty query set");
    auto t0 = std::chrono::steady_clock::now();

    ParamStore st = initial != nullptr
                        ? *initial
                        : init_params(cfg.model, train_qs.n_entities, train_qs.n_relations);
    LossContext ctx(train_qs);
    OptimState state;
    state.reset(cfg.optim, st);
    GradBuffer grads(st);

    TrainReport report;
    double lr = cfg.lr;
    double best_mrr = -1.0;
    int non_improving = 0;
    ParamStore best = st;
    int best_epoch = 0;

    const size_t n = train_qs.size();
    const size_t batch_size = cfg.batch_size == 0 ? n : static_cast<size_t>(cfg.batch_size);
    std::vector<uint32_t> order(n);
    for (size_t i = 0; i < n; ++i) order[i] = static_cast<uint32_t>(i);

    std::vector<detail::ExampleWork> works;
    std::vector<double> danchor, drel;

    for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        LossSpec spec = cfg.loss;
        if (spec.family == LossFamily::SceLs &&
            cfg.lambda_schedule == LambdaSchedule::LinearWarmup && cfg.max_epochs > 1)
            spec.lambda = cfg.loss.lambda * static_cast<double>(epoch - 1) /
                          static_cast<double>(cfg.max_epochs - 1);

        {
            Rng shuffle_rng(make_stream(cfg.seed ^ 0x5F0FF1EULL, static_cast<uint64_t>(epoch)));
            for (size_t i = n; i > 1; --i)
                std::swap(order[i - 1], order[shuffle_rng.index(static_cast<int>(i))]);
        }

        double epoch_total = 0.0;
        int batch_idx = 0;
        for (size_t start = 0; start < n; start += batch_size, ++batch_idx) {
            size_t stop = std::min(n, start + batch_size);
            size_t bn = stop - start;
            works.resize(bn);

            auto run_chunk = [&](size_t from, size_t to) {
                for (size_t i = from; i < to; ++i)
                    works[i] = detail::compute_example(st, train_qs.pairs[order[start + i]], cfg,
                                                       spec, ctx, epoch, batch_idx,
                                                       static_cast<int>(i));
            };
            if (cfg.threads > 1 && bn > 1) {
                size_t workers = std::min<size_t>(static_cast<size_t>(cfg.threads), bn);
                std::vector<std::thread> pool;
                size_t chunk = (bn + workers - 1) / workers;
                for (size_t w = 0; w < workers; ++w) {
                    size_t from = w * chunk, to = std::min(bn, from + chunk);
                    if (from >= to) break;
                    pool.emplace_back(run_chunk, from, to);
                }
                for (auto& th : pool) th.join();
            } else {
                run_chunk(0, bn);
            }

            grads.clear();
            double batch_loss = 0.0;
            for (size_t i = 0; i < bn; ++i) {
                const QueryAnswer& qa = train_qs.pairs[order[start + i]];
                detail::ExampleWork& w = works[i];
                batch_loss += w.loss.value;
                QueryRows rows = query_rows(st, qa.query);
                const double* a = w.has_mask ? w.masked_anchor.data() : rows.anchor;
                const double* r = w.has_mask ? w.masked_rel.data() : rows.rel;
                grad_accumulate(st, qa.query, a, r, w.loss.grad, grads, danchor, drel,
                                w.has_mask ? w.anchor_mask.data() : nullptr,
                                w.has_mask ? w.rel_mask.data() : nullptr);
            }
            if (!std::isfinite(batch_loss))
                throw numeric_error("training diverged: non-finite loss at epoch " +
                                    std::to_string(epoch));

            if (cfg.reg_order != 0) {
                for (int row : grads.touched_entities) {
                    batch_loss += detail::reg_row_value(st.entities.row(row), st.entities.cols,
                                                        cfg.reg_order, cfg.reg_entity);
                    detail::add_reg_row(grads.entities.row(row), st.entities.row(row),
                                        st.entities.cols, cfg.reg_order, cfg.reg_entity);
                }
                for (int row : grads.touched_relations) {
                    batch_loss += detail::reg_row_value(st.relations.row(row), st.relations.cols,
                                                        cfg.reg_order, cfg.reg_relation);
                    detail::add_reg_row(grads.relations.row(row), st.relations.row(row),
                                        st.relations.cols, cfg.reg_order, cfg.reg_relation);
                }
            }
            epoch_total += batch_loss;

            if (cfg.backtracking) {
                double before = batch_loss / static_cast<double>(bn);
                ParamStore saved = st;
                for (int attempt = 0; attempt < 60; ++attempt) {
                    OptimState trial = state;
                    optimizer_step(st, grads, trial, lr);
                    double after = mean_exact_loss(st, train_qs, spec, ctx);
                    if (after <= before) {
                        state = trial;
                        break;
                    }
                    st = saved;
                    lr *= 0.5;
                }
            } else {
                optimizer_step(st, grads, state, lr);
            }
        }

        report.epoch_loss.push_back(epoch_total / static_cast<double>(n));
        report.epochs_run = epoch;

        bool evaluated = false;
        if (dev_qs.size() > 0 && (epoch % cfg.eval_every == 0 || epoch == cfg.max_epochs)) {
            evaluated = true;
            FilterIndex empty;
            double mrr =
                evaluate_ranks(st, dev_qs, dev_filter != nullptr ? *dev_filter : empty).mrr;
            report.dev_history.emplace_back(epoch, mrr);
            if (mrr > best_mrr) {
                best_mrr = mrr;
                best = st;
                best_epoch = epoch;
                non_improving = 0;
            } else {
                ++non_improving;
                lr *= cfg.decay;
            }
        }

        if (progress != nullptr) {
            double last_mrr = report.dev_history.empty()
                                  ? std::numeric_limits<double>::quiet_NaN()
                                  : report.dev_history.back().second;
            (*progress) << epoch << '\t' << report.epoch_loss.back() << '\t' << last_mrr
                        << '\n';
        }

        if (evaluated && cfg.patience > 0 && non_improving >= cfg.patience) {
            report.early_stopped = true;
            break;
        }
    }

    report.final_lr = lr;
    if (best_mrr >= 0.0) {
        report.best_epoch = best_epoch;
        report.best_dev_mrr = best_mrr;
    } else {
        best = st;  // no dev evaluation happened; keep the final parameters
        report.best_epoch = report.epochs_run;
    }
    report.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return {std::move(best), std::move(report)};
}

}  // namespace bregkge
