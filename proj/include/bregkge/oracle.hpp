#pragma once
// Numeric certification of the objective distributions. A fully expressive
// tabular score matrix is trained by plain gradient descent on the
// exact-expectation form of each loss; at convergence its softmax must match
// the closed-form objective. Worlds are small enumerable (X, Y) grids.

#include <string>
#include <vector>

#include "bregkge/bregman.hpp"
#include "bregkge/common.hpp"
#include "bregkge/losses.hpp"
#include "bregkge/objective.hpp"

namespace bregkge {

// An enumerable world: query weights p(x), conditionals p_d(y|x), and a
// strictly positive noise distribution p_n(y|x).
struct World {
    std::vector<double> p_x;
    Matrix p_d;
    Matrix p_n;

    int n_queries() const { return p_d.rows; }
    int n_labels() const { return p_d.cols; }
};

struct ObjectiveSpec {
    LossFamily family = LossFamily::Sce;
    double lambda = 0.0;  // sce-ls mixture weight
    double alpha = 1.0;   // sans temperature
    int nu = 1;
};

// Entries are bounded away from zero so ratios and transport coefficients
// stay well conditioned.
inline std::vector<double> random_simplex(int n, Rng& rng) {
    std::vector<double> v(static_cast<size_t>(n));
    double z = 0.0;
    for (double& x : v) {
        x = 0.1 + rng.u01();
        z += x;
    }
    for (double& x : v) x /= z;
    return v;
}

inline World random_world(int max_x, int max_y, Rng& rng) {
    World w;
    int nx = 1 + rng.index(max_x);
    int ny = 2 + rng.index(std::max(1, max_y - 1));
    w.p_x = random_simplex(nx, rng);
    w.p_d = Matrix(nx, ny);
    w.p_n = Matrix(nx, ny);
    for (int x = 0; x < nx; ++x) {
        std::vector<double> d = random_simplex(ny, rng);
        std::vector<double> n = random_simplex(ny, rng);
        std::copy(d.begin(), d.end(), w.p_d.row(x));
        std::copy(n.begin(), n.end(), w.p_n.row(x));
    }
    return w;
}

// Closed-form objective distribution per query (the Table 1 row). SANS has
// no analytic optimum; its boundary fixed points are checked separately.
inline Matrix closed_form_objective(const ObjectiveSpec& spec, const World& w) {
    Matrix out(w.p_d.rows, w.p_d.cols);
    for (int x = 0; x < w.p_d.rows; ++x) {
        std::vector<double> pd(w.p_d.row(x), w.p_d.row(x) + w.p_d.cols);
        std::vector<double> row;
        switch (spec.family) {
            case LossFamily::Sce:
            case LossFamily::NsUni: row = pd; break;
            case LossFamily::SceBc:
            case LossFamily::NsFreq: {
                std::vector<double> pn(w.p_n.row(x), w.p_n.row(x) + w.p_n.cols);
                row = objective_ns(pd, pn);
                break;
            }
            case LossFamily::SceLs: row = objective_sans_mixture(pd, spec.lambda); break;
            case LossFamily::Sans:
                throw config_error("sans has no closed-form objective");
        }
        std::copy(row.begin(), row.end(), out.row(x));
    }
    return out;
}

namespace detail {

// Exact-expectation loss of a score table, assembled from the per-example
// loss implementations: the expectation over gold labels y ~ p_d(y|x) of the
// per-example loss, weighted by p(x).
inline double world_loss(const ObjectiveSpec& spec, const World& w, const Matrix& scores,
                         Matrix* grad) {
    if (grad != nullptr) grad->fill(0.0);
    const int ny = w.n_labels();
    double total = 0.0;
    LossSpec ls;
    ls.bc_clamp_min = 1e-12;  // the oracle uses the untruncated transport weight
    ls.bc_clamp_max = 1e12;
    for (int x = 0; x < w.n_queries(); ++x) {
        std::span<const double> srow(scores.row(x), static_cast<size_t>(ny));
        const double* pd = w.p_d.row(x);
        const double* pn = w.p_n.row(x);
        double px = w.p_x[x];
        auto fold = [&](const LossOut& lo, double weight) {
            total += px * weight * lo.value;
            if (grad != nullptr) {
                double* grow = grad->row(x);
                for (const auto& [y, g] : lo.grad) grow[y] += px * weight * g;
            }
        };
        switch (spec.family) {
            case LossFamily::Sce:
            case LossFamily::SceLs:
                for (int y = 0; y < ny; ++y)
                    if (pd[y] > 0.0) fold(sce_loss(srow, y, spec.lambda), pd[y]);
                break;
            case LossFamily::SceBc: {
                std::vector<double> pdv(pd, pd + ny), pnv(pn, pn + ny);
                for (int y = 0; y < ny; ++y) {
                    if (pd[y] <= 0.0) continue;
                    double t = transport_coeff(pdv, pnv, y);
                    fold(sce_bc_loss(srow, y, 1.0 / t, ls), pd[y]);
                }
                break;
            }
            case LossFamily::NsUni:
            case LossFamily::NsFreq: {
                std::vector<double> noise(static_cast<size_t>(ny));
                if (spec.family == LossFamily::NsUni)
                    std::fill(noise.begin(), noise.end(), 1.0 / ny);
                else
                    noise.assign(pn, pn + ny);
                // the negative expectation term is gold-independent, so the
                // p_d-expectation of the per-example loss folds in one pass
                for (int y = 0; y < ny; ++y)
                    if (pd[y] > 0.0) fold(ns_loss_exact(srow, y, noise, spec.nu), pd[y]);
                break;
            }
            case LossFamily::Sans:
                for (int y = 0; y < ny; ++y)
                    if (pd[y] > 0.0)
                        fold(sans_loss_exact(srow, y, spec.alpha, spec.nu), pd[y]);
                break;
        }
    }
    return total;
}

}  // namespace detail

struct OracleResult {
    Matrix probs;   // softmax of the converged scores, per query
    Matrix scores;  // converged score table
    long iterations = 0;
    double grad_norm = 0.0;
    double loss = 0.0;
};

struct OracleOptions {
    long max_iters = 1000000;
    double grad_tol = 1e-8;
    double lr = 1.0;
};

// Full-batch gradient descent with halving on loss increase, run until the
// gradient max-norm is below tolerance. Throws on non-convergence.
inline OracleResult brute_force_optimum(const ObjectiveSpec& spec, const World& w,
                                        OracleOptions opt = {}) {
    Matrix scores(w.n_queries(), w.n_labels(), 0.0);
    Matrix grad(w.n_queries(), w.n_labels());
    double loss = detail::world_loss(spec, w, scores, &grad);
    double lr = opt.lr;
    OracleResult res;
    for (res.iterations = 0; res.iterations < opt.max_iters; ++res.iterations) {
        res.grad_norm = 0.0;
        for (double g : grad.v) res.grad_norm = std::max(res.grad_norm, std::abs(g));
        if (res.grad_norm < opt.grad_tol) {
            res.scores = scores;
            res.loss = loss;
            res.probs = Matrix(scores.rows, scores.cols);
            for (int x = 0; x < scores.rows; ++x) {
                std::vector<double> p =
                    softmax(std::span<const double>(scores.row(x), scores.cols));
                std::copy(p.begin(), p.end(), res.probs.row(x));
            }
            return res;
        }
        Matrix trial = scores;
        for (size_t i = 0; i < trial.v.size(); ++i) trial.v[i] -= lr * grad.v[i];
        Matrix trial_grad(grad.rows, grad.cols);
        double trial_loss = detail::world_loss(spec, w, trial, &trial_grad);
        if (trial_loss > loss) {
            lr *= 0.5;
            if (lr < 1e-300) break;
            continue;
        }
        scores = std::move(trial);
        grad = std::move(trial_grad);
        loss = trial_loss;
        lr *= 1.1;
    }
    throw numeric_error("oracle descent did not converge: gradient max-norm " +
                        std::to_string(res.grad_norm) + " after " +
                        std::to_string(res.iterations) + " iterations");
}

// Both sides of the expectation-form NS / Bregman identity, computed through
// independent code paths: the loss route via the per-example losses, the
// divergence route via the reduced Bregman functional.
inline std::pair<double, double> ns_bregman_identity(const World& w, const Matrix& scores,
                                                     int nu) {
    ObjectiveSpec spec;
    spec.family = LossFamily::NsFreq;
    spec.nu = nu;
    double loss = detail::world_loss(spec, w, scores, nullptr);

    Matrix f(w.p_d.rows, w.p_d.cols), g(w.p_d.rows, w.p_d.cols),
        weights(w.p_d.rows, w.p_d.cols);
    for (int x = 0; x < w.p_d.rows; ++x)
        for (int y = 0; y < w.p_d.cols; ++y) {
            if (w.p_d.at(x, y) <= 0.0) throw domain_error("identity needs positive p_d");
            f.at(x, y) = nu * w.p_n.at(x, y) / w.p_d.at(x, y);
            g.at(x, y) = std::exp(-scores.at(x, y));
            weights.at(x, y) = w.p_x[x] * w.p_d.at(x, y);
        }
    double btilde = expected_divergence_tilde(PsiKind::NsBinary, f, g, weights);
    return {loss, btilde};
}

// Trace of repeated sans_fixed_point_step applications.
struct FixedPointTrace {
    std::vector<std::vector<double>> iterates;
    std::vector<double> residuals;  // max-abs change per step
};

inline FixedPointTrace sans_fixed_point_trace(const std::vector<double>& p_d,
                                              std::vector<double> start, int steps) {
    FixedPointTrace tr;
    tr.iterates.push_back(start);
    for (int s = 0; s < steps; ++s) {
        std::vector<double> next = sans_fixed_point_step(p_d, tr.iterates.back());
        double r = 0.0;
        for (size_t i = 0; i < next.size(); ++i)
            r = std::max(r, std::abs(next[i] - tr.iterates.back()[i]));
        tr.residuals.push_back(r);
        tr.iterates.push_back(std::move(next));
    }
    return tr;
}

// ---------------------------------------------------------------------------
// Certification harness shared by the CLI and the acceptance suite.

struct CertRow {
    std::string row;
    double max_abs_dev = 0.0;
    long iterations = 0;
    double grad_norm = 0.0;
    int worlds = 0;
    bool pass = false;
};

inline const LossFamily kAnalyticRows[] = {LossFamily::NsUni, LossFamily::NsFreq,
                                           LossFamily::Sce, LossFamily::SceBc,
                                           LossFamily::SceLs};

// One Table 1 row over `n_worlds` random worlds; reports the worst deviation
// of the brute-force optimum from the closed form.
inline CertRow certify_row(LossFamily family, int n_worlds, uint64_t seed, int nu,
                           double tolerance = 1e-3, int max_x = 8, int max_y = 8) {
    CertRow out;
    out.row = to_string(family);
    out.worlds = n_worlds;
    Rng rng(make_stream(seed, 0x0AC1E, static_cast<uint64_t>(family)));
    for (int i = 0; i < n_worlds; ++i) {
        World w = random_world(max_x, max_y, rng);
        ObjectiveSpec spec;
        spec.family = family;
        spec.nu = nu;
        spec.lambda = family == LossFamily::SceLs ? rng.u01() : 0.0;
        OracleResult res = brute_force_optimum(spec, w);
        Matrix expect = closed_form_objective(spec, w);
        out.max_abs_dev = std::max(out.max_abs_dev, max_abs_diff(res.probs, expect));
        out.iterations = std::max(out.iterations, res.iterations);
        out.grad_norm = std::max(out.grad_norm, res.grad_norm);
    }
    out.pass = out.max_abs_dev < tolerance;
    return out;
}

}  // namespace bregkge
