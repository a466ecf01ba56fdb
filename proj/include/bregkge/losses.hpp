#pragma once
// The six loss families, in sampled and exact-expectation form, plus noise
// samplers. Score vectors in, (loss value, d loss / d score) out; model
// parameters never appear here.

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "bregkge/common.hpp"
#include "bregkge/data.hpp"

namespace bregkge {

enum class LossFamily { Sce, SceLs, SceBc, NsUni, NsFreq, Sans };
enum class NoiseSource { Uniform, Unigram, ModelSelf };
enum class LossMode { Sampled, Exact };

inline const char* to_string(LossFamily f) {
    switch (f) {
        case LossFamily::Sce: return "sce";
        case LossFamily::SceLs: return "sce-ls";
        case LossFamily::SceBc: return "sce-bc";
        case LossFamily::NsUni: return "ns-uni";
        case LossFamily::NsFreq: return "ns-freq";
        case LossFamily::Sans: return "sans";
    }
    return "?";
}

struct LossSpec {
    LossFamily family = LossFamily::Sce;
    int nu = 1;              // negative samples per positive (ns/sans only)
    double lambda = 0.0;     // label smoothing weight (sce-ls only)
    double alpha = 1.0;      // adversarial temperature (sans only)
    NoiseSource noise = NoiseSource::Uniform;
    LossMode mode = LossMode::Sampled;
    double bc_clamp_min = 1e-3;  // clamp on the #x/#y weight of sce-bc
    double bc_clamp_max = 1e3;

    bool is_sce_family() const {
        return family == LossFamily::Sce || family == LossFamily::SceLs ||
               family == LossFamily::SceBc;
    }

    void validate() const {
        if (family == LossFamily::SceLs) {
            if (!(lambda >= 0.0 && lambda <= 1.0))
                throw config_error("loss: lambda must lie in [0,1]");
        } else if (lambda != 0.0) {
            throw config_error("loss: lambda is only valid with sce-ls");
        }
        if (family != LossFamily::Sans && alpha != 1.0)
            throw config_error("loss: alpha is only valid with sans");
        if (family == LossFamily::Sans && alpha < 0.0)
            throw config_error("loss: alpha must be >= 0");
        if (!is_sce_family() && nu < 1) throw config_error("loss: nu must be >= 1");
        if (noise == NoiseSource::ModelSelf && family != LossFamily::Sans)
            throw config_error("loss: model-self noise is only valid with sans");
        if (family == LossFamily::Sans && noise == NoiseSource::Unigram)
            throw config_error("loss: sans draws uniform negatives (model-self weighting)");
        if (bc_clamp_min <= 0.0 || bc_clamp_max < bc_clamp_min)
            throw config_error("loss: bad bc clamp bounds");
    }
};

// Loss value plus d loss / d score per touched candidate. Candidates may
// repeat (a sampled negative can collide with the positive); consumers add.
struct LossOut {
    double value = 0.0;
    std::vector<std::pair<EntityId, double>> grad;
};

inline std::vector<double> softmax(std::span<const double> scores) {
    std::vector<double> p(scores.size());
    double mx = scores[0];
    for (double s : scores) mx = std::max(mx, s);
    double z = 0.0;
    for (size_t i = 0; i < scores.size(); ++i) {
        p[i] = std::exp(scores[i] - mx);
        z += p[i];
    }
    for (double& pi : p) pi /= z;
    return p;
}

inline std::vector<double> softmax(const std::vector<double>& scores) {
    return softmax(std::span<const double>(scores));
}

// Cross entropy against (1-lambda) one-hot + lambda uniform. The gradient is
// p_theta - target, which sums to zero over candidates.
inline LossOut sce_loss(std::span<const double> scores, int gold, double lambda = 0.0) {
    if (gold < 0 || static_cast<size_t>(gold) >= scores.size())
        throw domain_error("sce_loss: gold index out of range");
    size_t n = scores.size();
    std::vector<double> p = softmax(scores);
    double u = lambda / static_cast<double>(n);
    LossOut out;
    out.value = -(1.0 - lambda) * clamped_log(p[gold]);
    if (lambda > 0.0)
        for (size_t i = 0; i < n; ++i) out.value -= u * clamped_log(p[i]);
    out.grad.reserve(n);
    for (size_t i = 0; i < n; ++i) {
        double target = u + (static_cast<int>(i) == gold ? 1.0 - lambda : 0.0);
        out.grad.emplace_back(static_cast<EntityId>(i), p[i] - target);
    }
    return out;
}

// Backward-corrected cross entropy: vanilla SCE on the gold label scaled by
// the clamped frequency ratio #x / #y.
inline LossOut sce_bc_loss(std::span<const double> scores, int gold, double weight,
                           const LossSpec& spec) {
    double w = std::min(std::max(weight, spec.bc_clamp_min), spec.bc_clamp_max);
    LossOut out = sce_loss(scores, gold, 0.0);
    out.value *= w;
    for (auto& [y, g] : out.grad) g *= w;
    return out;
}

inline double bc_weight(const FreqTable& freq, const Query& q, EntityId gold) {
    size_t cx = freq.query_count(q);
    size_t cy = freq.label_count(gold);
    if (cx == 0 || cy == 0)
        throw config_error("sce-bc: no frequency counts for the example's query or label");
    return static_cast<double>(cx) / static_cast<double>(cy);
}

// Sampled NS: -log sigma(f+) - sum_j w_j log sigma(-f-_j). Plain NS uses unit
// weights; SANS passes nu * softmax(alpha f-) so that alpha = 0 reproduces
// plain NS on the same draws.
inline LossOut ns_loss_sampled(double pos_score, EntityId pos_id,
                               std::span<const double> neg_scores,
                               std::span<const EntityId> neg_ids,
                               std::span<const double> neg_weights = {}) {
    if (neg_scores.size() != neg_ids.size())
        throw domain_error("ns_loss_sampled: negative score/id size mismatch");
    if (!neg_weights.empty() && neg_weights.size() != neg_scores.size())
        throw domain_error("ns_loss_sampled: negative weight size mismatch");
    LossOut out;
    out.value = softplus(-pos_score);
    out.grad.reserve(neg_scores.size() + 1);
    out.grad.emplace_back(pos_id, -sigmoid(-pos_score));
    for (size_t j = 0; j < neg_scores.size(); ++j) {
        double w = neg_weights.empty() ? 1.0 : neg_weights[j];
        out.value += w * softplus(neg_scores[j]);
        out.grad.emplace_back(neg_ids[j], w * sigmoid(neg_scores[j]));
    }
    return out;
}

// Exact-expectation NS: the sampled sum over negatives is replaced by
// nu * sum_y p_n(y) log sigma(-f(y)) over the whole label set.
inline LossOut ns_loss_exact(std::span<const double> scores, int gold,
                             std::span<const double> p_n, int nu) {
    if (scores.size() != p_n.size()) throw domain_error("ns_loss_exact: p_n size mismatch");
    if (nu < 1) throw config_error("ns_loss_exact: nu must be >= 1");
    LossOut out;
    out.value = softplus(-scores[gold]);
    out.grad.reserve(scores.size() + 1);
    out.grad.emplace_back(static_cast<EntityId>(gold), -sigmoid(-scores[gold]));
    for (size_t y = 0; y < scores.size(); ++y) {
        double w = static_cast<double>(nu) * p_n[y];
        if (w == 0.0) continue;
        out.value += w * softplus(scores[y]);
        out.grad.emplace_back(static_cast<EntityId>(y), w * sigmoid(scores[y]));
    }
    return out;
}

// Adversarial weights over drawn negatives: softmax(alpha * scores), treated
// as constants (no gradient flows through them).
inline std::vector<double> sans_weights(std::span<const double> neg_scores, double alpha) {
    if (alpha < 0.0) throw domain_error("sans_weights: alpha must be >= 0");
    std::vector<double> scaled(neg_scores.size());
    for (size_t i = 0; i < neg_scores.size(); ++i) scaled[i] = alpha * neg_scores[i];
    return softmax(scaled);
}

// Exact-expectation SANS: weights are the full tempered softmax over Y.
inline LossOut sans_loss_exact(std::span<const double> scores, int gold, double alpha, int nu) {
    std::vector<double> w = sans_weights(scores, alpha);
    LossOut out;
    out.value = softplus(-scores[gold]);
    out.grad.reserve(scores.size() + 1);
    out.grad.emplace_back(static_cast<EntityId>(gold), -sigmoid(-scores[gold]));
    for (size_t y = 0; y < scores.size(); ++y) {
        double wy = static_cast<double>(nu) * w[y];
        out.value += wy * softplus(scores[y]);
        out.grad.emplace_back(static_cast<EntityId>(y), wy * sigmoid(scores[y]));
    }
    return out;
}

// Deterministic draws from the unit interval; hand-rolled so that streams are
// reproducible across standard libraries.
struct Rng {
    std::mt19937_64 gen;

    explicit Rng(uint64_t seed) : gen(seed) {}
    explicit Rng(std::mt19937_64 g) : gen(g) {}

    double u01() { return static_cast<double>(gen() >> 11) * 0x1.0p-53; }

    int index(int n) {
        int i = static_cast<int>(u01() * n);
        return i >= n ? n - 1 : i;
    }

    // Box-Muller; two uniforms per draw, no cached spare.
    double normal() {
        double u1 = u01(), u2 = u01();
        if (u1 < 1e-300) u1 = 1e-300;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }
};

// Cumulative table for unigram draws.
struct SamplingTable {
    std::vector<double> cdf;

    explicit SamplingTable(const std::vector<double>& probs) {
        cdf.reserve(probs.size());
        double acc = 0.0;
        for (double p : probs) {
            acc += p;
            cdf.push_back(acc);
        }
        if (!cdf.empty()) cdf.back() = 1.0;
    }

    int draw(Rng& rng) const {
        double u = rng.u01();
        auto it = std::lower_bound(cdf.begin(), cdf.end(), u);
        if (it == cdf.end()) --it;
        return static_cast<int>(it - cdf.begin());
    }
};

// k i.i.d. label draws. Model-self noise draws uniformly; the adversarial
// part enters through sans_weights, not the sampler.
inline std::vector<EntityId> sample_noise(NoiseSource source, int k, int n_entities, Rng& rng,
                                          const SamplingTable* unigram = nullptr) {
    if (k < 1) throw config_error("sample_noise: k must be >= 1");
    if (n_entities < 1) throw config_error("sample_noise: empty label set");
    std::vector<EntityId> out(static_cast<size_t>(k));
    if (source == NoiseSource::Unigram) {
        if (unigram == nullptr) throw config_error("sample_noise: unigram table missing");
        for (auto& y : out) y = static_cast<EntityId>(unigram->draw(rng));
    } else {
        for (auto& y : out) y = static_cast<EntityId>(rng.index(n_entities));
    }
    return out;
}

}  // namespace bregkge
