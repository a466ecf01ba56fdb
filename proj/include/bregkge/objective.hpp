#pragma once
// Closed-form objective distributions: where each loss family drives the
// model's predictive distribution at its optimum, plus the transport
// coefficient, the SANS fixed-point map, and PMI recovery.

#include <cmath>
#include <vector>

#include "bregkge/common.hpp"

namespace bregkge {

namespace detail {
inline void require_noise_positive(const std::vector<double>& p_n) {
    for (double p : p_n)
        if (p <= 0.0) throw domain_error("noise distribution must be strictly positive");
}
}  // namespace detail

// Objective distribution of the NS loss: p_d(y) / p_n(y), normalized.
// Independent of the negative-sample count.
inline std::vector<double> objective_ns(const std::vector<double>& p_d,
                                        const std::vector<double>& p_n) {
    if (p_d.size() != p_n.size()) throw domain_error("objective_ns: size mismatch");
    detail::require_noise_positive(p_n);
    std::vector<double> out(p_d.size());
    double z = 0.0;
    for (size_t i = 0; i < p_d.size(); ++i) {
        out[i] = p_d[i] / p_n[i];
        z += out[i];
    }
    if (z <= 0.0) throw domain_error("objective_ns: p_d has no mass");
    for (double& o : out) o /= z;
    return out;
}

// T_{x,y} = p_n(y) * sum_i p_d(i)/p_n(i). The NS objective equals p_d(y)/T.
inline double transport_coeff(const std::vector<double>& p_d, const std::vector<double>& p_n,
                              int y) {
    if (p_d.size() != p_n.size()) throw domain_error("transport_coeff: size mismatch");
    if (y < 0 || static_cast<size_t>(y) >= p_d.size())
        throw domain_error("transport_coeff: label index out of range");
    detail::require_noise_positive(p_n);
    double ratio_sum = 0.0;
    for (size_t i = 0; i < p_d.size(); ++i) ratio_sum += p_d[i] / p_n[i];
    return p_n[y] * ratio_sum;
}

// Mixture approximation of the SANS objective: (1-lambda) p_d + lambda * u.
inline std::vector<double> objective_sans_mixture(const std::vector<double>& p_d, double lambda) {
    if (!(lambda >= 0.0 && lambda <= 1.0))
        throw domain_error("objective_sans_mixture: lambda must lie in [0,1]");
    std::vector<double> out(p_d.size());
    double u = 1.0 / static_cast<double>(p_d.size());
    for (size_t i = 0; i < p_d.size(); ++i) out[i] = (1.0 - lambda) * p_d[i] + lambda * u;
    return out;
}

// One step of the SANS self-consistency map: the NS objective with the
// previous iterate as the noise distribution. Uniform maps to p_d, p_d maps
// to uniform; iterating alternates between the two.
inline std::vector<double> sans_fixed_point_step(const std::vector<double>& p_d,
                                                 const std::vector<double>& p_prev) {
    return objective_ns(p_d, p_prev);
}

// PMI matrix log( p(x,y) / (p(x) p(y)) ) from a strictly positive joint. This
// is the converged score table of NS under unigram noise with one negative.
inline Matrix pmi_from_optimum(const Matrix& joint) {
    double total = 0.0;
    for (double v : joint.v) {
        if (v <= 0.0) throw domain_error("pmi_from_optimum: joint must be strictly positive");
        total += v;
    }
    if (std::abs(total - 1.0) > 1e-9)
        throw domain_error("pmi_from_optimum: joint must sum to 1");
    std::vector<double> px(joint.rows, 0.0), py(joint.cols, 0.0);
    for (int x = 0; x < joint.rows; ++x)
        for (int y = 0; y < joint.cols; ++y) {
            px[x] += joint.at(x, y);
            py[y] += joint.at(x, y);
        }
    Matrix pmi(joint.rows, joint.cols);
    for (int x = 0; x < joint.rows; ++x)
        for (int y = 0; y < joint.cols; ++y)
            pmi.at(x, y) = std::log(joint.at(x, y) / (px[x] * py[y]));
    return pmi;
}

}  // namespace bregkge
