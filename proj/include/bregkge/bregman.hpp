#pragma once
// Generator functions for the two divergence families, pointwise and expected
// Bregman divergences, divergence curves, and the multi-vs-binary KL bound.
//
// SceEntropy is the negative-entropy generator over probability vectors; on
// scalars it is the two-point expansion z log z + (1-z) log(1-z) used for
// curves. NsBinary is z log z - (1+z) log(1+z) on positive scalars.

#include <cmath>
#include <fstream>
#include <iomanip>
#include <vector>

#include "bregkge/common.hpp"

namespace bregkge {

enum class PsiKind { SceEntropy, NsBinary };

inline const char* to_string(PsiKind k) {
    return k == PsiKind::SceEntropy ? "sce-entropy" : "ns-binary";
}

// Scalar generator. NsBinary needs z > 0; the SceEntropy expansion needs
// z in (0,1); boundary values are eps-clamped before logs.
inline double psi(PsiKind kind, double z) {
    if (kind == PsiKind::NsBinary) {
        if (z <= 0.0) throw domain_error("ns-binary psi needs z > 0");
        return z * std::log(z) - (1.0 + z) * std::log1p(z);
    }
    if (z < 0.0 || z > 1.0) throw domain_error("sce-entropy scalar psi needs z in [0,1]");
    return z * clamped_log(z) + (1.0 - z) * clamped_log(1.0 - z);
}

inline double psi_grad(PsiKind kind, double z) {
    if (kind == PsiKind::NsBinary) {
        if (z <= 0.0) throw domain_error("ns-binary psi needs z > 0");
        return std::log(z) - std::log1p(z);
    }
    if (z < 0.0 || z > 1.0) throw domain_error("sce-entropy scalar psi needs z in [0,1]");
    return clamped_log(z) - clamped_log(1.0 - z);
}

// Vector generator for SceEntropy: sum_i z_i log z_i. Zero entries contribute
// zero; negative entries are out of domain.
inline double psi(const std::vector<double>& z) {
    double s = 0.0;
    for (double zi : z) {
        if (zi < 0.0) throw domain_error("sce-entropy psi needs nonnegative entries");
        if (zi > 0.0) s += zi * clamped_log(zi);
    }
    return s;
}

inline std::vector<double> psi_grad(const std::vector<double>& z) {
    std::vector<double> g(z.size());
    for (size_t i = 0; i < z.size(); ++i) {
        if (z[i] < 0.0) throw domain_error("sce-entropy psi needs nonnegative entries");
        g[i] = clamped_log(z[i]) + 1.0;
    }
    return g;
}

// d_Psi(f, g) = Psi(f) - Psi(g) - Psi'(g) (f - g), scalar view.
inline double pointwise_divergence(PsiKind kind, double f, double g) {
    return psi(kind, f) - psi(kind, g) - psi_grad(kind, g) * (f - g);
}

// Expected reduced divergence over an enumerable world:
//   B~(f, g) = sum_{x,y} [ -Psi(g) + grad Psi(g)^T g - grad Psi(g)^T f ] w(x,y).
// For NsBinary the per-(x,y) term uses the scalar entries f(x,y), g(x,y); for
// SceEntropy it uses the whole row vectors f(x,.), g(x,.). B~ differs from the
// w-weighted sum of pointwise divergences by the g-independent constant
// sum Psi(f) w.
inline double expected_divergence_tilde(PsiKind kind, const Matrix& f, const Matrix& g,
                                        const Matrix& w) {
    if (!f.same_shape(g) || !f.same_shape(w))
        throw domain_error("expected_divergence_tilde: shape mismatch");
    double total = 0.0;
    if (kind == PsiKind::NsBinary) {
        for (size_t i = 0; i < f.v.size(); ++i) {
            double gp = psi_grad(PsiKind::NsBinary, g.v[i]);
            total += (-psi(PsiKind::NsBinary, g.v[i]) + gp * g.v[i] - gp * f.v[i]) * w.v[i];
        }
        return total;
    }
    std::vector<double> fr(static_cast<size_t>(f.cols)), gr(static_cast<size_t>(f.cols));
    for (int x = 0; x < f.rows; ++x) {
        fr.assign(f.row(x), f.row(x) + f.cols);
        gr.assign(g.row(x), g.row(x) + g.cols);
        std::vector<double> gp = psi_grad(gr);
        double term = -psi(gr);
        for (int y = 0; y < f.cols; ++y) term += gp[y] * (gr[y] - fr[y]);
        double wx = 0.0;
        for (int y = 0; y < f.cols; ++y) wx += w.at(x, y);
        total += term * wx;
    }
    return total;
}

struct DivergenceCurve {
    double reference = 0.5;
    std::vector<double> grid;   // open interval (0,1)
    std::vector<double> d_sce;  // two-point expansion of the entropy generator
    std::vector<double> d_ns;
};

// Samples d_Psi(reference, p) for both generators on an open grid
// p_i = i / (n_points + 1), i = 1..n_points.
inline DivergenceCurve divergence_curve(double reference, int n_points) {
    if (!(reference > 0.0 && reference < 1.0))
        throw domain_error("divergence_curve: reference must lie in (0,1)");
    if (n_points < 2) throw domain_error("divergence_curve: need at least 2 points");
    DivergenceCurve c;
    c.reference = reference;
    c.grid.reserve(n_points);
    for (int i = 1; i <= n_points; ++i) {
        double p = static_cast<double>(i) / (n_points + 1);
        c.grid.push_back(p);
        c.d_sce.push_back(pointwise_divergence(PsiKind::SceEntropy, reference, p));
        c.d_ns.push_back(pointwise_divergence(PsiKind::NsBinary, reference, p));
    }
    return c;
}

inline void write_curve_csv(const DivergenceCurve& c, std::ostream& out) {
    out << "p,d_sce,d_ns\n" << std::setprecision(17);
    for (size_t i = 0; i < c.grid.size(); ++i)
        out << c.grid[i] << ',' << c.d_sce[i] << ',' << c.d_ns[i] << '\n';
}

inline void write_curve_csv(const DivergenceCurve& c, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw data_error("cannot write curve csv: " + path);
    write_curve_csv(c, out);
}

struct LogSumBound {
    double multi;   // full KL(p_d || p_theta)
    double binary;  // KL of the {j, not-j} collapse
};

// The log-sum inequality guarantees multi >= binary: collapsing all labels
// other than j into one bin can only lose divergence.
inline LogSumBound logsum_bound_check(const std::vector<double>& p_d,
                                      const std::vector<double>& p_theta, int j) {
    if (p_d.size() != p_theta.size() || p_d.size() < 2)
        throw domain_error("logsum_bound_check: need two aligned vectors, |Y| >= 2");
    if (j < 0 || static_cast<size_t>(j) >= p_d.size())
        throw domain_error("logsum_bound_check: label index out of range");
    double multi = 0.0;
    for (size_t i = 0; i < p_d.size(); ++i) {
        if (p_d[i] <= 0.0 || p_theta[i] <= 0.0)
            throw domain_error("logsum_bound_check: vectors must be strictly positive");
        multi += p_d[i] * std::log(p_d[i] / p_theta[i]);
    }
    double pd = p_d[j], pt = p_theta[j];
    double binary = pd * std::log(pd / pt);
    if (pd < 1.0) binary += (1.0 - pd) * std::log((1.0 - pd) / (1.0 - pt));
    return {multi, binary};
}

}  // namespace bregkge
