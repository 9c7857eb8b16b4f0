#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <complex>
#include <stdexcept>
#include <string>

// Dense complex linear algebra and the special functions shared by the
// metric formulas and the stage solvers. Everything here is complex-native;
// realification happens only inside the conic solver.

namespace bisac {

using cxd = std::complex<double>;
using CMat = Eigen::MatrixXcd;
using CVec = Eigen::VectorXcd;
using CRowVec = Eigen::RowVectorXcd;
using RMat = Eigen::MatrixXd;
using RVec = Eigen::VectorXd;

struct NotHermitianError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};
struct NotPsdError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};
struct SingularMatrixError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

inline bool is_hermitian(const CMat& m, double rel_tol = 1e-12) {
    if (m.rows() != m.cols()) return false;
    const double scale = std::max(1.0, m.norm());
    return (m - m.adjoint()).norm() <= rel_tol * scale * 10.0;
}

inline void require_hermitian(const CMat& m, const char* who) {
    if (!is_hermitian(m))
        throw NotHermitianError(std::string(who) + ": matrix is not Hermitian");
}

/// Exact Hermitian part; used to scrub roundoff before factorizations.
inline CMat hermitian_part(const CMat& m) { return 0.5 * (m + m.adjoint()); }

struct Evd {
    RVec eigenvalues;  // descending
    CMat eigenvectors; // columns match eigenvalues
};

/// Eigendecomposition M = Q diag(w) Q^H with eigenvalues sorted descending.
inline Evd hermitian_evd(const CMat& m) {
    require_hermitian(m, "hermitian_evd");
    Eigen::SelfAdjointEigenSolver<CMat> es(hermitian_part(m));
    if (es.info() != Eigen::Success)
        throw std::runtime_error("hermitian_evd: eigensolver failed");
    const Eigen::Index n = m.rows();
    Evd out;
    out.eigenvalues = es.eigenvalues().reverse();
    out.eigenvectors.resize(n, n);
    for (Eigen::Index k = 0; k < n; ++k)
        out.eigenvectors.col(k) = es.eigenvectors().col(n - 1 - k);
    return out;
}

/// Factor L with L L^H = M after clipping eigenvalues in [-tol, 0] to zero.
/// Accepts the slightly indefinite matrices that come out of the SDR stage
/// (covariance minus extracted rank-1 terms); anything below -tol is a
/// genuine violation and throws.
inline CMat psd_factor(const CMat& m, double tol = 1e-9) {
    Evd evd = hermitian_evd(m);
    const double scale = std::max(1.0, evd.eigenvalues.cwiseAbs().maxCoeff());
    const Eigen::Index n = m.rows();
    CMat l(n, n);
    for (Eigen::Index k = 0; k < n; ++k) {
        double w = evd.eigenvalues(k);
        if (w < -tol * scale)
            throw NotPsdError("psd_factor: eigenvalue " + std::to_string(w) +
                              " below -tol");
        if (w < 0.0) w = 0.0;
        l.col(k) = evd.eigenvectors.col(k) * std::sqrt(w);
    }
    return l;
}

/// Right pseudo-inverse X^H (X X^H)^{-1} for a full-row-rank wide matrix.
inline CMat pseudo_inverse(const CMat& x) {
    if (x.rows() > x.cols())
        throw SingularMatrixError("pseudo_inverse: expects rows <= cols");
    const CMat gram = hermitian_part(CMat(x * x.adjoint()));
    Eigen::SelfAdjointEigenSolver<CMat> es(gram);
    const RVec w = es.eigenvalues();
    const double wmax = w.maxCoeff();
    if (wmax <= 0.0 || w.minCoeff() <= 1e-13 * wmax)
        throw SingularMatrixError("pseudo_inverse: rank-deficient rows");
    return x.adjoint() * es.eigenvectors() *
           w.cwiseInverse().asDiagonal() * es.eigenvectors().adjoint();
}

inline double erfc(double x) { return std::erfc(x); }

namespace detail {

// Wichura's PPND16 rational approximation of the standard normal quantile.
inline double norm_quantile(double p) {
    const double q = p - 0.5;
    double r;
    if (std::abs(q) <= 0.425) {
        r = 0.180625 - q * q;
        return q *
               (((((((2.5090809287301226727e3 * r + 3.3430575583588128105e4) * r +
                     6.7265770927008700853e4) * r + 4.5921953931549871457e4) * r +
                   1.3731693765509461125e4) * r + 1.9715909503065514427e3) * r +
                 1.3314166789178437745e2) * r + 3.3871328727963666080e0) /
               (((((((5.2264952788528545610e3 * r + 2.8729085735721942674e4) * r +
                     3.9307895800092710610e4) * r + 2.1213794301586595867e4) * r +
                   5.3941960214247511077e3) * r + 6.8718700749205790830e2) * r +
                 4.2313330701600911252e1) * r + 1.0);
    }
    r = (q < 0.0) ? p : 1.0 - p;
    r = std::sqrt(-std::log(r));
    double val;
    if (r <= 5.0) {
        r -= 1.6;
        val = (((((((7.74545014278341407640e-4 * r + 2.27238449892691845833e-2) * r +
                    2.41780725177450611770e-1) * r + 1.27045825245236838258e0) * r +
                  3.64784832476320460504e0) * r + 5.76949722146069140550e0) * r +
                4.63033784615654529590e0) * r + 1.42343711074968357734e0) /
              (((((((1.05075007164441684324e-9 * r + 5.47593808499534494600e-4) * r +
                    1.51986665636164571966e-2) * r + 1.48103976427480074590e-1) * r +
                  6.89767334985100004550e-1) * r + 1.67638483018380384940e0) * r +
                2.05319162663775882187e0) * r + 1.0);
    } else {
        r -= 5.0;
        val = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r +
                    1.24266094738807843860e-3) * r + 2.65321895265761230930e-2) * r +
                  2.96560571828504891230e-1) * r + 1.78482653991729133580e0) * r +
                5.46378491116411436990e0) * r + 6.65790464350110377720e0) /
              (((((((2.04426310338993978564e-15 * r + 1.42151175831644588870e-7) * r +
                    1.84631831751005468180e-5) * r + 7.86869131145613259100e-4) * r +
                  1.48753612908506148525e-2) * r + 1.36929880922735805310e-1) * r +
                5.99832206555887937690e-1) * r + 1.0);
    }
    return (q < 0.0) ? -val : val;
}

}  // namespace detail

/// Inverse of erfc on the open interval (0, 2); one Newton step on top of
/// the normal-quantile seed keeps the round-trip error below 1e-12.
inline double erfc_inv(double y) {
    if (!(y > 0.0 && y < 2.0))
        throw std::domain_error("erfc_inv: argument must be in (0, 2)");
    if (y == 1.0) return 0.0;
    static constexpr double inv_sqrt2 = 0.7071067811865475244;
    static constexpr double two_over_sqrt_pi = 1.1283791670955125739;
    double x = -detail::norm_quantile(0.5 * y) * inv_sqrt2;
    for (int it = 0; it < 2; ++it) {
        const double f = std::erfc(x) - y;
        const double df = -two_over_sqrt_pi * std::exp(-x * x);
        const double step = f / df;
        x -= step;
        if (std::abs(step) < 1e-15 * std::max(1.0, std::abs(x))) break;
    }
    return x;
}

inline double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }
inline double linear_to_db(double lin) { return 10.0 * std::log10(lin); }
/// dBm to linear milliwatts (the library's power unit).
inline double dbm_to_mw(double dbm) { return std::pow(10.0, dbm / 10.0); }

}  // namespace bisac
