#pragma once

#include <cmath>
#include <limits>
#include <vector>

#include "bisac/linalg.hpp"
#include "bisac/model.hpp"

// Closed-form communication and sensing metrics. All SINRs are linear
// ratios; helpers attach the dB view.

namespace bisac {

struct SinrReport {
    double value = 0.0;    // linear ratio >= 0
    double decibels = -std::numeric_limits<double>::infinity();

    static SinrReport from_linear(double v) {
        SinrReport r;
        r.value = v;
        r.decibels = v > 0.0 ? linear_to_db(v) : -std::numeric_limits<double>::infinity();
        return r;
    }
};

/// Full-rank channel correlation prior R_G for the Bayesian estimator.
struct EstimatorPrior {
    CMat r_g;

    void validate() const {
        require_hermitian(r_g, "EstimatorPrior");
        Eigen::SelfAdjointEigenSolver<CMat> es(hermitian_part(r_g));
        if (es.eigenvalues().minCoeff() <= 0.0)
            throw std::invalid_argument("EstimatorPrior: R_G must be positive definite");
    }

    CMat inverse() const {
        Eigen::SelfAdjointEigenSolver<CMat> es(hermitian_part(r_g));
        if (es.eigenvalues().minCoeff() <= 0.0)
            throw std::invalid_argument("EstimatorPrior: R_G must be positive definite");
        return es.eigenvectors() * es.eigenvalues().cwiseInverse().asDiagonal() *
               es.eigenvectors().adjoint();
    }
};

/// Quadratic form of a covariance against the channel row toward theta;
/// the same orientation the stage constraints use through Tr(F R).
inline double steer_quad(const CMat& r, double theta) {
    const CRowVec h = steering(theta, static_cast<int>(r.rows())).transpose();
    return std::real(cxd(h * r * h.adjoint()));
}

/// Transmit beam pattern P(theta), energy radiated toward theta.
inline std::vector<double> beampattern(const CMat& r_x, const std::vector<double>& thetas) {
    require_hermitian(r_x, "beampattern");
    Eigen::SelfAdjointEigenSolver<CMat> es(hermitian_part(r_x));
    const double scale = std::max(1.0, es.eigenvalues().cwiseAbs().maxCoeff());
    if (es.eigenvalues().minCoeff() < -1e-9 * scale)
        throw NotPsdError("beampattern: covariance is not PSD");
    std::vector<double> p;
    p.reserve(thetas.size());
    for (double th : thetas) p.push_back(std::max(0.0, steer_quad(r_x, th)));
    return p;
}

/// SINR at the tag.
inline SinrReport sinr_tag(const Beamformer& bf, const CRowVec& h_f, double noise_tag) {
    const double sig = std::norm(cxd(h_f * bf.w_t));
    const double intf = std::norm(cxd(h_f * bf.w_u)) + (h_f * bf.w_probe).squaredNorm();
    return SinrReport::from_linear(sig / (intf + noise_tag));
}

/// SINR of the combined echo at the AP. The tag echo arrives with spatial
/// signature h_b^T, so the combiner couples through g = w_r h_b^T.
inline SinrReport sinr_ap(const Beamformer& bf, const CRowVec& h_f, const CRowVec& h_b,
                          const CRowVec& w_r, const SystemConfig& cfg) {
    if (w_r.norm() <= 0.0) throw std::invalid_argument("sinr_ap: zero combiner");
    const cxd g = (w_r * h_b.transpose())(0);
    const CMat r_w = bf.covariance();
    const double echo = std::real(cxd(h_f * r_w * h_f.adjoint()));
    const double num = cfg.alpha * std::norm(g) * echo;
    const double den = cfg.alpha * std::norm(g) * cfg.noise_tag + w_r.squaredNorm() * cfg.noise_ap;
    return SinrReport::from_linear(num / den);
}

/// Angle-grid surrogate of sinr_ap with h_f = a(theta), h_b = b(theta)^H and
/// the equal-gain combiner.
inline SinrReport sinr_ap_grid(const Beamformer& bf, double theta, const SystemConfig& cfg) {
    const double num = cfg.alpha * cfg.n_rx * steer_quad(bf.covariance(), theta);
    const double den = cfg.alpha * cfg.n_rx * cfg.noise_tag + cfg.noise_ap;
    return SinrReport::from_linear(num / den);
}

/// Same surrogate evaluated on an arbitrary covariance (used by sweeps that
/// work at the SDR level before recovery).
inline SinrReport sinr_ap_grid_cov(const CMat& r_w, double theta, const SystemConfig& cfg) {
    return SinrReport::from_linear(cfg.alpha * cfg.n_rx * steer_quad(r_w, theta) /
                                   (cfg.alpha * cfg.n_rx * cfg.noise_tag + cfg.noise_ap));
}

/// P_D = 1/2 erfc(erfc^{-1}(2 P_F) - sqrt(gamma_ap)).
inline double detection_probability(double gamma_ap, double pfa) {
    if (!(gamma_ap >= 0.0)) throw std::domain_error("detection_probability: gamma_ap must be >= 0");
    if (!(pfa > 0.0 && pfa < 1.0)) throw std::domain_error("detection_probability: pfa must be in (0,1)");
    return 0.5 * erfc(erfc_inv(2.0 * pfa) - std::sqrt(gamma_ap));
}

/// UE SINR including the re-scattered interference block.
inline SinrReport sinr_ue(const Beamformer& bf, const ChannelSet& ch, const SystemConfig& cfg) {
    const double num = std::norm(cxd(ch.h_u * bf.w_u));
    const double direct = std::norm(cxd(ch.h_u * bf.w_t)) + (ch.h_u * bf.w_probe).squaredNorm();
    const double through_tag = std::norm(cxd(ch.h_f * bf.w_u)) + std::norm(cxd(ch.h_f * bf.w_t)) +
                               (ch.h_f * bf.w_probe).squaredNorm() + cfg.noise_tag;
    const double den = direct + cfg.alpha * std::norm(ch.h_tu) * through_tag + cfg.noise_ue;
    return SinrReport::from_linear(num / den);
}

inline double rate_ue(const Beamformer& bf, const ChannelSet& ch, const SystemConfig& cfg) {
    return std::log2(1.0 + sinr_ue(bf, ch, cfg).value);
}

inline double estimation_noise_scale(const CRowVec& h_b, const SystemConfig& cfg) {
    return cfg.noise_ap + cfg.alpha * h_b.squaredNorm() * cfg.noise_tag;
}

/// LS estimation error: N_r sigma^2 / (alpha L) * Tr(R_W^{-1}); a singular
/// covariance reports infinity instead of throwing so optimization wrappers
/// can reject the candidate.
inline double ls_error(const CMat& r_w, const CRowVec& h_b, const SystemConfig& cfg) {
    require_hermitian(r_w, "ls_error");
    Eigen::SelfAdjointEigenSolver<CMat> es(hermitian_part(r_w));
    const RVec w = es.eigenvalues();
    const double wmax = w.maxCoeff();
    if (wmax <= 0.0 || w.minCoeff() <= 1e-13 * wmax)
        return std::numeric_limits<double>::infinity();
    const double c = cfg.n_rx * estimation_noise_scale(h_b, cfg) /
                     (cfg.alpha * static_cast<double>(cfg.sig_len));
    return c * w.cwiseInverse().sum();
}

/// The LS-optimal covariance is orthogonal: (P_T / N_t) I.
inline CMat ls_optimal_covariance(const SystemConfig& cfg) {
    return (cfg.power_budget / cfg.n_tx) * CMat::Identity(cfg.n_tx, cfg.n_tx);
}

/// LMMSE estimation error Tr{(R_G^{-1} + alpha L / (N_r sigma^2) R_W)^{-1}}.
inline double lmmse_error(const CMat& r_w, const EstimatorPrior& prior, const CRowVec& h_b,
                          const SystemConfig& cfg) {
    require_hermitian(r_w, "lmmse_error");
    const double c = cfg.alpha * static_cast<double>(cfg.sig_len) /
                     (cfg.n_rx * estimation_noise_scale(h_b, cfg));
    const CMat m = hermitian_part(CMat(prior.inverse() + c * r_w));
    Eigen::SelfAdjointEigenSolver<CMat> es(m);
    return es.eigenvalues().cwiseInverse().sum();
}

/// Water-filling covariance minimizing lmmse_error under trace(R) <= P_T:
/// in the eigenbasis of R_G the active modes satisfy 1/lambda_k + c p_k = mu,
/// with the water level mu found by bisection on the trace.
inline CMat lmmse_optimal_covariance(const EstimatorPrior& prior, const CRowVec& h_b,
                                     const SystemConfig& cfg) {
    if (!(cfg.power_budget > 0.0))
        throw std::invalid_argument("lmmse_optimal_covariance: power budget must be positive");
    prior.validate();
    Evd evd = hermitian_evd(prior.r_g);
    const double c = cfg.alpha * static_cast<double>(cfg.sig_len) /
                     (cfg.n_rx * estimation_noise_scale(h_b, cfg));
    const int n = static_cast<int>(evd.eigenvalues.size());
    RVec inv_lambda = evd.eigenvalues.cwiseInverse();

    auto trace_at = [&](double mu) {
        double t = 0.0;
        for (int k = 0; k < n; ++k) t += std::max(mu - inv_lambda(k), 0.0) / c;
        return t;
    };
    double lo = inv_lambda.minCoeff();
    double hi = inv_lambda.maxCoeff() + c * cfg.power_budget;
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (trace_at(mid) < cfg.power_budget) lo = mid; else hi = mid;
        if ((hi - lo) <= 1e-15 * hi) break;
    }
    const double mu = 0.5 * (lo + hi);
    RVec p(n);
    for (int k = 0; k < n; ++k) p(k) = std::max(mu - inv_lambda(k), 0.0) / c;
    const double tr = p.sum();
    if (tr > 0.0) p *= cfg.power_budget / tr;  // exact trace
    return hermitian_part(CMat(evd.eigenvectors * p.asDiagonal() * evd.eigenvectors.adjoint()));
}

/// Variance of the H0 matched-filter statistic Re{w_r N_ap (sqrt(alpha) w_r
/// h_b^T h_f X)^H} for a waveform with covariance r_x.
inline double detection_statistic_variance(const CMat& r_x, const ChannelSet& ch,
                                           const CRowVec& w_r, const SystemConfig& cfg) {
    const cxd g = (w_r * ch.h_b.transpose())(0);
    const double echo = std::real(cxd(ch.h_f * r_x * ch.h_f.adjoint()));
    return 0.5 * cfg.noise_ap * w_r.squaredNorm() * cfg.alpha * std::norm(g) * echo *
           static_cast<double>(cfg.sig_len);
}

/// CFAR threshold: the H0 statistic is exactly N(0, v), so
/// eta = sqrt(2 v) erfc^{-1}(2 P_F).
inline double cfar_threshold(const Beamformer& bf, const ChannelSet& ch, const CRowVec& w_r,
                             const SystemConfig& cfg) {
    const double v = detection_statistic_variance(bf.covariance(), ch, w_r, cfg);
    return std::sqrt(2.0 * v) * erfc_inv(2.0 * cfg.pfa);
}

}  // namespace bisac
