#pragma once

#include <json.hpp>

#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "bisac/metrics.hpp"
#include "bisac/model.hpp"
#include "bisac/parallel.hpp"

// Waveform-level Monte-Carlo validation of the analytic metrics: CFAR
// detection trials, LS/LMMSE estimation trials and empirical SINR/rate
// measurement. Every run is bit-reproducible for a fixed seed; trials carry
// disjoint sub-seeds so chunked execution is order-independent.

namespace bisac::sim {

struct TrialReport {
    std::string metric;
    long trials = 0;
    double estimate = 0.0;
    double ci95_halfwidth = 0.0;
    double analytic_reference = 0.0;
    double relative_gap = 0.0;
    std::uint64_t seed = 0;

    nlohmann::json to_json() const {
        return {{"metric", metric},
                {"trials", trials},
                {"estimate", estimate},
                {"ci95_halfwidth", ci95_halfwidth},
                {"analytic_reference", analytic_reference},
                {"relative_gap", relative_gap},
                {"seed", seed}};
    }
};

namespace detail {

inline double relative_gap(double estimate, double reference) {
    return std::abs(estimate - reference) / std::max(std::abs(reference), 1e-300);
}

inline TrialReport make_report(const std::string& metric, long trials, double estimate,
                               double ci, double reference, std::uint64_t seed) {
    TrialReport r;
    r.metric = metric;
    r.trials = trials;
    r.estimate = estimate;
    r.ci95_halfwidth = ci;
    r.analytic_reference = reference;
    r.relative_gap = relative_gap(estimate, reference);
    r.seed = seed;
    return r;
}

/// Mean and normal-theory 95% half-width from per-chunk (sum, sumsq, n).
struct MomentAccumulator {
    double sum = 0.0, sumsq = 0.0;
    long n = 0;
    void add(double v) {
        sum += v;
        sumsq += v * v;
        ++n;
    }
    void merge(const MomentAccumulator& o) {
        sum += o.sum;
        sumsq += o.sumsq;
        n += o.n;
    }
    double mean() const { return sum / n; }
    double ci95() const {
        if (n < 2) return 0.0;
        const double var = std::max(0.0, (sumsq - sum * sum / n) / (n - 1));
        return 1.96 * std::sqrt(var / n);
    }
};

inline double binomial_ci95(double p_hat, long n) {
    return 1.96 * std::sqrt(std::max(p_hat * (1.0 - p_hat), 1.0 / n) / n);
}

/// Deterministic chunked Monte-Carlo mean: fn(trial_rng, trial_index).
template <typename F>
MomentAccumulator chunked_mean(long trials, std::uint64_t seed, F&& fn) {
    const int n_chunks = static_cast<int>(std::max<long>(1, std::min<long>(64, trials / 64)));
    const long per = (trials + n_chunks - 1) / n_chunks;
    std::vector<MomentAccumulator> partial(n_chunks);
    parallel_for_chunks(n_chunks, [&](int c) {
        const long lo = c * per, hi = std::min<long>(trials, lo + per);
        for (long t = lo; t < hi; ++t) {
            Rng rng(subseed(seed, 0x1000000ULL + static_cast<std::uint64_t>(t)));
            partial[c].add(fn(rng, t));
        }
    });
    MomentAccumulator total;
    for (const auto& p : partial) total.merge(p);
    return total;
}

inline ChannelSet detection_surrogate(double theta, const SystemConfig& cfg) {
    ChannelSet ch;
    ch.h_f = los_channel(theta, 1.0, cfg.n_tx, LosDirection::Tx);
    ch.h_b = los_channel(theta, 1.0, cfg.n_rx, LosDirection::Rx);
    ch.h_u = CRowVec::Zero(cfg.n_tx);
    return ch;
}

struct DetectorSetup {
    CMat x;          // realized waveform
    CVec u;          // matched-filter template X^H h_f^H
    CRowVec w_r;
    cxd g;           // w_r h_b^T
    double eta;      // threshold calibrated on the realized waveform
    CRowVec h_f_x;   // h_f X, the deterministic echo row
};

inline DetectorSetup make_detector(const Beamformer& bf, const ChannelSet& ch,
                                   const SystemConfig& cfg, std::uint64_t seed) {
    DetectorSetup d;
    d.x = assemble_waveform(bf, synth_streams(cfg, subseed(seed, 0x3A)));
    d.u = d.x.adjoint() * ch.h_f.adjoint();
    d.w_r = equal_gain_combiner(ch.h_b);
    d.g = (d.w_r * ch.h_b.transpose())(0);
    const double v = detection_statistic_variance(sample_covariance(d.x), ch, d.w_r, cfg);
    d.eta = std::sqrt(2.0 * v) * erfc_inv(2.0 * cfg.pfa);
    d.h_f_x = ch.h_f * d.x;
    return d;
}

}  // namespace detail

struct DetectionTrialOptions {
    /// Simulate the H1 chain with a different true backscatter efficiency
    /// (the detector template keeps the configured one).
    std::optional<double> alpha_true;
};

/// H1 detection trials: full chain simulation with surrogate channels
/// a(theta), b(theta)^H, the Neyman-Pearson statistic and the CFAR threshold.
inline TrialReport run_detection_trials(const Beamformer& bf, double theta_true,
                                        const SystemConfig& cfg, long trials,
                                        std::uint64_t seed,
                                        DetectionTrialOptions opts = {}) {
    cfg.validate();
    const ChannelSet ch = detail::detection_surrogate(theta_true, cfg);
    const detail::DetectorSetup det = detail::make_detector(bf, ch, cfg, seed);
    SystemConfig cfg_true = cfg;
    if (opts.alpha_true) cfg_true.alpha = *opts.alpha_true;
    const CVec code = all_ones_code(cfg.sig_len);
    const double sqrt_alpha_nom = std::sqrt(cfg.alpha);

    auto acc = detail::chunked_mean(trials, seed, [&](Rng& rng, long) {
        const int L = cfg.sig_len;
        CRowVec y_t = det.h_f_x;
        for (int l = 0; l < L; ++l) y_t(l) += rng.next_cgaussian(cfg.noise_tag);
        const CRowVec y_b = chain_backscatter(y_t, code, cfg_true);
        CMat y_ap = ch.h_b.transpose() * y_b;
        for (Eigen::Index c = 0; c < y_ap.cols(); ++c)
            for (Eigen::Index r = 0; r < y_ap.rows(); ++r)
                y_ap(r, c) += rng.next_cgaussian(cfg.noise_ap);
        const CRowVec combined = det.w_r * y_ap;
        const double stat = sqrt_alpha_nom * std::real(std::conj(det.g) * cxd(combined * det.u));
        return stat > det.eta ? 1.0 : 0.0;
    });

    const double gamma = sinr_ap_grid(bf, theta_true, cfg_true).value;
    return detail::make_report("detection_probability", trials, acc.mean(),
                               detail::binomial_ci95(acc.mean(), trials),
                               detection_probability(gamma, cfg.pfa), seed);
}

/// H0 trials: the statistic depends on the noise only through the scalar
/// projection (w_r N_ap) u ~ CN(0, sigma_ap^2 ||w_r||^2 ||u||^2), so trials
/// draw that sufficient statistic directly; run_detection_trials covers the
/// full-chain path.
inline TrialReport run_h0_trials(const Beamformer& bf, double theta, const SystemConfig& cfg,
                                 long trials, std::uint64_t seed) {
    cfg.validate();
    const ChannelSet ch = detail::detection_surrogate(theta, cfg);
    const detail::DetectorSetup det = detail::make_detector(bf, ch, cfg, seed);
    const double proj_var = cfg.noise_ap * det.w_r.squaredNorm() * det.u.squaredNorm();
    const double sqrt_alpha = std::sqrt(cfg.alpha);

    auto acc = detail::chunked_mean(trials, seed, [&](Rng& rng, long) {
        const cxd zeta = rng.next_cgaussian(proj_var);
        const double stat = sqrt_alpha * std::real(std::conj(det.g) * zeta);
        return stat > det.eta ? 1.0 : 0.0;
    });
    return detail::make_report("false_alarm_rate", trials, acc.mean(),
                               detail::binomial_ci95(acc.mean(), trials), cfg.pfa, seed);
}

enum class TagNoise { On, Off };
enum class TruthModel { Physical, PriorConsistent };

struct EstimationTrialOptions {
    TagNoise tag_noise = TagNoise::Off;
    TruthModel truth = TruthModel::Physical;
};

namespace detail {

inline CMat draw_truth(Rng& rng, const ChannelSet& ch, const SystemConfig& cfg,
                       TruthModel mode, const CMat* prior_sqrt) {
    if (mode == TruthModel::PriorConsistent && prior_sqrt) {
        CMat z(cfg.n_rx, cfg.n_tx);
        for (int j = 0; j < cfg.n_tx; ++j)
            for (int i = 0; i < cfg.n_rx; ++i) z(i, j) = rng.next_cgaussian();
        return z * (*prior_sqrt);
    }
    // physical: random LOS geometry
    const double th = rng.next_double() * std::numbers::pi;
    const double g_f = 0.5 + rng.next_double();
    const double g_b = 0.5 + rng.next_double();
    const CRowVec h_f = los_channel(th, g_f, cfg.n_tx, LosDirection::Tx);
    const CRowVec h_b = los_channel(th, g_b, cfg.n_rx, LosDirection::Rx);
    (void)ch;
    return h_b.transpose() * h_f;
}

inline CMat prior_row_sqrt(const EstimatorPrior& prior, const SystemConfig& cfg) {
    // rows of G i.i.d. with covariance R_G / N_r gives E{G^H G} = R_G
    Evd evd = hermitian_evd(prior.r_g);
    return evd.eigenvectors *
           (evd.eigenvalues / static_cast<double>(cfg.n_rx)).cwiseSqrt().asDiagonal() *
           evd.eigenvectors.adjoint();
}

}  // namespace detail

/// LS estimation trials, Eq.-(16) model with the Eq.-(17) estimator.
inline TrialReport run_ls_trials(const Beamformer& bf, const ChannelSet& ch,
                                 const SystemConfig& cfg, long trials, std::uint64_t seed,
                                 EstimationTrialOptions opts = {}) {
    cfg.validate();
    const CMat x = assemble_waveform(bf, synth_streams(cfg, subseed(seed, 0x3A)));
    const CMat pinv = pseudo_inverse(x);  // throws on rank-deficient waveforms
    SystemConfig ref_cfg = cfg;
    if (opts.tag_noise == TagNoise::Off) ref_cfg.noise_tag = 0.0;
    const double sqrt_alpha = std::sqrt(cfg.alpha);
    const CMat g_fixed = ch.h_b.transpose() * ch.h_f;

    auto acc = detail::chunked_mean(trials, seed, [&](Rng& rng, long) {
        const CMat& g = g_fixed;
        CMat y = sqrt_alpha * g * x;
        if (opts.tag_noise == TagNoise::On) {
            CRowVec n_t(cfg.sig_len);
            for (int l = 0; l < cfg.sig_len; ++l) n_t(l) = rng.next_cgaussian(cfg.noise_tag);
            y += sqrt_alpha * ch.h_b.transpose() * n_t;
        }
        for (int j = 0; j < cfg.sig_len; ++j)
            for (int i = 0; i < cfg.n_rx; ++i) y(i, j) += rng.next_cgaussian(cfg.noise_ap);
        const CMat est = (y * pinv) / sqrt_alpha;
        return (g - est).squaredNorm();
    });

    const double reference = ls_error(sample_covariance(x), ch.h_b, ref_cfg);
    return detail::make_report("ls_mse", trials, acc.mean(), acc.ci95(), reference, seed);
}

/// LMMSE estimation trials, Eq.-(20) estimator in its push-through form
/// G_hat = Y X^H (beta^2 R_G^{-1} + X X^H)^{-1} / sqrt(alpha). The noise is
/// the white-equivalent model the error formula assumes; tag_noise toggles
/// whether the sigma_t contribution enters at all.
inline TrialReport run_lmmse_trials(const Beamformer& bf, const EstimatorPrior& prior,
                                    const ChannelSet& ch, const SystemConfig& cfg, long trials,
                                    std::uint64_t seed, EstimationTrialOptions opts = {}) {
    cfg.validate();
    prior.validate();
    opts.truth = TruthModel::PriorConsistent;
    SystemConfig eff_cfg = cfg;
    if (opts.tag_noise == TagNoise::Off) eff_cfg.noise_tag = 0.0;
    const double sigma2 = estimation_noise_scale(ch.h_b, eff_cfg);
    const double beta2 = cfg.n_rx * sigma2 / cfg.alpha;

    const CMat x = assemble_waveform(bf, synth_streams(cfg, subseed(seed, 0x3A)));
    const CMat gram = hermitian_part(CMat(x * x.adjoint()));
    const CMat kernel = hermitian_part(CMat(beta2 * prior.inverse() + gram));
    const CMat filt = x.adjoint() * kernel.inverse();  // L x n_tx
    const CMat psqrt = detail::prior_row_sqrt(prior, cfg);
    const double sqrt_alpha = std::sqrt(cfg.alpha);

    auto acc = detail::chunked_mean(trials, seed, [&](Rng& rng, long) {
        const CMat g = detail::draw_truth(rng, ch, cfg, TruthModel::PriorConsistent, &psqrt);
        CMat y = sqrt_alpha * g * x;
        for (int j = 0; j < cfg.sig_len; ++j)
            for (int i = 0; i < cfg.n_rx; ++i) y(i, j) += rng.next_cgaussian(sigma2);
        const CMat est = (y * filt) / sqrt_alpha;
        return (g - est).squaredNorm();
    });

    const double reference = lmmse_error(sample_covariance(x), prior, ch.h_b, eff_cfg);
    return detail::make_report("lmmse_mse", trials, acc.mean(), acc.ci95(), reference, seed);
}

struct PairedEstimationReport {
    TrialReport ls, lmmse;
    long batches = 0;
    long lmmse_wins = 0;  // batches with mean LMMSE MSE <= mean LS MSE
};

/// Paired LS/LMMSE comparison on shared draws, batched so the per-batch
/// ordering statistic is meaningful.
inline PairedEstimationReport run_paired_estimation_trials(
    const Beamformer& bf, const EstimatorPrior& prior, const ChannelSet& ch,
    const SystemConfig& cfg, long batches, long batch_size, std::uint64_t seed,
    EstimationTrialOptions opts = {}) {
    cfg.validate();
    prior.validate();
    SystemConfig eff_cfg = cfg;
    if (opts.tag_noise == TagNoise::Off) eff_cfg.noise_tag = 0.0;
    const double sigma2 = estimation_noise_scale(ch.h_b, eff_cfg);
    const double beta2 = cfg.n_rx * sigma2 / cfg.alpha;

    const CMat x = assemble_waveform(bf, synth_streams(cfg, subseed(seed, 0x3A)));
    const CMat pinv = pseudo_inverse(x);
    const CMat kernel = hermitian_part(CMat(beta2 * prior.inverse() + x * x.adjoint()));
    const CMat filt = x.adjoint() * kernel.inverse();
    const CMat psqrt = detail::prior_row_sqrt(prior, cfg);
    const double sqrt_alpha = std::sqrt(cfg.alpha);

    std::vector<double> ls_batch(batches, 0.0), lm_batch(batches, 0.0);
    detail::MomentAccumulator ls_acc, lm_acc;
    parallel_for_chunks(static_cast<int>(batches), [&](int b) {
        double ls_sum = 0.0, lm_sum = 0.0;
        for (long t = 0; t < batch_size; ++t) {
            Rng rng(subseed(seed, 0x2000000ULL + static_cast<std::uint64_t>(b) * 131071ULL + t));
            const CMat g = detail::draw_truth(rng, ch, cfg, TruthModel::PriorConsistent, &psqrt);
            CMat y = sqrt_alpha * g * x;
            for (int j = 0; j < cfg.sig_len; ++j)
                for (int i = 0; i < cfg.n_rx; ++i) y(i, j) += rng.next_cgaussian(sigma2);
            ls_sum += (g - CMat((y * pinv) / sqrt_alpha)).squaredNorm();
            lm_sum += (g - CMat((y * filt) / sqrt_alpha)).squaredNorm();
        }
        ls_batch[b] = ls_sum / batch_size;
        lm_batch[b] = lm_sum / batch_size;
    });
    PairedEstimationReport rep;
    rep.batches = batches;
    for (long b = 0; b < batches; ++b) {
        ls_acc.add(ls_batch[b]);
        lm_acc.add(lm_batch[b]);
        if (lm_batch[b] <= ls_batch[b]) ++rep.lmmse_wins;
    }
    const CMat r_x = sample_covariance(x);
    rep.ls = detail::make_report("ls_mse", batches * batch_size, ls_acc.mean(), ls_acc.ci95(),
                                 ls_error(r_x, ch.h_b, eff_cfg), seed);
    rep.lmmse = detail::make_report("lmmse_mse", batches * batch_size, lm_acc.mean(),
                                    lm_acc.ci95(), lmmse_error(r_x, prior, ch.h_b, eff_cfg), seed);
    return rep;
}

/// Empirical UE SINR from the full downlink chain with random tag codes;
/// reports the SINR (linear) against Eq. (24).
inline TrialReport run_rate_trials(const Beamformer& bf, const ChannelSet& ch,
                                   const SystemConfig& cfg, long trials, std::uint64_t seed) {
    cfg.validate();
    auto acc = detail::chunked_mean(trials, seed, [&](Rng& rng, long t) {
        const std::uint64_t sub = subseed(seed, 0x4000000ULL + static_cast<std::uint64_t>(t));
        const CMat s = synth_streams(cfg, sub);
        const CMat x = assemble_waveform(bf, s);
        const CVec code = random_tag_code(cfg.sig_len, sub);
        CRowVec y_t = ch.h_f * x;
        for (int l = 0; l < cfg.sig_len; ++l) y_t(l) += rng.next_cgaussian(cfg.noise_tag);
        const CRowVec y_b = std::sqrt(cfg.alpha) * y_t.cwiseProduct(code.transpose());
        CRowVec y_u = ch.h_u * x + ch.h_tu * y_b;
        for (int l = 0; l < cfg.sig_len; ++l) y_u(l) += rng.next_cgaussian(cfg.noise_ue);
        // per-stream correlation against the known UE data row
        const cxd a_hat = (y_u * s.row(0).adjoint())(0) / static_cast<double>(cfg.sig_len);
        const double total = y_u.squaredNorm() / cfg.sig_len;
        const double sig = std::norm(a_hat);
        return sig / std::max(total - sig, 1e-300);
    });
    return detail::make_report("ue_sinr", trials, acc.mean(), acc.ci95(),
                               sinr_ue(bf, ch, cfg).value, seed);
}

/// Empirical tag and AP SINRs from the chain, for the metric cross-checks.
inline TrialReport run_tag_sinr_trials(const Beamformer& bf, const ChannelSet& ch,
                                       const SystemConfig& cfg, long trials,
                                       std::uint64_t seed) {
    cfg.validate();
    auto acc = detail::chunked_mean(trials, seed, [&](Rng& rng, long t) {
        const std::uint64_t sub = subseed(seed, 0x5000000ULL + static_cast<std::uint64_t>(t));
        const CMat s = synth_streams(cfg, sub);
        const CMat x = assemble_waveform(bf, s);
        CRowVec y_t = ch.h_f * x;
        for (int l = 0; l < cfg.sig_len; ++l) y_t(l) += rng.next_cgaussian(cfg.noise_tag);
        const cxd a_hat = (y_t * s.row(1).adjoint())(0) / static_cast<double>(cfg.sig_len);
        const double total = y_t.squaredNorm() / cfg.sig_len;
        const double sig = std::norm(a_hat);
        return sig / std::max(total - sig, 1e-300);
    });
    return detail::make_report("tag_sinr", trials, acc.mean(), acc.ci95(),
                               sinr_tag(bf, ch.h_f, cfg.noise_tag).value, seed);
}

inline TrialReport run_ap_sinr_trials(const Beamformer& bf, const ChannelSet& ch,
                                      const SystemConfig& cfg, long trials,
                                      std::uint64_t seed) {
    cfg.validate();
    const CRowVec w_r = equal_gain_combiner(ch.h_b);
    auto acc = detail::chunked_mean(trials, seed, [&](Rng& rng, long t) {
        const std::uint64_t sub = subseed(seed, 0x6000000ULL + static_cast<std::uint64_t>(t));
        const CMat s = synth_streams(cfg, sub);
        const CMat x = assemble_waveform(bf, s);
        const CVec code = all_ones_code(cfg.sig_len);
        const cxd g = (w_r * ch.h_b.transpose())(0);
        const CRowVec signal = std::sqrt(cfg.alpha) * g * (ch.h_f * x);
        CRowVec noise(cfg.sig_len);
        for (int l = 0; l < cfg.sig_len; ++l) {
            const cxd tag_n = rng.next_cgaussian(cfg.noise_tag);
            noise(l) = std::sqrt(cfg.alpha) * g * tag_n * code(l) + rng.next_cgaussian(cfg.noise_ap);
        }
        return signal.squaredNorm() / noise.squaredNorm();
    });
    return detail::make_report("ap_sinr", trials, acc.mean(), acc.ci95(),
                               sinr_ap(bf, ch.h_f, ch.h_b, w_r, cfg).value, seed);
}

}  // namespace bisac::sim
