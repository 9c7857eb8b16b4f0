#pragma once

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include "bisac/linalg.hpp"
#include "bisac/rng.hpp"

// System configuration, channels, waveform synthesis and the backscatter
// signal chain. Conventions: channels are stored as row vectors; the
// tag-to-AP channel enters the spatial chain through its transpose, so the
// AP-side signature of the tag echo is the column h_b^T. Powers are linear
// milliwatts throughout.

namespace bisac {

struct SystemConfig {
    int n_tx = 16;           // transmit array elements
    int n_rx = 16;           // receive array elements, n_tx <= n_rx
    int sig_len = 2048;      // samples per block, > n_tx
    double alpha = 0.5;      // backscatter modulation efficiency in [0,1]
    double noise_tag = 1e-4; // sigma_t^2, mW
    double noise_ap = 1e-4;  // sigma_ap^2, mW
    double noise_ue = 1e-4;  // sigma_u^2, mW
    double power_budget = 1.0; // P_T, mW
    double pfa = 1e-4;       // CFAR false-alarm probability

    void validate() const {
        if (n_tx < 1 || n_rx < 1) throw std::invalid_argument("config: array sizes must be positive");
        if (n_tx > n_rx) throw std::invalid_argument("config: requires n_tx <= n_rx");
        if (sig_len <= n_tx) throw std::invalid_argument("config: requires sig_len > n_tx");
        if (!(alpha >= 0.0 && alpha <= 1.0)) throw std::invalid_argument("config: alpha must be in [0,1]");
        if (!(noise_tag > 0.0 && noise_ap > 0.0 && noise_ue > 0.0))
            throw std::invalid_argument("config: noise powers must be positive");
        if (!(power_budget > 0.0)) throw std::invalid_argument("config: power_budget must be positive");
        if (!(pfa > 0.0 && pfa < 1.0)) throw std::invalid_argument("config: pfa must be in (0,1)");
    }
};

/// Half-wavelength ULA response toward azimuth theta, as a column vector.
inline CVec steering(double theta, int n) {
    if (n < 1) throw std::invalid_argument("steering: n must be >= 1");
    CVec a(n);
    const double phase = std::numbers::pi * std::sin(theta);
    for (int k = 0; k < n; ++k)
        a(k) = std::polar(1.0, phase * static_cast<double>(k));
    return a;
}

inline CVec steering_tx(double theta, int n) { return steering(theta, n); }
inline CVec steering_rx(double theta, int n) { return steering(theta, n); }

enum class LosDirection { Tx, Rx };

/// LOS channel row vector: gain * a(theta)^T for downlink channels and the
/// conjugate-transposed orientation gain * b(theta)^H for the uplink.
inline CRowVec los_channel(double theta, double gain, int n, LosDirection dir) {
    if (!(gain > 0.0)) throw std::invalid_argument("los_channel: gain must be positive");
    CVec a = steering(theta, n);
    if (dir == LosDirection::Rx) return gain * a.adjoint();
    return gain * a.transpose();
}

struct ChannelSet {
    CRowVec h_f;   // AP -> tag, 1 x n_tx
    CRowVec h_b;   // tag -> AP, 1 x n_rx (spatial signature is h_b^T)
    CRowVec h_u;   // AP -> UE, 1 x n_tx
    cxd h_tu = 0.0;      // tag -> UE scalar
    double h_tu_max = 0.0; // bound used by the robust stages

    void validate(const SystemConfig& cfg) const {
        if (h_f.size() != cfg.n_tx) throw std::invalid_argument("channels: h_f size mismatch");
        if (h_b.size() != cfg.n_rx) throw std::invalid_argument("channels: h_b size mismatch");
        if (h_u.size() != cfg.n_tx) throw std::invalid_argument("channels: h_u size mismatch");
        if (h_tu_max > 0.0 && std::abs(h_tu) > h_tu_max * (1.0 + 1e-12))
            throw std::invalid_argument("channels: |h_tu| exceeds h_tu_max");
    }
};

struct Beamformer {
    CVec w_u;      // n_tx
    CVec w_t;      // n_tx
    CMat w_probe;  // n_tx x n_tx (W_s)

    static Beamformer zero(int n_tx) {
        Beamformer bf;
        bf.w_u = CVec::Zero(n_tx);
        bf.w_t = CVec::Zero(n_tx);
        bf.w_probe = CMat::Zero(n_tx, n_tx);
        return bf;
    }

    /// W = [w_u, w_t, W_s], n_tx x (n_tx + 2).
    CMat matrix() const {
        const Eigen::Index n = w_u.size();
        CMat w(n, n + 2);
        w.col(0) = w_u;
        w.col(1) = w_t;
        w.rightCols(n) = w_probe;
        return w;
    }

    /// R_W = W W^H.
    CMat covariance() const {
        const CMat w = matrix();
        return hermitian_part(CMat(w * w.adjoint()));
    }

    double total_power() const { return matrix().squaredNorm(); }

    void validate(const SystemConfig& cfg) const {
        if (w_u.size() != cfg.n_tx || w_t.size() != cfg.n_tx ||
            w_probe.rows() != cfg.n_tx || w_probe.cols() != cfg.n_tx)
            throw std::invalid_argument("beamformer: dimension mismatch");
        if (!matrix().allFinite()) throw std::invalid_argument("beamformer: non-finite entries");
        if (total_power() > cfg.power_budget * (1.0 + 1e-6))
            throw std::invalid_argument("beamformer: power budget exceeded");
    }
};

struct WaveformBlock {
    CMat streams;  // (n_tx + 2) x L, rows s_u^H, s_t^H, S_s
    CMat tx;       // n_tx x L, X = W S
    CVec tag_code; // length L, c_t
};

/// QPSK data rows plus a probing block S_s that is orthonormal (scaled by
/// sqrt(L)) and exactly orthogonal to both data rows, so (1/L) S_s S_s^H = I
/// holds by construction and the residual covariance error comes from the
/// single s_u/s_t cross term.
inline CMat synth_streams(const SystemConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    const int n = cfg.n_tx;
    const int L = cfg.sig_len;
    if (L <= n + 2) throw std::invalid_argument("synth_streams: requires sig_len > n_tx + 2");

    CMat s(n + 2, L);
    Rng rng(subseed(seed, 0xDA7A));
    for (int l = 0; l < L; ++l) s(0, l) = rng.next_qpsk();
    for (int l = 0; l < L; ++l) s(1, l) = rng.next_qpsk();

    // DFT rows 1..n (the DC row is skipped so sensing-mode tag codes c_t = 1
    // see exactly zero correlation), then one orthogonalization pass against
    // the data rows.
    const double w0 = 2.0 * std::numbers::pi / static_cast<double>(L);
    for (int k = 0; k < n; ++k)
        for (int l = 0; l < L; ++l)
            s(2 + k, l) = std::polar(1.0, -w0 * static_cast<double>((k + 1)) * l);

    // orthonormal basis of the data-row span (the two rows are correlated)
    CMat basis(2, L);
    basis.row(0) = s.row(0) / s.row(0).norm();
    basis.row(1) = s.row(1) - basis.row(0).dot(s.row(1)) * basis.row(0);
    basis.row(1) /= basis.row(1).norm();

    for (int k = 0; k < n; ++k) {
        auto row = s.row(2 + k);
        for (int d = 0; d < 2; ++d) row -= basis.row(d).dot(row) * basis.row(d);
        for (int j = 0; j < k; ++j)
            row -= (s.row(2 + j).dot(row) / static_cast<double>(L)) * s.row(2 + j);
        const double norm = row.norm();
        if (norm < 0.5 * std::sqrt(static_cast<double>(L)))
            throw std::runtime_error("synth_streams: orthogonalization collapsed");
        row *= std::sqrt(static_cast<double>(L)) / norm;
    }
    return s;
}

/// X = W S = w_u s_u^H + w_t s_t^H + W_s S_s.
inline CMat assemble_waveform(const Beamformer& bf, const CMat& streams) {
    const Eigen::Index n = bf.w_u.size();
    if (streams.rows() != n + 2)
        throw std::invalid_argument("assemble_waveform: stream/beamformer mismatch");
    return bf.matrix() * streams;
}

/// Sample covariance (1/L) X X^H.
inline CMat sample_covariance(const CMat& x) {
    return hermitian_part(CMat(x * x.adjoint() / static_cast<double>(x.cols())));
}

inline CVec all_ones_code(int L) { return CVec::Ones(L); }

inline CVec random_tag_code(int L, std::uint64_t seed) {
    Rng rng(subseed(seed, 0xC0DE));
    CVec c(L);
    for (int l = 0; l < L; ++l) c(l) = std::polar(1.0, 2.0 * std::numbers::pi * rng.next_double());
    return c;
}

/// y_t = h_f X + n_t.
inline CRowVec chain_tag_rx(const CMat& x, const ChannelSet& ch, const SystemConfig& cfg,
                            std::uint64_t noise_seed, bool with_noise = true) {
    CRowVec y = ch.h_f * x;
    if (with_noise && cfg.noise_tag > 0.0) {
        Rng rng(subseed(noise_seed, 0x7A6));
        for (Eigen::Index l = 0; l < y.size(); ++l) y(l) += rng.next_cgaussian(cfg.noise_tag);
    }
    return y;
}

/// y_b = sqrt(alpha) (y_t element-wise c_t).
inline CRowVec chain_backscatter(const CRowVec& y_t, const CVec& c_t, const SystemConfig& cfg) {
    if (y_t.size() != c_t.size()) throw std::invalid_argument("chain_backscatter: length mismatch");
    return std::sqrt(cfg.alpha) * y_t.cwiseProduct(c_t.transpose());
}

/// Y_ap = h_b^T y_b + N_ap (rank-1 spatial signature).
inline CMat chain_ap_rx(const CRowVec& y_b, const ChannelSet& ch, const SystemConfig& cfg,
                        std::uint64_t noise_seed, bool with_noise = true) {
    CMat y = ch.h_b.transpose() * y_b;
    if (with_noise && cfg.noise_ap > 0.0) {
        Rng rng(subseed(noise_seed, 0xAB));
        for (Eigen::Index c = 0; c < y.cols(); ++c)
            for (Eigen::Index r = 0; r < y.rows(); ++r)
                y(r, c) += rng.next_cgaussian(cfg.noise_ap);
    }
    return y;
}

/// y_u = h_u X + h_tu y_b + n_u.
inline CRowVec chain_ue_rx(const CMat& x, const CRowVec& y_b, const ChannelSet& ch,
                           const SystemConfig& cfg, std::uint64_t noise_seed,
                           bool with_noise = true) {
    CRowVec y = ch.h_u * x + ch.h_tu * y_b;
    if (with_noise && cfg.noise_ue > 0.0) {
        Rng rng(subseed(noise_seed, 0x0E));
        for (Eigen::Index l = 0; l < y.size(); ++l) y(l) += rng.next_cgaussian(cfg.noise_ue);
    }
    return y;
}

/// Probe-only beamformer realizing a target covariance: W_s W_s^H = cov.
inline Beamformer beamformer_from_covariance(const CMat& cov, double tol = 1e-9) {
    Beamformer bf = Beamformer::zero(static_cast<int>(cov.rows()));
    bf.w_probe = psd_factor(cov, tol);
    return bf;
}

/// Equal-gain combiner matched to the echo signature h_b^T: w_r = h_b^* / ||h_b||,
/// which makes w_r h_b^T = ||h_b|| and recovers the full array gain.
inline CRowVec equal_gain_combiner(const CRowVec& h_b) {
    const double norm = h_b.norm();
    if (norm <= 0.0) throw std::invalid_argument("equal_gain_combiner: zero channel");
    return h_b.conjugate() / norm;
}

}  // namespace bisac
