#include <catch2/catch_amalgamated.hpp>

#include "bisac/simkit.hpp"
#include "test_util.hpp"

using namespace bisac;
using namespace bisac::sim;
using Catch::Approx;

namespace {

SystemConfig trial_cfg(int n = 4, int L = 256) {
    SystemConfig cfg;
    cfg.n_tx = n;
    cfg.n_rx = n;
    cfg.sig_len = L;
    cfg.alpha = 0.5;
    cfg.power_budget = 1.0;
    cfg.pfa = 0.05;
    return cfg;
}

/// Beam pointed at theta under the channel-row phase convention.
Beamformer tag_beam(double theta, const SystemConfig& cfg) {
    Beamformer bf = Beamformer::zero(cfg.n_tx);
    bf.w_t = std::sqrt(cfg.power_budget / cfg.n_tx) * steering(theta, cfg.n_tx).conjugate();
    return bf;
}

ChannelSet basic_channels(Rng& rng, const SystemConfig& cfg) {
    ChannelSet ch;
    ch.h_f = testutil::random_cvec(rng, cfg.n_tx).transpose();
    ch.h_b = testutil::random_cvec(rng, cfg.n_rx).transpose();
    ch.h_u = testutil::random_cvec(rng, cfg.n_tx).transpose();
    ch.h_tu = 0.3;
    ch.h_tu_max = 0.5;
    return ch;
}

}  // namespace

TEST_CASE("h0 trials hit the configured false-alarm rate") {
    SystemConfig cfg = trial_cfg();
    const double theta = 1.1;
    Beamformer bf = tag_beam(theta, cfg);

    SECTION("even split") {
        SystemConfig half = cfg;
        half.pfa = 0.5;
        TrialReport rep = run_h0_trials(bf, theta, half, 100000, 11);
        CHECK(std::abs(rep.estimate - 0.5) <= 3.0 * rep.ci95_halfwidth / 1.96);
    }
    SECTION("rare false alarms over a million trials") {
        SystemConfig rare = cfg;
        rare.pfa = 1e-3;
        TrialReport rep = run_h0_trials(bf, theta, rare, 1000000, 12);
        const double sigma = std::sqrt(rare.pfa * (1.0 - rare.pfa) / 1e6);
        CHECK(std::abs(rep.estimate - rare.pfa) <= 3.0 * sigma);
    }
    SECTION("doubling the threshold pushes the rate strictly below pfa") {
        const ChannelSet sur = sim::detail::detection_surrogate(theta, cfg);
        auto det = sim::detail::make_detector(bf, sur, cfg, 13);
        const double proj_var = cfg.noise_ap * det.u.squaredNorm();
        Rng rng(14);
        long hits_1 = 0, hits_2 = 0;
        const long n = 200000;
        for (long t = 0; t < n; ++t) {
            const double stat =
                std::sqrt(cfg.alpha) * std::real(std::conj(det.g) * rng.next_cgaussian(proj_var));
            if (stat > det.eta) ++hits_1;
            if (stat > 2.0 * det.eta) ++hits_2;
        }
        CHECK(static_cast<double>(hits_2) / n < cfg.pfa);
        CHECK(hits_2 < hits_1);
    }
    SECTION("bit-reproducible under a fixed seed") {
        TrialReport a = run_h0_trials(bf, theta, cfg, 20000, 21);
        TrialReport b = run_h0_trials(bf, theta, cfg, 20000, 21);
        CHECK(a.estimate == b.estimate);
        CHECK(a.to_json().dump() == b.to_json().dump());
    }
}

TEST_CASE("detection trials") {
    SystemConfig cfg = trial_cfg();
    const double theta = 1.1;
    Beamformer bf = tag_beam(theta, cfg);

    SECTION("alpha zero under h1 degenerates to the false-alarm rate") {
        DetectionTrialOptions opts;
        opts.alpha_true = 0.0;
        TrialReport rep = run_detection_trials(bf, theta, cfg, 4000, 31, opts);
        CHECK(rep.analytic_reference == Approx(cfg.pfa).epsilon(1e-9));
        CHECK(std::abs(rep.estimate - cfg.pfa) <=
              3.0 * std::sqrt(cfg.pfa * (1.0 - cfg.pfa) / 4000));
    }
    SECTION("saturated detection at high sinr") {
        TrialReport rep = run_detection_trials(bf, theta, cfg, 2000, 32);
        CHECK(rep.analytic_reference >= 0.999);
        CHECK(rep.estimate >= 0.999);
    }
    SECTION("mid-curve agreement with the erfc law at the integrated snr") {
        // regime chosen so the H1 statistic variance matches H0 (tag noise
        // negligible through the template): deflection^2 = L * gamma_ap
        SystemConfig mid = cfg;
        mid.alpha = 1e-8;
        Beamformer beam = tag_beam(theta, mid);
        const long n = 3000;
        TrialReport rep = run_detection_trials(beam, theta, mid, n, 33);
        const double gamma = sinr_ap_grid(beam, theta, mid).value;
        const double want = detection_probability(mid.sig_len * gamma, mid.pfa);
        CHECK(want > 0.2);
        CHECK(want < 0.98);
        CHECK(std::abs(rep.estimate - want) <= 0.04);
    }
}

TEST_CASE("ls estimation trials") {
    SystemConfig cfg = trial_cfg(4, 256);
    Rng rng(41);
    ChannelSet ch = basic_channels(rng, cfg);
    Beamformer orth = beamformer_from_covariance(ls_optimal_covariance(cfg));

    SECTION("noiseless estimation is exact") {
        SystemConfig quiet = cfg;
        quiet.noise_ap = 1e-300;
        TrialReport rep = run_ls_trials(orth, ch, quiet, 10, 42);
        CHECK(rep.estimate <= 1e-20);
    }
    SECTION("tag noise off matches the closed form within 5 percent") {
        TrialReport rep = run_ls_trials(orth, ch, cfg, 1000, 43);
        CHECK(rep.relative_gap <= 0.05);
    }
    SECTION("full model stays within 15 percent in a low re-scatter regime") {
        // the closed form whitens the rank-1 re-scattered tag noise; keep
        // alpha ||h_b||^2 sigma_t^2 well under sigma_ap^2 so that
        // approximation bias stays inside the stated tolerance
        ChannelSet weak = ch;
        weak.h_b *= 0.2 / weak.h_b.norm();
        EstimationTrialOptions opts;
        opts.tag_noise = TagNoise::On;
        TrialReport rep = run_ls_trials(orth, weak, cfg, 1000, 44, opts);
        CHECK(rep.relative_gap <= 0.15);
    }
    SECTION("rank-deficient waveform is rejected") {
        Beamformer rank1 = Beamformer::zero(cfg.n_tx);
        rank1.w_u = testutil::random_cvec(rng, cfg.n_tx);
        CHECK_THROWS_AS(run_ls_trials(rank1, ch, cfg, 10, 45), SingularMatrixError);
    }
}

TEST_CASE("lmmse estimation trials") {
    SystemConfig cfg = trial_cfg(4, 256);
    Rng rng(51);
    ChannelSet ch = basic_channels(rng, cfg);
    EstimatorPrior prior{testutil::random_psd(rng, 4) + 0.2 * CMat::Identity(4, 4)};
    Beamformer orth = beamformer_from_covariance(ls_optimal_covariance(cfg));

    SECTION("matches the closed form within 5 percent") {
        TrialReport rep = run_lmmse_trials(orth, prior, ch, cfg, 1000, 52);
        CHECK(rep.relative_gap <= 0.05);
    }
    SECTION("zero waveform leaves the prior uncertainty") {
        Beamformer idle = Beamformer::zero(cfg.n_tx);
        TrialReport rep = run_lmmse_trials(idle, prior, ch, cfg, 600, 53);
        CHECK(rep.analytic_reference == Approx(prior.r_g.trace().real()).epsilon(1e-9));
        CHECK(rep.relative_gap <= 0.10);
    }
    SECTION("huge prior degenerates to the ls estimate") {
        EstimatorPrior huge{CMat(1e6 * prior.r_g)};
        PairedEstimationReport rep =
            run_paired_estimation_trials(orth, huge, ch, cfg, 20, 40, 54);
        CHECK(std::abs(rep.lmmse.estimate - rep.ls.estimate) <= 0.02 * rep.ls.estimate);
    }
    SECTION("paired lmmse never loses by much, wins nearly always") {
        PairedEstimationReport rep =
            run_paired_estimation_trials(orth, prior, ch, cfg, 100, 25, 55);
        CHECK(rep.lmmse_wins >= 95);
        CHECK(rep.lmmse.estimate <= rep.ls.estimate);
    }
    SECTION("water filling beats the orthogonal waveform on shared draws") {
        // anisotropic prior so the water level actually discriminates
        CMat rg = CMat::Zero(4, 4);
        rg(0, 0) = 2.0;
        rg(1, 1) = 0.5;
        rg(2, 2) = 0.05;
        rg(3, 3) = 0.005;
        EstimatorPrior aniso{rg};
        SystemConfig weak = cfg;
        weak.power_budget = 2e-4;  // low power so some modes fall below water
        Beamformer wf =
            beamformer_from_covariance(lmmse_optimal_covariance(aniso, ch.h_b, weak));
        Beamformer orth_weak = beamformer_from_covariance(ls_optimal_covariance(weak));
        TrialReport rep_wf = run_lmmse_trials(wf, aniso, ch, weak, 1000, 56);
        TrialReport rep_orth = run_lmmse_trials(orth_weak, aniso, ch, weak, 1000, 56);
        CHECK(rep_wf.estimate <= rep_orth.estimate);
        CHECK(rep_wf.analytic_reference <= rep_orth.analytic_reference);
    }
}

TEST_CASE("rate trials") {
    SystemConfig cfg = trial_cfg(4, 2048);
    Rng rng(61);
    ChannelSet ch = basic_channels(rng, cfg);

    SECTION("single beam with no tag path") {
        ChannelSet quiet = ch;
        quiet.h_tu = 0.0;
        Beamformer bf = Beamformer::zero(cfg.n_tx);
        bf.w_u = std::sqrt(cfg.power_budget) * quiet.h_u.adjoint() / quiet.h_u.norm();
        TrialReport rep = run_rate_trials(bf, quiet, cfg, 40, 62);
        const double want = std::norm(cxd(quiet.h_u * bf.w_u)) / cfg.noise_ue;
        CHECK(rep.analytic_reference == Approx(want).epsilon(1e-9));
        CHECK(rep.relative_gap <= 0.05);
    }
    SECTION("no communication beam measures zero") {
        Beamformer bf = Beamformer::zero(cfg.n_tx);
        bf.w_t = std::sqrt(cfg.power_budget) * ch.h_f.adjoint() / ch.h_f.norm();
        TrialReport rep = run_rate_trials(bf, ch, cfg, 20, 63);
        CHECK(rep.estimate <= 1e-2);
    }
}

TEST_CASE("analytic sinr formulas match the chain at the paper block length") {
    SystemConfig cfg = trial_cfg(8, 2048);
    Rng rng(71);
    for (int scen = 0; scen < 20; ++scen) {
        ChannelSet ch = basic_channels(rng, cfg);
        // moderate-SINR beamformer: matched beams plus probing floor
        Beamformer bf;
        bf.w_u = ch.h_u.adjoint() / ch.h_u.norm() +
                 0.3 * testutil::random_cvec(rng, cfg.n_tx).normalized();
        bf.w_t = ch.h_f.adjoint() / ch.h_f.norm() +
                 0.3 * testutil::random_cvec(rng, cfg.n_tx).normalized();
        bf.w_probe = 0.15 * testutil::random_cmat(rng, cfg.n_tx, cfg.n_tx);
        const double scale = std::sqrt(cfg.power_budget / bf.total_power());
        bf.w_u *= scale;
        bf.w_t *= scale;
        bf.w_probe *= scale;

        const std::uint64_t seed = 7000 + scen;
        TrialReport tag = run_tag_sinr_trials(bf, ch, cfg, 25, seed);
        REQUIRE(tag.relative_gap <= 0.05);
        TrialReport ue = run_rate_trials(bf, ch, cfg, 25, seed);
        REQUIRE(ue.relative_gap <= 0.05);
        TrialReport ap = run_ap_sinr_trials(bf, ch, cfg, 25, seed);
        REQUIRE(ap.relative_gap <= 0.05);
    }
}
