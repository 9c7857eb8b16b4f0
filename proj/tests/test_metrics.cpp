#include <catch2/catch_amalgamated.hpp>

#include "bisac/metrics.hpp"
#include "test_util.hpp"

using namespace bisac;
using Catch::Approx;

namespace {

SystemConfig cfg_of(int n_tx, int n_rx, int L = 256) {
    SystemConfig cfg;
    cfg.n_tx = n_tx;
    cfg.n_rx = n_rx;
    cfg.sig_len = L;
    cfg.alpha = 0.5;
    cfg.power_budget = 1.0;
    return cfg;
}

Beamformer random_bf(Rng& rng, const SystemConfig& cfg) {
    Beamformer bf;
    bf.w_u = testutil::random_cvec(rng, cfg.n_tx);
    bf.w_t = testutil::random_cvec(rng, cfg.n_tx);
    bf.w_probe = testutil::random_cmat(rng, cfg.n_tx, cfg.n_tx);
    const double scale = std::sqrt(cfg.power_budget / bf.total_power());
    bf.w_u *= scale;
    bf.w_t *= scale;
    bf.w_probe *= scale;
    return bf;
}

ChannelSet random_channels(Rng& rng, const SystemConfig& cfg) {
    ChannelSet ch;
    ch.h_f = testutil::random_cvec(rng, cfg.n_tx).transpose();
    ch.h_b = testutil::random_cvec(rng, cfg.n_rx).transpose();
    ch.h_u = testutil::random_cvec(rng, cfg.n_tx).transpose();
    ch.h_tu = 0.3 * rng.next_cgaussian();
    ch.h_tu_max = std::abs(ch.h_tu) + 0.1;
    return ch;
}

}  // namespace

TEST_CASE("beampattern") {
    SystemConfig cfg = cfg_of(8, 8);
    SECTION("uniform covariance radiates the budget at every angle") {
        const CMat r = ls_optimal_covariance(cfg);
        const auto p = beampattern(r, {0.1, 0.8, 1.6, 2.4, 3.0});
        for (double v : p) CHECK(v == Approx(cfg.power_budget).epsilon(1e-12));
    }
    SECTION("aligned rank-1 peaks at p Nt^2") {
        const double th = 1.1;
        const CRowVec h = steering(th, cfg.n_tx).transpose();  // channel row toward theta
        const CMat r = 0.3 * h.adjoint() * h;
        CHECK(beampattern(r, {th})[0] == Approx(0.3 * cfg.n_tx * cfg.n_tx).epsilon(1e-12));
    }
    SECTION("matches direct quadratic form") {
        Rng rng(3);
        const CMat r = testutil::random_psd(rng, 8);
        for (double th : {0.3, 1.2, 2.2}) {
            const CRowVec h = steering(th, 8).transpose();
            CHECK(beampattern(r, {th})[0] ==
                  Approx(std::real(cxd(h * r * h.adjoint()))).epsilon(1e-12));
        }
    }
    SECTION("rejects indefinite input") {
        CMat m = CMat::Identity(3, 3);
        m(1, 1) = -1.0;
        CHECK_THROWS_AS(beampattern(m, {0.0}), NotPsdError);
    }
}

TEST_CASE("sinr_tag") {
    SystemConfig cfg = cfg_of(6, 8);
    Rng rng(5);
    ChannelSet ch = random_channels(rng, cfg);
    SECTION("pure tag beam") {
        Beamformer bf = Beamformer::zero(cfg.n_tx);
        bf.w_t = testutil::random_cvec(rng, cfg.n_tx);
        const double want = std::norm(cxd(ch.h_f * bf.w_t)) / cfg.noise_tag;
        CHECK(sinr_tag(bf, ch.h_f, cfg.noise_tag).value == Approx(want).epsilon(1e-12));
    }
    SECTION("no tag beam gives zero") {
        Beamformer bf = random_bf(rng, cfg);
        bf.w_t.setZero();
        CHECK(sinr_tag(bf, ch.h_f, cfg.noise_tag).value == 0.0);
    }
    SECTION("matches the component-wise waveform power decomposition") {
        SystemConfig big = cfg_of(8, 8, 2048);
        Beamformer bf = random_bf(rng, big);
        const CRowVec h_f = testutil::random_cvec(rng, big.n_tx).transpose();
        const CMat s = synth_streams(big, 77);
        // empirical per-component powers over the block
        const auto row_power = [&](const CRowVec& r) { return r.squaredNorm() / big.sig_len; };
        const double sig = row_power(CRowVec((h_f * bf.w_t)(0) * s.row(1)));
        const double i_u = row_power(CRowVec((h_f * bf.w_u)(0) * s.row(0)));
        const double i_s = row_power(CRowVec((h_f * bf.w_probe) * s.bottomRows(8)));
        const double emp = sig / (i_u + i_s + big.noise_tag);
        CHECK(sinr_tag(bf, h_f, big.noise_tag).value == Approx(emp).epsilon(0.05));
    }
}

TEST_CASE("sinr_ap and the angle-grid surrogate") {
    SystemConfig cfg = cfg_of(6, 8);
    Rng rng(7);
    ChannelSet ch = random_channels(rng, cfg);
    Beamformer bf = random_bf(rng, cfg);

    SECTION("alpha = 0 gives zero") {
        SystemConfig c0 = cfg;
        c0.alpha = 0.0;
        const CRowVec w_r = equal_gain_combiner(ch.h_b);
        CHECK(sinr_ap(bf, ch.h_f, ch.h_b, w_r, c0).value == 0.0);
    }
    SECTION("equal-gain collapse at zero tag noise") {
        SystemConfig c0 = cfg;
        c0.noise_tag = 1e-300;  // effectively zero, keeps validate() happy
        const CRowVec w_r = equal_gain_combiner(ch.h_b);
        const CMat r_w = bf.covariance();
        const double echo = std::real(cxd(ch.h_f * r_w * ch.h_f.adjoint()));
        const double want = c0.alpha * ch.h_b.squaredNorm() * echo / c0.noise_ap;
        CHECK(sinr_ap(bf, ch.h_f, ch.h_b, w_r, c0).value == Approx(want).epsilon(1e-9));
    }
    SECTION("surrogate channels reduce exactly to the grid formula") {
        for (double th : {0.4, 1.57, 2.4}) {
            ChannelSet sur;
            sur.h_f = los_channel(th, 1.0, cfg.n_tx, LosDirection::Tx);
            sur.h_b = los_channel(th, 1.0, cfg.n_rx, LosDirection::Rx);
            const CRowVec w_r = equal_gain_combiner(sur.h_b);
            const double full = sinr_ap(bf, sur.h_f, sur.h_b, w_r, cfg).value;
            const double grid = sinr_ap_grid(bf, th, cfg).value;
            CHECK(full == Approx(grid).epsilon(1e-12));
        }
    }
    SECTION("grid formula closed forms") {
        Beamformer uni = Beamformer::zero(cfg.n_tx);
        uni.w_probe = std::sqrt(cfg.power_budget / cfg.n_tx) * CMat::Identity(cfg.n_tx, cfg.n_tx);
        const double den = cfg.alpha * cfg.n_rx * cfg.noise_tag + cfg.noise_ap;
        CHECK(sinr_ap_grid(uni, 0.9, cfg).value ==
              Approx(cfg.alpha * cfg.n_rx * cfg.power_budget / den).epsilon(1e-12));

        Beamformer aligned = Beamformer::zero(cfg.n_tx);
        aligned.w_t =
            std::sqrt(cfg.power_budget / cfg.n_tx) * steering(0.9, cfg.n_tx).conjugate();
        CHECK(sinr_ap_grid(aligned, 0.9, cfg).value ==
              Approx(cfg.alpha * cfg.n_rx * cfg.n_tx * cfg.power_budget / den).epsilon(1e-12));
    }
}

TEST_CASE("detection_probability") {
    CHECK(detection_probability(0.0, 1e-4) == Approx(1e-4).epsilon(1e-10));
    CHECK(detection_probability(1e6, 1e-4) == Approx(1.0).epsilon(1e-12));
    CHECK(detection_probability(1.0, 0.5) == Approx(0.5 * bisac::erfc(-1.0)).epsilon(1e-12));
    CHECK(detection_probability(1.0, 0.5) == Approx(0.9213503964748574).epsilon(1e-10));
    for (double pfa : {1e-6, 1e-4, 1e-2, 0.5}) {
        CHECK(detection_probability(0.0, pfa) == Approx(pfa).epsilon(1e-9));
        double prev = 0.0;
        for (double g : {0.0, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0}) {
            const double pd = detection_probability(g, pfa);
            CHECK(pd >= prev);
            prev = pd;
        }
    }
    CHECK_THROWS_AS(detection_probability(-1.0, 0.5), std::domain_error);
    CHECK_THROWS_AS(detection_probability(1.0, 0.0), std::domain_error);
}

TEST_CASE("sinr_ue and rate") {
    SystemConfig cfg = cfg_of(6, 8);
    Rng rng(9);
    ChannelSet ch = random_channels(rng, cfg);
    SECTION("single-beam collapse") {
        ChannelSet c2 = ch;
        c2.h_tu = 0.0;
        Beamformer bf = Beamformer::zero(cfg.n_tx);
        bf.w_u = testutil::random_cvec(rng, cfg.n_tx);
        const double want = std::norm(cxd(c2.h_u * bf.w_u)) / cfg.noise_ue;
        CHECK(sinr_ue(bf, c2, cfg).value == Approx(want).epsilon(1e-12));
        CHECK(rate_ue(bf, c2, cfg) == Approx(std::log2(1.0 + want)).epsilon(1e-12));
    }
    SECTION("no communication beam") {
        Beamformer bf = random_bf(rng, cfg);
        bf.w_u.setZero();
        CHECK(sinr_ue(bf, ch, cfg).value == 0.0);
        CHECK(rate_ue(bf, ch, cfg) == 0.0);
    }
    SECTION("re-scatter interference block enters with alpha |h_tu|^2") {
        Beamformer bf = random_bf(rng, cfg);
        const double tu2 = std::norm(ch.h_tu);
        const double direct =
            std::norm(cxd(ch.h_u * bf.w_t)) + (ch.h_u * bf.w_probe).squaredNorm();
        const double through = std::norm(cxd(ch.h_f * bf.w_u)) + std::norm(cxd(ch.h_f * bf.w_t)) +
                               (ch.h_f * bf.w_probe).squaredNorm() + cfg.noise_tag;
        const double want = std::norm(cxd(ch.h_u * bf.w_u)) /
                            (direct + cfg.alpha * tu2 * through + cfg.noise_ue);
        CHECK(sinr_ue(bf, ch, cfg).value == Approx(want).epsilon(1e-12));
    }
}

TEST_CASE("ls_error") {
    SystemConfig cfg = cfg_of(8, 8, 2048);
    Rng rng(11);
    ChannelSet ch = random_channels(rng, cfg);
    SECTION("substitution at the orthogonal covariance") {
        const double sigma = estimation_noise_scale(ch.h_b, cfg);
        const double want = cfg.n_rx * sigma * cfg.n_tx * cfg.n_tx /
                            (cfg.alpha * cfg.sig_len * cfg.power_budget);
        CHECK(ls_error(ls_optimal_covariance(cfg), ch.h_b, cfg) == Approx(want).epsilon(1e-12));
    }
    SECTION("doubling the power halves the error") {
        const CMat r = testutil::random_psd(rng, cfg.n_tx) + 0.1 * CMat::Identity(8, 8);
        CHECK(ls_error(CMat(2.0 * r), ch.h_b, cfg) ==
              Approx(0.5 * ls_error(r, ch.h_b, cfg)).epsilon(1e-12));
    }
    SECTION("singular covariance reports infinity") {
        const CMat r = testutil::random_psd(rng, 8, 5);
        CHECK(std::isinf(ls_error(r, ch.h_b, cfg)));
    }
    SECTION("orthogonal is optimal among same-trace covariances") {
        const double best = ls_error(ls_optimal_covariance(cfg), ch.h_b, cfg);
        for (int t = 0; t < 100; ++t) {
            CMat r = testutil::random_psd(rng, cfg.n_tx) + 1e-3 * CMat::Identity(8, 8);
            r *= cfg.power_budget / r.trace().real();
            REQUIRE(ls_error(r, ch.h_b, cfg) >= best * (1.0 - 1e-12));
        }
    }
}

TEST_CASE("lmmse_error and the water-filling covariance") {
    SystemConfig cfg = cfg_of(8, 8, 2048);
    Rng rng(13);
    ChannelSet ch = random_channels(rng, cfg);
    EstimatorPrior prior{testutil::random_psd(rng, 8) + 0.05 * CMat::Identity(8, 8)};
    prior.validate();

    SECTION("no measurement leaves the prior uncertainty") {
        CHECK(lmmse_error(CMat::Zero(8, 8), prior, ch.h_b, cfg) ==
              Approx(prior.r_g.trace().real()).epsilon(1e-10));
    }
    SECTION("huge prior degenerates to the non-Bayesian error") {
        EstimatorPrior huge{CMat(1e9 * prior.r_g)};
        const CMat r = testutil::random_psd(rng, 8) + 0.1 * CMat::Identity(8, 8);
        CHECK(lmmse_error(r, huge, ch.h_b, cfg) ==
              Approx(ls_error(r, ch.h_b, cfg)).epsilon(1e-6));
    }
    SECTION("bayesian never loses to ls") {
        for (int t = 0; t < 30; ++t) {
            const CMat r = testutil::random_psd(rng, 8) + 1e-4 * CMat::Identity(8, 8);
            REQUIRE(lmmse_error(r, prior, ch.h_b, cfg) <=
                    ls_error(r, ch.h_b, cfg) * (1.0 + 1e-12));
        }
    }
    SECTION("errors decrease along r_w + t I") {
        const CMat r = testutil::random_psd(rng, 8);
        double prev_ls = std::numeric_limits<double>::infinity();
        double prev_lm = std::numeric_limits<double>::infinity();
        for (double t : {1e-3, 1e-2, 1e-1, 1.0}) {
            const CMat rt = r + t * CMat::Identity(8, 8);
            const double e_ls = ls_error(rt, ch.h_b, cfg);
            const double e_lm = lmmse_error(rt, prior, ch.h_b, cfg);
            REQUIRE(e_ls < prev_ls);
            REQUIRE(e_lm < prev_lm);
            prev_ls = e_ls;
            prev_lm = e_lm;
        }
    }
    SECTION("isotropic prior gives equal allocation") {
        EstimatorPrior iso{CMat(0.7 * CMat::Identity(8, 8))};
        const CMat r = lmmse_optimal_covariance(iso, ch.h_b, cfg);
        CHECK((r - ls_optimal_covariance(cfg)).norm() <= 1e-9);
    }
    SECTION("trace pinned to the budget") {
        const CMat r = lmmse_optimal_covariance(prior, ch.h_b, cfg);
        CHECK(r.trace().real() == Approx(cfg.power_budget).epsilon(1e-9));
    }
    SECTION("two-mode kkt oracle: weak mode shut off at low power") {
        SystemConfig c2 = cfg_of(2, 8, 2048);
        c2.power_budget = 1e-6;
        CMat rg = CMat::Zero(2, 2);
        rg(0, 0) = 1.0;
        rg(1, 1) = 0.01;
        EstimatorPrior p2{rg};
        const CMat r = lmmse_optimal_covariance(p2, ch.h_b, c2);
        CHECK(r(0, 0).real() == Approx(c2.power_budget).epsilon(1e-6));
        CHECK(std::abs(r(1, 1)) <= 1e-12);
    }
    SECTION("water filling beats any same-trace covariance") {
        const CMat wf = lmmse_optimal_covariance(prior, ch.h_b, cfg);
        const double best = lmmse_error(wf, prior, ch.h_b, cfg);
        for (int t = 0; t < 100; ++t) {
            CMat r = testutil::random_psd(rng, 8) + 1e-4 * CMat::Identity(8, 8);
            r *= cfg.power_budget / r.trace().real();
            REQUIRE(lmmse_error(r, prior, ch.h_b, cfg) >= best * (1.0 - 1e-10));
        }
    }
}

TEST_CASE("cfar_threshold") {
    SystemConfig cfg = cfg_of(6, 8);
    Rng rng(17);
    ChannelSet ch = random_channels(rng, cfg);
    Beamformer bf = random_bf(rng, cfg);
    const CRowVec w_r = equal_gain_combiner(ch.h_b);

    SECTION("even split gives a zero threshold") {
        SystemConfig half = cfg;
        half.pfa = 0.5;
        CHECK(cfar_threshold(bf, ch, w_r, half) == Approx(0.0).margin(1e-15));
    }
    SECTION("threshold scales linearly with the ap noise deviation") {
        const double eta1 = cfar_threshold(bf, ch, w_r, cfg);
        SystemConfig c4 = cfg;
        c4.noise_ap = 4.0 * cfg.noise_ap;
        CHECK(cfar_threshold(bf, ch, w_r, c4) == Approx(2.0 * eta1).epsilon(1e-12));
    }
}

TEST_CASE("estimator prior validation") {
    Rng rng(19);
    EstimatorPrior bad{testutil::random_psd(rng, 4, 2)};
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}
