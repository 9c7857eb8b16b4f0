#include <catch2/catch_amalgamated.hpp>

#include "bisac/linalg.hpp"
#include "test_util.hpp"

using namespace bisac;
using testutil::random_cmat;
using testutil::random_hermitian;
using testutil::random_psd;

namespace {

// Independent Taylor-series oracle for erf, evaluated in long double.
long double erf_series(long double x) {
    long double term = x, sum = x;
    for (int n = 1; n < 200; ++n) {
        term *= -x * x / n;
        const long double add = term / (2 * n + 1);
        sum += add;
        if (std::abs(add) < 1e-25L) break;
    }
    return sum * 2.0L / std::sqrt(std::acos(-1.0L));
}

}  // namespace

TEST_CASE("hermitian_evd basic cases") {
    SECTION("identity") {
        Evd e = hermitian_evd(CMat::Identity(3, 3));
        for (int k = 0; k < 3; ++k) CHECK(e.eigenvalues(k) == Catch::Approx(1.0));
    }
    SECTION("diagonal") {
        CMat d = CMat::Zero(2, 2);
        d(0, 0) = 3.0;
        d(1, 1) = 1.0;
        Evd e = hermitian_evd(d);
        CHECK(e.eigenvalues(0) == Catch::Approx(3.0));
        CHECK(e.eigenvalues(1) == Catch::Approx(1.0));
        CHECK(std::abs(e.eigenvectors(0, 0)) == Catch::Approx(1.0));
        CHECK(std::abs(e.eigenvectors(1, 1)) == Catch::Approx(1.0));
    }
    SECTION("random 8x8 reconstruction") {
        Rng rng(7);
        const CMat m = random_hermitian(rng, 8);
        Evd e = hermitian_evd(m);
        const CMat rec = e.eigenvectors * e.eigenvalues.asDiagonal() * e.eigenvectors.adjoint();
        CHECK((rec - m).norm() <= 1e-9 * m.norm());
    }
    SECTION("non-Hermitian input rejected") {
        Rng rng(8);
        CMat m = random_cmat(rng, 3, 3);
        m(0, 1) += cxd(1.0, 0.0);
        CHECK_THROWS_AS(hermitian_evd(m), NotHermitianError);
    }
}

TEST_CASE("hermitian_evd properties over random matrices") {
    Rng rng(11);
    for (int trial = 0; trial < 1000; ++trial) {
        const int n = 1 + static_cast<int>(rng.next_u64() % 32);
        const CMat m = random_hermitian(rng, n);
        Evd e = hermitian_evd(m);
        const CMat rec = e.eigenvectors * e.eigenvalues.asDiagonal() * e.eigenvectors.adjoint();
        REQUIRE((rec - m).norm() <= 1e-9 * std::max(1.0, m.norm()));
        REQUIRE((e.eigenvectors.adjoint() * e.eigenvectors - CMat::Identity(n, n)).norm() <= 1e-10 * n);
        for (int k = 1; k < n; ++k) REQUIRE(e.eigenvalues(k - 1) >= e.eigenvalues(k) - 1e-12);
    }
}

TEST_CASE("psd_factor") {
    SECTION("identity") {
        const CMat l = psd_factor(CMat::Identity(4, 4), 1e-9);
        CHECK((l * l.adjoint() - CMat::Identity(4, 4)).norm() <= 1e-12);
    }
    SECTION("rank-1") {
        Rng rng(3);
        const CVec v = testutil::random_cvec(rng, 5);
        const CMat m = v * v.adjoint();
        const CMat l = psd_factor(m, 1e-9);
        CHECK((l * l.adjoint() - m).norm() <= 1e-10 * m.norm());
        // single nonzero column, proportional to v
        int nonzero = 0;
        for (int k = 0; k < 5; ++k)
            if (l.col(k).norm() > 1e-6 * v.norm()) {
                ++nonzero;
                const cxd phase = l.col(k).dot(v) / (l.col(k).norm() * v.norm());
                CHECK(std::abs(std::abs(phase) - 1.0) <= 1e-10);
            }
        CHECK(nonzero == 1);
    }
    SECTION("tiny negative eigenvalue clipped under tolerance") {
        Rng rng(5);
        CMat m = random_psd(rng, 6);
        Evd e = hermitian_evd(m);
        // plant an eigenvalue at -1e-12
        e.eigenvalues(5) = -1e-12;
        m = e.eigenvectors * e.eigenvalues.asDiagonal() * e.eigenvectors.adjoint();
        const CMat l = psd_factor(hermitian_part(m), 1e-9);
        RVec clipped = e.eigenvalues;
        clipped(5) = 0.0;
        const CMat want = e.eigenvectors * clipped.asDiagonal() * e.eigenvectors.adjoint();
        CHECK((l * l.adjoint() - want).norm() <= 1e-9 * 6);
    }
    SECTION("genuinely indefinite rejected") {
        CMat m = CMat::Identity(3, 3);
        m(2, 2) = -0.5;
        CHECK_THROWS_AS(psd_factor(m, 1e-9), NotPsdError);
    }
    SECTION("random PSD plus perturbation stays consistent") {
        Rng rng(17);
        for (int trial = 0; trial < 50; ++trial) {
            const int n = 2 + static_cast<int>(rng.next_u64() % 10);
            CMat m = random_psd(rng, n);
            m += 1e-12 * random_hermitian(rng, n);
            const CMat l = psd_factor(hermitian_part(m), 1e-8);
            Evd e = hermitian_evd(CMat(l * l.adjoint()));
            REQUIRE(e.eigenvalues.minCoeff() >= -1e-12);
            REQUIRE((l * l.adjoint() - m).norm() <= 1e-8 * n * std::max(1.0, m.norm()));
        }
    }
}

TEST_CASE("pseudo_inverse") {
    SECTION("scalar") {
        CMat x(1, 1);
        x(0, 0) = 2.0;
        CHECK(pseudo_inverse(x)(0, 0).real() == Catch::Approx(0.5));
    }
    SECTION("scaled unitary rows") {
        Rng rng(23);
        const CMat q = hermitian_evd(random_hermitian(rng, 4)).eigenvectors;  // unitary
        const CMat x = 3.0 * q.adjoint();
        const CMat pinv = pseudo_inverse(x);
        CHECK((pinv - q / 3.0).norm() <= 1e-10);
    }
    SECTION("random wide full rank") {
        Rng rng(29);
        const CMat x = random_cmat(rng, 4, 16);
        const CMat pinv = pseudo_inverse(x);
        CHECK((x * pinv - CMat::Identity(4, 4)).norm() <= 1e-9);
    }
    SECTION("rank-deficient rows rejected") {
        Rng rng(31);
        CMat x = random_cmat(rng, 3, 8);
        x.row(2) = x.row(0) + x.row(1);
        CHECK_THROWS_AS(pseudo_inverse(x), SingularMatrixError);
    }
}

TEST_CASE("erfc and erfc_inv") {
    CHECK(bisac::erfc(0.0) == Catch::Approx(1.0));
    CHECK(erfc_inv(1.0) == 0.0);

    SECTION("erfc(1) against series oracle") {
        const double ref = static_cast<double>(1.0L - erf_series(1.0L));
        CHECK(std::abs(bisac::erfc(1.0) - ref) <= 1e-14);
        CHECK(bisac::erfc(1.0) == Catch::Approx(0.15729920705028513).epsilon(1e-12));
    }
    SECTION("round trip over log-spaced grid") {
        for (int k = -14; k <= 0; ++k) {
            for (double mant : {1.0, 2.5, 7.0}) {
                const double y = mant * std::pow(10.0, k);
                if (y >= 2.0) continue;
                CHECK(std::abs(bisac::erfc(erfc_inv(y)) - y) <= 1e-12);
                const double y2 = 2.0 - y;
                if (y2 > 0.0 && y2 < 2.0)
                    CHECK(std::abs(bisac::erfc(erfc_inv(y2)) - y2) <= 1e-12);
            }
        }
    }
    SECTION("monotone decreasing") {
        double prev = bisac::erfc(-6.0);
        for (double x = -5.5; x <= 6.0; x += 0.5) {
            const double v = bisac::erfc(x);
            CHECK(v < prev);
            prev = v;
        }
    }
    SECTION("domain errors") {
        CHECK_THROWS_AS(erfc_inv(0.0), std::domain_error);
        CHECK_THROWS_AS(erfc_inv(2.0), std::domain_error);
        CHECK_THROWS_AS(erfc_inv(-0.1), std::domain_error);
    }
}
