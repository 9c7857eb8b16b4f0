#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "bisac/conic/cones.hpp"

// Homogeneous self-dual interior-point method for
//
//     minimize    c'x
//     subject to  A x = b
//                 G x + s = h,  s in K,
//
// K a product of nonnegative, second-order and PSD cones. Nesterov-Todd
// scaling, Mehrotra predictor-corrector steps, dense normal-equation KKT
// solves with one round of iterative refinement. Problem data are scaled to
// unit Frobenius norm per constraint block up front; reported residuals are
// in scaled units.

namespace bisac::conic {

enum class SolveStatus { Optimal, Infeasible, Unbounded, IterLimit, NumericalFailure };

inline const char* to_string(SolveStatus s) {
    switch (s) {
        case SolveStatus::Optimal: return "Optimal";
        case SolveStatus::Infeasible: return "Infeasible";
        case SolveStatus::Unbounded: return "Unbounded";
        case SolveStatus::IterLimit: return "IterLimit";
        default: return "NumericalFailure";
    }
}

struct StandardForm {
    VectorXd c;
    MatrixXd G;
    VectorXd h;
    MatrixXd A;  // may have zero rows
    VectorXd b;
    ConeSpec cones;
};

struct SolverSettings {
    double feastol = 1e-9;          // internal target
    double gaptol = 1e-8;           // internal target, relative
    double reported_feastol = 1e-7; // Optimal is declared against these
    double reported_gaptol = 1e-6;
    int max_iter = 200;
    int refine_rounds = 1;
    double init_scale = 1.0;
};

struct IterInfo {
    double pcost, dcost, relgap, pres, dres, mu, step;
};

struct RawSolution {
    SolveStatus status = SolveStatus::NumericalFailure;
    VectorXd x, y, z, s;
    double tau = 0.0, kappa = 0.0;
    double pcost = 0.0, dcost = 0.0;
    double relgap = std::numeric_limits<double>::infinity();
    double pres = std::numeric_limits<double>::infinity();
    double dres = std::numeric_limits<double>::infinity();
    int iterations = 0;
    std::vector<IterInfo> trace;
    std::string message;
};

class IpmSolver {
public:
    explicit IpmSolver(StandardForm sf, SolverSettings settings = {})
        : sf_(std::move(sf)), set_(settings), lay_(sf_.cones) {
        n_ = static_cast<int>(sf_.c.size());
        m_ = lay_.total();
        p_ = static_cast<int>(sf_.A.rows());
        if (sf_.G.rows() != m_ || sf_.G.cols() != n_ || sf_.h.size() != m_)
            throw std::invalid_argument("IpmSolver: cone rows mismatch");
        if (p_ > 0 && (sf_.A.cols() != n_ || sf_.b.size() != p_))
            throw std::invalid_argument("IpmSolver: equality rows mismatch");
        scale_data();
        setup_blocks();
    }

    RawSolution solve() {
        RawSolution out = run(set_);
        if (out.status == SolveStatus::NumericalFailure) {
            SolverSettings retry = set_;
            retry.init_scale = std::max(1.0, std::sqrt(std::max(h_.cwiseAbs().maxCoeff(),
                                                                c_.cwiseAbs().maxCoeff())));
            retry.refine_rounds = 2;
            RawSolution second = run(retry);
            if (second.status != SolveStatus::NumericalFailure) return second;
            out.message += "; retry with rescaled start failed";
        }
        return out;
    }

private:
    StandardForm sf_;
    SolverSettings set_;
    ConeLayout lay_;
    int n_ = 0, m_ = 0, p_ = 0;

    // scaled data
    MatrixXd G_, A_;
    VectorXd c_, h_, b_;
    double cost_scale_ = 1.0;

    struct PsdBlock {
        int row_off, order, len;
        std::vector<int> cols;   // active columns
        MatrixXd gblk;           // len x |cols|
    };
    struct SocBlock {
        int row_off, dim;
        MatrixXd jgram;          // G_c' J G_c, n x n (dense; blocks are few)
    };
    std::vector<PsdBlock> psd_blocks_;
    std::vector<SocBlock> soc_blocks_;

    void scale_data() {
        G_ = sf_.G;
        h_ = sf_.h;
        A_ = sf_.A;
        b_ = sf_.b;
        const auto& spec = lay_.spec();
        for (int i = 0; i < spec.nonneg; ++i) {
            const double nrm = std::sqrt(G_.row(i).squaredNorm() + h_(i) * h_(i));
            const double d = 1.0 / std::max(nrm, 1e-10);
            G_.row(i) *= d;
            h_(i) *= d;
        }
        auto scale_block = [&](int off, int len) {
            const double nrm = std::sqrt(G_.middleRows(off, len).squaredNorm() +
                                         h_.segment(off, len).squaredNorm());
            const double d = 1.0 / std::max(nrm, 1e-10);
            G_.middleRows(off, len) *= d;
            h_.segment(off, len) *= d;
        };
        for (std::size_t k = 0; k < spec.soc.size(); ++k)
            scale_block(lay_.soc_offset(k), spec.soc[k]);
        for (std::size_t k = 0; k < spec.psd.size(); ++k)
            scale_block(lay_.psd_offset(k), spec.svec_len(spec.psd[k]));
        for (int i = 0; i < p_; ++i) {
            const double nrm = std::sqrt(A_.row(i).squaredNorm() + b_(i) * b_(i));
            const double d = 1.0 / std::max(nrm, 1e-10);
            A_.row(i) *= d;
            b_(i) *= d;
        }
        c_ = sf_.c;
        const double cn = c_.cwiseAbs().maxCoeff();
        cost_scale_ = 1.0 / std::max(1.0, cn);
        c_ *= cost_scale_;
    }

    void setup_blocks() {
        const auto& spec = lay_.spec();
        for (std::size_t k = 0; k < spec.soc.size(); ++k) {
            SocBlock blk;
            blk.row_off = lay_.soc_offset(k);
            blk.dim = spec.soc[k];
            MatrixXd gc = G_.middleRows(blk.row_off, blk.dim);
            VectorXd sgn = VectorXd::Constant(blk.dim, -1.0);
            sgn(0) = 1.0;
            blk.jgram.noalias() = gc.transpose() * sgn.asDiagonal() * gc;
            soc_blocks_.push_back(std::move(blk));
        }
        for (std::size_t k = 0; k < spec.psd.size(); ++k) {
            PsdBlock blk;
            blk.row_off = lay_.psd_offset(k);
            blk.order = spec.psd[k];
            blk.len = spec.svec_len(blk.order);
            for (int j = 0; j < n_; ++j)
                if (G_.col(j).segment(blk.row_off, blk.len).cwiseAbs().maxCoeff() > 0.0)
                    blk.cols.push_back(j);
            blk.gblk.resize(blk.len, static_cast<int>(blk.cols.size()));
            for (std::size_t j = 0; j < blk.cols.size(); ++j)
                blk.gblk.col(static_cast<int>(j)) = G_.col(blk.cols[j]).segment(blk.row_off, blk.len);
            psd_blocks_.push_back(std::move(blk));
        }
    }

    // ---- KKT machinery -------------------------------------------------

    struct Kkt {
        Eigen::LLT<MatrixXd> hfact;
        MatrixXd hinv_at;  // H^{-1} A'
        Eigen::PartialPivLU<MatrixXd> sfact;  // A H^{-1} A'
        bool ok = false;
    };

    void apply_wtw_inv(const std::vector<BlockScaling>& sc, VectorXd& u) const {
        apply_scaling(lay_, sc, ScaleOp::WInvT, u);
        apply_scaling(lay_, sc, ScaleOp::WInv, u);
    }

    MatrixXd assemble_schur(const std::vector<BlockScaling>& sc) const {
        MatrixXd h = MatrixXd::Zero(n_, n_);
        const auto& spec = lay_.spec();
        for (int i = 0; i < spec.nonneg; ++i) {
            const double wi = sc[0].w_diag(i);
            h.selfadjointView<Eigen::Lower>().rankUpdate(G_.row(i).transpose(), 1.0 / (wi * wi));
        }
        for (std::size_t k = 0; k < soc_blocks_.size(); ++k) {
            const auto& blk = soc_blocks_[k];
            const auto& b = sc[1 + k];
            VectorXd jw(blk.dim);
            jw(0) = b.wbar(0);
            jw.tail(blk.dim - 1) = -b.wbar.tail(blk.dim - 1);
            VectorXd u = G_.middleRows(blk.row_off, blk.dim).transpose() * jw;
            const double ie2 = 1.0 / (b.eta * b.eta);
            h.selfadjointView<Eigen::Lower>().rankUpdate(u, 2.0 * ie2);
            h.triangularView<Eigen::Lower>() -= ie2 * blk.jgram;
        }
        const std::size_t psd_base = 1 + soc_blocks_.size();
        for (std::size_t k = 0; k < psd_blocks_.size(); ++k) {
            const auto& blk = psd_blocks_[k];
            const auto& b = sc[psd_base + k];
            const int na = static_cast<int>(blk.cols.size());
            MatrixXd ghat(blk.len, na);
            for (int j = 0; j < na; ++j) {
                MatrixXd mj = smat(blk.gblk.col(j).data(), blk.order);
                MatrixXd t = b.r_inv * mj * b.r_inv.transpose();
                t = 0.5 * (t + t.transpose());
                svec_from_matrix(t, ghat.col(j).data());
            }
            MatrixXd hact = MatrixXd::Zero(na, na);
            hact.selfadjointView<Eigen::Lower>().rankUpdate(ghat.transpose(), 1.0);
            for (int j = 0; j < na; ++j)
                for (int i = j; i < na; ++i) {
                    const int gi = blk.cols[i], gj = blk.cols[j];
                    if (gi >= gj) h(gi, gj) += hact(i, j);
                    else h(gj, gi) += hact(i, j);
                }
        }
        return h;
    }

    bool factor_kkt(const std::vector<BlockScaling>& sc, Kkt& kkt) const {
        MatrixXd h = assemble_schur(sc);
        const double ridge0 = 1e-14 * std::max(1.0, h.diagonal().cwiseAbs().maxCoeff());
        double ridge = 0.0;
        for (int attempt = 0; attempt < 4; ++attempt) {
            MatrixXd hr = h;
            if (ridge > 0.0) hr.diagonal().array() += ridge;
            kkt.hfact.compute(hr.selfadjointView<Eigen::Lower>());
            if (kkt.hfact.info() == Eigen::Success) {
                if (p_ > 0) {
                    kkt.hinv_at = kkt.hfact.solve(A_.transpose());
                    MatrixXd s = A_ * kkt.hinv_at;
                    kkt.sfact.compute(s);
                }
                kkt.ok = true;
                return true;
            }
            ridge = (ridge == 0.0) ? ridge0 : ridge * 100.0;
        }
        return false;
    }

    // Solve  A'v + G'w = rx;  A u = ry;  G u - W'W w = rz.
    void kkt_solve(const Kkt& kkt, const std::vector<BlockScaling>& sc, const VectorXd& rx,
                   const VectorXd& ry, const VectorXd& rz, VectorXd& u, VectorXd& v,
                   VectorXd& w, int refine) const {
        VectorXd rz_scaled = rz;
        apply_wtw_inv(sc, rz_scaled);
        VectorXd rhs = rx + G_.transpose() * rz_scaled;
        if (p_ > 0) {
            VectorXd u0 = kkt.hfact.solve(rhs);
            v = kkt.sfact.solve(A_ * u0 - ry);
            u = u0 - kkt.hinv_at * v;
        } else {
            u = kkt.hfact.solve(rhs);
            v.resize(0);
        }
        w = G_ * u - rz;
        apply_wtw_inv(sc, w);

        for (int r = 0; r < refine; ++r) {
            VectorXd res_x = rx - (G_.transpose() * w);
            if (p_ > 0) res_x -= A_.transpose() * v;
            VectorXd res_y = (p_ > 0) ? VectorXd(ry - A_ * u) : VectorXd();
            VectorXd wtww = w;
            apply_scaling(lay_, sc, ScaleOp::W, wtww);
            apply_scaling(lay_, sc, ScaleOp::WT, wtww);
            VectorXd res_z = rz - (G_ * u - wtww);
            VectorXd du, dv, dw;
            VectorXd rz2 = res_z;
            apply_wtw_inv(sc, rz2);
            VectorXd rhs2 = res_x + G_.transpose() * rz2;
            if (p_ > 0) {
                VectorXd u0 = kkt.hfact.solve(rhs2);
                dv = kkt.sfact.solve(A_ * u0 - res_y);
                du = u0 - kkt.hinv_at * dv;
                v += dv;
            } else {
                du = kkt.hfact.solve(rhs2);
            }
            dw = G_ * du - res_z;
            apply_wtw_inv(sc, dw);
            u += du;
            w += dw;
        }
    }

    // ---- main loop ------------------------------------------------------

    RawSolution run(const SolverSettings& set) const {
        RawSolution best;
        RawSolution cur;
        cur.x = VectorXd::Zero(n_);
        cur.y = VectorXd::Zero(p_);
        VectorXd e = cone_identity(lay_);
        cur.s = set.init_scale * e;
        cur.z = set.init_scale * e;
        cur.tau = 1.0;
        cur.kappa = 1.0;

        const double nu = static_cast<double>(lay_.spec().degree());
        const double bnorm = std::max(1.0, p_ > 0 ? b_.norm() : 0.0);
        const double hnorm = std::max(1.0, h_.norm());
        const double cnorm = std::max(1.0, c_.norm());

        double best_score = std::numeric_limits<double>::infinity();
        std::vector<BlockScaling> sc;
        Kkt kkt;
        int stall = 0;
        double last_mu = std::numeric_limits<double>::infinity();

        for (int iter = 0; iter <= set.max_iter; ++iter) {
            // residuals and metrics
            VectorXd rd = G_.transpose() * cur.z + c_ * cur.tau;
            if (p_ > 0) rd += A_.transpose() * cur.y;
            VectorXd rp = (p_ > 0) ? VectorXd(A_ * cur.x - b_ * cur.tau) : VectorXd();
            VectorXd rg = cur.s + G_ * cur.x - h_ * cur.tau;
            const double bty_htz = (p_ > 0 ? b_.dot(cur.y) : 0.0) + h_.dot(cur.z);
            const double rt = cur.kappa + c_.dot(cur.x) + bty_htz;

            const double pcost = c_.dot(cur.x) / cur.tau;
            const double dcost = -bty_htz / cur.tau;
            const double gap_abs = cur.s.dot(cur.z) / (cur.tau * cur.tau);
            const double relgap = gap_abs / std::max(1.0, std::abs(pcost));
            const double pres = std::max((p_ > 0 ? rp.norm() / bnorm : 0.0), rg.norm() / hnorm) / cur.tau;
            const double dres = rd.norm() / (cnorm * cur.tau);
            const double mu = (cur.s.dot(cur.z) + cur.tau * cur.kappa) / (nu + 1.0);

            cur.pcost = pcost;
            cur.dcost = dcost;
            cur.relgap = relgap;
            cur.pres = pres;
            cur.dres = dres;
            cur.iterations = iter;
            cur.trace.push_back({pcost, dcost, relgap, pres, dres, mu, 0.0});

            const double score = std::max({pres, dres, relgap});
            if (score < best_score) {
                best_score = score;
                best = cur;
            }

            if (pres <= set.feastol && dres <= set.feastol && relgap <= set.gaptol) {
                best = cur;
                best.status = SolveStatus::Optimal;
                return finish(best);
            }

            // infeasibility certificates
            if (bty_htz < 0.0) {
                VectorXd cert = G_.transpose() * cur.z;
                if (p_ > 0) cert += A_.transpose() * cur.y;
                const double pinfres = cert.norm() / (-bty_htz);
                if (pinfres <= 1e-8) {
                    best = cur;
                    best.status = SolveStatus::Infeasible;
                    best.y /= -bty_htz;
                    best.z /= -bty_htz;
                    return finish(best);
                }
            }
            if (c_.dot(cur.x) < 0.0) {
                const double ctx = -c_.dot(cur.x);
                const double dinfres =
                    std::max(p_ > 0 ? (A_ * cur.x).norm() : 0.0, (G_ * cur.x + cur.s).norm()) / ctx;
                if (dinfres <= 1e-8) {
                    best = cur;
                    best.status = SolveStatus::Unbounded;
                    best.x /= ctx;
                    return finish(best);
                }
            }

            if (iter == set.max_iter) {
                best.status = SolveStatus::IterLimit;
                return finish(best);
            }
            if (mu > 0.9999 * last_mu) {
                if (++stall >= 8) {
                    best.status = SolveStatus::NumericalFailure;
                    best.message = "stalled";
                    return finish(best);
                }
            } else {
                stall = 0;
            }
            last_mu = mu;

            if (!compute_nt_scaling(lay_, cur.s, cur.z, sc) || !factor_kkt(sc, kkt)) {
                best.status = SolveStatus::NumericalFailure;
                best.message = "scaling/factorization failed";
                return finish(best);
            }

            // constant-rhs solve (x1,y1,z1): K = (-c, b, h)
            VectorXd x1, y1, z1;
            kkt_solve(kkt, sc, -c_, b_, h_, x1, y1, z1, set.refine_rounds);
            const double dt_den =
                c_.dot(x1) + (p_ > 0 ? b_.dot(y1) : 0.0) + h_.dot(z1) - cur.kappa / cur.tau;
            if (!(dt_den < -1e-300)) {
                best.status = SolveStatus::NumericalFailure;
                best.message = "degenerate tau system";
                return finish(best);
            }

            std::vector<BlockScaling>& scref = sc;
            auto direction = [&](double sigma, const VectorXd& d_s, double d_kappa, VectorXd& dx,
                                 VectorXd& dy, VectorXd& dz, VectorXd& ds, double& dtau,
                                 double& dkappa) {
                const double oms = 1.0 - sigma;
                VectorXd gs = jordan_div_lambda(lay_, scref, d_s);
                VectorXd wgs = gs;
                apply_scaling(lay_, scref, ScaleOp::WT, wgs);
                VectorXd x2, y2, z2;
                kkt_solve(kkt, scref, -oms * rd, p_ > 0 ? VectorXd(-oms * rp) : VectorXd(),
                          VectorXd(wgs - oms * rg), x2, y2, z2, set.refine_rounds);
                const double num = -oms * rt + d_kappa / cur.tau -
                                   (c_.dot(x2) + (p_ > 0 ? b_.dot(y2) : 0.0) + h_.dot(z2));
                dtau = num / dt_den;
                dx = x2 + dtau * x1;
                if (p_ > 0) dy = y2 + dtau * y1; else dy.resize(0);
                dz = z2 + dtau * z1;
                VectorXd wtwdz = dz;
                apply_scaling(lay_, scref, ScaleOp::W, wtwdz);
                apply_scaling(lay_, scref, ScaleOp::WT, wtwdz);
                ds = -wgs - wtwdz;
                dkappa = -(d_kappa + cur.kappa * dtau) / cur.tau;
            };

            // affine (predictor) direction
            VectorXd lam_sq = jordan_mul(lay_, lambda_vec(sc), lambda_vec(sc));
            VectorXd dxa, dya, dza, dsa;
            double dtaua, dkappaa;
            direction(0.0, lam_sq, cur.tau * cur.kappa, dxa, dya, dza, dsa, dtaua, dkappaa);

            double alpha_aff = step_to_boundary(lay_, cur.s, dsa, 10.0);
            alpha_aff = std::min(alpha_aff, step_to_boundary(lay_, cur.z, dza, 10.0));
            if (dtaua < 0.0) alpha_aff = std::min(alpha_aff, -cur.tau / dtaua);
            if (dkappaa < 0.0) alpha_aff = std::min(alpha_aff, -cur.kappa / dkappaa);
            alpha_aff = std::min(alpha_aff, 1.0);
            const double sigma = std::clamp(std::pow(1.0 - alpha_aff, 3.0), 0.0, 1.0);

            // Mehrotra correction in the scaled space
            VectorXd wis = dsa;
            apply_scaling(lay_, scref, ScaleOp::WInvT, wis);
            VectorXd wdz = dza;
            apply_scaling(lay_, scref, ScaleOp::W, wdz);
            VectorXd d_s = lam_sq + jordan_mul(lay_, wis, wdz) - sigma * mu * e;
            const double d_kappa = cur.tau * cur.kappa + dtaua * dkappaa - sigma * mu;

            VectorXd dx, dy, dz, ds;
            double dtau, dkappa;
            direction(sigma, d_s, d_kappa, dx, dy, dz, ds, dtau, dkappa);

            double alpha = step_to_boundary(lay_, cur.s, ds, 10.0);
            alpha = std::min(alpha, step_to_boundary(lay_, cur.z, dz, 10.0));
            if (dtau < 0.0) alpha = std::min(alpha, -cur.tau / dtau);
            if (dkappa < 0.0) alpha = std::min(alpha, -cur.kappa / dkappa);
            alpha = std::min(1.0, 0.99 * alpha);
            if (!(alpha > 1e-10)) {
                best.status = SolveStatus::NumericalFailure;
                best.message = "vanishing step";
                return finish(best);
            }

            cur.x += alpha * dx;
            if (p_ > 0) cur.y += alpha * dy;
            cur.z += alpha * dz;
            cur.s += alpha * ds;
            cur.tau += alpha * dtau;
            cur.kappa += alpha * dkappa;
            cur.trace.back().step = alpha;
        }
        best.status = SolveStatus::IterLimit;
        return finish(best);
    }

    VectorXd lambda_vec(const std::vector<BlockScaling>& sc) const {
        VectorXd lam(m_);
        const auto& spec = lay_.spec();
        lam.head(spec.nonneg) = sc[0].lambda;
        for (std::size_t k = 0; k < spec.soc.size(); ++k)
            lam.segment(lay_.soc_offset(k), spec.soc[k]) = sc[1 + k].lambda;
        const std::size_t psd_base = 1 + spec.soc.size();
        for (std::size_t k = 0; k < spec.psd.size(); ++k)
            lam.segment(lay_.psd_offset(k), spec.svec_len(spec.psd[k])) = sc[psd_base + k].lambda;
        return lam;
    }

    RawSolution finish(RawSolution r) const {
        if (r.status != SolveStatus::Optimal &&
            r.pres <= set_.reported_feastol && r.dres <= set_.reported_feastol &&
            r.relgap <= set_.reported_gaptol)
            r.status = SolveStatus::Optimal;
        if (r.status == SolveStatus::Optimal && r.tau > 0.0) {
            r.x /= r.tau;
            if (p_ > 0) r.y /= r.tau;
            r.z /= r.tau;
            r.s /= r.tau;
        }
        r.pcost /= cost_scale_;
        r.dcost /= cost_scale_;
        for (auto& t : r.trace) {
            t.pcost /= cost_scale_;
            t.dcost /= cost_scale_;
        }
        return r;
    }
};

}  // namespace bisac::conic
