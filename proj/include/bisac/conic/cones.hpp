#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <vector>

// Cone kernels for the interior-point solver: svec packing for real
// symmetric blocks, Nesterov-Todd scalings, Jordan-algebra products and
// step-to-boundary computations for the nonnegative orthant, second-order
// cones and PSD cones.

namespace bisac::conic {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Cone composition of the slack vector, in layout order:
/// nonneg rows, then SOC blocks, then svec'd PSD blocks.
struct ConeSpec {
    int nonneg = 0;
    std::vector<int> soc;  // block dimensions
    std::vector<int> psd;  // matrix orders p (block occupies p(p+1)/2 rows)

    int svec_len(int p) const { return p * (p + 1) / 2; }

    int total_rows() const {
        int m = nonneg;
        for (int q : soc) m += q;
        for (int p : psd) m += svec_len(p);
        return m;
    }

    /// Barrier degree: nonneg count + one per SOC + PSD orders.
    int degree() const {
        int nu = nonneg + static_cast<int>(soc.size());
        for (int p : psd) nu += p;
        return nu;
    }
};

inline int svec_index(int i, int j, int p) {
    // column-major lower triangle, i >= j
    return j * p - j * (j - 1) / 2 + (i - j);
}

inline void svec_from_matrix(const MatrixXd& m, double* out) {
    const int p = static_cast<int>(m.rows());
    static const double rt2 = std::sqrt(2.0);
    int k = 0;
    for (int j = 0; j < p; ++j) {
        out[k++] = m(j, j);
        for (int i = j + 1; i < p; ++i) out[k++] = rt2 * m(i, j);
    }
}

inline MatrixXd smat(const double* v, int p) {
    static const double inv_rt2 = 1.0 / std::sqrt(2.0);
    MatrixXd m(p, p);
    int k = 0;
    for (int j = 0; j < p; ++j) {
        m(j, j) = v[k++];
        for (int i = j + 1; i < p; ++i) {
            m(i, j) = inv_rt2 * v[k];
            m(j, i) = m(i, j);
            ++k;
        }
    }
    return m;
}

/// Nesterov-Todd scaling state for one cone block.
struct BlockScaling {
    // nonneg
    VectorXd w_diag;
    // soc
    double eta = 0.0;
    VectorXd wbar;
    // psd
    MatrixXd r, r_inv;

    VectorXd lambda;  // scaled point, lambda = W z = W^{-T} s
};

namespace cone_detail {

inline double soc_residual(const VectorXd& u) {
    // u0^2 - ||u1||^2
    return u(0) * u(0) - u.tail(u.size() - 1).squaredNorm();
}

}  // namespace cone_detail

/// Per-block views over the stacked slack/dual vectors.
struct ConeLayout {
    explicit ConeLayout(const ConeSpec& spec) : spec_(spec) {
        int off = spec.nonneg;
        for (int q : spec_.soc) {
            soc_offsets_.push_back(off);
            off += q;
        }
        for (int p : spec_.psd) {
            psd_offsets_.push_back(off);
            off += spec_.svec_len(p);
        }
        total_ = off;
    }

    const ConeSpec& spec() const { return spec_; }
    int total() const { return total_; }
    int soc_offset(std::size_t k) const { return soc_offsets_[k]; }
    int psd_offset(std::size_t k) const { return psd_offsets_[k]; }

private:
    ConeSpec spec_;
    std::vector<int> soc_offsets_, psd_offsets_;
    int total_ = 0;
};

/// Identity element e of the cone product.
inline VectorXd cone_identity(const ConeLayout& lay) {
    VectorXd e = VectorXd::Zero(lay.total());
    e.head(lay.spec().nonneg).setOnes();
    for (std::size_t k = 0; k < lay.spec().soc.size(); ++k) e(lay.soc_offset(k)) = 1.0;
    for (std::size_t k = 0; k < lay.spec().psd.size(); ++k) {
        const int p = lay.spec().psd[k];
        svec_from_matrix(MatrixXd::Identity(p, p), e.data() + lay.psd_offset(k));
    }
    return e;
}

/// Distance to the cone boundary from u along du: the largest step t with
/// u + t du still in the cone (capped at `cap`).
inline double step_to_boundary(const ConeLayout& lay, const VectorXd& u, const VectorXd& du,
                               double cap) {
    double t = cap;
    const auto& spec = lay.spec();
    for (int i = 0; i < spec.nonneg; ++i)
        if (du(i) < 0.0) t = std::min(t, -u(i) / du(i));
    for (std::size_t k = 0; k < spec.soc.size(); ++k) {
        const int off = lay.soc_offset(k), q = spec.soc[k];
        const VectorXd ub = u.segment(off, q), db = du.segment(off, q);
        // roots of (u0 + t d0)^2 - ||u1 + t d1||^2 = 0
        const double a = db(0) * db(0) - db.tail(q - 1).squaredNorm();
        const double b = 2.0 * (ub(0) * db(0) - ub.tail(q - 1).dot(db.tail(q - 1)));
        const double c = cone_detail::soc_residual(ub);
        double tb = cap;
        const double disc = b * b - 4.0 * a * c;
        if (std::abs(a) < 1e-14 * (std::abs(b) + 1e-14)) {
            if (b < 0.0) tb = -c / b;
        } else if (disc >= 0.0) {
            const double sq = std::sqrt(disc);
            const double r1 = (-b - sq) / (2.0 * a);
            const double r2 = (-b + sq) / (2.0 * a);
            const double lo = std::min(r1, r2), hi = std::max(r1, r2);
            if (a > 0.0) {
                // leaves the cone at the smaller positive root if the head stays positive
                if (lo > 0.0) tb = lo;
                else if (hi > 0.0 && ub(0) + hi * db(0) < 0.0) tb = hi;  // degenerate
            } else {
                if (hi > 0.0) tb = hi;
                else tb = cap;
                if (lo > 0.0) tb = std::min(tb, lo);
            }
        }
        if (db(0) < 0.0) tb = std::min(tb, -ub(0) / db(0));
        t = std::min(t, tb);
    }
    for (std::size_t k = 0; k < spec.psd.size(); ++k) {
        const int off = lay.psd_offset(k), p = spec.psd[k];
        const MatrixXd um = smat(u.data() + off, p);
        const MatrixXd dm = smat(du.data() + off, p);
        Eigen::LLT<MatrixXd> llt(um);
        if (llt.info() != Eigen::Success) return 0.0;
        const MatrixXd l = llt.matrixL();
        MatrixXd inner = l.triangularView<Eigen::Lower>().solve(dm);
        inner = l.triangularView<Eigen::Lower>().solve(MatrixXd(inner.transpose()));
        Eigen::SelfAdjointEigenSolver<MatrixXd> es(0.5 * (inner + inner.transpose()),
                                                   Eigen::EigenvaluesOnly);
        const double lmin = es.eigenvalues().minCoeff();
        if (lmin < 0.0) t = std::min(t, -1.0 / lmin);
    }
    return t;
}

/// Compute the NT scaling for each block from strictly interior s, z.
/// Returns false if a block is numerically outside the cone.
inline bool compute_nt_scaling(const ConeLayout& lay, const VectorXd& s, const VectorXd& z,
                               std::vector<BlockScaling>& blocks) {
    const auto& spec = lay.spec();
    blocks.clear();

    {
        BlockScaling b;
        b.w_diag.resize(spec.nonneg);
        b.lambda.resize(spec.nonneg);
        for (int i = 0; i < spec.nonneg; ++i) {
            if (s(i) <= 0.0 || z(i) <= 0.0) return false;
            b.w_diag(i) = std::sqrt(s(i) / z(i));
            b.lambda(i) = std::sqrt(s(i) * z(i));
        }
        blocks.push_back(std::move(b));
    }

    for (std::size_t k = 0; k < spec.soc.size(); ++k) {
        const int off = lay.soc_offset(k), q = spec.soc[k];
        const VectorXd sb = s.segment(off, q), zb = z.segment(off, q);
        const double sres = cone_detail::soc_residual(sb);
        const double zres = cone_detail::soc_residual(zb);
        if (sres <= 0.0 || zres <= 0.0 || sb(0) <= 0.0 || zb(0) <= 0.0) return false;
        BlockScaling b;
        const double snorm = std::sqrt(sres), znorm = std::sqrt(zres);
        VectorXd sn = sb / snorm, zn = zb / znorm;
        const double gamma = std::sqrt((1.0 + sn.dot(zn)) / 2.0);
        // w = (sn + J zn) / (2 gamma) with J = diag(1, -I)
        VectorXd w(q);
        w(0) = (sn(0) + zn(0)) / (2.0 * gamma);
        w.tail(q - 1) = (sn.tail(q - 1) - zn.tail(q - 1)) / (2.0 * gamma);
        b.eta = std::sqrt(snorm / znorm);
        b.wbar = std::move(w);
        // lambda = W z
        b.lambda.resize(q);
        const VectorXd& wb = b.wbar;
        const double zbar0 = zb(0);
        const auto zb1 = zb.tail(q - 1);
        const double wz = wb.tail(q - 1).dot(zb1);
        b.lambda(0) = b.eta * (wb(0) * zbar0 + wz);
        b.lambda.tail(q - 1) =
            b.eta * (zb1 + (zbar0 + wz / (1.0 + wb(0))) * wb.tail(q - 1));
        blocks.push_back(std::move(b));
    }

    for (std::size_t k = 0; k < spec.psd.size(); ++k) {
        const int off = lay.psd_offset(k), p = spec.psd[k];
        const MatrixXd sm = smat(s.data() + off, p);
        const MatrixXd zm = smat(z.data() + off, p);
        Eigen::LLT<MatrixXd> lls(sm), llz(zm);
        if (lls.info() != Eigen::Success || llz.info() != Eigen::Success) return false;
        const MatrixXd ls = lls.matrixL(), lz = llz.matrixL();
        Eigen::JacobiSVD<MatrixXd> svd(MatrixXd(lz.transpose() * ls),
                                       Eigen::ComputeThinU | Eigen::ComputeThinV);
        const VectorXd sig = svd.singularValues();
        if (sig.minCoeff() <= 0.0) return false;
        BlockScaling b;
        const VectorXd sig_isqrt = sig.cwiseSqrt().cwiseInverse();
        b.r = ls * svd.matrixV() * sig_isqrt.asDiagonal();
        b.r_inv = sig.cwiseSqrt().asDiagonal() * svd.matrixV().transpose() *
                  ls.triangularView<Eigen::Lower>().solve(MatrixXd::Identity(p, p));
        b.lambda.resize(lay.spec().svec_len(p));
        svec_from_matrix(MatrixXd(sig.asDiagonal()), b.lambda.data());
        blocks.push_back(std::move(b));
    }
    return true;
}

enum class ScaleOp { W, WInv, WT, WInvT };

/// Apply the block-diagonal NT scaling (or its inverse/transpose) in place.
inline void apply_scaling(const ConeLayout& lay, const std::vector<BlockScaling>& blocks,
                          ScaleOp op, VectorXd& u) {
    const auto& spec = lay.spec();
    {
        const auto& w = blocks[0].w_diag;
        for (int i = 0; i < spec.nonneg; ++i)
            u(i) = (op == ScaleOp::W || op == ScaleOp::WT) ? u(i) * w(i) : u(i) / w(i);
    }
    for (std::size_t k = 0; k < spec.soc.size(); ++k) {
        const auto& b = blocks[1 + k];
        const int off = lay.soc_offset(k), q = spec.soc[k];
        VectorXd ub = u.segment(off, q);
        const auto w1 = b.wbar.tail(q - 1);
        const double w0 = b.wbar(0);
        const double dot = w1.dot(ub.tail(q - 1));
        VectorXd out(q);
        if (op == ScaleOp::W || op == ScaleOp::WT) {  // W is symmetric
            out(0) = w0 * ub(0) + dot;
            out.tail(q - 1) = ub.tail(q - 1) + (ub(0) + dot / (1.0 + w0)) * w1;
            out *= b.eta;
        } else {
            out(0) = w0 * ub(0) - dot;
            out.tail(q - 1) = ub.tail(q - 1) + (-ub(0) + dot / (1.0 + w0)) * w1;
            out /= b.eta;
        }
        u.segment(off, q) = out;
    }
    const std::size_t psd_base = 1 + spec.soc.size();
    for (std::size_t k = 0; k < spec.psd.size(); ++k) {
        const auto& b = blocks[psd_base + k];
        const int off = lay.psd_offset(k), p = spec.psd[k];
        const MatrixXd um = smat(u.data() + off, p);
        MatrixXd res;
        switch (op) {
            case ScaleOp::W:    res = b.r.transpose() * um * b.r; break;
            case ScaleOp::WT:   res = b.r * um * b.r.transpose(); break;
            case ScaleOp::WInv: res = b.r_inv.transpose() * um * b.r_inv; break;
            case ScaleOp::WInvT: res = b.r_inv * um * b.r_inv.transpose(); break;
        }
        res = 0.5 * (res + res.transpose());
        svec_from_matrix(res, u.data() + off);
    }
}

/// Jordan product u o v per block.
inline VectorXd jordan_mul(const ConeLayout& lay, const VectorXd& u, const VectorXd& v) {
    const auto& spec = lay.spec();
    VectorXd out(lay.total());
    for (int i = 0; i < spec.nonneg; ++i) out(i) = u(i) * v(i);
    for (std::size_t k = 0; k < spec.soc.size(); ++k) {
        const int off = lay.soc_offset(k), q = spec.soc[k];
        const auto ub = u.segment(off, q), vb = v.segment(off, q);
        out(off) = ub.dot(vb);
        out.segment(off + 1, q - 1) = ub(0) * vb.tail(q - 1) + vb(0) * ub.tail(q - 1);
    }
    for (std::size_t k = 0; k < spec.psd.size(); ++k) {
        const int off = lay.psd_offset(k), p = spec.psd[k];
        const MatrixXd um = smat(u.data() + off, p), vm = smat(v.data() + off, p);
        const MatrixXd r = 0.5 * (um * vm + vm * um);
        svec_from_matrix(r, out.data() + off);
    }
    return out;
}

/// Solve lambda o u = d for u; lambda is the scaled point from the NT state
/// (diagonal in the PSD blocks' scaled basis).
inline VectorXd jordan_div_lambda(const ConeLayout& lay, const std::vector<BlockScaling>& blocks,
                                  const VectorXd& d) {
    const auto& spec = lay.spec();
    VectorXd out(lay.total());
    for (int i = 0; i < spec.nonneg; ++i) out(i) = d(i) / blocks[0].lambda(i);
    for (std::size_t k = 0; k < spec.soc.size(); ++k) {
        const auto& lam = blocks[1 + k].lambda;
        const int off = lay.soc_offset(k), q = spec.soc[k];
        const auto db = d.segment(off, q);
        const double a = lam(0) * lam(0) - lam.tail(q - 1).squaredNorm();
        const double u0 = (lam(0) * db(0) - lam.tail(q - 1).dot(db.tail(q - 1))) / a;
        out(off) = u0;
        out.segment(off + 1, q - 1) = (db.tail(q - 1) - u0 * lam.tail(q - 1)) / lam(0);
    }
    const std::size_t psd_base = 1 + spec.soc.size();
    for (std::size_t k = 0; k < spec.psd.size(); ++k) {
        const auto& b = blocks[psd_base + k];
        const int off = lay.psd_offset(k), p = spec.psd[k];
        // lambda is diag(sigma) in this basis
        VectorXd sig(p);
        {
            const MatrixXd lm = smat(b.lambda.data(), p);
            sig = lm.diagonal();
        }
        const MatrixXd dm = smat(d.data() + off, p);
        MatrixXd um(p, p);
        for (int i = 0; i < p; ++i)
            for (int j = 0; j < p; ++j) um(i, j) = 2.0 * dm(i, j) / (sig(i) + sig(j));
        svec_from_matrix(0.5 * (um + um.transpose()), out.data() + off);
    }
    return out;
}

}  // namespace bisac::conic
