#pragma once

#include <optional>
#include <vector>

#include "bisac/conic/program.hpp"
#include "bisac/metrics.hpp"
#include "bisac/model.hpp"

// Stage solvers: SDR-based detection / LS / LMMSE beamforming with the
// closed-form rank-1 extraction and covariance-preserving recovery, and the
// quadratic-transform + SCA alternating rate maximizer for the
// communication-enhancement stage.

namespace bisac::schemes {

using conic::ConicProgram;
using conic::HermitianAffine;
using conic::HermitianVar;
using conic::LinExpr;
using conic::ScalarVar;
using conic::SolveReport;
using conic::SolveStatus;

struct DegenerateDirectionError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ExtractionInvalidError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class Stage { Detection, Ls, Lmmse };

/// Everything needed to re-evaluate the SDP constraints of one instance.
struct InstanceContext {
    Stage stage = Stage::Detection;
    double theta = 0.0;       // theta_i (detection) or theta_max (estimation)
    double gamma_uth = 0.0;   // linear
    ChannelSet channels;      // channels as used in the program (robust surrogates or true)
    SystemConfig cfg;
    std::optional<EstimatorPrior> prior;  // LMMSE only
};

struct SdrSolution {
    CMat r_w, w_u_mat, w_t_mat;
    double q = 0.0;          // detection auxiliary, stage 1 only
    double objective = 0.0;  // q for detection, J for estimation stages
    bool extracted = false;
    InstanceContext ctx;
};

struct StageResult {
    SolveStatus status = SolveStatus::NumericalFailure;
    SolveReport report;
    SdrSolution relaxed;
    SdrSolution rank_one;
    Beamformer beamformer;
};

/// UE SINR constraint of the SDR stages as one linear inequality (>= 0) in
/// (R_W, W_u). The channels in `ch` are the ones the constraint should see:
/// robust surrogates h_f = a(theta), |h_tu| = h_tu_max in stages 1-2, true
/// channels in stage 3.
inline LinExpr build_ue_sinr_constraint(ConicProgram& prog, HermitianVar r_w, HermitianVar w_u,
                                        double gamma_uth, const ChannelSet& ch,
                                        const SystemConfig& cfg) {
    const CMat u_mat = ch.h_u.adjoint() * ch.h_u;
    const CMat f_mat = ch.h_f.adjoint() * ch.h_f;
    const double tu2 = std::norm(ch.h_tu);
    LinExpr e = prog.trace_dot(u_mat, w_u);
    e -= gamma_uth * (prog.trace_dot(u_mat, r_w) - prog.trace_dot(u_mat, w_u));
    e -= gamma_uth * cfg.alpha * tu2 * prog.trace_dot(f_mat, r_w);
    e -= LinExpr(gamma_uth * (cfg.alpha * tu2 * cfg.noise_tag + cfg.noise_ue));
    return e;
}

namespace detail {

struct SdrVars {
    HermitianVar r_w, w_u, w_t;
};

inline SdrVars add_sdr_base(ConicProgram& prog, double gamma_uth, const ChannelSet& ch,
                            const SystemConfig& cfg) {
    SdrVars v;
    v.r_w = prog.hermitian_var("R_W", cfg.n_tx);
    v.w_u = prog.psd_var("W_u", cfg.n_tx);
    v.w_t = prog.psd_var("W_t", cfg.n_tx);
    prog.add_ineq(build_ue_sinr_constraint(prog, v.r_w, v.w_u, gamma_uth, ch, cfg));
    prog.add_ineq(LinExpr(cfg.power_budget) - prog.trace(v.r_w));
    HermitianAffine slack(cfg.n_tx);
    slack.add_term(1.0, v.r_w, 0);
    slack.add_term(-1.0, v.w_u, 0);
    slack.add_term(-1.0, v.w_t, 0);
    prog.add_psd(std::move(slack));
    return v;
}

inline ChannelSet surrogate_channels(double theta, const ChannelSet& ch,
                                     const SystemConfig& cfg) {
    ChannelSet s = ch;
    s.h_f = los_channel(theta, 1.0, cfg.n_tx, LosDirection::Tx);
    s.h_b = los_channel(theta, 1.0, cfg.n_rx, LosDirection::Rx);
    s.h_tu = ch.h_tu_max;
    return s;
}

}  // namespace detail

/// Stage-1 SDR: maximize the angle-grid AP SINR epigraph q subject to the UE
/// SINR and power constraints, rank constraints dropped.
inline StageResult solve_detection(double theta_i, double gamma_uth, const ChannelSet& ch,
                                   const SystemConfig& cfg,
                                   conic::SolverSettings settings = {}) {
    cfg.validate();
    StageResult out;
    ConicProgram prog;
    ChannelSet sur = detail::surrogate_channels(theta_i, ch, cfg);
    detail::SdrVars v = detail::add_sdr_base(prog, gamma_uth, sur, cfg);
    ScalarVar q = prog.scalar_var("q");
    const CMat a_mat = sur.h_f.adjoint() * sur.h_f;  // a(theta) a(theta)^H
    const double den = cfg.alpha * cfg.n_rx * cfg.noise_tag + cfg.noise_ap;
    prog.add_ineq(cfg.alpha * cfg.n_rx * prog.trace_dot(a_mat, v.r_w) - den * prog.scalar(q));
    prog.add_ineq(prog.scalar(q));
    prog.maximize(prog.scalar(q));

    out.report = prog.solve(settings);
    out.status = out.report.status;
    if (out.status != SolveStatus::Optimal) return out;

    SdrSolution& sol = out.relaxed;
    sol.r_w = prog.value_of(v.r_w, out.report.x);
    sol.w_u_mat = prog.value_of(v.w_u, out.report.x);
    sol.w_t_mat = prog.value_of(v.w_t, out.report.x);
    sol.q = prog.value_of(q, out.report.x);
    sol.objective = sol.q;
    sol.ctx = {Stage::Detection, theta_i, gamma_uth, sur, cfg, std::nullopt};
    return out;
}

namespace detail {

inline double estimation_constant(const ChannelSet& ch, const SystemConfig& cfg) {
    return cfg.alpha * static_cast<double>(cfg.sig_len) /
           (cfg.n_rx * estimation_noise_scale(ch.h_b, cfg));
}

/// Shared body of the two estimation stages. The trace-inverse objective is
/// rendered SDP-representable by the Schur-complement epigraph
/// [[inner(R_W), I], [I, T]] >= 0, minimize trace(T).
inline StageResult solve_estimation(Stage stage, double theta_max, double gamma_uth,
                                    const ChannelSet& ch, const SystemConfig& cfg,
                                    const std::optional<EstimatorPrior>& prior,
                                    conic::SolverSettings settings) {
    cfg.validate();
    StageResult out;
    ConicProgram prog;
    ChannelSet sur = surrogate_channels(theta_max, ch, cfg);
    sur.h_b = ch.h_b;  // the noise-scale constant keeps the caller's h_b
    SdrVars v = add_sdr_base(prog, gamma_uth, sur, cfg);
    HermitianVar t = prog.hermitian_var("T", cfg.n_tx);

    HermitianAffine epi(2 * cfg.n_tx);
    const double c_est = estimation_constant(ch, cfg);
    if (stage == Stage::Ls) {
        epi.add_term(1.0, v.r_w, 0);
    } else {
        epi.add_const(prior->inverse(), 0);
        epi.add_term(c_est, v.r_w, 0);
    }
    epi.add_term(1.0, t, cfg.n_tx);
    epi.add_const_block(CMat::Identity(cfg.n_tx, cfg.n_tx), cfg.n_tx, 0);
    prog.add_psd(std::move(epi));

    const double obj_scale = (stage == Stage::Ls) ? 1.0 / c_est : 1.0;
    prog.minimize(obj_scale * prog.trace(t));

    out.report = prog.solve(settings);
    out.status = out.report.status;
    if (out.status != SolveStatus::Optimal) return out;

    SdrSolution& sol = out.relaxed;
    sol.r_w = prog.value_of(v.r_w, out.report.x);
    sol.w_u_mat = prog.value_of(v.w_u, out.report.x);
    sol.w_t_mat = prog.value_of(v.w_t, out.report.x);
    sol.objective = out.report.objective;
    sol.ctx = {stage, theta_max, gamma_uth, sur, cfg, prior};
    return out;
}

}  // namespace detail

/// Stage objective re-evaluated from a covariance (used by extraction checks
/// and sweeps).
inline double stage_objective(const SdrSolution& sol, const CMat& r_w) {
    switch (sol.ctx.stage) {
        case Stage::Detection:
            return sinr_ap_grid_cov(r_w, sol.ctx.theta, sol.ctx.cfg).value;
        case Stage::Ls:
            return ls_error(r_w, sol.ctx.channels.h_b, sol.ctx.cfg);
        default:
            return lmmse_error(r_w, *sol.ctx.prior, sol.ctx.channels.h_b, sol.ctx.cfg);
    }
}

/// Closed-form rank-1 extraction: W_u <- W_u U W_u / Tr(U W_u) and
/// W_t <- W_t F W_t / Tr(F W_t); R_W and q are unchanged.
inline SdrSolution extract_rank_one(const SdrSolution& sol, const ChannelSet& ch) {
    SdrSolution out = sol;
    auto extract = [&](const CMat& m, const CRowVec& h, const char* who) {
        const CVec dir = m * h.adjoint();
        const double tr = std::real(cxd(h * m * h.adjoint()));
        const double scale = std::max(1.0, m.norm() * h.squaredNorm());
        if (tr <= 1e-12 * scale)
            throw DegenerateDirectionError(std::string(who) +
                                           ": beam carries no power toward the defining channel");
        return CMat((dir * dir.adjoint()) / tr);
    };
    out.w_u_mat = extract(sol.w_u_mat, ch.h_u, "extract_rank_one(W_u)");
    out.w_t_mat = extract(sol.w_t_mat, ch.h_f, "extract_rank_one(W_t)");
    out.extracted = true;
    return out;
}

inline SdrSolution extract_rank_one(const SdrSolution& sol) {
    return extract_rank_one(sol, sol.ctx.channels);
}

struct ExtractionCheck {
    bool main_constraint = false;   // detection SINR row / objective preserved
    bool ue_constraint = false;     // Tr(U W_u) preserved and UE row still holds
    bool dominance = false;         // W_u - W_u~ and W_t - W_t~ PSD
    bool psd_chain = false;         // R - W_u~ - W_t~ >= R - W_u - W_t >= 0
    double worst_eig = 0.0;

    bool passed() const { return main_constraint && ue_constraint && dominance && psd_chain; }
    const char* first_failed() const {
        if (!main_constraint) return "main-constraint";
        if (!ue_constraint) return "ue-constraint";
        if (!dominance) return "dominance";
        return "psd-chain";
    }
};

/// Executable version of the Appendix-A argument: checks, within tol, that
/// the extracted solution still satisfies every constraint of the instance.
inline ExtractionCheck verify_extraction(const SdrSolution& before, const SdrSolution& after,
                                         const ChannelSet& ch, const SystemConfig& cfg,
                                         double tol = 1e-7) {
    ExtractionCheck chk;
    const CMat u_mat = ch.h_u.adjoint() * ch.h_u;
    const CMat f_mat = ch.h_f.adjoint() * ch.h_f;
    const double power_scale = std::max(1.0, cfg.power_budget);

    // (i) the stage objective rides on R_W only
    if (before.ctx.stage == Stage::Detection) {
        const double lhs = cfg.alpha * cfg.n_rx * steer_quad(after.r_w, before.ctx.theta);
        const double rhs = after.q * (cfg.alpha * cfg.n_rx * cfg.noise_tag + cfg.noise_ap);
        chk.main_constraint = lhs - rhs >= -tol * std::max(1.0, rhs);
    } else {
        const double jb = stage_objective(before, before.r_w);
        const double ja = stage_objective(after, after.r_w);
        chk.main_constraint = std::abs(ja - jb) <= tol * std::max(1.0, std::abs(jb));
    }

    // (ii) UE SINR: trace against U preserved, constraint still satisfied
    const double tu_before = std::real(cxd(ch.h_u * before.w_u_mat * ch.h_u.adjoint()));
    const double tu_after = std::real(cxd(ch.h_u * after.w_u_mat * ch.h_u.adjoint()));
    const double tu2 = std::norm(ch.h_tu);
    const double interf = std::real((u_mat * (after.r_w - after.w_u_mat)).trace()) +
                          cfg.alpha * tu2 * std::real((f_mat * after.r_w).trace()) +
                          cfg.alpha * tu2 * cfg.noise_tag + cfg.noise_ue;
    const double ue_row = tu_after - before.ctx.gamma_uth * interf;
    chk.ue_constraint = std::abs(tu_after - tu_before) <= tol * std::max(1.0, tu_before) &&
                        ue_row >= -tol * std::max(1.0, before.ctx.gamma_uth * interf);

    // (iii) Cauchy-Schwarz dominance
    auto min_eig = [](const CMat& m) {
        Eigen::SelfAdjointEigenSolver<CMat> es(hermitian_part(m), Eigen::EigenvaluesOnly);
        return es.eigenvalues().minCoeff();
    };
    const double e_u = min_eig(before.w_u_mat - after.w_u_mat);
    const double e_t = min_eig(before.w_t_mat - after.w_t_mat);
    chk.dominance = e_u >= -tol * power_scale && e_t >= -tol * power_scale;

    // (iv) the PSD chain
    const CMat slack_before = before.r_w - before.w_u_mat - before.w_t_mat;
    const CMat slack_after = after.r_w - after.w_u_mat - after.w_t_mat;
    const double e_gain = min_eig(slack_after - slack_before);
    const double e_slack = min_eig(slack_after);
    chk.psd_chain = e_gain >= -tol * power_scale && e_slack >= -tol * power_scale;
    chk.worst_eig = std::min({e_u, e_t, e_gain, e_slack});
    return chk;
}

inline void verify_extraction_or_throw(const SdrSolution& before, const SdrSolution& after,
                                       const ChannelSet& ch, const SystemConfig& cfg,
                                       double tol = 1e-7) {
    const ExtractionCheck chk = verify_extraction(before, after, ch, cfg, tol);
    if (!chk.passed())
        throw ExtractionInvalidError(std::string("verify_extraction: clause failed: ") +
                                     chk.first_failed());
}

/// Beamformer recovery: w_u, w_t from the rank-1 blocks, probing covariance
/// from the PSD factor of the remainder; W W^H reproduces R_W.
inline Beamformer recover_beamformer(const SdrSolution& sol, const ChannelSet& ch) {
    if (!sol.extracted)
        throw std::invalid_argument("recover_beamformer: solution is not extracted");
    auto recover_vec = [&](const CMat& m, const CRowVec& h, const char* who) {
        const double quad = std::real(cxd(h * m * h.adjoint()));
        const double scale = std::max(1.0, m.norm() * h.squaredNorm());
        if (quad <= 1e-14 * scale)
            throw DegenerateDirectionError(std::string(who) + ": defining channel quadratic form vanishes");
        return CVec((m * h.adjoint()) / std::sqrt(quad));
    };
    Beamformer bf;
    bf.w_u = recover_vec(sol.w_u_mat, ch.h_u, "recover_beamformer(w_u)");
    bf.w_t = recover_vec(sol.w_t_mat, ch.h_f, "recover_beamformer(w_t)");
    const CMat rem = hermitian_part(CMat(sol.r_w - bf.w_u * bf.w_u.adjoint() - bf.w_t * bf.w_t.adjoint()));
    bf.w_probe = psd_factor(rem, 1e-6);
    return bf;
}

inline Beamformer recover_beamformer(const SdrSolution& sol) {
    return recover_beamformer(sol, sol.ctx.channels);
}

namespace detail {

inline void finish_stage(StageResult& out) {
    if (out.status != SolveStatus::Optimal) return;
    out.rank_one = extract_rank_one(out.relaxed);
    out.beamformer = recover_beamformer(out.rank_one);
}

}  // namespace detail

inline StageResult solve_detection_stage(double theta_i, double gamma_uth, const ChannelSet& ch,
                                         const SystemConfig& cfg,
                                         conic::SolverSettings settings = {}) {
    StageResult out = solve_detection(theta_i, gamma_uth, ch, cfg, settings);
    detail::finish_stage(out);
    return out;
}

inline StageResult solve_ls_stage(double theta_max, double gamma_uth, const ChannelSet& ch,
                                  const SystemConfig& cfg, conic::SolverSettings settings = {}) {
    StageResult out =
        detail::solve_estimation(Stage::Ls, theta_max, gamma_uth, ch, cfg, std::nullopt, settings);
    detail::finish_stage(out);
    return out;
}

inline StageResult solve_lmmse_stage(const EstimatorPrior& prior, double theta_max,
                                     double gamma_uth, const ChannelSet& ch,
                                     const SystemConfig& cfg,
                                     conic::SolverSettings settings = {}) {
    prior.validate();
    StageResult out =
        detail::solve_estimation(Stage::Lmmse, theta_max, gamma_uth, ch, cfg, prior, settings);
    detail::finish_stage(out);
    return out;
}

// ---- communication enhancement (stage 3) --------------------------------

/// Denominator of the UE SINR, Eq.-(24) form.
inline double ue_sinr_denominator(const Beamformer& bf, const ChannelSet& ch,
                                  const SystemConfig& cfg) {
    const double direct = std::norm(cxd(ch.h_u * bf.w_t)) + (ch.h_u * bf.w_probe).squaredNorm();
    const double through_tag = std::norm(cxd(ch.h_f * bf.w_u)) + std::norm(cxd(ch.h_f * bf.w_t)) +
                               (ch.h_f * bf.w_probe).squaredNorm() + cfg.noise_tag;
    return direct + cfg.alpha * std::norm(ch.h_tu) * through_tag + cfg.noise_ue;
}

/// Quadratic-transform objective F(W, y).
inline double qt_objective(const Beamformer& bf, double y, const ChannelSet& ch,
                           const SystemConfig& cfg) {
    return 2.0 * y * std::real(cxd(ch.h_u * bf.w_u)) -
           y * y * ue_sinr_denominator(bf, ch, cfg);
}

/// Stationary point of F over y, with w_u implicitly rotated so that
/// h_u w_u is real nonnegative.
inline double optimal_y(const Beamformer& bf, const ChannelSet& ch, const SystemConfig& cfg) {
    const double den = ue_sinr_denominator(bf, ch, cfg);
    if (!(den > 0.0)) throw std::invalid_argument("optimal_y: nonpositive denominator");
    return std::abs(cxd(ch.h_u * bf.w_u)) / den;
}

struct ConvergenceConfig {
    double eps_th = 1e-4;   // outer, on |y_k - y_{k-1}|
    double delta_th = 1e-5; // inner, on the linearization gradient term
    int k_max = 30;
    int i_max = 50;
};

struct ScaState {
    Beamformer w;
    double y = 0.0;
    std::vector<double> objective_trace;  // achieved UE SINR per outer iteration
    int iteration = 0;
};

struct CommResult {
    SolveStatus status = SolveStatus::NumericalFailure;
    Beamformer beamformer;
    ScaState state;
    std::vector<std::vector<double>> inner_f_traces;  // F(W_i, y_k) per outer iteration
    std::vector<double> final_deltas;                 // last delta per outer iteration
    std::vector<double> y_trace;
};

namespace detail {

inline void rotate_phases(Beamformer& bf, const ChannelSet& ch) {
    const cxd hu = (ch.h_u * bf.w_u)(0);
    if (std::abs(hu) > 0.0) bf.w_u *= std::conj(hu) / std::abs(hu);
    const cxd hf = (ch.h_f * bf.w_t)(0);
    if (std::abs(hf) > 0.0) bf.w_t *= std::conj(hf) / std::abs(hf);
}

inline double gradient_term(const CMat& f_mat, const CMat& w_new, const CMat& w_prev) {
    return 2.0 * std::real((w_new.adjoint() * f_mat * (w_new - w_prev)).trace());
}

}  // namespace detail

/// One convex subproblem of the SCA loop: maximize F(W, y) subject to the
/// tag-SINR second-order cone, the linearized AP-SINR constraint at state.w
/// and the power budget. The returned W satisfies the original AP constraint
/// (the linearization minorizes the convex quadratic).
inline std::pair<SolveStatus, Beamformer> sca_subproblem(const ScaState& state, double gamma_tth,
                                                         double gamma_apth, const ChannelSet& ch,
                                                         const SystemConfig& cfg,
                                                         conic::SolverSettings settings = {}) {
    const int n = cfg.n_tx;
    const int ncols = n + 2;
    ConicProgram prog;
    conic::CVecVar w = prog.cvec_var("W", n * ncols);
    ScalarVar quad = prog.scalar_var("interference_power");

    auto col_inner = [&](const CRowVec& h, int col) { return prog.inner(h, w, col * n); };

    // epigraph of the interference quadratic: quad >= ||v||^2
    std::vector<LinExpr> members;
    auto push_cx = [&](const conic::CxExpr& e, double scale) {
        members.push_back(2.0 * scale * e.re);
        members.push_back(2.0 * scale * e.im);
    };
    push_cx(col_inner(ch.h_u, 1), 1.0);
    for (int i = 0; i < n; ++i) push_cx(col_inner(ch.h_u, 2 + i), 1.0);
    const double tu_scale = std::sqrt(cfg.alpha) * std::abs(ch.h_tu);
    if (tu_scale > 0.0)
        for (int col = 0; col < ncols; ++col) push_cx(col_inner(ch.h_f, col), tu_scale);
    members.push_back(prog.scalar(quad) - LinExpr(1.0));
    prog.add_soc(prog.scalar(quad) + LinExpr(1.0), std::move(members));

    const double y = state.y;
    prog.maximize(2.0 * y * col_inner(ch.h_u, 0).re - (y * y) * prog.scalar(quad));

    // tag SINR as a second-order cone (skipped when the threshold is zero)
    if (gamma_tth > 0.0) {
        std::vector<LinExpr> tag_members;
        auto push_plain = [&](const conic::CxExpr& e) {
            tag_members.push_back(e.re);
            tag_members.push_back(e.im);
        };
        push_plain(col_inner(ch.h_f, 0));
        for (int i = 0; i < n; ++i) push_plain(col_inner(ch.h_f, 2 + i));
        tag_members.push_back(LinExpr(std::sqrt(cfg.noise_tag)));
        prog.add_soc(std::sqrt(1.0 / gamma_tth) * col_inner(ch.h_f, 1).re,
                     std::move(tag_members));
    }

    // linearized AP SINR constraint at the current iterate
    if (gamma_apth > 0.0) {
        const CMat f_mat = ch.h_f.adjoint() * ch.h_f;
        const CRowVec w_r = equal_gain_combiner(ch.h_b);
        const double g2 = std::norm(cxd((w_r * ch.h_b.transpose())(0)));
        const CMat w_prev = state.w.matrix();
        const double const_part = std::real((f_mat * w_prev * w_prev.adjoint()).trace());
        LinExpr lin(-const_part);  // 2 Re Tr(Wp^H F W) - 2 Tr(Wp^H F Wp) + const_part
        for (int col = 0; col < ncols; ++col) {
            const CRowVec row = (f_mat * w_prev.col(col)).adjoint();
            lin += 2.0 * col_inner(row, col).re;
        }
        const double rhs = (cfg.alpha * g2 * cfg.noise_tag + w_r.squaredNorm() * cfg.noise_ap) *
                           gamma_apth / (cfg.alpha * g2);
        prog.add_ineq(lin - LinExpr(rhs));
    }

    // power budget ||vec(W)|| <= sqrt(P_T)
    {
        std::vector<LinExpr> pw;
        pw.reserve(2 * n * ncols);
        for (int k = 0; k < n * ncols; ++k) {
            const conic::CxExpr e = prog.entry(w, k);
            pw.push_back(e.re);
            pw.push_back(e.im);
        }
        prog.add_soc(LinExpr(std::sqrt(cfg.power_budget)), std::move(pw));
    }

    SolveReport rep = prog.solve(settings);
    if (rep.status != SolveStatus::Optimal) return {rep.status, Beamformer{}};
    const CVec flat = prog.value_of(w, rep.x);
    Beamformer bf;
    bf.w_u = flat.segment(0, n);
    bf.w_t = flat.segment(n, n);
    bf.w_probe.resize(n, n);
    for (int col = 0; col < n; ++col) bf.w_probe.col(col) = flat.segment((2 + col) * n, n);
    detail::rotate_phases(bf, ch);
    return {SolveStatus::Optimal, bf};
}

/// Feasible starting point: a stage-1-style max-slack SDP over (R_W, W_u,
/// W_t) followed by extraction and recovery; falls back to tag-MRT with the
/// residual power on a UE beam orthogonal to h_f.
inline std::pair<SolveStatus, Beamformer> comm_initializer(double gamma_tth, double gamma_apth,
                                                           const ChannelSet& ch,
                                                           const SystemConfig& cfg,
                                                           conic::SolverSettings settings = {}) {
    const CMat f_mat = ch.h_f.adjoint() * ch.h_f;
    const CRowVec w_r = equal_gain_combiner(ch.h_b);
    const double g2 = std::norm(cxd((w_r * ch.h_b.transpose())(0)));
    const double ap_rhs = gamma_apth * (cfg.alpha * g2 * cfg.noise_tag + cfg.noise_ap) /
                          (cfg.alpha * g2);

    ConicProgram prog;
    detail::SdrVars v = detail::add_sdr_base(prog, 0.0, ch, cfg);
    ScalarVar slack = prog.scalar_var("slack");
    // tag SINR with slack
    prog.add_ineq(prog.trace_dot(f_mat, v.w_t) -
                  gamma_tth * (prog.trace_dot(f_mat, v.r_w) - prog.trace_dot(f_mat, v.w_t)) -
                  LinExpr(gamma_tth * cfg.noise_tag) - prog.scalar(slack));
    // AP SINR with slack
    prog.add_ineq(prog.trace_dot(f_mat, v.r_w) - LinExpr(ap_rhs) - prog.scalar(slack));
    prog.maximize(prog.scalar(slack));
    SolveReport rep = prog.solve(settings);

    if (rep.status == SolveStatus::Optimal && prog.value_of(slack, rep.x) >= 0.0) {
        SdrSolution sol;
        sol.r_w = prog.value_of(v.r_w, rep.x);
        sol.w_u_mat = prog.value_of(v.w_u, rep.x);
        sol.w_t_mat = prog.value_of(v.w_t, rep.x);
        sol.ctx = {Stage::Detection, 0.0, 0.0, ch, cfg, std::nullopt};
        try {
            Beamformer bf = recover_beamformer(extract_rank_one(sol, ch), ch);
            detail::rotate_phases(bf, ch);
            return {SolveStatus::Optimal, bf};
        } catch (const DegenerateDirectionError&) {
            // fall through to the MRT fallback
        } catch (const NotPsdError&) {
        }
    }

    // MRT fallback: w_t toward the tag, residual power toward the UE but
    // orthogonal to h_f so the tag SINR is untouched.
    const double hf2 = ch.h_f.squaredNorm();
    const double need_tag = gamma_tth > 0.0 ? 1.5 * gamma_tth * cfg.noise_tag / hf2 : 0.0;
    const double need_ap = gamma_apth > 0.0 ? 1.05 * ap_rhs / hf2 : 0.0;
    const double p_t = std::max(need_tag, need_ap);
    if (p_t > cfg.power_budget) return {SolveStatus::Infeasible, Beamformer{}};
    Beamformer bf = Beamformer::zero(cfg.n_tx);
    bf.w_t = std::sqrt(p_t) * ch.h_f.adjoint() / ch.h_f.norm();
    CVec u_dir = ch.h_u.adjoint();
    u_dir -= (ch.h_f * u_dir)(0) * ch.h_f.adjoint() / hf2;
    const double rem = cfg.power_budget - p_t;
    if (u_dir.norm() > 1e-9 && rem > 0.0) bf.w_u = std::sqrt(0.999 * rem) * u_dir / u_dir.norm();
    detail::rotate_phases(bf, ch);
    return {SolveStatus::Optimal, bf};
}

/// Algorithm-2 inner loop at fixed y: iterate the convex subproblem until
/// the linearization gradient term falls below delta_th.
inline SolveStatus run_inner_sca(ScaState& state, double gamma_tth, double gamma_apth,
                                 const ChannelSet& ch, const SystemConfig& cfg,
                                 const ConvergenceConfig& conv, std::vector<double>& f_trace,
                                 double& last_delta, conic::SolverSettings settings = {}) {
    const CMat f_mat = ch.h_f.adjoint() * ch.h_f;
    last_delta = std::numeric_limits<double>::infinity();
    for (int i = 1; i <= conv.i_max; ++i) {
        auto [st, w_new] = sca_subproblem(state, gamma_tth, gamma_apth, ch, cfg, settings);
        if (st != SolveStatus::Optimal) return st;
        last_delta = std::abs(detail::gradient_term(f_mat, w_new.matrix(), state.w.matrix()));
        state.w = w_new;
        f_trace.push_back(qt_objective(state.w, state.y, ch, cfg));
        if (last_delta < conv.delta_th) break;
    }
    return SolveStatus::Optimal;
}

/// Algorithm 3: alternate the closed-form y update with the SCA beamformer
/// update until the y-sequence settles.
inline CommResult solve_comm_enhancement(double gamma_tth, double gamma_apth,
                                         const ChannelSet& ch, const SystemConfig& cfg,
                                         const ConvergenceConfig& conv = {},
                                         conic::SolverSettings settings = {}) {
    cfg.validate();
    CommResult out;
    auto [st, w0] = comm_initializer(gamma_tth, gamma_apth, ch, cfg, settings);
    if (st != SolveStatus::Optimal) {
        out.status = st;
        return out;
    }
    out.state.w = w0;
    out.state.y = 0.0;
    double y_prev = 0.0;
    for (int k = 1; k <= conv.k_max; ++k) {
        out.state.iteration = k;
        out.state.y = optimal_y(out.state.w, ch, cfg);
        out.y_trace.push_back(out.state.y);
        std::vector<double> f_trace;
        double delta = 0.0;
        SolveStatus inner = run_inner_sca(out.state, gamma_tth, gamma_apth, ch, cfg, conv,
                                          f_trace, delta, settings);
        if (inner != SolveStatus::Optimal) {
            out.status = inner;
            return out;
        }
        out.inner_f_traces.push_back(std::move(f_trace));
        out.final_deltas.push_back(delta);
        out.state.objective_trace.push_back(sinr_ue(out.state.w, ch, cfg).value);
        const double eps = std::abs(out.state.y - y_prev);
        y_prev = out.state.y;
        if (eps < conv.eps_th) break;
    }
    out.beamformer = out.state.w;
    out.status = SolveStatus::Optimal;
    return out;
}

}  // namespace bisac::schemes
