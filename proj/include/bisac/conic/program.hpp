#pragma once

#include <json.hpp>

#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "bisac/conic/solver.hpp"
#include "bisac/linalg.hpp"

// Modeling layer: Hermitian/vector/scalar variables, linear and second-order
// cone constraints and PSD constraints on Hermitian affine expressions.
// Complex data are realified here, at the boundary to the real solver.

namespace bisac::conic {

/// [[Re H, -Im H], [Im H, Re H]]; PSD iff H is PSD, eigenvalues doubled in
/// multiplicity.
inline RMat realify_hermitian(const CMat& h) {
    require_hermitian(h, "realify_hermitian");
    const Eigen::Index n = h.rows();
    RMat r(2 * n, 2 * n);
    r.topLeftCorner(n, n) = h.real();
    r.bottomRightCorner(n, n) = h.real();
    r.topRightCorner(n, n) = -h.imag();
    r.bottomLeftCorner(n, n) = h.imag();
    return r;
}

struct LinExpr {
    std::map<int, double> terms;  // coordinate -> coefficient
    double constant = 0.0;

    LinExpr() = default;
    explicit LinExpr(double c) : constant(c) {}

    void add(int coord, double coef) {
        if (coef != 0.0) terms[coord] += coef;
    }
    LinExpr& operator+=(const LinExpr& o) {
        for (auto& [k, v] : o.terms) terms[k] += v;
        constant += o.constant;
        return *this;
    }
    LinExpr& operator-=(const LinExpr& o) {
        for (auto& [k, v] : o.terms) terms[k] -= v;
        constant -= o.constant;
        return *this;
    }
    LinExpr& operator*=(double a) {
        for (auto& [k, v] : terms) v *= a;
        constant *= a;
        return *this;
    }
    friend LinExpr operator+(LinExpr a, const LinExpr& b) { a += b; return a; }
    friend LinExpr operator-(LinExpr a, const LinExpr& b) { a -= b; return a; }
    friend LinExpr operator*(double a, LinExpr e) { e *= a; return e; }
};

/// Complex-valued linear expression, kept as (re, im) parts.
struct CxExpr {
    LinExpr re, im;
    friend CxExpr operator+(CxExpr a, const CxExpr& b) {
        a.re += b.re;
        a.im += b.im;
        return a;
    }
    friend CxExpr operator*(cxd c, const CxExpr& e) {
        CxExpr out;
        out.re = c.real() * e.re - c.imag() * e.im;
        out.im = c.real() * e.im + c.imag() * e.re;
        return out;
    }
};

struct HermitianVar { int id = -1; };
struct CVecVar { int id = -1; };
struct ScalarVar { int id = -1; };

/// Hermitian-valued affine expression: constant + sum of real-coefficient
/// variable blocks placed on the diagonal at given offsets.
struct HermitianAffine {
    int dim = 0;
    CMat constant;  // dim x dim
    struct Term {
        double coef;
        HermitianVar var;
        int offset;
    };
    std::vector<Term> vterms;

    explicit HermitianAffine(int d) : dim(d), constant(CMat::Zero(d, d)) {}
    void add_const(const CMat& m, int offset) {
        constant.block(offset, offset, m.rows(), m.cols()) += m;
    }
    void add_const_block(const CMat& m, int row, int col) {
        constant.block(row, col, m.rows(), m.cols()) += m;
        if (row != col)
            constant.block(col, row, m.cols(), m.rows()) += m.adjoint();
    }
    void add_term(double coef, HermitianVar v, int offset) {
        vterms.push_back({coef, v, offset});
    }
};

struct SolveReport {
    SolveStatus status = SolveStatus::NumericalFailure;
    double objective = 0.0;  // in the user's sense
    double gap = std::numeric_limits<double>::infinity();
    double primal_residual = std::numeric_limits<double>::infinity();
    double dual_residual = std::numeric_limits<double>::infinity();
    int iterations = 0;
    VectorXd x;
    std::vector<IterInfo> trace;
    std::string message;
};

struct ConstraintResidual {
    std::string kind;
    int index = 0;
    double violation = 0.0;
};

struct CheckReport {
    std::vector<ConstraintResidual> entries;
    double max_violation = 0.0;
};

class ConicProgram {
public:
    // ---- variables -----------------------------------------------------
    HermitianVar hermitian_var(const std::string& name, int dim) {
        vars_.push_back({name, Kind::Hermitian, dim, n_});
        n_ += dim * dim;
        return {static_cast<int>(vars_.size()) - 1};
    }

    /// Hermitian variable constrained PSD.
    HermitianVar psd_var(const std::string& name, int dim) {
        HermitianVar v = hermitian_var(name, dim);
        HermitianAffine aff(dim);
        aff.add_term(1.0, v, 0);
        add_psd(std::move(aff));
        return v;
    }

    CVecVar cvec_var(const std::string& name, int dim) {
        vars_.push_back({name, Kind::ComplexVec, dim, n_});
        n_ += 2 * dim;
        return {static_cast<int>(vars_.size()) - 1};
    }

    ScalarVar scalar_var(const std::string& name) {
        vars_.push_back({name, Kind::Scalar, 1, n_});
        n_ += 1;
        return {static_cast<int>(vars_.size()) - 1};
    }

    // ---- expressions ---------------------------------------------------
    LinExpr scalar(ScalarVar v) const {
        LinExpr e;
        e.add(vars_[v.id].offset, 1.0);
        return e;
    }

    /// Tr(A X) for Hermitian A; real-valued by Hermiticity.
    LinExpr trace_dot(const CMat& a, HermitianVar x) const {
        const auto& vd = vars_[x.id];
        LinExpr e;
        for (int i = 0; i < vd.dim; ++i) e.add(vd.offset + i, a(i, i).real());
        int k = vd.offset + vd.dim;
        for (int j = 0; j < vd.dim; ++j)
            for (int i = j + 1; i < vd.dim; ++i) {
                e.add(k++, 2.0 * a(i, j).real());
                e.add(k++, 2.0 * a(i, j).imag());
            }
        return e;
    }

    LinExpr trace(HermitianVar x) const {
        return trace_dot(CMat::Identity(vars_[x.id].dim, vars_[x.id].dim), x);
    }

    CxExpr entry(CVecVar v, int i) const {
        CxExpr e;
        e.re.add(vars_[v.id].offset + 2 * i, 1.0);
        e.im.add(vars_[v.id].offset + 2 * i + 1, 1.0);
        return e;
    }

    /// c * w over a slice of a complex vector variable.
    CxExpr inner(const CRowVec& c, CVecVar v, int start = 0) const {
        CxExpr e;
        for (int k = 0; k < c.size(); ++k) {
            const cxd ck = c(k);
            const int off = vars_[v.id].offset + 2 * (start + k);
            e.re.add(off, ck.real());
            e.re.add(off + 1, -ck.imag());
            e.im.add(off, ck.imag());
            e.im.add(off + 1, ck.real());
        }
        return e;
    }

    // ---- objective and constraints --------------------------------------
    void maximize(const LinExpr& e) { objective_ = e; maximize_ = true; }
    void minimize(const LinExpr& e) { objective_ = e; maximize_ = false; }

    void add_eq(LinExpr e) { eqs_.push_back(std::move(e)); }
    /// e >= 0
    void add_ineq(LinExpr e) { ineqs_.push_back(std::move(e)); }
    /// head >= || members ||
    void add_soc(LinExpr head, std::vector<LinExpr> members) {
        socs_.push_back({std::move(head), std::move(members)});
    }
    void add_psd(HermitianAffine aff) { psds_.push_back(std::move(aff)); }

    int num_reals() const { return n_; }

    // ---- lowering --------------------------------------------------------
    StandardForm lower() const {
        StandardForm sf;
        sf.cones.nonneg = static_cast<int>(ineqs_.size());
        for (const auto& s : socs_) sf.cones.soc.push_back(1 + static_cast<int>(s.members.size()));
        for (const auto& p : psds_) sf.cones.psd.push_back(2 * p.dim);
        const int m = sf.cones.total_rows();

        sf.c = VectorXd::Zero(n_);
        for (auto& [k, v] : objective_.terms) sf.c(k) = maximize_ ? -v : v;
        sf.G = MatrixXd::Zero(m, n_);
        sf.h = VectorXd::Zero(m);
        sf.A = MatrixXd::Zero(static_cast<int>(eqs_.size()), n_);
        sf.b = VectorXd::Zero(static_cast<int>(eqs_.size()));
        for (std::size_t i = 0; i < eqs_.size(); ++i) {
            for (auto& [k, v] : eqs_[i].terms) sf.A(static_cast<int>(i), k) = v;
            sf.b(static_cast<int>(i)) = -eqs_[i].constant;
        }

        int row = 0;
        for (const auto& e : ineqs_) {
            for (auto& [k, v] : e.terms) sf.G(row, k) = -v;
            sf.h(row) = e.constant;
            ++row;
        }
        for (const auto& s : socs_) {
            for (auto& [k, v] : s.head.terms) sf.G(row, k) = -v;
            sf.h(row) = s.head.constant;
            ++row;
            for (const auto& mem : s.members) {
                for (auto& [k, v] : mem.terms) sf.G(row, k) = -v;
                sf.h(row) = mem.constant;
                ++row;
            }
        }
        for (const auto& aff : psds_) {
            const int order = 2 * aff.dim;
            const int len = order * (order + 1) / 2;
            VectorXd sv(len);
            svec_from_matrix(realify_hermitian(hermitian_part(aff.constant)), sv.data());
            sf.h.segment(row, len) = sv;
            CMat delta = CMat::Zero(aff.dim, aff.dim);
            for (const auto& t : aff.vterms) {
                const auto& vd = vars_[t.var.id];
                auto emit = [&](int coord) {
                    svec_from_matrix(realify_hermitian(delta), sv.data());
                    for (int r = 0; r < len; ++r)
                        if (sv(r) != 0.0) sf.G(row + r, coord) = -sv(r);
                };
                for (int i = 0; i < vd.dim; ++i) {
                    delta(t.offset + i, t.offset + i) = t.coef;
                    emit(vd.offset + i);
                    delta(t.offset + i, t.offset + i) = 0.0;
                }
                int k = vd.offset + vd.dim;
                for (int j = 0; j < vd.dim; ++j)
                    for (int i = j + 1; i < vd.dim; ++i) {
                        delta(t.offset + i, t.offset + j) = t.coef;
                        delta(t.offset + j, t.offset + i) = t.coef;
                        emit(k++);
                        delta(t.offset + i, t.offset + j) = cxd(0.0, t.coef);
                        delta(t.offset + j, t.offset + i) = cxd(0.0, -t.coef);
                        emit(k++);
                        delta(t.offset + i, t.offset + j) = 0.0;
                        delta(t.offset + j, t.offset + i) = 0.0;
                    }
            }
            row += len;
        }
        return sf;
    }

    SolveReport solve(SolverSettings settings = {}) const {
        IpmSolver ipm(lower(), settings);
        RawSolution raw = ipm.solve();
        SolveReport rep;
        rep.status = raw.status;
        rep.x = raw.x;
        rep.gap = raw.relgap;
        rep.primal_residual = raw.pres;
        rep.dual_residual = raw.dres;
        rep.iterations = raw.iterations;
        rep.trace = std::move(raw.trace);
        rep.message = raw.message;
        rep.objective = (maximize_ ? -raw.pcost : raw.pcost) + objective_.constant;
        return rep;
    }

    // ---- solution access -------------------------------------------------
    double eval(const LinExpr& e, const VectorXd& x) const {
        double v = e.constant;
        for (auto& [k, c] : e.terms) v += c * x(k);
        return v;
    }

    cxd eval(const CxExpr& e, const VectorXd& x) const {
        return {eval(e.re, x), eval(e.im, x)};
    }

    CMat value_of(HermitianVar v, const VectorXd& x) const {
        const auto& vd = vars_[v.id];
        CMat m(vd.dim, vd.dim);
        for (int i = 0; i < vd.dim; ++i) m(i, i) = x(vd.offset + i);
        int k = vd.offset + vd.dim;
        for (int j = 0; j < vd.dim; ++j)
            for (int i = j + 1; i < vd.dim; ++i) {
                m(i, j) = cxd(x(k), x(k + 1));
                m(j, i) = std::conj(m(i, j));
                k += 2;
            }
        return m;
    }

    CVec value_of(CVecVar v, const VectorXd& x) const {
        const auto& vd = vars_[v.id];
        CVec w(vd.dim);
        for (int i = 0; i < vd.dim; ++i)
            w(i) = cxd(x(vd.offset + 2 * i), x(vd.offset + 2 * i + 1));
        return w;
    }

    double value_of(ScalarVar v, const VectorXd& x) const { return x(vars_[v.id].offset); }

    CMat value_of(const HermitianAffine& aff, const VectorXd& x) const {
        CMat m = aff.constant;
        for (const auto& t : aff.vterms) {
            const CMat vm = value_of(t.var, x);
            m.block(t.offset, t.offset, vm.rows(), vm.cols()) += t.coef * vm;
        }
        return hermitian_part(m);
    }

    /// Recompute every constraint residual from the model, independently of
    /// the solver internals.
    CheckReport check_solution(const SolveReport& rep) const {
        CheckReport out;
        int idx = 0;
        auto push = [&](const std::string& kind, double viol) {
            out.entries.push_back({kind, idx++, viol});
            out.max_violation = std::max(out.max_violation, viol);
        };
        for (const auto& e : eqs_) push("eq", std::abs(eval(e, rep.x)));
        for (const auto& e : ineqs_) push("ineq", std::max(0.0, -eval(e, rep.x)));
        for (const auto& s : socs_) {
            double nsq = 0.0;
            for (const auto& mem : s.members) {
                const double v = eval(mem, rep.x);
                nsq += v * v;
            }
            push("soc", std::max(0.0, std::sqrt(nsq) - eval(s.head, rep.x)));
        }
        for (const auto& aff : psds_) {
            Eigen::SelfAdjointEigenSolver<CMat> es(value_of(aff, rep.x), Eigen::EigenvaluesOnly);
            push("psd", std::max(0.0, -es.eigenvalues().minCoeff()));
        }
        return out;
    }

    /// Dense JSON dump of the lowered program for external cross-checking.
    nlohmann::json dump_json() const {
        StandardForm sf = lower();
        nlohmann::json j;
        for (const auto& v : vars_) {
            j["variables"].push_back({{"name", v.name},
                                      {"kind", kind_name(v.kind)},
                                      {"dim", v.dim},
                                      {"offset", v.offset}});
        }
        j["sense"] = maximize_ ? "maximize" : "minimize";
        j["objective_constant"] = objective_.constant;
        j["c"] = std::vector<double>(sf.c.data(), sf.c.data() + sf.c.size());
        j["h"] = std::vector<double>(sf.h.data(), sf.h.data() + sf.h.size());
        j["b"] = std::vector<double>(sf.b.data(), sf.b.data() + sf.b.size());
        auto dense_rows = [](const MatrixXd& m) {
            std::vector<std::vector<double>> rows;
            rows.reserve(m.rows());
            for (Eigen::Index i = 0; i < m.rows(); ++i) {
                std::vector<double> r(m.cols());
                for (Eigen::Index c = 0; c < m.cols(); ++c) r[c] = m(i, c);
                rows.push_back(std::move(r));
            }
            return rows;
        };
        j["G"] = dense_rows(sf.G);
        j["A"] = dense_rows(sf.A);
        j["cones"] = {{"nonneg", sf.cones.nonneg}, {"soc", sf.cones.soc}, {"psd", sf.cones.psd}};
        return j;
    }

private:
    enum class Kind { Hermitian, ComplexVec, RealVec, Scalar };
    static const char* kind_name(Kind k) {
        switch (k) {
            case Kind::Hermitian: return "hermitian";
            case Kind::ComplexVec: return "cvec";
            case Kind::RealVec: return "rvec";
            default: return "scalar";
        }
    }
    struct VarDesc {
        std::string name;
        Kind kind;
        int dim;
        int offset;
    };
    struct SocCon {
        LinExpr head;
        std::vector<LinExpr> members;
    };

    std::vector<VarDesc> vars_;
    int n_ = 0;
    LinExpr objective_;
    bool maximize_ = true;
    std::vector<LinExpr> eqs_, ineqs_;
    std::vector<SocCon> socs_;
    std::vector<HermitianAffine> psds_;
};

}  // namespace bisac::conic
