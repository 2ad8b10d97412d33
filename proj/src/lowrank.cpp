#include "tenspart/lowrank.hpp"

#include <Eigen/QR>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <string>

namespace tenspart {

void SolverConfig::validate() const {
    require(max_iters >= 1, ErrorKind::invalid_argument, "max_iters must be at least 1");
    require(rel_tol > 0.0, ErrorKind::invalid_argument, "rel_tol must be positive");
    require(num_restarts >= 1, ErrorKind::invalid_argument, "num_restarts must be at least 1");
}

Ranks RankApproximation::ranks() const {
    return {static_cast<std::size_t>(u.cols()), static_cast<std::size_t>(v.cols()),
            static_cast<std::size_t>(w.cols())};
}

void apply_sign_convention(Matrix& basis) {
    for (Eigen::Index c = 0; c < basis.cols(); ++c) {
        Eigen::Index best = 0;
        double best_abs = -1.0;
        for (Eigen::Index r = 0; r < basis.rows(); ++r) {
            const double a = std::abs(basis(r, c));
            if (a > best_abs) {
                best_abs = a;
                best = r;
            }
        }
        if (basis.rows() > 0 && basis(best, c) < 0.0) basis.col(c) *= -1.0;
    }
}

namespace {

// Completes the first `kept` orthonormal columns of `basis` to `r` columns using
// Gram-Schmidt against the standard basis vectors.
void complete_basis(Matrix& basis, Eigen::Index kept) {
    const Eigen::Index n = basis.rows();
    Eigen::Index filled = kept;
    for (Eigen::Index e = 0; e < n && filled < basis.cols(); ++e) {
        Vector cand = Vector::Unit(n, e);
        for (int pass = 0; pass < 2; ++pass) {
            if (filled > 0) {
                cand -= basis.leftCols(filled) * (basis.leftCols(filled).transpose() * cand);
            }
        }
        const double nrm = cand.norm();
        if (nrm > 0.5) basis.col(filled++) = cand / nrm;
    }
}

Matrix random_orthonormal(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
    std::normal_distribution<double> gauss(0.0, 1.0);
    Matrix g(rows, cols);
    for (Eigen::Index c = 0; c < g.cols(); ++c)
        for (Eigen::Index r = 0; r < g.rows(); ++r) g(r, c) = gauss(rng);
    Eigen::HouseholderQR<Matrix> qr(g);
    return qr.householderQ() * Matrix::Identity(static_cast<Eigen::Index>(rows),
                                                static_cast<Eigen::Index>(cols));
}

void check_ranks(const Dims& dims, const Ranks& ranks) {
    const std::array<std::size_t, 3> r{ranks.r1, ranks.r2, ranks.r3};
    for (std::size_t d = 0; d < 3; ++d) {
        require(r[d] >= 1 && r[d] <= dims[d], ErrorKind::invalid_argument,
                "rank " + std::to_string(r[d]) + " in mode " + std::to_string(d + 1) +
                    " must lie in [1, " + std::to_string(dims[d]) + "]");
    }
}

}  // namespace

SubspaceResult dominant_subspace(const Matrix& m, std::size_t r) {
    require(r >= 1 && r <= static_cast<std::size_t>(m.rows()), ErrorKind::invalid_argument,
            "dominant_subspace: r must lie in [1, rows]");
    require(m.allFinite(), ErrorKind::invalid_argument, "dominant_subspace: non-finite input");
    const auto rr = static_cast<Eigen::Index>(r);
    SubspaceResult out;
    out.basis = Matrix::Zero(m.rows(), rr);
    out.singular_values = Vector::Zero(rr);

    Eigen::Index usable = 0;
    if (m.cols() > 0) {
        Eigen::JacobiSVD<Matrix> svd(m, Eigen::ComputeThinU);
        const Vector& s = svd.singularValues();
        const Eigen::Index avail = std::min<Eigen::Index>(rr, s.size());
        const double cutoff = s.size() > 0 ? s(0) * static_cast<double>(std::max(m.rows(), m.cols())) *
                                                 std::numeric_limits<double>::epsilon()
                                           : 0.0;
        for (Eigen::Index c = 0; c < avail; ++c) {
            out.singular_values(c) = s(c);
            if (s(c) > cutoff && s(c) > 0.0) usable = c + 1;
        }
        out.basis.leftCols(usable) = svd.matrixU().leftCols(usable);
    }
    if (usable < rr) {
        out.rank_deficient = true;
        complete_basis(out.basis, usable);
    }
    apply_sign_convention(out.basis);
    return out;
}

Matrix dominant_eigenspace(const std::function<Matrix(const Matrix&)>& apply, std::size_t n,
                           std::size_t r, std::uint64_t seed, int max_iters, double tol) {
    require(r >= 1 && r <= n, ErrorKind::invalid_argument, "dominant_eigenspace: r out of range");
    const auto block = static_cast<Eigen::Index>(std::min(n, r + 8));
    const auto rr = static_cast<Eigen::Index>(r);
    std::mt19937_64 rng(seed);
    Matrix x = random_orthonormal(n, static_cast<std::size_t>(block), rng);
    Matrix ritz_vectors;
    for (int it = 0; it < max_iters; ++it) {
        const Matrix ax = apply(x);
        Matrix h = x.transpose() * ax;
        h = 0.5 * (h + h.transpose());
        Eigen::SelfAdjointEigenSolver<Matrix> eig(h);
        // Eigenvalues ascending; reorder so the largest come first.
        const Matrix s = eig.eigenvectors().rowwise().reverse();
        const Vector theta = eig.eigenvalues().reverse();
        ritz_vectors = x * s.leftCols(rr);
        // Stop once every wanted Ritz pair has a small residual ||G x - theta x||.
        const Matrix gx = ax * s.leftCols(rr);
        const double scale = std::max(std::abs(theta(0)), std::numeric_limits<double>::min());
        double worst = 0.0;
        for (Eigen::Index c = 0; c < rr; ++c)
            worst = std::max(worst, (gx.col(c) - theta(c) * ritz_vectors.col(c)).norm());
        if (worst <= tol * scale) break;
        Eigen::HouseholderQR<Matrix> qr(ax * s);
        x = qr.householderQ() * Matrix::Identity(static_cast<Eigen::Index>(n), block);
    }
    apply_sign_convention(ritz_vectors);
    return ritz_vectors;
}

namespace {

Matrix hosvd_factor(const TensorOperator& op, Mode mode, std::size_t r, const SolverConfig& cfg) {
    const std::size_t n = op.dims()[mode_index(mode)];
    if (n <= cfg.dense_gram_limit) {
        const Matrix g = op.dense_gram(mode);
        Eigen::SelfAdjointEigenSolver<Matrix> eig(0.5 * (g + g.transpose()));
        Matrix basis = eig.eigenvectors().rightCols(static_cast<Eigen::Index>(r)).rowwise().reverse();
        apply_sign_convention(basis);
        return basis;
    }
    return dominant_eigenspace([&](const Matrix& x) { return op.gram_apply(mode, x); }, n, r,
                               cfg.seed + mode_index(mode));
}

struct SweepState {
    Matrix u, v, w;
    DenseTensor3 core;
    bool rank_deficient = false;
};

RankApproximation run_hooi(const TensorOperator& op, Factors start, const Ranks& ranks,
                           const SolverConfig& cfg, double tensor_norm) {
    RankApproximation res;
    res.tensor_norm = tensor_norm;
    res.u = std::move(start.u);
    res.v = std::move(start.v);
    res.w = std::move(start.w);
    res.core = op.contract_all(res.u, res.v, res.w);
    double prev = frobenius_norm(res.core);
    res.objective_history.push_back(prev);
    for (int it = 1; it <= cfg.max_iters; ++it) {
        bool deficient = false;
        auto upd = [&](const Matrix& unfolded, std::size_t r) {
            SubspaceResult s = dominant_subspace(unfolded, r);
            deficient = deficient || s.rank_deficient;
            return std::move(s.basis);
        };
        res.u = upd(op.contract_except(Mode::one, res.v, res.w).unfold(Mode::one), ranks.r1);
        res.v = upd(op.contract_except(Mode::two, res.u, res.w).unfold(Mode::two), ranks.r2);
        const DenseTensor3 c3 = op.contract_except(Mode::three, res.u, res.v);
        res.w = upd(c3.unfold(Mode::three), ranks.r3);
        res.core = mode_multiply(c3, res.w.transpose(), Mode::three);
        const double obj = frobenius_norm(res.core);
        res.objective_history.push_back(obj);
        res.iterations = it;
        res.rank_deficient = deficient;
        if (std::abs(obj - prev) <= cfg.rel_tol * std::max(obj, std::numeric_limits<double>::min())) {
            res.converged = true;
            break;
        }
        prev = obj;
    }
    return res;
}

RankApproximation run_hooi_symmetric(const TensorOperator& op, Matrix u, Matrix w,
                                     const Ranks& ranks, const SolverConfig& cfg,
                                     double tensor_norm) {
    RankApproximation res;
    res.symmetric = true;
    res.tensor_norm = tensor_norm;
    res.u = std::move(u);
    res.w = std::move(w);
    res.core = op.contract_all(res.u, res.u, res.w);
    double prev = frobenius_norm(res.core);
    res.objective_history.push_back(prev);
    const Eigen::Index m = static_cast<Eigen::Index>(op.dims()[0]);
    for (int it = 1; it <= cfg.max_iters; ++it) {
        const Matrix c1 = op.contract_except(Mode::one, res.u, res.w).unfold(Mode::one);
        const Matrix c2 = op.contract_except(Mode::two, res.u, res.w).unfold(Mode::two);
        Matrix stacked(m, c1.cols() + c2.cols());
        stacked << c1, c2;
        SubspaceResult su = dominant_subspace(stacked, ranks.r1);
        res.u = std::move(su.basis);
        const DenseTensor3 c3 = op.contract_except(Mode::three, res.u, res.u);
        SubspaceResult sw = dominant_subspace(c3.unfold(Mode::three), ranks.r3);
        res.w = std::move(sw.basis);
        res.core = mode_multiply(c3, res.w.transpose(), Mode::three);
        const double obj = frobenius_norm(res.core);
        res.objective_history.push_back(obj);
        res.iterations = it;
        res.rank_deficient = su.rank_deficient || sw.rank_deficient;
        if (std::abs(obj - prev) <= cfg.rel_tol * std::max(obj, std::numeric_limits<double>::min())) {
            res.converged = true;
            break;
        }
        prev = obj;
    }
    res.v = res.u;
    return res;
}

double checked_norm(const TensorOperator& op) {
    const double n2 = op.squared_norm();
    require(n2 > 0.0, ErrorKind::numerical, "degenerate problem: the tensor is zero");
    return std::sqrt(n2);
}

// Keeps the best run and flags disagreement between restarts.
void merge_restart(RankApproximation& best, RankApproximation cand, double& lo, double& hi) {
    lo = std::min(lo, cand.objective());
    hi = std::max(hi, cand.objective());
    if (cand.objective() > best.objective()) best = std::move(cand);
}

}  // namespace

Factors hosvd_init(const TensorOperator& op, const Ranks& ranks, const SolverConfig& cfg) {
    check_ranks(op.dims(), ranks);
    return {hosvd_factor(op, Mode::one, ranks.r1, cfg), hosvd_factor(op, Mode::two, ranks.r2, cfg),
            hosvd_factor(op, Mode::three, ranks.r3, cfg)};
}

Factors hosvd_init(const SparseTensor3& t, const Ranks& ranks, const SolverConfig& cfg) {
    return hosvd_init(SparseTensorOperator(t, cfg.threads), ranks, cfg);
}

RankApproximation hooi_from(const TensorOperator& op, const Factors& start, const Ranks& ranks,
                            const SolverConfig& cfg) {
    cfg.validate();
    check_ranks(op.dims(), ranks);
    return run_hooi(op, start, ranks, cfg, checked_norm(op));
}

RankApproximation hooi(const TensorOperator& op, const Ranks& ranks, const SolverConfig& cfg) {
    cfg.validate();
    check_ranks(op.dims(), ranks);
    const double nrm = checked_norm(op);
    RankApproximation best = run_hooi(op, hosvd_init(op, ranks, cfg), ranks, cfg, nrm);
    double lo = best.objective(), hi = best.objective();
    const auto [l, m, n] = op.dims();
    for (int rs = 1; rs < cfg.num_restarts; ++rs) {
        std::mt19937_64 rng(cfg.seed + static_cast<std::uint64_t>(rs));
        Factors start{random_orthonormal(l, ranks.r1, rng), random_orthonormal(m, ranks.r2, rng),
                      random_orthonormal(n, ranks.r3, rng)};
        merge_restart(best, run_hooi(op, std::move(start), ranks, cfg, nrm), lo, hi);
    }
    best.near_degenerate = (hi - lo) > cfg.restart_agreement_tol;
    return best;
}

RankApproximation hooi(const SparseTensor3& t, const Ranks& ranks, const SolverConfig& cfg) {
    return hooi(SparseTensorOperator(t, cfg.threads), ranks, cfg);
}

RankApproximation hooi_symmetric(const TensorOperator& op, const Ranks& ranks,
                                 const SolverConfig& cfg) {
    cfg.validate();
    check_ranks(op.dims(), ranks);
    require(ranks.r1 == ranks.r2, ErrorKind::invalid_argument,
            "symmetric approximation needs equal ranks in modes 1 and 2");
    require(op.is_12_symmetric(1e-12 * std::sqrt(op.squared_norm())), ErrorKind::invalid_argument,
            "symmetric approximation requested for a tensor that is not (1,2)-symmetric");
    const double nrm = checked_norm(op);
    RankApproximation best =
        run_hooi_symmetric(op, hosvd_factor(op, Mode::one, ranks.r1, cfg),
                           hosvd_factor(op, Mode::three, ranks.r3, cfg), ranks, cfg, nrm);
    double lo = best.objective(), hi = best.objective();
    const auto [m, m2, n] = op.dims();
    for (int rs = 1; rs < cfg.num_restarts; ++rs) {
        std::mt19937_64 rng(cfg.seed + static_cast<std::uint64_t>(rs));
        Matrix u = random_orthonormal(m, ranks.r1, rng);
        Matrix w = random_orthonormal(n, ranks.r3, rng);
        merge_restart(best, run_hooi_symmetric(op, std::move(u), std::move(w), ranks, cfg, nrm), lo,
                      hi);
    }
    best.near_degenerate = (hi - lo) > cfg.restart_agreement_tol;
    return best;
}

RankApproximation hooi_symmetric(const SparseTensor3& t, const Ranks& ranks,
                                 const SolverConfig& cfg) {
    return hooi_symmetric(SparseTensorOperator(t, cfg.threads), ranks, cfg);
}

RankApproximation approx_nonsymmetric_via_embedding(const SparseTensor3& t, const Ranks& ranks,
                                                    const SolverConfig& cfg) {
    cfg.validate();
    check_ranks(t.dims(), ranks);
    const auto [l, m, n] = t.dims();
    const SparseTensor3 embedded = symmetric_embed(t);
    const std::size_t stacked = ranks.r1 + ranks.r2;
    const RankApproximation sym =
        hooi_symmetric(embedded, {stacked, stacked, ranks.r3}, cfg);

    const SubspaceResult top = dominant_subspace(sym.u.topRows(static_cast<Eigen::Index>(l)), ranks.r1);
    const SubspaceResult bottom =
        dominant_subspace(sym.u.bottomRows(static_cast<Eigen::Index>(m)), ranks.r2);
    const SparseTensorOperator op(t, cfg.threads);
    const DenseTensor3 c3 = op.contract_except(Mode::three, top.basis, bottom.basis);
    const SubspaceResult w = dominant_subspace(c3.unfold(Mode::three), ranks.r3);

    if (cfg.refine_embedding) {
        RankApproximation res = hooi_from(op, {top.basis, bottom.basis, w.basis}, ranks, cfg);
        res.near_degenerate = res.near_degenerate || sym.near_degenerate;
        return res;
    }
    RankApproximation res;
    res.u = top.basis;
    res.v = bottom.basis;
    res.w = w.basis;
    res.core = mode_multiply(c3, res.w.transpose(), Mode::three);
    res.objective_history = {frobenius_norm(res.core)};
    res.iterations = sym.iterations;
    res.converged = sym.converged;
    res.rank_deficient = top.rank_deficient || bottom.rank_deficient || w.rank_deficient;
    res.near_degenerate = sym.near_degenerate;
    res.tensor_norm = frobenius_norm(t);
    (void)n;
    return res;
}

DenseTensor3 reconstruct(const RankApproximation& approx) {
    DenseTensor3 b = mode_multiply(approx.core, approx.u, Mode::one);
    b = mode_multiply(b, approx.v, Mode::two);
    return mode_multiply(b, approx.w, Mode::three);
}

double reconstruct_entry(const RankApproximation& approx, std::size_t i, std::size_t j,
                         std::size_t k) {
    const auto [ra, rb, rc] = approx.core.dims();
    double s = 0.0;
    for (std::size_t c = 0; c < rc; ++c)
        for (std::size_t b = 0; b < rb; ++b)
            for (std::size_t a = 0; a < ra; ++a)
                s += approx.core(a, b, c) * approx.u(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(a)) *
                     approx.v(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(b)) *
                     approx.w(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(c));
    return s;
}

double residual_norm(const RankApproximation& approx) {
    const double f = frobenius_norm(approx.core);
    return std::sqrt(std::max(0.0, approx.tensor_norm * approx.tensor_norm - f * f));
}

}  // namespace tenspart
