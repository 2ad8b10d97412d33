#include "tenspart/expansion.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <unordered_map>

namespace tenspart {

namespace {

Matrix core_slice(const Matrix& u, const DenseTensor3& core) {
    const auto& d = core.dims();
    require(d[2] == 1 && d[0] == d[1] && static_cast<Eigen::Index>(d[0]) == u.cols(),
            ErrorKind::dimension_mismatch, "core must be r x r x 1 with r = cols(U)");
    Matrix f(u.cols(), u.cols());
    for (Eigen::Index a = 0; a < f.rows(); ++a)
        for (Eigen::Index b = 0; b < f.cols(); ++b)
            f(a, b) = core(static_cast<std::size_t>(a), static_cast<std::size_t>(b), 0);
    return f;
}

void check_theta(double theta) {
    require(std::isfinite(theta) && theta >= 0.0 && theta <= 1.0, ErrorKind::invalid_argument,
            "threshold must lie in [0, 1]");
}

double cutoff_for(double raw_max, double abs_max, double theta, ThresholdMode mode) {
    return mode == ThresholdMode::positive ? theta * std::max(raw_max, 0.0) : theta * abs_max;
}

// Residual norms are summed entrywise while the deflated support has at most this many
// (i, j, k) positions.
constexpr double direct_norm_limit = 2.5e7;

bool keep(double value, double cutoff, ThresholdMode mode) {
    return mode == ThresholdMode::positive ? value > cutoff : std::abs(value) > cutoff;
}

double sparse_inner(const SparseMatrix& a, const SparseMatrix& b) {
    return a.cwiseProduct(b).sum();
}

}  // namespace

double LowRankSymmetric::operator()(std::size_t i, std::size_t j) const {
    return u.row(static_cast<Eigen::Index>(i)).dot(f * u.row(static_cast<Eigen::Index>(j)).transpose());
}

Matrix LowRankSymmetric::to_dense() const { return u * f * u.transpose(); }

Matrix form_B(const Matrix& u, const DenseTensor3& core) {
    const Matrix b = u * core_slice(u, core) * u.transpose();
    return 0.5 * (b + b.transpose());
}

LowRankSymmetric form_B_lowrank(const Matrix& u, const DenseTensor3& core) {
    Matrix f = core_slice(u, core);
    return {u, 0.5 * (f + f.transpose())};
}

ThresholdResult threshold_B(const Matrix& b, double theta, ThresholdMode mode) {
    check_theta(theta);
    require(b.size() > 0, ErrorKind::invalid_argument, "cannot threshold an empty matrix");
    ThresholdResult res;
    res.raw_max = b.maxCoeff();
    res.raw_min = b.minCoeff();
    res.cutoff = cutoff_for(res.raw_max, b.cwiseAbs().maxCoeff(), theta, mode);
    const bool square = b.rows() == b.cols();
    std::vector<Eigen::Triplet<double>> kept;
    for (Eigen::Index j = 0; j < b.cols(); ++j)
        for (Eigen::Index i = 0; i < b.rows(); ++i) {
            if (!keep(b(i, j), res.cutoff, mode)) continue;
            // A square B stays symmetric: (i,j) survives only if (j,i) does too.
            if (square && !keep(b(j, i), res.cutoff, mode)) continue;
            kept.emplace_back(i, j, b(i, j));
        }
    res.b_hat.resize(b.rows(), b.cols());
    res.b_hat.setFromTriplets(kept.begin(), kept.end());
    return res;
}

ThresholdResult threshold_B(const LowRankSymmetric& b, double theta, ThresholdMode mode) {
    check_theta(theta);
    const auto m = static_cast<Eigen::Index>(b.size());
    require(m > 0, ErrorKind::invalid_argument, "cannot threshold an empty matrix");
    // Rows of U F, so that b_ij = (U F)_i . U_j without forming B.
    const Matrix uf = b.u * b.f;
    ThresholdResult res;
    res.raw_max = -std::numeric_limits<double>::infinity();
    res.raw_min = std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < m; ++j) {
        for (Eigen::Index i = 0; i <= j; ++i) {
            const double v = uf.row(i).dot(b.u.row(j));
            res.raw_max = std::max(res.raw_max, v);
            res.raw_min = std::min(res.raw_min, v);
        }
    }
    res.cutoff = cutoff_for(res.raw_max, std::max(std::abs(res.raw_max), std::abs(res.raw_min)),
                            theta, mode);
    std::vector<Eigen::Triplet<double>> kept;
    for (Eigen::Index j = 0; j < m; ++j) {
        for (Eigen::Index i = 0; i <= j; ++i) {
            const double v = uf.row(i).dot(b.u.row(j));
            if (!keep(v, res.cutoff, mode)) continue;
            kept.emplace_back(i, j, v);
            if (i != j) kept.emplace_back(j, i, v);
        }
    }
    res.b_hat.resize(m, m);
    res.b_hat.setFromTriplets(kept.begin(), kept.end());
    return res;
}

Term221 rank221_term(const TensorOperator& r, const SolverConfig& cfg) {
    SolverConfig c = cfg;
    c.symmetric = true;
    const RankApproximation a = hooi_symmetric(r, {2, 2, 1}, c);

    Matrix f = core_slice(a.u, a.core);
    f = 0.5 * (f + f.transpose());
    Eigen::SelfAdjointEigenSolver<Matrix> eig(f);
    Term221 term;
    term.lambda1 = eig.eigenvalues()(1);
    term.lambda2 = eig.eigenvalues()(0);
    Matrix q(2, 2);
    q.col(0) = eig.eigenvectors().col(1);
    q.col(1) = eig.eigenvectors().col(0);
    const Matrix eigen_basis = a.u * q;

    Matrix u(eigen_basis.rows(), 2);
    if (term.lambda1 * term.lambda2 < 0.0) {
        // Opposite signs: rotate by 45 degrees so the core becomes anti-diagonal-dominant.
        const double s = std::sqrt(0.5);
        u.col(0) = s * (eigen_basis.col(0) + eigen_basis.col(1));
        u.col(1) = s * (eigen_basis.col(0) - eigen_basis.col(1));
    } else {
        u = eigen_basis;
    }
    apply_sign_convention(u);
    term.u = std::move(u);
    term.w = a.w.col(0);
    term.core = r.contract_all(term.u, term.u, term.w);
    term.converged = a.converged;
    term.rank_deficient = a.rank_deficient;
    term.near_degenerate = a.near_degenerate;
    term.iterations = a.iterations;
    return term;
}

bool structure_flag(double lambda1, double lambda2, double margin) {
    return lambda1 * lambda2 < 0.0 && std::abs(lambda1 + lambda2) <= margin * std::abs(lambda1);
}

// ---------------------------------------------------------------------------
// DeflatedOperator

DeflatedOperator::DeflatedOperator(std::shared_ptr<const SparseTensor3> base, unsigned threads)
    : base_(std::move(base)), threads_(threads) {
    require(base_ != nullptr, ErrorKind::invalid_argument, "missing base tensor");
    require(base_->dims()[0] == base_->dims()[1], ErrorKind::dimension_mismatch,
            "deflation needs square 3-slices");
}

DeflatedOperator::DeflatedOperator(const SparseTensor3& base, unsigned threads)
    : DeflatedOperator(std::make_shared<const SparseTensor3>(base), threads) {}

DeflatedOperator DeflatedOperator::deflate(const Vector& w, const SparseMatrix& b) const {
    const auto& d = base_->dims();
    require(static_cast<std::size_t>(w.size()) == d[2], ErrorKind::dimension_mismatch,
            "w length must equal the number of slices");
    require(static_cast<std::size_t>(b.rows()) == d[0] && static_cast<std::size_t>(b.cols()) == d[1],
            ErrorKind::dimension_mismatch, "B must match the slice size");
    Term term;
    term.w = w;
    term.b = b;
    term.b.makeCompressed();
    term.slice_mix = slice_combination(*base_, w);
    term.slice_inner = Vector::Zero(w.size());
    for (std::size_t k = 0; k < d[2]; ++k) {
        double s = 0.0;
        for (const Entry& e : base_->slice(k))
            s += e.value * term.b.coeff(static_cast<Eigen::Index>(e.i), static_cast<Eigen::Index>(e.j));
        term.slice_inner(static_cast<Eigen::Index>(k)) = s;
    }
    DeflatedOperator out = *this;
    out.terms_.push_back(std::move(term));
    return out;
}

DeflatedOperator deflate(const DeflatedOperator& r, const Vector& w, const SparseMatrix& b) {
    return r.deflate(w, b);
}

DenseTensor3 DeflatedOperator::contract_except(Mode free_mode, const Matrix& a, const Matrix& b) const {
    DenseTensor3 out = tenspart::contract_except(*base_, free_mode, a, b, threads_);
    const auto& od = out.dims();
    for (const Term& t : terms_) {
        switch (free_mode) {
            case Mode::one: {
                const Matrix bv = t.b * a;
                const Vector ww = b.transpose() * t.w;
                for (std::size_t c = 0; c < od[2]; ++c)
                    for (std::size_t r = 0; r < od[1]; ++r)
                        for (std::size_t i = 0; i < od[0]; ++i)
                            out(i, r, c) -= bv(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(r)) *
                                            ww(static_cast<Eigen::Index>(c));
                break;
            }
            case Mode::two: {
                const Matrix btu = t.b.transpose() * a;
                const Vector ww = b.transpose() * t.w;
                for (std::size_t c = 0; c < od[2]; ++c)
                    for (std::size_t j = 0; j < od[1]; ++j)
                        for (std::size_t r = 0; r < od[0]; ++r)
                            out(r, j, c) -= btu(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(r)) *
                                            ww(static_cast<Eigen::Index>(c));
                break;
            }
            case Mode::three: {
                const Matrix ubv = a.transpose() * (t.b * b);
                for (std::size_t k = 0; k < od[2]; ++k)
                    for (std::size_t c = 0; c < od[1]; ++c)
                        for (std::size_t r = 0; r < od[0]; ++r)
                            out(r, c, k) -= ubv(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) *
                                            t.w(static_cast<Eigen::Index>(k));
                break;
            }
        }
    }
    return out;
}

double DeflatedOperator::squared_norm() const {
    if (terms_.empty()) return tenspart::squared_norm(*base_);
    // Summing the residual entries directly avoids the cancellation in the expanded
    // formula below, which loses half the digits when the terms explain A almost exactly.
    const auto n = static_cast<Eigen::Index>(base_->dims()[2]);
    std::unordered_map<std::uint64_t, Eigen::Index> support;
    const auto key = [&](std::size_t i, std::size_t j) {
        return static_cast<std::uint64_t>(i) * base_->dims()[1] + j;
    };
    for (const Term& t : terms_)
        for (Eigen::Index c = 0; c < t.b.outerSize(); ++c)
            for (SparseMatrix::InnerIterator it(t.b, c); it; ++it)
                support.emplace(key(static_cast<std::size_t>(it.row()), static_cast<std::size_t>(it.col())),
                                static_cast<Eigen::Index>(support.size()));
    if (static_cast<double>(support.size()) * static_cast<double>(n) <= direct_norm_limit) {
        Matrix r = Matrix::Zero(n, static_cast<Eigen::Index>(support.size()));
        for (const Term& t : terms_)
            for (Eigen::Index c = 0; c < t.b.outerSize(); ++c)
                for (SparseMatrix::InnerIterator it(t.b, c); it; ++it)
                    r.col(support.at(key(static_cast<std::size_t>(it.row()), static_cast<std::size_t>(it.col())))) -=
                        it.value() * t.w;
        double off = 0.0;
        for (const Entry& e : base_->entries()) {
            const auto found = support.find(key(e.i, e.j));
            if (found == support.end()) {
                off += e.value * e.value;
            } else {
                r(static_cast<Eigen::Index>(e.k), found->second) += e.value;
            }
        }
        return off + r.squaredNorm();
    }

    double s = tenspart::squared_norm(*base_);
    for (std::size_t nu = 0; nu < terms_.size(); ++nu) {
        s -= 2.0 * sparse_inner(terms_[nu].slice_mix, terms_[nu].b);
        for (std::size_t mu = 0; mu < terms_.size(); ++mu) {
            s += terms_[nu].w.dot(terms_[mu].w) * sparse_inner(terms_[nu].b, terms_[mu].b);
        }
    }
    return s;
}

bool DeflatedOperator::is_12_symmetric(double tol) const {
    if (!tenspart::is_12_symmetric(*base_, tol)) return false;
    for (const Term& t : terms_) {
        const SparseMatrix diff = t.b - SparseMatrix(t.b.transpose());
        for (Eigen::Index c = 0; c < diff.outerSize(); ++c)
            for (SparseMatrix::InnerIterator it(diff, c); it; ++it)
                if (std::abs(it.value()) > tol) return false;
    }
    return true;
}

Matrix DeflatedOperator::gram_apply(Mode mode, const Matrix& x) const {
    if (mode == Mode::three) return mode3_gram() * x;
    Matrix g = unfolding_gram_apply(*base_, mode, x);
    const bool first = mode == Mode::one;
    for (const Term& t : terms_) {
        if (first) {
            g -= t.slice_mix * (t.b.transpose() * x) + t.b * (t.slice_mix.transpose() * x);
        } else {
            g -= t.slice_mix.transpose() * (t.b * x) + t.b.transpose() * (t.slice_mix * x);
        }
    }
    for (const Term& s : terms_) {
        for (const Term& t : terms_) {
            const double ww = s.w.dot(t.w);
            g += first ? Matrix(ww * (s.b * (t.b.transpose() * x)))
                       : Matrix(ww * (s.b.transpose() * (t.b * x)));
        }
    }
    return g;
}

Matrix DeflatedOperator::dense_gram(Mode mode) const {
    if (mode == Mode::three) return mode3_gram();
    Matrix g = unfolding_gram(*base_, mode);
    const bool first = mode == Mode::one;
    for (const Term& t : terms_) {
        const SparseMatrix cross = first ? SparseMatrix(t.slice_mix * t.b.transpose())
                                         : SparseMatrix(t.slice_mix.transpose() * t.b);
        const Matrix dense_cross(cross);
        g -= dense_cross + dense_cross.transpose();
    }
    for (const Term& s : terms_) {
        for (const Term& t : terms_) {
            const SparseMatrix prod = first ? SparseMatrix(s.b * t.b.transpose())
                                            : SparseMatrix(s.b.transpose() * t.b);
            g += s.w.dot(t.w) * Matrix(prod);
        }
    }
    return g;
}

Matrix DeflatedOperator::mode3_gram() const {
    Matrix g = unfolding_gram(*base_, Mode::three);
    for (const Term& t : terms_) {
        g -= t.slice_inner * t.w.transpose() + t.w * t.slice_inner.transpose();
    }
    for (const Term& s : terms_)
        for (const Term& t : terms_) g += sparse_inner(s.b, t.b) * (s.w * t.w.transpose());
    return g;
}

// ---------------------------------------------------------------------------
// Expansion

void ExpansionConfig::validate() const {
    require(terms >= 1, ErrorKind::invalid_argument, "at least one expansion term is required");
    check_theta(theta);
    require(structure_margin >= 0.0, ErrorKind::invalid_argument, "structure margin must be nonnegative");
    solver.validate();
}

ExpansionResult expand(const SparseTensor3& t, const ExpansionConfig& cfg) {
    cfg.validate();
    const double norm = frobenius_norm(t);
    require(norm > 0.0, ErrorKind::numerical, "degenerate problem: the tensor is zero");
    require(t.dims()[0] == t.dims()[1] && is_12_symmetric(t, 1e-12 * norm),
            ErrorKind::invalid_argument, "expansion needs a (1,2)-symmetric tensor");

    ExpansionResult out;
    DeflatedOperator residual(std::make_shared<const SparseTensor3>(t), cfg.solver.threads);
    out.residual_norms.push_back(std::sqrt(std::max(0.0, residual.squared_norm())));
    for (std::size_t nu = 0; nu < cfg.terms; ++nu) {
        if (out.residual_norms.back() <= 1e-14 * norm) break;  // nothing left to explain
        Term221 found = rank221_term(residual, cfg.solver);

        ExpansionTerm term;
        ThresholdResult th = t.dims()[0] <= cfg.dense_b_limit
                                 ? threshold_B(form_B(found.u, found.core), cfg.theta, cfg.threshold_mode)
                                 : threshold_B(form_B_lowrank(found.u, found.core), cfg.theta,
                                               cfg.threshold_mode);
        term.u = std::move(found.u);
        term.w = std::move(found.w);
        term.core = std::move(found.core);
        term.lambda1 = found.lambda1;
        term.lambda2 = found.lambda2;
        term.structured = structure_flag(found.lambda1, found.lambda2, cfg.structure_margin);
        term.raw_max = th.raw_max;
        term.raw_min = th.raw_min;
        term.cutoff = th.cutoff;
        term.b_hat = std::move(th.b_hat);
        term.b_hat_norm = term.b_hat.norm();
        {
            const Matrix f = core_slice(term.u, term.core);
            const Matrix g = term.u.transpose() * term.u;
            term.raw_norm = std::sqrt(std::max(0.0, (f * g * f.transpose() * g).trace()));
        }
        term.core_norm = frobenius_norm(term.core);
        term.w_has_negative = term.w.minCoeff() < -1e-12 * term.w.cwiseAbs().maxCoeff();
        term.converged = found.converged;
        term.rank_deficient = found.rank_deficient;
        term.near_degenerate = found.near_degenerate;
        term.iterations = found.iterations;
        out.all_converged = out.all_converged && found.converged;

        residual = residual.deflate(term.w, term.b_hat);
        out.residual_norms.push_back(std::sqrt(std::max(0.0, residual.squared_norm())));
        out.terms.push_back(std::move(term));
    }
    return out;
}

Matrix overlap_cosines(const std::vector<SparseMatrix>& bs) {
    const auto q = static_cast<Eigen::Index>(bs.size());
    Vector norms(q);
    for (Eigen::Index a = 0; a < q; ++a) {
        norms(a) = bs[static_cast<std::size_t>(a)].norm();
        require(norms(a) > 0.0, ErrorKind::numerical,
                "overlap cosine undefined: term " + std::to_string(a + 1) + " has an empty B");
    }
    Matrix c = Matrix::Identity(q, q);
    for (Eigen::Index a = 0; a < q; ++a) {
        for (Eigen::Index b = a + 1; b < q; ++b) {
            require(bs[static_cast<std::size_t>(a)].rows() == bs[static_cast<std::size_t>(b)].rows() &&
                        bs[static_cast<std::size_t>(a)].cols() == bs[static_cast<std::size_t>(b)].cols(),
                    ErrorKind::dimension_mismatch, "overlap needs matrices of equal size");
            const double v = sparse_inner(bs[static_cast<std::size_t>(a)], bs[static_cast<std::size_t>(b)]) /
                             (norms(a) * norms(b));
            c(a, b) = c(b, a) = std::clamp(v, -1.0, 1.0);
        }
    }
    return c;
}

Matrix overlap_cosines(const std::vector<ExpansionTerm>& terms) {
    std::vector<SparseMatrix> bs;
    bs.reserve(terms.size());
    for (const auto& t : terms) bs.push_back(t.b_hat);
    return overlap_cosines(bs);
}

Subgraph subgraph_export(const ExpansionTerm& term, const LabelTable& labels) {
    require(labels.size() == static_cast<std::size_t>(term.b_hat.rows()), ErrorKind::dimension_mismatch,
            "label count does not match the size of B");
    Subgraph g;
    g.w = term.w;
    std::vector<bool> touched(labels.size(), false);
    for (Eigen::Index j = 0; j < term.b_hat.outerSize(); ++j) {
        for (SparseMatrix::InnerIterator it(term.b_hat, j); it; ++it) {
            const auto i = static_cast<std::size_t>(it.row());
            const auto jj = static_cast<std::size_t>(it.col());
            if (i > jj || it.value() == 0.0) continue;
            g.edges.push_back({i, jj, labels[i], labels[jj], it.value()});
            touched[i] = touched[jj] = true;
        }
    }
    std::sort(g.edges.begin(), g.edges.end(), [](const SubgraphEdge& a, const SubgraphEdge& b) {
        return a.source != b.source ? a.source < b.source : a.destination < b.destination;
    });
    for (std::size_t v = 0; v < touched.size(); ++v) {
        if (!touched[v]) continue;
        g.vertices.push_back(v);
        g.vertex_labels.push_back(labels[v]);
    }
    return g;
}

}  // namespace tenspart
