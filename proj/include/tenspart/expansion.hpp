#pragma once

#include <memory>
#include <string>
#include <vector>

#include "tenspart/lowrank.hpp"
#include "tenspart/operator.hpp"
#include "tenspart/preprocess.hpp"
#include "tenspart/tensor.hpp"

namespace tenspart {

/// Symmetric m x m matrix U F U^T held in factored form (U is m x 2, F is 2 x 2).
struct LowRankSymmetric {
    Matrix u;
    Matrix f;

    std::size_t size() const { return static_cast<std::size_t>(u.rows()); }
    double operator()(std::size_t i, std::size_t j) const;
    Matrix to_dense() const;
};

/// B = U F U^T for a rank-(2,2,1) core F (2 x 2 x 1), symmetrized.
Matrix form_B(const Matrix& u, const DenseTensor3& core);
LowRankSymmetric form_B_lowrank(const Matrix& u, const DenseTensor3& core);

enum class ThresholdMode {
    // keep b_ij > theta * max_ij b_ij
    positive,
    // keep |b_ij| > theta * max_ij |b_ij|
    absolute,
};

struct ThresholdResult {
    SparseMatrix b_hat;
    double raw_max = 0.0;
    double raw_min = 0.0;
    double cutoff = 0.0;
};

/// Sparsifies B by zeroing entries at or below theta times the largest (absolute) entry.
/// theta must lie in [0,1]; the low-rank overload never materializes B.
ThresholdResult threshold_B(const Matrix& b, double theta, ThresholdMode mode = ThresholdMode::positive);
ThresholdResult threshold_B(const LowRankSymmetric& b, double theta,
                            ThresholdMode mode = ThresholdMode::positive);

/// Dominant rank-(2,2,1) term of a (1,2)-symmetric operator.
///
/// U is rotated within its span so that F(:,:,1) is anti-diagonal-dominant when the two
/// eigenvalues of F(:,:,1) have opposite signs and diagonal otherwise.
struct Term221 {
    Matrix u;  // m x 2
    Vector w;  // n
    DenseTensor3 core;  // 2 x 2 x 1, equal to R.(U,U,w)
    double lambda1 = 0.0;  // eigenvalues of F(:,:,1), lambda1 >= lambda2
    double lambda2 = 0.0;
    bool converged = false;
    bool rank_deficient = false;
    bool near_degenerate = false;
    int iterations = 0;
};

Term221 rank221_term(const TensorOperator& r, const SolverConfig& cfg = {});

/// True when the eigenvalues have opposite signs and nearly cancel:
/// |lambda1 + lambda2| <= margin * |lambda1|.
bool structure_flag(double lambda1, double lambda2, double margin = 0.05);

/// A (1,2)-symmetric sparse tensor minus a sum of terms w_nu (outer) B_nu, never formed
/// explicitly. Copies share the base tensor.
class DeflatedOperator final : public TensorOperator {
public:
    struct Term {
        Vector w;
        SparseMatrix b;
        // sum_k w_k A(:,:,k) and c_k = <A(:,:,k), B>, cached for Gram products.
        SparseMatrix slice_mix;
        Vector slice_inner;
    };

    explicit DeflatedOperator(std::shared_ptr<const SparseTensor3> base, unsigned threads = 1);
    explicit DeflatedOperator(const SparseTensor3& base, unsigned threads = 1);

    Dims dims() const override { return base_->dims(); }
    DenseTensor3 contract_except(Mode free_mode, const Matrix& a, const Matrix& b) const override;
    double squared_norm() const override;
    bool is_12_symmetric(double tol) const override;
    Matrix gram_apply(Mode mode, const Matrix& x) const override;
    Matrix dense_gram(Mode mode) const override;

    const SparseTensor3& base() const { return *base_; }
    const std::vector<Term>& terms() const { return terms_; }

    /// This operator with w (outer) B subtracted.
    DeflatedOperator deflate(const Vector& w, const SparseMatrix& b) const;

private:
    Matrix mode3_gram() const;

    std::shared_ptr<const SparseTensor3> base_;
    std::vector<Term> terms_;
    unsigned threads_ = 1;
};

DeflatedOperator deflate(const DeflatedOperator& r, const Vector& w, const SparseMatrix& b);

struct ExpansionConfig {
    std::size_t terms = 1;
    double theta = 0.0;
    ThresholdMode threshold_mode = ThresholdMode::positive;
    double structure_margin = 0.05;
    // Matrices up to this size are formed densely before thresholding.
    std::size_t dense_b_limit = 2048;
    SolverConfig solver;

    void validate() const;
};

struct ExpansionTerm {
    Matrix u;
    Vector w;
    DenseTensor3 core;
    double lambda1 = 0.0;
    double lambda2 = 0.0;
    bool structured = false;
    double raw_max = 0.0;
    double raw_min = 0.0;
    double raw_norm = 0.0;  // ||B|| before thresholding
    double cutoff = 0.0;
    SparseMatrix b_hat;
    double b_hat_norm = 0.0;
    double core_norm = 0.0;
    bool w_has_negative = false;
    bool converged = false;
    bool rank_deficient = false;
    bool near_degenerate = false;
    int iterations = 0;
};

struct ExpansionResult {
    std::vector<ExpansionTerm> terms;
    // ||R^(1)|| = ||A||, then the residual norm after each deflation.
    std::vector<double> residual_norms;
    bool all_converged = true;
};

/// Extracts `cfg.terms` rank-(2,2,1) terms, sparsifying each B and deflating it from the
/// running residual. T must be (1,2)-symmetric.
ExpansionResult expand(const SparseTensor3& t, const ExpansionConfig& cfg);

/// Cosines <B_nu, B_mu> / (||B_nu|| ||B_mu||); every matrix must be nonzero.
Matrix overlap_cosines(const std::vector<SparseMatrix>& bs);
Matrix overlap_cosines(const std::vector<ExpansionTerm>& terms);

struct SubgraphEdge {
    std::size_t source = 0;
    std::size_t destination = 0;
    std::string source_label;
    std::string destination_label;
    double weight = 0.0;
};

struct Subgraph {
    std::vector<SubgraphEdge> edges;  // upper triangle of B_hat, i <= j
    std::vector<std::size_t> vertices;
    std::vector<std::string> vertex_labels;
    Vector w;
};

Subgraph subgraph_export(const ExpansionTerm& term, const LabelTable& labels);

}  // namespace tenspart
