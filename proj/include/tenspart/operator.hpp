#pragma once

#include "tenspart/tensor.hpp"

namespace tenspart {

/// Read-only access to a 3-tensor through the products a low-rank solver needs.
///
/// Solvers only ever touch the tensor through contractions with narrow factor blocks and
/// through the Gram matrices of its unfoldings, so an implicitly represented tensor (for
/// example a sparse tensor minus a few low-rank terms) can be analyzed without forming it.
class TensorOperator {
public:
    virtual ~TensorOperator() = default;

    virtual Dims dims() const = 0;

    /// Contraction in every mode except `free_mode`; `a`, `b` are the factors for the
    /// remaining modes in increasing mode order.
    virtual DenseTensor3 contract_except(Mode free_mode, const Matrix& a, const Matrix& b) const = 0;

    /// A.(X,Y,Z).
    virtual DenseTensor3 contract_all(const Matrix& x, const Matrix& y, const Matrix& z) const;

    virtual double squared_norm() const = 0;

    virtual bool is_12_symmetric(double tol) const = 0;

    /// A_(d) A_(d)^T X for the mode-d unfolding A_(d).
    virtual Matrix gram_apply(Mode mode, const Matrix& x) const = 0;

    /// A_(d) A_(d)^T as a dense extent x extent matrix.
    virtual Matrix dense_gram(Mode mode) const = 0;
};

/// Non-owning adapter over a SparseTensor3; the tensor must outlive the adapter.
class SparseTensorOperator final : public TensorOperator {
public:
    explicit SparseTensorOperator(const SparseTensor3& t, unsigned threads = 1)
        : tensor_(&t), threads_(threads) {}

    Dims dims() const override { return tensor_->dims(); }
    DenseTensor3 contract_except(Mode free_mode, const Matrix& a, const Matrix& b) const override;
    DenseTensor3 contract_all(const Matrix& x, const Matrix& y, const Matrix& z) const override;
    double squared_norm() const override;
    bool is_12_symmetric(double tol) const override;
    Matrix gram_apply(Mode mode, const Matrix& x) const override;
    Matrix dense_gram(Mode mode) const override;

    const SparseTensor3& tensor() const { return *tensor_; }

private:
    const SparseTensor3* tensor_;
    unsigned threads_;
};

/// A_(d) A_(d)^T X computed fiber by fiber in O(nnz * cols(X)).
Matrix unfolding_gram_apply(const SparseTensor3& t, Mode mode, const Matrix& x);

/// A_(d) A_(d)^T accumulated from pairs of entries sharing a mode-d fiber.
Matrix unfolding_gram(const SparseTensor3& t, Mode mode);

}  // namespace tenspart
