#pragma once

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include <array>
#include <cstddef>
#include <span>
#include <variant>
#include <vector>

#include "tenspart/error.hpp"

namespace tenspart {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using SparseMatrix = Eigen::SparseMatrix<double>;

using Dims = std::array<std::size_t, 3>;
using Permutation = std::vector<std::size_t>;
using IndexSet = std::vector<std::size_t>;

// Modes are numbered 1, 2, 3 in the public API; mode_index() maps to 0-based array slots.
enum class Mode : int { one = 1, two = 2, three = 3 };

constexpr std::size_t mode_index(Mode m) { return static_cast<std::size_t>(m) - 1; }
Mode mode_from_int(int m);

// One stored element a_{ijk}, 0-based indices.
struct Entry {
    std::size_t i = 0;
    std::size_t j = 0;
    std::size_t k = 0;
    double value = 0.0;

    std::size_t index(std::size_t mode) const { return mode == 0 ? i : (mode == 1 ? j : k); }
    bool operator==(const Entry&) const = default;
};

/// Coordinate-format real 3-tensor.
///
/// Entries are kept in canonical (k, i, j) lexicographic order without duplicates and
/// without explicit zeros, so every 3-slice A(:,:,k) is a contiguous run and two tensors
/// are equal iff their dims and entry lists are equal. Construction sums duplicate
/// coordinates and drops zero values. Instances are immutable.
class SparseTensor3 {
public:
    SparseTensor3() = default;
    explicit SparseTensor3(Dims dims);
    SparseTensor3(Dims dims, std::vector<Entry> entries);

    const Dims& dims() const { return dims_; }
    std::size_t extent(Mode m) const { return dims_[mode_index(m)]; }
    std::size_t nnz() const { return entries_.size(); }
    bool empty() const { return entries_.empty(); }

    std::span<const Entry> entries() const { return entries_; }
    std::span<const Entry> slice(std::size_t k) const;

    /// Element lookup; missing coordinates read as zero.
    double at(std::size_t i, std::size_t j, std::size_t k) const;

    bool operator==(const SparseTensor3& other) const {
        return dims_ == other.dims_ && entries_ == other.entries_;
    }

private:
    void build_slice_offsets();

    Dims dims_{0, 0, 0};
    std::vector<Entry> entries_;
    std::vector<std::size_t> slice_offsets_;
};

/// Small dense 3-tensor, element (i,j,k) stored at i + p*(j + q*k).
class DenseTensor3 {
public:
    DenseTensor3() = default;
    explicit DenseTensor3(Dims dims);
    DenseTensor3(Dims dims, std::vector<double> values);

    const Dims& dims() const { return dims_; }
    std::size_t size() const { return values_.size(); }

    double& operator()(std::size_t i, std::size_t j, std::size_t k) {
        return values_[i + dims_[0] * (j + dims_[1] * k)];
    }
    double operator()(std::size_t i, std::size_t j, std::size_t k) const {
        return values_[i + dims_[0] * (j + dims_[1] * k)];
    }

    std::span<const double> values() const { return values_; }
    std::span<double> values() { return values_; }

    /// Mode-d unfolding: rows are the mode-d index, columns run over the other two
    /// indices with the lower mode varying fastest.
    Matrix unfold(Mode m) const;
    static DenseTensor3 fold(const Matrix& unfolded, Mode m, Dims dims);

    bool operator==(const DenseTensor3&) const = default;

private:
    Dims dims_{0, 0, 0};
    std::vector<double> values_;
};

DenseTensor3 to_dense(const SparseTensor3& t);
SparseTensor3 to_sparse(const DenseTensor3& t);

// ---------------------------------------------------------------------------
// Multilinear products

struct ContractionOptions {
    // Output extents at or below this size produce a dense result from mode_multiply.
    std::size_t dense_threshold = 64;
    // >1 splits the entry list across threads; rounding then depends on the thread count.
    unsigned threads = 1;
};

using ModeProduct = std::variant<DenseTensor3, SparseTensor3>;

/// B = (M)_mode A: every mode fiber of A is multiplied by M, so b_{pjk} = sum_a m_{pa} a_{ajk}
/// for mode 1 and analogously for modes 2 and 3. Requires M.cols() == extent(mode).
ModeProduct mode_multiply(const SparseTensor3& t, const Matrix& m, Mode mode,
                          const ContractionOptions& opts = {});
DenseTensor3 mode_multiply_dense(const SparseTensor3& t, const Matrix& m, Mode mode);
SparseTensor3 mode_multiply_sparse(const SparseTensor3& t, const Matrix& m, Mode mode);
DenseTensor3 mode_multiply(const DenseTensor3& t, const Matrix& m, Mode mode);

/// Contraction A.(X,Y,Z): f_{abc} = sum a_{ijk} x_{ia} y_{jb} z_{kc}. The factor row counts
/// must equal the tensor extents; the result has dims (X.cols, Y.cols, Z.cols).
DenseTensor3 multi_multiply(const SparseTensor3& t, const Matrix& x, const Matrix& y,
                            const Matrix& z);
DenseTensor3 multi_multiply(const DenseTensor3& t, const Matrix& x, const Matrix& y,
                            const Matrix& z);

/// Contraction in the two modes other than `free_mode`, keeping `free_mode` uncontracted.
/// `a` and `b` are the factors for the remaining modes in increasing mode order. For
/// free_mode = 1 this is A.(I, a, b) with dims (l, a.cols, b.cols).
DenseTensor3 contract_except(const SparseTensor3& t, Mode free_mode, const Matrix& a,
                             const Matrix& b, unsigned threads = 1);

/// sum_k w_k A(:,:,k) as a sparse l x m matrix.
SparseMatrix slice_combination(const SparseTensor3& t, const Vector& w);

double inner(const SparseTensor3& a, const SparseTensor3& b);
double inner(const DenseTensor3& a, const DenseTensor3& b);
double inner(const SparseTensor3& a, const DenseTensor3& b);
double squared_norm(const SparseTensor3& a);
double frobenius_norm(const SparseTensor3& a);
double frobenius_norm(const DenseTensor3& a);

// ---------------------------------------------------------------------------
// Structure

/// True iff every 3-slice is symmetric within `tol` (missing entries read as zero).
bool is_12_symmetric(const SparseTensor3& t, double tol = 0.0);
bool is_12_symmetric(const DenseTensor3& t, double tol = 0.0);

/// The (l+m) x (l+m) x n tensor with T in block (1,2), the slice-wise transpose of T in
/// block (2,1) and zeros elsewhere.
SparseTensor3 symmetric_embed(const SparseTensor3& t);

/// Slice-wise transpose: result(j,i,k) = t(i,j,k).
SparseTensor3 transpose_slices(const SparseTensor3& t);

/// Relabels indices of `mode`: old index x moves to position new_position[x].
SparseTensor3 permute_mode(const SparseTensor3& t, const Permutation& new_position, Mode mode);

/// Converts an ordering (order[p] = old index placed at position p) into the new-position
/// map accepted by permute_mode, and back; the two are mutual inverses.
Permutation invert_permutation(const Permutation& perm);
bool is_permutation(const Permutation& perm, std::size_t n);

/// A(I,J,K) reindexed densely; the index sets must be sorted, duplicate-free and in range.
SparseTensor3 subtensor(const SparseTensor3& t, const IndexSet& i_set, const IndexSet& j_set,
                        const IndexSet& k_set);

IndexSet full_index_set(std::size_t extent);

}  // namespace tenspart
