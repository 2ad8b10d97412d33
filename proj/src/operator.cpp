#include "tenspart/operator.hpp"

#include <algorithm>
#include <numeric>

namespace tenspart {

DenseTensor3 TensorOperator::contract_all(const Matrix& x, const Matrix& y, const Matrix& z) const {
    const DenseTensor3 partial = contract_except(Mode::three, x, y);
    return mode_multiply(partial, z.transpose(), Mode::three);
}

DenseTensor3 SparseTensorOperator::contract_except(Mode free_mode, const Matrix& a,
                                                   const Matrix& b) const {
    return tenspart::contract_except(*tensor_, free_mode, a, b, threads_);
}

DenseTensor3 SparseTensorOperator::contract_all(const Matrix& x, const Matrix& y,
                                                const Matrix& z) const {
    return multi_multiply(*tensor_, x, y, z);
}

double SparseTensorOperator::squared_norm() const { return tenspart::squared_norm(*tensor_); }

bool SparseTensorOperator::is_12_symmetric(double tol) const {
    return tenspart::is_12_symmetric(*tensor_, tol);
}

Matrix SparseTensorOperator::gram_apply(Mode mode, const Matrix& x) const {
    return unfolding_gram_apply(*tensor_, mode, x);
}

Matrix SparseTensorOperator::dense_gram(Mode mode) const { return unfolding_gram(*tensor_, mode); }

namespace {

// Entry positions grouped so that entries of one mode-d fiber are contiguous; returns the
// permutation of entry positions and the group start offsets.
struct FiberGroups {
    std::vector<std::size_t> order;
    std::vector<std::size_t> starts;
};

FiberGroups group_fibers(const SparseTensor3& t, std::size_t d) {
    auto entries = t.entries();
    FiberGroups g;
    g.order.resize(entries.size());
    std::iota(g.order.begin(), g.order.end(), std::size_t{0});
    auto key = [&](std::size_t x) {
        const Entry& e = entries[x];
        switch (d) {
            case 0: return std::pair{e.k, e.j};
            case 1: return std::pair{e.k, e.i};
            default: return std::pair{e.i, e.j};
        }
    };
    // Canonical (k,i,j) order already groups mode-2 fibers.
    if (d != 1) {
        std::stable_sort(g.order.begin(), g.order.end(),
                         [&](std::size_t a, std::size_t b) { return key(a) < key(b); });
    }
    for (std::size_t x = 0; x < g.order.size(); ++x) {
        if (x == 0 || key(g.order[x]) != key(g.order[x - 1])) g.starts.push_back(x);
    }
    g.starts.push_back(g.order.size());
    return g;
}

}  // namespace

Matrix unfolding_gram_apply(const SparseTensor3& t, Mode mode, const Matrix& x) {
    const std::size_t d = mode_index(mode);
    require(static_cast<std::size_t>(x.rows()) == t.dims()[d], ErrorKind::dimension_mismatch,
            "gram_apply: block rows must equal the mode extent");
    const auto entries = t.entries();
    const FiberGroups g = group_fibers(t, d);
    Matrix out = Matrix::Zero(x.rows(), x.cols());
    Eigen::RowVectorXd fiber_dot(x.cols());
    for (std::size_t s = 0; s + 1 < g.starts.size(); ++s) {
        fiber_dot.setZero();
        for (std::size_t p = g.starts[s]; p < g.starts[s + 1]; ++p) {
            const Entry& e = entries[g.order[p]];
            fiber_dot += e.value * x.row(static_cast<Eigen::Index>(e.index(d)));
        }
        for (std::size_t p = g.starts[s]; p < g.starts[s + 1]; ++p) {
            const Entry& e = entries[g.order[p]];
            out.row(static_cast<Eigen::Index>(e.index(d))) += e.value * fiber_dot;
        }
    }
    return out;
}

Matrix unfolding_gram(const SparseTensor3& t, Mode mode) {
    const std::size_t d = mode_index(mode);
    const auto n = static_cast<Eigen::Index>(t.dims()[d]);
    const auto entries = t.entries();
    const FiberGroups g = group_fibers(t, d);
    Matrix gram = Matrix::Zero(n, n);
    for (std::size_t s = 0; s + 1 < g.starts.size(); ++s) {
        for (std::size_t p = g.starts[s]; p < g.starts[s + 1]; ++p) {
            const Entry& e = entries[g.order[p]];
            const auto row = static_cast<Eigen::Index>(e.index(d));
            for (std::size_t q = g.starts[s]; q < g.starts[s + 1]; ++q) {
                const Entry& f = entries[g.order[q]];
                gram(row, static_cast<Eigen::Index>(f.index(d))) += e.value * f.value;
            }
        }
    }
    return gram;
}

}  // namespace tenspart
