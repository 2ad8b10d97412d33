#include "tenspart/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <thread>

namespace tenspart {

namespace {

bool canonical_less(const Entry& a, const Entry& b) {
    if (a.k != b.k) return a.k < b.k;
    if (a.i != b.i) return a.i < b.i;
    return a.j < b.j;
}

bool same_coord(const Entry& a, const Entry& b) { return a.i == b.i && a.j == b.j && a.k == b.k; }

std::string dims_str(const Dims& d) {
    return std::to_string(d[0]) + "x" + std::to_string(d[1]) + "x" + std::to_string(d[2]);
}

void require_finite(const Matrix& m, const char* what) {
    require(m.allFinite(), ErrorKind::invalid_argument, std::string(what) + " has non-finite values");
}

}  // namespace

Mode mode_from_int(int m) {
    require(m >= 1 && m <= 3, ErrorKind::invalid_argument,
            "mode must be 1, 2 or 3, got " + std::to_string(m));
    return static_cast<Mode>(m);
}

// ---------------------------------------------------------------------------
// SparseTensor3

namespace {

void require_positive(const Dims& dims) {
    require(dims[0] > 0 && dims[1] > 0 && dims[2] > 0, ErrorKind::invalid_argument,
            "tensor extents must be positive, got " + dims_str(dims));
}

}  // namespace

SparseTensor3::SparseTensor3(Dims dims) : dims_(dims) {
    require_positive(dims);
    build_slice_offsets();
}

SparseTensor3::SparseTensor3(Dims dims, std::vector<Entry> entries) : dims_(dims) {
    require_positive(dims);
    for (const Entry& e : entries) {
        if (e.i >= dims[0] || e.j >= dims[1] || e.k >= dims[2]) {
            fail(ErrorKind::invalid_argument,
                 "entry (" + std::to_string(e.i) + "," + std::to_string(e.j) + "," +
                     std::to_string(e.k) + ") outside extents " + dims_str(dims));
        }
        require(std::isfinite(e.value), ErrorKind::invalid_argument, "non-finite tensor value");
    }
    std::stable_sort(entries.begin(), entries.end(), canonical_less);

    // Sum duplicates in input order, then drop zeros.
    std::size_t out = 0;
    for (std::size_t in = 0; in < entries.size();) {
        Entry acc = entries[in++];
        while (in < entries.size() && same_coord(entries[in], acc)) acc.value += entries[in++].value;
        if (acc.value != 0.0) entries[out++] = acc;
    }
    entries.resize(out);
    entries_ = std::move(entries);
    build_slice_offsets();
}

void SparseTensor3::build_slice_offsets() {
    slice_offsets_.assign(dims_[2] + 1, 0);
    for (const Entry& e : entries_) ++slice_offsets_[e.k + 1];
    std::partial_sum(slice_offsets_.begin(), slice_offsets_.end(), slice_offsets_.begin());
}

std::span<const Entry> SparseTensor3::slice(std::size_t k) const {
    require(k < dims_[2], ErrorKind::invalid_argument, "slice index out of range");
    return std::span<const Entry>(entries_).subspan(slice_offsets_[k],
                                                    slice_offsets_[k + 1] - slice_offsets_[k]);
}

double SparseTensor3::at(std::size_t i, std::size_t j, std::size_t k) const {
    if (i >= dims_[0] || j >= dims_[1] || k >= dims_[2]) return 0.0;
    auto s = slice(k);
    Entry probe{i, j, k, 0.0};
    auto it = std::lower_bound(s.begin(), s.end(), probe, canonical_less);
    return (it != s.end() && same_coord(*it, probe)) ? it->value : 0.0;
}

// ---------------------------------------------------------------------------
// DenseTensor3

DenseTensor3::DenseTensor3(Dims dims) : dims_(dims), values_(dims[0] * dims[1] * dims[2], 0.0) {}

DenseTensor3::DenseTensor3(Dims dims, std::vector<double> values)
    : dims_(dims), values_(std::move(values)) {
    require(values_.size() == dims[0] * dims[1] * dims[2], ErrorKind::dimension_mismatch,
            "dense tensor value count does not match " + dims_str(dims));
}

Matrix DenseTensor3::unfold(Mode m) const {
    const auto [p, q, r] = dims_;
    switch (m) {
        case Mode::one:
            return Eigen::Map<const Matrix>(values_.data(), static_cast<Eigen::Index>(p),
                                            static_cast<Eigen::Index>(q * r));
        case Mode::two: {
            Matrix out(q, p * r);
            for (std::size_t k = 0; k < r; ++k)
                for (std::size_t j = 0; j < q; ++j)
                    for (std::size_t i = 0; i < p; ++i) out(j, i + p * k) = (*this)(i, j, k);
            return out;
        }
        case Mode::three: {
            Matrix out(r, p * q);
            for (std::size_t k = 0; k < r; ++k)
                for (std::size_t j = 0; j < q; ++j)
                    for (std::size_t i = 0; i < p; ++i) out(k, i + p * j) = (*this)(i, j, k);
            return out;
        }
    }
    return {};
}

DenseTensor3 DenseTensor3::fold(const Matrix& u, Mode m, Dims dims) {
    const auto [p, q, r] = dims;
    DenseTensor3 out(dims);
    const std::size_t d = mode_index(m);
    const std::size_t other = (p * q * r) / std::max<std::size_t>(dims[d], 1);
    require(static_cast<std::size_t>(u.rows()) == dims[d] &&
                static_cast<std::size_t>(u.cols()) == other,
            ErrorKind::dimension_mismatch, "unfolded matrix does not match target dims");
    for (std::size_t k = 0; k < r; ++k)
        for (std::size_t j = 0; j < q; ++j)
            for (std::size_t i = 0; i < p; ++i) {
                switch (m) {
                    case Mode::one: out(i, j, k) = u(i, j + q * k); break;
                    case Mode::two: out(i, j, k) = u(j, i + p * k); break;
                    case Mode::three: out(i, j, k) = u(k, i + p * j); break;
                }
            }
    return out;
}

DenseTensor3 to_dense(const SparseTensor3& t) {
    DenseTensor3 out(t.dims());
    for (const Entry& e : t.entries()) out(e.i, e.j, e.k) = e.value;
    return out;
}

SparseTensor3 to_sparse(const DenseTensor3& t) {
    std::vector<Entry> entries;
    const auto [p, q, r] = t.dims();
    for (std::size_t k = 0; k < r; ++k)
        for (std::size_t i = 0; i < p; ++i)
            for (std::size_t j = 0; j < q; ++j)
                if (t(i, j, k) != 0.0) entries.push_back({i, j, k, t(i, j, k)});
    return SparseTensor3(t.dims(), std::move(entries));
}

// ---------------------------------------------------------------------------
// Products

DenseTensor3 mode_multiply_dense(const SparseTensor3& t, const Matrix& m, Mode mode) {
    const std::size_t d = mode_index(mode);
    require(static_cast<std::size_t>(m.cols()) == t.dims()[d], ErrorKind::dimension_mismatch,
            "mode_multiply: matrix has " + std::to_string(m.cols()) + " columns, mode extent is " +
                std::to_string(t.dims()[d]));
    require_finite(m, "mode_multiply matrix");
    Dims out_dims = t.dims();
    out_dims[d] = static_cast<std::size_t>(m.rows());
    DenseTensor3 out(out_dims);
    const auto rows = static_cast<std::size_t>(m.rows());
    for (const Entry& e : t.entries()) {
        const auto src = static_cast<Eigen::Index>(e.index(d));
        for (std::size_t p = 0; p < rows; ++p) {
            const double v = m(static_cast<Eigen::Index>(p), src) * e.value;
            switch (mode) {
                case Mode::one: out(p, e.j, e.k) += v; break;
                case Mode::two: out(e.i, p, e.k) += v; break;
                case Mode::three: out(e.i, e.j, p) += v; break;
            }
        }
    }
    return out;
}

SparseTensor3 mode_multiply_sparse(const SparseTensor3& t, const Matrix& m, Mode mode) {
    const std::size_t d = mode_index(mode);
    require(static_cast<std::size_t>(m.cols()) == t.dims()[d], ErrorKind::dimension_mismatch,
            "mode_multiply: matrix has " + std::to_string(m.cols()) + " columns, mode extent is " +
                std::to_string(t.dims()[d]));
    require_finite(m, "mode_multiply matrix");
    Dims out_dims = t.dims();
    out_dims[d] = static_cast<std::size_t>(m.rows());
    std::vector<Entry> out;
    out.reserve(t.nnz());
    for (const Entry& e : t.entries()) {
        const auto src = static_cast<Eigen::Index>(e.index(d));
        for (Eigen::Index p = 0; p < m.rows(); ++p) {
            const double mv = m(p, src);
            if (mv == 0.0) continue;
            Entry o = e;
            (d == 0 ? o.i : d == 1 ? o.j : o.k) = static_cast<std::size_t>(p);
            o.value = mv * e.value;
            out.push_back(o);
        }
    }
    // Construction sums contributions per coordinate in the order they were produced,
    // which is canonical order of the source entries.
    return SparseTensor3(out_dims, std::move(out));
}

ModeProduct mode_multiply(const SparseTensor3& t, const Matrix& m, Mode mode,
                          const ContractionOptions& opts) {
    if (static_cast<std::size_t>(m.rows()) <= opts.dense_threshold)
        return mode_multiply_dense(t, m, mode);
    return mode_multiply_sparse(t, m, mode);
}

DenseTensor3 mode_multiply(const DenseTensor3& t, const Matrix& m, Mode mode) {
    const std::size_t d = mode_index(mode);
    require(static_cast<std::size_t>(m.cols()) == t.dims()[d], ErrorKind::dimension_mismatch,
            "mode_multiply: matrix/tensor extent mismatch");
    require_finite(m, "mode_multiply matrix");
    Dims out_dims = t.dims();
    out_dims[d] = static_cast<std::size_t>(m.rows());
    return DenseTensor3::fold(m * t.unfold(mode), mode, out_dims);
}

namespace {

void check_factor(const Matrix& f, std::size_t extent, const char* name) {
    require(static_cast<std::size_t>(f.rows()) == extent, ErrorKind::dimension_mismatch,
            std::string(name) + " has " + std::to_string(f.rows()) + " rows, expected " +
                std::to_string(extent));
    require_finite(f, name);
}

}  // namespace

DenseTensor3 multi_multiply(const SparseTensor3& t, const Matrix& x, const Matrix& y,
                            const Matrix& z) {
    check_factor(x, t.dims()[0], "X");
    check_factor(y, t.dims()[1], "Y");
    check_factor(z, t.dims()[2], "Z");
    const auto ra = x.cols(), rb = y.cols(), rc = z.cols();
    DenseTensor3 out({static_cast<std::size_t>(ra), static_cast<std::size_t>(rb),
                      static_cast<std::size_t>(rc)});
    for (const Entry& e : t.entries()) {
        const auto i = static_cast<Eigen::Index>(e.i), j = static_cast<Eigen::Index>(e.j),
                   k = static_cast<Eigen::Index>(e.k);
        for (Eigen::Index c = 0; c < rc; ++c) {
            const double vz = e.value * z(k, c);
            for (Eigen::Index b = 0; b < rb; ++b) {
                const double vyz = vz * y(j, b);
                for (Eigen::Index a = 0; a < ra; ++a)
                    out(static_cast<std::size_t>(a), static_cast<std::size_t>(b),
                        static_cast<std::size_t>(c)) += vyz * x(i, a);
            }
        }
    }
    return out;
}

DenseTensor3 multi_multiply(const DenseTensor3& t, const Matrix& x, const Matrix& y,
                            const Matrix& z) {
    check_factor(x, t.dims()[0], "X");
    check_factor(y, t.dims()[1], "Y");
    check_factor(z, t.dims()[2], "Z");
    DenseTensor3 r = mode_multiply(t, x.transpose(), Mode::one);
    r = mode_multiply(r, y.transpose(), Mode::two);
    return mode_multiply(r, z.transpose(), Mode::three);
}

namespace {

// Accumulates the contraction of entries [begin, end) into `out`.
void contract_except_range(std::span<const Entry> entries, std::size_t free, const Matrix& a,
                           const Matrix& b, DenseTensor3& out) {
    const auto ra = a.cols(), rb = b.cols();
    for (const Entry& e : entries) {
        // The two contracted indices, in increasing mode order.
        std::size_t ia = 0, ib = 0, f = 0;
        switch (free) {
            case 0: f = e.i; ia = e.j; ib = e.k; break;
            case 1: f = e.j; ia = e.i; ib = e.k; break;
            default: f = e.k; ia = e.i; ib = e.j; break;
        }
        for (Eigen::Index c = 0; c < rb; ++c) {
            const double vb = e.value * b(static_cast<Eigen::Index>(ib), c);
            for (Eigen::Index r = 0; r < ra; ++r) {
                const double v = vb * a(static_cast<Eigen::Index>(ia), r);
                const auto rr = static_cast<std::size_t>(r), cc = static_cast<std::size_t>(c);
                switch (free) {
                    case 0: out(f, rr, cc) += v; break;
                    case 1: out(rr, f, cc) += v; break;
                    default: out(rr, cc, f) += v; break;
                }
            }
        }
    }
}

}  // namespace

DenseTensor3 contract_except(const SparseTensor3& t, Mode free_mode, const Matrix& a,
                             const Matrix& b, unsigned threads) {
    const std::size_t free = mode_index(free_mode);
    const std::size_t ma = free == 0 ? 1 : 0;
    const std::size_t mb = free == 2 ? 1 : 2;
    check_factor(a, t.dims()[ma], "contraction factor");
    check_factor(b, t.dims()[mb], "contraction factor");
    Dims out_dims{};
    const auto ca = static_cast<std::size_t>(a.cols()), cb = static_cast<std::size_t>(b.cols());
    switch (free) {
        case 0: out_dims = {t.dims()[0], ca, cb}; break;
        case 1: out_dims = {ca, t.dims()[1], cb}; break;
        default: out_dims = {ca, cb, t.dims()[2]}; break;
    }
    DenseTensor3 out(out_dims);
    auto entries = t.entries();
    if (threads <= 1 || entries.size() < 4096) {
        contract_except_range(entries, free, a, b, out);
        return out;
    }
    const std::size_t chunk = (entries.size() + threads - 1) / threads;
    std::vector<DenseTensor3> partial(threads, DenseTensor3(out_dims));
    std::vector<std::thread> pool;
    for (unsigned tid = 0; tid < threads; ++tid) {
        const std::size_t lo = std::min(entries.size(), tid * chunk);
        const std::size_t hi = std::min(entries.size(), lo + chunk);
        pool.emplace_back([&, tid, lo, hi] {
            contract_except_range(entries.subspan(lo, hi - lo), free, a, b, partial[tid]);
        });
    }
    for (auto& th : pool) th.join();
    auto dst = out.values();
    for (const auto& p : partial) {
        auto src = p.values();
        for (std::size_t x = 0; x < dst.size(); ++x) dst[x] += src[x];
    }
    return out;
}

SparseMatrix slice_combination(const SparseTensor3& t, const Vector& w) {
    require(static_cast<std::size_t>(w.size()) == t.dims()[2], ErrorKind::dimension_mismatch,
            "slice weights must match the third extent");
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(t.nnz());
    for (const Entry& e : t.entries()) {
        const double wk = w(static_cast<Eigen::Index>(e.k));
        if (wk != 0.0)
            trips.emplace_back(static_cast<int>(e.i), static_cast<int>(e.j), wk * e.value);
    }
    SparseMatrix m(static_cast<Eigen::Index>(t.dims()[0]), static_cast<Eigen::Index>(t.dims()[1]));
    m.setFromTriplets(trips.begin(), trips.end());
    return m;
}

// ---------------------------------------------------------------------------
// Inner products and norms

double inner(const SparseTensor3& a, const SparseTensor3& b) {
    require(a.dims() == b.dims(), ErrorKind::dimension_mismatch, "inner: dims differ");
    auto ea = a.entries();
    auto eb = b.entries();
    double s = 0.0;
    std::size_t x = 0, y = 0;
    while (x < ea.size() && y < eb.size()) {
        if (canonical_less(ea[x], eb[y])) {
            ++x;
        } else if (canonical_less(eb[y], ea[x])) {
            ++y;
        } else {
            s += ea[x++].value * eb[y++].value;
        }
    }
    return s;
}

double inner(const DenseTensor3& a, const DenseTensor3& b) {
    require(a.dims() == b.dims(), ErrorKind::dimension_mismatch, "inner: dims differ");
    const auto [p, q, r] = a.dims();
    double s = 0.0;
    for (std::size_t k = 0; k < r; ++k)
        for (std::size_t i = 0; i < p; ++i)
            for (std::size_t j = 0; j < q; ++j) s += a(i, j, k) * b(i, j, k);
    return s;
}

double inner(const SparseTensor3& a, const DenseTensor3& b) {
    require(a.dims() == b.dims(), ErrorKind::dimension_mismatch, "inner: dims differ");
    double s = 0.0;
    for (const Entry& e : a.entries()) s += e.value * b(e.i, e.j, e.k);
    return s;
}

double squared_norm(const SparseTensor3& a) {
    double s = 0.0;
    for (const Entry& e : a.entries()) s += e.value * e.value;
    return s;
}

double frobenius_norm(const SparseTensor3& a) { return std::sqrt(squared_norm(a)); }

double frobenius_norm(const DenseTensor3& a) { return std::sqrt(inner(a, a)); }

// ---------------------------------------------------------------------------
// Structure

bool is_12_symmetric(const SparseTensor3& t, double tol) {
    if (t.dims()[0] != t.dims()[1]) return false;
    for (const Entry& e : t.entries()) {
        if (std::abs(e.value - t.at(e.j, e.i, e.k)) > tol) return false;
    }
    return true;
}

bool is_12_symmetric(const DenseTensor3& t, double tol) {
    const auto [p, q, r] = t.dims();
    if (p != q) return false;
    for (std::size_t k = 0; k < r; ++k)
        for (std::size_t i = 0; i < p; ++i)
            for (std::size_t j = i + 1; j < q; ++j)
                if (std::abs(t(i, j, k) - t(j, i, k)) > tol) return false;
    return true;
}

SparseTensor3 symmetric_embed(const SparseTensor3& t) {
    const auto [l, m, n] = t.dims();
    std::vector<Entry> out;
    out.reserve(2 * t.nnz());
    for (const Entry& e : t.entries()) {
        out.push_back({e.i, l + e.j, e.k, e.value});
        out.push_back({l + e.j, e.i, e.k, e.value});
    }
    return SparseTensor3({l + m, l + m, n}, std::move(out));
}

SparseTensor3 transpose_slices(const SparseTensor3& t) {
    std::vector<Entry> out;
    out.reserve(t.nnz());
    for (const Entry& e : t.entries()) out.push_back({e.j, e.i, e.k, e.value});
    return SparseTensor3({t.dims()[1], t.dims()[0], t.dims()[2]}, std::move(out));
}

bool is_permutation(const Permutation& perm, std::size_t n) {
    if (perm.size() != n) return false;
    std::vector<char> seen(n, 0);
    for (std::size_t p : perm) {
        if (p >= n || seen[p]) return false;
        seen[p] = 1;
    }
    return true;
}

Permutation invert_permutation(const Permutation& perm) {
    require(is_permutation(perm, perm.size()), ErrorKind::invalid_argument,
            "not a permutation");
    Permutation inv(perm.size());
    for (std::size_t x = 0; x < perm.size(); ++x) inv[perm[x]] = x;
    return inv;
}

SparseTensor3 permute_mode(const SparseTensor3& t, const Permutation& new_position, Mode mode) {
    const std::size_t d = mode_index(mode);
    require(is_permutation(new_position, t.dims()[d]), ErrorKind::invalid_argument,
            "permute_mode: not a bijection on the mode extent");
    std::vector<Entry> out(t.entries().begin(), t.entries().end());
    for (Entry& e : out) {
        std::size_t& idx = d == 0 ? e.i : d == 1 ? e.j : e.k;
        idx = new_position[idx];
    }
    return SparseTensor3(t.dims(), std::move(out));
}

SparseTensor3 subtensor(const SparseTensor3& t, const IndexSet& i_set, const IndexSet& j_set,
                        const IndexSet& k_set) {
    const std::array<const IndexSet*, 3> sets{&i_set, &j_set, &k_set};
    std::array<std::vector<std::ptrdiff_t>, 3> remap;
    for (std::size_t d = 0; d < 3; ++d) {
        remap[d].assign(t.dims()[d], -1);
        const IndexSet& s = *sets[d];
        for (std::size_t x = 0; x < s.size(); ++x) {
            require(s[x] < t.dims()[d], ErrorKind::invalid_argument,
                    "subtensor: index " + std::to_string(s[x]) + " out of range in mode " +
                        std::to_string(d + 1));
            require(x == 0 || s[x - 1] < s[x], ErrorKind::invalid_argument,
                    "subtensor: index sets must be strictly increasing");
            remap[d][s[x]] = static_cast<std::ptrdiff_t>(x);
        }
    }
    std::vector<Entry> out;
    for (const Entry& e : t.entries()) {
        const auto a = remap[0][e.i], b = remap[1][e.j], c = remap[2][e.k];
        if (a < 0 || b < 0 || c < 0) continue;
        out.push_back({static_cast<std::size_t>(a), static_cast<std::size_t>(b),
                       static_cast<std::size_t>(c), e.value});
    }
    return SparseTensor3({i_set.size(), j_set.size(), k_set.size()}, std::move(out));
}

IndexSet full_index_set(std::size_t extent) {
    IndexSet s(extent);
    std::iota(s.begin(), s.end(), std::size_t{0});
    return s;
}

}  // namespace tenspart
