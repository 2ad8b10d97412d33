#include "tenspart/partition.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace tenspart {

namespace {

Permutation stable_order(const Vector& key, bool nonincreasing) {
    Permutation order(static_cast<std::size_t>(key.size()));
    std::iota(order.begin(), order.end(), std::size_t{0});
    if (nonincreasing) {
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t a, std::size_t b) { return key(a) > key(b); });
    } else {
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t a, std::size_t b) { return key(a) < key(b); });
    }
    return order;
}

Vector gather(const Vector& v, const Permutation& order) {
    Vector out(static_cast<Eigen::Index>(order.size()));
    for (std::size_t p = 0; p < order.size(); ++p) {
        out(static_cast<Eigen::Index>(p)) = v(static_cast<Eigen::Index>(order[p]));
    }
    return out;
}

void check_ranges(const std::vector<IndexRange>& ranges, std::size_t extent, const char* what) {
    std::size_t previous_end = 0;
    for (const auto& r : ranges) {
        require(r.begin < r.end, ErrorKind::invalid_argument,
                std::string("empty or inverted ") + what + " range");
        require(r.end <= extent, ErrorKind::invalid_argument,
                std::string(what) + " range exceeds the tensor extent");
        require(r.begin >= previous_end, ErrorKind::invalid_argument,
                std::string(what) + " ranges overlap or are unsorted");
        previous_end = r.end;
    }
}

bool ranges_cover(const std::vector<IndexRange>& ranges, std::size_t extent) {
    std::size_t covered = 0;
    for (const auto& r : ranges) covered += r.size();
    return covered == extent;
}

// Maps every index to its range slot, or -1 when it lies in no range.
std::vector<long> range_lookup(const std::vector<IndexRange>& ranges, std::size_t extent) {
    std::vector<long> slot(extent, -1);
    for (std::size_t a = 0; a < ranges.size(); ++a) {
        for (std::size_t x = ranges[a].begin; x < ranges[a].end; ++x) slot[x] = static_cast<long>(a);
    }
    return slot;
}

std::size_t default_corner_width(std::size_t extent, const PartitionOptions& opts) {
    std::size_t width = opts.corner_width.value_or(static_cast<std::size_t>(
        std::llround(opts.corner_fraction * static_cast<double>(extent))));
    width = std::max<std::size_t>(width, 1);
    return std::min(width, extent / 2 == 0 ? std::size_t{1} : extent / 2);
}

ModePartition partition_mode(const Matrix& factor, bool nonincreasing) {
    ModePartition mp;
    if (factor.cols() >= 2) {
        Reordering r = monotone_reorder(factor, nonincreasing);
        mp.order = std::move(r.order);
        mp.lead = std::move(r.u1);
        mp.key = std::move(r.u2);
        mp.split = sign_change_split(mp.key, nonincreasing);
    } else {
        // A single column carries no sign split; order by it and report no split point.
        mp.order = stable_order(factor.col(0), nonincreasing);
        mp.lead = gather(factor.col(0), mp.order);
        mp.key = mp.lead;
        mp.split = SplitPoint{static_cast<std::size_t>(factor.rows()), false};
    }
    mp.insignificance.resize(mp.order.size());
    for (std::size_t p = 0; p < mp.order.size(); ++p) {
        mp.insignificance[p] = std::abs(mp.lead(static_cast<Eigen::Index>(p)));
    }
    return mp;
}

std::vector<RankedLabel> ranked_slice(const Permutation& order, const Vector& u1,
                                      const Vector& u2, const LabelTable& labels,
                                      std::size_t first, std::size_t last) {
    std::vector<RankedLabel> out;
    for (std::size_t p = first; p < last; ++p) {
        const std::size_t idx = order[p];
        const auto e = static_cast<Eigen::Index>(idx);
        out.push_back({labels[idx], idx, u2(e), std::abs(u1(e))});
    }
    return out;
}

}  // namespace

Reordering monotone_reorder(const Matrix& u, bool nonincreasing) {
    require(u.cols() >= 2, ErrorKind::invalid_argument,
            "reordering needs a factor with at least two columns");
    Reordering r;
    r.order = stable_order(u.col(1), nonincreasing);
    r.u1 = gather(u.col(0), r.order);
    r.u2 = gather(u.col(1), r.order);
    return r;
}

SplitPoint sign_change_split(const Vector& v, bool nonincreasing) {
    const auto n = static_cast<std::size_t>(v.size());
    for (std::size_t s = 1; s < n; ++s) {
        const double before = v(static_cast<Eigen::Index>(s - 1));
        const double after = v(static_cast<Eigen::Index>(s));
        const bool change = nonincreasing ? (before >= 0.0 && after < 0.0)
                                          : (before < 0.0 && after >= 0.0);
        if (change) return {s, true};
    }
    if (n == 0) return {0, false};
    // No sign change: everything sits on one side of the split.
    const bool leading_side = nonincreasing ? v(0) >= 0.0 : v(0) < 0.0;
    return {leading_side ? n : 0, false};
}

std::vector<IndexRange> corner_ranges(std::size_t extent, std::size_t width) {
    require(width >= 1, ErrorKind::invalid_argument, "corner width must be positive");
    require(2 * width <= extent, ErrorKind::invalid_argument,
            "corner width exceeds half the extent");
    std::vector<IndexRange> out{{0, width}};
    if (extent - width > width) out.push_back({width, extent - width});
    out.push_back({extent - width, extent});
    return out;
}

std::vector<IndexRange> split_ranges(std::size_t extent, std::size_t split) {
    require(split <= extent, ErrorKind::invalid_argument, "split point exceeds the extent");
    std::vector<IndexRange> out;
    if (split > 0) out.push_back({0, split});
    if (split < extent) out.push_back({split, extent});
    return out;
}

BlockNormTable block_norms(const SparseTensor3& t, const std::vector<IndexRange>& rows,
                           const std::vector<IndexRange>& cols, std::optional<IndexRange> slices) {
    const auto& d = t.dims();
    check_ranges(rows, d[0], "row");
    check_ranges(cols, d[1], "column");
    const IndexRange k_range = slices.value_or(IndexRange{0, d[2]});
    check_ranges({k_range}, d[2], "slice");

    BlockNormTable table;
    table.rows = rows;
    table.cols = cols;
    table.slices = k_range;
    table.norms = Matrix::Zero(static_cast<Eigen::Index>(rows.size()),
                               static_cast<Eigen::Index>(cols.size()));
    const auto row_slot = range_lookup(rows, d[0]);
    const auto col_slot = range_lookup(cols, d[1]);
    for (std::size_t k = k_range.begin; k < k_range.end; ++k) {
        for (const Entry& e : t.slice(k)) {
            const long a = row_slot[e.i];
            const long b = col_slot[e.j];
            if (a >= 0 && b >= 0) table.norms(a, b) += e.value * e.value;
        }
    }
    table.total_norm = frobenius_norm(t);
    const double total_sq = table.total_norm * table.total_norm;
    table.mass_fraction = total_sq > 0.0 ? Matrix(table.norms / total_sq)
                                         : Matrix::Zero(table.norms.rows(), table.norms.cols());
    table.norms = table.norms.cwiseSqrt();
    table.covers_tensor = ranges_cover(rows, d[0]) && ranges_cover(cols, d[1]) &&
                          k_range.begin == 0 && k_range.end == d[2];
    return table;
}

double corner_norm_fraction(const BlockNormTable& corners) {
    require(corners.total_norm > 0.0, ErrorKind::numerical, "zero tensor has no corner fraction");
    const Eigen::Index r = corners.norms.rows();
    const Eigen::Index c = corners.norms.cols();
    require(r >= 2 && c >= 2, ErrorKind::invalid_argument, "corner table needs two row and column ranges");
    double sq = 0.0;
    for (Eigen::Index a : {Eigen::Index{0}, r - 1}) {
        for (Eigen::Index b : {Eigen::Index{0}, c - 1}) sq += corners.norms(a, b) * corners.norms(a, b);
    }
    return std::sqrt(sq) / corners.total_norm;
}

SignificanceRanking significance_ranking(const Vector& u1, const Vector& u2,
                                         const LabelTable& labels, std::size_t k,
                                         double insignificance_ratio, bool nonincreasing) {
    require(u1.size() == u2.size(), ErrorKind::dimension_mismatch,
            "u1 and u2 must have the same length");
    const auto n = static_cast<std::size_t>(u1.size());
    require(labels.size() == n, ErrorKind::dimension_mismatch,
            "label count does not match the factor length");
    require(k >= 1 && k <= n, ErrorKind::invalid_argument,
            "ranking size must lie between 1 and the extent");

    Matrix both(u1.size(), 2);
    both.col(0) = u1;
    both.col(1) = u2;
    const Reordering r = monotone_reorder(both, nonincreasing);
    const SplitPoint split = sign_change_split(r.u2, nonincreasing);

    SignificanceRanking out;
    out.beginning = ranked_slice(r.order, u1, u2, labels, 0, k);
    out.end = ranked_slice(r.order, u1, u2, labels, n - k, n);
    const std::size_t centre = std::min(split.index, n);
    std::size_t first = centre > k / 2 ? centre - k / 2 : 0;
    first = std::min(first, n - k);
    out.middle = ranked_slice(r.order, u1, u2, labels, first, first + k);

    const double peak = u1.cwiseAbs().maxCoeff();
    out.insignificance_cutoff = insignificance_ratio * peak;
    out.magnitude.resize(n);
    for (std::size_t p = 0; p < n; ++p) {
        out.magnitude[p] = std::abs(r.u1(static_cast<Eigen::Index>(p)));
        if (out.magnitude[p] < out.insignificance_cutoff) ++out.insignificant_count;
    }
    return out;
}

std::size_t PartitionReport::original_index(std::size_t mode_slot, std::size_t position) const {
    require(mode_slot < 3, ErrorKind::invalid_argument, "mode slot out of range");
    const std::size_t local = modes[mode_slot].order.at(position);
    const auto& source = source_indices[mode_slot];
    return source.empty() ? local : source.at(local);
}

PartitionResult partition_tensor(const SparseTensor3& t, const RankApproximation& approx,
                                 const PartitionOptions& opts, const ModeLabels& labels) {
    const auto& d = t.dims();
    require(static_cast<std::size_t>(approx.u.rows()) == d[0] &&
                static_cast<std::size_t>(approx.v.rows()) == d[1] &&
                static_cast<std::size_t>(approx.w.rows()) == d[2],
            ErrorKind::dimension_mismatch, "factor sizes do not match the tensor");
    require(approx.u.cols() >= 1 && approx.v.cols() >= 1 && approx.w.cols() >= 1,
            ErrorKind::invalid_argument, "factors must have at least one column");
    require(opts.corner_fraction > 0.0 && opts.corner_fraction <= 0.5,
            ErrorKind::invalid_argument, "corner fraction must lie in (0, 0.5]");
    for (std::size_t m = 0; m < 3; ++m) {
        if (labels[m]) {
            require(labels[m]->size() == d[m], ErrorKind::dimension_mismatch,
                    "label count does not match the extent of mode " + std::to_string(m + 1));
        }
    }

    PartitionReport report;
    report.symmetric = approx.symmetric;
    report.ranks = approx.ranks();
    report.objective = approx.objective();
    report.tensor_norm = approx.tensor_norm;

    report.modes[0] = partition_mode(approx.u, opts.nonincreasing);
    report.modes[1] = approx.symmetric ? report.modes[0] : partition_mode(approx.v, opts.nonincreasing);
    report.modes[2] = partition_mode(approx.w, opts.nonincreasing);

    SparseTensor3 reordered = t;
    const Mode all_modes[3] = {Mode::one, Mode::two, Mode::three};
    for (std::size_t m = 0; m < 3; ++m) {
        reordered = permute_mode(reordered, invert_permutation(report.modes[m].order), all_modes[m]);
    }

    const std::size_t w1 = default_corner_width(d[0], opts);
    const std::size_t w2 = default_corner_width(d[1], opts);
    if (d[0] >= 2 && d[1] >= 2) {
        report.corner_blocks =
            block_norms(reordered, corner_ranges(d[0], w1), corner_ranges(d[1], w2));
    } else {
        report.corner_blocks = block_norms(reordered, {{0, d[0]}}, {{0, d[1]}});
    }
    report.split_blocks = block_norms(reordered, split_ranges(d[0], report.modes[0].split.index),
                                      split_ranges(d[1], report.modes[1].split.index));

    const Matrix* factors[3] = {&approx.u, &approx.v, &approx.w};
    for (std::size_t m = 0; m < 3; ++m) {
        if (!labels[m] || factors[m]->cols() < 2) continue;
        const std::size_t k = std::min(opts.top_k, d[m]);
        if (k == 0) continue;
        report.rankings[m] = significance_ranking(factors[m]->col(0), factors[m]->col(1), *labels[m],
                                                  k, opts.insignificance_ratio, opts.nonincreasing);
    }
    return {std::move(report), std::move(reordered)};
}

PartitionReport restrict_and_recurse(const SparseTensor3& t, const std::array<IndexSet, 3>& subsets,
                                     const Ranks& ranks, const SolverConfig& cfg,
                                     const PartitionOptions& opts, const ModeLabels& labels) {
    for (const auto& s : subsets) {
        require(!s.empty(), ErrorKind::invalid_argument, "restriction index sets must be nonempty");
    }
    if (cfg.symmetric) {
        require(subsets[0] == subsets[1], ErrorKind::invalid_argument,
                "a symmetric restriction needs identical mode-1 and mode-2 index sets");
    }
    const SparseTensor3 sub = subtensor(t, subsets[0], subsets[1], subsets[2]);
    require(!sub.empty(), ErrorKind::numerical, "the restricted subtensor has no nonzeros");

    Ranks local = ranks;
    local.r1 = std::min(local.r1, subsets[0].size());
    local.r2 = std::min(local.r2, subsets[1].size());
    local.r3 = std::min(local.r3, subsets[2].size());
    if (cfg.symmetric) local.r1 = local.r2 = std::min(local.r1, local.r2);

    const RankApproximation approx = cfg.symmetric ? hooi_symmetric(sub, local, cfg) : hooi(sub, local, cfg);

    ModeLabels local_labels;
    for (std::size_t m = 0; m < 3; ++m) {
        if (labels[m]) local_labels[m] = labels[m]->select(subsets[m]);
    }
    PartitionReport report = partition_tensor(sub, approx, opts, local_labels).report;
    // Rankings carry subtensor-local indices; map them back to the full tensor.
    for (std::size_t m = 0; m < 3; ++m) {
        if (!report.rankings[m]) continue;
        for (auto* group : {&report.rankings[m]->beginning, &report.rankings[m]->middle,
                            &report.rankings[m]->end}) {
            for (auto& entry : *group) entry.index = subsets[m][entry.index];
        }
    }
    report.source_indices = subsets;
    return report;
}

}  // namespace tenspart
