#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "tenspart/lowrank.hpp"
#include "tenspart/preprocess.hpp"
#include "tenspart/tensor.hpp"

namespace tenspart {

/// Result of sorting a factor by its second column.
struct Reordering {
    // order[p] is the original index placed at position p.
    Permutation order;
    Vector u1;
    Vector u2;
};

/// Stable sort of column 2 of U (nonincreasing by default); requires at least two columns.
Reordering monotone_reorder(const Matrix& u, bool nonincreasing = true);

struct SplitPoint {
    std::size_t index = 0;
    bool has_split = false;
};

/// For a nonincreasing vector: the smallest s with v[s-1] >= 0 > v[s]. Without a sign
/// change the result is v.size() (all nonnegative) or 0 (all negative), unflagged. With
/// nonincreasing = false the roles of the signs are mirrored.
SplitPoint sign_change_split(const Vector& reordered, bool nonincreasing = true);

/// Half-open index range [begin, end).
struct IndexRange {
    std::size_t begin = 0;
    std::size_t end = 0;

    std::size_t size() const { return end - begin; }
    bool operator==(const IndexRange&) const = default;
};

/// [0,w), [w,n-w), [n-w,n); the middle range is dropped when empty.
std::vector<IndexRange> corner_ranges(std::size_t extent, std::size_t width);
/// [0,s), [s,n) with empty ranges dropped.
std::vector<IndexRange> split_ranges(std::size_t extent, std::size_t split);

struct BlockNormTable {
    std::vector<IndexRange> rows;
    std::vector<IndexRange> cols;
    IndexRange slices;
    // norms(a,b) = ||A(rows[a], cols[b], slices)||.
    Matrix norms;
    double total_norm = 0.0;
    // norms^2 / ||A||^2.
    Matrix mass_fraction;
    // True when the row and column ranges cover every index and all slices are included.
    bool covers_tensor = false;
};

BlockNormTable block_norms(const SparseTensor3& t, const std::vector<IndexRange>& rows,
                           const std::vector<IndexRange>& cols,
                           std::optional<IndexRange> slices = std::nullopt);

/// ||corner blocks|| / ||A|| for a 3x3 corner table: the four blocks that touch both ends.
double corner_norm_fraction(const BlockNormTable& corners);

struct RankedLabel {
    std::string label;
    std::size_t index = 0;  // original index
    double key = 0.0;       // reordering key (u2)
    double magnitude = 0.0; // |u1|
};

struct SignificanceRanking {
    std::vector<RankedLabel> beginning;
    std::vector<RankedLabel> middle;
    std::vector<RankedLabel> end;
    // |u1| in reordered order and the cutoff below which an index counts as insignificant.
    std::vector<double> magnitude;
    double insignificance_cutoff = 0.0;
    std::size_t insignificant_count = 0;
};

/// First k and last k labels after reordering by u2, plus k labels centered on the sign
/// change. u1, u2 and labels are given in original index order.
SignificanceRanking significance_ranking(const Vector& u1, const Vector& u2,
                                         const LabelTable& labels, std::size_t k,
                                         double insignificance_ratio = 1e-2,
                                         bool nonincreasing = true);

struct ModePartition {
    Permutation order;  // order[p] = original index at position p
    Vector lead;        // reordered first factor column
    Vector key;         // reordered key column (second column, or first if only one)
    SplitPoint split;
    std::vector<double> insignificance;  // |lead|
};

struct PartitionOptions {
    // Corner block width as a fraction of the extent, unless corner_width is set.
    double corner_fraction = 0.1;
    std::optional<std::size_t> corner_width;
    std::size_t top_k = 25;
    bool nonincreasing = true;
    double insignificance_ratio = 1e-2;
};

struct PartitionReport {
    std::array<ModePartition, 3> modes;
    bool symmetric = false;
    Ranks ranks;
    double objective = 0.0;
    double tensor_norm = 0.0;
    BlockNormTable corner_blocks;
    BlockNormTable split_blocks;
    std::array<std::optional<SignificanceRanking>, 3> rankings;
    // Original tensor indices of each mode when the report covers a restriction;
    // empty means the identity.
    std::array<IndexSet, 3> source_indices;

    /// Original index of position p in mode d (0-based mode slot).
    std::size_t original_index(std::size_t mode_slot, std::size_t position) const;
};

using ModeLabels = std::array<std::optional<LabelTable>, 3>;

struct PartitionResult {
    PartitionReport report;
    SparseTensor3 reordered;
};

/// Reorders every mode by its factor, applies the reorderings to T and tabulates block norms.
/// A symmetric approximation yields one shared ordering for modes 1 and 2.
PartitionResult partition_tensor(const SparseTensor3& t, const RankApproximation& approx,
                                 const PartitionOptions& opts = {},
                                 const ModeLabels& labels = {});

/// Extracts A(I,J,K), re-approximates it with `ranks` and partitions the result. Labels are
/// given for the full tensor and carried through the restriction.
PartitionReport restrict_and_recurse(const SparseTensor3& t, const std::array<IndexSet, 3>& subsets,
                                     const Ranks& ranks, const SolverConfig& cfg,
                                     const PartitionOptions& opts = {},
                                     const ModeLabels& labels = {});

}  // namespace tenspart
