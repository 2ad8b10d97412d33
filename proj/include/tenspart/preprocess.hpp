#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "tenspart/tensor.hpp"

namespace tenspart {

/// Names for the indices of one mode; on disk line N holds the label of index N (1-based).
class LabelTable {
public:
    LabelTable() = default;
    explicit LabelTable(std::vector<std::string> labels) : labels_(std::move(labels)) {}

    std::size_t size() const { return labels_.size(); }
    const std::string& operator[](std::size_t idx) const { return labels_.at(idx); }
    const std::vector<std::string>& labels() const { return labels_; }

    /// Labels for a subset of indices, in the given order.
    LabelTable select(const std::vector<std::size_t>& indices) const;

    /// Integer labels "1".."n" for modes without a label file.
    static LabelTable numbered(std::size_t n);

    bool operator==(const LabelTable&) const = default;

private:
    std::vector<std::string> labels_;
};

struct Record {
    std::string source;
    std::string destination;
    std::string timestamp;
};

/// Communication records in file order.
struct RecordLog {
    std::vector<Record> records;
};

// ---------------------------------------------------------------------------
// File formats

/// Reads `i j k v` lines (1-based indices, `#` comments, optional leading `dims l m n`).
/// Without a dims line (or override) each extent is the largest index seen in that mode.
/// Duplicate coordinates are summed.
SparseTensor3 load_coordinate_file(const std::filesystem::path& path,
                                   std::optional<Dims> dims_override = std::nullopt);
SparseTensor3 parse_coordinate_text(const std::string& text,
                                    std::optional<Dims> dims_override = std::nullopt,
                                    const std::string& source_name = "<text>");

/// Canonical text form: a `dims` line, then entries in canonical order with values in
/// shortest round-trip representation.
std::string format_coordinate_text(const SparseTensor3& t);
void save_coordinate_file(const SparseTensor3& t, const std::filesystem::path& path);

LabelTable load_labels(const std::filesystem::path& path);
void save_labels(const LabelTable& labels, const std::filesystem::path& path);

/// CSV `source,destination,timestamp` with a header row.
RecordLog load_record_log(const std::filesystem::path& path);
RecordLog parse_record_log(const std::string& text, const std::string& source_name = "<text>");

// ---------------------------------------------------------------------------
// Normalization

/// Replaces each 3-slice A by D^{-1/2} A D^{-1/2}, d = A e. Requires a nonnegative
/// (1,2)-symmetric tensor; zero-degree rows stay zero.
SparseTensor3 normalize_slices_adjacency(const SparseTensor3& t, double symmetry_tol = 0.0);

/// Scales every nonempty 3-slice to unit Frobenius norm. Empty slices are an error
/// unless `skip_empty` is set, in which case they stay empty.
SparseTensor3 normalize_slices_frobenius(const SparseTensor3& t, bool skip_empty = false);

/// Replaces each 3-slice A by D_r^{-1/2} A D_c^{-1/2} with row degrees A e and column
/// degrees A^T e; same as normalizing the symmetric embedding and reading off its (1,2) block.
SparseTensor3 nonsymmetric_normalize(const SparseTensor3& t);

// ---------------------------------------------------------------------------
// Record binning

struct BinnedTensor {
    SparseTensor3 tensor;
    LabelTable vocabulary;
};

/// Groups every `bin_size` consecutive records into one 3-slice and sets
/// a_{ijk} = a_{jik} = 1 when i and j communicated (either direction) in bin k. With
/// `require_bidirectional`, only ids that both sent and received are kept.
BinnedTensor bin_and_symmetrize(const RecordLog& log, std::size_t bin_size,
                                bool require_bidirectional = false);

}  // namespace tenspart
