#pragma once

// Report and artifact writers used by the command-line driver. Not part of the public API:
// the JSON type comes from the vendored single header.

#include <filesystem>
#include <string>

#include <json.hpp>

#include "tenspart/expansion.hpp"
#include "tenspart/lowrank.hpp"
#include "tenspart/partition.hpp"

namespace tenspart::report {

using Json = nlohmann::ordered_json;

/// Lowercase hex SHA-256 of the file contents.
std::string sha256_file(const std::filesystem::path& path);

/// Shortest decimal string that reads back to the same double.
std::string format_double(double v);

/// Finite doubles as numbers, NaN and infinities as null.
Json number(double v);
Json to_json(const Vector& v);
Json to_json(const Matrix& m);  // list of rows
Json to_json(const DenseTensor3& t);  // nested [i][j][k]
Json to_json(const BlockNormTable& table);
Json to_json(const SignificanceRanking& ranking);
Json to_json(const RankApproximation& approx);
Json to_json(const PartitionReport& rep);
Json to_json(const ExpansionTerm& term, double structure_margin);

void write_json(const std::filesystem::path& path, const Json& doc);

/// First line `# shape R C`, then one comma-separated row per line.
void write_matrix_csv(const std::filesystem::path& path, const Matrix& m);
/// One 1-based index per line: line p holds the original index placed at position p.
void write_permutation(const std::filesystem::path& path, const Permutation& order);
/// Header row, then one row per block with 1-based inclusive ranges.
void write_block_table(const std::filesystem::path& path, const BlockNormTable& table);
void write_ranking_csv(const std::filesystem::path& path, const SignificanceRanking& ranking);
/// `src dst weight` lines with labels resolved.
void write_edge_list(const std::filesystem::path& path, const Subgraph& graph);
/// Header `slice_index,value`, 1-based slice indices.
void write_profile_csv(const std::filesystem::path& path, const Vector& w);

}  // namespace tenspart::report
