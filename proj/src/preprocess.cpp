#include "tenspart/preprocess.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string_view>
#include <tuple>
#include <unordered_map>
#include <unordered_set>

namespace tenspart {

LabelTable LabelTable::select(const std::vector<std::size_t>& indices) const {
    std::vector<std::string> out;
    out.reserve(indices.size());
    for (std::size_t idx : indices) out.push_back(labels_.at(idx));
    return LabelTable(std::move(out));
}

LabelTable LabelTable::numbered(std::size_t n) {
    std::vector<std::string> out(n);
    for (std::size_t x = 0; x < n; ++x) out[x] = std::to_string(x + 1);
    return LabelTable(std::move(out));
}

namespace {

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::io, "cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(ErrorKind::io, "cannot write " + path.string());
    out << text;
    if (!out) fail(ErrorKind::io, "write failed for " + path.string());
}

std::vector<std::string_view> split_ws(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t p = 0;
    while (p < line.size()) {
        while (p < line.size() && std::isspace(static_cast<unsigned char>(line[p]))) ++p;
        std::size_t q = p;
        while (q < line.size() && !std::isspace(static_cast<unsigned char>(line[q]))) ++q;
        if (q > p) out.push_back(line.substr(p, q - p));
        p = q;
    }
    return out;
}

[[noreturn]] void parse_error(const std::string& source, std::size_t line_no, const std::string& msg) {
    fail(ErrorKind::parse, source + ":" + std::to_string(line_no) + ": " + msg);
}

std::size_t parse_index(std::string_view tok, const std::string& source, std::size_t line_no) {
    long long v = 0;
    auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc() || ptr != tok.data() + tok.size())
        parse_error(source, line_no, "malformed index '" + std::string(tok) + "'");
    if (v < 1) parse_error(source, line_no, "index " + std::string(tok) + " is below 1");
    return static_cast<std::size_t>(v);
}

double parse_value(std::string_view tok, const std::string& source, std::size_t line_no) {
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc() || ptr != tok.data() + tok.size() || !std::isfinite(v))
        parse_error(source, line_no, "non-numeric value '" + std::string(tok) + "'");
    return v;
}

std::string_view strip_comment(std::string_view line) {
    const auto hash = line.find('#');
    return hash == std::string_view::npos ? line : line.substr(0, hash);
}

std::string format_double(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, ptr);
}

}  // namespace

SparseTensor3 parse_coordinate_text(const std::string& text, std::optional<Dims> dims_override,
                                    const std::string& source_name) {
    std::vector<Entry> entries;
    std::optional<Dims> header;
    Dims max_idx{0, 0, 0};
    std::istringstream in(text);
    std::string raw;
    std::size_t line_no = 0;
    bool seen_data = false;
    while (std::getline(in, raw)) {
        ++line_no;
        const auto toks = split_ws(strip_comment(raw));
        if (toks.empty()) continue;
        if (toks[0] == "dims") {
            if (seen_data || header) parse_error(source_name, line_no, "dims line must come first");
            if (toks.size() != 4) parse_error(source_name, line_no, "expected 'dims l m n'");
            header = Dims{parse_index(toks[1], source_name, line_no),
                          parse_index(toks[2], source_name, line_no),
                          parse_index(toks[3], source_name, line_no)};
            continue;
        }
        seen_data = true;
        if (toks.size() != 4)
            parse_error(source_name, line_no,
                        "expected 4 fields 'i j k v', got " + std::to_string(toks.size()));
        Entry e;
        e.i = parse_index(toks[0], source_name, line_no) - 1;
        e.j = parse_index(toks[1], source_name, line_no) - 1;
        e.k = parse_index(toks[2], source_name, line_no) - 1;
        e.value = parse_value(toks[3], source_name, line_no);
        max_idx = {std::max(max_idx[0], e.i + 1), std::max(max_idx[1], e.j + 1),
                   std::max(max_idx[2], e.k + 1)};
        entries.push_back(e);
    }
    Dims dims = dims_override ? *dims_override : header ? *header : max_idx;
    for (std::size_t d = 0; d < 3; ++d) {
        require(max_idx[d] <= dims[d], ErrorKind::parse,
                source_name + ": index exceeds declared extent in mode " + std::to_string(d + 1));
    }
    require(dims[0] > 0 && dims[1] > 0 && dims[2] > 0, ErrorKind::parse,
            source_name + ": no entries and no dims line");
    return SparseTensor3(dims, std::move(entries));
}

SparseTensor3 load_coordinate_file(const std::filesystem::path& path,
                                   std::optional<Dims> dims_override) {
    return parse_coordinate_text(read_file(path), dims_override, path.string());
}

std::string format_coordinate_text(const SparseTensor3& t) {
    std::string out;
    out.reserve(32 * (t.nnz() + 1));
    const auto& d = t.dims();
    out += "dims " + std::to_string(d[0]) + " " + std::to_string(d[1]) + " " +
           std::to_string(d[2]) + "\n";
    for (const Entry& e : t.entries()) {
        out += std::to_string(e.i + 1);
        out += ' ';
        out += std::to_string(e.j + 1);
        out += ' ';
        out += std::to_string(e.k + 1);
        out += ' ';
        out += format_double(e.value);
        out += '\n';
    }
    return out;
}

void save_coordinate_file(const SparseTensor3& t, const std::filesystem::path& path) {
    write_file(path, format_coordinate_text(t));
}

LabelTable load_labels(const std::filesystem::path& path) {
    std::istringstream in(read_file(path));
    std::vector<std::string> labels;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        labels.push_back(line);
    }
    return LabelTable(std::move(labels));
}

void save_labels(const LabelTable& labels, const std::filesystem::path& path) {
    std::string out;
    for (const auto& l : labels.labels()) {
        out += l;
        out += '\n';
    }
    write_file(path, out);
}

RecordLog parse_record_log(const std::string& text, const std::string& source_name) {
    RecordLog log;
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    bool header = true;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos) continue;
        if (header) {
            header = false;
            continue;
        }
        std::vector<std::string> fields;
        std::size_t start = 0;
        while (true) {
            const auto comma = line.find(',', start);
            fields.push_back(line.substr(start, comma - start));
            if (comma == std::string::npos) break;
            start = comma + 1;
        }
        if (fields.size() != 3)
            parse_error(source_name, line_no,
                        "expected 3 fields 'source,destination,timestamp', got " +
                            std::to_string(fields.size()));
        if (fields[0].empty() || fields[1].empty())
            parse_error(source_name, line_no, "empty source or destination id");
        log.records.push_back({fields[0], fields[1], fields[2]});
    }
    return log;
}

RecordLog load_record_log(const std::filesystem::path& path) {
    return parse_record_log(read_file(path), path.string());
}

// ---------------------------------------------------------------------------

namespace {

void require_nonnegative(const SparseTensor3& t) {
    for (const Entry& e : t.entries())
        require(e.value >= 0.0, ErrorKind::invalid_argument,
                "normalization requires nonnegative entries");
}

double inv_sqrt_or_zero(double d) { return d > 0.0 ? 1.0 / std::sqrt(d) : 0.0; }

}  // namespace

SparseTensor3 normalize_slices_adjacency(const SparseTensor3& t, double symmetry_tol) {
    require_nonnegative(t);
    require(is_12_symmetric(t, symmetry_tol), ErrorKind::invalid_argument,
            "adjacency normalization requires (1,2)-symmetric slices");
    const std::size_t m = t.dims()[0];
    std::vector<Entry> out;
    out.reserve(t.nnz());
    std::vector<double> scale(m, 0.0);
    for (std::size_t k = 0; k < t.dims()[2]; ++k) {
        const auto s = t.slice(k);
        std::fill(scale.begin(), scale.end(), 0.0);
        for (const Entry& e : s) scale[e.i] += e.value;
        for (double& d : scale) d = inv_sqrt_or_zero(d);
        // Scale product first so that a_ij and a_ji are rounded identically.
        for (const Entry& e : s) out.push_back({e.i, e.j, e.k, e.value * (scale[e.i] * scale[e.j])});
    }
    return SparseTensor3(t.dims(), std::move(out));
}

SparseTensor3 normalize_slices_frobenius(const SparseTensor3& t, bool skip_empty) {
    std::vector<Entry> out;
    out.reserve(t.nnz());
    for (std::size_t k = 0; k < t.dims()[2]; ++k) {
        const auto s = t.slice(k);
        double ss = 0.0;
        for (const Entry& e : s) ss += e.value * e.value;
        if (ss == 0.0) {
            require(skip_empty, ErrorKind::invalid_argument,
                    "slice " + std::to_string(k + 1) + " is all zero");
            continue;
        }
        const double inv = 1.0 / std::sqrt(ss);
        for (const Entry& e : s) out.push_back({e.i, e.j, e.k, e.value * inv});
    }
    return SparseTensor3(t.dims(), std::move(out));
}

SparseTensor3 nonsymmetric_normalize(const SparseTensor3& t) {
    require_nonnegative(t);
    const auto [l, m, n] = t.dims();
    std::vector<double> row(l), col(m);
    std::vector<Entry> out;
    out.reserve(t.nnz());
    for (std::size_t k = 0; k < n; ++k) {
        const auto s = t.slice(k);
        std::fill(row.begin(), row.end(), 0.0);
        std::fill(col.begin(), col.end(), 0.0);
        for (const Entry& e : s) {
            row[e.i] += e.value;
            col[e.j] += e.value;
        }
        for (double& d : row) d = inv_sqrt_or_zero(d);
        for (double& d : col) d = inv_sqrt_or_zero(d);
        for (const Entry& e : s) out.push_back({e.i, e.j, e.k, row[e.i] * e.value * col[e.j]});
    }
    return SparseTensor3(t.dims(), std::move(out));
}

BinnedTensor bin_and_symmetrize(const RecordLog& log, std::size_t bin_size,
                                bool require_bidirectional) {
    require(bin_size >= 1, ErrorKind::invalid_argument, "bin size must be at least 1");
    require(!log.records.empty(), ErrorKind::invalid_argument, "record log is empty");

    std::unordered_set<std::string> senders, receivers;
    if (require_bidirectional) {
        for (const Record& r : log.records) {
            senders.insert(r.source);
            receivers.insert(r.destination);
        }
    }
    auto keep = [&](const std::string& id) {
        return !require_bidirectional || (senders.count(id) && receivers.count(id));
    };

    std::unordered_map<std::string, std::size_t> vocab;
    std::vector<std::string> names;
    auto id_of = [&](const std::string& s) {
        auto [it, inserted] = vocab.try_emplace(s, names.size());
        if (inserted) names.push_back(s);
        return it->second;
    };

    std::vector<Entry> entries;
    for (std::size_t r = 0; r < log.records.size(); ++r) {
        const Record& rec = log.records[r];
        if (!keep(rec.source) || !keep(rec.destination)) continue;
        const std::size_t a = id_of(rec.source);
        const std::size_t b = id_of(rec.destination);
        const std::size_t k = r / bin_size;
        entries.push_back({a, b, k, 1.0});
        if (a != b) entries.push_back({b, a, k, 1.0});
    }
    require(!names.empty(), ErrorKind::invalid_argument,
            "no records left after restricting to ids that both sent and received");
    // Indicator values: collapse repeats instead of summing them.
    std::sort(entries.begin(), entries.end(), [](const Entry& x, const Entry& y) {
        return std::tie(x.k, x.i, x.j) < std::tie(y.k, y.i, y.j);
    });
    entries.erase(std::unique(entries.begin(), entries.end(),
                              [](const Entry& x, const Entry& y) {
                                  return x.i == y.i && x.j == y.j && x.k == y.k;
                              }),
                  entries.end());
    const std::size_t bins = (log.records.size() + bin_size - 1) / bin_size;
    const std::size_t m = names.size();
    return {SparseTensor3({m, m, bins}, std::move(entries)), LabelTable(std::move(names))};
}

}  // namespace tenspart
