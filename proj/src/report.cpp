#include "report.hpp"

#include <openssl/evp.h>

#include <charconv>
#include <cmath>
#include <fstream>
#include <memory>

namespace tenspart::report {

namespace {

std::ofstream open_for_write(const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(ErrorKind::io, "cannot write " + path.string());
    return out;
}

void finish(std::ofstream& out, const std::filesystem::path& path) {
    out.flush();
    if (!out) fail(ErrorKind::io, "write failed for " + path.string());
}

Json ranges_json(const std::vector<IndexRange>& ranges) {
    Json out = Json::array();
    for (const auto& r : ranges) out.push_back({r.begin + 1, r.end});
    return out;
}

Json ranked_list(const std::vector<RankedLabel>& list) {
    Json out = Json::array();
    for (const auto& x : list)
        out.push_back({{"label", x.label}, {"index", x.index + 1}, {"key", number(x.key)},
                       {"magnitude", number(x.magnitude)}});
    return out;
}

}  // namespace

std::string sha256_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::io, "cannot open " + path.string());
    std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), &EVP_MD_CTX_free);
    if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1)
        fail(ErrorKind::io, "cannot initialize SHA-256");
    char buf[1 << 16];
    while (in) {
        in.read(buf, sizeof(buf));
        if (in.gcount() > 0) EVP_DigestUpdate(ctx.get(), buf, static_cast<std::size_t>(in.gcount()));
    }
    if (in.bad()) fail(ErrorKind::io, "read failed for " + path.string());
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx.get(), digest, &len);
    static const char* hex = "0123456789abcdef";
    std::string out;
    for (unsigned int x = 0; x < len; ++x) {
        out.push_back(hex[digest[x] >> 4]);
        out.push_back(hex[digest[x] & 0xF]);
    }
    return out;
}

std::string format_double(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, ptr);
}

Json number(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

Json to_json(const Vector& v) {
    Json out = Json::array();
    for (Eigen::Index x = 0; x < v.size(); ++x) out.push_back(number(v(x)));
    return out;
}

Json to_json(const Matrix& m) {
    Json out = Json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) out.push_back(to_json(Vector(m.row(r).transpose())));
    return out;
}

Json to_json(const DenseTensor3& t) {
    const auto& d = t.dims();
    Json out = Json::array();
    for (std::size_t i = 0; i < d[0]; ++i) {
        Json plane = Json::array();
        for (std::size_t j = 0; j < d[1]; ++j) {
            Json fiber = Json::array();
            for (std::size_t k = 0; k < d[2]; ++k) fiber.push_back(number(t(i, j, k)));
            plane.push_back(std::move(fiber));
        }
        out.push_back(std::move(plane));
    }
    return out;
}

Json to_json(const BlockNormTable& table) {
    return {{"rows", ranges_json(table.rows)},
            {"cols", ranges_json(table.cols)},
            {"slices", {table.slices.begin + 1, table.slices.end}},
            {"norms", to_json(table.norms)},
            {"mass_fraction", to_json(table.mass_fraction)},
            {"total_norm", number(table.total_norm)},
            {"covers_tensor", table.covers_tensor}};
}

Json to_json(const SignificanceRanking& ranking) {
    return {{"beginning", ranked_list(ranking.beginning)},
            {"middle", ranked_list(ranking.middle)},
            {"end", ranked_list(ranking.end)},
            {"insignificance_cutoff", number(ranking.insignificance_cutoff)},
            {"insignificant_count", ranking.insignificant_count}};
}

Json to_json(const RankApproximation& approx) {
    const Ranks r = approx.ranks();
    Json history = Json::array();
    for (double h : approx.objective_history) history.push_back(number(h));
    const double res = residual_norm(approx);
    return {{"ranks", {r.r1, r.r2, r.r3}},
            {"symmetric", approx.symmetric},
            {"tensor_norm", number(approx.tensor_norm)},
            {"objective", number(approx.objective())},
            {"residual_norm", number(res)},
            {"relative_residual", number(approx.tensor_norm > 0.0 ? res / approx.tensor_norm : 0.0)},
            {"iterations", approx.iterations},
            {"converged", approx.converged},
            {"rank_deficient", approx.rank_deficient},
            {"near_degenerate", approx.near_degenerate},
            {"objective_history", std::move(history)},
            {"core", to_json(approx.core)}};
}

Json to_json(const PartitionReport& rep) {
    Json modes = Json::array();
    for (std::size_t d = 0; d < 3; ++d) {
        const ModePartition& mp = rep.modes[d];
        Json order = Json::array();
        for (std::size_t p = 0; p < mp.order.size(); ++p) order.push_back(rep.original_index(d, p) + 1);
        Json mode = {{"mode", d + 1},
                     {"permutation", std::move(order)},
                     {"split_point", mp.split.index},
                     {"has_sign_change", mp.split.has_split},
                     {"insignificance_scores", to_json(Vector(mp.lead.cwiseAbs()))}};
        if (rep.rankings[d]) mode["top_terms"] = to_json(*rep.rankings[d]);
        modes.push_back(std::move(mode));
    }
    return {{"symmetric", rep.symmetric},
            {"ranks", {rep.ranks.r1, rep.ranks.r2, rep.ranks.r3}},
            {"objective", number(rep.objective)},
            {"tensor_norm", number(rep.tensor_norm)},
            {"corner_blocks", to_json(rep.corner_blocks)},
            {"corner_mass_fraction", number(corner_norm_fraction(rep.corner_blocks))},
            {"split_blocks", to_json(rep.split_blocks)},
            {"modes", std::move(modes)}};
}

Json to_json(const ExpansionTerm& term, double structure_margin) {
    return {{"lambda1", number(term.lambda1)},
            {"lambda2", number(term.lambda2)},
            {"structured", term.structured},
            {"structure_margin", number(structure_margin)},
            {"core_norm", number(term.core_norm)},
            {"b_raw_norm", number(term.raw_norm)},
            {"b_raw_max", number(term.raw_max)},
            {"b_raw_min", number(term.raw_min)},
            {"cutoff", number(term.cutoff)},
            {"b_hat_norm", number(term.b_hat_norm)},
            {"b_hat_nonzeros", term.b_hat.nonZeros()},
            {"w", to_json(term.w)},
            {"w_has_negative", term.w_has_negative},
            {"core", to_json(term.core)},
            {"iterations", term.iterations},
            {"converged", term.converged},
            {"rank_deficient", term.rank_deficient},
            {"near_degenerate", term.near_degenerate}};
}

void write_json(const std::filesystem::path& path, const Json& doc) {
    auto out = open_for_write(path);
    out << doc.dump(2) << '\n';
    finish(out, path);
}

void write_matrix_csv(const std::filesystem::path& path, const Matrix& m) {
    auto out = open_for_write(path);
    out << "# shape " << m.rows() << ' ' << m.cols() << '\n';
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) out << (c ? "," : "") << format_double(m(r, c));
        out << '\n';
    }
    finish(out, path);
}

void write_permutation(const std::filesystem::path& path, const Permutation& order) {
    auto out = open_for_write(path);
    for (std::size_t idx : order) out << idx + 1 << '\n';
    finish(out, path);
}

void write_block_table(const std::filesystem::path& path, const BlockNormTable& table) {
    auto out = open_for_write(path);
    out << "row_first,row_last,col_first,col_last,norm,mass_fraction\n";
    for (std::size_t a = 0; a < table.rows.size(); ++a)
        for (std::size_t b = 0; b < table.cols.size(); ++b) {
            const auto ai = static_cast<Eigen::Index>(a), bi = static_cast<Eigen::Index>(b);
            out << table.rows[a].begin + 1 << ',' << table.rows[a].end << ',' << table.cols[b].begin + 1 << ','
                << table.cols[b].end << ',' << format_double(table.norms(ai, bi)) << ','
                << format_double(table.mass_fraction(ai, bi)) << '\n';
        }
    finish(out, path);
}

void write_ranking_csv(const std::filesystem::path& path, const SignificanceRanking& ranking) {
    auto out = open_for_write(path);
    out << "section,rank,label,index,key,magnitude\n";
    const auto section = [&](const char* name, const std::vector<RankedLabel>& list) {
        for (std::size_t r = 0; r < list.size(); ++r) {
            // Labels may contain commas; quote them CSV-style.
            std::string label = list[r].label;
            if (label.find_first_of(",\"") != std::string::npos) {
                std::string q = "\"";
                for (char c : label) q += c == '"' ? std::string("\"\"") : std::string(1, c);
                label = q + "\"";
            }
            out << name << ',' << r + 1 << ',' << label << ',' << list[r].index + 1 << ','
                << format_double(list[r].key) << ',' << format_double(list[r].magnitude) << '\n';
        }
    };
    section("beginning", ranking.beginning);
    section("middle", ranking.middle);
    section("end", ranking.end);
    finish(out, path);
}

void write_edge_list(const std::filesystem::path& path, const Subgraph& graph) {
    auto out = open_for_write(path);
    for (const auto& e : graph.edges)
        out << e.source_label << ' ' << e.destination_label << ' ' << format_double(e.weight) << '\n';
    finish(out, path);
}

void write_profile_csv(const std::filesystem::path& path, const Vector& w) {
    auto out = open_for_write(path);
    out << "slice_index,value\n";
    for (Eigen::Index k = 0; k < w.size(); ++k) out << k + 1 << ',' << format_double(w(k)) << '\n';
    finish(out, path);
}

}  // namespace tenspart::report
