#include "tenspart/cli.hpp"

#include <CLI11.hpp>

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include "report.hpp"
#include "tenspart/expansion.hpp"
#include "tenspart/partition.hpp"
#include "tenspart/preprocess.hpp"

namespace tenspart {

namespace {

namespace fs = std::filesystem;
using report::Json;

// Everything a run depends on. Serialized into every report.
struct RunConfig {
    std::string subcommand;
    std::string input;
    std::string format = "tns";
    std::size_t bin_size = 1;
    bool bidirectional = false;
    std::array<std::string, 3> labels;
    std::string normalize = "none";
    bool skip_empty = false;
    std::vector<std::size_t> ranks{2, 2, 2};
    bool symmetric = false;
    bool via_embedding = false;
    double tol = 1e-8;
    int max_iter = 200;
    std::uint64_t seed = 0;
    int restarts = 1;
    std::optional<std::size_t> corner_width;
    double corner_fraction = 0.1;
    std::size_t top_k = 25;
    std::string recurse;
    std::size_t terms = 1;
    std::optional<double> theta;
    std::string threshold_mode = "positive";
    double structure_margin = 0.05;
    std::string out = ".";
    unsigned threads = 1;
};

Json config_json(const RunConfig& c) {
    Json j = {{"subcommand", c.subcommand}, {"input", c.input}};
    if (c.subcommand == "ingest") {
        j["format"] = c.format;
        j["bin_size"] = c.bin_size;
        j["bidirectional"] = c.bidirectional;
    } else {
        j["normalize"] = c.normalize;
        j["skip_empty"] = c.skip_empty;
        j["labels"] = c.labels;
    }
    if (c.subcommand == "approx" || c.subcommand == "partition" || c.subcommand == "expand") {
        j["ranks"] = c.subcommand == "expand" ? std::vector<std::size_t>{2, 2, 1} : c.ranks;
        j["symmetric"] = c.symmetric || c.subcommand == "expand";
        j["via_embedding"] = c.via_embedding;
        j["tol"] = c.tol;
        j["max_iter"] = c.max_iter;
        j["seed"] = c.seed;
        j["restarts"] = c.restarts;
        j["threads"] = c.threads;
    }
    if (c.subcommand == "partition") {
        j["corner_width"] = c.corner_width ? Json(*c.corner_width) : Json(nullptr);
        j["corner_fraction"] = c.corner_fraction;
        j["top_k"] = c.top_k;
        j["recurse"] = c.recurse;
    }
    if (c.subcommand == "expand") {
        j["terms"] = c.terms;
        j["theta"] = c.theta ? Json(*c.theta) : Json(nullptr);
        j["threshold_mode"] = c.threshold_mode;
        j["structure_margin"] = c.structure_margin;
    }
    j["out"] = c.out;
    return j;
}

Json inputs_json(const RunConfig& c) {
    Json files = Json::array();
    const auto add = [&](const std::string& role, const std::string& path) {
        if (!path.empty()) files.push_back({{"role", role}, {"path", path}, {"sha256", report::sha256_file(path)}});
    };
    add("input", c.input);
    add("labels1", c.labels[0]);
    add("labels2", c.labels[1]);
    add("labels3", c.labels[2]);
    add("recurse", c.recurse);
    return files;
}

Json base_report(const RunConfig& c) { return {{"config", config_json(c)}, {"inputs", inputs_json(c)}}; }

Json dims_json(const SparseTensor3& t) {
    return {{"dims", {t.dims()[0], t.dims()[1], t.dims()[2]}}, {"nnz", t.nnz()}, {"norm", report::number(frobenius_norm(t))}};
}

SparseTensor3 apply_normalization(const SparseTensor3& t, const RunConfig& c) {
    if (c.normalize == "adjacency") return normalize_slices_adjacency(t);
    if (c.normalize == "frobenius") return normalize_slices_frobenius(t, c.skip_empty);
    if (c.normalize == "nonsymmetric") return nonsymmetric_normalize(t);
    return t;
}

SolverConfig solver_config(const RunConfig& c) {
    SolverConfig s;
    s.rel_tol = c.tol;
    s.max_iters = c.max_iter;
    s.seed = c.seed;
    s.num_restarts = c.restarts;
    s.symmetric = c.symmetric;
    s.threads = c.threads;
    return s;
}

Ranks ranks_of(const RunConfig& c) { return {c.ranks[0], c.ranks[1], c.ranks[2]}; }

ModeLabels load_mode_labels(const RunConfig& c, const SparseTensor3& t, bool share_first) {
    ModeLabels out;
    for (std::size_t d = 0; d < 3; ++d) {
        if (c.labels[d].empty()) continue;
        out[d] = load_labels(c.labels[d]);
        require(out[d]->size() == t.dims()[d], ErrorKind::dimension_mismatch,
                "label file " + c.labels[d] + " has " + std::to_string(out[d]->size()) + " labels but mode " +
                    std::to_string(d + 1) + " has extent " + std::to_string(t.dims()[d]));
    }
    if (share_first && out[0] && !out[1]) out[1] = out[0];
    return out;
}

void check_symmetric_input(const SparseTensor3& t) {
    require(t.dims()[0] == t.dims()[1], ErrorKind::invalid_argument,
            "--symmetric needs square 3-slices, got " + std::to_string(t.dims()[0]) + " x " +
                std::to_string(t.dims()[1]));
    require(is_12_symmetric(t, 1e-12 * frobenius_norm(t)), ErrorKind::invalid_argument,
            "--symmetric given but the 3-slices of the input are not symmetric");
}

RankApproximation approximate(const SparseTensor3& t, const RunConfig& c) {
    const SolverConfig s = solver_config(c);
    if (c.symmetric) {
        check_symmetric_input(t);
        return hooi_symmetric(t, ranks_of(c), s);
    }
    return c.via_embedding ? approx_nonsymmetric_via_embedding(t, ranks_of(c), s) : hooi(t, ranks_of(c), s);
}

void prepare_out(const RunConfig& c) {
    std::error_code ec;
    fs::create_directories(c.out, ec);
    if (ec) fail(ErrorKind::io, "cannot create output directory " + c.out + ": " + ec.message());
}

// Lines `<mode> <first> <last>` (1-based, inclusive); modes without a line keep every index.
std::array<IndexSet, 3> read_recursion_ranges(const std::string& path, const Dims& dims, bool symmetric) {
    std::ifstream in(path);
    if (!in) fail(ErrorKind::io, "cannot open " + path);
    std::array<std::vector<bool>, 3> chosen;
    std::array<bool, 3> given{false, false, false};
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        std::istringstream ls(line);
        long long mode = 0, first = 0, last = 0;
        if (!(ls >> mode)) continue;
        std::string extra;
        if (!(ls >> first >> last) || (ls >> extra))
            fail(ErrorKind::parse, path + ":" + std::to_string(lineno) + ": expected `<mode> <first> <last>`");
        if (mode < 1 || mode > 3)
            fail(ErrorKind::parse, path + ":" + std::to_string(lineno) + ": mode must be 1, 2 or 3");
        const auto d = static_cast<std::size_t>(mode - 1);
        if (first < 1 || last < first || static_cast<std::size_t>(last) > dims[d])
            fail(ErrorKind::parse, path + ":" + std::to_string(lineno) + ": range " + std::to_string(first) + ".." +
                                       std::to_string(last) + " outside 1.." + std::to_string(dims[d]));
        if (!given[d]) chosen[d].assign(dims[d], false);
        given[d] = true;
        for (auto x = first; x <= last; ++x) chosen[d][static_cast<std::size_t>(x - 1)] = true;
    }
    if (symmetric && given[0] && !given[1]) {
        chosen[1] = chosen[0];
        given[1] = true;
    }
    std::array<IndexSet, 3> out;
    for (std::size_t d = 0; d < 3; ++d) {
        if (!given[d]) {
            out[d] = full_index_set(dims[d]);
            continue;
        }
        for (std::size_t x = 0; x < dims[d]; ++x)
            if (chosen[d][x]) out[d].push_back(x);
    }
    return out;
}

void write_partition_files(const fs::path& dir, const PartitionReport& rep) {
    for (std::size_t d = 0; d < 3; ++d) {
        Permutation order(rep.modes[d].order.size());
        for (std::size_t p = 0; p < order.size(); ++p) order[p] = rep.original_index(d, p);
        report::write_permutation(dir / ("mode" + std::to_string(d + 1) + "_perm.txt"), order);
        if (rep.rankings[d])
            report::write_ranking_csv(dir / ("top_terms_mode" + std::to_string(d + 1) + ".csv"), *rep.rankings[d]);
    }
    report::write_block_table(dir / "corner_blocks.csv", rep.corner_blocks);
    report::write_block_table(dir / "split_blocks.csv", rep.split_blocks);
}

int not_converged(std::ostream& err, int iterations) {
    err << "warning: solver did not converge within " << iterations << " iterations; results written\n";
    return exit_not_converged;
}

// ---------------------------------------------------------------------------

int cmd_ingest(const RunConfig& c, std::ostream& out) {
    prepare_out(c);
    const fs::path dir(c.out);
    Json rep = base_report(c);
    SparseTensor3 t;
    if (c.format == "tns") {
        t = load_coordinate_file(c.input);
    } else {
        require(c.bin_size >= 1, ErrorKind::invalid_argument, "--bin-size must be at least 1");
        const BinnedTensor b = bin_and_symmetrize(load_record_log(c.input), c.bin_size, c.bidirectional);
        t = b.tensor;
        save_labels(b.vocabulary, dir / "labels.txt");
        rep["labels_file"] = "labels.txt";
    }
    save_coordinate_file(t, dir / "tensor.tns");
    rep["tensor_file"] = "tensor.tns";
    rep["tensor"] = dims_json(t);
    report::write_json(dir / "ingest.json", rep);
    out << "dims " << t.dims()[0] << ' ' << t.dims()[1] << ' ' << t.dims()[2] << ", nnz " << t.nnz() << '\n';
    return exit_ok;
}

int cmd_normalize(const RunConfig& c, std::ostream& out) {
    const SparseTensor3 raw = load_coordinate_file(c.input);
    const SparseTensor3 t = apply_normalization(raw, c);
    prepare_out(c);
    const fs::path dir(c.out);
    save_coordinate_file(t, dir / "normalized.tns");
    Json rep = base_report(c);
    rep["before"] = dims_json(raw);
    rep["after"] = dims_json(t);
    rep["tensor_file"] = "normalized.tns";
    report::write_json(dir / "normalize.json", rep);
    out << "norm " << report::format_double(frobenius_norm(raw)) << " -> "
        << report::format_double(frobenius_norm(t)) << '\n';
    return exit_ok;
}

int cmd_approx(const RunConfig& c, std::ostream& out, std::ostream& err) {
    const SparseTensor3 t = apply_normalization(load_coordinate_file(c.input), c);
    const RankApproximation a = approximate(t, c);
    prepare_out(c);
    const fs::path dir(c.out);
    report::write_matrix_csv(dir / "U.csv", a.u);
    report::write_matrix_csv(dir / "V.csv", a.v);
    report::write_matrix_csv(dir / "W.csv", a.w);
    Json rep = base_report(c);
    rep["tensor"] = dims_json(t);
    rep["approximation"] = report::to_json(a);
    report::write_json(dir / "approx.json", rep);
    out << "objective " << report::format_double(a.objective()) << ", residual "
        << report::format_double(residual_norm(a)) << ", iterations " << a.iterations << '\n';
    return a.converged ? exit_ok : not_converged(err, a.iterations);
}

int cmd_partition(const RunConfig& c, std::ostream& out, std::ostream& err) {
    const SparseTensor3 t = apply_normalization(load_coordinate_file(c.input), c);
    const ModeLabels labels = load_mode_labels(c, t, c.symmetric);
    const RankApproximation a = approximate(t, c);
    PartitionOptions opts;
    opts.corner_fraction = c.corner_fraction;
    opts.corner_width = c.corner_width;
    opts.top_k = c.top_k;
    const PartitionResult res = partition_tensor(t, a, opts, labels);

    std::optional<PartitionReport> nested;
    if (!c.recurse.empty()) {
        const auto subsets = read_recursion_ranges(c.recurse, t.dims(), c.symmetric);
        nested = restrict_and_recurse(t, subsets, ranks_of(c), solver_config(c), opts, labels);
    }

    prepare_out(c);
    const fs::path dir(c.out);
    write_partition_files(dir, res.report);
    save_coordinate_file(res.reordered, dir / "reordered.tns");
    Json rep = base_report(c);
    rep["tensor"] = dims_json(t);
    rep["approximation"] = report::to_json(a);
    rep["partition"] = report::to_json(res.report);
    if (nested) {
        fs::create_directories(dir / "recurse");
        write_partition_files(dir / "recurse", *nested);
        rep["recursion"] = report::to_json(*nested);
    }
    report::write_json(dir / "partition.json", rep);

    const Matrix& f = res.report.split_blocks.mass_fraction;
    out << "objective " << report::format_double(a.objective()) << ", split at";
    for (const auto& m : res.report.modes) out << ' ' << m.split.index;
    out << ", diagonal mass " << report::format_double(f.trace()) << '\n';
    return a.converged ? exit_ok : not_converged(err, a.iterations);
}

int cmd_expand(const RunConfig& c, std::ostream& out, std::ostream& err) {
    require(c.theta.has_value(), ErrorKind::invalid_argument, "--theta is required for expand");
    const SparseTensor3 t = apply_normalization(load_coordinate_file(c.input), c);
    check_symmetric_input(t);
    const ModeLabels labels = load_mode_labels(c, t, true);

    ExpansionConfig e;
    e.terms = c.terms;
    e.theta = *c.theta;
    e.threshold_mode = c.threshold_mode == "absolute" ? ThresholdMode::absolute : ThresholdMode::positive;
    e.structure_margin = c.structure_margin;
    e.solver = solver_config(c);
    e.solver.symmetric = true;
    const ExpansionResult res = expand(t, e);

    prepare_out(c);
    const fs::path dir(c.out);
    const LabelTable names = labels[0] ? *labels[0] : LabelTable::numbered(t.dims()[0]);
    Json terms = Json::array();
    bool any_empty = false;
    for (std::size_t nu = 0; nu < res.terms.size(); ++nu) {
        const ExpansionTerm& term = res.terms[nu];
        const std::string stem = "term" + std::to_string(nu + 1);
        report::write_edge_list(dir / (stem + "_edges.txt"), subgraph_export(term, names));
        report::write_profile_csv(dir / (stem + "_w.csv"), term.w);
        Json j = report::to_json(term, e.structure_margin);
        j["edges_file"] = stem + "_edges.txt";
        j["w_file"] = stem + "_w.csv";
        j["residual_norm_after"] = report::number(res.residual_norms[nu + 1]);
        terms.push_back(std::move(j));
        if (term.b_hat.nonZeros() == 0) {
            any_empty = true;
            err << "warning: term " << nu + 1 << " has an empty thresholded B at theta "
                << report::format_double(e.theta) << "\n";
        }
    }
    Json rep = base_report(c);
    rep["tensor"] = dims_json(t);
    rep["terms"] = std::move(terms);
    rep["residual_norms"] = res.residual_norms;
    rep["final_residual_norm"] = report::number(res.residual_norms.back());
    if (res.terms.size() < c.terms) rep["stopped_early"] = "residual is zero";
    rep["overlap_cosines"] = any_empty || res.terms.empty() ? Json(nullptr) : report::to_json(overlap_cosines(res.terms));
    report::write_json(dir / "expand.json", rep);

    out << "terms " << res.terms.size() << ", residual norm " << report::format_double(res.residual_norms.back());
    for (std::size_t nu = 0; nu < res.terms.size(); ++nu)
        out << "\nterm " << nu + 1 << ": lambda " << report::format_double(res.terms[nu].lambda1) << ' '
            << report::format_double(res.terms[nu].lambda2) << (res.terms[nu].structured ? " (structured)" : "");
    out << '\n';
    if (!res.all_converged) {
        int worst = 0;
        for (const auto& term : res.terms) worst = std::max(worst, term.iterations);
        return not_converged(err, worst);
    }
    return exit_ok;
}

unsigned threads_from_env() {
    const char* raw = std::getenv("TENSPART_THREADS");
    if (raw == nullptr || *raw == '\0') return 1;
    unsigned v = 0;
    const char* end = raw + std::char_traits<char>::length(raw);
    auto [ptr, ec] = std::from_chars(raw, end, v);
    require(ec == std::errc() && ptr == end && v >= 1, ErrorKind::invalid_argument,
            std::string("TENSPART_THREADS must be a positive integer, got '") + raw + "'");
    return v;
}

void add_input(CLI::App* sub, RunConfig& c) {
    sub->add_option("--input,-i", c.input, "Input file")->required()->check(CLI::ExistingFile);
}

void add_normalize(CLI::App* sub, RunConfig& c) {
    sub->add_option("--normalize", c.normalize, "Slice normalization")
        ->check(CLI::IsMember({"adjacency", "frobenius", "nonsymmetric", "none"}));
    sub->add_flag("--skip-empty", c.skip_empty, "Leave empty slices alone under frobenius normalization");
}

void add_labels(CLI::App* sub, RunConfig& c) {
    sub->add_option("--labels", c.labels[0], "Labels for mode 1 (and mode 2 of symmetric tensors)")
        ->check(CLI::ExistingFile);
    sub->add_option("--labels2", c.labels[1], "Labels for mode 2")->check(CLI::ExistingFile);
    sub->add_option("--labels3", c.labels[2], "Labels for mode 3")->check(CLI::ExistingFile);
}

void add_solver(CLI::App* sub, RunConfig& c, bool with_ranks) {
    if (with_ranks) {
        sub->add_option("--rank", c.ranks, "Ranks R1 R2 R3")->expected(3);
        sub->add_flag("--symmetric", c.symmetric, "Share one factor between modes 1 and 2");
        sub->add_flag("--via-embedding", c.via_embedding, "Solve a general tensor through its symmetric embedding");
    }
    sub->add_option("--tol", c.tol, "Relative objective change that stops the iteration")
        ->check(CLI::PositiveNumber);
    sub->add_option("--max-iter", c.max_iter, "Iteration limit")->check(CLI::PositiveNumber);
    sub->add_option("--seed", c.seed, "Seed for restarts and iterative eigensolvers");
    sub->add_option("--restarts", c.restarts, "Number of solver starts (HOSVD plus random)")
        ->check(CLI::PositiveNumber);
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    RunConfig c;
    CLI::App app{"Sparse tensor partitioning and rank-(2,2,1) expansion", "tenspart"};
    app.require_subcommand(1);
    app.add_option("--out,-o", c.out, "Output directory");

    auto* ingest = app.add_subcommand("ingest", "Convert input data into a canonical coordinate file");
    add_input(ingest, c);
    ingest->add_option("--format", c.format, "Input format")->check(CLI::IsMember({"tns", "log-csv"}));
    ingest->add_option("--bin-size", c.bin_size, "Records per slice for log input")->check(CLI::PositiveNumber);
    ingest->add_flag("--bidirectional", c.bidirectional, "Keep only ids that both send and receive");

    auto* normalize = app.add_subcommand("normalize", "Normalize every 3-slice");
    add_input(normalize, c);
    add_normalize(normalize, c);

    auto* approx = app.add_subcommand("approx", "Best low multilinear rank approximation");
    add_input(approx, c);
    add_normalize(approx, c);
    add_solver(approx, c, true);

    auto* partition = app.add_subcommand("partition", "Reorder and partition by the factor matrices");
    add_input(partition, c);
    add_normalize(partition, c);
    add_labels(partition, c);
    add_solver(partition, c, true);
    partition->add_option("--corner-width", c.corner_width, "Corner block width")->check(CLI::PositiveNumber);
    partition->add_option("--corner-fraction", c.corner_fraction, "Corner block width as a fraction of the extent")
        ->check(CLI::Range(0.0, 0.5));
    partition->add_option("--top-k", c.top_k, "Labels listed at each end");
    partition->add_option("--recurse", c.recurse, "Index ranges (`<mode> <first> <last>` per line) to re-partition")
        ->check(CLI::ExistingFile);

    auto* expansion = app.add_subcommand("expand", "Rank-(2,2,1) expansion with thresholded terms");
    add_input(expansion, c);
    add_normalize(expansion, c);
    add_labels(expansion, c);
    add_solver(expansion, c, false);
    expansion->add_option("--terms,-q", c.terms, "Number of terms")->check(CLI::PositiveNumber);
    expansion->add_option("--theta", c.theta, "Threshold relative to the largest entry of B")->required();
    expansion->add_option("--threshold-mode", c.threshold_mode, "positive or absolute")
        ->check(CLI::IsMember({"positive", "absolute"}));
    expansion->add_option("--structure-margin", c.structure_margin, "Tolerance of the eigenvalue-pair test")
        ->check(CLI::NonNegativeNumber);

    for (auto* sub : {ingest, normalize, approx, partition, expansion}) sub->add_option("--out,-o", c.out, "Output directory");

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? exit_ok : exit_validation;
    }

    try {
        c.threads = threads_from_env();
        c.subcommand = app.get_subcommands().front()->get_name();
        if (c.subcommand == "ingest") return cmd_ingest(c, out);
        if (c.subcommand == "normalize") return cmd_normalize(c, out);
        if (c.subcommand == "approx") return cmd_approx(c, out, err);
        if (c.subcommand == "partition") return cmd_partition(c, out, err);
        return cmd_expand(c, out, err);
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return e.kind() == ErrorKind::io ? exit_io : exit_validation;
    } catch (const fs::filesystem_error& e) {
        err << "error: " << e.what() << '\n';
        return exit_io;
    }
}

}  // namespace tenspart
