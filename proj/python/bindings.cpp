#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "tenspart/expansion.hpp"
#include "tenspart/lowrank.hpp"
#include "tenspart/partition.hpp"
#include "tenspart/preprocess.hpp"
#include "tenspart/tensor.hpp"

namespace py = pybind11;
using namespace tenspart;

namespace {

using IndexArray = py::array_t<std::int64_t, py::array::c_style | py::array::forcecast>;
using ValueArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

SparseTensor3 make_tensor(const std::array<std::size_t, 3>& dims, const IndexArray& indices, const ValueArray& values) {
    const auto idx = indices.unchecked<2>();
    const auto val = values.unchecked<1>();
    if (idx.shape(1) != 3) throw py::value_error("indices must have shape (nnz, 3)");
    if (idx.shape(0) != val.shape(0)) throw py::value_error("indices and values differ in length");
    std::vector<Entry> es;
    es.reserve(static_cast<std::size_t>(val.shape(0)));
    for (py::ssize_t r = 0; r < idx.shape(0); ++r) {
        for (int d = 0; d < 3; ++d)
            if (idx(r, d) < 0) throw py::value_error("indices must be nonnegative");
        es.push_back({static_cast<std::size_t>(idx(r, 0)), static_cast<std::size_t>(idx(r, 1)),
                      static_cast<std::size_t>(idx(r, 2)), val(r)});
    }
    return SparseTensor3(dims, std::move(es));
}

py::array_t<double> dense_array(const DenseTensor3& t) {
    const auto& d = t.dims();
    py::array_t<double> out({d[0], d[1], d[2]});
    auto o = out.mutable_unchecked<3>();
    for (std::size_t i = 0; i < d[0]; ++i)
        for (std::size_t j = 0; j < d[1]; ++j)
            for (std::size_t k = 0; k < d[2]; ++k)
                o(static_cast<py::ssize_t>(i), static_cast<py::ssize_t>(j), static_cast<py::ssize_t>(k)) = t(i, j, k);
    return out;
}

Ranks to_ranks(const std::array<std::size_t, 3>& r) { return {r[0], r[1], r[2]}; }

SolverConfig solver(int max_iters, double tol, std::uint64_t seed, int restarts, unsigned threads) {
    SolverConfig cfg;
    cfg.max_iters = max_iters;
    cfg.rel_tol = tol;
    cfg.seed = seed;
    cfg.num_restarts = restarts;
    cfg.threads = threads;
    return cfg;
}

ModeLabels to_labels(const std::array<std::optional<std::vector<std::string>>, 3>& raw) {
    ModeLabels out;
    for (std::size_t d = 0; d < 3; ++d)
        if (raw[d]) out[d] = LabelTable(*raw[d]);
    return out;
}

}  // namespace

PYBIND11_MODULE(_tenspart, m) {
    m.doc() = "Sparse 3-tensor low-rank approximation, partitioning and rank-(2,2,1) expansion";

    py::register_exception<Error>(m, "TensorError", PyExc_ValueError);
    // Translators run newest first: I/O failures become OSError, the rest fall through.
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const Error& e) {
            if (e.kind() != ErrorKind::io) throw;
            PyErr_SetString(PyExc_OSError, e.what());
        }
    });

    py::class_<SparseTensor3>(m, "SparseTensor")
        .def(py::init(&make_tensor), py::arg("dims"), py::arg("indices"), py::arg("values"),
             "Build from 0-based (nnz, 3) indices and values; duplicates are summed.")
        .def_property_readonly("dims", &SparseTensor3::dims)
        .def_property_readonly("nnz", &SparseTensor3::nnz)
        .def_property_readonly("indices",
                               [](const SparseTensor3& t) {
                                   py::array_t<std::int64_t> out({static_cast<py::ssize_t>(t.nnz()), py::ssize_t{3}});
                                   auto o = out.mutable_unchecked<2>();
                                   py::ssize_t r = 0;
                                   for (const Entry& e : t.entries()) {
                                       o(r, 0) = static_cast<std::int64_t>(e.i);
                                       o(r, 1) = static_cast<std::int64_t>(e.j);
                                       o(r, 2) = static_cast<std::int64_t>(e.k);
                                       ++r;
                                   }
                                   return out;
                               })
        .def_property_readonly("values",
                               [](const SparseTensor3& t) {
                                   py::array_t<double> out(static_cast<py::ssize_t>(t.nnz()));
                                   auto o = out.mutable_unchecked<1>();
                                   py::ssize_t r = 0;
                                   for (const Entry& e : t.entries()) o(r++) = e.value;
                                   return out;
                               })
        .def("to_dense", [](const SparseTensor3& t) { return dense_array(to_dense(t)); })
        .def("at", &SparseTensor3::at, py::arg("i"), py::arg("j"), py::arg("k"))
        .def("norm", [](const SparseTensor3& t) { return frobenius_norm(t); })
        .def("is_12_symmetric", [](const SparseTensor3& t, double tol) { return is_12_symmetric(t, tol); },
             py::arg("tol") = 0.0)
        .def("__eq__", [](const SparseTensor3& a, const SparseTensor3& b) { return a == b; })
        .def("__repr__", [](const SparseTensor3& t) {
            return "SparseTensor(dims=(" + std::to_string(t.dims()[0]) + ", " + std::to_string(t.dims()[1]) + ", " +
                   std::to_string(t.dims()[2]) + "), nnz=" + std::to_string(t.nnz()) + ")";
        });

    m.def("load_coordinate_file", [](const std::filesystem::path& p) { return load_coordinate_file(p); },
          py::arg("path"));
    m.def("save_coordinate_file", &save_coordinate_file, py::arg("tensor"), py::arg("path"));
    m.def("normalize_slices_adjacency", &normalize_slices_adjacency, py::arg("tensor"), py::arg("symmetry_tol") = 0.0);
    m.def("normalize_slices_frobenius", &normalize_slices_frobenius, py::arg("tensor"), py::arg("skip_empty") = false);
    m.def("nonsymmetric_normalize", &nonsymmetric_normalize, py::arg("tensor"));
    m.def("symmetric_embed", &symmetric_embed, py::arg("tensor"));
    m.def("mode_multiply",
          [](const SparseTensor3& t, const Matrix& mat, int mode) {
              return dense_array(mode_multiply_dense(t, mat, mode_from_int(mode)));
          },
          py::arg("tensor"), py::arg("matrix"), py::arg("mode"));
    m.def("multi_multiply",
          [](const SparseTensor3& t, const Matrix& x, const Matrix& y, const Matrix& z) {
              return dense_array(multi_multiply(t, x, y, z));
          },
          py::arg("tensor"), py::arg("x"), py::arg("y"), py::arg("z"),
          "A.(X,Y,Z): contracts mode d with the columns of the d-th matrix.");

    py::class_<RankApproximation>(m, "RankApproximation")
        .def_readonly("u", &RankApproximation::u)
        .def_readonly("v", &RankApproximation::v)
        .def_readonly("w", &RankApproximation::w)
        .def_property_readonly("core", [](const RankApproximation& a) { return dense_array(a.core); })
        .def_readonly("objective_history", &RankApproximation::objective_history)
        .def_property_readonly("objective", &RankApproximation::objective)
        .def_readonly("iterations", &RankApproximation::iterations)
        .def_readonly("converged", &RankApproximation::converged)
        .def_readonly("rank_deficient", &RankApproximation::rank_deficient)
        .def_readonly("near_degenerate", &RankApproximation::near_degenerate)
        .def_readonly("symmetric", &RankApproximation::symmetric)
        .def_readonly("tensor_norm", &RankApproximation::tensor_norm)
        .def_property_readonly("residual_norm", &residual_norm);

    m.def(
        "approximate",
        [](const SparseTensor3& t, const std::array<std::size_t, 3>& ranks, bool symmetric, bool via_embedding,
           int max_iters, double tol, std::uint64_t seed, int restarts, unsigned threads) {
            SolverConfig cfg = solver(max_iters, tol, seed, restarts, threads);
            cfg.symmetric = symmetric;
            if (symmetric) return hooi_symmetric(t, to_ranks(ranks), cfg);
            if (via_embedding) return approx_nonsymmetric_via_embedding(t, to_ranks(ranks), cfg);
            return hooi(t, to_ranks(ranks), cfg);
        },
        py::arg("tensor"), py::arg("ranks"), py::arg("symmetric") = false, py::arg("via_embedding") = false,
        py::arg("max_iters") = 200, py::arg("tol") = 1e-8, py::arg("seed") = 0, py::arg("restarts") = 1,
        py::arg("threads") = 1, "Best rank-(r1,r2,r3) approximation by higher-order orthogonal iteration.");

    py::class_<IndexRange>(m, "IndexRange")
        .def_readonly("begin", &IndexRange::begin)
        .def_readonly("end", &IndexRange::end)
        .def("__repr__", [](const IndexRange& r) {
            return "IndexRange(" + std::to_string(r.begin) + ", " + std::to_string(r.end) + ")";
        });

    py::class_<BlockNormTable>(m, "BlockNormTable")
        .def_readonly("rows", &BlockNormTable::rows)
        .def_readonly("cols", &BlockNormTable::cols)
        .def_readonly("norms", &BlockNormTable::norms)
        .def_readonly("mass_fraction", &BlockNormTable::mass_fraction)
        .def_readonly("total_norm", &BlockNormTable::total_norm)
        .def_readonly("covers_tensor", &BlockNormTable::covers_tensor);

    py::class_<RankedLabel>(m, "RankedLabel")
        .def_readonly("label", &RankedLabel::label)
        .def_readonly("index", &RankedLabel::index)
        .def_readonly("key", &RankedLabel::key)
        .def_readonly("magnitude", &RankedLabel::magnitude);

    py::class_<SignificanceRanking>(m, "SignificanceRanking")
        .def_readonly("beginning", &SignificanceRanking::beginning)
        .def_readonly("middle", &SignificanceRanking::middle)
        .def_readonly("end", &SignificanceRanking::end)
        .def_readonly("insignificance_cutoff", &SignificanceRanking::insignificance_cutoff)
        .def_readonly("insignificant_count", &SignificanceRanking::insignificant_count);

    py::class_<PartitionReport>(m, "PartitionReport")
        .def_property_readonly("orders",
                               [](const PartitionReport& r) {
                                   std::array<Permutation, 3> out;
                                   for (std::size_t d = 0; d < 3; ++d)
                                       for (std::size_t p = 0; p < r.modes[d].order.size(); ++p)
                                           out[d].push_back(r.original_index(d, p));
                                   return out;
                               })
        .def_property_readonly("splits",
                               [](const PartitionReport& r) {
                                   return std::array<std::size_t, 3>{r.modes[0].split.index, r.modes[1].split.index,
                                                                     r.modes[2].split.index};
                               })
        .def_readonly("symmetric", &PartitionReport::symmetric)
        .def_readonly("objective", &PartitionReport::objective)
        .def_readonly("tensor_norm", &PartitionReport::tensor_norm)
        .def_readonly("corner_blocks", &PartitionReport::corner_blocks)
        .def_readonly("split_blocks", &PartitionReport::split_blocks)
        .def_readonly("rankings", &PartitionReport::rankings)
        .def_property_readonly("corner_mass_fraction",
                               [](const PartitionReport& r) { return corner_norm_fraction(r.corner_blocks); });

    m.def(
        "partition",
        [](const SparseTensor3& t, const RankApproximation& a, std::optional<std::size_t> corner_width,
           std::size_t top_k, const std::array<std::optional<std::vector<std::string>>, 3>& labels) {
            PartitionOptions opts;
            opts.corner_width = corner_width;
            opts.top_k = top_k;
            PartitionResult res = partition_tensor(t, a, opts, to_labels(labels));
            return py::make_tuple(res.report, res.reordered);
        },
        py::arg("tensor"), py::arg("approximation"), py::arg("corner_width") = py::none(), py::arg("top_k") = 25,
        py::arg("labels") = std::array<std::optional<std::vector<std::string>>, 3>{},
        "Reorder every mode by its factor; returns (report, reordered tensor).");

    m.def("block_norms",
          [](const SparseTensor3& t, const std::vector<std::pair<std::size_t, std::size_t>>& rows,
             const std::vector<std::pair<std::size_t, std::size_t>>& cols) {
              std::vector<IndexRange> r, c;
              for (auto [b, e] : rows) r.push_back({b, e});
              for (auto [b, e] : cols) c.push_back({b, e});
              return block_norms(t, r, c);
          },
          py::arg("tensor"), py::arg("rows"), py::arg("cols"), "Norms of the blocks given by half-open ranges.");

    py::enum_<ThresholdMode>(m, "ThresholdMode")
        .value("positive", ThresholdMode::positive)
        .value("absolute", ThresholdMode::absolute);

    m.def("form_B", &form_B, py::arg("u"), py::arg("core_slice_tensor"));
    m.def(
        "threshold_B",
        [](const Matrix& b, double theta, ThresholdMode mode) { return threshold_B(b, theta, mode).b_hat; },
        py::arg("b"), py::arg("theta"), py::arg("mode") = ThresholdMode::positive,
        "Sparse copy of B keeping entries above theta times the largest (absolute) entry.");

    py::class_<ExpansionTerm>(m, "ExpansionTerm")
        .def_readonly("u", &ExpansionTerm::u)
        .def_readonly("w", &ExpansionTerm::w)
        .def_property_readonly("core", [](const ExpansionTerm& t) { return dense_array(t.core); })
        .def_readonly("lambda1", &ExpansionTerm::lambda1)
        .def_readonly("lambda2", &ExpansionTerm::lambda2)
        .def_readonly("structured", &ExpansionTerm::structured)
        .def_readonly("raw_max", &ExpansionTerm::raw_max)
        .def_readonly("raw_min", &ExpansionTerm::raw_min)
        .def_readonly("raw_norm", &ExpansionTerm::raw_norm)
        .def_readonly("cutoff", &ExpansionTerm::cutoff)
        .def_readonly("b_hat", &ExpansionTerm::b_hat)
        .def_readonly("b_hat_norm", &ExpansionTerm::b_hat_norm)
        .def_readonly("core_norm", &ExpansionTerm::core_norm)
        .def_readonly("converged", &ExpansionTerm::converged);

    py::class_<ExpansionResult>(m, "ExpansionResult")
        .def_readonly("terms", &ExpansionResult::terms)
        .def_readonly("residual_norms", &ExpansionResult::residual_norms)
        .def_readonly("all_converged", &ExpansionResult::all_converged)
        .def("overlap_cosines", [](const ExpansionResult& r) { return overlap_cosines(r.terms); });

    m.def(
        "expand",
        [](const SparseTensor3& t, std::size_t terms, double theta, ThresholdMode mode, double structure_margin,
           int max_iters, double tol, std::uint64_t seed, int restarts) {
            ExpansionConfig cfg;
            cfg.terms = terms;
            cfg.theta = theta;
            cfg.threshold_mode = mode;
            cfg.structure_margin = structure_margin;
            cfg.solver = solver(max_iters, tol, seed, restarts, 1);
            cfg.solver.symmetric = true;
            return expand(t, cfg);
        },
        py::arg("tensor"), py::arg("terms"), py::arg("theta"), py::arg("mode") = ThresholdMode::positive,
        py::arg("structure_margin") = 0.05, py::arg("max_iters") = 200, py::arg("tol") = 1e-8, py::arg("seed") = 0,
        py::arg("restarts") = 1, "Rank-(2,2,1) expansion of a (1,2)-symmetric tensor.");
}
