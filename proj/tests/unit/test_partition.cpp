#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <random>
#include <set>

#include "oracles.hpp"
#include "tenspart/partition.hpp"
#include "tenspart/preprocess.hpp"

using namespace tenspart;

namespace {

SolverConfig symmetric_cfg() {
    SolverConfig cfg;
    cfg.symmetric = true;
    cfg.rel_tol = 1e-13;
    cfg.max_iters = 2000;
    return cfg;
}

// Symmetric tensor whose n slices all equal the weighted graph `w` (m x m, symmetric).
SparseTensor3 replicate(const Matrix& w, std::size_t n) {
    std::vector<Entry> es;
    for (std::size_t k = 0; k < n; ++k)
        for (Eigen::Index j = 0; j < w.cols(); ++j)
            for (Eigen::Index i = 0; i < w.rows(); ++i)
                if (w(i, j) != 0.0) es.push_back({static_cast<std::size_t>(i), static_cast<std::size_t>(j), k, w(i, j)});
    return SparseTensor3({static_cast<std::size_t>(w.rows()), static_cast<std::size_t>(w.cols()), n}, es);
}

double block_norm_oracle(const SparseTensor3& t, const IndexRange& r, const IndexRange& c) {
    double s = 0.0;
    for (const Entry& e : t.entries())
        if (e.i >= r.begin && e.i < r.end && e.j >= c.begin && e.j < c.end) s += e.value * e.value;
    return std::sqrt(s);
}

std::vector<int> split_sides(const PartitionReport& rep, std::size_t mode_slot) {
    const auto& mp = rep.modes[mode_slot];
    std::vector<int> side(mp.order.size());
    for (std::size_t p = 0; p < mp.order.size(); ++p) side[mp.order[p]] = p < mp.split.index ? 0 : 1;
    return side;
}

// Two strong equal communities on a weak background: u2 contrasts the communities.
Matrix two_communities(const std::vector<std::size_t>& a, const std::vector<std::size_t>& b, std::size_t m) {
    Matrix w = Matrix::Constant(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(m), 0.01);
    for (const auto* set : {&a, &b})
        for (std::size_t x : *set)
            for (std::size_t y : *set) w(static_cast<Eigen::Index>(x), static_cast<Eigen::Index>(y)) = 1.0;
    return w;
}

}  // namespace

TEST(MonotoneReorder, Examples) {
    Matrix u(4, 2);
    u << 1, 0.9, 1, 0.5, 1, 0.1, 1, -0.3;
    EXPECT_EQ(monotone_reorder(u).order, (Permutation{0, 1, 2, 3}));
    Matrix r(4, 2);
    r << 1, -0.3, 2, 0.1, 3, 0.5, 4, 0.9;
    const Reordering rr = monotone_reorder(r);
    EXPECT_EQ(rr.order, (Permutation{3, 2, 1, 0}));
    EXPECT_EQ(rr.u1(0), 4.0);
    EXPECT_EQ(monotone_reorder(r, false).order, (Permutation{0, 1, 2, 3}));
    EXPECT_THROW(monotone_reorder(Matrix::Ones(3, 1)), Error);
}

TEST(MonotoneReorder, SortedAndStable) {
    std::mt19937_64 rng(3);
    std::uniform_int_distribution<int> pick(-3, 3);
    for (int trial = 0; trial < 20; ++trial) {
        Matrix u(30, 2);
        for (Eigen::Index x = 0; x < 30; ++x) {
            u(x, 0) = static_cast<double>(x);
            u(x, 1) = pick(rng);  // many ties
        }
        const Reordering r = monotone_reorder(u);
        EXPECT_TRUE(is_permutation(r.order, 30));
        for (Eigen::Index p = 1; p < 30; ++p) {
            EXPECT_GE(r.u2(p - 1), r.u2(p));
            if (r.u2(p - 1) == r.u2(p)) {
                EXPECT_LT(r.order[static_cast<std::size_t>(p - 1)], r.order[static_cast<std::size_t>(p)]);
            }
        }
    }
}

TEST(SignChangeSplit, Examples) {
    Vector v(4);
    v << 0.5, 0.1, -0.2, -0.7;
    EXPECT_EQ(sign_change_split(v).index, 2u);
    EXPECT_TRUE(sign_change_split(v).has_split);
    const SplitPoint all_pos = sign_change_split(Vector::Ones(4));
    EXPECT_EQ(all_pos.index, 4u);
    EXPECT_FALSE(all_pos.has_split);
    const SplitPoint all_neg = sign_change_split(-Vector::Ones(3));
    EXPECT_EQ(all_neg.index, 0u);
    EXPECT_FALSE(all_neg.has_split);
    Vector z(3);
    z << 0.3, 0.0, -0.1;
    EXPECT_EQ(sign_change_split(z).index, 2u);
    Vector up(3);
    up << -0.5, -0.1, 0.4;
    EXPECT_EQ(sign_change_split(up, false).index, 2u);
}

TEST(BlockNorms, WholeTensorAndPartitions) {
    std::mt19937_64 rng(5);
    const SparseTensor3 t = oracle::random_sparse(rng, 9, 8, 3, 0.5);
    const BlockNormTable whole = block_norms(t, {{0, 9}}, {{0, 8}});
    EXPECT_NEAR(whole.norms(0, 0), frobenius_norm(t), 1e-12);
    EXPECT_TRUE(whole.covers_tensor);

    const BlockNormTable split = block_norms(t, split_ranges(9, 4), split_ranges(8, 5));
    EXPECT_NEAR(split.norms.squaredNorm(), squared_norm(t), 1e-10 * squared_norm(t));
    EXPECT_NEAR(split.mass_fraction.sum(), 1.0, 1e-12);

    const BlockNormTable corners = block_norms(t, corner_ranges(9, 2), corner_ranges(8, 4));
    ASSERT_EQ(corners.rows.size(), 3u);
    ASSERT_EQ(corners.cols.size(), 2u);  // 2*4 == 8: no middle range
    for (std::size_t a = 0; a < corners.rows.size(); ++a)
        for (std::size_t b = 0; b < corners.cols.size(); ++b)
            EXPECT_NEAR(corners.norms(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)),
                        block_norm_oracle(t, corners.rows[a], corners.cols[b]), 1e-12);

    const BlockNormTable partial = block_norms(t, {{0, 2}}, {{1, 3}}, IndexRange{1, 2});
    EXPECT_FALSE(partial.covers_tensor);
}

TEST(BlockNorms, InvalidBoundaries) {
    const SparseTensor3 t({4, 4, 1}, {{0, 0, 0, 1.0}});
    EXPECT_THROW(block_norms(t, {{0, 5}}, {{0, 4}}), Error);
    EXPECT_THROW(block_norms(t, {{2, 2}}, {{0, 4}}), Error);
    EXPECT_THROW(block_norms(t, {{0, 3}, {2, 4}}, {{0, 4}}), Error);
    EXPECT_THROW(corner_ranges(4, 3), Error);
    EXPECT_THROW(split_ranges(4, 5), Error);
}

TEST(PartitionTensor, DisjointBlocksSeparate) {
    // Block {0,2,4} is twice as strong as block {1,3,5}; no cross links. With self loops
    // each block is rank one, so the two leading eigenvalues (6 and 3) are well separated.
    Matrix w = Matrix::Zero(6, 6);
    for (std::size_t a : {0, 2, 4})
        for (std::size_t b : {0, 2, 4}) w(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) = 2.0;
    for (std::size_t a : {1, 3, 5})
        for (std::size_t b : {1, 3, 5}) w(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) = 1.0;
    const SparseTensor3 t = replicate(w, 2);
    const RankApproximation approx = hooi_symmetric(t, {2, 2, 1}, symmetric_cfg());
    PartitionOptions opts;
    opts.corner_width = 3;
    const PartitionResult res = partition_tensor(t, approx, opts);
    EXPECT_EQ(res.report.modes[0].order, res.report.modes[1].order);
    const std::set<std::size_t> first(res.report.modes[0].order.begin(), res.report.modes[0].order.begin() + 3);
    EXPECT_TRUE(first == (std::set<std::size_t>{0, 2, 4}) || first == (std::set<std::size_t>{1, 3, 5}));
    EXPECT_EQ(res.report.corner_blocks.norms(0, 1), 0.0);
    EXPECT_EQ(res.report.corner_blocks.norms(1, 0), 0.0);
    EXPECT_EQ(res.reordered.nnz(), t.nnz());
    EXPECT_EQ(frobenius_norm(res.reordered), frobenius_norm(t));
}

TEST(PartitionTensor, DimensionMismatch) {
    std::mt19937_64 rng(1);
    const SparseTensor3 t = oracle::random_sparse(rng, 5, 5, 3, 0.7);
    const RankApproximation a = hooi(t, {2, 2, 1});
    EXPECT_THROW(partition_tensor(oracle::random_sparse(rng, 6, 5, 3, 0.7), a), Error);
}

TEST(PartitionTensor, PlantedMembership) {
    std::mt19937_64 rng(17);
    const auto planted = oracle::planted_two_block(rng, 120, 5, 50, 0.3, 0.004);
    const SparseTensor3 base = normalize_slices_adjacency(planted.tensor);
    const SparseTensor3 t = oracle::add(base, oracle::symmetric_noise(rng, 120, 5, 0.05, 0.01 * frobenius_norm(base)));
    const RankApproximation approx = hooi_symmetric(t, {2, 2, 1}, symmetric_cfg());
    const PartitionResult res = partition_tensor(t, approx);
    EXPECT_GE(oracle::membership_accuracy(split_sides(res.report, 0), planted.membership), 0.99);
    const Matrix& f = res.report.split_blocks.mass_fraction;
    ASSERT_EQ(f.rows(), 2);
    EXPECT_LE(f(0, 1) + f(1, 0), 0.02);
}

TEST(PartitionTensor, KarateMatchesMatrixSpectralPartition) {
    const auto edges = oracle::read_edges(TENSPART_TEST_DATA_DIR "/karate_edges.txt");
    ASSERT_EQ(edges.size(), 78u);
    Matrix a = Matrix::Zero(34, 34);
    for (auto [x, y] : edges) a(static_cast<Eigen::Index>(x), static_cast<Eigen::Index>(y)) = a(static_cast<Eigen::Index>(y), static_cast<Eigen::Index>(x)) = 1.0;
    const Vector d = a.rowwise().sum();
    const Matrix an = d.cwiseInverse().cwiseSqrt().asDiagonal() * a * d.cwiseInverse().cwiseSqrt().asDiagonal();
    Eigen::SelfAdjointEigenSolver<Matrix> eig(an);
    const Vector v2 = eig.eigenvectors().col(32);  // second largest eigenvalue
    EXPECT_NEAR(eig.eigenvalues()(33), 1.0, 1e-12);

    const SparseTensor3 t = normalize_slices_adjacency(replicate(a, 3));
    const RankApproximation approx = hooi_symmetric(t, {2, 2, 1}, symmetric_cfg());
    const Matrix top2 = eig.eigenvectors().rightCols(2);
    EXPECT_LE((approx.u * approx.u.transpose() - top2 * top2.transpose()).norm(), 1e-8);

    const PartitionResult res = partition_tensor(t, approx);
    const auto side = split_sides(res.report, 0);
    std::vector<int> matrix_side(34);
    for (Eigen::Index x = 0; x < 34; ++x) matrix_side[static_cast<std::size_t>(x)] = v2(x) >= 0.0 ? 0 : 1;
    EXPECT_EQ(oracle::membership_accuracy(side, matrix_side), 1.0);
    EXPECT_TRUE(res.report.modes[0].split.has_split);
}

TEST(SignificanceRanking, TwoBlockLists) {
    // Indices 0..4 form one community, 5..9 the other.
    std::vector<std::size_t> a{0, 1, 2, 3, 4}, b{5, 6, 7, 8, 9};
    const SparseTensor3 t = replicate(two_communities(a, b, 10), 2);
    const RankApproximation approx = hooi_symmetric(t, {2, 2, 1}, symmetric_cfg());
    const SignificanceRanking r = significance_ranking(approx.u.col(0), approx.u.col(1), LabelTable::numbered(10), 5);
    std::set<std::string> begin, end;
    for (const auto& x : r.beginning) begin.insert(x.label);
    for (const auto& x : r.end) end.insert(x.label);
    const std::set<std::string> la{"1", "2", "3", "4", "5"}, lb{"6", "7", "8", "9", "10"};
    EXPECT_TRUE((begin == la && end == lb) || (begin == lb && end == la));

    const SignificanceRanking one = significance_ranking(approx.u.col(0), approx.u.col(1), LabelTable::numbered(10), 1);
    EXPECT_EQ(one.beginning.size(), 1u);
    EXPECT_EQ(one.end.size(), 1u);
    EXPECT_EQ(one.middle.size(), 1u);
    EXPECT_THROW(significance_ranking(approx.u.col(0), approx.u.col(1), LabelTable::numbered(10), 11), Error);
    EXPECT_THROW(significance_ranking(approx.u.col(0), approx.u.col(1), LabelTable::numbered(9), 2), Error);
}

TEST(SignificanceRanking, PlantedSignalIndices) {
    std::mt19937_64 rng(19);
    std::vector<std::size_t> idx(100);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::shuffle(idx.begin(), idx.end(), rng);
    const std::vector<std::size_t> a(idx.begin(), idx.begin() + 10), b(idx.begin() + 10, idx.begin() + 20);
    const SparseTensor3 t = replicate(two_communities(a, b, 100), 3);
    const RankApproximation approx = hooi_symmetric(t, {2, 2, 1}, symmetric_cfg());
    const SignificanceRanking r = significance_ranking(approx.u.col(0), approx.u.col(1), LabelTable::numbered(100), 10);
    std::set<std::size_t> begin, end;
    for (const auto& x : r.beginning) begin.insert(x.index);
    for (const auto& x : r.end) end.insert(x.index);
    const std::set<std::size_t> sa(a.begin(), a.end()), sb(b.begin(), b.end());
    EXPECT_TRUE((begin == sa && end == sb) || (begin == sb && end == sa));
    EXPECT_EQ(r.magnitude.size(), 100u);
    EXPECT_EQ(r.middle.size(), 10u);
}

TEST(RestrictAndRecurse, FullSetsMatchDirectPartition) {
    std::mt19937_64 rng(23);
    const auto planted = oracle::planted_two_block(rng, 40, 3, 20, 0.5, 0.05);
    const SparseTensor3 t = normalize_slices_adjacency(planted.tensor);
    const SolverConfig cfg = symmetric_cfg();
    const RankApproximation approx = hooi_symmetric(t, {2, 2, 1}, cfg);
    const PartitionReport direct = partition_tensor(t, approx).report;
    const PartitionReport rec = restrict_and_recurse(t, {full_index_set(40), full_index_set(40), full_index_set(3)},
                                                     {2, 2, 1}, cfg);
    EXPECT_EQ(rec.modes[0].order, direct.modes[0].order);
    EXPECT_EQ(rec.modes[0].split.index, direct.modes[0].split.index);
    EXPECT_NEAR(rec.objective, direct.objective, 1e-12);
}

TEST(RestrictAndRecurse, NestedPlantedBlocks) {
    // Four groups of 10; groups 0,1 form block A and groups 2,3 block B.
    std::mt19937_64 rng(29);
    std::vector<std::size_t> perm(40);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<int> group(40);
    for (std::size_t p = 0; p < 40; ++p) group[perm[p]] = static_cast<int>(p / 10);
    Matrix w(40, 40);
    for (Eigen::Index x = 0; x < 40; ++x)
        for (Eigen::Index y = 0; y < 40; ++y) {
            const int gx = group[static_cast<std::size_t>(x)], gy = group[static_cast<std::size_t>(y)];
            w(x, y) = gx == gy ? 1.0 : (gx / 2 == gy / 2 ? 0.3 : 0.02);
        }
    const SparseTensor3 t = replicate(w, 2);
    const SolverConfig cfg = symmetric_cfg();
    std::vector<std::string> names(40);
    for (std::size_t x = 0; x < 40; ++x) names[x] = "v" + std::to_string(x);
    const ModeLabels labels{LabelTable(names), LabelTable(names), std::nullopt};

    const PartitionReport top = partition_tensor(t, hooi_symmetric(t, {2, 2, 1}, cfg), {}, labels).report;
    const auto side = split_sides(top, 0);
    std::vector<int> truth(40);
    for (std::size_t x = 0; x < 40; ++x) truth[x] = group[x] / 2;
    ASSERT_EQ(oracle::membership_accuracy(side, truth), 1.0);

    IndexSet block;
    for (std::size_t x = 0; x < 40; ++x)
        if (side[x] == 0) block.push_back(x);
    const PartitionReport sub = restrict_and_recurse(t, {block, block, full_index_set(2)}, {2, 2, 1}, cfg, {}, labels);
    ASSERT_EQ(sub.source_indices[0], block);
    std::vector<int> sub_side(block.size()), sub_truth(block.size());
    const auto& mp = sub.modes[0];
    for (std::size_t p = 0; p < mp.order.size(); ++p) {
        sub_side[mp.order[p]] = p < mp.split.index ? 0 : 1;
        EXPECT_EQ(sub.original_index(0, p), block[mp.order[p]]);
    }
    for (std::size_t x = 0; x < block.size(); ++x) sub_truth[x] = group[block[x]] % 2;
    EXPECT_EQ(oracle::membership_accuracy(sub_side, sub_truth), 1.0);
    ASSERT_TRUE(sub.rankings[0].has_value());
    for (const auto& entry : sub.rankings[0]->beginning) {
        EXPECT_EQ(entry.label, "v" + std::to_string(entry.index));
        EXPECT_TRUE(std::find(block.begin(), block.end(), entry.index) != block.end());
    }
}

TEST(RestrictAndRecurse, EmptySupportIsAnError) {
    const SparseTensor3 t({4, 4, 1}, {{0, 1, 0, 1.0}, {1, 0, 0, 1.0}});
    EXPECT_THROW(restrict_and_recurse(t, {IndexSet{2, 3}, IndexSet{2, 3}, IndexSet{0}}, {1, 1, 1}, symmetric_cfg()), Error);
    EXPECT_THROW(restrict_and_recurse(t, {IndexSet{}, IndexSet{2, 3}, IndexSet{0}}, {1, 1, 1}, symmetric_cfg()), Error);
}
