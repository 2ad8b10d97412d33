#include <gtest/gtest.h>

#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "oracles.hpp"
#include "tenspart/cli.hpp"
#include "tenspart/preprocess.hpp"

using namespace tenspart;
namespace fs = std::filesystem;
using Json = nlohmann::json;

namespace {

class CliTest : public ::testing::Test {
protected:
    void SetUp() override {
        const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
        dir_ = fs::temp_directory_path() / ("tenspart_cli_" + std::string(info->name()));
        fs::remove_all(dir_);
        fs::create_directories(dir_);
    }
    void TearDown() override { fs::remove_all(dir_); }

    int run(std::vector<std::string> args) {
        out_.str("");
        err_.str("");
        return run_cli(args, out_, err_);
    }

    std::string path(const std::string& name) const { return (dir_ / name).string(); }

    void write(const std::string& name, const std::string& text) const {
        std::ofstream(dir_ / name, std::ios::binary) << text;
    }

    static std::string read(const fs::path& p) {
        std::ifstream in(p, std::ios::binary);
        std::ostringstream s;
        s << in.rdbuf();
        return s.str();
    }

    Json read_json(const std::string& name) const { return Json::parse(read(dir_ / name)); }

    fs::path dir_;
    std::ostringstream out_, err_;
};

// Edge-list lines `src dst weight` as a set of unordered label pairs.
std::set<std::pair<std::string, std::string>> edge_pairs(const std::string& text) {
    std::set<std::pair<std::string, std::string>> out;
    std::istringstream in(text);
    std::string a, b;
    double w = 0.0;
    while (in >> a >> b >> w) out.emplace(std::min(a, b), std::max(a, b));
    return out;
}

std::set<std::string> vertices_of(const std::set<std::pair<std::string, std::string>>& edges) {
    std::set<std::string> v;
    for (const auto& [a, b] : edges) {
        v.insert(a);
        v.insert(b);
    }
    return v;
}

}  // namespace

TEST_F(CliTest, IngestRecordLog) {
    write("log.csv", "source,destination,timestamp\na,b,1\nb,c,2\nc,a,3\n");
    ASSERT_EQ(run({"ingest", "--format", "log-csv", "--bin-size", "1", "-i", path("log.csv"), "-o", path("out")}), 0)
        << err_.str();
    const SparseTensor3 t = load_coordinate_file(dir_ / "out" / "tensor.tns");
    EXPECT_EQ(t.dims(), (Dims{3, 3, 3}));
    EXPECT_EQ(t.nnz(), 6u);
    EXPECT_EQ(load_labels(dir_ / "out" / "labels.txt").size(), 3u);
    const Json rep = read_json("out/ingest.json");
    EXPECT_EQ(rep["tensor"]["nnz"], 6);
    EXPECT_EQ(rep["inputs"][0]["sha256"].get<std::string>().size(), 64u);
}

TEST_F(CliTest, CoordinateRoundTripIsIdempotent) {
    write("t.tns", "# comment\n2 1 1 0.5\n1 2 1 0.5\n3 3 2 1e-3\n1 2 1 0.25\n");
    ASSERT_EQ(run({"ingest", "-i", path("t.tns"), "-o", path("a")}), 0) << err_.str();
    ASSERT_EQ(run({"ingest", "-i", path("a/tensor.tns"), "-o", path("b")}), 0) << err_.str();
    EXPECT_EQ(read(dir_ / "a" / "tensor.tns"), read(dir_ / "b" / "tensor.tns"));
}

TEST_F(CliTest, MalformedLineNamed) {
    write("bad.tns", "1 1 1 1.0\n1 x 1 2.0\n");
    EXPECT_EQ(run({"ingest", "-i", path("bad.tns"), "-o", path("out")}), exit_validation);
    EXPECT_NE(err_.str().find(":2"), std::string::npos) << err_.str();
}

TEST_F(CliTest, ValidationAndIoErrors) {
    EXPECT_EQ(run({"ingest", "-i", path("missing.tns")}), exit_validation);
    EXPECT_EQ(run({}), exit_validation);
    write("asym.tns", "1 2 1 1.0\n2 1 1 0.5\n2 2 1 1.0\n");
    EXPECT_EQ(run({"partition", "-i", path("asym.tns"), "--symmetric", "--rank", "1", "1", "1", "-o", path("p")}),
              exit_validation);
    EXPECT_NE(err_.str().find("symmetric"), std::string::npos);
    EXPECT_EQ(run({"expand", "-i", path("asym.tns"), "--theta", "0.1", "-o", path("e")}), exit_validation);
    EXPECT_EQ(run({"expand", "-i", path("asym.tns"), "--theta", "1.5", "-o", path("e")}), exit_validation);

    write("file", "x");
    EXPECT_EQ(run({"ingest", "-i", path("asym.tns"), "-o", path("file/sub")}), exit_io);
}

TEST_F(CliTest, ThreadsEnvironmentValidated) {
    write("t.tns", "1 1 1 1.0\n");
    ::setenv("TENSPART_THREADS", "zero", 1);
    EXPECT_EQ(run({"approx", "-i", path("t.tns"), "--rank", "1", "1", "1", "-o", path("a")}), exit_validation);
    ::setenv("TENSPART_THREADS", "2", 1);
    EXPECT_EQ(run({"approx", "-i", path("t.tns"), "--rank", "1", "1", "1", "-o", path("a")}), exit_ok) << err_.str();
    EXPECT_EQ(read_json("a/approx.json")["config"]["threads"], 2);
    ::unsetenv("TENSPART_THREADS");
}

TEST_F(CliTest, ApproxWritesFactors) {
    std::mt19937_64 rng(3);
    save_coordinate_file(oracle::random_sparse(rng, 6, 5, 4, 0.5), dir_ / "t.tns");
    ASSERT_EQ(run({"approx", "-i", path("t.tns"), "--rank", "2", "2", "2", "-o", path("a")}), 0) << err_.str();
    std::ifstream u(dir_ / "a" / "U.csv");
    std::string first;
    std::getline(u, first);
    EXPECT_EQ(first, "# shape 6 2");
    const Json rep = read_json("a/approx.json");
    EXPECT_TRUE(rep["approximation"]["converged"].get<bool>());
    EXPECT_EQ(rep["approximation"]["ranks"], Json::array({2, 2, 2}));
}

TEST_F(CliTest, PartitionPlantedBlocksAndReproducibility) {
    std::mt19937_64 rng(7);
    const auto planted = oracle::planted_two_block(rng, 60, 4, 25, 0.4, 0.01);
    save_coordinate_file(planted.tensor, dir_ / "t.tns");
    std::string labels;
    for (int x = 1; x <= 60; ++x) labels += "v" + std::to_string(x) + "\n";
    write("labels.txt", labels);
    const std::vector<std::string> args{"partition", "-i", path("t.tns"), "--normalize", "adjacency", "--symmetric",
                                        "--rank", "2", "2", "1", "--labels", path("labels.txt"), "--top-k", "5",
                                        "-o", path("p")};
    ASSERT_EQ(run(args), 0) << err_.str();
    const std::string first = read(dir_ / "p" / "partition.json");
    const Json rep = Json::parse(first);
    const auto& mass = rep["partition"]["split_blocks"]["mass_fraction"];
    ASSERT_EQ(mass.size(), 2u);
    EXPECT_GE(mass[0][0].get<double>() + mass[1][1].get<double>(), 0.95);
    EXPECT_EQ(rep["partition"]["modes"][0]["top_terms"]["beginning"].size(), 5u);
    EXPECT_TRUE(fs::exists(dir_ / "p" / "top_terms_mode1.csv"));

    // Permutation file: a permutation of 1..60.
    std::ifstream perm(dir_ / "p" / "mode1_perm.txt");
    std::set<int> seen;
    int v = 0;
    while (perm >> v) seen.insert(v);
    EXPECT_EQ(seen.size(), 60u);
    EXPECT_EQ(*seen.begin(), 1);
    EXPECT_EQ(*seen.rbegin(), 60);

    ASSERT_EQ(run(args), 0);
    EXPECT_EQ(read(dir_ / "p" / "partition.json"), first);
}

TEST_F(CliTest, PartitionRecursion) {
    std::mt19937_64 rng(11);
    const auto planted = oracle::planted_two_block(rng, 40, 3, 20, 0.5, 0.02);
    save_coordinate_file(planted.tensor, dir_ / "t.tns");
    write("ranges.txt", "# first half\n1 1 20\n");
    ASSERT_EQ(run({"partition", "-i", path("t.tns"), "--normalize", "adjacency", "--symmetric", "--rank", "2", "2", "1",
                   "--recurse", path("ranges.txt"), "-o", path("p")}),
              0)
        << err_.str();
    const Json rep = read_json("p/partition.json");
    ASSERT_TRUE(rep.contains("recursion"));
    EXPECT_EQ(rep["recursion"]["modes"][0]["permutation"].size(), 20u);
    for (const auto& idx : rep["recursion"]["modes"][0]["permutation"]) EXPECT_LE(idx.get<int>(), 20);
    EXPECT_TRUE(fs::exists(dir_ / "p" / "recurse" / "mode1_perm.txt"));

    write("bad_ranges.txt", "4 1 2\n");
    EXPECT_EQ(run({"partition", "-i", path("t.tns"), "--symmetric", "--rank", "2", "2", "1", "--recurse",
                   path("bad_ranges.txt"), "-o", path("q")}),
              exit_validation);
}

TEST_F(CliTest, ExpandPlantedTerms) {
    std::mt19937_64 rng(13);
    const std::size_t m = 24, n = 4;
    oracle::Box box(m, m, n);
    Vector w1 = Vector::Zero(n), w2 = Vector::Zero(n);
    w1.head(2) = oracle::random_nonnegative_unit(rng, 2);
    w2.tail(2) = oracle::random_nonnegative_unit(rng, 2);
    const auto p1 = oracle::planted_block(oracle::random_nonnegative_unit(rng, 6), oracle::random_nonnegative_unit(rng, 6), w1, 4.0);
    const auto p2 = oracle::planted_block(oracle::random_nonnegative_unit(rng, 6), oracle::random_nonnegative_unit(rng, 6), w2, 2.0);
    for (std::size_t i = 0; i < 12; ++i)
        for (std::size_t j = 0; j < 12; ++j)
            for (std::size_t k = 0; k < n; ++k) {
                box(i, j, k) = p1.dense(i, j, k);
                box(12 + i, 12 + j, k) = p2.dense(i, j, k);
            }
    save_coordinate_file(oracle::to_sparse(box), dir_ / "t.tns");
    ASSERT_EQ(run({"expand", "-i", path("t.tns"), "--terms", "2", "--theta", "0.001", "-o", path("e")}), 0)
        << err_.str();

    std::set<std::string> first, second;
    for (int x = 1; x <= 12; ++x) first.insert(std::to_string(x));
    for (int x = 13; x <= 24; ++x) second.insert(std::to_string(x));
    EXPECT_EQ(vertices_of(edge_pairs(read(dir_ / "e" / "term1_edges.txt"))), first);
    EXPECT_EQ(vertices_of(edge_pairs(read(dir_ / "e" / "term2_edges.txt"))), second);
    const Json rep = read_json("e/expand.json");
    EXPECT_TRUE(rep["terms"][0]["structured"].get<bool>());
    EXPECT_LE(std::abs(rep["overlap_cosines"][0][1].get<double>()), 1e-12);
    EXPECT_EQ(rep["residual_norms"].size(), 3u);

    std::ifstream wcsv(dir_ / "e" / "term1_w.csv");
    std::string header;
    std::getline(wcsv, header);
    EXPECT_EQ(header, "slice_index,value");
}

TEST_F(CliTest, ExpandExactTermAndEmptyThreshold) {
    std::mt19937_64 rng(17);
    const auto p = oracle::planted_block(oracle::random_nonnegative_unit(rng, 5), oracle::random_nonnegative_unit(rng, 4),
                                         oracle::random_nonnegative_unit(rng, 3), 2.0);
    save_coordinate_file(oracle::to_sparse(p.dense), dir_ / "t.tns");
    ASSERT_EQ(run({"expand", "-i", path("t.tns"), "--terms", "1", "--theta", "0", "--threshold-mode", "absolute",
                   "--tol", "1e-14", "--max-iter", "1000", "-o", path("e")}),
              0)
        << err_.str();
    EXPECT_LT(read_json("e/expand.json")["final_residual_norm"].get<double>(), 1e-8);

    ASSERT_EQ(run({"expand", "-i", path("t.tns"), "--theta", "1", "-o", path("f")}), 0) << err_.str();
    EXPECT_NE(err_.str().find("empty thresholded B"), std::string::npos);
    const Json rep = read_json("f/expand.json");
    EXPECT_EQ(rep["terms"][0]["b_hat_nonzeros"], 0);
    EXPECT_TRUE(rep["overlap_cosines"].is_null());
    EXPECT_TRUE(read(dir_ / "f" / "term1_edges.txt").empty());
}

TEST_F(CliTest, NonConvergenceStillWritesResults) {
    std::mt19937_64 rng(19);
    save_coordinate_file(oracle::random_sparse(rng, 8, 8, 5, 0.6), dir_ / "t.tns");
    EXPECT_EQ(run({"approx", "-i", path("t.tns"), "--rank", "2", "2", "2", "--max-iter", "1", "--tol", "1e-15", "-o",
                   path("a")}),
              exit_not_converged);
    EXPECT_TRUE(fs::exists(dir_ / "a" / "approx.json"));
    EXPECT_FALSE(read_json("a/approx.json")["approximation"]["converged"].get<bool>());
}

TEST_F(CliTest, NormalizeSubcommand) {
    write("t.tns", "1 2 1 2.0\n2 1 1 2.0\n1 1 2 3.0\n");
    ASSERT_EQ(run({"normalize", "-i", path("t.tns"), "--normalize", "frobenius", "-o", path("n")}), 0) << err_.str();
    const SparseTensor3 t = load_coordinate_file(dir_ / "n" / "normalized.tns");
    EXPECT_NEAR(frobenius_norm(t), std::sqrt(2.0), 1e-15);
}
