#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "tenspart/operator.hpp"
#include "tenspart/tensor.hpp"

namespace tenspart {

struct Ranks {
    std::size_t r1 = 2;
    std::size_t r2 = 2;
    std::size_t r3 = 2;

    bool operator==(const Ranks&) const = default;
};

struct SolverConfig {
    int max_iters = 200;
    // Stop when |obj_t - obj_{t-1}| <= rel_tol * obj_t, obj = ||A.(U,V,W)||.
    double rel_tol = 1e-8;
    std::uint64_t seed = 0;
    // 1 runs from the HOSVD start only; each extra restart uses a seeded random start.
    int num_restarts = 1;
    bool symmetric = false;
    unsigned threads = 1;
    // Modes with extent up to this size get an exact dense Gram eigensolve in HOSVD;
    // larger modes use block subspace iteration on the implicit Gram operator.
    std::size_t dense_gram_limit = 1024;
    // Restart objectives further apart than this mark the problem as near-degenerate.
    double restart_agreement_tol = 1e-6;
    // Polish the embedded solution with non-symmetric HOOI sweeps on the original tensor.
    bool refine_embedding = true;

    void validate() const;
};

struct Factors {
    Matrix u;
    Matrix v;
    Matrix w;
};

/// Best rank-(r1,r2,r3) approximation (U,V,W) with core F = A.(U,V,W).
struct RankApproximation {
    Matrix u;
    Matrix v;
    Matrix w;
    DenseTensor3 core;
    // ||F|| after initialization and after every sweep.
    std::vector<double> objective_history;
    int iterations = 0;
    bool converged = false;
    bool rank_deficient = false;
    bool near_degenerate = false;
    bool symmetric = false;
    double tensor_norm = 0.0;

    Ranks ranks() const;
    double objective() const { return objective_history.empty() ? 0.0 : objective_history.back(); }
};

struct SubspaceResult {
    Matrix basis;
    Vector singular_values;
    bool rank_deficient = false;
};

/// Orthonormal basis of the r leading left singular directions of M. Each column is
/// signed so that its entry of largest magnitude is positive (lowest index on ties).
/// When M has numerical rank below r (or fewer than r columns) the basis is completed by
/// an orthonormal complement and the result is flagged.
SubspaceResult dominant_subspace(const Matrix& m, std::size_t r);

/// Flips columns so that each column's largest-magnitude entry is positive.
void apply_sign_convention(Matrix& basis);

/// The r leading eigenvectors of a symmetric positive semidefinite operator of size n given
/// by its action on blocks, via block subspace iteration with Rayleigh-Ritz extraction.
Matrix dominant_eigenspace(const std::function<Matrix(const Matrix&)>& apply, std::size_t n,
                           std::size_t r, std::uint64_t seed, int max_iters = 500,
                           double tol = 1e-12);

/// Truncated HOSVD: per mode, the dominant subspace of the mode unfolding.
Factors hosvd_init(const TensorOperator& op, const Ranks& ranks, const SolverConfig& cfg = {});
Factors hosvd_init(const SparseTensor3& t, const Ranks& ranks, const SolverConfig& cfg = {});

/// Higher-order orthogonal iteration from the HOSVD start (plus seeded restarts).
RankApproximation hooi(const TensorOperator& op, const Ranks& ranks, const SolverConfig& cfg = {});
RankApproximation hooi(const SparseTensor3& t, const Ranks& ranks, const SolverConfig& cfg = {});

/// HOOI sweeps from a caller-supplied start; only V and W of `start` are read.
RankApproximation hooi_from(const TensorOperator& op, const Factors& start,
                            const Ranks& ranks, const SolverConfig& cfg = {});

/// HOOI for (1,2)-symmetric tensors with one shared factor for modes 1 and 2. Ranks must
/// have r1 == r2.
RankApproximation hooi_symmetric(const TensorOperator& op, const Ranks& ranks,
                                 const SolverConfig& cfg = {});
RankApproximation hooi_symmetric(const SparseTensor3& t, const Ranks& ranks,
                                 const SolverConfig& cfg = {});

/// Non-symmetric approximation through the symmetric solver applied to the block tensor
/// (0 T; T' 0) with ranks (r1+r2, r1+r2, r3). The stacked factor is split into its top
/// (U) and bottom (V) blocks, each reduced to its dominant subspace; W and the core are
/// then computed from T.
RankApproximation approx_nonsymmetric_via_embedding(const SparseTensor3& t, const Ranks& ranks,
                                                    const SolverConfig& cfg = {});

/// (U,V,W).F as a dense tensor.
DenseTensor3 reconstruct(const RankApproximation& approx);
double reconstruct_entry(const RankApproximation& approx, std::size_t i, std::size_t j,
                         std::size_t k);

/// sqrt(max(0, ||A||^2 - ||F||^2)); equals ||A - (U,V,W).F|| whenever F = A.(U,V,W).
double residual_norm(const RankApproximation& approx);

/// Seam for alternative solvers: anything that turns an operator into an approximation.
class LowRankSolver {
public:
    virtual ~LowRankSolver() = default;
    virtual RankApproximation solve(const TensorOperator& op, const Ranks& ranks,
                                    const SolverConfig& cfg) const = 0;
};

class HooiSolver final : public LowRankSolver {
public:
    RankApproximation solve(const TensorOperator& op, const Ranks& ranks,
                            const SolverConfig& cfg) const override {
        return cfg.symmetric ? hooi_symmetric(op, ranks, cfg) : hooi(op, ranks, cfg);
    }
};

}  // namespace tenspart
