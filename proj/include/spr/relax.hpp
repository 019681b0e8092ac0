// Small group-sparse training problems solved three ways: exact integer
// enumeration, the big-M continuous relaxation, and the perspective
// relaxation (both in projected form and jointly in (w, y)). The point is to
// measure relaxation tightness, not to be a production solver.
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "spr/common.hpp"

namespace spr {

enum class LossKind { least_squares, logistic };

std::string loss_kind_name(LossKind k);
LossKind loss_kind_from_name(const std::string& name);

// min_w  L(w) + lambda * [ alpha*||w||^2 + (1-alpha)*sum_i y_i ]
// s.t.   -M*y_i <= w_j <= M*y_i   for j in group i,   y in {0,1}^N
//
// L is either ||A w - b||^2 (unnormalized) or the logistic loss with labels
// b in {-1, +1}. A single global bound M applies to every group.
struct MipInstance {
    int m = 0;
    int n = 0;
    std::vector<double> A;  // row-major m x n
    std::vector<double> b;  // m targets (or +/-1 labels for logistic)
    LossKind loss = LossKind::least_squares;
    std::vector<std::vector<int>> groups;  // partition of {0..n-1}
    double lambda = 1.0;
    double alpha = 0.5;
    double M = 1.0;

    void validate() const;  // throws ConfigError on any contract breach
    int num_groups() const { return static_cast<int>(groups.size()); }
};

nlohmann::json instance_to_json(const MipInstance& inst);
MipInstance instance_from_json(const nlohmann::json& j);

// Gaussian design, planted group-sparse ground truth, additive noise.
MipInstance planted_instance(std::uint64_t seed, int m, int n, int N, LossKind loss,
                             double lambda, double alpha, double M, double sigma);
// Draws shapes and hyperparameters from the seed (m=20, n<=12, N<=6).
MipInstance random_instance(std::uint64_t seed);

struct IntegerSolution {
    double v = 0.0;
    std::vector<int> y;     // binary pattern
    std::vector<double> w;  // optimum under that pattern
};

// Enumerates all 2^N patterns; per pattern solves the convex subproblem
// (ridge normal equations for least squares, damped Newton for logistic),
// falling back to a box-constrained solve when |w_j| <= M is violated.
IntegerSolution solve_integer(const MipInstance& inst);

struct RelaxSolution {
    double v = 0.0;
    std::vector<double> w;
    std::vector<double> y;  // per-group relaxed indicator at w
};

// Multi-start projected subgradient descent (50 starts, 20k iteration cap,
// diminishing steps, early stop once the best value is stable to 1e-8 over
// 1000 iterations) plus a step-ladder polish from the best point. `seeds`
// adds warm starts to the pool; their objective values always count.
RelaxSolution solve_bigm_relaxation(const MipInstance& inst,
                                    std::span<const std::vector<double>> seeds = {});
RelaxSolution solve_pr_relaxation(const MipInstance& inst,
                                  std::span<const std::vector<double>> seeds = {});
// Same objective minimized without the y-elimination: alternates closed-form
// indicator updates with weight descent at fixed indicators, evaluating
// a*||w||^2/y + (1-a)*y directly. Kept as an independent route so the two
// can be compared.
RelaxSolution solve_pr_joint(const MipInstance& inst,
                             std::span<const std::vector<double>> seeds = {});

struct RelaxationResult {
    double v_int = 0.0;
    std::vector<int> y_int;
    std::vector<double> w_int;
    double v_bigm = 0.0;
    std::vector<double> w_bigm;
    double v_pr = 0.0;
    std::vector<double> w_pr;
    std::vector<double> y_pr;
    double v_joint = 0.0;  // perspective relaxation via the joint (w,y) route
    std::vector<double> w_joint;
    double gap_bigm = 0.0;  // v_int - v_bigm
    double gap_pr = 0.0;    // v_int - v_pr
    bool pr_tighter = false;
};

// Runs all solvers with cross-seeding and checks
//   v_bigm <= v_pr + tol,  v_pr <= v_int + tol,  |v_pr - v_joint| <= tol.
// Throws OrderingError when a check fails.
RelaxationResult verify_ordering(const MipInstance& inst, double tol = 1e-6);

struct BatchRow {
    std::uint64_t seed = 0;
    int N = 0;
    int n = 0;
    double v_bigm = 0.0;
    double v_pr = 0.0;
    double v_int = 0.0;
    double gap_bigm = 0.0;
    double gap_pr = 0.0;
    bool pr_tighter = false;
    double joint_dev = 0.0;  // |v_pr - v_joint|, not part of the CSV
};

std::vector<BatchRow> run_relax_batch(std::uint64_t seed, int count, double tol = 1e-6,
                                      int threads = 1);
std::string batch_csv(const std::vector<BatchRow>& rows);

}  // namespace spr
