// The relaxation laboratory: exact enumeration vs scan oracles on crafted
// instances, the sandwich ordering on random instances, agreement between
// the projected and joint perspective routes, and batch/CSV plumbing.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <sstream>
#include <vector>

#include "spr/common.hpp"
#include "spr/relax.hpp"
#include "test_util.hpp"

using namespace spr;

namespace {

// (w-1)^2 least-squares in one variable, one group, lambda=1, alpha=0.5, M=2.
MipInstance one_dim_instance() {
    MipInstance inst;
    inst.m = 1;
    inst.n = 1;
    inst.A = {1.0};
    inst.b = {1.0};
    inst.loss = LossKind::least_squares;
    inst.groups = {{0}};
    inst.lambda = 1.0;
    inst.alpha = 0.5;
    inst.M = 2.0;
    return inst;
}

double lsq_loss(const MipInstance& inst, const std::vector<double>& w) {
    double v = 0.0;
    for (int i = 0; i < inst.m; ++i) {
        double r = -inst.b[static_cast<std::size_t>(i)];
        for (int j = 0; j < inst.n; ++j)
            r += inst.A[static_cast<std::size_t>(i * inst.n + j)] *
                 w[static_cast<std::size_t>(j)];
        v += r * r;
    }
    return v;
}

}  // namespace

TEST_CASE("instances validate their group structure") {
    MipInstance inst = one_dim_instance();
    CHECK_NOTHROW(inst.validate());

    MipInstance overlap = inst;
    overlap.n = 2;
    overlap.A = {1.0, 0.0};
    overlap.groups = {{0, 1}, {1}};
    CHECK_THROWS_AS(overlap.validate(), ConfigError);

    MipInstance missing = inst;
    missing.n = 2;
    missing.A = {1.0, 0.0};
    missing.groups = {{0}};
    CHECK_THROWS_AS(missing.validate(), ConfigError);

    MipInstance badM = inst;
    badM.M = 0.0;
    CHECK_THROWS_AS(badM.validate(), ConfigError);
}

TEST_CASE("instance JSON round trip preserves every field") {
    MipInstance inst = one_dim_instance();
    MipInstance back = instance_from_json(instance_to_json(inst));
    CHECK(back.m == inst.m);
    CHECK(back.n == inst.n);
    CHECK(back.A == inst.A);
    CHECK(back.b == inst.b);
    CHECK(back.loss == inst.loss);
    CHECK(back.groups == inst.groups);
    CHECK(back.lambda == inst.lambda);
    CHECK(back.alpha == inst.alpha);
    CHECK(back.M == inst.M);
}

TEST_CASE("integer enumeration solves the one-dimensional instance exactly") {
    IntegerSolution sol = solve_integer(one_dim_instance());
    // y=1: min (w-1)^2 + 0.5 w^2 + 0.5 -> w = 2/3, value 5/6.
    CHECK(sol.v == doctest::Approx(5.0 / 6.0).epsilon(1e-9));
    CHECK(sol.y == std::vector<int>{1});
    CHECK(sol.w[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-6));
}

TEST_CASE("huge lambda forces the empty pattern") {
    MipInstance inst = one_dim_instance();
    inst.lambda = 1e6;
    IntegerSolution sol = solve_integer(inst);
    CHECK(sol.y == std::vector<int>{0});
    CHECK(sol.w == std::vector<double>{0.0});
    CHECK(sol.v == doctest::Approx(lsq_loss(inst, {0.0})));
}

TEST_CASE("integer solver respects the box constraint") {
    // Strong pull towards w=5 but M=1: the y=1 pattern must return w at the
    // bound, not beyond it.
    MipInstance inst = one_dim_instance();
    inst.b = {5.0};
    inst.M = 1.0;
    inst.lambda = 0.01;
    IntegerSolution sol = solve_integer(inst);
    CHECK(std::abs(sol.w[0]) <= 1.0 + 1e-9);
    // Oracle: scan w in [-1, 1] for the y=1 objective.
    auto obj = [&](double w) {
        return lsq_loss(inst, {w}) + inst.lambda * (inst.alpha * w * w + (1 - inst.alpha));
    };
    auto [wbest, vbest] = oracle::scan_min(obj, -1.0, 1.0, 2000000);
    CHECK(sol.v == doctest::Approx(vbest).epsilon(1e-6));
    CHECK(sol.w[0] == doctest::Approx(wbest).epsilon(1e-4));
}

TEST_CASE("integer solver handles the logistic loss") {
    // One weight, labels +-1; compare the returned optimum against a scan.
    MipInstance inst;
    inst.m = 4;
    inst.n = 1;
    inst.A = {1.0, 2.0, -1.0, 0.5};
    inst.b = {1.0, 1.0, -1.0, 1.0};  // perfectly separable by w > 0
    inst.loss = LossKind::logistic;
    inst.groups = {{0}};
    inst.lambda = 0.5;
    inst.alpha = 0.5;
    inst.M = 3.0;

    IntegerSolution sol = solve_integer(inst);
    auto logistic = [&](double w) {
        double v = 0.0;
        for (int i = 0; i < inst.m; ++i)
            v += std::log(1.0 + std::exp(-inst.b[static_cast<std::size_t>(i)] *
                                         inst.A[static_cast<std::size_t>(i)] * w));
        return v;
    };
    auto obj1 = [&](double w) {
        return logistic(w) + inst.lambda * (inst.alpha * w * w + (1 - inst.alpha));
    };
    auto [w1, v1] = oracle::scan_min(obj1, -3.0, 3.0, 2000000);
    double v0 = logistic(0.0);
    double want = std::min(v0, v1);
    CHECK(sol.v == doctest::Approx(want).epsilon(1e-7));
    if (v1 < v0) CHECK(sol.w[0] == doctest::Approx(w1).epsilon(1e-3));
}

TEST_CASE("big-M relaxation value matches the one-dimensional scan oracle") {
    RelaxSolution sol = solve_bigm_relaxation(one_dim_instance());
    // Reduced objective: (w-1)^2 + 0.5 w^2 + 0.25 |w|.
    auto obj = [](double w) {
        return (w - 1) * (w - 1) + 0.5 * w * w + 0.25 * std::abs(w);
    };
    auto [wbest, vbest] = oracle::scan_min(obj, -2.0, 2.0, 4000000);
    CHECK(vbest == doctest::Approx(47.0 / 96.0).epsilon(1e-6));  // w = 7/12
    CHECK(sol.v == doctest::Approx(vbest).epsilon(1e-5));
    CHECK(sol.w[0] == doctest::Approx(7.0 / 12.0).epsilon(1e-3));
}

TEST_CASE("perspective relaxation value matches the one-dimensional scan oracle") {
    RelaxSolution sol = solve_pr_relaxation(one_dim_instance());
    // Inner z(w) = |w| here, so the projected objective is (w-1)^2 + |w|.
    auto obj = [](double w) { return (w - 1) * (w - 1) + std::abs(w); };
    auto [wbest, vbest] = oracle::scan_min(obj, -2.0, 2.0, 4000000);
    CHECK(vbest == doctest::Approx(0.75).epsilon(1e-9));
    CHECK(sol.v == doctest::Approx(0.75).epsilon(1e-5));
    CHECK(sol.w[0] == doctest::Approx(0.5).epsilon(1e-3));
}

TEST_CASE("a zero-target instance solves to zero everywhere") {
    MipInstance inst = one_dim_instance();
    inst.b = {0.0};
    CHECK(solve_bigm_relaxation(inst).v == doctest::Approx(0.0).epsilon(1e-9));
    RelaxSolution pr = solve_pr_relaxation(inst);
    CHECK(pr.v == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(pr.w[0] == doctest::Approx(0.0).epsilon(1e-4));
}

TEST_CASE("ordering and joint-route agreement hold on the crafted instance") {
    RelaxationResult res = verify_ordering(one_dim_instance());
    CHECK(res.v_bigm == doctest::Approx(47.0 / 96.0).epsilon(1e-4));
    CHECK(res.v_pr == doctest::Approx(0.75).epsilon(1e-4));
    CHECK(res.v_int == doctest::Approx(5.0 / 6.0).epsilon(1e-9));
    CHECK(res.gap_bigm == doctest::Approx(res.v_int - res.v_bigm));
    CHECK(res.gap_pr == doctest::Approx(res.v_int - res.v_pr));
    CHECK(res.pr_tighter);
    CHECK(std::abs(res.v_pr - res.v_joint) <= 1e-6);
}

TEST_CASE("lambda = 0 collapses all three values to the plain optimum") {
    MipInstance inst = one_dim_instance();
    inst.lambda = 0.0;
    RelaxationResult res = verify_ordering(inst);
    CHECK(res.v_int == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(res.v_bigm == doctest::Approx(0.0).epsilon(1e-7));
    CHECK(res.v_pr == doctest::Approx(0.0).epsilon(1e-7));
}

TEST_CASE("random instances are deterministic per seed and in-contract") {
    MipInstance a = random_instance(12345);
    MipInstance b = random_instance(12345);
    CHECK(a.A == b.A);
    CHECK(a.b == b.b);
    CHECK(a.groups == b.groups);
    CHECK(a.m == 20);
    CHECK(a.n <= 12);
    CHECK(a.num_groups() <= 6);
    CHECK_NOTHROW(a.validate());

    MipInstance c = random_instance(12346);
    CHECK(a.A != c.A);
}

TEST_CASE("sandwich ordering holds on a small random batch") {
    // The full 200-instance batch belongs to the acceptance gate; a handful
    // here keeps the unit suite fast while still exercising every solver.
    auto rows = run_relax_batch(777, 6, 1e-6, 1);
    REQUIRE(rows.size() == 6);
    for (const auto& r : rows) {
        CHECK(r.v_bigm <= r.v_pr + 1e-6);
        CHECK(r.v_pr <= r.v_int + 1e-6);
        CHECK(r.gap_bigm == doctest::Approx(r.v_int - r.v_bigm));
        CHECK(r.gap_pr == doctest::Approx(r.v_int - r.v_pr));
        CHECK(r.pr_tighter == (r.gap_pr < r.gap_bigm));
        CHECK(r.joint_dev <= 1e-6);
    }

    // Same seed, same batch; determinism end to end.
    auto again = run_relax_batch(777, 6, 1e-6, 1);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        CHECK(rows[i].v_bigm == again[i].v_bigm);
        CHECK(rows[i].v_pr == again[i].v_pr);
        CHECK(rows[i].v_int == again[i].v_int);
    }
}

TEST_CASE("integer optima keep pruned groups at exactly zero") {
    for (std::uint64_t seed : {11ULL, 22ULL, 33ULL}) {
        MipInstance inst = random_instance(seed);
        IntegerSolution sol = solve_integer(inst);
        for (int g = 0; g < inst.num_groups(); ++g)
            if (sol.y[static_cast<std::size_t>(g)] == 0)
                for (int j : inst.groups[static_cast<std::size_t>(g)])
                    CHECK(sol.w[static_cast<std::size_t>(j)] == 0.0);
    }
}

TEST_CASE("batch CSV has the documented columns and row count") {
    auto rows = run_relax_batch(5, 3, 1e-6, 1);
    std::string csv = batch_csv(rows);
    std::istringstream ss(csv);
    std::string schema;
    std::string header;
    std::getline(ss, schema);
    std::getline(ss, header);
    CHECK(schema == "# schema=spr.relax_batch.v1");
    CHECK(header == "seed,N,n,v_bigm,v_pr,v_int,gap_bigm,gap_pr,pr_tighter");
    int lines = 0;
    std::string line;
    while (std::getline(ss, line))
        if (!line.empty()) ++lines;
    CHECK(lines == 3);
}
