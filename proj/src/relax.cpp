#include "spr/relax.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <functional>
#include <limits>
#include <numeric>
#include <sstream>
#include <thread>

#include "spr/penalty.hpp"
#include "spr/rng.hpp"

namespace spr {

namespace {

double softplus(double x) {
    return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

void matvec(int m, int n, const std::vector<double>& A, const std::vector<double>& x,
            std::vector<double>& out) {
    out.assign(m, 0.0);
    for (int i = 0; i < m; ++i) {
        double s = 0.0;
        const double* row = A.data() + static_cast<std::size_t>(i) * n;
        for (int j = 0; j < n; ++j) s += row[j] * x[j];
        out[i] = s;
    }
}

double loss_value(const MipInstance& inst, const std::vector<double>& w,
                  std::vector<double>& scratch) {
    matvec(inst.m, inst.n, inst.A, w, scratch);
    double L = 0.0;
    if (inst.loss == LossKind::least_squares) {
        for (int i = 0; i < inst.m; ++i) {
            double r = scratch[i] - inst.b[i];
            L += r * r;
        }
    } else {
        for (int i = 0; i < inst.m; ++i) L += softplus(-inst.b[i] * scratch[i]);
    }
    return L;
}

// g is overwritten with dL/dw.
void loss_grad(const MipInstance& inst, const std::vector<double>& w,
               std::vector<double>& g, std::vector<double>& scratch) {
    matvec(inst.m, inst.n, inst.A, w, scratch);
    g.assign(inst.n, 0.0);
    for (int i = 0; i < inst.m; ++i) {
        double d;
        if (inst.loss == LossKind::least_squares)
            d = 2.0 * (scratch[i] - inst.b[i]);
        else
            d = -inst.b[i] * sigmoid(-inst.b[i] * scratch[i]);
        const double* row = inst.A.data() + static_cast<std::size_t>(i) * inst.n;
        for (int j = 0; j < inst.n; ++j) g[j] += d * row[j];
    }
}

// In-place Cholesky solve of the SPD system Q x = c (k x k, row-major).
std::vector<double> chol_solve(std::vector<double> Q, std::vector<double> c, int k) {
    for (int i = 0; i < k; ++i) {
        for (int j = 0; j <= i; ++j) {
            double s = Q[static_cast<std::size_t>(i) * k + j];
            for (int p = 0; p < j; ++p)
                s -= Q[static_cast<std::size_t>(i) * k + p] *
                     Q[static_cast<std::size_t>(j) * k + p];
            if (i == j) {
                require(s > 0.0, "normal-equation matrix is not positive definite");
                Q[static_cast<std::size_t>(i) * k + j] = std::sqrt(s);
            } else {
                Q[static_cast<std::size_t>(i) * k + j] =
                    s / Q[static_cast<std::size_t>(j) * k + j];
            }
        }
    }
    // forward then backward substitution
    for (int i = 0; i < k; ++i) {
        double s = c[i];
        for (int p = 0; p < i; ++p) s -= Q[static_cast<std::size_t>(i) * k + p] * c[p];
        c[i] = s / Q[static_cast<std::size_t>(i) * k + i];
    }
    for (int i = k - 1; i >= 0; --i) {
        double s = c[i];
        for (int p = i + 1; p < k; ++p)
            s -= Q[static_cast<std::size_t>(p) * k + i] * c[p];
        c[i] = s / Q[static_cast<std::size_t>(i) * k + i];
    }
    return c;
}

double lambda_max_sym(const std::vector<double>& Q, int k) {
    std::vector<double> v(k, 1.0 / std::sqrt(static_cast<double>(k))), t(k);
    double lam = 0.0;
    for (int it = 0; it < 80; ++it) {
        for (int i = 0; i < k; ++i) {
            double s = 0.0;
            for (int j = 0; j < k; ++j) s += Q[static_cast<std::size_t>(i) * k + j] * v[j];
            t[i] = s;
        }
        double nrm = 0.0;
        for (double x : t) nrm += x * x;
        nrm = std::sqrt(nrm);
        if (nrm == 0.0) return 0.0;
        lam = nrm;
        for (int i = 0; i < k; ++i) v[i] = t[i] / nrm;
    }
    return lam;
}

void warn_zero_ridge() {
    static std::atomic<bool> warned{false};
    if (!warned.exchange(true))
        std::fprintf(stderr,
                     "warning: lambda*alpha = 0; adding 1e-12 ridge to keep the "
                     "subproblem solvable\n");
}

// Columns of A restricted to J, as a dense m x k matrix.
std::vector<double> gather_cols(const MipInstance& inst, const std::vector<int>& J) {
    int k = static_cast<int>(J.size());
    std::vector<double> out(static_cast<std::size_t>(inst.m) * k);
    for (int i = 0; i < inst.m; ++i)
        for (int j = 0; j < k; ++j)
            out[static_cast<std::size_t>(i) * k + j] =
                inst.A[static_cast<std::size_t>(i) * inst.n + J[j]];
    return out;
}

struct Subproblem {
    const MipInstance& inst;
    std::vector<int> J;        // active global column indices
    std::vector<double> Asub;  // m x k
    double ridge;              // lambda*alpha (possibly epsilon-floored)

    Subproblem(const MipInstance& inst_, std::vector<int> J_, double ridge_)
        : inst(inst_), J(std::move(J_)), Asub(gather_cols(inst_, J)), ridge(ridge_) {}

    int k() const { return static_cast<int>(J.size()); }

    double value(const std::vector<double>& x, std::vector<double>& ax) const {
        matvec(inst.m, k(), Asub, x, ax);
        double f = 0.0;
        if (inst.loss == LossKind::least_squares) {
            for (int i = 0; i < inst.m; ++i) {
                double r = ax[i] - inst.b[i];
                f += r * r;
            }
        } else {
            for (int i = 0; i < inst.m; ++i) f += softplus(-inst.b[i] * ax[i]);
        }
        for (double v : x) f += ridge * v * v;
        return f;
    }

    void grad(const std::vector<double>& x, std::vector<double>& g,
              std::vector<double>& ax) const {
        matvec(inst.m, k(), Asub, x, ax);
        g.assign(k(), 0.0);
        for (int i = 0; i < inst.m; ++i) {
            double d;
            if (inst.loss == LossKind::least_squares)
                d = 2.0 * (ax[i] - inst.b[i]);
            else
                d = -inst.b[i] * sigmoid(-inst.b[i] * ax[i]);
            const double* row = Asub.data() + static_cast<std::size_t>(i) * k();
            for (int j = 0; j < k(); ++j) g[j] += d * row[j];
        }
        for (int j = 0; j < k(); ++j) g[j] += 2.0 * ridge * x[j];
    }
};

std::vector<double> solve_ls_unbounded(const Subproblem& sp) {
    int k = sp.k();
    std::vector<double> Q(static_cast<std::size_t>(k) * k, 0.0), c(k, 0.0);
    for (int i = 0; i < sp.inst.m; ++i) {
        const double* row = sp.Asub.data() + static_cast<std::size_t>(i) * k;
        for (int a = 0; a < k; ++a) {
            c[a] += row[a] * sp.inst.b[i];
            for (int b2 = 0; b2 <= a; ++b2) Q[static_cast<std::size_t>(a) * k + b2] += row[a] * row[b2];
        }
    }
    for (int a = 0; a < k; ++a) {
        for (int b2 = a + 1; b2 < k; ++b2)
            Q[static_cast<std::size_t>(a) * k + b2] = Q[static_cast<std::size_t>(b2) * k + a];
        Q[static_cast<std::size_t>(a) * k + a] += sp.ridge;
    }
    return chol_solve(std::move(Q), std::move(c), k);
}

std::vector<double> solve_logistic_unbounded(const Subproblem& sp, double bound) {
    int k = sp.k();
    std::vector<double> x(k, 0.0), g(k), ax, H, d;
    for (int iter = 0; iter < 200; ++iter) {
        sp.grad(x, g, ax);
        double gn = 0.0;
        for (double v : g) gn += v * v;
        if (std::sqrt(gn) < 1e-10) break;
        // Hessian: Asub^T diag(s(t)s(-t)) Asub + 2*ridge*I
        H.assign(static_cast<std::size_t>(k) * k, 0.0);
        for (int i = 0; i < sp.inst.m; ++i) {
            double t = sp.inst.b[i] * ax[i];
            double dd = sigmoid(t) * sigmoid(-t);
            const double* row = sp.Asub.data() + static_cast<std::size_t>(i) * k;
            for (int a = 0; a < k; ++a)
                for (int b2 = 0; b2 <= a; ++b2)
                    H[static_cast<std::size_t>(a) * k + b2] += dd * row[a] * row[b2];
        }
        for (int a = 0; a < k; ++a) {
            for (int b2 = a + 1; b2 < k; ++b2)
                H[static_cast<std::size_t>(a) * k + b2] =
                    H[static_cast<std::size_t>(b2) * k + a];
            H[static_cast<std::size_t>(a) * k + a] += 2.0 * sp.ridge + 1e-12;
        }
        std::vector<double> rhs(k);
        for (int j = 0; j < k; ++j) rhs[j] = -g[j];
        d = chol_solve(H, rhs, k);
        double slope = 0.0;
        for (int j = 0; j < k; ++j) slope += g[j] * d[j];
        double f0 = sp.value(x, ax);
        double step = 1.0;
        while (step > 1e-12) {
            std::vector<double> xt(k);
            for (int j = 0; j < k; ++j) xt[j] = x[j] + step * d[j];
            if (sp.value(xt, ax) <= f0 + 1e-4 * step * slope) {
                x = std::move(xt);
                break;
            }
            step *= 0.5;
        }
        double xinf = 0.0;
        for (double v : x) xinf = std::max(xinf, std::abs(v));
        if (xinf > 100.0 * bound) break;  // heading to the box anyway
    }
    return x;
}

// Projected gradient on the box [-M, M]^k with a fixed 1/L step; used when
// the unconstrained optimum violates the bounds.
std::vector<double> solve_box_constrained(const Subproblem& sp, double M) {
    int k = sp.k();
    std::vector<double> Q(static_cast<std::size_t>(k) * k, 0.0);
    for (int i = 0; i < sp.inst.m; ++i) {
        const double* row = sp.Asub.data() + static_cast<std::size_t>(i) * k;
        for (int a = 0; a < k; ++a)
            for (int b2 = 0; b2 <= a; ++b2)
                Q[static_cast<std::size_t>(a) * k + b2] += row[a] * row[b2];
    }
    for (int a = 0; a < k; ++a)
        for (int b2 = a + 1; b2 < k; ++b2)
            Q[static_cast<std::size_t>(a) * k + b2] = Q[static_cast<std::size_t>(b2) * k + a];
    double lmax = lambda_max_sym(Q, k);
    double L = (sp.inst.loss == LossKind::least_squares ? 2.0 * lmax : 0.25 * lmax) +
               2.0 * sp.ridge;
    double step = 1.0 / (1.1 * L + 1e-12);

    std::vector<double> x(k, 0.0), g(k), ax;
    double fprev = sp.value(x, ax);
    int stalled = 0;
    for (int iter = 0; iter < 300000; ++iter) {
        sp.grad(x, g, ax);
        for (int j = 0; j < k; ++j)
            x[j] = std::clamp(x[j] - step * g[j], -M, M);
        double f = sp.value(x, ax);
        if (fprev - f < 1e-15 * (1.0 + std::abs(f))) {
            if (++stalled >= 50) break;
        } else {
            stalled = 0;
        }
        fprev = f;
    }
    return x;
}

void clip_box(std::vector<double>& w, double M) {
    for (double& v : w) v = std::clamp(v, -M, M);
}

double norm2(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

// Multi-start projected subgradient descent over the box [-M, M]^n, with a
// geometric step-ladder polish from the incumbent. Warm starts always have
// their objective values counted before any descent.
struct MultistartResult {
    double f = std::numeric_limits<double>::infinity();
    std::vector<double> w;
};

MultistartResult multistart_subgradient(
    int n, double M, const std::function<double(const std::vector<double>&)>& value,
    const std::function<void(const std::vector<double>&, std::vector<double>&)>& subgrad,
    std::string_view stream, std::span<const std::vector<double>> seeds) {
    constexpr int kStarts = 50;
    constexpr int kMaxIters = 20000;
    constexpr int kWindow = 1000;
    constexpr double kStableTol = 1e-8;
    const double R = M * std::sqrt(static_cast<double>(n));

    MultistartResult best;
    best.w.assign(n, 0.0);
    std::vector<double> g(n);

    auto consider = [&](const std::vector<double>& w) {
        double f = value(w);
        if (f < best.f) {
            best.f = f;
            best.w = w;
        }
    };

    auto descend = [&](std::vector<double> w) {
        clip_box(w, M);
        consider(w);
        double f_loc = value(w);
        double anchor = f_loc;
        int since = 0;
        for (int k = 1; k <= kMaxIters; ++k) {
            subgrad(w, g);
            double gn = norm2(g);
            if (gn < 1e-15) break;
            double step = R / std::sqrt(static_cast<double>(k));
            for (int j = 0; j < n; ++j)
                w[j] = std::clamp(w[j] - step * g[j] / gn, -M, M);
            double f = value(w);
            if (f < f_loc) f_loc = f;
            if (f < best.f) {
                best.f = f;
                best.w = w;
            }
            if (anchor - f_loc > kStableTol) {
                anchor = f_loc;
                since = k;
            } else if (k - since >= kWindow) {
                break;
            }
        }
    };

    for (const auto& s : seeds) {
        std::vector<double> w = s;
        w.resize(n, 0.0);
        descend(std::move(w));
    }
    consider(std::vector<double>(n, 0.0));
    for (int s = 0; s < kStarts; ++s) {
        Rng rng(derive_seed(0x5052u, stream, static_cast<std::uint64_t>(s)));
        std::vector<double> w(n);
        for (int j = 0; j < n; ++j) w[j] = rng.uniform(-M, M);
        descend(std::move(w));
    }

    // Step-ladder polish around the incumbent.
    std::vector<double> w(n);
    for (double eta = 0.05 * std::max(1.0, M); eta > 1e-10; eta *= 0.55) {
        w = best.w;
        for (int t = 0; t < 80; ++t) {
            subgrad(w, g);
            double gn = norm2(g);
            if (gn < 1e-15) break;
            for (int j = 0; j < n; ++j)
                w[j] = std::clamp(w[j] - eta * g[j] / gn, -M, M);
            double f = value(w);
            if (f < best.f) {
                best.f = f;
                best.w = w;
            }
        }
    }
    return best;
}

}  // namespace

std::string loss_kind_name(LossKind k) {
    return k == LossKind::least_squares ? "least_squares" : "logistic";
}

LossKind loss_kind_from_name(const std::string& name) {
    if (name == "least_squares") return LossKind::least_squares;
    if (name == "logistic") return LossKind::logistic;
    throw ConfigError("unknown loss kind: " + name);
}

void MipInstance::validate() const {
    const auto check = [](bool cond, const char* msg) {
        if (!cond) throw ConfigError(msg);
    };
    check(m >= 1, "instance needs at least one row");
    check(n >= 1 && n <= 32, "instance dimension must be in [1, 32]");
    check(A.size() == static_cast<std::size_t>(m) * n, "design matrix size mismatch");
    check(b.size() == static_cast<std::size_t>(m), "target size mismatch");
    int N = num_groups();
    check(N >= 1 && N <= 12, "group count must be in [1, 12]");
    std::vector<int> seen(n, 0);
    for (const auto& grp : groups) {
        check(!grp.empty(), "empty group");
        for (int j : grp) {
            check(j >= 0 && j < n, "group index out of range");
            check(!seen[j], "groups overlap");
            seen[j] = 1;
        }
    }
    for (int j = 0; j < n; ++j) check(seen[j], "groups do not cover every variable");
    check(is_finite(lambda) && lambda >= 0.0, "lambda must be >= 0");
    check(is_finite(alpha) && alpha >= 0.0 && alpha <= 1.0, "alpha must be in [0,1]");
    check(is_finite(M) && M > 0.0, "M must be positive");
    for (double v : A) check(is_finite(v), "non-finite design entry");
    for (double v : b) check(is_finite(v), "non-finite target");
    if (loss == LossKind::logistic)
        for (double v : b)
            check(v == 1.0 || v == -1.0, "logistic targets must be +/-1");
}

nlohmann::json instance_to_json(const MipInstance& inst) {
    nlohmann::json j;
    j["schema"] = "spr.mip_instance.v1";
    j["m"] = inst.m;
    j["n"] = inst.n;
    std::vector<std::vector<double>> rows(inst.m);
    for (int i = 0; i < inst.m; ++i)
        rows[i].assign(inst.A.begin() + static_cast<std::ptrdiff_t>(i) * inst.n,
                       inst.A.begin() + static_cast<std::ptrdiff_t>(i + 1) * inst.n);
    j["A"] = rows;
    j["b"] = inst.b;
    j["loss"] = loss_kind_name(inst.loss);
    j["groups"] = inst.groups;
    j["lambda"] = inst.lambda;
    j["alpha"] = inst.alpha;
    j["M"] = inst.M;
    return j;
}

MipInstance instance_from_json(const nlohmann::json& j) {
    MipInstance inst;
    try {
        inst.m = j.at("m").get<int>();
        inst.n = j.at("n").get<int>();
        auto rows = j.at("A").get<std::vector<std::vector<double>>>();
        for (const auto& r : rows) {
            require(static_cast<int>(r.size()) == inst.n, "ragged design matrix");
            inst.A.insert(inst.A.end(), r.begin(), r.end());
        }
        inst.b = j.at("b").get<std::vector<double>>();
        inst.loss = loss_kind_from_name(j.at("loss").get<std::string>());
        inst.groups = j.at("groups").get<std::vector<std::vector<int>>>();
        inst.lambda = j.at("lambda").get<double>();
        inst.alpha = j.at("alpha").get<double>();
        inst.M = j.at("M").get<double>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("bad instance JSON: ") + e.what());
    }
    inst.validate();
    return inst;
}

MipInstance planted_instance(std::uint64_t seed, int m, int n, int N, LossKind loss,
                             double lambda, double alpha, double M, double sigma) {
    require(m >= 1 && n >= 1 && N >= 1 && N <= n, "bad instance shape");
    Rng rng(derive_seed(seed, "relax-instance"));
    MipInstance inst;
    inst.m = m;
    inst.n = n;
    inst.loss = loss;
    inst.lambda = lambda;
    inst.alpha = alpha;
    inst.M = M;

    std::vector<int> sizes(N, 1);
    for (int r = 0; r < n - N; ++r) sizes[rng.uniform_int(static_cast<std::uint64_t>(N))]++;
    int at = 0;
    for (int i = 0; i < N; ++i) {
        std::vector<int> grp(sizes[i]);
        std::iota(grp.begin(), grp.end(), at);
        at += sizes[i];
        inst.groups.push_back(std::move(grp));
    }

    inst.A.resize(static_cast<std::size_t>(m) * n);
    for (double& v : inst.A) v = rng.normal();

    std::vector<double> w_true(n, 0.0);
    for (const auto& grp : inst.groups) {
        if (rng.uniform() >= 0.6) continue;  // planted-zero group
        for (int j : grp) w_true[j] = rng.uniform(-0.8, 0.8);
    }

    std::vector<double> scores;
    matvec(m, n, inst.A, w_true, scores);
    inst.b.resize(m);
    for (int i = 0; i < m; ++i) {
        double s = scores[i] + sigma * rng.normal();
        inst.b[i] = loss == LossKind::least_squares ? s : (s >= 0.0 ? 1.0 : -1.0);
    }
    inst.validate();
    return inst;
}

MipInstance random_instance(std::uint64_t seed) {
    Rng rng(derive_seed(seed, "relax-shape"));
    int N = 2 + static_cast<int>(rng.uniform_int(5));                     // 2..6
    int n = N + static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(12 - N + 1)));
    LossKind loss = rng.uniform() < 0.8 ? LossKind::least_squares : LossKind::logistic;
    double lambda = std::exp(rng.uniform(std::log(0.2), std::log(5.0)));
    double alpha = rng.uniform(0.05, 0.95);
    double M = rng.uniform(0.6, 2.5);
    double sigma = rng.uniform(0.1, 0.6);
    return planted_instance(seed, 20, n, N, loss, lambda, alpha, M, sigma);
}

IntegerSolution solve_integer(const MipInstance& inst) {
    inst.validate();
    int N = inst.num_groups();
    double ridge = inst.lambda * inst.alpha;
    if (ridge == 0.0) {
        warn_zero_ridge();
        ridge = 1e-12;
    }

    IntegerSolution best;
    best.v = std::numeric_limits<double>::infinity();
    std::vector<double> scratch;

    for (std::uint32_t mask = 0; mask < (1u << N); ++mask) {
        std::vector<int> J;
        int active = 0;
        for (int i = 0; i < N; ++i)
            if (mask & (1u << i)) {
                ++active;
                J.insert(J.end(), inst.groups[i].begin(), inst.groups[i].end());
            }

        std::vector<double> wfull(inst.n, 0.0);
        if (!J.empty()) {
            std::sort(J.begin(), J.end());
            Subproblem sp(inst, J, ridge);
            std::vector<double> x = inst.loss == LossKind::least_squares
                                        ? solve_ls_unbounded(sp)
                                        : solve_logistic_unbounded(sp, inst.M);
            bool in_box = true;
            for (double v : x)
                if (std::abs(v) > inst.M * (1.0 + 1e-12) + 1e-15) in_box = false;
            if (!in_box) x = solve_box_constrained(sp, inst.M);
            for (int j = 0; j < sp.k(); ++j)
                wfull[sp.J[j]] = std::clamp(x[j], -inst.M, inst.M);
        }

        double v = loss_value(inst, wfull, scratch);
        double sq = 0.0;
        for (double x : wfull) sq += x * x;
        v += inst.lambda * (inst.alpha * sq + (1.0 - inst.alpha) * active);
        if (v < best.v) {
            best.v = v;
            best.w = wfull;
            best.y.assign(N, 0);
            for (int i = 0; i < N; ++i) best.y[i] = (mask >> i) & 1u;
        }
    }
    return best;
}

RelaxSolution solve_bigm_relaxation(const MipInstance& inst,
                                    std::span<const std::vector<double>> seeds) {
    inst.validate();
    std::vector<double> scratch, lgrad;
    const double lam = inst.lambda, a = inst.alpha, M = inst.M;

    auto value = [&](const std::vector<double>& w) {
        double f = loss_value(inst, w, scratch);
        double sq = 0.0;
        for (double v : w) sq += v * v;
        double lin = 0.0;
        for (const auto& grp : inst.groups) {
            double mx = 0.0;
            for (int j : grp) mx = std::max(mx, std::abs(w[j]));
            lin += std::min(1.0, mx / M);
        }
        return f + lam * (a * sq + (1.0 - a) * lin);
    };
    auto subgrad = [&](const std::vector<double>& w, std::vector<double>& g) {
        loss_grad(inst, w, g, scratch);
        for (int j = 0; j < inst.n; ++j) g[j] += 2.0 * lam * a * w[j];
        for (const auto& grp : inst.groups) {
            double mx = 0.0;
            int jm = -1;
            for (int j : grp) {
                double av = std::abs(w[j]);
                if (av > mx) {
                    mx = av;
                    jm = j;
                }
            }
            if (jm >= 0 && mx / M <= 1.0)
                g[jm] += lam * (1.0 - a) / M * (w[jm] > 0.0 ? 1.0 : -1.0);
        }
    };

    MultistartResult r =
        multistart_subgradient(inst.n, M, value, subgrad, "relax-bigm", seeds);
    RelaxSolution out;
    out.v = r.f;
    out.w = std::move(r.w);
    for (const auto& grp : inst.groups) {
        double mx = 0.0;
        for (int j : grp) mx = std::max(mx, std::abs(out.w[j]));
        out.y.push_back(std::min(1.0, mx / M));
    }
    return out;
}

RelaxSolution solve_pr_relaxation(const MipInstance& inst,
                                  std::span<const std::vector<double>> seeds) {
    inst.validate();
    std::vector<double> scratch, wbuf;
    const double lam = inst.lambda, a = inst.alpha, M = inst.M;

    auto value = [&](const std::vector<double>& w) {
        double f = loss_value(inst, w, scratch);
        for (const auto& grp : inst.groups) {
            wbuf.resize(grp.size());
            for (std::size_t t = 0; t < grp.size(); ++t) wbuf[t] = w[grp[t]];
            f += lam * spr_value(wbuf, a, M);
        }
        return f;
    };
    auto subgrad = [&](const std::vector<double>& w, std::vector<double>& g) {
        loss_grad(inst, w, g, scratch);
        for (const auto& grp : inst.groups) {
            wbuf.resize(grp.size());
            for (std::size_t t = 0; t < grp.size(); ++t) wbuf[t] = w[grp[t]];
            std::vector<double> zg = spr_grad(wbuf, a, M);
            for (std::size_t t = 0; t < grp.size(); ++t) g[grp[t]] += lam * zg[t];
        }
    };

    MultistartResult r =
        multistart_subgradient(inst.n, M, value, subgrad, "relax-pr", seeds);
    RelaxSolution out;
    out.v = r.f;
    out.w = std::move(r.w);
    for (const auto& grp : inst.groups) {
        wbuf.resize(grp.size());
        for (std::size_t t = 0; t < grp.size(); ++t) wbuf[t] = out.w[grp[t]];
        out.y.push_back(ytilde(wbuf, a, M).y);
    }
    return out;
}

namespace {

double pr_value_at(const MipInstance& inst, const std::vector<double>& w,
                   std::vector<double>& scratch, std::vector<double>& wbuf) {
    double f = loss_value(inst, w, scratch);
    for (const auto& grp : inst.groups) {
        wbuf.resize(grp.size());
        for (std::size_t t = 0; t < grp.size(); ++t) wbuf[t] = w[grp[t]];
        f += inst.lambda * spr_value(wbuf, inst.alpha, inst.M);
    }
    return f;
}

// Perspective objective evaluated through the (w, y) form at the closed-form
// indicator: a*||w||^2/y + (1-a)*y per group, never the eliminated z branch.
double joint_value_at(const MipInstance& inst, const std::vector<double>& w,
                      std::vector<double>& scratch, std::vector<double>& wbuf) {
    double f = loss_value(inst, w, scratch);
    for (const auto& grp : inst.groups) {
        wbuf.resize(grp.size());
        double sq = 0.0;
        for (std::size_t t = 0; t < grp.size(); ++t) {
            wbuf[t] = w[grp[t]];
            sq += wbuf[t] * wbuf[t];
        }
        YResult yr = ytilde(wbuf, inst.alpha, inst.M);
        if (yr.regime == Regime::zero) continue;
        f += inst.lambda * (inst.alpha * sq / yr.y + (1.0 - inst.alpha) * yr.y);
    }
    return f;
}

}  // namespace

RelaxSolution solve_pr_joint(const MipInstance& inst,
                             std::span<const std::vector<double>> seeds) {
    inst.validate();
    const int n = inst.n;
    const int N = inst.num_groups();
    const double lam = inst.lambda, a = inst.alpha, M = inst.M;
    const double R = M * std::sqrt(static_cast<double>(n));

    std::vector<double> scratch, wbuf, g(n), y(N);
    double best_f = std::numeric_limits<double>::infinity();
    std::vector<double> best_w(n, 0.0);

    auto consider = [&](const std::vector<double>& w) {
        double f = joint_value_at(inst, w, scratch, wbuf);
        if (f < best_f) {
            best_f = f;
            best_w = w;
        }
    };

    auto update_y = [&](const std::vector<double>& w) {
        for (int i = 0; i < N; ++i) {
            const auto& grp = inst.groups[i];
            wbuf.resize(grp.size());
            for (std::size_t t = 0; t < grp.size(); ++t) wbuf[t] = w[grp[t]];
            y[i] = ytilde(wbuf, a, M).y;
        }
    };

    // One block of weight descent at fixed indicators; returns subgradient norm.
    auto w_block = [&](std::vector<double>& w, int steps, long& counter,
                       double fixed_eta) {
        for (int t = 0; t < steps; ++t) {
            loss_grad(inst, w, g, scratch);
            for (int i = 0; i < N; ++i) {
                for (int j : inst.groups[i]) {
                    if (y[i] > 0.0)
                        g[j] += 2.0 * lam * a * w[j] / y[i];
                    else
                        g[j] = 0.0;
                }
            }
            double gn = norm2(g);
            if (gn < 1e-15) return;
            ++counter;
            double eta = fixed_eta > 0.0
                             ? fixed_eta
                             : R / std::sqrt(static_cast<double>(counter));
            for (int i = 0; i < N; ++i) {
                double cap = M * y[i];
                for (int j : inst.groups[i])
                    w[j] = std::clamp(w[j] - eta * g[j] / gn, -cap, cap);
            }
        }
    };

    auto descend = [&](std::vector<double> w) {
        clip_box(w, M);
        consider(w);
        double f_loc = joint_value_at(inst, w, scratch, wbuf);
        double anchor = f_loc;
        int since = 0;
        long counter = 0;
        for (int outer = 1; outer <= 400; ++outer) {
            update_y(w);
            w_block(w, 25, counter, 0.0);
            double f = joint_value_at(inst, w, scratch, wbuf);
            if (f < f_loc) f_loc = f;
            if (f < best_f) {
                best_f = f;
                best_w = w;
            }
            if (anchor - f_loc > 1e-8) {
                anchor = f_loc;
                since = outer;
            } else if (outer - since >= 40) {
                break;
            }
        }
    };

    for (const auto& s : seeds) {
        std::vector<double> w = s;
        w.resize(n, 0.0);
        descend(std::move(w));
    }
    for (int s = 0; s < 10; ++s) {
        Rng rng(derive_seed(0x5052u, "relax-joint", static_cast<std::uint64_t>(s)));
        std::vector<double> w(n);
        for (int j = 0; j < n; ++j) w[j] = rng.uniform(-M, M);
        descend(std::move(w));
    }

    // Ladder polish: alternate one closed-form indicator update with one
    // fixed-step weight move.
    std::vector<double> w(n);
    for (double eta = 0.05 * std::max(1.0, M); eta > 1e-10; eta *= 0.55) {
        w = best_w;
        long counter = 0;
        for (int t = 0; t < 60; ++t) {
            update_y(w);
            w_block(w, 1, counter, eta);
            consider(w);
        }
    }

    RelaxSolution out;
    out.v = best_f;
    out.w = best_w;
    for (const auto& grp : inst.groups) {
        wbuf.resize(grp.size());
        for (std::size_t t = 0; t < grp.size(); ++t) wbuf[t] = out.w[grp[t]];
        out.y.push_back(ytilde(wbuf, a, M).y);
    }
    return out;
}

RelaxationResult verify_ordering(const MipInstance& inst, double tol) {
    inst.validate();
    RelaxationResult res;

    IntegerSolution isol = solve_integer(inst);
    res.v_int = isol.v;
    res.y_int = isol.y;
    res.w_int = isol.w;

    std::vector<std::vector<double>> pr_seeds{isol.w};
    RelaxSolution pr = solve_pr_relaxation(inst, pr_seeds);

    std::vector<std::vector<double>> joint_seeds{isol.w, pr.w};
    RelaxSolution joint = solve_pr_joint(inst, joint_seeds);

    // Final candidate exchange: both routes minimize the same function, so
    // each result must also be counted by the other route's evaluator.
    {
        std::vector<double> scratch, wbuf;
        double pv = pr_value_at(inst, joint.w, scratch, wbuf);
        if (pv < pr.v) {
            pr.v = pv;
            pr.w = joint.w;
            pr.y.clear();
            for (const auto& grp : inst.groups) {
                wbuf.resize(grp.size());
                for (std::size_t t = 0; t < grp.size(); ++t) wbuf[t] = pr.w[grp[t]];
                pr.y.push_back(ytilde(wbuf, inst.alpha, inst.M).y);
            }
        }
        double jv = joint_value_at(inst, pr.w, scratch, wbuf);
        if (jv < joint.v) {
            joint.v = jv;
            joint.w = pr.w;
        }
    }

    std::vector<std::vector<double>> bigm_seeds{pr.w, isol.w, joint.w};
    RelaxSolution bm = solve_bigm_relaxation(inst, bigm_seeds);

    res.v_pr = pr.v;
    res.w_pr = pr.w;
    res.y_pr = pr.y;
    res.v_joint = joint.v;
    res.w_joint = joint.w;
    res.v_bigm = bm.v;
    res.w_bigm = bm.w;
    res.gap_bigm = res.v_int - res.v_bigm;
    res.gap_pr = res.v_int - res.v_pr;
    res.pr_tighter = res.gap_pr < res.gap_bigm;

    auto fail = [&](const std::string& what) {
        std::ostringstream msg;
        msg.precision(17);
        msg << "relaxation ordering violated (" << what << "): v_bigm=" << res.v_bigm
            << " v_pr=" << res.v_pr << " v_joint=" << res.v_joint
            << " v_int=" << res.v_int;
        throw OrderingError(msg.str());
    };
    if (!(res.v_bigm <= res.v_pr + tol)) fail("big-M above perspective");
    if (!(res.v_pr <= res.v_int + tol)) fail("perspective above integer optimum");
    if (!(std::abs(res.v_pr - res.v_joint) <= tol)) fail("joint route disagrees");
    return res;
}

std::vector<BatchRow> run_relax_batch(std::uint64_t seed, int count, double tol,
                                      int threads) {
    require(count >= 1, "batch size must be positive");
    threads = std::clamp(threads, 1, count);
    std::vector<BatchRow> rows(count);

    auto work = [&](int lo, int hi, std::exception_ptr& err) {
        try {
            for (int i = lo; i < hi; ++i) {
                std::uint64_t s = derive_seed(seed, "relax-batch", static_cast<std::uint64_t>(i));
                MipInstance inst = random_instance(s);
                RelaxationResult r = verify_ordering(inst, tol);
                rows[i] = BatchRow{s,          inst.num_groups(), inst.n,
                                   r.v_bigm,   r.v_pr,            r.v_int,
                                   r.gap_bigm, r.gap_pr,          r.pr_tighter,
                                   std::abs(r.v_pr - r.v_joint)};
            }
        } catch (...) {
            err = std::current_exception();
        }
    };

    if (threads == 1) {
        std::exception_ptr err;
        work(0, count, err);
        if (err) std::rethrow_exception(err);
    } else {
        std::vector<std::thread> pool;
        std::vector<std::exception_ptr> errs(threads);
        int chunk = (count + threads - 1) / threads;
        for (int t = 0; t < threads; ++t) {
            int lo = t * chunk, hi = std::min(count, lo + chunk);
            if (lo >= hi) break;
            pool.emplace_back(work, lo, hi, std::ref(errs[t]));
        }
        for (auto& th : pool) th.join();
        for (auto& e : errs)
            if (e) std::rethrow_exception(e);
    }
    return rows;
}

std::string batch_csv(const std::vector<BatchRow>& rows) {
    std::ostringstream out;
    out << "# schema=spr.relax_batch.v1\n";
    out << "seed,N,n,v_bigm,v_pr,v_int,gap_bigm,gap_pr,pr_tighter\n";
    out.precision(17);
    for (const auto& r : rows)
        out << r.seed << ',' << r.N << ',' << r.n << ',' << r.v_bigm << ',' << r.v_pr
            << ',' << r.v_int << ',' << r.gap_bigm << ',' << r.gap_pr << ','
            << (r.pr_tighter ? 1 : 0) << '\n';
    return out.str();
}

}  // namespace spr
