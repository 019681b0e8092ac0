#include "spr/penalty.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace spr {

namespace {

struct Norms {
    double l2sq = 0.0;
    double l2 = 0.0;
    double linf = 0.0;
    std::size_t argmax = 0;  // lowest index attaining |w_j| = linf
};

Norms norms_of(std::span<const double> w) {
    Norms n;
    for (std::size_t j = 0; j < w.size(); ++j) {
        double v = w[j];
        require(is_finite(v), "non-finite entity weight");
        n.l2sq += v * v;
        double a = std::abs(v);
        if (a > n.linf) {
            n.linf = a;
            n.argmax = j;
        }
    }
    n.l2 = std::sqrt(n.l2sq);
    return n;
}

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

}  // namespace

std::string regime_name(Regime r) {
    switch (r) {
        case Regime::zero: return "zero";
        case Regime::interior: return "interior";
        case Regime::lower_clamp: return "lower-clamp";
        case Regime::upper_clamp: return "upper-clamp";
    }
    throw Error("unknown regime");
}

YResult ytilde(std::span<const double> w, double alpha, double M) {
    require(M > 0.0, "M must be positive");
    require(alpha >= 0.0 && alpha <= 1.0, "alpha must be in [0,1]");
    Norms n = norms_of(w);
    if (n.linf == 0.0) return {0.0, Regime::zero};

    double lower = n.linf / M;
    if (lower >= 1.0) return {1.0, Regime::upper_clamp};
    if (alpha >= 1.0) return {1.0, Regime::upper_clamp};
    double root = alpha <= 0.0 ? 0.0 : std::sqrt(alpha / (1.0 - alpha)) * n.l2;
    if (root >= 1.0) return {1.0, Regime::upper_clamp};
    if (root <= lower) return {lower, Regime::lower_clamp};
    return {root, Regime::interior};
}

double spr_value(std::span<const double> w, double alpha, double M, ZForm form) {
    YResult yr = ytilde(w, alpha, M);
    Norms n = norms_of(w);
    if (yr.regime == Regime::zero) return 0.0;

    if (form == ZForm::legacy) {
        // Older case coefficients, kept only for comparison.
        switch (yr.regime) {
            case Regime::interior:
                return std::sqrt((1.0 - alpha) / alpha) * (1.0 + alpha) * n.l2;
            case Regime::lower_clamp:
                return M / n.linf * n.l2sq + (1.0 - alpha) * n.linf / M;
            default:
                return n.l2sq + (1.0 - alpha);
        }
    }

    switch (yr.regime) {
        case Regime::interior:
            return 2.0 * std::sqrt(alpha * (1.0 - alpha)) * n.l2;
        case Regime::lower_clamp:
            // alpha*||w||^2/y at y=linf/M, written without dividing by y.
            return alpha * M * n.l2sq / n.linf + (1.0 - alpha) * n.linf / M;
        case Regime::upper_clamp:
            return alpha * n.l2sq + (1.0 - alpha);
        case Regime::zero:
            return 0.0;
    }
    throw Error("unreachable");
}

std::vector<double> spr_grad(std::span<const double> w, double alpha, double M) {
    YResult yr = ytilde(w, alpha, M);
    Norms n = norms_of(w);
    std::vector<double> g(w.size(), 0.0);

    switch (yr.regime) {
        case Regime::zero:
            break;  // subgradient selection at the kink: zero vector
        case Regime::interior: {
            // Envelope property: dz/dy = 0 at the root, so only the explicit
            // w dependence survives.
            double c = 2.0 * std::sqrt(alpha * (1.0 - alpha)) / n.l2;
            for (std::size_t j = 0; j < w.size(); ++j) g[j] = c * w[j];
            break;
        }
        case Regime::upper_clamp:
            for (std::size_t j = 0; j < w.size(); ++j) g[j] = 2.0 * alpha * w[j];
            break;
        case Regime::lower_clamp: {
            std::size_t jm = n.argmax;
            double s = sign(w[jm]);
            for (std::size_t j = 0; j < w.size(); ++j) {
                if (j == jm)
                    g[j] = alpha * M * (2.0 * w[jm] * n.linf - n.l2sq * s) /
                               (n.linf * n.linf) +
                           (1.0 - alpha) * s / M;
                else
                    g[j] = 2.0 * alpha * M * w[j] / n.linf;
            }
            break;
        }
    }
    return g;
}

PenaltyEval spr_eval(std::span<const double> w, double alpha, double M) {
    PenaltyEval e;
    YResult yr = ytilde(w, alpha, M);
    e.ytilde = yr.y;
    e.regime = yr.regime;
    e.value = spr_value(w, alpha, M);
    e.grad = spr_grad(w, alpha, M);
    return e;
}

AggregateResult aggregate_penalty(const Network& net, const EntityPartition& part,
                                  const SprParams& params) {
    require(params.lambda > 0.0, "lambda must be positive");
    require(params.alpha >= 0.0 && params.alpha <= 1.0, "alpha must be in [0,1]");
    std::size_t n = net.param_count();
    std::vector<double> flat = get_params(net);

    AggregateResult out;
    out.grad.assign(n, 0.0);

    std::vector<std::uint8_t> prunable(n, 0);
    double total_u = 0.0;
    for (const Entity& e : part.entities) total_u += static_cast<double>(e.u);
    require(total_u > 0.0, "partition has no weights");

    std::vector<double> wbuf;
    for (const Entity& e : part.entities) {
        wbuf.resize(e.u);
        for (std::size_t j = 0; j < e.u; ++j) {
            std::size_t gi = e.weight_indices[j];
            require(gi < n, "partition index out of range");
            require(!prunable[gi], "partition entities overlap");
            prunable[gi] = 1;
            wbuf[j] = flat[gi];
        }
        PenaltyEval ev = spr_eval(wbuf, params.alpha, e.M);
        double weight = params.lambda * static_cast<double>(e.u) / total_u;
        out.value += weight * ev.value;
        for (std::size_t j = 0; j < e.u; ++j)
            out.grad[e.weight_indices[j]] += weight * ev.grad[j];
    }

    // Non-prunable weights (e.g. the classifier head) keep a plain
    // lambda*alpha*l2 term so phase-1 regularizes the whole net. Biases are
    // never regularized: with deep relu stacks a decay pull on biases can
    // silence every unit, after which no data gradient flows back.
    const std::vector<std::uint8_t> is_weight = weight_index_flags(net);
    double la = params.lambda * params.alpha;
    for (std::size_t j = 0; j < n; ++j) {
        if (prunable[j] || !is_weight[j]) continue;
        out.value += la * flat[j] * flat[j];
        out.grad[j] += la * 2.0 * flat[j];
    }
    return out;
}

BaselineKind baseline_kind_from_name(const std::string& name) {
    if (name == "l2") return BaselineKind::l2;
    if (name == "l1") return BaselineKind::l1;
    if (name == "group_lasso" || name == "group-lasso") return BaselineKind::group_lasso;
    throw ConfigError("unknown baseline regularizer: " + name);
}

AggregateResult baseline_penalty(BaselineKind kind, const Network& net,
                                 const EntityPartition& part, double lambda) {
    require(lambda > 0.0, "lambda must be positive");
    std::size_t n = net.param_count();
    std::vector<double> flat = get_params(net);
    AggregateResult out;
    out.grad.assign(n, 0.0);

    switch (kind) {
        // Plain l2/l1 decay every parameter uniformly, biases included.
        case BaselineKind::l2:
            for (std::size_t j = 0; j < n; ++j) {
                out.value += lambda * flat[j] * flat[j];
                out.grad[j] = lambda * 2.0 * flat[j];
            }
            break;
        case BaselineKind::l1:
            for (std::size_t j = 0; j < n; ++j) {
                out.value += lambda * std::abs(flat[j]);
                out.grad[j] = lambda * sign(flat[j]);
            }
            break;
        case BaselineKind::group_lasso:
            for (const Entity& e : part.entities) {
                double sq = 0.0;
                for (std::size_t j : e.weight_indices) sq += flat[j] * flat[j];
                double norm = std::sqrt(sq);
                double c = lambda * std::sqrt(static_cast<double>(e.u));
                out.value += c * norm;
                if (norm > 0.0)
                    for (std::size_t j : e.weight_indices)
                        out.grad[j] = c * flat[j] / norm;
            }
            break;
    }
    return out;
}

std::vector<EntityDiag> penalty_diagnostics(const Network& net,
                                            const EntityPartition& part, double alpha) {
    std::vector<double> flat = get_params(net);
    std::vector<EntityDiag> rows;
    std::vector<double> wbuf;
    for (const Entity& e : part.entities) {
        wbuf.resize(e.u);
        for (std::size_t j = 0; j < e.u; ++j) wbuf[j] = flat[e.weight_indices[j]];
        EntityDiag d;
        d.entity_id = e.id;
        d.layer_id = e.layer_id;
        YResult yr = ytilde(wbuf, alpha, e.M);
        d.ytilde = yr.y;
        d.regime = yr.regime;
        d.z = spr_value(wbuf, alpha, e.M);
        for (double v : wbuf) {
            d.l2 += v * v;
            d.linf = std::max(d.linf, std::abs(v));
        }
        d.l2 = std::sqrt(d.l2);
        rows.push_back(d);
    }
    return rows;
}

std::string diagnostics_csv(const std::vector<EntityDiag>& rows) {
    std::ostringstream out;
    out << "# schema=spr.entity_diag.v1\n";
    out << "entity_id,layer,ytilde,regime,z,l2,linf\n";
    out.precision(17);
    for (const auto& d : rows)
        out << d.entity_id << ',' << d.layer_id << ',' << d.ytilde << ','
            << regime_name(d.regime) << ',' << d.z << ',' << d.l2 << ',' << d.linf << '\n';
    return out.str();
}

}  // namespace spr
