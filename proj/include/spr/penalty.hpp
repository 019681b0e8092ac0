#pragma once

#include <span>
#include <string>
#include <vector>

#include "spr/groups.hpp"
#include "spr/network.hpp"

namespace spr {

// Structured perspective penalty for one entity with weights w, bound M and
// mixing parameter alpha:
//
//   z(w) = min { alpha*||w||2^2 / y + (1-alpha)*y  :  ||w||inf/M <= y <= 1 }
//
// with z(0) = 0. The inner minimizer has the closed form
//
//   ytilde(w) = clamp( sqrt(alpha/(1-alpha)) * ||w||2 ; ||w||inf/M, 1 )
//
// and z is evaluated branch-wise, never dividing by ytilde:
//   interior     z = 2*sqrt(alpha*(1-alpha)) * ||w||2
//   lower clamp  z = alpha*M*||w||2^2/||w||inf + (1-alpha)*||w||inf/M
//   upper clamp  z = alpha*||w||2^2 + (1-alpha)
// alpha = 1 sends the root to infinity (upper clamp); alpha = 0 sends it to
// zero (lower clamp). z depends on w only through ||w||2 and ||w||inf, so it
// vanishes only when the whole entity is zero.

enum class Regime { zero, interior, lower_clamp, upper_clamp };

std::string regime_name(Regime r);

/// Which z case formula to use. `variational` evaluates the clamped inner
/// minimum above. `legacy` keeps an older variant of the case coefficients
/// around for side-by-side comparison; it is never the default and never
/// used for training gradients.
enum class ZForm { variational, legacy };

struct SprParams {
    double lambda = 1.0;  // > 0
    double alpha = 0.3;   // in [0,1]
};

struct YResult {
    double y = 0.0;
    Regime regime = Regime::zero;
};

YResult ytilde(std::span<const double> w, double alpha, double M);

double spr_value(std::span<const double> w, double alpha, double M,
                 ZForm form = ZForm::variational);

/// Regime-wise analytic (sub)gradient of the variational z. Ties in the
/// max-abs coordinate resolve to the lowest index; the zero entity gets the
/// zero vector.
std::vector<double> spr_grad(std::span<const double> w, double alpha, double M);

/// value + gradient + inner minimizer in one evaluation.
struct PenaltyEval {
    double value = 0.0;
    std::vector<double> grad;
    double ytilde = 0.0;
    Regime regime = Regime::zero;
};

PenaltyEval spr_eval(std::span<const double> w, double alpha, double M);

struct AggregateResult {
    double value = 0.0;
    std::vector<double> grad;  // aligned with the global index space
};

/// lambda * sum_i (u_i/U) * z_i over the partition, plus lambda*alpha*l2 on
/// every non-prunable weight, with the matching gradient scattered to global
/// indices. Biases are exempt here: the alpha term mirrors a penalty defined
/// over weight matrices, and decaying biases under a deep relu stack can
/// silence units outright.
AggregateResult aggregate_penalty(const Network& net, const EntityPartition& part,
                                  const SprParams& params);

enum class BaselineKind { l2, l1, group_lasso };

BaselineKind baseline_kind_from_name(const std::string& name);

/// l2: lambda*sum w^2 over every parameter. l1: lambda*sum|w| over every
/// parameter (subgradient 0 at 0). group_lasso: lambda*sum_i
/// sqrt(u_i)*||w_i||2 over the partition's entities (everything else
/// unpenalized).
AggregateResult baseline_penalty(BaselineKind kind, const Network& net,
                                 const EntityPartition& part, double lambda);

/// Per-entity dump rows for post-hoc analysis.
struct EntityDiag {
    int entity_id = 0;
    int layer_id = 0;
    double ytilde = 0.0;
    Regime regime = Regime::zero;
    double z = 0.0;
    double l2 = 0.0;
    double linf = 0.0;
};

std::vector<EntityDiag> penalty_diagnostics(const Network& net,
                                            const EntityPartition& part, double alpha);

std::string diagnostics_csv(const std::vector<EntityDiag>& rows);

}  // namespace spr
