#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include "specfuse/tensor.hpp"

namespace specfuse {

/// Weights and shape parameters of the composite loss
///   L = L_focal + lambda1 * L_supcon + lambda2 * L_f_center.
struct LossWeights {
    double lambda1 = 0.5;  // supervised-contrastive weight
    double lambda2 = 0.01; // frequency-center weight
    double alpha = 0.25;   // focal class weight
    double gamma = 2.0;    // focal focusing exponent
    double tau = 0.1;      // contrastive temperature
    double mu = 0.5;       // center-separation weight
    double margin = 1.0;   // minimum center distance

    void validate() const {
        if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("loss.alpha must be in (0,1)");
        if (!(gamma >= 0.0)) throw ConfigError("loss.gamma must be nonnegative");
        if (!(tau > 0.0)) throw ConfigError("loss.tau must be positive");
        if (!(margin > 0.0)) throw ConfigError("loss.margin must be positive");
        if (!(lambda1 >= 0.0)) throw ConfigError("loss.lambda1 must be nonnegative");
        if (!(lambda2 >= 0.0)) throw ConfigError("loss.lambda2 must be nonnegative");
        if (!(mu >= 0.0)) throw ConfigError("loss.mu must be nonnegative");
    }
};

/// One trainable center per class in the frequency feature space;
/// row 0 is the real center, row 1 the fake center.
struct ClassCenters {
    TensorPtr centers; // (2, C_fre)

    TensorPtr row(int label) const {
        if (label != 0 && label != 1) throw ContractError("class label must be 0 or 1");
        return slice_row(centers, static_cast<std::size_t>(label));
    }

    void validate() const {
        if (!centers || centers->rank() != 2 || centers->shape[0] != 2) {
            throw ContractError("class centers must have shape (2, C_fre)");
        }
    }
};

/// Per-batch loss values. total is always focal + lambda1*supcon +
/// lambda2*f_center through the same arithmetic path.
struct LossBreakdown {
    double focal = 0.0;
    double supcon = 0.0;
    double f_center = 0.0;
    double total = 0.0;
};

inline LossBreakdown combine_breakdown(double focal, double supcon, double f_center,
                                       const LossWeights& w) {
    LossBreakdown b;
    b.focal = focal;
    b.supcon = supcon;
    b.f_center = f_center;
    b.total = focal + w.lambda1 * supcon + w.lambda2 * f_center;
    return b;
}

constexpr double kProbEpsilon = 1e-7; // probability clamp before logs

/// Mean focal loss over a batch of scalar probabilities.
///   y=1: -alpha * (1-p)^gamma * log(p)
///   y=0: -(1-alpha) * p^gamma * log(1-p)
inline TensorPtr focal_loss(const std::vector<TensorPtr>& p, const std::vector<int>& y,
                            double alpha, double gamma) {
    if (p.empty()) throw ContractError("focal_loss: empty batch");
    if (p.size() != y.size()) throw ContractError("focal_loss: probability/label count mismatch");
    std::vector<TensorPtr> terms;
    terms.reserve(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (p[i]->numel() != 1) throw ContractError("focal_loss: probabilities must be scalars");
        TensorPtr pc = clamp(p[i], kProbEpsilon, 1.0 - kProbEpsilon);
        TensorPtr term;
        if (y[i] == 1) {
            TensorPtr lg = log(pc);
            if (gamma == 0.0) {
                term = mul_const(lg, -alpha);
            } else {
                term = mul_const(mul(pow_const(add_const(negate(pc), 1.0), gamma), lg), -alpha);
            }
        } else if (y[i] == 0) {
            TensorPtr lg = log(add_const(negate(pc), 1.0));
            if (gamma == 0.0) {
                term = mul_const(lg, -(1.0 - alpha));
            } else {
                term = mul_const(mul(pow_const(pc, gamma), lg), -(1.0 - alpha));
            }
        } else {
            throw ContractError("focal_loss: labels must be 0 or 1");
        }
        terms.push_back(term);
    }
    return mul_const(add_scalars(terms), 1.0 / static_cast<double>(terms.size()));
}

/// Supervised contrastive loss over L2-normalized embeddings.
///
/// For each anchor i, positives P(i) are same-class others and A(i) is
/// everyone else. Anchors without positives contribute nothing and are
/// excluded from the anchor average. The log-sum-exp is stabilized by
/// subtracting the (detached) row max, which leaves gradients exact.
inline TensorPtr supcon_loss(const std::vector<TensorPtr>& z, const std::vector<int>& y,
                             double tau) {
    const std::size_t n = z.size();
    if (n < 2) throw ContractError("supcon_loss: batch must hold at least 2 embeddings");
    if (y.size() != n) throw ContractError("supcon_loss: embedding/label count mismatch");
    if (!(tau > 0.0)) throw ContractError("supcon_loss: tau must be positive");
    for (const auto& zi : z) {
        double sq = 0.0;
        for (double v : zi->values) sq += v * v;
        if (std::abs(std::sqrt(sq) - 1.0) > 1e-6) {
            throw ContractError("supcon_loss: embeddings must be L2-normalized to 1e-6");
        }
    }

    // Pairwise logits z_i . z_j / tau, shared across the symmetric pairs.
    std::vector<std::vector<TensorPtr>> logit(n, std::vector<TensorPtr>(n));
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            TensorPtr l = mul_const(dot(z[i], z[j]), 1.0 / tau);
            logit[i][j] = l;
            logit[j][i] = l;
        }
    }

    std::vector<TensorPtr> anchor_terms;
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<TensorPtr> positives;
        for (std::size_t j = 0; j < n; ++j) {
            if (j != i && y[j] == y[i]) positives.push_back(logit[i][j]);
        }
        if (positives.empty()) continue;

        double row_max = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < n; ++j) {
            if (j != i) row_max = std::max(row_max, logit[i][j]->values[0]);
        }
        std::vector<TensorPtr> exps;
        exps.reserve(n - 1);
        for (std::size_t j = 0; j < n; ++j) {
            if (j != i) exps.push_back(exp(add_const(logit[i][j], -row_max)));
        }
        TensorPtr lse = add_const(log(add_scalars(exps)), row_max);
        TensorPtr mean_pos =
            mul_const(add_scalars(positives), 1.0 / static_cast<double>(positives.size()));
        anchor_terms.push_back(sub(lse, mean_pos));
    }
    if (anchor_terms.empty()) return Tensor::scalar(0.0);
    return mul_const(add_scalars(anchor_terms), 1.0 / static_cast<double>(anchor_terms.size()));
}

/// Frequency center margin loss:
///   sum_i ||f_i - c_{y_i}||^2 + mu * sum_{j != k} max(0, m - ||c_j - c_k||)^2
/// The first term is summed (not averaged) over the batch; the pair sum runs
/// over ordered pairs, so with two classes the (real,fake) pair counts twice.
inline TensorPtr f_center_loss(const std::vector<TensorPtr>& f, const std::vector<int>& y,
                               const ClassCenters& centers, double mu, double margin) {
    if (f.empty()) throw ContractError("f_center_loss: empty batch");
    if (f.size() != y.size()) throw ContractError("f_center_loss: feature/label count mismatch");
    centers.validate();

    std::vector<TensorPtr> terms;
    terms.reserve(f.size() + 1);
    for (std::size_t i = 0; i < f.size(); ++i) {
        TensorPtr d = sub(f[i], centers.row(y[i]));
        terms.push_back(sum_all(mul(d, d)));
    }
    TensorPtr dc = sub(slice_row(centers.centers, 0), slice_row(centers.centers, 1));
    TensorPtr dist = sqrt(sum_all(mul(dc, dc)));
    TensorPtr hinge = relu(add_const(negate(dist), margin));
    terms.push_back(mul_const(mul(hinge, hinge), 2.0 * mu));
    return add_scalars(terms);
}

struct FscOptions {
    bool include_supcon = true;   // disabled for batches of one
    bool include_f_center = true; // disabled when the frequency tap is removed
};

struct FscResult {
    TensorPtr total;
    TensorPtr focal;
    TensorPtr supcon;   // constant zero when excluded
    TensorPtr f_center; // constant zero when excluded
    LossBreakdown breakdown;
};

/// Builds the full composite loss graph and its per-batch breakdown.
inline FscResult fsc_total(const std::vector<TensorPtr>& p, const std::vector<TensorPtr>& z,
                           const std::vector<TensorPtr>& f_fre, const std::vector<int>& y,
                           const ClassCenters& centers, const LossWeights& w,
                           const FscOptions& opts = {}) {
    w.validate();
    FscResult r;
    r.focal = focal_loss(p, y, w.alpha, w.gamma);
    r.supcon = opts.include_supcon ? supcon_loss(z, y, w.tau) : Tensor::scalar(0.0);
    r.f_center = opts.include_f_center ? f_center_loss(f_fre, y, centers, w.mu, w.margin)
                                       : Tensor::scalar(0.0);
    r.total = add(add(r.focal, mul_const(r.supcon, w.lambda1)), mul_const(r.f_center, w.lambda2));
    r.breakdown = combine_breakdown(r.focal->values[0], r.supcon->values[0],
                                    r.f_center->values[0], w);
    return r;
}

} // namespace specfuse
