#pragma once

#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "affmap/dataset.hpp"

namespace affmap {

// Separating hyperplane; the decision value is f(x) = w.x - b everywhere in
// the repo, with sign(0) = +1.
struct LinearModel {
    std::vector<double> w;
    double b = 0.0;

    double margin(std::span<const float> x) const { return dot(w, x) - b; }
    double margin(std::span<const double> x) const { return dot(w, x) - b; }
};

struct TrainConfig {
    double c = 1.0;        // shared misclassification cost
    double c_pos = 1.0;    // positive-class cost (different-cost model)
    double c_neg = 1.0;    // negative-class cost
    double tol = 1e-6;     // relative duality-gap tolerance
    int max_iter = 4000;   // epoch cap
    std::uint64_t seed = 0;
};

struct TrainResult {
    LinearModel model;
    std::vector<double> alpha;
    bool converged = false;
    int epochs = 0;
    double primal_objective = 0.0;
    double dual_objective = 0.0;
    double duality_gap = 0.0;
};

// Soft-margin SVM (hinge loss, explicit bias): dual coordinate ascent on
// pairs, which keeps the equality constraint sum(alpha_i y_i) = 0 intact.
// Runs until the relative duality gap drops below cfg.tol.
TrainResult train_soft_margin(const BinaryDataset& data, const TrainConfig& cfg);

// Same solver with per-class box constraints C+ / C-.
TrainResult train_dcm(const BinaryDataset& data, const TrainConfig& cfg);

enum class ResampleMode { under, over };

// target_ratio is the admissible neg:pos ratio (1.0 = balanced).
BinaryDataset resample(const BinaryDataset& data, ResampleMode mode, double target_ratio,
                       std::uint64_t seed);

// Informative-negative selection: a pilot model on a balanced subsample keeps
// all positives and the negatives within `band` of the pilot hyperplane. A
// finite target_ratio additionally rebalances the retained negatives.
BinaryDataset focused_sample(const BinaryDataset& data, const TrainConfig& cfg,
                             double band,
                             double target_ratio = std::numeric_limits<double>::infinity());

// Default bias-shift grid: 41 offsets spanning [-2, 2] scaled by ||w||.
std::vector<double> default_z_grid(const LinearModel& model);

// Post-hoc minority-class boundary shift: replaces b with b - delta, with
// delta chosen from z_grid to maximize validation F1 (ties toward |delta|).
LinearModel zsvm_adjust(const LinearModel& model, const BinaryDataset& validation,
                        std::span<const double> z_grid);

struct Decision {
    int label;      // +1 or -1
    double margin;  // w.x - b
};

Decision decide(const LinearModel& model, std::span<const float> x);
Decision decide(const LinearModel& model, std::span<const double> x);

}  // namespace affmap
