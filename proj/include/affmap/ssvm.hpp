#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "affmap/dataset.hpp"

namespace affmap {

// Structured SVM optimized for multivariate performance measures.
//
// One training example is an entire scene: the tuple of per-pose feature
// vectors together with the tuple of +-1 labels. The joint feature map is
// Psi(x, y) = sum_i y_i x_i, the loss is computed from the contingency table
// of a candidate labeling against the truth, and training generates
// most-violated constraints by stratifying the 2^n labelings over the O(n^2)
// possible contingency tables. Inference decomposes into an elementwise sign.

struct MultivariateExample {
    FeatureMatrix x;
    std::vector<std::int8_t> y;

    std::size_t size() const { return y.size(); }
    std::size_t dim() const { return x.cols(); }
    long positives() const;
    long negatives() const { return static_cast<long>(size()) - positives(); }
};

// a = true positives, b = false positives, c = false negatives,
// d = true negatives.
struct ContingencyTable {
    long a = 0;
    long b = 0;
    long c = 0;
    long d = 0;

    long total() const { return a + b + c + d; }
};

ContingencyTable make_table(std::span<const std::int8_t> y_true,
                            std::span<const std::int8_t> y_pred);

enum class LossKind { f1, error_rate, hamming };

LossKind loss_kind_from_string(const std::string& name);
std::string to_string(LossKind kind);

// Contingency-table loss in [0, 1]. For the F1 loss, an empty prediction on
// an example that has positives scores the full loss of 1; an example with no
// positives and no false positives scores 0.
double loss(const ContingencyTable& table, LossKind kind);

// Psi(x, y) = sum_i y_i x_i, accumulated in index order.
std::vector<double> joint_feature(const FeatureMatrix& x,
                                  std::span<const std::int8_t> y);

struct ViolationResult {
    std::vector<std::int8_t> labels;
    double objective = 0.0;  // loss + w Psi(x, labels)
    ContingencyTable table;
};

// argmax over labelings of  loss(table(y', y)) + w Psi(x, y').
//
// Sorts positives and negatives by score descending; for a true positives
// kept and d true negatives kept, the scorewise-best members of the table are
// the top-a positives and the top-(#neg - d) negatives. Ties between tables
// resolve to the first (a, d) in loop order, ascending a then ascending d.
ViolationResult find_most_violated(const MultivariateExample& example,
                                   std::span<const double> w, LossKind kind);

// One margin-rescaled cutting plane: w . delta_psi >= loss - xi_k where
// delta_psi = Psi(x_k, y_k) - Psi(x_k, y').
struct Constraint {
    std::vector<double> delta_psi;
    double loss_value = 0.0;
};

struct QpResult {
    std::vector<double> w;
    std::vector<double> slacks;                 // per example
    std::vector<std::vector<double>> alpha;     // per example, per constraint
    bool converged = false;
    double primal_objective = 0.0;
};

// min 1/2 ||w||^2 + C sum_k xi_k over the working sets, solved in the dual by
// coordinate ascent in Gram space (analytic single-variable updates plus
// exact pair steps); the multipliers of each example live on the simplex
// sum_j alpha_kj <= C. Stops when the relative duality gap drops below
// kkt_tol. warm_alpha, when given, seeds the multipliers.
QpResult qp_solve(const std::vector<std::vector<Constraint>>& working_sets, double c,
                  double kkt_tol = 1e-8, int max_sweeps = 4000,
                  const std::vector<std::vector<double>>* warm_alpha = nullptr);

struct SsvmParams {
    double c = 0.0;            // <= 0: use 0.01 * (total pose count)
    double epsilon = 1e-3;     // constraint tolerance
    LossKind loss_kind = LossKind::f1;
    int max_outer_iterations = 200;
    std::uint64_t seed = 0;
};

struct TraceEntry {
    int iteration = 0;
    double train_f1 = 0.0;
    std::vector<double> w;
};

struct SsvmModel {
    std::vector<double> w;
    std::vector<TraceEntry> trace;
    bool epsilon_converged = false;
    int outer_iterations = 0;
    double c_used = 0.0;
};

// Cutting-plane training (n-slack margin rescaling, one slack per scene).
// Starts from w = 0 and empty working sets; each pass finds the most violated
// constraint per example and re-solves the QP whenever one is violated by
// more than epsilon beyond the current slack. Terminates when a full pass
// adds nothing.
using ExampleRefs = std::vector<const MultivariateExample*>;

SsvmModel train_cutting_plane(const ExampleRefs& dataset, const SsvmParams& params);
SsvmModel train_cutting_plane(const std::vector<MultivariateExample>& dataset,
                              const SsvmParams& params);

// Elementwise prediction (sign(w . x_i), ..., sign(w . x_n)), sign(0) = +1.
std::vector<std::int8_t> infer(std::span<const double> w, const FeatureMatrix& x);

// Margins w . x_i (the confidence surface behind the contour map).
std::vector<double> decision_values(std::span<const double> w, const FeatureMatrix& x);

struct Metrics {
    ContingencyTable table;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

Metrics metrics(std::span<const std::int8_t> y_true, std::span<const std::int8_t> y_pred);
Metrics metrics_from_table(const ContingencyTable& table);

}  // namespace affmap
