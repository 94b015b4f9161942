#include "affmap/ssvm.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "affmap/parallel.hpp"

namespace affmap {

long MultivariateExample::positives() const {
    return static_cast<long>(std::count(y.begin(), y.end(), std::int8_t(1)));
}

ContingencyTable make_table(std::span<const std::int8_t> y_true,
                            std::span<const std::int8_t> y_pred) {
    if (y_true.size() != y_pred.size())
        throw std::invalid_argument("label length mismatch");
    ContingencyTable t;
    for (std::size_t i = 0; i < y_true.size(); ++i) {
        if (y_pred[i] > 0)
            (y_true[i] > 0 ? t.a : t.b) += 1;
        else
            (y_true[i] > 0 ? t.c : t.d) += 1;
    }
    return t;
}

LossKind loss_kind_from_string(const std::string& name) {
    if (name == "f1") return LossKind::f1;
    if (name == "error_rate") return LossKind::error_rate;
    if (name == "hamming") return LossKind::hamming;
    throw std::invalid_argument("unknown loss kind: " + name);
}

std::string to_string(LossKind kind) {
    switch (kind) {
        case LossKind::f1: return "f1";
        case LossKind::error_rate: return "error_rate";
        default: return "hamming";
    }
}

double loss(const ContingencyTable& t, LossKind kind) {
    switch (kind) {
        case LossKind::f1: {
            const long denom = 2 * t.a + t.b + t.c;
            if (denom == 0) {
                // Either a degenerate all-negative-truth example predicted
                // clean (no loss), or an empty prediction against real
                // positives (full loss).
                return (t.a + t.c) > 0 ? 1.0 : 0.0;
            }
            if (t.a + t.c == 0) return t.b > 0 ? 1.0 : 0.0;
            return 1.0 - 2.0 * static_cast<double>(t.a) / static_cast<double>(denom);
        }
        case LossKind::error_rate:
        case LossKind::hamming: {
            const long n = t.total();
            if (n == 0) return 0.0;
            return static_cast<double>(t.b + t.c) / static_cast<double>(n);
        }
    }
    return 0.0;
}

std::vector<double> joint_feature(const FeatureMatrix& x,
                                  std::span<const std::int8_t> y) {
    if (x.rows() != y.size()) throw std::invalid_argument("dimension mismatch");
    std::vector<double> psi(x.cols(), 0.0);
    for (std::size_t i = 0; i < x.rows(); ++i) {
        auto row = x.row(i);
        const double yi = y[i];
        for (std::size_t j = 0; j < row.size(); ++j)
            psi[j] += yi * static_cast<double>(row[j]);
    }
    return psi;
}

ViolationResult find_most_violated(const MultivariateExample& example,
                                   std::span<const double> w, LossKind kind) {
    const std::size_t n = example.size();
    if (n == 0) throw std::invalid_argument("empty example");
    if (example.dim() != w.size()) throw std::invalid_argument("dimension mismatch");

    std::vector<double> scores(n);
    parallel_for(n, [&](std::size_t lo, std::size_t hi) {
        for (std::size_t i = lo; i < hi; ++i) scores[i] = dot(w, example.x.row(i));
    });

    std::vector<int> pos, neg;
    for (std::size_t i = 0; i < n; ++i)
        (example.y[i] > 0 ? pos : neg).push_back(static_cast<int>(i));
    auto by_score_desc = [&](int i, int j) {
        if (scores[i] != scores[j]) return scores[i] > scores[j];
        return i < j;  // stable, index-deterministic
    };
    std::sort(pos.begin(), pos.end(), by_score_desc);
    std::sort(neg.begin(), neg.end(), by_score_desc);

    const long npos = static_cast<long>(pos.size());
    const long nneg = static_cast<long>(neg.size());

    // prefix[a] = sum of the a highest scores of the class.
    std::vector<double> pos_prefix(npos + 1, 0.0), neg_prefix(nneg + 1, 0.0);
    for (long i = 0; i < npos; ++i)
        pos_prefix[i + 1] = pos_prefix[i] + scores[pos[i]];
    for (long i = 0; i < nneg; ++i)
        neg_prefix[i + 1] = neg_prefix[i] + scores[neg[i]];
    const double pos_total = pos_prefix[npos];
    const double neg_total = neg_prefix[nneg];

    // For the table (a, b, c, d) the scorewise-best labeling keeps the top-a
    // positives and the top-b negatives positive, so
    //   w Psi = (2 P_a - pos_total) + (2 N_b - neg_total).
    double best = -std::numeric_limits<double>::infinity();
    long best_a = 0, best_d = 0;
    for (long a = 0; a <= npos; ++a) {
        const long c = npos - a;
        const double pos_part = 2.0 * pos_prefix[a] - pos_total;
        for (long d = 0; d <= nneg; ++d) {
            const long b = nneg - d;
            const double obj = loss(ContingencyTable{a, b, c, d}, kind) + pos_part +
                               2.0 * neg_prefix[b] - neg_total;
            if (obj > best) {
                best = obj;
                best_a = a;
                best_d = d;
            }
        }
    }

    ViolationResult result;
    result.labels.assign(n, -1);
    for (long i = 0; i < best_a; ++i) result.labels[pos[i]] = 1;
    const long best_b = nneg - best_d;
    for (long i = 0; i < best_b; ++i) result.labels[neg[i]] = 1;
    result.table = ContingencyTable{best_a, best_b, npos - best_a, best_d};
    // Canonical objective: recomputed through the same joint-feature route the
    // exhaustive oracle uses, so the two agree exactly.
    result.objective =
        loss(result.table, kind) +
        dot(w, std::span<const double>(joint_feature(example.x, result.labels)));
    return result;
}

namespace {

double constraint_gradient(const Constraint& c, std::span<const double> w) {
    return c.loss_value - dot(w, std::span<const double>(c.delta_psi));
}

}  // namespace

QpResult qp_solve(const std::vector<std::vector<Constraint>>& working_sets, double c,
                  double kkt_tol, int max_sweeps,
                  const std::vector<std::vector<double>>* warm_alpha) {
    if (c <= 0.0) throw std::invalid_argument("C must be positive");
    const std::size_t k_count = working_sets.size();
    std::size_t dim = 0;
    for (const auto& ws : working_sets)
        for (const auto& con : ws) {
            if (dim == 0) dim = con.delta_psi.size();
            if (con.delta_psi.size() != dim)
                throw std::invalid_argument("constraint dimension mismatch");
        }

    struct Entry {
        std::size_t example;
        std::size_t slot;
        double loss;
    };
    std::vector<Entry> entries;
    for (std::size_t k = 0; k < k_count; ++k)
        for (std::size_t j = 0; j < working_sets[k].size(); ++j)
            entries.push_back({k, j, working_sets[k][j].loss_value});
    const std::size_t m = entries.size();

    QpResult result;
    result.w.assign(dim, 0.0);
    result.alpha.resize(k_count);
    for (std::size_t k = 0; k < k_count; ++k)
        result.alpha[k].assign(working_sets[k].size(), 0.0);
    result.slacks.assign(k_count, 0.0);
    if (m == 0) {
        result.converged = true;
        return result;
    }

    // Gram matrix, scaled by the constraint norms: the delta-psi norms span
    // many orders of magnitude, and the active-set solves need conditioning.
    Eigen::MatrixXd q(m, m);
    for (std::size_t p = 0; p < m; ++p) {
        const auto& dp = working_sets[entries[p].example][entries[p].slot].delta_psi;
        for (std::size_t r = p; r < m; ++r) {
            const auto& dq = working_sets[entries[r].example][entries[r].slot].delta_psi;
            const double g =
                dot(std::span<const double>(dp), std::span<const double>(dq));
            q(p, r) = g;
            q(r, p) = g;
        }
    }
    Eigen::VectorXd scale(m);
    for (std::size_t p = 0; p < m; ++p)
        scale(p) = std::sqrt(std::max(q(p, p), 1e-30));
    Eigen::MatrixXd qs(m, m);  // scaled Gram
    Eigen::VectorXd ds(m);     // scaled linear term
    for (std::size_t p = 0; p < m; ++p) {
        ds(p) = entries[p].loss / scale(p);
        for (std::size_t r = 0; r < m; ++r) qs(p, r) = q(p, r) / (scale(p) * scale(r));
    }

    // Scaled variables: alpha_p = a(p) / scale(p). Budget row coefficients
    // are 1/scale per entry of the example.
    Eigen::VectorXd a = Eigen::VectorXd::Zero(m);
    if (warm_alpha) {
        for (std::size_t p = 0; p < m; ++p) {
            const auto& seed = *warm_alpha;
            if (entries[p].example < seed.size() &&
                entries[p].slot < seed[entries[p].example].size())
                a(p) = seed[entries[p].example][entries[p].slot] * scale(p);
        }
    }

    auto budget_use = [&](std::size_t k) {
        double s = 0.0;
        for (std::size_t p = 0; p < m; ++p)
            if (entries[p].example == k) s += a(p) / scale(p);
        return s;
    };

    const double feas_tol = 1e-11;
    std::vector<bool> free_var(m, false);
    for (std::size_t p = 0; p < m; ++p) free_var[p] = a(p) > 0.0;
    std::vector<bool> tight(k_count, false);
    for (std::size_t k = 0; k < k_count; ++k)
        tight[k] = budget_use(k) >= c * (1.0 - 1e-12);

    const int max_pivots = std::max(200, static_cast<int>(m) * 8);
    bool converged = false;
    for (int pivot = 0; pivot < max_pivots && pivot < max_sweeps; ++pivot) {
        // Equality-constrained subproblem over the free variables with the
        // tight budgets held at C.
        std::vector<int> fidx, bidx;
        for (std::size_t p = 0; p < m; ++p)
            if (free_var[p]) fidx.push_back(static_cast<int>(p));
        for (std::size_t k = 0; k < k_count; ++k)
            if (tight[k]) bidx.push_back(static_cast<int>(k));
        const int nf = static_cast<int>(fidx.size());
        const int nb = static_cast<int>(bidx.size());

        Eigen::VectorXd target = a;
        Eigen::VectorXd mu = Eigen::VectorXd::Zero(k_count);
        if (nf > 0) {
            Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(nf + nb, nf + nb);
            Eigen::VectorXd rhs(nf + nb);
            for (int i = 0; i < nf; ++i) {
                rhs(i) = ds(fidx[i]);
                for (int j = 0; j < nf; ++j) kkt(i, j) = qs(fidx[i], fidx[j]);
                kkt(i, i) += 1e-12;
            }
            for (int bi = 0; bi < nb; ++bi) {
                for (int i = 0; i < nf; ++i) {
                    if (entries[fidx[i]].example ==
                        static_cast<std::size_t>(bidx[bi])) {
                        kkt(i, nf + bi) = 1.0 / scale(fidx[i]);
                        kkt(nf + bi, i) = 1.0 / scale(fidx[i]);
                    }
                }
                double fixed = 0.0;  // contribution of non-free variables
                for (std::size_t p = 0; p < m; ++p)
                    if (!free_var[p] &&
                        entries[p].example == static_cast<std::size_t>(bidx[bi]))
                        fixed += a(p) / scale(p);
                rhs(nf + bi) = c - fixed;
            }
            const Eigen::VectorXd sol = kkt.fullPivLu().solve(rhs);
            for (int i = 0; i < nf; ++i) target(fidx[i]) = sol(i);
            for (int bi = 0; bi < nb; ++bi) mu(bidx[bi]) = sol(nf + bi);
        }

        // Feasibility of the subproblem solution.
        double worst_step = 1.0;
        int blocking_var = -1, blocking_budget = -1;
        for (int i = 0; i < nf; ++i) {
            const int p = fidx[i];
            if (target(p) < -feas_tol) {
                const double denom = a(p) - target(p);
                const double step = denom > 0.0 ? a(p) / denom : 0.0;
                if (step < worst_step) {
                    worst_step = step;
                    blocking_var = p;
                    blocking_budget = -1;
                }
            }
        }
        for (std::size_t k = 0; k < k_count; ++k) {
            if (tight[k]) continue;
            double now = 0.0, then = 0.0;
            for (std::size_t p = 0; p < m; ++p)
                if (entries[p].example == k) {
                    now += a(p) / scale(p);
                    then += target(p) / scale(p);
                }
            if (then > c + feas_tol * std::max(1.0, c)) {
                const double step = (c - now) / (then - now);
                if (step < worst_step) {
                    worst_step = step;
                    blocking_budget = static_cast<int>(k);
                    blocking_var = -1;
                }
            }
        }

        if (worst_step < 1.0) {
            a += worst_step * (target - a);
            for (std::size_t p = 0; p < m; ++p) a(p) = std::max(a(p), 0.0);
            if (blocking_var >= 0) {
                free_var[blocking_var] = false;
                a(blocking_var) = 0.0;
            }
            if (blocking_budget >= 0) tight[blocking_budget] = true;
            continue;
        }
        a = target;
        for (std::size_t p = 0; p < m; ++p)
            if (a(p) < 0.0) a(p) = 0.0;

        // Outer optimality: gradients of zero variables must not beat their
        // example's multiplier; tight budgets need a nonnegative multiplier.
        const Eigen::VectorXd grad = ds - qs * a;
        int enter = -1;
        double worst = kkt_tol;
        for (std::size_t p = 0; p < m; ++p) {
            if (free_var[p]) continue;
            const double v = grad(p) - mu(entries[p].example) / scale(p);
            if (v > worst) {
                worst = v;
                enter = static_cast<int>(p);
            }
        }
        int drop_budget = -1;
        double worst_mu = -1e-12;
        for (std::size_t k = 0; k < k_count; ++k)
            if (tight[k] && mu(k) < worst_mu) {
                worst_mu = mu(k);
                drop_budget = static_cast<int>(k);
            }
        if (drop_budget >= 0) {
            tight[drop_budget] = false;
            continue;
        }
        if (enter >= 0) {
            free_var[enter] = true;
            continue;
        }
        converged = true;
        break;
    }
    if (!converged)
        std::fprintf(stderr, "warning: structured QP pivot cap reached\n");

    result.converged = converged;
    for (std::size_t p = 0; p < m; ++p) {
        const double value = a(p) / scale(p);
        result.alpha[entries[p].example][entries[p].slot] = value;
        if (value != 0.0) {
            const auto& dp = working_sets[entries[p].example][entries[p].slot].delta_psi;
            for (std::size_t i = 0; i < dim; ++i) result.w[i] += value * dp[i];
        }
    }
    double slack_sum = 0.0;
    for (std::size_t k = 0; k < k_count; ++k) {
        double xi = 0.0;
        for (const auto& con : working_sets[k])
            xi = std::max(xi, constraint_gradient(con, result.w));
        result.slacks[k] = xi;
        slack_sum += xi;
    }
    result.primal_objective =
        0.5 * dot(std::span<const double>(result.w), std::span<const double>(result.w)) +
        c * slack_sum;
    return result;
}

namespace {

double pooled_train_f1(const ExampleRefs& dataset, std::span<const double> w) {
    ContingencyTable pooled;
    for (const auto* exp : dataset) {
        const auto& ex = *exp;
        const auto pred = infer(w, ex.x);
        const ContingencyTable t = make_table(ex.y, pred);
        pooled.a += t.a;
        pooled.b += t.b;
        pooled.c += t.c;
        pooled.d += t.d;
    }
    return metrics_from_table(pooled).f1;
}

}  // namespace

SsvmModel train_cutting_plane(const ExampleRefs& dataset, const SsvmParams& params) {
    if (dataset.empty()) throw std::invalid_argument("empty dataset");
    if (params.epsilon <= 0.0) throw std::invalid_argument("epsilon must be positive");
    std::size_t dim = dataset.front()->dim();
    std::size_t total = 0;
    for (const auto* ex : dataset) {
        if (ex->dim() != dim) throw std::invalid_argument("dimension mismatch");
        total += ex->size();
    }
    const double c = params.c > 0.0 ? params.c : 0.01 * static_cast<double>(total);

    SsvmModel model;
    model.c_used = c;
    model.w.assign(dim, 0.0);
    std::vector<std::vector<Constraint>> working_sets(dataset.size());
    std::vector<std::vector<double>> alpha(dataset.size());

    for (int outer = 1; outer <= params.max_outer_iterations; ++outer) {
        std::size_t added = 0;
        for (std::size_t k = 0; k < dataset.size(); ++k) {
            const auto& ex = *dataset[k];
            const ViolationResult v =
                find_most_violated(ex, model.w, params.loss_kind);

            // delta_psi = Psi(x, y_truth) - Psi(x, y') over the flipped poses.
            Constraint con;
            con.loss_value = loss(v.table, params.loss_kind);
            con.delta_psi.assign(dim, 0.0);
            for (std::size_t i = 0; i < ex.size(); ++i) {
                if (ex.y[i] == v.labels[i]) continue;
                const double f = 2.0 * ex.y[i];
                auto row = ex.x.row(i);
                for (std::size_t j = 0; j < dim; ++j)
                    con.delta_psi[j] += f * static_cast<double>(row[j]);
            }

            double xi = 0.0;
            for (const auto& existing : working_sets[k])
                xi = std::max(xi, constraint_gradient(existing, model.w));
            const double violation = constraint_gradient(con, model.w) - xi;
            if (violation > params.epsilon) {
                working_sets[k].push_back(std::move(con));
                ++added;
                QpResult qp = qp_solve(working_sets, c, 1e-8, 4000, &alpha);
                model.w = std::move(qp.w);
                alpha = std::move(qp.alpha);
            }
        }

        model.trace.push_back(
            {outer, pooled_train_f1(dataset, model.w), model.w});
        model.outer_iterations = outer;
        if (std::getenv("AFFMAP_VERBOSE"))
            std::fprintf(stderr, "  cutting-plane iter %d: %zu added, train F1 %.4f\n",
                         outer, added, model.trace.back().train_f1);
        if (added == 0) {
            model.epsilon_converged = true;
            break;
        }
    }
    if (!model.epsilon_converged)
        std::fprintf(stderr,
                     "warning: cutting-plane training not epsilon-converged after %d "
                     "iterations\n",
                     model.outer_iterations);
    return model;
}

SsvmModel train_cutting_plane(const std::vector<MultivariateExample>& dataset,
                              const SsvmParams& params) {
    ExampleRefs refs;
    refs.reserve(dataset.size());
    for (const auto& ex : dataset) refs.push_back(&ex);
    return train_cutting_plane(refs, params);
}

std::vector<std::int8_t> infer(std::span<const double> w, const FeatureMatrix& x) {
    if (x.cols() != w.size()) throw std::invalid_argument("dimension mismatch");
    std::vector<std::int8_t> labels(x.rows());
    parallel_for(x.rows(), [&](std::size_t lo, std::size_t hi) {
        for (std::size_t i = lo; i < hi; ++i)
            labels[i] = dot(w, x.row(i)) >= 0.0 ? 1 : -1;
    });
    return labels;
}

std::vector<double> decision_values(std::span<const double> w, const FeatureMatrix& x) {
    if (x.cols() != w.size()) throw std::invalid_argument("dimension mismatch");
    std::vector<double> values(x.rows());
    parallel_for(x.rows(), [&](std::size_t lo, std::size_t hi) {
        for (std::size_t i = lo; i < hi; ++i) values[i] = dot(w, x.row(i));
    });
    return values;
}

Metrics metrics_from_table(const ContingencyTable& t) {
    Metrics m;
    m.table = t;
    m.precision = (t.a + t.b) == 0 ? 0.0
                                   : static_cast<double>(t.a) /
                                         static_cast<double>(t.a + t.b);
    m.recall = (t.a + t.c) == 0 ? 0.0
                                : static_cast<double>(t.a) /
                                      static_cast<double>(t.a + t.c);
    m.f1 = (m.precision + m.recall) == 0.0
               ? 0.0
               : 2.0 * m.precision * m.recall / (m.precision + m.recall);
    return m;
}

Metrics metrics(std::span<const std::int8_t> y_true, std::span<const std::int8_t> y_pred) {
    return metrics_from_table(make_table(y_true, y_pred));
}

}  // namespace affmap
