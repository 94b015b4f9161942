#include "affmap/svm_linear.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "affmap/rng.hpp"

namespace affmap {

namespace {

double class_cost(std::int8_t y, double c_pos, double c_neg) {
    return y > 0 ? c_pos : c_neg;
}

// Bias via the KKT conditions: average over free support vectors, midpoint of
// the feasible interval otherwise.
double recover_bias(const BinaryDataset& data, std::span<const double> alpha,
                    std::span<const double> w, double c_pos, double c_neg) {
    const double bound_eps = 1e-12;
    double free_sum = 0.0;
    std::size_t free_count = 0;
    double lb = -std::numeric_limits<double>::infinity();
    double ub = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < data.size(); ++i) {
        const double ci = class_cost(data.y[i], c_pos, c_neg);
        const double s = dot(w, data.x.row(i));
        if (alpha[i] > bound_eps && alpha[i] < ci - bound_eps) {
            free_sum += s - data.y[i];
            ++free_count;
        } else if (alpha[i] <= bound_eps) {
            if (data.y[i] > 0)
                ub = std::min(ub, s - 1.0);
            else
                lb = std::max(lb, s + 1.0);
        } else {
            if (data.y[i] > 0)
                lb = std::max(lb, s - 1.0);
            else
                ub = std::min(ub, s + 1.0);
        }
    }
    if (free_count > 0) return free_sum / static_cast<double>(free_count);
    if (std::isinf(lb) && std::isinf(ub)) return 0.0;
    if (std::isinf(lb)) return ub;
    if (std::isinf(ub)) return lb;
    return 0.5 * (lb + ub);
}

double primal_objective(const BinaryDataset& data, const LinearModel& m, double c_pos,
                        double c_neg) {
    double obj = 0.5 * dot(m.w, m.w);
    for (std::size_t i = 0; i < data.size(); ++i) {
        const double viol = 1.0 - data.y[i] * m.margin(data.x.row(i));
        if (viol > 0.0) obj += class_cost(data.y[i], c_pos, c_neg) * viol;
    }
    return obj;
}

TrainResult solve_dual(const BinaryDataset& data, double c_pos, double c_neg,
                       const TrainConfig& cfg) {
    const std::size_t n = data.size();
    const std::size_t d = data.dim();
    if (data.positives() == 0 || data.negatives() == 0)
        throw std::invalid_argument("degenerate dataset");

    std::vector<double> alpha(n, 0.0);
    std::vector<double> w(d, 0.0);
    std::vector<double> x_sq(n);
    for (std::size_t i = 0; i < n; ++i) {
        auto r = data.x.row(i);
        x_sq[i] = dot(std::span<const float>(r), r);
    }

    Rng rng(cfg.seed ^ 0x5af3u);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t(0));

    // delta range for alpha_i += y_i * delta within [0, C_i].
    auto delta_bounds = [&](std::size_t i, double ci) {
        return data.y[i] > 0 ? std::pair<double, double>{-alpha[i], ci - alpha[i]}
                             : std::pair<double, double>{alpha[i] - ci, alpha[i]};
    };

    TrainResult result;
    const int gap_check_every = 4;
    int epoch = 0;
    for (; epoch < cfg.max_iter; ++epoch) {
        rng.shuffle(order);
        double max_step = 0.0;
        for (std::size_t t = 0; t < n; ++t) {
            const std::size_t i = order[t];
            const double ci = class_cost(data.y[i], c_pos, c_neg);
            auto [lo_i, hi_i] = delta_bounds(i, ci);

            // Candidate partners: a handful of random picks; keep the one
            // with the strongest clipped directional gain.
            std::size_t best_j = n;
            double best_delta = 0.0;
            double best_gain = 0.0;
            const double si = dot(w, data.x.row(i));
            const int candidates = 8;
            for (int c = 0; c < candidates; ++c) {
                const std::size_t j = rng.uniform_index(n);
                if (j == i) continue;
                const double cj = class_cost(data.y[j], c_pos, c_neg);
                auto [lo_j_raw, hi_j_raw] = [&] {
                    // alpha_j -= y_j * delta within [0, C_j].
                    return data.y[j] > 0
                               ? std::pair<double, double>{alpha[j] - cj, alpha[j]}
                               : std::pair<double, double>{-alpha[j], cj - alpha[j]};
                }();
                const double lo = std::max(lo_i, lo_j_raw);
                const double hi = std::min(hi_i, hi_j_raw);
                if (lo >= hi) continue;
                const double sj = dot(w, data.x.row(j));
                const double grad = (data.y[i] - data.y[j]) - (si - sj);
                double uu = x_sq[i] + x_sq[j] - 2.0 * dot(data.x.row(i), data.x.row(j));
                double delta;
                if (uu <= 1e-300) {
                    delta = grad > 0.0 ? hi : lo;
                } else {
                    delta = std::clamp(grad / uu, lo, hi);
                }
                const double gain = grad * delta - 0.5 * std::max(uu, 0.0) * delta * delta;
                if (gain > best_gain) {
                    best_gain = gain;
                    best_j = j;
                    best_delta = delta;
                }
            }
            if (best_j == n || best_gain <= 0.0) continue;

            const std::size_t j = best_j;
            const double delta = best_delta;
            alpha[i] += data.y[i] * delta;
            alpha[j] -= data.y[j] * delta;
            auto xi = data.x.row(i);
            auto xj = data.x.row(j);
            for (std::size_t kdim = 0; kdim < d; ++kdim)
                w[kdim] += delta * (static_cast<double>(xi[kdim]) -
                                    static_cast<double>(xj[kdim]));
            max_step = std::max(max_step, std::fabs(delta));
        }

        if ((epoch + 1) % gap_check_every == 0 || max_step == 0.0) {
            LinearModel m{w, recover_bias(data, alpha, w, c_pos, c_neg)};
            const double dual =
                std::accumulate(alpha.begin(), alpha.end(), 0.0) - 0.5 * dot(w, w);
            const double primal = primal_objective(data, m, c_pos, c_neg);
            const double gap = primal - dual;
            if (gap <= cfg.tol * std::max(1.0, std::fabs(primal))) {
                result.model = std::move(m);
                result.alpha = std::move(alpha);
                result.converged = true;
                result.epochs = epoch + 1;
                result.primal_objective = primal;
                result.dual_objective = dual;
                result.duality_gap = gap;
                return result;
            }
        }
    }

    LinearModel m{w, recover_bias(data, alpha, w, c_pos, c_neg)};
    const double dual = std::accumulate(alpha.begin(), alpha.end(), 0.0) - 0.5 * dot(w, w);
    const double primal = primal_objective(data, m, c_pos, c_neg);
    std::fprintf(stderr,
                 "warning: SVM solver hit max_iter=%d (relative gap %.3e); "
                 "returning best iterate\n",
                 cfg.max_iter, (primal - dual) / std::max(1.0, std::fabs(primal)));
    result.model = std::move(m);
    result.alpha = std::move(alpha);
    result.converged = false;
    result.epochs = epoch;
    result.primal_objective = primal;
    result.dual_objective = dual;
    result.duality_gap = primal - dual;
    return result;
}

}  // namespace

TrainResult train_soft_margin(const BinaryDataset& data, const TrainConfig& cfg) {
    if (cfg.c <= 0.0) throw std::invalid_argument("C must be positive");
    return solve_dual(data, cfg.c, cfg.c, cfg);
}

TrainResult train_dcm(const BinaryDataset& data, const TrainConfig& cfg) {
    if (cfg.c_pos <= 0.0 || cfg.c_neg <= 0.0)
        throw std::invalid_argument("class costs must be positive");
    return solve_dual(data, cfg.c_pos, cfg.c_neg, cfg);
}

BinaryDataset resample(const BinaryDataset& data, ResampleMode mode, double target_ratio,
                       std::uint64_t seed) {
    if (data.positives() == 0 || data.negatives() == 0)
        throw std::invalid_argument("degenerate dataset");
    if (target_ratio <= 0.0) throw std::invalid_argument("impossible ratio");

    std::vector<std::size_t> pos, neg;
    for (std::size_t i = 0; i < data.size(); ++i)
        (data.y[i] > 0 ? pos : neg).push_back(i);

    Rng rng(seed ^ 0x7e5a11u);
    std::vector<std::size_t> keep;
    if (mode == ResampleMode::under) {
        const std::size_t target =
            static_cast<std::size_t>(std::floor(pos.size() * target_ratio));
        if (target == 0) throw std::invalid_argument("impossible ratio");
        keep = pos;
        if (neg.size() <= target) {
            keep.insert(keep.end(), neg.begin(), neg.end());
        } else {
            rng.shuffle(neg);
            keep.insert(keep.end(), neg.begin(), neg.begin() + target);
        }
    } else {
        const std::size_t target = static_cast<std::size_t>(
            std::ceil(static_cast<double>(neg.size()) / target_ratio));
        keep = pos;
        while (keep.size() < target)
            keep.push_back(pos[rng.uniform_index(pos.size())]);
        keep.insert(keep.end(), neg.begin(), neg.end());
    }
    std::sort(keep.begin(), keep.end());
    return data.subset(keep);
}

BinaryDataset focused_sample(const BinaryDataset& data, const TrainConfig& cfg,
                             double band, double target_ratio) {
    if (data.positives() == 0 || data.negatives() == 0)
        throw std::invalid_argument("degenerate dataset");
    if (band <= 0.0) throw std::invalid_argument("band must be positive");

    const BinaryDataset pilot_data = resample(data, ResampleMode::under, 1.0, cfg.seed);
    const LinearModel pilot = train_soft_margin(pilot_data, cfg).model;

    std::vector<std::size_t> pos;
    std::vector<std::pair<double, std::size_t>> neg_margin;  // (|margin|, index)
    for (std::size_t i = 0; i < data.size(); ++i) {
        if (data.y[i] > 0) {
            pos.push_back(i);
        } else {
            neg_margin.emplace_back(std::fabs(pilot.margin(data.x.row(i))), i);
        }
    }

    std::vector<std::size_t> kept_neg;
    for (const auto& [m, i] : neg_margin)
        if (m <= band) kept_neg.push_back(i);

    if (kept_neg.empty()) {
        // Band missed everything: fall back to the nearest #pos negatives.
        std::sort(neg_margin.begin(), neg_margin.end());
        const std::size_t take = std::min(neg_margin.size(), pos.size());
        for (std::size_t i = 0; i < take; ++i) kept_neg.push_back(neg_margin[i].second);
    }

    const std::size_t cap =
        std::isfinite(target_ratio)
            ? static_cast<std::size_t>(std::floor(pos.size() * target_ratio))
            : kept_neg.size();
    if (cap > 0 && kept_neg.size() > cap) {
        Rng rng(cfg.seed ^ 0xf0cu);
        rng.shuffle(kept_neg);
        kept_neg.resize(cap);
    }

    std::vector<std::size_t> keep = pos;
    keep.insert(keep.end(), kept_neg.begin(), kept_neg.end());
    std::sort(keep.begin(), keep.end());
    return data.subset(keep);
}

std::vector<double> default_z_grid(const LinearModel& model) {
    const double scale = std::max(std::sqrt(dot(model.w, model.w)), 1e-12);
    std::vector<double> grid;
    grid.reserve(41);
    for (int i = 0; i < 41; ++i) grid.push_back((-2.0 + i * 0.1) * scale);
    return grid;
}

LinearModel zsvm_adjust(const LinearModel& model, const BinaryDataset& validation,
                        std::span<const double> z_grid) {
    if (z_grid.empty()) throw std::invalid_argument("empty z grid");
    if (validation.positives() == 0)
        throw std::invalid_argument("validation set has no positives");

    std::vector<double> margins(validation.size());
    for (std::size_t i = 0; i < validation.size(); ++i)
        margins[i] = model.margin(validation.x.row(i));

    double best_f1 = -1.0;
    double best_delta = 0.0;
    for (double delta : z_grid) {
        long a = 0, b = 0, c = 0;
        for (std::size_t i = 0; i < validation.size(); ++i) {
            const int pred = margins[i] + delta >= 0.0 ? 1 : -1;
            if (validation.y[i] > 0) {
                (pred > 0 ? a : c) += 1;
            } else if (pred > 0) {
                ++b;
            }
        }
        const double f1 = (2 * a + b + c) == 0 ? 0.0
                                               : 2.0 * a / static_cast<double>(2 * a + b + c);
        if (f1 > best_f1 ||
            (f1 == best_f1 && std::fabs(delta) < std::fabs(best_delta))) {
            best_f1 = f1;
            best_delta = delta;
        }
    }
    LinearModel out = model;
    out.b = model.b - best_delta;
    return out;
}

Decision decide(const LinearModel& model, std::span<const float> x) {
    if (x.size() != model.w.size()) throw std::invalid_argument("dimension mismatch");
    const double m = model.margin(x);
    return {m >= 0.0 ? 1 : -1, m};
}

Decision decide(const LinearModel& model, std::span<const double> x) {
    if (x.size() != model.w.size()) throw std::invalid_argument("dimension mismatch");
    const double m = model.margin(x);
    return {m >= 0.0 ? 1 : -1, m};
}

}  // namespace affmap
