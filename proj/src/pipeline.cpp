#include "affmap/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

#include "affmap/parallel.hpp"
#include "affmap/rng.hpp"

namespace affmap {

TrainMethod method_from_string(const std::string& name) {
    if (name == "ssvm") return TrainMethod::ssvm;
    if (name == "random-sample") return TrainMethod::random_sample;
    if (name == "focused") return TrainMethod::focused;
    if (name == "zsvm") return TrainMethod::zsvm;
    if (name == "dcm") return TrainMethod::dcm;
    throw std::invalid_argument("unknown method: " + name);
}

std::string to_string(TrainMethod method) {
    switch (method) {
        case TrainMethod::ssvm: return "ssvm";
        case TrainMethod::random_sample: return "random-sample";
        case TrainMethod::focused: return "focused";
        case TrainMethod::zsvm: return "zsvm";
        default: return "dcm";
    }
}

std::vector<MultivariateExample> build_examples(const SceneDataset& dataset,
                                                const std::string& affordance,
                                                double theta_step) {
    auto skel_it = dataset.skeletons.find(affordance);
    if (skel_it == dataset.skeletons.end())
        throw std::invalid_argument("no skeleton asset for affordance " + affordance);
    const SkeletonModel& skel = skel_it->second;

    std::vector<MultivariateExample> examples;
    examples.reserve(dataset.scenes.size());
    for (const SceneData& scene : dataset.scenes) {
        const PoseLattice lattice =
            make_pose_lattice(scene.fields.occ.spec, skel, theta_step, scene.floor_z);
        const std::size_t n = lattice.size();

        MultivariateExample ex;
        ex.x = FeatureMatrix(n, kFeatureDim);
        ex.y.assign(n, -1);

        const auto truth_it = scene.truth.find(affordance);
        if (truth_it != scene.truth.end()) {
            for (const GroundTruthPose& gt : truth_it->second) {
                if (!lattice.contains(gt.ix, gt.iy, gt.iz, gt.itheta)) {
                    std::ostringstream msg;
                    msg << "ground-truth pose off lattice in scene " << scene.name
                        << ": (" << gt.ix << ", " << gt.iy << ", " << gt.iz << ", "
                        << gt.itheta << ")";
                    throw std::invalid_argument(msg.str());
                }
                ex.y[lattice.flat_index(gt.ix, gt.iy, gt.iz, gt.itheta)] = 1;
            }
        }

        const int tc = lattice.theta_count;
        parallel_for(n, [&](std::size_t lo, std::size_t hi) {
            std::vector<double> row(kFeatureDim);
            for (std::size_t p = lo; p < hi; ++p) {
                const int itheta = static_cast<int>(p % tc);
                const int iz = static_cast<int>((p / tc) % 3);
                const int iy = static_cast<int>((p / (tc * 3)) % lattice.spec.ny);
                const int ix = static_cast<int>(p / (tc * 3 * lattice.spec.ny));
                const Pose pose = lattice.pose_at(ix, iy, iz, itheta);
                write_feature_vector(scene.fields, skel, pose, row.data());
                ex.x.set_row(p, row);
            }
        });
        examples.push_back(std::move(ex));
    }
    return examples;
}

BinaryDataset pool_examples(const std::vector<MultivariateExample>& examples) {
    std::size_t total = 0;
    std::size_t dim = examples.empty() ? 0 : examples.front().dim();
    for (const auto& ex : examples) total += ex.size();

    BinaryDataset pool;
    pool.x = FeatureMatrix(total, dim);
    pool.y.resize(total);
    std::size_t r = 0;
    for (const auto& ex : examples) {
        for (std::size_t i = 0; i < ex.size(); ++i, ++r) {
            auto src = ex.x.row(i);
            std::copy(src.begin(), src.end(), pool.x.row(r).begin());
            pool.y[r] = ex.y[i];
        }
    }
    return pool;
}

namespace {

using RowRef = std::pair<std::size_t, std::size_t>;  // (example, row)

BinaryDataset gather_rows(const ExampleRefs& examples, const std::vector<RowRef>& rows) {
    const std::size_t dim = examples.empty() ? 0 : examples.front()->dim();
    BinaryDataset out;
    out.x = FeatureMatrix(rows.size(), dim);
    out.y.resize(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& ex = *examples[rows[i].first];
        auto src = ex.x.row(rows[i].second);
        std::copy(src.begin(), src.end(), out.x.row(i).begin());
        out.y[i] = ex.y[rows[i].second];
    }
    return out;
}

// Pose-level F1 of a decision-value model over a set of scenes.
Metrics pooled_metrics(const ExampleRefs& examples, std::span<const double> w,
                       double b) {
    ContingencyTable pooled;
    for (const auto* exp : examples) {
        const auto& ex = *exp;
        std::vector<std::int8_t> pred(ex.size());
        parallel_for(ex.size(), [&](std::size_t lo, std::size_t hi) {
            for (std::size_t i = lo; i < hi; ++i)
                pred[i] = dot(w, ex.x.row(i)) - b >= 0.0 ? 1 : -1;
        });
        const ContingencyTable t = make_table(ex.y, pred);
        pooled.a += t.a;
        pooled.b += t.b;
        pooled.c += t.c;
        pooled.d += t.d;
    }
    return metrics_from_table(pooled);
}

struct IndexedPool {
    std::vector<RowRef> pos;
    std::vector<RowRef> neg;
};

IndexedPool index_pool(const ExampleRefs& examples) {
    IndexedPool pool;
    for (std::size_t k = 0; k < examples.size(); ++k)
        for (std::size_t i = 0; i < examples[k]->size(); ++i)
            (examples[k]->y[i] > 0 ? pool.pos : pool.neg).push_back({k, i});
    return pool;
}

// Seeded undersample of the pooled negatives to the given neg:pos ratio.
BinaryDataset ratio_subsample(const ExampleRefs& examples, const IndexedPool& pool,
                              double ratio, std::uint64_t seed) {
    std::vector<RowRef> rows = pool.pos;
    std::vector<RowRef> neg = pool.neg;
    const std::size_t target = std::min(
        neg.size(),
        static_cast<std::size_t>(std::floor(pool.pos.size() * ratio)));
    Rng rng(seed ^ 0x5eedull);
    rng.shuffle(neg);
    rows.insert(rows.end(), neg.begin(), neg.begin() + target);
    std::sort(rows.begin(), rows.end());
    return gather_rows(examples, rows);
}

AffordanceModel train_ssvm_affordance(const ExampleRefs& train, const ExampleRefs& val,
                                      const PipelineParams& params,
                                      const std::string& affordance) {
    SsvmModel model = train_cutting_plane(train, params.ssvm);

    // Validation-selected snapshot (the early-stopping rule).
    int best_iter = -1;
    double best_f1 = -1.0;
    const std::vector<double>* best_w = &model.w;
    for (const TraceEntry& entry : model.trace) {
        const double f1 = pooled_metrics(val, entry.w, 0.0).f1;
        if (f1 > best_f1) {
            best_f1 = f1;
            best_iter = entry.iteration;
            best_w = &entry.w;
        }
    }

    AffordanceModel out;
    out.affordance = affordance;
    out.method = "ssvm";
    out.kind = "ssvm";
    out.w = *best_w;
    out.b = 0.0;
    out.converged = model.epsilon_converged;
    for (const TraceEntry& entry : model.trace)
        out.trace.emplace_back(entry.iteration, entry.train_f1);
    if (best_iter >= 0)
        std::fprintf(stderr, "ssvm[%s]: selected snapshot %d (validation F1 %.4f)\n",
                     affordance.c_str(), best_iter, best_f1);
    return out;
}

AffordanceModel train_baseline_affordance(const ExampleRefs& train,
                                          const ExampleRefs& val, TrainMethod method,
                                          const PipelineParams& params,
                                          const std::string& affordance) {
    const IndexedPool pool = index_pool(train);
    if (pool.pos.empty() || pool.neg.empty())
        throw std::invalid_argument("degenerate dataset");

    TrainConfig cfg = params.svm;
    cfg.seed = params.seed;

    LinearModel best_model;
    double best_f1 = -1.0;
    double best_ratio = 0.0;
    bool best_converged = true;

    for (double ratio : params.ratio_grid) {
        const std::size_t wanted =
            static_cast<std::size_t>(std::floor(pool.pos.size() * ratio));
        if (wanted == 0) continue;
        if (wanted > pool.neg.size() && ratio != params.ratio_grid.front()) {
            // Grid point not realizable beyond the available negatives; the
            // largest realizable ratio was already covered.
            continue;
        }

        LinearModel candidate;
        bool candidate_converged = true;
        switch (method) {
            case TrainMethod::random_sample: {
                const BinaryDataset sub = ratio_subsample(train, pool, ratio, cfg.seed);
                const TrainResult res = train_soft_margin(sub, cfg);
                candidate = res.model;
                candidate_converged = res.converged;
                break;
            }
            case TrainMethod::zsvm: {
                const BinaryDataset sub = ratio_subsample(train, pool, ratio, cfg.seed);
                const TrainResult res = train_soft_margin(sub, cfg);
                candidate = res.model;
                candidate_converged = res.converged;
                break;  // bias shift applied after ratio selection
            }
            case TrainMethod::dcm: {
                const BinaryDataset sub = ratio_subsample(train, pool, ratio, cfg.seed);
                TrainConfig dcm_cfg = cfg;
                // Inverse-frequency costs on the subsampled class balance.
                dcm_cfg.c_pos = cfg.c * std::max(1.0, ratio);
                dcm_cfg.c_neg = cfg.c;
                const TrainResult res = train_dcm(sub, dcm_cfg);
                candidate = res.model;
                candidate_converged = res.converged;
                break;
            }
            case TrainMethod::focused: {
                // Pilot on a balanced subsample, then keep the negatives
                // near the pilot hyperplane, rebalanced to the ratio.
                const BinaryDataset pilot_sub =
                    ratio_subsample(train, pool, 1.0, cfg.seed);
                const LinearModel pilot = train_soft_margin(pilot_sub, cfg).model;

                std::vector<std::pair<double, RowRef>> near;  // (|margin|, row)
                for (const RowRef& ref : pool.neg) {
                    const double m = std::fabs(
                        pilot.margin(train[ref.first]->x.row(ref.second)));
                    if (m <= params.focused_band) near.emplace_back(m, ref);
                }
                if (near.empty()) {
                    for (const RowRef& ref : pool.neg)
                        near.emplace_back(
                            std::fabs(pilot.margin(train[ref.first]->x.row(ref.second))),
                            ref);
                    std::sort(near.begin(), near.end());
                    near.resize(std::min(near.size(), pool.pos.size()));
                }
                std::vector<RowRef> rows = pool.pos;
                if (near.size() > wanted) {
                    Rng rng(cfg.seed ^ 0xf0cu);
                    std::vector<RowRef> kept;
                    kept.reserve(near.size());
                    for (auto& [m, ref] : near) kept.push_back(ref);
                    rng.shuffle(kept);
                    kept.resize(wanted);
                    rows.insert(rows.end(), kept.begin(), kept.end());
                } else {
                    for (auto& [m, ref] : near) rows.push_back(ref);
                }
                std::sort(rows.begin(), rows.end());
                candidate = train_soft_margin(gather_rows(train, rows), cfg).model;
                break;
            }
            case TrainMethod::ssvm:
                throw std::logic_error("ssvm handled separately");
        }

        const double f1 = pooled_metrics(val, candidate.w, candidate.b).f1;
        if (f1 > best_f1) {
            best_f1 = f1;
            best_model = candidate;
            best_ratio = ratio;
            best_converged = candidate_converged;
        }
    }

    if (method == TrainMethod::zsvm) {
        // Tune the boundary shift on the pooled validation set.
        const IndexedPool val_pool = index_pool(val);
        std::vector<RowRef> val_rows = val_pool.pos;
        val_rows.insert(val_rows.end(), val_pool.neg.begin(), val_pool.neg.end());
        std::sort(val_rows.begin(), val_rows.end());
        const BinaryDataset val_data = gather_rows(val, val_rows);
        if (val_data.positives() > 0) {
            const auto grid = default_z_grid(best_model);
            best_model = zsvm_adjust(best_model, val_data, grid);
        }
    }

    AffordanceModel out;
    out.affordance = affordance;
    out.method = to_string(method);
    out.kind = "linear";
    out.w = best_model.w;
    out.b = best_model.b;
    out.converged = best_converged;
    std::fprintf(stderr, "%s[%s]: selected ratio 1:%g (validation F1 %.4f)\n",
                 out.method.c_str(), affordance.c_str(), best_ratio, best_f1);
    return out;
}

AffordanceModel train_affordance_refs(const ExampleRefs& train, const ExampleRefs& val,
                                      TrainMethod method, const PipelineParams& params,
                                      const std::string& affordance) {
    if (train.empty()) throw std::invalid_argument("no training examples");
    if (val.empty()) throw std::invalid_argument("no validation examples");
    if (method == TrainMethod::ssvm)
        return train_ssvm_affordance(train, val, params, affordance);
    return train_baseline_affordance(train, val, method, params, affordance);
}

}  // namespace

AffordanceModel train_affordance(const std::vector<MultivariateExample>& train,
                                 const std::vector<MultivariateExample>& validation,
                                 TrainMethod method, const PipelineParams& params,
                                 const std::string& affordance) {
    ExampleRefs train_refs, val_refs;
    for (const auto& ex : train) train_refs.push_back(&ex);
    for (const auto& ex : validation) val_refs.push_back(&ex);
    return train_affordance_refs(train_refs, val_refs, method, params, affordance);
}

AffordanceMap build_affordance_map(const SceneData& scene, const SkeletonModel& skel,
                                   const AffordanceModel& model, double theta_step,
                                   const NmsConfig& nms) {
    if (model.w.size() != static_cast<std::size_t>(kFeatureDim))
        throw std::invalid_argument("dimension mismatch");

    AffordanceMap map;
    map.affordance = model.affordance;
    map.lattice = make_pose_lattice(scene.fields.occ.spec, skel, theta_step,
                                    scene.floor_z);
    const PoseLattice& lattice = map.lattice;
    const std::size_t n = lattice.size();
    map.margins.resize(n);
    map.labels.resize(n);

    double wnorm = 0.0;
    for (double v : model.w) wnorm += v * v;
    if (wnorm == 0.0)
        std::fprintf(stderr, "warning: degenerate model (w = 0); map is all-positive\n");

    const int tc = lattice.theta_count;
    const std::span<const double> w(model.w);
    parallel_for(n, [&](std::size_t lo, std::size_t hi) {
        std::vector<double> row(kFeatureDim);
        for (std::size_t p = lo; p < hi; ++p) {
            const int itheta = static_cast<int>(p % tc);
            const int iz = static_cast<int>((p / tc) % 3);
            const int iy = static_cast<int>((p / (tc * 3)) % lattice.spec.ny);
            const int ix = static_cast<int>(p / (tc * 3 * lattice.spec.ny));
            const Pose pose = lattice.pose_at(ix, iy, iz, itheta);
            write_feature_vector(scene.fields, skel, pose, row.data());
            const double m = dot(w, std::span<const double>(row)) - model.b;
            map.margins[p] = m;
            map.labels[p] = m >= 0.0 ? 1 : -1;
        }
    });

    // Contour: per (x, y) column, the best margin over z levels and angles.
    map.contour.assign(static_cast<std::size_t>(lattice.spec.nx) * lattice.spec.ny,
                       -std::numeric_limits<double>::infinity());
    for (int ix = 0; ix < lattice.spec.nx; ++ix)
        for (int iy = 0; iy < lattice.spec.ny; ++iy) {
            double best = -std::numeric_limits<double>::infinity();
            for (int iz = 0; iz < 3; ++iz)
                for (int it = 0; it < tc; ++it)
                    best = std::max(best, map.margins[lattice.flat_index(ix, iy, iz, it)]);
            map.contour[static_cast<std::size_t>(iy) * lattice.spec.nx + ix] = best;
        }
    map.contour_min = *std::min_element(map.contour.begin(), map.contour.end());
    map.contour_max = *std::max_element(map.contour.begin(), map.contour.end());

    // Greedy non-maximum suppression over the positive poses.
    std::vector<std::size_t> order;
    for (std::size_t p = 0; p < n; ++p)
        if (map.labels[p] > 0) order.push_back(p);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (map.margins[a] != map.margins[b]) return map.margins[a] > map.margins[b];
        return a < b;
    });
    for (std::size_t p : order) {
        if (static_cast<int>(map.skeletons.size()) >= nms.max_skeletons) break;
        const int itheta = static_cast<int>(p % tc);
        const int iz = static_cast<int>((p / tc) % 3);
        const int iy = static_cast<int>((p / (tc * 3)) % lattice.spec.ny);
        const int ix = static_cast<int>(p / (tc * 3 * lattice.spec.ny));
        const Pose pose = lattice.pose_at(ix, iy, iz, itheta);
        bool suppressed = false;
        for (const PlacedSkeleton& kept : map.skeletons) {
            const double dxy = std::hypot(pose.x - kept.pose.x, pose.y - kept.pose.y);
            if (dxy <= nms.radius &&
                angle_diff(pose.theta, kept.pose.theta) <= nms.theta_window) {
                suppressed = true;
                break;
            }
        }
        if (!suppressed) map.skeletons.push_back({pose, map.margins[p]});
    }
    return map;
}

std::vector<int> assign_folds(std::size_t scene_count, int k, std::uint64_t seed) {
    if (k < 2) throw std::invalid_argument("k must be at least 2");
    if (scene_count < static_cast<std::size_t>(k))
        throw std::invalid_argument("fewer scenes than folds");
    std::vector<std::size_t> order(scene_count);
    std::iota(order.begin(), order.end(), std::size_t(0));
    Rng rng(seed ^ 0xf01d5ull);
    rng.shuffle(order);
    std::vector<int> fold(scene_count, 0);
    for (std::size_t i = 0; i < scene_count; ++i)
        fold[order[i]] = static_cast<int>(i % static_cast<std::size_t>(k));
    return fold;
}

EvalReport kfold_evaluate(const std::vector<MultivariateExample>& examples,
                          const std::string& affordance, TrainMethod method,
                          const PipelineParams& params, int k, std::uint64_t seed) {
    const std::vector<int> fold = assign_folds(examples.size(), k, seed);

    // Shuffled order again, to pick the validation scene deterministically as
    // the last training scene in fold order.
    std::vector<std::size_t> order(examples.size());
    std::iota(order.begin(), order.end(), std::size_t(0));
    Rng rng(seed ^ 0xf01d5ull);
    rng.shuffle(order);

    EvalReport report;
    report.affordance = affordance;
    report.method = to_string(method);

    for (int f = 0; f < k; ++f) {
        ExampleRefs train, test;
        std::size_t val_scene = examples.size();
        for (std::size_t pos = 0; pos < order.size(); ++pos) {
            const std::size_t scene = order[pos];
            if (fold[scene] == f) continue;
            val_scene = scene;  // last training scene in shuffled order
        }
        for (std::size_t pos = 0; pos < order.size(); ++pos) {
            const std::size_t scene = order[pos];
            if (fold[scene] == f) {
                test.push_back(&examples[scene]);
            } else if (scene != val_scene) {
                train.push_back(&examples[scene]);
            }
        }
        ExampleRefs val = {&examples[val_scene]};

        const AffordanceModel model =
            train_affordance_refs(train, val, method, params, affordance);
        FoldResult result;
        result.fold = f;
        result.test = pooled_metrics(test, model.w, model.b);
        report.folds.push_back(result);
    }

    for (const FoldResult& fr : report.folds) {
        report.mean_precision += fr.test.precision;
        report.mean_recall += fr.test.recall;
        report.mean_f1 += fr.test.f1;
    }
    report.mean_precision /= report.folds.size();
    report.mean_recall /= report.folds.size();
    report.mean_f1 /= report.folds.size();
    return report;
}

EvalReport kfold_evaluate(const SceneDataset& dataset, const std::string& affordance,
                          TrainMethod method, const PipelineParams& params, int k,
                          std::uint64_t seed) {
    const auto examples = build_examples(dataset, affordance, params.theta_step);
    return kfold_evaluate(examples, affordance, method, params, k, seed);
}

std::vector<SweepRow> imbalance_sweep(const BinaryDataset& pool, TrainMethod method,
                                      std::span<const double> ratios,
                                      const PipelineParams& params, std::uint64_t seed,
                                      const BinaryDataset* heldout) {
    if (method == TrainMethod::ssvm)
        throw std::invalid_argument("imbalance sweep applies to the pose-level SVMs");

    // Stratified 50/50 train/test split when no held-out set is supplied.
    BinaryDataset split_holdout;
    const BinaryDataset* test = heldout;
    BinaryDataset train_pool;
    {
        std::vector<std::size_t> pos, neg;
        for (std::size_t i = 0; i < pool.size(); ++i)
            (pool.y[i] > 0 ? pos : neg).push_back(i);
        if (heldout) {
            train_pool = pool;
        } else {
            Rng rng(seed ^ 0x51a7ull);
            rng.shuffle(pos);
            rng.shuffle(neg);
            std::vector<std::size_t> train_rows, test_rows;
            for (std::size_t i = 0; i < pos.size(); ++i)
                (i % 2 == 0 ? train_rows : test_rows).push_back(pos[i]);
            for (std::size_t i = 0; i < neg.size(); ++i)
                (i % 2 == 0 ? train_rows : test_rows).push_back(neg[i]);
            std::sort(train_rows.begin(), train_rows.end());
            std::sort(test_rows.begin(), test_rows.end());
            train_pool = pool.subset(train_rows);
            split_holdout = pool.subset(test_rows);
            test = &split_holdout;
        }
    }

    TrainConfig cfg = params.svm;
    cfg.seed = seed;

    std::vector<SweepRow> rows;
    for (double ratio : ratios) {
        SweepRow row;
        row.ratio = ratio;
        const std::size_t wanted = static_cast<std::size_t>(
            std::floor(train_pool.positives() * ratio));
        if (wanted > train_pool.negatives() || wanted == 0) {
            row.skipped = true;
            std::fprintf(stderr, "sweep: ratio 1:%g unreachable, skipped\n", ratio);
            rows.push_back(row);
            continue;
        }

        const BinaryDataset sub =
            resample(train_pool, ResampleMode::under, ratio, seed);
        LinearModel model;
        switch (method) {
            case TrainMethod::dcm: {
                TrainConfig dcm_cfg = cfg;
                dcm_cfg.c_pos = cfg.c * std::max(1.0, ratio);
                dcm_cfg.c_neg = cfg.c;
                model = train_dcm(sub, dcm_cfg).model;
                break;
            }
            case TrainMethod::focused: {
                const BinaryDataset foc =
                    focused_sample(train_pool, cfg, params.focused_band, ratio);
                model = train_soft_margin(foc, cfg).model;
                break;
            }
            default:
                model = train_soft_margin(sub, cfg).model;
                break;
        }

        std::vector<std::int8_t> pred(test->size());
        for (std::size_t i = 0; i < test->size(); ++i)
            pred[i] = decide(model, test->x.row(i)).label;
        row.f1 = metrics(test->y, pred).f1;
        rows.push_back(row);
    }
    return rows;
}

std::string metrics_csv(const std::vector<EvalReport>& reports) {
    std::ostringstream out;
    out << "affordance,method,fold,precision,recall,f1\n";
    char buf[256];
    for (const EvalReport& report : reports) {
        for (const FoldResult& fr : report.folds) {
            std::snprintf(buf, sizeof(buf), "%s,%s,%d,%.6f,%.6f,%.6f\n",
                          report.affordance.c_str(), report.method.c_str(), fr.fold,
                          fr.test.precision, fr.test.recall, fr.test.f1);
            out << buf;
        }
        std::snprintf(buf, sizeof(buf), "%s,%s,mean,%.6f,%.6f,%.6f\n",
                      report.affordance.c_str(), report.method.c_str(),
                      report.mean_precision, report.mean_recall, report.mean_f1);
        out << buf;
    }
    return out.str();
}

}  // namespace affmap
