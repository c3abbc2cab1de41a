#include "ua/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "ua/error.hpp"
#include "ua/rng.hpp"

namespace ua {

namespace {

const std::vector<double>& final_params(const Proof& proof) {
    return proof.steps.empty() ? proof.initial_params : proof.steps.back().params_after;
}

std::array<double, 3> evaluate_split_f1(const ModelConfig& config, const ParameterVector& params,
                                        const Dataset& train, const Dataset& test,
                                        std::span<const std::uint64_t> unlearn_ids) {
    const auto train_preds = predict(config, params, train);
    std::vector<int> pred_u, truth_u, pred_r, truth_r;
    std::size_t cursor = 0;
    for (std::int64_t i = 0; i < train.n; ++i) {
        const bool unlearned =
            cursor < unlearn_ids.size() && unlearn_ids[cursor] == train.ids[i] ? (++cursor, true) : false;
        if (unlearned) {
            pred_u.push_back(train_preds[i]);
            truth_u.push_back(train.labels[i]);
        } else {
            pred_r.push_back(train_preds[i]);
            truth_r.push_back(train.labels[i]);
        }
    }
    const auto test_preds = predict(config, params, test);
    return {
        pred_u.empty() ? 0.0 : macro_f1(pred_u, truth_u, train.num_classes),
        macro_f1(pred_r, truth_r, train.num_classes),
        macro_f1(test_preds, test.labels, test.num_classes),
    };
}

UtilityCell aggregate(std::span<const double> values) {
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= static_cast<double>(values.size());
    double var = 0.0;
    for (double v : values) var += (v - mean) * (v - mean);
    var = values.size() > 1 ? var / static_cast<double>(values.size() - 1) : 0.0;
    return {mean, std::sqrt(var)};
}

} // namespace

ModelConfig recipe_config(const DeskRecipe& recipe) {
    ModelConfig config;
    config.arch = recipe.arch;
    config.hidden_size = recipe.arch == Arch::mlp ? recipe.hidden_size : 0;
    config.input_dim = static_cast<int>(recipe.dim);
    config.num_classes = recipe.num_classes;
    config.weight_decay = recipe.hyper.weight_decay;
    return config;
}

Dataset recipe_train_set(const DeskRecipe& recipe, std::uint64_t seed) {
    return gen_blobs(recipe.num_classes, recipe.dim, recipe.per_class, recipe.spread,
                     derive_key(seed, {0x747261696eULL}));
}

Dataset recipe_test_set(const DeskRecipe& recipe, std::uint64_t seed) {
    return gen_blobs(recipe.num_classes, recipe.dim, recipe.test_per_class, recipe.spread,
                     derive_key(seed, {0x74657374ULL}));
}

std::vector<std::uint64_t> resolve_unlearn_set(const Dataset& ds, const UnlearnSpec& spec,
                                               std::uint64_t seed) {
    if (spec.kind == UnlearnSpecKind::random_fraction) {
        return split_random(ds, spec.fraction, seed);
    }
    auto part = dirichlet_partition(ds, spec.alpha, spec.pieces, seed);
    int piece = spec.piece_index;
    if (piece < 0) {
        // Most class-imbalanced piece: the one holding the largest share of
        // any single class.
        std::vector<std::int64_t> class_totals(ds.num_classes, 0);
        for (int l : ds.labels) class_totals[l]++;
        double best_share = -1.0;
        for (int p = 0; p < spec.pieces; ++p) {
            std::vector<std::int64_t> counts(ds.num_classes, 0);
            for (std::uint64_t id : part.pieces[p]) counts[ds.labels[*ds.index_of(id)]]++;
            for (int c = 0; c < ds.num_classes; ++c) {
                if (class_totals[c] == 0) continue;
                const double share =
                    static_cast<double>(counts[c]) / static_cast<double>(class_totals[c]);
                if (share > best_share) {
                    best_share = share;
                    piece = p;
                }
            }
        }
    }
    if (piece < 0 || piece >= spec.pieces || part.pieces[piece].empty()) {
        throw Error(ErrorCode::empty_result, "resolve_unlearn_set: empty dirichlet piece");
    }
    return part.pieces[piece];
}

UtilityTable run_utility_table(const DeskRecipe& recipe, const UnlearnSpec& unlearn,
                               std::span<const std::uint64_t> seeds) {
    UtilityTable table;
    table.methods = {"Original", "Retrain", "Adv-R(S_r)", "Adv-R(S_n)", "Adv-F"};
    table.per_seed.resize(seeds.size());

    const ModelConfig config = recipe_config(recipe);
    for (std::size_t si = 0; si < seeds.size(); ++si) {
        const std::uint64_t seed = seeds[si];
        const Dataset train_set = recipe_train_set(recipe, seed);
        const Dataset test_set = recipe_test_set(recipe, seed);
        const auto unlearn_ids = resolve_unlearn_set(train_set, unlearn, seed);

        const Proof pot = train(train_set, config, recipe.hyper, seed);
        const Proof port_naive = retrain_naive(train_set, unlearn_ids, config, recipe.hyper, seed);
        const Proof port_sr = adv_retrain(train_set, unlearn_ids, config, recipe.hyper, AdvMode::sr,
                                          recipe.sr_sample_size, seed);
        const Proof port_sn = adv_retrain(train_set, unlearn_ids, config, recipe.hyper, AdvMode::sn,
                                          recipe.sr_sample_size, seed);
        const Proof port_forge = forge(pot, train_set, unlearn_ids, recipe.gamma_r, seed);

        auto eval = [&](const Proof& proof) {
            const ParameterVector params{final_params(proof), proof.layout};
            return evaluate_split_f1(proof.model_config, params, train_set, test_set, unlearn_ids);
        };
        table.per_seed[si] = {eval(pot), eval(port_naive), eval(port_sr), eval(port_sn),
                              eval(port_forge)};
    }

    table.cells.resize(table.methods.size());
    for (std::size_t m = 0; m < table.methods.size(); ++m) {
        for (int col = 0; col < 3; ++col) {
            std::vector<double> values;
            for (const auto& seed_rows : table.per_seed) values.push_back(seed_rows[m][col]);
            table.cells[m][col] = aggregate(values);
        }
    }
    return table;
}

ErrorCurve run_verify_error_curve(const DeskRecipe& recipe, const UnlearnSpec& unlearn,
                                  double gamma, double gamma_r, std::uint64_t seed) {
    DeskRecipe run = recipe;
    run.hyper.learning_rate = gamma;

    const Dataset train_set = recipe_train_set(run, seed);
    const auto unlearn_ids = resolve_unlearn_set(train_set, unlearn, seed);
    const ModelConfig config = recipe_config(run);
    const Proof pot = train(train_set, config, run.hyper, seed);
    const Proof forged = forge(pot, train_set, unlearn_ids, gamma_r, seed);
    const VerificationReport report =
        verify_reproducing(forged, train_set, unlearn_ids, std::numeric_limits<double>::infinity());

    ErrorCurve curve;
    curve.max_error = report.max_error;
    curve.mean_error = report.mean_error;
    std::vector<std::uint64_t> sorted_unlearn(unlearn_ids.begin(), unlearn_ids.end());
    const std::uint64_t per_epoch =
        (static_cast<std::uint64_t>(train_set.n) + run.hyper.batch_size - 1) / run.hyper.batch_size;
    for (std::size_t i = 0; i < pot.steps.size(); ++i) {
        bool touches = false;
        for (std::uint64_t id : pot.steps[i].batch_ids) {
            if (std::binary_search(sorted_unlearn.begin(), sorted_unlearn.end(), id)) {
                touches = true;
                break;
            }
        }
        curve.points.push_back({pot.steps[i].t, report.per_step_errors[i], touches});
    }
    for (int e = 0; e < run.hyper.epochs; ++e) {
        EpochErrorStats stats;
        stats.epoch = e;
        std::vector<double> inc, exc;
        for (const auto& pt : curve.points) {
            if ((pt.t - 1) / per_epoch != static_cast<std::uint64_t>(e)) continue;
            (pt.touches_unlearn ? inc : exc).push_back(pt.error);
        }
        auto fill = [](std::span<const double> v, double& mean, double& stddev, std::int64_t& count) {
            count = static_cast<std::int64_t>(v.size());
            if (v.empty()) return;
            const UtilityCell cell = aggregate(v);
            mean = cell.mean;
            stddev = cell.stddev;
        };
        fill(exc, stats.mean_excluding, stats.std_excluding, stats.count_excluding);
        fill(inc, stats.mean_including, stats.std_including, stats.count_including);
        curve.epochs.push_back(stats);
    }
    return curve;
}

std::vector<LrSweepRow> run_lr_sweep(const DeskRecipe& recipe, const UnlearnSpec& unlearn,
                                     std::span<const double> gammas, std::uint64_t seed) {
    std::vector<LrSweepRow> rows;
    for (double gamma : gammas) {
        const ErrorCurve curve = run_verify_error_curve(recipe, unlearn, gamma, gamma, seed);
        rows.push_back({gamma, curve.max_error, curve.mean_error});
    }
    return rows;
}

PuCheckRow run_pu_check(const Dataset& ds, double unlearn_fraction, int batch_size,
                        std::int64_t draws, std::uint64_t seed) {
    const auto unlearn_ids = split_random(ds, unlearn_fraction, seed);
    std::vector<std::uint64_t> sorted(unlearn_ids.begin(), unlearn_ids.end());

    TrainingHyper hyper;
    hyper.epochs = 1;
    hyper.batch_size = batch_size;
    hyper.learning_rate = 1.0;
    hyper.batch_mode = BatchMode::uniform_with_replacement;

    std::int64_t overlapping = 0;
    Rng rng(derive_key(seed, {0x70755f636865636bULL}));
    for (std::int64_t i = 0; i < draws; ++i) {
        // Draw batches the same way uniform-mode training does.
        Rng batch_rng(derive_key(rng.next_u64(), {0x6261746368ULL}));
        bool hit = false;
        for (int j = 0; j < batch_size && !hit; ++j) {
            const std::uint64_t id = ds.ids[batch_rng.next_below(ds.n)];
            hit = std::binary_search(sorted.begin(), sorted.end(), id);
        }
        overlapping += hit;
    }
    PuCheckRow row;
    row.unlearn_fraction = unlearn_fraction;
    row.batch_size = batch_size;
    row.closed_form = compute_pu(sorted.size(), ds.n, batch_size);
    row.empirical = static_cast<double>(overlapping) / static_cast<double>(draws);
    row.draws = draws;
    return row;
}

std::string utility_table_to_csv(const UtilityTable& table) {
    std::ostringstream out;
    out << "method,f1_unlearn_mean,f1_unlearn_std,f1_retained_mean,f1_retained_std,"
           "f1_test_mean,f1_test_std\n";
    for (std::size_t m = 0; m < table.methods.size(); ++m) {
        out << table.methods[m];
        for (int col = 0; col < 3; ++col) {
            out << ',' << table.cells[m][col].mean << ',' << table.cells[m][col].stddev;
        }
        out << '\n';
    }
    return out.str();
}

std::string error_curve_to_csv(const ErrorCurve& curve) {
    std::ostringstream out;
    out << "step,error,touches_unlearn\n";
    for (const auto& pt : curve.points) {
        out << pt.t << ',' << pt.error << ',' << (pt.touches_unlearn ? 1 : 0) << '\n';
    }
    return out.str();
}

std::string lr_sweep_to_csv(std::span<const LrSweepRow> rows) {
    std::ostringstream out;
    out << "gamma,max_error,mean_error\n";
    for (const auto& row : rows) {
        out << row.gamma << ',' << row.max_error << ',' << row.mean_error << '\n';
    }
    return out.str();
}

} // namespace ua
