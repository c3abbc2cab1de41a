#include "ua/unlearning.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <iostream>
#include <limits>

#include "ua/error.hpp"
#include "ua/rng.hpp"
#include "ua/threads.hpp"

namespace ua {

namespace {

constexpr std::uint64_t kStreamEpochPerm = 0x65706f6368ULL;
constexpr std::uint64_t kStreamUniform = 0x756e69666fULL;
constexpr std::uint64_t kStreamSrCandidate = 0x73725f636e64ULL;
constexpr std::uint64_t kStreamForge = 0x666f726765ULL;

void check_hyper(const TrainingHyper& hyper) {
    if (hyper.epochs < 1 || hyper.batch_size < 1 || !(hyper.learning_rate > 0.0) ||
        hyper.weight_decay < 0.0) {
        throw Error(ErrorCode::invalid_argument, "training hyperparameters out of range");
    }
}

bool contains_id(std::span<const std::uint64_t> sorted, std::uint64_t id) {
    return std::binary_search(sorted.begin(), sorted.end(), id);
}

std::vector<std::uint64_t> retained_ids(const Dataset& ds,
                                        std::span<const std::uint64_t> unlearn_ids) {
    std::vector<std::uint64_t> out;
    out.reserve(ds.ids.size());
    for (std::uint64_t id : ds.ids) {
        if (!contains_id(unlearn_ids, id)) out.push_back(id);
    }
    return out;
}

/// Shared training loop; pool_ids is the sampling universe.
Proof run_training(const Dataset& ds, std::span<const std::uint64_t> pool_ids,
                   const ModelConfig& config_in, const TrainingHyper& hyper, std::uint64_t seed,
                   ProofKind kind, std::vector<std::uint64_t> declared_unlearn_ids,
                   const std::function<std::vector<std::uint64_t>(
                       const ParameterVector&, std::uint64_t, std::vector<std::uint64_t>)>& map_batch) {
    check_hyper(hyper);
    if (pool_ids.empty()) throw Error(ErrorCode::invalid_argument, "training pool is empty");

    ModelConfig config = config_in;
    config.input_dim = static_cast<int>(ds.d);
    config.num_classes = ds.num_classes;
    config.weight_decay = hyper.weight_decay;

    Proof proof;
    proof.kind = kind;
    proof.model_config = config;
    proof.dataset_fingerprint = ds.fingerprint;
    proof.seed = seed;
    proof.declared_unlearn_ids = std::move(declared_unlearn_ids);
    std::sort(proof.declared_unlearn_ids.begin(), proof.declared_unlearn_ids.end());

    ParameterVector w = init_params(config, seed);
    proof.initial_params = w.values;
    proof.layout = w.layout;

    const std::uint64_t T = step_count(pool_ids.size(), hyper);
    proof.steps.reserve(T);
    const UpdateRule rule{hyper.learning_rate, hyper.weight_decay};
    for (std::uint64_t t = 1; t <= T; ++t) {
        std::vector<std::uint64_t> batch = training_batch(pool_ids, hyper, seed, t);
        if (map_batch) batch = map_batch(w, t, std::move(batch));
        GradientVector g = gradient(config, w, ds, batch, hyper.weight_decay);
        if (!all_finite(g.values)) {
            throw Error(ErrorCode::non_finite, "training diverged at step " + std::to_string(t));
        }
        w = sgd_step(w, g, hyper.learning_rate);
        append_step_inplace(proof, ProofStep{t, std::move(batch), rule, w.values});
    }
    return proof;
}

} // namespace

std::uint64_t step_count(std::uint64_t pool_size, const TrainingHyper& hyper) {
    const std::uint64_t m = static_cast<std::uint64_t>(hyper.batch_size);
    const std::uint64_t per_epoch = (pool_size + m - 1) / m;
    return static_cast<std::uint64_t>(hyper.epochs) * per_epoch;
}

std::vector<std::uint64_t> training_batch(std::span<const std::uint64_t> pool_ids,
                                          const TrainingHyper& hyper, std::uint64_t seed,
                                          std::uint64_t t) {
    const std::uint64_t n = pool_ids.size();
    const std::uint64_t m = static_cast<std::uint64_t>(hyper.batch_size);
    if (t == 0 || t > step_count(n, hyper)) {
        throw Error(ErrorCode::invalid_argument, "training_batch: step index out of range");
    }
    if (hyper.batch_mode == BatchMode::uniform_with_replacement) {
        Rng rng(derive_key(seed, {kStreamUniform, t}));
        std::vector<std::uint64_t> batch(m);
        for (auto& id : batch) id = pool_ids[rng.next_below(n)];
        return batch;
    }
    const std::uint64_t per_epoch = (n + m - 1) / m;
    const std::uint64_t epoch = (t - 1) / per_epoch;
    const std::uint64_t pos = (t - 1) % per_epoch;
    std::vector<std::uint64_t> perm(pool_ids.begin(), pool_ids.end());
    Rng rng(derive_key(seed, {kStreamEpochPerm, epoch}));
    rng.shuffle(perm);
    const std::uint64_t lo = pos * m;
    const std::uint64_t hi = std::min(n, lo + m);
    return {perm.begin() + lo, perm.begin() + hi};
}

Proof train(const Dataset& ds, const ModelConfig& config, const TrainingHyper& hyper,
            std::uint64_t seed) {
    return run_training(ds, ds.ids, config, hyper, seed, ProofKind::pot, {}, nullptr);
}

Proof retrain_naive(const Dataset& ds, std::span<const std::uint64_t> unlearn_ids,
                    const ModelConfig& config, const TrainingHyper& hyper, std::uint64_t seed) {
    std::vector<std::uint64_t> sorted_unlearn(unlearn_ids.begin(), unlearn_ids.end());
    std::sort(sorted_unlearn.begin(), sorted_unlearn.end());
    auto pool = retained_ids(ds, sorted_unlearn);
    if (pool.empty()) throw Error(ErrorCode::empty_result, "retrain_naive: retained set is empty");

    std::vector<bool> present(ds.num_classes, false);
    for (std::uint64_t id : pool) present[ds.labels[*ds.index_of(id)]] = true;
    for (int c = 0; c < ds.num_classes; ++c) {
        if (!present[c]) {
            std::cerr << "retrain_naive: warning: class " << c << " has no retained samples\n";
        }
    }
    return run_training(ds, pool, config, hyper, seed, ProofKind::port, std::move(sorted_unlearn),
                        nullptr);
}

NearestNeighborMap build_nn_map(const Dataset& ds, std::span<const std::uint64_t> unlearn_ids) {
    std::vector<std::uint64_t> sorted_unlearn(unlearn_ids.begin(), unlearn_ids.end());
    std::sort(sorted_unlearn.begin(), sorted_unlearn.end());

    // Retained rows bucketed by class.
    std::vector<std::vector<std::int64_t>> retained_by_class(ds.num_classes);
    for (std::int64_t i = 0; i < ds.n; ++i) {
        if (!contains_id(sorted_unlearn, ds.ids[i])) retained_by_class[ds.labels[i]].push_back(i);
    }

    NearestNeighborMap nn;
    for (std::uint64_t id : sorted_unlearn) {
        const auto row_opt = ds.index_of(id);
        if (!row_opt) throw Error(ErrorCode::unknown_sample, "build_nn_map: unlearned id not in dataset");
        const std::int64_t row = *row_opt;
        const int label = ds.labels[row];
        const auto& candidates = retained_by_class[label];
        if (candidates.empty()) {
            throw Error(ErrorCode::empty_class, "build_nn_map: class " + std::to_string(label) +
                                                    " has no retained representative");
        }
        const auto x = ds.row(row);
        double best_sq = std::numeric_limits<double>::infinity();
        std::int64_t best_row = -1;
        for (std::int64_t cand : candidates) {
            const auto z = ds.row(cand);
            double sq = 0.0;
            for (std::int64_t j = 0; j < ds.d; ++j) {
                const double diff = x[j] - z[j];
                sq += diff * diff;
            }
            // Rows are in ascending id order, so strict < ties toward the lowest id.
            if (sq < best_sq) {
                best_sq = sq;
                best_row = cand;
            }
        }
        nn.pairs[id] = {ds.ids[best_row], std::sqrt(best_sq)};
    }
    return nn;
}

std::vector<std::uint64_t> select_sn(std::span<const std::uint64_t> batch_ids,
                                     std::span<const std::uint64_t> unlearn_ids,
                                     const NearestNeighborMap& nn) {
    std::vector<std::uint64_t> out(batch_ids.begin(), batch_ids.end());
    for (auto& id : out) {
        if (!contains_id(unlearn_ids, id)) continue;
        const auto it = nn.pairs.find(id);
        if (it == nn.pairs.end()) {
            throw Error(ErrorCode::unknown_sample,
                        "select_sn: no neighbor for unlearned id " + std::to_string(id));
        }
        id = it->second.neighbor_id;
    }
    return out;
}

std::vector<std::uint64_t> select_sr(const ModelConfig& config, const ParameterVector& params,
                                     std::span<const std::uint64_t> batch_ids, const Dataset& ds,
                                     std::span<const std::uint64_t> unlearn_ids, int s,
                                     std::uint64_t seed, double lambda) {
    if (s < 1) throw Error(ErrorCode::invalid_argument, "select_sr: s must be >= 1");
    std::vector<std::uint64_t> sorted_unlearn(unlearn_ids.begin(), unlearn_ids.end());
    std::sort(sorted_unlearn.begin(), sorted_unlearn.end());
    const auto pool = retained_ids(ds, sorted_unlearn);
    const std::size_t m = batch_ids.size();
    if (pool.size() < m) {
        throw Error(ErrorCode::invalid_argument, "select_sr: retained set smaller than batch size");
    }

    const GradientVector ref = gradient(config, params, ds, batch_ids, lambda);
    double best_dist = std::numeric_limits<double>::infinity();
    std::vector<std::uint64_t> best;
    for (int i = 0; i < s; ++i) {
        Rng rng(derive_key(seed, {kStreamSrCandidate, static_cast<std::uint64_t>(i)}));
        const auto picks = rng.sample_without_replacement(pool.size(), m);
        std::vector<std::uint64_t> candidate(m);
        for (std::size_t j = 0; j < m; ++j) candidate[j] = pool[picks[j]];
        const GradientVector g = gradient(config, params, ds, candidate, lambda);
        const double dist = l2_distance(ref.values, g.values);
        if (dist < best_dist) { // strict < ties toward the lowest candidate index
            best_dist = dist;
            best = std::move(candidate);
        }
    }
    return best;
}

Proof adv_retrain(const Dataset& ds, std::span<const std::uint64_t> unlearn_ids,
                  const ModelConfig& config, const TrainingHyper& hyper, AdvMode mode,
                  int sr_sample_size, std::uint64_t seed) {
    std::vector<std::uint64_t> sorted_unlearn(unlearn_ids.begin(), unlearn_ids.end());
    std::sort(sorted_unlearn.begin(), sorted_unlearn.end());

    NearestNeighborMap nn;
    if (mode == AdvMode::sn && !sorted_unlearn.empty()) nn = build_nn_map(ds, sorted_unlearn);

    auto map_batch = [&](const ParameterVector& w, std::uint64_t t,
                         std::vector<std::uint64_t> batch) -> std::vector<std::uint64_t> {
        bool overlaps = false;
        for (std::uint64_t id : batch) {
            if (contains_id(sorted_unlearn, id)) {
                overlaps = true;
                break;
            }
        }
        if (!overlaps) return batch; // untouched batches pass through unchanged
        if (mode == AdvMode::sn) return select_sn(batch, sorted_unlearn, nn);
        return select_sr(ModelConfig{config.arch, config.hidden_size, static_cast<int>(ds.d),
                                     ds.num_classes, hyper.weight_decay},
                         w, batch, ds, sorted_unlearn, sr_sample_size,
                         derive_key(seed, {0x73725f73656cULL, t}), hyper.weight_decay);
    };
    // Batches are drawn from the full dataset and mapped into the retained set.
    return run_training(ds, ds.ids, config, hyper, seed, ProofKind::port, sorted_unlearn, map_batch);
}

Proof forge(const Proof& pot, const Dataset& ds, std::span<const std::uint64_t> unlearn_ids,
            double gamma_r, std::uint64_t seed, int parallelism) {
    if (pot.kind != ProofKind::pot) {
        throw Error(ErrorCode::invalid_argument, "forge: input proof must be a PoT");
    }
    if (gamma_r < 0.0) throw Error(ErrorCode::invalid_argument, "forge: gamma_r must be >= 0");
    validate_structure(pot, ds);

    std::vector<std::uint64_t> sorted_unlearn(unlearn_ids.begin(), unlearn_ids.end());
    std::sort(sorted_unlearn.begin(), sorted_unlearn.end());
    NearestNeighborMap nn;
    if (!sorted_unlearn.empty()) nn = build_nn_map(ds, sorted_unlearn);
    const auto retained = retained_ids(ds, sorted_unlearn);
    if (retained.empty()) throw Error(ErrorCode::empty_result, "forge: retained set is empty");

    const ModelConfig& config = pot.model_config;
    Proof out;
    out.kind = ProofKind::port;
    out.model_config = config;
    out.dataset_fingerprint = pot.dataset_fingerprint;
    out.seed = seed;
    out.initial_params = pot.initial_params;
    out.layout = pot.layout;
    out.declared_unlearn_ids = sorted_unlearn;
    out.steps.resize(pot.steps.size());

    const std::int64_t T = static_cast<std::int64_t>(pot.steps.size());
    parallel_for(0, T, worker_count(parallelism), [&](std::int64_t i) {
        const ProofStep& src = pot.steps[i];
        const std::vector<double>& prev =
            i == 0 ? pot.initial_params : pot.steps[i - 1].params_after;
        ProofStep dst;
        dst.t = src.t;
        dst.rule = src.rule;

        bool overlaps = false;
        for (std::uint64_t id : src.batch_ids) {
            if (contains_id(sorted_unlearn, id)) {
                overlaps = true;
                break;
            }
        }
        if (!overlaps) {
            // I_e: keep the batch, nudge w^(t) by one retained-sample SGD step.
            dst.batch_ids = src.batch_ids;
            Rng rng(derive_key(seed, {kStreamForge, src.t}));
            const std::uint64_t pick = retained[rng.next_below(retained.size())];
            const std::int64_t row = *ds.index_of(pick);
            const ParameterVector w_t{src.params_after, pot.layout};
            const GradientVector g =
                sample_gradient(config, w_t, ds.row(row), ds.labels[row], src.rule.weight_decay);
            dst.params_after = sgd_step(w_t, g, gamma_r).values;
        } else {
            // I_n: swap in the nearest-neighbor batch and replay the update
            // rule from the previous PoT parameters.
            dst.batch_ids = select_sn(src.batch_ids, sorted_unlearn, nn);
            const ParameterVector w_prev{prev, pot.layout};
            const GradientVector g =
                gradient(config, w_prev, ds, dst.batch_ids, src.rule.weight_decay);
            dst.params_after = sgd_step(w_prev, g, src.rule.learning_rate).values;
        }
        out.steps[i] = std::move(dst);
    });
    return out;
}

double compute_pu(std::uint64_t unlearn_count, std::uint64_t total_count, int m) {
    if (m < 1 || unlearn_count > total_count || total_count == 0) {
        throw Error(ErrorCode::invalid_argument, "compute_pu: bad arguments");
    }
    const double miss = 1.0 - static_cast<double>(unlearn_count) / static_cast<double>(total_count);
    return 1.0 - std::pow(miss, static_cast<double>(m));
}

} // namespace ua
