#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <vector>

#include "ua/dataset.hpp"
#include "ua/model.hpp"
#include "ua/proof.hpp"

namespace ua {

enum class BatchMode {
    epoch_permutation,         // per-epoch shuffle, consecutive chunks, short last batch kept
    uniform_with_replacement,  // every batch is m iid uniform draws from the pool
};

struct TrainingHyper {
    int epochs = 1;
    int batch_size = 1;
    double learning_rate = 0.0;
    double weight_decay = 0.0;
    BatchMode batch_mode = BatchMode::epoch_permutation;
};

/// Total number of update steps a run over `pool_size` samples executes.
std::uint64_t step_count(std::uint64_t pool_size, const TrainingHyper& hyper);

/// Ordered batch for step t (1-based), a pure function of (pool, hyper, seed, t).
/// train and adv_retrain share this stream, which is why an empty unlearn set
/// reproduces the training trajectory bit for bit.
std::vector<std::uint64_t> training_batch(std::span<const std::uint64_t> pool_ids,
                                          const TrainingHyper& hyper, std::uint64_t seed,
                                          std::uint64_t t);

/// PoT-producing training on the full dataset.
Proof train(const Dataset& ds, const ModelConfig& config, const TrainingHyper& hyper,
            std::uint64_t seed);

/// Honest exact unlearning: the same loop over D \ D_u only.
Proof retrain_naive(const Dataset& ds, std::span<const std::uint64_t> unlearn_ids,
                    const ModelConfig& config, const TrainingHyper& hyper, std::uint64_t seed);

struct NearestNeighbor {
    std::uint64_t neighbor_id = 0;
    double distance = 0.0;
};

/// Exact brute-force l2 nearest same-class retained neighbor of every
/// unlearned sample; ties break toward the lowest retained id.
struct NearestNeighborMap {
    std::map<std::uint64_t, NearestNeighbor> pairs;
};
NearestNeighborMap build_nn_map(const Dataset& ds, std::span<const std::uint64_t> unlearn_ids);

/// In-place replacement of unlearned ids with their mapped neighbors;
/// retained ids are untouched. Duplicates in the output are allowed (two
/// unlearned samples may share one neighbor) and then weigh that sample
/// twice in the mean-loss gradient.
std::vector<std::uint64_t> select_sn(std::span<const std::uint64_t> batch_ids,
                                     std::span<const std::uint64_t> unlearn_ids,
                                     const NearestNeighborMap& nn);

/// Repeated random sampling: draws s candidate batches from the retained set
/// and returns the one whose gradient is l2-closest to the gradient of the
/// reference batch at the given parameters. Ties break toward the lowest
/// candidate index.
std::vector<std::uint64_t> select_sr(const ModelConfig& config, const ParameterVector& params,
                                     std::span<const std::uint64_t> batch_ids, const Dataset& ds,
                                     std::span<const std::uint64_t> unlearn_ids, int s,
                                     std::uint64_t seed, double lambda);

enum class AdvMode { sr, sn };

/// Retraining-based adversarial unlearning: batches are drawn from the full
/// dataset and mapped into the retained set by S_r or S_n before each update.
/// Batches that never touched unlearned data pass through unchanged.
Proof adv_retrain(const Dataset& ds, std::span<const std::uint64_t> unlearn_ids,
                  const ModelConfig& config, const TrainingHyper& hyper, AdvMode mode,
                  int sr_sample_size, std::uint64_t seed);

/// Forging-based adversarial unlearning: rewrites a PoT into a PoRT
/// triplet-by-triplet without retraining. Steps whose batch avoided the
/// unlearn set keep their batch and get a single-sample parameter nudge of
/// size gamma_r; steps that touched it are recomputed from the previous PoT
/// parameters over the S_n-mapped batch. Each step keys its randomness on
/// (seed, t), so the output is independent of the parallelism degree.
Proof forge(const Proof& pot, const Dataset& ds, std::span<const std::uint64_t> unlearn_ids,
            double gamma_r, std::uint64_t seed, int parallelism = 0);

/// Probability that a uniformly drawn batch of size m intersects the unlearn
/// set: 1 - (1 - |D_u|/|D|)^m.
double compute_pu(std::uint64_t unlearn_count, std::uint64_t total_count, int m);

} // namespace ua
