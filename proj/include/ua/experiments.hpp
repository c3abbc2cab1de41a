#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ua/dataset.hpp"
#include "ua/model.hpp"
#include "ua/unlearning.hpp"
#include "ua/verification.hpp"

namespace ua {

/// Desk-scale default recipe: every experiment finishes in seconds while
/// keeping the qualitative effects (trigger learnability, imbalance
/// sensitivity, forging error scale) intact.
struct DeskRecipe {
    int num_classes = 4;
    std::int64_t dim = 20;
    std::int64_t per_class = 1000;
    double spread = 0.6;
    std::int64_t test_per_class = 2000;
    Arch arch = Arch::mlp;
    int hidden_size = 32;
    TrainingHyper hyper{5, 64, 1e-2, 5e-4, BatchMode::epoch_permutation};
    double unlearn_fraction = 0.1;
    double gamma_r = 1e-3;
    int sr_sample_size = 50;
};

ModelConfig recipe_config(const DeskRecipe& recipe);
Dataset recipe_train_set(const DeskRecipe& recipe, std::uint64_t seed);
Dataset recipe_test_set(const DeskRecipe& recipe, std::uint64_t seed);

enum class UnlearnSpecKind { random_fraction, dirichlet };

struct UnlearnSpec {
    UnlearnSpecKind kind = UnlearnSpecKind::random_fraction;
    double fraction = 0.1;
    double alpha = 0.5;
    int pieces = 5;
    int piece_index = -1; // -1: pick the most class-imbalanced piece
};

std::vector<std::uint64_t> resolve_unlearn_set(const Dataset& ds, const UnlearnSpec& spec,
                                               std::uint64_t seed);

struct UtilityCell {
    double mean = 0.0;
    double stddev = 0.0;
};

struct UtilityTable {
    std::vector<std::string> methods; // Original, Retrain, Adv-R(S_r), Adv-R(S_n), Adv-F
    // [method][0]=D_u, [1]=retained, [2]=test; macro F1
    std::vector<std::array<UtilityCell, 3>> cells;
    std::vector<std::vector<std::array<double, 3>>> per_seed; // [seed][method]
};

UtilityTable run_utility_table(const DeskRecipe& recipe, const UnlearnSpec& unlearn,
                               std::span<const std::uint64_t> seeds);

struct ErrorCurvePoint {
    std::uint64_t t = 0;
    double error = 0.0;
    bool touches_unlearn = false; // classified by the source PoT batch
};

struct EpochErrorStats {
    int epoch = 0;
    double mean_excluding = 0.0, std_excluding = 0.0; // I_e steps
    double mean_including = 0.0, std_including = 0.0; // I_n steps
    std::int64_t count_excluding = 0, count_including = 0;
};

struct ErrorCurve {
    std::vector<ErrorCurvePoint> points;
    std::vector<EpochErrorStats> epochs;
    double max_error = 0.0;
    double mean_error = 0.0;
};

ErrorCurve run_verify_error_curve(const DeskRecipe& recipe, const UnlearnSpec& unlearn,
                                  double gamma, double gamma_r, std::uint64_t seed);

struct LrSweepRow {
    double gamma = 0.0;
    double max_error = 0.0;
    double mean_error = 0.0;
};

std::vector<LrSweepRow> run_lr_sweep(const DeskRecipe& recipe, const UnlearnSpec& unlearn,
                                     std::span<const double> gammas, std::uint64_t seed);

struct PuCheckRow {
    double unlearn_fraction = 0.0;
    int batch_size = 0;
    double closed_form = 0.0;
    double empirical = 0.0;
    std::int64_t draws = 0;
};

PuCheckRow run_pu_check(const Dataset& ds, double unlearn_fraction, int batch_size,
                        std::int64_t draws, std::uint64_t seed);

std::string utility_table_to_csv(const UtilityTable& table);
std::string error_curve_to_csv(const ErrorCurve& curve);
std::string lr_sweep_to_csv(std::span<const LrSweepRow> rows);

} // namespace ua
