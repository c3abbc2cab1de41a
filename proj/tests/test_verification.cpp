#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "oracles.hpp"
#include "ua/dataset.hpp"
#include "ua/error.hpp"
#include "ua/experiments.hpp"
#include "ua/unlearning.hpp"
#include "ua/verification.hpp"

using namespace ua;

namespace {

ModelConfig linear_config(const Dataset& ds, double wd = 0.0) {
    return {Arch::linear, 0, (int)ds.d, ds.num_classes, wd};
}

const std::vector<double>& final_params(const Proof& p) {
    return p.steps.empty() ? p.initial_params : p.steps.back().params_after;
}

} // namespace

TEST_CASE("verify_reproducing accepts honest retraining at epsilon zero") {
    Dataset ds = gen_blobs(3, 5, 50, 0.5, 41);
    auto unlearn = split_random(ds, 0.1, 41);
    TrainingHyper hyper{2, 32, 1e-2, 5e-4, BatchMode::epoch_permutation};
    Proof port = retrain_naive(ds, unlearn, linear_config(ds, 5e-4), hyper, 6);
    auto report = verify_reproducing(port, ds, unlearn, 0.0);
    CHECK(report.pass);
    CHECK(report.removable_ok);
    CHECK(report.max_error == 0.0);
    for (double e : report.per_step_errors) CHECK(e == 0.0);
    CHECK(report.failing_steps.empty());
}

TEST_CASE("verify_reproducing localizes a single-coordinate perturbation exactly") {
    Dataset ds = gen_blobs(3, 5, 50, 0.5, 42);
    auto unlearn = split_random(ds, 0.1, 42);
    TrainingHyper hyper{1, 16, 1e-2, 0.0, BatchMode::epoch_permutation};
    Proof port = retrain_naive(ds, unlearn, linear_config(ds), hyper, 7);

    const std::size_t t = port.steps.size() / 2;
    const std::size_t coord = 3;
    const double before = port.steps[t].params_after[coord];
    port.steps[t].params_after[coord] = before + 1e-2;
    // The realized perturbation delta is exact by the Sterbenz lemma, and
    // sqrt(delta^2) == |delta| in binary64, so the step error equals it bit
    // for bit.
    const double realized = port.steps[t].params_after[coord] - before;
    CHECK(std::abs(realized - 1e-2) < 1e-15);

    auto report = verify_reproducing(port, ds, unlearn, 1e-3);
    CHECK(report.per_step_errors[t] == std::abs(realized));
    CHECK(report.per_step_errors[t + 1] > 0.0);
    CHECK_FALSE(report.pass);
    CHECK(std::find(report.failing_steps.begin(), report.failing_steps.end(),
                    port.steps[t].t) != report.failing_steps.end());
}

TEST_CASE("verify_reproducing fails a PoT whose batches touch the unlearn set") {
    Dataset ds = gen_blobs(3, 5, 40, 0.5, 43);
    TrainingHyper hyper{1, 16, 1e-2, 0.0, BatchMode::epoch_permutation};
    Proof pot = train(ds, linear_config(ds), hyper, 8);
    std::vector<std::uint64_t> unlearn{pot.steps[0].batch_ids[0]};
    auto report = verify_reproducing(pot, ds, unlearn, 1e9);
    CHECK_FALSE(report.removable_ok);
    CHECK_FALSE(report.pass);
    CHECK(report.max_error == 0.0); // replay itself is exact
}

TEST_CASE("removable check is content based, not id based") {
    // ids 4 and 5 carry identical content; 4 is unlearned.
    std::vector<double> features{0.0, 1.0, 2.0, 3.0, 7.5, 7.5};
    Dataset ds = make_dataset(features, {0, 0, 1, 1, 0, 0}, {0, 1, 2, 3, 4, 5}, 1, 2);

    ModelConfig config = linear_config(ds);
    auto params = init_params(config, 1);
    Proof proof;
    proof.kind = ProofKind::port;
    proof.model_config = config;
    proof.dataset_fingerprint = ds.fingerprint;
    proof.seed = 1;
    proof.initial_params = params.values;
    proof.layout = params.layout;
    proof.declared_unlearn_ids = {4};

    // The prover claims batch {5, 2}: id 5 is retained, but its content is a
    // byte-for-byte copy of unlearned sample 4.
    std::vector<std::uint64_t> batch{5, 2};
    auto g = gradient(config, params, ds, batch, 0.0);
    auto w1 = sgd_step(params, g, 0.1);
    append_step_inplace(proof, ProofStep{1, batch, {0.1, 0.0}, w1.values});

    auto report = verify_reproducing(proof, ds, std::vector<std::uint64_t>{4}, 0.0);
    CHECK(report.max_error == 0.0); // replay is fine; content check is not
    CHECK_FALSE(report.removable_ok);
    CHECK_FALSE(report.pass);
}

TEST_CASE("verify_reproducing rejects negative epsilon and foreign datasets") {
    Dataset ds = gen_blobs(2, 3, 10, 0.5, 44);
    TrainingHyper hyper{1, 5, 1e-2, 0.0, BatchMode::epoch_permutation};
    Proof pot = train(ds, linear_config(ds), hyper, 9);
    CHECK_THROWS_AS(verify_reproducing(pot, ds, {}, -1.0), Error);
    Dataset other = gen_blobs(2, 3, 10, 0.5, 45);
    CHECK_THROWS_AS(verify_reproducing(pot, other, {}, 0.0), Error);
}

TEST_CASE("compute_beta handles the degenerate corners") {
    CHECK(compute_beta(1.0, 0.0, 30, 1e-3) == 0.0);
    CHECK(compute_beta(0.0, 0.0, 30, 1e-3) == 0.0); // q=0 accepts nothing at 1-alpha
    // q=1 accepts every count below n: beta = 1 - P[X = 10] = 1 - 2^-10
    CHECK(compute_beta(0.5, 1.0, 10, 1e-3) == doctest::Approx(1.0 - 1.0 / 1024.0).epsilon(1e-12));
    CHECK_THROWS_AS(compute_beta(-0.1, 0.5, 10, 1e-3), Error);
    CHECK_THROWS_AS(compute_beta(0.5, 0.5, 0, 1e-3), Error);
    CHECK_THROWS_AS(compute_beta(0.5, 0.5, 10, 0.0), Error);
}

TEST_CASE("compute_beta matches the Monte Carlo oracle on the grid") {
    for (double p : {0.1, 0.5, 0.9}) {
        for (double q : {0.1, 0.5, 0.9}) {
            const double exact = compute_beta(p, q, 30, 1e-3);
            const double simulated = oracle::mc_beta(p, q, 30, 1e-3, 200000, 77);
            CHECK(std::abs(exact - simulated) < 5e-3);
        }
    }
}

TEST_CASE("compute_beta is monotone non-increasing in p") {
    for (double q : {0.1, 0.3, 0.6}) {
        double prev = 2.0;
        for (double p = 0.0; p <= 1.0001; p += 0.05) {
            const double b = compute_beta(std::min(p, 1.0), q, 30, 1e-3);
            CHECK(b <= prev + 1e-12);
            prev = b;
        }
    }
}

TEST_CASE("compute_beta survives the deep underflow regime") {
    const double b = compute_beta(0.998, 0.101, 30, 1e-3);
    CHECK(b > 0.0);
    CHECK(b < 1e-40);
}

TEST_CASE("athena_verify flags a freshly initialized model as unlearned") {
    DeskRecipe recipe;
    recipe.per_class = 50;
    recipe.test_per_class = 500;
    Dataset test = recipe_test_set(recipe, 51);
    auto config = recipe_config(recipe);
    auto params = init_params(config, 51);
    BackdoorSpec spec;
    spec.trigger_indices = {16, 17, 18, 19};
    spec.alternate_trigger_indices = {12, 13};
    spec.target_label = 1;
    spec.alternate_label = 2;
    auto result = athena_verify(config, params, test, spec, 30, 1e-3, 51);
    CHECK(result.beta >= 0.9);
}

TEST_CASE("athena_verify subsets are disjoint and sized by fraction") {
    DeskRecipe recipe;
    recipe.per_class = 50;
    recipe.test_per_class = 25; // test n = 100, subsets of 2
    Dataset test = recipe_test_set(recipe, 52);
    auto config = recipe_config(recipe);
    auto params = init_params(config, 52);
    BackdoorSpec spec;
    spec.trigger_indices = {0};
    spec.alternate_trigger_indices = {1};
    spec.target_label = 0;
    spec.alternate_label = 1;
    auto result = athena_verify(config, params, test, spec, 30, 1e-3, 52);
    CHECK(result.n == 30);
    CHECK(result.alpha == 1e-3);
    // fraction too small for one sample -> error
    CHECK_THROWS_AS(athena_verify(config, params, test, spec, 30, 1e-3, 52, 0.004), Error);
}

TEST_CASE("estimate_constants covering radius by brute force") {
    // class 0 at {0, 1, 3}: nearest-other distances 1, 1, 2 -> covering radius 2
    std::vector<double> features{0.0, 1.0, 3.0, 10.0, 11.0};
    Dataset ds = make_dataset(features, {0, 0, 0, 1, 1}, {0, 1, 2, 3, 4}, 1, 2);
    auto config = linear_config(ds);
    std::vector<ParameterVector> points{init_params(config, 1)};
    auto est = estimate_constants(ds, config, points, 8, 1);
    CHECK(est.C_D == doctest::Approx(2.0));
}

TEST_CASE("estimate_constants covering radius is zero for duplicated points") {
    std::vector<double> features{1.0, 1.0, 4.0, 4.0};
    Dataset ds = make_dataset(features, {0, 0, 1, 1}, {0, 1, 2, 3}, 1, 2);
    auto config = linear_config(ds);
    std::vector<ParameterVector> points{init_params(config, 2)};
    auto est = estimate_constants(ds, config, points, 4, 2);
    CHECK(est.C_D == 0.0);
}

TEST_CASE("estimate_constants rejects single-sample classes") {
    std::vector<double> features{1.0, 2.0, 4.0};
    Dataset ds = make_dataset(features, {0, 0, 1}, {0, 1, 2}, 1, 2);
    auto config = linear_config(ds);
    std::vector<ParameterVector> points{init_params(config, 3)};
    CHECK_THROWS_AS(estimate_constants(ds, config, points, 4, 3), Error);
}

TEST_CASE("estimate_constants gradient bound is stable across probe seeds") {
    Dataset ds = gen_blobs(3, 6, 100, 0.5, 53);
    auto config = linear_config(ds);
    std::vector<ParameterVector> points{init_params(config, 4), init_params(config, 5)};
    auto a = estimate_constants(ds, config, points, 64, 100);
    auto b = estimate_constants(ds, config, points, 64, 200);
    CHECK(a.G_hat > 0.0);
    CHECK(std::abs(a.G_hat - b.G_hat) / a.G_hat < 0.2);
}

TEST_CASE("forging_rate_bounds closed-form bounds") {
    ConstantsEstimate consts;
    consts.G_hat = 1.0;
    consts.L_hat = 1.0;
    consts.Lx_hat = 1.0;
    consts.C_D = 1.0;
    auto bounds = forging_rate_bounds(1.0, consts);
    CHECK(bounds.gamma_max == doctest::Approx((std::sqrt(13.0) - 3.0) / 2.0).epsilon(1e-12));
    CHECK(bounds.gamma_r_max(0.1) == doctest::Approx(0.9 / 2.1).epsilon(1e-12));
    CHECK_THROWS_AS(bounds.gamma_r_max(bounds.gamma_max * 1.01), Error);

    auto tiny = forging_rate_bounds(1e-12, consts);
    CHECK(tiny.gamma_max < 1e-12); // gamma_max -> 0 as epsilon -> 0
    CHECK(tiny.gamma_max >= 0.0);
}

TEST_CASE("epsilon_bound arithmetic and near-linear scaling") {
    ConstantsEstimate consts;
    consts.G_hat = 1.0;
    consts.L_hat = 1.0;
    consts.Lx_hat = 2.0;
    consts.C_D = 1.0;
    CHECK(epsilon_bound(0.0, consts) == 0.0);
    CHECK(epsilon_bound(0.01, consts) == doctest::Approx(0.0602).epsilon(1e-12));
    // in the near-linear regime halving gamma halves the bound within 2%
    const double full = epsilon_bound(0.01, consts);
    const double half = epsilon_bound(0.005, consts);
    CHECK(half == doctest::Approx(full / 2.0).epsilon(0.02));
}

TEST_CASE("forging error scales near-linearly with the learning rates") {
    DeskRecipe recipe;
    UnlearnSpec spec;
    auto full = run_verify_error_curve(recipe, spec, 5e-3, 1e-3, 3);
    auto half = run_verify_error_curve(recipe, spec, 2.5e-3, 5e-4, 3);
    const double ratio = half.max_error / full.max_error;
    CHECK(ratio >= 0.3);
    CHECK(ratio <= 0.8);
}

TEST_CASE("verification report serializes to json with raw bits") {
    VerificationReport report;
    report.per_step_errors = {0.0, 1e-2};
    report.max_error = 1e-2;
    report.mean_error = 5e-3;
    report.removable_ok = true;
    report.failing_steps = {2};
    report.pass = false;
    const std::string json = report_to_json(report);
    CHECK(json.find("\"max_error\": 0.01") != std::string::npos);
    CHECK(json.find("\"max_error_raw_bits\": \"3f847ae147ae147b\"") != std::string::npos);
    CHECK(json.find("\"verdict\": \"fail\"") != std::string::npos);
}
