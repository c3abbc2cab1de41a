#include "ua/verification.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <limits>
#include <set>

#include <json.hpp>

#include "ua/error.hpp"
#include "ua/rng.hpp"
#include "ua/threads.hpp"

namespace ua {

VerificationReport verify_reproducing(const Proof& proof, const Dataset& ds,
                                      std::span<const std::uint64_t> unlearn_ids, double epsilon,
                                      int parallelism) {
    if (epsilon < 0.0) throw Error(ErrorCode::invalid_argument, "verify: epsilon must be >= 0");
    validate_structure(proof, ds);

    const std::int64_t T = static_cast<std::int64_t>(proof.steps.size());
    VerificationReport report;
    report.per_step_errors.assign(T, 0.0);

    // Removability by content: hash every dataset row once, collect the
    // content hashes of the unlearn set, then scan each batch.
    const std::vector<Hash256> row_hashes = content_hashes(ds);
    std::set<Hash256> unlearn_hashes;
    for (std::uint64_t id : unlearn_ids) {
        const auto row = ds.index_of(id);
        if (!row) throw Error(ErrorCode::unknown_sample, "verify: unlearn id not in dataset");
        unlearn_hashes.insert(row_hashes[*row]);
    }

    std::vector<std::uint8_t> step_touches(T, 0);
    const ModelConfig& config = proof.model_config;
    parallel_for(0, T, worker_count(parallelism), [&](std::int64_t i) {
        const ProofStep& step = proof.steps[i];
        const std::vector<double>& prev =
            i == 0 ? proof.initial_params : proof.steps[i - 1].params_after;
        const ParameterVector w_prev{prev, proof.layout};
        const GradientVector g = gradient(config, w_prev, ds, step.batch_ids, step.rule.weight_decay);
        const ParameterVector replayed = sgd_step(w_prev, g, step.rule.learning_rate);
        report.per_step_errors[i] = l2_distance(step.params_after, replayed.values);
        for (std::uint64_t id : step.batch_ids) {
            if (unlearn_hashes.count(row_hashes[*ds.index_of(id)])) {
                step_touches[i] = 1;
                break;
            }
        }
    });

    report.removable_ok =
        std::none_of(step_touches.begin(), step_touches.end(), [](std::uint8_t b) { return b != 0; });
    double max_err = 0.0;
    double sum_err = 0.0;
    for (std::int64_t i = 0; i < T; ++i) {
        const double e = report.per_step_errors[i];
        max_err = std::max(max_err, e);
        sum_err += e;
        if (!(e <= epsilon)) report.failing_steps.push_back(proof.steps[i].t);
    }
    report.max_error = max_err;
    report.mean_error = T > 0 ? sum_err / static_cast<double>(T) : 0.0;
    report.pass = report.removable_ok && report.max_error <= epsilon && report.failing_steps.empty();
    return report;
}

namespace {

double log_binom_pmf(int n, int k, double p) {
    // p in (0,1) here; 0/1 handled by the caller.
    return std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0) +
           k * std::log(p) + (n - k) * std::log1p(-p);
}

double binom_pmf(int n, int k, double p) {
    if (p <= 0.0) return k == 0 ? 1.0 : 0.0;
    if (p >= 1.0) return k == n ? 1.0 : 0.0;
    return std::exp(log_binom_pmf(n, k, p));
}

} // namespace

double compute_beta(double p, double q, int n, double alpha) {
    if (!(p >= 0.0 && p <= 1.0 && q >= 0.0 && q <= 1.0)) {
        throw Error(ErrorCode::invalid_argument, "compute_beta: p, q must lie in [0,1]");
    }
    if (n < 1 || !(alpha > 0.0 && alpha < 1.0)) {
        throw Error(ErrorCode::invalid_argument, "compute_beta: need n >= 1, alpha in (0,1)");
    }
    // Indicator threshold: CDF_q(k) <= 1 - alpha, inequality non-strict.
    std::vector<double> accepted;
    double cdf_q = 0.0;
    for (int k = 0; k <= n; ++k) {
        cdf_q += binom_pmf(n, k, q);
        if (cdf_q <= 1.0 - alpha) accepted.push_back(binom_pmf(n, k, p));
    }
    std::sort(accepted.begin(), accepted.end());
    double beta = 0.0;
    for (double term : accepted) beta += term;
    return std::min(1.0, beta);
}

HypothesisTestResult athena_verify(const ModelConfig& config, const ParameterVector& params,
                                   const Dataset& test_set, const BackdoorSpec& spec, int n,
                                   double alpha, std::uint64_t seed, double subset_fraction) {
    validate_backdoor_spec(spec, test_set.d, test_set.num_classes);
    if (!(subset_fraction > 0.0 && subset_fraction <= 0.5)) {
        throw Error(ErrorCode::invalid_argument, "athena_verify: subset_fraction must be in (0, 0.5]");
    }
    const std::int64_t subset =
        std::llround(subset_fraction * static_cast<double>(test_set.n));
    if (subset < 1) {
        throw Error(ErrorCode::invalid_argument, "athena_verify: test subset would be empty");
    }

    Rng rng(derive_key(seed, {0x617468656e61ULL}));
    const auto order = rng.sample_without_replacement(test_set.n, 2 * subset);

    auto triggered_accuracy = [&](std::span<const std::uint64_t> rows,
                                  std::span<const std::int64_t> trigger, int target) {
        std::vector<double> features(rows.size() * test_set.d);
        for (std::size_t i = 0; i < rows.size(); ++i) {
            const auto src = test_set.row(static_cast<std::int64_t>(rows[i]));
            std::copy(src.begin(), src.end(), features.begin() + i * test_set.d);
            apply_trigger({features.data() + i * test_set.d, static_cast<std::size_t>(test_set.d)},
                          trigger, spec.trigger_value);
        }
        const auto preds = predict(config, params, features, static_cast<std::int64_t>(rows.size()));
        std::int64_t hits = 0;
        for (int pred : preds) hits += pred == target;
        return static_cast<double>(hits) / static_cast<double>(rows.size());
    };

    HypothesisTestResult result;
    result.n = n;
    result.alpha = alpha;
    result.p = triggered_accuracy({order.data(), static_cast<std::size_t>(subset)},
                                  spec.trigger_indices, spec.target_label);
    result.q = triggered_accuracy({order.data() + subset, static_cast<std::size_t>(subset)},
                                  spec.alternate_trigger_indices, spec.alternate_label);
    result.beta = compute_beta(result.p, result.q, n, alpha);
    return result;
}

ConstantsEstimate estimate_constants(const Dataset& ds, const ModelConfig& config,
                                     std::span<const ParameterVector> param_points, int num_probes,
                                     std::uint64_t seed) {
    if (param_points.empty()) {
        throw Error(ErrorCode::invalid_argument, "estimate_constants: need at least one parameter point");
    }
    if (num_probes < 1) throw Error(ErrorCode::invalid_argument, "estimate_constants: num_probes >= 1");

    ConstantsEstimate est;
    est.num_probes = num_probes;
    const double lambda = config.weight_decay;
    Rng rng(derive_key(seed, {0x636f6e7374ULL}));

    const std::size_t dim = param_points[0].values.size();
    std::vector<double> direction(dim);
    std::vector<double> x_perturbed(ds.d);
    for (const ParameterVector& w : param_points) {
        if (w.values.size() != dim) {
            throw Error(ErrorCode::layout_mismatch, "estimate_constants: inconsistent parameter points");
        }
        const double w_scale = 1.0 + l2_norm(w.values);
        for (int probe = 0; probe < num_probes; ++probe) {
            const std::int64_t row = static_cast<std::int64_t>(rng.next_below(ds.n));
            const auto x = ds.row(row);
            const int y = ds.labels[row];

            const GradientVector g0 = sample_gradient(config, w, x, y, lambda);
            est.G_hat = std::max(est.G_hat, l2_norm(g0.values));

            // Hessian action along a random unit direction, step 1e-4 relative.
            for (auto& v : direction) v = rng.next_normal();
            const double dir_norm = l2_norm(direction);
            const double h = 1e-4 * w_scale;
            ParameterVector w_shift = w;
            for (std::size_t i = 0; i < dim; ++i) {
                w_shift.values[i] += h * direction[i] / dir_norm;
            }
            const GradientVector g1 = sample_gradient(config, w_shift, x, y, lambda);
            est.L_hat = std::max(est.L_hat, l2_distance(g1.values, g0.values) / h);

            // Input sensitivity along a random unit direction.
            std::copy(x.begin(), x.end(), x_perturbed.begin());
            double xdir_sq = 0.0;
            std::vector<double> xdir(ds.d);
            for (auto& v : xdir) {
                v = rng.next_normal();
                xdir_sq += v * v;
            }
            const double hx = 1e-4 * (1.0 + l2_norm(x));
            const double xdir_norm = std::sqrt(xdir_sq);
            for (std::int64_t j = 0; j < ds.d; ++j) x_perturbed[j] += hx * xdir[j] / xdir_norm;
            const GradientVector g2 = sample_gradient(config, w, x_perturbed, y, lambda);
            est.Lx_hat = std::max(est.Lx_hat, l2_distance(g2.values, g0.values) / hx);
        }
    }

    // Exact covering radius: max over classes of max over x of min over z != x.
    std::vector<std::vector<std::int64_t>> class_rows(ds.num_classes);
    for (std::int64_t i = 0; i < ds.n; ++i) class_rows[ds.labels[i]].push_back(i);
    for (int c = 0; c < ds.num_classes; ++c) {
        const auto& rows = class_rows[c];
        if (rows.empty()) continue;
        if (rows.size() == 1) {
            throw Error(ErrorCode::empty_class,
                        "estimate_constants: class " + std::to_string(c) +
                            " has a single sample, covering radius undefined");
        }
        for (std::size_t a = 0; a < rows.size(); ++a) {
            const auto xa = ds.row(rows[a]);
            double best_sq = std::numeric_limits<double>::infinity();
            for (std::size_t b = 0; b < rows.size(); ++b) {
                if (a == b) continue;
                const auto xb = ds.row(rows[b]);
                double sq = 0.0;
                for (std::int64_t j = 0; j < ds.d; ++j) {
                    const double diff = xa[j] - xb[j];
                    sq += diff * diff;
                }
                best_sq = std::min(best_sq, sq);
            }
            est.C_D = std::max(est.C_D, std::sqrt(best_sq));
        }
    }
    return est;
}

double ForgingRateBounds::gamma_r_max(double gamma) const {
    if (gamma < 0.0) throw Error(ErrorCode::invalid_argument, "gamma must be >= 0");
    if (gamma > gamma_max) {
        throw Error(ErrorCode::infeasible,
                    "no feasible gamma_r: gamma exceeds the forging-rate bound " + std::to_string(gamma_max));
    }
    const double b = constants.Lx_hat * constants.C_D;
    const double numerator = epsilon - gamma * b;
    if (numerator <= 0.0) {
        throw Error(ErrorCode::infeasible, "no feasible gamma_r: epsilon - gamma*Lx*C_D <= 0");
    }
    return numerator / (constants.G_hat * (2.0 + gamma * constants.L_hat));
}

ForgingRateBounds forging_rate_bounds(double epsilon, const ConstantsEstimate& constants) {
    if (!(epsilon > 0.0)) throw Error(ErrorCode::invalid_argument, "forging_rate_bounds: epsilon must be > 0");
    if (!(constants.G_hat > 0.0 && constants.L_hat > 0.0 && constants.Lx_hat > 0.0 &&
          constants.C_D > 0.0)) {
        throw Error(ErrorCode::invalid_argument, "forging_rate_bounds: constants must be positive");
    }
    ForgingRateBounds bounds;
    bounds.epsilon = epsilon;
    bounds.constants = constants;
    const double L = constants.L_hat;
    const double b = constants.Lx_hat * constants.C_D;
    bounds.gamma_max = (std::sqrt(9.0 + 4.0 * epsilon * L / b) - 3.0) / (2.0 * L);
    return bounds;
}

double epsilon_bound(double gamma, const ConstantsEstimate& constants) {
    if (gamma < 0.0) throw Error(ErrorCode::invalid_argument, "epsilon_bound: gamma must be >= 0");
    const double C = std::max(constants.Lx_hat * constants.C_D, constants.G_hat);
    return constants.L_hat * C * gamma * gamma + 3.0 * C * gamma;
}

namespace {

std::string bits_hex(double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof(bits));
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(bits));
    return buf;
}

} // namespace

std::string report_to_json(const VerificationReport& report) {
    nlohmann::json j;
    j["per_step_errors"] = report.per_step_errors;
    j["max_error"] = report.max_error;
    j["max_error_raw_bits"] = bits_hex(report.max_error);
    j["mean_error"] = report.mean_error;
    j["removable_ok"] = report.removable_ok;
    j["failing_steps"] = report.failing_steps;
    j["verdict"] = report.pass ? "pass" : "fail";
    return j.dump(2);
}

std::string hypothesis_result_to_json(const HypothesisTestResult& result) {
    nlohmann::json j;
    j["p"] = result.p;
    j["q"] = result.q;
    j["n"] = result.n;
    j["alpha"] = result.alpha;
    j["beta"] = result.beta;
    return j.dump(2);
}

} // namespace ua
