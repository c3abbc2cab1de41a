#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ua/dataset.hpp"
#include "ua/model.hpp"
#include "ua/proof.hpp"

namespace ua {

struct VerificationReport {
    std::vector<double> per_step_errors; // l2 replay error per step
    double max_error = 0.0;
    double mean_error = 0.0;
    bool removable_ok = false;
    std::vector<std::uint64_t> failing_steps; // steps with error > epsilon
    bool pass = false;                        // removable_ok && max_error <= epsilon
};

/// Reproducing verification: replays every step from its stored predecessor
/// and batch, records the l2 error, and checks removability by sample
/// content. A batch sample whose content hash matches any unlearned sample's
/// content fails the removable check even if its id differs.
VerificationReport verify_reproducing(const Proof& proof, const Dataset& ds,
                                      std::span<const std::uint64_t> unlearn_ids, double epsilon,
                                      int parallelism = 0);

/// Type II error of the backdoor hypothesis test:
///   beta = sum_k C(n,k) p^k (1-p)^(n-k) * [CDF_q(k) <= 1 - alpha]
/// evaluated with log-gamma terms, summed smallest first. Naive evaluation
/// underflows long before the interesting beta ~ 1e-42 regime.
double compute_beta(double p, double q, int n, double alpha);

struct HypothesisTestResult {
    double p = 0.0;  // primary-trigger attack accuracy
    double q = 0.0;  // alternate-trigger attack accuracy
    int n = 0;
    double alpha = 0.0;
    double beta = 0.0;
};

/// Athena-style backdoor test: applies the primary trigger to one keyed test
/// subset and the alternate trigger to a disjoint one, measures target-label
/// hit rates p and q, and evaluates beta. The test set must be disjoint from
/// the training data; that is the caller's responsibility.
HypothesisTestResult athena_verify(const ModelConfig& config, const ParameterVector& params,
                                   const Dataset& test_set, const BackdoorSpec& spec, int n,
                                   double alpha, std::uint64_t seed,
                                   double subset_fraction = 0.02);

struct ConstantsEstimate {
    double G_hat = 0.0;   // max sampled per-sample gradient norm
    double L_hat = 0.0;   // max sampled Hessian-action norm ratio
    double Lx_hat = 0.0;  // max sampled input-sensitivity ratio
    double C_D = 0.0;     // exact class-wise covering radius
    int num_probes = 0;
};

/// Empirical smoothness constants over a set of parameter points (typically
/// a PoT trajectory) plus the exact covering radius C_D. C_D uses z != x;
/// with z = x allowed the quantity would be identically zero.
ConstantsEstimate estimate_constants(const Dataset& ds, const ModelConfig& config,
                                     std::span<const ParameterVector> param_points, int num_probes,
                                     std::uint64_t seed);

/// Learning-rate bounds under which a forged proof stays within epsilon:
///   gamma   <= (1/2L) (sqrt(9 + 4 eps L / (Lx C_D)) - 3)
///   gamma_r <= (eps - gamma Lx C_D) / (G (2 + gamma L))
struct ForgingRateBounds {
    double epsilon = 0.0;
    double gamma_max = 0.0;
    ConstantsEstimate constants;

    double gamma_r_max(double gamma) const;
};
ForgingRateBounds forging_rate_bounds(double epsilon, const ConstantsEstimate& constants);

/// Verification-error lower bound for gamma_r = gamma:
///   eps >= L C gamma^2 + 3 C gamma,  C = max(Lx C_D, G).
/// Near-linear in gamma whenever L gamma << 3.
double epsilon_bound(double gamma, const ConstantsEstimate& constants);

std::string report_to_json(const VerificationReport& report);
std::string hypothesis_result_to_json(const HypothesisTestResult& result);

} // namespace ua
