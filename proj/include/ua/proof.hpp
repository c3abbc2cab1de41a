#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <vector>

#include "ua/dataset.hpp"
#include "ua/model.hpp"

namespace ua {

enum class ProofKind { pot, port };

/// The update rule g^(t). Only SGD (with an explicit weight-decay term inside
/// the loss) exists in this artifact.
struct UpdateRule {
    double learning_rate = 0.0;
    double weight_decay = 0.0;
};

struct ProofStep {
    std::uint64_t t = 0;                   // 1-based
    std::vector<std::uint64_t> batch_ids;  // ordered as drawn
    UpdateRule rule;
    std::vector<double> params_after;      // w^(t)
};

/// Ordered training/retraining transcript. Parameters are stored as full
/// binary64 values at every step: an exact-zero verification threshold is
/// only meaningful if no precision is lost in the container.
struct Proof {
    ProofKind kind = ProofKind::pot;
    ModelConfig model_config;
    Hash256 dataset_fingerprint{};
    std::uint64_t seed = 0;
    std::vector<double> initial_params;
    std::shared_ptr<const Layout> layout;
    std::vector<ProofStep> steps;
    std::vector<std::uint64_t> declared_unlearn_ids; // sorted; empty for PoT
};

/// Pure append: returns an extended copy, validating the step index and
/// parameter layout. Training loops use the in-place variant.
Proof append_step(const Proof& proof, ProofStep step);
void append_step_inplace(Proof& proof, ProofStep&& step);

// Container format (bit-exact):
//   magic "UPRF" | version u16 LE | metadata u32 LE length + UTF-8 JSON
//   {kind, model_config, dataset_fingerprint hex, seed, declared_unlearn_ids,
//    T, param_count, layout} | initial_params binary64 LE | per step:
//   t u64 LE, rule kind u8 + gamma binary64 LE + lambda binary64 LE,
//   batch length u32 LE, batch ids u64 LE, params_after binary64 LE |
//   trailing SHA-256 of all preceding bytes.
inline constexpr std::uint16_t kProofFormatVersion = 1;

void serialize(const Proof& proof, const std::filesystem::path& path);
Proof deserialize(const std::filesystem::path& path);

/// Checks the proof against a dataset: fingerprint equality, consecutive
/// 1..T step indices, batch ids present in the dataset, finite parameters.
/// Throws on the first violation.
void validate_structure(const Proof& proof, const Dataset& dataset);

} // namespace ua
