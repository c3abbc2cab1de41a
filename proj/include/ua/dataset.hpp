#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ua/sha256.hpp"

namespace ua {

/// Immutable labeled dataset. Rows are stored in ascending id order; ids are
/// unique. The fingerprint is a SHA-256 over the canonical serialization:
/// header (n, d, K as u64 LE), then per sample in id order
/// (id u64 LE, label u32 LE, features as binary64 LE).
struct Dataset {
    std::int64_t n = 0;
    std::int64_t d = 0;
    int num_classes = 0;
    std::vector<double> features; // n*d, row-major
    std::vector<int> labels;
    std::vector<std::uint64_t> ids; // ascending, unique
    Hash256 fingerprint{};

    std::span<const double> row(std::int64_t i) const {
        return {features.data() + i * d, static_cast<std::size_t>(d)};
    }
    /// Row index of a sample id, or nullopt if absent.
    std::optional<std::int64_t> index_of(std::uint64_t id) const;
};

/// Validates invariants, sorts rows into id order and computes the
/// fingerprint. All loaders and generators funnel through here.
Dataset make_dataset(std::vector<double> features, std::vector<int> labels,
                     std::vector<std::uint64_t> ids, std::int64_t d, int num_classes);

/// Canonical dataset hash; input arrays may be in any row order.
Hash256 fingerprint_bytes(std::int64_t n, std::int64_t d, int num_classes,
                          std::span<const std::uint64_t> ids, std::span<const int> labels,
                          std::span<const double> features);

/// Recomputes the canonical hash from scratch (equal to ds.fingerprint for
/// any dataset built through make_dataset).
inline Hash256 fingerprint(const Dataset& ds) {
    return fingerprint_bytes(ds.n, ds.d, ds.num_classes, ds.ids, ds.labels, ds.features);
}

/// Hash of one sample's content (label u32 LE + features binary64 LE).
/// Ids are deliberately excluded: the removable check in verification
/// compares content, which closes the id-relabeling loophole.
Hash256 sample_content_hash(const Dataset& ds, std::int64_t row);
std::vector<Hash256> content_hashes(const Dataset& ds);

/// CSV loader. Optional header row; the label column is selected by name
/// (header required) or by 0-based index. Ids are assigned 0..n-1 in file
/// order; K = max label + 1. Classes with no samples are allowed but warned
/// about on stderr.
Dataset load_csv(const std::string& path, const std::string& label_column);

/// IDX (MNIST convention) loader: big-endian, image magic 0x00000803,
/// label magic 0x00000801. Pixels are scaled to [0,1] by division by 255 and
/// flattened row-major.
Dataset load_idx(const std::string& images_path, const std::string& labels_path);

/// Synthetic Gaussian blobs: class c is centered at 2.0 * e_(c mod dim),
/// scaled up on wrap-around so centers stay distinct; samples are center +
/// spread * standard normal noise. Deterministic in all arguments.
Dataset gen_blobs(int num_classes, std::int64_t dim, std::int64_t per_class,
                  double spread, std::uint64_t seed);

/// Uniform unlearn-set draw: round(fraction*n) ids without replacement,
/// keyed by (fingerprint, fraction, seed). Returned sorted.
std::vector<std::uint64_t> split_random(const Dataset& ds, double fraction, std::uint64_t seed);

/// Class-imbalanced partition: per class c a weight vector q_c ~
/// Dirichlet(alpha) over pieces, samples assigned proportionally with
/// largest-remainder rounding.
struct DirichletPartition {
    std::vector<std::vector<std::uint64_t>> pieces;      // each sorted
    std::vector<std::vector<double>> class_weights;      // [class][piece]
};
DirichletPartition dirichlet_partition(const Dataset& ds, double alpha, int pieces,
                                       std::uint64_t seed);
std::vector<std::uint64_t> split_dirichlet(const Dataset& ds, double alpha, int pieces,
                                           int piece_index, std::uint64_t seed);

struct BackdoorSpec {
    std::vector<std::int64_t> trigger_indices;
    double trigger_value = 1.0;
    int target_label = 0;                               // c_b
    std::vector<std::int64_t> alternate_trigger_indices;
    int alternate_label = 0;                            // c_ex
    double poison_fraction = 0.1;
};

void validate_backdoor_spec(const BackdoorSpec& spec, std::int64_t dim, int num_classes);

struct PoisonResult {
    Dataset dataset;
    std::vector<std::uint64_t> poisoned_ids; // sorted
};

/// Stamps the trigger pattern onto round(poison_fraction*|unlearn_ids|)
/// samples (at least 1) drawn from the unlearn set and relabels them to the
/// target label. The input dataset is untouched.
PoisonResult inject_backdoor(const Dataset& ds, const BackdoorSpec& spec,
                             std::span<const std::uint64_t> unlearn_ids, std::uint64_t seed);

/// Applies a trigger to a raw feature row in place.
void apply_trigger(std::span<double> row, std::span<const std::int64_t> indices, double value);

} // namespace ua
