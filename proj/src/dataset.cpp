#include "ua/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>

#include "ua/error.hpp"
#include "ua/rng.hpp"

namespace ua {

namespace {

void append_u32_le(std::string& buf, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void append_u64_le(std::string& buf, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void append_f64_le(std::string& buf, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof(bits));
    append_u64_le(buf, bits);
}

void hash_sample(Sha256& h, std::uint64_t id, int label, std::span<const double> row, bool with_id) {
    std::string buf;
    buf.reserve(12 + row.size() * 8);
    if (with_id) append_u64_le(buf, id);
    append_u32_le(buf, static_cast<std::uint32_t>(label));
    for (double v : row) append_f64_le(buf, v);
    h.update(buf.data(), buf.size());
}

} // namespace

std::optional<std::int64_t> Dataset::index_of(std::uint64_t id) const {
    auto it = std::lower_bound(ids.begin(), ids.end(), id);
    if (it == ids.end() || *it != id) return std::nullopt;
    return it - ids.begin();
}

Hash256 fingerprint_bytes(std::int64_t n, std::int64_t d, int num_classes,
                          std::span<const std::uint64_t> ids, std::span<const int> labels,
                          std::span<const double> features) {
    std::vector<std::int64_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::int64_t a, std::int64_t b) { return ids[a] < ids[b]; });

    Sha256 h;
    std::string header;
    append_u64_le(header, static_cast<std::uint64_t>(n));
    append_u64_le(header, static_cast<std::uint64_t>(d));
    append_u64_le(header, static_cast<std::uint64_t>(num_classes));
    h.update(header.data(), header.size());
    for (std::int64_t i : order) {
        hash_sample(h, ids[i], labels[i], {features.data() + i * d, static_cast<std::size_t>(d)},
                    /*with_id=*/true);
    }
    return h.finish();
}

Hash256 sample_content_hash(const Dataset& ds, std::int64_t row) {
    Sha256 h;
    hash_sample(h, 0, ds.labels[row], ds.row(row), /*with_id=*/false);
    return h.finish();
}

std::vector<Hash256> content_hashes(const Dataset& ds) {
    std::vector<Hash256> out(ds.n);
    for (std::int64_t i = 0; i < ds.n; ++i) out[i] = sample_content_hash(ds, i);
    return out;
}

Dataset make_dataset(std::vector<double> features, std::vector<int> labels,
                     std::vector<std::uint64_t> ids, std::int64_t d, int num_classes) {
    const std::int64_t n = static_cast<std::int64_t>(labels.size());
    if (n < 1 || d < 1 || num_classes < 2) {
        throw Error(ErrorCode::invalid_argument, "dataset requires n >= 1, d >= 1, K >= 2");
    }
    if (static_cast<std::int64_t>(features.size()) != n * d || static_cast<std::int64_t>(ids.size()) != n) {
        throw Error(ErrorCode::invalid_argument, "dataset: array sizes disagree");
    }
    for (std::int64_t i = 0; i < n; ++i) {
        if (labels[i] < 0 || labels[i] >= num_classes) {
            throw Error(ErrorCode::invalid_argument,
                        "dataset: label " + std::to_string(labels[i]) + " out of range at row " +
                            std::to_string(i));
        }
    }
    for (double v : features) {
        if (!std::isfinite(v)) throw Error(ErrorCode::non_finite, "dataset: non-finite feature value");
    }

    // Sort rows into ascending id order; ids must be unique.
    std::vector<std::int64_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::int64_t a, std::int64_t b) { return ids[a] < ids[b]; });
    for (std::int64_t i = 1; i < n; ++i) {
        if (ids[order[i]] == ids[order[i - 1]]) {
            throw Error(ErrorCode::invalid_argument, "dataset: duplicate sample id");
        }
    }

    Dataset ds;
    ds.n = n;
    ds.d = d;
    ds.num_classes = num_classes;
    ds.features.resize(n * d);
    ds.labels.resize(n);
    ds.ids.resize(n);
    for (std::int64_t i = 0; i < n; ++i) {
        const std::int64_t src = order[i];
        ds.ids[i] = ids[src];
        ds.labels[i] = labels[src];
        std::copy_n(features.begin() + src * d, d, ds.features.begin() + i * d);
    }
    ds.fingerprint = fingerprint_bytes(n, d, num_classes, ds.ids, ds.labels, ds.features);
    return ds;
}

// --- CSV ------------------------------------------------------------------

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            cells.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    cells.push_back(cur);
    for (auto& s : cells) {
        const auto b = s.find_first_not_of(" \t");
        const auto e = s.find_last_not_of(" \t");
        s = (b == std::string::npos) ? std::string{} : s.substr(b, e - b + 1);
    }
    return cells;
}

bool parse_double(const std::string& s, double& out) {
    if (s.empty()) return false;
    char* end = nullptr;
    out = std::strtod(s.c_str(), &end);
    return end == s.c_str() + s.size();
}

} // namespace

Dataset load_csv(const std::string& path, const std::string& label_column) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::io, "load_csv: cannot open " + path);

    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.find_first_not_of(" \t\r") != std::string::npos) lines.push_back(line);
    }
    if (lines.empty()) throw Error(ErrorCode::parse, "load_csv: empty file " + path);

    auto first = split_csv_line(lines[0]);
    const std::int64_t cols = static_cast<std::int64_t>(first.size());
    if (cols < 2) throw Error(ErrorCode::parse, "load_csv: need at least one feature and one label column");

    // Header detection: a first row with any non-numeric cell is a header.
    bool has_header = false;
    for (const auto& cell : first) {
        double tmp;
        if (!parse_double(cell, tmp)) {
            has_header = true;
            break;
        }
    }

    std::int64_t label_idx = -1;
    if (has_header) {
        for (std::int64_t c = 0; c < cols; ++c) {
            if (first[c] == label_column) label_idx = c;
        }
    }
    if (label_idx < 0) {
        try {
            const std::int64_t idx = std::stoll(label_column);
            if (idx >= 0 && idx < cols) label_idx = idx;
        } catch (...) {
        }
    }
    if (label_idx < 0) {
        throw Error(ErrorCode::invalid_argument,
                    "load_csv: label column '" + label_column + "' not found");
    }

    const std::int64_t d = cols - 1;
    std::vector<double> features;
    std::vector<int> labels;
    std::vector<std::uint64_t> ids;
    const std::size_t start = has_header ? 1 : 0;
    for (std::size_t r = start; r < lines.size(); ++r) {
        auto cells = split_csv_line(lines[r]);
        if (static_cast<std::int64_t>(cells.size()) != cols) {
            throw Error(ErrorCode::parse, "load_csv: row " + std::to_string(r + 1) + " has " +
                                              std::to_string(cells.size()) + " cells, expected " +
                                              std::to_string(cols));
        }
        for (std::int64_t c = 0; c < cols; ++c) {
            double v;
            if (!parse_double(cells[c], v)) {
                throw Error(ErrorCode::parse, "load_csv: row " + std::to_string(r + 1) + " column " +
                                                  std::to_string(c + 1) + ": cannot parse '" + cells[c] + "'");
            }
            if (!std::isfinite(v)) {
                throw Error(ErrorCode::non_finite, "load_csv: row " + std::to_string(r + 1) + " column " +
                                                       std::to_string(c + 1) + ": non-finite value");
            }
            if (c == label_idx) {
                if (v < 0 || v != std::floor(v)) {
                    throw Error(ErrorCode::parse, "load_csv: row " + std::to_string(r + 1) +
                                                      ": label must be a non-negative integer");
                }
                labels.push_back(static_cast<int>(v));
            } else {
                features.push_back(v);
            }
        }
        ids.push_back(static_cast<std::uint64_t>(r - start));
    }
    if (labels.empty()) throw Error(ErrorCode::parse, "load_csv: no data rows in " + path);

    const int num_classes = std::max(2, *std::max_element(labels.begin(), labels.end()) + 1);
    std::vector<std::int64_t> counts(num_classes, 0);
    for (int l : labels) counts[l]++;
    for (int c = 0; c < num_classes; ++c) {
        if (counts[c] == 0) {
            std::cerr << "load_csv: warning: class " << c << " has no samples (K inferred as "
                      << num_classes << ")\n";
        }
    }
    return make_dataset(std::move(features), std::move(labels), std::move(ids), d, num_classes);
}

// --- IDX ------------------------------------------------------------------

namespace {

std::uint32_t read_u32_be(std::istream& in, const std::string& what) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4)) {
        throw Error(ErrorCode::format, "load_idx: truncated file while reading " + what);
    }
    return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) | (std::uint32_t(b[2]) << 8) |
           std::uint32_t(b[3]);
}

} // namespace

Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
    std::ifstream imgs(images_path, std::ios::binary);
    if (!imgs) throw Error(ErrorCode::io, "load_idx: cannot open " + images_path);
    std::ifstream labs(labels_path, std::ios::binary);
    if (!labs) throw Error(ErrorCode::io, "load_idx: cannot open " + labels_path);

    const std::uint32_t img_magic = read_u32_be(imgs, "image magic");
    if (img_magic != 0x00000803u) {
        throw Error(ErrorCode::format, "load_idx: bad image magic in " + images_path);
    }
    const std::uint32_t n_img = read_u32_be(imgs, "image count");
    const std::uint32_t rows = read_u32_be(imgs, "row count");
    const std::uint32_t cols = read_u32_be(imgs, "column count");

    const std::uint32_t lab_magic = read_u32_be(labs, "label magic");
    if (lab_magic != 0x00000801u) {
        throw Error(ErrorCode::format, "load_idx: bad label magic in " + labels_path);
    }
    const std::uint32_t n_lab = read_u32_be(labs, "label count");
    if (n_img != n_lab) {
        throw Error(ErrorCode::format, "load_idx: image count " + std::to_string(n_img) +
                                           " != label count " + std::to_string(n_lab));
    }
    if (n_img == 0 || rows == 0 || cols == 0) {
        throw Error(ErrorCode::format, "load_idx: empty image file");
    }

    const std::int64_t n = n_img;
    const std::int64_t d = std::int64_t(rows) * cols;
    std::vector<unsigned char> pixel_buf(n * d);
    if (!imgs.read(reinterpret_cast<char*>(pixel_buf.data()), n * d)) {
        throw Error(ErrorCode::format, "load_idx: truncated pixel data in " + images_path);
    }
    std::vector<unsigned char> label_buf(n);
    if (!labs.read(reinterpret_cast<char*>(label_buf.data()), n)) {
        throw Error(ErrorCode::format, "load_idx: truncated label data in " + labels_path);
    }

    std::vector<double> features(n * d);
    for (std::int64_t i = 0; i < n * d; ++i) features[i] = pixel_buf[i] / 255.0;
    std::vector<int> labels(n);
    int max_label = 0;
    for (std::int64_t i = 0; i < n; ++i) {
        labels[i] = label_buf[i];
        max_label = std::max(max_label, labels[i]);
    }
    std::vector<std::uint64_t> ids(n);
    std::iota(ids.begin(), ids.end(), 0);
    return make_dataset(std::move(features), std::move(labels), std::move(ids), d,
                        std::max(2, max_label + 1));
}

// --- synthetic blobs --------------------------------------------------------

Dataset gen_blobs(int num_classes, std::int64_t dim, std::int64_t per_class, double spread,
                  std::uint64_t seed) {
    if (num_classes < 2 || per_class < 1 || !(spread > 0.0)) {
        throw Error(ErrorCode::invalid_argument, "gen_blobs: require K >= 2, per_class >= 1, spread > 0");
    }
    // Class centers sit on the scaled coordinate simplex 2*e_c; when K > dim
    // the assignment wraps with growing magnitude so centers stay distinct.
    constexpr double kCenterScale = 2.0;

    const std::int64_t n = std::int64_t(num_classes) * per_class;
    std::vector<double> features(n * dim, 0.0);
    std::vector<int> labels(n);
    std::vector<std::uint64_t> ids(n);

    Rng rng(derive_key(seed, {0x626c6f6273ULL, static_cast<std::uint64_t>(num_classes),
                              static_cast<std::uint64_t>(dim), static_cast<std::uint64_t>(per_class),
                              double_bits(spread)}));
    std::int64_t row = 0;
    for (int c = 0; c < num_classes; ++c) {
        for (std::int64_t s = 0; s < per_class; ++s, ++row) {
            labels[row] = c;
            ids[row] = static_cast<std::uint64_t>(row);
            double* x = features.data() + row * dim;
            for (std::int64_t j = 0; j < dim; ++j) x[j] = spread * rng.next_normal();
            x[c % dim] += kCenterScale * (1.0 + static_cast<double>(c / dim));
        }
    }
    return make_dataset(std::move(features), std::move(labels), std::move(ids), dim, num_classes);
}

// --- unlearn-set selection ---------------------------------------------------

namespace {

std::uint64_t fingerprint_word(const Hash256& fp, int i) {
    std::uint64_t w = 0;
    for (int b = 0; b < 8; ++b) w |= std::uint64_t(fp[8 * i + b]) << (8 * b);
    return w;
}

} // namespace

std::vector<std::uint64_t> split_random(const Dataset& ds, double fraction, std::uint64_t seed) {
    if (!(fraction > 0.0 && fraction < 1.0)) {
        throw Error(ErrorCode::invalid_argument, "split_random: fraction must be in (0,1)");
    }
    const std::int64_t count = std::llround(fraction * static_cast<double>(ds.n));
    if (count <= 0 || count >= ds.n) {
        throw Error(ErrorCode::invalid_argument,
                    "split_random: fraction selects " + std::to_string(count) + " of " +
                        std::to_string(ds.n) + " samples");
    }
    Rng rng(derive_key(seed, {0x73706c4972616e64ULL, fingerprint_word(ds.fingerprint, 0),
                              fingerprint_word(ds.fingerprint, 1), double_bits(fraction)}));
    auto rows = rng.sample_without_replacement(ds.n, count);
    std::vector<std::uint64_t> out(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) out[i] = ds.ids[rows[i]];
    std::sort(out.begin(), out.end());
    return out;
}

DirichletPartition dirichlet_partition(const Dataset& ds, double alpha, int pieces,
                                       std::uint64_t seed) {
    if (!(alpha > 0.0) || pieces < 2) {
        throw Error(ErrorCode::invalid_argument, "dirichlet_partition: require alpha > 0, pieces >= 2");
    }
    DirichletPartition part;
    part.pieces.resize(pieces);
    part.class_weights.assign(ds.num_classes, std::vector<double>(pieces, 0.0));

    std::vector<std::vector<std::int64_t>> class_rows(ds.num_classes);
    for (std::int64_t i = 0; i < ds.n; ++i) class_rows[ds.labels[i]].push_back(i);

    for (int c = 0; c < ds.num_classes; ++c) {
        Rng rng(derive_key(seed, {0x6469726963686cULL, fingerprint_word(ds.fingerprint, 0),
                                  double_bits(alpha), static_cast<std::uint64_t>(pieces),
                                  static_cast<std::uint64_t>(c)}));
        auto& q = part.class_weights[c];
        double total = 0.0;
        for (int i = 0; i < pieces; ++i) {
            q[i] = rng.next_gamma(alpha);
            total += q[i];
        }
        for (int i = 0; i < pieces; ++i) q[i] /= total;

        const std::int64_t nc = static_cast<std::int64_t>(class_rows[c].size());
        if (nc == 0) continue;

        // Largest-remainder apportionment of nc samples over pieces.
        std::vector<std::int64_t> counts(pieces);
        std::vector<std::pair<double, int>> rema(pieces);
        std::int64_t assigned = 0;
        for (int i = 0; i < pieces; ++i) {
            const double share = q[i] * static_cast<double>(nc);
            counts[i] = static_cast<std::int64_t>(std::floor(share));
            rema[i] = {share - std::floor(share), i};
            assigned += counts[i];
        }
        std::sort(rema.begin(), rema.end(), [](const auto& a, const auto& b) {
            if (a.first != b.first) return a.first > b.first;
            return a.second < b.second;
        });
        for (std::int64_t r = 0; r < nc - assigned; ++r) counts[rema[r % pieces].second]++;

        auto rows = class_rows[c];
        std::vector<std::uint64_t> rel(rows.size());
        std::iota(rel.begin(), rel.end(), 0);
        rng.shuffle(rel);
        std::size_t cursor = 0;
        for (int i = 0; i < pieces; ++i) {
            for (std::int64_t k = 0; k < counts[i]; ++k) {
                part.pieces[i].push_back(ds.ids[rows[rel[cursor++]]]);
            }
        }
    }
    for (auto& piece : part.pieces) std::sort(piece.begin(), piece.end());
    return part;
}

std::vector<std::uint64_t> split_dirichlet(const Dataset& ds, double alpha, int pieces,
                                           int piece_index, std::uint64_t seed) {
    if (piece_index < 0 || piece_index >= pieces) {
        throw Error(ErrorCode::invalid_argument, "split_dirichlet: piece_index out of range");
    }
    auto part = dirichlet_partition(ds, alpha, pieces, seed);
    auto& piece = part.pieces[piece_index];
    if (piece.empty()) {
        throw Error(ErrorCode::empty_result, "split_dirichlet: requested piece is empty");
    }
    return std::move(piece);
}

// --- backdoor poisoning -------------------------------------------------------

void validate_backdoor_spec(const BackdoorSpec& spec, std::int64_t dim, int num_classes) {
    auto check_indices = [&](std::span<const std::int64_t> idx, const char* what) {
        for (std::int64_t i : idx) {
            if (i < 0 || i >= dim) {
                throw Error(ErrorCode::invalid_argument,
                            std::string("backdoor: ") + what + " index " + std::to_string(i) +
                                " out of feature range");
            }
        }
    };
    check_indices(spec.trigger_indices, "trigger");
    check_indices(spec.alternate_trigger_indices, "alternate trigger");
    for (std::int64_t i : spec.trigger_indices) {
        for (std::int64_t j : spec.alternate_trigger_indices) {
            if (i == j) {
                throw Error(ErrorCode::invalid_argument,
                            "backdoor: trigger and alternate trigger must be disjoint");
            }
        }
    }
    if (spec.target_label == spec.alternate_label) {
        throw Error(ErrorCode::invalid_argument, "backdoor: target and alternate labels must differ");
    }
    if (spec.target_label < 0 || spec.target_label >= num_classes || spec.alternate_label < 0 ||
        spec.alternate_label >= num_classes) {
        throw Error(ErrorCode::invalid_argument, "backdoor: labels out of class range");
    }
    if (!(spec.poison_fraction > 0.0 && spec.poison_fraction <= 1.0)) {
        throw Error(ErrorCode::invalid_argument, "backdoor: poison_fraction must be in (0,1]");
    }
}

void apply_trigger(std::span<double> row, std::span<const std::int64_t> indices, double value) {
    for (std::int64_t i : indices) row[static_cast<std::size_t>(i)] = value;
}

PoisonResult inject_backdoor(const Dataset& ds, const BackdoorSpec& spec,
                             std::span<const std::uint64_t> unlearn_ids, std::uint64_t seed) {
    validate_backdoor_spec(spec, ds.d, ds.num_classes);
    if (unlearn_ids.empty()) {
        throw Error(ErrorCode::invalid_argument, "inject_backdoor: empty unlearn set");
    }
    const std::int64_t count = std::max<std::int64_t>(
        1, std::llround(spec.poison_fraction * static_cast<double>(unlearn_ids.size())));

    Rng rng(derive_key(seed, {0x706f69736f6eULL, fingerprint_word(ds.fingerprint, 0),
                              fingerprint_word(ds.fingerprint, 2)}));
    auto picks = rng.sample_without_replacement(unlearn_ids.size(), count);

    std::vector<double> features = ds.features;
    std::vector<int> labels = ds.labels;
    std::vector<std::uint64_t> poisoned;
    poisoned.reserve(count);
    for (std::uint64_t pick : picks) {
        const std::uint64_t id = unlearn_ids[pick];
        const auto row = ds.index_of(id);
        if (!row) throw Error(ErrorCode::unknown_sample, "inject_backdoor: unlearn id not in dataset");
        apply_trigger({features.data() + *row * ds.d, static_cast<std::size_t>(ds.d)},
                      spec.trigger_indices, spec.trigger_value);
        labels[*row] = spec.target_label;
        poisoned.push_back(id);
    }
    std::sort(poisoned.begin(), poisoned.end());

    PoisonResult result;
    result.dataset = make_dataset(std::move(features), std::move(labels),
                                  std::vector<std::uint64_t>(ds.ids), ds.d, ds.num_classes);
    result.poisoned_ids = std::move(poisoned);
    return result;
}

} // namespace ua
