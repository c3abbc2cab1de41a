#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "ua/dataset.hpp"
#include "ua/error.hpp"

using namespace ua;

namespace {

std::filesystem::path temp_file(const std::string& name) {
    return std::filesystem::temp_directory_path() / name;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path);
    out << text;
}

// Minimal IDX pair writer for loader tests.
void write_idx_pair(const std::filesystem::path& images, const std::filesystem::path& labels,
                    int n, int rows, int cols, const std::vector<unsigned char>& pixels,
                    const std::vector<unsigned char>& labs, int label_count = -1) {
    auto be32 = [](std::ofstream& f, std::uint32_t v) {
        unsigned char b[4] = {(unsigned char)(v >> 24), (unsigned char)(v >> 16),
                              (unsigned char)(v >> 8), (unsigned char)v};
        f.write((const char*)b, 4);
    };
    std::ofstream fi(images, std::ios::binary);
    be32(fi, 0x00000803);
    be32(fi, n);
    be32(fi, rows);
    be32(fi, cols);
    fi.write((const char*)pixels.data(), (std::streamsize)pixels.size());
    std::ofstream fl(labels, std::ios::binary);
    be32(fl, 0x00000801);
    be32(fl, label_count < 0 ? n : label_count);
    fl.write((const char*)labs.data(), (std::streamsize)labs.size());
}

} // namespace

TEST_CASE("load_csv basic construction") {
    auto path = temp_file("ua_basic.csv");
    write_text(path, "f0,f1,label\n1.0,2.0,0\n3.0,4.0,1\n5.0,6.0,0\n");
    Dataset ds = load_csv(path.string(), "label");
    CHECK(ds.n == 3);
    CHECK(ds.d == 2);
    CHECK(ds.num_classes == 2);
    CHECK(ds.labels == std::vector<int>{0, 1, 0});
    CHECK(ds.ids == std::vector<std::uint64_t>{0, 1, 2});
    CHECK(ds.features[2] == 3.0);
}

TEST_CASE("load_csv label column by index, no header") {
    auto path = temp_file("ua_noheader.csv");
    write_text(path, "1.0,0\n2.0,1\n");
    Dataset ds = load_csv(path.string(), "1");
    CHECK(ds.n == 2);
    CHECK(ds.labels == std::vector<int>{0, 1});
}

TEST_CASE("load_csv accepts degenerate classes with K inferred from max label") {
    auto path = temp_file("ua_degen.csv");
    write_text(path, "x,label\n1.0,2\n2.0,2\n");
    Dataset ds = load_csv(path.string(), "label"); // warns about classes 0 and 1
    CHECK(ds.num_classes == 3);
}

TEST_CASE("load_csv reports NaN cell with row and column") {
    auto path = temp_file("ua_nan.csv");
    write_text(path, "x,y,label\n1.0,2.0,0\n1.0,NaN,1\n");
    try {
        load_csv(path.string(), "label");
        FAIL("expected error");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::non_finite);
        CHECK(std::string(e.what()).find("row 3") != std::string::npos);
        CHECK(std::string(e.what()).find("column 2") != std::string::npos);
    }
}

TEST_CASE("load_csv rejects empty and ragged files") {
    auto path = temp_file("ua_empty.csv");
    write_text(path, "");
    CHECK_THROWS_AS(load_csv(path.string(), "0"), Error);
    write_text(path, "a,b,label\n1,2,0\n1,2\n");
    CHECK_THROWS_AS(load_csv(path.string(), "label"), Error);
}

TEST_CASE("load_idx reads a hand-built file of zero images") {
    auto imgs = temp_file("ua_zero.idx");
    auto labs = temp_file("ua_zero_labels.idx");
    write_idx_pair(imgs, labs, 2, 2, 2, std::vector<unsigned char>(8, 0), {0, 1});
    Dataset ds = load_idx(imgs.string(), labs.string());
    CHECK(ds.n == 2);
    CHECK(ds.d == 4);
    for (double v : ds.features) CHECK(v == 0.0);
    CHECK(ds.labels == std::vector<int>{0, 1});
}

TEST_CASE("load_idx scales pixels by 255") {
    auto imgs = temp_file("ua_scale.idx");
    auto labs = temp_file("ua_scale_labels.idx");
    write_idx_pair(imgs, labs, 1, 1, 2, {255, 51}, {3});
    Dataset ds = load_idx(imgs.string(), labs.string());
    CHECK(ds.features[0] == doctest::Approx(1.0));
    CHECK(ds.features[1] == doctest::Approx(0.2));
    CHECK(ds.num_classes == 4);
}

TEST_CASE("load_idx rejects count mismatch, bad magic and truncation") {
    auto imgs = temp_file("ua_bad.idx");
    auto labs = temp_file("ua_bad_labels.idx");
    write_idx_pair(imgs, labs, 2, 2, 2, std::vector<unsigned char>(8, 0), {0}, 1);
    CHECK_THROWS_AS(load_idx(imgs.string(), labs.string()), Error);

    write_idx_pair(imgs, labs, 2, 2, 2, std::vector<unsigned char>(8, 0), {0, 1});
    {
        std::ofstream f(imgs, std::ios::binary);
        f << "nonsense";
    }
    CHECK_THROWS_AS(load_idx(imgs.string(), labs.string()), Error);

    write_idx_pair(imgs, labs, 4, 2, 2, std::vector<unsigned char>(8, 0), {0, 1, 0, 1});
    CHECK_THROWS_AS(load_idx(imgs.string(), labs.string()), Error);
}

TEST_CASE("gen_blobs is deterministic and balanced") {
    Dataset a = gen_blobs(2, 2, 100, 0.1, 7);
    Dataset b = gen_blobs(2, 2, 100, 0.1, 7);
    CHECK(a.features == b.features);
    CHECK(a.labels == b.labels);
    CHECK(a.fingerprint == b.fingerprint);

    Dataset big = gen_blobs(4, 20, 1000, 0.5, 1);
    CHECK(big.n == 4000);
    std::vector<int> counts(4, 0);
    for (int l : big.labels) counts[l]++;
    for (int c = 0; c < 4; ++c) CHECK(counts[c] == 1000);
}

TEST_CASE("gen_blobs collapses to class centers as spread vanishes") {
    Dataset ds = gen_blobs(3, 5, 10, 1e-30, 11);
    for (std::int64_t i = 0; i < ds.n; ++i) {
        const auto x = ds.row(i);
        for (std::int64_t j = 0; j < ds.d; ++j) {
            const double center = j == ds.labels[i] ? 2.0 : 0.0;
            CHECK(std::abs(x[j] - center) < 1e-28);
        }
    }
}

TEST_CASE("split_random counts and determinism") {
    Dataset ds = gen_blobs(4, 20, 1000, 0.5, 3);
    auto u1 = split_random(ds, 0.1, 42);
    auto u2 = split_random(ds, 0.1, 42);
    CHECK(u1.size() == 400);
    CHECK(u1 == u2);
    CHECK(std::is_sorted(u1.begin(), u1.end()));

    auto u3 = split_random(ds, 0.1, 43);
    CHECK(u1 != u3);
}

TEST_CASE("split_random matches the 2 percent protocol count on 60000 samples") {
    Dataset ds = gen_blobs(2, 2, 30000, 0.5, 9);
    auto ids = split_random(ds, 0.02, 5);
    CHECK(ids.size() == 1200);
}

TEST_CASE("split_random rejects empty or full selections") {
    Dataset ds = gen_blobs(2, 2, 3, 0.5, 1); // n = 6
    CHECK_THROWS_AS(split_random(ds, 0.01, 1), Error);
    CHECK_THROWS_AS(split_random(ds, 0.999, 1), Error);
}

TEST_CASE("dirichlet pieces partition each class exactly") {
    Dataset ds = gen_blobs(4, 2, 500, 0.5, 21);
    auto part = dirichlet_partition(ds, 0.5, 5, 17);
    std::vector<std::uint64_t> all;
    for (const auto& piece : part.pieces) all.insert(all.end(), piece.begin(), piece.end());
    std::sort(all.begin(), all.end());
    CHECK(all == ds.ids);

    auto again = dirichlet_partition(ds, 0.5, 5, 17);
    for (int p = 0; p < 5; ++p) CHECK(part.pieces[p] == again.pieces[p]);
}

TEST_CASE("dirichlet piece proportions match the drawn weights to one sample per class") {
    Dataset ds = gen_blobs(4, 2, 500, 0.5, 33);
    auto part = dirichlet_partition(ds, 0.5, 5, 7);
    // Brute-force recount of piece 0 per class.
    for (int c = 0; c < 4; ++c) {
        std::int64_t count = 0;
        for (std::uint64_t id : part.pieces[0]) {
            if (ds.labels[*ds.index_of(id)] == c) count++;
        }
        const double expected = part.class_weights[c][0] * 500.0;
        CHECK(std::abs(count - expected) <= 1.0);
    }
}

TEST_CASE("dirichlet with huge alpha approaches uniform pieces") {
    Dataset ds = gen_blobs(4, 2, 500, 0.5, 8);
    auto part = dirichlet_partition(ds, 1e6, 5, 3);
    for (int p = 0; p < 5; ++p) {
        CHECK(std::abs((double)part.pieces[p].size() - 400.0) <= 0.02 * 2000.0);
        for (int c = 0; c < 4; ++c) {
            CHECK(part.class_weights[c][p] == doctest::Approx(0.2).epsilon(0.02));
        }
    }
}

TEST_CASE("dirichlet handles classes with fewer samples than pieces") {
    // class 1 has 2 samples against 5 pieces; they are still placed exactly once
    std::vector<double> features{0.0, 0.1, 0.2, 0.3, 5.0, 5.1};
    Dataset ds = make_dataset(features, {0, 0, 0, 0, 1, 1}, {0, 1, 2, 3, 4, 5}, 1, 2);
    auto part = dirichlet_partition(ds, 0.5, 5, 4);
    std::vector<std::uint64_t> all;
    for (const auto& piece : part.pieces) all.insert(all.end(), piece.begin(), piece.end());
    std::sort(all.begin(), all.end());
    CHECK(all == ds.ids);
}

TEST_CASE("split_dirichlet returns the requested piece") {
    Dataset ds = gen_blobs(4, 2, 500, 0.5, 8);
    auto part = dirichlet_partition(ds, 0.5, 5, 3);
    auto piece2 = split_dirichlet(ds, 0.5, 5, 2, 3);
    CHECK(piece2 == part.pieces[2]);
    CHECK_THROWS_AS(split_dirichlet(ds, 0.5, 5, 9, 3), Error);
}

TEST_CASE("inject_backdoor stamps the expected samples and nothing else") {
    Dataset ds = gen_blobs(4, 20, 100, 0.5, 2);
    auto unlearn = split_random(ds, 0.1, 2); // 40 ids
    BackdoorSpec spec;
    spec.trigger_indices = {16, 17, 18, 19};
    spec.alternate_trigger_indices = {12, 13};
    spec.target_label = 1;
    spec.alternate_label = 2;
    spec.poison_fraction = 0.1;

    const Hash256 before = ds.fingerprint;
    auto result = inject_backdoor(ds, spec, unlearn, 5);
    CHECK(ds.fingerprint == before); // input untouched
    CHECK(result.poisoned_ids.size() == 4);
    CHECK(result.dataset.fingerprint != before);

    std::int64_t changed = 0;
    for (std::int64_t i = 0; i < ds.n; ++i) {
        bool differs = result.dataset.labels[i] != ds.labels[i];
        for (std::int64_t j = 0; j < ds.d && !differs; ++j) {
            differs = result.dataset.features[i * ds.d + j] != ds.features[i * ds.d + j];
        }
        if (differs) {
            changed++;
            CHECK(std::binary_search(result.poisoned_ids.begin(), result.poisoned_ids.end(),
                                     ds.ids[i]));
            CHECK(result.dataset.labels[i] == 1);
            for (std::int64_t j : spec.trigger_indices) {
                CHECK(result.dataset.features[i * ds.d + j] == 1.0);
            }
            // untouched coordinates stay bit-identical
            for (std::int64_t j = 0; j < ds.d; ++j) {
                if (std::find(spec.trigger_indices.begin(), spec.trigger_indices.end(), j) ==
                    spec.trigger_indices.end()) {
                    CHECK(result.dataset.features[i * ds.d + j] == ds.features[i * ds.d + j]);
                }
            }
        }
    }
    CHECK(changed <= 4); // a poison may coincide with its original bytes
}

TEST_CASE("inject_backdoor with empty trigger indices flips labels only") {
    Dataset ds = gen_blobs(3, 4, 50, 0.5, 2);
    auto unlearn = split_random(ds, 0.2, 2);
    BackdoorSpec spec;
    spec.trigger_indices = {};
    spec.alternate_trigger_indices = {0};
    spec.target_label = 1;
    spec.alternate_label = 2;
    spec.poison_fraction = 0.5;
    auto result = inject_backdoor(ds, spec, unlearn, 3);
    CHECK(result.dataset.features == ds.features);
    std::int64_t flipped = 0;
    for (std::int64_t i = 0; i < ds.n; ++i) flipped += result.dataset.labels[i] != ds.labels[i];
    CHECK(flipped <= (std::int64_t)result.poisoned_ids.size());
    CHECK(result.poisoned_ids.size() == unlearn.size() / 2);
}

TEST_CASE("inject_backdoor validates its trigger spec") {
    Dataset ds = gen_blobs(3, 4, 10, 0.5, 2);
    auto unlearn = split_random(ds, 0.2, 2);
    BackdoorSpec spec;
    spec.trigger_indices = {4}; // out of range
    spec.alternate_trigger_indices = {0};
    spec.target_label = 1;
    spec.alternate_label = 2;
    CHECK_THROWS_AS(inject_backdoor(ds, spec, unlearn, 1), Error);
    spec.trigger_indices = {0};
    CHECK_THROWS_AS(inject_backdoor(ds, spec, unlearn, 1), Error); // not disjoint
    spec.trigger_indices = {1};
    spec.alternate_label = 1;
    CHECK_THROWS_AS(inject_backdoor(ds, spec, unlearn, 1), Error); // same labels
}

TEST_CASE("fingerprint canonicalizes by id and reacts to any content change") {
    std::vector<double> features{1.0, 2.0, 3.0, 4.0};
    std::vector<int> labels{0, 1};
    std::vector<std::uint64_t> ids{0, 1};
    const Hash256 a = fingerprint_bytes(2, 2, 2, ids, labels, features);

    // permuted storage, same logical content
    std::vector<double> features_p{3.0, 4.0, 1.0, 2.0};
    std::vector<int> labels_p{1, 0};
    std::vector<std::uint64_t> ids_p{1, 0};
    CHECK(fingerprint_bytes(2, 2, 2, ids_p, labels_p, features_p) == a);

    std::vector<int> labels_f{1, 1};
    CHECK(fingerprint_bytes(2, 2, 2, ids, labels_f, features) != a);
}
