#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

#include "ua/dataset.hpp"
#include "ua/proof.hpp"
#include "ua/rng.hpp"
#include "ua/unlearning.hpp"

using namespace ua;
namespace fs = std::filesystem;

namespace {

const std::string kBlobs = "4,20,200,0.6";

fs::path work_dir() {
    const auto dir = fs::temp_directory_path() / "ua_cli_tests";
    fs::create_directories(dir);
    return dir;
}

int run_cli(const std::string& args, const std::string& redirect = "") {
    std::string cmd = std::string(UA_CLI_PATH) + " " + args;
    if (!redirect.empty()) {
        cmd += " >" + redirect + " 2>&1";
    } else {
        cmd += " >/dev/null 2>&1";
    }
    const int status = std::system(cmd.c_str());
    return WEXITSTATUS(status);
}

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Dataset cli_train_set(std::uint64_t seed) {
    return gen_blobs(4, 20, 200, 0.6, derive_key(seed, {0x747261696eULL}));
}

} // namespace

TEST_CASE("train writes a proof that deserializes and validates") {
    const auto dir = work_dir();
    const auto proof_path = dir / "pot.uprf";
    const int rc = run_cli("train --blobs " + kBlobs + " --seed 3 --epochs 2 --out " +
                           proof_path.string() + " --metrics " + (dir / "m.json").string());
    REQUIRE(rc == 0);
    const Proof pot = deserialize(proof_path);
    CHECK(pot.kind == ProofKind::pot);
    validate_structure(pot, cli_train_set(3));

    const auto metrics = nlohmann::json::parse(slurp(dir / "m.json"));
    CHECK(metrics.contains("test_macro_f1"));
    CHECK(metrics.contains("retained_accuracy"));
}

TEST_CASE("train fails cleanly on a missing data file") {
    const auto dir = work_dir();
    const auto log = dir / "missing.log";
    const int rc = run_cli("train --data-csv /nonexistent/data.csv --seed 1", log.string());
    CHECK(rc != 0);
    CHECK(slurp(log).find("error:") != std::string::npos);
}

TEST_CASE("repeated seeds produce byte-identical proof files") {
    const auto dir = work_dir();
    const auto p1 = dir / "rep1.uprf";
    const auto p2 = dir / "rep2.uprf";
    REQUIRE(run_cli("train --blobs " + kBlobs + " --seed 9 --epochs 1 --out " + p1.string()) == 0);
    REQUIRE(run_cli("train --blobs " + kBlobs + " --seed 9 --epochs 1 --out " + p2.string()) == 0);
    CHECK(slurp(p1) == slurp(p2));

    const auto p3 = dir / "rep3.uprf";
    REQUIRE(run_cli("train --blobs " + kBlobs + " --seed 10 --epochs 1 --out " + p3.string()) == 0);
    CHECK(slurp(p1) != slurp(p3));
}

TEST_CASE("retrain and adversarial unlearning verify at epsilon zero") {
    const auto dir = work_dir();
    for (const std::string mode : {"retrain", "adv-sn", "adv-sr"}) {
        const auto port = dir / ("port_" + mode + ".uprf");
        const std::string data = " --blobs " + kBlobs + " --seed 4 --unlearn-fraction 0.1";
        REQUIRE(run_cli("unlearn --mode " + mode + data + " --epochs 1 --sr-samples 5 --out " +
                        port.string()) == 0);
        CHECK(run_cli("verify --proof " + port.string() + data + " --epsilon 0") == 0);
    }
}

TEST_CASE("forge then verify passes at the desk-scale threshold") {
    const auto dir = work_dir();
    const auto pot = dir / "forge_pot.uprf";
    const auto port = dir / "forge_port.uprf";
    const std::string data = " --blobs " + kBlobs + " --seed 5 --unlearn-fraction 0.1";
    const std::string hyper = " --epochs 2 --lr 5e-3";
    REQUIRE(run_cli("train --blobs " + kBlobs + " --seed 5" + hyper + " --out " + pot.string()) ==
            0);
    REQUIRE(run_cli("unlearn --mode forge --pot " + pot.string() + data + hyper +
                    " --gamma-r 1e-3 --out " + port.string()) == 0);
    CHECK(run_cli("verify --proof " + port.string() + data + " --epsilon 1e-2") == 0);
}

TEST_CASE("a tampered proof is rejected with exit code 2 and failing steps") {
    const auto dir = work_dir();
    Dataset ds = cli_train_set(6);
    auto unlearn_ids = split_random(ds, 0.1, 6);
    ModelConfig config{Arch::mlp, 32, (int)ds.d, ds.num_classes, 5e-4};
    TrainingHyper hyper{1, 64, 1e-2, 5e-4, BatchMode::epoch_permutation};
    Proof port = retrain_naive(ds, unlearn_ids, config, hyper, 6);
    port.steps[2].params_after[7] += 1e-2;
    const auto tampered = dir / "tampered.uprf";
    serialize(port, tampered);

    const auto report_path = dir / "tampered_report.json";
    const int rc = run_cli("verify --proof " + tampered.string() + " --blobs " + kBlobs +
                               " --seed 6 --unlearn-fraction 0.1 --epsilon 1e-3 --out " +
                               report_path.string(),
                           (dir / "tampered.log").string());
    CHECK(rc == 2);
    const auto report = nlohmann::json::parse(slurp(report_path));
    CHECK(report["verdict"] == "fail");
    CHECK(!report["failing_steps"].empty());
}

TEST_CASE("a fingerprint mismatch is an error, not a failed verdict") {
    const auto dir = work_dir();
    const auto pot = dir / "fp_pot.uprf";
    REQUIRE(run_cli("train --blobs " + kBlobs + " --seed 7 --epochs 1 --out " + pot.string()) == 0);
    // different seed -> different dataset -> fingerprint mismatch
    const int rc = run_cli("verify --proof " + pot.string() + " --blobs " + kBlobs + " --seed 8");
    CHECK(rc == 1);
}

TEST_CASE("backdoor command reports the hypothesis test result") {
    const auto dir = work_dir();
    const auto pot = dir / "bd_pot.uprf";
    const std::string data = " --blobs " + kBlobs + " --seed 11";
    const std::string bd = " --trigger-indices 16,17,18,19 --trigger-value 4.0 --target-label 1"
                           " --alt-trigger-indices 12,13 --alt-label 2 --poison-fraction 0.1";
    REQUIRE(run_cli("train" + data + bd + " --epochs 1 --unlearn-fraction 0.1 --out " +
                    pot.string()) == 0);
    const auto out = dir / "bd.json";
    REQUIRE(run_cli("backdoor --proof " + pot.string() + data + bd + " --n 30 --alpha 1e-3 --out " +
                    out.string()) == 0);
    const auto result = nlohmann::json::parse(slurp(out));
    CHECK(result["n"] == 30);
    CHECK(result["p"].get<double>() >= 0.0);
    CHECK(result["q"].get<double>() <= 1.0);
    CHECK(result["beta"].get<double>() >= 0.0);
    CHECK(result["beta"].get<double>() <= 1.0);
}

TEST_CASE("experiment pu-check writes the comparison artifact") {
    const auto dir = work_dir() / "exp";
    const int rc = run_cli("experiment --name pu-check --pu-draws 20000 --blobs 4,8,250,0.6 "
                           "--out-dir " +
                           dir.string());
    REQUIRE(rc == 0);
    const auto rows = nlohmann::json::parse(slurp(dir / "pu_check.json"));
    REQUIRE(rows.size() == 2);
    for (const auto& row : rows) {
        CHECK(std::abs(row["closed_form"].get<double>() - row["empirical"].get<double>()) < 0.02);
    }
}

TEST_CASE("experiment lr-sweep emits per-gamma error summaries") {
    const auto dir = work_dir() / "exp_lr";
    const int rc = run_cli("experiment --name lr-sweep --seeds 1 --blobs 4,10,100,0.6 "
                           "--out-dir " +
                           dir.string());
    REQUIRE(rc == 0);
    const auto rows = nlohmann::json::parse(slurp(dir / "lr_sweep_summary.json"));
    CHECK(rows.size() == 5);
}
