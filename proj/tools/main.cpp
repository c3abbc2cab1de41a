#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "ua/dataset.hpp"
#include "ua/error.hpp"
#include "ua/experiments.hpp"
#include "ua/model.hpp"
#include "ua/proof.hpp"
#include "ua/rng.hpp"
#include "ua/unlearning.hpp"
#include "ua/verification.hpp"

using namespace ua;
using nlohmann::json;

namespace {

std::vector<double> parse_reals(const std::string& csv, std::size_t expected, const char* what) {
    std::vector<double> out;
    std::stringstream ss(csv);
    std::string cell;
    while (std::getline(ss, cell, ',')) out.push_back(std::stod(cell));
    if (expected != 0 && out.size() != expected) {
        throw Error(ErrorCode::invalid_argument,
                    std::string(what) + ": expected " + std::to_string(expected) + " values");
    }
    return out;
}

std::vector<std::int64_t> parse_indices(const std::string& csv) {
    std::vector<std::int64_t> out;
    if (csv.empty()) return out;
    std::stringstream ss(csv);
    std::string cell;
    while (std::getline(ss, cell, ',')) out.push_back(std::stoll(cell));
    return out;
}

struct DataOpts {
    std::string csv_path;
    std::string label_column = "label";
    std::string idx_images, idx_labels;
    std::string blobs; // k,d,per_class,spread
    std::string test_csv;
    std::string test_idx_images, test_idx_labels;
    std::int64_t test_per_class = 0; // blobs test split; 0 = same as train

    void add_flags(CLI::App* cmd) {
        cmd->add_option("--data-csv", csv_path, "Training data as CSV");
        cmd->add_option("--label-column", label_column, "CSV label column name or index");
        cmd->add_option("--data-idx-images", idx_images, "IDX image file");
        cmd->add_option("--data-idx-labels", idx_labels, "IDX label file");
        cmd->add_option("--blobs", blobs, "Synthetic blobs: K,dim,per_class,spread");
        cmd->add_option("--test-csv", test_csv, "Held-out test CSV");
        cmd->add_option("--test-idx-images", test_idx_images, "Held-out test IDX images");
        cmd->add_option("--test-idx-labels", test_idx_labels, "Held-out test IDX labels");
        cmd->add_option("--test-per-class", test_per_class,
                        "Blobs test split size per class (default: same as train)");
    }

    Dataset load_train(std::uint64_t seed) const {
        const int sources = !csv_path.empty() + !idx_images.empty() + !blobs.empty();
        if (sources != 1) {
            throw Error(ErrorCode::invalid_argument,
                        "exactly one data source required (--data-csv | --data-idx-* | --blobs)");
        }
        if (!csv_path.empty()) return load_csv(csv_path, label_column);
        if (!idx_images.empty()) {
            if (idx_labels.empty()) {
                throw Error(ErrorCode::invalid_argument, "--data-idx-labels required with --data-idx-images");
            }
            return load_idx(idx_images, idx_labels);
        }
        const auto v = parse_reals(blobs, 4, "--blobs");
        return gen_blobs((int)v[0], (std::int64_t)v[1], (std::int64_t)v[2], v[3],
                         derive_key(seed, {0x747261696eULL}));
    }

    std::optional<Dataset> load_test(std::uint64_t seed) const {
        if (!test_csv.empty()) return load_csv(test_csv, label_column);
        if (!test_idx_images.empty()) {
            if (test_idx_labels.empty()) {
                throw Error(ErrorCode::invalid_argument, "--test-idx-labels required with --test-idx-images");
            }
            return load_idx(test_idx_images, test_idx_labels);
        }
        if (!blobs.empty()) {
            const auto v = parse_reals(blobs, 4, "--blobs");
            const std::int64_t per_class = test_per_class > 0 ? test_per_class : (std::int64_t)v[2];
            return gen_blobs((int)v[0], (std::int64_t)v[1], per_class, v[3],
                             derive_key(seed, {0x74657374ULL}));
        }
        return std::nullopt;
    }
};

struct UnlearnOpts {
    double fraction = 0.0;
    std::string dirichlet; // alpha,pieces,index
    std::string ids_file;

    void add_flags(CLI::App* cmd) {
        cmd->add_option("--unlearn-fraction", fraction, "Random unlearn fraction in (0,1)");
        cmd->add_option("--unlearn-dirichlet", dirichlet,
                        "Dirichlet-imbalanced unlearn piece: alpha,pieces,index");
        cmd->add_option("--unlearn-ids", ids_file, "File with one unlearn id per line");
    }

    bool any() const { return fraction > 0.0 || !dirichlet.empty() || !ids_file.empty(); }

    std::vector<std::uint64_t> resolve(const Dataset& ds, std::uint64_t seed) const {
        const int specs = (fraction > 0.0) + !dirichlet.empty() + !ids_file.empty();
        if (specs != 1) {
            throw Error(ErrorCode::invalid_argument,
                        "exactly one unlearn spec required "
                        "(--unlearn-fraction | --unlearn-dirichlet | --unlearn-ids)");
        }
        if (fraction > 0.0) return split_random(ds, fraction, seed);
        if (!dirichlet.empty()) {
            const auto v = parse_reals(dirichlet, 3, "--unlearn-dirichlet");
            return split_dirichlet(ds, v[0], (int)v[1], (int)v[2], seed);
        }
        std::ifstream in(ids_file);
        if (!in) throw Error(ErrorCode::io, "cannot open unlearn id file " + ids_file);
        std::vector<std::uint64_t> ids;
        std::uint64_t id;
        while (in >> id) ids.push_back(id);
        std::sort(ids.begin(), ids.end());
        ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
        if (ids.empty()) throw Error(ErrorCode::invalid_argument, "unlearn id file is empty");
        return ids;
    }
};

struct TrainOpts {
    int epochs = 5;
    int batch_size = 64;
    double lr = 1e-2;
    double weight_decay = 5e-4;
    std::string arch = "mlp:32";
    std::string batch_mode = "epoch";
    std::uint64_t seed = 1;

    void add_flags(CLI::App* cmd) {
        cmd->add_option("--epochs", epochs, "Training epochs")->check(CLI::PositiveNumber);
        cmd->add_option("--batch-size", batch_size, "Mini-batch size")->check(CLI::PositiveNumber);
        cmd->add_option("--lr", lr, "Learning rate");
        cmd->add_option("--weight-decay", weight_decay, "Weight decay lambda");
        cmd->add_option("--arch", arch, "Model architecture: linear | mlp:H");
        cmd->add_option("--batch-mode", batch_mode, "Batch sampling: epoch | uniform");
        cmd->add_option("--seed", seed, "Seed for all randomness");
    }

    TrainingHyper hyper() const {
        TrainingHyper h;
        h.epochs = epochs;
        h.batch_size = batch_size;
        h.learning_rate = lr;
        h.weight_decay = weight_decay;
        if (batch_mode == "epoch") {
            h.batch_mode = BatchMode::epoch_permutation;
        } else if (batch_mode == "uniform") {
            h.batch_mode = BatchMode::uniform_with_replacement;
        } else {
            throw Error(ErrorCode::invalid_argument, "--batch-mode must be epoch or uniform");
        }
        return h;
    }

    ModelConfig config(const Dataset& ds) const {
        ModelConfig c;
        c.input_dim = (int)ds.d;
        c.num_classes = ds.num_classes;
        c.weight_decay = weight_decay;
        if (arch == "linear") {
            c.arch = Arch::linear;
        } else if (arch.rfind("mlp:", 0) == 0) {
            c.arch = Arch::mlp;
            c.hidden_size = std::stoi(arch.substr(4));
        } else {
            throw Error(ErrorCode::invalid_argument, "--arch must be linear or mlp:H");
        }
        return c;
    }
};

struct BackdoorOpts {
    std::string trigger_indices;
    double trigger_value = 1.0;
    int target_label = 0;
    std::string alt_trigger_indices;
    int alt_label = 1;
    double poison_fraction = 0.1;

    void add_flags(CLI::App* cmd) {
        cmd->add_option("--trigger-indices", trigger_indices, "Trigger coordinates, comma separated");
        cmd->add_option("--trigger-value", trigger_value, "Value stamped at trigger coordinates");
        cmd->add_option("--target-label", target_label, "Backdoor target label c_b");
        cmd->add_option("--alt-trigger-indices", alt_trigger_indices,
                        "Alternate trigger coordinates (disjoint from the primary)");
        cmd->add_option("--alt-label", alt_label, "Alternate target label c_ex");
        cmd->add_option("--poison-fraction", poison_fraction, "Fraction of the unlearn set poisoned");
    }

    bool any() const { return !trigger_indices.empty(); }

    BackdoorSpec spec() const {
        BackdoorSpec s;
        s.trigger_indices = parse_indices(trigger_indices);
        s.trigger_value = trigger_value;
        s.target_label = target_label;
        s.alternate_trigger_indices = parse_indices(alt_trigger_indices);
        s.alternate_label = alt_label;
        s.poison_fraction = poison_fraction;
        return s;
    }
};

const std::vector<double>& final_params_of(const Proof& proof) {
    return proof.steps.empty() ? proof.initial_params : proof.steps.back().params_after;
}

json split_metrics(const Proof& proof, const Dataset& train_set,
                   const std::optional<Dataset>& test_set,
                   std::span<const std::uint64_t> unlearn_ids) {
    const ParameterVector params{final_params_of(proof), proof.layout};
    const auto preds = predict(proof.model_config, params, train_set);

    std::vector<int> pred_u, truth_u, pred_r, truth_r;
    for (std::int64_t i = 0; i < train_set.n; ++i) {
        const bool unlearned =
            std::binary_search(unlearn_ids.begin(), unlearn_ids.end(), train_set.ids[i]);
        (unlearned ? pred_u : pred_r).push_back(preds[i]);
        (unlearned ? truth_u : truth_r).push_back(train_set.labels[i]);
    }
    json out;
    out["steps"] = proof.steps.size();
    if (!pred_u.empty()) {
        out["unlearn_macro_f1"] = macro_f1(pred_u, truth_u, train_set.num_classes);
        out["unlearn_accuracy"] = accuracy(pred_u, truth_u);
    }
    out["retained_macro_f1"] = macro_f1(pred_r, truth_r, train_set.num_classes);
    out["retained_accuracy"] = accuracy(pred_r, truth_r);
    if (test_set) {
        const auto test_preds = predict(proof.model_config, params, *test_set);
        out["test_macro_f1"] = macro_f1(test_preds, test_set->labels, test_set->num_classes);
        out["test_accuracy"] = accuracy(test_preds, test_set->labels);
    }
    return out;
}

void write_output(const std::string& path, const std::string& text) {
    if (path.empty() || path == "-") {
        std::cout << text << '\n';
        return;
    }
    std::ofstream out(path);
    if (!out) throw Error(ErrorCode::io, "cannot write " + path);
    out << text << '\n';
}

void write_id_file(const std::string& path, std::span<const std::uint64_t> ids) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorCode::io, "cannot write " + path);
    for (std::uint64_t id : ids) out << id << '\n';
}

// --- subcommand state -------------------------------------------------------

struct TrainCmd {
    DataOpts data;
    UnlearnOpts unlearn;
    TrainOpts training;
    BackdoorOpts backdoor;
    std::string out_proof = "pot.uprf";
    std::string out_metrics;
    std::string out_unlearn_ids;
    std::string out_poisoned_ids;

    int run() const {
        Dataset ds = data.load_train(training.seed);
        std::vector<std::uint64_t> unlearn_ids;
        if (unlearn.any()) unlearn_ids = unlearn.resolve(ds, training.seed);

        std::vector<std::uint64_t> poisoned_ids;
        if (backdoor.any()) {
            if (unlearn_ids.empty()) {
                throw Error(ErrorCode::invalid_argument,
                            "backdoor poisoning needs an unlearn spec to place poisons in");
            }
            auto result = inject_backdoor(ds, backdoor.spec(), unlearn_ids, training.seed);
            ds = std::move(result.dataset);
            poisoned_ids = std::move(result.poisoned_ids);
        }

        const Proof pot = train(ds, training.config(ds), training.hyper(), training.seed);
        serialize(pot, out_proof);

        const auto test_set = data.load_test(training.seed);
        json metrics = split_metrics(pot, ds, test_set, unlearn_ids);
        metrics["proof"] = out_proof;
        metrics["kind"] = "PoT";
        if (!poisoned_ids.empty()) metrics["poisoned_count"] = poisoned_ids.size();
        write_output(out_metrics, metrics.dump(2));

        if (!out_unlearn_ids.empty()) write_id_file(out_unlearn_ids, unlearn_ids);
        if (!out_poisoned_ids.empty()) write_id_file(out_poisoned_ids, poisoned_ids);
        return 0;
    }
};

struct UnlearnCmd {
    DataOpts data;
    UnlearnOpts unlearn;
    TrainOpts training;
    BackdoorOpts backdoor;
    std::string mode = "retrain";
    std::string pot_path;
    double gamma_r = 1e-3;
    int sr_samples = 50;
    int threads = 0;
    std::string out_proof = "port.uprf";
    std::string out_metrics;

    int run() const {
        Dataset ds = data.load_train(training.seed);
        auto unlearn_ids = unlearn.resolve(ds, training.seed);
        if (backdoor.any()) {
            auto result = inject_backdoor(ds, backdoor.spec(), unlearn_ids, training.seed);
            ds = std::move(result.dataset);
        }

        Proof port;
        if (mode == "retrain") {
            port = retrain_naive(ds, unlearn_ids, training.config(ds), training.hyper(), training.seed);
        } else if (mode == "adv-sr" || mode == "adv-sn") {
            port = adv_retrain(ds, unlearn_ids, training.config(ds), training.hyper(),
                               mode == "adv-sr" ? AdvMode::sr : AdvMode::sn, sr_samples,
                               training.seed);
        } else if (mode == "forge") {
            if (pot_path.empty()) {
                throw Error(ErrorCode::invalid_argument, "forge mode requires --pot");
            }
            const Proof pot = deserialize(pot_path);
            port = forge(pot, ds, unlearn_ids, gamma_r, training.seed, threads);
        } else {
            throw Error(ErrorCode::invalid_argument,
                        "--mode must be retrain | adv-sr | adv-sn | forge");
        }
        serialize(port, out_proof);

        const auto test_set = data.load_test(training.seed);
        json metrics = split_metrics(port, ds, test_set, unlearn_ids);
        metrics["proof"] = out_proof;
        metrics["kind"] = "PoRT";
        metrics["mode"] = mode;
        write_output(out_metrics, metrics.dump(2));
        return 0;
    }
};

struct VerifyCmd {
    DataOpts data;
    UnlearnOpts unlearn;
    BackdoorOpts backdoor;
    std::string proof_path;
    double epsilon = 0.0;
    std::uint64_t seed = 1;
    int threads = 0;
    std::string out_report;

    int run() const {
        Dataset ds = data.load_train(seed);
        std::vector<std::uint64_t> unlearn_ids;
        if (unlearn.any()) unlearn_ids = unlearn.resolve(ds, seed);
        if (backdoor.any()) {
            auto result = inject_backdoor(ds, backdoor.spec(), unlearn_ids, seed);
            ds = std::move(result.dataset);
        }
        const Proof proof = deserialize(proof_path);
        const VerificationReport report =
            verify_reproducing(proof, ds, unlearn_ids, epsilon, threads);
        write_output(out_report, report_to_json(report));
        return report.pass ? 0 : 2;
    }
};

struct BackdoorCmd {
    DataOpts data;
    BackdoorOpts backdoor;
    std::string proof_path;
    int n = 30;
    double alpha = 1e-3;
    double subset_fraction = 0.02;
    std::uint64_t seed = 1;
    std::string out_report;

    int run() const {
        const Proof proof = deserialize(proof_path);
        const auto test_set = data.load_test(seed);
        if (!test_set) {
            throw Error(ErrorCode::invalid_argument,
                        "backdoor verification needs a test data source");
        }
        std::cerr << "note: the test set must be disjoint from the proof's training data\n";
        const ParameterVector params{final_params_of(proof), proof.layout};
        const HypothesisTestResult result =
            athena_verify(proof.model_config, params, *test_set, backdoor.spec(), n, alpha, seed,
                          subset_fraction);
        write_output(out_report, hypothesis_result_to_json(result));
        return 0;
    }
};

struct ExperimentCmd {
    std::string name;
    std::string out_dir = "experiments";
    int num_seeds = 5;
    std::uint64_t base_seed = 1;
    std::string blobs;
    std::string arch;
    int epochs = 0;
    double lr = 0.0;
    double gamma_r = 0.0;
    std::string dirichlet;
    double fraction = 0.0;
    std::int64_t pu_draws = 100000;

    DeskRecipe recipe() const {
        DeskRecipe r;
        if (!blobs.empty()) {
            const auto v = parse_reals(blobs, 4, "--blobs");
            r.num_classes = (int)v[0];
            r.dim = (std::int64_t)v[1];
            r.per_class = (std::int64_t)v[2];
            r.spread = v[3];
            r.test_per_class = r.per_class;
        }
        if (!arch.empty()) {
            if (arch == "linear") {
                r.arch = Arch::linear;
            } else if (arch.rfind("mlp:", 0) == 0) {
                r.arch = Arch::mlp;
                r.hidden_size = std::stoi(arch.substr(4));
            } else {
                throw Error(ErrorCode::invalid_argument, "--arch must be linear or mlp:H");
            }
        }
        if (epochs > 0) r.hyper.epochs = epochs;
        if (lr > 0.0) r.hyper.learning_rate = lr;
        if (gamma_r > 0.0) r.gamma_r = gamma_r;
        return r;
    }

    UnlearnSpec unlearn_spec() const {
        UnlearnSpec spec;
        if (!dirichlet.empty()) {
            const auto v = parse_reals(dirichlet, 3, "--unlearn-dirichlet");
            spec.kind = UnlearnSpecKind::dirichlet;
            spec.alpha = v[0];
            spec.pieces = (int)v[1];
            spec.piece_index = (int)v[2];
        } else if (fraction > 0.0) {
            spec.fraction = fraction;
        }
        return spec;
    }

    std::vector<std::uint64_t> seeds() const {
        std::vector<std::uint64_t> out(num_seeds);
        for (int i = 0; i < num_seeds; ++i) out[i] = base_seed + i;
        return out;
    }

    int run() const {
        std::filesystem::create_directories(out_dir);
        const DeskRecipe r = recipe();
        const UnlearnSpec spec = unlearn_spec();
        const auto seed_list = seeds();

        if (name == "utility-table") {
            const UtilityTable table = run_utility_table(r, spec, seed_list);
            const auto path = std::filesystem::path(out_dir) / "utility_table.csv";
            write_output(path.string(), utility_table_to_csv(table));
            std::cout << "wrote " << path.string() << '\n';
            return 0;
        }
        if (name == "verify-error-curve") {
            json summary = json::array();
            std::vector<std::uint64_t> failed_seeds;
            for (std::uint64_t seed : seed_list) {
                ErrorCurve curve;
                try {
                    curve = run_verify_error_curve(r, spec, r.hyper.learning_rate, r.gamma_r, seed);
                } catch (const std::exception& ex) {
                    std::cerr << "seed " << seed << " failed: " << ex.what() << '\n';
                    failed_seeds.push_back(seed);
                    continue;
                }
                const auto path = std::filesystem::path(out_dir) /
                                  ("error_curve_seed" + std::to_string(seed) + ".csv");
                write_output(path.string(), error_curve_to_csv(curve));
                json epochs_json = json::array();
                for (const auto& e : curve.epochs) {
                    epochs_json.push_back({{"epoch", e.epoch},
                                           {"mean_excluding", e.mean_excluding},
                                           {"std_excluding", e.std_excluding},
                                           {"count_excluding", e.count_excluding},
                                           {"mean_including", e.mean_including},
                                           {"std_including", e.std_including},
                                           {"count_including", e.count_including}});
                }
                summary.push_back({{"seed", seed},
                                   {"max_error", curve.max_error},
                                   {"mean_error", curve.mean_error},
                                   {"epochs", epochs_json}});
            }
            const auto path = std::filesystem::path(out_dir) / "error_curve_summary.json";
            write_output(path.string(), summary.dump(2));
            std::cout << "wrote " << path.string() << '\n';
            if (!failed_seeds.empty()) {
                std::cerr << failed_seeds.size() << " of " << seed_list.size() << " seeds failed\n";
                return 1;
            }
            return 0;
        }
        if (name == "lr-sweep") {
            const std::vector<double> gammas{5e-3, 1e-3, 5e-4, 1e-4, 5e-5};
            json rows = json::array();
            std::vector<std::uint64_t> failed_seeds;
            for (std::uint64_t seed : seed_list) {
                std::vector<LrSweepRow> sweep;
                try {
                    sweep = run_lr_sweep(r, spec, gammas, seed);
                } catch (const std::exception& ex) {
                    std::cerr << "seed " << seed << " failed: " << ex.what() << '\n';
                    failed_seeds.push_back(seed);
                    continue;
                }
                const auto path =
                    std::filesystem::path(out_dir) / ("lr_sweep_seed" + std::to_string(seed) + ".csv");
                write_output(path.string(), lr_sweep_to_csv(sweep));
                for (const auto& row : sweep) {
                    rows.push_back({{"seed", seed},
                                    {"gamma", row.gamma},
                                    {"max_error", row.max_error},
                                    {"mean_error", row.mean_error}});
                }
            }
            const auto path = std::filesystem::path(out_dir) / "lr_sweep_summary.json";
            write_output(path.string(), rows.dump(2));
            std::cout << "wrote " << path.string() << '\n';
            if (!failed_seeds.empty()) {
                std::cerr << failed_seeds.size() << " of " << seed_list.size() << " seeds failed\n";
                return 1;
            }
            return 0;
        }
        if (name == "pu-check") {
            json rows = json::array();
            const Dataset ds = recipe_train_set(r, seed_list.front());
            for (auto [frac, m] : {std::pair{0.02, 128}, std::pair{0.1, 64}}) {
                const PuCheckRow row = run_pu_check(ds, frac, m, pu_draws, seed_list.front());
                rows.push_back({{"unlearn_fraction", row.unlearn_fraction},
                                {"batch_size", row.batch_size},
                                {"closed_form", row.closed_form},
                                {"empirical", row.empirical},
                                {"draws", row.draws}});
            }
            const auto path = std::filesystem::path(out_dir) / "pu_check.json";
            write_output(path.string(), rows.dump(2));
            std::cout << "wrote " << path.string() << '\n';
            return 0;
        }
        throw Error(ErrorCode::invalid_argument,
                    "--name must be utility-table | verify-error-curve | lr-sweep | pu-check");
    }
};

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"unlearn-audit: machine-unlearning verification game testbed"};
    app.require_subcommand(1);

    TrainCmd train_cmd;
    auto* t = app.add_subcommand("train", "Train a model and record its PoT");
    train_cmd.data.add_flags(t);
    train_cmd.unlearn.add_flags(t);
    train_cmd.training.add_flags(t);
    train_cmd.backdoor.add_flags(t);
    t->add_option("--out", train_cmd.out_proof, "Output proof path");
    t->add_option("--metrics", train_cmd.out_metrics, "Metrics JSON path (default: stdout)");
    t->add_option("--out-unlearn-ids", train_cmd.out_unlearn_ids, "Write resolved unlearn ids");
    t->add_option("--out-poisoned-ids", train_cmd.out_poisoned_ids, "Write poisoned ids");

    UnlearnCmd unlearn_cmd;
    auto* u = app.add_subcommand("unlearn", "Produce a PoRT by honest or adversarial unlearning");
    unlearn_cmd.data.add_flags(u);
    unlearn_cmd.unlearn.add_flags(u);
    unlearn_cmd.training.add_flags(u);
    unlearn_cmd.backdoor.add_flags(u);
    u->add_option("--mode", unlearn_cmd.mode, "retrain | adv-sr | adv-sn | forge")->required();
    u->add_option("--pot", unlearn_cmd.pot_path, "PoT file (forge mode)");
    u->add_option("--gamma-r", unlearn_cmd.gamma_r, "Forging learning rate");
    u->add_option("--sr-samples", unlearn_cmd.sr_samples, "Candidate batches for S_r");
    u->add_option("--threads", unlearn_cmd.threads, "Forge parallelism (0 = hardware)");
    u->add_option("--out", unlearn_cmd.out_proof, "Output proof path");
    u->add_option("--metrics", unlearn_cmd.out_metrics, "Metrics JSON path (default: stdout)");

    VerifyCmd verify_cmd;
    auto* v = app.add_subcommand("verify", "Reproduce a proof and check removability");
    verify_cmd.data.add_flags(v);
    verify_cmd.unlearn.add_flags(v);
    verify_cmd.backdoor.add_flags(v);
    v->add_option("--proof", verify_cmd.proof_path, "Proof file to verify")->required();
    v->add_option("--epsilon", verify_cmd.epsilon, "Verification error threshold");
    v->add_option("--seed", verify_cmd.seed, "Seed used to rebuild the dataset and unlearn set");
    v->add_option("--threads", verify_cmd.threads, "Replay parallelism (0 = hardware)");
    v->add_option("--out", verify_cmd.out_report, "Report JSON path (default: stdout)");

    BackdoorCmd backdoor_cmd;
    auto* b = app.add_subcommand("backdoor", "Athena-style backdoor hypothesis test");
    backdoor_cmd.data.add_flags(b);
    backdoor_cmd.backdoor.add_flags(b);
    b->add_option("--proof", backdoor_cmd.proof_path, "Proof whose final model is tested")->required();
    b->add_option("--n", backdoor_cmd.n, "Hypothesis test sample count");
    b->add_option("--alpha", backdoor_cmd.alpha, "Type I error bound");
    b->add_option("--subset-fraction", backdoor_cmd.subset_fraction,
                  "Fraction of test data per estimation subset");
    b->add_option("--seed", backdoor_cmd.seed, "Seed for subset selection");
    b->add_option("--out", backdoor_cmd.out_report, "Result JSON path (default: stdout)");

    ExperimentCmd experiment_cmd;
    auto* e = app.add_subcommand("experiment", "Multi-seed experiment runners");
    e->add_option("--name", experiment_cmd.name,
                  "utility-table | verify-error-curve | lr-sweep | pu-check")
        ->required();
    e->add_option("--out-dir", experiment_cmd.out_dir, "Output directory");
    e->add_option("--seeds", experiment_cmd.num_seeds, "Number of seeds");
    e->add_option("--seed", experiment_cmd.base_seed, "First seed");
    e->add_option("--blobs", experiment_cmd.blobs, "Blobs override: K,dim,per_class,spread");
    e->add_option("--arch", experiment_cmd.arch, "Architecture override");
    e->add_option("--epochs", experiment_cmd.epochs, "Epoch override");
    e->add_option("--lr", experiment_cmd.lr, "Learning-rate override");
    e->add_option("--gamma-r", experiment_cmd.gamma_r, "Forging learning-rate override");
    e->add_option("--unlearn-dirichlet", experiment_cmd.dirichlet, "alpha,pieces,index");
    e->add_option("--unlearn-fraction", experiment_cmd.fraction, "Random unlearn fraction");
    e->add_option("--pu-draws", experiment_cmd.pu_draws, "Monte Carlo draws for pu-check");

    CLI11_PARSE(app, argc, argv);

    try {
        if (t->parsed()) return train_cmd.run();
        if (u->parsed()) return unlearn_cmd.run();
        if (v->parsed()) return verify_cmd.run();
        if (b->parsed()) return backdoor_cmd.run();
        if (e->parsed()) return experiment_cmd.run();
    } catch (const std::exception& ex) {
        std::cerr << "error: " << ex.what() << '\n';
        return 1;
    }
    return 1;
}
