#include "ua/proof.hpp"

#include <cstring>
#include <fstream>

#include <json.hpp>

#include "ua/error.hpp"

namespace ua {

namespace {

using nlohmann::json;

void check_step(const Proof& proof, const ProofStep& step) {
    const std::uint64_t expected = proof.steps.empty() ? 1 : proof.steps.back().t + 1;
    if (step.t != expected) {
        throw Error(ErrorCode::index_gap, "append_step: expected step " + std::to_string(expected) +
                                              ", got " + std::to_string(step.t));
    }
    if (step.batch_ids.empty()) {
        throw Error(ErrorCode::invalid_argument, "append_step: empty batch");
    }
    if (step.params_after.size() != proof.initial_params.size()) {
        throw Error(ErrorCode::layout_mismatch, "append_step: parameter length mismatch");
    }
    if (step.rule.learning_rate < 0.0 || step.rule.weight_decay < 0.0) {
        throw Error(ErrorCode::invalid_argument, "append_step: negative rule constants");
    }
}

std::string arch_name(Arch a) { return a == Arch::linear ? "linear" : "mlp"; }

Arch arch_from_name(const std::string& s) {
    if (s == "linear") return Arch::linear;
    if (s == "mlp") return Arch::mlp;
    throw Error(ErrorCode::format, "proof: unknown arch '" + s + "'");
}

json metadata_json(const Proof& proof) {
    json meta;
    meta["kind"] = proof.kind == ProofKind::pot ? "PoT" : "PoRT";
    meta["model_config"] = {
        {"arch", arch_name(proof.model_config.arch)},
        {"hidden_size", proof.model_config.hidden_size},
        {"input_dim", proof.model_config.input_dim},
        {"num_classes", proof.model_config.num_classes},
        {"weight_decay", proof.model_config.weight_decay},
    };
    meta["dataset_fingerprint"] = hash_to_hex(proof.dataset_fingerprint);
    meta["seed"] = proof.seed;
    meta["declared_unlearn_ids"] = proof.declared_unlearn_ids;
    meta["T"] = proof.steps.size();
    meta["param_count"] = proof.initial_params.size();
    json layout = json::array();
    for (const auto& t : proof.layout->tensors) layout.push_back({t.name, t.shape});
    meta["layout"] = layout;
    return meta;
}

class ByteWriter {
public:
    explicit ByteWriter(std::ofstream& out) : out_(out) {}

    void bytes(const void* data, std::size_t len) {
        out_.write(static_cast<const char*>(data), static_cast<std::streamsize>(len));
        digest_.update(data, len);
    }
    void u8(std::uint8_t v) { bytes(&v, 1); }
    void u16(std::uint16_t v) { little(v); }
    void u32(std::uint32_t v) { little(v); }
    void u64(std::uint64_t v) { little(v); }
    void f64(double v) {
        std::uint64_t bits;
        std::memcpy(&bits, &v, sizeof(bits));
        u64(bits);
    }
    void f64_array(std::span<const double> v) {
        for (double x : v) f64(x);
    }
    Hash256 checksum() { return digest_.finish(); }

private:
    template <class T>
    void little(T v) {
        unsigned char buf[sizeof(T)];
        for (std::size_t i = 0; i < sizeof(T); ++i) buf[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
        bytes(buf, sizeof(T));
    }

    std::ofstream& out_;
    Sha256 digest_;
};

class ByteReader {
public:
    explicit ByteReader(std::vector<unsigned char> data) : data_(std::move(data)) {}

    std::size_t remaining() const { return data_.size() - pos_; }

    void bytes(void* out, std::size_t len) {
        if (remaining() < len) throw Error(ErrorCode::format, "proof: truncated file");
        std::memcpy(out, data_.data() + pos_, len);
        pos_ += len;
    }
    std::uint8_t u8() {
        std::uint8_t v;
        bytes(&v, 1);
        return v;
    }
    std::uint16_t u16() { return little<std::uint16_t>(); }
    std::uint32_t u32() { return little<std::uint32_t>(); }
    std::uint64_t u64() { return little<std::uint64_t>(); }
    double f64() {
        const std::uint64_t bits = u64();
        double v;
        std::memcpy(&v, &bits, sizeof(v));
        return v;
    }

private:
    template <class T>
    T little() {
        unsigned char buf[sizeof(T)];
        bytes(buf, sizeof(T));
        T v = 0;
        for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(buf[i]) << (8 * i);
        return v;
    }

    std::vector<unsigned char> data_;
    std::size_t pos_ = 0;
};

} // namespace

Proof append_step(const Proof& proof, ProofStep step) {
    check_step(proof, step);
    Proof out = proof;
    out.steps.push_back(std::move(step));
    return out;
}

void append_step_inplace(Proof& proof, ProofStep&& step) {
    check_step(proof, step);
    proof.steps.push_back(std::move(step));
}

void serialize(const Proof& proof, const std::filesystem::path& path) {
    if (proof.kind == ProofKind::pot && !proof.declared_unlearn_ids.empty()) {
        throw Error(ErrorCode::invalid_argument, "serialize: a PoT must not declare unlearn ids");
    }
    if (!proof.layout || proof.layout->total != static_cast<std::int64_t>(proof.initial_params.size())) {
        throw Error(ErrorCode::layout_mismatch, "serialize: initial parameters disagree with layout");
    }
    for (std::size_t i = 0; i < proof.steps.size(); ++i) {
        if (proof.steps[i].t != i + 1) {
            throw Error(ErrorCode::index_gap, "serialize: step indices must be 1..T consecutive");
        }
        if (proof.steps[i].params_after.size() != proof.initial_params.size()) {
            throw Error(ErrorCode::layout_mismatch, "serialize: step parameter length mismatch");
        }
    }

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::io, "serialize: cannot open " + path.string());
    ByteWriter w(out);

    w.bytes("UPRF", 4);
    w.u16(kProofFormatVersion);
    const std::string meta = metadata_json(proof).dump();
    w.u32(static_cast<std::uint32_t>(meta.size()));
    w.bytes(meta.data(), meta.size());
    w.f64_array(proof.initial_params);
    for (const auto& step : proof.steps) {
        w.u64(step.t);
        w.u8(0); // rule kind: SGD
        w.f64(step.rule.learning_rate);
        w.f64(step.rule.weight_decay);
        w.u32(static_cast<std::uint32_t>(step.batch_ids.size()));
        for (std::uint64_t id : step.batch_ids) w.u64(id);
        w.f64_array(step.params_after);
    }
    const Hash256 checksum = w.checksum();
    out.write(reinterpret_cast<const char*>(checksum.data()), checksum.size());
    if (!out) throw Error(ErrorCode::io, "serialize: write failed for " + path.string());
}

Proof deserialize(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::io, "deserialize: cannot open " + path.string());
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                     std::istreambuf_iterator<char>());
    if (bytes.size() < 4 + 2 + 4 + 32) throw Error(ErrorCode::format, "deserialize: file too short");

    const Hash256 expected = sha256(bytes.data(), bytes.size() - 32);
    if (std::memcmp(expected.data(), bytes.data() + bytes.size() - 32, 32) != 0) {
        throw Error(ErrorCode::checksum_mismatch, "deserialize: checksum mismatch in " + path.string());
    }
    bytes.resize(bytes.size() - 32);
    ByteReader r(std::move(bytes));

    char magic[4];
    r.bytes(magic, 4);
    if (std::memcmp(magic, "UPRF", 4) != 0) {
        throw Error(ErrorCode::format, "deserialize: bad magic in " + path.string());
    }
    const std::uint16_t version = r.u16();
    if (version != kProofFormatVersion) {
        throw Error(ErrorCode::format, "deserialize: unsupported format version " + std::to_string(version));
    }
    const std::uint32_t meta_len = r.u32();
    std::string meta_str(meta_len, '\0');
    r.bytes(meta_str.data(), meta_len);

    json meta;
    try {
        meta = json::parse(meta_str);
    } catch (const std::exception& e) {
        throw Error(ErrorCode::format, std::string("deserialize: bad metadata JSON: ") + e.what());
    }

    Proof proof;
    const std::string kind = meta.at("kind").get<std::string>();
    if (kind == "PoT") {
        proof.kind = ProofKind::pot;
    } else if (kind == "PoRT") {
        proof.kind = ProofKind::port;
    } else {
        throw Error(ErrorCode::format, "deserialize: unknown proof kind '" + kind + "'");
    }
    const auto& mc = meta.at("model_config");
    proof.model_config.arch = arch_from_name(mc.at("arch").get<std::string>());
    proof.model_config.hidden_size = mc.at("hidden_size").get<int>();
    proof.model_config.input_dim = mc.at("input_dim").get<int>();
    proof.model_config.num_classes = mc.at("num_classes").get<int>();
    proof.model_config.weight_decay = mc.at("weight_decay").get<double>();
    proof.dataset_fingerprint = hash_from_hex(meta.at("dataset_fingerprint").get<std::string>());
    proof.seed = meta.at("seed").get<std::uint64_t>();
    proof.declared_unlearn_ids = meta.at("declared_unlearn_ids").get<std::vector<std::uint64_t>>();
    const std::uint64_t T = meta.at("T").get<std::uint64_t>();
    const std::uint64_t param_count = meta.at("param_count").get<std::uint64_t>();

    proof.layout = make_layout(proof.model_config);
    if (proof.layout->total != static_cast<std::int64_t>(param_count)) {
        throw Error(ErrorCode::layout_mismatch, "deserialize: param_count disagrees with model config");
    }
    // The layout block is redundant with model_config; check it matches.
    const json& layout_json = meta.at("layout");
    if (layout_json.size() != proof.layout->tensors.size()) {
        throw Error(ErrorCode::layout_mismatch, "deserialize: layout tensor count mismatch");
    }
    for (std::size_t i = 0; i < proof.layout->tensors.size(); ++i) {
        const auto& spec = proof.layout->tensors[i];
        if (layout_json[i][0].get<std::string>() != spec.name ||
            layout_json[i][1].get<std::vector<std::int64_t>>() != spec.shape) {
            throw Error(ErrorCode::layout_mismatch, "deserialize: layout tensor mismatch");
        }
    }
    if (proof.kind == ProofKind::pot && !proof.declared_unlearn_ids.empty()) {
        throw Error(ErrorCode::format, "deserialize: PoT with declared unlearn ids");
    }

    proof.initial_params.resize(param_count);
    for (auto& v : proof.initial_params) v = r.f64();
    proof.steps.resize(T);
    for (std::uint64_t t = 0; t < T; ++t) {
        ProofStep& step = proof.steps[t];
        step.t = r.u64();
        if (step.t != t + 1) {
            throw Error(ErrorCode::index_gap, "deserialize: non-consecutive step index");
        }
        const std::uint8_t rule_kind = r.u8();
        if (rule_kind != 0) throw Error(ErrorCode::format, "deserialize: unknown update rule kind");
        step.rule.learning_rate = r.f64();
        step.rule.weight_decay = r.f64();
        const std::uint32_t batch_len = r.u32();
        if (batch_len == 0) throw Error(ErrorCode::format, "deserialize: empty batch record");
        step.batch_ids.resize(batch_len);
        for (auto& id : step.batch_ids) id = r.u64();
        step.params_after.resize(param_count);
        for (auto& v : step.params_after) v = r.f64();
    }
    if (r.remaining() != 0) {
        throw Error(ErrorCode::format, "deserialize: trailing bytes after last step");
    }
    return proof;
}

void validate_structure(const Proof& proof, const Dataset& dataset) {
    if (proof.dataset_fingerprint != dataset.fingerprint) {
        throw Error(ErrorCode::fingerprint_mismatch,
                    "validate_structure: proof is bound to a different dataset");
    }
    if (!proof.layout || proof.layout->total != static_cast<std::int64_t>(proof.initial_params.size())) {
        throw Error(ErrorCode::layout_mismatch, "validate_structure: bad initial parameter layout");
    }
    if (proof.model_config.input_dim != dataset.d || proof.model_config.num_classes != dataset.num_classes) {
        throw Error(ErrorCode::layout_mismatch, "validate_structure: model config disagrees with dataset");
    }
    if (!all_finite(proof.initial_params)) {
        throw Error(ErrorCode::non_finite, "validate_structure: non-finite initial parameters");
    }
    for (std::size_t i = 0; i < proof.steps.size(); ++i) {
        const auto& step = proof.steps[i];
        if (step.t != i + 1) {
            throw Error(ErrorCode::index_gap, "validate_structure: step indices must be 1..T consecutive");
        }
        if (step.batch_ids.empty()) {
            throw Error(ErrorCode::invalid_argument,
                        "validate_structure: empty batch at step " + std::to_string(step.t));
        }
        for (std::uint64_t id : step.batch_ids) {
            if (!dataset.index_of(id)) {
                throw Error(ErrorCode::unknown_sample, "validate_structure: step " + std::to_string(step.t) +
                                                           " references unknown sample " + std::to_string(id));
            }
        }
        if (step.params_after.size() != proof.initial_params.size()) {
            throw Error(ErrorCode::layout_mismatch,
                        "validate_structure: parameter length mismatch at step " + std::to_string(step.t));
        }
        if (!all_finite(step.params_after)) {
            throw Error(ErrorCode::non_finite,
                        "validate_structure: non-finite parameters at step " + std::to_string(step.t));
        }
    }
}

} // namespace ua
