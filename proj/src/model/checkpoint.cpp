// SPDX-License-Identifier: Apache-2.0
#include "xtcdr/model/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <set>

#include "xtcdr/data/dataset.hpp"
#include "xtcdr/io.hpp"

namespace xtcdr::model {

using nlohmann::json;

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

void reject_unknown(const json& j, std::initializer_list<const char*> keys, const std::string& where) {
    if (!j.is_object()) fail(ErrorKind::Config, where + " must be a JSON object");
    const std::set<std::string> allowed(keys.begin(), keys.end());
    for (const auto& [k, v] : j.items())
        if (!allowed.contains(k)) fail(ErrorKind::Config, "unknown key '" + k + "' in " + where);
}

template <class V>
void read_key(const json& j, const char* key, V& out, const std::string& where) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<V>();
    } catch (const json::exception& e) {
        fail(ErrorKind::Config, where + "." + key + ": " + e.what());
    }
}

}  // namespace

ModelConfig model_config_from_json(const json& j) {
    reject_unknown(j,
                   {"gene_dim", "encoder_hidden", "latent_dim", "dropout_rate", "loss_weights", "lr", "epochs",
                    "batch_size", "seed"},
                   "model");
    ModelConfig c;
    read_key(j, "gene_dim", c.gene_dim, "model");
    read_key(j, "encoder_hidden", c.encoder_hidden, "model");
    read_key(j, "latent_dim", c.latent_dim, "model");
    read_key(j, "dropout_rate", c.dropout_rate, "model");
    read_key(j, "lr", c.lr, "model");
    read_key(j, "epochs", c.epochs, "model");
    read_key(j, "batch_size", c.batch_size, "model");
    read_key(j, "seed", c.seed, "model");
    if (j.contains("loss_weights")) {
        const auto& w = j.at("loss_weights");
        reject_unknown(w, {"sim", "orth", "reco1", "reco2", "cross"}, "model.loss_weights");
        read_key(w, "sim", c.loss_weights.sim, "model.loss_weights");
        read_key(w, "orth", c.loss_weights.orth, "model.loss_weights");
        read_key(w, "reco1", c.loss_weights.reco1, "model.loss_weights");
        read_key(w, "reco2", c.loss_weights.reco2, "model.loss_weights");
        read_key(w, "cross", c.loss_weights.cross, "model.loss_weights");
    }
    return c;
}

json to_json(const ModelConfig& c) {
    const auto& w = c.loss_weights;
    return json{{"gene_dim", c.gene_dim},
                {"encoder_hidden", c.encoder_hidden},
                {"latent_dim", c.latent_dim},
                {"dropout_rate", c.dropout_rate},
                {"loss_weights",
                 {{"sim", w.sim}, {"orth", w.orth}, {"reco1", w.reco1}, {"reco2", w.reco2}, {"cross", w.cross}}},
                {"lr", c.lr},
                {"epochs", c.epochs},
                {"batch_size", c.batch_size},
                {"seed", c.seed}};
}

json to_json(const LossBreakdown& l) {
    return json{{"sim", l.sim},     {"orth", l.orth},   {"reco1", l.reco1},
                {"reco2", l.reco2}, {"cross", l.cross}, {"total", l.total}};
}

namespace {

struct NamedSet {
    const char* prefix;
    nn::ParamSet* set;
};

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

}  // namespace

void save_checkpoint(const ModelParams& params, const ModelConfig& config, const std::filesystem::path& dir) {
    std::string blob;
    json table = json::array();
    const std::pair<const char*, const nn::ParamSet*> sets[] = {
        {"basal", &params.basal}, {"perturbation", &params.perturbation}, {"decoder", &params.decoder}};
    for (const auto& [prefix, set] : sets) {
        for (const auto& e : set->entries()) {
            const std::size_t offset = blob.size();
            const std::size_t length = e.value.size() * sizeof(float);
            blob.append(reinterpret_cast<const char*>(e.value.data()), length);
            table.push_back({{"name", std::string(prefix) + "/" + e.name},
                             {"shape", e.value.shape()},
                             {"dtype", "f32"},
                             {"offset", offset},
                             {"length", length}});
        }
    }
    const auto digest = data::fnv1a64({reinterpret_cast<const unsigned char*>(blob.data()), blob.size()});
    json manifest{{"format_version", kCheckpointFormatVersion},
                  {"config", to_json(config)},
                  {"tensors", table},
                  {"params_bytes", blob.size()},
                  {"params_fnv1a64", hex64(digest)}};
    io::write_file_atomic(dir / "params.bin", blob);
    io::write_file_atomic(dir / "manifest.json", manifest.dump(2) + "\n");
}

Checkpoint load_checkpoint(const std::filesystem::path& dir) {
    if (!std::filesystem::exists(dir / "manifest.json"))
        fail(ErrorKind::Format, "checkpoint " + dir.string() + " has no manifest.json");
    json manifest;
    try {
        manifest = json::parse(io::read_file(dir / "manifest.json"));
    } catch (const json::exception& e) {
        fail(ErrorKind::Format, "corrupt checkpoint manifest: " + std::string(e.what()));
    }
    Checkpoint ck;
    try {
        if (manifest.at("format_version").get<int>() != kCheckpointFormatVersion)
            fail(ErrorKind::Format, "unsupported checkpoint format_version");
        try {
            ck.config = model_config_from_json(manifest.at("config"));
            ck.config.validate();
        } catch (const Error& e) {
            fail(ErrorKind::Format, std::string("checkpoint config: ") + e.what());
        }
        if (!std::filesystem::exists(dir / "params.bin"))
            fail(ErrorKind::Format, "checkpoint " + dir.string() + " has no params.bin");
        const std::string blob = io::read_file(dir / "params.bin");
        if (blob.size() != manifest.at("params_bytes").get<std::size_t>())
            fail(ErrorKind::Format, "params.bin is " + std::to_string(blob.size()) + " bytes, manifest says " +
                                        std::to_string(manifest.at("params_bytes").get<std::size_t>()));
        const auto digest = data::fnv1a64({reinterpret_cast<const unsigned char*>(blob.data()), blob.size()});
        if (hex64(digest) != manifest.at("params_fnv1a64").get<std::string>())
            fail(ErrorKind::Format, "params.bin digest does not match manifest");

        ck.params = init_model(ck.config);
        const NamedSet sets[] = {
            {"basal", &ck.params.basal}, {"perturbation", &ck.params.perturbation}, {"decoder", &ck.params.decoder}};
        std::size_t expected_count = 0;
        for (const auto& s : sets) expected_count += s.set->size();
        const auto& table = manifest.at("tensors");
        if (table.size() != expected_count)
            fail(ErrorKind::Format, "manifest lists " + std::to_string(table.size()) + " tensors, architecture has " +
                                        std::to_string(expected_count));
        std::size_t t = 0;
        for (const auto& s : sets) {
            for (auto& e : s.set->entries()) {
                const auto& row = table.at(t++);
                const std::string name = std::string(s.prefix) + "/" + e.name;
                if (row.at("name").get<std::string>() != name)
                    fail(ErrorKind::Format, "manifest tensor '" + row.at("name").get<std::string>() +
                                                "' where '" + name + "' was expected");
                if (row.at("dtype").get<std::string>() != "f32")
                    fail(ErrorKind::Format, "tensor " + name + " has unsupported dtype");
                if (row.at("shape").get<std::vector<std::size_t>>() != e.value.shape())
                    fail(ErrorKind::Format, "tensor " + name + " shape does not match architecture");
                const auto offset = row.at("offset").get<std::size_t>();
                const auto length = row.at("length").get<std::size_t>();
                if (length != e.value.size() * sizeof(float) || offset + length > blob.size())
                    fail(ErrorKind::Format, "tensor " + name + " byte range is invalid");
                std::memcpy(e.value.data(), blob.data() + offset, length);
            }
        }
    } catch (const json::exception& e) {
        fail(ErrorKind::Format, "malformed checkpoint manifest: " + std::string(e.what()));
    }
    return ck;
}

}  // namespace xtcdr::model
