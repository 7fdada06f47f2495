#include <cstdint>
#include <filesystem>
#include <fstream>

#include "ctxfront/model.hpp"

#include <json.hpp>

namespace ctxfront::nn {

using nlohmann::json;

namespace {

json arch_to_json(const ArchConfig &c) {
    return json{{"d_model", c.d_model},
                {"n_primary_blocks", c.n_primary_blocks},
                {"n_context_blocks", c.n_context_blocks},
                {"n_cross_blocks", c.n_cross_blocks},
                {"ffn_multiplier", c.ffn_multiplier},
                {"n_heads", c.n_heads},
                {"attn_window_past", c.attn_window_past},
                {"conv_kernel", c.conv_kernel},
                {"dvec_dim", c.dvec_dim},
                {"n_mels", c.n_mels}};
}

ArchConfig arch_from_json(const json &j) {
    ArchConfig c;
    c.d_model = j.at("d_model");
    c.n_primary_blocks = j.at("n_primary_blocks");
    c.n_context_blocks = j.at("n_context_blocks");
    c.n_cross_blocks = j.at("n_cross_blocks");
    c.ffn_multiplier = j.at("ffn_multiplier");
    c.n_heads = j.at("n_heads");
    c.attn_window_past = j.at("attn_window_past");
    c.conv_kernel = j.at("conv_kernel");
    c.dvec_dim = j.at("dvec_dim");
    c.n_mels = j.at("n_mels");
    return c;
}

} // namespace

void save_checkpoint(const std::string &dir, FrontendModel &model, int64_t step) {
    std::filesystem::create_directories(dir);
    auto params = model.named_parameters();

    json manifest;
    manifest["arch"] = arch_to_json(model.cfg);
    manifest["step"] = step;
    json plist = json::array();

    const std::string bin_path = dir + "/params.bin";
    std::ofstream bin(bin_path, std::ios::binary);
    if (!bin) throw std::runtime_error("cannot write " + bin_path);
    size_t offset = 0;
    for (auto &[name, p] : params) {
        plist.push_back({{"name", name}, {"shape", p.shape()}, {"offset", offset}});
        const auto &v = p.values();
        bin.write(reinterpret_cast<const char *>(v.data()),
                  static_cast<std::streamsize>(v.size() * sizeof(float)));
        offset += v.size() * sizeof(float);
    }
    if (!bin) throw std::runtime_error("write failed: " + bin_path);
    bin.close();
    manifest["parameters"] = plist;
    manifest["total_bytes"] = offset;

    std::ofstream mf(dir + "/manifest.json");
    if (!mf) throw std::runtime_error("cannot write " + dir + "/manifest.json");
    mf << manifest.dump(2) << "\n";
}

FrontendModel load_checkpoint(const std::string &dir, int64_t *step_out) {
    std::ifstream mf(dir + "/manifest.json");
    if (!mf) throw std::runtime_error("cannot open " + dir + "/manifest.json");
    json manifest = json::parse(mf);

    ArchConfig arch = arch_from_json(manifest.at("arch"));
    FrontendModel model(arch, /*seed=*/0);
    if (step_out) *step_out = manifest.at("step").get<int64_t>();

    const std::string bin_path = dir + "/params.bin";
    std::ifstream bin(bin_path, std::ios::binary);
    if (!bin) throw std::runtime_error("cannot open " + bin_path);

    auto params = model.named_parameters();
    const json &plist = manifest.at("parameters");
    if (plist.size() != params.size()) {
        throw std::runtime_error("checkpoint: parameter count mismatch: manifest has " +
                                 std::to_string(plist.size()) + ", model has " +
                                 std::to_string(params.size()));
    }
    for (size_t i = 0; i < params.size(); ++i) {
        auto &[name, p] = params[i];
        const json &entry = plist[i];
        if (entry.at("name").get<std::string>() != name) {
            throw std::runtime_error("checkpoint: parameter name mismatch at index " +
                                     std::to_string(i) + ": manifest '" +
                                     entry.at("name").get<std::string>() + "' vs model '" +
                                     name + "'");
        }
        std::vector<int> shape = entry.at("shape").get<std::vector<int>>();
        if (shape != p.shape()) {
            throw std::runtime_error("checkpoint: shape mismatch for " + name);
        }
        bin.seekg(static_cast<std::streamoff>(entry.at("offset").get<size_t>()));
        auto &v = p.values();
        bin.read(reinterpret_cast<char *>(v.data()),
                 static_cast<std::streamsize>(v.size() * sizeof(float)));
        if (!bin) throw std::runtime_error("checkpoint: truncated params.bin reading " + name);
    }
    return model;
}

} // namespace ctxfront::nn
