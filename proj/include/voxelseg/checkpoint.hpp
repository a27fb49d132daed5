#pragma once

#include <fstream>
#include <map>

#include "voxelseg/optim.hpp"

namespace voxelseg {

// Checkpoint container: model config echo, every named tensor (parameters and
// buffers), Adam moments, loop counters, best-metric record and RNG state.
// File layout: 8-byte magic, u32 version, u64 manifest length, manifest text,
// then raw little-endian float64 blobs at the recorded offsets.
struct Checkpoint {
    static constexpr char kMagic[9] = "VSEGCKPT";
    static constexpr std::uint32_t kVersion = 1;

    ModelConfig model_cfg;
    std::vector<std::pair<std::string, Tensor>> blobs;
    std::uint64_t iteration = 0;
    std::uint64_t adam_t = 0;
    double best_dice = -1.0;
    std::uint64_t best_iteration = 0;
    std::string rng_state;

    const Tensor* find(const std::string& name) const {
        for (const auto& [n, t] : blobs)
            if (n == name) return &t;
        return nullptr;
    }
};

inline Checkpoint make_checkpoint(const ModelGraph& model, const AdamState* adam, std::uint64_t iteration,
                                  double best_dice, std::uint64_t best_iteration, const std::string& rng_state) {
    Checkpoint c;
    c.model_cfg = model.cfg;
    c.iteration = iteration;
    c.best_dice = best_dice;
    c.best_iteration = best_iteration;
    c.rng_state = rng_state;
    for (const auto& p : model.params) c.blobs.push_back({p.name, p.tensor});
    if (adam) {
        c.adam_t = adam->t;
        std::size_t i = 0;
        for (const auto& p : model.params) {
            if (!p.trainable) continue;
            c.blobs.push_back({"adam.m." + p.name, adam->m[i]});
            c.blobs.push_back({"adam.v." + p.name, adam->v[i]});
            ++i;
        }
    }
    return c;
}

inline void save_checkpoint(const std::string& path, const Checkpoint& c) {
    std::ostringstream man;
    man << model_config_to_kv(c.model_cfg);
    man << "iteration=" << c.iteration << "\n";
    man << "adam_t=" << c.adam_t << "\n";
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", c.best_dice);
    man << "best_dice=" << buf << "\n";
    man << "best_iteration=" << c.best_iteration << "\n";
    man << "rng=" << c.rng_state << "\n";
    std::uint64_t offset = 0;
    for (const auto& [name, t] : c.blobs) {
        man << "blob " << name << " " << t.rank();
        for (std::size_t d : t.shape()) man << " " << d;
        man << " " << offset << " " << t.size() << "\n";
        offset += t.size() * sizeof(double);
    }
    const std::string manifest = man.str();

    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("checkpoint: cannot write '" + path + "'");
    f.write(Checkpoint::kMagic, 8);
    const std::uint32_t version = Checkpoint::kVersion;
    f.write(reinterpret_cast<const char*>(&version), 4);
    const std::uint64_t man_len = manifest.size();
    f.write(reinterpret_cast<const char*>(&man_len), 8);
    f.write(manifest.data(), static_cast<std::streamsize>(manifest.size()));
    for (const auto& [name, t] : c.blobs)
        f.write(reinterpret_cast<const char*>(t.data().data()), static_cast<std::streamsize>(t.size() * sizeof(double)));
    if (!f) throw IoError("checkpoint: write failed for '" + path + "'");
}

inline Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("checkpoint: cannot open '" + path + "'");
    char magic[8];
    if (!f.read(magic, 8) || std::memcmp(magic, Checkpoint::kMagic, 8) != 0)
        throw IoError("checkpoint: '" + path + "' is not a checkpoint file (bad magic)");
    std::uint32_t version = 0;
    if (!f.read(reinterpret_cast<char*>(&version), 4)) throw IoError("checkpoint: truncated header");
    if (version != Checkpoint::kVersion)
        throw IoError("checkpoint: format version " + std::to_string(version) + " is not supported (expected " +
                      std::to_string(Checkpoint::kVersion) + ")");
    std::uint64_t man_len = 0;
    if (!f.read(reinterpret_cast<char*>(&man_len), 8)) throw IoError("checkpoint: truncated header");
    std::string manifest(man_len, '\0');
    if (!f.read(manifest.data(), static_cast<std::streamsize>(man_len)))
        throw IoError("checkpoint: truncated manifest");

    Checkpoint c;
    struct BlobInfo {
        std::string name;
        Shape shape;
        std::uint64_t offset, count;
    };
    std::vector<BlobInfo> infos;
    std::istringstream ms(manifest);
    std::string line;
    while (std::getline(ms, line)) {
        if (line.empty()) continue;
        if (line.rfind("blob ", 0) == 0) {
            std::istringstream ls(line.substr(5));
            BlobInfo info;
            std::size_t rank = 0;
            ls >> info.name >> rank;
            info.shape.resize(rank);
            for (auto& d : info.shape) ls >> d;
            ls >> info.offset >> info.count;
            if (!ls) throw IoError("checkpoint: malformed blob record '" + line + "'");
            infos.push_back(std::move(info));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw IoError("checkpoint: malformed manifest line '" + line + "'");
        const std::string key = line.substr(0, eq), value = line.substr(eq + 1);
        if (key.rfind("model.", 0) == 0)
            model_config_apply_kv(c.model_cfg, key, value);
        else if (key == "iteration")
            c.iteration = std::stoull(value);
        else if (key == "adam_t")
            c.adam_t = std::stoull(value);
        else if (key == "best_dice")
            c.best_dice = std::stod(value);
        else if (key == "best_iteration")
            c.best_iteration = std::stoull(value);
        else if (key == "rng")
            c.rng_state = value;
        else
            throw IoError("checkpoint: unknown manifest key '" + key + "'");
    }

    const std::streamoff payload_start = 8 + 4 + 8 + static_cast<std::streamoff>(man_len);
    for (const auto& info : infos) {
        if (numel(info.shape) != info.count)
            throw IoError("checkpoint: blob '" + info.name + "' shape/count mismatch");
        Tensor t = Tensor::zeros(info.shape);
        f.seekg(payload_start + static_cast<std::streamoff>(info.offset));
        if (!f.read(reinterpret_cast<char*>(t.data().data()), static_cast<std::streamsize>(info.count * sizeof(double))))
            throw IoError("checkpoint: truncated data for blob '" + info.name + "'");
        c.blobs.push_back({info.name, t});
    }
    return c;
}

// Loads checkpoint values into an already-built model (and optimizer state).
// Every model tensor must be present with a matching shape; the error names
// the offending parameter.
inline void apply_checkpoint(const Checkpoint& c, ModelGraph& model, AdamState* adam = nullptr) {
    for (const auto& p : model.params) {
        const Tensor* src = c.find(p.name);
        if (!src) throw IoError("checkpoint: parameter '" + p.name + "' is missing from the checkpoint");
        if (src->shape() != p.tensor.shape())
            throw IoError("checkpoint: parameter '" + p.name + "' has shape " + shape_str(src->shape()) +
                          " but the model expects " + shape_str(p.tensor.shape()));
        p.tensor.data() = src->data();
    }
    if (adam) {
        std::vector<Tensor> trainable;
        for (const auto& p : model.params)
            if (p.trainable) trainable.push_back(p.tensor);
        *adam = AdamState::init(trainable);
        adam->t = c.adam_t;
        std::size_t i = 0;
        for (const auto& p : model.params) {
            if (!p.trainable) continue;
            const Tensor* m = c.find("adam.m." + p.name);
            const Tensor* v = c.find("adam.v." + p.name);
            if (!m || !v) throw IoError("checkpoint: optimizer state for '" + p.name + "' is missing");
            adam->m[i].data() = m->data();
            adam->v[i].data() = v->data();
            ++i;
        }
    }
}

}  // namespace voxelseg
