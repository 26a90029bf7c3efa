#include "dtn/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "dtn/errors.hpp"

namespace dtn::ckpt {
namespace {

constexpr char kMagic[8] = {'D', 'T', 'N', 'W', '0', '0', '0', '1'};

template <typename T>
void put(std::ostream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
    T v;
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw CorruptionError("checkpoint: truncated file");
    return v;
}

}  // namespace

void save_tensors(const std::filesystem::path& file,
                  const std::vector<nn::TensorRef<float>>& tensors) {
    std::ofstream out(file, std::ios::binary);
    if (!out) throw std::runtime_error("checkpoint: cannot write " + file.string());
    out.write(kMagic, sizeof(kMagic));
    put<uint64_t>(out, tensors.size());
    for (const auto& t : tensors) {
        put<uint32_t>(out, static_cast<uint32_t>(t.name.size()));
        out.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
        put<uint64_t>(out, static_cast<uint64_t>(t.value->rows()));
        put<uint64_t>(out, static_cast<uint64_t>(t.value->cols()));
        out.write(reinterpret_cast<const char*>(t.value->data()),
                  static_cast<std::streamsize>(sizeof(float) * t.value->size()));
    }
    if (!out) throw std::runtime_error("checkpoint: write failed for " + file.string());
}

void load_tensors(const std::filesystem::path& file, std::vector<nn::TensorRef<float>> tensors) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw CorruptionError("checkpoint: cannot read " + file.string());
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, kMagic, 8) != 0)
        throw CorruptionError("checkpoint: bad magic in " + file.string());
    std::map<std::string, nn::TensorRef<float>*> by_name;
    for (auto& t : tensors) by_name[t.name] = &t;
    const uint64_t count = get<uint64_t>(in);
    size_t matched = 0;
    for (uint64_t i = 0; i < count; ++i) {
        const uint32_t nlen = get<uint32_t>(in);
        std::string name(nlen, '\0');
        in.read(name.data(), nlen);
        const auto rows = static_cast<Eigen::Index>(get<uint64_t>(in));
        const auto cols = static_cast<Eigen::Index>(get<uint64_t>(in));
        auto it = by_name.find(name);
        if (it == by_name.end())
            throw CorruptionError("checkpoint: unexpected tensor " + name);
        auto* dst = it->second->value;
        if (dst->rows() != rows || dst->cols() != cols)
            throw CorruptionError("checkpoint: shape mismatch for " + name);
        in.read(reinterpret_cast<char*>(dst->data()),
                static_cast<std::streamsize>(sizeof(float) * rows * cols));
        if (!in) throw CorruptionError("checkpoint: truncated tensor " + name);
        ++matched;
    }
    if (matched != tensors.size())
        throw CorruptionError("checkpoint: missing tensors in " + file.string());
}

void save_manifest(const std::filesystem::path& file, const CheckpointManifest& m) {
    std::ofstream out(file);
    out << "architecture=" << m.architecture << "\n"
        << "step=" << m.step << "\n"
        << "seed=" << m.seed << "\n"
        << "config_hash=" << m.config_hash << "\n";
}

CheckpointManifest load_manifest(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) throw CorruptionError("checkpoint: cannot read manifest " + file.string());
    CheckpointManifest m;
    std::string line;
    while (std::getline(in, line)) {
        const auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        const std::string k = line.substr(0, eq), v = line.substr(eq + 1);
        if (k == "architecture") m.architecture = v;
        else if (k == "step") m.step = std::stoll(v);
        else if (k == "seed") m.seed = std::stoull(v);
        else if (k == "config_hash") m.config_hash = v;
    }
    return m;
}

}  // namespace dtn::ckpt
