#include "wain/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <fstream>
#include <stdexcept>

namespace wain {

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

namespace {

template <typename T>
void write_pod(std::ostream& out, T value) {
    out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in) {
    T value{};
    in.read(reinterpret_cast<char*>(&value), sizeof(T));
    if (!in) {
        throw std::runtime_error("checkpoint: unexpected end of file");
    }
    return value;
}

std::string read_bytes(std::istream& in, uint64_t n) {
    std::string s(n, '\0');
    in.read(s.data(), static_cast<std::streamsize>(n));
    if (!in) {
        throw std::runtime_error("checkpoint: unexpected end of file");
    }
    return s;
}

std::string joined(const std::string& prefix, const std::string& name) {
    return prefix.empty() ? name : prefix + "." + name;
}

}  // namespace

void Checkpoint::put_tensor(const std::string& name, const torch::Tensor& tensor) {
    tensors_[name] = tensor.detach().to(torch::kCPU).to(torch::kFloat32).contiguous().clone();
}

void Checkpoint::put_text(const std::string& key, std::string value) {
    texts_[key] = std::move(value);
}

const torch::Tensor& Checkpoint::tensor(const std::string& name) const {
    const auto it = tensors_.find(name);
    if (it == tensors_.end()) {
        throw std::out_of_range("checkpoint: missing tensor '" + name + "'");
    }
    return it->second;
}

const std::string& Checkpoint::text(const std::string& key) const {
    const auto it = texts_.find(key);
    if (it == texts_.end()) {
        throw std::out_of_range("checkpoint: missing entry '" + key + "'");
    }
    return it->second;
}

void Checkpoint::put_module(const std::string& prefix, const torch::nn::Module& module) {
    for (const auto& item : module.named_parameters(true)) {
        put_tensor(joined(prefix, item.key()), item.value());
    }
    for (const auto& item : module.named_buffers(true)) {
        put_tensor(joined(prefix, item.key()), item.value());
    }
}

void Checkpoint::load_module(const std::string& prefix, torch::nn::Module& module) const {
    torch::NoGradGuard no_grad;
    auto assign = [&](const std::string& name, torch::Tensor& target) {
        const auto& stored = tensor(joined(prefix, name));
        if (stored.sizes() != target.sizes()) {
            throw std::runtime_error("checkpoint: shape mismatch for '" + joined(prefix, name) +
                                     "'");
        }
        target.copy_(stored.to(target.scalar_type()));
    };
    for (auto& item : module.named_parameters(true)) {
        assign(item.key(), item.value());
    }
    for (auto& item : module.named_buffers(true)) {
        assign(item.key(), item.value());
    }
}

void Checkpoint::write(const std::filesystem::path& path) const {
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw std::runtime_error("checkpoint: cannot open " + tmp.string());
        }
        out << kVersion << '\n';
        write_pod<uint32_t>(out, static_cast<uint32_t>(texts_.size()));
        for (const auto& [key, value] : texts_) {
            write_pod<uint32_t>(out, static_cast<uint32_t>(key.size()));
            out.write(key.data(), static_cast<std::streamsize>(key.size()));
            write_pod<uint64_t>(out, value.size());
            out.write(value.data(), static_cast<std::streamsize>(value.size()));
        }
        write_pod<uint32_t>(out, static_cast<uint32_t>(tensors_.size()));
        for (const auto& [name, t] : tensors_) {
            write_pod<uint32_t>(out, static_cast<uint32_t>(name.size()));
            out.write(name.data(), static_cast<std::streamsize>(name.size()));
            write_pod<uint32_t>(out, static_cast<uint32_t>(t.dim()));
            for (const auto d : t.sizes()) {
                write_pod<int64_t>(out, d);
            }
            out.write(reinterpret_cast<const char*>(t.data_ptr<float>()),
                      static_cast<std::streamsize>(t.numel() * sizeof(float)));
        }
        if (!out) {
            throw std::runtime_error("checkpoint: write failed for " + tmp.string());
        }
    }
    std::filesystem::rename(tmp, path);
}

Checkpoint Checkpoint::read(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error("checkpoint: cannot open " + path.string());
    }
    std::string tag;
    std::getline(in, tag);
    if (tag != kVersion) {
        throw std::runtime_error("checkpoint: " + path.string() + " is not a " +
                                 std::string(kVersion) + " archive");
    }
    Checkpoint ckpt;
    const auto text_count = read_pod<uint32_t>(in);
    for (uint32_t i = 0; i < text_count; ++i) {
        auto key = read_bytes(in, read_pod<uint32_t>(in));
        ckpt.texts_[key] = read_bytes(in, read_pod<uint64_t>(in));
    }
    const auto tensor_count = read_pod<uint32_t>(in);
    for (uint32_t i = 0; i < tensor_count; ++i) {
        auto name = read_bytes(in, read_pod<uint32_t>(in));
        const auto ndim = read_pod<uint32_t>(in);
        std::vector<int64_t> dims(ndim);
        for (auto& d : dims) {
            d = read_pod<int64_t>(in);
        }
        auto t = torch::empty(dims, torch::kFloat32);
        in.read(reinterpret_cast<char*>(t.data_ptr<float>()),
                static_cast<std::streamsize>(t.numel() * sizeof(float)));
        if (!in) {
            throw std::runtime_error("checkpoint: truncated tensor '" + name + "'");
        }
        ckpt.tensors_[name] = t;
    }
    return ckpt;
}

}  // namespace wain
