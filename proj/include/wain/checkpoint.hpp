#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>

#include <torch/torch.h>

namespace wain {

/// Single-file archive of named float32 arrays plus named text entries.
///
/// Layout (little-endian):
///   "wain-ckpt-1\n"
///   u32 text_count,   then per entry: u32 key_len, key, u64 value_len, value
///   u32 tensor_count, then per entry: u32 name_len, name, u32 ndim,
///                                     i64 dims[ndim], f32 data[prod(dims)]
class Checkpoint {
public:
    static constexpr std::string_view kVersion = "wain-ckpt-1";

    void put_tensor(const std::string& name, const torch::Tensor& tensor);
    void put_text(const std::string& key, std::string value);

    bool has_tensor(const std::string& name) const { return tensors_.count(name) != 0; }
    bool has_text(const std::string& key) const { return texts_.count(key) != 0; }
    const torch::Tensor& tensor(const std::string& name) const;
    const std::string& text(const std::string& key) const;

    const std::map<std::string, torch::Tensor>& tensors() const { return tensors_; }
    const std::map<std::string, std::string>& texts() const { return texts_; }

    /// Stores every parameter and buffer of `module` under "prefix.name".
    void put_module(const std::string& prefix, const torch::nn::Module& module);
    /// Copies stored values back into `module`; every parameter and buffer
    /// must be present with a matching shape.
    void load_module(const std::string& prefix, torch::nn::Module& module) const;

    /// Writes to a sibling temporary file and renames it into place, so an
    /// existing archive at `path` survives a failed write.
    void write(const std::filesystem::path& path) const;
    static Checkpoint read(const std::filesystem::path& path);

private:
    std::map<std::string, torch::Tensor> tensors_;
    std::map<std::string, std::string> texts_;
};

}  // namespace wain
