#pragma once

#include <filesystem>
#include <map>
#include <string>

namespace wain {

/// Flat key=value configuration with dotted section prefixes
/// ("train.steps=2000"). '#' starts a comment; blank lines are ignored.
class FlatConfig {
public:
    static FlatConfig parse(const std::string& text);
    static FlatConfig load(const std::filesystem::path& path);

    void set(const std::string& key, const std::string& value) { values_[key] = value; }
    /// Applies a "key=value" assignment; throws std::invalid_argument without '='.
    void assign(const std::string& assignment);
    /// Later values win.
    void merge(const FlatConfig& other);

    bool has(const std::string& key) const { return values_.count(key) != 0; }
    std::string get(const std::string& key, const std::string& fallback) const;
    long long get_int(const std::string& key, long long fallback) const;
    double get_double(const std::string& key, double fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;

    /// Sorted "key=value" lines.
    std::string serialize() const;
    const std::map<std::string, std::string>& values() const { return values_; }

private:
    std::map<std::string, std::string> values_;
};

}  // namespace wain
