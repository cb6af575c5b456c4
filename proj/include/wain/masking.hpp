#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <torch/torch.h>

namespace wain {

/// H×W binary hole map, 1 = missing.
struct MaskMap {
    int64_t height = 0;
    int64_t width = 0;
    std::vector<uint8_t> data;

    MaskMap() = default;
    MaskMap(int64_t h, int64_t w) : height(h), width(w), data(static_cast<size_t>(h * w), 0) {}

    uint8_t& at(int64_t r, int64_t c) { return data[static_cast<size_t>(r * width + c)]; }
    uint8_t at(int64_t r, int64_t c) const { return data[static_cast<size_t>(r * width + c)]; }
    int64_t masked_count() const;

    /// 1×1×H×W float tensor.
    torch::Tensor to_tensor() const;
    /// Accepts H×W, 1×H×W or 1×1×H×W; values > 0.5 count as masked.
    static MaskMap from_tensor(const torch::Tensor& t);
};

/// Masked pixel count / total.
double mask_ratio(const MaskMap& mask);

enum class MaskKind { irregular, region, mixed };
std::string to_string(MaskKind kind);
MaskKind parse_mask_kind(const std::string& text);

/// Masked-fraction interval. Evaluation buckets are (lo, hi]; the training and
/// region ranges are closed at both ends.
struct RatioBucket {
    double low = 0.1;
    double high = 0.5;
    bool low_inclusive = false;
    std::string name = "any";

    bool contains(double fraction) const;
    /// Smallest / largest masked pixel count inside the bucket for n pixels.
    int64_t min_count(int64_t n) const;
    int64_t max_count(int64_t n) const;

    /// "10-20", "20-30", "30-40", "40-50" or "any" (= (10%, 50%]).
    static RatioBucket parse(const std::string& text);
    static RatioBucket training();  ///< [10%, 40%]
    static std::vector<RatioBucket> evaluation_buckets();
};

struct MaskSpec {
    MaskKind kind = MaskKind::irregular;
    RatioBucket bucket;
    uint64_t seed = 0;
};

/// Brush-stroke mask: up to 8 thick polylines of 4-12 vertices (widths 10-40 px
/// at 256 px, scaled with h) mixed with ellipses, grown segment by segment
/// toward a target fraction drawn inside the bucket. Retries up to 100 times;
/// throws std::runtime_error when the bucket is never reached.
MaskMap irregular_mask(int64_t h, int64_t w, const RatioBucket& bucket, std::mt19937_64& rng);
MaskMap irregular_mask(int64_t h, int64_t w, const MaskSpec& spec);

/// Object-like holes: 1 or 2 blobs, each a 4-connected region flooded from a
/// seed pixel along decreasing values of a smooth random field. The fraction
/// lies in bucket ∩ [10%, 40%]; throws std::invalid_argument if that is empty.
MaskMap region_mask(int64_t h, int64_t w, const RatioBucket& bucket, std::mt19937_64& rng);
MaskMap region_mask(int64_t h, int64_t w, const MaskSpec& spec);

/// Dispatches on spec.kind; `mixed` flips a fair coin, falling back to an
/// irregular mask when the bucket is out of reach for region masks.
MaskMap generate_mask(int64_t h, int64_t w, const MaskSpec& spec);

/// Fair coin between an irregular and a region mask, both in [10%, 40%].
/// The chosen kind is reported through `chosen` when given.
MaskMap sample_training_mask(int64_t h, int64_t w, std::mt19937_64& rng,
                             MaskKind* chosen = nullptr);

/// 4-connected component count of the masked pixels.
int count_components(const MaskMap& mask);

/// Single-channel PNG, 255 = masked.
void write_mask_png(const std::filesystem::path& path, const MaskMap& mask);
MaskMap read_mask_png(const std::filesystem::path& path);

/// FNV-1a over dimensions and bytes; used to log mask-set identity.
uint64_t mask_hash(const MaskMap& mask, uint64_t seed = 1469598103934665603ull);

}  // namespace wain
