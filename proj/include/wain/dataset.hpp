#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include <torch/torch.h>

namespace wain {

/// Indexed source of 3×S×S RGB images in [0,1].
class ImageDataset {
public:
    virtual ~ImageDataset() = default;
    virtual int64_t size() const = 0;
    virtual torch::Tensor get(int64_t index) const = 0;
    virtual int64_t image_size() const = 0;
    virtual std::string describe() const = 0;
    /// Files that failed to decode and were left out.
    virtual int64_t skipped() const { return 0; }
};

/// Procedural corpus: a linear colour gradient with 2-5 random rectangles and
/// ellipses on top. Image i depends only on (seed, i).
class SyntheticShapes final : public ImageDataset {
public:
    SyntheticShapes(int64_t count, int64_t image_size, uint64_t seed);
    int64_t size() const override { return count_; }
    torch::Tensor get(int64_t index) const override;
    int64_t image_size() const override { return image_size_; }
    std::string describe() const override;

private:
    int64_t count_;
    int64_t image_size_;
    uint64_t seed_;
};

/// PNG/JPEG files in a directory (non-recursive), centre-cropped to a square
/// and bilinearly resized on load. Order is the sorted file names shuffled
/// with `seed`.
class DirectoryDataset final : public ImageDataset {
public:
    DirectoryDataset(const std::filesystem::path& dir, int64_t image_size, uint64_t seed);
    int64_t size() const override { return static_cast<int64_t>(images_.size()); }
    torch::Tensor get(int64_t index) const override;
    int64_t image_size() const override { return image_size_; }
    std::string describe() const override;
    int64_t skipped() const override { return skipped_; }

private:
    std::filesystem::path dir_;
    int64_t image_size_;
    std::vector<torch::Tensor> images_;
    int64_t skipped_ = 0;
};

inline constexpr const char* kSyntheticShapes = "synthetic:shapes";

/// "synthetic:shapes" (with `synthetic_count` images) or a directory path.
/// Throws std::runtime_error for an empty or missing directory.
std::unique_ptr<ImageDataset> load_dataset(const std::string& path, int64_t image_size,
                                           uint64_t seed, int64_t synthetic_count = 10000);

/// Square centre crop (side = min(H, W)) followed by a bilinear resize.
torch::Tensor center_crop_resize(const torch::Tensor& image, int64_t size);

/// FNV-1a over the float bytes of the first `limit` images.
uint64_t corpus_hash(const ImageDataset& dataset, int64_t limit = 16);

}  // namespace wain
