#include "wain/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <random>
#include <stdexcept>

#include "wain/image_io.hpp"
#include "wain/resize.hpp"

namespace wain {

namespace {

uint64_t mix_seed(uint64_t seed, uint64_t index) {
    // splitmix64 step so neighbouring indices get unrelated streams
    uint64_t z = seed + 0x9e3779b97f4a7c15ull * (index + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    return s;
}

}  // namespace

SyntheticShapes::SyntheticShapes(int64_t count, int64_t image_size, uint64_t seed)
    : count_(count), image_size_(image_size), seed_(seed) {
    if (count_ < 1 || image_size_ < 1) {
        throw std::invalid_argument("synthetic:shapes needs positive count and size");
    }
}

torch::Tensor SyntheticShapes::get(int64_t index) const {
    if (index < 0 || index >= count_) {
        throw std::out_of_range("synthetic:shapes index out of range");
    }
    std::mt19937_64 rng(mix_seed(seed_, static_cast<uint64_t>(index)));
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const int64_t s = image_size_;
    auto img = torch::empty({3, s, s}, torch::kFloat32);
    auto a = img.accessor<float, 3>();

    double c0[3];
    double c1[3];
    for (int ch = 0; ch < 3; ++ch) {
        c0[ch] = u(rng);
        c1[ch] = u(rng);
    }
    const double angle = u(rng) * 2 * 3.14159265358979323846;
    const double dx = std::cos(angle);
    const double dy = std::sin(angle);
    for (int64_t r = 0; r < s; ++r) {
        for (int64_t c = 0; c < s; ++c) {
            const double x = (c + 0.5) / s - 0.5;
            const double y = (r + 0.5) / s - 0.5;
            const double t = std::clamp(0.5 + (x * dx + y * dy), 0.0, 1.0);
            for (int ch = 0; ch < 3; ++ch) {
                a[ch][r][c] = static_cast<float>(c0[ch] * (1 - t) + c1[ch] * t);
            }
        }
    }

    const int shapes = 2 + static_cast<int>(rng() % 4);
    for (int k = 0; k < shapes; ++k) {
        const bool ellipse = u(rng) < 0.5;
        double color[3];
        for (auto& v : color) {
            v = u(rng);
        }
        const double cx = u(rng) * s;
        const double cy = u(rng) * s;
        const double hw = (0.08 + 0.22 * u(rng)) * s;
        const double hh = (0.08 + 0.22 * u(rng)) * s;
        const auto r0 = std::max<int64_t>(0, static_cast<int64_t>(cy - hh));
        const auto r1 = std::min<int64_t>(s - 1, static_cast<int64_t>(cy + hh));
        const auto col0 = std::max<int64_t>(0, static_cast<int64_t>(cx - hw));
        const auto col1 = std::min<int64_t>(s - 1, static_cast<int64_t>(cx + hw));
        for (int64_t r = r0; r <= r1; ++r) {
            for (int64_t c = col0; c <= col1; ++c) {
                if (ellipse) {
                    const double ex = (c + 0.5 - cx) / hw;
                    const double ey = (r + 0.5 - cy) / hh;
                    if (ex * ex + ey * ey > 1.0) {
                        continue;
                    }
                }
                for (int ch = 0; ch < 3; ++ch) {
                    a[ch][r][c] = static_cast<float>(color[ch]);
                }
            }
        }
    }
    return img;
}

std::string SyntheticShapes::describe() const {
    return std::string(kSyntheticShapes) + " n=" + std::to_string(count_) +
           " size=" + std::to_string(image_size_) + " seed=" + std::to_string(seed_);
}

DirectoryDataset::DirectoryDataset(const std::filesystem::path& dir, int64_t image_size,
                                   uint64_t seed)
    : dir_(dir), image_size_(image_size) {
    if (!std::filesystem::is_directory(dir)) {
        throw std::runtime_error("dataset: not a directory: " + dir.string());
    }
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        if (!entry.is_regular_file()) {
            continue;
        }
        const auto ext = lower(entry.path().extension().string());
        if (ext == ".png" || ext == ".jpg" || ext == ".jpeg") {
            files.push_back(entry.path());
        }
    }
    std::sort(files.begin(), files.end());
    std::mt19937_64 rng(seed);
    std::shuffle(files.begin(), files.end(), rng);
    for (const auto& f : files) {
        try {
            images_.push_back(center_crop_resize(read_image(f), image_size_));
        } catch (const std::exception&) {
            ++skipped_;
        }
    }
    if (skipped_ > 0) {
        std::cerr << "dataset: skipped " << skipped_ << " undecodable file(s) in " << dir.string()
                  << "\n";
    }
    if (images_.empty()) {
        throw std::runtime_error("dataset: no decodable images in " + dir.string());
    }
}

torch::Tensor DirectoryDataset::get(int64_t index) const {
    if (index < 0 || index >= size()) {
        throw std::out_of_range("dataset index out of range");
    }
    return images_[static_cast<size_t>(index)];
}

std::string DirectoryDataset::describe() const {
    return "dir:" + dir_.string() + " n=" + std::to_string(images_.size()) +
           " size=" + std::to_string(image_size_);
}

std::unique_ptr<ImageDataset> load_dataset(const std::string& path, int64_t image_size,
                                           uint64_t seed, int64_t synthetic_count) {
    if (path == kSyntheticShapes) {
        return std::make_unique<SyntheticShapes>(synthetic_count, image_size, seed);
    }
    return std::make_unique<DirectoryDataset>(path, image_size, seed);
}

torch::Tensor center_crop_resize(const torch::Tensor& image, int64_t size) {
    if (image.dim() != 3) {
        throw std::invalid_argument("center_crop_resize: expected C×H×W");
    }
    const int64_t h = image.size(1);
    const int64_t w = image.size(2);
    const int64_t side = std::min(h, w);
    const auto crop =
        image.narrow(1, (h - side) / 2, side).narrow(2, (w - side) / 2, side).unsqueeze(0);
    return resize_bilinear(crop, size, size).squeeze(0).clamp(0, 1).contiguous();
}

uint64_t corpus_hash(const ImageDataset& dataset, int64_t limit) {
    uint64_t h = 1469598103934665603ull;
    const auto n = std::min(limit, dataset.size());
    for (int64_t i = 0; i < n; ++i) {
        const auto img = dataset.get(i).to(torch::kFloat32).contiguous();
        const auto* bytes = static_cast<const unsigned char*>(img.data_ptr());
        const auto count = static_cast<size_t>(img.numel()) * sizeof(float);
        for (size_t k = 0; k < count; ++k) {
            h ^= bytes[k];
            h *= 1099511628211ull;
        }
    }
    return h;
}

}  // namespace wain
