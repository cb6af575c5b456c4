#include "wain/image_io.hpp"

#include <stdexcept>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

namespace wain {

namespace {

cv::Mat to_mat_u8(const torch::Tensor& image) {
    if (!image.defined() || image.dim() != 3) {
        throw std::invalid_argument("write_png: expected a C×H×W tensor");
    }
    const auto c = image.size(0);
    if (c != 1 && c != 3) {
        throw std::invalid_argument("write_png: channel count must be 1 or 3");
    }
    // OpenCV stores colour pixels as BGR.
    const auto ordered = c == 3 ? image.flip(0) : image;
    auto hwc = (ordered.detach().to(torch::kFloat32).clamp(0.0, 1.0) * 255.0)
                   .round()
                   .to(torch::kUInt8)
                   .permute({1, 2, 0})
                   .contiguous();
    cv::Mat view(static_cast<int>(hwc.size(0)), static_cast<int>(hwc.size(1)),
                 c == 3 ? CV_8UC3 : CV_8UC1, hwc.data_ptr<uint8_t>());
    return view.clone();
}

}  // namespace

torch::Tensor read_image(const std::filesystem::path& path) {
    cv::Mat mat = cv::imread(path.string(), cv::IMREAD_COLOR);
    if (mat.empty()) {
        throw std::runtime_error("read_image: cannot decode " + path.string());
    }
    const int h = mat.rows;
    const int w = mat.cols;
    auto out = torch::empty({3, h, w}, torch::kFloat32);
    auto acc = out.accessor<float, 3>();
    for (int y = 0; y < h; ++y) {
        const auto* row = mat.ptr<cv::Vec3b>(y);
        for (int x = 0; x < w; ++x) {
            acc[0][y][x] = static_cast<float>(row[x][2]) / 255.0f;
            acc[1][y][x] = static_cast<float>(row[x][1]) / 255.0f;
            acc[2][y][x] = static_cast<float>(row[x][0]) / 255.0f;
        }
    }
    return out;
}

void write_png(const std::filesystem::path& path, const torch::Tensor& image) {
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    const cv::Mat mat = to_mat_u8(image);
    if (!cv::imwrite(path.string(), mat)) {
        throw std::runtime_error("write_png: cannot write " + path.string());
    }
}

torch::Tensor read_mask(const std::filesystem::path& path) {
    cv::Mat mat = cv::imread(path.string(), cv::IMREAD_GRAYSCALE);
    if (mat.empty()) {
        throw std::runtime_error("read_mask: cannot decode " + path.string());
    }
    auto out = torch::empty({1, mat.rows, mat.cols}, torch::kFloat32);
    auto acc = out.accessor<float, 3>();
    for (int y = 0; y < mat.rows; ++y) {
        const auto* row = mat.ptr<uint8_t>(y);
        for (int x = 0; x < mat.cols; ++x) {
            acc[0][y][x] = row[x] >= 128 ? 1.0f : 0.0f;
        }
    }
    return out;
}

void write_mask(const std::filesystem::path& path, const torch::Tensor& mask) {
    if (!mask.defined() || mask.dim() != 3 || mask.size(0) != 1) {
        throw std::invalid_argument("write_mask: expected a 1×H×W tensor");
    }
    write_png(path, (mask > 0.5).to(torch::kFloat32));
}

torch::Tensor quantize_u8(const torch::Tensor& image) {
    return (image.clamp(0.0, 1.0) * 255.0).round() / 255.0;
}

}  // namespace wain
