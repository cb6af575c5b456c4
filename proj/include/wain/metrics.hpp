#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <torch/torch.h>

namespace wain {

inline constexpr double kPsnrCap = 100.0;

/// 10·log10(1/MSE) over all elements, computed in double and capped at 100 dB.
double psnr(const torch::Tensor& a, const torch::Tensor& b);

/// PSNR restricted to masked pixels (mask broadcast over channels). Throws
/// std::invalid_argument when the mask is empty.
double psnr_masked(const torch::Tensor& a, const torch::Tensor& b, const torch::Tensor& mask);

/// Mean SSIM over valid 11×11 Gaussian (σ = 1.5) windows, channels and batch,
/// with C1 = 0.01², C2 = 0.03². Inputs C×H×W or N×C×H×W in [0,1].
double ssim(const torch::Tensor& a, const torch::Tensor& b);

/// ‖μa−μb‖² + Tr(Σa + Σb − 2(Σa Σb)^½) between two N×D feature sets (rows are
/// samples). The square root goes through the symmetric form Σa^½ Σb Σa^½ with
/// negative eigenvalues clamped to 0.
double frechet_distance(const torch::Tensor& feats_a, const torch::Tensor& feats_b);

/// Hexcone RGB → HSV for a 3×H×W (or 1×3×H×W) image; all channels in [0,1].
torch::Tensor rgb_to_hsv(const torch::Tensor& rgb);

inline constexpr int kHistogramBins = 64;

/// 1-D EMD between two normalised histograms over [0,1]: Σ|ΔCDF| · bin width.
double histogram_emd(const std::vector<double>& p, const std::vector<double>& q);

/// Normalised kHistogramBins-bin histogram of the values where `select` is set.
std::vector<double> masked_histogram(const std::vector<double>& values,
                                     const std::vector<uint8_t>& select);

/// Resizes pred/gt bilinearly (mask nearest) to size×size, converts to HSV and
/// averages the per-channel histogram EMD over masked pixels. Throws
/// std::invalid_argument if no masked pixel survives the resize.
double hsv_emd(const torch::Tensor& pred, const torch::Tensor& gt, const torch::Tensor& mask,
               int64_t size);

struct BucketMetrics {
    std::string bucket;
    int64_t samples = 0;
    double psnr = 0.0;
    double psnr_masked = 0.0;
    double ssim = 0.0;
    double fid = 0.0;
    std::vector<int64_t> emd_sizes;
    std::vector<double> emd;
    /// Samples whose resized mask was non-empty, per EMD size.
    std::vector<int64_t> emd_samples;
};

/// Metrics per ratio bucket. Rendered as a table with one row per metric and
/// one column per bucket, or as flat "bucket.metric=value" lines.
struct MetricReport {
    std::vector<BucketMetrics> buckets;

    std::string to_tsv() const;
    std::string to_kv() const;
    /// Writes `<stem>.tsv` and `<stem>.kv`.
    void write(const std::filesystem::path& stem) const;
};

}  // namespace wain
