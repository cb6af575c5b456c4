#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "wain/checkpoint.hpp"
#include "wain/dataset.hpp"
#include "wain/feature_extractor.hpp"
#include "wain/generator.hpp"
#include "wain/masking.hpp"
#include "wain/metrics.hpp"
#include "wain/trainer.hpp"

namespace wain {

/// One evaluation case, each tensor with a leading batch dimension of 1.
struct EvalSample {
    torch::Tensor masked;  ///< 1×3×h×w, holes zero
    torch::Tensor mask;    ///< 1×1×h×w, 1 = missing
    torch::Tensor target;  ///< 1×3×h×w ground truth
};

/// Returns a 1×3×h×w prediction; evaluate() composites it with the known
/// pixels before scoring.
using Inpainter = std::function<torch::Tensor(const EvalSample&)>;

/// Returns the ground truth itself.
Inpainter identity_inpainter();
/// Fills holes with the per-channel mean of the known pixels.
Inpainter mean_fill_inpainter();
/// Runs the generator in eval mode without gradients.
Inpainter generator_inpainter(Generator generator);

struct EvalOptions {
    std::vector<RatioBucket> buckets = RatioBucket::evaluation_buckets();
    MaskKind mask_kind = MaskKind::mixed;
    int64_t count = 64;
    uint64_t mask_seed = 2024;
    /// EMD sizes; empty = image_size / {1, 2, 4, 8}.
    std::vector<int64_t> emd_sizes;
};

/// Seed of the mask for sample `index` of bucket number `bucket`.
uint64_t eval_mask_seed(uint64_t base, size_t bucket, int64_t index);

/// Scores `inpaint` on the first `count` images of `dataset` for every bucket.
/// EMD at a size skips samples whose nearest-resized mask is empty there.
MetricReport evaluate(const Inpainter& inpaint, const ImageDataset& dataset,
                      const FeatureExtractor& extractor, const EvalOptions& options);

/// FNV-1a over every mask evaluate() would generate for these options.
uint64_t eval_mask_hash(const EvalOptions& options, int64_t image_size);

/// Generator rebuilt from a checkpoint's "generator_config" and weights.
Generator load_generator(const Checkpoint& checkpoint);

enum class AblationAxis { wpa, at_count, wpa_scales, attention_kind };
std::string to_string(AblationAxis axis);
AblationAxis parse_ablation_axis(const std::string& text);

struct AblationVariant {
    std::string name;
    TrainConfig config;
};

/// Variants of `base` along `axis`. `values` overrides the default list:
/// at_count takes "dc/at" pairs ("8/0,6/2,4/4,2/6"), wpa_scales takes
/// ';'-separated scale sets ("1,2,3,4;1-,2,3,4").
std::vector<AblationVariant> ablation_variants(const TrainConfig& base, AblationAxis axis,
                                               const std::string& values = "");

struct AblationRow {
    std::string variant;
    int64_t parameters = 0;
    double final_loss = 0.0;
    BucketMetrics metrics;
    uint64_t corpus_hash = 0;
    uint64_t mask_hash = 0;
};

struct AblationTable {
    AblationAxis axis = AblationAxis::wpa;
    std::vector<AblationRow> rows;
    std::string to_tsv() const;
};

struct AblationOptions {
    AblationOptions() {
        eval.buckets = {RatioBucket::parse("any")};
        eval.count = 32;
    }

    std::string values;
    std::filesystem::path out_dir;
    EvalOptions eval;
    /// Held-out corpus; defaults to synthetic:shapes with a seed disjoint from training.
    std::string eval_dataset;
    bool quiet = true;
};

/// Trains each variant from the same seed and corpus, evaluates it on a shared
/// held-out set and mask list, and returns one row per variant scored on the
/// first evaluation bucket.
AblationTable ablate(const TrainConfig& base, AblationAxis axis, const AblationOptions& options);

}  // namespace wain
