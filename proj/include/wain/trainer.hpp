#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <random>
#include <stdexcept>
#include <string>

#include <torch/torch.h>

#include "wain/checkpoint.hpp"
#include "wain/config.hpp"
#include "wain/dataset.hpp"
#include "wain/discriminator.hpp"
#include "wain/feature_extractor.hpp"
#include "wain/generator.hpp"
#include "wain/losses.hpp"

namespace wain {

struct TrainConfig {
    int64_t batch_size = 8;
    int64_t total_steps = 2000;
    double g_lr = 2e-4;
    double d_lr = 2e-5;
    double adam_beta1 = 0.0;
    double adam_beta2 = 0.9;
    double decay_factor = 0.5;
    double decay_at_fraction = 0.8;
    uint64_t seed = 7;
    std::string dataset = kSyntheticShapes;
    int64_t synthetic_count = 10000;
    uint64_t extractor_seed = 1234;
    /// Optional pretrained extractor weights (wain checkpoint); empty = fixed random.
    std::string extractor_path;
    int64_t checkpoint_every = 500;
    int64_t sample_every = 0;
    LossWeights weights;
    GeneratorConfig generator;
    DiscriminatorConfig discriminator;

    int64_t image_size() const { return generator.image_size; }
    void validate() const;

    /// Learning-rate multiplier for 1-based `step`: decay_factor once
    /// step > decay_at_fraction·total_steps, 1 before.
    double lr_scale(int64_t step) const;

    /// Flat text with train./loss./disc./gen. prefixes.
    std::string serialize() const;
    static TrainConfig from_flat(const FlatConfig& flat);
    static TrainConfig parse(const std::string& text);
};

/// Raised when a loss turns NaN/Inf; the step is not applied.
class NonFiniteLoss : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct StepRecord {
    int64_t step = 0;
    LossReport report;
    double wall_seconds = 0.0;
    /// "step=N <losses> wall=S"; wall is printed as 0 in deterministic mode.
    std::string to_line() const;
};

/// Append-only per-step training log.
class RunLog {
public:
    RunLog() = default;
    /// Opens `path` for appending (truncating when `truncate` is set).
    explicit RunLog(const std::filesystem::path& path, bool truncate = true);

    /// Throws std::logic_error unless steps strictly increase.
    void append(const StepRecord& record);
    int64_t last_step() const { return last_step_; }

private:
    std::ofstream out_;
    int64_t last_step_ = 0;
};

/// One generator/discriminator pair with its optimisers, loss extractor and
/// batch sampler. Each step runs the generator once, updates D on the
/// detached composite, then updates G.
class Trainer {
public:
    explicit Trainer(const TrainConfig& config);

    /// Restores the complete training state written by snapshot().
    static std::unique_ptr<Trainer> resume(const Checkpoint& checkpoint);

    StepRecord step();
    int64_t completed_steps() const { return step_; }
    const TrainConfig& config() const { return config_; }

    double current_g_lr() const;
    double current_d_lr() const;

    Checkpoint snapshot() const;
    /// Atomic write of snapshot().
    void save(const std::filesystem::path& path) const;

    /// First `count` images and masks of the sampler's next batch without
    /// advancing it; used for sample grids.
    void write_sample_grid(const std::filesystem::path& path);

    Generator& generator() { return generator_; }
    Discriminator& discriminator() { return discriminator_; }
    const FeatureExtractor& extractor() const { return *extractor_; }
    torch::optim::Adam& g_optimizer() { return *g_opt_; }
    torch::optim::Adam& d_optimizer() { return *d_opt_; }

    struct Batch {
        torch::Tensor images;
        torch::Tensor masks;
    };
    Batch next_batch();

private:
    void apply_lr(int64_t step);

    TrainConfig config_;
    Generator generator_{nullptr};
    Discriminator discriminator_{nullptr};
    std::unique_ptr<FeatureExtractor> extractor_;
    std::unique_ptr<ImageDataset> dataset_;
    std::unique_ptr<torch::optim::Adam> g_opt_;
    std::unique_ptr<torch::optim::Adam> d_opt_;
    std::mt19937_64 rng_;
    int64_t step_ = 0;
};

/// Throws std::logic_error if any tensor is shared between the two sets.
void assert_disjoint_parameters(const std::vector<torch::Tensor>& a,
                                const std::vector<torch::Tensor>& b);

struct TrainRunOptions {
    std::filesystem::path out_dir;
    /// Stop after this step (0 = config total); lets a run be split for resume.
    int64_t stop_at = 0;
    bool quiet = false;
};

/// Trains to completion (or stop_at), writing `run.log`, periodic and final
/// `checkpoint.wain`, and optional sample grids under `out_dir`. On a
/// non-finite loss the last checkpoint on disk is kept and the error rethrown.
void run_training(Trainer& trainer, const TrainRunOptions& options, bool append_log = false);

}  // namespace wain
