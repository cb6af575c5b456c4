#include "wain/trainer.hpp"

#include <chrono>
#include <cmath>
#include <iostream>
#include <set>
#include <sstream>
#include <unordered_set>

#include "wain/haar_wavelet.hpp"
#include "wain/image_io.hpp"
#include "wain/masking.hpp"
#include "wain/runtime.hpp"

namespace wain {

namespace {

std::string num(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

const std::set<std::string>& known_keys() {
    static const std::set<std::string> keys = {
        "train.batch_size", "train.total_steps", "train.g_lr", "train.d_lr",
        "train.adam_beta1", "train.adam_beta2", "train.decay_factor",
        "train.decay_at_fraction", "train.seed", "train.dataset", "train.synthetic_count",
        "train.extractor_seed", "train.extractor_path", "train.checkpoint_every",
        "train.sample_every", "loss.adv", "loss.per", "loss.sty", "loss.iht",
        "disc.base_channels", "disc.stages", "gen.image_size", "gen.base_channels",
        "gen.dc_count", "gen.at_count", "gen.at_heads", "gen.ff_multiplier",
        "gen.pyramid_levels", "gen.wpa_scales", "gen.use_wpa", "gen.use_at", "gen.attention",
        "gen.temperature"};
    return keys;
}

bool finite(const torch::Tensor& t) { return std::isfinite(t.item<double>()); }

}  // namespace

void TrainConfig::validate() const {
    generator.validate();
    if (batch_size < 1) {
        throw std::invalid_argument("train: batch_size must be >= 1");
    }
    if (total_steps < 1) {
        throw std::invalid_argument("train: total_steps must be >= 1");
    }
    if (!(g_lr > 0) || !(d_lr > 0)) {
        throw std::invalid_argument("train: learning rates must be positive");
    }
    if (!(decay_factor > 0) || decay_at_fraction < 0 || decay_at_fraction > 1) {
        throw std::invalid_argument("train: bad decay schedule");
    }
    if (weights.adv < 0 || weights.per < 0 || weights.sty < 0 || weights.iht < 0) {
        throw std::invalid_argument("train: loss weights must be non-negative");
    }
}

double TrainConfig::lr_scale(int64_t step) const {
    const double boundary = decay_at_fraction * static_cast<double>(total_steps);
    return static_cast<double>(step) > boundary ? decay_factor : 1.0;
}

std::string TrainConfig::serialize() const {
    FlatConfig c;
    c.set("train.batch_size", std::to_string(batch_size));
    c.set("train.total_steps", std::to_string(total_steps));
    c.set("train.g_lr", num(g_lr));
    c.set("train.d_lr", num(d_lr));
    c.set("train.adam_beta1", num(adam_beta1));
    c.set("train.adam_beta2", num(adam_beta2));
    c.set("train.decay_factor", num(decay_factor));
    c.set("train.decay_at_fraction", num(decay_at_fraction));
    c.set("train.seed", std::to_string(seed));
    c.set("train.dataset", dataset);
    c.set("train.synthetic_count", std::to_string(synthetic_count));
    c.set("train.extractor_seed", std::to_string(extractor_seed));
    c.set("train.extractor_path", extractor_path);
    c.set("train.checkpoint_every", std::to_string(checkpoint_every));
    c.set("train.sample_every", std::to_string(sample_every));
    c.set("loss.adv", num(weights.adv));
    c.set("loss.per", num(weights.per));
    c.set("loss.sty", num(weights.sty));
    c.set("loss.iht", num(weights.iht));
    c.set("disc.base_channels", std::to_string(discriminator.base_channels));
    c.set("disc.stages", std::to_string(discriminator.stages));
    c.merge(FlatConfig::parse(generator.serialize()));
    return c.serialize();
}

TrainConfig TrainConfig::from_flat(const FlatConfig& c) {
    for (const auto& [k, v] : c.values()) {
        if (!known_keys().count(k)) {
            throw std::invalid_argument("config: unknown key '" + k + "'");
        }
    }
    TrainConfig t;
    t.batch_size = c.get_int("train.batch_size", t.batch_size);
    t.total_steps = c.get_int("train.total_steps", t.total_steps);
    t.g_lr = c.get_double("train.g_lr", t.g_lr);
    t.d_lr = c.get_double("train.d_lr", t.d_lr);
    t.adam_beta1 = c.get_double("train.adam_beta1", t.adam_beta1);
    t.adam_beta2 = c.get_double("train.adam_beta2", t.adam_beta2);
    t.decay_factor = c.get_double("train.decay_factor", t.decay_factor);
    t.decay_at_fraction = c.get_double("train.decay_at_fraction", t.decay_at_fraction);
    t.seed = static_cast<uint64_t>(c.get_int("train.seed", static_cast<long long>(t.seed)));
    t.dataset = c.get("train.dataset", t.dataset);
    t.synthetic_count = c.get_int("train.synthetic_count", t.synthetic_count);
    t.extractor_seed = static_cast<uint64_t>(
        c.get_int("train.extractor_seed", static_cast<long long>(t.extractor_seed)));
    t.extractor_path = c.get("train.extractor_path", t.extractor_path);
    t.checkpoint_every = c.get_int("train.checkpoint_every", t.checkpoint_every);
    t.sample_every = c.get_int("train.sample_every", t.sample_every);
    t.weights.adv = c.get_double("loss.adv", t.weights.adv);
    t.weights.per = c.get_double("loss.per", t.weights.per);
    t.weights.sty = c.get_double("loss.sty", t.weights.sty);
    t.weights.iht = c.get_double("loss.iht", t.weights.iht);
    t.discriminator.base_channels = c.get_int("disc.base_channels", t.discriminator.base_channels);
    t.discriminator.stages = static_cast<int>(c.get_int("disc.stages", t.discriminator.stages));
    t.generator = GeneratorConfig::parse(c.serialize());
    t.validate();
    return t;
}

TrainConfig TrainConfig::parse(const std::string& text) {
    return from_flat(FlatConfig::parse(text));
}

std::string StepRecord::to_line() const {
    std::string line = "step=" + std::to_string(step) + " " + report.to_line();
    char buf[64];
    std::snprintf(buf, sizeof buf, " wall=%.3f", deterministic_mode() ? 0.0 : wall_seconds);
    return line + buf;
}

RunLog::RunLog(const std::filesystem::path& path, bool truncate)
    : out_(path, truncate ? std::ios::trunc : std::ios::app) {
    if (!out_) {
        throw std::runtime_error("run log: cannot open " + path.string());
    }
}

void RunLog::append(const StepRecord& record) {
    if (record.step <= last_step_) {
        throw std::logic_error("run log: step " + std::to_string(record.step) +
                               " after " + std::to_string(last_step_));
    }
    last_step_ = record.step;
    if (out_.is_open()) {
        out_ << record.to_line() << '\n';
        out_.flush();
    }
}

void assert_disjoint_parameters(const std::vector<torch::Tensor>& a,
                                const std::vector<torch::Tensor>& b) {
    std::unordered_set<const void*> seen;
    for (const auto& t : a) {
        seen.insert(t.unsafeGetTensorImpl());
    }
    for (const auto& t : b) {
        if (seen.count(t.unsafeGetTensorImpl())) {
            throw std::logic_error("generator and discriminator share a parameter tensor");
        }
    }
}

Trainer::Trainer(const TrainConfig& config) : config_(config) {
    config_.validate();
    torch::manual_seed(config_.seed);
    generator_ = Generator(config_.generator);
    discriminator_ = Discriminator(config_.discriminator);
    if (config_.extractor_path.empty()) {
        extractor_ = std::make_unique<ConvPyramidExtractor>(config_.extractor_seed);
    } else {
        extractor_ = ConvPyramidExtractor::load(config_.extractor_path);
    }
    dataset_ = load_dataset(config_.dataset, config_.image_size(), config_.seed,
                            config_.synthetic_count);
    assert_disjoint_parameters(generator_->parameters(), discriminator_->parameters());
    g_opt_ = std::make_unique<torch::optim::Adam>(
        generator_->parameters(),
        torch::optim::AdamOptions(config_.g_lr).betas({config_.adam_beta1, config_.adam_beta2}));
    d_opt_ = std::make_unique<torch::optim::Adam>(
        discriminator_->parameters(),
        torch::optim::AdamOptions(config_.d_lr).betas({config_.adam_beta1, config_.adam_beta2}));
    rng_.seed(config_.seed ^ 0x5eed5eed5eedull);
}

void Trainer::apply_lr(int64_t step) {
    const double s = config_.lr_scale(step);
    for (auto& g : g_opt_->param_groups()) {
        static_cast<torch::optim::AdamOptions&>(g.options()).lr(config_.g_lr * s);
    }
    for (auto& g : d_opt_->param_groups()) {
        static_cast<torch::optim::AdamOptions&>(g.options()).lr(config_.d_lr * s);
    }
}

double Trainer::current_g_lr() const {
    return static_cast<const torch::optim::AdamOptions&>(g_opt_->param_groups().front().options())
        .lr();
}

double Trainer::current_d_lr() const {
    return static_cast<const torch::optim::AdamOptions&>(d_opt_->param_groups().front().options())
        .lr();
}

Trainer::Batch Trainer::next_batch() {
    const int64_t h = config_.image_size();
    std::vector<torch::Tensor> images;
    std::vector<torch::Tensor> masks;
    std::uniform_int_distribution<int64_t> pick(0, dataset_->size() - 1);
    for (int64_t b = 0; b < config_.batch_size; ++b) {
        images.push_back(dataset_->get(pick(rng_)));
        masks.push_back(sample_training_mask(h, h, rng_).to_tensor()[0]);
    }
    return {torch::stack(images), torch::stack(masks)};
}

StepRecord Trainer::step() {
    const int64_t s = step_ + 1;
    apply_lr(s);
    const auto t0 = std::chrono::steady_clock::now();
    const auto batch = next_batch();

    generator_->train();
    discriminator_->train();
    auto out = generator_->forward(batch.images, batch.masks);

    d_opt_->zero_grad();
    const auto real = discriminator_->forward(batch.images);
    const auto fake = discriminator_->forward(out.composited.detach());
    const auto d_loss = discriminator_loss(real, fake);
    if (!finite(d_loss)) {
        throw NonFiniteLoss("non-finite discriminator loss at step " + std::to_string(s));
    }
    d_loss.backward();
    d_opt_->step();

    g_opt_->zero_grad();
    discriminator_->eval();
    const auto fake_for_g = discriminator_->forward(out.composited);
    discriminator_->train();

    LossParts parts;
    parts.adv = generator_adversarial_loss(fake_for_g);
    parts.l1 = balanced_l1(out.raw, batch.images, batch.masks);
    parts.per = perceptual_loss(out.raw, batch.images, batch.masks, *extractor_);
    parts.sty = style_loss(out.raw, batch.images, *extractor_);
    const auto& gc = config_.generator;
    if (gc.use_wpa) {
        WaveletPyramid clean;
        torch::Tensor clean_base;
        {
            torch::NoGradGuard guard;
            PyramidOptions po;
            po.levels = gc.pyramid_levels;
            po.filter_finest = gc.filter_finest;
            clean = build_pyramid(batch.images, std::nullopt, po);
            clean_base = pyramid_base(batch.images);
        }
        parts.wav = wavelet_loss(*out.aggregated, clean, batch.masks, gc.wpa_scales);
        parts.iht = iht_chain_loss(*out.aggregated, clean, clean_base, out.raw, batch.masks,
                                   gc.wpa_scales);
    }
    auto loss = total_generator_loss(parts, config_.weights);
    if (!finite(loss.total)) {
        throw NonFiniteLoss("non-finite generator loss at step " + std::to_string(s));
    }
    loss.total.backward();
    g_opt_->step();

    step_ = s;
    StepRecord rec;
    rec.step = s;
    rec.report = loss.report;
    rec.report.d_loss = d_loss.item<double>();
    rec.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return rec;
}

namespace {

void put_adam_state(Checkpoint& ckpt, const std::string& prefix, torch::optim::Adam& opt,
                    const torch::nn::Module& module) {
    auto& state = opt.state();
    for (const auto& item : module.named_parameters()) {
        const auto it = state.find(item.value().unsafeGetTensorImpl());
        if (it == state.end()) {
            continue;
        }
        const auto& st = static_cast<const torch::optim::AdamParamState&>(*it->second);
        const auto key = prefix + "." + item.key();
        ckpt.put_tensor(key + ".exp_avg", st.exp_avg());
        ckpt.put_tensor(key + ".exp_avg_sq", st.exp_avg_sq());
        ckpt.put_text(key + ".step", std::to_string(st.step()));
    }
}

void load_adam_state(const Checkpoint& ckpt, const std::string& prefix,
                     torch::optim::Adam& opt, const torch::nn::Module& module) {
    auto& state = opt.state();
    for (const auto& item : module.named_parameters()) {
        const auto key = prefix + "." + item.key();
        if (!ckpt.has_text(key + ".step")) {
            continue;
        }
        auto st = std::make_unique<torch::optim::AdamParamState>();
        st->step(std::stoll(ckpt.text(key + ".step")));
        st->exp_avg(ckpt.tensor(key + ".exp_avg").to(item.value().dtype()).clone());
        st->exp_avg_sq(ckpt.tensor(key + ".exp_avg_sq").to(item.value().dtype()).clone());
        state[item.value().unsafeGetTensorImpl()] = std::move(st);
    }
}

}  // namespace

Checkpoint Trainer::snapshot() const {
    Checkpoint ckpt;
    ckpt.put_text("config", config_.serialize());
    ckpt.put_text("generator_config", config_.generator.serialize());
    ckpt.put_text("step", std::to_string(step_));
    std::ostringstream rng_text;
    rng_text << rng_;
    ckpt.put_text("rng", rng_text.str());
    ckpt.put_module("generator", *generator_);
    ckpt.put_module("discriminator", *discriminator_);
    put_adam_state(ckpt, "optim.g", *g_opt_, *generator_);
    put_adam_state(ckpt, "optim.d", *d_opt_, *discriminator_);
    return ckpt;
}

void Trainer::save(const std::filesystem::path& path) const { snapshot().write(path); }

std::unique_ptr<Trainer> Trainer::resume(const Checkpoint& ckpt) {
    if (!ckpt.has_text("config") || !ckpt.has_text("rng") || !ckpt.has_text("step")) {
        throw std::runtime_error("resume: checkpoint lacks training state");
    }
    auto t = std::make_unique<Trainer>(TrainConfig::parse(ckpt.text("config")));
    ckpt.load_module("generator", *t->generator_);
    ckpt.load_module("discriminator", *t->discriminator_);
    load_adam_state(ckpt, "optim.g", *t->g_opt_, *t->generator_);
    load_adam_state(ckpt, "optim.d", *t->d_opt_, *t->discriminator_);
    std::istringstream rng_text(ckpt.text("rng"));
    rng_text >> t->rng_;
    if (!rng_text) {
        throw std::runtime_error("resume: corrupt rng state");
    }
    t->step_ = std::stoll(ckpt.text("step"));
    return t;
}

void Trainer::write_sample_grid(const std::filesystem::path& path) {
    const auto saved = rng_;
    const auto batch = next_batch();
    rng_ = saved;
    torch::NoGradGuard guard;
    const bool was_training = generator_->is_training();
    generator_->eval();
    const auto out = generator_->forward(batch.images, batch.masks);
    generator_->train(was_training);
    const int64_t rows = std::min<int64_t>(4, batch.images.size(0));
    std::vector<torch::Tensor> lines;
    for (int64_t i = 0; i < rows; ++i) {
        const auto m = batch.masks[i];
        const auto shown = batch.images[i] * (1 - m) + m * 0.5;
        lines.push_back(torch::cat({shown, out.raw[i], out.composited[i], batch.images[i]}, 2));
    }
    write_png(path, torch::cat(lines, 1));
}

void run_training(Trainer& trainer, const TrainRunOptions& options, bool append_log) {
    std::filesystem::create_directories(options.out_dir);
    RunLog log(options.out_dir / "run.log", !append_log);
    const auto ckpt_path = options.out_dir / "checkpoint.wain";
    const auto& cfg = trainer.config();
    const int64_t stop = options.stop_at > 0 ? std::min(options.stop_at, cfg.total_steps)
                                             : cfg.total_steps;
    if (!std::filesystem::exists(ckpt_path)) {
        trainer.save(ckpt_path);
    }
    while (trainer.completed_steps() < stop) {
        StepRecord rec;
        try {
            rec = trainer.step();
        } catch (const NonFiniteLoss& e) {
            std::cerr << e.what() << "; keeping " << ckpt_path.string() << "\n";
            throw;
        }
        log.append(rec);
        if (!options.quiet && (rec.step == 1 || rec.step % 100 == 0 || rec.step == stop)) {
            std::cout << rec.to_line() << std::endl;
        }
        if (cfg.checkpoint_every > 0 && rec.step % cfg.checkpoint_every == 0) {
            trainer.save(ckpt_path);
        }
        if (cfg.sample_every > 0 && rec.step % cfg.sample_every == 0) {
            std::filesystem::create_directories(options.out_dir / "samples");
            char name[64];
            std::snprintf(name, sizeof name, "step_%06lld.png",
                          static_cast<long long>(rec.step));
            trainer.write_sample_grid(options.out_dir / "samples" / name);
        }
    }
    trainer.save(ckpt_path);
}

}  // namespace wain
