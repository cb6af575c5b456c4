#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <sstream>

#include "wain/checkpoint.hpp"
#include "wain/config.hpp"
#include "wain/dataset.hpp"
#include "wain/evaluation.hpp"
#include "wain/generator.hpp"
#include "wain/haar_wavelet.hpp"
#include "wain/image_io.hpp"
#include "wain/masking.hpp"
#include "wain/metrics.hpp"
#include "wain/resize.hpp"
#include "wain/runtime.hpp"
#include "wain/trainer.hpp"

namespace {

using namespace wain;

// Flags shared by train and ablate; each maps onto one config key.
struct TrainFlags {
    std::string config_path;
    std::vector<std::string> sets;
    std::optional<int64_t> steps, batch, image_size, base_channels, dc, at;
    std::optional<uint64_t> seed;
    std::optional<std::string> data;
    std::optional<bool> use_wpa, use_at;

    void attach(CLI::App* app) {
        app->add_option("-c,--config", config_path, "key=value config file");
        app->add_option("--set", sets, "override, key=value (repeatable)");
        app->add_option("--steps", steps, "train.total_steps");
        app->add_option("--batch", batch, "train.batch_size");
        app->add_option("--seed", seed, "train.seed");
        app->add_option("--data", data, "train.dataset (directory or synthetic:shapes)");
        app->add_option("--image-size", image_size, "gen.image_size");
        app->add_option("--base-channels", base_channels, "gen.base_channels");
        app->add_option("--dc", dc, "gen.dc_count");
        app->add_option("--at", at, "gen.at_count");
        app->add_option("--wpa", use_wpa, "gen.use_wpa (0/1)");
        app->add_option("--use-at", use_at, "gen.use_at (0/1)");
    }

    TrainConfig resolve() const {
        FlatConfig flat;
        if (!config_path.empty()) {
            flat = FlatConfig::load(config_path);
        }
        for (const auto& s : sets) {
            flat.assign(s);
        }
        auto put = [&flat](const char* key, const auto& value) {
            if (value) {
                std::ostringstream os;
                os << *value;
                flat.set(key, os.str());
            }
        };
        put("train.total_steps", steps);
        put("train.batch_size", batch);
        put("train.seed", seed);
        put("train.dataset", data);
        put("gen.image_size", image_size);
        put("gen.base_channels", base_channels);
        put("gen.dc_count", dc);
        put("gen.at_count", at);
        put("gen.use_wpa", use_wpa);
        put("gen.use_at", use_at);
        return TrainConfig::from_flat(flat);
    }
};

std::pair<int64_t, int64_t> parse_query(const std::string& text) {
    const auto comma = text.find(',');
    if (comma == std::string::npos) {
        throw CLI::ValidationError("--heatmap", "expected row,col");
    }
    return {std::stoll(text.substr(0, comma)), std::stoll(text.substr(comma + 1))};
}

std::vector<RatioBucket> parse_buckets(const std::string& text) {
    std::vector<RatioBucket> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        out.push_back(RatioBucket::parse(item));
    }
    return out;
}

int cmd_train(const TrainFlags& flags, const std::string& out_dir, const std::string& resume,
              int64_t stop_at) {
    std::unique_ptr<Trainer> trainer;
    if (!resume.empty()) {
        trainer = Trainer::resume(Checkpoint::read(resume));
        std::cout << "resumed at step " << trainer->completed_steps() << "\n";
    } else {
        trainer = std::make_unique<Trainer>(flags.resolve());
    }
    std::cout << "generator parameters: " << trainer->generator()->parameter_count() << "\n";
    TrainRunOptions opts;
    opts.out_dir = out_dir;
    opts.stop_at = stop_at;
    run_training(*trainer, opts, !resume.empty());
    return 0;
}

int cmd_infer(const std::string& ckpt_path, const std::string& image_path,
              const std::string& mask_path, const std::string& out_path,
              const std::string& heatmap, std::string heatmap_out, const std::string& relation_out) {
    const auto ckpt = Checkpoint::read(ckpt_path);
    auto generator = load_generator(ckpt);
    const int64_t h = generator->config().image_size;
    const auto image = read_image(image_path);
    const auto mask = read_mask(mask_path);
    if (image.size(1) != mask.size(1) || image.size(2) != mask.size(2)) {
        throw std::invalid_argument("infer: mask is " + std::to_string(mask.size(2)) + "x" +
                                    std::to_string(mask.size(1)) + " but image is " +
                                    std::to_string(image.size(2)) + "x" +
                                    std::to_string(image.size(1)));
    }
    torch::Tensor x = image.unsqueeze(0);
    torch::Tensor m = mask.unsqueeze(0);
    if (image.size(1) != h || image.size(2) != h) {
        x = center_crop_resize(image, h).unsqueeze(0);
        const int64_t side = std::min(mask.size(1), mask.size(2));
        const auto crop = mask.narrow(1, (mask.size(1) - side) / 2, side)
                              .narrow(2, (mask.size(2) - side) / 2, side)
                              .unsqueeze(0);
        m = resize_nearest(crop, h, h);
    }
    torch::NoGradGuard guard;
    const auto out = generator->forward(x * (1 - m), m);
    const auto result = composite(out.raw, x, m);
    write_png(out_path, result[0]);
    if (!heatmap.empty()) {
        const auto [row, col] = parse_query(heatmap);
        if (heatmap_out.empty()) {
            auto p = std::filesystem::path(out_path);
            heatmap_out = (p.parent_path() / (p.stem().string() + "_heatmap.png")).string();
        }
        write_png(heatmap_out, extract_attention_heatmap(out.relation, 0, row, col, h, h)[0]);
    }
    if (!relation_out.empty()) {
        write_relation(relation_out, out.relation);
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    configure_runtime();
    CLI::App app{"wain: wavelet-prior inpainting (train / infer / eval / ablate / tools)"};
    app.require_subcommand(1);

    TrainFlags train_flags;
    std::string train_out, resume;
    int64_t stop_at = 0;
    auto* train = app.add_subcommand("train", "train a generator/discriminator pair");
    train_flags.attach(train);
    train->add_option("-o,--out", train_out, "output directory")->required();
    train->add_option("--resume", resume, "continue from a training checkpoint");
    train->add_option("--stop-at", stop_at, "stop after this step");

    std::string ckpt, image, mask_path, infer_out, heatmap, heatmap_out, relation_out;
    auto* infer = app.add_subcommand("infer", "inpaint one image");
    infer->add_option("--checkpoint", ckpt)->required();
    infer->add_option("--image", image)->required();
    infer->add_option("--mask", mask_path, "PNG, 255 = missing")->required();
    infer->add_option("-o,--out", infer_out)->required();
    infer->add_option("--heatmap", heatmap, "query patch as row,col");
    infer->add_option("--heatmap-out", heatmap_out);
    infer->add_option("--relation-out", relation_out, "binary relation dump");

    std::string eval_ckpt, eval_data = kSyntheticShapes, eval_out, buckets = "10-20,20-30,30-40,40-50";
    std::string eval_kind = "mixed", eval_stub;
    int64_t eval_count = 64, eval_size = 64;
    uint64_t eval_seed = 2024, data_seed = 1000010;
    auto* eval = app.add_subcommand("eval", "bucketed PSNR/SSIM/FID/EMD report");
    eval->add_option("--checkpoint", eval_ckpt);
    eval->add_option("--stub", eval_stub, "identity | mean-fill instead of a checkpoint");
    eval->add_option("--data", eval_data);
    eval->add_option("--data-seed", data_seed);
    eval->add_option("--image-size", eval_size, "used with --stub");
    eval->add_option("--count", eval_count);
    eval->add_option("--buckets", buckets);
    eval->add_option("--mask-kind", eval_kind);
    eval->add_option("--mask-seed", eval_seed);
    eval->add_option("-o,--out", eval_out, "writes <out>.tsv and <out>.kv")->required();

    TrainFlags ablate_flags;
    std::string axis, values, ablate_out;
    int64_t ablate_eval = 32;
    auto* ablate_cmd = app.add_subcommand("ablate", "train and compare variants along one axis");
    ablate_flags.attach(ablate_cmd);
    ablate_cmd->add_option("--axis", axis, "wpa | at_count | wpa_scales | attention_kind")
        ->required();
    ablate_cmd->add_option("--values", values, "variant list for the axis");
    ablate_cmd->add_option("--eval-count", ablate_eval);
    ablate_cmd->add_option("-o,--out", ablate_out)->required();

    std::string mg_kind = "mixed", mg_bucket = "any", mg_out;
    int64_t mg_size = 64, mg_count = 1;
    uint64_t mg_seed = 0;
    auto* mask_gen = app.add_subcommand("mask-gen", "write procedural masks");
    mask_gen->add_option("--kind", mg_kind);
    mask_gen->add_option("--bucket", mg_bucket);
    mask_gen->add_option("--size", mg_size);
    mask_gen->add_option("--seed", mg_seed);
    mask_gen->add_option("--count", mg_count);
    mask_gen->add_option("-o,--out", mg_out)->required();

    std::string pd_image, pd_mask, pd_out;
    int pd_levels = 4;
    int64_t pd_size = 0;
    bool pd_filter = false;
    auto* pyr = app.add_subcommand("pyramid-dump", "write wavelet pyramid bands as PNG");
    pyr->add_option("--image", pd_image)->required();
    pyr->add_option("--mask", pd_mask);
    pyr->add_option("--levels", pd_levels);
    pyr->add_option("--size", pd_size, "resize to this square size first");
    pyr->add_flag("--filter-finest", pd_filter);
    pyr->add_option("-o,--out", pd_out)->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (*train) {
            return cmd_train(train_flags, train_out, resume, stop_at);
        }
        if (*infer) {
            return cmd_infer(ckpt, image, mask_path, infer_out, heatmap, heatmap_out,
                             relation_out);
        }
        if (*eval) {
            EvalOptions opts;
            opts.buckets = parse_buckets(buckets);
            opts.mask_kind = parse_mask_kind(eval_kind);
            opts.count = eval_count;
            opts.mask_seed = eval_seed;
            Inpainter inpaint;
            int64_t size = eval_size;
            if (!eval_ckpt.empty()) {
                auto g = load_generator(Checkpoint::read(eval_ckpt));
                size = g->config().image_size;
                inpaint = generator_inpainter(g);
            } else if (eval_stub == "identity") {
                inpaint = identity_inpainter();
            } else if (eval_stub == "mean-fill") {
                inpaint = mean_fill_inpainter();
            } else {
                std::cerr << "eval: need --checkpoint or --stub identity|mean-fill\n";
                return 1;
            }
            const auto data = load_dataset(eval_data, size, data_seed, eval_count);
            ConvPyramidExtractor extractor;
            const auto report = evaluate(inpaint, *data, extractor, opts);
            report.write(eval_out);
            std::cout << report.to_tsv();
            return 0;
        }
        if (*ablate_cmd) {
            AblationOptions opts;
            opts.values = values;
            opts.out_dir = ablate_out;
            opts.eval.count = ablate_eval;
            opts.quiet = false;
            const auto table = ablate(ablate_flags.resolve(), parse_ablation_axis(axis), opts);
            std::filesystem::create_directories(ablate_out);
            std::ofstream(std::filesystem::path(ablate_out) / "ablation.tsv") << table.to_tsv();
            std::cout << table.to_tsv();
            return 0;
        }
        if (*mask_gen) {
            std::filesystem::create_directories(mg_out);
            for (int64_t i = 0; i < mg_count; ++i) {
                MaskSpec spec;
                spec.kind = parse_mask_kind(mg_kind);
                spec.bucket = RatioBucket::parse(mg_bucket);
                spec.seed = mg_seed + static_cast<uint64_t>(i);
                const auto m = generate_mask(mg_size, mg_size, spec);
                char name[64];
                std::snprintf(name, sizeof name, "mask_%04lld.png", static_cast<long long>(i));
                write_mask_png(std::filesystem::path(mg_out) / name, m);
                std::printf("%s ratio=%.4f\n", name, mask_ratio(m));
            }
            return 0;
        }
        if (*pyr) {
            auto img = read_image(pd_image);
            if (pd_size > 0) {
                img = center_crop_resize(img, pd_size);
            }
            std::optional<torch::Tensor> m;
            if (!pd_mask.empty()) {
                auto mk = read_mask(pd_mask).unsqueeze(0);
                m = resize_nearest(mk, img.size(1), img.size(2));
            }
            PyramidOptions po;
            po.levels = pd_levels;
            po.filter_finest = pd_filter;
            auto x = img.unsqueeze(0);
            if (m) {
                x = x * (1 - *m);
            }
            dump_pyramid(build_pyramid(x, m, po), pd_out);
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 1;
}
