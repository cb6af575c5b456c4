#include "wain/evaluation.hpp"

#include <iostream>
#include <sstream>

#include "wain/resize.hpp"

namespace wain {

Inpainter identity_inpainter() {
    return [](const EvalSample& s) { return s.target; };
}

Inpainter mean_fill_inpainter() {
    return [](const EvalSample& s) {
        const auto known = 1 - s.mask;
        const auto count = known.sum({2, 3}, true).clamp_min(1);
        const auto mean = (s.masked * known).sum({2, 3}, true) / count;
        return s.masked * known + mean * s.mask;
    };
}

Inpainter generator_inpainter(Generator generator) {
    return [generator](const EvalSample& s) mutable {
        torch::NoGradGuard guard;
        generator->eval();
        return generator->forward(s.masked, s.mask).raw;
    };
}

uint64_t eval_mask_seed(uint64_t base, size_t bucket, int64_t index) {
    return base * 1000003ull + static_cast<uint64_t>(bucket) * 7919ull +
           static_cast<uint64_t>(index);
}

namespace {

std::vector<int64_t> emd_sizes_for(const EvalOptions& options, int64_t h) {
    if (!options.emd_sizes.empty()) {
        return options.emd_sizes;
    }
    return {h, h / 2, h / 4, h / 8};
}

MaskMap eval_mask(const EvalOptions& options, size_t bucket, int64_t index, int64_t h) {
    MaskSpec spec;
    spec.kind = options.mask_kind;
    spec.bucket = options.buckets[bucket];
    spec.seed = eval_mask_seed(options.mask_seed, bucket, index);
    return generate_mask(h, h, spec);
}

}  // namespace

MetricReport evaluate(const Inpainter& inpaint, const ImageDataset& dataset,
                      const FeatureExtractor& extractor, const EvalOptions& options) {
    const int64_t h = dataset.image_size();
    const auto sizes = emd_sizes_for(options, h);
    const int64_t n = std::min(options.count, dataset.size());
    if (n < 1) {
        throw std::invalid_argument("evaluate: no samples");
    }
    MetricReport report;
    for (size_t b = 0; b < options.buckets.size(); ++b) {
        BucketMetrics bm;
        bm.bucket = options.buckets[b].name;
        bm.emd_sizes = sizes;
        bm.emd.assign(sizes.size(), 0.0);
        bm.emd_samples.assign(sizes.size(), 0);
        std::vector<torch::Tensor> outputs;
        std::vector<torch::Tensor> targets;
        for (int64_t i = 0; i < n; ++i) {
            EvalSample s;
            s.target = dataset.get(i).unsqueeze(0);
            s.mask = eval_mask(options, b, i, h).to_tensor();
            s.masked = s.target * (1 - s.mask);
            const auto pred = inpaint(s).detach().to(torch::kFloat32).clamp(0, 1);
            const auto out = composite(pred, s.target, s.mask);
            bm.psnr += psnr(out, s.target);
            bm.psnr_masked += psnr_masked(out, s.target, s.mask);
            bm.ssim += ssim(out, s.target);
            for (size_t k = 0; k < sizes.size(); ++k) {
                if (resize_nearest(s.mask, sizes[k], sizes[k]).sum().item<double>() <= 0) {
                    continue;
                }
                bm.emd[k] += hsv_emd(out, s.target, s.mask, sizes[k]);
                ++bm.emd_samples[k];
            }
            outputs.push_back(out);
            targets.push_back(s.target);
        }
        bm.samples = n;
        bm.psnr /= static_cast<double>(n);
        bm.psnr_masked /= static_cast<double>(n);
        bm.ssim /= static_cast<double>(n);
        for (size_t k = 0; k < sizes.size(); ++k) {
            if (bm.emd_samples[k] > 0) {
                bm.emd[k] /= static_cast<double>(bm.emd_samples[k]);
            }
        }
        if (n >= 2) {
            torch::NoGradGuard guard;
            bm.fid = frechet_distance(extractor.embed(torch::cat(outputs)),
                                      extractor.embed(torch::cat(targets)));
        }
        report.buckets.push_back(std::move(bm));
    }
    return report;
}

uint64_t eval_mask_hash(const EvalOptions& options, int64_t image_size) {
    uint64_t h = 1469598103934665603ull;
    for (size_t b = 0; b < options.buckets.size(); ++b) {
        for (int64_t i = 0; i < options.count; ++i) {
            h = mask_hash(eval_mask(options, b, i, image_size), h);
        }
    }
    return h;
}

Generator load_generator(const Checkpoint& checkpoint) {
    if (!checkpoint.has_text("generator_config")) {
        throw std::runtime_error("checkpoint has no generator_config");
    }
    Generator g(GeneratorConfig::parse(checkpoint.text("generator_config")));
    checkpoint.load_module("generator", *g);
    g->eval();
    return g;
}

std::string to_string(AblationAxis axis) {
    switch (axis) {
        case AblationAxis::wpa: return "wpa";
        case AblationAxis::at_count: return "at_count";
        case AblationAxis::wpa_scales: return "wpa_scales";
        case AblationAxis::attention_kind: return "attention_kind";
    }
    return "?";
}

AblationAxis parse_ablation_axis(const std::string& text) {
    if (text == "wpa") return AblationAxis::wpa;
    if (text == "at_count") return AblationAxis::at_count;
    if (text == "wpa_scales") return AblationAxis::wpa_scales;
    if (text == "attention_kind") return AblationAxis::attention_kind;
    throw std::invalid_argument("unknown ablation axis '" + text +
                                "' (wpa|at_count|wpa_scales|attention_kind)");
}

namespace {

std::vector<std::string> split(const std::string& text, char sep) {
    std::vector<std::string> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, sep)) {
        if (!item.empty()) {
            out.push_back(item);
        }
    }
    return out;
}

}  // namespace

std::vector<AblationVariant> ablation_variants(const TrainConfig& base, AblationAxis axis,
                                               const std::string& values) {
    std::vector<AblationVariant> out;
    switch (axis) {
        case AblationAxis::wpa: {
            auto off = base;
            off.generator.use_wpa = false;
            auto on = base;
            on.generator.use_wpa = true;
            out.push_back({"baseline", off});
            out.push_back({"+WPA", on});
            break;
        }
        case AblationAxis::at_count: {
            for (const auto& pair : split(values.empty() ? "8/0,6/2,4/4,2/6" : values, ',')) {
                const auto slash = pair.find('/');
                if (slash == std::string::npos) {
                    throw std::invalid_argument("at_count split '" + pair + "' needs dc/at");
                }
                auto v = base;
                v.generator.dc_count = std::stoi(pair.substr(0, slash));
                v.generator.at_count = std::stoi(pair.substr(slash + 1));
                v.generator.use_at = true;
                out.push_back({"DC" + pair.substr(0, slash) + "/AT" + pair.substr(slash + 1), v});
            }
            break;
        }
        case AblationAxis::wpa_scales: {
            for (const auto& set : split(values.empty() ? "1,2,3,4;1-,2,3,4" : values, ';')) {
                auto v = base;
                v.generator.use_wpa = true;
                v.generator.filter_finest = false;
                v.generator.wpa_scales = WaveletScales::parse(set, &v.generator.filter_finest);
                out.push_back({"(" + set + ")", v});
            }
            break;
        }
        case AblationAxis::attention_kind: {
            for (const auto& kind : split(values.empty() ? "cosine,standard" : values, ',')) {
                auto v = base;
                v.generator.attention = parse_attention_kind(kind);
                out.push_back({kind, v});
            }
            break;
        }
    }
    for (const auto& v : out) {
        v.config.validate();
    }
    return out;
}

std::string AblationTable::to_tsv() const {
    std::ostringstream out;
    out << "variant\tparameters\tfinal_loss\tpsnr\tpsnr_masked\tssim\tfid";
    const auto& first = rows.empty() ? BucketMetrics{} : rows.front().metrics;
    for (auto s : first.emd_sizes) {
        out << "\temd@" << s;
    }
    out << "\tcorpus_hash\tmask_hash\n";
    for (const auto& r : rows) {
        char buf[256];
        std::snprintf(buf, sizeof buf, "%s\t%lld\t%.6f\t%.6f\t%.6f\t%.6f\t%.6f", r.variant.c_str(),
                      static_cast<long long>(r.parameters), r.final_loss, r.metrics.psnr,
                      r.metrics.psnr_masked, r.metrics.ssim, r.metrics.fid);
        out << buf;
        for (double e : r.metrics.emd) {
            std::snprintf(buf, sizeof buf, "\t%.6f", e);
            out << buf;
        }
        std::snprintf(buf, sizeof buf, "\t%016llx\t%016llx\n",
                      static_cast<unsigned long long>(r.corpus_hash),
                      static_cast<unsigned long long>(r.mask_hash));
        out << buf;
    }
    return out.str();
}

AblationTable ablate(const TrainConfig& base, AblationAxis axis, const AblationOptions& options) {
    AblationTable table;
    table.axis = axis;
    const auto variants = ablation_variants(base, axis, options.values);
    const auto& eval = options.eval;
    if (eval.buckets.empty()) {
        throw std::invalid_argument("ablate: no evaluation bucket");
    }
    const auto held_out = load_dataset(
        options.eval_dataset.empty() ? std::string(kSyntheticShapes) : options.eval_dataset,
        base.image_size(), base.seed + 1000003ull, std::max<int64_t>(eval.count, 2));

    for (const auto& v : variants) {
        Trainer trainer(v.config);
        std::unique_ptr<RunLog> log;
        std::filesystem::path dir;
        if (!options.out_dir.empty()) {
            std::string safe = v.name;
            for (auto& ch : safe) {
                if (!std::isalnum(static_cast<unsigned char>(ch)) && ch != '-' && ch != '+') {
                    ch = '_';
                }
            }
            dir = options.out_dir / safe;
            std::filesystem::create_directories(dir);
            log = std::make_unique<RunLog>(dir / "run.log");
        }
        double last_total = 0.0;
        while (trainer.completed_steps() < v.config.total_steps) {
            const auto rec = trainer.step();
            last_total = rec.report.total;
            if (log) {
                log->append(rec);
            }
        }
        if (!dir.empty()) {
            trainer.save(dir / "checkpoint.wain");
        }
        AblationRow row;
        row.variant = v.name;
        row.parameters = trainer.generator()->parameter_count();
        row.final_loss = last_total;
        const auto report =
            evaluate(generator_inpainter(trainer.generator()), *held_out, trainer.extractor(), eval);
        row.metrics = report.buckets.front();
        auto train_set = load_dataset(v.config.dataset, v.config.image_size(), v.config.seed,
                                      v.config.synthetic_count);
        row.corpus_hash = corpus_hash(*train_set) ^ (corpus_hash(*held_out) * 31);
        row.mask_hash = eval_mask_hash(eval, base.image_size());
        if (!options.quiet) {
            std::cout << "variant " << row.variant << " corpus=" << std::hex << row.corpus_hash
                      << " masks=" << row.mask_hash << std::dec << "\n";
        }
        table.rows.push_back(std::move(row));
    }
    return table;
}

}  // namespace wain
