#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "../support/helpers.hpp"
#include "wain/image_io.hpp"
#include "wain/trainer.hpp"

using namespace wain;

namespace {

int run(const std::string& args, const std::filesystem::path& log) {
    const std::string cmd =
        std::string(WAIN_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const std::filesystem::path& path) {
    std::ifstream in(path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

/// Small trained-for-one-step checkpoint shared by the CLI cases.
std::filesystem::path tiny_checkpoint(const std::filesystem::path& dir) {
    TrainConfig cfg;
    cfg.batch_size = 1;
    cfg.total_steps = 1;
    cfg.synthetic_count = 4;
    cfg.generator.base_channels = 2;
    cfg.generator.dc_count = 1;
    cfg.generator.at_count = 1;
    cfg.generator.at_heads = 2;
    cfg.discriminator.base_channels = 4;
    Trainer t(cfg);
    t.step();
    const auto path = dir / "tiny.wain";
    t.save(path);
    return path;
}

}  // namespace

TEST_CASE("cli exit codes") {
    const auto dir = testing_support::temp_dir("cli_codes");
    CHECK(run("--help", dir / "log") == 0);
    CHECK(run("", dir / "log") == 1);
    CHECK(run("train", dir / "log") == 1);
    CHECK(run("frobnicate", dir / "log") == 1);
    CHECK(run("infer --checkpoint " + (dir / "none.wain").string() +
                  " --image a.png --mask b.png --out c.png",
              dir / "log") == 2);
    CHECK(slurp(dir / "log").find("error:") != std::string::npos);
}

TEST_CASE("cli mask-gen writes in-bucket masks") {
    const auto dir = testing_support::temp_dir("cli_masks");
    REQUIRE(run("mask-gen --kind mixed --bucket 30-40 --size 64 --count 3 --seed 4 --out " +
                    (dir / "m").string(),
                dir / "log") == 0);
    for (int i = 0; i < 3; ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "mask_%04d.png", i);
        const auto m = read_mask(dir / "m" / name);
        const double f = m.mean().item<double>();
        CHECK(f > 0.3);
        CHECK(f <= 0.4);
    }
}

TEST_CASE("cli pyramid-dump") {
    const auto dir = testing_support::temp_dir("cli_pyr");
    write_png(dir / "img.png", torch::rand({3, 40, 50}));
    REQUIRE(run("pyramid-dump --image " + (dir / "img.png").string() +
                    " --size 32 --levels 2 --filter-finest --out " + (dir / "p").string(),
                dir / "log") == 0);
    CHECK(std::filesystem::exists(dir / "p" / "L2_d.png"));
}

TEST_CASE("cli infer: empty mask, heatmap and determinism") {
    const auto dir = testing_support::temp_dir("cli_infer");
    const auto ckpt = tiny_checkpoint(dir);
    write_png(dir / "img.png", torch::rand({3, 64, 64}));
    write_mask(dir / "empty.png", torch::zeros({1, 64, 64}));
    auto hole = torch::zeros({1, 64, 64});
    hole.slice(1, 20, 40).slice(2, 10, 30).fill_(1);
    write_mask(dir / "hole.png", hole);
    const auto base = "infer --checkpoint " + ckpt.string() + " --image " +
                      (dir / "img.png").string() + " --mask ";

    REQUIRE(run(base + (dir / "empty.png").string() + " --out " + (dir / "a.png").string(),
                dir / "log") == 0);
    const auto input = read_image(dir / "img.png");
    CHECK((read_image(dir / "a.png") - input).abs().max().item<double>() <= 1.0 / 255 + 1e-6);
    CHECK_FALSE(std::filesystem::exists(dir / "a_heatmap.png"));

    REQUIRE(run(base + (dir / "hole.png").string() + " --out " + (dir / "b.png").string() +
                    " --heatmap 3,2 --relation-out " + (dir / "r.bin").string(),
                dir / "log") == 0);
    CHECK(std::filesystem::exists(dir / "b_heatmap.png"));
    CHECK(std::filesystem::file_size(dir / "r.bin") == 8 + 64 * 64 * 4);
    REQUIRE(run(base + (dir / "hole.png").string() + " --out " + (dir / "c.png").string(),
                dir / "log") == 0);
    CHECK(slurp(dir / "b.png") == slurp(dir / "c.png"));

    write_mask(dir / "small.png", torch::zeros({1, 32, 32}));
    CHECK(run(base + (dir / "small.png").string() + " --out " + (dir / "d.png").string(),
              dir / "log") == 2);
    CHECK(run(base + (dir / "hole.png").string() + " --out " + (dir / "e.png").string() +
                  " --heatmap 9,0",
              dir / "log") == 2);
}

TEST_CASE("cli eval with the identity stub") {
    const auto dir = testing_support::temp_dir("cli_eval");
    REQUIRE(run("eval --stub identity --count 3 --buckets 10-20,40-50 --out " +
                    (dir / "report").string(),
                dir / "log") == 0);
    const auto tsv = slurp(dir / "report.tsv");
    std::istringstream in(tsv);
    std::string header;
    std::getline(in, header);
    CHECK(header == "metric\t10-20\t40-50");
    CHECK(slurp(dir / "report.kv").find("10-20.psnr=100") != std::string::npos);
}

TEST_CASE("cli train and resume match an uninterrupted run") {
    const auto dir = testing_support::temp_dir("cli_train");
    const std::string common =
        "train --steps 4 --batch 1 --base-channels 2 --dc 1 --at 1 --set gen.at_heads=2 "
        "--set disc.base_channels=4 --set train.synthetic_count=8 ";
    REQUIRE(run(common + "--out " + (dir / "full").string(), dir / "log") == 0);
    REQUIRE(run(common + "--stop-at 2 --out " + (dir / "split").string(), dir / "log") == 0);
    REQUIRE(run("train --resume " + (dir / "split" / "checkpoint.wain").string() + " --out " +
                    (dir / "split").string(),
                dir / "log") == 0);
    CHECK(slurp(dir / "full" / "run.log") == slurp(dir / "split" / "run.log"));
}
