#include "wain/masking.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <queue>
#include <stdexcept>

#include "wain/image_io.hpp"

namespace wain {

int64_t MaskMap::masked_count() const {
    int64_t n = 0;
    for (auto v : data) {
        n += v;
    }
    return n;
}

torch::Tensor MaskMap::to_tensor() const {
    auto t = torch::empty({1, 1, height, width}, torch::kFloat32);
    auto* p = t.data_ptr<float>();
    for (size_t i = 0; i < data.size(); ++i) {
        p[i] = data[i] ? 1.0f : 0.0f;
    }
    return t;
}

MaskMap MaskMap::from_tensor(const torch::Tensor& t) {
    auto x = t.detach().to(torch::kFloat32).contiguous();
    while (x.dim() > 2) {
        if (x.size(0) != 1) {
            throw std::invalid_argument("MaskMap::from_tensor: expected a single mask");
        }
        x = x.squeeze(0);
    }
    if (x.dim() != 2) {
        throw std::invalid_argument("MaskMap::from_tensor: expected a 2-D mask");
    }
    MaskMap m(x.size(0), x.size(1));
    const auto* p = x.data_ptr<float>();
    for (size_t i = 0; i < m.data.size(); ++i) {
        m.data[i] = p[i] > 0.5f ? 1 : 0;
    }
    return m;
}

double mask_ratio(const MaskMap& mask) {
    if (mask.data.empty()) {
        return 0.0;
    }
    return static_cast<double>(mask.masked_count()) / static_cast<double>(mask.data.size());
}

std::string to_string(MaskKind kind) {
    switch (kind) {
        case MaskKind::irregular: return "irregular";
        case MaskKind::region: return "region";
        case MaskKind::mixed: return "mixed";
    }
    return "?";
}

MaskKind parse_mask_kind(const std::string& text) {
    if (text == "irregular") return MaskKind::irregular;
    if (text == "region") return MaskKind::region;
    if (text == "mixed") return MaskKind::mixed;
    throw std::invalid_argument("unknown mask kind '" + text + "' (irregular|region|mixed)");
}

bool RatioBucket::contains(double f) const {
    const bool above = low_inclusive ? f >= low : f > low;
    return above && f <= high;
}

int64_t RatioBucket::min_count(int64_t n) const {
    // Smallest k with k/n inside the lower bound, checked in double to match contains().
    auto k = static_cast<int64_t>(std::floor(low * static_cast<double>(n)));
    while (k > 0 && contains(static_cast<double>(k - 1) / static_cast<double>(n))) {
        --k;
    }
    while (k <= n && !(low_inclusive ? static_cast<double>(k) / n >= low
                                     : static_cast<double>(k) / n > low)) {
        ++k;
    }
    return k;
}

int64_t RatioBucket::max_count(int64_t n) const {
    auto k = static_cast<int64_t>(std::floor(high * static_cast<double>(n)));
    while (k < n && static_cast<double>(k + 1) / n <= high) {
        ++k;
    }
    while (k > 0 && static_cast<double>(k) / n > high) {
        --k;
    }
    return k;
}

RatioBucket RatioBucket::parse(const std::string& text) {
    if (text == "any") {
        return RatioBucket{0.1, 0.5, false, "any"};
    }
    static const char* names[] = {"10-20", "20-30", "30-40", "40-50"};
    for (int i = 0; i < 4; ++i) {
        if (text == names[i]) {
            return RatioBucket{0.1 * (i + 1), 0.1 * (i + 2), false, names[i]};
        }
    }
    throw std::invalid_argument("unknown mask bucket '" + text +
                                "' (10-20|20-30|30-40|40-50|any)");
}

RatioBucket RatioBucket::training() { return RatioBucket{0.1, 0.4, true, "train"}; }

std::vector<RatioBucket> RatioBucket::evaluation_buckets() {
    return {parse("10-20"), parse("20-30"), parse("30-40"), parse("40-50")};
}

namespace {

constexpr int kMaxAttempts = 100;

double uniform(std::mt19937_64& rng, double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
}

int64_t uniform_int(std::mt19937_64& rng, int64_t lo, int64_t hi) {
    return std::uniform_int_distribution<int64_t>(lo, hi)(rng);
}

void check_size(int64_t h, int64_t w, const char* what) {
    if (h < 32 || w < 32) {
        throw std::invalid_argument(std::string(what) + ": mask sides must be >= 32");
    }
}

// Capsule of radius `radius` around segment (x0,y0)-(x1,y1).
void draw_segment(MaskMap& m, double x0, double y0, double x1, double y1, double radius) {
    const auto r0 = std::max<int64_t>(0, static_cast<int64_t>(std::floor(std::min(y0, y1) - radius)));
    const auto r1 = std::min<int64_t>(m.height - 1,
                                      static_cast<int64_t>(std::ceil(std::max(y0, y1) + radius)));
    const auto c0 = std::max<int64_t>(0, static_cast<int64_t>(std::floor(std::min(x0, x1) - radius)));
    const auto c1 = std::min<int64_t>(m.width - 1,
                                      static_cast<int64_t>(std::ceil(std::max(x0, x1) + radius)));
    const double dx = x1 - x0;
    const double dy = y1 - y0;
    const double len2 = dx * dx + dy * dy;
    for (int64_t r = r0; r <= r1; ++r) {
        for (int64_t c = c0; c <= c1; ++c) {
            const double px = c + 0.5;
            const double py = r + 0.5;
            double t = len2 > 0 ? ((px - x0) * dx + (py - y0) * dy) / len2 : 0.0;
            t = std::clamp(t, 0.0, 1.0);
            const double ex = px - (x0 + t * dx);
            const double ey = py - (y0 + t * dy);
            if (ex * ex + ey * ey <= radius * radius) {
                m.at(r, c) = 1;
            }
        }
    }
}

void draw_ellipse(MaskMap& m, double cx, double cy, double ax, double ay, double angle) {
    const double ca = std::cos(angle);
    const double sa = std::sin(angle);
    const double reach = std::max(ax, ay);
    const auto r0 = std::max<int64_t>(0, static_cast<int64_t>(std::floor(cy - reach)));
    const auto r1 = std::min<int64_t>(m.height - 1, static_cast<int64_t>(std::ceil(cy + reach)));
    const auto c0 = std::max<int64_t>(0, static_cast<int64_t>(std::floor(cx - reach)));
    const auto c1 = std::min<int64_t>(m.width - 1, static_cast<int64_t>(std::ceil(cx + reach)));
    for (int64_t r = r0; r <= r1; ++r) {
        for (int64_t c = c0; c <= c1; ++c) {
            const double px = c + 0.5 - cx;
            const double py = r + 0.5 - cy;
            const double u = (px * ca + py * sa) / ax;
            const double v = (-px * sa + py * ca) / ay;
            if (u * u + v * v <= 1.0) {
                m.at(r, c) = 1;
            }
        }
    }
}

// One attempt; returns true once the mask sits inside [lo_count, hi_count]
// and has reached `target`.
bool grow_irregular(MaskMap& m, int64_t target, int64_t lo_count, int64_t hi_count,
                    std::mt19937_64& rng) {
    const double scale = static_cast<double>(std::min(m.height, m.width)) / 256.0;
    const int strokes = static_cast<int>(uniform_int(rng, 1, 8));
    int64_t count = 0;
    auto accept = [&](MaskMap& candidate) {
        const auto n = candidate.masked_count();
        if (n > hi_count) {
            return false;
        }
        m = std::move(candidate);
        count = n;
        return true;
    };
    auto done = [&] { return count >= lo_count && count >= target; };
    // Strokes are drawn until the target is met; the stroke count only caps
    // how many fresh starting points are tried per pass.
    for (int pass = 0; pass < 8 && !done(); ++pass) {
        for (int s = 0; s < strokes && !done(); ++s) {
            if (uniform(rng, 0.0, 1.0) < 0.3) {
                MaskMap candidate = m;
                draw_ellipse(candidate, uniform(rng, 0, m.width), uniform(rng, 0, m.height),
                             uniform(rng, 12, 48) * scale, uniform(rng, 12, 48) * scale,
                             uniform(rng, 0, std::numbers::pi));
                accept(candidate);
                if (done()) {
                    break;
                }
            }
            const int vertices = static_cast<int>(uniform_int(rng, 4, 12));
            const double radius = uniform(rng, 10.0, 40.0) * scale / 2.0;
            double x = uniform(rng, 0, m.width);
            double y = uniform(rng, 0, m.height);
            for (int v = 1; v < vertices && !done(); ++v) {
                const double angle = uniform(rng, 0, 2 * std::numbers::pi);
                const double len = uniform(rng, 0.05, 0.25) * std::min(m.height, m.width);
                const double nx = std::clamp(x + len * std::cos(angle), 0.0,
                                             static_cast<double>(m.width));
                const double ny = std::clamp(y + len * std::sin(angle), 0.0,
                                             static_cast<double>(m.height));
                MaskMap candidate = m;
                draw_segment(candidate, x, y, nx, ny, radius);
                if (accept(candidate)) {
                    x = nx;
                    y = ny;
                }
            }
        }
    }
    return count >= lo_count && count <= hi_count;
}

std::pair<int64_t, int64_t> region_range(int64_t n, const RatioBucket& bucket) {
    RatioBucket cap{0.1, 0.4, true, "region"};
    const auto lo = std::max(bucket.min_count(n), cap.min_count(n));
    const auto hi = std::min(bucket.max_count(n), cap.max_count(n));
    return {lo, hi};
}

// Smooth random field: bilinear interpolation of a coarse uniform grid.
std::vector<double> smooth_field(int64_t h, int64_t w, std::mt19937_64& rng) {
    const int g = 5;
    std::vector<double> coarse(g * g);
    for (auto& v : coarse) {
        v = uniform(rng, 0.0, 1.0);
    }
    std::vector<double> f(static_cast<size_t>(h * w));
    for (int64_t r = 0; r < h; ++r) {
        const double gy = (r + 0.5) / h * (g - 1);
        const int y0 = std::min(static_cast<int>(gy), g - 2);
        const double ty = gy - y0;
        for (int64_t c = 0; c < w; ++c) {
            const double gx = (c + 0.5) / w * (g - 1);
            const int x0 = std::min(static_cast<int>(gx), g - 2);
            const double tx = gx - x0;
            const double a = coarse[y0 * g + x0] * (1 - tx) + coarse[y0 * g + x0 + 1] * tx;
            const double b =
                coarse[(y0 + 1) * g + x0] * (1 - tx) + coarse[(y0 + 1) * g + x0 + 1] * tx;
            f[static_cast<size_t>(r * w + c)] = a * (1 - ty) + b * ty;
        }
    }
    return f;
}

// Floods from a seed pixel, always taking the frontier pixel with the highest
// field value: the blob is a connected super-level set of the field. Returns
// the pixels added, fewer than requested when the seed sits in a closed pocket.
int64_t flood_blob(MaskMap& m, int64_t pixels, std::mt19937_64& rng) {
    const auto h = m.height;
    const auto w = m.width;
    const auto field = smooth_field(h, w, rng);
    int64_t seed = 0;
    do {
        seed = uniform_int(rng, 0, h * w - 1);
    } while (m.data[static_cast<size_t>(seed)]);

    using Item = std::pair<double, int64_t>;
    std::priority_queue<Item> frontier;
    std::vector<uint8_t> queued(static_cast<size_t>(h * w), 0);
    frontier.push({field[static_cast<size_t>(seed)], seed});
    queued[static_cast<size_t>(seed)] = 1;
    int64_t added = 0;
    while (added < pixels && !frontier.empty()) {
        const auto [value, idx] = frontier.top();
        frontier.pop();
        (void)value;
        m.data[static_cast<size_t>(idx)] = 1;
        ++added;
        const int64_t r = idx / w;
        const int64_t c = idx % w;
        const int64_t nb[4][2] = {{r - 1, c}, {r + 1, c}, {r, c - 1}, {r, c + 1}};
        for (const auto& p : nb) {
            if (p[0] < 0 || p[0] >= h || p[1] < 0 || p[1] >= w) {
                continue;
            }
            const auto j = p[0] * w + p[1];
            if (!queued[static_cast<size_t>(j)] && !m.data[static_cast<size_t>(j)]) {
                queued[static_cast<size_t>(j)] = 1;
                frontier.push({field[static_cast<size_t>(j)], j});
            }
        }
    }
    return added;
}

}  // namespace

MaskMap irregular_mask(int64_t h, int64_t w, const RatioBucket& bucket, std::mt19937_64& rng) {
    check_size(h, w, "irregular_mask");
    const int64_t n = h * w;
    const auto lo = bucket.min_count(n);
    const auto hi = bucket.max_count(n);
    if (lo > hi || hi >= n) {
        throw std::invalid_argument("irregular_mask: bucket " + bucket.name + " is empty at " +
                                    std::to_string(h) + "x" + std::to_string(w));
    }
    for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
        const auto target = uniform_int(rng, lo, hi);
        MaskMap m(h, w);
        if (grow_irregular(m, target, lo, hi, rng)) {
            return m;
        }
    }
    throw std::runtime_error("irregular_mask: bucket " + bucket.name + " not reached after " +
                             std::to_string(kMaxAttempts) + " attempts");
}

MaskMap irregular_mask(int64_t h, int64_t w, const MaskSpec& spec) {
    std::mt19937_64 rng(spec.seed);
    return irregular_mask(h, w, spec.bucket, rng);
}

MaskMap region_mask(int64_t h, int64_t w, const RatioBucket& bucket, std::mt19937_64& rng) {
    check_size(h, w, "region_mask");
    const int64_t n = h * w;
    const auto [lo, hi] = region_range(n, bucket);
    if (lo > hi) {
        throw std::invalid_argument("region_mask: bucket " + bucket.name +
                                    " lies outside the 10%-40% region range");
    }
    const auto total = uniform_int(rng, lo, hi);
    const int blobs = static_cast<int>(uniform_int(rng, 1, 2));
    MaskMap m(h, w);
    int64_t filled = 0;
    if (blobs == 2) {
        const auto first = static_cast<int64_t>(std::llround(uniform(rng, 0.3, 0.7) * total));
        filled += flood_blob(m, first, rng);
    }
    // A second seed can land in a pocket enclosed by the first blob; keep
    // seeding until the count is met.
    while (filled < total) {
        filled += flood_blob(m, total - filled, rng);
    }
    return m;
}

MaskMap region_mask(int64_t h, int64_t w, const MaskSpec& spec) {
    std::mt19937_64 rng(spec.seed);
    return region_mask(h, w, spec.bucket, rng);
}

MaskMap generate_mask(int64_t h, int64_t w, const MaskSpec& spec) {
    std::mt19937_64 rng(spec.seed);
    switch (spec.kind) {
        case MaskKind::irregular: return irregular_mask(h, w, spec.bucket, rng);
        case MaskKind::region: return region_mask(h, w, spec.bucket, rng);
        case MaskKind::mixed: break;
    }
    const bool region = std::bernoulli_distribution(0.5)(rng);
    const auto [lo, hi] = region_range(h * w, spec.bucket);
    if (region && lo <= hi) {
        return region_mask(h, w, spec.bucket, rng);
    }
    return irregular_mask(h, w, spec.bucket, rng);
}

MaskMap sample_training_mask(int64_t h, int64_t w, std::mt19937_64& rng, MaskKind* chosen) {
    const bool irregular = std::bernoulli_distribution(0.5)(rng);
    if (chosen) {
        *chosen = irregular ? MaskKind::irregular : MaskKind::region;
    }
    const auto bucket = RatioBucket::training();
    return irregular ? irregular_mask(h, w, bucket, rng) : region_mask(h, w, bucket, rng);
}

int count_components(const MaskMap& mask) {
    std::vector<uint8_t> seen(mask.data.size(), 0);
    int components = 0;
    std::vector<int64_t> stack;
    for (int64_t start = 0; start < mask.height * mask.width; ++start) {
        if (!mask.data[static_cast<size_t>(start)] || seen[static_cast<size_t>(start)]) {
            continue;
        }
        ++components;
        stack.push_back(start);
        seen[static_cast<size_t>(start)] = 1;
        while (!stack.empty()) {
            const auto idx = stack.back();
            stack.pop_back();
            const int64_t r = idx / mask.width;
            const int64_t c = idx % mask.width;
            const int64_t nb[4][2] = {{r - 1, c}, {r + 1, c}, {r, c - 1}, {r, c + 1}};
            for (const auto& p : nb) {
                if (p[0] < 0 || p[0] >= mask.height || p[1] < 0 || p[1] >= mask.width) {
                    continue;
                }
                const auto j = static_cast<size_t>(p[0] * mask.width + p[1]);
                if (mask.data[j] && !seen[j]) {
                    seen[j] = 1;
                    stack.push_back(static_cast<int64_t>(j));
                }
            }
        }
    }
    return components;
}

void write_mask_png(const std::filesystem::path& path, const MaskMap& mask) {
    write_mask(path, mask.to_tensor()[0]);
}

MaskMap read_mask_png(const std::filesystem::path& path) {
    return MaskMap::from_tensor(read_mask(path));
}

uint64_t mask_hash(const MaskMap& mask, uint64_t seed) {
    uint64_t h = seed;
    auto mix = [&h](uint64_t byte) {
        h ^= byte;
        h *= 1099511628211ull;
    };
    for (int s = 0; s < 64; s += 8) {
        mix((static_cast<uint64_t>(mask.height) >> s) & 0xff);
        mix((static_cast<uint64_t>(mask.width) >> s) & 0xff);
    }
    for (auto v : mask.data) {
        mix(v);
    }
    return h;
}

}  // namespace wain
