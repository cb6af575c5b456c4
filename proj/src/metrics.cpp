#include "wain/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "wain/resize.hpp"

namespace wain {

namespace {

torch::Tensor as_double(const torch::Tensor& t) { return t.detach().to(torch::kFloat64); }

torch::Tensor as_batch(const torch::Tensor& t) {
    if (t.dim() == 3) {
        return t.unsqueeze(0);
    }
    if (t.dim() != 4) {
        throw std::invalid_argument("metrics: expected C×H×W or N×C×H×W");
    }
    return t;
}

void require_same(const torch::Tensor& a, const torch::Tensor& b, const char* what) {
    if (a.sizes() != b.sizes()) {
        throw std::invalid_argument(std::string(what) + ": shape mismatch");
    }
}

double psnr_from_mse(double mse) {
    if (mse <= 0.0) {
        return kPsnrCap;
    }
    return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

}  // namespace

double psnr(const torch::Tensor& a, const torch::Tensor& b) {
    require_same(a, b, "psnr");
    const auto d = as_double(a) - as_double(b);
    return psnr_from_mse(d.pow(2).mean().item<double>());
}

double psnr_masked(const torch::Tensor& a, const torch::Tensor& b, const torch::Tensor& mask) {
    require_same(a, b, "psnr_masked");
    const auto x = as_batch(as_double(a));
    const auto y = as_batch(as_double(b));
    const auto m = as_batch(as_double(mask)).expand_as(x);
    const double count = m.sum().item<double>();
    if (count <= 0) {
        throw std::invalid_argument("psnr_masked: empty mask");
    }
    return psnr_from_mse(((x - y).pow(2) * m).sum().item<double>() / count);
}

double ssim(const torch::Tensor& a, const torch::Tensor& b) {
    require_same(a, b, "ssim");
    const auto x = as_batch(as_double(a));
    const auto y = as_batch(as_double(b));
    constexpr int64_t k = 11;
    if (x.size(2) < k || x.size(3) < k) {
        throw std::invalid_argument("ssim: image smaller than the 11×11 window");
    }
    const auto coords = torch::arange(k, torch::kFloat64) - (k - 1) / 2.0;
    auto g = torch::exp(-coords.pow(2) / (2 * 1.5 * 1.5));
    g = g / g.sum();
    const int64_t c = x.size(1);
    const auto window = torch::outer(g, g).expand({c, 1, k, k}).contiguous();
    auto blur = [&](const torch::Tensor& t) {
        return torch::nn::functional::conv2d(
            t, window, torch::nn::functional::Conv2dFuncOptions().groups(c));
    };
    const double c1 = 0.01 * 0.01;
    const double c2 = 0.03 * 0.03;
    const auto mx = blur(x);
    const auto my = blur(y);
    const auto sxx = blur(x * x) - mx * mx;
    const auto syy = blur(y * y) - my * my;
    const auto sxy = blur(x * y) - mx * my;
    const auto ssim_map = ((2 * mx * my + c1) * (2 * sxy + c2)) /
                          ((mx * mx + my * my + c1) * (sxx + syy + c2));
    return ssim_map.mean().item<double>();
}

double frechet_distance(const torch::Tensor& feats_a, const torch::Tensor& feats_b) {
    if (feats_a.dim() != 2 || feats_b.dim() != 2 || feats_a.size(1) != feats_b.size(1)) {
        throw std::invalid_argument("frechet_distance: expected N×D sets of equal D");
    }
    if (feats_a.size(0) < 2 || feats_b.size(0) < 2) {
        throw std::invalid_argument("frechet_distance: need at least 2 vectors per set");
    }
    const auto a = as_double(feats_a);
    const auto b = as_double(feats_b);
    if (!torch::isfinite(a).all().item<bool>() || !torch::isfinite(b).all().item<bool>()) {
        throw std::invalid_argument("frechet_distance: non-finite features");
    }
    auto moments = [](const torch::Tensor& f) {
        const auto mu = f.mean(0);
        const auto centred = f - mu;
        const auto cov = centred.t().mm(centred) / static_cast<double>(f.size(0) - 1);
        return std::make_pair(mu, cov);
    };
    const auto [mu_a, cov_a] = moments(a);
    const auto [mu_b, cov_b] = moments(b);

    torch::Tensor evals_a, evecs_a, evals_m;
    try {
        std::tie(evals_a, evecs_a) = torch::linalg_eigh(cov_a);
        const auto root_a =
            evecs_a.mm(torch::diag(evals_a.clamp_min(0).sqrt())).mm(evecs_a.t());
        auto m = root_a.mm(cov_b).mm(root_a);
        m = (m + m.t()) / 2;
        evals_m = torch::linalg_eigvalsh(m);
    } catch (const c10::Error& e) {
        const auto ev = torch::linalg_eigvalsh(cov_a + cov_b);
        std::ostringstream msg;
        msg << "frechet_distance: covariance square root failed (eigenvalue range "
            << ev.min().item<double>() << " .. " << ev.max().item<double>() << ")";
        throw std::runtime_error(msg.str());
    }
    const double mean_term = (mu_a - mu_b).pow(2).sum().item<double>();
    const double trace_term = (cov_a.trace() + cov_b.trace()).item<double>() -
                              2.0 * evals_m.clamp_min(0).sqrt().sum().item<double>();
    return std::max(0.0, mean_term + trace_term);
}

torch::Tensor rgb_to_hsv(const torch::Tensor& rgb) {
    auto x = as_double(rgb);
    if (x.dim() == 4) {
        if (x.size(0) != 1) {
            throw std::invalid_argument("rgb_to_hsv: expected a single image");
        }
        x = x[0];
    }
    if (x.dim() != 3 || x.size(0) != 3) {
        throw std::invalid_argument("rgb_to_hsv: expected 3×H×W");
    }
    x = x.clamp(0, 1).contiguous();
    const int64_t n = x.size(1) * x.size(2);
    auto out = torch::empty_like(x);
    const auto* src = x.data_ptr<double>();
    auto* dst = out.data_ptr<double>();
    for (int64_t i = 0; i < n; ++i) {
        const double r = src[i];
        const double g = src[n + i];
        const double b = src[2 * n + i];
        const double mx = std::max({r, g, b});
        const double mn = std::min({r, g, b});
        const double delta = mx - mn;
        double h = 0.0;
        if (delta > 0) {
            if (mx == r) {
                h = (g - b) / delta;
                if (h < 0) {
                    h += 6.0;
                }
            } else if (mx == g) {
                h = (b - r) / delta + 2.0;
            } else {
                h = (r - g) / delta + 4.0;
            }
            h /= 6.0;
        }
        dst[i] = h;
        dst[n + i] = mx > 0 ? delta / mx : 0.0;
        dst[2 * n + i] = mx;
    }
    return out;
}

double histogram_emd(const std::vector<double>& p, const std::vector<double>& q) {
    if (p.size() != q.size() || p.empty()) {
        throw std::invalid_argument("histogram_emd: histograms differ in length");
    }
    double cp = 0;
    double cq = 0;
    double sum = 0;
    for (size_t k = 0; k < p.size(); ++k) {
        cp += p[k];
        cq += q[k];
        sum += std::abs(cp - cq);
    }
    return sum / static_cast<double>(p.size());
}

std::vector<double> masked_histogram(const std::vector<double>& values,
                                     const std::vector<uint8_t>& select) {
    if (values.size() != select.size()) {
        throw std::invalid_argument("masked_histogram: size mismatch");
    }
    std::vector<double> hist(kHistogramBins, 0.0);
    double total = 0;
    for (size_t i = 0; i < values.size(); ++i) {
        if (!select[i]) {
            continue;
        }
        const auto bin = std::clamp(static_cast<int>(values[i] * kHistogramBins), 0,
                                    kHistogramBins - 1);
        hist[static_cast<size_t>(bin)] += 1.0;
        total += 1.0;
    }
    if (total > 0) {
        for (auto& v : hist) {
            v /= total;
        }
    }
    return hist;
}

double hsv_emd(const torch::Tensor& pred, const torch::Tensor& gt, const torch::Tensor& mask,
               int64_t size) {
    require_same(pred, gt, "hsv_emd");
    if (size < 1) {
        throw std::invalid_argument("hsv_emd: size must be positive");
    }
    const auto p = resize_bilinear(as_batch(as_double(pred)), size, size);
    const auto g = resize_bilinear(as_batch(as_double(gt)), size, size);
    const auto m = resize_nearest(as_batch(as_double(mask)), size, size).contiguous();
    std::vector<uint8_t> select(static_cast<size_t>(size * size));
    const auto* mp = m.data_ptr<double>();
    bool any = false;
    for (size_t i = 0; i < select.size(); ++i) {
        select[i] = mp[i] > 0.5 ? 1 : 0;
        any = any || select[i];
    }
    if (!any) {
        throw std::invalid_argument("hsv_emd: mask is empty at size " + std::to_string(size));
    }
    const auto hp = rgb_to_hsv(p);
    const auto hg = rgb_to_hsv(g);
    double total = 0;
    for (int ch = 0; ch < 3; ++ch) {
        const auto a = hp[ch].contiguous();
        const auto b = hg[ch].contiguous();
        const std::vector<double> va(a.data_ptr<double>(), a.data_ptr<double>() + a.numel());
        const std::vector<double> vb(b.data_ptr<double>(), b.data_ptr<double>() + b.numel());
        total += histogram_emd(masked_histogram(va, select), masked_histogram(vb, select));
    }
    return total / 3.0;
}

std::string MetricReport::to_tsv() const {
    std::ostringstream out;
    out << "metric";
    for (const auto& b : buckets) {
        out << '\t' << b.bucket;
    }
    out << '\n';
    auto row = [&](const std::string& name, auto getter) {
        out << name;
        for (const auto& b : buckets) {
            out << '\t' << getter(b);
        }
        out << '\n';
    };
    row("psnr", [](const BucketMetrics& b) { return fmt(b.psnr); });
    row("psnr_masked", [](const BucketMetrics& b) { return fmt(b.psnr_masked); });
    row("ssim", [](const BucketMetrics& b) { return fmt(b.ssim); });
    row("fid", [](const BucketMetrics& b) { return fmt(b.fid); });
    const size_t sizes = buckets.empty() ? 0 : buckets.front().emd_sizes.size();
    for (size_t k = 0; k < sizes; ++k) {
        row("emd@" + std::to_string(buckets.front().emd_sizes[k]),
            [k](const BucketMetrics& b) { return fmt(b.emd.at(k)); });
    }
    row("samples", [](const BucketMetrics& b) { return std::to_string(b.samples); });
    return out.str();
}

std::string MetricReport::to_kv() const {
    std::ostringstream out;
    for (const auto& b : buckets) {
        const auto p = b.bucket + ".";
        out << p << "samples=" << b.samples << '\n';
        out << p << "psnr=" << fmt(b.psnr) << '\n';
        out << p << "psnr_masked=" << fmt(b.psnr_masked) << '\n';
        out << p << "ssim=" << fmt(b.ssim) << '\n';
        out << p << "fid=" << fmt(b.fid) << '\n';
        for (size_t k = 0; k < b.emd_sizes.size(); ++k) {
            out << p << "emd@" << b.emd_sizes[k] << '=' << fmt(b.emd[k]) << '\n';
            out << p << "emd_samples@" << b.emd_sizes[k] << '=' << b.emd_samples[k] << '\n';
        }
    }
    return out.str();
}

void MetricReport::write(const std::filesystem::path& stem) const {
    auto put = [](const std::filesystem::path& path, const std::string& text) {
        std::ofstream f(path);
        if (!f) {
            throw std::runtime_error("cannot write " + path.string());
        }
        f << text;
    };
    put(stem.string() + ".tsv", to_tsv());
    put(stem.string() + ".kv", to_kv());
}

}  // namespace wain
