#include "resstream/featviz.hpp"

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>
#include <nlohmann/json.hpp>

#include "resstream/diffops.hpp"
#include "resstream/image_ops.hpp"
#include "resstream/util.hpp"

namespace resstream {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// ---- transform tables (fixed by the visualization recipe) -------------------

std::vector<double> scale_choices() {
    std::vector<double> s;
    for (int i = 0; i < 11; ++i) s.push_back(1.0 + (i - 5) / 50.0);
    return s;
}

std::vector<double> angle_choices() {
    std::vector<double> a;
    for (int d = -10; d <= 10; ++d) a.push_back(d);
    for (int d = -5; d <= 5; ++d) a.push_back(d);
    for (int i = 0; i < 10; ++i) a.push_back(0);
    return a;
}

// Color decorrelation matrix (normalized sqrt of the natural-image color
// correlation), applied per pixel to the parameterized channels.
constexpr float kColorCorr[9] = {
    0.26f / 0.4619524f, 0.09f / 0.4619524f, 0.02f / 0.4619524f,
    0.27f / 0.4619524f, 0.00f / 0.4619524f, -0.05f / 0.4619524f,
    0.27f / 0.4619524f, -0.09f / 0.4619524f, 0.03f / 0.4619524f,
};

void decorrelate(const Tensor& raw, Tensor& rgb) {
    int64_t n = static_cast<int64_t>(raw.dim(1)) * raw.dim(2);
    const float* r0 = raw.plane(0);
    const float* r1 = raw.plane(1);
    const float* r2 = raw.plane(2);
    float* o0 = rgb.plane(0);
    float* o1 = rgb.plane(1);
    float* o2 = rgb.plane(2);
    for (int64_t i = 0; i < n; ++i) {
        o0[i] = kColorCorr[0] * r0[i] + kColorCorr[1] * r1[i] + kColorCorr[2] * r2[i];
        o1[i] = kColorCorr[3] * r0[i] + kColorCorr[4] * r1[i] + kColorCorr[5] * r2[i];
        o2[i] = kColorCorr[6] * r0[i] + kColorCorr[7] * r1[i] + kColorCorr[8] * r2[i];
    }
}

void decorrelate_adjoint(const Tensor& g_rgb, Tensor& g_raw) {
    int64_t n = static_cast<int64_t>(g_rgb.dim(1)) * g_rgb.dim(2);
    const float* g0 = g_rgb.plane(0);
    const float* g1 = g_rgb.plane(1);
    const float* g2 = g_rgb.plane(2);
    float* o0 = g_raw.plane(0);
    float* o1 = g_raw.plane(1);
    float* o2 = g_raw.plane(2);
    for (int64_t i = 0; i < n; ++i) {
        o0[i] = kColorCorr[0] * g0[i] + kColorCorr[3] * g1[i] + kColorCorr[6] * g2[i];
        o1[i] = kColorCorr[1] * g0[i] + kColorCorr[4] * g1[i] + kColorCorr[7] * g2[i];
        o2[i] = kColorCorr[2] * g0[i] + kColorCorr[5] * g1[i] + kColorCorr[8] * g2[i];
    }
}

// ---- image parameterizations -------------------------------------------------

struct ImageParam {
    virtual ~ImageParam() = default;
    virtual std::vector<float>& params() = 0;
    virtual Tensor render() = 0;
    /// Gradient wrt params given the gradient wrt the rendered [0,1] image.
    /// Must follow a render() of the same params.
    virtual void backward(const Tensor& g_img01, std::vector<float>& g_params) = 0;
};

/// Packed half-spectrum coefficients per channel, scaled by 1/freq, inverse
/// transformed, then color decorrelation and a sigmoid into [0,1].
struct SpectralParam : ImageParam {
    int h, w, wh;
    std::vector<float> spectrum;  // 3 * h * wh * 2
    std::vector<float> scale;     // h * wh
    Tensor sigmoid_out;

    SpectralParam(int h_, int w_, std::mt19937_64& rng) : h(h_), w(w_), wh(w_ / 2 + 1) {
        spectrum.resize(static_cast<size_t>(3) * h * wh * 2);
        std::normal_distribution<float> init(0.0f, 0.01f);
        for (auto& v : spectrum) v = init(rng);
        scale.resize(static_cast<size_t>(h) * wh);
        double min_freq = 1.0 / std::max(h, w);
        for (int ky = 0; ky < h; ++ky) {
            double fy = (ky <= h / 2 ? ky : ky - h) / static_cast<double>(h);
            for (int kx = 0; kx < wh; ++kx) {
                double fx = kx / static_cast<double>(w);
                double f = std::sqrt(fx * fx + fy * fy);
                scale[static_cast<size_t>(ky) * wh + kx] = static_cast<float>(
                    std::sqrt(static_cast<double>(h) * w) / std::max(f, min_freq));
            }
        }
    }

    std::vector<float>& params() override { return spectrum; }

    Tensor render() override {
        size_t plane = static_cast<size_t>(h) * wh * 2;
        std::vector<float> scaled(plane);
        Tensor raw({3, h, w});
        for (int c = 0; c < 3; ++c) {
            const float* sp = spectrum.data() + static_cast<size_t>(c) * plane;
            for (size_t i = 0; i < plane; ++i) scaled[i] = sp[i] * scale[i / 2];
            std::vector<float> img = packed_irfft2(scaled, h, w);
            float* dst = raw.plane(c);
            for (size_t i = 0; i < img.size(); ++i) dst[i] = img[i] / 4.0f;
        }
        Tensor rgb({3, h, w});
        decorrelate(raw, rgb);
        for (float& v : rgb.vec()) v = 1.0f / (1.0f + std::exp(-v));
        sigmoid_out = rgb;
        return rgb;
    }

    void backward(const Tensor& g_img01, std::vector<float>& g_params) override {
        Tensor g_rgb = g_img01;
        {
            const float* s = sigmoid_out.data();
            float* g = g_rgb.data();
            for (int64_t i = 0, n = g_rgb.numel(); i < n; ++i) g[i] *= s[i] * (1.0f - s[i]);
        }
        Tensor g_raw({3, h, w});
        decorrelate_adjoint(g_rgb, g_raw);
        size_t plane = static_cast<size_t>(h) * wh * 2;
        g_params.assign(spectrum.size(), 0.0f);
        std::vector<float> g_plane(static_cast<size_t>(h) * w);
        for (int c = 0; c < 3; ++c) {
            const float* src = g_raw.plane(c);
            for (size_t i = 0; i < g_plane.size(); ++i) g_plane[i] = src[i] / 4.0f;
            std::vector<float> packed = packed_irfft2_adjoint(g_plane, h, w);
            float* gp = g_params.data() + static_cast<size_t>(c) * plane;
            for (size_t i = 0; i < plane; ++i) gp[i] = packed[i] * scale[i / 2];
        }
    }
};

struct PixelParam : ImageParam {
    int h, w;
    std::vector<float> values;
    Tensor sigmoid_out;

    PixelParam(int h_, int w_, std::mt19937_64& rng) : h(h_), w(w_) {
        values.resize(static_cast<size_t>(3) * h * w);
        std::normal_distribution<float> init(0.0f, 0.01f);
        for (auto& v : values) v = init(rng);
    }

    std::vector<float>& params() override { return values; }

    Tensor render() override {
        Tensor raw({3, h, w}, values);
        Tensor rgb({3, h, w});
        decorrelate(raw, rgb);
        for (float& v : rgb.vec()) v = 1.0f / (1.0f + std::exp(-v));
        sigmoid_out = rgb;
        return rgb;
    }

    void backward(const Tensor& g_img01, std::vector<float>& g_params) override {
        Tensor g_rgb = g_img01;
        const float* s = sigmoid_out.data();
        float* g = g_rgb.data();
        for (int64_t i = 0, n = g_rgb.numel(); i < n; ++i) g[i] *= s[i] * (1.0f - s[i]);
        Tensor g_raw({3, h, w});
        decorrelate_adjoint(g_rgb, g_raw);
        g_params.assign(g_raw.vec().begin(), g_raw.vec().end());
    }
};

// ---- per-step transform stack -------------------------------------------------

struct StepTransform {
    int pad = 0;
    int dy1 = 0, dx1 = 0, dy2 = 0, dx2 = 0;
    int h0 = 0, w0 = 0;  // size entering the scale step
    int sh = 0, sw = 0;  // scaled size
    int h1 = 0, w1 = 0;  // size after scale (+ optional zero pad)
    double angle = 0.0;
};

Tensor apply_step_transforms(const Tensor& img01, int pad, int j1, int j2, std::mt19937_64& rng,
                             const std::vector<double>& scales, const std::vector<double>& angles,
                             StepTransform& st) {
    st.pad = pad;
    Tensor t = pad_constant(img01, pad, 0.5f);
    if (j1 > 1) {
        std::uniform_int_distribution<int> d(0, j1 - 1);
        st.dx1 = d(rng);
        st.dy1 = d(rng);
        t = roll2d(t, st.dy1, st.dx1);
    }
    st.h0 = t.dim(1);
    st.w0 = t.dim(2);
    {
        std::uniform_int_distribution<size_t> d(0, scales.size() - 1);
        double s = scales[d(rng)];
        st.sh = static_cast<int>(std::ceil(s * st.h0));
        st.sw = static_cast<int>(std::ceil(s * st.w0));
        t = resize_align_corners(t, st.sh, st.sw);
        st.h1 = std::max(st.sh, st.h0);
        st.w1 = std::max(st.sw, st.w0);
        t = embed_center(t, st.h1, st.w1);
    }
    {
        std::uniform_int_distribution<size_t> d(0, angles.size() - 1);
        st.angle = angles[d(rng)];
        t = rotate_bilinear(t, st.angle);
    }
    if (j2 > 1) {
        std::uniform_int_distribution<int> d(0, j2 - 1);
        st.dx2 = d(rng);
        st.dy2 = d(rng);
        t = roll2d(t, st.dy2, st.dx2);
    }
    return t;
}

Tensor backward_step_transforms(Tensor g, const StepTransform& st, int img_h, int img_w) {
    g = roll2d(g, -st.dy2, -st.dx2);
    g = rotate_bilinear_adjoint(g, st.angle);
    g = extract_center(g, st.sh, st.sw);
    g = resize_align_corners_adjoint(g, st.h0, st.w0);
    g = roll2d(g, -st.dy1, -st.dx1);
    g = pad_constant_adjoint(g, st.pad, img_h, img_w);
    return g;
}

struct Adam {
    std::vector<float> m, v;
    int t = 0;
    float lr, b1 = 0.9f, b2 = 0.999f, eps = 1e-8f;

    explicit Adam(size_t n, float lr_) : m(n, 0.0f), v(n, 0.0f), lr(lr_) {}

    /// Ascent step along the objective gradient.
    void step(std::vector<float>& p, const std::vector<float>& g) {
        ++t;
        float c1 = 1.0f - std::pow(b1, static_cast<float>(t));
        float c2 = 1.0f - std::pow(b2, static_cast<float>(t));
        for (size_t i = 0; i < p.size(); ++i) {
            m[i] = b1 * m[i] + (1.0f - b1) * g[i];
            v[i] = b2 * v[i] + (1.0f - b2) * g[i] * g[i];
            p[i] += lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
        }
    }
};

float objective_of_map(const Tensor& map, int channel, FZMode mode) {
    if (mode == FZMode::CenterNeuron) return map.at(channel, map.dim(1) / 2, map.dim(2) / 2);
    const float* p = map.plane(channel);
    double acc = 0.0;
    int64_t n = static_cast<int64_t>(map.dim(1)) * map.dim(2);
    for (int64_t i = 0; i < n; ++i) acc += p[i];
    return static_cast<float>(acc / static_cast<double>(n));
}

}  // namespace

const char* fz_mode_name(FZMode m) {
    return m == FZMode::CenterNeuron ? "center" : "channel";
}

void FZConfig::validate() const {
    if (steps < 1) throw std::invalid_argument("FZConfig: steps must be >= 1");
    if (!(step_size > 0.0f)) throw std::invalid_argument("FZConfig: step_size must be positive");
    if (pad_pixels < 0) throw std::invalid_argument("FZConfig: negative pad");
}

int jitter_for_block(BlockAddress addr, TapKind tap) {
    if (addr.stage == 1 && addr.block == 1) return 0;
    if (addr.stage == 2 && addr.block == 0) return 0;
    if (addr.stage == 2 && addr.block == 1 && tap == TapKind::Pre) return 4;
    if (addr.stage == 3 && addr.block == 0) return 4;
    return 16;
}

int effective_jitter(const FZObjective& obj, const FZConfig& cfg) {
    return cfg.jitter_primary >= 0 ? cfg.jitter_primary : jitter_for_block(obj.addr, obj.tap);
}

std::string fz_fingerprint(const Network& net, const FZObjective& obj, const FZConfig& cfg) {
    int j1 = effective_jitter(obj, cfg);
    std::string key = "fz-v1|" + net.weights_id() + "|" + obj.addr.str() + "|" +
                      tap_name(obj.tap) + "|" + std::to_string(obj.channel) + "|" +
                      fz_mode_name(obj.mode) + "|steps=" + std::to_string(cfg.steps) +
                      "|lr=" + fmt_float(cfg.step_size) + "|j=" + std::to_string(j1) + "/" +
                      std::to_string(FZConfig::jitter_secondary_of(j1)) +
                      "|pad=" + std::to_string(cfg.pad_pixels) + "|param=" +
                      (cfg.parameterization == FZParam::SpectralDecorrelated ? "spectral"
                                                                             : "pixel") +
                      "|seed=" + std::to_string(cfg.seed) + "|res=" +
                      std::to_string(net.input_resolution());
    for (double s : scale_choices()) key += "|" + fmt_double(s);
    for (double a : angle_choices()) key += "|" + fmt_double(a);
    return hex64(fnv1a64(key));
}

FeatureVisual optimize_fz(const Network& net, const FZObjective& obj, const FZConfig& cfg) {
    cfg.validate();
    if (!net.has_block(obj.addr))
        throw std::invalid_argument("optimize_fz: block " + obj.addr.str() + " does not exist");
    if (obj.channel < 0 || obj.channel >= net.channel_count(obj.addr))
        throw std::invalid_argument("optimize_fz: channel " + std::to_string(obj.channel) +
                                    " out of range for block " + obj.addr.str());

    int res = net.input_resolution();
    int j1 = effective_jitter(obj, cfg);
    int j2 = FZConfig::jitter_secondary_of(j1);
    auto scales = scale_choices();
    auto angles = angle_choices();
    std::string fingerprint = fz_fingerprint(net, obj, cfg);

    // All stochasticity (init + per-step transforms) flows from one stream.
    auto rng = make_rng(mix_seed(cfg.seed, fnv1a64(fingerprint)));
    std::unique_ptr<ImageParam> param;
    if (cfg.parameterization == FZParam::SpectralDecorrelated)
        param = std::make_unique<SpectralParam>(res, res, rng);
    else
        param = std::make_unique<PixelParam>(res, res, rng);

    Adam adam(param->params().size(), cfg.step_size);
    std::vector<float> g_params;
    bool any_grad = false;
    bool whole = obj.mode == FZMode::WholeChannel;

    for (int step = 0; step < cfg.steps; ++step) {
        Tensor img01 = param->render();
        StepTransform st;
        Tensor t = apply_step_transforms(img01, cfg.pad_pixels, j1, j2, rng, scales, angles, st);
        Tensor x = net.normalize_input(t);
        Tensor gx;
        float value = net.input_gradient(x, obj.addr, obj.tap, obj.channel, whole, &gx);
        if (!std::isfinite(value))
            throw std::runtime_error("optimize_fz: non-finite objective at step " +
                                     std::to_string(step) + " for " + obj.addr.str() + "/" +
                                     tap_name(obj.tap) + " channel " +
                                     std::to_string(obj.channel));
        // d normalize / d t = 1 / std
        for (int c = 0; c < 3; ++c) {
            float inv = 1.0f / net.model().norm_std[static_cast<size_t>(c)];
            float* p = gx.plane(c);
            for (int64_t i = 0, n = static_cast<int64_t>(gx.dim(1)) * gx.dim(2); i < n; ++i)
                p[i] *= inv;
        }
        Tensor g01 = backward_step_transforms(std::move(gx), st, res, res);
        param->backward(g01, g_params);
        float norm2 = 0.0f;
        for (float g : g_params) norm2 += g * g;
        if (!std::isfinite(norm2))
            throw std::runtime_error("optimize_fz: non-finite gradient at step " +
                                     std::to_string(step));
        if (norm2 > 0.0f) any_grad = true;
        adam.step(param->params(), g_params);
    }

    FeatureVisual fz;
    fz.image = param->render();
    fz.objective = obj;
    fz.degenerate = !any_grad;
    fz.config_fingerprint = fingerprint;
    Tensor map = net.tap_map(net.normalize_input(fz.image), obj.addr, obj.tap);
    fz.achieved_activation = objective_of_map(map, obj.channel, obj.mode);
    if (!std::isfinite(fz.achieved_activation))
        throw std::runtime_error("optimize_fz: non-finite achieved activation");
    return fz;
}

std::string fz_artifact_base(const FZObjective& obj, uint64_t seed,
                             const std::string& fingerprint) {
    return obj.addr.str() + "_" + tap_name(obj.tap) + "_c" + std::to_string(obj.channel) + "_" +
           fz_mode_name(obj.mode) + "_s" + std::to_string(seed) + "_" + fingerprint.substr(0, 8);
}

void save_feature_visual(const FeatureVisual& fz, uint64_t seed, const std::string& dir) {
    fs::create_directories(dir);
    std::string base =
        (fs::path(dir) / fz_artifact_base(fz.objective, seed, fz.config_fingerprint)).string();
    save_tensor_raw(fz.image, base + ".raw");
    save_image_png(fz.image, base + ".png");
    json meta;
    meta["addr"] = fz.objective.addr.str();
    meta["tap"] = tap_name(fz.objective.tap);
    meta["channel"] = fz.objective.channel;
    meta["mode"] = fz_mode_name(fz.objective.mode);
    meta["seed"] = seed;
    meta["fingerprint"] = fz.config_fingerprint;
    meta["achieved_activation"] = fz.achieved_activation;
    meta["degenerate"] = fz.degenerate;
    meta["resolution"] = fz.image.dim(1);
    std::ofstream f(base + ".json");
    f << meta.dump(2) << "\n";
    if (!f) throw std::runtime_error("cannot write FZ metadata: " + base + ".json");
}

std::optional<FeatureVisual> load_feature_visual(const FZObjective& obj, uint64_t seed,
                                                 const std::string& fingerprint,
                                                 const std::string& dir, int resolution) {
    std::string base = (fs::path(dir) / fz_artifact_base(obj, seed, fingerprint)).string();
    std::ifstream f(base + ".json");
    if (!f) return std::nullopt;
    json meta = json::parse(f, nullptr, false);
    if (meta.is_discarded() || meta.value("fingerprint", "") != fingerprint) return std::nullopt;
    FeatureVisual fz;
    fz.objective = obj;
    fz.config_fingerprint = fingerprint;
    fz.achieved_activation = meta.value("achieved_activation", 0.0f);
    fz.degenerate = meta.value("degenerate", false);
    try {
        fz.image = load_tensor_raw(base + ".raw", {3, resolution, resolution});
    } catch (const std::exception&) {
        return std::nullopt;
    }
    return fz;
}

FeatureVisual obtain_fz(const Network& net, const FZObjective& obj, const FZConfig& cfg,
                        const std::string& store_dir) {
    if (!store_dir.empty()) {
        std::string fingerprint = fz_fingerprint(net, obj, cfg);
        if (auto hit =
                load_feature_visual(obj, cfg.seed, fingerprint, store_dir, net.input_resolution()))
            return *hit;
        FeatureVisual fz = optimize_fz(net, obj, cfg);
        save_feature_visual(fz, cfg.seed, store_dir);
        return fz;
    }
    return optimize_fz(net, obj, cfg);
}

std::array<FeatureVisual, 3> fz_triple(const Network& net, BlockAddress addr, int channel,
                                       const FZConfig& cfg, const std::string& store_dir) {
    std::array<FeatureVisual, 3> out;
    const TapKind taps[3] = {TapKind::In, TapKind::Pre, TapKind::Post};
    for (int i = 0; i < 3; ++i) {
        FZObjective obj{addr, taps[i], channel, FZMode::CenterNeuron};
        out[static_cast<size_t>(i)] = obtain_fz(net, obj, cfg, store_dir);
    }
    return out;
}

}  // namespace resstream
