#include "derm/hybridnet.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <unordered_set>

#include "derm/metrics.hpp"
#include "derm/rng.hpp"

namespace derm::hybridnet {

namespace {

struct Slice {
    std::size_t off = 0;
    std::size_t n = 0;
};

struct Layout {
    std::vector<Slice> conv_w, conv_b;
    Slice fc1_w, fc1_b, fc2_w, fc2_b;
    std::size_t total = 0;
    int fc_in = 0;
};

Layout layout_of(const HybridModelConfig& cfg) {
    Layout lay;
    std::size_t off = 0;
    int in_c = 3;
    for (const auto& blk : cfg.conv_blocks) {
        const std::size_t wn = static_cast<std::size_t>(blk.out_channels) * in_c * 9;
        lay.conv_w.push_back({off, wn});
        off += wn;
        lay.conv_b.push_back({off, static_cast<std::size_t>(blk.out_channels)});
        off += blk.out_channels;
        in_c = blk.out_channels;
    }
    lay.fc_in = cfg.conv_embed_dim + cfg.injection_dim;
    lay.fc1_w = {off, static_cast<std::size_t>(cfg.fc_hidden) * lay.fc_in};
    off += lay.fc1_w.n;
    lay.fc1_b = {off, static_cast<std::size_t>(cfg.fc_hidden)};
    off += lay.fc1_b.n;
    lay.fc2_w = {off, static_cast<std::size_t>(cfg.num_classes) * cfg.fc_hidden};
    off += lay.fc2_w.n;
    lay.fc2_b = {off, static_cast<std::size_t>(cfg.num_classes)};
    off += lay.fc2_b.n;
    lay.total = off;
    return lay;
}

// Conv with 3x3 kernel, padding 1: out dim = (in - 1) / stride + 1.
int conv_out(int in, int stride) { return (in - 1) / stride + 1; }

struct Trace {
    std::vector<std::vector<double>> block_in;  // CHW input per block
    std::vector<int> in_h, in_w;
    std::vector<std::vector<double>> preact;  // conv output, pre-ReLU
    std::vector<int> out_h, out_w;
    std::vector<double> gap_in;  // post-pool activation of the last block
    int gap_h = 0, gap_w = 0;
    std::vector<double> fc_in;
    std::vector<double> fc1_pre;
    std::array<double, kNumClasses> logits{};
};

void conv_forward(const double* w, const double* b, const std::vector<double>& in,
                  int in_c, int in_h, int in_w, std::vector<double>& out, int out_c,
                  int stride) {
    const int oh = conv_out(in_h, stride);
    const int ow = conv_out(in_w, stride);
    out.assign(static_cast<std::size_t>(out_c) * oh * ow, 0.0);
    for (int oc = 0; oc < out_c; ++oc) {
        double* out_plane = out.data() + static_cast<std::size_t>(oc) * oh * ow;
        for (int i = 0; i < oh * ow; ++i) out_plane[i] = b[oc];
        for (int ic = 0; ic < in_c; ++ic) {
            const double* in_plane = in.data() + static_cast<std::size_t>(ic) * in_h * in_w;
            const double* k = w + (static_cast<std::size_t>(oc) * in_c + ic) * 9;
            for (int ky = 0; ky < 3; ++ky) {
                for (int kx = 0; kx < 3; ++kx) {
                    const double kv = k[ky * 3 + kx];
                    if (kv == 0.0) continue;
                    for (int oy = 0; oy < oh; ++oy) {
                        const int iy = oy * stride + ky - 1;
                        if (iy < 0 || iy >= in_h) continue;
                        const double* in_row = in_plane + static_cast<std::size_t>(iy) * in_w;
                        double* out_row = out_plane + static_cast<std::size_t>(oy) * ow;
                        for (int ox = 0; ox < ow; ++ox) {
                            const int ix = ox * stride + kx - 1;
                            if (ix < 0 || ix >= in_w) continue;
                            out_row[ox] += kv * in_row[ix];
                        }
                    }
                }
            }
        }
    }
}

void conv_backward(const double* w, const std::vector<double>& in, int in_c, int in_h,
                   int in_w, const std::vector<double>& dout, int out_c, int stride,
                   double* dw, double* db, std::vector<double>* din) {
    const int oh = conv_out(in_h, stride);
    const int ow = conv_out(in_w, stride);
    if (din) din->assign(in.size(), 0.0);
    for (int oc = 0; oc < out_c; ++oc) {
        const double* dout_plane = dout.data() + static_cast<std::size_t>(oc) * oh * ow;
        double acc = 0.0;
        for (int i = 0; i < oh * ow; ++i) acc += dout_plane[i];
        db[oc] += acc;
        for (int ic = 0; ic < in_c; ++ic) {
            const double* in_plane = in.data() + static_cast<std::size_t>(ic) * in_h * in_w;
            double* dk = dw + (static_cast<std::size_t>(oc) * in_c + ic) * 9;
            double* din_plane = din ? din->data() + static_cast<std::size_t>(ic) * in_h * in_w : nullptr;
            const double* k = w + (static_cast<std::size_t>(oc) * in_c + ic) * 9;
            for (int ky = 0; ky < 3; ++ky) {
                for (int kx = 0; kx < 3; ++kx) {
                    double wsum = 0.0;
                    const double kv = k[ky * 3 + kx];
                    for (int oy = 0; oy < oh; ++oy) {
                        const int iy = oy * stride + ky - 1;
                        if (iy < 0 || iy >= in_h) continue;
                        const double* in_row = in_plane + static_cast<std::size_t>(iy) * in_w;
                        const double* dout_row = dout_plane + static_cast<std::size_t>(oy) * ow;
                        double* din_row = din_plane ? din_plane + static_cast<std::size_t>(iy) * in_w : nullptr;
                        for (int ox = 0; ox < ow; ++ox) {
                            const int ix = ox * stride + kx - 1;
                            if (ix < 0 || ix >= in_w) continue;
                            wsum += dout_row[ox] * in_row[ix];
                            if (din_row) din_row[ix] += kv * dout_row[ox];
                        }
                    }
                    dk[ky * 3 + kx] += wsum;
                }
            }
        }
    }
}

void avgpool_forward(const std::vector<double>& in, int c, int h, int w,
                     std::vector<double>& out, int& oh, int& ow) {
    oh = h / 2;
    ow = w / 2;
    out.assign(static_cast<std::size_t>(c) * oh * ow, 0.0);
    for (int ch = 0; ch < c; ++ch) {
        const double* ip = in.data() + static_cast<std::size_t>(ch) * h * w;
        double* op = out.data() + static_cast<std::size_t>(ch) * oh * ow;
        for (int y = 0; y < oh; ++y) {
            for (int x = 0; x < ow; ++x) {
                op[y * ow + x] = 0.25 * (ip[(2 * y) * w + 2 * x] + ip[(2 * y) * w + 2 * x + 1] +
                                         ip[(2 * y + 1) * w + 2 * x] + ip[(2 * y + 1) * w + 2 * x + 1]);
            }
        }
    }
}

void avgpool_backward(const std::vector<double>& dout, int c, int h, int w,
                      std::vector<double>& din) {
    const int oh = h / 2, ow = w / 2;
    din.assign(static_cast<std::size_t>(c) * h * w, 0.0);
    for (int ch = 0; ch < c; ++ch) {
        const double* dop = dout.data() + static_cast<std::size_t>(ch) * oh * ow;
        double* dip = din.data() + static_cast<std::size_t>(ch) * h * w;
        for (int y = 0; y < oh; ++y) {
            for (int x = 0; x < ow; ++x) {
                const double g = 0.25 * dop[y * ow + x];
                dip[(2 * y) * w + 2 * x] += g;
                dip[(2 * y) * w + 2 * x + 1] += g;
                dip[(2 * y + 1) * w + 2 * x] += g;
                dip[(2 * y + 1) * w + 2 * x + 1] += g;
            }
        }
    }
}

std::vector<double> image_to_chw(const imgproc::ImageRGB& img) {
    const int h = img.height, w = img.width;
    std::vector<double> out(static_cast<std::size_t>(3) * h * w);
    for (int c = 0; c < 3; ++c) {
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                out[(static_cast<std::size_t>(c) * h + y) * w + x] = img.at(x, y, c);
            }
        }
    }
    return out;
}

void check_inputs(const HybridModel& m, const imgproc::ImageRGB& img,
                  const features::FeatureVector* hand) {
    if (img.width != m.config.input_w || img.height != m.config.input_h) {
        throw std::runtime_error("forward: image size does not match model input size");
    }
    if (m.config.use_injection && hand == nullptr) {
        throw std::runtime_error("forward: model requires the handcrafted feature vector");
    }
    if (!m.config.use_injection && hand != nullptr) {
        throw std::runtime_error("forward: model was built without feature injection");
    }
}

void forward_impl(const HybridModel& m, const imgproc::ImageRGB& img,
                  const features::FeatureVector* hand, Trace& tr) {
    check_inputs(m, img, hand);
    const auto& cfg = m.config;
    const Layout lay = layout_of(cfg);
    const std::size_t blocks = cfg.conv_blocks.size();

    tr.block_in.resize(blocks);
    tr.in_h.resize(blocks);
    tr.in_w.resize(blocks);
    tr.preact.resize(blocks);
    tr.out_h.resize(blocks);
    tr.out_w.resize(blocks);

    std::vector<double> cur = image_to_chw(img);
    int cur_c = 3, cur_h = cfg.input_h, cur_w = cfg.input_w;
    for (std::size_t i = 0; i < blocks; ++i) {
        const auto& blk = cfg.conv_blocks[i];
        tr.block_in[i] = cur;
        tr.in_h[i] = cur_h;
        tr.in_w[i] = cur_w;
        conv_forward(m.params.data() + lay.conv_w[i].off, m.params.data() + lay.conv_b[i].off,
                     cur, cur_c, cur_h, cur_w, tr.preact[i], blk.out_channels, blk.stride);
        cur_h = conv_out(cur_h, blk.stride);
        cur_w = conv_out(cur_w, blk.stride);
        tr.out_h[i] = cur_h;
        tr.out_w[i] = cur_w;

        std::vector<double> act(tr.preact[i].size());
        for (std::size_t j = 0; j < act.size(); ++j) act[j] = std::max(0.0, tr.preact[i][j]);
        if (blk.pool) {
            int ph = 0, pw = 0;
            std::vector<double> pooled;
            avgpool_forward(act, blk.out_channels, cur_h, cur_w, pooled, ph, pw);
            cur = std::move(pooled);
            cur_h = ph;
            cur_w = pw;
        } else {
            cur = std::move(act);
        }
        cur_c = blk.out_channels;
    }

    tr.gap_in = cur;
    tr.gap_h = cur_h;
    tr.gap_w = cur_w;

    tr.fc_in.assign(lay.fc_in, 0.0);
    const double inv_hw = 1.0 / (static_cast<double>(cur_h) * cur_w);
    for (int c = 0; c < cfg.conv_embed_dim; ++c) {
        double acc = 0.0;
        const double* plane = cur.data() + static_cast<std::size_t>(c) * cur_h * cur_w;
        for (int j = 0; j < cur_h * cur_w; ++j) acc += plane[j];
        tr.fc_in[c] = acc * inv_hw;
    }
    if (cfg.use_injection) {
        for (int j = 0; j < cfg.injection_dim; ++j) {
            tr.fc_in[cfg.conv_embed_dim + j] = hand->values[j];
        }
    }

    tr.fc1_pre.assign(cfg.fc_hidden, 0.0);
    const double* w1 = m.params.data() + lay.fc1_w.off;
    const double* b1 = m.params.data() + lay.fc1_b.off;
    for (int j = 0; j < cfg.fc_hidden; ++j) {
        double acc = b1[j];
        const double* row = w1 + static_cast<std::size_t>(j) * lay.fc_in;
        for (int i = 0; i < lay.fc_in; ++i) acc += row[i] * tr.fc_in[i];
        tr.fc1_pre[j] = acc;
    }

    const double* w2 = m.params.data() + lay.fc2_w.off;
    const double* b2 = m.params.data() + lay.fc2_b.off;
    for (int k = 0; k < cfg.num_classes; ++k) {
        double acc = b2[k];
        const double* row = w2 + static_cast<std::size_t>(k) * cfg.fc_hidden;
        for (int j = 0; j < cfg.fc_hidden; ++j) acc += row[j] * std::max(0.0, tr.fc1_pre[j]);
        tr.logits[k] = acc;
    }
}

// Backpropagates dlogits through the trace, accumulating parameter gradients.
void backward_impl(const HybridModel& m, const Trace& tr,
                   const std::array<double, kNumClasses>& dlogits, std::vector<double>& grad) {
    const auto& cfg = m.config;
    const Layout lay = layout_of(cfg);

    std::vector<double> fc1_post(cfg.fc_hidden);
    for (int j = 0; j < cfg.fc_hidden; ++j) fc1_post[j] = std::max(0.0, tr.fc1_pre[j]);

    const double* w2 = m.params.data() + lay.fc2_w.off;
    double* dw2 = grad.data() + lay.fc2_w.off;
    double* db2 = grad.data() + lay.fc2_b.off;
    std::vector<double> dfc1_post(cfg.fc_hidden, 0.0);
    for (int k = 0; k < cfg.num_classes; ++k) {
        db2[k] += dlogits[k];
        const double* row = w2 + static_cast<std::size_t>(k) * cfg.fc_hidden;
        double* drow = dw2 + static_cast<std::size_t>(k) * cfg.fc_hidden;
        for (int j = 0; j < cfg.fc_hidden; ++j) {
            drow[j] += dlogits[k] * fc1_post[j];
            dfc1_post[j] += row[j] * dlogits[k];
        }
    }

    std::vector<double> dfc1_pre(cfg.fc_hidden);
    for (int j = 0; j < cfg.fc_hidden; ++j) {
        dfc1_pre[j] = tr.fc1_pre[j] > 0.0 ? dfc1_post[j] : 0.0;
    }

    const double* w1 = m.params.data() + lay.fc1_w.off;
    double* dw1 = grad.data() + lay.fc1_w.off;
    double* db1 = grad.data() + lay.fc1_b.off;
    std::vector<double> dfc_in(lay.fc_in, 0.0);
    for (int j = 0; j < cfg.fc_hidden; ++j) {
        db1[j] += dfc1_pre[j];
        const double* row = w1 + static_cast<std::size_t>(j) * lay.fc_in;
        double* drow = dw1 + static_cast<std::size_t>(j) * lay.fc_in;
        const double g = dfc1_pre[j];
        if (g == 0.0) continue;
        for (int i = 0; i < lay.fc_in; ++i) {
            drow[i] += g * tr.fc_in[i];
            dfc_in[i] += row[i] * g;
        }
    }

    // GAP backward into the last block's post-pool activation.
    const std::size_t blocks = cfg.conv_blocks.size();
    const double inv_hw = 1.0 / (static_cast<double>(tr.gap_h) * tr.gap_w);
    std::vector<double> dcur(tr.gap_in.size(), 0.0);
    for (int c = 0; c < cfg.conv_embed_dim; ++c) {
        const double g = dfc_in[c] * inv_hw;
        double* plane = dcur.data() + static_cast<std::size_t>(c) * tr.gap_h * tr.gap_w;
        for (int j = 0; j < tr.gap_h * tr.gap_w; ++j) plane[j] += g;
    }

    for (std::size_t i = blocks; i-- > 0;) {
        const auto& blk = cfg.conv_blocks[i];
        std::vector<double> dact;
        if (blk.pool) {
            avgpool_backward(dcur, blk.out_channels, tr.out_h[i], tr.out_w[i], dact);
        } else {
            dact = std::move(dcur);
        }
        // ReLU backward through the conv pre-activations.
        std::vector<double> dpre(dact.size());
        for (std::size_t j = 0; j < dact.size(); ++j) {
            dpre[j] = tr.preact[i][j] > 0.0 ? dact[j] : 0.0;
        }
        const int in_c = i == 0 ? 3 : cfg.conv_blocks[i - 1].out_channels;
        std::vector<double> din;
        conv_backward(m.params.data() + lay.conv_w[i].off, tr.block_in[i], in_c, tr.in_h[i],
                      tr.in_w[i], dpre, blk.out_channels, blk.stride,
                      grad.data() + lay.conv_w[i].off, grad.data() + lay.conv_b[i].off,
                      i > 0 ? &din : nullptr);
        dcur = std::move(din);
    }
}

void put_u32(std::ofstream& out, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ofstream& out, std::uint64_t v) {
    put_u32(out, static_cast<std::uint32_t>(v));
    put_u32(out, static_cast<std::uint32_t>(v >> 32));
}

std::uint32_t get_u32(std::ifstream& in) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

std::uint64_t get_u64(std::ifstream& in) {
    const std::uint64_t lo = get_u32(in);
    const std::uint64_t hi = get_u32(in);
    return lo | (hi << 32);
}

constexpr std::uint32_t kCheckpointVersion = 1;

}  // namespace

void validate_config(const HybridModelConfig& cfg) {
    if (cfg.conv_blocks.empty()) {
        throw std::invalid_argument("hybridnet: at least one conv block is required");
    }
    if (cfg.num_classes != kNumClasses) {
        throw std::invalid_argument("hybridnet: num_classes must be 7");
    }
    if (cfg.injection_dim != kInjectionDim) {
        throw std::invalid_argument("hybridnet: injection_dim must be 200");
    }
    if (cfg.conv_embed_dim != cfg.conv_blocks.back().out_channels) {
        throw std::invalid_argument("hybridnet: conv_embed_dim must equal the last block's channels");
    }
    if (cfg.fc_hidden < 1 || cfg.input_w < 1 || cfg.input_h < 1) {
        throw std::invalid_argument("hybridnet: non-positive dimension in config");
    }
    int h = cfg.input_h, w = cfg.input_w;
    for (const auto& blk : cfg.conv_blocks) {
        if (blk.out_channels < 1 || blk.stride < 1) {
            throw std::invalid_argument("hybridnet: bad conv block spec");
        }
        h = conv_out(h, blk.stride);
        w = conv_out(w, blk.stride);
        if (blk.pool) {
            h /= 2;
            w /= 2;
        }
        if (h < 1 || w < 1) {
            throw std::invalid_argument("hybridnet: spatial dimensions collapse below 1x1");
        }
    }
}

std::size_t parameter_count(const HybridModelConfig& cfg) { return layout_of(cfg).total; }

std::vector<std::size_t> injection_facing_indices(const HybridModelConfig& cfg) {
    const Layout lay = layout_of(cfg);
    std::vector<std::size_t> out;
    if (!cfg.use_injection) return out;
    out.reserve(static_cast<std::size_t>(cfg.fc_hidden) * cfg.injection_dim);
    for (int j = 0; j < cfg.fc_hidden; ++j) {
        for (int i = cfg.conv_embed_dim; i < lay.fc_in; ++i) {
            out.push_back(lay.fc1_w.off + static_cast<std::size_t>(j) * lay.fc_in + i);
        }
    }
    return out;
}

HybridModel init_model(const HybridModelConfig& cfg) {
    validate_config(cfg);
    const Layout lay = layout_of(cfg);
    HybridModel m;
    m.config = cfg;
    m.params.assign(lay.total, 0.0);

    Rng rng(cfg.seed);
    auto fill_uniform = [&](const Slice& s, int fan_in) {
        const double limit = std::sqrt(3.0 / static_cast<double>(fan_in));
        for (std::size_t i = 0; i < s.n; ++i) {
            m.params[s.off + i] = rng.uniform(-limit, limit);
        }
    };

    int in_c = 3;
    for (std::size_t i = 0; i < cfg.conv_blocks.size(); ++i) {
        fill_uniform(lay.conv_w[i], in_c * 9);
        in_c = cfg.conv_blocks[i].out_channels;
    }
    fill_uniform(lay.fc1_w, lay.fc_in);
    fill_uniform(lay.fc2_w, cfg.fc_hidden);
    return m;
}

std::array<double, kNumClasses> forward(const HybridModel& m, const imgproc::ImageRGB& img,
                                        const features::FeatureVector* hand) {
    Trace tr;
    forward_impl(m, img, hand, tr);
    return tr.logits;
}

std::vector<double> embed(const HybridModel& m, const imgproc::ImageRGB& img,
                          const features::FeatureVector* hand) {
    Trace tr;
    forward_impl(m, img, hand, tr);
    std::vector<double> out(m.config.fc_hidden);
    for (int j = 0; j < m.config.fc_hidden; ++j) out[j] = std::max(0.0, tr.fc1_pre[j]);
    return out;
}

std::array<double, kNumClasses> softmax(const std::array<double, kNumClasses>& logits) {
    const double mx = *std::max_element(logits.begin(), logits.end());
    std::array<double, kNumClasses> out{};
    double denom = 0.0;
    for (int k = 0; k < kNumClasses; ++k) {
        out[k] = std::exp(logits[k] - mx);
        denom += out[k];
    }
    for (double& v : out) v /= denom;
    return out;
}

double cross_entropy(const std::array<double, kNumClasses>& logits, int label) {
    if (label < 0 || label >= kNumClasses) {
        throw std::invalid_argument("cross_entropy: label out of range");
    }
    for (double v : logits) {
        if (!std::isfinite(v)) throw std::runtime_error("cross_entropy: non-finite logit");
    }
    const double mx = *std::max_element(logits.begin(), logits.end());
    double denom = 0.0;
    for (double v : logits) denom += std::exp(v - mx);
    return std::log(denom) - (logits[label] - mx);
}

double dice_loss(const segmask::ProbMap& pred, const segmask::BinaryMask& gt, double eps) {
    if (pred.width != gt.width || pred.height != gt.height) {
        throw std::runtime_error("dice_loss: dimension mismatch");
    }
    double inter = 0.0, psum = 0.0, gsum = 0.0;
    for (std::size_t i = 0; i < pred.values.size(); ++i) {
        const double g = gt.values[i] ? 1.0 : 0.0;
        inter += pred.values[i] * g;
        psum += pred.values[i];
        gsum += g;
    }
    return 1.0 - (2.0 * inter + eps) / (psum + gsum + eps);
}

segmask::ProbMap dice_loss_grad(const segmask::ProbMap& pred, const segmask::BinaryMask& gt,
                                double eps) {
    if (pred.width != gt.width || pred.height != gt.height) {
        throw std::runtime_error("dice_loss_grad: dimension mismatch");
    }
    double inter = 0.0, psum = 0.0, gsum = 0.0;
    for (std::size_t i = 0; i < pred.values.size(); ++i) {
        const double g = gt.values[i] ? 1.0 : 0.0;
        inter += pred.values[i] * g;
        psum += pred.values[i];
        gsum += g;
    }
    const double denom = psum + gsum + eps;
    const double num = 2.0 * inter + eps;
    segmask::ProbMap grad(pred.width, pred.height);
    for (std::size_t i = 0; i < pred.values.size(); ++i) {
        const double g = gt.values[i] ? 1.0 : 0.0;
        grad.values[i] = -(2.0 * g * denom - num) / (denom * denom);
    }
    return grad;
}

double loss_and_gradient(const HybridModel& m, const imgproc::ImageRGB& img,
                         const features::FeatureVector* hand, int label,
                         std::vector<double>& grad) {
    if (grad.size() != m.params.size()) {
        throw std::invalid_argument("loss_and_gradient: gradient buffer size mismatch");
    }
    Trace tr;
    forward_impl(m, img, hand, tr);
    const double loss = cross_entropy(tr.logits, label);
    auto dlogits = softmax(tr.logits);
    dlogits[label] -= 1.0;
    backward_impl(m, tr, dlogits, grad);
    return loss;
}

TrainResult train(const HybridModel& m, const std::vector<TrainSample>& data,
                  const TrainConfig& tc, const std::vector<TrainSample>* val) {
    if (data.empty()) throw std::invalid_argument("train: empty data");
    if (tc.learning_rate < 0.0 || tc.epochs < 0 || tc.batch_size < 1 ||
        tc.momentum < 0.0 || tc.momentum >= 1.0) {
        throw std::invalid_argument("train: bad train config");
    }
    if (tc.use_injection != m.config.use_injection) {
        throw std::invalid_argument("train: use_injection disagrees with the model config");
    }
    for (const auto& s : data) {
        if (s.label < 0 || s.label >= kNumClasses) {
            throw std::invalid_argument("train: label out of range");
        }
    }

    TrainResult result;
    result.model = m;
    auto& model = result.model;

    std::vector<double> velocity(model.params.size(), 0.0);
    std::vector<double> grad(model.params.size(), 0.0);
    std::vector<std::size_t> order(data.size());
    const double nan = std::numeric_limits<double>::quiet_NaN();

    for (int epoch = 0; epoch < tc.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), 0);
        Rng rng(derive_seed(tc.seed, static_cast<std::uint64_t>(epoch)));
        rng.shuffle(order);

        double loss_sum = 0.0;
        std::size_t pos = 0;
        while (pos < order.size()) {
            const std::size_t end = std::min(pos + static_cast<std::size_t>(tc.batch_size), order.size());
            std::fill(grad.begin(), grad.end(), 0.0);
            for (std::size_t i = pos; i < end; ++i) {
                const auto& s = data[order[i]];
                loss_sum += loss_and_gradient(model, s.image,
                                              model.config.use_injection ? &s.hand : nullptr,
                                              s.label, grad);
            }
            const double inv_batch = 1.0 / static_cast<double>(end - pos);
            for (std::size_t j = 0; j < model.params.size(); ++j) {
                velocity[j] = tc.momentum * velocity[j] + grad[j] * inv_batch;
                model.params[j] -= tc.learning_rate * velocity[j];
            }
            pos = end;
        }

        EpochStats stats;
        stats.epoch = epoch;
        stats.train_loss = loss_sum / static_cast<double>(data.size());
        stats.val_loss = nan;
        stats.val_bacc = nan;
        if (val && !val->empty()) {
            double vloss = 0.0;
            std::vector<int> pred, truth;
            for (const auto& s : *val) {
                const auto logits = forward(model, s.image,
                                            model.config.use_injection ? &s.hand : nullptr);
                vloss += cross_entropy(logits, s.label);
                pred.push_back(static_cast<int>(
                    std::max_element(logits.begin(), logits.end()) - logits.begin()));
                truth.push_back(s.label);
            }
            stats.val_loss = vloss / static_cast<double>(val->size());
            const auto cm = metrics::confusion_matrix(pred, truth, kNumClasses);
            stats.val_bacc = metrics::summarize(cm).bacc;
        }
        result.history.push_back(stats);
    }
    return result;
}

double relu_margin(const HybridModel& m, const imgproc::ImageRGB& img,
                   const features::FeatureVector* hand) {
    Trace tr;
    forward_impl(m, img, hand, tr);
    double margin = std::numeric_limits<double>::infinity();
    for (const auto& pre : tr.preact) {
        for (double v : pre) margin = std::min(margin, std::abs(v));
    }
    for (double v : tr.fc1_pre) margin = std::min(margin, std::abs(v));
    return margin;
}

double gradient_check(const HybridModel& m, const imgproc::ImageRGB& img,
                      const features::FeatureVector* hand, int label, double eps,
                      std::uint64_t seed, std::size_t min_coords, std::size_t min_injection) {
    if (eps < 1e-7 || eps > 1e-3) {
        throw std::invalid_argument("gradient_check: eps must lie in [1e-7, 1e-3]");
    }
    std::vector<double> analytic(m.params.size(), 0.0);
    loss_and_gradient(m, img, hand, label, analytic);

    Rng rng(derive_seed(seed, 0x6e657477));
    std::vector<std::size_t> coords;
    std::unordered_set<std::size_t> chosen;

    auto inj = injection_facing_indices(m.config);
    rng.shuffle(inj);
    for (std::size_t i = 0; i < inj.size() && coords.size() < min_injection; ++i) {
        if (chosen.insert(inj[i]).second) coords.push_back(inj[i]);
    }
    std::vector<std::size_t> all(m.params.size());
    std::iota(all.begin(), all.end(), 0);
    rng.shuffle(all);
    for (std::size_t i = 0; i < all.size() && coords.size() < min_coords; ++i) {
        if (chosen.insert(all[i]).second) coords.push_back(all[i]);
    }

    HybridModel probe = m;
    double max_rel = 0.0;
    for (std::size_t idx : coords) {
        const double saved = probe.params[idx];
        probe.params[idx] = saved + eps;
        const double fp = cross_entropy(forward(probe, img, hand), label);
        probe.params[idx] = saved - eps;
        const double fm = cross_entropy(forward(probe, img, hand), label);
        probe.params[idx] = saved;
        const double fd = (fp - fm) / (2.0 * eps);
        const double rel = std::abs(analytic[idx] - fd) /
                           std::max({std::abs(analytic[idx]), std::abs(fd), 1e-8});
        max_rel = std::max(max_rel, rel);
    }
    return max_rel;
}

void save_model(const HybridModel& m, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write checkpoint: " + path.string());
    out.write("HYBN", 4);
    put_u32(out, kCheckpointVersion);
    const auto& cfg = m.config;
    put_u32(out, static_cast<std::uint32_t>(cfg.input_w));
    put_u32(out, static_cast<std::uint32_t>(cfg.input_h));
    put_u32(out, static_cast<std::uint32_t>(cfg.conv_blocks.size()));
    for (const auto& blk : cfg.conv_blocks) {
        put_u32(out, static_cast<std::uint32_t>(blk.out_channels));
        put_u32(out, static_cast<std::uint32_t>(blk.stride));
        put_u32(out, blk.pool ? 1 : 0);
    }
    put_u32(out, static_cast<std::uint32_t>(cfg.conv_embed_dim));
    put_u32(out, static_cast<std::uint32_t>(cfg.injection_dim));
    put_u32(out, static_cast<std::uint32_t>(cfg.fc_hidden));
    put_u32(out, static_cast<std::uint32_t>(cfg.num_classes));
    put_u32(out, cfg.use_injection ? 1 : 0);
    put_u64(out, cfg.seed);
    put_u64(out, m.params.size());
    for (double v : m.params) {
        std::uint64_t bits;
        std::memcpy(&bits, &v, 8);
        put_u64(out, bits);
    }
    if (!out) throw std::runtime_error("failed writing checkpoint: " + path.string());
}

HybridModel load_model(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open checkpoint: " + path.string());
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "HYBN", 4) != 0) {
        throw std::runtime_error("bad checkpoint magic in " + path.string());
    }
    const std::uint32_t version = get_u32(in);
    if (version != kCheckpointVersion) {
        throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
    }
    HybridModelConfig cfg;
    cfg.input_w = static_cast<int>(get_u32(in));
    cfg.input_h = static_cast<int>(get_u32(in));
    const std::uint32_t blocks = get_u32(in);
    cfg.conv_blocks.clear();
    for (std::uint32_t i = 0; i < blocks; ++i) {
        ConvBlockSpec blk;
        blk.out_channels = static_cast<int>(get_u32(in));
        blk.stride = static_cast<int>(get_u32(in));
        blk.pool = get_u32(in) != 0;
        cfg.conv_blocks.push_back(blk);
    }
    cfg.conv_embed_dim = static_cast<int>(get_u32(in));
    cfg.injection_dim = static_cast<int>(get_u32(in));
    cfg.fc_hidden = static_cast<int>(get_u32(in));
    cfg.num_classes = static_cast<int>(get_u32(in));
    cfg.use_injection = get_u32(in) != 0;
    cfg.seed = get_u64(in);
    const std::uint64_t count = get_u64(in);
    if (!in) throw std::runtime_error("truncated checkpoint header in " + path.string());
    validate_config(cfg);
    if (count != parameter_count(cfg)) {
        throw std::runtime_error("checkpoint parameter count mismatch in " + path.string());
    }
    HybridModel m;
    m.config = cfg;
    m.params.resize(count);
    for (auto& v : m.params) {
        const std::uint64_t bits = get_u64(in);
        std::memcpy(&v, &bits, 8);
    }
    if (!in) throw std::runtime_error("truncated checkpoint payload in " + path.string());
    return m;
}

void save_history_csv(const std::vector<EpochStats>& history, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write history: " + path.string());
    out << "epoch,train_loss,val_loss,val_bacc\n";
    char buf[128];
    for (const auto& e : history) {
        std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g,%.17g\n", e.epoch, e.train_loss,
                      e.val_loss, e.val_bacc);
        out << buf;
    }
}

}  // namespace derm::hybridnet
