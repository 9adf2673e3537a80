#include "habitus/nn.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

namespace habitus {

namespace {

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// SiLU(z) = z * sigmoid(z); derivative = s * (1 + z * (1 - s))
void silu_forward(Tensor& t) {
    const std::int64_t n = static_cast<std::int64_t>(t.v.size());
#pragma omp parallel for schedule(static) if (kernels::parallel_enabled() && n > 4096)
    for (std::int64_t i = 0; i < n; ++i) {
        const double z = t.v[i];
        t.v[i] = z * sigmoid(z);
    }
}

double he_std(int fan_in) { return std::sqrt(2.0 / fan_in); }

}  // namespace

// --- BatchNorm -------------------------------------------------------------

void BatchNorm::init(int c) {
    channels = c;
    gamma.assign(c, 1.0);
    beta.assign(c, 0.0);
    grad_gamma.assign(c, 0.0);
    grad_beta.assign(c, 0.0);
    running_mean.assign(c, 0.0);
    running_var.assign(c, 1.0);
}

Tensor BatchNorm::forward(const Tensor& x, Mode mode) {
    mode_ = mode;
    const int m = x.n * x.h * x.w;  // reduction size per channel
    inv_std_.assign(channels, 0.0);
    xhat_ = Tensor(x.n, x.c, x.h, x.w);
    Tensor y(x.n, x.c, x.h, x.w);

#pragma omp parallel for schedule(static) if (kernels::parallel_enabled() && channels > 1)
    for (int k = 0; k < channels; ++k) {
        double mean, var;
        if (mode == Mode::Train) {
            double sum = 0.0;
            for (int i = 0; i < x.n; ++i) {
                const double* p = x.plane(i, k);
                for (std::size_t j = 0; j < x.hw(); ++j) sum += p[j];
            }
            mean = sum / m;
            double sq = 0.0;
            for (int i = 0; i < x.n; ++i) {
                const double* p = x.plane(i, k);
                for (std::size_t j = 0; j < x.hw(); ++j) {
                    const double d = p[j] - mean;
                    sq += d * d;
                }
            }
            var = sq / m;  // biased, as used for normalisation
            running_mean[k] = (1.0 - momentum) * running_mean[k] + momentum * mean;
            running_var[k] = (1.0 - momentum) * running_var[k] + momentum * var;
        } else {
            mean = running_mean[k];
            var = running_var[k];
        }
        const double inv = 1.0 / std::sqrt(var + eps);
        inv_std_[k] = inv;
        for (int i = 0; i < x.n; ++i) {
            const double* p = x.plane(i, k);
            double* xh = xhat_.plane(i, k);
            double* yo = y.plane(i, k);
            for (std::size_t j = 0; j < x.hw(); ++j) {
                xh[j] = (p[j] - mean) * inv;
                yo[j] = gamma[k] * xh[j] + beta[k];
            }
        }
    }
    return y;
}

Tensor BatchNorm::backward(const Tensor& dy) {
    const int m = dy.n * dy.h * dy.w;
    Tensor dx(dy.n, dy.c, dy.h, dy.w);
#pragma omp parallel for schedule(static) if (kernels::parallel_enabled() && channels > 1)
    for (int k = 0; k < channels; ++k) {
        double sum_dy = 0.0, sum_dy_xhat = 0.0;
        for (int i = 0; i < dy.n; ++i) {
            const double* d = dy.plane(i, k);
            const double* xh = xhat_.plane(i, k);
            for (std::size_t j = 0; j < dy.hw(); ++j) {
                sum_dy += d[j];
                sum_dy_xhat += d[j] * xh[j];
            }
        }
        grad_beta[k] += sum_dy;
        grad_gamma[k] += sum_dy_xhat;

        const double g = gamma[k];
        const double inv = inv_std_[k];
        for (int i = 0; i < dy.n; ++i) {
            const double* d = dy.plane(i, k);
            const double* xh = xhat_.plane(i, k);
            double* o = dx.plane(i, k);
            if (mode_ == Mode::Train) {
                // dx = (g*inv/m) * (m*dy - sum(dy) - xhat * sum(dy*xhat))
                for (std::size_t j = 0; j < dy.hw(); ++j)
                    o[j] = g * inv / m * (m * d[j] - sum_dy - xh[j] * sum_dy_xhat);
            } else {
                for (std::size_t j = 0; j < dy.hw(); ++j) o[j] = g * inv * d[j];
            }
        }
    }
    return dx;
}

// --- ConvModule ------------------------------------------------------------

void ConvModule::init(int in_c, int out_c, int kernel, int stride, int pad, Rng& rng,
                      bool with_bn) {
    conv.in_c = in_c;
    conv.out_c = out_c;
    conv.kernel = kernel;
    conv.stride = stride;
    conv.pad = pad;
    has_bn = with_bn;
    weight = Tensor(out_c, in_c, kernel, kernel);
    grad_weight = Tensor(out_c, in_c, kernel, kernel);
    const double std = he_std(in_c * kernel * kernel);
    for (double& w : weight.v) w = std * rng.normal();
    if (has_bn) {
        bn.init(out_c);
    } else {
        bias.assign(out_c, 0.0);
        grad_bias.assign(out_c, 0.0);
    }
}

Tensor ConvModule::forward(const Tensor& x, Mode mode) {
    if (x.c != conv.in_c) throw Error("micronet", "conv input channel mismatch");
    x_ = x;
    conv.in_h = x.h;
    conv.in_w = x.w;
    Tensor y(x.n, conv.out_c, conv.out_h(), conv.out_w());
    kernels::conv2d_forward(conv, x.n, x.v.data(), weight.v.data(),
                            has_bn ? nullptr : bias.data(), y.v.data());
    if (has_bn) y = bn.forward(y, mode);
    z_ = y;  // pre-activation
    silu_forward(y);
    return y;
}

Tensor ConvModule::backward(const Tensor& dy) {
    // through SiLU
    Tensor dz = dy;
    const std::int64_t nz = static_cast<std::int64_t>(dz.v.size());
#pragma omp parallel for schedule(static) if (kernels::parallel_enabled() && nz > 4096)
    for (std::int64_t i = 0; i < nz; ++i) {
        const double z = z_.v[i];
        const double s = sigmoid(z);
        dz.v[i] *= s * (1.0 + z * (1.0 - s));
    }
    if (has_bn) dz = bn.backward(dz);
    Tensor dx(x_.n, x_.c, x_.h, x_.w);
    kernels::conv2d_backward_data(conv, x_.n, dz.v.data(), weight.v.data(), dx.v.data());
    kernels::conv2d_backward_weights(conv, x_.n, dz.v.data(), x_.v.data(), grad_weight.v.data(),
                                     has_bn ? nullptr : grad_bias.data());
    return dx;
}

void ConvModule::collect_params(std::vector<ParamView>& out, const std::string& prefix) {
    out.push_back({prefix + ".w", weight.v.data(), grad_weight.v.data(), weight.v.size()});
    if (has_bn) {
        out.push_back({prefix + ".bn.gamma", bn.gamma.data(), bn.grad_gamma.data(), bn.gamma.size()});
        out.push_back({prefix + ".bn.beta", bn.beta.data(), bn.grad_beta.data(), bn.beta.size()});
    } else {
        out.push_back({prefix + ".b", bias.data(), grad_bias.data(), bias.size()});
    }
}

void ConvModule::collect_state(std::vector<StateView>& out, const std::string& prefix) {
    out.push_back({prefix + ".w", weight.v.data(), weight.v.size()});
    if (has_bn) {
        out.push_back({prefix + ".bn.gamma", bn.gamma.data(), bn.gamma.size()});
        out.push_back({prefix + ".bn.beta", bn.beta.data(), bn.beta.size()});
        out.push_back({prefix + ".bn.rmean", bn.running_mean.data(), bn.running_mean.size()});
        out.push_back({prefix + ".bn.rvar", bn.running_var.data(), bn.running_var.size()});
    } else {
        out.push_back({prefix + ".b", bias.data(), bias.size()});
    }
}

// --- Bottleneck ------------------------------------------------------------

void Bottleneck::init(int channels, Rng& rng) {
    conv1.init(channels, channels, 1, 1, 0, rng);
    conv2.init(channels, channels, 1, 1, 0, rng);
}

Tensor Bottleneck::forward(const Tensor& x, Mode mode) {
    Tensor y = conv2.forward(conv1.forward(x, mode), mode);
    for (std::size_t i = 0; i < y.v.size(); ++i) y.v[i] += x.v[i];
    return y;
}

Tensor Bottleneck::backward(const Tensor& dy) {
    Tensor dx = conv1.backward(conv2.backward(dy));
    for (std::size_t i = 0; i < dx.v.size(); ++i) dx.v[i] += dy.v[i];
    return dx;
}

void Bottleneck::collect_params(std::vector<ParamView>& out, const std::string& prefix) {
    conv1.collect_params(out, prefix + ".conv1");
    conv2.collect_params(out, prefix + ".conv2");
}

void Bottleneck::collect_state(std::vector<StateView>& out, const std::string& prefix) {
    conv1.collect_state(out, prefix + ".conv1");
    conv2.collect_state(out, prefix + ".conv2");
}

// --- C2f ---------------------------------------------------------------

void C2f::init(int in_c, int out_c, int n_bottlenecks, Rng& rng) {
    entry_channels = std::max(out_c / 2, 4);
    entry.init(in_c, entry_channels, 1, 1, 0, rng);
    bottlenecks.resize(n_bottlenecks);
    for (Bottleneck& b : bottlenecks) b.init(entry_channels, rng);
    exit.init(entry_channels * (1 + n_bottlenecks), out_c, 1, 1, 0, rng);
}

Tensor C2f::forward(const Tensor& x, Mode mode) {
    std::vector<Tensor> stages;
    stages.reserve(bottlenecks.size() + 1);
    stages.push_back(entry.forward(x, mode));
    for (Bottleneck& b : bottlenecks) stages.push_back(b.forward(stages.back(), mode));

    const int ce = entry_channels;
    Tensor cat(x.n, ce * static_cast<int>(stages.size()), stages[0].h, stages[0].w);
    for (int i = 0; i < cat.n; ++i)
        for (std::size_t s = 0; s < stages.size(); ++s)
            std::memcpy(cat.plane(i, static_cast<int>(s) * ce), stages[s].plane(i, 0),
                        sizeof(double) * ce * stages[s].hw());
    return exit.forward(cat, mode);
}

Tensor C2f::backward(const Tensor& dy) {
    Tensor dcat = exit.backward(dy);
    const int ce = entry_channels;
    const int n_stage = static_cast<int>(bottlenecks.size()) + 1;

    std::vector<Tensor> dstage(n_stage);
    for (int s = 0; s < n_stage; ++s) {
        dstage[s] = Tensor(dcat.n, ce, dcat.h, dcat.w);
        for (int i = 0; i < dcat.n; ++i)
            std::memcpy(dstage[s].plane(i, 0), dcat.plane(i, s * ce),
                        sizeof(double) * ce * dcat.hw());
    }
    // walk the chain backwards; each bottleneck feeds gradient to its input
    for (int s = n_stage - 1; s >= 1; --s) {
        Tensor din = bottlenecks[s - 1].backward(dstage[s]);
        for (std::size_t i = 0; i < din.v.size(); ++i) dstage[s - 1].v[i] += din.v[i];
    }
    return entry.backward(dstage[0]);
}

void C2f::collect_params(std::vector<ParamView>& out, const std::string& prefix) {
    entry.collect_params(out, prefix + ".entry");
    for (std::size_t i = 0; i < bottlenecks.size(); ++i)
        bottlenecks[i].collect_params(out, prefix + ".b" + std::to_string(i));
    exit.collect_params(out, prefix + ".exit");
}

void C2f::collect_state(std::vector<StateView>& out, const std::string& prefix) {
    entry.collect_state(out, prefix + ".entry");
    for (std::size_t i = 0; i < bottlenecks.size(); ++i)
        bottlenecks[i].collect_state(out, prefix + ".b" + std::to_string(i));
    exit.collect_state(out, prefix + ".exit");
}

// --- Linear ------------------------------------------------------------

void Linear::init(int in_f, int out_f, Rng& rng) {
    in_features = in_f;
    out_features = out_f;
    weight.assign(static_cast<std::size_t>(in_f) * out_f, 0.0);
    grad_weight.assign(weight.size(), 0.0);
    bias.assign(out_f, 0.0);
    grad_bias.assign(out_f, 0.0);
    const double std = he_std(in_f);
    for (double& w : weight) w = std * rng.normal();
}

Logits Linear::forward(const std::vector<double>& x, int n) {
    x_ = x;
    n_ = n;
    Logits y(n, out_features);
    for (int i = 0; i < n; ++i) {
        const double* xi = x.data() + static_cast<std::size_t>(i) * in_features;
        for (int o = 0; o < out_features; ++o) {
            double acc = bias[o];
            const double* w = weight.data() + static_cast<std::size_t>(o) * in_features;
            for (int j = 0; j < in_features; ++j) acc += w[j] * xi[j];
            y.at(i, o) = acc;
        }
    }
    return y;
}

std::vector<double> Linear::backward(const Logits& dy) {
    std::vector<double> dx(static_cast<std::size_t>(n_) * in_features, 0.0);
    for (int i = 0; i < n_; ++i) {
        const double* xi = x_.data() + static_cast<std::size_t>(i) * in_features;
        double* dxi = dx.data() + static_cast<std::size_t>(i) * in_features;
        for (int o = 0; o < out_features; ++o) {
            const double g = dy.at(i, o);
            grad_bias[o] += g;
            double* gw = grad_weight.data() + static_cast<std::size_t>(o) * in_features;
            const double* w = weight.data() + static_cast<std::size_t>(o) * in_features;
            for (int j = 0; j < in_features; ++j) {
                gw[j] += g * xi[j];
                dxi[j] += g * w[j];
            }
        }
    }
    return dx;
}

// --- MicroNet ----------------------------------------------------------

MicroNet::MicroNet(const ModelConfig& config, std::uint64_t init_seed) : cfg_(config) {
    Rng rng(init_seed);
    const auto& w = cfg_.stage_widths;
    const auto& b = cfg_.bottleneck_counts;
    stem1_.init(cfg_.in_channels, w[0], 3, 2, 1, rng);
    stem2_.init(w[0], w[1], 3, 2, 1, rng);
    c2f1_.init(w[1], w[1], b[0], rng);
    down3_.init(w[1], w[2], 3, 2, 1, rng);
    c2f2_.init(w[2], w[2], b[1], rng);
    down4_.init(w[2], w[3], 3, 2, 1, rng);
    c2f3_.init(w[3], w[3], b[2], rng);
    down5_.init(w[3], w[4], 3, 2, 1, rng);
    c2f4_.init(w[4], w[4], b[3], rng);
    head_conv_.init(w[4], w[4], 1, 1, 0, rng);
    fc_.init(w[4], cfg_.class_count, rng);
}

ForwardResult MicroNet::forward(const Tensor& x, Mode mode, std::uint64_t dropout_seed) {
    if (x.h != cfg_.input_side || x.w != cfg_.input_side)
        throw Error("micronet", "input side " + std::to_string(x.h) + " does not match model (" +
                                    std::to_string(cfg_.input_side) + ")");
    mode_ = mode;
    Tensor t = stem1_.forward(x, mode);
    t = stem2_.forward(t, mode);
    t = c2f1_.forward(t, mode);
    t = down3_.forward(t, mode);
    t = c2f2_.forward(t, mode);
    t = down4_.forward(t, mode);
    t = c2f3_.forward(t, mode);
    t = down5_.forward(t, mode);
    t = c2f4_.forward(t, mode);

    ForwardResult res;
    res.a_last = t;
    res.logits = forward_head(t, mode, dropout_seed);
    return res;
}

Logits MicroNet::forward_head(const Tensor& a_last, Mode mode) {
    return forward_head(a_last, mode, 0);
}

Logits MicroNet::forward_head(const Tensor& a_last, Mode mode, std::uint64_t dropout_seed) {
    mode_ = mode;
    head_in_ = a_last;
    head_conv_out_ = head_conv_.forward(a_last, mode);

    // adaptive average pool to 1x1
    const Tensor& hc = head_conv_out_;
    pooled_.assign(static_cast<std::size_t>(hc.n) * hc.c, 0.0);
    for (int i = 0; i < hc.n; ++i)
        for (int k = 0; k < hc.c; ++k) {
            const double* p = hc.plane(i, k);
            double acc = 0.0;
            for (std::size_t j = 0; j < hc.hw(); ++j) acc += p[j];
            pooled_[static_cast<std::size_t>(i) * hc.c + k] = acc / static_cast<double>(hc.hw());
        }

    // dropout: identity at inference or rate 0
    dropout_mask_.assign(pooled_.size(), 1.0);
    if (mode == Mode::Train && cfg_.dropout_rate > 0.0) {
        Rng rng(dropout_seed);
        const double keep = 1.0 - cfg_.dropout_rate;
        for (double& mv : dropout_mask_) mv = (rng.next_double() < keep) ? 1.0 / keep : 0.0;
        for (std::size_t i = 0; i < pooled_.size(); ++i) pooled_[i] *= dropout_mask_[i];
    }
    return fc_.forward(pooled_, hc.n);
}

Tensor MicroNet::backward_head(const Logits& dlogits) {
    std::vector<double> dpool = fc_.backward(dlogits);
    for (std::size_t i = 0; i < dpool.size(); ++i) dpool[i] *= dropout_mask_[i];

    const Tensor& hc = head_conv_out_;
    Tensor dhc(hc.n, hc.c, hc.h, hc.w);
    for (int i = 0; i < hc.n; ++i)
        for (int k = 0; k < hc.c; ++k) {
            const double g = dpool[static_cast<std::size_t>(i) * hc.c + k] / static_cast<double>(hc.hw());
            double* p = dhc.plane(i, k);
            for (std::size_t j = 0; j < hc.hw(); ++j) p[j] = g;
        }
    return head_conv_.backward(dhc);
}

void MicroNet::backward(const Logits& dlogits) {
    Tensor d = backward_head(dlogits);
    d = c2f4_.backward(d);
    d = down5_.backward(d);
    d = c2f3_.backward(d);
    d = down4_.backward(d);
    d = c2f2_.backward(d);
    d = down3_.backward(d);
    d = c2f1_.backward(d);
    d = stem2_.backward(d);
    stem1_.backward(d);
}

std::vector<ParamView> MicroNet::params() {
    std::vector<ParamView> out;
    stem1_.collect_params(out, "stem1");
    stem2_.collect_params(out, "stem2");
    c2f1_.collect_params(out, "c2f1");
    down3_.collect_params(out, "down3");
    c2f2_.collect_params(out, "c2f2");
    down4_.collect_params(out, "down4");
    c2f3_.collect_params(out, "c2f3");
    down5_.collect_params(out, "down5");
    c2f4_.collect_params(out, "c2f4");
    head_conv_.collect_params(out, "head");
    out.push_back({"fc.w", fc_.weight.data(), fc_.grad_weight.data(), fc_.weight.size()});
    out.push_back({"fc.b", fc_.bias.data(), fc_.grad_bias.data(), fc_.bias.size()});
    return out;
}

std::vector<StateView> MicroNet::state() {
    std::vector<StateView> out;
    stem1_.collect_state(out, "stem1");
    stem2_.collect_state(out, "stem2");
    c2f1_.collect_state(out, "c2f1");
    down3_.collect_state(out, "down3");
    c2f2_.collect_state(out, "c2f2");
    down4_.collect_state(out, "down4");
    c2f3_.collect_state(out, "c2f3");
    down5_.collect_state(out, "down5");
    c2f4_.collect_state(out, "c2f4");
    head_conv_.collect_state(out, "head");
    out.push_back({"fc.w", fc_.weight.data(), fc_.weight.size()});
    out.push_back({"fc.b", fc_.bias.data(), fc_.bias.size()});
    return out;
}

void MicroNet::zero_grads() {
    for (ParamView& p : params()) std::memset(p.grad, 0, sizeof(double) * p.count);
}

namespace {
constexpr char kCheckpointMagic[8] = {'H', 'B', 'M', 'D', 'L', '0', '1', '\n'};
}

void MicroNet::save(const fs::path& path) const {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("micronet", "cannot write checkpoint " + path.string());
    out.write(kCheckpointMagic, 8);
    const std::uint32_t version = 1;
    auto put = [&](const void* p, std::size_t n) { out.write(static_cast<const char*>(p), n); };
    put(&version, 4);
    const std::int32_t ints[12] = {cfg_.input_side,
                                   cfg_.in_channels,
                                   cfg_.class_count,
                                   cfg_.stage_widths[0],
                                   cfg_.stage_widths[1],
                                   cfg_.stage_widths[2],
                                   cfg_.stage_widths[3],
                                   cfg_.stage_widths[4],
                                   cfg_.bottleneck_counts[0],
                                   cfg_.bottleneck_counts[1],
                                   cfg_.bottleneck_counts[2],
                                   cfg_.bottleneck_counts[3]};
    put(ints, sizeof(ints));
    put(&cfg_.dropout_rate, 8);

    auto* self = const_cast<MicroNet*>(this);
    std::vector<StateView> st = self->state();
    std::uint64_t total = 0;
    for (const StateView& s : st) total += s.count;
    put(&total, 8);
    for (const StateView& s : st) put(s.value, sizeof(double) * s.count);
    if (!out) throw Error("micronet", "checkpoint write failed: " + path.string());
}

MicroNet MicroNet::load(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("micronet", "cannot open checkpoint " + path.string());
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, kCheckpointMagic, 8) != 0)
        throw Error("micronet", "bad checkpoint magic: " + path.string());
    std::uint32_t version = 0;
    in.read(reinterpret_cast<char*>(&version), 4);
    if (version != 1) throw Error("micronet", "unsupported checkpoint version");
    std::int32_t ints[12];
    in.read(reinterpret_cast<char*>(ints), sizeof(ints));
    ModelConfig cfg;
    cfg.input_side = ints[0];
    cfg.in_channels = ints[1];
    cfg.class_count = ints[2];
    for (int i = 0; i < 5; ++i) cfg.stage_widths[i] = ints[3 + i];
    for (int i = 0; i < 4; ++i) cfg.bottleneck_counts[i] = ints[8 + i];
    in.read(reinterpret_cast<char*>(&cfg.dropout_rate), 8);

    MicroNet net(cfg, 0);
    std::uint64_t total = 0;
    in.read(reinterpret_cast<char*>(&total), 8);
    std::vector<StateView> st = net.state();
    std::uint64_t expect = 0;
    for (const StateView& s : st) expect += s.count;
    if (total != expect) throw Error("micronet", "checkpoint parameter count mismatch");
    for (StateView& s : st) in.read(reinterpret_cast<char*>(s.value), sizeof(double) * s.count);
    if (!in) throw Error("micronet", "truncated checkpoint: " + path.string());
    return net;
}

int MicroNet::predict_tree(const std::vector<Tensor>& views) {
    if (views.size() != 4) throw Error("micronet", "predict_tree expects exactly 4 views");
    std::vector<double> mean(cfg_.class_count, 0.0);
    for (const Tensor& v : views) {
        const Logits lg = forward(v, Mode::Eval).logits;
        for (int j = 0; j < cfg_.class_count; ++j) mean[j] += lg.at(0, j) / 4.0;
    }
    return argmax_row(mean.data(), cfg_.class_count);
}

Tensor image_to_input(const ByteImage& img) {
    Tensor t(1, 1, img.height, img.width);
    for (std::size_t i = 0; i < img.data.size(); ++i) t.v[i] = img.data[i] / 255.0;
    return t;
}

}  // namespace habitus
