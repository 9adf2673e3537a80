#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "habitus/kernels.hpp"
#include "habitus/tensor.hpp"

namespace habitus {

enum class Mode { Train, Eval };

// A trainable parameter block with its gradient accumulator.
struct ParamView {
    std::string name;
    double* value = nullptr;
    double* grad = nullptr;
    std::size_t count = 0;
};

// Persistent state (parameters and batch-norm running statistics) in
// declaration order; this is what checkpoints serialise.
struct StateView {
    std::string name;
    double* value = nullptr;
    std::size_t count = 0;
};

struct BatchNorm {
    int channels = 0;
    double eps = 1e-5;
    double momentum = 0.1;
    std::vector<double> gamma, beta, grad_gamma, grad_beta;
    std::vector<double> running_mean, running_var;

    void init(int c);
    Tensor forward(const Tensor& x, Mode mode);
    Tensor backward(const Tensor& dy);

private:
    Mode mode_ = Mode::Train;
    std::vector<double> inv_std_;  // per channel, for the mode used at forward
    Tensor xhat_;
};

// convolution -> batch norm -> SiLU
struct ConvModule {
    kernels::Conv2dShape conv;
    Tensor weight;  // (out_c, in_c, k, k)
    Tensor grad_weight;
    BatchNorm bn;
    bool has_bn = true;
    std::vector<double> bias, grad_bias;  // used only when has_bn == false

    void init(int in_c, int out_c, int kernel, int stride, int pad, Rng& rng, bool with_bn = true);
    Tensor forward(const Tensor& x, Mode mode);
    Tensor backward(const Tensor& dy);
    void collect_params(std::vector<ParamView>& out, const std::string& prefix);
    void collect_state(std::vector<StateView>& out, const std::string& prefix);

private:
    Tensor x_, z_;  // input and pre-activation caches
};

// two 1x1 conv modules with a residual connection
struct Bottleneck {
    ConvModule conv1, conv2;

    void init(int channels, Rng& rng);
    Tensor forward(const Tensor& x, Mode mode);
    Tensor backward(const Tensor& dy);
    void collect_params(std::vector<ParamView>& out, const std::string& prefix);
    void collect_state(std::vector<StateView>& out, const std::string& prefix);
};

// entry 1x1 conv module -> chained bottlenecks -> channel concat -> exit
// 1x1 conv module. Concat width = entry_channels * (1 + bottleneck count).
struct C2f {
    ConvModule entry, exit;
    std::vector<Bottleneck> bottlenecks;
    int entry_channels = 0;

    void init(int in_c, int out_c, int n_bottlenecks, Rng& rng);
    Tensor forward(const Tensor& x, Mode mode);
    Tensor backward(const Tensor& dy);
    void collect_params(std::vector<ParamView>& out, const std::string& prefix);
    void collect_state(std::vector<StateView>& out, const std::string& prefix);
};

struct Linear {
    int in_features = 0, out_features = 0;
    std::vector<double> weight, grad_weight;  // (out, in) row-major
    std::vector<double> bias, grad_bias;

    void init(int in_f, int out_f, Rng& rng);
    Logits forward(const std::vector<double>& x, int n);  // x is n x in_features
    std::vector<double> backward(const Logits& dy);

private:
    std::vector<double> x_;
    int n_ = 0;
};

struct ModelConfig {
    int input_side = 160;
    int in_channels = 1;
    int class_count = 7;
    std::array<int, 5> stage_widths = {8, 16, 32, 64, 64};
    std::array<int, 4> bottleneck_counts = {3, 6, 6, 3};
    double dropout_rate = 0.0;
};

struct ForwardResult {
    Logits logits;
    Tensor a_last;  // activations of the last c2f block (1/32 resolution)
};

// Compact classifier: two stride-2 conv modules, four c2f blocks with a
// stride-2 conv module after each of the first three, then a head of
// 1x1 conv module -> global average pool -> dropout -> linear map.
// Total downsampling factor is 32.
class MicroNet {
public:
    explicit MicroNet(const ModelConfig& config, std::uint64_t init_seed = 1);

    const ModelConfig& config() const { return cfg_; }

    ForwardResult forward(const Tensor& x, Mode mode, std::uint64_t dropout_seed = 0);
    // Full backward from d(loss)/d(logits); accumulates all parameter grads.
    void backward(const Logits& dlogits);

    // Head-only paths, used by CAM: run the classification head on given
    // last-c2f activations / backpropagate a logit objective onto them.
    Logits forward_head(const Tensor& a_last, Mode mode);
    Tensor backward_head(const Logits& dlogits);

    std::vector<ParamView> params();
    std::vector<StateView> state();
    void zero_grads();

    void save(const fs::path& path) const;
    static MicroNet load(const fs::path& path);

    // logit-averaged tree-level prediction over the four views
    int predict_tree(const std::vector<Tensor>& views);

private:
    Logits forward_head(const Tensor& a_last, Mode mode, std::uint64_t dropout_seed);

    ModelConfig cfg_;
    ConvModule stem1_, stem2_;
    C2f c2f1_, c2f2_, c2f3_, c2f4_;
    ConvModule down3_, down4_, down5_;
    ConvModule head_conv_;
    Linear fc_;

    Tensor head_in_;              // cache: input of head conv (= a_last)
    Tensor head_conv_out_;        // cache: head conv output (pre pool)
    std::vector<double> pooled_;  // cache: pooled features
    std::vector<double> dropout_mask_;
    Mode mode_ = Mode::Eval;
};

// Converts an 8-bit projection image into the model input in [0, 1].
Tensor image_to_input(const ByteImage& img);

}  // namespace habitus
