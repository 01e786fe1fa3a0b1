#include "sepseg/network.hpp"

#include <cmath>

#include <json.hpp>

#include "sepseg/rng.hpp"

namespace sepseg {

namespace {

void validate_spec(const NetworkSpec& s) {
    if (s.num_classes < 2) throw ConfigError("network: num_classes must be >= 2");
    if (s.base_channels < 1) throw ConfigError("network: base_channels must be >= 1");
    if (s.num_scales < 2) throw ConfigError("network: num_scales must be >= 2");
    if (s.in_channels < 1) throw ConfigError("network: in_channels must be >= 1");
    if (static_cast<int>(s.encoder_blocks.size()) != s.num_scales)
        throw ConfigError("network: encoder_blocks must list one count per scale");
    if (static_cast<int>(s.decoder_blocks.size()) != s.num_scales - 1)
        throw ConfigError("network: decoder_blocks must list one count per scale below the deepest");
    for (int b : s.encoder_blocks)
        if (b < 1) throw ConfigError("network: encoder block counts must be >= 1");
    for (int b : s.decoder_blocks)
        if (b < 1) throw ConfigError("network: decoder block counts must be >= 1");
}

std::int64_t width_at(const NetworkSpec& s, int scale) {
    return static_cast<std::int64_t>(s.base_channels) << scale;
}

BlockPlan make_sep_block(const std::string& prefix, std::int64_t cin, std::int64_t n) {
    BlockPlan b;
    b.convs.push_back({prefix + ".conv0", cin, n, Window3{1, 3, 3}, true});
    b.convs.push_back({prefix + ".conv1", n, n, Window3{1, 3, 3}, true});
    b.convs.push_back({prefix + ".conv2", n, n, Window3{1, 3, 3}, true});
    b.convs.push_back({prefix + ".conv3", n, n, Window3{3, 1, 1}, true});
    b.skip = ConvPlan{prefix + ".skip", cin, n, Window3{1, 1, 1}, false};
    return b;
}

BlockPlan make_plain_block(const std::string& prefix, std::int64_t cin, std::int64_t mid,
                           std::int64_t cout) {
    BlockPlan b;
    b.convs.push_back({prefix + ".conv0", cin, mid, Window3{3, 3, 3}, true});
    b.convs.push_back({prefix + ".conv1", mid, cout, Window3{3, 3, 3}, true});
    return b;
}

NetPlan make_plan(const NetworkSpec& s) {
    NetPlan plan;
    plan.pool = s.pool_inplane_only ? Window3{1, 2, 2} : Window3{2, 2, 2};
    const int S = s.num_scales;
    plan.encoder.resize(static_cast<std::size_t>(S));
    plan.decoder.resize(static_cast<std::size_t>(S - 1));

    if (s.block_kind == BlockKind::Separable) {
        // Widths: scale s runs at base * 2^s end to end.
        for (int sc = 0; sc < S; ++sc) {
            const std::int64_t w = width_at(s, sc);
            std::int64_t cin = sc == 0 ? s.in_channels : width_at(s, sc - 1);
            for (int j = 0; j < s.encoder_blocks[static_cast<std::size_t>(sc)]; ++j) {
                plan.encoder[static_cast<std::size_t>(sc)].push_back(
                    make_sep_block("enc" + std::to_string(sc) + ".b" + std::to_string(j), cin, w));
                cin = w;
            }
        }
        for (int sc = S - 2; sc >= 0; --sc) {
            const std::int64_t w = width_at(s, sc);
            std::int64_t cin = width_at(s, sc + 1) + w;  // upsampled deeper path + skip concat
            for (int j = 0; j < s.decoder_blocks[static_cast<std::size_t>(sc)]; ++j) {
                plan.decoder[static_cast<std::size_t>(sc)].push_back(
                    make_sep_block("dec" + std::to_string(sc) + ".b" + std::to_string(j), cin, w));
                cin = w;
            }
        }
        plan.classifier = ConvPlan{"head", width_at(s, 0), s.num_classes, Window3{1, 1, 1}, false};
        return plan;
    }

    // Plain baseline, conventional widths: encoder scale s works at base*2^s
    // and its final conv doubles the features (so pooling hands scale s+1
    // exactly its working width); the decoder runs at the doubled widths.
    for (int sc = 0; sc < S; ++sc) {
        const std::int64_t w = width_at(s, sc);
        const int blocks = s.encoder_blocks[static_cast<std::size_t>(sc)];
        std::int64_t cin = sc == 0 ? s.in_channels : w;
        for (int j = 0; j < blocks; ++j) {
            const bool last = j == blocks - 1;
            plan.encoder[static_cast<std::size_t>(sc)].push_back(make_plain_block(
                "enc" + std::to_string(sc) + ".b" + std::to_string(j), cin, w, last ? 2 * w : w));
            cin = last ? 2 * w : w;
        }
    }
    for (int sc = S - 2; sc >= 0; --sc) {
        const std::int64_t w2 = 2 * width_at(s, sc);
        const int blocks = s.decoder_blocks[static_cast<std::size_t>(sc)];
        std::int64_t cin = 2 * width_at(s, sc + 1) + w2;
        for (int j = 0; j < blocks; ++j) {
            plan.decoder[static_cast<std::size_t>(sc)].push_back(
                make_plain_block("dec" + std::to_string(sc) + ".b" + std::to_string(j), cin, w2, w2));
            cin = w2;
        }
    }
    plan.classifier = ConvPlan{"head", 2 * width_at(s, 0), s.num_classes, Window3{1, 1, 1}, false};
    return plan;
}

template <class T>
void register_conv(Model<T>& m, const ConvPlan& c) {
    auto add = [&m](const std::string& name, Tensor<T> t) {
        m.index[name] = static_cast<int>(m.names.size());
        m.names.push_back(name);
        m.grads.push_back(Tensor<T>::zeros(t.shape));
        m.params.push_back(std::move(t));
    };
    add(c.name + ".w", Tensor<T>::zeros({c.cout, c.cin, c.kernel.d, c.kernel.h, c.kernel.w}));
    add(c.name + ".b", Tensor<T>::zeros({c.cout}));
    if (c.norm_relu) {
        add(c.name + ".in.g", Tensor<T>::full({c.cout}, T(1)));
        add(c.name + ".in.beta", Tensor<T>::zeros({c.cout}));
    }
}

template <class T>
Model<T> build_network(const NetworkSpec& spec) {
    validate_spec(spec);
    Model<T> m;
    m.spec = spec;
    m.plan = make_plan(spec);
    for (const auto& stage : m.plan.encoder)
        for (const auto& block : stage) {
            for (const auto& conv : block.convs) register_conv(m, conv);
            if (block.skip) register_conv(m, *block.skip);
        }
    for (auto it = m.plan.decoder.rbegin(); it != m.plan.decoder.rend(); ++it)
        for (const auto& block : *it) {
            for (const auto& conv : block.convs) register_conv(m, conv);
            if (block.skip) register_conv(m, *block.skip);
        }
    register_conv(m, m.plan.classifier);
    return m;
}

}  // namespace

NetworkSpec default_network_spec(BlockKind kind, int num_classes, int base_channels, int num_scales) {
    NetworkSpec s;
    s.block_kind = kind;
    s.num_classes = num_classes;
    s.base_channels = base_channels;
    s.num_scales = num_scales;
    s.encoder_blocks.assign(static_cast<std::size_t>(num_scales), 2);
    s.encoder_blocks[0] = 1;
    s.decoder_blocks.assign(static_cast<std::size_t>(num_scales - 1), 2);
    s.decoder_blocks[0] = 1;
    return s;
}

std::string network_spec_to_json(const NetworkSpec& spec) {
    nlohmann::json j;
    j["num_classes"] = spec.num_classes;
    j["base_channels"] = spec.base_channels;
    j["num_scales"] = spec.num_scales;
    j["encoder_blocks"] = spec.encoder_blocks;
    j["decoder_blocks"] = spec.decoder_blocks;
    j["block_kind"] = spec.block_kind == BlockKind::Separable ? "separable" : "plain";
    j["pool_inplane_only"] = spec.pool_inplane_only;
    j["in_channels"] = spec.in_channels;
    return j.dump(2) + "\n";
}

NetworkSpec network_spec_from_json(const std::string& json_text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(json_text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(std::string("invalid network spec JSON: ") + e.what());
    }
    NetworkSpec s;
    s.num_classes = j.value("num_classes", 2);
    s.base_channels = j.value("base_channels", 48);
    s.num_scales = j.value("num_scales", 4);
    if (j.contains("encoder_blocks")) s.encoder_blocks = j["encoder_blocks"].get<std::vector<int>>();
    if (j.contains("decoder_blocks")) s.decoder_blocks = j["decoder_blocks"].get<std::vector<int>>();
    if (s.encoder_blocks.empty() || s.decoder_blocks.empty()) {
        const NetworkSpec d = default_network_spec(BlockKind::Separable, s.num_classes, s.base_channels,
                                                   s.num_scales);
        if (s.encoder_blocks.empty()) s.encoder_blocks = d.encoder_blocks;
        if (s.decoder_blocks.empty()) s.decoder_blocks = d.decoder_blocks;
    }
    const std::string kind = j.value("block_kind", "separable");
    if (kind == "separable")
        s.block_kind = BlockKind::Separable;
    else if (kind == "plain")
        s.block_kind = BlockKind::Plain;
    else
        throw ConfigError("network spec: block_kind must be \"separable\" or \"plain\"");
    s.pool_inplane_only = j.value("pool_inplane_only", true);
    s.in_channels = j.value("in_channels", 1);
    validate_spec(s);
    return s;
}

template <class T>
Tensor<T>& Model<T>::param(const std::string& name) {
    auto it = index.find(name);
    if (it == index.end()) throw ConfigError("unknown parameter: " + name);
    return params[static_cast<std::size_t>(it->second)];
}

template <class T>
const Tensor<T>& Model<T>::param(const std::string& name) const {
    auto it = index.find(name);
    if (it == index.end()) throw ConfigError("unknown parameter: " + name);
    return params[static_cast<std::size_t>(it->second)];
}

template <class T>
void Model<T>::zero_grads() {
    for (auto& g : grads) std::fill(g.data.begin(), g.data.end(), T(0));
}

template <class T>
Model<T> build_sepnet(const NetworkSpec& spec) {
    NetworkSpec s = spec;
    s.block_kind = BlockKind::Separable;
    return build_network<T>(s);
}

template <class T>
Model<T> build_unet_baseline(const NetworkSpec& spec) {
    NetworkSpec s = spec;
    s.block_kind = BlockKind::Plain;
    return build_network<T>(s);
}

template <class T>
void init_params(Model<T>& m, std::uint64_t seed) {
    SplitMix64 rng(SplitMix64(seed).split(0x1717ull).next_u64());
    for (std::size_t i = 0; i < m.names.size(); ++i) {
        const std::string& name = m.names[i];
        Tensor<T>& p = m.params[i];
        if (name.ends_with(".w")) {
            // fan_in = Cin * kd * kh * kw.
            const auto& sh = p.shape;
            const double fan_in = static_cast<double>(sh[1] * sh[2] * sh[3] * sh[4]);
            const double bound = std::sqrt(1.0 / fan_in);
            for (auto& v : p.data) v = static_cast<T>((2.0 * rng.next_double() - 1.0) * bound);
        } else if (name.ends_with(".in.g")) {
            std::fill(p.data.begin(), p.data.end(), T(1));
        } else {
            std::fill(p.data.begin(), p.data.end(), T(0));  // biases and beta
        }
    }
    m.zero_grads();
}

template <class T>
std::int64_t param_count(const Model<T>& m) {
    std::int64_t n = 0;
    for (const auto& p : m.params) n += p.numel();
    return n;
}

template <class T>
std::int64_t param_count_prefix(const Model<T>& m, const std::string& name_prefix) {
    std::int64_t n = 0;
    for (std::size_t i = 0; i < m.names.size(); ++i)
        if (m.names[i].starts_with(name_prefix)) n += m.params[i].numel();
    return n;
}

namespace {

template <class T>
int tape_param(Model<T>& m, Tape<T>& tape, const std::string& name) {
    auto it = m.index.find(name);
    if (it == m.index.end()) throw ConfigError("unknown parameter: " + name);
    const auto i = static_cast<std::size_t>(it->second);
    return tape.leaf(&m.params[i], &m.grads[i]);
}

template <class T>
int apply_conv(Model<T>& m, Tape<T>& tape, const ConvPlan& c, int x) {
    int t = tape.conv3d_op(x, tape_param(m, tape, c.name + ".w"), tape_param(m, tape, c.name + ".b"));
    if (c.norm_relu) {
        t = tape.instance_norm_op(t, tape_param(m, tape, c.name + ".in.g"),
                                  tape_param(m, tape, c.name + ".in.beta"), 1e-5);
        t = tape.relu_op(t);
    }
    return t;
}

template <class T>
int apply_block(Model<T>& m, Tape<T>& tape, const BlockPlan& block, int x) {
    int t = x;
    for (const auto& conv : block.convs) t = apply_conv(m, tape, conv, t);
    if (block.skip) t = tape.add(t, apply_conv(m, tape, *block.skip, x));
    return t;
}

}  // namespace

template <class T>
int model_forward_on_tape(Model<T>& m, Tape<T>& tape, int x_node) {
    const Tensor<T>& x = tape.value(x_node);
    if (x.rank() != 5) throw ConfigError("network input must be (N,Cin,D,H,W)");
    if (x.size(1) != m.spec.in_channels) throw ConfigError("network input channel count mismatch");
    const std::int64_t div = std::int64_t(1) << (m.spec.num_scales - 1);
    if (x.size(3) % div || x.size(4) % div)
        throw ConfigError("network input in-plane dims must be divisible by 2^(num_scales-1)");
    if (!m.spec.pool_inplane_only && x.size(2) % div)
        throw ConfigError("network input depth must be divisible by 2^(num_scales-1) when pooling in depth");

    const int S = m.spec.num_scales;
    std::vector<int> skips;
    int t = x_node;
    for (int sc = 0; sc < S; ++sc) {
        if (sc > 0) t = tape.max_pool_op(t, m.plan.pool);
        for (const auto& block : m.plan.encoder[static_cast<std::size_t>(sc)])
            t = apply_block(m, tape, block, t);
        if (sc < S - 1) skips.push_back(t);
    }
    for (int sc = S - 2; sc >= 0; --sc) {
        t = tape.upsample_op(t, m.plan.pool);
        t = tape.concat_op(t, skips[static_cast<std::size_t>(sc)]);
        for (const auto& block : m.plan.decoder[static_cast<std::size_t>(sc)])
            t = apply_block(m, tape, block, t);
    }
    t = apply_conv(m, tape, m.plan.classifier, t);
    return tape.softmax_op(t);
}

template <class T>
Tensor<T> model_forward(Model<T>& m, const Tensor<T>& x) {
    m.tape = std::make_unique<Tape<T>>();
    const int x_node = m.tape->constant(x);
    m.prob_node = model_forward_on_tape(m, *m.tape, x_node);
    return m.tape->value(m.prob_node);
}

template <class T>
void model_backward(Model<T>& m, const Tensor<T>& dprob) {
    if (!m.tape || m.prob_node < 0)
        throw ConfigError("model_backward requires a preceding model_forward");
    m.tape->backward(m.prob_node, dprob);
}

template <class T>
Model<T> clone_model(const Model<T>& m) {
    Model<T> c;
    c.spec = m.spec;
    c.plan = m.plan;
    c.names = m.names;
    c.index = m.index;
    c.params = m.params;
    c.grads = m.grads;
    return c;
}

template <class T>
ProbMap probmap_from_tensor(const Tensor<T>& t, const Spacing3& spacing) {
    std::int64_t C, D, H, W;
    if (t.rank() == 5) {
        if (t.size(0) != 1) throw ConfigError("probmap_from_tensor expects batch size 1");
        C = t.size(1), D = t.size(2), H = t.size(3), W = t.size(4);
    } else if (t.rank() == 4) {
        C = t.size(0), D = t.size(1), H = t.size(2), W = t.size(3);
    } else {
        throw ConfigError("probmap_from_tensor expects rank 4 or 5");
    }
    std::vector<float> probs(static_cast<std::size_t>(C * D * H * W));
    for (std::size_t i = 0; i < probs.size(); ++i) {
        const float v = static_cast<float>(t[static_cast<std::int64_t>(i)]);
        if (!std::isfinite(v)) throw NumericError("probmap_from_tensor: non-finite probability");
        probs[i] = std::min(1.0f, std::max(0.0f, v));
    }
    return make_probmap({D, H, W}, spacing, static_cast<int>(C), std::move(probs));
}

#define SEPSEG_NET_INSTANTIATE(T)                                                        \
    template struct Model<T>;                                                            \
    template Model<T> build_sepnet<T>(const NetworkSpec&);                               \
    template Model<T> build_unet_baseline<T>(const NetworkSpec&);                        \
    template void init_params<T>(Model<T>&, std::uint64_t);                              \
    template std::int64_t param_count<T>(const Model<T>&);                               \
    template std::int64_t param_count_prefix<T>(const Model<T>&, const std::string&);    \
    template int model_forward_on_tape<T>(Model<T>&, Tape<T>&, int);                     \
    template Tensor<T> model_forward<T>(Model<T>&, const Tensor<T>&);                    \
    template void model_backward<T>(Model<T>&, const Tensor<T>&);                        \
    template Model<T> clone_model<T>(const Model<T>&);                                   \
    template ProbMap probmap_from_tensor<T>(const Tensor<T>&, const Spacing3&);

SEPSEG_NET_INSTANTIATE(float)
SEPSEG_NET_INSTANTIATE(double)
#undef SEPSEG_NET_INSTANTIATE

}  // namespace sepseg
