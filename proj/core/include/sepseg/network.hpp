#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "sepseg/tape.hpp"
#include "sepseg/tensor.hpp"
#include "sepseg/volume.hpp"

namespace sepseg {

enum class BlockKind { Separable, Plain };

// Encoder-decoder plan. Channels at scale s are base_channels * 2^s; pooling
// and upsampling act in-plane only by default (window 1x2x2), so flat
// structures that span just a few slices are never collapsed along z.
struct NetworkSpec {
    int num_classes = 2;
    int base_channels = 48;
    int num_scales = 4;
    std::vector<int> encoder_blocks;  // per scale, size num_scales
    std::vector<int> decoder_blocks;  // per scale 0..num_scales-2
    BlockKind block_kind = BlockKind::Separable;
    bool pool_inplane_only = true;
    int in_channels = 1;
};

// The stock plan: encoder [1,2,...,2], decoder [1,2,...,2] (indexed by
// scale), which for 4 scales is the 12-block layout.
NetworkSpec default_network_spec(BlockKind kind, int num_classes, int base_channels, int num_scales);

std::string network_spec_to_json(const NetworkSpec& spec);
NetworkSpec network_spec_from_json(const std::string& json_text);

// One convolution with optional IN+ReLU after it.
struct ConvPlan {
    std::string name;
    std::int64_t cin = 1, cout = 1;
    Window3 kernel;
    bool norm_relu = true;
};

struct BlockPlan {
    std::vector<ConvPlan> convs;
    std::optional<ConvPlan> skip;  // 1x1x1 conv added to the conv-stack output
};

struct NetPlan {
    std::vector<std::vector<BlockPlan>> encoder;  // [scale][block]
    std::vector<std::vector<BlockPlan>> decoder;  // [scale][block], applied deep->shallow
    ConvPlan classifier;
    Window3 pool{1, 2, 2};
};

// A network plus its named parameter and gradient tensors. Parameter order
// is fixed at build time and drives checkpoint layout and initialization.
// Movable but not copyable (the forward tape holds pointers into params).
template <class T>
struct Model {
    NetworkSpec spec;
    NetPlan plan;
    std::vector<std::string> names;
    std::map<std::string, int> index;
    std::vector<Tensor<T>> params;
    std::vector<Tensor<T>> grads;

    Model() = default;
    Model(Model&&) noexcept = default;
    Model& operator=(Model&&) noexcept = default;
    Model(const Model&) = delete;
    Model& operator=(const Model&) = delete;

    Tensor<T>& param(const std::string& name);
    const Tensor<T>& param(const std::string& name) const;
    void zero_grads();

    // Populated by model_forward for the matching model_backward call.
    std::unique_ptr<Tape<T>> tape;
    int prob_node = -1;
};

// Separable plan: each block is three 1x3x3 convs then one 3x1x1 conv (each
// IN+ReLU) with a parallel 1x1x1-conv skip added to the stack output.
template <class T>
Model<T> build_sepnet(const NetworkSpec& spec);

// Conventional 3D-UNet baseline: two 3x3x3 convs per block (IN+ReLU), no
// conv skip, feature count doubled by the last conv of every encoder scale
// (before pooling), decoder working at the doubled widths.
template <class T>
Model<T> build_unet_baseline(const NetworkSpec& spec);

// Fan-in-scaled uniform init for conv weights (U(-b,b), b = sqrt(1/fan_in)),
// zero biases, gamma 1, beta 0. Deterministic in (seed, parameter order).
template <class T>
void init_params(Model<T>& m, std::uint64_t seed);

template <class T>
std::int64_t param_count(const Model<T>& m);

// Sum of parameter sizes whose name starts with prefix (test hook).
template <class T>
std::int64_t param_count_prefix(const Model<T>& m, const std::string& name_prefix);

// Appends the network to an external tape (parameters become bound leaves
// whose gradients land in m.grads) and returns the softmax output node.
template <class T>
int model_forward_on_tape(Model<T>& m, Tape<T>& tape, int x_node);

// Convenience forward that keeps the tape inside the model so a single
// model_backward(m, dprob) can follow. Input (N,Cin,D,H,W) with in-plane
// dims divisible by 2^(num_scales-1); output (N,C,D,H,W) softmax.
template <class T>
Tensor<T> model_forward(Model<T>& m, const Tensor<T>& x);

template <class T>
void model_backward(Model<T>& m, const Tensor<T>& dprob);

// Deep copy without the transient tape state.
template <class T>
Model<T> clone_model(const Model<T>& m);

// (1,C,D,H,W) or (C,D,H,W) tensor -> ProbMap with the given geometry.
template <class T>
ProbMap probmap_from_tensor(const Tensor<T>& t, const Spacing3& spacing);

}  // namespace sepseg
