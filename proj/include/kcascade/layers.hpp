#pragma once

#include <optional>

#include "kcascade/kspace.hpp"
#include "kcascade/ops.hpp"

namespace kcascade {

enum class DcMode { Hard, Soft };
enum class DsStage { First, Later };
enum class DsBoundary { Clamp, Reflect };

/// De-aliasing CNN block: n_d-1 convolutions with ReLU, a final 2-channel
/// projection, and a residual connection from the first two input channels.
struct CnnBlock {
    int n_d = 5;
    int n_f = 64;
    int k = 3;            // spatial kernel size
    int k_t = 1;          // temporal kernel size (3 in dynamic mode)
    int in_channels = 2;  // 12 after a data-sharing layer

    std::vector<Tensor> weights;  // n_d conv kernels
    std::vector<Tensor> biases;

    void init_he(std::mt19937_64& rng);
    std::int64_t param_count() const;
};

/// Block parameters registered on a tape.
struct CnnBlockVars {
    std::vector<Var> weights;
    std::vector<Var> biases;
};

CnnBlockVars bind_block(Tape& tape, CnnBlock& block);

/// x_in: [b, in_channels, x, y, t] -> [b, 2, x, y, t].
Var cnn_forward(Tape& tape, const CnnBlock& block, const CnnBlockVars& vars,
                Var x_in);

/// Data-consistency layer on the tape. x is an image [b,2,nx,ny,nt];
/// s0 is zero-filled k-space [2,nx,ny,nt]. In soft mode lambda is a
/// scalar leaf (trainable when its tensor requires_grad); in hard mode
/// acquired coefficients are replaced by s0 exactly.
Var dc_layer(Tape& tape, Var x, const Tensor& s0, const SamplingMask& mask,
             DcMode mode, Var lambda = {});

// Reference (non-tape) forms of the DC layer, usable as plain functions.
ComplexSequence dc_forward(const ComplexSequence& x, const ComplexSequence& s0,
                           const SamplingMask& mask,
                           std::optional<real_t> lambda);  // nullopt = hard
ComplexSequence dc_backward(const ComplexSequence& upstream,
                            const SamplingMask& mask,
                            std::optional<real_t> lambda);
real_t dc_lambda_grad(const ComplexSequence& s_cnn, const ComplexSequence& s0,
                      const SamplingMask& mask, real_t lambda,
                      const ComplexSequence& upstream);

/// Fill each non-acquired k_y line of frame t with the plain average of
/// that line over the acquired frames within +-n_adj; acquired lines
/// are left unchanged.
ComplexSequence data_share(const ComplexSequence& s, const SamplingMask& mask,
                           int n_adj, DsBoundary boundary = DsBoundary::Clamp);

/// Data-sharing layer: concatenates the images for n_adj = 0..5 as 12
/// real channels. stage=First shares raw acquired lines from s0;
/// stage=Later averages all entries over the window and writes the
/// average only off Omega.
Var ds_layer(Tape& tape, Var x, const Tensor& s0, const SamplingMask& mask,
             DsStage stage, DsBoundary boundary = DsBoundary::Clamp);

Tensor ds_layer_value(const Tensor& x_img, const Tensor& s0,
                      const SamplingMask& mask, DsStage stage,
                      DsBoundary boundary = DsBoundary::Clamp);

}  // namespace kcascade
