#pragma once

#include "kcascade/tape.hpp"

namespace kcascade {

enum class Reduction { Mean, Sum };

// Differentiable ops. Each computes its value eagerly and records the
// adjoint rule on the tape.

/// Same-size cross-correlation with zero padding. Input is [b,c_in,x,y]
/// or [b,c_in,x,y,t]; kernel [c_out,c_in,kx,ky(,kt)] with odd spatial
/// dims; bias [c_out].
Var conv(Tape& tape, Var input, Var kernel, Var bias);

Var relu(Tape& tape, Var input);

Var add(Tape& tape, Var a, Var b);

/// out = v[:, c0:c1, ...] along the channel axis (axis 1).
Var slice_channels(Tape& tape, Var v, int c0, int c1);

/// Concatenate along the channel axis (axis 1).
Var concat_channels(Tape& tape, const std::vector<Var>& parts);

Var sum(Tape& tape, Var v);

Var mse_loss(Tape& tape, Var pred, Var target, Reduction red = Reduction::Mean);

Var scale(Tape& tape, Var v, real_t c);

// Non-differentiating reference path used by the forward implementations.
Tensor conv_value(const Tensor& input, const Tensor& kernel, const Tensor& bias);

}  // namespace kcascade
