#pragma once

#include <string>

#include "kcascade/layers.hpp"

namespace kcascade {

struct ModelConfig {
    int n_c = 5;
    int n_d = 5;
    int n_f = 64;
    int k = 3;
    bool dynamic = false;     // 3D kernels when true
    bool ds_enabled = false;  // data sharing; requires dynamic
    DcMode dc_mode = DcMode::Hard;
    bool lambda_trainable = false;
    real_t lambda_init = 0.025;
    DsBoundary ds_boundary = DsBoundary::Clamp;
};

/// The full cascade: n_c CNN subnetworks interleaved with DC layers,
/// with optional data-sharing layers in front of each subnetwork.
struct CascadeModel {
    ModelConfig cfg;
    std::vector<CnnBlock> subnets;
    std::vector<Tensor> lambdas;  // one scalar per DC layer

    std::string name() const;
    std::int64_t param_count() const;
};

CascadeModel build_model(const ModelConfig& cfg, std::uint64_t seed);

/// Model parameters registered on a tape for a training/inference pass.
struct BoundModel {
    std::vector<CnnBlockVars> blocks;
    std::vector<Var> lambdas;
};

BoundModel bind_model(Tape& tape, CascadeModel& model);

/// Forward pass from zero-filled k-space. Returns the final image
/// [1,2,nx,ny,nt]; per-stage outputs are appended to `stages` if given.
Var model_forward(Tape& tape, const CascadeModel& model, const BoundModel& bound,
                  const Tensor& s0, const SamplingMask& mask,
                  std::vector<Var>* stages = nullptr);

ComplexSequence reconstruct(CascadeModel& model, const ComplexSequence& s0,
                            const SamplingMask& mask,
                            std::vector<ComplexSequence>* stages = nullptr);

std::int64_t count_params(const CascadeModel& model);

/// Activation-map estimate: batch * nx * ny * nt * n_f * n_c * (n_d-1)
/// * bytes_per_scalar.
std::int64_t estimate_activation_bytes(const CascadeModel& model, int batch,
                                       int nx, int ny, int nt,
                                       int bytes_per_scalar);

/// New cascade of depth n_c+1; the existing subnets are copied
/// bit-identically and the new one is freshly He-initialized.
CascadeModel grow_cascade(const CascadeModel& model, std::uint64_t seed);

// Binary model file: magic "KCSD1", version, JSON descriptor, then the
// parameter payload in declared order (little-endian float64).
void save_model(const CascadeModel& model, const std::string& path);
CascadeModel load_model(const std::string& path);

}  // namespace kcascade
