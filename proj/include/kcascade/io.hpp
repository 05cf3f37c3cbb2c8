#pragma once

#include <string>

#include "kcascade/cascade.hpp"
#include "kcascade/training.hpp"

namespace kcascade {

/// Malformed file or config contents (distinct from shape mismatches,
/// which are invalid_argument).
struct FormatError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class KDtype : std::uint32_t {
    Real32 = 0,
    Complex64 = 1,  // interleaved float32 re,im
    Real64 = 2,
    Complex128 = 3,
};

bool is_complex(KDtype d);

/// In-memory tensor file: row-major payload, complex dtypes hold
/// 2*product(dims) values interleaved re,im.
struct KTensor {
    std::vector<std::uint32_t> dims;
    KDtype dtype = KDtype::Real64;
    std::vector<real_t> data;

    std::int64_t elems() const;
};

void write_ktensor(const KTensor& t, const std::string& path);
KTensor read_ktensor(const std::string& path);

// Conversions between the file tensors and the toolkit types.
KTensor to_ktensor(const ComplexSequence& seq, KDtype dtype = KDtype::Complex128);
ComplexSequence sequence_from_ktensor(const KTensor& t);
KTensor to_ktensor(const Tensor& t, KDtype dtype = KDtype::Real64);
Tensor tensor_from_ktensor(const KTensor& t);
KTensor mask_to_ktensor(const SamplingMask& mask);  // [n_y, n_t] of 0/1
SamplingMask mask_from_ktensor(const KTensor& t);

/// Flat key=value experiment config; '#' starts a comment. Unknown keys
/// and malformed values raise FormatError.
struct RunConfig {
    ModelConfig model;
    std::uint64_t model_seed = 0;
    TrainConfig train;
    int phantom_nx = 32, phantom_ny = 32, phantom_nt = 8;
    int phantom_count = 10;
    std::uint64_t phantom_seed = 0;
};

RunConfig parse_run_config_text(const std::string& text);
RunConfig parse_run_config(const std::string& path);

}  // namespace kcascade
