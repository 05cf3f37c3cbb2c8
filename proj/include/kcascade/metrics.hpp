#pragma once

#include <string>

#include "kcascade/kspace.hpp"

namespace kcascade {

/// Mean of |x - gnd|^2 over complex pixels.
real_t mse(const ComplexSequence& x, const ComplexSequence& gnd);

/// Mean squared difference of magnitudes (secondary measure).
real_t mse_magnitude(const ComplexSequence& x, const ComplexSequence& gnd);

/// 10 log10(1/mse) on unit-normalized data; +inf when mse is 0.
real_t psnr_from_mse(real_t mse);
real_t psnr(const ComplexSequence& x, const ComplexSequence& gnd);

/// PSNR of a fully sampled acquisition whose k-space noise power is
/// sigma2 (noise power is preserved by the unitary transform).
real_t noise_psnr(real_t sigma2);

/// x-t slice at fixed y: [2, n_x, n_t].
Tensor temporal_profile(const ComplexSequence& x, int y_index);

struct SequenceEval {
    real_t mse = 0;
    real_t mse_mag = 0;
    real_t psnr = 0;
};

struct EvalReport {
    std::vector<SequenceEval> per_sequence;
    real_t mean_mse = 0, sd_mse = 0;
    real_t mean_psnr = 0;
    std::vector<real_t> stage_mse;  // per cascade stage, when requested
    real_t acc = 0;                 // acceleration factor of the input
    real_t noise_psnr_f = 0;        // PSNR_f of the (noisy) input, 0 if clean
};

EvalReport evaluate(const std::vector<ComplexSequence>& recon,
                    const std::vector<ComplexSequence>& gnd);

void write_report_csv(const EvalReport& report, const std::string& path);
void write_report_text(const EvalReport& report, const std::string& path);
std::string report_text(const EvalReport& report);

}  // namespace kcascade
