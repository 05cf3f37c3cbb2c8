#pragma once

#include <cmath>
#include <string>

#include "kcascade/cascade.hpp"

namespace kcascade {

struct AugConfig {
    bool enabled = true;
    real_t translate_px = 20.0;     // uniform in [-translate_px, translate_px]
    real_t rotate_max = 2.0 * M_PI; // uniform in [0, rotate_max)
    real_t reflect_x_prob = 0.5;
    real_t elastic_alpha_max = 3.0;   // displacement scale, pixels
    real_t elastic_sigma_lo = 0.05;   // smoothing std as fraction of width
    real_t elastic_sigma_hi = 0.1;
    bool reflect_t = true;
};

struct TrainConfig {
    real_t lr = 1e-4;
    real_t beta1 = 0.9;
    real_t beta2 = 0.999;
    real_t weight_decay = 1e-7;
    int batch = 1;
    long iters = 0;
    real_t acc_lo = 4.0;  // acceleration drawn uniformly in [acc_lo, acc_hi]
    real_t acc_hi = 4.0;
    bool noise_enabled = false;
    real_t noise_lo = 0.0;  // k-space noise power range
    real_t noise_hi = 0.0;
    int patch_width = 0;  // 0 trains on whole images
    AugConfig aug;
    std::uint64_t seed = 0;
    int eval_every = 100;
    int checkpoint_every = 0;  // 0 disables checkpoints
    std::string checkpoint_dir;
};

/// One model parameter plus whether weight decay applies to it.
struct ParamRef {
    Tensor* tensor;
    bool decay;
};

/// Conv weights (decayed), biases and trainable lambdas (not decayed),
/// in serialization order.
std::vector<ParamRef> model_params(CascadeModel& model);

/// Adam with decoupled weight decay: after the adaptive step each decayed
/// parameter additionally shrinks by lr * weight_decay * w.
class Adam {
  public:
    Adam(std::vector<ParamRef> params, real_t lr, real_t beta1, real_t beta2,
         real_t weight_decay, real_t eps = 1e-8);

    void step(const std::vector<Tensor>& grads);
    void set_lr(real_t lr) { lr_ = lr; }
    std::size_t param_count() const { return params_.size(); }

  private:
    std::vector<ParamRef> params_;
    std::vector<Tensor> m_, v_;
    real_t lr_, beta1_, beta2_, weight_decay_, eps_;
    long t_ = 0;
};

// Geometric transforms used by augmentation. All of them apply the same
// map to the real and imaginary channels of every frame; sampling is
// bilinear with border clamp.
ComplexSequence rigid_transform(const ComplexSequence& x, real_t dx, real_t dy,
                                real_t angle, bool reflect_x);
ComplexSequence elastic_transform(const ComplexSequence& x, real_t alpha,
                                  real_t sigma_frac, std::mt19937_64& rng);
ComplexSequence reflect_time(const ComplexSequence& x);

ComplexSequence augment(const ComplexSequence& x_gnd, const AugConfig& cfg,
                        std::mt19937_64& rng);

/// Contiguous slab of n_patch phase-encode lines at a random offset.
ComplexSequence extract_patch(const ComplexSequence& x, int n_patch,
                              std::mt19937_64& rng);

/// RNG streams for the independently seeded concerns of a training run.
struct TrainRngs {
    std::mt19937_64 mask, noise, aug, order;
    explicit TrainRngs(std::uint64_t seed)
        : mask(seed ^ 0x6d61736bULL),
          noise(seed ^ 0x6e6f6973ULL),
          aug(seed ^ 0x61756720ULL),
          order(seed ^ 0x6f726472ULL) {}
};

/// One optimization step on a batch of ground-truth sequences: a fresh
/// mask (and optional noise power) is drawn per example, gradients are
/// averaged over the batch, and Adam updates the model in place.
/// Returns the mean reconstruction MSE of the batch.
real_t train_step(CascadeModel& model, Adam& opt,
                  const std::vector<const ComplexSequence*>& batch,
                  const TrainConfig& cfg, TrainRngs& rngs);

struct Dataset {
    std::vector<ComplexSequence> train, test;
};

struct CurvePoint {
    long step;
    real_t train_mse;
    real_t test_mse;
};

struct TrainResult {
    std::vector<CurvePoint> curve;
    real_t final_test_mse = 0.0;
    real_t zero_filled_test_mse = 0.0;
};

TrainResult train(CascadeModel& model, const Dataset& data,
                  const TrainConfig& cfg);

void write_curve_csv(const std::vector<CurvePoint>& curve,
                     const std::string& path);

/// Mean reconstruction MSE over a set of sequences with per-example
/// deterministic masks at the given acceleration.
real_t evaluate_mse(CascadeModel& model, const std::vector<ComplexSequence>& set,
                    real_t acc, std::uint64_t seed, real_t sigma2 = 0.0);

/// Max relative error between tape gradients and central finite
/// differences over every model parameter, for one (truth, mask) pair.
/// The step is small to keep finite differences away from relu kinks;
/// a crossing shows up as an O(1) error at isolated parameters.
real_t model_gradcheck(CascadeModel& model, const ComplexSequence& truth,
                       const SamplingMask& mask, real_t step = 1e-5);

}  // namespace kcascade
