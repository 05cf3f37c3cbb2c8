#include "kcascade/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

namespace kcascade {

std::vector<ParamRef> model_params(CascadeModel& model) {
    std::vector<ParamRef> out;
    for (auto& b : model.subnets) {
        for (auto& w : b.weights) out.push_back({&w, true});
        for (auto& bias : b.biases) out.push_back({&bias, false});
    }
    for (auto& l : model.lambdas)
        if (l.requires_grad) out.push_back({&l, false});
    return out;
}

namespace {

// Tape leaves of the same parameters, in model_params order.
std::vector<Var> bound_param_vars(const CascadeModel& model,
                                  const BoundModel& bound) {
    std::vector<Var> out;
    for (std::size_t i = 0; i < bound.blocks.size(); ++i) {
        for (Var v : bound.blocks[i].weights) out.push_back(v);
        for (Var v : bound.blocks[i].biases) out.push_back(v);
    }
    for (std::size_t i = 0; i < model.lambdas.size(); ++i)
        if (model.lambdas[i].requires_grad) out.push_back(bound.lambdas[i]);
    return out;
}

Tensor batched(const Tensor& t) {
    std::vector<int> shape = t.shape();
    shape.insert(shape.begin(), 1);
    Tensor b(shape);
    std::copy_n(t.data(), t.size(), b.data());
    return b;
}

real_t seq_mse(const ComplexSequence& a, const ComplexSequence& b) {
    real_t s = 0;
    for (std::int64_t i = 0; i < a.values.size(); ++i) {
        const real_t d = a.values[i] - b.values[i];
        s += d * d;
    }
    return s / static_cast<real_t>(a.values.size());
}

}  // namespace

Adam::Adam(std::vector<ParamRef> params, real_t lr, real_t beta1, real_t beta2,
           real_t weight_decay, real_t eps)
    : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2),
      weight_decay_(weight_decay), eps_(eps) {
    for (const auto& p : params_) {
        m_.emplace_back(p.tensor->shape());
        v_.emplace_back(p.tensor->shape());
    }
}

void Adam::step(const std::vector<Tensor>& grads) {
    if (grads.size() != params_.size())
        throw std::invalid_argument("Adam::step: gradient count mismatch");
    ++t_;
    const real_t bc1 = 1.0 - std::pow(beta1_, static_cast<real_t>(t_));
    const real_t bc2 = 1.0 - std::pow(beta2_, static_cast<real_t>(t_));
    for (std::size_t p = 0; p < params_.size(); ++p) {
        Tensor& w = *params_[p].tensor;
        const Tensor& g = grads[p];
        check_same_shape(w, g, "Adam::step");
        Tensor& m = m_[p];
        Tensor& v = v_[p];
        for (std::int64_t i = 0; i < w.size(); ++i) {
            m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
            v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
            const real_t mhat = m[i] / bc1;
            const real_t vhat = v[i] / bc2;
            w[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
        }
        if (params_[p].decay && weight_decay_ != 0.0)
            for (std::int64_t i = 0; i < w.size(); ++i)
                w[i] -= lr_ * weight_decay_ * w[i];
    }
}

namespace {

real_t sample_clamped(const ComplexSequence& x, int ch, real_t sx, real_t sy,
                      int t) {
    sx = std::clamp(sx, 0.0, static_cast<real_t>(x.n_x - 1));
    sy = std::clamp(sy, 0.0, static_cast<real_t>(x.n_y - 1));
    const int x0 = static_cast<int>(std::floor(sx));
    const int y0 = static_cast<int>(std::floor(sy));
    const int x1 = std::min(x0 + 1, x.n_x - 1);
    const int y1 = std::min(y0 + 1, x.n_y - 1);
    const real_t fx = sx - x0, fy = sy - y0;
    auto at = [&](int xi, int yi) {
        return ch == 0 ? x.re(xi, yi, t) : x.im(xi, yi, t);
    };
    return (1 - fx) * ((1 - fy) * at(x0, y0) + fy * at(x0, y1)) +
           fx * ((1 - fy) * at(x1, y0) + fy * at(x1, y1));
}

}  // namespace

ComplexSequence rigid_transform(const ComplexSequence& x, real_t dx, real_t dy,
                                real_t angle, bool reflect_x) {
    ComplexSequence out(x.n_x, x.n_y, x.n_t);
    const real_t cx = (x.n_x - 1) / 2.0, cy = (x.n_y - 1) / 2.0;
    const real_t ca = std::cos(angle), sa = std::sin(angle);
    for (int xi = 0; xi < x.n_x; ++xi)
        for (int yi = 0; yi < x.n_y; ++yi) {
            // inverse map: undo translation, rotation, then reflection
            real_t px = xi - cx - dx, py = yi - cy - dy;
            real_t rx = ca * px + sa * py;
            real_t ry = -sa * px + ca * py;
            if (reflect_x) rx = -rx;
            const real_t sx = rx + cx, sy = ry + cy;
            for (int t = 0; t < x.n_t; ++t) {
                out.re(xi, yi, t) = sample_clamped(x, 0, sx, sy, t);
                out.im(xi, yi, t) = sample_clamped(x, 1, sx, sy, t);
            }
        }
    return out;
}

namespace {

// In-place separable Gaussian blur of a [nx*ny] field.
void gaussian_blur(std::vector<real_t>& f, int nx, int ny, real_t sigma) {
    if (sigma <= 0) return;
    const int r = std::max(1, static_cast<int>(std::ceil(3 * sigma)));
    std::vector<real_t> kern(static_cast<std::size_t>(2 * r + 1));
    real_t sum = 0;
    for (int i = -r; i <= r; ++i) {
        kern[static_cast<std::size_t>(i + r)] =
            std::exp(-0.5 * i * i / (sigma * sigma));
        sum += kern[static_cast<std::size_t>(i + r)];
    }
    for (auto& k : kern) k /= sum;
    std::vector<real_t> tmp(f.size());
    auto idx = [&](int xi, int yi) {
        return static_cast<std::size_t>(xi) * ny + yi;
    };
    for (int xi = 0; xi < nx; ++xi)
        for (int yi = 0; yi < ny; ++yi) {
            real_t s = 0;
            for (int i = -r; i <= r; ++i)
                s += kern[static_cast<std::size_t>(i + r)] *
                     f[idx(std::clamp(xi + i, 0, nx - 1), yi)];
            tmp[idx(xi, yi)] = s;
        }
    for (int xi = 0; xi < nx; ++xi)
        for (int yi = 0; yi < ny; ++yi) {
            real_t s = 0;
            for (int i = -r; i <= r; ++i)
                s += kern[static_cast<std::size_t>(i + r)] *
                     tmp[idx(xi, std::clamp(yi + i, 0, ny - 1))];
            f[idx(xi, yi)] = s;
        }
}

}  // namespace

ComplexSequence elastic_transform(const ComplexSequence& x, real_t alpha,
                                  real_t sigma_frac, std::mt19937_64& rng) {
    const std::size_t n = static_cast<std::size_t>(x.n_x) * x.n_y;
    std::vector<real_t> ux(n), uy(n);
    std::uniform_real_distribution<real_t> u(-1.0, 1.0);
    for (std::size_t i = 0; i < n; ++i) ux[i] = u(rng);
    for (std::size_t i = 0; i < n; ++i) uy[i] = u(rng);
    const real_t sigma = sigma_frac * x.n_x;
    gaussian_blur(ux, x.n_x, x.n_y, sigma);
    gaussian_blur(uy, x.n_x, x.n_y, sigma);

    ComplexSequence out(x.n_x, x.n_y, x.n_t);
    for (int xi = 0; xi < x.n_x; ++xi)
        for (int yi = 0; yi < x.n_y; ++yi) {
            const std::size_t i = static_cast<std::size_t>(xi) * x.n_y + yi;
            const real_t sx = xi + alpha * ux[i];
            const real_t sy = yi + alpha * uy[i];
            for (int t = 0; t < x.n_t; ++t) {
                out.re(xi, yi, t) = sample_clamped(x, 0, sx, sy, t);
                out.im(xi, yi, t) = sample_clamped(x, 1, sx, sy, t);
            }
        }
    return out;
}

ComplexSequence reflect_time(const ComplexSequence& x) {
    ComplexSequence out(x.n_x, x.n_y, x.n_t);
    for (int xi = 0; xi < x.n_x; ++xi)
        for (int yi = 0; yi < x.n_y; ++yi)
            for (int t = 0; t < x.n_t; ++t) {
                out.re(xi, yi, t) = x.re(xi, yi, x.n_t - 1 - t);
                out.im(xi, yi, t) = x.im(xi, yi, x.n_t - 1 - t);
            }
    return out;
}

ComplexSequence augment(const ComplexSequence& x_gnd, const AugConfig& cfg,
                        std::mt19937_64& rng) {
    if (!cfg.enabled) return x_gnd;
    std::uniform_real_distribution<real_t> utr(-cfg.translate_px,
                                               cfg.translate_px);
    std::uniform_real_distribution<real_t> urot(0.0, cfg.rotate_max);
    std::uniform_real_distribution<real_t> u01(0.0, 1.0);
    const real_t dx = cfg.translate_px > 0 ? utr(rng) : 0.0;
    const real_t dy = cfg.translate_px > 0 ? utr(rng) : 0.0;
    const real_t angle = cfg.rotate_max > 0 ? urot(rng) : 0.0;
    const bool refl = cfg.reflect_x_prob > 0 && u01(rng) < cfg.reflect_x_prob;

    ComplexSequence out = rigid_transform(x_gnd, dx, dy, angle, refl);
    if (cfg.elastic_alpha_max > 0) {
        std::uniform_real_distribution<real_t> ua(0.0, cfg.elastic_alpha_max);
        std::uniform_real_distribution<real_t> us(cfg.elastic_sigma_lo,
                                                  cfg.elastic_sigma_hi);
        const real_t alpha = ua(rng);
        const real_t sigma = us(rng);
        out = elastic_transform(out, alpha, sigma, rng);
    }
    if (cfg.reflect_t && x_gnd.n_t > 1 && u01(rng) < 0.5)
        out = reflect_time(out);
    return out;
}

ComplexSequence extract_patch(const ComplexSequence& x, int n_patch,
                              std::mt19937_64& rng) {
    if (n_patch < 1 || n_patch > x.n_y)
        throw std::invalid_argument("extract_patch: patch width " +
                                    std::to_string(n_patch) +
                                    " outside [1, " + std::to_string(x.n_y) + "]");
    std::uniform_int_distribution<int> uy(0, x.n_y - n_patch);
    const int y0 = n_patch == x.n_y ? 0 : uy(rng);
    ComplexSequence out(x.n_x, n_patch, x.n_t);
    for (int xi = 0; xi < x.n_x; ++xi)
        for (int yi = 0; yi < n_patch; ++yi)
            for (int t = 0; t < x.n_t; ++t) {
                out.re(xi, yi, t) = x.re(xi, y0 + yi, t);
                out.im(xi, yi, t) = x.im(xi, y0 + yi, t);
            }
    return out;
}

real_t train_step(CascadeModel& model, Adam& opt,
                  const std::vector<const ComplexSequence*>& batch,
                  const TrainConfig& cfg, TrainRngs& rngs) {
    if (batch.empty()) throw std::invalid_argument("train_step: empty batch");
    std::vector<ParamRef> params = model_params(model);
    std::vector<Tensor> grads;
    grads.reserve(params.size());
    for (const auto& p : params) grads.emplace_back(p.tensor->shape());

    std::uniform_real_distribution<real_t> uacc(cfg.acc_lo, cfg.acc_hi);
    std::uniform_real_distribution<real_t> unoise(cfg.noise_lo, cfg.noise_hi);
    real_t loss_sum = 0;
    for (const ComplexSequence* ex : batch) {
        const real_t acc = cfg.acc_hi > cfg.acc_lo ? uacc(rngs.mask) : cfg.acc_lo;
        SamplingMask mask = generate_mask(ex->n_y, ex->n_t, acc, rngs.mask());
        NoiseSpec noise;
        if (cfg.noise_enabled) {
            noise.sigma2 =
                cfg.noise_hi > cfg.noise_lo ? unoise(rngs.noise) : cfg.noise_lo;
            noise.seed = rngs.noise();
        }
        ComplexSequence s0 = undersample(*ex, mask, noise);

        Tape tape;
        BoundModel bound = bind_model(tape, model);
        Var out = model_forward(tape, model, bound, s0.values, mask);
        Var target = tape.leaf(batched(ex->values));
        Var loss = mse_loss(tape, out, target);
        const real_t lv = tape.value(loss)[0];
        if (!std::isfinite(lv))
            throw std::domain_error("train_step: non-finite loss (" +
                                     std::to_string(lv) + "); aborting");
        loss_sum += lv;
        tape.backward(loss);
        std::vector<Var> vars = bound_param_vars(model, bound);
        for (std::size_t p = 0; p < params.size(); ++p) {
            Tensor g = tape.grad_or_zero(vars[p]);
            for (std::int64_t i = 0; i < g.size(); ++i) grads[p][i] += g[i];
        }
    }
    const real_t inv = 1.0 / static_cast<real_t>(batch.size());
    for (auto& g : grads)
        for (std::int64_t i = 0; i < g.size(); ++i) g[i] *= inv;
    opt.step(grads);
    return loss_sum * inv;
}

real_t evaluate_mse(CascadeModel& model, const std::vector<ComplexSequence>& set,
                    real_t acc, std::uint64_t seed, real_t sigma2) {
    if (set.empty()) return 0;
    real_t total = 0;
    for (std::size_t i = 0; i < set.size(); ++i) {
        const ComplexSequence& x = set[i];
        SamplingMask mask = generate_mask(x.n_y, x.n_t, acc, seed + i);
        ComplexSequence s0 =
            undersample(x, mask, NoiseSpec{sigma2, seed + 1000 + i});
        ComplexSequence out = reconstruct(model, s0, mask);
        total += seq_mse(out, x);
    }
    return total / static_cast<real_t>(set.size());
}

namespace {

real_t zero_filled_eval_mse(const std::vector<ComplexSequence>& set, real_t acc,
                            std::uint64_t seed, real_t sigma2) {
    if (set.empty()) return 0;
    real_t total = 0;
    for (std::size_t i = 0; i < set.size(); ++i) {
        const ComplexSequence& x = set[i];
        SamplingMask mask = generate_mask(x.n_y, x.n_t, acc, seed + i);
        ComplexSequence s0 =
            undersample(x, mask, NoiseSpec{sigma2, seed + 1000 + i});
        total += seq_mse(zero_filled(s0), x);
    }
    return total / static_cast<real_t>(set.size());
}

}  // namespace

TrainResult train(CascadeModel& model, const Dataset& data,
                  const TrainConfig& cfg) {
    if (data.train.empty())
        throw std::invalid_argument("train: empty training set");
    if (cfg.batch < 1) throw std::invalid_argument("train: batch must be >= 1");

    TrainRngs rngs(cfg.seed);
    Adam opt(model_params(model), cfg.lr, cfg.beta1, cfg.beta2,
             cfg.weight_decay);

    const real_t eval_acc = 0.5 * (cfg.acc_lo + cfg.acc_hi);
    const real_t eval_sigma2 =
        cfg.noise_enabled ? 0.5 * (cfg.noise_lo + cfg.noise_hi) : 0.0;
    const std::uint64_t eval_seed = cfg.seed ^ 0x6576616cULL;

    TrainResult result;
    result.zero_filled_test_mse =
        zero_filled_eval_mse(data.test, eval_acc, eval_seed, eval_sigma2);

    std::vector<std::size_t> order(data.train.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::size_t cursor = order.size();  // triggers a shuffle on first use

    for (long step = 1; step <= cfg.iters; ++step) {
        std::vector<ComplexSequence> prepared;
        prepared.reserve(static_cast<std::size_t>(cfg.batch));
        for (int b = 0; b < cfg.batch; ++b) {
            if (cursor >= order.size()) {
                std::shuffle(order.begin(), order.end(), rngs.order);
                cursor = 0;
            }
            ComplexSequence ex = augment(data.train[order[cursor++]], cfg.aug,
                                         rngs.aug);
            if (cfg.patch_width > 0 && cfg.patch_width < ex.n_y)
                ex = extract_patch(ex, cfg.patch_width, rngs.aug);
            prepared.push_back(std::move(ex));
        }
        std::vector<const ComplexSequence*> batch;
        for (const auto& ex : prepared) batch.push_back(&ex);
        const real_t train_mse = train_step(model, opt, batch, cfg, rngs);

        if (step % cfg.eval_every == 0 || step == cfg.iters) {
            const real_t test_mse =
                evaluate_mse(model, data.test, eval_acc, eval_seed, eval_sigma2);
            result.curve.push_back({step, train_mse, test_mse});
        }
        if (cfg.checkpoint_every > 0 && step % cfg.checkpoint_every == 0 &&
            !cfg.checkpoint_dir.empty())
            save_model(model, cfg.checkpoint_dir + "/checkpoint_" +
                                  std::to_string(step) + ".kcsd");
    }

    result.final_test_mse =
        cfg.iters > 0 && !result.curve.empty()
            ? result.curve.back().test_mse
            : evaluate_mse(model, data.test, eval_acc, eval_seed, eval_sigma2);
    return result;
}

void write_curve_csv(const std::vector<CurvePoint>& curve,
                     const std::string& path) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("write_curve_csv: cannot open " + path);
    os << "step,train_mse,test_mse\n";
    for (const auto& p : curve)
        os << p.step << "," << p.train_mse << "," << p.test_mse << "\n";
    if (!os) throw std::runtime_error("write_curve_csv: write failed for " + path);
}

real_t model_gradcheck(CascadeModel& model, const ComplexSequence& truth,
                       const SamplingMask& mask, real_t step) {
    ComplexSequence s0 = undersample(truth, mask);

    std::vector<Tensor> analytic;
    {
        Tape tape;
        BoundModel bound = bind_model(tape, model);
        Var out = model_forward(tape, model, bound, s0.values, mask);
        Var target = tape.leaf(batched(truth.values));
        Var loss = mse_loss(tape, out, target);
        tape.backward(loss);
        for (Var v : bound_param_vars(model, bound))
            analytic.push_back(tape.grad_or_zero(v));
    }

    auto loss_at = [&]() {
        ComplexSequence out = reconstruct(model, s0, mask);
        return seq_mse(out, truth);
    };

    std::vector<ParamRef> params = model_params(model);
    real_t max_rel = 0;
    for (std::size_t p = 0; p < params.size(); ++p) {
        Tensor& w = *params[p].tensor;
        for (std::int64_t i = 0; i < w.size(); ++i) {
            const real_t orig = w[i];
            w[i] = orig + step;
            const real_t lp = loss_at();
            w[i] = orig - step;
            const real_t lm = loss_at();
            w[i] = orig;
            const real_t fd = (lp - lm) / (2 * step);
            const real_t g = analytic[p][i];
            const real_t rel = std::abs(fd - g) /
                               std::max({std::abs(fd), std::abs(g), 1e-3});
            max_rel = std::max(max_rel, rel);
        }
    }
    return max_rel;
}

}  // namespace kcascade
