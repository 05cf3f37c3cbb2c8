#include <cmath>
#include <filesystem>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "kcascade/io.hpp"
#include "kcascade/metrics.hpp"
#include "kcascade/phantom.hpp"
#include "kcascade/png.hpp"

using namespace kcascade;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

void emit(const json& j) { std::cout << j.dump() << "\n"; }

ComplexSequence load_sequence(const std::string& path) {
    return sequence_from_ktensor(read_ktensor(path));
}

SamplingMask load_mask(const std::string& path) {
    return mask_from_ktensor(read_ktensor(path));
}

void check_dims(const ComplexSequence& s, const SamplingMask& m,
                const char* who) {
    if (s.n_y != m.n_y || s.n_t != m.n_t)
        throw std::invalid_argument(
            std::string(who) + ": k-space " + s.values.shape_str() +
            " does not match mask [" + std::to_string(m.n_y) + "," +
            std::to_string(m.n_t) + "]");
}

std::vector<real_t> magnitude_frame(const ComplexSequence& x, int frame) {
    if (frame < 0 || frame >= x.n_t)
        throw std::invalid_argument("render: frame " + std::to_string(frame) +
                                    " outside [0, " + std::to_string(x.n_t) + ")");
    std::vector<real_t> v;
    v.reserve(static_cast<std::size_t>(x.n_x) * x.n_y);
    for (int yi = 0; yi < x.n_y; ++yi)
        for (int xi = 0; xi < x.n_x; ++xi)
            v.push_back(std::hypot(x.re(xi, yi, frame), x.im(xi, yi, frame)));
    return v;
}

Dataset dataset_from_dir(const std::string& dir) {
    std::vector<std::string> files;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.path().extension() == ".kten") files.push_back(e.path().string());
    std::sort(files.begin(), files.end());
    if (files.empty())
        throw std::invalid_argument("train: no .kten files in " + dir);
    Dataset data;
    const std::size_t n_test = files.size() * 3 / 10;
    for (std::size_t i = 0; i < files.size(); ++i) {
        ComplexSequence s = load_sequence(files[i]);
        if (i < files.size() - n_test)
            data.train.push_back(std::move(s));
        else
            data.test.push_back(std::move(s));
    }
    return data;
}

int run(int argc, char** argv) {
    CLI::App app{"cascaded CNN reconstruction toolkit"};
    app.require_subcommand(1);

    // phantom
    auto* cmd_phantom = app.add_subcommand("phantom", "generate a dynamic phantom");
    int p_nx = 64, p_ny = 64, p_nt = 12;
    std::uint64_t p_seed = 0;
    std::string p_out;
    cmd_phantom->add_option("--nx", p_nx);
    cmd_phantom->add_option("--ny", p_ny);
    cmd_phantom->add_option("--nt", p_nt);
    cmd_phantom->add_option("--seed", p_seed);
    cmd_phantom->add_option("--out", p_out)->required();

    // mask
    auto* cmd_mask = app.add_subcommand("mask", "generate a sampling mask");
    int m_ny = 256, m_nt = 1;
    double m_acc = 4.0;
    std::uint64_t m_seed = 0;
    std::string m_out;
    cmd_mask->add_option("--ny", m_ny);
    cmd_mask->add_option("--nt", m_nt);
    cmd_mask->add_option("--acc", m_acc);
    cmd_mask->add_option("--seed", m_seed);
    cmd_mask->add_option("--out", m_out)->required();

    // undersample
    auto* cmd_under = app.add_subcommand("undersample", "mask and noise a sequence");
    std::string u_in, u_mask, u_out;
    double u_sigma2 = 0.0;
    std::uint64_t u_nseed = 0;
    cmd_under->add_option("--in", u_in)->required();
    cmd_under->add_option("--mask", u_mask)->required();
    cmd_under->add_option("--sigma2", u_sigma2);
    cmd_under->add_option("--noise-seed", u_nseed);
    cmd_under->add_option("--out", u_out)->required();

    // train
    auto* cmd_train = app.add_subcommand("train", "train a cascade");
    std::string t_config, t_data_dir, t_out_model, t_log, t_ckpt_dir, t_init_model;
    cmd_train->add_option("--config", t_config)->required();
    cmd_train->add_option("--data-dir", t_data_dir);
    cmd_train->add_option("--out-model", t_out_model)->required();
    cmd_train->add_option("--log", t_log);
    cmd_train->add_option("--checkpoint-dir", t_ckpt_dir);
    cmd_train->add_option("--init-model", t_init_model);

    // reconstruct
    auto* cmd_rec = app.add_subcommand("reconstruct", "run a trained cascade");
    std::string r_model, r_kspace, r_mask, r_out, r_stages;
    cmd_rec->add_option("--model", r_model)->required();
    cmd_rec->add_option("--kspace", r_kspace)->required();
    cmd_rec->add_option("--mask", r_mask)->required();
    cmd_rec->add_option("--out", r_out)->required();
    cmd_rec->add_option("--stages-dir", r_stages);

    // eval
    auto* cmd_eval = app.add_subcommand("eval", "compare against ground truth");
    std::string e_recon, e_gnd, e_report, e_csv;
    cmd_eval->add_option("--recon", e_recon)->required();
    cmd_eval->add_option("--gnd", e_gnd)->required();
    cmd_eval->add_option("--report", e_report);
    cmd_eval->add_option("--csv", e_csv);

    // gradcheck
    auto* cmd_grad = app.add_subcommand("gradcheck", "finite-difference audit");
    std::string g_arch = "D2-C2", g_dims = "8x8x4";
    int g_nf = 4;
    double g_tol = 1e-4;
    bool g_ds = false, g_soft = false;
    std::uint64_t g_seed = 0;
    cmd_grad->add_option("--arch", g_arch, "DnD-CnC, e.g. D2-C2");
    cmd_grad->add_option("--dims", g_dims, "nx x ny x nt, e.g. 8x8x4");
    cmd_grad->add_option("--nf", g_nf);
    cmd_grad->add_option("--tol", g_tol);
    cmd_grad->add_flag("--ds", g_ds);
    cmd_grad->add_flag("--soft-lambda", g_soft);
    cmd_grad->add_option("--seed", g_seed);

    // render
    auto* cmd_render = app.add_subcommand("render", "write a grayscale PNG");
    std::string v_in, v_out, v_err;
    int v_frame = -1, v_profile_y = -1;
    cmd_render->add_option("--in", v_in)->required();
    cmd_render->add_option("--out", v_out)->required();
    cmd_render->add_option("--frame", v_frame);
    cmd_render->add_option("--profile-y", v_profile_y);
    cmd_render->add_option("--error-against", v_err);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    if (*cmd_phantom) {
        ComplexSequence x = generate(default_phantom(p_nx, p_ny, p_nt, p_seed));
        write_ktensor(to_ktensor(x), p_out);
        emit({{"cmd", "phantom"},
              {"out", p_out},
              {"nx", p_nx},
              {"ny", p_ny},
              {"nt", p_nt},
              {"seed", p_seed}});
    } else if (*cmd_mask) {
        SamplingMask mask = generate_mask(m_ny, m_nt, m_acc, m_seed);
        write_ktensor(mask_to_ktensor(mask), m_out);
        std::int64_t acquired = 0;
        for (int t = 0; t < m_nt; ++t) acquired += mask.acquired_count(t);
        emit({{"cmd", "mask"},
              {"out", m_out},
              {"ny", m_ny},
              {"nt", m_nt},
              {"acc", m_acc},
              {"seed", m_seed},
              {"acquired_fraction",
               static_cast<double>(acquired) / (static_cast<double>(m_ny) * m_nt)}});
    } else if (*cmd_under) {
        ComplexSequence x = load_sequence(u_in);
        SamplingMask mask = load_mask(u_mask);
        check_dims(x, mask, "undersample");
        ComplexSequence s0 = undersample(x, mask, NoiseSpec{u_sigma2, u_nseed});
        write_ktensor(to_ktensor(s0), u_out);
        emit({{"cmd", "undersample"},
              {"out", u_out},
              {"sigma2", u_sigma2},
              {"noise_psnr_db",
               u_sigma2 > 0 ? json(noise_psnr(u_sigma2)) : json(nullptr)}});
    } else if (*cmd_train) {
        RunConfig cfg = parse_run_config(t_config);
        if (!t_ckpt_dir.empty()) {
            cfg.train.checkpoint_dir = t_ckpt_dir;
            if (cfg.train.checkpoint_every == 0)
                cfg.train.checkpoint_every =
                    static_cast<int>(std::max<long>(1, cfg.train.iters / 4));
        }
        Dataset data =
            t_data_dir.empty()
                ? make_dataset(default_phantom(cfg.phantom_nx, cfg.phantom_ny,
                                               cfg.phantom_nt, cfg.phantom_seed),
                               cfg.phantom_count, cfg.phantom_seed)
                : dataset_from_dir(t_data_dir);
        CascadeModel model = t_init_model.empty()
                                 ? build_model(cfg.model, cfg.model_seed)
                                 : load_model(t_init_model);
        TrainResult r = train(model, data, cfg.train);
        save_model(model, t_out_model);
        if (!t_log.empty()) write_curve_csv(r.curve, t_log);
        emit({{"cmd", "train"},
              {"model", model.name()},
              {"params", model.param_count()},
              {"iters", cfg.train.iters},
              {"out_model", t_out_model},
              {"final_test_mse", r.final_test_mse},
              {"zero_filled_test_mse", r.zero_filled_test_mse}});
    } else if (*cmd_rec) {
        CascadeModel model = load_model(r_model);
        ComplexSequence s0 = load_sequence(r_kspace);
        SamplingMask mask = load_mask(r_mask);
        check_dims(s0, mask, "reconstruct");
        std::vector<ComplexSequence> stages;
        ComplexSequence out =
            reconstruct(model, s0, mask, r_stages.empty() ? nullptr : &stages);
        for (std::int64_t i = 0; i < out.values.size(); ++i)
            if (!std::isfinite(out.values[i]))
                throw std::domain_error("reconstruct: non-finite output value");
        write_ktensor(to_ktensor(out), r_out);
        if (!r_stages.empty()) {
            fs::create_directories(r_stages);
            for (std::size_t i = 0; i < stages.size(); ++i)
                write_ktensor(to_ktensor(stages[i]),
                              r_stages + "/stage_" + std::to_string(i + 1) +
                                  ".kten");
        }
        emit({{"cmd", "reconstruct"},
              {"model", model.name()},
              {"out", r_out},
              {"stages", stages.size()}});
    } else if (*cmd_eval) {
        ComplexSequence recon = load_sequence(e_recon);
        ComplexSequence gnd = load_sequence(e_gnd);
        EvalReport report = evaluate({recon}, {gnd});
        if (!e_report.empty()) write_report_text(report, e_report);
        if (!e_csv.empty()) write_report_csv(report, e_csv);
        const real_t p = report.per_sequence[0].psnr;
        emit({{"cmd", "eval"},
              {"mse", report.per_sequence[0].mse},
              {"mse_mag", report.per_sequence[0].mse_mag},
              {"psnr_db", std::isinf(p) ? json("inf") : json(p)}});
    } else if (*cmd_grad) {
        int nd = 0, nc = 0;
        if (std::sscanf(g_arch.c_str(), "D%d-C%d", &nd, &nc) != 2)
            throw std::invalid_argument("gradcheck: --arch must look like D2-C2");
        int nx = 0, ny = 0, nt = 0;
        if (std::sscanf(g_dims.c_str(), "%dx%dx%d", &nx, &ny, &nt) != 3)
            throw std::invalid_argument("gradcheck: --dims must look like 8x8x4");
        ModelConfig mc;
        mc.n_c = nc;
        mc.n_d = nd;
        mc.n_f = g_nf;
        mc.dynamic = nt > 1;
        mc.ds_enabled = g_ds;
        mc.dc_mode = g_soft ? DcMode::Soft : DcMode::Hard;
        mc.lambda_trainable = g_soft;
        CascadeModel model = build_model(mc, g_seed);
        if (model.param_count() > 100000)
            throw std::invalid_argument(
                "gradcheck: refusing " + std::to_string(model.param_count()) +
                " parameters (limit 100000)");
        std::mt19937_64 rng(g_seed + 1);
        ComplexSequence truth(Tensor::randn({2, nx, ny, nt}, rng));
        SamplingMask mask(ny, nt);
        std::uniform_real_distribution<double> u(0, 1);
        for (int t = 0; t < nt; ++t) {
            mask.set(ny / 2, t, true);
            for (int ky = 0; ky < ny; ++ky)
                if (u(rng) < 0.4) mask.set(ky, t, true);
        }
        const real_t err = model_gradcheck(model, truth, mask);
        emit({{"cmd", "gradcheck"},
              {"arch", model.name()},
              {"params", model.param_count()},
              {"max_rel_error", err},
              {"lambda_group", g_soft ? json("checked") : json("n/a")},
              {"tol", g_tol},
              {"pass", err < g_tol}});
        if (!(err < g_tol)) return 5;
    } else if (*cmd_render) {
        ComplexSequence x = load_sequence(v_in);
        if (v_frame >= 0 && v_profile_y >= 0)
            throw std::invalid_argument(
                "render: choose one of --frame or --profile-y");
        std::vector<real_t> values;
        int w = 0, h = 0;
        std::string kind;
        if (v_profile_y >= 0) {
            if (v_profile_y >= x.n_y)
                throw std::out_of_range("render: --profile-y outside image");
            kind = "profile";
            w = x.n_t;
            h = x.n_x;
            for (int xi = 0; xi < x.n_x; ++xi)
                for (int t = 0; t < x.n_t; ++t)
                    values.push_back(
                        std::hypot(x.re(xi, v_profile_y, t), x.im(xi, v_profile_y, t)));
        } else {
            kind = "frame";
            const int frame = v_frame < 0 ? 0 : v_frame;
            values = magnitude_frame(x, frame);
            w = x.n_x;
            h = x.n_y;
        }
        if (!v_err.empty()) {
            ComplexSequence g = load_sequence(v_err);
            if (g.n_x != x.n_x || g.n_y != x.n_y || g.n_t != x.n_t)
                throw std::invalid_argument("render: --error-against shape mismatch");
            kind += "-error";
            std::vector<real_t> gv;
            if (v_profile_y >= 0) {
                for (int xi = 0; xi < x.n_x; ++xi)
                    for (int t = 0; t < x.n_t; ++t)
                        gv.push_back(std::hypot(g.re(xi, v_profile_y, t),
                                                g.im(xi, v_profile_y, t)));
            } else {
                gv = magnitude_frame(g, v_frame < 0 ? 0 : v_frame);
            }
            for (std::size_t i = 0; i < values.size(); ++i)
                values[i] = std::abs(values[i] - gv[i]);
        }
        std::vector<std::uint8_t> gray;
        auto [lo, hi] = gray_normalize(values, gray);
        write_png_gray(v_out, gray, w, h);
        emit({{"cmd", "render"},
              {"out", v_out},
              {"kind", kind},
              {"width", w},
              {"height", h},
              {"norm_lo", lo},
              {"norm_hi", hi}});
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const FormatError& e) {
        std::cerr << "format error: " << e.what() << "\n";
        return 3;
    } catch (const std::domain_error& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return 5;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    } catch (const std::out_of_range& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
}
