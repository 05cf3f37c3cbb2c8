#include "kcascade/metrics.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace kcascade {

namespace {

void check_same(const ComplexSequence& a, const ComplexSequence& b,
                const char* who) {
    if (a.n_x != b.n_x || a.n_y != b.n_y || a.n_t != b.n_t)
        throw std::invalid_argument(std::string(who) + ": shape mismatch " +
                                    a.values.shape_str() + " vs " +
                                    b.values.shape_str());
}

}  // namespace

real_t mse(const ComplexSequence& x, const ComplexSequence& gnd) {
    check_same(x, gnd, "mse");
    real_t s = 0;
    for (int xi = 0; xi < x.n_x; ++xi)
        for (int yi = 0; yi < x.n_y; ++yi)
            for (int t = 0; t < x.n_t; ++t) {
                const real_t dr = x.re(xi, yi, t) - gnd.re(xi, yi, t);
                const real_t di = x.im(xi, yi, t) - gnd.im(xi, yi, t);
                s += dr * dr + di * di;
            }
    return s / static_cast<real_t>(x.pixels());
}

real_t mse_magnitude(const ComplexSequence& x, const ComplexSequence& gnd) {
    check_same(x, gnd, "mse_magnitude");
    real_t s = 0;
    for (int xi = 0; xi < x.n_x; ++xi)
        for (int yi = 0; yi < x.n_y; ++yi)
            for (int t = 0; t < x.n_t; ++t) {
                const real_t d = std::hypot(x.re(xi, yi, t), x.im(xi, yi, t)) -
                                 std::hypot(gnd.re(xi, yi, t), gnd.im(xi, yi, t));
                s += d * d;
            }
    return s / static_cast<real_t>(x.pixels());
}

real_t psnr_from_mse(real_t mse) {
    if (mse < 0) throw std::invalid_argument("psnr_from_mse: negative MSE");
    if (mse == 0) return std::numeric_limits<real_t>::infinity();
    return 10.0 * std::log10(1.0 / mse);
}

real_t psnr(const ComplexSequence& x, const ComplexSequence& gnd) {
    return psnr_from_mse(mse(x, gnd));
}

real_t noise_psnr(real_t sigma2) { return psnr_from_mse(sigma2); }

Tensor temporal_profile(const ComplexSequence& x, int y_index) {
    if (y_index < 0 || y_index >= x.n_y)
        throw std::out_of_range("temporal_profile: y index " +
                                std::to_string(y_index) + " outside [0, " +
                                std::to_string(x.n_y) + ")");
    Tensor out({2, x.n_x, x.n_t});
    for (int xi = 0; xi < x.n_x; ++xi)
        for (int t = 0; t < x.n_t; ++t) {
            out[static_cast<std::int64_t>(xi) * x.n_t + t] = x.re(xi, y_index, t);
            out[static_cast<std::int64_t>(x.n_x + xi) * x.n_t + t] =
                x.im(xi, y_index, t);
        }
    return out;
}

EvalReport evaluate(const std::vector<ComplexSequence>& recon,
                    const std::vector<ComplexSequence>& gnd) {
    if (recon.size() != gnd.size() || recon.empty())
        throw std::invalid_argument("evaluate: need equal, nonempty sets");
    EvalReport report;
    for (std::size_t i = 0; i < recon.size(); ++i) {
        SequenceEval e;
        e.mse = mse(recon[i], gnd[i]);
        e.mse_mag = mse_magnitude(recon[i], gnd[i]);
        e.psnr = psnr_from_mse(e.mse);
        report.per_sequence.push_back(e);
    }
    const real_t n = static_cast<real_t>(report.per_sequence.size());
    for (const auto& e : report.per_sequence) {
        report.mean_mse += e.mse;
        report.mean_psnr += e.psnr;
    }
    report.mean_mse /= n;
    report.mean_psnr /= n;
    real_t var = 0;
    for (const auto& e : report.per_sequence) {
        const real_t d = e.mse - report.mean_mse;
        var += d * d;
    }
    report.sd_mse = report.per_sequence.size() > 1
                        ? std::sqrt(var / (n - 1))
                        : 0.0;
    return report;
}

void write_report_csv(const EvalReport& report, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("write_report_csv: cannot open " + path);
    os << "sequence,mse,mse_mag,psnr_db\n";
    for (std::size_t i = 0; i < report.per_sequence.size(); ++i) {
        const auto& e = report.per_sequence[i];
        os << i << "," << e.mse << "," << e.mse_mag << "," << e.psnr << "\n";
    }
    os << "mean," << report.mean_mse << ",," << report.mean_psnr << "\n";
    os << "sd," << report.sd_mse << ",,\n";
    for (std::size_t s = 0; s < report.stage_mse.size(); ++s)
        os << "stage_" << s << "," << report.stage_mse[s] << ",,\n";
    if (!os)
        throw std::runtime_error("write_report_csv: write failed for " + path);
}

std::string report_text(const EvalReport& report) {
    std::ostringstream os;
    os << "sequences: " << report.per_sequence.size() << "\n";
    if (report.acc > 0) os << "acceleration: " << report.acc << "x\n";
    if (report.noise_psnr_f > 0)
        os << "input PSNR_f: " << report.noise_psnr_f << " dB\n";
    os << "  #      MSE          MSE(mag)     PSNR (dB)\n";
    for (std::size_t i = 0; i < report.per_sequence.size(); ++i) {
        const auto& e = report.per_sequence[i];
        char line[96];
        std::snprintf(line, sizeof(line), "%3zu  %12.5e %12.5e %10.3f\n", i,
                      e.mse, e.mse_mag, e.psnr);
        os << line;
    }
    os << "mean MSE " << report.mean_mse << "  sd " << report.sd_mse
       << "  mean PSNR " << report.mean_psnr << " dB\n";
    for (std::size_t s = 0; s < report.stage_mse.size(); ++s)
        os << "stage " << s + 1 << " MSE " << report.stage_mse[s] << "\n";
    return os.str();
}

void write_report_text(const EvalReport& report, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("write_report_text: cannot open " + path);
    os << report_text(report);
    if (!os)
        throw std::runtime_error("write_report_text: write failed for " + path);
}

}  // namespace kcascade
