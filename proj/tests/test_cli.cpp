#define DOCTEST_CONFIG_IMPLEMENT
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "kcascade/io.hpp"
#include "kcascade/metrics.hpp"
#include "kcascade/phantom.hpp"

using namespace kcascade;
namespace fs = std::filesystem;

static std::string g_bin;
static std::string g_dir;

namespace {

struct RunResult {
    int code;
    std::string out;
};

RunResult run_tool(const std::string& args) {
    const std::string cmd = g_bin + " " + args + " 2>/dev/null";
    FILE* p = popen(cmd.c_str(), "r");
    REQUIRE(p != nullptr);
    std::string out;
    char buf[512];
    while (std::fgets(buf, sizeof(buf), p)) out += buf;
    const int status = pclose(p);
    return {WEXITSTATUS(status), out};
}

nlohmann::json last_json(const std::string& out) {
    std::istringstream is(out);
    std::string line, last;
    while (std::getline(is, line))
        if (!line.empty()) last = line;
    return nlohmann::json::parse(last);
}

std::string slurp(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

std::string tmp(const std::string& name) { return g_dir + "/" + name; }

}  // namespace

TEST_CASE("mask: deterministic files, JSON summary, missing flag is usage") {
    const std::string o1 = tmp("m1.kten"), o2 = tmp("m2.kten");
    RunResult r1 = run_tool("mask --ny 64 --nt 2 --acc 4 --seed 7 --out " + o1);
    RunResult r2 = run_tool("mask --ny 64 --nt 2 --acc 4 --seed 7 --out " + o2);
    CHECK(r1.code == 0);
    CHECK(r2.code == 0);
    CHECK(slurp(o1) == slurp(o2));
    nlohmann::json j = last_json(r1.out);
    CHECK(j["cmd"] == "mask");
    CHECK(std::abs(j["acquired_fraction"].get<double>() - 0.25) < 0.05);

    CHECK(run_tool("mask --ny 64 --acc 4").code == 2);
    CHECK(run_tool("nonsense").code == 2);
}

TEST_CASE("undersample: Parseval identity at sigma2=0, shape errors exit 4") {
    const std::string gnd = tmp("ph.kten");
    CHECK(run_tool("phantom --nx 32 --ny 32 --nt 4 --seed 3 --out " + gnd).code == 0);
    const std::string mask = tmp("m32.kten");
    CHECK(run_tool("mask --ny 32 --nt 4 --acc 2 --seed 5 --out " + mask).code == 0);
    const std::string s0p = tmp("s0.kten");
    CHECK(run_tool("undersample --in " + gnd + " --mask " + mask +
                   " --sigma2 0 --out " + s0p)
              .code == 0);

    ComplexSequence s0 = sequence_from_ktensor(read_ktensor(s0p));
    ComplexSequence xu = zero_filled(s0);
    CHECK(norm2(xu.values) == doctest::Approx(norm2(s0.values)).epsilon(1e-10));

    const std::string badmask = tmp("m16.kten");
    CHECK(run_tool("mask --ny 16 --nt 4 --acc 1.5 --seed 5 --out " + badmask).code == 0);
    CHECK(run_tool("undersample --in " + gnd + " --mask " + badmask +
                   " --out " + tmp("x.kten"))
              .code == 4);

    // malformed tensor file
    const std::string junk = tmp("junk.kten");
    std::ofstream(junk) << "this is not a tensor";
    CHECK(run_tool("undersample --in " + junk + " --mask " + mask + " --out " +
                   tmp("y.kten"))
              .code == 3);
}

TEST_CASE("train + reconstruct + eval: toy pipeline end to end") {
    const std::string cfg = tmp("toy.cfg");
    std::ofstream(cfg) << "n_c = 2\nn_d = 2\nn_f = 4\ndynamic = true\n"
                       << "iters = 150\nlr = 1e-3\neval_every = 50\nacc = 2\nseed = 1\n"
                       << "aug_enabled = false\n"
                       << "phantom_nx = 16\nphantom_ny = 16\nphantom_nt = 2\n"
                       << "phantom_count = 4\nphantom_seed = 9\n";
    const std::string model = tmp("toy.kcsd"), log = tmp("toy.csv");
    RunResult tr = run_tool("train --config " + cfg + " --out-model " + model +
                            " --log " + log);
    CHECK(tr.code == 0);
    nlohmann::json tj = last_json(tr.out);
    CHECK(tj["model"] == "D2-C2");
    CHECK(tj["final_test_mse"].get<double>() > 0);
    CHECK(fs::exists(model));
    {
        std::ifstream is(log);
        std::string header;
        std::getline(is, header);
        CHECK(header == "step,train_mse,test_mse");
    }

    // fully sampled + hard DC: reconstruction equals idft2 of the input
    ComplexSequence truth = generate(default_phantom(16, 16, 2, 30));
    SamplingMask full(16, 2, true);
    ComplexSequence s0 = undersample(truth, full);
    const std::string s0p = tmp("full_s0.kten"), maskp = tmp("full_m.kten");
    write_ktensor(to_ktensor(s0), s0p);
    write_ktensor(mask_to_ktensor(full), maskp);
    const std::string outp = tmp("recon.kten");
    const std::string stages = tmp("stages");
    RunResult rr = run_tool("reconstruct --model " + model + " --kspace " + s0p +
                            " --mask " + maskp + " --out " + outp +
                            " --stages-dir " + stages);
    CHECK(rr.code == 0);
    ComplexSequence out = sequence_from_ktensor(read_ktensor(outp));
    real_t max_err = 0;
    ComplexSequence xu = zero_filled(s0);
    for (std::int64_t i = 0; i < out.values.size(); ++i)
        max_err = std::max(max_err, std::abs(out.values[i] - xu.values[i]));
    CHECK(max_err < 1e-10);
    CHECK(fs::exists(stages + "/stage_1.kten"));
    CHECK(fs::exists(stages + "/stage_2.kten"));

    // eval x against itself: zero MSE, infinity sentinel
    RunResult ev = run_tool("eval --recon " + outp + " --gnd " + outp +
                            " --report " + tmp("report.txt"));
    CHECK(ev.code == 0);
    nlohmann::json ej = last_json(ev.out);
    CHECK(ej["mse"].get<double>() == 0.0);
    CHECK(ej["psnr_db"] == "inf");
    CHECK(slurp(tmp("report.txt")).find("mean MSE") != std::string::npos);

    // pipeline report against the real ground truth beats zero filling
    SamplingMask part = generate_mask(16, 2, 2.0, 77);
    ComplexSequence s0u = undersample(truth, part);
    const std::string s0up = tmp("part_s0.kten"), maskup = tmp("part_m.kten");
    write_ktensor(to_ktensor(s0u), s0up);
    write_ktensor(mask_to_ktensor(part), maskup);
    const std::string outup = tmp("recon_u.kten");
    CHECK(run_tool("reconstruct --model " + model + " --kspace " + s0up +
                   " --mask " + maskup + " --out " + outup)
              .code == 0);
    ComplexSequence outu = sequence_from_ktensor(read_ktensor(outup));
    CHECK(mse(outu, truth) < mse(zero_filled(s0u), truth));
}

TEST_CASE("gradcheck: passes at 1e-4, fails at 0, reports lambda group") {
    RunResult ok = run_tool("gradcheck --arch D2-C2 --dims 8x8x4 --nf 2 --tol 1e-4");
    CHECK(ok.code == 0);
    nlohmann::json j = last_json(ok.out);
    CHECK(j["pass"] == true);
    CHECK(j["lambda_group"] == "n/a");

    RunResult soft = run_tool(
        "gradcheck --arch D2-C2 --dims 8x8x4 --nf 2 --ds --soft-lambda --tol 1e-4");
    CHECK(soft.code == 0);
    CHECK(last_json(soft.out)["lambda_group"] == "checked");

    CHECK(run_tool("gradcheck --arch D2-C2 --dims 8x8x4 --nf 2 --tol 0").code == 5);
    CHECK(run_tool("gradcheck --arch D5-C5 --dims 8x8x4 --nf 64 --tol 1e-4").code == 4);
    CHECK(run_tool("gradcheck --arch bogus --tol 1e-4").code == 4);
}

TEST_CASE("render: uniform and black images, bad indices rejected") {
    ComplexSequence c(8, 8, 2);
    for (int xi = 0; xi < 8; ++xi)
        for (int yi = 0; yi < 8; ++yi)
            for (int t = 0; t < 2; ++t) c.re(xi, yi, t) = 0.5;
    const std::string cp = tmp("const.kten");
    write_ktensor(to_ktensor(c), cp);

    RunResult r = run_tool("render --in " + cp + " --frame 0 --out " + tmp("c.png"));
    CHECK(r.code == 0);
    nlohmann::json j = last_json(r.out);
    CHECK(j["norm_lo"].get<double>() == j["norm_hi"].get<double>());
    const std::string png = slurp(tmp("c.png"));
    REQUIRE(png.size() > 8);
    CHECK(static_cast<unsigned char>(png[0]) == 0x89);
    CHECK(png.substr(1, 3) == "PNG");

    RunResult err = run_tool("render --in " + cp + " --frame 0 --error-against " +
                             cp + " --out " + tmp("e.png"));
    CHECK(err.code == 0);
    nlohmann::json je = last_json(err.out);
    CHECK(je["kind"] == "frame-error");
    CHECK(je["norm_lo"].get<double>() == 0.0);
    CHECK(je["norm_hi"].get<double>() == 0.0);

    RunResult prof = run_tool("render --in " + cp + " --profile-y 3 --out " +
                              tmp("p.png"));
    CHECK(prof.code == 0);
    CHECK(last_json(prof.out)["kind"] == "profile");

    CHECK(run_tool("render --in " + cp + " --frame 9 --out " + tmp("x.png")).code == 4);
    CHECK(run_tool("render --in " + cp + " --profile-y 99 --out " + tmp("x.png")).code == 4);
}

int main(int argc, char** argv) {
    if (argc > 1 && argv[argc - 1][0] != '-') {
        g_bin = argv[argc - 1];
        --argc;
    }
    if (g_bin.empty()) {
        std::fprintf(stderr, "usage: test_cli [doctest options] <kcrecon path>\n");
        return 1;
    }
    g_dir = (fs::temp_directory_path() / "kc_cli_tests").string();
    fs::remove_all(g_dir);
    fs::create_directories(g_dir);
    doctest::Context ctx;
    ctx.applyCommandLine(argc, argv);
    const int rc = ctx.run();
    fs::remove_all(g_dir);
    return rc;
}
