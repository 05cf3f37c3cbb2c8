#include "kcascade/cascade.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include <json.hpp>

namespace kcascade {

static_assert(std::endian::native == std::endian::little,
              "model files are little-endian");

namespace {

void validate(const ModelConfig& cfg) {
    if (cfg.n_c < 1 || cfg.n_d < 2 || cfg.n_f < 1 || cfg.k < 1 || cfg.k % 2 == 0)
        throw std::invalid_argument("ModelConfig: bad architecture parameters");
    if (cfg.ds_enabled && !cfg.dynamic)
        throw std::invalid_argument(
            "ModelConfig: data sharing applies only to dynamic reconstruction");
    if (cfg.lambda_init < 0)
        throw std::invalid_argument("ModelConfig: negative lambda_init");
}

CnnBlock make_block(const ModelConfig& cfg) {
    CnnBlock b;
    b.n_d = cfg.n_d;
    b.n_f = cfg.n_f;
    b.k = cfg.k;
    b.k_t = cfg.dynamic ? cfg.k : 1;
    b.in_channels = cfg.ds_enabled ? 12 : 2;
    return b;
}

}  // namespace

std::string CascadeModel::name() const {
    std::string s = "D" + std::to_string(cfg.n_d) + "-C" + std::to_string(cfg.n_c);
    if (cfg.ds_enabled) s += "(S)";
    return s;
}

std::int64_t CascadeModel::param_count() const {
    std::int64_t n = 0;
    for (const auto& b : subnets) n += b.param_count();
    return n + static_cast<std::int64_t>(lambdas.size());
}

CascadeModel build_model(const ModelConfig& cfg, std::uint64_t seed) {
    validate(cfg);
    CascadeModel m;
    m.cfg = cfg;
    std::mt19937_64 rng(seed);
    for (int i = 0; i < cfg.n_c; ++i) {
        CnnBlock b = make_block(cfg);
        b.init_he(rng);
        m.subnets.push_back(std::move(b));
        Tensor lam = Tensor::scalar(cfg.lambda_init);
        lam.requires_grad = cfg.lambda_trainable && cfg.dc_mode == DcMode::Soft;
        m.lambdas.push_back(std::move(lam));
    }
    return m;
}

BoundModel bind_model(Tape& tape, CascadeModel& model) {
    BoundModel bound;
    for (auto& b : model.subnets) bound.blocks.push_back(bind_block(tape, b));
    for (auto& l : model.lambdas) bound.lambdas.push_back(tape.leaf(l));
    return bound;
}

Var model_forward(Tape& tape, const CascadeModel& model, const BoundModel& bound,
                  const Tensor& s0, const SamplingMask& mask,
                  std::vector<Var>* stages) {
    Tensor x0 = dft2_tensor(s0, true);
    std::vector<int> bshape = x0.shape();
    bshape.insert(bshape.begin(), 1);
    Tensor xb(bshape);
    std::copy_n(x0.data(), x0.size(), xb.data());
    Var x = tape.leaf(std::move(xb));
    for (int i = 0; i < model.cfg.n_c; ++i) {
        Var in = x;
        if (model.cfg.ds_enabled)
            in = ds_layer(tape, x, s0, mask,
                          i == 0 ? DsStage::First : DsStage::Later,
                          model.cfg.ds_boundary);
        Var x_cnn = cnn_forward(tape, model.subnets[static_cast<std::size_t>(i)],
                                bound.blocks[static_cast<std::size_t>(i)], in);
        x = dc_layer(tape, x_cnn, s0, mask, model.cfg.dc_mode,
                     model.cfg.dc_mode == DcMode::Soft
                         ? bound.lambdas[static_cast<std::size_t>(i)]
                         : Var{});
        if (stages) stages->push_back(x);
    }
    return x;
}

ComplexSequence reconstruct(CascadeModel& model, const ComplexSequence& s0,
                            const SamplingMask& mask,
                            std::vector<ComplexSequence>* stages) {
    Tape tape;
    BoundModel bound = bind_model(tape, model);
    std::vector<Var> stage_vars;
    Var out = model_forward(tape, model, bound, s0.values, mask,
                            stages ? &stage_vars : nullptr);
    auto unbatch = [&](Var v) {
        const Tensor& t = tape.value(v);
        Tensor img({2, t.dim(2), t.dim(3), t.dim(4)});
        std::copy_n(t.data(), img.size(), img.data());
        return ComplexSequence(std::move(img));
    };
    if (stages)
        for (Var v : stage_vars) stages->push_back(unbatch(v));
    return unbatch(out);
}

std::int64_t count_params(const CascadeModel& model) { return model.param_count(); }

std::int64_t estimate_activation_bytes(const CascadeModel& model, int batch,
                                       int nx, int ny, int nt,
                                       int bytes_per_scalar) {
    return static_cast<std::int64_t>(batch) * nx * ny * nt * model.cfg.n_f *
           model.cfg.n_c * (model.cfg.n_d - 1) * bytes_per_scalar;
}

CascadeModel grow_cascade(const CascadeModel& model, std::uint64_t seed) {
    CascadeModel grown = model;
    grown.cfg.n_c += 1;
    std::mt19937_64 rng(seed);
    CnnBlock b = make_block(grown.cfg);
    b.init_he(rng);
    grown.subnets.push_back(std::move(b));
    Tensor lam = Tensor::scalar(grown.cfg.lambda_init);
    lam.requires_grad =
        grown.cfg.lambda_trainable && grown.cfg.dc_mode == DcMode::Soft;
    grown.lambdas.push_back(std::move(lam));
    return grown;
}

namespace {

constexpr char kMagic[5] = {'K', 'C', 'S', 'D', '1'};
constexpr std::uint32_t kVersion = 1;

void write_u32(std::ostream& os, std::uint32_t v) {
    os.write(reinterpret_cast<const char*>(&v), 4);
}

std::uint32_t read_u32(std::istream& is) {
    std::uint32_t v = 0;
    is.read(reinterpret_cast<char*>(&v), 4);
    return v;
}

void write_tensor(std::ostream& os, const Tensor& t) {
    os.write(reinterpret_cast<const char*>(t.data()),
             static_cast<std::streamsize>(t.size() * sizeof(real_t)));
}

void read_tensor(std::istream& is, Tensor& t) {
    is.read(reinterpret_cast<char*>(t.data()),
            static_cast<std::streamsize>(t.size() * sizeof(real_t)));
}

}  // namespace

void save_model(const CascadeModel& model, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("save_model: cannot open " + path);
    os.write(kMagic, sizeof(kMagic));
    write_u32(os, kVersion);
    nlohmann::json desc = {
        {"name", model.name()},
        {"n_c", model.cfg.n_c},
        {"n_d", model.cfg.n_d},
        {"n_f", model.cfg.n_f},
        {"k", model.cfg.k},
        {"dynamic", model.cfg.dynamic},
        {"ds_enabled", model.cfg.ds_enabled},
        {"dc_mode", model.cfg.dc_mode == DcMode::Hard ? "hard" : "soft"},
        {"lambda_trainable", model.cfg.lambda_trainable},
        {"lambda_init", model.cfg.lambda_init},
        {"ds_boundary",
         model.cfg.ds_boundary == DsBoundary::Clamp ? "clamp" : "reflect"},
        {"precision", "f64"},
    };
    const std::string text = desc.dump();
    write_u32(os, static_cast<std::uint32_t>(text.size()));
    os.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& b : model.subnets) {
        for (const auto& w : b.weights) write_tensor(os, w);
        for (const auto& bias : b.biases) write_tensor(os, bias);
    }
    for (const auto& l : model.lambdas) write_tensor(os, l);
    if (!os) throw std::runtime_error("save_model: write failed for " + path);
}

CascadeModel load_model(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("load_model: cannot open " + path);
    char magic[5];
    is.read(magic, 5);
    if (!is || std::memcmp(magic, kMagic, 5) != 0)
        throw std::runtime_error("load_model: bad magic in " + path);
    if (read_u32(is) != kVersion)
        throw std::runtime_error("load_model: unsupported version in " + path);
    const std::uint32_t len = read_u32(is);
    std::string text(len, '\0');
    is.read(text.data(), len);
    nlohmann::json desc;
    try {
        desc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error&) {
        throw std::runtime_error("load_model: malformed descriptor in " + path);
    }
    ModelConfig cfg;
    cfg.n_c = desc.at("n_c").get<int>();
    cfg.n_d = desc.at("n_d").get<int>();
    cfg.n_f = desc.at("n_f").get<int>();
    cfg.k = desc.at("k").get<int>();
    cfg.dynamic = desc.at("dynamic").get<bool>();
    cfg.ds_enabled = desc.at("ds_enabled").get<bool>();
    cfg.dc_mode =
        desc.at("dc_mode").get<std::string>() == "hard" ? DcMode::Hard : DcMode::Soft;
    cfg.lambda_trainable = desc.at("lambda_trainable").get<bool>();
    cfg.lambda_init = desc.at("lambda_init").get<real_t>();
    cfg.ds_boundary = desc.at("ds_boundary").get<std::string>() == "clamp"
                          ? DsBoundary::Clamp
                          : DsBoundary::Reflect;

    CascadeModel m = build_model(cfg, 0);
    for (auto& b : m.subnets) {
        for (auto& w : b.weights) read_tensor(is, w);
        for (auto& bias : b.biases) read_tensor(is, bias);
    }
    for (auto& l : m.lambdas) read_tensor(is, l);
    if (!is) throw std::runtime_error("load_model: truncated payload in " + path);
    return m;
}

}  // namespace kcascade
