#include "kcascade/io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace kcascade {

static_assert(std::endian::native == std::endian::little,
              "tensor files are little-endian");

namespace {

constexpr char kMagic[8] = {'K', 'T', 'E', 'N', '1', '\0', '\0', '\0'};

std::size_t scalar_bytes(KDtype d) {
    switch (d) {
        case KDtype::Real32: return 4;
        case KDtype::Complex64: return 8;
        case KDtype::Real64: return 8;
        case KDtype::Complex128: return 16;
    }
    throw FormatError("ktensor: unknown dtype");
}

bool is_f32(KDtype d) {
    return d == KDtype::Real32 || d == KDtype::Complex64;
}

void write_u32(std::ostream& os, std::uint32_t v) {
    os.write(reinterpret_cast<const char*>(&v), 4);
}

std::uint32_t read_u32(std::istream& is) {
    std::uint32_t v = 0;
    is.read(reinterpret_cast<char*>(&v), 4);
    return v;
}

}  // namespace

bool is_complex(KDtype d) {
    return d == KDtype::Complex64 || d == KDtype::Complex128;
}

std::int64_t KTensor::elems() const {
    std::int64_t n = 1;
    for (std::uint32_t d : dims) n *= d;
    return n;
}

void write_ktensor(const KTensor& t, const std::string& path) {
    const std::int64_t n = t.elems();
    const std::int64_t values = is_complex(t.dtype) ? 2 * n : n;
    if (static_cast<std::int64_t>(t.data.size()) != values)
        throw std::invalid_argument("write_ktensor: payload has " +
                                    std::to_string(t.data.size()) +
                                    " values, dims need " +
                                    std::to_string(values));
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("write_ktensor: cannot open " + path);
    os.write(kMagic, sizeof(kMagic));
    write_u32(os, static_cast<std::uint32_t>(t.dims.size()));
    for (std::uint32_t d : t.dims) write_u32(os, d);
    write_u32(os, static_cast<std::uint32_t>(t.dtype));
    if (is_f32(t.dtype)) {
        std::vector<float> buf(t.data.begin(), t.data.end());
        os.write(reinterpret_cast<const char*>(buf.data()),
                 static_cast<std::streamsize>(buf.size() * 4));
    } else {
        os.write(reinterpret_cast<const char*>(t.data.data()),
                 static_cast<std::streamsize>(t.data.size() * 8));
    }
    if (!os) throw std::runtime_error("write_ktensor: write failed for " + path);
}

KTensor read_ktensor(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("read_ktensor: cannot open " + path);
    char magic[8];
    is.read(magic, 8);
    if (!is || std::memcmp(magic, kMagic, 8) != 0)
        throw FormatError("read_ktensor: bad magic in " + path);
    const std::uint32_t ndims = read_u32(is);
    if (!is || ndims > 8)
        throw FormatError("read_ktensor: implausible ndims in " + path);
    KTensor t;
    for (std::uint32_t i = 0; i < ndims; ++i) t.dims.push_back(read_u32(is));
    const std::uint32_t dtype = read_u32(is);
    if (!is || dtype > 3)
        throw FormatError("read_ktensor: unknown dtype in " + path);
    t.dtype = static_cast<KDtype>(dtype);
    const std::int64_t values = (is_complex(t.dtype) ? 2 : 1) * t.elems();
    t.data.resize(static_cast<std::size_t>(values));
    if (is_f32(t.dtype)) {
        std::vector<float> buf(static_cast<std::size_t>(values));
        is.read(reinterpret_cast<char*>(buf.data()),
                static_cast<std::streamsize>(buf.size() * 4));
        std::copy(buf.begin(), buf.end(), t.data.begin());
    } else {
        is.read(reinterpret_cast<char*>(t.data.data()),
                static_cast<std::streamsize>(t.data.size() * 8));
    }
    if (!is) throw FormatError("read_ktensor: truncated payload in " + path);
    is.peek();
    if (!is.eof())
        throw FormatError("read_ktensor: trailing bytes in " + path);
    return t;
}

KTensor to_ktensor(const ComplexSequence& seq, KDtype dtype) {
    if (!is_complex(dtype))
        throw std::invalid_argument("to_ktensor: sequence needs a complex dtype");
    KTensor t;
    t.dims = {static_cast<std::uint32_t>(seq.n_x),
              static_cast<std::uint32_t>(seq.n_y),
              static_cast<std::uint32_t>(seq.n_t)};
    t.dtype = dtype;
    t.data.resize(static_cast<std::size_t>(2 * seq.pixels()));
    std::size_t j = 0;
    for (int xi = 0; xi < seq.n_x; ++xi)
        for (int yi = 0; yi < seq.n_y; ++yi)
            for (int ti = 0; ti < seq.n_t; ++ti) {
                t.data[j++] = seq.re(xi, yi, ti);
                t.data[j++] = seq.im(xi, yi, ti);
            }
    return t;
}

ComplexSequence sequence_from_ktensor(const KTensor& t) {
    if (!is_complex(t.dtype))
        throw std::invalid_argument(
            "sequence_from_ktensor: expected a complex dtype");
    if (t.dims.size() != 3 && t.dims.size() != 2)
        throw std::invalid_argument(
            "sequence_from_ktensor: expected 2 or 3 dims, got " +
            std::to_string(t.dims.size()));
    const int nx = static_cast<int>(t.dims[0]);
    const int ny = static_cast<int>(t.dims[1]);
    const int nt = t.dims.size() == 3 ? static_cast<int>(t.dims[2]) : 1;
    ComplexSequence seq(nx, ny, nt);
    std::size_t j = 0;
    for (int xi = 0; xi < nx; ++xi)
        for (int yi = 0; yi < ny; ++yi)
            for (int ti = 0; ti < nt; ++ti) {
                seq.re(xi, yi, ti) = t.data[j++];
                seq.im(xi, yi, ti) = t.data[j++];
            }
    return seq;
}

KTensor to_ktensor(const Tensor& x, KDtype dtype) {
    if (is_complex(dtype))
        throw std::invalid_argument("to_ktensor: tensor needs a real dtype");
    KTensor t;
    for (int i = 0; i < x.ndim(); ++i)
        t.dims.push_back(static_cast<std::uint32_t>(x.dim(i)));
    t.dtype = dtype;
    t.data.assign(x.data(), x.data() + x.size());
    return t;
}

Tensor tensor_from_ktensor(const KTensor& t) {
    if (is_complex(t.dtype))
        throw std::invalid_argument(
            "tensor_from_ktensor: expected a real dtype");
    std::vector<int> shape;
    for (std::uint32_t d : t.dims) shape.push_back(static_cast<int>(d));
    Tensor out(shape);
    std::copy(t.data.begin(), t.data.end(), out.data());
    return out;
}

KTensor mask_to_ktensor(const SamplingMask& mask) {
    KTensor t;
    t.dims = {static_cast<std::uint32_t>(mask.n_y),
              static_cast<std::uint32_t>(mask.n_t)};
    t.dtype = KDtype::Real32;
    for (int ky = 0; ky < mask.n_y; ++ky)
        for (int ti = 0; ti < mask.n_t; ++ti)
            t.data.push_back(mask.acquired(ky, ti) ? 1.0 : 0.0);
    return t;
}

SamplingMask mask_from_ktensor(const KTensor& t) {
    if (t.dims.size() != 2)
        throw std::invalid_argument("mask_from_ktensor: expected [n_y,n_t]");
    if (is_complex(t.dtype))
        throw std::invalid_argument("mask_from_ktensor: expected a real dtype");
    SamplingMask mask(static_cast<int>(t.dims[0]), static_cast<int>(t.dims[1]));
    std::size_t j = 0;
    for (int ky = 0; ky < mask.n_y; ++ky)
        for (int ti = 0; ti < mask.n_t; ++ti) {
            const real_t v = t.data[j++];
            if (v != 0.0 && v != 1.0)
                throw std::invalid_argument(
                    "mask_from_ktensor: entries must be 0 or 1");
            mask.set(ky, ti, v != 0.0);
        }
    return mask;
}

namespace {

long parse_long(const std::string& key, const std::string& v) {
    std::size_t pos = 0;
    long out;
    try {
        out = std::stol(v, &pos);
    } catch (const std::exception&) {
        throw FormatError("config: key '" + key + "' needs an integer, got '" +
                          v + "'");
    }
    if (pos != v.size())
        throw FormatError("config: key '" + key + "' needs an integer, got '" +
                          v + "'");
    return out;
}

real_t parse_real(const std::string& key, const std::string& v) {
    std::size_t pos = 0;
    real_t out;
    try {
        out = std::stod(v, &pos);
    } catch (const std::exception&) {
        throw FormatError("config: key '" + key + "' needs a number, got '" +
                          v + "'");
    }
    if (pos != v.size())
        throw FormatError("config: key '" + key + "' needs a number, got '" +
                          v + "'");
    return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw FormatError("config: key '" + key + "' needs true/false, got '" + v +
                      "'");
}

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

}  // namespace

RunConfig parse_run_config_text(const std::string& text) {
    RunConfig cfg;
    std::istringstream is(text);
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw FormatError("config: line " + std::to_string(lineno) +
                              " is not key=value: '" + line + "'");
        const std::string key = trim(line.substr(0, eq));
        const std::string val = trim(line.substr(eq + 1));

        if (key == "n_c") cfg.model.n_c = static_cast<int>(parse_long(key, val));
        else if (key == "n_d") cfg.model.n_d = static_cast<int>(parse_long(key, val));
        else if (key == "n_f") cfg.model.n_f = static_cast<int>(parse_long(key, val));
        else if (key == "k") cfg.model.k = static_cast<int>(parse_long(key, val));
        else if (key == "dynamic") cfg.model.dynamic = parse_bool(key, val);
        else if (key == "data_sharing") cfg.model.ds_enabled = parse_bool(key, val);
        else if (key == "dc_mode") {
            if (val == "hard") cfg.model.dc_mode = DcMode::Hard;
            else if (val == "soft") cfg.model.dc_mode = DcMode::Soft;
            else throw FormatError("config: dc_mode must be hard|soft, got '" + val + "'");
        }
        else if (key == "lambda_trainable") cfg.model.lambda_trainable = parse_bool(key, val);
        else if (key == "lambda_init") cfg.model.lambda_init = parse_real(key, val);
        else if (key == "ds_boundary") {
            if (val == "clamp") cfg.model.ds_boundary = DsBoundary::Clamp;
            else if (val == "reflect") cfg.model.ds_boundary = DsBoundary::Reflect;
            else throw FormatError("config: ds_boundary must be clamp|reflect, got '" + val + "'");
        }
        else if (key == "model_seed") cfg.model_seed = static_cast<std::uint64_t>(parse_long(key, val));
        else if (key == "lr") cfg.train.lr = parse_real(key, val);
        else if (key == "beta1") cfg.train.beta1 = parse_real(key, val);
        else if (key == "beta2") cfg.train.beta2 = parse_real(key, val);
        else if (key == "weight_decay") cfg.train.weight_decay = parse_real(key, val);
        else if (key == "batch") cfg.train.batch = static_cast<int>(parse_long(key, val));
        else if (key == "iters") cfg.train.iters = parse_long(key, val);
        else if (key == "acc") cfg.train.acc_lo = cfg.train.acc_hi = parse_real(key, val);
        else if (key == "acc_lo") cfg.train.acc_lo = parse_real(key, val);
        else if (key == "acc_hi") cfg.train.acc_hi = parse_real(key, val);
        else if (key == "noise_enabled") cfg.train.noise_enabled = parse_bool(key, val);
        else if (key == "noise_lo") cfg.train.noise_lo = parse_real(key, val);
        else if (key == "noise_hi") cfg.train.noise_hi = parse_real(key, val);
        else if (key == "patch_width") cfg.train.patch_width = static_cast<int>(parse_long(key, val));
        else if (key == "seed") cfg.train.seed = static_cast<std::uint64_t>(parse_long(key, val));
        else if (key == "eval_every") cfg.train.eval_every = static_cast<int>(parse_long(key, val));
        else if (key == "checkpoint_every") cfg.train.checkpoint_every = static_cast<int>(parse_long(key, val));
        else if (key == "aug_enabled") cfg.train.aug.enabled = parse_bool(key, val);
        else if (key == "aug_translate_px") cfg.train.aug.translate_px = parse_real(key, val);
        else if (key == "aug_rotate_max") cfg.train.aug.rotate_max = parse_real(key, val);
        else if (key == "aug_reflect_x_prob") cfg.train.aug.reflect_x_prob = parse_real(key, val);
        else if (key == "aug_elastic_alpha_max") cfg.train.aug.elastic_alpha_max = parse_real(key, val);
        else if (key == "aug_elastic_sigma_lo") cfg.train.aug.elastic_sigma_lo = parse_real(key, val);
        else if (key == "aug_elastic_sigma_hi") cfg.train.aug.elastic_sigma_hi = parse_real(key, val);
        else if (key == "aug_reflect_t") cfg.train.aug.reflect_t = parse_bool(key, val);
        else if (key == "phantom_nx") cfg.phantom_nx = static_cast<int>(parse_long(key, val));
        else if (key == "phantom_ny") cfg.phantom_ny = static_cast<int>(parse_long(key, val));
        else if (key == "phantom_nt") cfg.phantom_nt = static_cast<int>(parse_long(key, val));
        else if (key == "phantom_count") cfg.phantom_count = static_cast<int>(parse_long(key, val));
        else if (key == "phantom_seed") cfg.phantom_seed = static_cast<std::uint64_t>(parse_long(key, val));
        else throw FormatError("config: unknown key '" + key + "'");
    }
    return cfg;
}

RunConfig parse_run_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("config: cannot open " + path);
    std::ostringstream ss;
    ss << is.rdbuf();
    return parse_run_config_text(ss.str());
}

}  // namespace kcascade
