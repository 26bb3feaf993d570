#include "himnet/checkpoint.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "himnet/errors.hpp"

namespace himnet {

namespace {

constexpr char kMagic[4] = {'H', 'I', 'M', 'C'};

void write_u32(std::ostream& os, std::uint32_t v) {
    os.write(reinterpret_cast<const char*>(&v), 4);
}
void write_u64(std::ostream& os, std::uint64_t v) {
    os.write(reinterpret_cast<const char*>(&v), 8);
}
void write_str(std::ostream& os, const std::string& s) {
    write_u32(os, static_cast<std::uint32_t>(s.size()));
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::uint32_t read_u32(std::istream& is, const char* what) {
    std::uint32_t v = 0;
    is.read(reinterpret_cast<char*>(&v), 4);
    if (!is) throw ParseError(std::string("checkpoint truncated while reading ") + what);
    return v;
}
std::uint64_t read_u64(std::istream& is, const char* what) {
    std::uint64_t v = 0;
    is.read(reinterpret_cast<char*>(&v), 8);
    if (!is) throw ParseError(std::string("checkpoint truncated while reading ") + what);
    return v;
}
std::string read_str(std::istream& is, const char* what) {
    std::uint32_t len = read_u32(is, what);
    std::string s(len, '\0');
    is.read(s.data(), len);
    if (!is) throw ParseError(std::string("checkpoint truncated while reading ") + what);
    return s;
}

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open '" + path + "' for writing");
    os.write(kMagic, 4);
    write_u32(os, ckpt.version);
    write_u64(os, ckpt.tensors.size());
    for (const auto& [name, t] : ckpt.tensors) {
        write_str(os, name);
        write_u32(os, static_cast<std::uint32_t>(t.ndim()));
        for (long d : t.shape()) write_u64(os, static_cast<std::uint64_t>(d));
        os.write(reinterpret_cast<const char*>(t.data().data()),
                 static_cast<std::streamsize>(t.data().size() * sizeof(double)));
    }
    write_u64(os, ckpt.blobs.size());
    for (const auto& [name, blob] : ckpt.blobs) {
        write_str(os, name);
        write_u64(os, blob.size());
        os.write(blob.data(), static_cast<std::streamsize>(blob.size()));
    }
    if (!os) throw IoError("short write to '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open '" + path + "'");
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kMagic, 4) != 0)
        throw ParseError("'" + path + "' is not a checkpoint file (bad magic)");
    Checkpoint ckpt;
    ckpt.version = read_u32(is, "version");
    if (ckpt.version != 1)
        throw ParseError("'" + path + "' has unsupported checkpoint version " +
                         std::to_string(ckpt.version));
    std::uint64_t nt = read_u64(is, "tensor count");
    for (std::uint64_t i = 0; i < nt; ++i) {
        std::string name = read_str(is, "tensor name");
        std::uint32_t ndim = read_u32(is, "tensor rank");
        Shape shape(ndim);
        for (auto& d : shape) d = static_cast<long>(read_u64(is, "tensor dim"));
        std::vector<double> data(static_cast<size_t>(shape_numel(shape)));
        is.read(reinterpret_cast<char*>(data.data()),
                static_cast<std::streamsize>(data.size() * sizeof(double)));
        if (!is) throw ParseError("checkpoint truncated while reading tensor '" + name + "'");
        ckpt.tensors.emplace(name, Tensor::from_data(std::move(shape), std::move(data)));
    }
    std::uint64_t nb = read_u64(is, "blob count");
    for (std::uint64_t i = 0; i < nb; ++i) {
        std::string name = read_str(is, "blob name");
        std::uint64_t len = read_u64(is, "blob length");
        std::string blob(len, '\0');
        is.read(blob.data(), static_cast<std::streamsize>(len));
        if (!is) throw ParseError("checkpoint truncated while reading blob '" + name + "'");
        ckpt.blobs.emplace(name, std::move(blob));
    }
    return ckpt;
}

// ---------------------------------------------------------------------------
// Model config text form
// ---------------------------------------------------------------------------

std::string serialize_model_config(const HimNetConfig& cfg) {
    std::ostringstream os;
    os << "n_nodes = " << cfg.n_nodes << "\n";
    os << "t_in = " << cfg.t_in << "\n";
    os << "t_out = " << cfg.t_out << "\n";
    os << "hidden = " << cfg.hidden << "\n";
    os << "order = " << cfg.order << "\n";
    os << "dim_tod = " << cfg.dim_tod << "\n";
    os << "dim_dow = " << cfg.dim_dow << "\n";
    os << "dim_s = " << cfg.dim_s << "\n";
    os << "dim_st = " << cfg.dim_st << "\n";
    os << "steps_per_day = " << cfg.steps_per_day << "\n";
    os << "days_per_week = " << cfg.days_per_week << "\n";
    os << "meta_bias = " << (cfg.meta_bias ? "true" : "false") << "\n";
    os << "ablation = " << cfg.ablation.to_string() << "\n";
    return os.str();
}

HimNetConfig parse_model_config(const std::string& text) {
    HimNetConfig cfg;
    std::istringstream is(text);
    std::string line;
    long lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ParseError("model config line " + std::to_string(lineno) +
                             ": expected 'key = value'");
        auto trim = [](std::string s) {
            size_t a = s.find_first_not_of(" \t");
            if (a == std::string::npos) return std::string();
            size_t b = s.find_last_not_of(" \t");
            return s.substr(a, b - a + 1);
        };
        std::string key = trim(line.substr(0, eq)), val = trim(line.substr(eq + 1));
        if (key == "n_nodes")
            cfg.n_nodes = std::stol(val);
        else if (key == "t_in")
            cfg.t_in = std::stol(val);
        else if (key == "t_out")
            cfg.t_out = std::stol(val);
        else if (key == "hidden")
            cfg.hidden = std::stol(val);
        else if (key == "order")
            cfg.order = std::stol(val);
        else if (key == "dim_tod")
            cfg.dim_tod = std::stol(val);
        else if (key == "dim_dow")
            cfg.dim_dow = std::stol(val);
        else if (key == "dim_s")
            cfg.dim_s = std::stol(val);
        else if (key == "dim_st")
            cfg.dim_st = std::stol(val);
        else if (key == "steps_per_day")
            cfg.steps_per_day = std::stol(val);
        else if (key == "days_per_week")
            cfg.days_per_week = std::stol(val);
        else if (key == "meta_bias")
            cfg.meta_bias = (val == "true" || val == "1");
        else if (key == "ablation")
            cfg.ablation = AblationFlags::parse(val);
        else
            throw ParseError("model config: unknown key '" + key + "'");
    }
    return cfg;
}

// ---------------------------------------------------------------------------
// Model <-> checkpoint
// ---------------------------------------------------------------------------

Checkpoint make_model_checkpoint(const ModelState& state, const NormStats& stats,
                                 double best_val_mae, const AdamOptimizer* adam,
                                 const std::string& rng_state,
                                 const std::string& dataset_name) {
    Checkpoint ckpt;
    for (const auto& name : state.names()) {
        const Tensor& t = state.param(name);
        ckpt.tensors.emplace("param/" + name, Tensor::from_data(t.shape(), t.data()));
    }
    if (adam != nullptr) {
        for (const auto& [name, m] : adam->moment1())
            ckpt.tensors.emplace("adam.m/" + name,
                                 Tensor::from_data({static_cast<long>(m.size())}, m));
        for (const auto& [name, v] : adam->moment2())
            ckpt.tensors.emplace("adam.v/" + name,
                                 Tensor::from_data({static_cast<long>(v.size())}, v));
        ckpt.blobs["adam.t"] = std::to_string(adam->step_count());
    }
    ckpt.blobs["model_config"] = serialize_model_config(state.config());
    ckpt.blobs["norm.mean"] = fmt_double(stats.mean);
    ckpt.blobs["norm.std"] = fmt_double(stats.std_dev);
    ckpt.blobs["best_val_mae"] = fmt_double(best_val_mae);
    ckpt.blobs["dataset_name"] = dataset_name;
    if (!rng_state.empty()) ckpt.blobs["rng"] = rng_state;
    return ckpt;
}

LoadedModel checkpoint_to_model(const Checkpoint& ckpt) {
    auto blob = [&](const std::string& name) -> const std::string& {
        auto it = ckpt.blobs.find(name);
        if (it == ckpt.blobs.end())
            throw ParseError("checkpoint is missing blob '" + name + "'");
        return it->second;
    };
    LoadedModel out;
    out.cfg = parse_model_config(blob("model_config"));
    out.stats.mean = std::stod(blob("norm.mean"));
    out.stats.std_dev = std::stod(blob("norm.std"));
    out.best_val_mae = std::stod(blob("best_val_mae"));
    auto dn = ckpt.blobs.find("dataset_name");
    if (dn != ckpt.blobs.end()) out.dataset_name = dn->second;

    std::map<std::string, Tensor> params;
    for (const auto& [name, t] : ckpt.tensors)
        if (name.rfind("param/", 0) == 0) params.emplace(name.substr(6), t);
    out.state = ModelState::from_tensors(out.cfg, params);
    return out;
}

}  // namespace himnet
