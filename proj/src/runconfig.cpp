#include "himnet/runconfig.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "himnet/checkpoint.hpp"
#include "himnet/errors.hpp"

namespace himnet {

namespace {

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

}  // namespace

KvConfig KvConfig::from_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open config file '" + path + "'");
    std::stringstream buf;
    buf << is.rdbuf();
    return from_text(buf.str(), path);
}

KvConfig KvConfig::from_text(const std::string& text, const std::string& origin) {
    KvConfig kv;
    kv.origin_ = origin;
    std::istringstream is(text);
    std::string line, section;
    long lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        std::string t = trim(line);
        if (t.empty() || t[0] == '#' || t[0] == ';') continue;
        if (t.front() == '[') {
            if (t.back() != ']')
                throw ParseError(origin + ":" + std::to_string(lineno) +
                                 ": malformed section header");
            section = trim(t.substr(1, t.size() - 2));
            continue;
        }
        size_t eq = t.find('=');
        if (eq == std::string::npos)
            throw ParseError(origin + ":" + std::to_string(lineno) + ": expected 'key = value'");
        std::string key = trim(t.substr(0, eq)), val = trim(t.substr(eq + 1));
        if (key.empty())
            throw ParseError(origin + ":" + std::to_string(lineno) + ": empty key");
        std::string dotted = section.empty() ? key : section + "." + key;
        kv.values_[dotted] = val;
    }
    return kv;
}

void KvConfig::set(const std::string& dotted_key, const std::string& value) {
    if (dotted_key.empty()) throw ConfigError("override with empty key");
    values_[dotted_key] = value;
}

bool KvConfig::contains(const std::string& dotted_key) const {
    return values_.count(dotted_key) > 0;
}

std::string KvConfig::get_str(const std::string& key, const std::string& fallback) {
    consumed_[key] = true;
    auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
}

long KvConfig::get_long(const std::string& key, long fallback) {
    consumed_[key] = true;
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    try {
        size_t pos = 0;
        long v = std::stol(it->second, &pos);
        if (pos != it->second.size()) throw std::invalid_argument("");
        return v;
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "': '" + it->second + "' is not an integer");
    }
}

double KvConfig::get_double(const std::string& key, double fallback) {
    consumed_[key] = true;
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    try {
        size_t pos = 0;
        double v = std::stod(it->second, &pos);
        if (pos != it->second.size()) throw std::invalid_argument("");
        return v;
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "': '" + it->second + "' is not a number");
    }
}

bool KvConfig::get_bool(const std::string& key, bool fallback) {
    consumed_[key] = true;
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    if (it->second == "true" || it->second == "1" || it->second == "on") return true;
    if (it->second == "false" || it->second == "0" || it->second == "off") return false;
    throw ConfigError("config key '" + key + "': '" + it->second + "' is not a boolean");
}

std::vector<long> KvConfig::get_long_list(const std::string& key, std::vector<long> fallback) {
    consumed_[key] = true;
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    std::vector<long> out;
    std::stringstream ss(it->second);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        std::string t = trim(tok);
        if (t.empty()) continue;
        try {
            out.push_back(std::stol(t));
        } catch (const std::exception&) {
            throw ConfigError("config key '" + key + "': '" + t + "' is not an integer");
        }
    }
    return out;
}

void KvConfig::reject_unknown() const {
    std::string bad;
    for (const auto& [key, value] : values_) {
        if (!consumed_.count(key)) {
            if (!bad.empty()) bad += ", ";
            bad += key;
        }
    }
    if (!bad.empty())
        throw ConfigError("unknown config key(s): " + bad + " (from " + origin_ + ")");
}

// ---------------------------------------------------------------------------
// RunConfig
// ---------------------------------------------------------------------------

RunConfig resolve_run_config(KvConfig& kv) {
    RunConfig rc;
    rc.data_path = kv.get_str("data.path", "");
    std::string fmt = kv.get_str("data.format", "auto");
    if (fmt == "auto")
        rc.data_format = DatasetFormat::Auto;
    else if (fmt == "binary")
        rc.data_format = DatasetFormat::MatrixBinary;
    else if (fmt == "csv")
        rc.data_format = DatasetFormat::Csv;
    else
        throw ConfigError("data.format must be auto, binary, or csv; got '" + fmt + "'");
    rc.ratios[0] = kv.get_double("data.ratio_train", 0.7);
    rc.ratios[1] = kv.get_double("data.ratio_val", 0.1);
    rc.ratios[2] = kv.get_double("data.ratio_test", 0.2);

    HimNetConfig& m = rc.model;
    m.n_nodes = kv.get_long("model.n_nodes", 0);
    m.t_in = kv.get_long("model.t_in", 12);
    m.t_out = kv.get_long("model.t_out", 12);
    m.hidden = kv.get_long("model.hidden", 64);
    m.order = kv.get_long("model.order", 1);
    m.dim_tod = kv.get_long("model.dim_tod", 8);
    m.dim_dow = kv.get_long("model.dim_dow", 8);
    m.dim_s = kv.get_long("model.dim_s", 16);
    m.dim_st = kv.get_long("model.dim_st", 16);
    m.steps_per_day = kv.get_long("model.steps_per_day", 0);
    m.days_per_week = kv.get_long("model.days_per_week", 7);
    m.meta_bias = kv.get_bool("model.meta_bias", true);
    m.ablation = AblationFlags::parse(kv.get_str("model.ablation", ""));

    TrainConfig& t = rc.train;
    t.lr = kv.get_double("train.lr", 0.001);
    t.batch_size = kv.get_long("train.batch_size", 16);
    t.max_epochs = kv.get_long("train.max_epochs", 200);
    t.patience = kv.get_long("train.patience", 20);
    t.milestones = kv.get_long_list("train.milestones", {30, 40});
    t.lr_decay = kv.get_double("train.lr_decay", 0.1);
    t.weight_decay = kv.get_double("train.weight_decay", 0.0);
    t.adam_eps = kv.get_double("train.adam_eps", 0.001);
    t.grad_clip = kv.get_double("train.grad_clip", 5.0);
    std::string loss = kv.get_str("train.loss", "mae");
    if (loss == "mae")
        t.loss = LossKind::Mae;
    else if (loss == "huber")
        t.loss = LossKind::Huber;
    else
        throw ConfigError("train.loss must be mae or huber; got '" + loss + "'");
    t.huber_delta = kv.get_double("train.huber_delta", 1.0);
    t.seed = static_cast<std::uint64_t>(kv.get_long("train.seed", 1));
    std::string mask = kv.get_str("train.mask", "auto");
    if (mask == "auto")
        rc.mask_mode = MaskMode::Auto;
    else if (mask == "on")
        rc.mask_mode = MaskMode::On;
    else if (mask == "off")
        rc.mask_mode = MaskMode::Off;
    else
        throw ConfigError("train.mask must be auto, on, or off; got '" + mask + "'");

    rc.out_dir = kv.get_str("run.out_dir", "out");

    SyntheticSpec& s = rc.synthetic;
    s.n_nodes = kv.get_long("synthetic.n_nodes", 20);
    s.n_days = kv.get_long("synthetic.n_days", 14);
    s.n_clusters = static_cast<int>(kv.get_long("synthetic.n_clusters", 2));
    s.n_regimes = static_cast<int>(kv.get_long("synthetic.n_regimes", 2));
    s.noise_std = kv.get_double("synthetic.noise_std", 0.1);
    s.seed = static_cast<std::uint64_t>(kv.get_long("synthetic.seed", 42));
    s.step_minutes = static_cast<int>(kv.get_long("synthetic.step_minutes", 5));
    std::string st = kv.get_str("synthetic.start_time", "");
    if (!st.empty()) s.start_time = parse_iso(st);
    s.name = kv.get_str("synthetic.name", "synthetic");

    kv.reject_unknown();
    return rc;
}

std::string run_config_echo(const RunConfig& rc) {
    std::ostringstream os;
    char buf[64];
    auto d = [&buf](double v) {
        std::snprintf(buf, sizeof(buf), "%.17g", v);
        return std::string(buf);
    };
    os << "[data]\n";
    os << "path = " << rc.data_path << "\n";
    os << "format = "
       << (rc.data_format == DatasetFormat::Auto
               ? "auto"
               : (rc.data_format == DatasetFormat::Csv ? "csv" : "binary"))
       << "\n";
    os << "ratio_train = " << d(rc.ratios[0]) << "\n";
    os << "ratio_val = " << d(rc.ratios[1]) << "\n";
    os << "ratio_test = " << d(rc.ratios[2]) << "\n";
    os << "\n[model]\n" << serialize_model_config(rc.model);
    os << "\n[train]\n";
    os << "lr = " << d(rc.train.lr) << "\n";
    os << "batch_size = " << rc.train.batch_size << "\n";
    os << "max_epochs = " << rc.train.max_epochs << "\n";
    os << "patience = " << rc.train.patience << "\n";
    os << "milestones = ";
    for (size_t i = 0; i < rc.train.milestones.size(); ++i)
        os << (i ? "," : "") << rc.train.milestones[i];
    os << "\n";
    os << "lr_decay = " << d(rc.train.lr_decay) << "\n";
    os << "weight_decay = " << d(rc.train.weight_decay) << "\n";
    os << "adam_eps = " << d(rc.train.adam_eps) << "\n";
    os << "grad_clip = " << d(rc.train.grad_clip) << "\n";
    os << "loss = " << (rc.train.loss == LossKind::Mae ? "mae" : "huber") << "\n";
    os << "huber_delta = " << d(rc.train.huber_delta) << "\n";
    os << "seed = " << rc.train.seed << "\n";
    os << "mask = "
       << (rc.mask_mode == MaskMode::Auto ? "auto" : (rc.mask_mode == MaskMode::On ? "on" : "off"))
       << "\n";
    os << "\n[run]\n";
    os << "out_dir = " << rc.out_dir << "\n";
    os << "\n[synthetic]\n";
    os << "n_nodes = " << rc.synthetic.n_nodes << "\n";
    os << "n_days = " << rc.synthetic.n_days << "\n";
    os << "n_clusters = " << rc.synthetic.n_clusters << "\n";
    os << "n_regimes = " << rc.synthetic.n_regimes << "\n";
    os << "noise_std = " << d(rc.synthetic.noise_std) << "\n";
    os << "seed = " << rc.synthetic.seed << "\n";
    os << "step_minutes = " << rc.synthetic.step_minutes << "\n";
    os << "start_time = " << format_iso(rc.synthetic.start_time) << "\n";
    os << "name = " << rc.synthetic.name << "\n";
    return os.str();
}

bool mask_for_dataset(MaskMode mode, const RawDataset& ds) {
    switch (mode) {
        case MaskMode::On:
            return true;
        case MaskMode::Off:
            return false;
        case MaskMode::Auto:
        default:
            return !ds.synthetic;
    }
}

}  // namespace himnet
