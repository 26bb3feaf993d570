#pragma once

#include <map>
#include <string>
#include <vector>

#include "himnet/data.hpp"
#include "himnet/model.hpp"
#include "himnet/training.hpp"

namespace himnet {

// Flat "[section]" + "key = value" text, overridable by command-line
// "--set section.key=value" pairs (flags win). Every key must be consumed by
// the command that runs; leftovers are rejected up front.
class KvConfig {
public:
    static KvConfig from_file(const std::string& path);
    static KvConfig from_text(const std::string& text, const std::string& origin = "<text>");

    void set(const std::string& dotted_key, const std::string& value);

    bool contains(const std::string& dotted_key) const;
    std::string get_str(const std::string& key, const std::string& fallback);
    long get_long(const std::string& key, long fallback);
    double get_double(const std::string& key, double fallback);
    bool get_bool(const std::string& key, bool fallback);
    std::vector<long> get_long_list(const std::string& key, std::vector<long> fallback);

    // Throws ConfigError naming every key no getter asked for.
    void reject_unknown() const;

private:
    std::map<std::string, std::string> values_;
    mutable std::map<std::string, bool> consumed_;
    std::string origin_;
};

enum class MaskMode { Auto, On, Off };

struct RunConfig {
    // [data]
    std::string data_path;
    DatasetFormat data_format = DatasetFormat::Auto;
    std::array<double, 3> ratios{0.7, 0.1, 0.2};
    // [model]
    HimNetConfig model;  // n_nodes / steps_per_day of 0 mean "infer from data"
    // [train]
    TrainConfig train;
    MaskMode mask_mode = MaskMode::Auto;
    // [run]
    std::string out_dir = "out";
    // [synthetic]
    SyntheticSpec synthetic;
};

// Extracts a RunConfig and rejects unknown keys.
RunConfig resolve_run_config(KvConfig& kv);

// The exact resolved configuration, echoed into every artifact directory.
std::string run_config_echo(const RunConfig& rc);

bool mask_for_dataset(MaskMode mode, const RawDataset& ds);

}  // namespace himnet
