#pragma once

#include <map>
#include <string>

#include "himnet/data.hpp"
#include "himnet/model.hpp"
#include "himnet/training.hpp"

namespace himnet {

// Self-describing binary container: magic, version, then a named-tensor table
// and a named text-blob table, both sorted by name so save -> load -> save is
// byte-identical.
struct Checkpoint {
    std::uint32_t version = 1;
    std::map<std::string, Tensor> tensors;
    std::map<std::string, std::string> blobs;
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

std::string serialize_model_config(const HimNetConfig& cfg);
HimNetConfig parse_model_config(const std::string& text);

// Bundles everything needed to resume or evaluate: parameters, optimizer
// moments, RNG state, normalization stats, best-val metric, provenance.
Checkpoint make_model_checkpoint(const ModelState& state, const NormStats& stats,
                                 double best_val_mae, const AdamOptimizer* adam,
                                 const std::string& rng_state,
                                 const std::string& dataset_name);

struct LoadedModel {
    HimNetConfig cfg;
    ModelState state;
    NormStats stats;
    double best_val_mae = 0.0;
    std::string dataset_name;
};

LoadedModel checkpoint_to_model(const Checkpoint& ckpt);

}  // namespace himnet
