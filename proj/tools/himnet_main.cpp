#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "himnet/commands.hpp"
#include "himnet/errors.hpp"
#include "himnet/tensor.hpp"

namespace {

using namespace himnet;

RunConfig build_run_config(const std::string& config_path, const std::vector<std::string>& sets) {
    KvConfig kv = config_path.empty() ? KvConfig::from_text("", "<defaults>")
                                      : KvConfig::from_file(config_path);
    for (const auto& s : sets) {
        size_t eq = s.find('=');
        if (eq == std::string::npos)
            throw ConfigError("--set expects section.key=value, got '" + s + "'");
        kv.set(s.substr(0, eq), s.substr(eq + 1));
    }
    return resolve_run_config(kv);
}

std::string out_dir_with_env(const std::string& flag_value, const std::string& config_value) {
    if (!flag_value.empty()) return flag_value;
    if (const char* env = std::getenv("HIMNET_OUT_DIR"); env != nullptr && env[0] != '\0')
        return env;
    return config_value;
}

std::vector<long> parse_long_csv(const std::string& csv) {
    std::vector<long> out;
    std::stringstream ss(csv);
    std::string tok;
    while (std::getline(ss, tok, ','))
        if (!tok.empty()) out.push_back(std::stol(tok));
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    if (const char* threads = std::getenv("HIMNET_THREADS"); threads != nullptr)
        himnet::set_thread_count(std::atoi(threads));

    CLI::App app{"HimNet: heterogeneity-informed meta-parameter forecasting"};
    app.require_subcommand(1);

    std::string config_path, dataset, out_dir, checkpoint, what, ablate, mask = "auto";
    std::string format = "auto", horizons_csv, samples_csv, ratios_csv;
    std::vector<std::string> sets;
    long seed = -1;
    long batch_size = 16;
    double tolerance = 1e-4;
    long gc_seed = 7;

    auto add_config_opts = [&](CLI::App* cmd) {
        cmd->add_option("--config", config_path, "config file ([section] + key = value lines)");
        cmd->add_option("--set", sets, "override a config key, e.g. --set train.lr=0.01")
            ->take_all();
    };

    CLI::App* train_cmd = app.add_subcommand("train", "train a model and write artifacts");
    add_config_opts(train_cmd);
    train_cmd->add_option("--dataset", dataset, "dataset path (matrix-binary or CSV)");
    train_cmd->add_option("--out", out_dir, "output directory");
    train_cmd->add_option("--seed", seed, "training seed");
    train_cmd->add_option("--ablate", ablate,
                          "comma list of no_Et,no_Es,no_Est,no_TMP,no_SMP,no_STMP");

    CLI::App* eval_cmd = app.add_subcommand("evaluate", "evaluate a checkpoint on a dataset");
    eval_cmd->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
    eval_cmd->add_option("--dataset", dataset, "dataset path")->required();
    eval_cmd->add_option("--format", format, "dataset format: auto|binary|csv");
    eval_cmd->add_option("--ratios", ratios_csv, "train,val,test ratios (default 0.7,0.1,0.2)");
    eval_cmd->add_option("--mask", mask, "mask zero targets: auto|on|off");
    eval_cmd->add_option("--horizons", horizons_csv, "1-based horizon rows to print, e.g. 3,6,12");
    eval_cmd->add_option("--batch-size", batch_size, "evaluation batch size");

    CLI::App* export_cmd = app.add_subcommand("export-meta", "export generated meta-parameters");
    export_cmd->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
    export_cmd->add_option("--what", what, "temporal | spatial | st_mixed")->required();
    export_cmd->add_option("--out", out_dir, "output directory");
    export_cmd->add_option("--dataset", dataset, "dataset path (st_mixed only)");
    export_cmd->add_option("--samples", samples_csv, "window indices for st_mixed, e.g. 0,100");

    CLI::App* synth_cmd =
        app.add_subcommand("generate-synthetic", "write a planted-heterogeneity dataset");
    add_config_opts(synth_cmd);
    synth_cmd->add_option("--out", out_dir, "output directory");
    synth_cmd->add_option("--seed", seed, "generation seed");

    CLI::App* gc_cmd = app.add_subcommand("grad-check", "finite-difference gradient check");
    gc_cmd->add_option("--tolerance", tolerance, "max relative error allowed");
    gc_cmd->add_option("--seed", gc_seed, "seed for the probe model and batch");

    try {
        app.parse(argc, argv);

        if (train_cmd->parsed()) {
            RunConfig rc = build_run_config(config_path, sets);
            if (!dataset.empty()) rc.data_path = dataset;
            rc.out_dir = out_dir_with_env(out_dir, rc.out_dir);
            if (seed >= 0) rc.train.seed = static_cast<std::uint64_t>(seed);
            if (!ablate.empty()) rc.model.ablation = AblationFlags::parse(ablate);
            cmd_train(rc, std::cout);
        } else if (eval_cmd->parsed()) {
            EvaluateOptions opts;
            opts.checkpoint_path = checkpoint;
            opts.data_path = dataset;
            if (format == "binary")
                opts.format = DatasetFormat::MatrixBinary;
            else if (format == "csv")
                opts.format = DatasetFormat::Csv;
            else if (format != "auto")
                throw ConfigError("--format must be auto, binary, or csv");
            if (!ratios_csv.empty()) {
                std::stringstream ss(ratios_csv);
                std::string tok;
                int i = 0;
                while (std::getline(ss, tok, ',') && i < 3) opts.ratios[i++] = std::stod(tok);
                if (i != 3) throw ConfigError("--ratios expects three comma-separated values");
            }
            if (mask == "on")
                opts.mask_mode = MaskMode::On;
            else if (mask == "off")
                opts.mask_mode = MaskMode::Off;
            else if (mask != "auto")
                throw ConfigError("--mask must be auto, on, or off");
            if (!horizons_csv.empty()) opts.horizons = parse_long_csv(horizons_csv);
            opts.batch_size = batch_size;
            cmd_evaluate(opts, std::cout);
        } else if (export_cmd->parsed()) {
            ExportMetaOptions opts;
            opts.checkpoint_path = checkpoint;
            opts.what = what;
            opts.out_dir = out_dir_with_env(out_dir, "out");
            opts.data_path = dataset;
            if (!samples_csv.empty()) opts.sample_ids = parse_long_csv(samples_csv);
            cmd_export_meta(opts, std::cout);
        } else if (synth_cmd->parsed()) {
            RunConfig rc = build_run_config(config_path, sets);
            rc.out_dir = out_dir_with_env(out_dir, rc.out_dir);
            if (seed >= 0) rc.synthetic.seed = static_cast<std::uint64_t>(seed);
            cmd_generate_synthetic(rc, std::cout);
        } else if (gc_cmd->parsed()) {
            GradCheckOptions opts;
            opts.tolerance = tolerance;
            opts.seed = static_cast<std::uint64_t>(gc_seed);
            if (!cmd_grad_check(opts, std::cout)) return 2;
        }
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const himnet::ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const himnet::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const himnet::IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "runtime failure: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
