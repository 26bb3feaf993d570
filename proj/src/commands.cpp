#include "himnet/commands.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <ostream>

#include "himnet/checkpoint.hpp"
#include "himnet/errors.hpp"
#include "himnet/metaparams.hpp"

namespace fs = std::filesystem;

namespace himnet {

namespace {

void ensure_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create output directory '" + dir + "': " + ec.message());
}

// Streams rows into a matrix-binary file without holding the full matrix.
class MatrixStreamWriter {
public:
    MatrixStreamWriter(const std::string& path, long rows, long cols)
        : os_(path, std::ios::binary | std::ios::trunc), path_(path), cols_(cols) {
        if (!os_) throw IoError("cannot open '" + path + "' for writing");
        const char magic[4] = {'S', 'T', 'D', 'S'};
        os_.write(magic, 4);
        std::uint32_t h[3] = {static_cast<std::uint32_t>(rows), static_cast<std::uint32_t>(cols),
                              0u};
        os_.write(reinterpret_cast<const char*>(h), sizeof(h));
    }

    void write_row(const double* row) {
        buf_.resize(cols_);
        for (long j = 0; j < cols_; ++j) buf_[j] = static_cast<float>(row[j]);
        os_.write(reinterpret_cast<const char*>(buf_.data()), cols_ * sizeof(float));
        if (!os_) throw IoError("short write to '" + path_ + "'");
    }

private:
    std::ofstream os_;
    std::string path_;
    long cols_;
    std::vector<float> buf_;
};

double cosine(const double* a, const double* b, long n) {
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (long i = 0; i < n; ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0.0 || nb == 0.0) return 0.0;
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

void write_cosine_csv(const std::string& path, const std::vector<double>& rows_flat, long n,
                      long width) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw IoError("cannot open '" + path + "' for writing");
    char buf[48];
    for (long i = 0; i < n; ++i) {
        for (long j = 0; j < n; ++j) {
            double c = i == j ? 1.0
                              : cosine(&rows_flat[i * width], &rows_flat[j * width], width);
            std::snprintf(buf, sizeof(buf), "%.9g", c);
            os << (j ? "," : "") << buf;
        }
        os << "\n";
    }
    if (!os) throw IoError("short write to '" + path + "'");
}

void write_tensor_binary(const std::string& path, const Tensor& t) {
    long rows = t.ndim() == 1 ? 1 : t.dim(0);
    long cols = t.numel() / rows;
    write_matrix_binary(path, t.data(), rows, cols, 0);
}

RawDataset load_for_model(const std::string& path, DatasetFormat fmt, const HimNetConfig& cfg) {
    if (path.empty()) throw ConfigError("no dataset path given (set data.path or --dataset)");
    RawDataset ds = load_dataset(path, fmt);
    if (ds.n_nodes != cfg.n_nodes)
        throw ConfigError("dataset has N=" + std::to_string(ds.n_nodes) +
                          " nodes but the model expects N=" + std::to_string(cfg.n_nodes));
    long spd = 1440 / ds.step_minutes;
    if (spd != cfg.steps_per_day)
        throw ConfigError("dataset has " + std::to_string(spd) +
                          " steps per day but the model expects " +
                          std::to_string(cfg.steps_per_day));
    return ds;
}

}  // namespace

void print_report(const EvalReport& report, const std::vector<long>& horizons, std::ostream& os) {
    std::vector<long> hs = horizons;
    if (hs.empty()) {
        hs.resize(report.per_horizon.size());
        std::iota(hs.begin(), hs.end(), 1);
    }
    os << "horizon       MAE      RMSE      MAPE\n";
    char buf[96];
    for (long s : hs) {
        if (s < 1 || s > static_cast<long>(report.per_horizon.size()))
            throw ConfigError("horizon " + std::to_string(s) + " out of range 1.." +
                              std::to_string(report.per_horizon.size()));
        const HorizonMetrics& m = report.per_horizon[s - 1];
        std::snprintf(buf, sizeof(buf), "%7ld %9.4f %9.4f %8.2f%%\n", s, m.mae, m.rmse, m.mape);
        os << buf;
    }
    std::snprintf(buf, sizeof(buf), "%7s %9.4f %9.4f %8.2f%%\n", "avg", report.average.mae,
                  report.average.rmse, report.average.mape);
    os << buf;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

TrainArtifacts cmd_train(const RunConfig& rc_in, std::ostream& log) {
    RunConfig rc = rc_in;
    if (rc.data_path.empty())
        throw ConfigError("train: no dataset path given (set data.path or --dataset)");
    auto ds = std::make_shared<RawDataset>(load_dataset(rc.data_path, rc.data_format));
    log << "loaded '" << ds->name << "': " << ds->n_steps << " steps x " << ds->n_nodes
        << " nodes\n";

    // Resolve model dims against the data.
    if (rc.model.n_nodes == 0)
        rc.model.n_nodes = ds->n_nodes;
    else if (rc.model.n_nodes != ds->n_nodes)
        throw ConfigError("model.n_nodes=" + std::to_string(rc.model.n_nodes) +
                          " but dataset has N=" + std::to_string(ds->n_nodes));
    long spd = 1440 / ds->step_minutes;
    if (rc.model.steps_per_day == 0)
        rc.model.steps_per_day = spd;
    else if (rc.model.steps_per_day != spd)
        throw ConfigError("model.steps_per_day=" + std::to_string(rc.model.steps_per_day) +
                          " but dataset has " + std::to_string(spd));
    rc.train.mask_zeros = mask_for_dataset(rc.mask_mode, *ds);

    DataSplit split = prepare_split(ds, rc.model.t_in, rc.model.t_out, rc.ratios);
    log << "windows: train=" << split.train.size() << " val=" << split.val.size()
        << " test=" << split.test.size() << " (mask_zeros=" << (rc.train.mask_zeros ? "on" : "off")
        << ")\n";

    TrainResult result = train(split, rc.model, rc.train);
    log << "trained " << result.epochs_run << " epoch(s); best val MAE " << std::setprecision(6)
        << result.best_val_mae << " at epoch " << result.best_epoch << "\n";

    EvalReport test_report =
        evaluate(result.best_state, split.test, rc.train.batch_size, rc.train.mask_zeros);

    ensure_dir(rc.out_dir);
    TrainArtifacts art;
    art.test_report = test_report;
    art.best_val_mae = result.best_val_mae;
    art.checkpoint_path = rc.out_dir + "/checkpoint.himc";
    art.history_path = rc.out_dir + "/history.csv";
    art.report_path = rc.out_dir + "/report.csv";
    art.config_echo_path = rc.out_dir + "/config_resolved.cfg";

    Checkpoint ckpt = make_model_checkpoint(result.best_state, result.stats, result.best_val_mae,
                                            &result.final_adam, result.rng_state, ds->name);
    save_checkpoint(art.checkpoint_path, ckpt);

    {
        std::ofstream os(art.history_path, std::ios::trunc);
        if (!os) throw IoError("cannot open '" + art.history_path + "' for writing");
        os << "epoch,train_loss,val_mae,lr\n";
        char buf[128];
        for (const auto& rec : result.history) {
            std::snprintf(buf, sizeof(buf), "%ld,%.9g,%.9g,%.9g\n", rec.epoch, rec.train_loss,
                          rec.val_mae, rec.lr);
            os << buf;
        }
    }
    {
        std::ofstream os(art.report_path, std::ios::trunc);
        if (!os) throw IoError("cannot open '" + art.report_path + "' for writing");
        os << "horizon,mae,rmse,mape\n";
        char buf[128];
        for (size_t t = 0; t < test_report.per_horizon.size(); ++t) {
            const auto& m = test_report.per_horizon[t];
            std::snprintf(buf, sizeof(buf), "%zu,%.9g,%.9g,%.9g\n", t + 1, m.mae, m.rmse, m.mape);
            os << buf;
        }
        char abuf[128];
        std::snprintf(abuf, sizeof(abuf), "avg,%.9g,%.9g,%.9g\n", test_report.average.mae,
                      test_report.average.rmse, test_report.average.mape);
        os << abuf;
    }
    {
        std::ofstream os(art.config_echo_path, std::ios::trunc);
        if (!os) throw IoError("cannot open '" + art.config_echo_path + "' for writing");
        os << run_config_echo(rc);
    }

    log << "test report:\n";
    print_report(test_report, {}, log);
    log << "artifacts under " << rc.out_dir << "/\n";
    return art;
}

// ---------------------------------------------------------------------------
// evaluate
// ---------------------------------------------------------------------------

EvalReport cmd_evaluate(const EvaluateOptions& opts, std::ostream& log) {
    LoadedModel model = checkpoint_to_model(load_checkpoint(opts.checkpoint_path));
    RawDataset loaded = load_for_model(opts.data_path, opts.format, model.cfg);
    bool mask = mask_for_dataset(opts.mask_mode, loaded);
    auto ds = std::make_shared<RawDataset>(std::move(loaded));

    // Evaluation reuses the checkpoint's normalization statistics.
    TimeIndices idx = compute_time_indices(*ds);
    SampleSet samples = make_windows(ds, idx, model.stats, model.cfg.t_in, model.cfg.t_out);
    DataSplit split = split_dataset(samples, opts.ratios);

    EvalReport report = evaluate(model.state, split.test, opts.batch_size, mask);
    log << "test partition of '" << ds->name << "' (" << split.test.size() << " samples, "
        << "mask_zeros=" << (mask ? "on" : "off") << "):\n";
    print_report(report, opts.horizons, log);
    return report;
}

// ---------------------------------------------------------------------------
// export-meta
// ---------------------------------------------------------------------------

namespace {

// Mean generated parameter vector at each hour slot, averaged over the week.
std::vector<double> hourly_temporal_params(const ModelState& state) {
    const HimNetConfig& cfg = state.config();
    const auto& d_tod = state.param("embed.d_tod").data();
    const auto& d_dow = state.param("embed.d_dow").data();
    const auto& pool = state.param("pool.temporal").data();
    long s = cfg.param_set_size(), dt = cfg.dim_t();
    std::vector<double> hourly(24 * s, 0.0);
    std::vector<double> query(dt);
    for (long hh = 0; hh < 24; ++hh) {
        long slot = hh * cfg.steps_per_day / 24;
        for (long w = 0; w < cfg.days_per_week; ++w) {
            for (long j = 0; j < cfg.dim_tod; ++j) query[j] = d_tod[slot * cfg.dim_tod + j];
            for (long j = 0; j < cfg.dim_dow; ++j)
                query[cfg.dim_tod + j] = d_dow[w * cfg.dim_dow + j];
            for (long k = 0; k < dt; ++k) {
                double q = query[k] / static_cast<double>(cfg.days_per_week);
                const double* prow = &pool[k * s];
                double* out = &hourly[hh * s];
                for (long c = 0; c < s; ++c) out[c] += q * prow[c];
            }
        }
    }
    return hourly;
}

}  // namespace

std::vector<std::string> cmd_export_meta(const ExportMetaOptions& opts, std::ostream& log) {
    LoadedModel model = checkpoint_to_model(load_checkpoint(opts.checkpoint_path));
    const HimNetConfig& cfg = model.cfg;
    long s = cfg.param_set_size();
    ensure_dir(opts.out_dir);
    std::vector<std::string> written;

    if (opts.what == "temporal") {
        if (!model.state.has("pool.temporal"))
            throw ConfigError("checkpoint has no temporal meta-parameters (ablated: " +
                              cfg.ablation.to_string() + ")");
        const auto& d_tod = model.state.param("embed.d_tod").data();
        const auto& d_dow = model.state.param("embed.d_dow").data();
        const auto& pool = model.state.param("pool.temporal").data();
        long dt = cfg.dim_t();

        // Full tod x dow grid, day-of-week major.
        std::string grid_path = opts.out_dir + "/meta_temporal.stbin";
        MatrixStreamWriter writer(grid_path, cfg.days_per_week * cfg.steps_per_day, s);
        std::vector<double> row(s), query(dt);
        for (long w = 0; w < cfg.days_per_week; ++w)
            for (long tod = 0; tod < cfg.steps_per_day; ++tod) {
                for (long j = 0; j < cfg.dim_tod; ++j) query[j] = d_tod[tod * cfg.dim_tod + j];
                for (long j = 0; j < cfg.dim_dow; ++j)
                    query[cfg.dim_tod + j] = d_dow[w * cfg.dim_dow + j];
                std::fill(row.begin(), row.end(), 0.0);
                for (long k = 0; k < dt; ++k) {
                    const double* prow = &pool[k * s];
                    for (long c = 0; c < s; ++c) row[c] += query[k] * prow[c];
                }
                writer.write_row(row.data());
            }
        written.push_back(grid_path);

        std::string cos_path = opts.out_dir + "/meta_temporal_hourly_cosine.csv";
        write_cosine_csv(cos_path, hourly_temporal_params(model.state), 24, s);
        written.push_back(cos_path);

        std::string tod_path = opts.out_dir + "/embed_tod.stbin";
        write_tensor_binary(tod_path, model.state.param("embed.d_tod"));
        written.push_back(tod_path);
        std::string dow_path = opts.out_dir + "/embed_dow.stbin";
        write_tensor_binary(dow_path, model.state.param("embed.d_dow"));
        written.push_back(dow_path);
    } else if (opts.what == "spatial") {
        if (!model.state.has("pool.spatial"))
            throw ConfigError("checkpoint has no spatial meta-parameters (ablated: " +
                              cfg.ablation.to_string() + ")");
        const auto& e_s = model.state.param("embed.e_s").data();
        const auto& pool = model.state.param("pool.spatial").data();
        std::vector<double> theta(cfg.n_nodes * s, 0.0);
        for (long n = 0; n < cfg.n_nodes; ++n)
            for (long k = 0; k < cfg.dim_s; ++k) {
                double q = e_s[n * cfg.dim_s + k];
                const double* prow = &pool[k * s];
                double* out = &theta[n * s];
                for (long c = 0; c < s; ++c) out[c] += q * prow[c];
            }
        std::string grid_path = opts.out_dir + "/meta_spatial.stbin";
        {
            MatrixStreamWriter writer(grid_path, cfg.n_nodes, s);
            for (long n = 0; n < cfg.n_nodes; ++n) writer.write_row(&theta[n * s]);
        }
        written.push_back(grid_path);
        std::string cos_path = opts.out_dir + "/meta_spatial_cosine.csv";
        write_cosine_csv(cos_path, theta, cfg.n_nodes, s);
        written.push_back(cos_path);
        std::string es_path = opts.out_dir + "/embed_es.stbin";
        write_tensor_binary(es_path, model.state.param("embed.e_s"));
        written.push_back(es_path);
    } else if (opts.what == "st_mixed") {
        if (!model.state.has("pool.st_mixed"))
            throw ConfigError("checkpoint has no ST-mixed meta-parameters (ablated: " +
                              cfg.ablation.to_string() + ")");
        if (cfg.ablation.no_est)
            throw ConfigError("ST-mixed export needs the spatiotemporal embedding (ablated)");
        if (opts.sample_ids.empty())
            throw ConfigError("st_mixed export needs --samples with window indices");
        RawDataset loaded = load_for_model(opts.data_path, opts.format, cfg);
        auto ds = std::make_shared<RawDataset>(std::move(loaded));
        TimeIndices idx = compute_time_indices(*ds);
        SampleSet samples = make_windows(ds, idx, model.stats, cfg.t_in, cfg.t_out);
        for (long id : opts.sample_ids)
            if (id < 0 || id >= samples.size())
                throw ConfigError("sample index " + std::to_string(id) + " out of range 0.." +
                                  std::to_string(samples.size() - 1));

        Batch batch = make_batch(samples, opts.sample_ids);
        Tensor h = encode_hidden(model.state, batch);
        Tensor e_st =
            encode_st(h, model.state.param("proj.w_e"), model.state.param("proj.b_e"));
        Tensor theta = generate_st_mixed(MetaParamPool{model.state.param("pool.st_mixed"),
                                                       cfg.dim_st, s},
                                         e_st);
        long b = batch.b, n = cfg.n_nodes;
        std::string raw_path = opts.out_dir + "/meta_st_mixed.stbin";
        {
            MatrixStreamWriter writer(raw_path, b * n, s);
            for (long i = 0; i < b * n; ++i) writer.write_row(&theta.data()[i * s]);
        }
        written.push_back(raw_path);
        for (long i = 0; i < b; ++i) {
            std::vector<double> block(theta.data().begin() + i * n * s,
                                      theta.data().begin() + (i + 1) * n * s);
            std::string path = opts.out_dir + "/meta_st_sample" +
                               std::to_string(opts.sample_ids[i]) + "_cosine.csv";
            write_cosine_csv(path, block, n, s);
            written.push_back(path);
        }
    } else {
        throw ConfigError("export-meta: unknown selector '" + opts.what +
                          "' (expected temporal, spatial, or st_mixed)");
    }

    for (const auto& path : written) log << "wrote " << path << "\n";
    return written;
}

// ---------------------------------------------------------------------------
// generate-synthetic
// ---------------------------------------------------------------------------

SyntheticArtifacts cmd_generate_synthetic(const RunConfig& rc, std::ostream& log) {
    SyntheticResult result = synthetic_generate(rc.synthetic);
    ensure_dir(rc.out_dir);
    SyntheticArtifacts art;
    art.data_path = rc.out_dir + "/" + rc.synthetic.name + ".stbin";
    art.meta_path = art.data_path + ".meta";
    art.oracle_path = art.data_path + ".oracle";
    save_dataset(art.data_path, result.data);
    save_oracle(art.oracle_path, result.oracle);
    log << "wrote " << art.data_path << " (" << result.data.n_steps << " steps x "
        << result.data.n_nodes << " nodes), " << art.meta_path << ", " << art.oracle_path << "\n";
    return art;
}

// ---------------------------------------------------------------------------
// grad-check
// ---------------------------------------------------------------------------

bool cmd_grad_check(const GradCheckOptions& opts, std::ostream& log) {
    HimNetConfig cfg;
    cfg.n_nodes = 3;
    cfg.t_in = 2;
    cfg.t_out = 2;
    cfg.hidden = 3;
    cfg.order = 1;
    cfg.dim_tod = 2;
    cfg.dim_dow = 2;
    cfg.dim_s = 2;
    cfg.dim_st = 2;
    cfg.steps_per_day = 8;

    GradCheckReport report = grad_check(cfg, opts.tolerance, opts.seed);
    log << "leaf                      elements   max rel err   status\n";
    char buf[128];
    for (const auto& e : report.entries) {
        std::snprintf(buf, sizeof(buf), "%-25s %8ld   %11.3e   %s\n", e.leaf.c_str(), e.checked,
                      e.max_rel_err, e.pass ? "ok" : "FAIL");
        log << buf;
    }
    std::snprintf(buf, sizeof(buf), "max relative error %.3e (tolerance %.1e): %s\n",
                  report.max_rel_err, report.tolerance, report.pass ? "PASS" : "FAIL");
    log << buf;
    return report.pass;
}

}  // namespace himnet
