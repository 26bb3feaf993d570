#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "himnet/errors.hpp"

namespace himnet {

// ---------------------------------------------------------------------------
// Calendar arithmetic (minute precision, proleptic Gregorian)
// ---------------------------------------------------------------------------

struct CivilTime {
    int year = 1970;
    int month = 1;
    int day = 1;
    int hour = 0;
    int minute = 0;

    bool operator==(const CivilTime&) const = default;
};

long days_from_civil(int y, int m, int d);
int weekday_mon0(const CivilTime& t);  // Monday = 0 ... Sunday = 6
CivilTime add_minutes(CivilTime t, long minutes);
std::string format_iso(const CivilTime& t);                // YYYY-MM-DDTHH:MM
CivilTime parse_iso(const std::string& s);                 // accepts ' ' or 'T', optional :SS

// ---------------------------------------------------------------------------
// Datasets
// ---------------------------------------------------------------------------

// A [steps x nodes] observation matrix. Missing observations are encoded as
// 0.0 following the benchmark convention; metrics mask them downstream.
struct RawDataset {
    std::vector<double> values;  // row-major [n_steps x n_nodes]
    long n_steps = 0;
    long n_nodes = 0;
    CivilTime start_time;
    int step_minutes = 5;
    std::string name;
    bool synthetic = false;

    double at(long t, long i) const { return values[t * n_nodes + i]; }
};

struct TimeIndices {
    std::vector<int> tod;  // [n_steps], values in [0, steps_per_day)
    std::vector<int> dow;  // [n_steps], Monday = 0
    int steps_per_day = 0;
};

TimeIndices compute_time_indices(const RawDataset& ds);

// ---------------------------------------------------------------------------
// Normalization
// ---------------------------------------------------------------------------

struct NormStats {
    double mean = 0.0;
    double std_dev = 1.0;
};

// Population mean/std over every entry of the training block.
NormStats zscore_fit(const std::vector<double>& train_values);
double zscore_apply(double x, const NormStats& s);
double zscore_invert(double z, const NormStats& s);
void zscore_apply(std::vector<double>& v, const NormStats& s);
void zscore_invert(std::vector<double>& v, const NormStats& s);

// ---------------------------------------------------------------------------
// Windowing and splits
// ---------------------------------------------------------------------------

struct SampleRef {
    long first_row = 0;  // history occupies [first_row, first_row + t_in)
    int tod_idx = 0;     // time index of the last history step
    int dow_idx = 0;
};

// Ordered windows over one dataset; history is served normalized, targets in
// original units. Immutable after construction and safe to read concurrently.
class SampleSet {
public:
    SampleSet() = default;
    SampleSet(std::shared_ptr<const RawDataset> ds, NormStats stats, long t_in, long t_out,
              std::vector<SampleRef> refs)
        : ds_(std::move(ds)), stats_(stats), t_in_(t_in), t_out_(t_out), refs_(std::move(refs)) {}

    long size() const { return static_cast<long>(refs_.size()); }
    bool empty() const { return refs_.empty(); }
    long t_in() const { return t_in_; }
    long t_out() const { return t_out_; }
    long n_nodes() const { return ds_->n_nodes; }
    const SampleRef& ref(long i) const { return refs_[i]; }
    const NormStats& stats() const { return stats_; }
    const RawDataset& dataset() const { return *ds_; }
    std::shared_ptr<const RawDataset> dataset_ptr() const { return ds_; }

    void fill_x_norm(long i, double* out) const;  // [t_in x n_nodes]
    void fill_y_raw(long i, double* out) const;   // [t_out x n_nodes]

    SampleSet slice(long lo, long hi) const;

private:
    std::shared_ptr<const RawDataset> ds_;
    NormStats stats_{};
    long t_in_ = 0, t_out_ = 0;
    std::vector<SampleRef> refs_;
};

struct DataSplit {
    SampleSet train, val, test;
};

SampleSet make_windows(std::shared_ptr<const RawDataset> ds, const TimeIndices& idx,
                       const NormStats& stats, long t_in, long t_out);

// Chronological partition by sample index: floor-rounded train/val, remainder
// to test. Every partition must end up non-empty.
DataSplit split_dataset(const SampleSet& samples, const std::array<double, 3>& ratios);

// Full pipeline: indices, stats fit on the rows covered by training-sample
// histories, windows, split.
DataSplit prepare_split(std::shared_ptr<const RawDataset> ds, long t_in, long t_out,
                        const std::array<double, 3>& ratios);

// ---------------------------------------------------------------------------
// File formats
// ---------------------------------------------------------------------------

// matrix-binary: 16-byte header (magic "STDS", u32 rows, u32 cols,
// u32 dtype 0=f32 / 1=f64) followed by row-major values.
void write_matrix_binary(const std::string& path, const std::vector<double>& values, long rows,
                         long cols, int dtype_code = 0);
std::vector<double> read_matrix_binary(const std::string& path, long& rows, long& cols);

enum class DatasetFormat { Auto, MatrixBinary, Csv };

RawDataset load_dataset(const std::string& path, DatasetFormat format = DatasetFormat::Auto);
// Writes <path> plus the <path>.meta sidecar.
void save_dataset(const std::string& path, const RawDataset& ds);

// ---------------------------------------------------------------------------
// Planted-heterogeneity synthetic data
// ---------------------------------------------------------------------------

struct SyntheticSpec {
    long n_nodes = 20;
    long n_days = 14;
    int n_clusters = 2;
    int n_regimes = 2;
    double noise_std = 0.1;
    std::uint64_t seed = 42;
    int step_minutes = 5;
    CivilTime start_time{2024, 1, 1, 0, 0};  // a Monday
    std::string name = "synthetic";
};

struct SyntheticTriple {
    double amp = 0.0;
    double phase = 0.0;
    double offset = 0.0;
};

// Everything needed to regenerate the noiseless signal.
struct SyntheticOracle {
    SyntheticSpec spec;
    std::vector<SyntheticTriple> triples;  // [cluster][regime][daytype]

    const SyntheticTriple& triple(int cluster, int regime, int daytype) const;
    double signal(long step, long node) const;
    std::vector<double> noiseless() const;  // [n_steps x n_nodes]
    long n_steps() const;
};

struct SyntheticResult {
    RawDataset data;
    SyntheticOracle oracle;
};

// Node i belongs to cluster i mod n_clusters; each day splits into n_regimes
// equal regimes; every (cluster, regime, weekday-vs-weekend) context gets a
// distinct sinusoid (amplitude, phase, offset) drawn from the seed.
SyntheticResult synthetic_generate(const SyntheticSpec& spec);

void save_oracle(const std::string& path, const SyntheticOracle& oracle);
SyntheticOracle load_oracle(const std::string& path);

}  // namespace himnet
