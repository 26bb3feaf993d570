#include "himnet/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "himnet/tensor.hpp"

namespace himnet {

// ---------------------------------------------------------------------------
// Calendar
// ---------------------------------------------------------------------------

// Howard Hinnant's days-from-civil; day 0 is 1970-01-01 (a Thursday).
long days_from_civil(int y, int m, int d) {
    y -= m <= 2;
    const long era = (y >= 0 ? y : y - 399) / 400;
    const unsigned yoe = static_cast<unsigned>(y - era * 400);
    const unsigned doy = (153u * static_cast<unsigned>(m + (m > 2 ? -3 : 9)) + 2) / 5 +
                         static_cast<unsigned>(d) - 1;
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return era * 146097 + static_cast<long>(doe) - 719468;
}

static void civil_from_days(long z, int& y, int& m, int& d) {
    z += 719468;
    const long era = (z >= 0 ? z : z - 146096) / 146097;
    const unsigned doe = static_cast<unsigned>(z - era * 146097);
    const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    const long yy = static_cast<long>(yoe) + era * 400;
    const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    const unsigned mp = (5 * doy + 2) / 153;
    d = static_cast<int>(doy - (153 * mp + 2) / 5 + 1);
    m = static_cast<int>(mp + (mp < 10 ? 3 : -9));
    y = static_cast<int>(yy + (m <= 2));
}

int weekday_mon0(const CivilTime& t) {
    long days = days_from_civil(t.year, t.month, t.day);
    long w = (days + 3) % 7;  // day 0 is Thursday; Thursday = 3 with Monday = 0
    return static_cast<int>(w < 0 ? w + 7 : w);
}

CivilTime add_minutes(CivilTime t, long minutes) {
    long total = days_from_civil(t.year, t.month, t.day) * 1440L + t.hour * 60L + t.minute +
                 minutes;
    long days = total >= 0 ? total / 1440 : (total - 1439) / 1440;
    long rem = total - days * 1440;
    civil_from_days(days, t.year, t.month, t.day);
    t.hour = static_cast<int>(rem / 60);
    t.minute = static_cast<int>(rem % 60);
    return t;
}

std::string format_iso(const CivilTime& t) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%04d-%02d-%02dT%02d:%02d", t.year, t.month, t.day, t.hour,
                  t.minute);
    return buf;
}

CivilTime parse_iso(const std::string& s) {
    CivilTime t;
    int sec = 0;
    char sep = 0;
    int got = std::sscanf(s.c_str(), "%d-%d-%d%c%d:%d:%d", &t.year, &t.month, &t.day, &sep,
                          &t.hour, &t.minute, &sec);
    if (got < 6 || (sep != 'T' && sep != ' '))
        throw ParseError("timestamp '" + s + "' is not ISO-8601 (expected YYYY-MM-DDTHH:MM)");
    if (t.month < 1 || t.month > 12 || t.day < 1 || t.day > 31 || t.hour < 0 || t.hour > 23 ||
        t.minute < 0 || t.minute > 59)
        throw ParseError("timestamp '" + s + "' has out-of-range fields");
    if (sec != 0)
        throw ParseError("timestamp '" + s + "' has sub-minute precision, which is unsupported");
    return t;
}

// ---------------------------------------------------------------------------
// Time indices
// ---------------------------------------------------------------------------

TimeIndices compute_time_indices(const RawDataset& ds) {
    if (ds.step_minutes <= 0 || 1440 % ds.step_minutes != 0)
        throw ConfigError("step_minutes=" + std::to_string(ds.step_minutes) +
                          " must evenly divide 1440");
    int n_d = 1440 / ds.step_minutes;
    int start_min = ds.start_time.hour * 60 + ds.start_time.minute;
    if (start_min % ds.step_minutes != 0)
        throw ConfigError("start_time " + format_iso(ds.start_time) +
                          " is not aligned to the " + std::to_string(ds.step_minutes) +
                          "-minute step grid");
    TimeIndices idx;
    idx.steps_per_day = n_d;
    idx.tod.resize(ds.n_steps);
    idx.dow.resize(ds.n_steps);
    int tod = start_min / ds.step_minutes;
    int dow = weekday_mon0(ds.start_time);
    for (long i = 0; i < ds.n_steps; ++i) {
        idx.tod[i] = tod;
        idx.dow[i] = dow;
        tod = (tod + 1) % n_d;
        if (tod == 0) dow = (dow + 1) % 7;
    }
    return idx;
}

// ---------------------------------------------------------------------------
// Normalization
// ---------------------------------------------------------------------------

NormStats zscore_fit(const std::vector<double>& train_values) {
    if (train_values.size() < 2)
        throw ConfigError("zscore_fit: need at least 2 values, got " +
                          std::to_string(train_values.size()));
    double mean = 0.0;
    for (double v : train_values) mean += v;
    mean /= static_cast<double>(train_values.size());
    double var = 0.0;
    for (double v : train_values) var += (v - mean) * (v - mean);
    var /= static_cast<double>(train_values.size());
    double sd = std::sqrt(var);
    if (!(sd > 0.0))
        throw ConfigError("zscore_fit: training data is constant (std = 0); cannot normalize");
    return NormStats{mean, sd};
}

double zscore_apply(double x, const NormStats& s) { return (x - s.mean) / s.std_dev; }
double zscore_invert(double z, const NormStats& s) { return z * s.std_dev + s.mean; }

void zscore_apply(std::vector<double>& v, const NormStats& s) {
    for (auto& x : v) x = zscore_apply(x, s);
}
void zscore_invert(std::vector<double>& v, const NormStats& s) {
    for (auto& x : v) x = zscore_invert(x, s);
}

// ---------------------------------------------------------------------------
// Windows and splits
// ---------------------------------------------------------------------------

void SampleSet::fill_x_norm(long i, double* out) const {
    const SampleRef& r = refs_[i];
    const double* src = &ds_->values[r.first_row * ds_->n_nodes];
    long n = t_in_ * ds_->n_nodes;
    for (long j = 0; j < n; ++j) out[j] = (src[j] - stats_.mean) / stats_.std_dev;
}

void SampleSet::fill_y_raw(long i, double* out) const {
    const SampleRef& r = refs_[i];
    const double* src = &ds_->values[(r.first_row + t_in_) * ds_->n_nodes];
    std::memcpy(out, src, sizeof(double) * t_out_ * ds_->n_nodes);
}

SampleSet SampleSet::slice(long lo, long hi) const {
    return SampleSet(ds_, stats_, t_in_, t_out_,
                     std::vector<SampleRef>(refs_.begin() + lo, refs_.begin() + hi));
}

SampleSet make_windows(std::shared_ptr<const RawDataset> ds, const TimeIndices& idx,
                       const NormStats& stats, long t_in, long t_out) {
    if (t_in < 1 || t_out < 1) throw ConfigError("make_windows: horizons must be positive");
    long n = ds->n_steps - t_in - t_out + 1;
    if (n < 1)
        throw ConfigError("make_windows: dataset has " + std::to_string(ds->n_steps) +
                          " steps, needs at least " + std::to_string(t_in + t_out));
    std::vector<SampleRef> refs(n);
    for (long i = 0; i < n; ++i) {
        long last = i + t_in - 1;
        refs[i] = SampleRef{i, idx.tod[last], idx.dow[last]};
    }
    return SampleSet(std::move(ds), stats, t_in, t_out, std::move(refs));
}

DataSplit split_dataset(const SampleSet& samples, const std::array<double, 3>& ratios) {
    double sum = ratios[0] + ratios[1] + ratios[2];
    if (std::abs(sum - 1.0) > 1e-9)
        throw ConfigError("split_dataset: ratios must sum to 1, got " + std::to_string(sum));
    long n = samples.size();
    long n_train = static_cast<long>(std::floor(ratios[0] * n));
    long n_val = static_cast<long>(std::floor(ratios[1] * n));
    long n_test = n - n_train - n_val;
    if (n_train < 1 || n_val < 1 || n_test < 1)
        throw ConfigError("split_dataset: partition would be empty (train=" +
                          std::to_string(n_train) + ", val=" + std::to_string(n_val) +
                          ", test=" + std::to_string(n_test) + ")");
    DataSplit split;
    split.train = samples.slice(0, n_train);
    split.val = samples.slice(n_train, n_train + n_val);
    split.test = samples.slice(n_train + n_val, n);
    return split;
}

DataSplit prepare_split(std::shared_ptr<const RawDataset> ds, long t_in, long t_out,
                        const std::array<double, 3>& ratios) {
    TimeIndices idx = compute_time_indices(*ds);
    long n = ds->n_steps - t_in - t_out + 1;
    if (n < 1)
        throw ConfigError("prepare_split: dataset too short for T=" + std::to_string(t_in) +
                          ", T'=" + std::to_string(t_out));
    long n_train = static_cast<long>(std::floor(ratios[0] * n));
    // Stats come from the rows covered by training-sample histories only.
    long fit_rows = std::min(ds->n_steps, n_train - 1 + t_in);
    if (fit_rows < 1) throw ConfigError("prepare_split: empty training partition");
    std::vector<double> train_block(ds->values.begin(),
                                    ds->values.begin() + fit_rows * ds->n_nodes);
    NormStats stats = zscore_fit(train_block);
    SampleSet samples = make_windows(std::move(ds), idx, stats, t_in, t_out);
    return split_dataset(samples, ratios);
}

// ---------------------------------------------------------------------------
// matrix-binary IO
// ---------------------------------------------------------------------------

namespace {

constexpr char kMagic[4] = {'S', 'T', 'D', 'S'};

void write_u32(std::ostream& os, std::uint32_t v) {
    os.write(reinterpret_cast<const char*>(&v), 4);
}

std::uint32_t read_u32(std::istream& is, const std::string& what) {
    std::uint32_t v = 0;
    is.read(reinterpret_cast<char*>(&v), 4);
    if (!is) throw ParseError("matrix-binary: truncated header while reading " + what);
    return v;
}

std::string sidecar_path(const std::string& path) { return path + ".meta"; }

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

}  // namespace

void write_matrix_binary(const std::string& path, const std::vector<double>& values, long rows,
                         long cols, int dtype_code) {
    if (rows * cols != static_cast<long>(values.size()))
        throw ConfigError("write_matrix_binary: shape does not match value count");
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open '" + path + "' for writing");
    os.write(kMagic, 4);
    write_u32(os, static_cast<std::uint32_t>(rows));
    write_u32(os, static_cast<std::uint32_t>(cols));
    write_u32(os, static_cast<std::uint32_t>(dtype_code));
    if (dtype_code == 0) {
        std::vector<float> buf(values.size());
        for (size_t i = 0; i < values.size(); ++i) buf[i] = static_cast<float>(values[i]);
        os.write(reinterpret_cast<const char*>(buf.data()), buf.size() * sizeof(float));
    } else if (dtype_code == 1) {
        os.write(reinterpret_cast<const char*>(values.data()), values.size() * sizeof(double));
    } else {
        throw ConfigError("write_matrix_binary: unknown dtype code " + std::to_string(dtype_code));
    }
    if (!os) throw IoError("short write to '" + path + "'");
}

std::vector<double> read_matrix_binary(const std::string& path, long& rows, long& cols) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open '" + path + "'");
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kMagic, 4) != 0)
        throw ParseError("'" + path + "' is not a matrix-binary file (bad magic)");
    rows = read_u32(is, "row count");
    cols = read_u32(is, "column count");
    std::uint32_t dtype = read_u32(is, "dtype code");
    if (rows < 1 || cols < 1)
        throw ParseError("'" + path + "' has degenerate shape " + std::to_string(rows) + " x " +
                         std::to_string(cols));
    std::vector<double> values(static_cast<size_t>(rows) * cols);
    if (dtype == 0) {
        std::vector<float> buf(values.size());
        is.read(reinterpret_cast<char*>(buf.data()), buf.size() * sizeof(float));
        if (!is) throw ParseError("'" + path + "' is truncated (expected " +
                                  std::to_string(buf.size()) + " f32 values)");
        for (size_t i = 0; i < buf.size(); ++i) values[i] = buf[i];
    } else if (dtype == 1) {
        is.read(reinterpret_cast<char*>(values.data()), values.size() * sizeof(double));
        if (!is) throw ParseError("'" + path + "' is truncated (expected " +
                                  std::to_string(values.size()) + " f64 values)");
    } else {
        throw ParseError("'" + path + "' has unknown dtype code " + std::to_string(dtype));
    }
    return values;
}

// ---------------------------------------------------------------------------
// Dataset load/save
// ---------------------------------------------------------------------------

namespace {

void check_finite(const std::vector<double>& values, const std::string& path) {
    for (size_t i = 0; i < values.size(); ++i)
        if (!std::isfinite(values[i]))
            throw ParseError("'" + path + "' contains a non-finite value at flat index " +
                             std::to_string(i) + " (missing data must be encoded as 0.0)");
}

RawDataset load_binary_dataset(const std::string& path) {
    RawDataset ds;
    ds.values = read_matrix_binary(path, ds.n_steps, ds.n_nodes);
    check_finite(ds.values, path);

    std::ifstream meta(sidecar_path(path));
    if (!meta)
        throw IoError("missing sidecar '" + sidecar_path(path) +
                      "' (expected start_time, step_minutes, name)");
    bool have_start = false;
    std::string line;
    long lineno = 0;
    while (std::getline(meta, line)) {
        ++lineno;
        std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        size_t eq = t.find('=');
        if (eq == std::string::npos)
            throw ParseError(sidecar_path(path) + ":" + std::to_string(lineno) +
                             ": expected 'key = value'");
        std::string key = trim(t.substr(0, eq)), val = trim(t.substr(eq + 1));
        if (key == "start_time") {
            ds.start_time = parse_iso(val);
            have_start = true;
        } else if (key == "step_minutes") {
            ds.step_minutes = std::stoi(val);
        } else if (key == "name") {
            ds.name = val;
        } else if (key == "kind") {
            ds.synthetic = (val == "synthetic");
        } else {
            throw ParseError(sidecar_path(path) + ":" + std::to_string(lineno) +
                             ": unknown key '" + key + "'");
        }
    }
    if (!have_start) throw ParseError(sidecar_path(path) + ": missing start_time");
    if (ds.name.empty()) ds.name = path;
    return ds;
}

RawDataset load_csv_dataset(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open '" + path + "'");
    RawDataset ds;
    std::string line;
    long row = 0;
    CivilTime prev_ts;
    while (std::getline(is, line)) {
        ++row;
        if (trim(line).empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        long col = 0;
        std::vector<double> vals;
        CivilTime ts;
        while (std::getline(ss, cell, ',')) {
            ++col;
            std::string c = trim(cell);
            if (col == 1) {
                try {
                    ts = parse_iso(c);
                } catch (const ParseError& e) {
                    throw ParseError(path + ": row " + std::to_string(row) + ", column 1: " +
                                     e.what());
                }
                continue;
            }
            try {
                size_t pos = 0;
                double v = std::stod(c, &pos);
                if (pos != c.size()) throw std::invalid_argument("trailing garbage");
                if (!std::isfinite(v)) throw std::invalid_argument("non-finite");
                vals.push_back(v);
            } catch (const std::exception&) {
                throw ParseError(path + ": row " + std::to_string(row) + ", column " +
                                 std::to_string(col) + ": '" + c + "' is not a finite number");
            }
        }
        if (vals.empty())
            throw ParseError(path + ": row " + std::to_string(row) + " has no readings");
        if (ds.n_steps == 0) {
            ds.n_nodes = static_cast<long>(vals.size());
            ds.start_time = ts;
        } else {
            if (static_cast<long>(vals.size()) != ds.n_nodes)
                throw ParseError(path + ": row " + std::to_string(row) + " has " +
                                 std::to_string(vals.size()) + " readings, expected " +
                                 std::to_string(ds.n_nodes));
            if (ds.n_steps == 1) {
                long dm = (days_from_civil(ts.year, ts.month, ts.day) -
                           days_from_civil(prev_ts.year, prev_ts.month, prev_ts.day)) *
                              1440L +
                          (ts.hour * 60 + ts.minute) - (prev_ts.hour * 60 + prev_ts.minute);
                if (dm <= 0)
                    throw ParseError(path + ": row " + std::to_string(row) +
                                     ": timestamps are not increasing");
                ds.step_minutes = static_cast<int>(dm);
            } else if (!(add_minutes(prev_ts, ds.step_minutes) == ts)) {
                throw ParseError(path + ": row " + std::to_string(row) + ": timestamp " +
                                 format_iso(ts) + " breaks the " +
                                 std::to_string(ds.step_minutes) + "-minute cadence");
            }
        }
        ds.values.insert(ds.values.end(), vals.begin(), vals.end());
        ds.n_steps++;
        prev_ts = ts;
    }
    if (ds.n_steps == 0) throw ParseError(path + ": no data rows");
    size_t slash = path.find_last_of('/');
    ds.name = slash == std::string::npos ? path : path.substr(slash + 1);
    return ds;
}

}  // namespace

RawDataset load_dataset(const std::string& path, DatasetFormat format) {
    if (format == DatasetFormat::Auto) {
        format = path.size() >= 4 && path.substr(path.size() - 4) == ".csv"
                     ? DatasetFormat::Csv
                     : DatasetFormat::MatrixBinary;
    }
    return format == DatasetFormat::Csv ? load_csv_dataset(path) : load_binary_dataset(path);
}

void save_dataset(const std::string& path, const RawDataset& ds) {
    write_matrix_binary(path, ds.values, ds.n_steps, ds.n_nodes, 0);
    std::ofstream meta(sidecar_path(path), std::ios::trunc);
    if (!meta) throw IoError("cannot open '" + sidecar_path(path) + "' for writing");
    meta << "start_time = " << format_iso(ds.start_time) << "\n";
    meta << "step_minutes = " << ds.step_minutes << "\n";
    meta << "name = " << ds.name << "\n";
    meta << "kind = " << (ds.synthetic ? "synthetic" : "recorded") << "\n";
    if (!meta) throw IoError("short write to '" + sidecar_path(path) + "'");
}

// ---------------------------------------------------------------------------
// Synthetic generation
// ---------------------------------------------------------------------------

const SyntheticTriple& SyntheticOracle::triple(int cluster, int regime, int daytype) const {
    return triples[(cluster * spec.n_regimes + regime) * 2 + daytype];
}

long SyntheticOracle::n_steps() const {
    return spec.n_days * (1440L / spec.step_minutes);
}

double SyntheticOracle::signal(long step, long node) const {
    int n_d = 1440 / spec.step_minutes;
    int start_min = spec.start_time.hour * 60 + spec.start_time.minute;
    long abs_slot = start_min / spec.step_minutes + step;
    int tod = static_cast<int>(abs_slot % n_d);
    long day = days_from_civil(spec.start_time.year, spec.start_time.month,
                               spec.start_time.day) +
               abs_slot / n_d;
    int dow = static_cast<int>(((day + 3) % 7 + 7) % 7);
    int daytype = dow >= 5 ? 1 : 0;
    int regime = tod / (n_d / spec.n_regimes);
    int cluster = static_cast<int>(node % spec.n_clusters);
    const SyntheticTriple& tr = triple(cluster, regime, daytype);
    return tr.offset + tr.amp * std::sin(2.0 * M_PI * tod / n_d + tr.phase);
}

std::vector<double> SyntheticOracle::noiseless() const {
    long T = n_steps(), N = spec.n_nodes;
    std::vector<double> out(static_cast<size_t>(T) * N);
    for (long t = 0; t < T; ++t)
        for (long i = 0; i < N; ++i) out[t * N + i] = signal(t, i);
    return out;
}

SyntheticResult synthetic_generate(const SyntheticSpec& spec) {
    if (spec.n_clusters < 2 || spec.n_nodes < spec.n_clusters)
        throw ConfigError("synthetic_generate: need n_nodes >= n_clusters >= 2");
    if (spec.n_regimes < 2 || spec.n_regimes > 4)
        throw ConfigError("synthetic_generate: n_regimes must be in {2, 3, 4}");
    if (spec.n_days < 1) throw ConfigError("synthetic_generate: n_days must be positive");
    if (spec.noise_std < 0) throw ConfigError("synthetic_generate: noise_std must be >= 0");
    if (1440 % spec.step_minutes != 0)
        throw ConfigError("synthetic_generate: step_minutes must divide 1440");
    int n_d = 1440 / spec.step_minutes;
    if (n_d % spec.n_regimes != 0)
        throw ConfigError("synthetic_generate: steps per day (" + std::to_string(n_d) +
                          ") must be divisible by n_regimes");

    SyntheticOracle oracle;
    oracle.spec = spec;
    Rng rng(spec.seed);
    // Fixed draw order (cluster, regime, daytype) keeps the table stable.
    for (int c = 0; c < spec.n_clusters; ++c)
        for (int r = 0; r < spec.n_regimes; ++r)
            for (int w = 0; w < 2; ++w) {
                SyntheticTriple tr;
                tr.amp = rng.uniform_in(5.0, 15.0);
                tr.phase = rng.uniform_in(0.0, 2.0 * M_PI);
                tr.offset = rng.uniform_in(40.0, 70.0);
                oracle.triples.push_back(tr);
            }

    RawDataset ds;
    ds.n_steps = oracle.n_steps();
    ds.n_nodes = spec.n_nodes;
    ds.start_time = spec.start_time;
    ds.step_minutes = spec.step_minutes;
    ds.name = spec.name;
    ds.synthetic = true;
    ds.values = oracle.noiseless();
    if (spec.noise_std > 0.0)
        for (auto& v : ds.values) v += spec.noise_std * rng.normal();
    return SyntheticResult{std::move(ds), std::move(oracle)};
}

void save_oracle(const std::string& path, const SyntheticOracle& oracle) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw IoError("cannot open '" + path + "' for writing");
    const SyntheticSpec& s = oracle.spec;
    char buf[160];
    os << "seed = " << s.seed << "\n";
    os << "n_nodes = " << s.n_nodes << "\n";
    os << "n_days = " << s.n_days << "\n";
    os << "n_clusters = " << s.n_clusters << "\n";
    os << "n_regimes = " << s.n_regimes << "\n";
    std::snprintf(buf, sizeof(buf), "noise_std = %.17g\n", s.noise_std);
    os << buf;
    os << "step_minutes = " << s.step_minutes << "\n";
    os << "start_time = " << format_iso(s.start_time) << "\n";
    os << "name = " << s.name << "\n";
    for (int c = 0; c < s.n_clusters; ++c)
        for (int r = 0; r < s.n_regimes; ++r)
            for (int w = 0; w < 2; ++w) {
                const SyntheticTriple& tr = oracle.triple(c, r, w);
                std::snprintf(buf, sizeof(buf), "triple = %d %d %d %.17g %.17g %.17g\n", c, r, w,
                              tr.amp, tr.phase, tr.offset);
                os << buf;
            }
    if (!os) throw IoError("short write to '" + path + "'");
}

SyntheticOracle load_oracle(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open '" + path + "'");
    SyntheticOracle oracle;
    std::vector<SyntheticTriple> triples;
    std::vector<std::array<int, 3>> keys;
    std::string line;
    long lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        size_t eq = t.find('=');
        if (eq == std::string::npos)
            throw ParseError(path + ":" + std::to_string(lineno) + ": expected 'key = value'");
        std::string key = trim(t.substr(0, eq)), val = trim(t.substr(eq + 1));
        if (key == "seed")
            oracle.spec.seed = std::stoull(val);
        else if (key == "n_nodes")
            oracle.spec.n_nodes = std::stol(val);
        else if (key == "n_days")
            oracle.spec.n_days = std::stol(val);
        else if (key == "n_clusters")
            oracle.spec.n_clusters = std::stoi(val);
        else if (key == "n_regimes")
            oracle.spec.n_regimes = std::stoi(val);
        else if (key == "noise_std")
            oracle.spec.noise_std = std::stod(val);
        else if (key == "step_minutes")
            oracle.spec.step_minutes = std::stoi(val);
        else if (key == "start_time")
            oracle.spec.start_time = parse_iso(val);
        else if (key == "name")
            oracle.spec.name = val;
        else if (key == "triple") {
            std::istringstream ts(val);
            int c, r, w;
            SyntheticTriple tr;
            if (!(ts >> c >> r >> w >> tr.amp >> tr.phase >> tr.offset))
                throw ParseError(path + ":" + std::to_string(lineno) + ": malformed triple");
            keys.push_back({c, r, w});
            triples.push_back(tr);
        } else {
            throw ParseError(path + ":" + std::to_string(lineno) + ": unknown key '" + key + "'");
        }
    }
    long expected = static_cast<long>(oracle.spec.n_clusters) * oracle.spec.n_regimes * 2;
    if (static_cast<long>(triples.size()) != expected)
        throw ParseError(path + ": expected " + std::to_string(expected) + " triples, got " +
                         std::to_string(triples.size()));
    oracle.triples.assign(triples.size(), SyntheticTriple{});
    for (size_t i = 0; i < triples.size(); ++i) {
        auto [c, r, w] = keys[i];
        oracle.triples[(c * oracle.spec.n_regimes + r) * 2 + w] = triples[i];
    }
    return oracle;
}

}  // namespace himnet
