#include <pybind11/pybind11.h>
#include <pybind11/numpy.h>
#include <pybind11/stl.h>

#include "himnet/data.hpp"
#include "himnet/embeddings.hpp"
#include "himnet/metaparams.hpp"
#include "himnet/model.hpp"
#include "himnet/training.hpp"

namespace py = pybind11;
using namespace himnet;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor tensor_from(const Array& a) {
    Shape shape(a.ndim());
    for (py::ssize_t i = 0; i < a.ndim(); ++i) shape[i] = a.shape(i);
    std::vector<double> data(a.data(), a.data() + a.size());
    return Tensor::from_data(std::move(shape), std::move(data));
}

Array array_from(const Tensor& t) {
    std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
    Array out(shape);
    std::copy(t.data().begin(), t.data().end(), out.mutable_data());
    return out;
}

Array array_from_vec(const std::vector<double>& v, std::vector<py::ssize_t> shape) {
    Array out(shape);
    std::copy(v.begin(), v.end(), out.mutable_data());
    return out;
}

class PyModel {
public:
    PyModel(const py::dict& cfg, std::uint64_t seed) {
        auto get = [&](const char* key, long fallback) {
            return cfg.contains(key) ? cfg[key].cast<long>() : fallback;
        };
        cfg_.n_nodes = get("n_nodes", 0);
        cfg_.t_in = get("t_in", 12);
        cfg_.t_out = get("t_out", 12);
        cfg_.hidden = get("hidden", 64);
        cfg_.order = get("order", 1);
        cfg_.dim_tod = get("dim_tod", 8);
        cfg_.dim_dow = get("dim_dow", 8);
        cfg_.dim_s = get("dim_s", 16);
        cfg_.dim_st = get("dim_st", 16);
        cfg_.steps_per_day = get("steps_per_day", 288);
        if (cfg.contains("meta_bias")) cfg_.meta_bias = cfg["meta_bias"].cast<bool>();
        if (cfg.contains("ablation"))
            cfg_.ablation = AblationFlags::parse(cfg["ablation"].cast<std::string>());
        state_ = ModelState::init(cfg_, seed);
    }

    Array forward(const Array& x, const std::vector<long>& tod, const std::vector<long>& dow,
                  double mean, double std_dev) {
        if (x.ndim() != 3) throw ShapeError("forward: x must be [B x T x N]");
        Batch batch;
        batch.b = x.shape(0);
        batch.t_in = x.shape(1);
        batch.n = x.shape(2);
        batch.t_out = cfg_.t_out;
        batch.x_norm.assign(x.data(), x.data() + x.size());
        batch.y_raw.assign(batch.b * batch.t_out * batch.n, 0.0);
        batch.tod_idx = tod;
        batch.dow_idx = dow;
        Tensor pred = forward_predictions(state_, batch, NormStats{mean, std_dev});
        return array_from(pred);
    }

    long param_count() const { return state_.total_params(); }

    std::map<std::string, long> param_sizes() const {
        std::map<std::string, long> out;
        for (const auto& [name, numel] : state_.param_sizes()) out[name] = numel;
        return out;
    }

private:
    HimNetConfig cfg_;
    ModelState state_;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "HimNet core operations";

    py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<ParseError>(m, "DataParseError", PyExc_ValueError);

    m.def("generate_synthetic",
          [](long n_nodes, long n_days, int n_clusters, int n_regimes, double noise_std,
             std::uint64_t seed) {
              SyntheticSpec spec;
              spec.n_nodes = n_nodes;
              spec.n_days = n_days;
              spec.n_clusters = n_clusters;
              spec.n_regimes = n_regimes;
              spec.noise_std = noise_std;
              spec.seed = seed;
              SyntheticResult res = synthetic_generate(spec);
              long t = res.data.n_steps, n = res.data.n_nodes;
              return py::make_tuple(array_from_vec(res.data.values, {t, n}),
                                    array_from_vec(res.oracle.noiseless(), {t, n}));
          },
          py::arg("n_nodes") = 20, py::arg("n_days") = 14, py::arg("n_clusters") = 2,
          py::arg("n_regimes") = 2, py::arg("noise_std") = 0.1, py::arg("seed") = 42,
          "Planted-heterogeneity dataset; returns (values, noiseless_oracle).");

    m.def("zscore_fit", [](const Array& values) {
        std::vector<double> v(values.data(), values.data() + values.size());
        NormStats s = zscore_fit(v);
        return py::make_tuple(s.mean, s.std_dev);
    });
    m.def("zscore_apply", [](const Array& x, double mean, double std_dev) {
        std::vector<double> v(x.data(), x.data() + x.size());
        zscore_apply(v, NormStats{mean, std_dev});
        std::vector<py::ssize_t> shape(x.shape(), x.shape() + x.ndim());
        return array_from_vec(v, shape);
    });
    m.def("zscore_invert", [](const Array& z, double mean, double std_dev) {
        std::vector<double> v(z.data(), z.data() + z.size());
        zscore_invert(v, NormStats{mean, std_dev});
        std::vector<py::ssize_t> shape(z.shape(), z.shape() + z.ndim());
        return array_from_vec(v, shape);
    });

    m.def("generate", [](const Array& pool, const Array& query) {
        if (pool.ndim() != 2) throw ShapeError("generate: pool must be [k x S]");
        MetaParamPool p{tensor_from(pool), pool.shape(0), pool.shape(1)};
        return array_from(generate(p, tensor_from(query)));
    },
          "Meta-parameter generation: query-weighted combination of pool rows.");

    m.def("encode_st", [](const Array& h, const Array& w, const Array& b) {
        return array_from(encode_st(tensor_from(h), tensor_from(w), tensor_from(b)));
    });

    m.def("adaptive_graph_static",
          [](const Array& e) { return array_from(adaptive_graph_static(tensor_from(e))); });
    m.def("adaptive_graph_dynamic",
          [](const Array& e) { return array_from(adaptive_graph_dynamic(tensor_from(e))); });

    m.def("graph_conv", [](const Array& u, const Array& adj, const Array& kernels,
                           const Array& bias) {
        if (kernels.ndim() != 3) throw ShapeError("graph_conv: kernels must be [taps x C x h]");
        long taps = kernels.shape(0), c = kernels.shape(1), h = kernels.shape(2);
        std::vector<Tensor> ks;
        for (long k = 0; k < taps; ++k) {
            std::vector<double> data(kernels.data() + k * c * h, kernels.data() + (k + 1) * c * h);
            ks.push_back(Tensor::from_data({1, 1, c, h}, std::move(data)));
        }
        std::vector<double> bdata(bias.data(), bias.data() + bias.size());
        long blen = static_cast<long>(bdata.size());
        Tensor b = Tensor::from_data({1, 1, blen}, std::move(bdata));
        return array_from(graph_conv(tensor_from(u), tensor_from(adj), ks, b));
    },
          "Shared-kernel graph convolution over adjacency powers.");

    m.def("gcru_step", [](const Array& x, const Array& h_prev, const Array& params,
                          const Array& adj, long order, long hidden, bool meta_bias) {
        HimNetConfig cfg;
        cfg.n_nodes = x.shape(1);
        cfg.hidden = hidden;
        cfg.order = order;
        cfg.meta_bias = meta_bias;
        Tensor flat = tensor_from(params);
        Tensor bias_leaf;
        const Tensor* bias_ptr = nullptr;
        if (!meta_bias) {
            bias_leaf = Tensor::zeros({3 * hidden});
            bias_ptr = &bias_leaf;
        }
        CellParams cell = split_cell_params(flat, 1, 1, cfg, bias_ptr);
        return array_from(gcru_step(tensor_from(x), tensor_from(h_prev), cell, tensor_from(adj)));
    },
          py::arg("x"), py::arg("h_prev"), py::arg("params"), py::arg("adj"), py::arg("order"),
          py::arg("hidden"), py::arg("meta_bias") = true,
          "One shared-parameter GCRU update from a flat parameter set.");

    m.def("metrics", [](const Array& pred, const Array& target, bool mask_zeros) {
        if (pred.ndim() != 3) throw ShapeError("metrics: arrays must be [B x T x N]");
        std::vector<double> p(pred.data(), pred.data() + pred.size());
        std::vector<double> t(target.data(), target.data() + target.size());
        EvalReport r = metrics(p, t, pred.shape(0), pred.shape(1), pred.shape(2), mask_zeros);
        py::dict out;
        out["mae"] = r.average.mae;
        out["rmse"] = r.average.rmse;
        out["mape"] = r.average.mape;
        py::list rows;
        for (const auto& hm : r.per_horizon) {
            py::dict row;
            row["mae"] = hm.mae;
            row["rmse"] = hm.rmse;
            row["mape"] = hm.mape;
            rows.append(row);
        }
        out["per_horizon"] = rows;
        return out;
    },
          py::arg("pred"), py::arg("target"), py::arg("mask_zeros") = true);

    py::class_<PyModel>(m, "HimNet")
        .def(py::init<const py::dict&, std::uint64_t>(), py::arg("config"), py::arg("seed") = 1)
        .def("forward", &PyModel::forward, py::arg("x"), py::arg("tod"), py::arg("dow"),
             py::arg("mean") = 0.0, py::arg("std") = 1.0,
             "Predictions in original units for a normalized history batch.")
        .def("param_count", &PyModel::param_count)
        .def("param_sizes", &PyModel::param_sizes);
}
