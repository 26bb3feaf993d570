#include "himnet/embeddings.hpp"

#include <cmath>
#include <string>

#include "himnet/errors.hpp"

namespace himnet {

Tensor init_uniform_param(Shape shape, double bound, Rng& rng) {
    std::vector<double> data(static_cast<size_t>(shape_numel(shape)));
    rng.fill_uniform(data, -bound, bound);
    return Tensor::param(std::move(shape), std::move(data));
}

EmbeddingBank init_bank(long n_nodes, long dim_tod, long dim_dow, long dim_s, long steps_per_day,
                        long days_per_week, Rng& rng) {
    auto positive = [](long v, const char* what) {
        if (v < 1) throw ConfigError(std::string("init_bank: ") + what + " must be positive");
    };
    positive(n_nodes, "n_nodes");
    positive(dim_tod, "dim_tod");
    positive(dim_dow, "dim_dow");
    positive(dim_s, "dim_s");
    positive(steps_per_day, "steps_per_day");
    positive(days_per_week, "days_per_week");

    EmbeddingBank bank;
    bank.n_nodes = n_nodes;
    bank.dim_tod = dim_tod;
    bank.dim_dow = dim_dow;
    bank.dim_s = dim_s;
    bank.steps_per_day = steps_per_day;
    bank.days_per_week = days_per_week;
    bank.d_tod = init_uniform_param({steps_per_day, dim_tod}, 1.0 / std::sqrt(double(dim_tod)), rng);
    bank.d_dow = init_uniform_param({days_per_week, dim_dow}, 1.0 / std::sqrt(double(dim_dow)), rng);
    bank.e_s = init_uniform_param({n_nodes, dim_s}, 1.0 / std::sqrt(double(dim_s)), rng);
    return bank;
}

Tensor lookup_temporal(const EmbeddingBank& bank, const std::vector<long>& tod_idx,
                       const std::vector<long>& dow_idx) {
    if (tod_idx.size() != dow_idx.size())
        throw ShapeError("lookup_temporal: index vectors differ in length");
    // Concatenation order is fixed: time-of-day block first, then day-of-week.
    return concat_last(rows(bank.d_tod, tod_idx), rows(bank.d_dow, dow_idx));
}

Tensor spatial_embedding(const EmbeddingBank& bank) { return bank.e_s; }

}  // namespace himnet
