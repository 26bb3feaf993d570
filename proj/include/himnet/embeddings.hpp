#pragma once

#include <cstdint>
#include <vector>

#include "himnet/tensor.hpp"

namespace himnet {

// Learnable heterogeneity representations: time-of-day / day-of-week tables
// and the per-location spatial embedding matrix.
struct EmbeddingBank {
    Tensor d_tod;  // [steps_per_day x dim_tod]
    Tensor d_dow;  // [7 x dim_dow]
    Tensor e_s;    // [n_nodes x dim_s]

    long steps_per_day = 0;
    long days_per_week = 7;
    long n_nodes = 0;
    long dim_tod = 0;
    long dim_dow = 0;
    long dim_s = 0;

    long dim_t() const { return dim_tod + dim_dow; }
};

// Entries drawn uniformly from [-a, a] with a = 1/sqrt(row width).
EmbeddingBank init_bank(long n_nodes, long dim_tod, long dim_dow, long dim_s, long steps_per_day,
                        long days_per_week, Rng& rng);

// E_t[b] = D_tod[tod[b]] || D_dow[dow[b]]; gradients reach only the selected
// rows.
Tensor lookup_temporal(const EmbeddingBank& bank, const std::vector<long>& tod_idx,
                       const std::vector<long>& dow_idx);

// Trainable view of E_s.
Tensor spatial_embedding(const EmbeddingBank& bank);

// Uniform fan-in initializer shared by the other modules.
Tensor init_uniform_param(Shape shape, double bound, Rng& rng);

}  // namespace himnet
